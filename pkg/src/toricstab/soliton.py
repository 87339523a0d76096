"""Soliton weight vectors: Newton on a strictly convex log-partition function.

The weight vector xi of a Kaehler-Ricci soliton on a toric Fano is the unique
zero of the weighted barycenter, i.e. the minimizer of

    quantized:   F(xi) = log sum_{u in mP cap M} e^{<xi, u/m>}
    continuous:  F(xi) = log int_P e^{<xi, u>} du,

whose gradient is the weighted barycenter and whose Hessian is the weight
covariance (positive definite whenever the points/polytope affinely span).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.special import logsumexp

from .quadrature import gauss_legendre
from .thresholds import WeightFunction, weighted_delta
from .toric import (
    Fan,
    MomentPolytope,
    Polarization,
    lattice_points,
    polytope,
    triangulate,
)


class SolitonError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolitonSolution:
    xi: tuple[float, ...]
    residual: float
    iterations: int
    mode: str  # "quantized" or "continuous"
    m: int | None


def _simplex_nodes(simplex, order: int = 12, refine: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights on a simplex via the Duffy map.

    One refinement level subdivides every edge at its midpoint (2^n children),
    which keeps the rule accurate when the exponent is near-constant.
    """
    verts = np.array([[float(c) for c in v] for v in simplex])
    n = verts.shape[0] - 1
    if refine > 0:
        nodes, weights = [], []
        for child in _split_simplex(verts):
            x, w = _simplex_nodes(child, order=order, refine=refine - 1)
            nodes.append(x)
            weights.append(w)
        return np.concatenate(nodes), np.concatenate(weights)
    gx, gw = gauss_legendre(order)
    t = 0.5 * (gx + 1.0)
    wt = 0.5 * gw
    grids = np.meshgrid(*([t] * n), indexing="ij")
    wgrids = np.meshgrid(*([wt] * n), indexing="ij")
    # Duffy map b_k = t_k prod_{j<k}(1 - t_j); volume element prod_k (1-t_k)^{n-1-k}
    bary = []
    remaining = np.ones_like(grids[0])
    for k in range(n):
        bary.append(remaining * grids[k])
        remaining = remaining * (1.0 - grids[k])
    jac = np.ones_like(grids[0])
    wtotal = np.ones_like(grids[0])
    for k in range(n):
        jac = jac * (1.0 - grids[k]) ** (n - 1 - k)
        wtotal = wtotal * wgrids[k]
    base = verts[0]
    edges = verts[1:] - base
    vol_factor = abs(np.linalg.det(edges)) if n > 0 else 1.0
    coords = np.stack([b.ravel() for b in bary], axis=1)
    x = base[None, :] + coords @ edges
    w = (wtotal * jac).ravel() * vol_factor
    return x, w


def _split_simplex(verts: np.ndarray) -> list[np.ndarray]:
    """Midpoint subdivision: 2 segments, 4 triangles, or 8 tetrahedra."""
    n = verts.shape[0] - 1
    if n == 1:
        m = 0.5 * (verts[0] + verts[1])
        return [np.array([verts[0], m]), np.array([m, verts[1]])]
    if n == 2:
        a, b, c = verts
        ab, bc, ca = 0.5 * (a + b), 0.5 * (b + c), 0.5 * (c + a)
        return [
            np.array([a, ab, ca]),
            np.array([ab, b, bc]),
            np.array([ca, bc, c]),
            np.array([ab, bc, ca]),
        ]
    if n == 3:
        a, b, c, d = verts
        ab, ac, ad = 0.5 * (a + b), 0.5 * (a + c), 0.5 * (a + d)
        bc, bd, cd = 0.5 * (b + c), 0.5 * (b + d), 0.5 * (c + d)
        return [
            np.array([a, ab, ac, ad]),
            np.array([ab, b, bc, bd]),
            np.array([ac, bc, c, cd]),
            np.array([ad, bd, cd, d]),
            np.array([ab, ac, ad, bd]),
            np.array([ab, ac, bc, bd]),
            np.array([ac, ad, bd, cd]),
            np.array([ac, bc, bd, cd]),
        ]
    raise SolitonError(f"simplex subdivision implemented for n <= 3, got {n}")


@dataclass
class LogPartition:
    """Value/gradient/Hessian of the log-partition objective."""

    nodes: np.ndarray  # (N, n) sample points in P-coordinates
    log_w: np.ndarray  # (N,) log weights (0 for the quantized point mass)

    def __call__(self, xi: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
        a = self.nodes @ xi + self.log_w
        value = float(logsumexp(a))
        w = np.exp(a - value)
        grad = self.nodes.T @ w
        centered = self.nodes - grad[None, :]
        hess = (centered * w[:, None]).T @ centered
        return value, grad, hess


def quantized_objective(fan: Fan, pol: Polarization, m: int) -> LogPartition:
    pts = lattice_points(polytope(fan, pol), m)
    nodes = np.array(pts, dtype=float) / m
    if np.linalg.matrix_rank(nodes - nodes[0]) < fan.dim:
        raise SolitonError("lattice points do not affinely span")
    return LogPartition(nodes=nodes, log_w=np.zeros(len(pts)))


def continuous_objective(poly: MomentPolytope, order: int = 12, refine: int = 1) -> LogPartition:
    nodes, weights = [], []
    for simplex in triangulate(poly):
        x, w = _simplex_nodes(simplex, order=order, refine=refine)
        nodes.append(x)
        weights.append(w)
    x = np.concatenate(nodes)
    w = np.concatenate(weights)
    if np.any(w <= 0):
        raise SolitonError("degenerate simplex in the triangulation")
    return LogPartition(nodes=x, log_w=np.log(w))


def log_partition(
    fan: Fan, pol: Polarization, xi, mode: str = "quantized", m: int = 1
) -> tuple[float, np.ndarray, np.ndarray]:
    """Objective (value, gradient, hessian); gradient is the weighted barycenter."""
    xi = np.asarray(xi, dtype=float)
    if mode == "quantized":
        obj = quantized_objective(fan, pol, m)
    elif mode == "continuous":
        obj = continuous_objective(polytope(fan, pol))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return obj(xi)


def solve_soliton(
    fan: Fan,
    pol: Polarization | None = None,
    mode: str = "continuous",
    m: int = 1,
    tol: float = 1e-12,
    max_iter: int = 200,
) -> SolitonSolution:
    """Damped Newton for the vanishing weighted barycenter, started at 0.

    Requires 0 in the interior of P (true for anticanonical polytopes); the
    Hessian is checked positive definite at every iterate.
    """
    pol = Polarization.anticanonical(fan) if pol is None else pol
    poly = polytope(fan, pol)
    if any(a <= 0 for _, a in poly.inequalities):
        raise SolitonError("origin is not interior to the moment polytope")
    if mode == "quantized":
        obj = quantized_objective(fan, pol, m)
    else:
        obj = continuous_objective(poly)
    xi = np.zeros(fan.dim)
    for it in range(max_iter):
        value, grad, hess = obj(xi)
        res = float(np.max(np.abs(grad)))
        if res < tol:
            return SolitonSolution(
                xi=tuple(xi.tolist()),
                residual=res,
                iterations=it,
                mode=mode,
                m=m if mode == "quantized" else None,
            )
        try:
            np.linalg.cholesky(hess)
        except np.linalg.LinAlgError as exc:
            raise SolitonError("objective Hessian is not positive definite") from exc
        step = np.linalg.solve(hess, -grad)
        alpha = 1.0
        for _ in range(60):
            cand = xi + alpha * step
            cand_value = obj(cand)[0]
            if cand_value <= value + 1e-4 * alpha * float(grad @ step):
                break
            alpha *= 0.5
        else:
            raise SolitonError("line search stalled")
        xi = xi + alpha * step
    raise SolitonError(f"Newton did not reach {tol} in {max_iter} iterations")


def soliton_weighted_delta(fan: Fan, m: int, tol: float = 1e-12, prec_bits: int = 128):
    """Weighted threshold at the quantized soliton weight; equals 1 up to ~10 tol.

    The solve kills the weighted barycenter, so every anticanonical ray
    contributes 1/(0 + 1).
    """
    sol = solve_soliton(fan, mode="quantized", m=m, tol=tol)
    pol = Polarization.anticanonical(fan)
    weight = WeightFunction.exponential(sol.xi)
    return weighted_delta(fan, pol, m, weight, prec_bits=prec_bits), sol
