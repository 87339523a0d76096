"""Log-space quadrature for torus-invariant integrands.

All integrals in the Bergman laboratory have the form ``log \int e^{g(x)} dx``
over R^n (n = 1 or 2), where g is a piecewise-smooth combination of
log-sum-exps with exponential decay in every direction.  Everything is
evaluated in log space with running-max subtraction, so integrals whose
magnitude far under/overflows a double are still well conditioned.

Two node layouts are used:

* 1-D: panels aligned to the known kinks of the integrand (breakpoints of the
  participating upper envelopes), with geometric tail extensions.  Cost is
  proportional to the spread of the kinks, so geodesic-ray integrands remain
  cheap even at very large ray times.
* n-D: a tensor grid of uniform panels on ``[-X, X]^n`` plus geometric tails,
  refined by halving the panel width and raising the per-panel order.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp


class QuadratureError(RuntimeError):
    """Requested tolerance was not reached."""


@lru_cache(maxsize=None)
def gauss_legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


TAIL_WIDTHS = (8.0, 16.0, 32.0, 64.0, 128.0, 256.0)


def upper_envelope_breakpoints(slopes: np.ndarray, intercepts: np.ndarray) -> list[float]:
    """x-values where max_i(slopes_i x + intercepts_i) switches lines."""
    lines: dict[float, float] = {}
    for s, b in zip(np.asarray(slopes, float), np.asarray(intercepts, float)):
        if s not in lines or b > lines[s]:
            lines[s] = b
    items = sorted(lines.items())  # by slope
    hull: list[tuple[float, float]] = []
    xs: list[float] = []

    def cross(l1, l2):
        return (l1[1] - l2[1]) / (l2[0] - l1[0])

    for line in items:
        while hull:
            x = cross(hull[-1], line)
            if xs and x <= xs[-1]:
                hull.pop()
                xs.pop()
            else:
                hull.append(line)
                xs.append(x)
                break
        else:
            hull.append(line)
    return xs


@dataclass(frozen=True)
class Grid:
    """Nodes and log-weights; `x` has shape (N, dim)."""

    dim: int
    x: np.ndarray
    logw: np.ndarray
    level: int

    @property
    def size(self) -> int:
        return self.x.shape[0]


def _axis_nodes(edges: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    gx, gw = gauss_legendre(order)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * np.diff(edges)
    x = (mid[:, None] + half[:, None] * gx[None, :]).ravel()
    logw = np.log(half[:, None] * gw[None, :]).ravel()
    return x, logw


def _panelize(points: Sequence[float], max_width: float) -> np.ndarray:
    """Edges through the given points with panels no wider than max_width,
    plus geometric tail panels on both sides."""
    pts = sorted(set(float(p) for p in points))
    left = [pts[0]]
    for w in TAIL_WIDTHS:
        left.append(left[-1] - w)
    edges = left[::-1]
    for a, b in zip(pts[:-1], pts[1:]):
        k = max(1, int(np.ceil((b - a) / max_width)))
        edges.extend(a + (b - a) * (i + 1) / k for i in range(k))
    right = edges[-1]
    for w in TAIL_WIDTHS:
        right += w
        edges.append(right)
    return np.array(edges)


def grid_1d(kinks: Sequence[float], level: int = 0) -> Grid:
    """1-D grid with panels aligned to the integrand's kinks."""
    max_width = 6.0 / (1 + level)
    order = 16 + 8 * level
    pts = list(kinks) if len(list(kinks)) else [0.0]
    edges = _panelize(pts, max_width)
    x, logw = _axis_nodes(edges, order)
    return Grid(dim=1, x=x[:, None], logw=logw, level=level)


def grid_nd(dim: int, halfwidth: float, level: int = 0) -> Grid:
    """Tensor grid on [-X, X]^dim with geometric tails."""
    if dim == 1:
        return grid_1d([-halfwidth, 0.0, halfwidth], level)
    if dim != 2:
        raise QuadratureError(f"torus-invariant quadrature implemented for dim <= 2, got {dim}")
    max_width = 3.0 / (1 + level)
    order = 6 + 2 * level
    k = max(2, int(np.ceil(2 * halfwidth / max_width)))
    interior = np.linspace(-halfwidth, halfwidth, k + 1)
    edges = _panelize(list(interior), max_width)
    x1, lw1 = _axis_nodes(edges, order)
    xx, yy = np.meshgrid(x1, x1, indexing="ij")
    ww = lw1[:, None] + lw1[None, :]
    return Grid(dim=2, x=np.stack([xx.ravel(), yy.ravel()], axis=1), logw=ww.ravel(), level=level)


def log_integral(grid: Grid, log_f: np.ndarray) -> float:
    """log of int e^{log_f} against the grid; -inf stands for zero integrand."""
    return float(logsumexp(log_f + grid.logw))


def log_integrals(grid: Grid, exps: np.ndarray, log_common: np.ndarray) -> np.ndarray:
    """log of int e^{<w_k, x> + common(x)} dx for a family of exponent rows."""
    a = exps @ grid.x.T + (log_common + grid.logw)[None, :]
    return logsumexp(a, axis=1)


def integrate_signed(grid: Grid, values: np.ndarray, log_density: np.ndarray) -> float:
    """int values * e^{log_density} dx with one global offset (signed values)."""
    c = float(np.max(log_density + grid.logw))
    if not np.isfinite(c):
        return 0.0
    return float(np.sum(values * np.exp(log_density + grid.logw - c)) * np.exp(c))


def refine_log_integral(
    make_log_f: Callable[[Grid], np.ndarray],
    make_grid: Callable[[int], Grid],
    rel_tol: float = 1e-9,
    max_level: int = 3,
) -> tuple[float, float]:
    """Evaluate at increasing refinement levels until two agree.

    Returns (log_value, achieved_error); raises QuadratureError if the last
    two levels still disagree by more than 1e3 * rel_tol (a difference of
    log-values is a relative error of the integrals).
    """
    prev = None
    err = np.inf
    for level in range(max_level + 1):
        grid = make_grid(level)
        cur = log_integral(grid, make_log_f(grid))
        if prev is not None:
            err = abs(cur - prev)
            if err <= rel_tol:
                return cur, err
        prev = cur
    if err > 1e3 * rel_tol:
        raise QuadratureError(f"quadrature stalled at relative error {err:.3e}")
    return prev, err
