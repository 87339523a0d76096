"""Full-matrix Bergman mode on a curve (P^1 only).

Here Hermitian forms are genuine d x d positive matrices in the monomial
basis, and potentials may depend on the angle.  On the open orbit we use
coordinates (x, theta); the section of weight u contributes the character
e^{u(x/2 + i theta)}, and a fixed invariant background psi(x) gives

    |s_u|^2_{h^m} = e^{u x - m psi(x)},
    omega = psi''(x) dx dtheta/(2 pi),
    dd^c f has density f_xx + f_{theta theta}/4 against dx dtheta/(2 pi).

Angular integrals use uniform (Fourier) nodes, exact for the trigonometric
polynomials produced by Gram entries; the radial direction reuses the 1-D
panel machinery.  All kernels are evaluated with the half-density
e^{u x/2 - m psi(x)/2} folded in, which keeps magnitudes bounded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg
from scipy.special import logsumexp

from . import quadrature as quad
from .bergman import BalancedOptions, BalancedRun, NumericError, SectionBasis

Array = np.ndarray


@dataclass(frozen=True)
class CurveMode:
    """Level-m full-matrix mode over an invariant background on P^1."""

    background: SectionBasis
    m: int
    sections: tuple[int, ...]
    n_theta: int = 64

    @property
    def d(self) -> int:
        return len(self.sections)

    @property
    def volume(self) -> float:
        return self.background.volume


def curve_mode(basis: SectionBasis, n_theta: int = 64) -> CurveMode:
    """Full mode at the same level as the basis (background = its reference)."""
    if basis.dim != 1:
        raise NumericError("full-matrix mode is implemented on curves only")
    return CurveMode(
        background=basis,
        m=basis.m,
        sections=tuple(int(u[0]) for u in basis.points),
        n_theta=n_theta,
    )


def curve_mode_level(bg: SectionBasis, m: int, n_theta: int | None = None) -> CurveMode:
    """Level-m sections over a fixed level-1 curve background.

    Used by the energy-convergence desk check, where one geometry must stay
    fixed while the quantization level m grows.
    """
    if bg.dim != 1 or bg.m != 1:
        raise NumericError("fixed background must be a level-1 curve basis")
    us = sorted(int(round(m * u[0])) for u in bg.points)
    sections = tuple(range(min(us), max(us) + 1))
    return CurveMode(background=bg, m=m, sections=sections, n_theta=n_theta or max(64, 8 * m))


@dataclass(frozen=True)
class FullGrid:
    x: Array       # (Nx,)
    logw_x: Array  # (Nx,)
    theta: Array   # (Nt,) uniform, each of weight 1/Nt against dtheta/(2 pi)


def full_grid(mode: CurveMode, halfwidth: float, level: int = 0) -> FullGrid:
    g = quad.grid_1d([-halfwidth, 0.0, halfwidth], level)
    theta = np.linspace(0.0, 2.0 * math.pi, mode.n_theta, endpoint=False)
    return FullGrid(x=g.x[:, 0], logw_x=g.logw, theta=theta)


@dataclass
class ModeEval:
    """Cached kernels on a grid: half-density section values and background."""

    mode: CurveMode
    grid: FullGrid
    vt: Array       # (d, Nx, Nt) complex
    log_rho: Array  # (Nx,)
    m_psi: Array    # (Nx,)

    @staticmethod
    def build(mode: CurveMode, grid: FullGrid) -> "ModeEval":
        bg = mode.background
        psi = bg.psi_ref(grid.x[:, None])
        us = np.array(mode.sections, dtype=float)
        rad = np.exp(us[:, None] * grid.x[None, :] / 2.0 - mode.m * psi[None, :] / 2.0)
        ang = np.exp(1j * us[:, None] * grid.theta[None, :])
        return ModeEval(
            mode=mode,
            grid=grid,
            vt=rad[:, :, None] * ang[:, None, :],
            log_rho=bg.log_density(grid.x[:, None]),
            m_psi=mode.m * psi,
        )

    def kernel(self, w: Array) -> Array:
        k = np.einsum("uv,uxt,vxt->xt", w, self.vt, self.vt.conj(), optimize=True).real
        if np.any(k <= 0):
            raise NumericError("full-mode kernel is not positive (W not positive?)")
        return k

    def potential(self, w: Array) -> Array:
        """phi(x, theta) of the form W relative to the background metric."""
        return np.log(self.kernel(w)) / self.mode.m

    def ma_density(self, w: Array) -> Array:
        """Density of omega_phi: f_xx + f_tt/4 for f = psi + phi = (1/m) log k_raw."""
        us = np.array(self.mode.sections, dtype=float)
        half = 0.5 * (us[:, None] + us[None, :])
        diff = us[:, None] - us[None, :]
        k = self.kernel(w)

        def ratio(factor: Array) -> Array:
            num = np.einsum(
                "uv,uv,uxt,vxt->xt", w, factor, self.vt, self.vt.conj(), optimize=True
            )
            return num.real / k

        dx = ratio(half.astype(complex))
        dxx = ratio((half * half).astype(complex))
        dth = ratio(1j * diff)
        dthth = ratio(-(diff * diff).astype(complex))
        return ((dxx - dx * dx) + (dthth - dth * dth) / 4.0) / self.mode.m

    def log_measure(self) -> Array:
        """Background measure log-density against dx dtheta/(2 pi)."""
        return np.broadcast_to(self.log_rho[:, None], (self.grid.x.size, self.grid.theta.size))


def gram(ev: ModeEval, log_weight: Array) -> tuple[Array, float]:
    """(G, log_scale) with G e^{log_scale} = int v_u conj(v_{u'}) e^{-m psi} e^{log_weight}.

    `log_weight` is a density against dx dtheta/(2 pi); the e^{-m psi} factor
    is the metric h^m and is folded into the half-density section values.
    """
    lw = log_weight + ev.grid.logw_x[:, None] - math.log(ev.grid.theta.size)
    c = float(np.max(lw))
    wts = np.exp(lw - c)
    g = np.einsum("uxt,vxt,xt->uv", ev.vt, ev.vt.conj(), wts, optimize=True)
    return 0.5 * (g + g.conj().T), c


def _halfwidth_for(w: Array, m: int) -> float:
    evals = np.linalg.eigvalsh(w)
    spread = float(np.log(evals[-1]) - np.log(evals[0])) if evals[0] > 0 else 0.0
    return 30.0 + spread / max(m, 1)


def hilb_full(
    mode: CurveMode,
    w: Array,
    f: Callable | None = None,
    delta: float = 1.0,
    ev: ModeEval | None = None,
    level: int = 0,
) -> tuple[Array, float]:
    """One Hilb step; returns (det-normalized new weight matrix, Ding value).

    The new weight matrix is the inverse of the Gram of e^{f - delta phi}
    against h_phi^m, the full-matrix analogue of mu = Z/(d I).
    """
    if ev is None:
        ev = ModeEval.build(mode, full_grid(mode, _halfwidth_for(w, mode.m), level))
    phi = ev.potential(w)
    lf = np.zeros_like(phi) if f is None else f(ev.grid.x[:, None], ev.grid.theta[None, :])
    base = lf - delta * phi + ev.log_measure()
    log_z = float(logsumexp(base + ev.grid.logw_x[:, None] - math.log(ev.grid.theta.size)))
    g, _ = gram(ev, base - mode.m * phi)
    w_new = np.linalg.inv(g)
    w_new = 0.5 * (w_new + w_new.conj().T)
    sign, ld = np.linalg.slogdet(w_new)
    if sign <= 0:
        raise NumericError("Hilb produced a non-positive form")
    w_new = w_new * math.exp(-ld.real / mode.d)
    f_val = -(log_z - math.log(mode.volume)) / delta
    return w_new, f_val


def energy_full(mode: CurveMode, w_h: Array, w_k: Array) -> float:
    """(1/(m d)) log det of the weight-matrix ratio; cocycle holds to lin-alg."""
    s1, ld1 = np.linalg.slogdet(w_k)
    s2, ld2 = np.linalg.slogdet(w_h)
    if s1 <= 0 or s2 <= 0:
        raise ValueError("forms must be positive definite")
    return (ld1 - ld2) / (mode.m * mode.d)


def relative_eigenvalues(w1: Array, w2: Array) -> Array:
    """Generalized eigenvalues mu_i of the pair (simultaneous diagonalization)."""
    return scipy.linalg.eigh(w2, w1, eigvals_only=True)


def d1_full(mode: CurveMode, w1: Array, w2: Array) -> float:
    mu = relative_eigenvalues(w1, w2)
    if np.any(mu <= 0):
        raise ValueError("forms must be positive definite")
    return float(np.sum(np.abs(np.log(mu)))) / (mode.m * mode.d)


def rooftop_full(w1: Array, w2: Array) -> Array:
    """Weightwise min in a simultaneously diagonalizing frame."""
    lam, vec = scipy.linalg.eigh(w2, w1)
    frame = np.linalg.inv(vec).conj().T  # w1 = frame frame^H, w2 = frame diag(lam) frame^H
    return frame @ np.diag(np.minimum(1.0, lam)) @ frame.conj().T


def off_diagonal_norm(w: Array) -> float:
    mask = ~np.eye(w.shape[0], dtype=bool)
    return float(np.max(np.abs(w[mask]))) / float(np.max(np.abs(np.diag(w))))


def balanced_iterate_full(
    mode: CurveMode,
    delta: float,
    w0: Array,
    f: Callable | None = None,
    opts: BalancedOptions = BalancedOptions(max_iter=3000, boost=False),
) -> tuple[BalancedRun, Array]:
    """Full-matrix Hilb(FS(.)) iteration with det normalization."""
    w = np.array(w0, dtype=complex)
    sign, ld = np.linalg.slogdet(w)
    if sign <= 0:
        raise ValueError("starting form must be positive definite")
    w = w * math.exp(-ld.real / mode.d)
    trace: list[tuple[int, float, float]] = []
    for j in range(opts.max_iter):
        w_new, f_val = hilb_full(mode, w, f=f, delta=delta, level=opts.grid_level)
        step = d1_full(mode, w, w_new)
        trace.append((j, step, f_val))
        if step < opts.tol:
            res_w, _ = hilb_full(mode, w_new, f=f, delta=delta, level=opts.grid_level)
            residual = d1_full(mode, w_new, res_w)
            return BalancedRun("Converged", None, residual, j + 1, trace, delta, "full mode"), w_new
        gauge = float(np.max(np.log(np.linalg.eigvalsh(w_new).real))) / mode.m
        if gauge > opts.escape_gauge or f_val < opts.f_floor:
            return BalancedRun("Diverged", None, None, j + 1, trace, delta, "full mode"), w_new
        w = w_new
    return BalancedRun("MaxIter", None, None, opts.max_iter, trace, delta, "full mode"), w


# ------------------------ energy convergence desk check ------------------------


def fixed_potential_energy(bg: SectionBasis, w_pot: Array, level: int = 1) -> float:
    """Continuous Monge-Ampere energy of the fixed level-1 potential of w_pot."""
    mode1 = curve_mode_level(bg, 1)
    ev1 = ModeEval.build(mode1, full_grid(mode1, _halfwidth_for(w_pot, 1) + 20.0, level))
    phi = ev1.potential(w_pot)
    nu_phi = ev1.ma_density(w_pot)
    wts = np.exp(ev1.grid.logw_x)[:, None] / ev1.grid.theta.size
    rho_ref = np.exp(ev1.log_measure())
    return float(np.sum(phi * (rho_ref + nu_phi) * wts)) / (2.0 * mode1.volume)


def energy_quantization_gap(bg: SectionBasis, w_pot: Array, m: int, level: int = 1) -> dict:
    """|E_m(phi_m) - E(phi)| for the Bergman approximants of a fixed potential.

    phi is the (generally angle-dependent) potential of the positive matrix
    `w_pot` at level 1 over the fixed curve background; phi_m is the
    Fubini-Study potential of the L^2 Gram of (h e^{-phi})^m against
    omega_phi, and E_m uses the background L^2 form as reference.
    """
    mode_m = curve_mode_level(bg, m)
    halfwidth = _halfwidth_for(w_pot, 1) + 20.0
    ev = ModeEval.build(mode_m, full_grid(mode_m, halfwidth, level))
    mode1 = curve_mode_level(bg, 1, n_theta=mode_m.n_theta)
    ev1 = ModeEval.build(mode1, ev.grid)
    phi = ev1.potential(w_pot)
    nu_phi = ev1.ma_density(w_pot)
    # far tails of nu sit below double cancellation noise; clamp before the log
    if np.any(nu_phi < -1e-10):
        raise NumericError("fixed potential is not strictly positively curved")
    nu_phi = np.clip(nu_phi, 1e-280, None)
    g_ref, c_ref = gram(ev, ev.log_measure())
    g_phi, c_phi = gram(ev, -m * phi + np.log(nu_phi))
    sign_r, ld_r = np.linalg.slogdet(g_ref)
    sign_p, ld_p = np.linalg.slogdet(g_phi)
    if sign_r <= 0 or sign_p <= 0:
        raise NumericError("Gram matrices must be positive definite")
    # E_m(H_m, FS(G_phi)) = (1/(m d)) (logdet H_m - logdet G_phi) in form convention
    e_m = ((ld_r + mode_m.d * c_ref) - (ld_p + mode_m.d * c_phi)) / (m * mode_m.d)
    wts = np.exp(ev.grid.logw_x)[:, None] / ev.grid.theta.size
    e_cont = float(np.sum(phi * (np.exp(ev.log_measure()) + nu_phi) * wts)) / (2.0 * mode_m.volume)
    return {"m": m, "E_m": e_m, "E": e_cont, "gap": abs(e_m - e_cont)}
