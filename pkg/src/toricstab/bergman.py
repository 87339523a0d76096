"""Quantized Bergman-space laboratory, torus-invariant (diagonal) mode.

On the open torus orbit, log-real coordinates x in R^n identify every
torus-invariant quantity with a function of x.  The reference metric is the
monomial-system potential

    psi_ref(x) = (1/m) log sum_u e^{<u, x>},   u over the weights of mL,

so the reference Hermitian form is the identity in the monomial basis and the
reference measure is det D^2 psi_ref dx, of total mass vol(P).  A diagonal
Hermitian form is stored through its Fubini-Study weights mu_u (kept in log
space); the associated Bergman potential is

    phi(x) = (1/m) log sum_u mu_u e^{<u, x> - m psi_ref(x)}.

Energies, the quantized Ding functional, Moser-Trudinger integrals along
geodesic rays, and the Hilb/FS fixed-point iteration all reduce to families
of 1-D/2-D log-space quadratures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from . import quadrature as quad
from .quadrature import Grid, QuadratureError
from .rationals import dot
from .thresholds import (
    ToricValuation,
    WeightFunction,
    log_discrepancy,
    support_value,
    torus_delta,
)
from .toric import Fan, IntVec, Polarization, lattice_points, polytope, polytope_volume


class NumericError(RuntimeError):
    """A numeric routine failed to reach its configured tolerance."""


# --------------------------------- basis -------------------------------------


@dataclass(frozen=True)
class SectionBasis:
    """Monomial basis of H^0(X, mL) with its reference-potential data."""

    fan: Fan
    pol: Polarization
    m: int
    points: tuple[IntVec, ...]
    exps: np.ndarray  # (d, n) float copy of the points
    volume: float
    volume_exact: Fraction

    @property
    def d(self) -> int:
        return len(self.points)

    @property
    def dim(self) -> int:
        return self.fan.dim

    def psi_ref(self, x: np.ndarray) -> np.ndarray:
        """Reference potential (1/m) log sum e^{<u,x>} at nodes x (N, n)."""
        return logsumexp(self.exps @ x.T, axis=0) / self.m

    def grad_psi_ref(self, x: np.ndarray) -> np.ndarray:
        a = self.exps @ x.T
        w = np.exp(a - logsumexp(a, axis=0))
        return (self.exps.T @ w).T / self.m

    def log_density(self, x: np.ndarray, intercepts: np.ndarray | None = None) -> np.ndarray:
        """log det D^2 of (1/m) LSE(c_u + <u,x>); c = 0 gives the reference measure.

        1-D uses the fully log-space pairwise variance (safe at any ray time);
        2-D uses offset covariance with a conditioning clamp, which is accurate
        for the moderate ray times the 2-D paths need.
        """
        c = np.zeros(self.d) if intercepts is None else np.asarray(intercepts, float)
        a = self.exps @ x.T + c[:, None]
        lw = a - logsumexp(a, axis=0)
        n = self.dim
        if n == 1:
            iu, ju = np.triu_indices(self.d, k=1)
            gaps = self.exps[iu, 0] - self.exps[ju, 0]
            keep = gaps != 0
            terms = lw[iu[keep]] + lw[ju[keep]] + 2.0 * np.log(np.abs(gaps[keep]))[:, None]
            return logsumexp(terms, axis=0) - math.log(self.m)
        w = np.exp(lw)
        mean = np.einsum("dn,dk->nk", w, self.exps) / np.sum(w, axis=0)[:, None]
        z = self.exps[None, :, :] - mean[:, None, :]
        cov = np.einsum("dn,ndk,ndl->nkl", w, z, z)
        c11, c22, c12 = cov[:, 0, 0], cov[:, 1, 1], cov[:, 0, 1]
        det = c11 * c22 - c12 * c12
        floor = 1e-13 * np.maximum(c11 * c22, 1e-300)
        det = np.maximum(det, floor)
        out = np.log(det) - 2.0 * math.log(self.m)
        out[~np.isfinite(out)] = -np.inf
        return out

    def grid_for(self, kink_points: Sequence[float], level: int = 0) -> Grid:
        if self.dim == 1:
            return quad.grid_1d(list(kink_points) + [0.0], level)
        half = max(12.0, max((abs(k) for k in kink_points), default=0.0) + 8.0)
        return quad.grid_nd(self.dim, half, level)


def section_basis(fan: Fan, pol: Polarization, m: int) -> SectionBasis:
    poly = polytope(fan, pol)
    pts = tuple(lattice_points(poly, m))
    if len(pts) < 2:
        raise ValueError("section space must have dimension >= 2")
    vol = polytope_volume(poly)
    return SectionBasis(
        fan=fan,
        pol=pol,
        m=m,
        points=pts,
        exps=np.array(pts, dtype=float),
        volume=float(vol),
        volume_exact=vol,
    )


def reference_calibration(basis: SectionBasis, rel_tol: float = 1e-8) -> tuple[float, float]:
    """Self-calibration: log int det D^2 psi_ref dx against log vol(P).

    Returns (log_mass, error vs exact); raises NumericError when the grid
    cannot reproduce the exact volume.
    """
    log_mass, _ = quad.refine_log_integral(
        lambda g: basis.log_density(g.x),
        lambda level: basis.grid_for([0.0], level),
        rel_tol=rel_tol,
    )
    err = abs(log_mass - math.log(basis.volume))
    if err > 50 * rel_tol:
        raise NumericError(f"measure calibration off by {err:.2e}")
    return log_mass, err


# ------------------------------ Hermitian forms -------------------------------


@dataclass(frozen=True)
class DiagonalForm:
    """Diagonal Hermitian form, stored through log of its FS weights mu_u.

    Entries may be exact Fractions (ray energies stay exact) or floats.
    """

    log_mu: tuple

    @staticmethod
    def identity(d: int) -> "DiagonalForm":
        return DiagonalForm(tuple(Fraction(0) for _ in range(d)))

    @staticmethod
    def from_mu(mu: Sequence[float]) -> "DiagonalForm":
        if any(v <= 0 for v in mu):
            raise ValueError("FS weights must be positive")
        return DiagonalForm(tuple(math.log(float(v)) for v in mu))

    @staticmethod
    def from_log_mu(log_mu: Sequence) -> "DiagonalForm":
        return DiagonalForm(tuple(log_mu))

    @property
    def d(self) -> int:
        return len(self.log_mu)

    @property
    def mu(self) -> tuple[float, ...]:
        return tuple(math.exp(float(v)) for v in self.log_mu)

    def as_float(self) -> np.ndarray:
        return np.array([float(v) for v in self.log_mu])

    def det_normalized(self) -> "DiagonalForm":
        vals = self.log_mu
        mean = sum(vals) / len(vals) if _all_exact(vals) else float(np.mean(self.as_float()))
        return DiagonalForm(tuple(v - mean for v in vals))

    def scaled(self, c) -> "DiagonalForm":
        return DiagonalForm(tuple(v + c for v in self.log_mu))


def _all_exact(vals) -> bool:
    return all(isinstance(v, (int, Fraction)) for v in vals)


@dataclass(frozen=True)
class BergmanPotential:
    """Potential phi = FS(K) relative to the reference metric."""

    basis: SectionBasis
    form: DiagonalForm

    def value(self, x: np.ndarray) -> np.ndarray:
        a = self.basis.exps @ x.T
        return (logsumexp(a + self.form.as_float()[:, None], axis=0) - logsumexp(a, axis=0)) / self.basis.m

    def kinks(self) -> list[float]:
        """1-D breakpoints of both participating upper envelopes."""
        if self.basis.dim != 1:
            raise NumericError("kinks are a 1-D concept; use tensor grids for n = 2")
        slopes = self.basis.exps[:, 0]
        return sorted(
            set(
                quad.upper_envelope_breakpoints(slopes, self.form.as_float())
                + quad.upper_envelope_breakpoints(slopes, np.zeros(self.basis.d))
            )
        )


def fs(basis: SectionBasis, form: DiagonalForm) -> BergmanPotential:
    """Fubini-Study map; FS(c * K) = FS(K) + (1/m) log c on the weights."""
    if form.d != basis.d:
        raise ValueError("form dimension does not match the basis")
    return BergmanPotential(basis, form)


def energy(basis: SectionBasis, h: DiagonalForm, k: DiagonalForm):
    """Aubin-Yau energy between forms: (1/(m d)) sum (log mu_K - log mu_H).

    Exact when both forms carry exact weights; cocycle and antisymmetry hold
    identically.
    """
    diffs = [a - b for a, b in zip(k.log_mu, h.log_mu)]
    if _all_exact(diffs):
        return sum(diffs, Fraction(0)) / (basis.m * basis.d)
    return math.fsum(float(v) for v in diffs) / (basis.m * basis.d)


def d1_distance(basis: SectionBasis, k1: DiagonalForm, k2: DiagonalForm):
    """Quantum d_1 distance (1/(m d)) sum |log mu_2 - log mu_1|."""
    diffs = [abs(a - b) for a, b in zip(k2.log_mu, k1.log_mu)]
    if _all_exact(diffs):
        return sum(diffs, Fraction(0)) / (basis.m * basis.d)
    return math.fsum(float(v) for v in diffs) / (basis.m * basis.d)


def rooftop(basis: SectionBasis, k1: DiagonalForm, k2: DiagonalForm) -> DiagonalForm:
    """Quantum rooftop envelope: weightwise min of the two forms."""
    return DiagonalForm(tuple(min(a, b) for a, b in zip(k1.log_mu, k2.log_mu)))


def weighted_energy(
    basis: SectionBasis, h: DiagonalForm, k: DiagonalForm, weight: WeightFunction
) -> float:
    """Weighted energy (1/(m d gbar)) sum g(u/m) (log mu_K - log mu_H)."""
    if weight.is_constant:
        return float(energy(basis, h, k))
    gs = [float(weight.value([Fraction(c, basis.m) for c in u])) for u in basis.points]
    gbar = math.fsum(gs) / basis.d
    num = math.fsum(
        g * (float(a) - float(b)) for g, a, b in zip(gs, k.log_mu, h.log_mu)
    )
    return num / (basis.m * basis.d * gbar)


# ------------------------------ geodesic rays ---------------------------------


@dataclass(frozen=True)
class GeodesicRay:
    """Bergman geodesic with weights mu_u(t) = mu_u(H) e^{t lambda_u}."""

    basis: SectionBasis
    base: DiagonalForm
    lam: tuple  # one exponent per section, exact for lattice valuations
    valuation: ToricValuation | None = None

    def form_at(self, t) -> DiagonalForm:
        return DiagonalForm(tuple(b + t * l for b, l in zip(self.base.log_mu, self.lam)))

    @property
    def mean_exponent(self) -> Fraction:
        """Expected vanishing order along the ray: (1/(m d)) sum lambda."""
        return sum((Fraction(l) for l in self.lam), Fraction(0)) / (self.basis.m * self.basis.d)

    @property
    def max_exponent(self) -> Fraction:
        return max(Fraction(l) for l in self.lam)


def ray_from_valuation(
    basis: SectionBasis, val: ToricValuation, base: DiagonalForm | None = None
) -> GeodesicRay:
    """Destabilizing ray with exponents = section vanishing orders along v."""
    sv = support_value(basis.fan, basis.pol.coeffs, val)
    lam = []
    for u in basis.points:
        o = dot(u, val.v) + basis.m * sv
        lam.append(int(o) if o.denominator == 1 else o)
    return GeodesicRay(
        basis=basis,
        base=base if base is not None else DiagonalForm.identity(basis.d),
        lam=tuple(lam),
        valuation=val,
    )


# --------------------------- shared grid evaluation ---------------------------


@dataclass
class GridEval:
    """Per-grid cached arrays shared by all integrals on that grid."""

    basis: SectionBasis
    grid: Grid
    a: np.ndarray = field(init=False)  # (d, N) exponents <u, x>
    lse0: np.ndarray = field(init=False)  # m * psi_ref
    log_rho: np.ndarray = field(init=False)

    def __post_init__(self):
        self.a = self.basis.exps @ self.grid.x.T
        self.lse0 = logsumexp(self.a, axis=0)
        self.log_rho = self.basis.log_density(self.grid.x)

    def log_phi(self, form: DiagonalForm) -> np.ndarray:
        return (logsumexp(self.a + form.as_float()[:, None], axis=0) - self.lse0) / self.basis.m


def _f_values(f: Callable[[np.ndarray], np.ndarray] | None, x: np.ndarray) -> np.ndarray:
    if f is None:
        return np.zeros(x.shape[0])
    return np.asarray(f(x), float)


def bump_function(height: float = 1.0, width: float = 2.0) -> Callable[[np.ndarray], np.ndarray]:
    """A fixed torus-invariant smooth bump, used to probe f-independence."""

    def f(x: np.ndarray) -> np.ndarray:
        return height * np.exp(-np.sum(x * x, axis=1) / (width * width))

    return f


# ------------------------------ Ding functional -------------------------------


def ding(
    basis: SectionBasis,
    form: DiagonalForm,
    f: Callable | None = None,
    delta: float = 1.0,
    h: DiagonalForm | None = None,
    ev: GridEval | None = None,
    level: int = 1,
) -> float:
    """Quantized Ding functional -(1/delta) log (1/V) int e^{f - delta phi} - E.

    Translation invariance in the potential holds to quadrature tolerance.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    if h is None:
        h = DiagonalForm.identity(basis.d)
    if ev is None:
        pot = fs(basis, form)
        kinks = pot.kinks() if basis.dim == 1 else _spread_points(form)
        ev = GridEval(basis, basis.grid_for(kinks, level))
    lphi = ev.log_phi(form)
    lf = _f_values(f, ev.grid.x)
    log_z = quad.log_integral(ev.grid, lf - delta * lphi + ev.log_rho)
    return -(log_z - math.log(basis.volume)) / delta - float(energy(basis, h, form))


def _spread_points(form: DiagonalForm) -> list[float]:
    s = float(np.max(np.abs(form.as_float())))
    return [-(s + 10.0), 0.0, s + 10.0]


# ----------------------------------- Hilb -------------------------------------


def hilb(
    basis: SectionBasis,
    phi: BergmanPotential,
    f: Callable | None = None,
    delta: float = 1.0,
    ev: GridEval | None = None,
    level: int = 0,
) -> DiagonalForm:
    """Normalized Gram form of e^{f - delta phi}; diagonal in, diagonal out.

    In FS weights: mu_u = Z / (d I_u) with
    I_u = int e^{<u,x> - m psi - (m+delta) phi + f} rho dx and
    Z = int e^{f - delta phi} rho dx.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    form = phi.form
    if ev is None:
        kinks = phi.kinks() if basis.dim == 1 else _spread_points(form)
        ev = GridEval(basis, basis.grid_for(kinks, level))
    lphi = ev.log_phi(form)
    lf = _f_values(f, ev.grid.x)
    log_z = quad.log_integral(ev.grid, lf - delta * lphi + ev.log_rho)
    common = -ev.lse0 - (basis.m + delta) * lphi + lf + ev.log_rho + ev.grid.logw
    log_i = logsumexp(ev.a + common[None, :], axis=1)
    if not np.all(np.isfinite(log_i)):
        raise QuadratureError("Gram integral vanished on the grid")
    return DiagonalForm(tuple(log_z - math.log(basis.d) - log_i))


def sup_potential(basis: SectionBasis, form: DiagonalForm, level: int = 1) -> dict:
    """Numeric sup of FS(K): grid max, origin, and per-vertex asymptotics.

    Reports both the numeric supremum and (1/m) log max mu; the gauge makes
    |sup - (1/m) log max mu| <= log(d)/m provable.
    """
    pot = fs(basis, form)
    kinks = pot.kinks() if basis.dim == 1 else _spread_points(form)
    grid = basis.grid_for(kinks, level)
    grid_max = float(np.max(pot.value(grid.x)))
    origin = float(pot.value(np.zeros((1, basis.dim)))[0])
    lmf = form.as_float()
    vertex_limits = []
    scaled_vertices = {tuple(basis.m * c for c in v) for v in polytope(basis.fan, basis.pol).vertices}
    for idx, u in enumerate(basis.points):
        if tuple(Fraction(c) for c in u) in scaled_vertices:
            vertex_limits.append(lmf[idx] / basis.m)
    sup = max([grid_max, origin] + vertex_limits)
    return {
        "sup": sup,
        "log_max_mu_over_m": float(np.max(lmf)) / basis.m,
        "bound_log_d_over_m": math.log(basis.d) / basis.m,
    }


# ------------------------- Moser-Trudinger integrals ---------------------------


def _ray_kink_points(basis: SectionBasis, ray: GeodesicRay, ts: Sequence[float]) -> list[float]:
    slopes = basis.exps[:, 0]
    base = ray.base.as_float()
    lam = np.array([float(l) for l in ray.lam])
    pts: set[float] = set(quad.upper_envelope_breakpoints(slopes, np.zeros(basis.d)))
    for t in ts:
        pts.update(quad.upper_envelope_breakpoints(slopes, base + t * lam))
    pts.add(0.0)
    return sorted(pts)


def _ray_halfwidth(ray: GeodesicRay, t_max: float) -> float:
    # envelope breakpoints sit within t * |dlam| / |du|  <=  t * |v| of the origin
    if ray.valuation is not None:
        rate = math.sqrt(sum(float(c) ** 2 for c in ray.valuation.v))
    else:
        lam = [float(l) for l in ray.lam]
        rate = max(lam) - min(lam)
    base = ray.base.as_float()
    return t_max * rate + float(np.max(np.abs(base))) + 40.0


def _mt_grid(basis: SectionBasis, ray: GeodesicRay, ts: Sequence[float], level: int) -> Grid:
    if basis.dim == 1:
        return quad.grid_1d(_ray_kink_points(basis, ray, ts), level)
    return quad.grid_nd(basis.dim, _ray_halfwidth(ray, max(ts)), level)


def mt_log_integral(
    basis: SectionBasis,
    ray: GeodesicRay,
    delta: float,
    t: float,
    ev: GridEval | None = None,
    level: int = 0,
) -> float:
    """log int e^{-delta (phi_t - E(H, phi_t))} dmeasure along the ray."""
    if ev is None:
        ev = GridEval(basis, _mt_grid(basis, ray, [t], level))
    lphi = ev.log_phi(ray.form_at(t))
    e_t = t * float(ray.mean_exponent) + float(energy(basis, DiagonalForm.identity(basis.d), ray.base))
    return quad.log_integral(ev.grid, -delta * (lphi - e_t) + ev.log_rho)


def mt_bracket_log_integral(
    basis: SectionBasis, ray: GeodesicRay, delta: float, t: float, ev: GridEval | None = None
) -> float:
    """log of the bracketed integral int e^{t A} / (sum e^{t lam}|s|^2)^{delta/m}.

    This is the Moser-Trudinger integral with the destabilizing exponential
    factored off; it stays bounded below by a positive constant in t.
    """
    a_x = float(log_discrepancy(basis.fan, ray.valuation))
    s_m = float(ray.mean_exponent)
    return mt_log_integral(basis, ray, delta, t, ev=ev) - t * (delta * s_m - a_x)


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    ts: tuple[float, ...]
    log_integrals: tuple[float, ...]
    t_max: float


def mt_slope(
    basis: SectionBasis,
    ray: GeodesicRay,
    delta: float,
    t_max: float | None = None,
    npts: int = 9,
    level: int = 0,
    ev: GridEval | None = None,
) -> SlopeFit:
    """Least-squares slope of log I(t) over t in [T/2, T] (default T = 40/m)."""
    t_max = 40.0 / basis.m if t_max is None else t_max
    ts = np.linspace(t_max / 2.0, t_max, npts)
    if ev is None:
        ev = GridEval(basis, _mt_grid(basis, ray, ts, level))
    vals = np.array([mt_log_integral(basis, ray, delta, t, ev=ev) for t in ts])
    design = np.vstack([ts, np.ones_like(ts)]).T
    coef, *_ = np.linalg.lstsq(design, vals, rcond=None)
    return SlopeFit(
        slope=float(coef[0]),
        intercept=float(coef[1]),
        ts=tuple(ts),
        log_integrals=tuple(vals),
        t_max=t_max,
    )


def mt_threshold(
    basis: SectionBasis,
    ray: GeodesicRay,
    t_max: float | None = None,
    rel_tol: float = 1e-3,
    slope_floor: float = 1e-6,
    max_widen: int = 4,
    level: int = 0,
) -> float:
    """Bisection in delta of the sign of the ray slope.

    Converges to A_X(v)/S_m(v); when a probed slope is smaller than the noise
    floor away from the bracket midpoint, the ray time is widened and the
    probe retried.
    """
    t_max = 40.0 / basis.m if t_max is None else t_max

    def make_slope_fn(t):
        ts = np.linspace(t / 2.0, t, 9)
        ev = GridEval(basis, _mt_grid(basis, ray, ts, level))
        pre = [
            (-(ev.log_phi(ray.form_at(tt)) - tt * float(ray.mean_exponent)), tt) for tt in ts
        ]
        design = np.vstack([ts, np.ones_like(ts)]).T

        def slope(delta: float) -> float:
            vals = np.array(
                [quad.log_integral(ev.grid, delta * arr + ev.log_rho) for arr, _ in pre]
            )
            coef, *_ = np.linalg.lstsq(design, vals, rcond=None)
            return float(coef[0])

        return slope

    slope_fn = make_slope_fn(t_max)
    lo, hi = 0.05, 1.0
    for _ in range(12):
        if slope_fn(hi) > 0:
            break
        lo = hi
        hi *= 2.0
    else:
        raise NumericError("mt threshold: no supercritical bracket found")
    while slope_fn(lo) >= 0:
        lo *= 0.5
        if lo < 1e-6:
            raise NumericError("mt threshold: no subcritical bracket found")
    widened = 0
    while hi - lo > rel_tol * 0.5 * (hi + lo):
        mid = 0.5 * (lo + hi)
        s = slope_fn(mid)
        if abs(s) < slope_floor and widened < max_widen:
            t_max *= 2.0
            slope_fn = make_slope_fn(t_max)
            widened += 1
            continue
        if s > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def analytic_delta_estimate(
    fan: Fan,
    pol: Polarization,
    m: int,
    rel_tol: float = 1e-3,
    level: int = 0,
) -> dict:
    """Quantized Moser-Trudinger estimate of the level-m threshold.

    Minimum over fan rays of the per-ray coercivity threshold; an independent
    numeric route to the exact torus threshold.
    """
    basis = section_basis(fan, pol, m)
    per_ray = []
    for i, v in enumerate(fan.rays):
        ray = ray_from_valuation(basis, ToricValuation.of(v, is_fan_ray=True))
        per_ray.append(mt_threshold(basis, ray, rel_tol=rel_tol, level=level))
    est = min(per_ray)
    return {
        "estimate": est,
        "per_ray": per_ray,
        "witness_ray": int(np.argmin(per_ray)),
        "tolerance": rel_tol,
    }


# ------------------------- balanced metric iteration --------------------------


@dataclass(frozen=True)
class BalancedOptions:
    max_iter: int = 60000
    tol: float = 1e-10
    escape_gauge: float = 1e3
    f_floor: float = -1e3
    grid_level: int = 0
    damping: float = 1.0
    auto_damp: bool = True
    boost: bool = True
    boost_cap: float = 64.0
    boost_after: int = 40
    boost_recover: int = 400
    f_trigger: float = -5.0


@dataclass
class BalancedRun:
    status: str  # Converged | Diverged | MaxIter
    form: DiagonalForm | None
    residual: float | None
    iterations: int
    trace: list[tuple[int, float, float]]  # (j, d1m step, F)
    delta: float
    message: str = ""


def _hilb_step(
    basis: SectionBasis, form: DiagonalForm, f, delta: float, level: int
) -> tuple[np.ndarray, float]:
    """One Hilb(FS(.)) application on det-normalized weights; returns also F.

    For det-normalized weights the reference energy term vanishes, so
    F = -(1/delta)(log Z - log V).
    """
    pot = fs(basis, form)
    kinks = pot.kinks() if basis.dim == 1 else _spread_points(form)
    ev = GridEval(basis, basis.grid_for(kinks, level))
    lphi = ev.log_phi(form)
    lf = _f_values(f, ev.grid.x)
    log_z = quad.log_integral(ev.grid, lf - delta * lphi + ev.log_rho)
    common = -ev.lse0 - (basis.m + delta) * lphi + lf + ev.log_rho + ev.grid.logw
    log_i = logsumexp(ev.a + common[None, :], axis=1)
    new = log_z - math.log(basis.d) - log_i
    f_val = -(log_z - math.log(basis.volume)) / delta
    return new - np.mean(new), f_val


def balanced_iterate(
    basis: SectionBasis,
    delta: float,
    f: Callable | None = None,
    h0: DiagonalForm | None = None,
    opts: BalancedOptions = BalancedOptions(),
) -> BalancedRun:
    """Fixed-point iteration K -> Hilb(FS(K)), det-normalized each step.

    Converged: the quantum d_1 step drops below the tolerance.  Diverged: the
    scaling-invariant gauge (sup - E proxy) exceeds the escape bound, or the
    Ding value falls through the floor.  The trace records (j, step, F).
    The iteration is an empirical classifier; an overrelaxation boost speeds
    up the linear escape regime and is rolled back whenever F fails to drop.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    cur = (h0 if h0 is not None else DiagonalForm.identity(basis.d)).as_float()
    cur = cur - np.mean(cur)
    trace: list[tuple[int, float, float]] = []
    s = opts.damping
    s_cap = opts.boost_cap
    f_prev = None
    prev_new = None
    monotone = 0
    rising_steps = 0
    prev_step = None
    j = 0
    evals = 0
    while j < opts.max_iter:
        evals += 1
        if evals > 4 * opts.max_iter:
            break
        new, f_val = _hilb_step(basis, DiagonalForm.from_log_mu(cur), f, delta, opts.grid_level)
        if f_prev is not None and f_val > f_prev + 1e-12:
            if s > 1.0 and prev_new is not None:
                # overrelaxation overshot: remember the unstable level and
                # resume from the plain-map image of the previous state
                s_cap = max(1.0, s / 2.0)
                cur = prev_new
                s = 1.0
                monotone = 0
                continue
            if opts.auto_damp and s == 1.0 and rising_steps >= 3:
                s = 0.5
        step_vec = new - cur
        step = float(np.sum(np.abs(step_vec))) / (basis.m * basis.d)
        trace.append((j, step, f_val))
        if prev_step is not None:
            rising_steps = rising_steps + 1 if step > prev_step else 0
        prev_step = step
        if step < opts.tol:
            form = DiagonalForm.from_log_mu(tuple(cur))
            res_vec, _ = _hilb_step(basis, form, f, delta, opts.grid_level)
            residual = float(np.max(np.abs(res_vec - cur)))
            return BalancedRun("Converged", form, residual, j + 1, trace, delta)
        gauge = (float(np.max(new)) - float(np.mean(new))) / basis.m
        if gauge > opts.escape_gauge or f_val < opts.f_floor:
            return BalancedRun(
                "Diverged", DiagonalForm.from_log_mu(tuple(new)), None, j + 1, trace, delta
            )
        if opts.boost and f_prev is not None and f_val < f_prev and f_val < opts.f_trigger:
            monotone += 1
            if monotone >= opts.boost_after and s < min(s_cap, opts.boost_cap):
                s = min(2.0 * max(s, 1.0), s_cap, opts.boost_cap)
                monotone = 0
            elif monotone >= opts.boost_recover and s_cap < opts.boost_cap:
                s_cap = min(2.0 * s_cap, opts.boost_cap)  # past overshoots may heal
                monotone = 0
        prev_new = new
        cur = cur + s * step_vec
        f_prev = f_val
        j += 1
    return BalancedRun(
        "MaxIter", DiagonalForm.from_log_mu(tuple(cur)), None, opts.max_iter, trace, delta
    )


@dataclass(frozen=True)
class ThresholdProbeOptions:
    start_time: float = 60.0
    probe_f_floor: float = -15.0
    probe_escape_gauge: float = 200.0
    probe_max_iter: int = 20000
    probe_tol: float = 1e-8
    bracket: tuple[float, float] = (0.25, 2.0)
    width: float = 0.02
    grid_level: int = 0


@dataclass
class ThresholdProbe:
    threshold: float
    lo: float
    hi: float
    probes: list[tuple[float, str]]
    inconclusive: bool = False
    message: str = ""


def _classify(basis: SectionBasis, delta: float, f, popts: ThresholdProbeOptions) -> str:
    """supercritical / subcritical by deep-ray-start iteration outcomes.

    Coercivity fails along some fan-ray channel, so each fan ray is probed
    from a point far along its Bergman geodesic: any escaping probe marks the
    level supercritical, all-converged marks it subcritical.
    """
    opts = BalancedOptions(
        max_iter=popts.probe_max_iter,
        tol=popts.probe_tol,
        escape_gauge=popts.probe_escape_gauge,
        f_floor=popts.probe_f_floor,
        grid_level=popts.grid_level,
        f_trigger=max(-3.0, popts.probe_f_floor / 4.0),
        boost_after=20,
    )
    for v in basis.fan.rays:
        ray = ray_from_valuation(basis, ToricValuation.of(v, is_fan_ray=True))
        start = ray.form_at(popts.start_time).det_normalized()
        h0 = DiagonalForm.from_log_mu(tuple(float(c) for c in start.log_mu))
        run = balanced_iterate(basis, delta, f=f, h0=h0, opts=opts)
        if run.status == "Diverged":
            return "supercritical"
        if run.status == "MaxIter":
            tail = run.trace[-60:]
            f_dec = all(b[2] <= a[2] + 1e-12 for a, b in zip(tail, tail[1:]))
            steps_dec = all(b[1] <= a[1] * 1.05 for a, b in zip(tail, tail[1:]))
            if f_dec and tail[-1][2] < popts.probe_f_floor / 2:
                return "supercritical"
            if steps_dec and tail[-1][1] < 1e-5:
                continue  # effectively converged
            return "inconclusive"
    return "subcritical"


def balanced_threshold(
    basis: SectionBasis,
    f: Callable | None = None,
    popts: ThresholdProbeOptions = ThresholdProbeOptions(),
) -> ThresholdProbe:
    """Bisection over delta of the balanced-iteration outcome.

    Returns the estimated coercivity threshold; inconsistent probe
    classifications are retried from a deeper start and then flagged.
    """
    lo, hi = popts.bracket
    probes: list[tuple[float, str]] = []

    def classify(delta: float) -> str:
        out = _classify(basis, delta, f, popts)
        if out == "inconclusive":
            deeper = replace(
                popts, start_time=2 * popts.start_time, probe_max_iter=2 * popts.probe_max_iter
            )
            out = _classify(basis, delta, f, deeper)
        probes.append((delta, out))
        return out

    for _ in range(4):
        if classify(lo) == "subcritical":
            break
        hi = lo
        lo *= 0.5
    else:
        return ThresholdProbe(lo, lo, hi, probes, True, "no subcritical bracket")
    for _ in range(4):
        if classify(hi) == "supercritical":
            break
        lo = hi
        hi *= 2.0
    else:
        return ThresholdProbe(hi, lo, hi, probes, True, "no supercritical bracket")
    while hi - lo > popts.width:
        mid = 0.5 * (lo + hi)
        out = classify(mid)
        if out == "inconclusive":
            return ThresholdProbe(0.5 * (lo + hi), lo, hi, probes, True, "inconclusive probe")
        if out == "supercritical":
            hi = mid
        else:
            lo = mid
    return ThresholdProbe(0.5 * (lo + hi), lo, hi, probes)


# --------------------------- Monge-Ampere energy (1-D) -------------------------


def monge_ampere_energy(basis: SectionBasis, form: DiagonalForm, level: int = 1) -> float:
    """Continuous Monge-Ampere energy of FS(K) on a curve (n = 1 only).

    E(phi) = (1/2V) [int phi dmu_ref + int phi dmu_phi], with both measures
    realized through second derivatives of the corresponding potentials.
    """
    if basis.dim != 1:
        raise NumericError("continuous Monge-Ampere energy implemented for n = 1")
    pot = fs(basis, form)
    grid = basis.grid_for(pot.kinks(), level)
    vals = pot.value(grid.x)
    rho_ref = basis.log_density(grid.x)
    rho_phi = basis.log_density(grid.x, intercepts=form.as_float())
    total = quad.integrate_signed(grid, vals, rho_ref) + quad.integrate_signed(grid, vals, rho_phi)
    return total / (2.0 * basis.volume)
