"""Exact stability thresholds on polarized toric manifolds.

The quantities here come in two families:

* exact rational invariants of torus-invariant valuations (vanishing orders,
  log discrepancies, the level-m threshold and its bracket against the nef
  threshold, coupled variants),
* weighted variants for a positive weight on the moment polytope, which are
  exact for the constant weight and arbitrary-precision floating point for
  exponential weights.

A toric valuation is a nonzero rational vector in the cocharacter lattice;
its invariants are linear on each maximal cone, which is why the level-m
threshold is a minimum over the fan rays (mediant inequality on each smooth
cone).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import mpmath

from .rationals import dot, format_rational, solve_linear
from .toric import (
    DivisibilityError,
    Fan,
    FracVec,
    IntVec,
    MomentPolytope,
    Polarization,
    continuous_barycenter,
    lattice_points,
    nef_threshold,
    polytope,
    quantized_barycenter,
)


def _to_mpf(x):
    """Lossless conversion of ints/Fractions/floats to the working precision."""
    if isinstance(x, Fraction):
        return mpmath.mpf(x.numerator) / x.denominator
    return mpmath.mpf(x)


class ValuationError(ValueError):
    """Bad toric valuation input (zero vector, wrong dimension)."""


@dataclass(frozen=True)
class ToricValuation:
    v: FracVec
    is_fan_ray: bool = False

    @staticmethod
    def of(coords: Sequence, is_fan_ray: bool = False) -> "ToricValuation":
        v = tuple(Fraction(c) for c in coords)
        if all(c == 0 for c in v):
            raise ValuationError("toric valuation must be nonzero")
        return ToricValuation(v, is_fan_ray)


@dataclass(frozen=True)
class WeightFunction:
    """Positive weight on the moment polytope: constant 1 or exp(<xi, .>)."""

    xi: tuple[float, ...] | None  # None means the constant weight 1

    @staticmethod
    def constant() -> "WeightFunction":
        return WeightFunction(None)

    @staticmethod
    def exponential(xi: Sequence[float]) -> "WeightFunction":
        return WeightFunction(tuple(float(c) for c in xi))

    @property
    def is_constant(self) -> bool:
        return self.xi is None

    def value(self, point: Sequence, prec_bits: int = 128):
        """Weight at a point of P; mpmath float for the exponential kind."""
        if self.xi is None:
            return Fraction(1)
        with mpmath.workprec(prec_bits):
            return mpmath.exp(mpmath.fsum(mpmath.mpf(x) * _to_mpf(p) for x, p in zip(self.xi, point)))


@dataclass(frozen=True)
class ThresholdReport:
    m: int
    delta_t: Fraction
    s_l: Fraction
    lower: Fraction
    upper: Fraction
    exact: bool
    witness_rays: tuple[int, ...]
    per_ray: tuple[Fraction, ...]  # <b_m, v_rho> + a_rho per ray

    def to_jsonable(self) -> dict:
        return {
            "m": self.m,
            "delta_m_T": format_rational(self.delta_t),
            "s_L": format_rational(self.s_l),
            "lower": format_rational(self.lower),
            "upper": format_rational(self.upper),
            "exact": self.exact,
            "delta_m": format_rational(self.lower) if self.exact else None,
            "witness_rays": list(self.witness_rays),
            "per_ray": [format_rational(x) for x in self.per_ray],
        }


def locate_cone(fan: Fan, val: ToricValuation) -> tuple[int, FracVec]:
    """Maximal cone containing v and the exact coordinates of v in its rays."""
    for ci, cone in enumerate(fan.max_cones):
        rows = [list(col) for col in zip(*(fan.rays[i] for i in cone))]
        t = solve_linear(rows, list(val.v))
        if all(c >= 0 for c in t):
            return ci, t
    raise ValuationError(f"vector {val.v} lies in no maximal cone (fan incomplete?)")


def support_value(fan: Fan, coeffs: Sequence, val: ToricValuation) -> Fraction:
    """Piecewise-linear function with value a_rho at each ray, evaluated at v."""
    ci, t = locate_cone(fan, val)
    return sum((Fraction(coeffs[i]) * c for i, c in zip(fan.max_cones[ci], t)), Fraction(0))


def log_discrepancy(fan: Fan, val: ToricValuation) -> Fraction:
    """Support value of the all-ones coefficients; equals 1 on every ray."""
    return support_value(fan, [Fraction(1)] * len(fan.rays), val)


def section_vanishing_order(
    fan: Fan, pol: Polarization, m: int, u: IntVec, val: ToricValuation
) -> Fraction:
    """Vanishing order of the weight-u monomial section of mL along v."""
    poly = polytope(fan, pol)
    if any(dot(u, normal) + m * a < 0 for normal, a in poly.inequalities):
        raise ValueError(f"lattice point {u} is not a section weight of {m}L")
    return dot(u, val.v) + m * support_value(fan, pol.coeffs, val)


def expected_vanishing_order(fan: Fan, pol: Polarization, m: int, val: ToricValuation) -> Fraction:
    """Average vanishing order over the monomial basis of mL; exact.

    Computed both as the direct average and through the quantized barycenter;
    the two paths must agree exactly.
    """
    poly = polytope(fan, pol)
    pts = lattice_points(poly, m)
    sv = support_value(fan, pol.coeffs, val)
    direct = sum(
        (dot(u, val.v) + m * sv for u in pts), Fraction(0)
    ) / (m * len(pts))
    b_m = quantized_barycenter(pts, m)
    via_barycenter = dot(b_m, val.v) + sv
    if direct != via_barycenter:
        raise AssertionError("expected vanishing order: computation paths disagree")
    return direct


def max_vanishing_order(fan: Fan, pol: Polarization, m: int, val: ToricValuation) -> Fraction:
    """Largest vanishing order over the monomial basis of mL."""
    poly = polytope(fan, pol)
    pts = lattice_points(poly, m)
    sv = support_value(fan, pol.coeffs, val)
    return max(dot(u, val.v) + m * sv for u in pts)


class TrivialPolarizationError(ValueError):
    pass


def _per_ray_orders(fan: Fan, pol: Polarization, m: int) -> tuple[FracVec, list[Fraction]]:
    poly = polytope(fan, pol)
    pts = lattice_points(poly, m)
    b_m = quantized_barycenter(pts, m)
    return b_m, [dot(b_m, v) + pol.coeffs[i] for i, v in enumerate(fan.rays)]


def torus_delta(fan: Fan, pol: Polarization, m: int) -> tuple[Fraction, tuple[int, ...]]:
    """Level-m threshold over torus-invariant valuations, with witness rays.

    Equals min over rays of 1 / (<b_m, v_rho> + a_rho); rays with vanishing
    denominator contribute +infinity and are skipped.  Ties are all reported,
    lowest index first.
    """
    _, orders = _per_ray_orders(fan, pol, m)
    finite = [(Fraction(1) / s, i) for i, s in enumerate(orders) if s > 0]
    if not finite:
        raise TrivialPolarizationError("every ray has nonpositive expected vanishing order")
    best = min(q for q, _ in finite)
    witnesses = tuple(i for q, i in finite if q == best)
    return best, witnesses


def delta_bracket(fan: Fan, pol: Polarization, m: int) -> ThresholdReport:
    """Exact bracket [min(delta_T, s), delta_T] for the level-m threshold."""
    b_m, orders = _per_ray_orders(fan, pol, m)
    delta_t, witnesses = torus_delta(fan, pol, m)
    s_l = nef_threshold(fan, pol)
    lower = min(delta_t, s_l)
    return ThresholdReport(
        m=m,
        delta_t=delta_t,
        s_l=s_l,
        lower=lower,
        upper=delta_t,
        exact=delta_t <= s_l,
        witness_rays=witnesses,
        per_ray=tuple(orders),
    )


def delta_limit(fan: Fan, pol: Polarization) -> Fraction:
    """Large-m limit threshold from the exact continuous barycenter."""
    poly = polytope(fan, pol)
    b = continuous_barycenter(poly)
    worst = max(dot(b, v) + pol.coeffs[i] for i, v in enumerate(fan.rays))
    if worst <= 0:
        raise TrivialPolarizationError("no ray has positive limiting vanishing order")
    return Fraction(1) / worst


# ----------------------------- weighted variants -----------------------------


def _weighted_barycenter(
    pts: list[IntVec], m: int, weight: WeightFunction, prec_bits: int
) -> tuple:
    """b^g_m = sum g(u/m) u / (m sum g(u/m)); mpmath row for exponential g."""
    n = len(pts[0])
    if weight.is_constant:
        return quantized_barycenter(pts, m)
    with mpmath.workprec(prec_bits):
        xi = [mpmath.mpf(x) for x in weight.xi]
        logs = [mpmath.fsum(x * mpmath.mpf(u[k]) / m for k, x in enumerate(xi)) for u in pts]
        shift = max(logs)
        ws = [mpmath.exp(l - shift) for l in logs]
        tot = mpmath.fsum(ws)
        return tuple(mpmath.fsum(w * u[k] for w, u in zip(ws, pts)) / (m * tot) for k in range(n))


def weighted_vanishing_order(
    fan: Fan,
    pol: Polarization,
    m: int,
    val: ToricValuation,
    weight: WeightFunction,
    prec_bits: int = 128,
):
    """Weighted average vanishing order <b^g_m, v> + support value.

    Exact Fraction for the constant weight, mpmath float otherwise.
    """
    if weight.is_constant:
        return expected_vanishing_order(fan, pol, m, val)
    poly = polytope(fan, pol)
    pts = lattice_points(poly, m)
    bg = _weighted_barycenter(pts, m, weight, prec_bits)
    sv = support_value(fan, pol.coeffs, val)
    with mpmath.workprec(prec_bits):
        return mpmath.fsum(b * _to_mpf(c) for b, c in zip(bg, val.v)) + _to_mpf(sv)


def weighted_delta(
    fan: Fan, pol: Polarization, m: int, weight: WeightFunction, prec_bits: int = 128
):
    """Weighted level-m threshold: min over rays of A / S^g.

    Collapses bit-exactly to the unweighted threshold for the constant weight.
    """
    if weight.is_constant:
        return torus_delta(fan, pol, m)[0]
    poly = polytope(fan, pol)
    pts = lattice_points(poly, m)
    bg = _weighted_barycenter(pts, m, weight, prec_bits)
    with mpmath.workprec(prec_bits):
        best = None
        for i, v in enumerate(fan.rays):
            s = mpmath.fsum(b * c for b, c in zip(bg, v)) + _to_mpf(pol.coeffs[i])
            if s > 0:
                q = 1 / s
                best = q if best is None or q < best else best
        if best is None:
            raise TrivialPolarizationError("every ray has nonpositive weighted vanishing order")
        return best


# ------------------------------ coupled variants ------------------------------


class DecompositionError(ValueError):
    """The polarizations do not decompose the anticanonical class."""


def _check_decomposition(fan: Fan, pols: Sequence[Polarization]) -> None:
    for i in range(len(fan.rays)):
        total = sum((p.coeffs[i] for p in pols), Fraction(0))
        if total != 1:
            raise DecompositionError(
                f"coefficients at ray {i} sum to {total}, expected 1"
            )


def coupled_delta(fan: Fan, pairs: Sequence[tuple[Polarization, int]]) -> Fraction:
    """Coupled level-(m_1..m_k) threshold from summed quantized barycenters."""
    _check_decomposition(fan, [p for p, _ in pairs])
    n = fan.dim
    total_b = [Fraction(0)] * n
    for pol, m in pairs:
        poly = polytope(fan, pol)
        b = quantized_barycenter(lattice_points(poly, m), m)
        total_b = [x + y for x, y in zip(total_b, b)]
    worst = max(dot(total_b, v) + 1 for v in fan.rays)
    return Fraction(1) / worst


def coupled_ke_criterion(fan: Fan, pols: Sequence[Polarization]) -> bool:
    """Existence criterion for a coupled tuple: summed barycenters vanish."""
    _check_decomposition(fan, pols)
    n = fan.dim
    total = [Fraction(0)] * n
    for pol in pols:
        b = continuous_barycenter(polytope(fan, pol))
        total = [x + y for x, y in zip(total, b)]
    return all(c == 0 for c in total)


def coupled_delta_limit(fan: Fan, pols: Sequence[Polarization]) -> Fraction:
    """Limit of the coupled threshold, from exact continuous barycenters."""
    _check_decomposition(fan, pols)
    n = fan.dim
    total = [Fraction(0)] * n
    for pol in pols:
        b = continuous_barycenter(polytope(fan, pol))
        total = [x + y for x, y in zip(total, b)]
    worst = max(dot(total, v) + 1 for v in fan.rays)
    return Fraction(1) / worst


# ------------------------------- diagnostics ---------------------------------


def torus_alpha(fan: Fan, pol: Polarization, m: int) -> Fraction:
    """T-invariant alpha diagnostic at level m.

    The lct of the worst torus-invariant (1/m)-section divisor:
    min over monomials u and rays rho of m / (<u, v_rho> + m a_rho),
    restricted to positive denominators.  This is the T-invariant variant
    only; it is exposed as a diagnostic, not claimed to equal the full
    alpha invariant at finite m.
    """
    poly = polytope(fan, pol)
    pts = lattice_points(poly, m)
    best: Fraction | None = None
    for u in pts:
        for normal, a in poly.inequalities:
            denom = dot(u, normal) + m * a
            if denom > 0:
                q = Fraction(m) / denom
                best = q if best is None or q < best else best
    if best is None:
        raise TrivialPolarizationError("no monomial vanishes along any ray")
    return best


def random_cone_valuation(fan: Fan, cone_index: int, rng) -> ToricValuation:
    """Random rational valuation in a given maximal cone (for property checks)."""
    cone = fan.max_cones[cone_index]
    while True:
        coords = [Fraction(int(rng.integers(0, 50)), int(rng.integers(1, 12))) for _ in cone]
        if any(c > 0 for c in coords):
            break
    n = fan.dim
    v = [Fraction(0)] * n
    for c, i in zip(coords, cone):
        for k in range(n):
            v[k] += c * fan.rays[i][k]
    return ToricValuation.of(v)


def delta_sweep(
    fan: Fan, pol: Polarization, ms: Sequence[int]
) -> list[ThresholdReport]:
    return [delta_bracket(fan, pol, m) for m in ms]


def sweep_tsv(reports: Sequence[ThresholdReport]) -> str:
    """(m, delta_m, lower, upper, witness) rows for plotting."""
    lines = ["m\tdelta_m\tlower\tupper\twitness"]
    for r in reports:
        delta = format_rational(r.lower) if r.exact else ""
        lines.append(
            f"{r.m}\t{delta}\t{format_rational(r.lower)}\t{format_rational(r.upper)}"
            f"\t{','.join(str(i) for i in r.witness_rays)}"
        )
    return "\n".join(lines) + "\n"
