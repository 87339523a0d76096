"""Valuative invariants and the exact threshold engine."""

from fractions import Fraction

import mpmath
import numpy as np
import pytest

from toricstab import thresholds as th
from toricstab.thresholds import (
    DecompositionError,
    ToricValuation,
    WeightFunction,
    coupled_delta,
    coupled_delta_limit,
    coupled_ke_criterion,
    delta_bracket,
    delta_limit,
    expected_vanishing_order,
    log_discrepancy,
    max_vanishing_order,
    section_vanishing_order,
    support_value,
    torus_alpha,
    torus_delta,
    weighted_delta,
    weighted_vanishing_order,
)
from toricstab.toric import Polarization, apply_unimodular, lattice_points, polytope

F = Fraction


def test_support_value_examples(p1_o1, p2):
    ones = [F(1)] * 3
    assert support_value(p2.fan, ones, ToricValuation.of([1, 0])) == 1
    assert support_value(p2.fan, ones, ToricValuation.of([1, 1])) == 2
    assert support_value(p1_o1.fan, p1_o1.polarization.coeffs, ToricValuation.of([-1])) == 1
    assert support_value(p1_o1.fan, p1_o1.polarization.coeffs, ToricValuation.of([1])) == 0


def test_log_discrepancy(p2):
    for v in p2.fan.rays:
        assert log_discrepancy(p2.fan, ToricValuation.of(v)) == 1
    assert log_discrepancy(p2.fan, ToricValuation.of([1, 1])) == 2
    assert log_discrepancy(p2.fan, ToricValuation.of([F(1, 2), F(1, 2)])) == 1


def test_section_vanishing_orders(p1):
    pol = p1.polarization
    plus = ToricValuation.of([1])
    minus = ToricValuation.of([-1])
    assert [section_vanishing_order(p1.fan, pol, 1, (u,), plus) for u in (-1, 0, 1)] == [0, 1, 2]
    assert [section_vanishing_order(p1.fan, pol, 1, (u,), minus) for u in (-1, 0, 1)] == [2, 1, 0]
    with pytest.raises(ValueError):
        section_vanishing_order(p1.fan, pol, 1, (5,), plus)


def test_expected_and_max_vanishing(p1, blp2):
    plus = ToricValuation.of([1])
    assert expected_vanishing_order(p1.fan, p1.polarization, 1, plus) == 1
    assert max_vanishing_order(p1.fan, p1.polarization, 1, plus) == 2
    diag = ToricValuation.of([1, 1])
    assert expected_vanishing_order(blp2.fan, blp2.polarization, 1, diag) == F(11, 9)


def test_torus_delta_examples(p1_o1, p2, p3, blp2):
    for problem in (p2, p3):
        for m in (1, 2, 3):
            value, _ = torus_delta(problem.fan, problem.polarization, m)
            assert value == 1
    value, witness = torus_delta(blp2.fan, blp2.polarization, 1)
    assert value == F(9, 11)
    assert witness == (3,)  # the blowup ray e1+e2
    for m in (1, 2, 5):
        assert torus_delta(p1_o1.fan, p1_o1.polarization, m)[0] == 2


def test_delta_bracket_examples(p1_o1, p2, blp2):
    r = delta_bracket(p2.fan, p2.polarization, 1)
    assert (r.lower, r.upper, r.exact) == (1, 1, True)
    r = delta_bracket(p1_o1.fan, p1_o1.polarization, 3)
    assert (r.lower, r.upper, r.exact) == (2, 2, True)
    assert r.s_l == 2
    r = delta_bracket(blp2.fan, blp2.polarization, 1)
    assert (r.lower, r.upper, r.exact) == (F(9, 11), F(9, 11), True)
    assert r.lower <= r.upper


def test_delta_limit_examples(p1, p1_o1, p2, p3, blp2):
    for problem in (p1, p2, p3):
        assert delta_limit(problem.fan, problem.polarization) == 1
    assert delta_limit(blp2.fan, blp2.polarization) == F(6, 7)
    assert delta_limit(p1_o1.fan, p1_o1.polarization) == 2


def test_cone_linearity_exact(p2, blp2):
    rng = np.random.default_rng(3)
    for problem in (p2, blp2):
        fan, pol = problem.fan, problem.polarization
        for _ in range(50):
            ci = int(rng.integers(0, len(fan.max_cones)))
            v = th.random_cone_valuation(fan, ci, rng)
            w = th.random_cone_valuation(fan, ci, rng)
            s, t = F(int(rng.integers(1, 5)), int(rng.integers(1, 4))), F(int(rng.integers(1, 5)))
            mix = ToricValuation.of([s * a + t * b for a, b in zip(v.v, w.v)])
            assert log_discrepancy(fan, mix) == s * log_discrepancy(fan, v) + t * log_discrepancy(fan, w)
            sm = expected_vanishing_order(fan, pol, 2, mix)
            assert sm == s * expected_vanishing_order(fan, pol, 2, v) + t * expected_vanishing_order(fan, pol, 2, w)


def test_mediant_bound_random(p2, blp2):
    rng = np.random.default_rng(5)
    for problem in (p2, blp2):
        fan, pol = problem.fan, problem.polarization
        dt, _ = torus_delta(fan, pol, 1)
        for _ in range(200):
            ci = int(rng.integers(0, len(fan.max_cones)))
            v = th.random_cone_valuation(fan, ci, rng)
            s = expected_vanishing_order(fan, pol, 1, v)
            if s > 0:
                assert log_discrepancy(fan, v) / s >= dt


def test_vanishing_order_ratio_bound(p2, blp2, p1):
    """S_m(v) <= (d-1)/(m d) tau_m(v) on every fan ray."""
    for problem in (p1, p2, blp2):
        fan, pol = problem.fan, problem.polarization
        for m in (1, 2):
            d = len(lattice_points(polytope(fan, pol), m))
            for ray in fan.rays:
                v = ToricValuation.of(ray, is_fan_ray=True)
                s = expected_vanishing_order(fan, pol, m, v)
                tau = max_vanishing_order(fan, pol, m, v)
                assert s <= F(d - 1, m * d) * tau


def test_gl_equivariance_of_delta(p2, blp2):
    rng = np.random.default_rng(19)
    for problem in (p2, blp2):
        base = torus_delta(problem.fan, problem.polarization, 2)[0]
        lim = delta_limit(problem.fan, problem.polarization)
        for _ in range(20):
            mat = np.eye(2, dtype=object)
            for _ in range(5):
                i, j = rng.integers(0, 2, size=2)
                if i != j:
                    shear = np.eye(2, dtype=object)
                    shear[i][j] = int(rng.integers(-2, 3))
                    mat = shear @ mat
            fan2 = apply_unimodular(problem.fan, [[int(c) for c in row] for row in mat])
            assert torus_delta(fan2, problem.polarization, 2)[0] == base
            assert delta_limit(fan2, problem.polarization) == lim


def test_anticanonical_delta_at_most_one(p1, p2, p3, blp2, p1xp1):
    for problem in (p1, p2, p3, blp2, p1xp1):
        for m in (1, 2):
            assert torus_delta(problem.fan, Polarization.anticanonical(problem.fan), m)[0] <= 1


def test_weighted_constant_collapses_bit_exact(p2, blp2):
    for problem in (p2, blp2):
        fan, pol = problem.fan, problem.polarization
        const = WeightFunction.constant()
        assert weighted_delta(fan, pol, 1, const) == torus_delta(fan, pol, 1)[0]
        v = ToricValuation.of(fan.rays[0], is_fan_ray=True)
        assert weighted_vanishing_order(fan, pol, 1, v, const) == expected_vanishing_order(
            fan, pol, 1, v
        )


def test_weighted_delta_continuity_at_zero(p1):
    for xi in (1e-6, -1e-6):
        wd = weighted_delta(p1.fan, p1.polarization, 1, WeightFunction.exponential([xi]))
        assert abs(float(wd) - 1.0) < 1e-5


def test_weighted_at_blp2_soliton_direction(blp2):
    # a weight killing the weighted barycenter pushes the threshold to 1
    from toricstab.soliton import solve_soliton

    sol = solve_soliton(blp2.fan, mode="quantized", m=1)
    wd = weighted_delta(blp2.fan, blp2.polarization, 1, WeightFunction.exponential(sol.xi))
    assert abs(float(wd) - 1.0) < 1e-10


def test_coupled_examples(p1, coupled_p1):
    # k = 1 anticanonical reduces to the plain threshold
    pol = Polarization.anticanonical(p1.fan)
    assert coupled_delta(p1.fan, [(pol, 1)]) == torus_delta(p1.fan, pol, 1)[0]
    # symmetric split: both halves centered
    half = Polarization.from_coeffs([F(1, 2), F(1, 2)])
    assert coupled_delta(p1.fan, [(half, 2), (half, 2)]) == 1
    assert coupled_ke_criterion(p1.fan, [half, half])
    # P_1 = [0,1], P_2 = [-1,0]: barycenters cancel
    pols = coupled_p1.coupled
    for m in (1, 3):
        assert coupled_delta(p1.fan, [(pols[0], m), (pols[1], m)]) == 1
    assert coupled_ke_criterion(p1.fan, pols)
    assert coupled_delta_limit(p1.fan, pols) == 1


def test_coupled_decomposition_guard(p1):
    bad = Polarization.from_coeffs([F(1, 2), F(1, 2)])
    with pytest.raises(DecompositionError):
        coupled_delta(p1.fan, [(bad, 1)])


def test_torus_alpha_examples(p1, p1_o1, p2):
    assert torus_alpha(p1.fan, p1.polarization, 1) == F(1, 2)
    assert torus_alpha(p2.fan, p2.polarization, 1) == F(1, 3)
    assert torus_alpha(p1_o1.fan, p1_o1.polarization, 2) == 1


def test_threshold_report_ties_listed(p2):
    _, witnesses = torus_delta(p2.fan, p2.polarization, 1)
    assert witnesses == (0, 1, 2)


def test_weighted_uses_requested_precision(p1):
    w = WeightFunction.exponential([0.3])
    hi = weighted_delta(p1.fan, p1.polarization, 1, w, prec_bits=160)
    lo = weighted_delta(p1.fan, p1.polarization, 1, w, prec_bits=53)
    assert abs(float(hi) - float(lo)) < 1e-14
    assert isinstance(hi, mpmath.mpf)
