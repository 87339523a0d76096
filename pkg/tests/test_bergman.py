"""Diagonal-mode Bergman laboratory: energies, rays, Ding, balanced metrics."""

import math
from fractions import Fraction

import numpy as np
import pytest

from toricstab import bergman as B
from toricstab.bergman import (
    BalancedOptions,
    DiagonalForm,
    ThresholdProbeOptions,
    balanced_iterate,
    balanced_threshold,
    bump_function,
    d1_distance,
    ding,
    energy,
    fs,
    hilb,
    monge_ampere_energy,
    mt_log_integral,
    mt_slope,
    mt_threshold,
    ray_from_valuation,
    rooftop,
    section_basis,
    sup_potential,
    weighted_energy,
)
from toricstab.thresholds import (
    ToricValuation,
    WeightFunction,
    log_discrepancy,
    weighted_vanishing_order,
)

F = Fraction


@pytest.fixture(scope="module")
def basis_p1(p1):
    return section_basis(p1.fan, p1.polarization, 1)


@pytest.fixture(scope="module")
def basis_p1_o1_m2(p1_o1):
    return section_basis(p1_o1.fan, p1_o1.polarization, 2)


def test_reference_potential_formula(basis_p1):
    x = np.linspace(-4, 4, 9)[:, None]
    expected = np.log(np.exp(-x[:, 0]) + 1.0 + np.exp(x[:, 0]))
    assert np.allclose(basis_p1.psi_ref(x), expected, atol=1e-14)
    assert abs(basis_p1.grad_psi_ref(np.zeros((1, 1)))[0, 0]) < 1e-15


def test_fs_identity_is_zero(basis_p1):
    pot = fs(basis_p1, DiagonalForm.identity(3))
    x = np.linspace(-8, 8, 33)[:, None]
    assert np.max(np.abs(pot.value(x))) == 0.0


def test_energy_examples(basis_p1):
    h = DiagonalForm.identity(3)
    assert energy(basis_p1, h, h) == 0
    k = DiagonalForm.from_log_mu((1, 1, 1))  # mu = (e, e, e)
    assert energy(basis_p1, h, k) == 1
    rng = np.random.default_rng(0)
    for _ in range(50):
        a, b, c = (DiagonalForm.from_log_mu(tuple(rng.normal(size=3))) for _ in range(3))
        coc = energy(basis_p1, a, b) + energy(basis_p1, b, c) - energy(basis_p1, a, c)
        assert abs(coc) < 1e-15
        assert energy(basis_p1, a, b) == -energy(basis_p1, b, a)


def test_d1_examples(basis_p1):
    h = DiagonalForm.identity(3)
    assert d1_distance(basis_p1, h, h) == 0
    k = DiagonalForm.from_log_mu((2, 0, -2))
    assert d1_distance(basis_p1, h, k) == F(4, 3)
    up = DiagonalForm.from_log_mu((1, 2, 0))  # all mu >= 1
    assert rooftop(basis_p1, h, up).log_mu == h.log_mu


def test_d1_metric_axioms(basis_p1):
    rng = np.random.default_rng(1)
    for _ in range(300):
        a, b, c = (DiagonalForm.from_log_mu(tuple(rng.normal(size=3))) for _ in range(3))
        dab = d1_distance(basis_p1, a, b)
        assert dab == d1_distance(basis_p1, b, a)
        assert dab >= 0
        assert d1_distance(basis_p1, a, c) <= dab + d1_distance(basis_p1, b, c) + 1e-12


def test_ray_exponent_tables(basis_p1):
    plus = ray_from_valuation(basis_p1, ToricValuation.of([1]))
    minus = ray_from_valuation(basis_p1, ToricValuation.of([-1]))
    assert plus.lam == (0, 1, 2)
    assert minus.lam == (2, 1, 0)


def test_ray_energy_identity_exact(basis_p1, blp2):
    h = DiagonalForm.identity(basis_p1.d)
    ray = ray_from_valuation(basis_p1, ToricValuation.of([1]))
    for t in (0, 1, 10):
        assert energy(basis_p1, h, ray.form_at(t)) == t * ray.mean_exponent
    basis_b = section_basis(blp2.fan, blp2.polarization, 1)
    hb = DiagonalForm.identity(basis_b.d)
    for v in blp2.fan.rays:
        rayb = ray_from_valuation(basis_b, ToricValuation.of(v))
        for t in (0, 1, 10):
            assert energy(basis_b, hb, rayb.form_at(t)) == t * rayb.mean_exponent


def test_sup_potential(basis_p1):
    out = sup_potential(basis_p1, DiagonalForm.identity(3))
    assert out["sup"] == 0.0
    spread = DiagonalForm.from_log_mu((0.0, 0.0, 10.0))
    out = sup_potential(basis_p1, spread)
    assert abs(out["sup"] - 10.0) <= math.log(3.0)
    shifted = spread.scaled(3.0)  # mu scaled by e^{mc}, c = 3
    out2 = sup_potential(basis_p1, shifted)
    assert out2["sup"] == pytest.approx(out["sup"] + 3.0, abs=1e-12)


def test_sup_vs_max_mu_bound(basis_p1):
    rng = np.random.default_rng(2)
    bound = math.log(basis_p1.d) / basis_p1.m
    for _ in range(200):
        form = DiagonalForm.from_log_mu(tuple(rng.normal(scale=3.0, size=3)))
        out = sup_potential(basis_p1, form)
        assert abs(out["sup"] - out["log_max_mu_over_m"]) <= bound + 1e-12


def test_mt_slopes_p1(basis_p1):
    ray = ray_from_valuation(basis_p1, ToricValuation.of([1]))
    for delta, t_max, tol in ((1.0, 40.0, 1e-6), (2.0, 40.0, 1e-6), (0.5, 3000.0, 1e-3)):
        fit = mt_slope(basis_p1, ray, delta, t_max=t_max)
        assert fit.slope == pytest.approx(delta * 1.0 - 1.0, abs=tol)


def test_mt_bracket_integral_bounded_below(basis_p1):
    ray = ray_from_valuation(basis_p1, ToricValuation.of([1]))
    for delta in (0.5, 1.0, 2.0):
        vals = [
            B.mt_bracket_log_integral(basis_p1, ray, delta, t) for t in np.linspace(0, 40, 21)
        ]
        early = min(v for v, t in zip(vals, np.linspace(0, 40, 21)) if t <= 5.0)
        assert min(vals) > -math.inf
        assert min(vals) >= early - math.log(10.0)


def test_mt_threshold_p1(basis_p1):
    ray = ray_from_valuation(basis_p1, ToricValuation.of([1]))
    thr = mt_threshold(basis_p1, ray)
    assert thr == pytest.approx(1.0, rel=5e-3)


def test_mt_h_independence(basis_p1):
    # shifting the reference form shifts log I by a constant, not the slope
    ray = ray_from_valuation(basis_p1, ToricValuation.of([1]))
    base = mt_slope(basis_p1, ray, 2.0, t_max=40.0).slope
    moved = B.GeodesicRay(
        basis=basis_p1,
        base=DiagonalForm.from_log_mu((0.3, -0.1, 0.2)),
        lam=ray.lam,
        valuation=ray.valuation,
    )
    assert mt_slope(basis_p1, moved, 2.0, t_max=40.0).slope == pytest.approx(base, abs=1e-5)


def test_ding_translation_invariance(basis_p1):
    form = DiagonalForm.from_log_mu((0.2, -0.4, 0.1))
    for delta in (0.5, 1.0, 2.0):
        f0 = ding(basis_p1, form, delta=delta)
        f5 = ding(basis_p1, form.scaled(5.0 * basis_p1.m), delta=delta)  # phi + 5
        assert f5 - f0 == pytest.approx(0.0, abs=1e-9)


def test_ding_ray_slope(basis_p1):
    # measured slope along the ray equals S (A/(delta S) - 1) = -1/2 at delta=2
    ray = ray_from_valuation(basis_p1, ToricValuation.of([1]))
    ts = np.linspace(20.0, 40.0, 9)
    vals = [ding(basis_p1, ray.form_at(t), delta=2.0) for t in ts]
    slope = np.polyfit(ts, vals, 1)[0]
    assert slope == pytest.approx(-0.5, abs=1e-3)


def test_hilb_scaling_identity(basis_p1):
    form = DiagonalForm.from_log_mu((0.1, 0.5, -0.3))
    out = hilb(basis_p1, fs(basis_p1, form), delta=1.0, level=1)
    shifted = hilb(basis_p1, fs(basis_p1, form.scaled(2.0)), delta=1.0, level=1)
    # hilb(phi + c) = e^{-mc} hilb(phi) as forms: FS weights shift by +mc
    diff = shifted.as_float() - out.as_float()
    assert np.allclose(diff, 2.0, atol=1e-9)


def test_hilb_preserves_symmetry(basis_p1):
    sym = DiagonalForm.from_log_mu((0.4, 0.0, 0.4))
    out = hilb(basis_p1, fs(basis_p1, sym), delta=0.7, level=1)
    assert out.log_mu[0] == pytest.approx(out.log_mu[2], abs=1e-13)


def test_balanced_iterate_converges_subcritical(basis_p1):
    run = balanced_iterate(basis_p1, 0.5, opts=BalancedOptions(tol=1e-11))
    assert run.status == "Converged"
    assert run.residual < 1e-8
    assert run.form.log_mu[0] == pytest.approx(run.form.log_mu[2], abs=1e-10)
    f_vals = [f for _, _, f in run.trace]
    assert all(b <= a + 1e-10 for a, b in zip(f_vals, f_vals[1:]))


def test_balanced_iterate_diverges_supercritical(basis_p1):
    ray = ray_from_valuation(basis_p1, ToricValuation.of([1]))
    start = DiagonalForm.from_log_mu(tuple(float(60 * l) for l in ray.lam))
    run = balanced_iterate(
        basis_p1,
        1.5,
        h0=start,
        opts=BalancedOptions(f_floor=-100.0, escape_gauge=500.0),
    )
    assert run.status == "Diverged"


def test_balanced_threshold_p1(basis_p1):
    probe = balanced_threshold(basis_p1)
    assert not probe.inconclusive
    assert probe.threshold == pytest.approx(1.0, abs=5e-2)


def test_weighted_energy_reduces_and_matches_ray(basis_p1):
    h = DiagonalForm.identity(3)
    k = DiagonalForm.from_log_mu((0.3, -0.2, 0.6))
    assert weighted_energy(basis_p1, h, k, WeightFunction.constant()) == pytest.approx(
        float(energy(basis_p1, h, k)), abs=0
    )
    w = WeightFunction.exponential([0.7])
    val = ToricValuation.of([1])
    ray = ray_from_valuation(basis_p1, val)
    s_g = float(weighted_vanishing_order(basis_p1.fan, basis_p1.pol, 1, val, w))
    for t in (1.0, 7.0):
        eg = weighted_energy(basis_p1, h, ray.form_at(t), w)
        assert eg == pytest.approx(t * s_g, abs=1e-12)


def test_weighted_energy_constant_potential(basis_p1):
    # mu_u = c for all u gives E^g = (log c)/m independently of g
    h = DiagonalForm.identity(3)
    k = DiagonalForm.from_log_mu((1.7, 1.7, 1.7))
    for w in (WeightFunction.constant(), WeightFunction.exponential([0.4])):
        assert weighted_energy(basis_p1, h, k, w) == pytest.approx(1.7, abs=1e-14)


def test_monge_ampere_energy_constants(basis_p1):
    form = DiagonalForm.from_log_mu((0.2, -0.1, 0.4))
    e0 = monge_ampere_energy(basis_p1, form)
    ec = monge_ampere_energy(basis_p1, form.scaled(basis_p1.m * 2.5))
    assert ec - e0 == pytest.approx(2.5, abs=1e-9)
    const = DiagonalForm.from_log_mu((1.2, 1.2, 1.2))  # phi == 1.2
    assert monge_ampere_energy(basis_p1, const) == pytest.approx(1.2, abs=1e-10)


def test_balanced_threshold_m2(basis_p1_o1_m2):
    probe = balanced_threshold(
        basis_p1_o1_m2, popts=ThresholdProbeOptions(bracket=(1.0, 3.0), width=0.05)
    )
    assert not probe.inconclusive
    assert probe.threshold == pytest.approx(2.0, abs=1e-1)
