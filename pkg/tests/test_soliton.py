"""Soliton vector solves: Newton on the log-partition objective."""

import math

import numpy as np
import pytest

from toricstab.soliton import (
    SolitonError,
    continuous_objective,
    log_partition,
    solve_soliton,
    soliton_weighted_delta,
)
from toricstab.toric import (
    Polarization,
    continuous_barycenter,
    lattice_points,
    polytope,
    polytope_volume,
    quantized_barycenter,
)

F_TOL = 1e-12


def test_gradient_at_zero_is_barycenter(p1, blp2):
    _, grad, _ = log_partition(p1.fan, p1.polarization, [0.0], mode="quantized", m=1)
    assert grad[0] == 0.0
    _, grad, _ = log_partition(blp2.fan, blp2.polarization, [0.0, 0.0], mode="quantized", m=1)
    b = quantized_barycenter(lattice_points(polytope(blp2.fan, blp2.polarization), 1), 1)
    assert np.allclose(grad, [float(c) for c in b], atol=1e-15)


def test_continuous_gradient_matches_centroid(p1, blp2):
    _, grad, _ = log_partition(p1.fan, p1.polarization, [0.0], mode="continuous")
    assert abs(grad[0]) < 1e-14
    _, grad, _ = log_partition(blp2.fan, blp2.polarization, [0.0, 0.0], mode="continuous")
    b = continuous_barycenter(polytope(blp2.fan, blp2.polarization))
    assert np.allclose(grad, [float(c) for c in b], atol=1e-12)


def test_partition_mass_is_volume(p2, blp2, p3):
    for problem in (p2, blp2, p3):
        poly = polytope(problem.fan, problem.polarization)
        value, _, _ = log_partition(problem.fan, problem.polarization, [0.0] * problem.fan.dim, mode="continuous")
        assert abs(value - math.log(float(polytope_volume(poly)))) < 1e-10


def test_symmetric_solves_return_zero_exactly(p1, p2, p3, p1xp1):
    for problem in (p1, p2, p3, p1xp1):
        for mode in ("quantized", "continuous"):
            sol = solve_soliton(problem.fan, mode=mode, m=2)
            assert sol.xi == tuple([0.0] * problem.fan.dim)
            assert sol.iterations == 0


def test_blp2_continuous_soliton(blp2):
    sol = solve_soliton(blp2.fan, mode="continuous")
    assert sol.residual < F_TOL
    assert sol.iterations <= 25
    assert sol.xi[0] == pytest.approx(sol.xi[1], abs=1e-13)  # swap symmetry
    assert sol.xi[0] < 0


def test_blp2_quantized_converges_to_continuous(blp2):
    cont = solve_soliton(blp2.fan, mode="continuous")
    errs = []
    for m in (5, 10, 20, 50):
        sol = solve_soliton(blp2.fan, mode="quantized", m=m)
        errs.append(abs(sol.xi[0] - cont.xi[0]))
    assert all(b < a for a, b in zip(errs, errs[1:]))  # decreasing trend
    assert errs[-1] < 1e-2


def test_weighted_delta_at_soliton(p1, p2, blp2, p1xp1):
    for problem, tol in ((blp2, 1e-10), (p1, 1e-12), (p2, 1e-11), (p1xp1, 1e-11)):
        wd, sol = soliton_weighted_delta(problem.fan, 1)
        assert abs(float(wd) - 1.0) < max(tol, 20 * max(sol.residual, 1e-16))


def test_no_interior_origin_raises(p1):
    shifted = Polarization.from_coeffs([0, 1])  # P = [0, 1], origin on boundary
    with pytest.raises(SolitonError):
        solve_soliton(p1.fan, shifted, mode="continuous")


def test_continuous_objective_refinement_consistency(blp2):
    poly = polytope(blp2.fan, blp2.polarization)
    xi = np.array([0.3, -0.2])
    coarse = continuous_objective(poly, order=12, refine=0)
    fine = continuous_objective(poly, order=12, refine=1)
    assert abs(coarse(xi)[0] - fine(xi)[0]) < 1e-12
