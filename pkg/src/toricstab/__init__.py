"""Stability thresholds and quantized balanced-metric experiments on toric Fanos."""

from .toric import (
    Fan,
    Polarization,
    MomentPolytope,
    Wall,
    make_fan,
    validate_fan,
    polytope,
    lattice_points,
    quantized_barycenter,
    continuous_barycenter,
    polytope_volume,
    walls,
    is_nef,
    nef_threshold,
)
from .thresholds import (
    ToricValuation,
    WeightFunction,
    ThresholdReport,
    support_value,
    log_discrepancy,
    section_vanishing_order,
    expected_vanishing_order,
    max_vanishing_order,
    torus_delta,
    delta_bracket,
    delta_limit,
    weighted_vanishing_order,
    weighted_delta,
    coupled_delta,
    coupled_ke_criterion,
    torus_alpha,
)

__version__ = "0.1.0"
