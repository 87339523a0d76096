"""Exact toric combinatorics: fans, moment polytopes, lattice points, walls.

Everything in this module is exact rational arithmetic; no floating point
enters any code path here.  Conventions:

* a fan is given by primitive integer ray generators and maximal cones
  (index sets into the ray list); we require smooth complete fans,
* a polarization assigns a rational coefficient ``a_rho`` to each ray and
  cuts out the moment polytope ``{u : <u, v_rho> + a_rho >= 0 for all rho}``,
* enumerations are deterministic (lexicographic) so reports reproduce
  byte-for-byte.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from math import gcd
from typing import Iterable, Sequence

from .rationals import dot, mat_det, solve_linear

IntVec = tuple[int, ...]
FracVec = tuple[Fraction, ...]


class FanInputError(ValueError):
    """Malformed fan data (bad index, ragged dimension, ...)."""


class PolarizationError(ValueError):
    """Coefficients do not define an ample polarization."""


class DivisibilityError(ValueError):
    """m * a_rho is not integral for some ray."""


@dataclass(frozen=True)
class Fan:
    dim: int
    rays: tuple[IntVec, ...]
    max_cones: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if self.dim < 1:
            raise FanInputError("fan dimension must be >= 1")
        if not self.rays:
            raise FanInputError("fan has no rays")
        for v in self.rays:
            if len(v) != self.dim:
                raise FanInputError(f"ray {v} does not have dimension {self.dim}")
        for cone in self.max_cones:
            for i in cone:
                if not 0 <= i < len(self.rays):
                    raise FanInputError(f"cone index {i} out of range")
            if len(set(cone)) != len(cone):
                raise FanInputError(f"cone {cone} repeats a ray")


def make_fan(dim: int, rays: Iterable[Sequence[int]], max_cones: Iterable[Sequence[int]]) -> Fan:
    return Fan(
        dim=dim,
        rays=tuple(tuple(int(c) for c in v) for v in rays),
        max_cones=tuple(tuple(int(i) for i in c) for c in max_cones),
    )


@dataclass(frozen=True)
class Polarization:
    coeffs: tuple[Fraction, ...]

    @staticmethod
    def anticanonical(fan: Fan) -> "Polarization":
        return Polarization(tuple(Fraction(1) for _ in fan.rays))

    @staticmethod
    def from_coeffs(coeffs: Iterable) -> "Polarization":
        return Polarization(tuple(Fraction(c) for c in coeffs))


@dataclass(frozen=True)
class MomentPolytope:
    dim: int
    inequalities: tuple[tuple[IntVec, Fraction], ...]  # <u, v> + a >= 0
    vertices: tuple[FracVec, ...]


@dataclass(frozen=True)
class Wall:
    cones: tuple[int, int]            # indices of the two adjacent maximal cones
    shared_rays: tuple[int, ...]      # the codim-1 ray set (indices)
    off_rays: tuple[int, int]         # the two rays not on the wall (u, u')
    relation: tuple[int, ...]         # b_i with  u + u' + sum b_i w_i = 0


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    failures: tuple[str, ...]


def _primitive(v: IntVec) -> bool:
    g = 0
    for c in v:
        g = gcd(g, abs(c))
    return g == 1


def validate_fan(fan: Fan) -> ValidationReport:
    """Check primitivity, smoothness and completeness of a fan.

    Completeness is checked through walls: every codimension-one face of a
    maximal cone must be shared by exactly two maximal cones sitting on
    opposite sides, and the adjacency graph must be connected.
    """
    failures: list[str] = []
    for i, v in enumerate(fan.rays):
        if all(c == 0 for c in v):
            failures.append(f"zero ray at index {i}")
        elif not _primitive(v):
            failures.append(f"non-primitive ray at index {i}: {list(v)}")
    if not fan.max_cones:
        failures.append("fan has no maximal cones")
    for ci, cone in enumerate(fan.max_cones):
        if len(cone) != fan.dim:
            failures.append(f"cone {ci} is not simplicial full-dimensional")
            continue
        det = mat_det([fan.rays[i] for i in cone])
        if abs(det) != 1:
            failures.append(f"non-smooth cone {ci}: |det| = {abs(det)}")
    if failures:
        return ValidationReport(False, tuple(failures))

    # wall bookkeeping for completeness
    face_count: dict[frozenset, list[int]] = {}
    for ci, cone in enumerate(fan.max_cones):
        for drop in cone:
            face = frozenset(set(cone) - {drop})
            face_count.setdefault(face, []).append(ci)
    adj: dict[int, set[int]] = {i: set() for i in range(len(fan.max_cones))}
    for face, owners in face_count.items():
        if len(owners) != 2:
            failures.append(
                f"fan not complete: face {sorted(face)} lies on {len(owners)} maximal cone(s)"
            )
            continue
        a, b = owners
        adj[a].add(b)
        adj[b].add(a)
        # the two off-wall rays must sit on opposite sides of the wall hyperplane
        normal = _wall_normal(fan, sorted(face))
        ua = next(iter(set(fan.max_cones[a]) - face))
        ub = next(iter(set(fan.max_cones[b]) - face))
        sa, sb = dot(normal, fan.rays[ua]), dot(normal, fan.rays[ub])
        if sa * sb >= 0:
            failures.append(f"cones {a} and {b} do not glue properly along {sorted(face)}")
    if not failures and len(fan.max_cones) > 1:
        seen = {0}
        stack = [0]
        while stack:
            for j in adj[stack.pop()]:
                if j not in seen:
                    seen.add(j)
                    stack.append(j)
        if len(seen) != len(fan.max_cones):
            failures.append("fan support is disconnected")
    return ValidationReport(not failures, tuple(failures))


def _wall_normal(fan: Fan, shared: Sequence[int]) -> FracVec:
    """An exact nonzero covector vanishing on the given rays."""
    n = fan.dim
    rows = [list(fan.rays[i]) for i in shared]
    # try unit-vector completion until the system is solvable
    for j in range(n):
        unit = [Fraction(1) if k == j else Fraction(0) for k in range(n)]
        try:
            sol = solve_linear(rows + [unit], [Fraction(0)] * (n - 1) + [Fraction(1)])
        except ZeroDivisionError:
            continue
        return sol
    raise FanInputError(f"degenerate wall {list(shared)}")


def walls(fan: Fan) -> tuple[Wall, ...]:
    """All walls with their exact relations u + u' + sum b_i w_i = 0."""
    report = validate_fan(fan)
    if not report.ok:
        raise FanInputError("; ".join(report.failures))
    face_owner: dict[frozenset, list[int]] = {}
    for ci, cone in enumerate(fan.max_cones):
        for drop in cone:
            face_owner.setdefault(frozenset(set(cone) - {drop}), []).append(ci)
    out = []
    for face, owners in sorted(face_owner.items(), key=lambda kv: sorted(kv[0])):
        a, b = owners
        shared = tuple(sorted(face))
        ua = next(iter(set(fan.max_cones[a]) - face))
        ub = next(iter(set(fan.max_cones[b]) - face))
        # write  u' = -u + sum alpha_i w_i  in the basis (w_i, u) of cone a
        basis = [fan.rays[i] for i in shared] + [fan.rays[ua]]
        coords = solve_linear([list(col) for col in zip(*basis)], list(fan.rays[ub]))
        alphas, cu = coords[:-1], coords[-1]
        if cu != -1:
            raise FanInputError(f"wall {shared}: off-wall coefficient {cu} != -1")
        relation = []
        for al in alphas:
            if al.denominator != 1:
                raise FanInputError(f"wall {shared}: non-integral relation")
            relation.append(-int(al))
        out.append(Wall(cones=(a, b), shared_rays=shared, off_rays=(ua, ub), relation=tuple(relation)))
    return tuple(out)


@dataclass(frozen=True)
class NefResult:
    nef: bool
    violated_wall: Wall | None
    pairing: Fraction | None


def is_nef(fan: Fan, coeffs: Sequence) -> NefResult:
    """Toric Kleiman test: pair the divisor against every wall curve."""
    cs = [Fraction(c) for c in coeffs]
    if len(cs) != len(fan.rays):
        raise FanInputError("one coefficient per ray required")
    for wall in walls(fan):
        u, up = wall.off_rays
        val = cs[u] + cs[up] + sum(b * cs[w] for b, w in zip(wall.relation, wall.shared_rays))
        if val < 0:
            return NefResult(False, wall, val)
    return NefResult(True, None, None)


def nef_threshold(fan: Fan, pol: Polarization) -> Fraction:
    """Largest s with (anticanonical - s * L) nef, exact per-wall root."""
    best: Fraction | None = None
    for wall in walls(fan):
        u, up = wall.off_rays
        idx = [u, up] + list(wall.shared_rays)
        mult = [1, 1] + list(wall.relation)
        const = sum(Fraction(m) for m in mult)
        slope = sum(m * pol.coeffs[i] for m, i in zip(mult, idx))
        # constraint: const - s * slope >= 0
        if slope > 0:
            s = const / slope
            best = s if best is None or s < best else best
    if best is None:
        raise PolarizationError("no wall constrains the nef threshold")
    return best


def polytope(fan: Fan, pol: Polarization) -> MomentPolytope:
    """Moment polytope of (fan, L) with exact vertices.

    Each maximal cone contributes the vertex solving <u, v_rho> = -a_rho over
    its rays; ampleness fails exactly when some vertex violates another
    inequality or the vertex set is not full-dimensional.
    """
    report = validate_fan(fan)
    if not report.ok:
        raise FanInputError("; ".join(report.failures))
    if len(pol.coeffs) != len(fan.rays):
        raise PolarizationError("one coefficient per ray required")
    ineqs = tuple((fan.rays[i], Fraction(pol.coeffs[i])) for i in range(len(fan.rays)))
    verts: list[FracVec] = []
    for cone in fan.max_cones:
        rows = [list(fan.rays[i]) for i in cone]
        rhs = [-pol.coeffs[i] for i in cone]
        v = solve_linear(rows, rhs)
        if v not in verts:
            verts.append(v)
    for v in verts:
        for normal, a in ineqs:
            if dot(v, normal) + a < 0:
                raise PolarizationError(
                    "not a polarization: support function is not convex "
                    f"(vertex {tuple(map(str, v))} violates a facet)"
                )
    # full-dimensional <=> the vertices affinely span
    base = verts[0]
    diffs = [[c - b for c, b in zip(v, base)] for v in verts[1:]]
    if _rank(diffs) != fan.dim:
        raise PolarizationError("not a polarization: moment polytope is degenerate")
    order = sorted(range(len(verts)), key=lambda i: verts[i])
    return MomentPolytope(dim=fan.dim, inequalities=ineqs, vertices=tuple(verts[i] for i in order))


def _rank(rows: list[list[Fraction]]) -> int:
    mat = [row[:] for row in rows]
    rank = 0
    cols = len(mat[0]) if mat else 0
    for col in range(cols):
        piv = next((r for r in range(rank, len(mat)) if mat[r][col] != 0), None)
        if piv is None:
            continue
        mat[rank], mat[piv] = mat[piv], mat[rank]
        for r in range(len(mat)):
            if r != rank and mat[r][col] != 0:
                f = mat[r][col] / mat[rank][col]
                mat[r] = [x - f * y for x, y in zip(mat[r], mat[rank])]
        rank += 1
    return rank


def check_divisibility(poly: MomentPolytope, m: int) -> None:
    if m < 1:
        raise DivisibilityError(f"m must be a positive integer, got {m}")
    for _, a in poly.inequalities:
        if (m * a).denominator != 1:
            raise DivisibilityError(f"m = {m} does not clear the denominator of {a}")


def lattice_points(poly: MomentPolytope, m: int) -> list[IntVec]:
    """All integer points of m * P in lexicographic order.

    Bounding-box iteration over the exact dilated vertex hull with integer
    facet checks; complete by construction at desk scale.
    """
    check_divisibility(poly, m)
    n = poly.dim
    lo = [min((m * v[k]).__ceil__() for v in poly.vertices) for k in range(n)]
    hi = [max((m * v[k]).__floor__() for v in poly.vertices) for k in range(n)]
    facets = [(normal, int(m * a)) for normal, a in poly.inequalities]
    pts: list[IntVec] = []
    for u in itertools.product(*(range(lo[k], hi[k] + 1) for k in range(n))):
        if all(dot(u, normal) + ma >= 0 for normal, ma in facets):
            pts.append(u)
    return pts


def quantized_barycenter(points: Sequence[IntVec], m: int) -> FracVec:
    """Average of lattice points of m*P, rescaled by 1/m; exact."""
    if not points:
        raise ValueError("empty lattice point set")
    d = len(points)
    n = len(points[0])
    return tuple(Fraction(sum(p[k] for p in points), m * d) for k in range(n))


def triangulate(poly: MomentPolytope) -> list[tuple[FracVec, ...]]:
    """Exact triangulation into simplices by coning facets to a base vertex.

    Works by induction on dimension through the face lattice of the
    half-space description; every simplex is a (dim+1)-tuple of vertices.
    """
    return _triangulate_face(poly.dim, list(poly.vertices), poly.inequalities)


def _on_hyperplane(v: FracVec, normal: Sequence, a: Fraction) -> bool:
    return dot(v, normal) + a == 0


def _triangulate_face(dim: int, verts: list[FracVec], ineqs) -> list[tuple[FracVec, ...]]:
    if len(verts) == dim + 1:
        return [tuple(verts)]
    if dim == 1:
        lo = min(verts)
        hi = max(verts)
        return [(lo, hi)]
    base = min(verts)
    simplices: list[tuple[FracVec, ...]] = []
    for normal, a in ineqs:
        on = [v for v in verts if _on_hyperplane(v, normal, a)]
        if base in on or len(on) < dim:
            continue
        diffs = [[c - b for c, b in zip(v, on[0])] for v in on[1:]]
        if _rank(diffs) != dim - 1:
            continue
        sub_ineqs = [(n2, a2) for n2, a2 in ineqs if not all(_on_hyperplane(v, n2, a2) for v in on)]
        for facet_simplex in _triangulate_face(dim - 1, on, sub_ineqs):
            simplices.append((base,) + facet_simplex)
    return simplices


def simplex_volume(simplex: Sequence[FracVec]) -> Fraction:
    base = simplex[0]
    rows = [[c - b for c, b in zip(v, base)] for v in simplex[1:]]
    n = len(rows)
    fact = 1
    for k in range(2, n + 1):
        fact *= k
    return abs(mat_det(rows)) / fact


def polytope_volume(poly: MomentPolytope) -> Fraction:
    """Exact volume via fan triangulation (simplex volume = |det|/n!)."""
    total = Fraction(0)
    for s in triangulate(poly):
        total += simplex_volume(s)
    if total == 0:
        raise PolarizationError("degenerate polytope")
    return total


def continuous_barycenter(poly: MomentPolytope) -> FracVec:
    """Exact centroid: volume-weighted average of simplex centroids."""
    n = poly.dim
    total = Fraction(0)
    acc = [Fraction(0)] * n
    for s in triangulate(poly):
        vol = simplex_volume(s)
        total += vol
        for k in range(n):
            acc[k] += vol * sum(v[k] for v in s) / (n + 1)
    if total == 0:
        raise PolarizationError("degenerate polytope")
    return tuple(a / total for a in acc)


def apply_unimodular(fan: Fan, mat: Sequence[Sequence[int]]) -> Fan:
    """Fan with rays transformed by a GL(n, Z) matrix (rows act on the left)."""
    det = mat_det(mat)
    if abs(det) != 1:
        raise FanInputError("transform is not unimodular")
    rays = tuple(tuple(dot(row, v) for row in mat) for v in fan.rays)
    return Fan(dim=fan.dim, rays=rays, max_cones=fan.max_cones)
