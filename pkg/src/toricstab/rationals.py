"""Exact rational helpers shared by the combinatorial modules.

All exact quantities in this package are `fractions.Fraction` values
(arbitrary-precision, always reduced, positive denominator).  This module
only adds parsing/formatting for the "p/q" wire format and small exact
linear algebra used by cone and vertex computations.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Sequence


def parse_rational(text: str | int) -> Fraction:
    """Parse "p/q" (or a bare integer) into a reduced Fraction."""
    if isinstance(text, int):
        return Fraction(text)
    return Fraction(str(text).strip())


def format_rational(x: Fraction | int) -> str:
    """Serialize a rational as "p/q", or "p" when the denominator is 1."""
    x = Fraction(x)
    if x.denominator == 1:
        return str(x.numerator)
    return f"{x.numerator}/{x.denominator}"


def dot(u: Sequence, v: Sequence):
    return sum(a * b for a, b in zip(u, v))


def mat_det(rows: Sequence[Sequence]) -> Fraction:
    """Determinant by fraction-free expansion; rows of ints or Fractions."""
    n = len(rows)
    if n == 1:
        return Fraction(rows[0][0])
    if n == 2:
        return Fraction(rows[0][0] * rows[1][1] - rows[0][1] * rows[1][0])
    det = Fraction(0)
    for j in range(n):
        minor = [[row[k] for k in range(n) if k != j] for row in rows[1:]]
        term = Fraction(rows[0][j]) * mat_det(minor)
        det += term if j % 2 == 0 else -term
    return det


def solve_linear(rows: Sequence[Sequence], rhs: Sequence) -> tuple[Fraction, ...]:
    """Solve the square system rows @ x = rhs exactly (Cramer).

    Sizes here are <= 3, so Cramer is both exact and fast enough.
    Raises ZeroDivisionError on a singular system.
    """
    n = len(rows)
    det = mat_det(rows)
    if det == 0:
        raise ZeroDivisionError("singular exact linear system")
    out = []
    for j in range(n):
        cols = [[rows[i][k] if k != j else rhs[i] for k in range(n)] for i in range(n)]
        out.append(mat_det(cols) / det)
    return tuple(out)
