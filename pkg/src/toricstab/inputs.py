"""Fan/polarization input files and provenance hashing.

Wire format (JSON)::

    {
      "dim": 2,
      "rays": [[1, 0], [0, 1], [-1, -1]],
      "max_cones": [[0, 1], [1, 2], [2, 0]],
      "polarization": {"anticanonical": true} | {"coeffs": ["1", "1/2", "0"]}
    }

Coupled inputs replace "polarization" with "coupled": a list of coefficient
blocks, one per line bundle in the tuple.  Rationals serialize as "p/q"
strings; every report echoes the sha256 of the input bytes.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .rationals import parse_rational
from .toric import Fan, FanInputError, Polarization, make_fan


@dataclass(frozen=True)
class ProblemInput:
    fan: Fan
    polarization: Polarization | None
    coupled: tuple[Polarization, ...] | None
    sha256: str


def _parse_polarization(fan: Fan, block) -> Polarization:
    if not isinstance(block, dict):
        raise FanInputError("polarization block must be an object")
    if block.get("anticanonical"):
        return Polarization.anticanonical(fan)
    if "coeffs" in block:
        coeffs = [parse_rational(c) for c in block["coeffs"]]
        if len(coeffs) != len(fan.rays):
            raise FanInputError("polarization needs one coefficient per ray")
        return Polarization(tuple(coeffs))
    raise FanInputError("polarization block needs 'anticanonical' or 'coeffs'")


def parse_problem(text: bytes | str) -> ProblemInput:
    raw = text.encode() if isinstance(text, str) else text
    digest = hashlib.sha256(raw).hexdigest()
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise FanInputError(f"input is not valid JSON: {exc}") from exc
    for key in ("dim", "rays", "max_cones"):
        if key not in data:
            raise FanInputError(f"missing required key '{key}'")
    fan = make_fan(data["dim"], data["rays"], data["max_cones"])
    pol = None
    coupled = None
    if "coupled" in data:
        coupled = tuple(_parse_polarization(fan, block) for block in data["coupled"])
    elif "polarization" in data:
        pol = _parse_polarization(fan, data["polarization"])
    return ProblemInput(fan=fan, polarization=pol, coupled=coupled, sha256=digest)


def load_problem(path: str | Path) -> ProblemInput:
    return parse_problem(Path(path).read_bytes())
