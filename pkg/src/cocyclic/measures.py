"""Atomic singular measures on the unit circle and their moments."""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import os
from collections.abc import Iterable, Mapping, Sequence
from fractions import Fraction

import numpy as np
import numpy.typing as npt

from cocyclic.errors import AtomAtOne, ConfigError, DuplicateAtom, InputError

log = logging.getLogger("cocyclic.measures")

#: Smallest admissible distance of an angle from 0 and 2π.
MIN_ANGLE: float = 1e-9


@dataclasses.dataclass(frozen=True)
class AtomicMeasure:
    """Finite positive combination of point masses on the circle.

    Parameters
    ----------
    angles
        Atom angles in (0, 2π), sorted ascending. The atom sits at exp(i·angle).
    weights
        Strictly positive masses, aligned with `angles`.

    """

    angles: tuple[float, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        if len(self.angles) == 0:
            raise InputError("A measure needs at least one atom.")
        if len(self.angles) != len(self.weights):
            raise InputError("Angles and weights must have the same length.")
        if not all(math.isfinite(a) for a in self.angles):
            raise InputError(f"Angles must be finite: {self.angles}")
        for a in self.angles:
            if a < MIN_ANGLE or a > 2 * math.pi - MIN_ANGLE:
                raise AtomAtOne(f"Atom at angle {a} lies on the point 1.")
        if any(w <= 0 or not math.isfinite(w) for w in self.weights):
            raise InputError(f"Weights must be positive and finite: {self.weights}")
        if any(b <= a for a, b in zip(self.angles, self.angles[1:], strict=False)):
            raise DuplicateAtom(f"Angles must be distinct: {self.angles}")

    @property
    def size(self) -> int:
        return len(self.angles)

    @property
    def points(self) -> npt.NDArray[np.complex128]:
        return np.exp(1j * np.asarray(self.angles))

    @property
    def masses(self) -> npt.NDArray[np.float64]:
        return np.asarray(self.weights, dtype=np.float64)

    @property
    def total_mass(self) -> float:
        return float(sum(self.weights))

    def scaled(self, c: float) -> AtomicMeasure:
        return AtomicMeasure(self.angles, tuple(c * w for w in self.weights))

    def to_dict(self) -> dict:
        return {
            "atoms": [
                {"angle_turns": a / (2 * math.pi), "weight": w}
                for a, w in zip(self.angles, self.weights, strict=True)
            ]
        }


def make_measure(pairs: Iterable[tuple[float, float]]) -> AtomicMeasure:
    """Validate (angle, weight) pairs and return the measure sorted by angle."""
    pairs = sorted((float(a), float(w)) for a, w in pairs)
    if not pairs:
        raise InputError("A measure needs at least one atom.")
    angles, weights = zip(*pairs, strict=True)
    return AtomicMeasure(tuple(angles), tuple(weights))


def moment(mu: AtomicMeasure, q: float) -> float:
    r"""Return :math:`\sum_j \mu_j / |1 - \xi_j|^q`."""
    if q <= 0:
        raise InputError(f"Moment exponent must be positive, got {q}.")
    dist = np.abs(1 - mu.points)
    return float(np.sum(mu.masses / dist**q))


def rescale_to_budget(mu: AtomicMeasure, q: float, budget: float) -> AtomicMeasure:
    """Scale `mu` down (never up) until its q-moment is at most `budget`."""
    if budget <= 0:
        raise InputError(f"Budget must be positive, got {budget}.")
    c = min(1.0, budget / moment(mu, q))
    if c == 1.0:
        return mu
    log.debug(f"Rescaling measure by {c:.6g} to meet moment budget {budget:.6g}")
    return mu.scaled(c)


def nu_mass(mu: AtomicMeasure) -> float:
    """Total mass of the measure carried over to the real line.

    An atom at exp(iα) lands at x = −cot(α/2) with mass π(1 + x²)·μ_j, which sums
    to 4π times the second moment.
    """
    return 4 * math.pi * moment(mu, 2)


@dataclasses.dataclass(frozen=True)
class MultiMeasureSystem:
    components: tuple[AtomicMeasure, ...]
    q: float
    budget: float

    def __post_init__(self):
        if not self.components:
            raise InputError("A system needs at least one measure.")
        if not self.q > 3:
            raise InputError(f"Moment exponent q must exceed 3, got {self.q}.")
        total = self.moment_sum()
        if total > self.budget * (1 + 1e-12):
            raise InputError(
                f"Moment sum {total:.6g} exceeds the budget {self.budget:.6g}."
            )

    def moment_sum(self) -> float:
        return sum(moment(mu, self.q) ** (1 / self.q) for mu in self.components)


def make_system(
    measures: Sequence[AtomicMeasure], q: float, budget: float
) -> MultiMeasureSystem:
    """Rescale a list of measures into a system obeying the moment budget.

    The k-th measure (counting from 0) may keep a q-moment of at most c·4^{-k},
    with c chosen so that the q-th roots of these caps add up to the budget.
    Measures already under their cap are left alone.
    """
    if not measures:
        raise InputError("make_system needs a nonempty list of measures.")
    if not q > 3:
        raise InputError(f"Moment exponent q must exceed 3, got {q}.")
    if budget <= 0:
        raise InputError(f"Budget must be positive, got {budget}.")
    roots = sum(4.0 ** (-k / q) for k in range(len(measures)))
    c = (budget / roots) ** q
    components = [
        rescale_to_budget(mu, q, c * 4.0**-k) for k, mu in enumerate(measures)
    ]
    return MultiMeasureSystem(tuple(components), q, budget)


def _parse_turns(value: float | str) -> float:
    if isinstance(value, str):
        try:
            turns = Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as e:
            raise ConfigError(f"Cannot read angle_turns '{value}'.") from e
        return float(turns * 2) * math.pi
    return 2 * math.pi * float(value)


def measure_from_dict(data: Mapping) -> AtomicMeasure:
    """Build a measure from ``{"atoms": [{"angle_turns": ..., "weight": ...}]}``."""
    try:
        atoms = data["atoms"]
        pairs = [(_parse_turns(a["angle_turns"]), float(a["weight"])) for a in atoms]
    except (KeyError, TypeError) as e:
        raise ConfigError(f"Malformed measure description: {e!r}") from e
    return make_measure(pairs)


FIXTURES: dict[str, list[tuple[float, float]]] = {
    "delta_minus_one": [(math.pi, 1.0)],
    "pair_plus_minus_i": [(math.pi / 2, 0.5), (3 * math.pi / 2, 0.5)],
    "three_atom": [(2 * math.pi / 3, 0.2), (math.pi, 0.5), (3 * math.pi / 2, 0.3)],
}


def fixture(name: str) -> AtomicMeasure:
    try:
        return make_measure(FIXTURES[name])
    except KeyError as e:
        raise ConfigError(f"No fixture measure named '{name}'.") from e


def load_measure(source: str | os.PathLike) -> AtomicMeasure:
    """Resolve a fixture name or read a JSON measure file."""
    if str(source) in FIXTURES:
        return fixture(str(source))
    with open(source, encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"Malformed measure file {source}: {e}") from e
    return measure_from_dict(data)
