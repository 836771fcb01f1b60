"""Tolerances and experiment configuration."""

from __future__ import annotations

import dataclasses
import logging
import os
from collections.abc import Mapping, Sequence

import tomlkit

from cocyclic.errors import ConfigError

log = logging.getLogger("cocyclic.config")


@dataclasses.dataclass(frozen=True)
class Tolerances:
    """Numerical thresholds used by the constructions and the verify battery.

    Every field can be overridden from the ``[tolerances]`` table of an experiment
    file or with ``--tol key=val,...`` on the command line.
    """

    boundary: float = 1e-10  #: |θ| = 1 on the circle
    disc: float = 1e-10  #: |θ| ≤ 1 inside
    herglotz: float = 1e-9
    atom_value: float = 1e-8  #: θ(ξ_j) = 1
    gram: float = 1e-8  #: ε(N) of the Clark frame
    eigen: float = 1e-8
    spectrum_gap: float = 1e-6  #: distance of the Clark spectrum from 1
    intertwining: float = 1e-7
    isometry: float = 1e-7
    multi_unitarity: float = 1e-6
    multi_block: float = 1e-6
    backward: float = 1e-10
    wold_angle: float = 1e-4
    wold_shift: float = 1e-7
    rank: float = 1e-8
    commutation: float = 1e-6
    semigroup_V: float = 1e-6
    semigroup_Vtilde: float = 1e-5
    dilation: float = 1e-8
    cocycle: float = 1e-4
    defect: float = 1e-5
    model_space: float = 1e-6  #: relative, on top of the truncation tail
    converged: float = 0.02
    diverging: float = 0.10
    probe_spread: float = 4.0

    def replace(self, overrides: Mapping[str, float]) -> Tolerances:
        known = {f.name for f in dataclasses.fields(self)}
        unknown = sorted(set(overrides) - known)
        if unknown:
            raise ConfigError(f"Unknown tolerance key(s): {', '.join(unknown)}")
        return dataclasses.replace(
            self, **{k: float(v) for k, v in overrides.items()}
        )


def parse_tol_overrides(text: str) -> dict[str, float]:
    """Parse ``"key=val,key=val"`` into a dictionary."""
    out: dict[str, float] = {}
    for item in filter(None, (s.strip() for s in text.split(","))):
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"Malformed tolerance override '{item}'.")
        try:
            out[key.strip()] = float(value)
        except ValueError as e:
            raise ConfigError(f"Tolerance '{key}' is not a number: {value}") from e
    return out


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    measures: tuple[str, ...] = ("delta_minus_one",)
    q: float = 4.0
    t_list: tuple[float, ...] = (0.25, 0.5, 1.0)
    p_list: tuple[float, ...] = (1.0, 2.0)
    N_list: tuple[int, ...] = (512,)
    K: int = 512
    nodes: int = 16
    budget: float = 1.0
    degree_cap: int = 64
    tolerances: Tolerances = dataclasses.field(default_factory=Tolerances)
    output: str | None = None
    fmt: str = "json"
    jobs: int = 1
    timestamp: bool = True
    seed: int = 0

    def validate(self) -> ExperimentConfig:
        if not self.measures:
            raise ConfigError("At least one measure must be given.")
        if not self.q > 3:
            raise ConfigError(f"Moment exponent q must exceed 3, got {self.q}.")
        for name in ("t_list", "p_list", "N_list"):
            if len(getattr(self, name)) == 0:
                raise ConfigError(f"{name} must not be empty.")
        if any(t < 0 for t in self.t_list):
            raise ConfigError("Times must be nonnegative.")
        if any(p <= 0 for p in self.p_list):
            raise ConfigError("Schatten exponents must be positive.")
        Ns = self.N_list
        if Ns[0] < 1 or any(b <= a for a, b in zip(Ns, Ns[1:], strict=False)):
            raise ConfigError(f"N_list must be positive and strictly ascending: {Ns}")
        if self.K < 8:
            raise ConfigError(f"Window K must be at least 8, got {self.K}.")
        if self.nodes < 4:
            raise ConfigError(f"At least 4 quadrature nodes needed, got {self.nodes}.")
        if self.jobs < 1:
            raise ConfigError("jobs must be positive.")
        if self.fmt not in ("csv", "json"):
            raise ConfigError(f"Unknown output format '{self.fmt}'.")
        return self

    def update(self, **changes) -> ExperimentConfig:
        """Return a copy with the non-None entries of `changes` applied."""
        changes = {k: v for k, v in changes.items() if v is not None}
        return dataclasses.replace(self, **changes)


_SEQUENCE_FIELDS = {"measures": str, "t_list": float, "p_list": float, "N_list": int}
_SCALAR_FIELDS = {
    "q": float,
    "K": int,
    "nodes": int,
    "budget": float,
    "degree_cap": int,
    "output": str,
    "fmt": str,
    "jobs": int,
    "timestamp": bool,
    "seed": int,
}


def _as_plain(value):
    # tomlkit items wrap python values
    return value.unwrap() if hasattr(value, "unwrap") else value


def config_from_mapping(data: Mapping) -> ExperimentConfig:
    data = _as_plain(data)
    kwargs: dict = {}
    experiment = data.get("experiment", data)
    for key, value in experiment.items():
        if key == "tolerances":
            continue
        if key in _SEQUENCE_FIELDS:
            if isinstance(value, str | int | float):
                value = [value]
            if not isinstance(value, Sequence):
                raise ConfigError(f"{key} must be a list.")
            kwargs[key] = tuple(_SEQUENCE_FIELDS[key](v) for v in value)
        elif key in _SCALAR_FIELDS:
            kwargs[key] = _SCALAR_FIELDS[key](value)
        else:
            raise ConfigError(f"Unknown experiment key '{key}'.")
    tol = data.get("tolerances", experiment.get("tolerances", {}))
    kwargs["tolerances"] = Tolerances().replace(tol)
    return ExperimentConfig(**kwargs)


def load_experiment(path: str | os.PathLike) -> ExperimentConfig:
    """Read an experiment TOML file.

    The file may either hold the fields at the top level or under an
    ``[experiment]`` table; thresholds go in ``[tolerances]``.
    """
    try:
        with open(path, encoding="utf-8") as f:
            data = tomlkit.load(f)
    except tomlkit.exceptions.ParseError as e:
        raise ConfigError(f"Malformed experiment file {path}: {e}") from e
    log.debug(f"Loaded experiment file {path}")
    return config_from_mapping(data)
