"""Run configuration: TOML schema, validation and object builders.

A configuration file is a set of flat tables::

    [run]        preset, seed, out_dir
    [problem]    alpha, T, x0, lipschitz_L
    [fem]        a, b, n_cells, D, q, c0, bc, robin_alpha0
    [wiener]     n_modes, decay
    [jumps]      intensity, marks, low, high, std
    [scheme]     steps, stability_ceiling
    [experiment] beta, samples, time_ladder, time_reference,
                 space_ladder, space_reference, space_steps

Every key is optional; missing values come from the preset. Unknown tables
or keys are rejected.
"""

from __future__ import annotations

import dataclasses
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

from .errors import ConfigParseError, ValidationError
from .fem import BoundaryCondition, CoefficientField, FemOperator, Mesh1D, assemble
from .noise import JumpSpec, MarkLaw, QWienerSpec, TimeGrid
from .presets import COEFFICIENTS, INITIAL_DATA, LIPSCHITZ, PRESETS, profile_parabola
from .scheme import ProblemSpec

# table -> {toml key: settings field}
SCHEMA: dict[str, dict[str, str]] = {
    "run": {"preset": "preset", "seed": "seed", "out_dir": "out_dir"},
    "problem": {"alpha": "alpha", "T": "T", "x0": "x0", "lipschitz_L": "lipschitz_L"},
    "fem": {"a": "a", "b": "b", "n_cells": "n_cells", "D": "D", "q": "q", "c0": "c0",
            "bc": "bc", "robin_alpha0": "robin_alpha0"},
    "wiener": {"n_modes": "n_modes", "decay": "decay"},
    "jumps": {"intensity": "intensity", "marks": "marks", "low": "mark_low",
              "high": "mark_high", "std": "mark_std"},
    "scheme": {"steps": "steps", "stability_ceiling": "stability_ceiling"},
    "experiment": {"beta": "beta", "samples": "samples", "time_ladder": "time_ladder",
                   "time_reference": "time_reference", "space_ladder": "space_ladder",
                   "space_reference": "space_reference", "space_steps": "space_steps"},
}


@dataclass(frozen=True)
class RunSettings:
    preset: str
    alpha: float
    T: float
    x0: str
    lipschitz_L: float
    a: float
    b: float
    n_cells: int
    D: float
    q: float
    c0: float | None
    bc: str
    robin_alpha0: float
    n_modes: int
    decay: float
    intensity: float
    marks: str
    mark_low: float
    mark_high: float
    mark_std: float
    steps: int
    stability_ceiling: float
    seed: int
    beta: float
    samples: int
    time_ladder: tuple[int, ...]
    time_reference: int
    space_ladder: tuple[int, ...]
    space_reference: int | str
    space_steps: int
    out_dir: str

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["time_ladder"] = list(self.time_ladder)
        d["space_ladder"] = list(self.space_ladder)
        return d

    def replace(self, **changes) -> "RunSettings":
        return validate(dataclasses.replace(self, **changes))

    # builders

    def mesh(self, n_cells: int | None = None) -> Mesh1D:
        return Mesh1D.uniform(self.a, self.b, self.n_cells if n_cells is None else n_cells)

    def operator(self, n_cells: int | None = None) -> FemOperator:
        bc = BoundaryCondition(self.bc, self.robin_alpha0 if self.bc == "robin" else 0.0)
        return assemble(self.mesh(n_cells), CoefficientField(self.D, self.q, self.c0), bc)

    def problem(self) -> ProblemSpec:
        f, b, g = COEFFICIENTS[self.preset]
        return ProblemSpec(self.alpha, self.T, INITIAL_DATA[self.x0], f, b, g,
                           self.lipschitz_L, self.preset)

    def qspec(self) -> QWienerSpec:
        return QWienerSpec(self.n_modes, self.decay, (self.a, self.b))

    def jspec(self) -> JumpSpec:
        law = MarkLaw(self.marks, self.mark_low, self.mark_high, self.mark_std)
        return JumpSpec(self.intensity, law, profile_parabola)

    def grid(self, steps: int | None = None) -> TimeGrid:
        return TimeGrid(self.T, self.steps if steps is None else steps)


_INT_FIELDS = {"n_cells", "n_modes", "steps", "seed", "samples", "time_reference", "space_steps"}
_STR_FIELDS = {"preset", "x0", "bc", "marks", "out_dir"}


def _check_type(name: str, value: Any) -> Any:
    if name in ("time_ladder", "space_ladder"):
        if not isinstance(value, (list, tuple)) or not all(
            isinstance(v, int) and not isinstance(v, bool) for v in value
        ):
            raise ValidationError(f"{name} must be a list of integers")
        return tuple(value)
    if name == "space_reference":
        if value == "analytic" or (isinstance(value, int) and not isinstance(value, bool)):
            return value
        raise ValidationError("space_reference must be an integer or \"analytic\"")
    if name == "c0" and value is None:
        return None
    if name in _INT_FIELDS:
        if not isinstance(value, int) or isinstance(value, bool):
            raise ValidationError(f"{name} must be an integer, got {value!r}")
        return value
    if name in _STR_FIELDS:
        if not isinstance(value, str):
            raise ValidationError(f"{name} must be a string, got {value!r}")
        return value
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"{name} must be a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ValidationError(f"{name} must be finite")
    return value


def _dyadic_ladder(name: str, ladder: tuple[int, ...], reference: int | None) -> None:
    if not ladder:
        raise ValidationError(f"{name} must not be empty")
    if any(v < 1 for v in ladder):
        raise ValidationError(f"{name} entries must be positive")
    if any(b <= a for a, b in zip(ladder, ladder[1:])):
        raise ValidationError(f"{name} resolutions must be strictly decreasing")
    if reference is not None:
        if reference < ladder[-1]:
            raise ValidationError(f"{name} reference must be at least as fine as every entry")
        if any(reference % v for v in ladder):
            raise ValidationError(f"{name} entries must divide the reference resolution")


def validate(s: RunSettings) -> RunSettings:
    if s.preset not in PRESETS:
        raise ValidationError(f"unknown preset {s.preset!r}; choose from {sorted(PRESETS)}")
    if s.x0 not in INITIAL_DATA:
        raise ValidationError(f"unknown initial data {s.x0!r}; choose from {sorted(INITIAL_DATA)}")
    if s.bc not in ("dirichlet", "neumann", "robin"):
        raise ValidationError(f"unknown boundary condition {s.bc!r}")
    if s.marks not in ("uniform", "normal"):
        raise ValidationError(f"unknown mark law {s.marks!r}")
    if not (0 <= s.seed < 2**64):
        raise ValidationError("seed must be an unsigned 64-bit integer")
    if not (0.0 <= s.beta <= 2.0):
        raise ValidationError("beta must lie in [0, 2]")
    for name in ("n_cells", "steps", "samples", "space_steps"):
        if getattr(s, name) < 1:
            raise ValidationError(f"{name} must be positive")
    _dyadic_ladder("time_ladder", s.time_ladder, s.time_reference)
    ref = None if s.space_reference == "analytic" else s.space_reference
    _dyadic_ladder("space_ladder", s.space_ladder, ref)
    # constructing the domain objects runs their own checks
    s.problem()
    s.qspec()
    s.jspec()
    s.mesh()
    CoefficientField(s.D, s.q, s.c0).resolve_shift(s.mesh())
    BoundaryCondition(s.bc, s.robin_alpha0 if s.bc == "robin" else 0.0)
    return s


def settings_from_dict(data: dict[str, Any], *, preset: str | None = None) -> RunSettings:
    """Merge a parsed TOML document onto preset defaults and validate."""
    if not isinstance(data, dict):
        raise ValidationError("configuration must be a table")
    flat: dict[str, Any] = {}
    for table, body in data.items():
        if table not in SCHEMA:
            raise ValidationError(f"unknown table [{table}]")
        if not isinstance(body, dict):
            raise ValidationError(f"[{table}] must be a table")
        for key, value in body.items():
            if key not in SCHEMA[table]:
                raise ValidationError(f"unknown key {key!r} in [{table}]")
            flat[SCHEMA[table][key]] = value
    name = preset or flat.get("preset", "P1")
    if name not in PRESETS:
        raise ValidationError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    merged = {**PRESETS[name], "preset": name, "lipschitz_L": LIPSCHITZ}
    if COEFFICIENTS[name] == (None, None, None):
        merged["lipschitz_L"] = 0.0
    for key, value in flat.items():
        merged[key] = value
    merged["preset"] = name
    typed = {k: _check_type(k, v) for k, v in merged.items()}
    return validate(RunSettings(**typed))


def load_config(path: str | Path | None, *, preset: str | None = None) -> RunSettings:
    """Parse and validate a TOML configuration (``None`` gives the preset defaults)."""
    if path is None:
        return settings_from_dict({}, preset=preset)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigParseError(f"cannot read {path}: {exc.strerror or exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigParseError(f"{path}: {exc}") from exc
    return settings_from_dict(data, preset=preset)
