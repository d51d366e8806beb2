"""Q-Wiener increments (truncated Karhunen-Loeve expansion) and compound-Poisson jumps.

Randomness is drawn from counter-based Philox generators keyed by
``(seed, sample_index, stream)``, so a path is a pure function of those
integers regardless of which worker samples it or in which order.

A :class:`NoisePath` keeps the finest-grid increments plus a ``stride``;
coarser views sum blocks of fine increments in left-to-right order, so
coarsening twice is bitwise equal to coarsening once by the product factor.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import ValidationError

__all__ = [
    "QWienerSpec",
    "MarkLaw",
    "JumpSpec",
    "TimeGrid",
    "NoisePath",
    "sample_path",
    "coarsen",
    "compensated_jump_term",
    "write_path_csv",
]

KL_EPSILON = 0.001

# stream ids of the counter-based generator
STREAM_WIENER = 0
STREAM_JUMP_COUNT = 1
STREAM_JUMP_TIME = 2
STREAM_JUMP_MARK = 3


@dataclass(frozen=True)
class QWienerSpec:
    """Covariance eigenpairs ``q_i = i^-(2r+1+eps)`` and ``e_i = sqrt(2/L) sin(i pi (x-a)/L)``."""

    n_modes: int
    decay: float = 1.0
    domain: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self) -> None:
        if int(self.n_modes) != self.n_modes or self.n_modes < 0:
            raise ValidationError("n_modes must be a non-negative integer")
        if not (self.decay >= 0.0 and math.isfinite(self.decay)):
            raise ValidationError("mode decay r must be finite and >= 0 (trace class)")
        a, b = self.domain
        if not b > a:
            raise ValidationError("noise domain must satisfy a < b")

    @property
    def eigenvalues(self) -> np.ndarray:
        i = np.arange(1, self.n_modes + 1, dtype=float)
        return i ** -(2.0 * self.decay + 1.0 + KL_EPSILON)

    @property
    def trace(self) -> float:
        return float(np.sum(self.eigenvalues))

    def eigenfunctions(self, x: np.ndarray) -> np.ndarray:
        """Values ``e_i(x)``, shape ``(n_modes, len(x))``."""
        a, b = self.domain
        length = b - a
        i = np.arange(1, self.n_modes + 1, dtype=float)[:, None]
        return math.sqrt(2.0 / length) * np.sin(i * np.pi * (np.asarray(x)[None, :] - a) / length)


class MarkKind(str, enum.Enum):
    UNIFORM = "uniform"
    NORMAL = "normal"


@dataclass(frozen=True)
class MarkLaw:
    """Uniform marks on ``[low, high]`` or centred normal marks with ``std``."""

    kind: MarkKind = MarkKind.UNIFORM
    low: float = -1.0
    high: float = 1.0
    std: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", MarkKind(self.kind))
        if self.kind is MarkKind.UNIFORM and not (self.high > self.low):
            raise ValidationError("uniform mark law needs low < high")
        if self.kind is MarkKind.NORMAL and not (self.std > 0.0):
            raise ValidationError("normal mark law needs std > 0")
        for v in (self.low, self.high, self.std):
            if not math.isfinite(v):
                raise ValidationError("mark law parameters must be finite")

    @property
    def mean(self) -> float:
        return 0.5 * (self.low + self.high) if self.kind is MarkKind.UNIFORM else 0.0

    @property
    def second_moment(self) -> float:
        if self.kind is MarkKind.UNIFORM:
            return (self.low**2 + self.low * self.high + self.high**2) / 3.0
        return self.std**2

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind is MarkKind.UNIFORM:
            return rng.uniform(self.low, self.high, n)
        return rng.normal(0.0, self.std, n)


def _unit_profile(x: np.ndarray) -> np.ndarray:
    return np.ones_like(x)


@dataclass(frozen=True)
class JumpSpec:
    """Compound-Poisson Levy measure ``nu(dz) = intensity * mark_law(dz)`` with a spatial profile."""

    intensity: float = 0.0
    mark_law: MarkLaw = field(default_factory=MarkLaw)
    profile: Callable[[np.ndarray], np.ndarray] = _unit_profile

    def __post_init__(self) -> None:
        if not (self.intensity >= 0.0 and math.isfinite(self.intensity)):
            raise ValidationError("jump intensity must be finite and >= 0")

    @property
    def first_moment(self) -> float:
        return self.mark_law.mean

    @property
    def compensator_rate(self) -> float:
        """``int z nu(dz) = intensity * E[z]``."""
        return self.intensity * self.mark_law.mean


@dataclass(frozen=True)
class TimeGrid:
    T: float
    n_steps: int

    def __post_init__(self) -> None:
        if not (self.T > 0.0 and math.isfinite(self.T)):
            raise ValidationError("horizon T must be finite and positive")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValidationError("n_steps must be a positive integer")

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt


@dataclass(frozen=True, eq=False)
class NoisePath:
    """One realisation of the driving noise on a uniform grid.

    ``base_brownian`` holds finest-grid Brownian increments ``d beta_i``
    (shape ``(n_base, n_modes)``); the path's own grid has
    ``n_base / stride`` intervals.
    """

    T: float
    stride: int
    sqrt_q: np.ndarray
    base_brownian: np.ndarray
    jump_times: np.ndarray
    jump_marks: np.ndarray
    jump_base_interval: np.ndarray
    seed: int
    sample_index: int
    qspec: QWienerSpec | None = None
    jspec: JumpSpec | None = None
    _memo: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_base(self) -> int:
        return self.base_brownian.shape[0]

    @property
    def n_steps(self) -> int:
        return self.n_base // self.stride

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.T, self.n_steps)

    @property
    def n_modes(self) -> int:
        return self.base_brownian.shape[1]

    @property
    def brownian(self) -> np.ndarray:
        """Per-interval Brownian increments ``d beta_i``, shape ``(n_steps, n_modes)``."""
        if "brownian" not in self._memo:
            if self.stride == 1:
                out = self.base_brownian
            else:
                blocks = self.base_brownian.reshape(self.n_steps, self.stride, self.n_modes)
                out = blocks[:, 0, :].copy()
                for k in range(1, self.stride):  # fixed left-to-right order
                    out += blocks[:, k, :]
                out.setflags(write=False)
            self._memo["brownian"] = out
        return self._memo["brownian"]

    @property
    def wiener(self) -> np.ndarray:
        """Scaled increments ``sqrt(q_i) d beta_i``, shape ``(n_steps, n_modes)``."""
        if "wiener" not in self._memo:
            out = self.brownian * self.sqrt_q[None, :]
            out.setflags(write=False)
            self._memo["wiener"] = out
        return self._memo["wiener"]

    @property
    def jump_interval(self) -> np.ndarray:
        return self.jump_base_interval // self.stride

    def jumps_in(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        """``(times, marks)`` of the events in interval ``j``."""
        lo, hi = self._interval_slices()[j]
        return self.jump_times[lo:hi], self.jump_marks[lo:hi]

    def _interval_slices(self) -> np.ndarray:
        if "slices" not in self._memo:
            edges = np.searchsorted(self.jump_interval, np.arange(self.n_steps + 1))
            self._memo["slices"] = np.stack([edges[:-1], edges[1:]], axis=1)
        return self._memo["slices"]

    def mark_sums(self) -> np.ndarray:
        """Per-interval sums of realised marks, shape ``(n_steps,)``."""
        if "mark_sums" not in self._memo:
            out = np.zeros(self.n_steps)
            for j, (lo, hi) in enumerate(self._interval_slices()):
                s = 0.0
                for z in self.jump_marks[lo:hi]:  # fixed time order
                    s += z
                out[j] = s
            out.setflags(write=False)
            self._memo["mark_sums"] = out
        return self._memo["mark_sums"]

    def jump_counts(self) -> np.ndarray:
        sl = self._interval_slices()
        return sl[:, 1] - sl[:, 0]

    @property
    def is_empty(self) -> bool:
        return self.n_modes == 0 and self.jump_times.size == 0

    def with_brownian(self, base_brownian: np.ndarray) -> "NoisePath":
        """Copy with replaced fine increments (used for perturbation tests)."""
        return NoisePath(self.T, self.stride, self.sqrt_q, np.asarray(base_brownian, dtype=float),
                         self.jump_times, self.jump_marks, self.jump_base_interval, self.seed,
                         self.sample_index, self.qspec, self.jspec)


def _generator(seed: int, sample_index: int, stream: int) -> np.random.Generator:
    ss = np.random.SeedSequence([int(seed), int(sample_index), int(stream)])
    return np.random.Generator(np.random.Philox(key=ss.generate_state(2, dtype=np.uint64)))


def _check_seed(seed: int, sample_index: int) -> None:
    if int(seed) != seed or not (0 <= seed < 2**64):
        raise ValidationError("seed must be an unsigned 64-bit integer")
    if int(sample_index) != sample_index or sample_index < 0:
        raise ValidationError("sample_index must be a non-negative integer")


def sample_path(qspec: QWienerSpec, jspec: JumpSpec, grid: TimeGrid, seed: int,
                sample_index: int) -> NoisePath:
    """Draw a noise path; a pure function of ``(qspec, jspec, grid, seed, sample_index)``."""
    _check_seed(seed, sample_index)
    m, dt = grid.n_steps, grid.dt
    n = qspec.n_modes
    if n:
        rng = _generator(seed, sample_index, STREAM_WIENER)
        dbeta = rng.standard_normal((m, n)) * math.sqrt(dt)
    else:
        dbeta = np.zeros((m, 0))
    if jspec.intensity > 0.0:
        counts = _generator(seed, sample_index, STREAM_JUMP_COUNT).poisson(jspec.intensity * dt, m)
        total = int(counts.sum())
        interval = np.repeat(np.arange(m), counts)
        u = _generator(seed, sample_index, STREAM_JUMP_TIME).random(total)
        marks = jspec.mark_law.sample(_generator(seed, sample_index, STREAM_JUMP_MARK), total)
        # sort by time inside each interval; intervals are already ordered
        order = np.lexsort((u, interval))
        interval, u, marks = interval[order], u[order], marks[order]
        times = (interval + u) * dt
    else:
        interval = np.zeros(0, dtype=np.int64)
        times = np.zeros(0)
        marks = np.zeros(0)
    sqrt_q = np.sqrt(qspec.eigenvalues)
    for a in (dbeta, times, marks, interval, sqrt_q):
        a.setflags(write=False)
    return NoisePath(grid.T, 1, sqrt_q, dbeta, times, marks, interval.astype(np.int64),
                     int(seed), int(sample_index), qspec, jspec)


def coarsen(path: NoisePath, factor: int) -> NoisePath:
    """The same noise viewed on a grid ``factor`` times coarser."""
    if int(factor) != factor or factor < 1:
        raise ValidationError("coarsening factor must be a positive integer")
    if path.n_steps % factor:
        raise ValidationError(f"factor {factor} does not divide {path.n_steps} intervals")
    if factor == 1:
        return path
    return NoisePath(path.T, path.stride * int(factor), path.sqrt_q, path.base_brownian,
                     path.jump_times, path.jump_marks, path.jump_base_interval, path.seed,
                     path.sample_index, path.qspec, path.jspec)


def compensated_jump_term(jspec: JumpSpec, path: NoisePath, j: int, g_eval: np.ndarray,
                          g_mean: np.ndarray) -> np.ndarray:
    """``sum_k G(z_k, X_j) - dt * int G(z, X_j) nu(dz)`` over the events of interval ``j``.

    ``g_eval`` has one row per realised event in interval ``j``.
    """
    g_mean = np.asarray(g_mean, dtype=float)
    times, _ = path.jumps_in(j)
    g_eval = np.asarray(g_eval, dtype=float).reshape(times.size, *g_mean.shape)
    out = -path.dt * g_mean
    for row in g_eval:
        out = out + row
    return out


def write_path_csv(path: NoisePath, dest: str | Path) -> None:
    """Debug dump in the layout ``sample,interval,stream,index,value``."""
    with open(dest, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample", "interval", "stream", "index", "value"])
        inc = path.wiener
        ivl = path.jump_interval
        for j in range(path.n_steps):
            for i in range(path.n_modes):
                w.writerow([path.sample_index, j, "wiener", i, f"{inc[j, i]:.17g}"])
        for k in range(path.jump_times.size):
            w.writerow([path.sample_index, ivl[k], "jump_time", k, f"{path.jump_times[k]:.17g}"])
            w.writerow([path.sample_index, ivl[k], "jump_mark", k, f"{path.jump_marks[k]:.17g}"])
