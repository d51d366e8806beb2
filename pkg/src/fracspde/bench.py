"""Strong-error experiments with coupled noise and log-log rate fits.

Each Monte Carlo sample draws one fine noise path, solves on the reference
resolution and on every ladder resolution driven by the same noise, and
returns its squared mass-norm errors at ``T``. Samples may run in worker
processes; the reduction over samples happens afterwards in sample order, so
the reported numbers do not depend on the worker count.
"""

from __future__ import annotations

import concurrent.futures as cf
import logging
import math
import multiprocessing
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from ._io import OutputError, config_hash, dumps, fmt_float, versions, write_text
from .config import RunSettings
from .errors import BlowUpError, NumericalError, ValidationError
from .fem import FemOperator, l2_project, prolong
from .mlf import mittag_leffler
from .mlop import MLPropagator, propagator_for
from .noise import TimeGrid, coarsen, sample_path
from .scheme import step_all

log = logging.getLogger(__name__)

__all__ = [
    "ExperimentConfig",
    "ErrorRecord",
    "RateFit",
    "ExperimentResult",
    "fit_rate",
    "predicted_temporal_rate",
    "predicted_spatial_rate",
    "temporal_experiment",
    "spatial_experiment",
    "t1h_diagnostic",
    "emit_report",
]

ABORT_FRACTION = 0.01


def predicted_temporal_rate(alpha: float, beta: float) -> float:
    return min(alpha * beta, 2.0 - 2.0 * alpha) / 2.0


def predicted_spatial_rate(beta: float) -> float:
    return beta


@dataclass(frozen=True)
class ExperimentConfig:
    settings: RunSettings
    kind: str  # "time" or "space"

    def __post_init__(self) -> None:
        if self.kind not in ("time", "space"):
            raise ValidationError(f"experiment kind must be 'time' or 'space', got {self.kind!r}")

    @property
    def ladder(self) -> tuple[int, ...]:
        s = self.settings
        return s.time_ladder if self.kind == "time" else s.space_ladder

    @property
    def reference(self) -> int | str:
        s = self.settings
        return s.time_reference if self.kind == "time" else s.space_reference

    @property
    def samples(self) -> int:
        return self.settings.samples

    @property
    def seed(self) -> int:
        return self.settings.seed

    @property
    def predicted_rate(self) -> float:
        s = self.settings
        if self.kind == "time":
            return predicted_temporal_rate(s.alpha, s.beta)
        return predicted_spatial_rate(s.beta)

    def resolution(self, count: int) -> float:
        s = self.settings
        span = s.T if self.kind == "time" else s.b - s.a
        return span / count

    def to_dict(self) -> dict:
        return {"kind": self.kind, "settings": self.settings.to_dict()}


@dataclass(frozen=True)
class ErrorRecord:
    resolution: float
    error: float
    stderr: float      # standard error of the mean squared error
    samples: int


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r2: float
    residuals: tuple[float, ...]
    slope_stderr: float = 0.0
    excluded: tuple[int, ...] = ()

    def to_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "r2": self.r2,
                "residuals": list(self.residuals), "slope_stderr": self.slope_stderr,
                "excluded": list(self.excluded)}


@dataclass(frozen=True, eq=False)
class ExperimentResult:
    config: ExperimentConfig
    records: list[ErrorRecord]
    fit: RateFit | None
    aborted: int
    squared_errors: np.ndarray = field(repr=False)  # (samples used, ladder)

    @property
    def predicted_rate(self) -> float:
        return self.config.predicted_rate


def fit_rate(resolutions: Sequence[float], errors: Sequence[float]) -> RateFit:
    """Least-squares line through ``(log resolution, log error)``."""
    x = np.log(np.asarray(resolutions, dtype=float))
    y = np.log(np.asarray(errors, dtype=float))
    if x.size < 2:
        raise ValidationError("a rate fit needs at least two points")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValidationError("rate fit needs positive finite resolutions and errors")
    xm, ym = x.mean(), y.mean()
    dx, dy = x - xm, y - ym
    sxx = float(np.dot(dx, dx))
    if sxx == 0.0:
        raise ValidationError("rate fit needs distinct resolutions")
    slope = float(np.dot(dx, dy)) / sxx
    intercept = float(ym - slope * xm)
    resid = y - (intercept + slope * x)
    syy = float(np.dot(dy, dy))
    r2 = 1.0 if syy == 0.0 else 1.0 - float(np.dot(resid, resid)) / syy
    return RateFit(slope, intercept, r2, tuple(float(r) for r in resid))


def _jackknife_slope_stderr(sq: np.ndarray, res: np.ndarray, keep: np.ndarray) -> float:
    """Delete-one-sample jackknife standard error of the fitted slope."""
    n = sq.shape[0]
    if n < 2:
        return 0.0
    total = sq.sum(axis=0)
    slopes = np.empty(n)
    for i in range(n):
        mean = (total - sq[i]) / (n - 1)
        if np.any(mean[keep] <= 0.0):
            return math.inf
        slopes[i] = fit_rate(res[keep], np.sqrt(mean[keep])).slope
    return float(math.sqrt((n - 1) / n * np.sum((slopes - slopes.mean()) ** 2)))


# {{{ sample runners


class _Context:
    """Everything a worker needs to evaluate one sample."""

    def __init__(self, cfg: ExperimentConfig):
        s = cfg.settings
        self.cfg = cfg
        self.problem = s.problem()
        self.qspec = s.qspec()
        self.jspec = s.jspec()
        ladder = cfg.ladder
        if cfg.kind == "time":
            self.op = s.operator()
            self.prop = propagator_for(self.op, s.alpha)
            for m in (*ladder, cfg.reference):
                self.prop.kernel_tables(s.T / m, m)
            self.prop.freeze()
        else:
            self.grid = TimeGrid(s.T, s.space_steps)
            counts = list(ladder) + ([] if cfg.reference == "analytic" else [cfg.reference])
            self.ops: dict[int, FemOperator] = {}
            self.props: dict[int, MLPropagator] = {}
            for n in counts:
                op = s.operator(n)
                prop = propagator_for(op, s.alpha)
                prop.kernel_tables(self.grid.dt, self.grid.n_steps)
                prop.freeze()
                self.ops[n], self.props[n] = op, prop
            if cfg.reference == "analytic":
                self._check_analytic()

    def _check_analytic(self) -> None:
        s = self.cfg.settings
        ok = (self.problem.is_linear and s.x0 == "sine" and s.q == 0.0 and s.bc == "dirichlet"
              and (s.a, s.b) == (0.0, 1.0) and all(op.c0 == 0.0 for op in self.ops.values()))
        if not ok:
            raise ValidationError(
                "analytic spatial reference needs the linear sine problem on (0, 1) "
                "with constant D, q = 0, Dirichlet conditions and no shift"
            )

    def run(self, s_idx: int) -> np.ndarray | None:
        try:
            return self._time(s_idx) if self.cfg.kind == "time" else self._space(s_idx)
        except BlowUpError as exc:
            log.warning("sample %d aborted: %s", s_idx, exc)
            return None

    def _time(self, s_idx: int) -> np.ndarray:
        s, cfg = self.cfg.settings, self.cfg
        ref = cfg.reference
        path = sample_path(self.qspec, self.jspec, TimeGrid(s.T, ref), s.seed, s_idx)
        x_ref = step_all(self.problem, self.op, self.prop, path, path.dt, output_steps=[ref]).final
        out = np.empty(len(cfg.ladder))
        for k, m in enumerate(cfg.ladder):
            cp = coarsen(path, ref // m)
            x = step_all(self.problem, self.op, self.prop, cp, cp.dt, output_steps=[m]).final
            d = x_ref - x
            out[k] = float(d @ self.op.mass @ d)
        return out

    def _space(self, s_idx: int) -> np.ndarray:
        s, cfg = self.cfg.settings, self.cfg
        path = sample_path(self.qspec, self.jspec, self.grid, s.seed, s_idx)
        m = self.grid.n_steps

        def final(n: int) -> np.ndarray:
            return step_all(self.problem, self.ops[n], self.props[n], path, path.dt,
                            output_steps=[m]).final

        out = np.empty(len(cfg.ladder))
        if cfg.reference == "analytic":
            for k, n in enumerate(cfg.ladder):
                out[k] = _analytic_sq_error(self.ops[n], final(n), s.alpha, s.D, s.T)
            return out
        ref_op = self.ops[cfg.reference]
        x_ref = final(cfg.reference)
        for k, n in enumerate(cfg.ladder):
            d = x_ref - prolong(self.ops[n], final(n), ref_op)
            out[k] = float(d @ ref_op.mass @ d)
        return out


def _analytic_sq_error(op: FemOperator, xh: np.ndarray, alpha: float, D: float, T: float) -> float:
    """``|| E_a(-D pi^2 T^a) sin(pi x) - X_h ||^2_{L2}`` by refined Gauss quadrature."""
    amp = mittag_leffler(-D * math.pi**2 * T**alpha, alpha, 1.0)
    fine = type(op.mesh).uniform(op.mesh.a, op.mesh.b, 8 * op.mesh.n_cells)
    xg, wg = fine.gauss_points()
    uh = np.interp(xg, op.mesh.nodes, op.to_nodal(xh))
    err = amp * np.sin(math.pi * xg) - uh
    return float(np.sum(wg * err * err))


_WORKER_CTX: _Context | None = None


def _init_worker(ctx: _Context) -> None:
    global _WORKER_CTX
    _WORKER_CTX = ctx


def _run_in_worker(s_idx: int) -> np.ndarray | None:
    assert _WORKER_CTX is not None
    with threadpool_limits(1):
        return _WORKER_CTX.run(s_idx)


def _run_samples(ctx: _Context, samples: int, workers: int) -> list[np.ndarray | None]:
    if workers <= 1 or samples <= 1:
        with threadpool_limits(1):
            return [ctx.run(i) for i in range(samples)]
    mp = multiprocessing.get_context("fork")
    with cf.ProcessPoolExecutor(max_workers=workers, mp_context=mp, initializer=_init_worker,
                                initargs=(ctx,)) as ex:
        chunk = max(1, samples // (4 * workers))
        return list(ex.map(_run_in_worker, range(samples), chunksize=chunk))


# }}}


def _reduce(cfg: ExperimentConfig, results: list[np.ndarray | None]) -> ExperimentResult:
    ok = [r for r in results if r is not None]
    aborted = len(results) - len(ok)
    if aborted > ABORT_FRACTION * len(results):
        raise NumericalError(
            f"{aborted} of {len(results)} samples aborted (limit {ABORT_FRACTION:.0%})"
        )
    sq = np.array(ok)
    n = sq.shape[0]
    res = np.array([cfg.resolution(c) for c in cfg.ladder])
    records = []
    for k in range(len(cfg.ladder)):
        col = sq[:, k]
        mean = math.fsum(col.tolist()) / n
        se = float(np.std(col, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        records.append(ErrorRecord(float(res[k]), math.sqrt(mean), se, n))

    fit = None
    errs = np.array([r.error for r in records])
    keep = errs > 0.0
    # the finest point is dropped when it is indistinguishable from the coupling floor
    finest = len(records) - 1
    if records[finest].error ** 2 <= 3.0 * records[finest].stderr:
        keep[finest] = False
    if keep.sum() >= 2:
        base = fit_rate(res[keep], errs[keep])
        se = _jackknife_slope_stderr(sq, res, keep)
        fit = RateFit(base.slope, base.intercept, base.r2, base.residuals, se,
                      tuple(int(i) for i in np.flatnonzero(~keep)))
    return ExperimentResult(cfg, records, fit, aborted, sq)


def temporal_experiment(cfg: ExperimentConfig | RunSettings, workers: int = 1) -> ExperimentResult:
    """Strong error at ``T`` over the time-step ladder on a fixed mesh."""
    if isinstance(cfg, RunSettings):
        cfg = ExperimentConfig(cfg, "time")
    if cfg.kind != "time":
        raise ValidationError("temporal_experiment needs a 'time' configuration")
    return _reduce(cfg, _run_samples(_Context(cfg), cfg.samples, workers))


def spatial_experiment(cfg: ExperimentConfig | RunSettings, workers: int = 1) -> ExperimentResult:
    """Strong error at ``T`` over nested uniform meshes with a fixed time step."""
    if isinstance(cfg, RunSettings):
        cfg = ExperimentConfig(cfg, "space")
    if cfg.kind != "space":
        raise ValidationError("spatial_experiment needs a 'space' configuration")
    return _reduce(cfg, _run_samples(_Context(cfg), cfg.samples, workers))


def t1h_diagnostic(op_coarse: FemOperator, op_fine: FemOperator, alpha: float, t: float,
                   v: np.ndarray) -> float:
    """``|| S1_fine(t) v - prolong(S1_coarse(t) P_h v) ||_M`` on the fine mesh."""
    mc, mf = op_coarse.mesh, op_fine.mesh
    if (mc.a, mc.b) != (mf.a, mf.b) or mf.n_cells % mc.n_cells or op_coarse.bc != op_fine.bc:
        raise ValidationError("mismatched meshes: the fine mesh must refine the coarse one")
    ratio = mf.n_cells // mc.n_cells
    if not np.array_equal(mf.nodes[::ratio], mc.nodes):
        raise ValidationError("mismatched meshes: coarse nodes are not fine nodes")
    v = np.asarray(v, dtype=float)
    full = op_fine.to_nodal(v)
    pv = l2_project(mc, op_coarse.bc, lambda x: np.interp(x, mf.nodes, full), quad_mesh=mf,
                    mass=op_coarse.mass)
    fine = propagator_for(op_fine, alpha).s1h_apply(t, v)
    coarse = prolong(op_coarse, propagator_for(op_coarse, alpha).s1h_apply(t, pv), op_fine)
    return op_fine.norm(fine - coarse)


# {{{ report


def records_csv(records: Sequence[ErrorRecord]) -> str:
    lines = ["resolution,error,stderr,samples"]
    lines += [f"{fmt_float(r.resolution)},{fmt_float(r.error)},{fmt_float(r.stderr)},{r.samples}"
              for r in records]
    return "\n".join(lines) + "\n"


def manifest(result: ExperimentResult) -> dict:
    cfg = result.config
    conf = cfg.to_dict()
    fit = result.fit
    return {
        "kind": cfg.kind,
        "config": conf,
        "config_hash": config_hash(conf),
        "seed": cfg.seed,
        "samples": cfg.samples,
        "aborted_samples": result.aborted,
        "predicted_rate": cfg.predicted_rate,
        "measured_rate": None if fit is None else fit.slope,
        "fit": None if fit is None else fit.to_dict(),
        "records": [{"resolution": r.resolution, "error": r.error, "stderr": r.stderr,
                     "samples": r.samples} for r in result.records],
        "versions": versions(),
    }


def _plot_svg(result: ExperimentResult, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    res = np.array([r.resolution for r in result.records])
    err = np.array([r.error for r in result.records])
    fig, ax = plt.subplots(figsize=(5, 4))
    pos = err > 0
    ax.loglog(res[pos], err[pos], "o", label="strong error")
    if result.fit is not None:
        f = result.fit
        ax.loglog(res, np.exp(f.intercept) * res**f.slope, "-",
                  label=f"fit slope {f.slope:.3f} (predicted {result.predicted_rate:.3g})")
    ax.set_xlabel("time step" if result.config.kind == "time" else "mesh size h")
    ax.set_ylabel("error")
    ax.legend()
    fig.tight_layout()
    try:
        fig.savefig(path, format="svg", metadata={"Date": None})
    finally:
        plt.close(fig)


def emit_report(result: ExperimentResult, out_dir: str | Path, *, plot: bool = True) -> dict[str, Path]:
    """Write ``records.csv``, ``manifest.json`` and (optionally) ``plot.svg``."""
    if not result.records:
        raise ValidationError("no error records to report")
    out_dir = Path(out_dir)
    paths = {
        "csv": write_text(out_dir / "records.csv", records_csv(result.records)),
        "manifest": write_text(out_dir / "manifest.json", dumps(manifest(result))),
    }
    if plot:
        svg = out_dir / "plot.svg"
        try:
            _plot_svg(result, svg)
        except OSError as exc:
            raise OutputError(f"cannot write {svg}: {exc}") from exc
        paths["svg"] = svg
    return paths


# }}}


def default_workers() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)
