"""The eight acceptance criteria at their stated tolerances.

Each test prints one ``criterion N ...: PASS|FAIL`` line; the lines are also
collected into an "acceptance criteria" section of the pytest summary.
"""

from __future__ import annotations

import time

import numpy as np

from fracspde.bench import default_workers, spatial_experiment, temporal_experiment
from fracspde.cli import main
from fracspde.config import load_config
from fracspde.fem import BoundaryCondition, CoefficientField, Mesh1D, assemble, eigendecompose
from fracspde.mlf import mainardi_moment, mainardi_moment_quadrature, mittag_leffler, ml_laplace_residual
from fracspde.mlop import MLPropagator, quadrature_oracle
from fracspde.noise import JumpSpec, QWienerSpec, sample_path
from fracspde.scheme import reference_linear, step_all
from fracspde.selftest import run_all

from mc_checks import compensated_mean, jump_isometry, wiener_isometry


def test_criterion_1_special_functions(criterion):
    t0 = time.perf_counter()
    z = np.linspace(-5.0, 5.0, 401)
    nz = z[z != 0.0]
    red = max(
        float(np.max(np.abs(mittag_leffler(z, 1.0) / np.exp(z) - 1))),
        float(np.max(np.abs(mittag_leffler(-z * z, 2.0) - np.cos(z)))),
        float(np.max(np.abs(mittag_leffler(nz, 1.0, 2.0) / (np.expm1(nz) / nz) - 1))),
    )
    mom = max(abs(mainardi_moment_quadrature(mu, a) / mainardi_moment(mu, a) - 1)
              for a in (0.6, 0.76, 0.8, 0.9) for mu in (-0.5, 0.0, 0.5, 1.0, 2.0))
    lap = max(ml_laplace_residual(*c) for c in ((1.0, 1.0, -1.0, 1.0), (0.8, 0.8, -1.0, 2.0),
                                                (0.8, 1.0, -3.0, 1.5)))
    dt = time.perf_counter() - t0
    ok = red <= 1e-10 and mom <= 1e-6 and lap <= 1e-8 and dt < 10
    assert criterion(1, "special functions", ok,
                     f"reductions {red:.1e}, moments {mom:.1e}, Laplace {lap:.1e}, {dt:.1f} s")


def test_criterion_2_oracle_cross_validation(criterion):
    t0 = time.perf_counter()
    v = np.random.default_rng(2).standard_normal(16)
    worst = 0.0
    for q in (0.0, 10.0):
        op = assemble(Mesh1D.uniform(0, 1, 17), CoefficientField(q=q), BoundaryCondition.dirichlet())
        dec = eigendecompose(op)
        for alpha in (0.76, 0.8, 0.9):
            p = MLPropagator(dec, alpha)
            for t in (0.1, 0.5, 1.0):
                for which, apply in (("S1", p.s1h_apply), ("S2", p.s2h_apply)):
                    ref = quadrature_oracle(op, alpha, t, v, which)
                    worst = max(worst, np.linalg.norm(apply(t, v) - ref) / np.linalg.norm(ref))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-6 and dt < 60
    assert criterion(2, "propagator cross-validation", ok, f"max relative {worst:.1e}, {dt:.1f} s")


def test_criterion_3_linear_exactness(criterion):
    t0 = time.perf_counter()
    s = load_config(None, preset="P1")
    assert s.n_cells == 64 and s.steps == 64 and s.alpha == 0.8 and s.T == 1.0
    op = s.operator()
    prob = s.problem()
    p = MLPropagator(eigendecompose(op), s.alpha)
    grid = s.grid()
    traj = step_all(prob, op, p, sample_path(QWienerSpec(0), JumpSpec(), grid, s.seed, 0), grid.dt)
    worst = 0.0
    for m, t in zip(traj.steps, traj.times):
        ref = reference_linear(prob, op, p, t)
        worst = max(worst, np.linalg.norm(traj.states[m] - ref) / np.linalg.norm(ref))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-12 and dt < 10
    assert criterion(3, "linear exactness", ok, f"max relative {worst:.1e} over 65 steps, {dt:.1f} s")


def test_criterion_4_spatial_order(criterion):
    t0 = time.perf_counter()
    s = load_config(None, preset="P1")
    assert s.space_ladder == (8, 16, 32, 64, 128)
    res = spatial_experiment(s, workers=default_workers())
    dt = time.perf_counter() - t0
    slope = res.fit.slope
    ok = 1.8 <= slope <= 2.2 and dt < 60
    assert criterion(4, "spatial order", ok, f"slope {slope:.4f}, {dt:.1f} s")


def test_criterion_5_temporal_order(criterion):
    t0 = time.perf_counter()
    s = load_config(None, preset="P3")
    assert (s.n_modes, s.intensity, s.alpha, s.beta, s.n_cells, s.samples) == (16, 2.0, 0.8, 2.0, 64, 128)
    assert s.time_ladder == (16, 32, 64, 128, 256, 512) and s.time_reference == 4096
    res = temporal_experiment(s, workers=default_workers())
    dt = time.perf_counter() - t0
    fit = res.fit
    in_band = 0.05 <= fit.slope <= 0.40
    positive = fit.slope - 3.0 * fit.slope_stderr > 0.0
    ok = in_band and positive and dt < 1800
    detail = (f"slope {fit.slope:.4f} +/- {fit.slope_stderr:.4f}, predicted {res.config.predicted_rate:.2f}, "
              f"band {'ok' if in_band else 'missed'}, 3 s.e. {'ok' if positive else 'missed'}, {dt:.0f} s")
    assert criterion(5, "temporal order", ok, detail)


def test_criterion_6_noise_statistics(criterion):
    t0 = time.perf_counter()
    parts = []
    ok = True
    for name, (est, expected, se) in (("Wiener isometry", wiener_isometry()),
                                      ("jump isometry", jump_isometry()),
                                      ("compensated mean", compensated_mean())):
        z = float(np.max(np.abs(np.asarray(est) - expected) / np.asarray(se)))
        ok &= z <= 3.0
        parts.append(f"{name} {z:.2f} s.e.")
    dt = time.perf_counter() - t0
    ok = ok and dt < 120
    assert criterion(6, "noise statistics", ok, ", ".join(parts) + f", {dt:.1f} s")


SMALL = """\
[run]
preset = "P3"
seed = 2024
[fem]
n_cells = 16
[scheme]
steps = 16
[experiment]
samples = 5
time_ladder = [4, 8, 16]
time_reference = 32
space_ladder = [4, 8]
space_reference = 16
space_steps = 8
"""


def test_criterion_7_determinism(criterion, tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text(SMALL)
    same = True
    for command in ("converge-time", "converge-space"):
        outs = []
        for w in ("1", "2", "3"):
            d = tmp_path / f"{command}-{w}"
            assert main([command, "--config", str(cfg), "--out", str(d), "--workers", w]) == 0
            outs.append({p.name: p.read_bytes() for p in d.iterdir() if p.suffix != ".svg"})
        same &= outs[0] == outs[1] == outs[2] and set(outs[0]) == {"records.csv", "manifest.json"}
    assert criterion(7, "determinism", same, "converge-time and converge-space with 1, 2, 3 workers")


def test_criterion_8_selftest(criterion):
    t0 = time.perf_counter()
    lines = []
    ok = run_all(echo=lines.append)
    dt = time.perf_counter() - t0
    ok = ok and dt < 300
    assert criterion(8, "invariant suite", ok, f"{len(lines)} lines reported, {dt:.1f} s")
