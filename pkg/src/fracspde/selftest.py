"""Invariant suite run by ``fracspde selftest``.

Every check raises ``AssertionError`` on failure and returns a short detail
string on success.
"""

from __future__ import annotations

import math
import time
from typing import Callable

import numpy as np
import scipy.linalg as sla

from .bench import predicted_spatial_rate, predicted_temporal_rate
from .fem import BoundaryCondition, CoefficientField, Mesh1D, assemble, eigendecompose
from .mlf import (
    mainardi_moment,
    mainardi_moment_quadrature,
    mittag_leffler,
    ml_laplace_residual,
)
from .mlop import MLPropagator, quadrature_oracle
from .noise import JumpSpec, MarkLaw, QWienerSpec, TimeGrid, coarsen, sample_path
from .presets import x0_sine
from .scheme import ProblemSpec, reference_linear, step_all

CHECKS: list[tuple[str, Callable[[], str]]] = []


def check(name: str):
    def deco(fn: Callable[[], str]):
        CHECKS.append((name, fn))
        return fn

    return deco


def _rel(a, b) -> float:
    return float(np.max(np.abs(np.asarray(a) - b) / np.maximum(np.abs(b), 1e-300)))


# {{{ special functions


@check("mlf-reductions")
def _reductions() -> str:
    z = np.linspace(-5.0, 5.0, 201)
    e_exp = _rel(mittag_leffler(z, 1.0, 1.0), np.exp(z))
    e_cos = float(np.max(np.abs(mittag_leffler(-z * z, 2.0, 1.0) - np.cos(z))))
    nz = z[z != 0.0]
    e_12 = _rel(mittag_leffler(nz, 1.0, 2.0), np.expm1(nz) / nz)
    worst = max(e_exp, e_cos, e_12)
    assert worst <= 1e-10, f"reduction identity error {worst:.2e}"
    return f"max error {worst:.1e}"


@check("mlf-monotone")
def _monotone() -> str:
    rng = np.random.default_rng(1)
    for _ in range(200):
        a = rng.uniform(0.05, 1.0)
        lam = rng.uniform(0.01, 50.0)
        t1, t2 = np.sort(rng.uniform(1e-3, 5.0, 2))
        e1 = mittag_leffler(-lam * t1**a, a)
        e2 = mittag_leffler(-lam * t2**a, a)
        assert 0.0 < e2 <= e1 <= 1.0, f"monotonicity fails at a={a}, lam={lam}"
    return "200 samples"


@check("mlf-positivity")
def _positivity() -> str:
    x = np.linspace(0.0, 50.0, 501)
    for a in (0.2, 0.5, 0.76, 0.8, 0.9, 1.0):
        assert np.all(mittag_leffler(-x, a, a) > 0.0), f"E_(a,a) not positive for a={a}"
    return "x in [0, 50]"


@check("power-difference-inequality")
def _app() -> str:
    rng = np.random.default_rng(2)
    t = np.sort(rng.uniform(0.0, 10.0, (10_000, 2)), axis=1)
    t = t[t[:, 0] < t[:, 1]]
    a = rng.uniform(0.0, 1.0, t.shape[0])
    lhs = t[:, 1] ** a - t[:, 0] ** a
    rhs = (t[:, 1] - t[:, 0]) ** a
    assert np.all(lhs <= rhs * (1.0 + 1e-12)), "t2^a - t1^a <= (t2 - t1)^a violated"
    return f"{t.shape[0]} triples"


@check("mainardi-moments")
def _moments() -> str:
    worst = 0.0
    for a in (0.6, 0.76, 0.8, 0.9):
        for mu in (-0.5, 0.0, 0.5, 1.0, 2.0):
            worst = max(worst, abs(mainardi_moment_quadrature(mu, a) / mainardi_moment(mu, a) - 1))
    assert worst <= 1e-6, f"moment identity error {worst:.2e}"
    return f"max relative error {worst:.1e}"


@check("laplace-residual")
def _laplace() -> str:
    cases = [(1.0, 1.0, -1.0, 1.0), (0.8, 0.8, -1.0, 2.0), (0.8, 1.0, -3.0, 1.5)]
    worst = max(ml_laplace_residual(*c) for c in cases)
    assert worst <= 1e-8, f"Laplace residual {worst:.2e}"
    return f"max residual {worst:.1e}"


# }}}


# {{{ finite elements


def _operators():
    d = BoundaryCondition.dirichlet()
    yield assemble(Mesh1D.uniform(0, 1, 32), CoefficientField(), d)
    yield assemble(Mesh1D.uniform(0, 1, 32), CoefficientField(D=lambda x: 1 + x), d)
    yield assemble(Mesh1D.uniform(0, 1, 32), CoefficientField(q=10.0), d)
    yield assemble(Mesh1D.uniform(0, 2, 24), CoefficientField(q=lambda x: np.sin(3 * x)),
                   BoundaryCondition.robin(0.5))


@check("fem-mass-spd")
def _spd() -> str:
    for op in _operators():
        m = op.mass
        assert np.array_equal(m, m.T), "mass matrix not symmetric"
        np.linalg.cholesky(m)
        assert np.linalg.eigvalsh(m).min() > 0.0
    return "4 operators"


@check("fem-coercivity")
def _coercivity() -> str:
    rng = np.random.default_rng(3)
    for op in _operators():
        ks = 0.5 * (op.stiffness + op.stiffness.T)
        v = rng.standard_normal((1000, op.n_dof))
        quad = np.einsum("ij,jk,ik->i", v, ks, v)
        assert np.all(quad >= -1e-12 * np.abs(quad).max()), "v^T K v < 0"
    return "1000 vectors x 4 operators"


@check("fem-row-sum")
def _row_sum() -> str:
    op = assemble(Mesh1D.uniform(0, 1, 20), CoefficientField(c0=0.0), BoundaryCondition.neumann())
    r = float(np.max(np.abs(op.stiffness @ np.ones(op.n_dof))))
    assert r <= 1e-12, f"Neumann row sum {r:.2e}"
    return f"max {r:.1e}"


@check("fem-projection-idempotent")
def _idempotent() -> str:
    op = assemble(Mesh1D.uniform(0, 1, 16), CoefficientField(), BoundaryCondition.dirichlet())
    v = np.random.default_rng(4).standard_normal(op.n_dof)
    full = op.to_nodal(v)
    w = op.project(lambda x: np.interp(x, op.mesh.nodes, full))
    e = float(np.max(np.abs(w - v)))
    assert e <= 1e-12, f"projection error {e:.2e}"
    return f"max {e:.1e}"


# }}}


# {{{ propagators


@check("propagator-contraction")
def _contraction() -> str:
    op = assemble(Mesh1D.uniform(0, 1, 16), CoefficientField(), BoundaryCondition.dirichlet())
    p = MLPropagator(eigendecompose(op), 0.8)
    v = np.random.default_rng(5).standard_normal(op.n_dof)
    for t in np.geomspace(1e-3, 10.0, 25):
        assert op.norm(p.s1h_apply(t, v)) <= op.norm(v) * (1 + 1e-14)
    a, b = p.s1h_apply(0.3, v), p.s1h_apply(0.3, v)
    assert np.array_equal(a, b), "cache coherence"
    return "25 times"


@check("propagator-exp-reduction")
def _exp_reduction() -> str:
    op = assemble(Mesh1D.uniform(0, 1, 16), CoefficientField(q=3.0), BoundaryCondition.dirichlet())
    p = MLPropagator(eigendecompose(op), 1.0)
    v = np.random.default_rng(6).standard_normal(op.n_dof)
    gen = sla.solve(op.mass, op.stiffness)
    worst = 0.0
    for t in (0.01, 0.1, 0.5):
        ref = sla.expm(-t * gen) @ v
        worst = max(worst, np.linalg.norm(p.s1h_apply(t, v) - ref) / np.linalg.norm(ref))
    assert worst <= 1e-9, f"matrix exponential mismatch {worst:.2e}"
    return f"max relative {worst:.1e}"


@check("propagator-oracle")
def _oracle() -> str:
    op = assemble(Mesh1D.uniform(0, 1, 17), CoefficientField(q=10.0), BoundaryCondition.dirichlet())
    p = MLPropagator(eigendecompose(op), 0.8)
    v = np.random.default_rng(7).standard_normal(op.n_dof)
    o = quadrature_oracle(op, 0.8, 0.5, v, "S2")
    e = np.linalg.norm(p.s2h_apply(0.5, v) - o) / np.linalg.norm(o)
    assert e <= 1e-6, f"spectral vs quadrature {e:.2e}"
    return f"relative {e:.1e}"


# }}}


# {{{ noise and scheme


@check("noise-coupling")
def _coupling() -> str:
    q = QWienerSpec(8, 1.0)
    j = JumpSpec(3.0, MarkLaw("uniform", -1.0, 1.0))
    p = sample_path(q, j, TimeGrid(1.0, 64), 11, 3)
    twice = coarsen(coarsen(p, 4), 2)
    once = coarsen(p, 8)
    assert np.array_equal(twice.wiener, once.wiener)
    assert np.array_equal(twice.jump_interval, once.jump_interval)
    again = sample_path(q, j, TimeGrid(1.0, 64), 11, 3)
    assert np.array_equal(again.base_brownian, p.base_brownian)
    assert np.array_equal(again.jump_times, p.jump_times)
    return "bitwise"


@check("scheme-linear-exactness")
def _linear() -> str:
    op = assemble(Mesh1D.uniform(0, 1, 32), CoefficientField(), BoundaryCondition.dirichlet())
    prob = ProblemSpec(0.8, 1.0, x0_sine)
    p = MLPropagator(eigendecompose(op), 0.8)
    path = sample_path(QWienerSpec(0), JumpSpec(), TimeGrid(1.0, 32), 0, 0)
    traj = step_all(prob, op, p, path, 1 / 32)
    worst = 0.0
    for m, t in zip(traj.steps, traj.times):
        ref = reference_linear(prob, op, p, t)
        worst = max(worst, np.linalg.norm(traj.states[m] - ref) / np.linalg.norm(ref))
    assert worst <= 1e-12, f"linear exactness {worst:.2e}"
    return f"max relative {worst:.1e}"


@check("rate-predictor")
def _rates() -> str:
    assert math.isclose(predicted_temporal_rate(0.8, 2.0), 0.2, rel_tol=1e-15)
    assert math.isclose(predicted_temporal_rate(0.9, 0.5), 0.1, rel_tol=1e-12)
    assert predicted_spatial_rate(1.0) == 1.0
    return "hand values"


# }}}


def run_all(echo: Callable[[str], None] = print) -> bool:
    ok = True
    for name, fn in CHECKS:
        t0 = time.perf_counter()
        try:
            detail = fn()
            echo(f"PASS {name}: {detail} ({time.perf_counter() - t0:.2f} s)")
        except Exception as exc:  # noqa: BLE001 - report every failure
            ok = False
            echo(f"FAIL {name}: {type(exc).__name__}: {exc}")
    return ok
