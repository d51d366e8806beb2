from __future__ import annotations

import json
import logging
import math

import numpy as np
import pytest
import scipy.linalg as sla

from fracspde.config import load_config
from fracspde.errors import BlowUpError, CacheMissError, ValidationError
from fracspde.fem import BoundaryCondition, CoefficientField, Mesh1D, assemble, eigendecompose
from fracspde.mlf import mittag_leffler
from fracspde.mlop import MLPropagator, propagator_for
from fracspde.noise import JumpSpec, QWienerSpec, TimeGrid, sample_path
from fracspde.presets import x0_sine
from fracspde.scheme import ProblemSpec, reference_linear, step_all, wellposedness_advisory


def unit(n, **kw):
    return assemble(Mesh1D.uniform(0, 1, n), CoefficientField(**kw), BoundaryCondition.dirichlet())


def quiet_path(T, steps):
    return sample_path(QWienerSpec(0), JumpSpec(), TimeGrid(T, steps), 0, 0)


def const_forcing(x, u):
    return np.full_like(u, 0.7)


# {{{ linear and deterministic cases


def test_linear_exactness_every_step():
    op = unit(64)
    prob = ProblemSpec(0.8, 1.0, x0_sine)
    p = propagator_for(op, 0.8)
    traj = step_all(prob, op, p, quiet_path(1.0, 64), 1 / 64)
    for m, t in zip(traj.steps, traj.times):
        ref = reference_linear(prob, op, p, t)
        assert np.linalg.norm(traj.states[m] - ref) <= 1e-12 * np.linalg.norm(ref)


def test_linear_single_mode_values():
    op = unit(64)
    dec = eigendecompose(op)
    prob = ProblemSpec(0.8, 1.0, x0_sine)
    p = propagator_for(op, 0.8)
    x0h = op.project(x0_sine)
    # the projected sine is a discrete eigenvector by symmetry of the uniform mesh
    c = dec.coefficients(x0h)
    k = int(np.argmax(np.abs(c)))
    mu = dec.eigenvalues[k]
    for t in (0.0, 0.3, 1.0):
        expect = mittag_leffler(-mu * t**0.8, 0.8) * x0h
        assert np.allclose(reference_linear(prob, op, p, t), expect, rtol=0, atol=1e-12)


def test_alpha_one_scalar_mode_exponential():
    op = unit(32)
    dec = eigendecompose(op)
    mode = dec.vectors[:, 0]
    prob = ProblemSpec(1.0, 0.5, lambda x: np.interp(x, op.mesh.nodes, op.to_nodal(mode)))
    p = MLPropagator(dec, 1.0)
    traj = step_all(prob, op, p, quiet_path(0.5, 16), 0.5 / 16)
    x0h = op.project(prob.x0)
    for m, t in zip(traj.steps, traj.times):
        assert np.allclose(traj.states[m], math.exp(-dec.eigenvalues[0] * t) * x0h, rtol=0, atol=1e-12)


def test_constant_forcing_matches_resummation():
    op = unit(16)
    alpha, T, n = 0.8, 1.0, 20
    prob = ProblemSpec(alpha, T, x0_sine, f=const_forcing)
    p = MLPropagator(eigendecompose(op), alpha)
    dt = T / n
    traj = step_all(prob, op, p, quiet_path(T, n), dt)
    x0h = op.project(x0_sine)
    f0 = np.full(op.n_dof, 0.7)
    for m in (1, 7, n):
        tm = m * dt
        ref = p.s1h_apply(tm, x0h)
        for j in range(m):
            lag = (m - j) * dt
            ref = ref + dt * lag ** (alpha - 1) * p.s2h_apply(lag, f0)
        assert np.allclose(traj.states[m], ref, rtol=1e-12, atol=1e-12)


def test_garding_shift_is_compensated():
    # with q != 0 the operator is shifted by c0; the scheme adds c0 X back, so it
    # converges to exp(-t M^{-1}(K - c0 M)) X0 at first order for alpha = 1
    op = unit(16, q=2.0)
    assert op.c0 == pytest.approx(2.0)
    prob = ProblemSpec(1.0, 1.0, x0_sine, f=lambda x, u: np.zeros_like(u))
    gen = sla.solve(op.mass, op.stiffness) - op.c0 * np.eye(op.n_dof)
    exact = sla.expm(-gen) @ op.project(x0_sine)
    p = MLPropagator(eigendecompose(op), 1.0)
    errs = []
    for n in (32, 64, 128):
        traj = step_all(prob, op, p, quiet_path(1.0, n), 1 / n)
        errs.append(op.norm(traj.final - exact))
    assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.1)
    assert errs[1] / errs[2] == pytest.approx(2.0, rel=0.1)


# }}}


# {{{ stochastic cases


@pytest.fixture(scope="module")
def p3():
    s = load_config(None, preset="P3").replace(steps=32)
    op = s.operator()
    return s, op, propagator_for(op, s.alpha)


def test_zero_noise_determinism(p3):
    s, op, p = p3
    prob = s.problem()
    path = quiet_path(s.T, 32)
    a = step_all(prob, op, p, path, 1 / 32)
    b = step_all(prob, op, p, path, 1 / 32)
    assert np.array_equal(a.states, b.states)


def test_adaptedness(p3):
    s, op, p = p3
    prob = s.problem()
    path = sample_path(s.qspec(), s.jspec(), TimeGrid(s.T, 32), 3, 0)
    base = step_all(prob, op, p, path, 1 / 32)
    k = 12
    bumped = path.base_brownian.copy()
    bumped[k:] += 5.0
    other = step_all(prob, op, p, path.with_brownian(bumped), 1 / 32)
    assert np.array_equal(base.states[: k + 1], other.states[: k + 1])
    assert not np.array_equal(base.states[k + 1], other.states[k + 1])


def test_mean_square_stability(p3):
    s, op, p = p3
    prob = s.problem()
    sq = np.zeros(33)
    for i in range(128):
        path = sample_path(s.qspec(), s.jspec(), TimeGrid(s.T, 32), s.seed, i)
        traj = step_all(prob, op, p, path, 1 / 32)
        sq += np.einsum("mi,ij,mj->m", traj.states, op.mass, traj.states)
    assert np.isfinite(sq).all()
    assert (sq / 128).max() < s.stability_ceiling


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_blow_up_reports_step():
    op = unit(8)
    prob = ProblemSpec(0.8, 1.0, x0_sine, f=lambda x, u: 1e200 * u**3, lipschitz_L=0.0)
    with pytest.raises(BlowUpError) as info:
        step_all(prob, op, MLPropagator(eigendecompose(op), 0.8), quiet_path(1.0, 16), 1 / 16)
    assert info.value.step >= 1


def test_frozen_cache_miss():
    op = unit(8)
    p = MLPropagator(eigendecompose(op), 0.8)
    p.freeze()
    with pytest.raises(CacheMissError):
        step_all(ProblemSpec(0.8, 1.0, x0_sine), op, p, quiet_path(1.0, 4), 0.25)


def test_grid_mismatch():
    op = unit(8)
    p = MLPropagator(eigendecompose(op), 0.8)
    with pytest.raises(ValidationError):
        step_all(ProblemSpec(0.8, 1.0, x0_sine), op, p, quiet_path(1.0, 4), 0.5)
    with pytest.raises(ValidationError):
        step_all(ProblemSpec(0.8, 2.0, x0_sine), op, p, quiet_path(1.0, 4), 0.25)


# }}}


# {{{ problem data and output


def test_problem_validation():
    with pytest.raises(ValidationError):
        ProblemSpec(0.7, 1.0, x0_sine)
    with pytest.raises(ValidationError):
        ProblemSpec(0.8, 0.0, x0_sine)
    with pytest.raises(ValidationError):
        reference_linear(ProblemSpec(0.8, 1.0, x0_sine, f=const_forcing), unit(4),
                         MLPropagator(eigendecompose(unit(4)), 0.8), 0.1)


def test_lipschitz_spot_check(p3):
    s, op, _ = p3
    s.problem().check_lipschitz(op.coords)
    bad = ProblemSpec(0.8, 1.0, x0_sine, f=lambda x, u: 3.0 * u, lipschitz_L=1.0)
    with pytest.raises(ValidationError):
        bad.check_lipschitz(op.coords)


def test_advisory(caplog):
    op = unit(64)
    dec = eigendecompose(op)
    zero = wellposedness_advisory(ProblemSpec(0.8, 1.0, x0_sine), dec)
    assert zero.value == 0.0 and zero.passed
    with caplog.at_level(logging.WARNING):
        big = wellposedness_advisory(ProblemSpec(0.8, 1.0, x0_sine, lipschitz_L=1e6), dec)
    assert not big.passed and "smallness" in caplog.text
    one = wellposedness_advisory(ProblemSpec(0.8, 1.0, x0_sine, lipschitz_L=1.0), op)
    gamma = dec.eigenvalues[0]
    expect = 4.5 * (0.8 / math.gamma(1.8)) ** 2 / gamma * math.sqrt(1 / 0.6)
    assert one.value == pytest.approx(expect, rel=1e-14)
    assert one.gamma == pytest.approx(np.pi**2, rel=5e-3)


def test_trajectory_csv_and_manifest(tmp_path):
    op = unit(4)
    prob = ProblemSpec(0.8, 1.0, x0_sine)
    traj = step_all(prob, op, MLPropagator(eigendecompose(op), 0.8), quiet_path(1.0, 4), 0.25,
                    output_steps=[0, 4])
    lines = traj.to_csv().splitlines()
    assert lines[0] == "t,node_index,x_coord,value"
    assert len(lines) == 1 + 2 * 3
    t, node, x, v = lines[-1].split(",")
    assert float(t) == 1.0 and node == "3" and float(x) == 0.75
    assert float(v) == traj.final[-1]
    csv_path, json_path = traj.write(tmp_path, {"seed": 1})
    assert json.loads(json_path.read_text()) == {"seed": 1}
    assert csv_path.read_text() == traj.to_csv()


# }}}
