from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from fracspde.errors import ValidationError
from fracspde.noise import (
    JumpSpec,
    MarkLaw,
    QWienerSpec,
    TimeGrid,
    coarsen,
    compensated_jump_term,
    sample_path,
    write_path_csv,
)

from mc_checks import compensated_mean, jump_isometry, wiener_isometry

Q = QWienerSpec(8, 1.0)
J = JumpSpec(2.0, MarkLaw("uniform", -1.0, 1.0))


def within(est, expected, se, k=3.0):
    return np.all(np.abs(np.asarray(est) - expected) <= k * np.asarray(se))


# {{{ specs


def test_eigenvalues_and_basis():
    q = QWienerSpec(3, 1.0)
    assert np.allclose(q.eigenvalues, np.arange(1.0, 4.0) ** -3.001)
    x = np.linspace(0, 1, 2001)
    e = q.eigenfunctions(x)
    gram = integrate.trapezoid(e[:, None, :] * e[None, :, :], x, axis=2)
    assert np.allclose(gram, np.eye(3), atol=1e-5)
    shifted = QWienerSpec(2, 1.0, (2.0, 4.0)).eigenfunctions(np.array([3.0]))
    assert shifted[0, 0] == pytest.approx(1.0)


def test_mark_moments():
    u = MarkLaw("uniform", 0.0, 3.0)
    assert u.mean == 1.5 and u.second_moment == pytest.approx(3.0)
    n = MarkLaw("normal", std=2.0)
    assert n.mean == 0.0 and n.second_moment == 4.0
    assert JumpSpec(2.0, u).first_moment == 1.5
    assert JumpSpec(2.0, u).compensator_rate == 3.0


def test_spec_validation():
    with pytest.raises(ValidationError):
        QWienerSpec(-1)
    with pytest.raises(ValidationError):
        QWienerSpec(4, -0.5)
    with pytest.raises(ValidationError):
        MarkLaw("uniform", 1.0, 1.0)
    with pytest.raises(ValidationError):
        JumpSpec(-1.0)
    with pytest.raises(ValidationError):
        TimeGrid(1.0, 0)
    with pytest.raises(ValidationError):
        sample_path(Q, J, TimeGrid(1, 4), -1, 0)


# }}}


# {{{ sampling


def test_empty_path():
    p = sample_path(QWienerSpec(0), JumpSpec(), TimeGrid(1.0, 16), 42, 0)
    assert p.is_empty
    assert p.wiener.shape == (16, 0)
    assert np.all(p.mark_sums() == 0)


def test_reproducible_and_distinct():
    g = TimeGrid(1.0, 32)
    a, b = sample_path(Q, J, g, 5, 2), sample_path(Q, J, g, 5, 2)
    assert np.array_equal(a.base_brownian, b.base_brownian)
    assert np.array_equal(a.jump_times, b.jump_times)
    assert np.array_equal(a.jump_marks, b.jump_marks)
    c = sample_path(Q, J, g, 5, 3)
    assert not np.array_equal(a.base_brownian, c.base_brownian)


def test_jumps_sorted_inside_intervals():
    p = sample_path(Q, JumpSpec(40.0), TimeGrid(1.0, 8), 1, 0)
    assert np.all(np.diff(p.jump_times) > 0)
    for j in range(8):
        t, _ = p.jumps_in(j)
        assert np.all((t >= j / 8) & (t < (j + 1) / 8))
    assert p.jump_counts().sum() == p.jump_times.size


def test_increment_variance():
    g = TimeGrid(1.0, 16)
    per = np.array([(sample_path(Q, JumpSpec(), g, 3, s).wiener ** 2).sum(axis=1).mean()
                    for s in range(10_000)])
    est, se = per.mean(), per.std(ddof=1) / np.sqrt(per.size)
    assert within(est, g.dt * Q.trace, se)


def test_jump_count_mean():
    counts = np.array([sample_path(QWienerSpec(0), J, TimeGrid(1.0, 4), 4, s).jump_times.size
                       for s in range(10_000)])
    assert within(counts.mean(), 2.0, counts.std(ddof=1) / 100.0)


# }}}


# {{{ coupling


def test_coarsen_examples():
    p = sample_path(Q, J, TimeGrid(1.0, 16), 9, 1)
    assert coarsen(p, 1) is p
    one = coarsen(p, 16)
    s = p.brownian[0].copy()
    for row in p.brownian[1:]:
        s = s + row
    assert np.array_equal(one.brownian[0], s)
    assert np.all(one.jump_interval == 0)
    assert np.array_equal(one.jump_times, p.jump_times)
    with pytest.raises(ValidationError):
        coarsen(p, 3)


def test_coarse_variance_preserved():
    g = TimeGrid(1.0, 16)
    vals = np.array([coarsen(sample_path(QWienerSpec(1, 0.0), JumpSpec(), g, 2, s), 4).brownian[:, 0]
                     for s in range(5000)]).ravel()
    m2 = vals**2
    assert within(m2.mean(), 4 * g.dt, m2.std(ddof=1) / np.sqrt(m2.size))


@settings(max_examples=30, deadline=None)
@given(a=st.sampled_from([1, 2, 4]), b=st.sampled_from([1, 2, 4, 8]), seed=st.integers(0, 2**64 - 1),
       sample=st.integers(0, 10**6))
def test_coupling_exact(a, b, seed, sample):
    p = sample_path(Q, J, TimeGrid(1.0, 64), seed, sample)
    twice, once = coarsen(coarsen(p, a), b), coarsen(p, a * b)
    assert np.array_equal(twice.wiener, once.wiener)
    assert np.array_equal(twice.jump_interval, once.jump_interval)
    assert np.array_equal(twice.mark_sums(), once.mark_sums())


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**64 - 1), sample=st.integers(0, 10**9))
def test_reproducibility_property(seed, sample):
    g = TimeGrid(0.5, 8)
    a, b = sample_path(Q, J, g, seed, sample), sample_path(Q, J, g, seed, sample)
    assert np.array_equal(a.wiener, b.wiener) and np.array_equal(a.jump_marks, b.jump_marks)


# }}}


# {{{ compensated jumps and isometries


def test_compensated_term_examples():
    p = sample_path(QWienerSpec(0), JumpSpec(), TimeGrid(1.0, 4), 0, 0)
    assert np.all(compensated_jump_term(J, p, 0, np.zeros((0, 3)), np.zeros(3)) == 0)
    # two symmetric marks with a zero-mean law cancel
    from fracspde.noise import NoisePath

    path = NoisePath(1.0, 1, np.zeros(0), np.zeros((4, 0)), np.array([0.1, 0.2]), np.array([0.5, -0.5]),
                     np.array([0, 0]), 0, 0)
    g0 = np.array([1.0, 2.0, 3.0])
    marks = path.jumps_in(0)[1]
    out = compensated_jump_term(J, path, 0, marks[:, None] * g0, J.compensator_rate * g0)
    assert np.all(out == 0)


def test_wiener_isometry():
    assert within(*wiener_isometry())


def test_jump_isometry():
    assert within(*jump_isometry())


def test_compensated_mean_zero():
    assert within(*compensated_mean())


def test_path_csv(tmp_path):
    p = sample_path(QWienerSpec(2), JumpSpec(5.0), TimeGrid(1.0, 3), 1, 7)
    dest = tmp_path / "path.csv"
    write_path_csv(p, dest)
    lines = dest.read_text().splitlines()
    assert lines[0] == "sample,interval,stream,index,value"
    assert len(lines) == 1 + 6 + 2 * p.jump_times.size
    assert all(line.startswith("7,") for line in lines[1:])


# }}}
