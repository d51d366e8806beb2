"""Mittag-Leffler propagators ``S1h(t) = E_{a,1}(A_h t^a)`` and ``S2h(t) = E_{a,a}(A_h t^a)``.

The primary path diagonalises the pencil ``(K, M)`` once and evaluates the
scalar Mittag-Leffler function per eigenvalue. An independent oracle writes
both propagators as Mainardi-weighted averages of the analytic semigroup,

    S1h(t) = int_0^inf M_a(theta) exp(-theta t^a M^{-1} K) dtheta,
    S2h(t) = int_0^inf a theta M_a(theta) exp(-theta t^a M^{-1} K) dtheta,

and evaluates them with composite Gauss-Legendre quadrature and dense
matrix exponentials.
"""

from __future__ import annotations

import enum
import functools
import math
from typing import Iterable

import numpy as np
import scipy.linalg as sla

from .errors import CacheMissError, NonConvergenceError, UnsupportedPathError, ValidationError
from .fem import FemOperator, SpectralDecomposition, eigendecompose
from .mlf import gamma_fn, mainardi_moment, mainardi_wright, mittag_leffler

__all__ = ["MLPropagator", "Which", "propagator_for", "quadrature_oracle", "mainardi_rule"]


class Which(str, enum.Enum):
    S1 = "S1"
    S2 = "S2"


class MLPropagator:
    """Cached per-eigenvalue values ``E_{a,1}(-lambda_k t^a)`` and ``E_{a,a}(-lambda_k t^a)``.

    The cache is keyed on the exact floating-point time. After :meth:`freeze`
    the propagator is read-only and a lookup of an unseen time raises
    :class:`CacheMissError`.
    """

    def __init__(self, dec: SpectralDecomposition, alpha: float):
        if not (0.0 < alpha <= 1.0):
            raise ValidationError(f"propagator order must lie in (0, 1], got {alpha!r}")
        if not dec.is_real:
            raise UnsupportedPathError(
                "complex spectrum: the spectral propagator needs real eigenvalues; "
                "use the quadrature oracle path"
            )
        self.dec = dec
        self.alpha = float(alpha)
        self._cache: dict[float, tuple[np.ndarray, np.ndarray]] = {}
        self._tables: dict[tuple[float, int], tuple[np.ndarray, np.ndarray]] = {}
        self._frozen = False

    @property
    def frozen(self) -> bool:
        return self._frozen

    def freeze(self) -> None:
        self._frozen = True

    def __len__(self) -> int:
        return len(self._cache)

    def _compute(self, ts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        arg = -(ts[:, None] ** self.alpha) * self.dec.eigenvalues[None, :]
        return mittag_leffler(arg, self.alpha, 1.0), mittag_leffler(arg, self.alpha, self.alpha)

    def warm(self, times: Iterable[float]) -> None:
        ts = np.asarray(sorted({float(t) for t in times} - self._cache.keys()), dtype=float)
        if ts.size == 0:
            return
        if self._frozen:
            raise CacheMissError("propagator is frozen; cannot add times")
        if np.any(ts < 0.0) or not np.all(np.isfinite(ts)):
            raise ValidationError("propagator times must be finite and non-negative")
        e1, e2 = self._compute(ts)
        for t, r1, r2 in zip(ts.tolist(), e1, e2):
            r1.setflags(write=False)
            r2.setflags(write=False)
            self._cache[t] = (r1, r2)

    def values(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        t = float(t)
        hit = self._cache.get(t)
        if hit is None:
            if self._frozen:
                raise CacheMissError(f"propagator cache miss at t={t!r}")
            self.warm([t])
            hit = self._cache[t]
        return hit

    def s1h_apply(self, t: float, v: np.ndarray) -> np.ndarray:
        e1, _ = self.values(t)
        return self.dec.synthesize(e1 * self.dec.coefficients(v))

    def s2h_apply(self, t: float, v: np.ndarray) -> np.ndarray:
        _, e2 = self.values(t)
        return self.dec.synthesize(e2 * self.dec.coefficients(v))

    def kernel_tables(self, dt: float, m: int) -> tuple[np.ndarray, np.ndarray]:
        """Per-step spectral factors on the grid ``t_k = k dt``.

        Returns ``E1`` of shape ``(m+1, n)`` with rows ``E_{a,1}(-lambda t_k^a)``
        and ``W`` of shape ``(m+1, n)`` with rows
        ``t_l^(a-1) E_{a,a}(-lambda t_l^a)`` for lags ``l >= 1`` (row 0 unused).
        """
        key = (float(dt), int(m))
        if key in self._tables:
            return self._tables[key]
        times = [k * dt for k in range(m + 1)]
        self.warm(times)
        n = self.dec.eigenvalues.size
        e1 = np.empty((m + 1, n))
        w = np.zeros((m + 1, n))
        for k, t in enumerate(times):
            a, b = self._cache[t]
            e1[k] = a
            if k:
                w[k] = t ** (self.alpha - 1.0) * b
        e1.setflags(write=False)
        w.setflags(write=False)
        self._tables[key] = (e1, w)
        return e1, w


def propagator_for(op: FemOperator, alpha: float) -> MLPropagator:
    """Propagator sharing one eigendecomposition per operator and order."""
    key = ("propagator", float(alpha))
    if key not in op.cache:
        op.cache[key] = MLPropagator(eigendecompose(op), alpha)
    return op.cache[key]


# {{{ Mainardi quadrature oracle

_GL_POINTS = 24
_GRADING_LEVELS = 30       # geometric panels down to 2^-30 near theta = 0
_UNIFORM_WIDTH = 0.25      # panel width on [1, Theta_max]
_TAIL_TOL = 1e-10


def _composite_rule(theta_max: float) -> tuple[np.ndarray, np.ndarray]:
    edges = np.concatenate([
        [0.0],
        2.0 ** np.arange(-_GRADING_LEVELS, 0, dtype=float),
        np.arange(1.0, theta_max + 0.5 * _UNIFORM_WIDTH, _UNIFORM_WIDTH),
    ])
    x, w = np.polynomial.legendre.leggauss(_GL_POINTS)
    left, width = edges[:-1, None], np.diff(edges)[:, None]
    nodes = left + 0.5 * width * (x[None, :] + 1.0)
    weights = 0.5 * width * w[None, :]
    return nodes.ravel(), weights.ravel()


@functools.lru_cache(maxsize=16)
def mainardi_rule(alpha: float) -> tuple[np.ndarray, np.ndarray, float, float]:
    """Quadrature nodes and Mainardi-weighted weights for ``int_0^inf M_a(theta) f(theta)``.

    ``Theta_max`` doubles until the tail mass, estimated from the zeroth and
    second moments, falls below 1e-10. Returns ``(nodes, weights, Theta_max,
    tail_estimate)``.
    """
    m2_exact = mainardi_moment(2.0, alpha)
    theta_max = 4.0
    while theta_max <= 256.0:
        nodes, w = _composite_rule(theta_max)
        wm = w * mainardi_wright(nodes, alpha)
        m0 = math.fsum(wm)
        m2 = math.fsum(wm * nodes**2)
        tail = max(abs(1.0 - m0), abs(m2_exact - m2) / theta_max**2)
        if tail < _TAIL_TOL:
            nodes.setflags(write=False)
            wm.setflags(write=False)
            return nodes, wm, theta_max, tail
        theta_max *= 2.0
    raise NonConvergenceError(
        f"Mainardi tail truncation estimate {tail:.2e} above {_TAIL_TOL:.0e} for alpha={alpha}"
    )


def quadrature_oracle(op, alpha: float, t: float, v: np.ndarray, which: Which | str = Which.S1,
                      *, batch: int = 256) -> np.ndarray:
    """Mainardi-quadrature evaluation of ``S1h(t) v`` or ``S2h(t) v``.

    ``op`` is a :class:`FemOperator` or a bare ``(K, M)`` pair.
    """
    which = Which(which)
    if not (0.0 < alpha < 1.0):
        raise ValidationError("the Mainardi representation needs alpha in (0, 1)")
    if not (t >= 0.0 and math.isfinite(t)):
        raise ValidationError("t must be finite and non-negative")
    if which is Which.S2 and t == 0.0:
        raise ValidationError("S2 oracle needs t > 0")
    if isinstance(op, FemOperator):
        k, m = op.stiffness, op.mass
    else:
        k, m = (np.atleast_2d(np.asarray(a, dtype=float)) for a in op)
    v = np.asarray(v, dtype=float)
    if v.shape != (k.shape[0],):
        raise ValidationError(f"vector of length {k.shape[0]} expected, got shape {v.shape}")

    nodes, wm, _, _ = mainardi_rule(float(alpha))
    if which is Which.S2:
        wm = alpha * nodes * wm
    if t == 0.0:
        return math.fsum(wm) * v
    gen = sla.solve(m, k) * t**alpha
    out = np.zeros_like(v)
    for s in range(0, nodes.size, batch):
        th = nodes[s:s + batch]
        mats = sla.expm(-th[:, None, None] * gen[None, :, :])
        out += np.einsum("b,bij,j->i", wm[s:s + batch], mats, v)
    return out


# }}}


def s2h_limit(alpha: float, v: np.ndarray) -> np.ndarray:
    """``lim_{t->0} S2h(t) v = v / Gamma(alpha)``."""
    return np.asarray(v, dtype=float) / gamma_fn(alpha)
