"""Fully discrete Mittag-Leffler exponential integrator.

For ``m >= 1``

    X_m = S1h(t_m) X0h
          + sum_{j<m} (t_m - t_j)^(a-1) S2h(t_m - t_j)
                      [dt P_h F(X_j) + P_h B(X_j) dW_j + P_h G-jump_j]

All propagators share one eigenbasis, so the recursion runs on spectral
coefficients, where every propagator is a diagonal scaling. Coefficients are
applied nodally: ``F(X)_i = f(x_i, X_i)``, ``(B(X) dW)_i = b(x_i, X_i)
sum_k sqrt(q_k) d beta_k e_k^h(x_i)`` with ``e_k^h`` the projected
eigenfunctions, and the jump term is ``(sum z - dt nu(z)) g(x_i, X_i)
profile^h(x_i)`` for the multiplicative family ``G(z, u) = z g(u) profile``.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ._io import dumps, fmt_float, write_text
from .errors import BlowUpError, ValidationError
from .fem import FemOperator, SpectralDecomposition, eigendecompose
from .mlf import gamma_fn
from .mlop import MLPropagator
from .noise import JumpSpec, NoisePath, QWienerSpec

log = logging.getLogger(__name__)

NodalFn = Callable[[np.ndarray, np.ndarray], np.ndarray]

__all__ = [
    "ProblemSpec",
    "SchemeState",
    "Trajectory",
    "Advisory",
    "step_all",
    "reference_linear",
    "wellposedness_advisory",
]


@dataclass(frozen=True)
class ProblemSpec:
    """Data of the semilinear problem.

    ``f``, ``b`` and ``g`` map ``(x, u)`` arrays to arrays; ``None`` means the
    term is absent. The jump coefficient is ``G(z, u)(x) = z g(x, u(x)) profile(x)``
    with the profile supplied by the :class:`JumpSpec`.
    """

    alpha: float
    T: float
    x0: Callable[[np.ndarray], np.ndarray]
    f: NodalFn | None = None
    b: NodalFn | None = None
    g: NodalFn | None = None
    lipschitz_L: float = 0.0
    name: str = ""

    def __post_init__(self) -> None:
        if not (0.75 < self.alpha <= 1.0):
            raise ValidationError(f"alpha must lie in (3/4, 1], got {self.alpha!r}")
        if not (self.T > 0.0 and math.isfinite(self.T)):
            raise ValidationError("T must be finite and positive")
        if not (self.lipschitz_L >= 0.0 and math.isfinite(self.lipschitz_L)):
            raise ValidationError("Lipschitz constant must be finite and non-negative")

    @property
    def is_linear(self) -> bool:
        return self.f is None and self.b is None and self.g is None

    def check_lipschitz(self, x: np.ndarray, *, pairs: int = 64, scale: float = 4.0,
                        seed: int = 0) -> None:
        """Spot-check ``|h(x,u) - h(x,v)| <= L |u - v|`` for each declared coefficient."""
        rng = np.random.default_rng(seed)
        L = self.lipschitz_L
        for name in ("f", "b", "g"):
            fn = getattr(self, name)
            if fn is None:
                continue
            for _ in range(pairs):
                u = scale * rng.standard_normal(x.size)
                v = scale * rng.standard_normal(x.size)
                lhs = np.abs(fn(x, u) - fn(x, v))
                if np.any(lhs > L * np.abs(u - v) * (1.0 + 1e-12) + 1e-14):
                    raise ValidationError(
                        f"coefficient {name} violates the declared Lipschitz bound L={L}"
                    )


@dataclass(frozen=True)
class SchemeState:
    m: int
    t: float
    X: np.ndarray


@dataclass(frozen=True, eq=False)
class Trajectory:
    steps: np.ndarray            # grid indices of the stored states
    times: np.ndarray
    states: np.ndarray           # shape (len(steps), n_dof)
    dt: float
    coords: np.ndarray           # dof coordinates
    node_index: np.ndarray       # mesh node index of each dof
    mesh: dict
    seed: int | None = None
    sample_index: int | None = None

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def state(self, k: int) -> SchemeState:
        return SchemeState(int(self.steps[k]), float(self.times[k]), self.states[k])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "node_index", "x_coord", "value"])
        for t, row in zip(self.times, self.states):
            ts = fmt_float(t)
            for node, x, v in zip(self.node_index, self.coords, row):
                w.writerow([ts, int(node), fmt_float(x), fmt_float(v)])
        return buf.getvalue()

    def write(self, out_dir: str | Path, manifest: dict) -> tuple[Path, Path]:
        out_dir = Path(out_dir)
        csv_path = write_text(out_dir / "trajectory.csv", self.to_csv())
        json_path = write_text(out_dir / "manifest.json", dumps(manifest))
        return csv_path, json_path


# {{{ projected noise data


def _noise_setup(op: FemOperator, qspec: QWienerSpec | None, jspec: JumpSpec | None):
    """Nodal values of ``P_h e_k`` (rows) and of ``P_h profile``; cached on the operator."""
    key = ("noise", qspec, jspec)
    if key not in op.cache:
        if qspec is not None and qspec.n_modes:
            modes = np.stack([op.project(lambda x, k=k: qspec.eigenfunctions(x)[k])
                              for k in range(qspec.n_modes)])
        else:
            modes = np.zeros((0, op.n_dof))
        profile = op.project(jspec.profile) if jspec is not None else np.zeros(op.n_dof)
        modes.setflags(write=False)
        profile.setflags(write=False)
        op.cache[key] = (modes, profile)
    return op.cache[key]


# }}}


def _initial(problem: ProblemSpec, op: FemOperator) -> np.ndarray:
    key = ("x0", problem.x0)
    if key not in op.cache:
        x0h = op.project(problem.x0)
        x0h.setflags(write=False)
        op.cache[key] = x0h
    return op.cache[key]


def step_all(problem: ProblemSpec, femop: FemOperator, propagator: MLPropagator,
             path: NoisePath, dt: float, *, output_steps: Sequence[int] | None = None) -> Trajectory:
    """Run the scheme over the grid of ``path`` and return the requested states.

    ``output_steps`` defaults to every grid point ``0..n_steps``.
    """
    m_max = path.n_steps
    if not math.isclose(path.T, problem.T, rel_tol=1e-15, abs_tol=0.0):
        raise ValidationError(f"noise horizon {path.T} differs from problem horizon {problem.T}")
    if not math.isclose(path.dt, dt, rel_tol=1e-14, abs_tol=0.0):
        raise ValidationError(f"noise step {path.dt} differs from scheme step {dt}")
    if propagator.alpha != problem.alpha:
        raise ValidationError("propagator order differs from problem order")
    dt = path.dt
    dec = propagator.dec
    if output_steps is None:
        steps = np.arange(m_max + 1)
    else:
        steps = np.unique(np.asarray(output_steps, dtype=int))
        if steps.size == 0 or steps[0] < 0 or steps[-1] > m_max:
            raise ValidationError("output steps must lie on the grid")

    e1, w = propagator.kernel_tables(dt, m_max)
    x = femop.coords
    x0h = _initial(problem, femop)
    c0 = femop.c0
    phi, phi_inv = dec.vectors, dec.inverse

    use_b = problem.b is not None and path.n_modes > 0
    jspec = path.jspec
    use_g = problem.g is not None and path.jump_times.size > 0
    modes, profile = _noise_setup(femop, path.qspec if use_b else None,
                                  jspec if problem.g is not None else None)
    if use_b:
        noise_field = path.wiener @ modes          # (m_max, n_dof): sum_k sqrt(q_k) dbeta_k e_k^h
    if problem.g is not None and jspec is not None:
        jump_scalar = path.mark_sums() - dt * jspec.compensator_rate
        use_g = use_g or jspec.compensator_rate != 0.0

    coef0 = phi_inv @ x0h
    hist = np.zeros((m_max, dec.eigenvalues.size))
    out = np.empty((steps.size, x0h.size))
    want = np.zeros(m_max + 1, dtype=bool)
    want[steps] = True
    pos = 0
    X = x0h
    for m in range(m_max + 1):
        if m:
            spec = e1[m] * coef0 + np.einsum("jk,jk->k", w[m:0:-1], hist[:m])
            X = phi @ spec
            if not np.all(np.isfinite(X)):
                raise BlowUpError(m, f"non-finite state at step {m} (t={m * dt!r})")
        if want[m]:
            out[pos] = X
            pos += 1
        if m == m_max:
            break
        inc = np.zeros_like(X)
        if problem.f is not None:
            inc += dt * problem.f(x, X)
        if c0:
            inc += dt * c0 * X
        if use_b:
            inc += problem.b(x, X) * noise_field[m]
        if use_g:
            inc += jump_scalar[m] * (problem.g(x, X) * profile)
        hist[m] = phi_inv @ inc

    mesh = {"a": femop.mesh.a, "b": femop.mesh.b, "n_cells": femop.mesh.n_cells,
            "n_dof": femop.n_dof}
    return Trajectory(steps, steps * dt, out, dt, x, femop.dofs, mesh, path.seed,
                      path.sample_index)


def reference_linear(problem: ProblemSpec, femop: FemOperator, propagator: MLPropagator,
                     t: float) -> np.ndarray:
    """Exact semidiscrete mild solution ``S1h(t) X0h`` of the linear problem."""
    if not problem.is_linear:
        raise ValidationError("reference_linear needs F = B = G = 0")
    return propagator.s1h_apply(t, _initial(problem, femop))


@dataclass(frozen=True)
class Advisory:
    value: float
    passed: bool
    gamma: float
    C1: float = 1.0
    surrogate: bool = True
    message: str = field(default="")


def wellposedness_advisory(problem: ProblemSpec, dec: SpectralDecomposition | FemOperator,
                           *, C1: float = 1.0) -> Advisory:
    """Evaluate ``(9/2) (C1 a / Gamma(1+a))^2 (L / gamma) (1/(2a-1))^(1/2)``.

    ``C1 = 1`` and ``gamma = min Re(lambda_k)`` are surrogates for constants
    that are not computable; the result is advisory and never blocks a run.
    """
    if isinstance(dec, FemOperator):
        dec = eigendecompose(dec)
    a = problem.alpha
    gamma = float(np.min(np.real(dec.eigenvalues)))
    value = 4.5 * (C1 * a / gamma_fn(1.0 + a)) ** 2 * (problem.lipschitz_L / gamma) \
        * math.sqrt(1.0 / (2.0 * a - 1.0))
    passed = value < 1.0
    msg = (f"well-posedness advisory (surrogate C1={C1}, gamma={gamma:.6g}): "
           f"value {value:.6g} {'<' if passed else '>='} 1")
    if not passed:
        log.warning("%s; smallness condition not met", msg)
    return Advisory(value, passed, gamma, C1, True, msg)
