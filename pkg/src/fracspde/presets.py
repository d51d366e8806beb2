"""Named test problems.

P1  deterministic linear: F = B = G = 0, X0 = sin(pi x), D = 1, q = 0.
P2  multiplicative Wiener noise only, non-self-adjoint operator (q = 1).
P3  Wiener noise plus compensated Poisson jumps, q = 0.

Coefficient functions live at module level so that they pickle into worker
processes.
"""

from __future__ import annotations

import numpy as np

# Lipschitz constants: |d/du 1/(1+u^2)| <= 3 sqrt(3) / 8, b and g have slope 1/2
_L_F = 3.0 * np.sqrt(3.0) / 8.0
LIPSCHITZ = float(max(_L_F, 0.5))


def x0_sine(x: np.ndarray) -> np.ndarray:
    return np.sin(np.pi * x)


def x0_hat(x: np.ndarray) -> np.ndarray:
    """Tent function peaking at the midpoint of (0, 1)."""
    return 1.0 - np.abs(2.0 * x - 1.0)


def f_bounded(x: np.ndarray, u: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + u * u)


def b_linear(x: np.ndarray, u: np.ndarray) -> np.ndarray:
    return 0.5 * u


def g_clamped(x: np.ndarray, u: np.ndarray) -> np.ndarray:
    return np.clip(0.25 + 0.5 * u, -1.0, 1.0)


def profile_parabola(x: np.ndarray) -> np.ndarray:
    return 4.0 * x * (1.0 - x)


INITIAL_DATA = {"sine": x0_sine, "hat": x0_hat}

_COMMON = {
    "alpha": 0.8,
    "T": 1.0,
    "x0": "sine",
    "a": 0.0,
    "b": 1.0,
    "n_cells": 64,
    "D": 1.0,
    "q": 0.0,
    "c0": None,
    "bc": "dirichlet",
    "robin_alpha0": 0.0,
    "n_modes": 0,
    "decay": 1.0,
    "intensity": 0.0,
    "marks": "uniform",
    "mark_low": -1.0,
    "mark_high": 1.0,
    "mark_std": 1.0,
    "steps": 64,
    "seed": 42,
    "beta": 2.0,
    "time_ladder": [16, 32, 64, 128, 256, 512],
    "time_reference": 4096,
    "space_ladder": [8, 16, 32, 64, 128],
    "space_reference": 512,
    "space_steps": 64,
    "samples": 128,
    "out_dir": "out",
    "stability_ceiling": 100.0,
}

PRESETS: dict[str, dict] = {
    "P1": {**_COMMON, "space_reference": "analytic", "samples": 1},
    "P2": {**_COMMON, "q": 1.0, "n_modes": 16, "decay": 1.0},
    "P3": {**_COMMON, "n_modes": 16, "decay": 1.0, "intensity": 2.0},
}

# (f, b, g) per preset
COEFFICIENTS = {
    "P1": (None, None, None),
    "P2": (f_bounded, b_linear, None),
    "P3": (f_bounded, b_linear, g_clamped),
}
