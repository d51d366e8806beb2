"""Piecewise-linear finite elements on an interval.

Assembles the mass matrix ``M`` and the (possibly nonsymmetric) stiffness
matrix ``K`` of the bilinear form

    a(rho, xi) = int D rho' xi' + int (q rho') xi + c0 int rho xi  (+ Robin term)

so that the discrete generator acts as ``A_h = -M^{-1} K`` on nodal
coefficients. Dirichlet nodes are eliminated. Matrices are dense; the target
sizes are a few hundred degrees of freedom.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Union

import numpy as np
import scipy.linalg as sla

from .errors import IllConditionedError, NumericalError, UnsupportedPathError, ValidationError

Coefficient = Union[float, Callable[[np.ndarray], np.ndarray]]

# 3-point Gauss-Legendre on the reference cell [0, 1]
_GAUSS_S = np.array([0.5 - math.sqrt(15.0) / 10.0, 0.5, 0.5 + math.sqrt(15.0) / 10.0])
_GAUSS_W = np.array([5.0, 8.0, 5.0]) / 18.0

# eigenbasis condition number above which the spectral path is refused
CONDITION_LIMIT = 1e8


@dataclass(frozen=True, eq=False)
class Mesh1D:
    nodes: np.ndarray

    def __post_init__(self) -> None:
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ValidationError("mesh needs at least two nodes")
        if not np.all(np.isfinite(nodes)):
            raise ValidationError("mesh nodes must be finite")
        if np.any(np.diff(nodes) <= 0.0):
            raise ValidationError("degenerate mesh: nodes must be strictly increasing")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def uniform(cls, a: float, b: float, n_cells: int) -> "Mesh1D":
        if int(n_cells) != n_cells or n_cells < 1:
            raise ValidationError(f"n_cells must be a positive integer, got {n_cells!r}")
        if not b > a:
            raise ValidationError("domain must satisfy a < b")
        nodes = a + (b - a) * np.arange(n_cells + 1) / n_cells
        nodes[-1] = b
        return cls(nodes)

    @property
    def a(self) -> float:
        return float(self.nodes[0])

    @property
    def b(self) -> float:
        return float(self.nodes[-1])

    @property
    def n_cells(self) -> int:
        return self.nodes.size - 1

    @property
    def h(self) -> float:
        return float(np.max(np.diff(self.nodes)))

    def gauss_points(self) -> tuple[np.ndarray, np.ndarray]:
        """Quadrature points and weights, shape ``(n_cells, 3)``."""
        left = self.nodes[:-1, None]
        width = np.diff(self.nodes)[:, None]
        return left + width * _GAUSS_S[None, :], width * _GAUSS_W[None, :]


class BCKind(str, enum.Enum):
    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"
    ROBIN = "robin"


@dataclass(frozen=True)
class BoundaryCondition:
    kind: BCKind = BCKind.DIRICHLET
    alpha0: float = 0.0

    def __post_init__(self) -> None:
        kind = BCKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if not math.isfinite(self.alpha0):
            raise ValidationError("Robin coefficient must be finite")
        if kind is BCKind.NEUMANN and self.alpha0 != 0.0:
            raise ValidationError("Neumann condition is Robin with alpha0 = 0")

    @classmethod
    def dirichlet(cls) -> "BoundaryCondition":
        return cls(BCKind.DIRICHLET)

    @classmethod
    def neumann(cls) -> "BoundaryCondition":
        return cls(BCKind.NEUMANN)

    @classmethod
    def robin(cls, alpha0: float) -> "BoundaryCondition":
        return cls(BCKind.ROBIN, alpha0)

    @property
    def robin_coefficient(self) -> float:
        return 0.0 if self.kind is BCKind.DIRICHLET else float(self.alpha0)


def _evaluate(coef: Coefficient, x: np.ndarray) -> np.ndarray:
    if callable(coef):
        return np.broadcast_to(np.asarray(coef(x), dtype=float), x.shape)
    return np.full(x.shape, float(coef))


@dataclass(frozen=True)
class CoefficientField:
    """Diffusion ``D``, advection ``q`` and Garding shift ``c0``.

    ``c0=None`` selects the default shift: 0 when ``q`` vanishes, otherwise
    ``||q||_inf^2 / (2 c1)`` with ``c1 = min D``, both sampled at the mesh
    quadrature points.
    """

    D: Coefficient = 1.0
    q: Coefficient = 0.0
    c0: float | None = None

    def resolve_shift(self, mesh: Mesh1D) -> float:
        xs = np.concatenate([mesh.nodes, mesh.gauss_points()[0].ravel()])
        d = _evaluate(self.D, xs)
        c1 = float(np.min(d))
        if not c1 > 0.0 or not np.all(np.isfinite(d)):
            raise ValidationError(f"diffusion must be uniformly positive (min D = {c1})")
        if self.c0 is not None:
            if not (self.c0 >= 0.0 and math.isfinite(self.c0)):
                raise ValidationError("Garding shift c0 must be finite and non-negative")
            return float(self.c0)
        qmax = float(np.max(np.abs(_evaluate(self.q, xs))))
        return 0.0 if qmax == 0.0 else qmax**2 / (2.0 * c1)


@dataclass(frozen=True, eq=False)
class FemOperator:
    mesh: Mesh1D
    bc: BoundaryCondition
    coeff: CoefficientField
    mass: np.ndarray
    stiffness: np.ndarray
    c0: float
    dofs: np.ndarray  # mesh node index of each degree of freedom
    cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_dof(self) -> int:
        return self.dofs.size

    @property
    def coords(self) -> np.ndarray:
        return self.mesh.nodes[self.dofs]

    def apply_generator(self, v: np.ndarray) -> np.ndarray:
        """``A_h v = -M^{-1} K v``."""
        return -sla.cho_solve(self._mass_factor(), self.stiffness @ v)

    def _mass_factor(self):
        if "cho" not in self.cache:
            self.cache["cho"] = sla.cho_factor(self.mass)
        return self.cache["cho"]

    def norm(self, v: np.ndarray) -> float:
        """Discrete L2 norm ``sqrt(v^T M v)``."""
        v = np.asarray(v)
        return math.sqrt(max(float(np.real(np.vdot(v, self.mass @ v))), 0.0))

    def to_nodal(self, v: np.ndarray) -> np.ndarray:
        """Extend a dof vector by the Dirichlet zeros."""
        full = np.zeros(self.mesh.nodes.size, dtype=np.result_type(v, float))
        full[self.dofs] = v
        return full

    def project(self, f: Callable[[np.ndarray], np.ndarray], *, quad_mesh: Mesh1D | None = None):
        return l2_project(self.mesh, self.bc, f, quad_mesh=quad_mesh, mass=self.mass)

    def interpolate(self, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        return np.asarray(f(self.coords), dtype=float)


def _free_dofs(mesh: Mesh1D, bc: BoundaryCondition) -> np.ndarray:
    n = mesh.nodes.size
    if bc.kind is BCKind.DIRICHLET:
        if n < 3:
            raise ValidationError("Dirichlet problem needs at least one interior node")
        return np.arange(1, n - 1)
    return np.arange(n)


def _assemble_mass_full(mesh: Mesh1D) -> np.ndarray:
    n = mesh.nodes.size
    hk = np.diff(mesh.nodes)
    m = np.zeros((n, n))
    idx = np.arange(mesh.n_cells)
    np.add.at(m, (idx, idx), hk / 3.0)
    np.add.at(m, (idx + 1, idx + 1), hk / 3.0)
    np.add.at(m, (idx, idx + 1), hk / 6.0)
    np.add.at(m, (idx + 1, idx), hk / 6.0)
    return m


def assemble(mesh: Mesh1D, coeff: CoefficientField, bc: BoundaryCondition) -> FemOperator:
    """Assemble ``M`` and ``K`` with 3-point Gauss quadrature per cell."""
    c0 = coeff.resolve_shift(mesh)
    n = mesh.nodes.size
    xg, wg = mesh.gauss_points()
    hk = np.diff(mesh.nodes)[:, None]
    d = _evaluate(coeff.D, xg)
    q = _evaluate(coeff.q, xg)
    if not np.all(np.isfinite(q)):
        raise ValidationError("advection coefficient must be finite")

    s = _GAUSS_S[None, :]
    phi = (1.0 - s, s)                       # values at Gauss points
    dphi = (-1.0 / hk, 1.0 / hk)             # constant derivatives per cell
    k = np.zeros((n, n))
    cells = np.arange(mesh.n_cells)
    for a in range(2):          # test function
        for b in range(2):      # trial function
            local = np.sum(
                wg * (d * dphi[a] * dphi[b] + q * dphi[b] * phi[a] + c0 * phi[a] * phi[b]),
                axis=1,
            )
            np.add.at(k, (cells + a, cells + b), local)
    alpha0 = bc.robin_coefficient
    if alpha0:
        k[0, 0] += alpha0
        k[-1, -1] += alpha0

    m = _assemble_mass_full(mesh)
    dofs = _free_dofs(mesh, bc)
    sel = np.ix_(dofs, dofs)
    mass = np.ascontiguousarray(m[sel])
    stiff = np.ascontiguousarray(k[sel])
    mass.setflags(write=False)
    stiff.setflags(write=False)
    return FemOperator(mesh, bc, coeff, mass, stiff, c0, dofs)


def load_vector(mesh: Mesh1D, f: Callable[[np.ndarray], np.ndarray],
                quad_mesh: Mesh1D | None = None) -> np.ndarray:
    """``b_i = int f phi_i`` over all mesh nodes.

    ``quad_mesh`` (a refinement of ``mesh``) selects the integration cells;
    this makes the integral exact for piecewise-linear ``f`` living on the
    finer mesh.
    """
    qm = mesh if quad_mesh is None else quad_mesh
    if qm.a != mesh.a or qm.b != mesh.b:
        raise ValidationError("integration mesh must cover the same interval")
    xg, wg = qm.gauss_points()
    xg, wg = xg.ravel(), wg.ravel()
    fx = np.asarray(f(xg), dtype=float)
    if fx.shape != xg.shape or not np.all(np.isfinite(fx)):
        raise ValidationError("projected function must return finite values per point")
    cell = np.clip(np.searchsorted(mesh.nodes, xg, side="right") - 1, 0, mesh.n_cells - 1)
    left = mesh.nodes[cell]
    s = (xg - left) / (mesh.nodes[cell + 1] - left)
    b = np.zeros(mesh.nodes.size)
    np.add.at(b, cell, wg * fx * (1.0 - s))
    np.add.at(b, cell + 1, wg * fx * s)
    return b


def l2_project(mesh: Mesh1D, bc: BoundaryCondition, f: Callable[[np.ndarray], np.ndarray], *,
               quad_mesh: Mesh1D | None = None, mass: np.ndarray | None = None) -> np.ndarray:
    """L2 projection onto the finite element space: solve ``M v = b``."""
    dofs = _free_dofs(mesh, bc)
    if mass is None:
        m = _assemble_mass_full(mesh)
        mass = m[np.ix_(dofs, dofs)]
    b = load_vector(mesh, f, quad_mesh)[dofs]
    try:
        return sla.cho_solve(sla.cho_factor(mass), b)
    except sla.LinAlgError as exc:  # pragma: no cover - mass is SPD by construction
        raise NumericalError("singular mass matrix") from exc


def prolong(coarse: FemOperator, v: np.ndarray, fine: FemOperator) -> np.ndarray:
    """Linear interpolation of a coarse dof vector at the fine dof coordinates."""
    full = coarse.to_nodal(v)
    return np.interp(fine.coords, coarse.mesh.nodes, full)


# {{{ spectral decomposition


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Generalised eigenpairs ``K phi_k = lambda_k M phi_k``.

    Columns of ``vectors`` have unit M-norm. ``inverse`` maps dof vectors to
    spectral coefficients; for a symmetric pencil it equals ``vectors.T @ M``.
    """

    eigenvalues: np.ndarray
    vectors: np.ndarray
    inverse: np.ndarray
    condition_estimate: float
    symmetric: bool
    residuals: np.ndarray

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.eigenvalues)

    def coefficients(self, v: np.ndarray) -> np.ndarray:
        return self.inverse @ v

    def synthesize(self, c: np.ndarray) -> np.ndarray:
        out = self.vectors @ c
        return out.real if np.iscomplexobj(out) and self.is_real else out


def _is_symmetric(k: np.ndarray) -> bool:
    return bool(np.max(np.abs(k - k.T)) <= 1e-14 * np.max(np.abs(k)))


def eigendecompose(op: FemOperator | tuple[np.ndarray, np.ndarray]) -> SpectralDecomposition:
    """Dense generalised eigendecomposition of ``(K, M)``.

    Also accepts a bare ``(K, M)`` pair. Raises :class:`IllConditionedError`
    when the eigenbasis is too ill-conditioned for the spectral propagator;
    the quadrature oracle is the fallback in that case.
    """
    if isinstance(op, FemOperator):
        if "spectral" in op.cache:
            return op.cache["spectral"]
        k, m = op.stiffness, op.mass
    else:
        k, m = (np.asarray(a, dtype=float) for a in op)
    knorm = float(np.linalg.norm(k, 2))

    if _is_symmetric(k):
        lam, phi = sla.eigh(k, m)
        inv = phi.T @ m
        cond = 1.0
        symmetric = True
    else:
        lam, phi = sla.eig(k, m)
        if np.max(np.abs(lam.imag)) <= 1e-10 * np.max(np.abs(lam)):
            lam, phi = lam.real, phi.real
        order = np.lexsort((lam.imag, lam.real)) if np.iscomplexobj(lam) else np.argsort(lam)
        lam, phi = lam[order], phi[:, order]
        mnorm = np.sqrt(np.real(np.einsum("ik,ij,jk->k", phi.conj(), m, phi)))
        phi = phi / mnorm
        chol = np.linalg.cholesky(m)
        cond = float(np.linalg.cond(chol.T @ phi))
        if not (cond <= CONDITION_LIMIT):
            raise IllConditionedError(
                f"eigenbasis condition estimate {cond:.3e} exceeds {CONDITION_LIMIT:.0e}; "
                "use the quadrature oracle path"
            )
        inv = np.linalg.inv(phi)
        symmetric = False

    resid = np.linalg.norm(k @ phi - (m @ phi) * lam[None, :], axis=0) / np.linalg.norm(phi, axis=0)
    if np.any(resid > 1e-9 * knorm):
        raise NumericalError(f"eigenpair residual {resid.max():.3e} exceeds 1e-9 * ||K||")
    if np.any(np.real(lam) <= 0.0):
        raise NumericalError("spectrum of -A_h must lie in the right half-plane")
    for a in (lam, phi, inv, resid):
        a.setflags(write=False)
    dec = SpectralDecomposition(lam, phi, inv, cond, symmetric, resid)
    if isinstance(op, FemOperator):
        op.cache["spectral"] = dec
    return dec


def fractional_norm(dec: SpectralDecomposition, rho: float, v: np.ndarray) -> float:
    """``(sum_k lambda_k^(2 rho) |c_k|^2)^(1/2)`` with M-orthonormal coefficients ``c``."""
    if not dec.symmetric or not dec.is_real:
        raise UnsupportedPathError("fractional norms need a symmetric, real spectrum")
    c = dec.coefficients(np.asarray(v, dtype=float))
    return math.sqrt(float(np.sum(dec.eigenvalues ** (2.0 * rho) * c * c)))


# }}}


def write_triplets(path: str | Path, matrix: np.ndarray) -> None:
    """Dump the nonzeros of ``matrix`` as ``i j value`` lines (17 significant digits)."""
    matrix = np.asarray(matrix)
    rows, cols = np.nonzero(matrix)
    lines = [f"{i} {j} {matrix[i, j]:.17g}\n" for i, j in zip(rows, cols)]
    Path(path).write_text("".join(lines))


def read_triplets(path: str | Path, shape: tuple[int, int]) -> np.ndarray:
    out = np.zeros(shape)
    for line in Path(path).read_text().splitlines():
        if line.strip():
            i, j, v = line.split()
            out[int(i), int(j)] = float(v)
    return out
