"""Truncated Fock-space algebra for the two-mode (target, auxiliary) system.

Joint basis ordering is row-major over ``(n_a, n_b)``::

    index = n_a * dim_aux + n_b

so that ``a`` acts as ``a ⊗ I`` and ``b`` as ``I ⊗ b`` under ``np.kron``.
Operators are stored as scipy CSR matrices; call :meth:`ModeOperator.dense`
when a dense array is needed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import scipy.sparse as sp

Mode = Literal["target", "aux"]

HERMITIAN_RTOL = 1e-12


class TruncationWarning(UserWarning):
    """Truncated thermal distribution lost a noticeable part of its tail."""


@dataclass(frozen=True)
class FockSpace:
    dim_target: int
    dim_aux: int

    def __post_init__(self):
        for name in ("dim_target", "dim_aux"):
            d = getattr(self, name)
            if int(d) != d or d < 2:
                raise ValueError(f"{name} must be an integer >= 2, got {d!r}")

    @property
    def dim(self) -> int:
        return self.dim_target * self.dim_aux

    def mode_dim(self, which: Mode) -> int:
        if which == "target":
            return self.dim_target
        if which == "aux":
            return self.dim_aux
        raise ValueError(f"unknown mode {which!r}; expected 'target' or 'aux'")

    def index(self, n_a: int, n_b: int) -> int:
        if not (0 <= n_a < self.dim_target and 0 <= n_b < self.dim_aux):
            raise IndexError(f"Fock label ({n_a}, {n_b}) outside {self}")
        return n_a * self.dim_aux + n_b

    def labels(self) -> np.ndarray:
        """``(dim, 2)`` integer array of ``(n_a, n_b)`` for every joint index."""
        n_a, n_b = np.divmod(np.arange(self.dim), self.dim_aux)
        return np.stack([n_a, n_b], axis=1)

    def embed(self, single: sp.spmatrix, which: Mode) -> sp.csr_matrix:
        """Lift a single-mode matrix onto the joint space."""
        if which == "target":
            out = sp.kron(single, sp.identity(self.dim_aux), format="csr")
        else:
            self.mode_dim(which)
            out = sp.kron(sp.identity(self.dim_target), single, format="csr")
        return out


@dataclass(frozen=True, eq=False)
class ModeOperator:
    matrix: sp.csr_matrix
    label: str = ""
    hermitian: bool = False

    def __post_init__(self):
        m = sp.csr_matrix(self.matrix, dtype=complex)
        if m.shape[0] != m.shape[1]:
            raise ValueError(f"operator {self.label!r} is not square: {m.shape}")
        m.sort_indices()
        object.__setattr__(self, "matrix", m)
        if self.hermitian:
            scale = max(sp.linalg.norm(m), 1.0)
            if sp.linalg.norm(m - m.conj().T) > HERMITIAN_RTOL * scale:
                raise ValueError(f"operator {self.label!r} flagged Hermitian but is not")

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    def dag(self) -> ModeOperator:
        return ModeOperator(self.matrix.conj().T.tocsr(), f"{self.label}†", self.hermitian)

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def __matmul__(self, other):
        if isinstance(other, ModeOperator):
            return ModeOperator(self.matrix @ other.matrix, f"{self.label}{other.label}")
        return self.matrix @ other


def single_mode_annihilation(dim: int) -> sp.csr_matrix:
    """Matrix of ``c`` on a ``dim``-level truncation: ``<n-1|c|n> = sqrt(n)``."""
    return sp.diags(np.sqrt(np.arange(1, dim, dtype=float)), offsets=1,
                    shape=(dim, dim), format="csr", dtype=complex)


def annihilation(space: FockSpace, which_mode: Mode) -> ModeOperator:
    c = single_mode_annihilation(space.mode_dim(which_mode))
    name = "a" if which_mode == "target" else "b"
    return ModeOperator(space.embed(c, which_mode), name)


def creation(space: FockSpace, which_mode: Mode) -> ModeOperator:
    return annihilation(space, which_mode).dag()


def number(space: FockSpace, which_mode: Mode) -> ModeOperator:
    n = sp.diags(np.arange(space.mode_dim(which_mode), dtype=complex), format="csr")
    name = "a†a" if which_mode == "target" else "b†b"
    return ModeOperator(space.embed(n, which_mode), name, hermitian=True)


def identity(space: FockSpace) -> ModeOperator:
    return ModeOperator(sp.identity(space.dim, dtype=complex, format="csr"), "I", hermitian=True)


@dataclass(eq=False)
class JointState:
    """Pure state on the joint space (not necessarily normalized)."""

    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex).reshape(-1)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> JointState:
        nrm = self.norm
        if nrm == 0:
            raise ValueError("cannot normalize the zero vector")
        return JointState(self.amplitudes / nrm)

    def to_density(self) -> DensityOperator:
        psi = self.normalized().amplitudes
        return DensityOperator(np.outer(psi, psi.conj()))


def fock_state(space: FockSpace, n_a: int, n_b: int) -> JointState:
    psi = np.zeros(space.dim, dtype=complex)
    psi[space.index(n_a, n_b)] = 1.0
    return JointState(psi)


@dataclass(eq=False)
class DensityOperator:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"density matrix must be square, got shape {m.shape}")
        self.matrix = m

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def check(self, trace_tol: float = 1e-9, herm_tol: float = 1e-10,
              eig_tol: float = 1e-9) -> None:
        """Raise ``ValueError`` if the matrix is not a valid state."""
        m = self.matrix
        if abs(self.trace() - 1) > trace_tol:
            raise ValueError(f"trace {self.trace():.12g} differs from 1")
        scale = max(np.linalg.norm(m), 1.0)
        if np.linalg.norm(m - m.conj().T) > herm_tol * scale:
            raise ValueError("density matrix is not Hermitian")
        lo = np.linalg.eigvalsh(0.5 * (m + m.conj().T)).min()
        if lo < -eig_tol:
            raise ValueError(f"density matrix has negative eigenvalue {lo:.3e}")


@dataclass(eq=False)
class ThermalState(DensityOperator):
    """Single-mode truncated Bose-Einstein state.

    ``n_truncated`` is the mean occupation actually carried by the
    renormalized truncated distribution, which falls below ``n_nominal`` when
    the truncation cuts off the geometric tail.
    """

    n_nominal: float = 0.0
    n_truncated: float = 0.0
    populations: np.ndarray = field(default=None, repr=False)


def thermal_populations(n_occ: float, dim: int) -> np.ndarray:
    """Renormalized geometric distribution ``p(n) ∝ (n_occ / (1 + n_occ))**n``."""
    if n_occ < 0:
        raise ValueError(f"mean occupation must be >= 0, got {n_occ}")
    if n_occ == 0:
        p = np.zeros(dim)
        p[0] = 1.0
        return p
    ratio = n_occ / (1.0 + n_occ)
    logp = np.arange(dim) * np.log(ratio)
    p = np.exp(logp - logp.max())
    return p / p.sum()


def thermal_state(space: FockSpace, which_mode: Mode, n_occ: float,
                  warn_rtol: float = 0.01) -> ThermalState:
    dim = space.mode_dim(which_mode)
    p = thermal_populations(n_occ, dim)
    mean = float(np.dot(np.arange(dim), p))
    if n_occ > 0 and abs(mean - n_occ) > warn_rtol * n_occ:
        warnings.warn(
            f"{which_mode} thermal state with n={n_occ} truncated at {dim} levels has "
            f"mean {mean:.4g} ({100 * (1 - mean / n_occ):.1f}% low); increase truncation",
            TruncationWarning, stacklevel=2)
    return ThermalState(np.diag(p).astype(complex), n_nominal=float(n_occ),
                        n_truncated=mean, populations=p)


def product_state(rho_target: DensityOperator, rho_aux: DensityOperator) -> DensityOperator:
    return DensityOperator(np.kron(rho_target.matrix, rho_aux.matrix))


def expectation(rho: DensityOperator | JointState, op: ModeOperator) -> complex:
    """``Tr(rho M)``, or ``<psi|M|psi>/<psi|psi>`` for a pure state."""
    if isinstance(rho, JointState):
        psi = rho.amplitudes
        if psi.shape[0] != op.shape[0]:
            raise ValueError(f"dimension mismatch: state {psi.shape[0]} vs operator {op.shape[0]}")
        return complex(np.vdot(psi, op.matrix @ psi) / np.vdot(psi, psi).real)
    m = rho.matrix
    if m.shape != op.shape:
        raise ValueError(f"dimension mismatch: state {m.shape} vs operator {op.shape}")
    # Tr(rho M) = sum_ij rho_ij M_ji
    mt = op.matrix.T.tocsr()
    return complex(mt.multiply(m).sum())
