"""Products of single-mode ladder operators and a fused Lindblad kernel.

Every operator in the two-mode model is a sum of ``A ⊗ B`` where ``A`` and
``B`` each have a single nonzero diagonal: ``U[i, i + offset] = values[i]``.
Annihilation has offset +1, creation -1, number operators 0. Keeping that
structure lets the master-equation right-hand side run as one pass over the
density tensor ``rho[n_a, n_b, m_a, m_b]`` with no transposes or temporaries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True, eq=False)
class Ladder:
    offset: int
    values: np.ndarray

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    def matrix(self) -> sp.csr_matrix:
        d, o = self.dim, self.offset
        rows = np.arange(max(0, -o), min(d, d - o))
        return sp.csr_matrix((self.values[rows], (rows, rows + o)), shape=(d, d), dtype=complex)

    def __matmul__(self, other: Ladder) -> Ladder:
        # (U1 U2)[i, i + o1 + o2] = v1[i] * v2[i + o1]
        d = self.dim
        o = self.offset + other.offset
        v = np.zeros(d, complex)
        for i in range(d):
            j = i + self.offset
            if 0 <= j < d and 0 <= i + o < d:
                v[i] = self.values[i] * other.values[j]
        return Ladder(o, v)

    def dag(self) -> Ladder:
        d, o = self.dim, self.offset
        v = np.zeros(d, complex)
        for i in range(d):
            if 0 <= i + o < d:
                v[i + o] = np.conj(self.values[i])
        return Ladder(-o, v)


def lowering(dim: int) -> Ladder:
    v = np.zeros(dim, complex)
    v[:-1] = np.sqrt(np.arange(1, dim))
    return Ladder(1, v)


def raising(dim: int) -> Ladder:
    return lowering(dim).dag()


def eye(dim: int) -> Ladder:
    return Ladder(0, np.ones(dim, complex))


@dataclass(frozen=True, eq=False)
class LadderTerm:
    """``coef * (target ⊗ aux)``."""

    coef: complex
    target: Ladder
    aux: Ladder

    def matrix(self) -> sp.csr_matrix:
        return (self.coef * sp.kron(self.target.matrix(), self.aux.matrix(), format="csr")).tocsr()

    def dag(self) -> LadderTerm:
        return LadderTerm(np.conj(self.coef), self.target.dag(), self.aux.dag())

    def __matmul__(self, other: LadderTerm) -> LadderTerm:
        return LadderTerm(self.coef * other.coef, self.target @ other.target, self.aux @ other.aux)

    def scaled(self, c: complex) -> LadderTerm:
        return LadderTerm(self.coef * c, self.target, self.aux)


def to_matrix(terms, dim: int) -> sp.csr_matrix:
    out = sp.csr_matrix((dim, dim), dtype=complex)
    for t in terms:
        out = out + t.matrix()
    return out.tocsr()


class PackedTerms:
    """Array form of a list of :class:`LadderTerm` for the kernels."""

    def __init__(self, terms):
        terms = list(terms)
        n = len(terms)
        da = terms[0].target.dim if terms else 1
        db = terms[0].aux.dim if terms else 1
        self.n = n
        self.oa = np.array([t.target.offset for t in terms], np.int64)
        self.ob = np.array([t.aux.offset for t in terms], np.int64)
        self.va = np.zeros((n, da), complex)
        self.vb = np.zeros((n, db), complex)
        self.coef = np.array([t.coef for t in terms], complex)
        for k, t in enumerate(terms):
            self.va[k] = t.target.values
            self.vb[k] = t.aux.values


@numba.njit(cache=True, inline="always")
def _first(lo, base, parity):
    """Smallest ``j >= lo`` with ``(base + j) % 2 == parity`` (``lo`` if parity < 0)."""
    if parity < 0:
        return lo
    return lo + (parity - base - lo) % 2


@numba.njit(cache=True, fastmath=True)
def _lindblad_kernel(rho, out, diag, coef, oa, ob, va, vb, jc, joa, job, jva, jvb, parity):
    """out = -i (H rho - rho H†) + sum_k L_k rho L_k†, with H non-Hermitian (H_eff).

    ``diag`` holds the diagonal part of ``H`` on the ``(n_a, n_b)`` grid; the
    ladder arrays hold the off-diagonal terms. With ``parity >= 0`` only
    elements with ``(n_a + n_b + m_a + m_b) % 2 == parity`` are computed and
    the rest are zeroed; valid when every term preserves that parity and
    ``rho`` is already zero elsewhere. For each ket label ``(i1, i2)`` the bra block ``[:, :]`` is contiguous, so
    every term is a shifted, weighted block update without branches.
    """
    da, db = rho.shape[0], rho.shape[1]
    nt = coef.shape[0]
    nj = jc.shape[0]
    # right-multiplication weights i conj(c va[j1] vb[j2])
    wr = np.empty((nt, da, db), np.complex128)
    for k in range(nt):
        for j1 in range(da):
            for j2 in range(db):
                wr[k, j1, j2] = 1j * np.conj(coef[k] * va[k, j1] * vb[k, j2])
    jr = np.empty((nj, da, db), np.complex128)
    for k in range(nj):
        s = jc[k].real ** 2 + jc[k].imag ** 2
        for j1 in range(da):
            for j2 in range(db):
                jr[k, j1, j2] = s * np.conj(jva[k, j1] * jvb[k, j2])
    step = 2 if parity >= 0 else 1
    for i1 in range(da):
        for i2 in range(db):
            blk = out[i1, i2]
            src = rho[i1, i2]
            dl = -1j * diag[i1, i2]
            if parity >= 0:
                blk[:, :] = 0
            for j1 in range(da):
                for j2 in range(_first(0, i1 + i2 + j1, parity), db, step):
                    blk[j1, j2] = (dl + 1j * np.conj(diag[j1, j2])) * src[j1, j2]
            for k in range(nt):
                p1 = i1 + oa[k]
                p2 = i2 + ob[k]
                if 0 <= p1 < da and 0 <= p2 < db:
                    w = -1j * coef[k] * va[k, i1] * vb[k, i2]
                    src = rho[p1, p2]
                    for j1 in range(da):
                        for j2 in range(_first(0, i1 + i2 + j1, parity), db, step):
                            blk[j1, j2] += w * src[j1, j2]
                src = rho[i1, i2]
                lo1 = max(0, -oa[k])
                hi1 = min(da, da - oa[k])
                lo2 = max(0, -ob[k])
                hi2 = min(db, db - ob[k])
                for j1 in range(lo1, hi1):
                    for j2 in range(_first(lo2, i1 + i2 + j1, parity), hi2, step):
                        blk[j1, j2] += wr[k, j1, j2] * src[j1 + oa[k], j2 + ob[k]]
            for k in range(nj):
                p1 = i1 + joa[k]
                p2 = i2 + job[k]
                if 0 <= p1 < da and 0 <= p2 < db:
                    w = jva[k, i1] * jvb[k, i2]
                    src = rho[p1, p2]
                    lo1 = max(0, -joa[k])
                    hi1 = min(da, da - joa[k])
                    lo2 = max(0, -job[k])
                    hi2 = min(db, db - job[k])
                    for j1 in range(lo1, hi1):
                        for j2 in range(_first(lo2, i1 + i2 + j1, parity), hi2, step):
                            blk[j1, j2] += w * jr[k, j1, j2] * src[j1 + joa[k], j2 + job[k]]
    return out


@numba.njit(cache=True)
def _apply_kernel(psi, out, coef, oa, ob, va, vb):
    """out[i, :] = sum_k coef[k] va[k, i1] vb[k, i2] psi[i1+oa, i2+ob, :] for a batch of kets."""
    da, db, nb = psi.shape
    nt = coef.shape[0]
    for i1 in range(da):
        for i2 in range(db):
            for c in range(nb):
                out[i1, i2, c] = 0j
            for k in range(nt):
                p1 = i1 + oa[k]
                p2 = i2 + ob[k]
                if 0 <= p1 < da and 0 <= p2 < db:
                    w = coef[k] * va[k, i1] * vb[k, i2]
                    for c in range(nb):
                        out[i1, i2, c] += w * psi[p1, p2, c]
    return out


class LadderGenerator:
    """Matrix-form Lindblad right-hand side built from ladder terms.

    ``static`` and ``timed`` describe ``H_eff = H - (i/2) sum L†L``; ``timed``
    is a list of ``(coefficient_fn, terms)``. ``jumps`` holds the collapse
    operators with their rate folded into ``coef``.
    """

    def __init__(self, dims: tuple[int, int], static, timed, jumps):
        self.dims = dims
        self.static = list(static)
        self.timed = [(fn, list(ts)) for fn, ts in timed]
        da, db = dims
        self._diag = np.zeros((da, db), complex)
        off = []
        for t in self.static:
            if t.target.offset == 0 and t.aux.offset == 0:
                self._diag += t.coef * np.outer(t.target.values, t.aux.values)
            else:
                off.append(t)
        self._n_static = len(off)
        self._packed = PackedTerms(off + [t for _, ts in self.timed for t in ts])
        self._base = self._packed.coef.copy()
        self._slices = []
        pos = self._n_static
        for _, ts in self.timed:
            self._slices.append(slice(pos, pos + len(ts)))
            pos += len(ts)
        self._jumps = PackedTerms(jumps)
        p = self._packed
        # every Hamiltonian term changes n_a + n_b by an even amount
        self.preserves_parity = bool(np.all((p.oa + p.ob) % 2 == 0))
        self.parity = -1

    def enable_parity(self, rho: np.ndarray) -> bool:
        """Skip identically-zero odd-parity elements if ``rho`` allows it."""
        self.parity = -1
        if not self.preserves_parity:
            return False
        da, db = self.dims
        na, nb = np.divmod(np.arange(da * db), db)
        n = na + nb
        odd = (n[:, None] + n[None, :]) % 2 == 1
        if np.any(rho.reshape(da * db, da * db)[odd] != 0):
            return False
        self.parity = 0
        return True

    def coefficients(self, t: float) -> np.ndarray:
        coef = self._base.copy()
        for (fn, _), sl in zip(self.timed, self._slices):
            coef[sl] *= fn(t)
        return coef

    def __call__(self, t: float, rho: np.ndarray) -> np.ndarray:
        da, db = self.dims
        r = rho.reshape(da, db, da, db)
        out = np.empty_like(r)
        p, j = self._packed, self._jumps
        _lindblad_kernel(r, out, self._diag, self.coefficients(t), p.oa, p.ob, p.va, p.vb,
                         j.coef, j.oa, j.ob, j.va, j.vb, self.parity)
        return out.reshape(rho.shape)

    def apply_heff(self, t: float, psi: np.ndarray) -> np.ndarray:
        """``H_eff(t) @ psi`` for ``psi`` of shape ``(d,)`` or ``(d, batch)``."""
        da, db = self.dims
        flat = psi.ndim == 1
        x = np.ascontiguousarray(psi.reshape(da, db, -1))
        out = np.empty_like(x)
        p = self._packed
        _apply_kernel(x, out, self.coefficients(t), p.oa, p.ob, p.va, p.vb)
        out += self._diag[:, :, None] * x
        return out.reshape(-1) if flat else out.reshape(psi.shape)
