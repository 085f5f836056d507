"""Sparse symmetric-positive-definite solver.

Row-compressed storage, Crout incomplete-LU factorization with dual
dropping (magnitude threshold relative to the row norm of the input,
plus a per-row fill cap), and preconditioned conjugate gradients with a
verified residual contract.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .errors import FactorizationError, ParameterError, SolverError


@dataclass(frozen=True)
class SparseSym:
    """Symmetric sparse matrix in CSR form with a positive diagonal."""

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray

    @classmethod
    def from_scipy(cls, A, validate: bool = True) -> "SparseSym":
        A = sp.csr_matrix(A)
        if A.shape[0] != A.shape[1]:
            raise ParameterError(f"matrix must be square, got {A.shape}")
        A.sort_indices()
        if validate:
            scale = max(np.abs(A.data).max(initial=0.0), 1.0)
            asym = abs(A - A.T)
            if asym.nnz and asym.data.max() > 1e-10 * scale:
                raise ParameterError("matrix is not symmetric")
            diag = A.diagonal()
            if np.any(diag <= 0):
                raise ParameterError("all diagonal entries must be present and > 0")
        return cls(
            n=A.shape[0],
            indptr=A.indptr.astype(np.int64),
            indices=A.indices.astype(np.int64),
            data=A.data.astype(np.float64),
        )

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (self.data, self.indices, self.indptr), shape=(self.n, self.n)
        )

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return _kernels.csr_matvec(self.indptr, self.indices, self.data, x)

    def row_norms(self) -> np.ndarray:
        """2-norm of each row (equal to the column norms by symmetry)."""
        sq = np.add.reduceat(self.data**2, self.indptr[:-1])
        return np.sqrt(sq)

    @property
    def nnz(self) -> int:
        return int(self.indptr[-1])


@dataclass(frozen=True)
class ILUFactors:
    """Unit-lower L (stored by columns, strict part) and upper U (stored
    by rows, diagonal first) from the incomplete factorization."""

    n: int
    l_colptr: np.ndarray
    l_rowidx: np.ndarray
    l_data: np.ndarray
    u_rowptr: np.ndarray
    u_colidx: np.ndarray
    u_data: np.ndarray
    drop_tol: float
    fill_limit: int

    def apply(self, r: np.ndarray) -> np.ndarray:
        """Approximate A^-1 r via the two triangular solves."""
        return _kernels.ilu_apply(
            self.l_colptr,
            self.l_rowidx,
            self.l_data,
            self.u_rowptr,
            self.u_colidx,
            self.u_data,
            r,
        )

    def l_matrix(self) -> sp.csr_matrix:
        """L including the unit diagonal, as a scipy matrix."""
        strict = sp.csc_matrix(
            (self.l_data, self.l_rowidx, self.l_colptr), shape=(self.n, self.n)
        )
        return (strict + sp.identity(self.n, format="csc")).tocsr()

    def u_matrix(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (self.u_data, self.u_colidx, self.u_rowptr), shape=(self.n, self.n)
        )


@dataclass(frozen=True)
class CGConfig:
    rel_tol: float = 1e-2
    max_iter: int = 500

    def __post_init__(self):
        if not 0.0 < self.rel_tol < 1.0:
            raise ParameterError(f"rel_tol must be in (0, 1), got {self.rel_tol}")
        if self.max_iter < 1:
            raise ParameterError(f"max_iter must be >= 1, got {self.max_iter}")


def crout_ilut(A: SparseSym, drop_tol: float, fill_limit: int) -> ILUFactors:
    """Incomplete LU of A in Crout order with dual dropping.

    Entries smaller than drop_tol times the 2-norm of the current row
    (column) of A are discarded; at most fill_limit largest-magnitude
    entries are kept per row of U and per column of L.
    """
    if drop_tol < 0:
        raise ParameterError(f"drop_tol must be >= 0, got {drop_tol}")
    fill_limit = int(fill_limit)
    if fill_limit < 1:
        raise ParameterError(f"fill_limit must be >= 1, got {fill_limit}")
    fail_row, u_rowptr, u_colidx, u_data, l_colptr, l_rowidx, l_data = (
        _kernels.crout_ilut(
            A.n,
            A.indptr,
            A.indices,
            A.data,
            A.row_norms(),
            float(drop_tol),
            fill_limit,
        )
    )
    if fail_row >= 0:
        raise FactorizationError(int(fail_row))
    return ILUFactors(
        n=A.n,
        l_colptr=l_colptr,
        l_rowidx=l_rowidx,
        l_data=l_data,
        u_rowptr=u_rowptr,
        u_colidx=u_colidx,
        u_data=u_data,
        drop_tol=float(drop_tol),
        fill_limit=fill_limit,
    )


def pcg_solve(
    A: SparseSym, b: np.ndarray, prec: ILUFactors, cfg: CGConfig
) -> tuple[np.ndarray, int, float]:
    """Preconditioned conjugate gradients.

    Returns (x, iterations, achieved relative residual). The residual
    contract ||A x - b|| <= rel_tol * ||b|| is verified on the true
    residual before returning, never on the recurrence alone.
    """
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (A.n,):
        raise ParameterError(f"rhs has shape {b.shape}, expected ({A.n},)")
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return np.zeros(A.n), 0, 0.0

    x = np.zeros(A.n)
    r = b.copy()
    z = prec.apply(r)
    p = z.copy()
    rz = float(r @ z)
    iterations = 0
    while iterations < cfg.max_iter:
        q = A.matvec(p)
        pq = float(p @ q)
        if pq <= 0.0:
            raise SolverError(float(np.linalg.norm(r)) / b_norm, iterations)
        alpha = rz / pq
        x += alpha * p
        r -= alpha * q
        iterations += 1
        if np.linalg.norm(r) <= cfg.rel_tol * b_norm:
            true_r = b - A.matvec(x)
            res = float(np.linalg.norm(true_r)) / b_norm
            if res <= cfg.rel_tol:
                return x, iterations, res
            # recurrence drifted from the true residual: restart from it
            r = true_r
            z = prec.apply(r)
            p = z.copy()
            rz = float(r @ z)
            continue
        z = prec.apply(r)
        rz_new = float(r @ z)
        beta = rz_new / rz
        rz = rz_new
        p = z + beta * p
    res = float(np.linalg.norm(b - A.matvec(x))) / b_norm
    raise SolverError(res, iterations)


def solve_spd(
    A: SparseSym,
    b: np.ndarray,
    cfg: CGConfig,
    drop_tol: float = 1e-3,
    fill_limit: int = 1000,
    max_retries: int = 3,
) -> tuple[np.ndarray, int, float]:
    """Factor-and-solve with an adaptive retry ladder.

    On factorization failure or non-convergence the drop tolerance is
    halved and the fill cap doubled, at most max_retries times, so that
    harder overlap regimes get a denser preconditioner automatically.
    """
    dt, fl = drop_tol, fill_limit
    for attempt in range(max_retries + 1):
        try:
            prec = crout_ilut(A, dt, fl)
            return pcg_solve(A, b, prec, cfg)
        except (FactorizationError, SolverError):
            if attempt == max_retries:
                raise
            dt /= 2.0
            fl *= 2
    raise AssertionError("unreachable")
