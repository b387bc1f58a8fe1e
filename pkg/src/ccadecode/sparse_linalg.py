"""Sparse accumulators and an m-rank thin SVD kernel.

The training pipeline only ever needs three reductions over the data
stream (a diagonal of second moments per view and a cross-covariance
matrix between the views) followed by one truncated SVD of the
diagonally scaled cross-covariance.  Everything here is built on
numpy/scipy primitives; the truncated SVD uses a randomized range
finder with power iterations on large inputs and plain dense LAPACK
below ``DENSE_SVD_CUTOFF``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np
import scipy.sparse as sp

# Below this min(rows, cols) the dense LAPACK path is cheaper and exact.
DENSE_SVD_CUTOFF = 200
# Randomized range finder parameters (power iterations / oversampling).
POWER_ITERATIONS = 4
OVERSAMPLING = 10

ORTHONORMALITY_TOL = 1e-8


@dataclass(frozen=True)
class SparseVec:
    """Sparse feature vector: strictly increasing indices, no stored zeros."""

    dim: int
    indices: np.ndarray  # int64, sorted, unique, < dim
    values: np.ndarray   # float64, finite, nonzero

    def __post_init__(self):
        if self.dim <= 0:
            raise ValueError(f"dim must be positive, got {self.dim}")
        idx = np.asarray(self.indices, dtype=np.int64)
        val = np.asarray(self.values, dtype=np.float64)
        if idx.shape != val.shape or idx.ndim != 1:
            raise ValueError("indices and values must be 1-d arrays of equal length")
        if idx.size:
            if idx[0] < 0 or idx[-1] >= self.dim:
                raise ValueError(f"index out of range [0, {self.dim})")
            if np.any(np.diff(idx) <= 0):
                raise ValueError("indices must be strictly increasing")
        if not np.all(np.isfinite(val)):
            raise ValueError("values must be finite")
        if np.any(val == 0.0):
            raise ValueError("zero values must not be stored")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)

    @classmethod
    def from_pairs(cls, dim: int, pairs: Iterable[tuple[int, float]]) -> "SparseVec":
        items = sorted((int(i), float(v)) for i, v in pairs if v != 0.0)
        idx = np.array([i for i, _ in items], dtype=np.int64)
        seen = set(idx.tolist())
        if len(seen) != len(idx):
            raise ValueError("duplicate indices")
        val = np.array([v for _, v in items], dtype=np.float64)
        return cls(dim, idx, val)

    @classmethod
    def from_dense(cls, vec: Sequence[float]) -> "SparseVec":
        arr = np.asarray(vec, dtype=np.float64)
        idx = np.flatnonzero(arr)
        return cls(arr.size, idx.astype(np.int64), arr[idx])

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.indices] = self.values
        return out


@dataclass(frozen=True)
class DiagMatrix:
    """Diagonal matrix with nonnegative entries (second-moment sums)."""

    dim: int
    diag: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.diag, dtype=np.float64)
        if d.shape != (self.dim,):
            raise ValueError(f"diag must have length {self.dim}")
        if not np.all(np.isfinite(d)) or np.any(d < 0):
            raise ValueError("diagonal entries must be finite and nonnegative")
        object.__setattr__(self, "diag", d)

    def __add__(self, other: "DiagMatrix") -> "DiagMatrix":
        if other.dim != self.dim:
            raise ValueError("dimension mismatch in merge")
        return DiagMatrix(self.dim, self.diag + other.diag)


@dataclass(frozen=True)
class SparseMatrix:
    """Coordinate-unique sparse matrix backed by a scipy CSR matrix."""

    rows: int
    cols: int
    csr: sp.csr_matrix

    def __post_init__(self):
        if self.csr.shape != (self.rows, self.cols):
            raise ValueError("backing matrix shape disagrees with rows/cols")
        if not np.all(np.isfinite(self.csr.data)):
            raise ValueError("matrix entries must be finite")

    @classmethod
    def from_triplets(cls, rows: int, cols: int,
                      i: Sequence[int], j: Sequence[int],
                      v: Sequence[float]) -> "SparseMatrix":
        coo = sp.coo_matrix(
            (np.asarray(v, dtype=np.float64),
             (np.asarray(i, dtype=np.int64), np.asarray(j, dtype=np.int64))),
            shape=(rows, cols))
        csr = coo.tocsr()          # sums duplicate coordinates
        csr.sum_duplicates()
        csr.eliminate_zeros()
        return cls(rows, cols, csr)

    @property
    def nnz(self) -> int:
        return int(self.csr.nnz)

    def items(self) -> Iterator[tuple[int, int, float]]:
        coo = self.csr.tocoo()
        yield from zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist())

    def toarray(self) -> np.ndarray:
        return self.csr.toarray()

    def __add__(self, other: "SparseMatrix") -> "SparseMatrix":
        if (other.rows, other.cols) != (self.rows, self.cols):
            raise ValueError("dimension mismatch in merge")
        return SparseMatrix(self.rows, self.cols, (self.csr + other.csr).tocsr())


@dataclass(frozen=True)
class ThinSvd:
    """Top-m singular triplets with column-orthonormal U, V."""

    u: np.ndarray      # rows x m
    sigma: np.ndarray  # m, descending, >= 0
    v: np.ndarray      # cols x m

    def __post_init__(self):
        m = self.sigma.size
        if self.u.shape[1] != m or self.v.shape[1] != m:
            raise ValueError("factor widths disagree with sigma length")
        if np.any(np.diff(self.sigma) > 0) or np.any(self.sigma < 0):
            raise ValueError("sigma must be nonnegative and non-increasing")
        for mat in (self.u, self.v):
            gram = mat.T @ mat
            defect = np.max(np.abs(gram - np.eye(m)))
            if defect > ORTHONORMALITY_TOL:
                raise ValueError(f"columns not orthonormal (defect {defect:.3e})")


def accumulate_diag_second_moment(vectors: Iterable[SparseVec], dim: int) -> DiagMatrix:
    """Sum of squared entries per coordinate over a vector stream.

    Rejects any vector whose dim differs, reporting its stream index.
    """
    out = np.zeros(dim)
    for k, vec in enumerate(vectors):
        if vec.dim != dim:
            raise ValueError(f"vector {k}: dim {vec.dim} != expected {dim}")
        out[vec.indices] += vec.values ** 2
    return DiagMatrix(dim, out)


def accumulate_cross_covariance(pairs: Iterable[tuple[SparseVec, SparseVec]]) -> SparseMatrix:
    """Sum of outer products sum_k phi_k psi_k^T as a sparse matrix."""
    rows = cols = -1
    ii: list[np.ndarray] = []
    jj: list[np.ndarray] = []
    vv: list[np.ndarray] = []
    for k, (phi, psi) in enumerate(pairs):
        if rows < 0:
            rows, cols = phi.dim, psi.dim
        if phi.dim != rows or psi.dim != cols:
            raise ValueError(
                f"pair {k}: dims ({phi.dim}, {psi.dim}) != expected ({rows}, {cols})")
        if phi.nnz == 0 or psi.nnz == 0:
            continue
        ii.append(np.repeat(phi.indices, psi.nnz))
        jj.append(np.tile(psi.indices, phi.nnz))
        vv.append(np.outer(phi.values, psi.values).ravel())
    if rows < 0:
        raise ValueError("empty pair stream: cross-covariance dims unknown")
    if not ii:
        return SparseMatrix(rows, cols, sp.csr_matrix((rows, cols)))
    return SparseMatrix.from_triplets(
        rows, cols, np.concatenate(ii), np.concatenate(jj), np.concatenate(vv))


def scale_by_diag(omega: SparseMatrix, d1: DiagMatrix, d2: DiagMatrix
                  ) -> tuple[SparseMatrix, np.ndarray, np.ndarray]:
    """Form diag(d1)^(-1/2) @ omega @ diag(d2)^(-1/2) over retained coordinates.

    Coordinates with a zero diagonal entry (features that never fired) have
    no defined scaling and are dropped.  Returns the scaled matrix together
    with the retained original row and column indices, in ascending order.
    """
    if d1.dim != omega.rows or d2.dim != omega.cols:
        raise ValueError("diagonal dims must match matrix dims")
    kept_rows = np.flatnonzero(d1.diag > 0).astype(np.int64)
    kept_cols = np.flatnonzero(d2.diag > 0).astype(np.int64)
    sub = omega.csr[kept_rows][:, kept_cols]
    left = sp.diags(1.0 / np.sqrt(d1.diag[kept_rows]))
    right = sp.diags(1.0 / np.sqrt(d2.diag[kept_cols]))
    scaled = (left @ sub @ right).tocsr()
    return (SparseMatrix(kept_rows.size, kept_cols.size, scaled),
            kept_rows, kept_cols)


def _fix_signs(u: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Deterministic orientation: largest-magnitude entry of each U column
    # made nonnegative, matching V column flipped along with it.
    lead = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[lead, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return u * signs, v * signs


def thin_svd(m_matrix: SparseMatrix, m: int, seed: int,
             dense_cutoff: int = DENSE_SVD_CUTOFF) -> ThinSvd:
    """Top-m singular triplets of a sparse matrix, deterministic given seed.

    Small matrices go through dense LAPACK.  Larger ones use a randomized
    range finder (Gaussian sketch of width m + OVERSAMPLING, POWER_ITERATIONS
    QR-reorthogonalized power iterations) so only mat-vec products against
    the sparse matrix are required.
    """
    rows, cols = m_matrix.rows, m_matrix.cols
    if not 1 <= m <= min(rows, cols):
        raise ValueError(f"m={m} out of range [1, {min(rows, cols)}]")
    if not np.all(np.isfinite(m_matrix.csr.data)):
        raise ValueError("matrix entries must be finite")

    if min(rows, cols) <= dense_cutoff:
        u, s, vt = np.linalg.svd(m_matrix.toarray(), full_matrices=False)
        u, s, v = u[:, :m], s[:m], vt[:m].T
    else:
        a = m_matrix.csr
        rng = np.random.default_rng(seed)
        width = min(m + OVERSAMPLING, min(rows, cols))
        sketch = rng.standard_normal((cols, width))
        q, _ = np.linalg.qr(a @ sketch)
        for _ in range(POWER_ITERATIONS):
            w, _ = np.linalg.qr(a.T @ q)
            q, _ = np.linalg.qr(a @ w)
        b = q.T @ a  # width x cols, dense
        ub, s, vt = np.linalg.svd(b, full_matrices=False)
        u, s, v = (q @ ub)[:, :m], s[:m], vt[:m].T

    u, v = _fix_signs(u, v)
    return ThinSvd(np.ascontiguousarray(u), np.ascontiguousarray(s),
                   np.ascontiguousarray(v))
