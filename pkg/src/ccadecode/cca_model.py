"""Paired low-dimensional projections learned by diagonal-normalized CCA.

Training accumulates the per-view second-moment diagonals D1, D2 and the
cross-covariance Omega over (input, output) feature-vector pairs, takes the
m-rank thin SVD of D1^(-1/2) Omega D2^(-1/2), and keeps the two projection
maps A = D1^(-1/2) U and B = D2^(-1/2) V.  Inputs project as A^T phi(x),
outputs as B^T psi(y); match quality is the cosine of the two latents.

The sums are unnormalized on purpose: a common 1/n factor on D1, D2 and
Omega cancels inside D1^(-1/2) Omega D2^(-1/2), so leaving it out changes
nothing downstream.  Coordinates whose diagonal entry is zero (features
that never fired in training) are dropped before the SVD; the model keeps
index maps so projections silently ignore those features at apply time.

Model file layout (version 1, little-endian, documented for round-trips):

    magic   b"CCAM"
    u32     version = 1
    u32     m
    u64     d   (original input dim)
    u64     d'  (original output dim)
    u64     r   (# retained input coords)
    u64     r'  (# retained output coords)
    i64[r]  retained input indices, ascending
    i64[r'] retained output indices, ascending
    f64[m]  singular values, descending
    f64[r  * m]  A, row-major
    f64[r' * m]  B, row-major
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from typing import BinaryIO, Iterable

import numpy as np

from .sparse_linalg import (
    SparseVec,
    accumulate_cross_covariance,
    accumulate_diag_second_moment,
    scale_by_diag,
    thin_svd,
)

_MAGIC = b"CCAM"
_VERSION = 1

LatentVec = np.ndarray  # shape (m,), float64


@dataclass(frozen=True)
class CcaModel:
    m: int
    input_dim: int
    output_dim: int
    retained_input_idx: np.ndarray   # ascending original indices
    retained_output_idx: np.ndarray
    input_map: np.ndarray            # (r, m) = D1^(-1/2) U over retained rows
    output_map: np.ndarray           # (r', m)
    sigma: np.ndarray                # (m,), non-increasing

    def __post_init__(self):
        if self.input_map.shape != (self.retained_input_idx.size, self.m):
            raise ValueError("input_map shape mismatch")
        if self.output_map.shape != (self.retained_output_idx.size, self.m):
            raise ValueError("output_map shape mismatch")
        if self.sigma.shape != (self.m,):
            raise ValueError("sigma shape mismatch")
        if np.any(np.diff(self.sigma) > 0):
            raise ValueError("sigma must be non-increasing")
        for arr in (self.input_map, self.output_map, self.sigma):
            if not np.all(np.isfinite(arr)):
                raise ValueError("model entries must be finite")
        # position of each original feature among retained coords, -1 if dropped
        object.__setattr__(self, "_in_pos", _position_map(self.input_dim, self.retained_input_idx))
        object.__setattr__(self, "_out_pos", _position_map(self.output_dim, self.retained_output_idx))


def _position_map(dim: int, retained: np.ndarray) -> np.ndarray:
    pos = np.full(dim, -1, dtype=np.int64)
    pos[retained] = np.arange(retained.size)
    return pos


def train(pairs: Iterable[tuple[SparseVec, SparseVec]], m: int, seed: int) -> CcaModel:
    """Fit the projection pair on a stream of (input, output) feature vectors.

    Deterministic given the seed.  Raises on an empty stream, and on m
    larger than the retained (nonzero-diagonal) dimensions, reporting them.
    """
    data = list(pairs)
    if not data:
        raise ValueError("training stream is empty")
    d = data[0][0].dim
    d_out = data[0][1].dim
    d1 = accumulate_diag_second_moment((phi for phi, _ in data), d)
    d2 = accumulate_diag_second_moment((psi for _, psi in data), d_out)
    omega = accumulate_cross_covariance(data)
    scaled, kept_in, kept_out = scale_by_diag(omega, d1, d2)
    max_m = min(kept_in.size, kept_out.size)
    if not 1 <= m <= max_m:
        raise ValueError(
            f"m={m} out of range: retained dims are {kept_in.size} x {kept_out.size}")
    svd = thin_svd(scaled, m, seed)
    a = svd.u / np.sqrt(d1.diag[kept_in])[:, None]
    b = svd.v / np.sqrt(d2.diag[kept_out])[:, None]
    return CcaModel(m, d, d_out, kept_in, kept_out,
                    np.ascontiguousarray(a), np.ascontiguousarray(b), svd.sigma)


def project_input(model: CcaModel, phi: SparseVec) -> LatentVec:
    """A^T phi over retained coordinates; dropped/unseen features contribute 0."""
    if phi.dim != model.input_dim:
        raise ValueError(f"input dim {phi.dim} != model dim {model.input_dim}")
    return _project(model._in_pos, model.input_map, model.m, phi)


def project_output(model: CcaModel, psi: SparseVec) -> LatentVec:
    """B^T psi over retained coordinates; dropped/unseen features contribute 0."""
    if psi.dim != model.output_dim:
        raise ValueError(f"output dim {psi.dim} != model dim {model.output_dim}")
    return _project(model._out_pos, model.output_map, model.m, psi)


def _project(pos_map: np.ndarray, mat: np.ndarray, m: int, vec: SparseVec) -> LatentVec:
    if vec.nnz == 0:
        return np.zeros(m)
    pos = pos_map[vec.indices]
    live = pos >= 0
    if not live.any():
        return np.zeros(m)
    return mat[pos[live]].T @ vec.values[live]


def cosine(z: LatentVec, z2: LatentVec) -> float:
    """Cosine similarity; 0.0 when either vector has zero norm."""
    nz = np.linalg.norm(z)
    nz2 = np.linalg.norm(z2)
    if nz == 0.0 or nz2 == 0.0:
        return 0.0
    return float(np.dot(z, z2) / (nz * nz2))


def cca_objective(model: CcaModel, pairs: list[tuple[SparseVec, SparseVec]]) -> float:
    """Diagnostic objective sum_ij d_ij - n * sum_i d_ii^2.

    d_ij is the root half squared distance between the projected input i
    and projected output j.  Larger is better: matched pairs should sit
    close together while mismatched ones stay spread out.
    """
    if not pairs:
        raise ValueError("need at least one pair")
    u = np.stack([project_input(model, phi) for phi, _ in pairs])
    v = np.stack([project_output(model, psi) for _, psi in pairs])
    sq = np.sum((u[:, None, :] - v[None, :, :]) ** 2, axis=2)
    d = np.sqrt(0.5 * sq)
    n = len(pairs)
    return float(d.sum() - n * np.sum(np.diag(d) ** 2))


def save_model(model: CcaModel, fileobj_or_path) -> None:
    """Write the documented version-1 binary layout (lossless)."""
    if hasattr(fileobj_or_path, "write"):
        _write(model, fileobj_or_path)
    else:
        with open(fileobj_or_path, "wb") as fh:
            _write(model, fh)


def model_bytes(model: CcaModel) -> bytes:
    buf = io.BytesIO()
    _write(model, buf)
    return buf.getvalue()


def _write(model: CcaModel, fh: BinaryIO) -> None:
    fh.write(_MAGIC)
    fh.write(struct.pack("<IIQQQQ", _VERSION, model.m,
                         model.input_dim, model.output_dim,
                         model.retained_input_idx.size,
                         model.retained_output_idx.size))
    fh.write(model.retained_input_idx.astype("<i8").tobytes())
    fh.write(model.retained_output_idx.astype("<i8").tobytes())
    fh.write(model.sigma.astype("<f8").tobytes())
    fh.write(np.ascontiguousarray(model.input_map, dtype="<f8").tobytes())
    fh.write(np.ascontiguousarray(model.output_map, dtype="<f8").tobytes())


def load_model(fileobj_or_path) -> CcaModel:
    if hasattr(fileobj_or_path, "read"):
        return _read(fileobj_or_path)
    with open(fileobj_or_path, "rb") as fh:
        return _read(fh)


def _read(fh: BinaryIO) -> CcaModel:
    magic = fh.read(4)
    if magic != _MAGIC:
        raise ValueError(f"not a model file (magic {magic!r})")
    header = fh.read(struct.calcsize("<IIQQQQ"))
    version, m, d, d_out, r, r_out = struct.unpack("<IIQQQQ", header)
    if version != _VERSION:
        raise ValueError(f"unsupported model version {version}")

    def arr(count, dtype):
        raw = fh.read(count * np.dtype(dtype).itemsize)
        if len(raw) != count * np.dtype(dtype).itemsize:
            raise ValueError("truncated model file")
        return np.frombuffer(raw, dtype=dtype).copy()

    kept_in = arr(r, "<i8")
    kept_out = arr(r_out, "<i8")
    sigma = arr(m, "<f8")
    a = arr(r * m, "<f8").reshape(r, m)
    b = arr(r_out * m, "<f8").reshape(r_out, m)
    return CcaModel(m, d, d_out, kept_in, kept_out, a, b, sigma)
