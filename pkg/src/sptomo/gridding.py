"""Sparse gridding matrix: COO assembly, pruning, CSR conversion, disk cache.

The matrix S has shape (M, N) with M = n_x*n_y Cartesian Fourier grid points
and N = n_theta*n_p polar samples. Column i spreads polar sample i onto the
width^2 grid stencil around it; S^H interpolates the grid at the polar points.
Entry values carry the separable kernel weight times a unit-modulus phase
that absorbs both FFT-shifts and the rotation-center ramp, so the surrounding
FFTs never shift data.

Flattened grid index = gx * n_y + gy, i.e. Fortran-order raveling of an
(n_y, n_x) Fourier array.
"""

from __future__ import annotations

import hashlib
import os
import struct
import tempfile
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import CorruptCacheError
from .geometry import KernelSpec, ScanGeometry, kernel_eval, polar_coords, stencil_offsets

CACHE_MAGIC = b"SGCSR001"
CACHE_VERSION = 1
SENTINEL_ROW = -1


@dataclass
class SparseCOO:
    """Unordered triplet form (rows may contain the out-of-bounds sentinel -1)."""

    shape: tuple[int, int]
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray

    @property
    def nnz(self) -> int:
        return int(self.vals.size)


@dataclass
class SparseGridCSR:
    """Canonical CSR matrix plus its separately stored conjugate transpose."""

    shape: tuple[int, int]
    row_ptr: np.ndarray
    col_idx: np.ndarray
    vals: np.ndarray
    adj_row_ptr: np.ndarray
    adj_col_idx: np.ndarray
    adj_vals: np.ndarray

    @property
    def nnz(self) -> int:
        return int(self.vals.size)

    @property
    def matrix(self) -> sp.csr_matrix:
        """scipy view of S, shape (M, N)."""
        m = getattr(self, "_m", None)
        if m is None:
            m = sp.csr_matrix((self.vals, self.col_idx, self.row_ptr), shape=self.shape)
            self._m = m
        return m

    @property
    def adjoint(self) -> sp.csr_matrix:
        """scipy view of S^H, shape (N, M)."""
        m = getattr(self, "_madj", None)
        if m is None:
            m = sp.csr_matrix(
                (self.adj_vals, self.adj_col_idx, self.adj_row_ptr),
                shape=(self.shape[1], self.shape[0]))
            self._madj = m
        return m


def build_coo(geom: ScanGeometry, spec: KernelSpec,
              sample_weights: np.ndarray | None = None) -> SparseCOO:
    """Assemble raw COO triplets, exactly n_theta*n_p*width^2 of them.

    Each polar sample i at (p_x, p_y) emits one entry per stencil offset
    (s_x, s_y): row = (rint(p_x)+s_x)*n_y + (rint(p_y)+s_y), value =
    K(frac_x - s_x) * K(frac_y - s_y) * phase, where frac = p - rint(p) and
    phase = (-1)^(row_x + row_y) * exp(2j*pi*center*p/n_p).

    Out-of-bounds rows get the sentinel -1. Entries on the unpaired Fourier
    border (row_x == 0 or row_y == 0) and entries of the unpaired Nyquist
    ring p == -n_p/2 are emitted with value 0 so that pruning leaves an
    operator that maps real images to real sinograms to machine precision.

    ``sample_weights`` (length N) are folded into the values when given.
    """
    n_y = geom.n_y
    coords = polar_coords(geom)
    px = coords[:, 0].reshape(geom.sino_shape)
    py = coords[:, 1].reshape(geom.sino_shape)
    rx = np.rint(px)
    ry = np.rint(py)
    fx = px - rx
    fy = py - ry
    # Derive negative-frequency stencils by mirroring their positive
    # partners. Computing rint(c - t) and rint(c + t) independently lets
    # float rounding (different binades around c) break ties inconsistently,
    # which would leave the operator complex-valued on real images.
    pj = geom.signed_freqs()
    neg = pj < 0
    if geom.n_p % 2 == 0:
        neg &= pj != -(geom.n_p // 2)
    mirror = (geom.n_p - np.arange(geom.n_p)) % geom.n_p
    rx[:, neg] = geom.n_x - rx[:, mirror[neg]]
    fx[:, neg] = -fx[:, mirror[neg]]
    ry[:, neg] = geom.n_y - ry[:, mirror[neg]]
    fy[:, neg] = -fy[:, mirror[neg]]
    rx, ry, fx, fy = (a.ravel() for a in (rx, ry, fx, fy))
    sx, sy = stencil_offsets(spec.width)

    gx = rx.astype(np.int64)[:, None] + sx[None, :]
    gy = ry.astype(np.int64)[:, None] + sy[None, :]
    kx = kernel_eval(spec, fx[:, None] - sx[None, :])
    ky = kernel_eval(spec, fy[:, None] - sy[None, :])
    weight = kx * ky

    ramp_bin = np.exp(2j * np.pi * geom.center * pj / geom.n_p)
    ramp_bin[neg] = np.conj(ramp_bin[mirror[neg]])
    ramp = np.tile(ramp_bin, geom.n_theta)
    parity = np.where((gx + gy) % 2 == 0, 1.0, -1.0)
    vals = weight * parity * ramp[:, None]

    border = (gx == 0) | (gy == 0)
    vals[border] = 0.0
    if geom.n_p % 2 == 0:
        p_all = np.tile(pj, geom.n_theta)
        vals[p_all == -(geom.n_p // 2), :] = 0.0

    inb = (gx >= 0) & (gx < geom.n_x) & (gy >= 0) & (gy < n_y)
    rows = np.where(inb, gx * n_y + gy, SENTINEL_ROW)
    cols = np.broadcast_to(np.arange(geom.n_samples, dtype=np.int64)[:, None], rows.shape)

    if sample_weights is not None:
        sample_weights = np.asarray(sample_weights)
        if sample_weights.shape != (geom.n_samples,):
            raise ValueError(
                f"sample_weights has shape {sample_weights.shape}, "
                f"expected ({geom.n_samples},)")
        vals = vals * sample_weights[:, None]

    return SparseCOO(shape=(geom.n_grid, geom.n_samples),
                     rows=rows.ravel(), cols=np.ascontiguousarray(cols).ravel(),
                     vals=vals.ravel())


def prune(coo: SparseCOO, threshold: float = 0.0) -> SparseCOO:
    """Drop sentinel rows and entries with |val| <= threshold."""
    keep = (coo.rows != SENTINEL_ROW) & (np.abs(coo.vals) > threshold)
    return SparseCOO(shape=coo.shape, rows=coo.rows[keep],
                     cols=coo.cols[keep], vals=coo.vals[keep])


def coo_to_csr(coo: SparseCOO) -> SparseGridCSR:
    """Convert to canonical CSR (duplicates summed, columns sorted per row).

    The conjugate transpose is materialized alongside so adjoint applies
    never transpose on the fly.
    """
    if np.any(coo.rows == SENTINEL_ROW):
        raise ValueError("COO still contains sentinel rows; call prune() first")
    m = sp.coo_matrix(
        (coo.vals.astype(np.complex128), (coo.rows, coo.cols)),
        shape=coo.shape).tocsr()
    m.sum_duplicates()
    m.sort_indices()
    madj = m.conj().transpose().tocsr()
    madj.sum_duplicates()
    madj.sort_indices()
    return SparseGridCSR(
        shape=coo.shape,
        row_ptr=m.indptr.astype(np.int64), col_idx=m.indices.astype(np.int64),
        vals=m.data,
        adj_row_ptr=madj.indptr.astype(np.int64),
        adj_col_idx=madj.indices.astype(np.int64),
        adj_vals=madj.data)


def build_matrix(geom: ScanGeometry, spec: KernelSpec,
                 sample_weights: np.ndarray | None = None,
                 threshold: float = 0.0) -> SparseGridCSR:
    """build_coo -> prune -> coo_to_csr in one call."""
    return coo_to_csr(prune(build_coo(geom, spec, sample_weights), threshold))


@dataclass(frozen=True)
class MatrixCacheKey:
    """Content digest of everything the matrix values depend on."""

    digest: str  # 64 hex chars (sha256)

    @property
    def raw(self) -> bytes:
        return bytes.fromhex(self.digest)


def make_cache_key(geom: ScanGeometry, spec: KernelSpec, filter_id: str = "none",
                   version: int = CACHE_VERSION) -> MatrixCacheKey:
    h = hashlib.sha256()
    h.update(struct.pack("<5qd", version, geom.n_p, geom.n_theta, geom.n_x,
                         geom.n_y, geom.center))
    h.update(np.ascontiguousarray(geom.angles, dtype="<f8").tobytes())
    h.update(spec.cache_token().encode())
    h.update(b"|" + filter_id.encode())
    return MatrixCacheKey(digest=h.hexdigest())


def _cache_path(key: MatrixCacheKey, cache_dir: str) -> str:
    return os.path.join(cache_dir, key.digest + ".sgcsr")


def _write_block(fh, row_ptr: np.ndarray, col_idx: np.ndarray, vals: np.ndarray):
    fh.write(np.ascontiguousarray(row_ptr, dtype="<u8").tobytes())
    fh.write(np.ascontiguousarray(col_idx, dtype="<u8").tobytes())
    iv = np.empty((vals.size, 2), dtype="<f8")
    iv[:, 0] = vals.real
    iv[:, 1] = vals.imag
    fh.write(iv.tobytes())


def cache_store(key: MatrixCacheKey, matrix: SparseGridCSR, cache_dir: str) -> str:
    """Atomically write the matrix (and its transpose) under its digest name."""
    os.makedirs(cache_dir, exist_ok=True)
    path = _cache_path(key, cache_dir)
    header = CACHE_MAGIC + struct.pack(
        "<I3Q", CACHE_VERSION, matrix.shape[0], matrix.shape[1], matrix.nnz)
    fd, tmp = tempfile.mkstemp(dir=cache_dir, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(header)
            fh.write(key.raw)
            _write_block(fh, matrix.row_ptr, matrix.col_idx, matrix.vals)
            _write_block(fh, matrix.adj_row_ptr, matrix.adj_col_idx, matrix.adj_vals)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _read_exact(fh, nbytes: int, path: str) -> bytes:
    buf = fh.read(nbytes)
    if len(buf) != nbytes:
        raise CorruptCacheError(f"{path}: truncated (wanted {nbytes} bytes)")
    return buf


def _read_block(fh, n_rows: int, nnz: int, path: str):
    row_ptr = np.frombuffer(_read_exact(fh, 8 * (n_rows + 1), path), dtype="<u8")
    col_idx = np.frombuffer(_read_exact(fh, 8 * nnz, path), dtype="<u8")
    iv = np.frombuffer(_read_exact(fh, 16 * nnz, path), dtype="<f8").reshape(nnz, 2)
    vals = iv[:, 0] + 1j * iv[:, 1]
    return (row_ptr.astype(np.int64), col_idx.astype(np.int64), vals)


def cache_load(key: MatrixCacheKey, cache_dir: str) -> SparseGridCSR | None:
    """Load a cached matrix; None on miss, CorruptCacheError on bad content."""
    path = _cache_path(key, cache_dir)
    if not os.path.exists(path):
        return None
    with open(path, "rb") as fh:
        head = _read_exact(fh, len(CACHE_MAGIC) + struct.calcsize("<I3Q"), path)
        if head[:8] != CACHE_MAGIC:
            raise CorruptCacheError(f"{path}: bad magic {head[:8]!r}")
        version, m_rows, n_cols, nnz = struct.unpack("<I3Q", head[8:])
        if version != CACHE_VERSION:
            raise CorruptCacheError(f"{path}: unsupported version {version}")
        digest = _read_exact(fh, 32, path)
        if digest != key.raw:
            raise CorruptCacheError(f"{path}: digest mismatch")
        row_ptr, col_idx, vals = _read_block(fh, m_rows, nnz, path)
        adj_row_ptr, adj_col_idx, adj_vals = _read_block(fh, n_cols, nnz, path)
        if fh.read(1):
            raise CorruptCacheError(f"{path}: trailing bytes")
    if row_ptr[-1] != nnz or adj_row_ptr[-1] != nnz:
        raise CorruptCacheError(f"{path}: row_ptr/nnz disagree")
    return SparseGridCSR(shape=(int(m_rows), int(n_cols)),
                         row_ptr=row_ptr, col_idx=col_idx, vals=vals,
                         adj_row_ptr=adj_row_ptr, adj_col_idx=adj_col_idx,
                         adj_vals=adj_vals)
