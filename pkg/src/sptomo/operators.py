"""Tomographic operators built on the sparse gridding matrix.

Forward projection, its exact adjoint, and filtered backprojection are three
spellings of the same sandwich: a diagonal real-space factor (deapodization),
a unitary 2D FFT, the sparse matrix, and a unitary 1D FFT along the detector
axis. All FFTs use orthonormal scaling; a single physical scale factor
sqrt(n_x*n_y/n_p) makes the forward transform agree with unit-pixel ray sums
while keeping the operator pair exactly adjoint.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatchError
from .geometry import (Deapodization, KernelSpec, ScanGeometry,
                       deapodization_compute, support_mask)
from .gridding import (SparseGridCSR, build_matrix, cache_load, cache_store,
                       make_cache_key)

FILTER_KINDS = ("none", "ramlak", "shepplogan", "hamming", "density")


@dataclass
class FilterSpec:
    """Fourier-domain weights for backprojection or preconditioning.

    ``weights`` is radial (length n_p, indexed like the FFT of the detector
    axis) for the analytic filters, or per-sample (length n_theta*n_p) for
    the density filter. Extra fields record how a density solve went.
    """

    kind: str
    weights: np.ndarray
    residual_history: np.ndarray = None
    converged: bool = True
    final_residual: float = None

    def __post_init__(self):
        if self.kind not in FILTER_KINDS:
            raise ValueError(f"unknown filter kind {self.kind!r}")
        w = np.asarray(self.weights, dtype=np.float64)
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("filter weights must be finite and >= 0")
        self.weights = w


def make_filter(kind: str, geom: ScanGeometry) -> FilterSpec:
    """Radial filter weights over the FFT-ordered frequencies f = p/n_p.

    ramlak: |f|; shepplogan: |f|*sinc(f); hamming: |f|*(0.54+0.46*cos(2*pi*f));
    none: all ones. Density weights come from ``density_filter_solve``.
    """
    if kind == "density":
        raise ValueError("density weights are produced by density_filter_solve")
    f = geom.signed_freqs() / geom.n_p
    if kind == "none":
        w = np.ones(geom.n_p)
    elif kind == "ramlak":
        w = np.abs(f)
    elif kind == "shepplogan":
        w = np.abs(f) * np.sinc(f)
    elif kind == "hamming":
        w = np.abs(f) * (0.54 + 0.46 * np.cos(2.0 * np.pi * f))
    else:
        raise ValueError(f"unknown filter kind {kind!r}")
    return FilterSpec(kind=kind, weights=w)


def sample_weights(filt: FilterSpec, geom: ScanGeometry) -> np.ndarray:
    """Per-sample (length N) weight vector, tiling radial filters over angles."""
    w = filt.weights
    if w.shape == (geom.n_samples,):
        return w
    if w.shape == (geom.n_p,):
        return np.tile(w, geom.n_theta)
    raise ShapeMismatchError(
        f"filter weights shape {w.shape} fits neither (n_p,) nor (N,)")


@dataclass(frozen=True)
class Preconditioner:
    """Diagonal Fourier-domain weights applied along the detector axis."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=np.float64)
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("preconditioner weights must be finite and >= 0")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)


def _spectral_apply(sino: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Multiply the detector-axis spectrum by diagonal weights (unitary FFTs)."""
    out = np.fft.ifft(np.fft.fft(sino, axis=-1, norm="ortho") * weights,
                      axis=-1, norm="ortho")
    if not np.iscomplexobj(sino):
        return out.real
    return out


def precondition_apply(pre: Preconditioner, sino: np.ndarray) -> np.ndarray:
    """Apply the half-power preconditioner: spectrum times sqrt(weights).

    ``pre.weights`` holds the filter diagonal itself, so two applications
    equal one full filter pass; the energy of the output equals the
    weights-weighted spectral energy of the input. Weights may be radial
    (n_p,) or full per-sample arrays matching the sinogram shape (density
    compensation).
    """
    sino = np.asarray(sino)
    if sino.shape[-1] != pre.weights.shape[-1]:
        raise ShapeMismatchError(
            f"sinogram last axis {sino.shape[-1]} != weights {pre.weights.shape[-1]}")
    return _spectral_apply(sino, np.sqrt(pre.weights))


def spmv(csr: SparseGridCSR, x: np.ndarray, adjoint: bool = False) -> np.ndarray:
    """y = S @ x, or S^H @ x using the separately stored transpose."""
    mat = csr.adjoint if adjoint else csr.matrix
    if x.shape[0] != mat.shape[1]:
        raise ShapeMismatchError(f"x has {x.shape[0]} rows, matrix wants {mat.shape[1]}")
    return mat @ x


def spmm(csr: SparseGridCSR, x: np.ndarray, adjoint: bool = False) -> np.ndarray:
    """Multi-column spmv; x is (cols, n_rhs)."""
    if x.ndim != 2:
        raise ShapeMismatchError("spmm expects a 2D right-hand side")
    return spmv(csr, x, adjoint=adjoint)


def _gamma(geom: ScanGeometry) -> float:
    return float(np.sqrt(geom.n_x * geom.n_y / geom.n_p))


def _check_grid(u: np.ndarray, geom: ScanGeometry):
    if u.shape != geom.grid_shape:
        raise ShapeMismatchError(f"tomogram shape {u.shape} != {geom.grid_shape}")


def _check_sino(s: np.ndarray, geom: ScanGeometry):
    if s.shape != geom.sino_shape:
        raise ShapeMismatchError(f"sinogram shape {s.shape} != {geom.sino_shape}")


def radon(tomo: np.ndarray, csr: SparseGridCSR, deapo: Deapodization,
          geom: ScanGeometry) -> np.ndarray:
    """Forward projection via Fourier-slice gridding.

    Real input gives real output; complex input keeps both channels.
    """
    tomo = np.asarray(tomo)
    _check_grid(tomo, geom)
    w = deapo.values * tomo
    spec2d = np.fft.fft2(w, norm="ortho")
    q = spmv(csr, spec2d.ravel(order="F"), adjoint=True)
    sino = np.fft.ifft(q.reshape(geom.sino_shape), axis=1, norm="ortho")
    sino *= _gamma(geom)
    if not np.iscomplexobj(tomo):
        return sino.real
    return sino


def iradon(sino: np.ndarray, csr: SparseGridCSR, deapo: Deapodization,
           geom: ScanGeometry, weights: np.ndarray | None = None,
           scale: float = 1.0) -> np.ndarray:
    """Backprojection via gridding; the Fourier filter either comes folded
    into ``csr`` or is passed per-sample through ``weights``."""
    sino = np.asarray(sino)
    _check_sino(sino, geom)
    q = np.fft.fft(sino, axis=1, norm="ortho").ravel()
    if weights is not None:
        q = q * weights
    vec = spmv(csr, q)
    grid = np.fft.ifft2(vec.reshape((geom.n_y, geom.n_x), order="F"), norm="ortho")
    rec = deapo.values * grid
    rec *= _gamma(geom) * scale
    if not np.iscomplexobj(sino):
        return rec.real
    return rec


def density_filter_solve(csr: SparseGridCSR, geom: ScanGeometry,
                         max_iter: int = 50, tol: float = 1e-6) -> FilterSpec:
    """Least-squares sample weights that flatten the gridded response.

    Minimizes || |S| d - 1 ||_2 over per-sample weights d by conjugate
    gradients on the normal equations, using the entry magnitudes (the
    phases are unit modulus and carry no sampling-density information).
    Weights are clamped to >= 0 and symmetrized in p; ``converged=False``
    flags hitting the iteration cap.
    """
    a = abs(csr.matrix)
    at = abs(csr.adjoint)
    b = np.ones(csr.shape[0])
    x = np.zeros(csr.shape[1])
    r = b.copy()
    s = at @ r
    p = s.copy()
    gamma = float(s @ s)
    res = [float(np.linalg.norm(r))]
    converged = False
    for _ in range(max_iter):
        q = a @ p
        qq = float(q @ q)
        if qq <= 0 or gamma <= 0:
            break
        alpha = gamma / qq
        x += alpha * p
        r -= alpha * q
        res.append(float(np.linalg.norm(r)))
        if res[-1] <= tol * res[0]:
            converged = True
            break
        s = at @ r
        gamma_new = float(s @ s)
        p = s + (gamma_new / gamma) * p
        gamma = gamma_new
    x = np.maximum(x, 0.0)
    # enforce d(theta, p) == d(theta, -p) so folded weights keep the
    # operator real-to-real
    d2 = x.reshape(geom.sino_shape)
    j = np.arange(geom.n_p)
    d2 = 0.5 * (d2 + d2[:, (geom.n_p - j) % geom.n_p])
    x = d2.ravel()
    final = float(np.linalg.norm(a @ x - b))
    return FilterSpec(kind="density", weights=x,
                      residual_history=np.asarray(res), converged=converged,
                      final_residual=final)


@dataclass
class TomoOperators:
    """Bundle of matched operators for one geometry/kernel/filter choice."""

    geom: ScanGeometry
    kernel: KernelSpec
    deapo: Deapodization
    csr: SparseGridCSR
    filter_spec: FilterSpec | None
    csr_filtered: SparseGridCSR | None
    filter_weights: np.ndarray | None  # per-sample, when not folded
    calib_scale: float = 1.0

    def radon(self, tomo: np.ndarray) -> np.ndarray:
        return radon(tomo, self.csr, self.deapo, self.geom)

    def radon_adjoint(self, sino: np.ndarray) -> np.ndarray:
        """Exact adjoint of ``radon``: unfiltered, uncalibrated backprojection."""
        return iradon(sino, self.csr, self.deapo, self.geom)

    def iradon(self, sino: np.ndarray) -> np.ndarray:
        """Filtered backprojection, scaled so flat inputs come back near 1."""
        if self.filter_spec is None or self.filter_spec.kind == "none":
            return self.radon_adjoint(sino)
        if self.csr_filtered is not None:
            return iradon(sino, self.csr_filtered, self.deapo, self.geom,
                          scale=self.calib_scale)
        return iradon(sino, self.csr, self.deapo, self.geom,
                      weights=self.filter_weights, scale=self.calib_scale)

    def preconditioner(self, kind: str = "hamming") -> Preconditioner:
        if kind == "none":
            return Preconditioner(weights=np.ones(self.geom.n_p))
        return Preconditioner(weights=make_filter(kind, self.geom).weights)

    @property
    def spectral_weights(self) -> np.ndarray:
        """Fourier-domain weights of this bundle's filter.

        Shape (n_p,) for radial filters (ones when the filter is "none"),
        or (n_theta, n_p) for per-sample density weights.
        """
        if self.filter_spec is None or self.filter_spec.kind == "none":
            return np.ones(self.geom.n_p)
        w = self.filter_spec.weights
        if w.shape == (self.geom.n_p,):
            return w
        return w.reshape(self.geom.sino_shape)

    def precondition(self, sino: np.ndarray) -> np.ndarray:
        """Half-power preconditioner pass (spectrum times sqrt of weights)."""
        return precondition_apply(Preconditioner(weights=self.spectral_weights),
                                  sino)

    def apply_weights(self, sino: np.ndarray) -> np.ndarray:
        """Full filter pass along the detector axis, without backprojection.

        Equals two ``precondition`` passes in one FFT round trip; this is
        the weighting the least-squares solvers need in their gradients.
        """
        return _spectral_apply(np.asarray(sino), self.spectral_weights)


def _calibration_scale(geom, csr, csr_filtered, deapo, filter_weights) -> float:
    """Scalar making iradon(radon(flat disk)) average to 1 over the support."""
    mask = support_mask(geom)
    flat = mask.astype(np.float64)
    sino = radon(flat, csr, deapo, geom)
    if csr_filtered is not None:
        rec = iradon(sino, csr_filtered, deapo, geom)
    else:
        rec = iradon(sino, csr, deapo, geom, weights=filter_weights)
    mean = float(np.mean(rec[mask]))
    if mean == 0.0:
        return 1.0
    return 1.0 / mean


def build_operators(geom: ScanGeometry, kernel: KernelSpec | None = None,
                    filter_kind: str = "ramlak", cache_dir: str | None = None,
                    fold_filter: bool = True, threshold: float = 0.0) -> TomoOperators:
    """Construct (or load from cache) everything needed to project and
    reconstruct: deapodization grid, unfiltered matrix, filtered matrix,
    and the filter calibration scalar."""
    if kernel is None:
        kernel = KernelSpec()
    if filter_kind not in FILTER_KINDS:
        raise ValueError(f"unknown filter kind {filter_kind!r}")
    deapo = deapodization_compute(geom, kernel)

    def _matrix(filter_id, weights):
        if cache_dir is not None:
            key = make_cache_key(geom, kernel, filter_id)
            m = cache_load(key, cache_dir)
            if m is None:
                m = build_matrix(geom, kernel, weights, threshold)
                cache_store(key, m, cache_dir)
            return key, m
        return None, build_matrix(geom, kernel, weights, threshold)

    _, csr = _matrix("none", None)

    filter_spec = None
    csr_filtered = None
    weights = None
    calib = 1.0
    if filter_kind != "none":
        if filter_kind == "density":
            filter_spec = density_filter_solve(csr, geom)
        else:
            filter_spec = make_filter(filter_kind, geom)
        weights = sample_weights(filter_spec, geom)
        key_f = None
        if fold_filter:
            key_f, csr_filtered = _matrix(filter_kind, weights)
        calib = None
        if cache_dir is not None and key_f is not None:
            meta = os.path.join(cache_dir, key_f.digest + ".meta.json")
            if os.path.exists(meta):
                with open(meta) as fh:
                    calib = float(json.load(fh)["calib_scale"])
        if calib is None:
            calib = _calibration_scale(geom, csr, csr_filtered, deapo, weights)
            if cache_dir is not None and key_f is not None:
                meta = os.path.join(cache_dir, key_f.digest + ".meta.json")
                tmp = meta + f".tmp{os.getpid()}"
                with open(tmp, "w") as fh:
                    json.dump({"calib_scale": calib}, fh)
                os.replace(tmp, meta)
    return TomoOperators(geom=geom, kernel=kernel, deapo=deapo, csr=csr,
                         filter_spec=filter_spec, csr_filtered=csr_filtered,
                         filter_weights=None if fold_filter else weights,
                         calib_scale=calib)
