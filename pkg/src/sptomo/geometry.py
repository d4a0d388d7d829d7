"""Scan geometry, interpolation kernels, and deapodization factors.

Coordinate conventions used across the package:

* Tomogram arrays are ``(n_y, n_x)`` with x along columns; the image/rotation
  center sits at pixel ``(n_y/2, n_x/2)``.
* Sinogram arrays are ``(n_theta, n_p)`` with the rotation axis at detector
  column ``center`` (default ``n_p/2``).
* Fourier-domain radial coordinates are kept in FFT order: detector bin ``j``
  carries the signed frequency ``((j + n_p//2) mod n_p) - n_p//2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import i0

from .errors import NearZeroDenominatorError

DEAPO_EPS_REL = 1e-6


def _as_readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ScanGeometry:
    """Parallel-beam scan layout shared by every operator.

    Parameters
    ----------
    n_p : int
        Detector bins per projection (>= 2).
    n_theta : int
        Number of projection angles (>= 1).
    angles : array, optional
        Angles in radians, each in [0, 2*pi). Default: n_theta angles evenly
        covering [0, pi).
    n_z : int
        Number of stacked slices (>= 1).
    n_x, n_y : int, optional
        Reconstruction grid size; both default to n_p.
    center : float, optional
        Rotation-axis detector column, 0 <= center < n_p. Default n_p/2.
    """

    n_p: int
    n_theta: int
    angles: np.ndarray = None
    n_z: int = 1
    n_x: int = None
    n_y: int = None
    center: float = None

    def __post_init__(self):
        if self.n_p < 2:
            raise ValueError(f"n_p must be >= 2, got {self.n_p}")
        if self.n_theta < 1:
            raise ValueError(f"n_theta must be >= 1, got {self.n_theta}")
        if self.n_z < 1:
            raise ValueError(f"n_z must be >= 1, got {self.n_z}")
        if self.angles is None:
            object.__setattr__(
                self, "angles",
                np.linspace(0.0, np.pi, self.n_theta, endpoint=False))
        angles = _as_readonly(np.atleast_1d(self.angles))
        if angles.shape != (self.n_theta,):
            raise ValueError(
                f"angles has shape {angles.shape}, expected ({self.n_theta},)")
        if np.any(angles < 0.0) or np.any(angles >= 2.0 * np.pi):
            raise ValueError("angles must lie in [0, 2*pi)")
        object.__setattr__(self, "angles", angles)
        if self.n_x is None:
            object.__setattr__(self, "n_x", self.n_p)
        if self.n_y is None:
            object.__setattr__(self, "n_y", self.n_p)
        if self.n_x < 2 or self.n_y < 2:
            raise ValueError("n_x and n_y must be >= 2")
        if self.center is None:
            object.__setattr__(self, "center", self.n_p / 2.0)
        if not (0.0 <= self.center < self.n_p):
            raise ValueError(
                f"center must satisfy 0 <= center < n_p, got {self.center}")

    @property
    def grid_shape(self) -> tuple[int, int]:
        return (self.n_y, self.n_x)

    @property
    def sino_shape(self) -> tuple[int, int]:
        return (self.n_theta, self.n_p)

    @property
    def n_samples(self) -> int:
        """Total Fourier-domain sample count N = n_theta * n_p."""
        return self.n_theta * self.n_p

    @property
    def n_grid(self) -> int:
        """Total Cartesian grid point count M = n_x * n_y."""
        return self.n_x * self.n_y

    def signed_freqs(self) -> np.ndarray:
        """Signed detector frequencies in FFT order, shape (n_p,)."""
        j = np.arange(self.n_p)
        return (((j + self.n_p // 2) % self.n_p) - self.n_p // 2).astype(np.float64)


@dataclass(frozen=True)
class KernelSpec:
    """Separable interpolation kernel, normalized to K(0) = 1.

    family : "kb" (Kaiser-Bessel) or "gauss" (truncated Gaussian).
    width  : odd stencil width k_w; support is |t| < width/2.
    beta   : Kaiser-Bessel shape (default 2.5 * (width - 1)).
    sigma  : Gaussian standard deviation (default width / 6).
    """

    family: str = "kb"
    width: int = 3
    beta: float = None
    sigma: float = None

    def __post_init__(self):
        if self.family not in ("kb", "gauss"):
            raise ValueError(f"unknown kernel family {self.family!r}")
        if self.width < 1 or self.width % 2 == 0:
            raise ValueError(f"kernel width must be odd and >= 1, got {self.width}")
        if self.beta is None:
            object.__setattr__(self, "beta", 2.5 * (self.width - 1))
        if self.sigma is None:
            object.__setattr__(self, "sigma", self.width / 6.0)
        if self.beta <= 0 or self.sigma <= 0:
            raise ValueError("beta and sigma must be positive")

    def cache_token(self) -> str:
        """Stable parameter string used in cache digests."""
        return f"{self.family}:{self.width}:{self.beta!r}:{self.sigma!r}"


def kernel_eval(spec: KernelSpec, t) -> np.ndarray:
    """Evaluate the 1D kernel at offsets ``t`` (array-like, grid units).

    Returns exact zeros for |t| >= width/2; the kernel is even and peaks at
    K(0) = 1.
    """
    t = np.asarray(t, dtype=np.float64)
    half = spec.width / 2.0
    inside = np.abs(t) < half
    ts = np.where(inside, t, 0.0)
    if spec.family == "kb":
        arg = 1.0 - (2.0 * ts / spec.width) ** 2
        vals = i0(spec.beta * np.sqrt(np.maximum(arg, 0.0))) / i0(spec.beta)
    else:
        vals = np.exp(-0.5 * (ts / spec.sigma) ** 2)
    return np.where(inside, vals, 0.0)


def kernel_transform(spec: KernelSpec, nu) -> np.ndarray:
    """Continuous Fourier transform of the kernel at frequencies ``nu``.

    ``nu`` is in cycles per grid cell; the result is real and even. The
    Kaiser-Bessel transform uses its closed form; the truncated Gaussian is
    integrated by fixed-order Gauss-Legendre quadrature.
    """
    nu = np.asarray(nu, dtype=np.float64)
    if spec.family == "kb":
        # FT of I0(beta*sqrt(1-(2t/W)^2))/W over |t|<=W/2 is
        # sinh(sqrt(beta^2-(pi W nu)^2))/sqrt(...), continued with sin past
        # the branch point.
        w = float(spec.width)
        z2 = spec.beta**2 - (np.pi * w * nu) ** 2
        pos = z2 > 0
        zp = np.sqrt(np.where(pos, z2, 1.0))
        out = np.where(pos, np.sinh(zp) / zp, 0.0)
        zn = np.sqrt(np.where(pos, 1.0, -z2))
        # sinc form; guard the removable singularity at z = 0
        small = np.abs(zn) < 1e-12
        sn = np.where(small, 1.0, np.sin(np.where(small, 1.0, zn)) / np.where(small, 1.0, zn))
        out = np.where(pos, out, sn)
        return out * (w / i0(spec.beta))
    half = spec.width / 2.0
    nodes, weights = np.polynomial.legendre.leggauss(64)
    t = nodes * half
    k = np.exp(-0.5 * (t / spec.sigma) ** 2) * weights * half
    return np.cos(2.0 * np.pi * np.multiply.outer(nu, t)) @ k


def stencil_offsets(width: int) -> tuple[np.ndarray, np.ndarray]:
    """Flattened (s_x, s_y) integer offset pair covering the width^2 stencil."""
    h = width // 2
    r = np.arange(-h, h + 1)
    sx, sy = np.meshgrid(r, r, indexing="ij")
    return sx.ravel(), sy.ravel()


def polar_coords(geom: ScanGeometry) -> np.ndarray:
    """Fourier-plane coordinates of every (theta, p) sample.

    Returns an (N, 2) array of (p_x, p_y), ordered theta-major / p-minor to
    match the row-major sinogram layout. Each sample sits at
    ``p*(cos t, sin t) + (n_x/2, n_y/2)`` with p the signed FFT-order
    frequency of its detector bin.
    """
    p = geom.signed_freqs()
    ct = np.cos(geom.angles)
    st = np.sin(geom.angles)
    px = np.multiply.outer(ct, p) + geom.n_x / 2.0
    py = np.multiply.outer(st, p) + geom.n_y / 2.0
    return np.stack([px.ravel(), py.ravel()], axis=1)


@dataclass(frozen=True)
class Deapodization:
    """Real-space correction for the kernel's Fourier-domain footprint.

    values: (n_y, n_x) real array equal to checkerboard / FT(K) inside the
    inscribed-disk support and exactly 0 outside.
    """

    values: np.ndarray
    support_mask: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        m = np.ascontiguousarray(self.support_mask, dtype=bool)
        v.setflags(write=False)
        m.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "support_mask", m)


def support_mask(geom: ScanGeometry) -> np.ndarray:
    """Inscribed-disk mask of radius min(n_x, n_y)/2 around the grid center."""
    cy, cx = geom.n_y / 2.0, geom.n_x / 2.0
    yy = np.arange(geom.n_y)[:, None] - cy
    xx = np.arange(geom.n_x)[None, :] - cx
    r = min(geom.n_x, geom.n_y) / 2.0
    return (yy * yy + xx * xx) < r * r


def checkerboard(geom: ScanGeometry) -> np.ndarray:
    """(-1)^(x+y) sign grid with +1 at the center pixel (n_x//2, n_y//2)."""
    ix = np.arange(geom.n_x)[None, :] - geom.n_x // 2
    iy = np.arange(geom.n_y)[:, None] - geom.n_y // 2
    return np.where((ix + iy) % 2 == 0, 1.0, -1.0)


def deapodization_compute(geom: ScanGeometry, spec: KernelSpec) -> Deapodization:
    """Build the deapodization grid 1/FT(K) * checkerboard on the disk support.

    Raises NearZeroDenominatorError when FT(K) at any supported grid point is
    smaller than 1e-6 of its maximum (a kernel too wide for the grid).
    """
    ax = kernel_transform(spec, (np.arange(geom.n_x) - geom.n_x / 2.0) / geom.n_x)
    ay = kernel_transform(spec, (np.arange(geom.n_y) - geom.n_y / 2.0) / geom.n_y)
    apod = np.multiply.outer(ay, ax)
    mask = support_mask(geom)
    eps = DEAPO_EPS_REL * np.max(np.abs(apod))
    bad = mask & (np.abs(apod) < eps)
    if np.any(bad):
        raise NearZeroDenominatorError(
            f"kernel transform vanishes at {int(bad.sum())} supported grid "
            f"points (min |FT(K)| < {eps:.3e}); narrow the kernel")
    vals = np.zeros(geom.grid_shape)
    vals[mask] = (checkerboard(geom) / apod)[mask]
    return Deapodization(values=vals, support_mask=mask)
