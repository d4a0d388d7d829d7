"""Volume file I/O, intensity normalization, phantoms, and quality metrics."""

from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import FileFormatError, InvalidFlatFieldError, ShapeMismatchError
from .geometry import ScanGeometry

VOLUME_MAGIC = b"SPTOMO01"
VOLUME_VERSION = 1
KIND_SINOGRAM = 0
KIND_TOMOGRAM = 1
KIND_INTENSITY = 2

CLAMP_EPS_REL = 1e-9


@dataclass
class VolumeFile:
    """In-memory image of one volume file."""

    kind: int
    data: np.ndarray  # (n_z, a, b) float32-quantized payload
    center: float = 0.0
    angles: np.ndarray | None = None


def write_volume(path: str, kind: int, data: np.ndarray, center: float = 0.0,
                 angles: np.ndarray | None = None) -> None:
    """Write a slice stack. Sinogram/intensity kinds carry the angle table;
    tomograms do not. Payload is float32, C order, little endian."""
    data = np.asarray(data)
    if data.ndim == 2:
        data = data[None]
    if data.ndim != 3:
        raise ShapeMismatchError(f"volume payload must be 3D, got {data.shape}")
    if kind not in (KIND_SINOGRAM, KIND_TOMOGRAM, KIND_INTENSITY):
        raise ValueError(f"unknown volume kind {kind}")
    if kind == KIND_TOMOGRAM:
        angles = None
    elif angles is None:
        raise ValueError("sinogram/intensity volumes require the angle table")
    n_angles = 0 if angles is None else len(angles)
    tmp = path + f".tmp{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(VOLUME_MAGIC)
        fh.write(struct.pack("<IB3QdQ", VOLUME_VERSION, kind,
                             data.shape[0], data.shape[1], data.shape[2],
                             float(center), n_angles))
        if n_angles:
            fh.write(np.ascontiguousarray(angles, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(data, dtype="<f4").tobytes())
    os.replace(tmp, path)


def read_volume(path: str) -> VolumeFile:
    """Read and validate a volume file written by ``write_volume``."""
    def need(fh, n):
        buf = fh.read(n)
        if len(buf) != n:
            raise FileFormatError(f"{path}: truncated")
        return buf

    with open(path, "rb") as fh:
        if need(fh, 8) != VOLUME_MAGIC:
            raise FileFormatError(f"{path}: not a volume file (bad magic)")
        version, kind, nz, na, nb, center, n_angles = struct.unpack(
            "<IB3QdQ", need(fh, struct.calcsize("<IB3QdQ")))
        if version != VOLUME_VERSION:
            raise FileFormatError(f"{path}: unsupported version {version}")
        if kind not in (KIND_SINOGRAM, KIND_TOMOGRAM, KIND_INTENSITY):
            raise FileFormatError(f"{path}: unknown kind {kind}")
        angles = None
        if n_angles:
            angles = np.frombuffer(need(fh, 8 * n_angles), dtype="<f8").copy()
        data = np.frombuffer(need(fh, 4 * nz * na * nb), dtype="<f4")
        if fh.read(1):
            raise FileFormatError(f"{path}: trailing bytes")
    if kind != KIND_TOMOGRAM:
        if angles is None or n_angles != na:
            raise FileFormatError(f"{path}: angle table does not match dims")
    return VolumeFile(kind=kind, data=data.reshape(nz, na, nb).astype(np.float32),
                      center=center, angles=angles)


def normalize(intensity: np.ndarray, flat: np.ndarray | float) -> np.ndarray:
    """Beer-Lambert normalization -log(I/I0) with underflow clamping.

    ``flat`` may be a scalar or an array broadcastable to ``intensity``;
    it must be strictly positive. Raw counts are clamped from below at
    1e-9 * max(I) so zeros do not produce infinities.
    """
    intensity = np.asarray(intensity, dtype=np.float64)
    flat_arr = np.asarray(flat, dtype=np.float64)
    if np.any(flat_arr <= 0) or not np.all(np.isfinite(flat_arr)):
        raise InvalidFlatFieldError("flat-field intensities must be > 0")
    clamp = CLAMP_EPS_REL * float(np.max(intensity))
    if clamp <= 0:
        raise InvalidFlatFieldError("intensity stack has no positive counts")
    return -np.log(np.maximum(intensity, clamp) / flat_arr)


def simulate_intensity(sino: np.ndarray, flat: float = 1.0) -> np.ndarray:
    """Forward Beer-Lambert model I = I0 * exp(-sinogram)."""
    return flat * np.exp(-np.asarray(sino, dtype=np.float64))


# (value, semi_x, semi_y, x0, y0, angle_deg); coordinates in [-1, 1] units of
# the grid half-width, values accumulate additively (classic ten-ellipse table)
SHEPP_LOGAN_ELLIPSES = (
    (2.00, 0.6900, 0.9200, 0.00, 0.0000, 0.0),
    (-0.98, 0.6624, 0.8740, 0.00, -0.0184, 0.0),
    (-0.02, 0.1100, 0.3100, 0.22, 0.0000, -18.0),
    (-0.02, 0.1600, 0.4100, -0.22, 0.0000, 18.0),
    (0.01, 0.2100, 0.2500, 0.00, 0.3500, 0.0),
    (0.01, 0.0460, 0.0460, 0.00, 0.1000, 0.0),
    (0.01, 0.0460, 0.0460, 0.00, -0.1000, 0.0),
    (0.01, 0.0460, 0.0230, -0.08, -0.6050, 0.0),
    (0.01, 0.0230, 0.0230, 0.00, -0.6060, 0.0),
    (0.01, 0.0230, 0.0460, 0.06, -0.6050, 0.0),
)


def phantom_shepp_logan(n: int, n_z: int = 1) -> np.ndarray:
    """Ten-ellipse head phantom stack, values in [0, 1].

    Uses the classic ellipse table halved so the outer shell sits at 1.0.
    The phantom is centered at pixel (n/2, n/2) to match the operators'
    rotation center. Slices are scaled linearly from 1.0 down to 0.8 across
    the stack so neighboring slices differ.
    """
    x = (np.arange(n) - n / 2.0) / (n / 2.0)
    xx, yy = np.meshgrid(x, x, indexing="xy")
    img = np.zeros((n, n))
    for val, a, b, x0, y0, deg in SHEPP_LOGAN_ELLIPSES:
        phi = math.radians(deg)
        xr = (xx - x0) * math.cos(phi) + (yy - y0) * math.sin(phi)
        yr = -(xx - x0) * math.sin(phi) + (yy - y0) * math.cos(phi)
        img[(xr / a) ** 2 + (yr / b) ** 2 <= 1.0] += val
    img = np.clip(img / 2.0, 0.0, 1.0)
    scales = np.linspace(1.0, 0.8, n_z)
    return img[None] * scales[:, None, None]


def snr(rec: np.ndarray, ref: np.ndarray) -> float:
    """Signal-to-noise ratio in dB after an optimal scalar fit of rec to ref.

    Returns math.inf when the residual is exactly zero.
    """
    rec = np.asarray(rec, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if rec.shape != ref.shape:
        raise ShapeMismatchError(f"shapes {rec.shape} vs {ref.shape}")
    denom = float(np.vdot(rec, rec).real)
    scale = float(np.vdot(rec, ref).real) / denom if denom > 0 else 0.0
    err = float(np.linalg.norm(ref - scale * rec))
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(float(np.linalg.norm(ref)) ** 2 / err**2)


@dataclass
class Metrics:
    snr_db: float
    residual: float


def compute_metrics(rec: np.ndarray, ref: np.ndarray) -> Metrics:
    """SNR plus the relative scaled residual ||ref - s*rec|| / ||ref||."""
    value = snr(rec, ref)
    nref = float(np.linalg.norm(ref))
    if value == math.inf:
        return Metrics(snr_db=value, residual=0.0)
    return Metrics(snr_db=value, residual=10 ** (-value / 20.0) if nref > 0 else 0.0)


def sinogram_geometry(vol: VolumeFile, n_x: int | None = None,
                      n_y: int | None = None) -> ScanGeometry:
    """Build a ScanGeometry from a sinogram/intensity volume header."""
    if vol.kind == KIND_TOMOGRAM:
        raise ValueError("tomogram volumes carry no scan geometry")
    n_z, n_theta, n_p = vol.data.shape
    return ScanGeometry(n_p=n_p, n_theta=n_theta, angles=vol.angles,
                        n_z=n_z, n_x=n_x, n_y=n_y, center=vol.center)
