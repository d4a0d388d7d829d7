"""Slow direct-space reference implementations used by the test suite.

These deliberately avoid the Fourier machinery: projections are ray sums of
a bilinearly rotated image, and the dense solver factorizes an explicitly
materialized operator. Grid sizes are capped to keep them honest about their
O(n^3)-and-worse costs.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import map_coordinates

from .errors import GridTooLargeError
from .geometry import ScanGeometry
from .operators import TomoOperators

DIRECT_RADON_CAP = 128
DENSE_SOLVE_CAP = 16


def direct_radon(tomo: np.ndarray, geom: ScanGeometry) -> np.ndarray:
    """Ray-sum projection: bilinearly sample the image along each ray and
    add with unit pixel spacing. Output is (n_theta, n_p) with the rotation
    axis at detector column ``center``."""
    n = max(geom.n_x, geom.n_y, geom.n_p)
    if n > DIRECT_RADON_CAP:
        raise GridTooLargeError(f"direct_radon caps at {DIRECT_RADON_CAP}, got {n}")
    tomo = np.asarray(tomo, dtype=np.float64)
    if tomo.shape != geom.grid_shape:
        raise ValueError(f"tomogram shape {tomo.shape} != {geom.grid_shape}")
    cx, cy = geom.n_x / 2.0, geom.n_y / 2.0
    p = np.arange(geom.n_p) - geom.center
    s = np.arange(max(geom.n_x, geom.n_y), dtype=np.float64)
    s -= s.size / 2.0
    pp, ss = np.meshgrid(p, s, indexing="ij")
    out = np.empty(geom.sino_shape)
    for i, theta in enumerate(geom.angles):
        ct, st = np.cos(theta), np.sin(theta)
        x = pp * ct - ss * st + cx
        y = pp * st + ss * ct + cy
        vals = map_coordinates(tomo, [y.ravel(), x.ravel()], order=1,
                               mode="constant", cval=0.0)
        out[i] = vals.reshape(pp.shape).sum(axis=1)
    return out


def dense_operator(ops: TomoOperators) -> np.ndarray:
    """Materialize the forward projector as an (N, M) dense matrix by
    applying it to every unit pixel."""
    geom = ops.geom
    if max(geom.n_x, geom.n_y) > DENSE_SOLVE_CAP:
        raise GridTooLargeError(f"dense_operator caps at {DENSE_SOLVE_CAP}")
    cols = []
    basis = np.zeros(geom.grid_shape, dtype=np.complex128)
    for iy in range(geom.n_y):
        for ix in range(geom.n_x):
            basis[iy, ix] = 1.0
            cols.append(ops.radon(basis).ravel())
            basis[iy, ix] = 0.0
    return np.stack(cols, axis=1)


def dense_lsq_solve(sino: np.ndarray, geom: ScanGeometry,
                    ops: TomoOperators | None = None) -> np.ndarray:
    """Regularized normal-equations solve against the materialized operator.

    Solves (A^H A + eps*I) x = A^H b with eps = 1e-10 * trace(A^H A) / M by a
    dense factorization. Returns the (n_y, n_x) real reconstruction.
    """
    if max(geom.n_x, geom.n_y) > DENSE_SOLVE_CAP:
        raise GridTooLargeError(f"dense_lsq_solve caps at {DENSE_SOLVE_CAP}")
    if ops is None:
        from .operators import build_operators
        ops = build_operators(geom, filter_kind="none")
    a = dense_operator(ops)
    ata = a.conj().T @ a
    eps = 1e-10 * float(np.trace(ata).real) / ata.shape[0]
    ata[np.diag_indices_from(ata)] += eps
    rhs = a.conj().T @ np.asarray(sino).ravel()
    x = np.linalg.solve(ata, rhs)
    return x.reshape(geom.grid_shape).real
