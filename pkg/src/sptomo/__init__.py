"""sptomo: parallel-beam tomography via sparse Fourier-domain gridding.

The forward projector, its exact adjoint, and filtered backprojection all
run through one precomputed sparse matrix that interpolates polar Fourier
samples off the FFT grid. On top of that sit iterative solvers (SIRT with
BB steps, CGLS, split-Bregman TV), a slice-parallel pipeline with complex
slice pairing, binary volume files, and a CLI.
"""

from .errors import (CorruptCacheError, DivergenceError, FileFormatError,
                     GridTooLargeError, InvalidFlatFieldError,
                     NearZeroDenominatorError, NonFiniteError,
                     ShapeMismatchError, SptomoError, WorkerFailureError)
from .geometry import (Deapodization, KernelSpec, ScanGeometry, checkerboard,
                       deapodization_compute, kernel_eval, kernel_transform,
                       polar_coords, stencil_offsets, support_mask)
from .gridding import (MatrixCacheKey, SparseCOO, SparseGridCSR, build_coo,
                       build_matrix, cache_load, cache_store, coo_to_csr,
                       make_cache_key, prune)
from .io import (KIND_INTENSITY, KIND_SINOGRAM, KIND_TOMOGRAM, Metrics,
                 VolumeFile, compute_metrics, normalize, phantom_shepp_logan,
                 read_volume, simulate_intensity, sinogram_geometry, snr,
                 write_volume)
from .operators import (FILTER_KINDS, FilterSpec, Preconditioner,
                        TomoOperators, build_operators, density_filter_solve,
                        iradon, make_filter, precondition_apply, radon,
                        sample_weights, spmm, spmv)
from .pipeline import (PAIRING_TOL, ChunkPlan, SinogramStack, TomogramStack,
                       pair_complex, plan_chunks, run_pipeline, unpair)
from .solvers import (ALGORITHMS, DEFAULT_FILTERS, SolverConfig, SolverReport,
                      solve, solve_cgls, solve_fbp, solve_sirt, solve_tv)

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS", "ChunkPlan", "CorruptCacheError", "DEFAULT_FILTERS",
    "Deapodization", "DivergenceError", "FILTER_KINDS", "FileFormatError",
    "FilterSpec", "GridTooLargeError", "InvalidFlatFieldError",
    "KIND_INTENSITY", "KIND_SINOGRAM", "KIND_TOMOGRAM", "KernelSpec",
    "MatrixCacheKey", "Metrics", "NearZeroDenominatorError", "NonFiniteError",
    "PAIRING_TOL", "Preconditioner", "ScanGeometry", "ShapeMismatchError",
    "SinogramStack", "SolverConfig", "SolverReport", "SparseCOO",
    "SparseGridCSR", "SptomoError", "TomoOperators", "TomogramStack",
    "VolumeFile", "WorkerFailureError", "build_coo", "build_matrix",
    "build_operators", "cache_load", "cache_store", "checkerboard",
    "compute_metrics", "coo_to_csr", "deapodization_compute",
    "density_filter_solve", "iradon", "kernel_eval", "kernel_transform",
    "make_cache_key", "make_filter", "normalize", "pair_complex",
    "phantom_shepp_logan", "plan_chunks", "polar_coords", "precondition_apply",
    "prune", "radon", "read_volume", "run_pipeline", "sample_weights",
    "simulate_intensity",
    "sinogram_geometry", "snr", "solve", "solve_cgls", "solve_fbp",
    "solve_sirt", "solve_tv", "spmm", "spmv", "stencil_offsets",
    "support_mask", "unpair", "write_volume",
]
