"""Slice-parallel reconstruction pipeline.

Two sinogram slices at a time are packed into one complex sinogram
(slice a in the real part, slice b in the imaginary part) so a single
pass through the operators reconstructs both. Pairing always joins the
fixed global indices (2k, 2k+1) no matter how work is distributed; a
worker owns whole pairs, so the floating-point path of every slice is
independent of the worker count and the output is bit-identical for any
worker setting.

Scheduling follows a chunked loop: every full pass hands each worker
``max_slices_per_worker_pass`` slices, and the final pass splits the
remainder as evenly as possible with only the trailing workers one
short.
"""

from __future__ import annotations

import math
import multiprocessing
import time
import traceback
from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatchError, WorkerFailureError
from .geometry import ScanGeometry
from .operators import TomoOperators, build_operators
from .solvers import SolverConfig, SolverReport, solve

PAIRING_TOL = 1e-5


@dataclass(frozen=True)
class SinogramStack:
    """Real sinogram stack of shape (n_z, n_theta, n_p) plus its geometry."""

    data: np.ndarray
    geometry: ScanGeometry

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim != 3:
            raise ShapeMismatchError(f"sinogram stack must be 3D, got {d.shape}")
        expected = (self.geometry.n_z,) + self.geometry.sino_shape
        if d.shape != expected:
            raise ShapeMismatchError(
                f"sinogram stack shape {d.shape} != geometry {expected}")
        object.__setattr__(self, "data", d)

    @property
    def n_z(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class TomogramStack:
    """Real tomogram stack of shape (n_z, n_y, n_x)."""

    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data)
        if d.ndim != 3:
            raise ShapeMismatchError(f"tomogram stack must be 3D, got {d.shape}")
        object.__setattr__(self, "data", d)

    @property
    def n_z(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class ChunkPlan:
    """Deterministic slice schedule: passes x workers -> (start, length).

    Ranges partition [0, n_z) in order; inside one pass lengths differ by
    at most one and only trailing workers get the short length. ``halo``
    is reserved for cross-slice neighborhoods and is always 0 for now.
    """

    worker_count: int
    max_slices_per_worker_pass: int
    passes: tuple
    halo: int = 0

    @property
    def n_passes(self) -> int:
        return len(self.passes)

    def nonempty_ranges(self):
        """All (start, length) ranges with length > 0, in dispatch order."""
        return [rng for row in self.passes for rng in row if rng[1] > 0]


def plan_chunks(n_z: int, workers: int, max_per_pass: int = 8) -> ChunkPlan:
    """Split n_z slices over workers in ceil(n_z/(workers*max_per_pass)) passes."""
    if n_z < 1:
        raise ValueError(f"n_z must be >= 1, got {n_z}")
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    if max_per_pass < 1:
        raise ValueError(f"max_per_pass must be >= 1, got {max_per_pass}")
    capacity = workers * max_per_pass
    n_passes = math.ceil(n_z / capacity)
    passes = []
    start = 0
    for _ in range(n_passes):
        pass_nz = min(capacity, n_z - start)
        base, extra = divmod(pass_nz, workers)
        row = []
        for wk in range(workers):
            length = base + (1 if wk < extra else 0)
            row.append((start, length))
            start += length
        passes.append(tuple(row))
    return ChunkPlan(worker_count=workers, max_slices_per_worker_pass=max_per_pass,
                     passes=tuple(passes))


def pair_complex(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pack two real slices into one complex array (a + i b)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"pair shapes differ: {a.shape} vs {b.shape}")
    return a + 1j * b


def unpair(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split a complex array back into its two real slices."""
    u = np.asarray(u)
    return np.ascontiguousarray(u.real), np.ascontiguousarray(u.imag)


def _solve_units(data, n_z, ops, cfg, unit_start, unit_len):
    """Reconstruct pair units [unit_start, unit_start+unit_len).

    Unit k covers slices 2k and 2k+1; the last unit of an odd stack is a
    single unpaired slice. Returns a list of
    (unit, rec_even, rec_odd_or_None, final_residual, iterations, converged).
    """
    out = []
    for unit in range(unit_start, unit_start + unit_len):
        s0 = 2 * unit
        s1 = s0 + 1
        if s1 < n_z:
            sino = pair_complex(data[s0], data[s1])
        else:
            sino = data[s0]
        rec, rep = solve(sino, ops, cfg)
        if s1 < n_z:
            rec0, rec1 = unpair(rec)
        else:
            rec0, rec1 = np.asarray(rec.real), None
        final = rep.residual_history[-1] if rep.residual_history else 0.0
        out.append((unit, rec0, rec1, final, rep.iterations_run, rep.converged))
    return out


# fork-inherited state for pool workers, set by run_pipeline before forking
_WORKER_STATE = {}


def _pool_task(args):
    unit_start, unit_len = args
    st = _WORKER_STATE
    try:
        res = _solve_units(st["data"], st["n_z"], st["ops"], st["cfg"],
                           unit_start, unit_len)
        return ("ok", res)
    except Exception as exc:  # reported to the coordinator, never swallowed
        lo = 2 * unit_start
        hi = min(2 * (unit_start + unit_len), st.get("n_z", lo + 2 * unit_len))
        return ("err", (lo, hi), f"{exc!r}\n{traceback.format_exc()}")


def run_pipeline(stack: SinogramStack, cfg: SolverConfig, workers: int = 1,
                 ops: TomoOperators | None = None, max_per_pass: int = 8,
                 ) -> tuple[TomogramStack, SolverReport]:
    """Reconstruct every slice of a stack, distributing pairs over workers.

    The aggregate report carries one final-residual entry per pair unit in
    slice order, the maximum iteration count over units, converged = all
    units converged, and the total wall time. A failing worker aborts the
    run with WorkerFailureError after the in-flight pass has drained; no
    partial output is returned.
    """
    t0 = time.perf_counter()
    geom = stack.geometry
    if ops is None:
        ops = build_operators(geom, filter_kind=cfg.filter_kind())
    n_z = stack.n_z
    n_units = (n_z + 1) // 2
    # plan in pair units so chunk boundaries can never split a pair
    unit_cap = max(1, max_per_pass // 2)
    plan = plan_chunks(n_units, workers, unit_cap)

    results = []
    if workers == 1:
        for unit_start, unit_len in plan.nonempty_ranges():
            results.extend(_solve_units(stack.data, n_z, ops, cfg,
                                        unit_start, unit_len))
    else:
        _WORKER_STATE.update(data=stack.data, n_z=n_z, ops=ops, cfg=cfg)
        try:
            ctx = multiprocessing.get_context("fork")
            with ctx.Pool(processes=workers) as pool:
                for row in plan.passes:
                    tasks = [rng for rng in row if rng[1] > 0]
                    if not tasks:
                        continue
                    replies = pool.map(_pool_task, tasks)
                    failure = next((r for r in replies if r[0] == "err"), None)
                    if failure is not None:
                        raise WorkerFailureError(failure[1], failure[2])
                    for reply in replies:
                        results.extend(reply[1])
        finally:
            _WORKER_STATE.clear()

    out = np.empty((n_z,) + geom.grid_shape, dtype=np.float64)
    report = SolverReport()
    report.converged = True
    by_unit = sorted(results, key=lambda r: r[0])
    for unit, rec0, rec1, final, iters, conv in by_unit:
        out[2 * unit] = rec0
        if rec1 is not None:
            out[2 * unit + 1] = rec1
        report.residual_history.append(final)
        report.iterations_run = max(report.iterations_run, iters)
        report.converged = report.converged and conv
    report.wall_time = time.perf_counter() - t0
    return TomogramStack(data=out), report
