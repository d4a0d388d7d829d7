"""Command-line interface.

Subcommands:
  phantom  generate a noisy sinogram stack plus its ground-truth tomogram
  recon    reconstruct a sinogram/intensity volume into a tomogram stack
  cache    build or inspect cached gridding matrices
  metrics  compare a reconstruction against a reference volume

All failures exit nonzero with a message on stderr; nothing is written on
partial failure (volume writes are atomic).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .errors import SptomoError
from .geometry import KernelSpec, ScanGeometry
from .gridding import make_cache_key, cache_load, _cache_path
from .io import (KIND_INTENSITY, KIND_SINOGRAM, KIND_TOMOGRAM, compute_metrics,
                 normalize, phantom_shepp_logan, read_volume, sinogram_geometry,
                 write_volume)
from .operators import FILTER_KINDS, build_operators
from .pipeline import SinogramStack, run_pipeline
from .solvers import ALGORITHMS, SolverConfig

EXIT_OK = 0
EXIT_ERROR = 2
EXIT_CACHE_MISS = 3


def _truth_path(out_path: str) -> str:
    stem, ext = os.path.splitext(out_path)
    return f"{stem}-truth{ext or '.spt'}"


def _add_kernel_args(p: argparse.ArgumentParser):
    p.add_argument("--kernel", choices=("kb", "gauss"), default="kb",
                   help="interpolation kernel family (default kb)")
    p.add_argument("--kw", type=int, default=3, metavar="W",
                   help="odd kernel stencil width (default 3)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sptomo",
                                 description="Parallel-beam tomography toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="write a simulated sinogram + ground truth")
    p.add_argument("--size", type=int, default=64, metavar="N")
    p.add_argument("--slices", type=int, default=1, metavar="Z")
    p.add_argument("--angles", type=int, default=90, metavar="A")
    p.add_argument("--noise", type=float, default=0.0, metavar="SIGMA",
                   help="additive Gaussian noise level, relative to sinogram max")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, metavar="FILE",
                   help="sinogram output path")
    p.add_argument("--truth-out", default=None, metavar="FILE",
                   help="ground-truth tomogram path (default: <out>-truth)")

    p = sub.add_parser("recon", help="reconstruct a sinogram volume")
    p.add_argument("--in", dest="infile", required=True, metavar="FILE")
    p.add_argument("--out", required=True, metavar="FILE")
    p.add_argument("--algo", choices=ALGORITHMS, default="fbp")
    p.add_argument("--iters", type=int, default=10, metavar="K")
    p.add_argument("--filter", choices=FILTER_KINDS, default=None,
                   help="spectral filter (default: the algorithm's own)")
    p.add_argument("--center", type=float, default=None, metavar="C",
                   help="override the rotation-axis column from the file header")
    _add_kernel_args(p)
    p.add_argument("--workers", type=int, default=1, metavar="P")
    p.add_argument("--cache", default=None, metavar="DIR",
                   help="matrix cache directory (default: $SPTOMO_CACHE_DIR)")
    p.add_argument("--metrics-out", default=None, metavar="FILE",
                   help="write a JSON run report here")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("cache", help="build or inspect gridding-matrix caches")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--build", action="store_true")
    g.add_argument("--inspect", action="store_true")
    p.add_argument("--size", type=int, default=64, metavar="N")
    p.add_argument("--angles", type=int, default=90, metavar="A")
    p.add_argument("--center", type=float, default=None, metavar="C")
    _add_kernel_args(p)
    p.add_argument("--filter", choices=FILTER_KINDS, default="ramlak")
    p.add_argument("--cache", default=None, metavar="DIR")

    p = sub.add_parser("metrics", help="print SNR and residual of rec vs ref")
    p.add_argument("--rec", required=True, metavar="FILE")
    p.add_argument("--ref", required=True, metavar="FILE")

    return ap


def _require_file(path: str):
    if not os.path.isfile(path):
        raise SptomoError(f"input file not found: {path}")


def _cache_dir(arg_value):
    if arg_value is not None:
        return arg_value
    return os.environ.get("SPTOMO_CACHE_DIR")


def cmd_phantom(args) -> int:
    geom = ScanGeometry(n_p=args.size, n_theta=args.angles, n_z=args.slices)
    tomo = phantom_shepp_logan(args.size, n_z=args.slices)
    ops = build_operators(geom, filter_kind="none")
    sino = np.stack([ops.radon(tomo[z]) for z in range(args.slices)])
    if args.noise > 0.0:
        rng = np.random.default_rng(args.seed)
        sino = sino + args.noise * np.max(sino) * rng.standard_normal(sino.shape)
    truth = args.truth_out or _truth_path(args.out)
    write_volume(args.out, KIND_SINOGRAM, sino, center=geom.center,
                 angles=geom.angles)
    write_volume(truth, KIND_TOMOGRAM, tomo)
    print(f"wrote sinogram {sino.shape} -> {args.out}")
    print(f"wrote ground truth {tomo.shape} -> {truth}")
    return EXIT_OK


def cmd_recon(args) -> int:
    _require_file(args.infile)
    vol = read_volume(args.infile)
    if vol.kind == KIND_TOMOGRAM:
        raise SptomoError(f"{args.infile}: expected a sinogram or intensity "
                          "volume, found a tomogram")
    data = vol.data
    if vol.kind == KIND_INTENSITY:
        data = normalize(data, 1.0)
    if args.center is not None:
        geom = ScanGeometry(n_p=data.shape[2], n_theta=data.shape[1],
                            angles=vol.angles, n_z=data.shape[0],
                            center=args.center)
    else:
        geom = sinogram_geometry(vol)
    cfg = SolverConfig(algorithm=args.algo, max_iter=args.iters,
                       filter=args.filter, seed=args.seed)
    kernel = KernelSpec(family=args.kernel, width=args.kw)
    ops = build_operators(geom, kernel=kernel, filter_kind=cfg.filter_kind(),
                          cache_dir=_cache_dir(args.cache))
    stack = SinogramStack(data=data, geometry=geom)
    rec, report = run_pipeline(stack, cfg, workers=args.workers, ops=ops)
    write_volume(args.out, KIND_TOMOGRAM, rec.data)
    if args.metrics_out:
        record = {"algo": args.algo, "iters": report.iterations_run,
                  "snr_db": None, "residual_history": report.residual_history,
                  "wall_time": report.wall_time}
        with open(args.metrics_out, "w") as fh:
            json.dump([record], fh, indent=2)
            fh.write("\n")
    print(f"reconstructed {rec.data.shape} -> {args.out} "
          f"(algo={args.algo}, converged={report.converged})")
    return EXIT_OK


def cmd_cache(args) -> int:
    cache_dir = _cache_dir(args.cache)
    if cache_dir is None:
        raise SptomoError("no cache directory: pass --cache or set SPTOMO_CACHE_DIR")
    geom = ScanGeometry(n_p=args.size, n_theta=args.angles, center=args.center)
    kernel = KernelSpec(family=args.kernel, width=args.kw)
    if args.build:
        build_operators(geom, kernel=kernel, filter_kind=args.filter,
                        cache_dir=cache_dir)
    filter_ids = ["none"]
    if args.filter != "none":
        filter_ids.append(args.filter)
    entries = []
    missing = False
    for fid in filter_ids:
        key = make_cache_key(geom, kernel, fid)
        path = _cache_path(key, cache_dir)
        entry = {"filter": fid, "digest": key.digest, "path": path,
                 "present": os.path.isfile(path)}
        if entry["present"]:
            mat = cache_load(key, cache_dir)
            entry.update(rows=mat.shape[0], cols=mat.shape[1], nnz=int(mat.nnz))
        else:
            missing = True
        entries.append(entry)
    print(json.dumps(entries, indent=2))
    if args.inspect and missing:
        return EXIT_CACHE_MISS
    return EXIT_OK


def cmd_metrics(args) -> int:
    _require_file(args.rec)
    _require_file(args.ref)
    rec = read_volume(args.rec)
    ref = read_volume(args.ref)
    m = compute_metrics(rec.data, ref.data)
    print(f"snr_db={m.snr_db:.4f} residual={m.residual:.6e}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"phantom": cmd_phantom, "recon": cmd_recon,
                "cache": cmd_cache, "metrics": cmd_metrics}
    try:
        return handlers[args.command](args)
    except SptomoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
