"""Reconstruct one noisy slice with every solver and compare SNR.

Walks the full single-slice path: make a phantom, project it through the
sparse gridding operator, add detector noise, then reconstruct with FBP,
SIRT (BB steps), CGLS, and split-Bregman TV. Prints per-solver SNR and the
residual trace so the convergence behavior is visible.

Run:  python3 demos/compare_solvers.py
"""

import numpy as np

from sptomo import (ScanGeometry, SolverConfig, build_operators,
                    phantom_shepp_logan, snr, solve)

N = 64
N_THETA = 90
NOISE = 0.02

geom = ScanGeometry(n_p=N, n_theta=N_THETA)
truth = phantom_shepp_logan(N)[0]

# Each algorithm gets the operator bundle built for its own default filter:
# a ramp for FBP, a smoother Hamming ramp for SIRT/CGLS gradients, and the
# raw (unfiltered) operator for TV.
bundles = {kind: build_operators(geom, filter_kind=kind)
           for kind in ("ramlak", "hamming", "none")}

sino = bundles["ramlak"].radon(truth)
rng = np.random.default_rng(0)
sino = sino + NOISE * np.max(sino) * rng.standard_normal(sino.shape)

runs = [
    ("fbp", SolverConfig(algorithm="fbp"), "ramlak"),
    ("sirt", SolverConfig(algorithm="sirt", max_iter=10), "hamming"),
    ("cgls", SolverConfig(algorithm="cgls", max_iter=10, filter="hamming"),
     "hamming"),
    ("tv", SolverConfig(algorithm="tv", max_iter=10, filter="none"), "none"),
]

print(f"{N}x{N} slice, {N_THETA} angles, noise {NOISE:.0%} of max\n")
for name, cfg, filt in runs:
    rec, report = solve(sino, bundles[filt], cfg)
    trace = " -> ".join(f"{r:.1f}" for r in report.residual_history[:5])
    if len(report.residual_history) > 5:
        trace += " ..."
    print(f"{name:>5}: SNR {snr(rec, truth):6.2f} dB   "
          f"{report.iterations_run:2d} iters   residual {trace}")

print("\nTV keeps the piecewise-constant regions flat where FBP rings;")
print("SIRT/CGLS sit in between at matched iteration counts.")
