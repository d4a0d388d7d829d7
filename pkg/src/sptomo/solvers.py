"""Reconstruction solvers: FBP, preconditioned SIRT with BB steps, CGLS
(with an optional CGS mode), and split-Bregman TV.

All solvers accept real sinograms or complex ones carrying two paired
slices (real part = slice a, imaginary part = slice b). Every scalar
coefficient (step sizes, Krylov coefficients, regularization weights) is
computed independently per channel, so a paired run produces exactly the
same iterates as two separate real runs while sharing the expensive
operator applications.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, NonFiniteError
from .operators import TomoOperators

ALGORITHMS = ("fbp", "sirt", "cgls", "tv")

# filter used when the config leaves it unset
DEFAULT_FILTERS = {"fbp": "ramlak", "sirt": "hamming", "cgls": "none", "tv": "none"}

DIVERGENCE_FACTOR = 10.0


@dataclass
class SolverConfig:
    algorithm: str = "fbp"
    max_iter: int = 10
    tol: float = 0.0
    mu: float | None = None
    tv_inner_iter: int = 2
    bb_enabled: bool = True
    filter: str | None = None
    seed: int = 0
    cgs_mode: bool = False
    nonneg: bool = False

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.tol < 0:
            raise ValueError("tol must be >= 0")
        if self.mu is not None and self.mu <= 0:
            raise ValueError("mu must be > 0")
        if self.tv_inner_iter < 1:
            raise ValueError("tv_inner_iter must be >= 1")

    def filter_kind(self) -> str:
        return self.filter if self.filter is not None else DEFAULT_FILTERS[self.algorithm]


@dataclass
class SolverReport:
    residual_history: list = field(default_factory=list)
    iterations_run: int = 0
    converged: bool = False
    wall_time: float = 0.0


def _is_complex(a) -> bool:
    return np.iscomplexobj(a)


def _chan_dot(a, b) -> np.ndarray:
    """Per-channel real dot products; shape (2,) for complex, (1,) for real."""
    if _is_complex(a) or _is_complex(b):
        return np.array([
            float(np.dot(np.ascontiguousarray(a.real).ravel(),
                         np.ascontiguousarray(b.real).ravel())),
            float(np.dot(np.ascontiguousarray(a.imag).ravel(),
                         np.ascontiguousarray(b.imag).ravel())),
        ])
    return np.array([float(np.dot(a.ravel(), b.ravel()))])


def _chan_scale(alpha: np.ndarray, v):
    """Multiply each channel of v by its own scalar."""
    if len(alpha) == 2:
        return alpha[0] * v.real + 1j * (alpha[1] * v.imag)
    return alpha[0] * v


def _weighted_norms(r, weights) -> np.ndarray:
    """Per-channel filter-weighted residual norms ||sqrt(w) F r||."""
    def one(ch):
        spec = np.fft.fft(ch, axis=-1, norm="ortho")
        return float(np.sqrt(np.sum(weights * np.abs(spec) ** 2)))
    if _is_complex(r):
        return np.array([one(r.real), one(r.imag)])
    return np.array([one(r)])


def _rss(norms: np.ndarray) -> float:
    return float(np.sqrt(np.sum(norms**2)))


def _safe_div(num: np.ndarray, den: np.ndarray, fallback: np.ndarray) -> np.ndarray:
    out = np.array(fallback, dtype=float, copy=True)
    ok = den > 0
    out[ok] = num[ok] / den[ok]
    return out


def _check_finite(u, what: str):
    if not np.all(np.isfinite(u.real)) or (_is_complex(u) and not np.all(np.isfinite(u.imag))):
        raise NonFiniteError(f"{what} produced non-finite values")


def _project_nonneg(u):
    if _is_complex(u):
        return np.maximum(u.real, 0.0) + 1j * np.maximum(u.imag, 0.0)
    return np.maximum(u, 0.0)


def solve_fbp(sino, ops: TomoOperators) -> tuple[np.ndarray, SolverReport]:
    """One-shot filtered backprojection through the calibrated iradon."""
    t0 = time.perf_counter()
    rec = ops.iradon(sino)
    w = ops.spectral_weights
    res = _rss(_weighted_norms(ops.radon(rec) - sino, w))
    _check_finite(rec, "fbp")
    return rec, SolverReport(residual_history=[res], iterations_run=1,
                             converged=True, wall_time=time.perf_counter() - t0)


def solve_sirt(sino, ops: TomoOperators, cfg: SolverConfig) -> tuple[np.ndarray, SolverReport]:
    """Preconditioned gradient descent with Barzilai-Borwein step selection.

    u <- u + alpha * A^H P r with P the Fourier-domain filter preconditioner.
    The first step uses the exact quadratic line search; later steps use BB1
    with the line-search value as a safeguarded fallback. Raises
    DivergenceError when the residual exceeds 10x its running minimum.
    """
    t0 = time.perf_counter()
    w = ops.spectral_weights
    u = np.zeros(ops.geom.grid_shape, dtype=complex if _is_complex(sino) else float)
    b_norm = _weighted_norms(sino, w)
    report = SolverReport()
    if _rss(b_norm) == 0.0:
        report.converged = True
        report.wall_time = time.perf_counter() - t0
        return u, report

    r = sino.copy()
    g = ops.radon_adjoint(ops.apply_weights(r))
    ag = ops.radon(g)
    alpha0 = _safe_div(_chan_dot(g, g), _weighted_norms(ag, w) ** 2,
                       np.zeros(len(b_norm)))
    alpha = alpha0
    min_res = np.inf
    for _ in range(cfg.max_iter):
        du = _chan_scale(alpha, g)
        u = u + du
        if cfg.nonneg:
            u = _project_nonneg(u)
        r = sino - ops.radon(u)
        res_c = _weighted_norms(r, w)
        res = _rss(res_c)
        report.residual_history.append(res)
        report.iterations_run += 1
        _check_finite(u, "sirt")
        min_res = min(min_res, res)
        if res > DIVERGENCE_FACTOR * min_res:
            raise DivergenceError(
                f"sirt residual {res:.3e} exceeds 10x its minimum {min_res:.3e}")
        rel = _safe_div(res_c, b_norm, np.zeros_like(res_c))
        if np.max(rel) <= cfg.tol:
            report.converged = True
            break
        g_new = ops.radon_adjoint(ops.apply_weights(r))
        if cfg.bb_enabled:
            dg = g - g_new
            alpha = _safe_div(_chan_dot(du, du), _chan_dot(du, dg), alpha0)
            alpha = np.where(alpha > 0, alpha, alpha0)
        else:
            alpha = alpha0
        g = g_new
    report.wall_time = time.perf_counter() - t0
    return u, report


def _cgls_core(apply_fwd, apply_adj, resid_norms, b_like, u0, max_iter, tol,
               report: SolverReport):
    """Shared CGLS recurrence over an abstract forward/adjoint pair.

    apply_fwd(u) -> residual-space product; apply_adj(r) -> grid-space
    product including any preconditioning; resid_norms(r) -> per-channel
    norms in the objective's metric. Returns the final iterate.
    """
    u = u0
    r = b_like - apply_fwd(u)
    s = apply_adj(r)
    p = s.copy()
    gamma = _chan_dot(s, s)
    gamma0 = gamma.copy()
    b_norm = resid_norms(b_like)
    for _ in range(max_iter):
        q = apply_fwd(p)
        delta = resid_norms(q) ** 2
        active = (delta > 0) & (gamma > np.finfo(float).eps ** 2 * gamma0)
        if not np.any(active):
            # all channels converged or broke down; converged stays as-is
            break
        alpha = np.where(active, _safe_div(gamma, delta, np.zeros_like(gamma)), 0.0)
        u = u + _chan_scale(alpha, p)
        r = r - _chan_scale(alpha, q)
        res_c = resid_norms(r)
        report.residual_history.append(_rss(res_c))
        report.iterations_run += 1
        _check_finite(u, "cgls")
        rel = _safe_div(res_c, b_norm, np.zeros_like(res_c))
        if np.max(rel) <= tol:
            report.converged = True
            break
        s = apply_adj(r)
        gamma_new = _chan_dot(s, s)
        beta = np.where(active, _safe_div(gamma_new, gamma, np.zeros_like(gamma)), 0.0)
        gamma = gamma_new
        p = s + _chan_scale(beta, p)
    return u


def solve_cgls(sino, ops: TomoOperators, cfg: SolverConfig) -> tuple[np.ndarray, SolverReport]:
    """Conjugate-gradient least squares on min ||sqrt(w) F (radon(u) - sino)||.

    With the default filter "none" this is plain least squares. The reported
    residual is monotone non-increasing by construction. cfg.cgs_mode swaps
    in the conjugate-gradient-squared recurrence on the normal equations.
    """
    t0 = time.perf_counter()
    w = ops.spectral_weights
    cplx = _is_complex(sino)
    u0 = np.zeros(ops.geom.grid_shape, dtype=complex if cplx else float)
    report = SolverReport()
    if _rss(_weighted_norms(sino, w)) == 0.0:
        report.converged = True
        report.wall_time = time.perf_counter() - t0
        return u0, report

    if cfg.cgs_mode:
        u = _cgs_normal_eq(sino, ops, cfg, report)
    else:
        u = _cgls_core(
            apply_fwd=ops.radon,
            apply_adj=lambda r: ops.radon_adjoint(ops.apply_weights(r)),
            resid_norms=lambda r: _weighted_norms(r, w),
            b_like=sino, u0=u0, max_iter=cfg.max_iter, tol=cfg.tol,
            report=report)
    if cfg.nonneg:
        u = _project_nonneg(u)
    report.wall_time = time.perf_counter() - t0
    return u, report


def _cgs_normal_eq(sino, ops: TomoOperators, cfg: SolverConfig, report: SolverReport):
    """Conjugate gradient squared applied to A^H P A u = A^H P b."""
    w = ops.spectral_weights

    def M(v):
        return ops.radon_adjoint(ops.apply_weights(ops.radon(v)))

    c = ops.radon_adjoint(ops.apply_weights(sino))
    u = np.zeros_like(c)
    r = c.copy()
    r_shadow = c.copy()
    rho = _chan_dot(r_shadow, r)
    p = r.copy()
    q_dir = r.copy()
    b_norm = _weighted_norms(sino, w)
    for _ in range(cfg.max_iter):
        v = M(p)
        sigma = _chan_dot(r_shadow, v)
        active = np.abs(sigma) > 0
        if not np.any(active):
            report.converged = False
            break
        alpha = np.where(active, _safe_div(rho, sigma, np.zeros_like(rho)), 0.0)
        h = q_dir - _chan_scale(alpha, v)
        step = q_dir + h
        u = u + _chan_scale(alpha, step)
        r = r - _chan_scale(alpha, M(step))
        res_c = _weighted_norms(sino - ops.radon(u), w)
        report.residual_history.append(_rss(res_c))
        report.iterations_run += 1
        _check_finite(u, "cgs")
        rel = _safe_div(res_c, b_norm, np.zeros_like(res_c))
        if np.max(rel) <= cfg.tol:
            report.converged = True
            break
        rho_new = _chan_dot(r_shadow, r)
        if not np.any(np.abs(rho_new) > 0):
            report.converged = False
            break
        beta = _safe_div(rho_new, rho, np.zeros_like(rho_new))
        rho = rho_new
        q_dir = r + _chan_scale(beta, h)
        p = q_dir + _chan_scale(beta, h + _chan_scale(beta, p))
    return u


def grad2d(u):
    """Forward differences with reflective boundary (last row/col zero)."""
    gx = np.zeros_like(u)
    gy = np.zeros_like(u)
    gx[:, :-1] = u[:, 1:] - u[:, :-1]
    gy[:-1, :] = u[1:, :] - u[:-1, :]
    return gx, gy


def div2d(vx, vy):
    """Negative adjoint of grad2d: ⟨grad u, (vx,vy)⟩ == ⟨u, -div2d(vx,vy)⟩."""
    dx = np.zeros_like(vx)
    dx[:, 0] = -vx[:, 0]
    dx[:, 1:-1] = vx[:, :-2] - vx[:, 1:-1]
    dx[:, -1] = vx[:, -2]
    dy = np.zeros_like(vy)
    dy[0, :] = -vy[0, :]
    dy[1:-1, :] = vy[:-2, :] - vy[1:-1, :]
    dy[-1, :] = vy[-2, :]
    return -(dx + dy)


def shrink_iso(vx, vy, kappa: np.ndarray):
    """Isotropic soft shrinkage of a 2-vector field, channel by channel."""
    def one(ax, ay, kap):
        mag = np.sqrt(ax**2 + ay**2)
        scale = np.maximum(mag - kap, 0.0) / np.where(mag > 0, mag, 1.0)
        return ax * scale, ay * scale
    if _is_complex(vx):
        rx, ry = one(vx.real, vy.real, kappa[0])
        ix, iy = one(vx.imag, vy.imag, kappa[-1])
        return rx + 1j * ix, ry + 1j * iy
    rx, ry = one(vx, vy, kappa[0])
    return rx, ry


def solve_tv(sino, ops: TomoOperators, cfg: SolverConfig) -> tuple[np.ndarray, SolverReport]:
    """Split-Bregman total-variation reconstruction.

    Minimizes ||grad u||_1 + (mu/2)||sqrt(w) F (radon(u) - sino)||^2 by
    alternating a quadratic step (a few CGLS iterations on the stacked
    system), isotropic shrinkage, and the Bregman update. lambda = 2 mu.
    """
    t0 = time.perf_counter()
    w = ops.spectral_weights
    cplx = _is_complex(sino)
    dt = complex if cplx else float
    nch = 2 if cplx else 1
    report = SolverReport()
    b_norm = _weighted_norms(sino, w)
    u = np.zeros(ops.geom.grid_shape, dtype=dt)
    if _rss(b_norm) == 0.0:
        report.converged = True
        report.wall_time = time.perf_counter() - t0
        return u, report

    if cfg.mu is not None:
        mu = np.full(nch, float(cfg.mu))
    else:
        back = ops.radon_adjoint(sino)
        if cplx:
            mu = 0.1 * np.array([np.max(np.abs(back.real)), np.max(np.abs(back.imag))])
        else:
            mu = 0.1 * np.array([np.max(np.abs(back))])
        mu = np.where(mu > 0, mu, 1.0)
    lam = 2.0 * mu
    sq_mu = np.sqrt(mu)
    sq_lam = np.sqrt(lam)

    shape = ops.geom.grid_shape
    dx = np.zeros(shape, dtype=dt)
    dy = np.zeros(shape, dtype=dt)
    bx = np.zeros(shape, dtype=dt)
    by = np.zeros(shape, dtype=dt)

    class _Stacked:
        """(sino, gx, gy) triple scaled by sqrt(mu) / sqrt(lambda)."""
        def __init__(self, a, x, y):
            self.a, self.x, self.y = a, x, y
        def __sub__(self, o):
            return _Stacked(self.a - o.a, self.x - o.x, self.y - o.y)
        def copy(self):
            return _Stacked(self.a.copy(), self.x.copy(), self.y.copy())

    def fwd(v):
        gx, gy = grad2d(v)
        return _Stacked(_chan_scale(sq_mu, ops.radon(v)),
                        _chan_scale(sq_lam, gx), _chan_scale(sq_lam, gy))

    def adj(rs):
        back = ops.radon_adjoint(ops.apply_weights(_chan_scale(sq_mu, rs.a)))
        return back - div2d(_chan_scale(sq_lam, rs.x), _chan_scale(sq_lam, rs.y))

    def norms(rs):
        return np.sqrt(_weighted_norms(rs.a, w) ** 2
                       + _chan_dot(rs.x, rs.x) + _chan_dot(rs.y, rs.y))

    def scale_stacked(alpha, rs):
        return _Stacked(_chan_scale(alpha, rs.a), _chan_scale(alpha, rs.x),
                        _chan_scale(alpha, rs.y))

    for _ in range(cfg.max_iter):
        target = _Stacked(_chan_scale(sq_mu, sino),
                          _chan_scale(sq_lam, dx - bx), _chan_scale(sq_lam, dy - by))
        inner = SolverReport()
        u = _cgls_core_stacked(fwd, adj, norms, scale_stacked, target, u,
                               cfg.tv_inner_iter, inner)
        if cfg.nonneg:
            u = _project_nonneg(u)
        _check_finite(u, "tv")
        gx, gy = grad2d(u)
        dx, dy = shrink_iso(gx + bx, gy + by, 1.0 / lam)
        bx = bx + gx - dx
        by = by + gy - dy
        res_c = _weighted_norms(sino - ops.radon(u), w)
        report.residual_history.append(_rss(res_c))
        report.iterations_run += 1
        rel = _safe_div(res_c, b_norm, np.zeros_like(res_c))
        if cfg.tol > 0 and np.max(rel) <= cfg.tol:
            report.converged = True
            break
    else:
        report.converged = True
    report.wall_time = time.perf_counter() - t0
    return u, report


def _cgls_core_stacked(fwd, adj, norms, scale_stacked, b, u0, max_iter, report):
    """CGLS over the stacked TV system; mirrors _cgls_core with tuple residuals."""
    u = u0
    r = b - fwd(u)
    s = adj(r)
    p = s.copy()
    gamma = _chan_dot(s, s)
    for _ in range(max_iter):
        q = fwd(p)
        delta = norms(q) ** 2
        if not (np.all(np.isfinite(delta)) and np.all(np.isfinite(gamma))):
            raise NonFiniteError(
                "tv quadratic subproblem overflowed (mu/lambda too large?)")
        active = delta > 0
        if not np.any(active):
            break
        alpha = np.where(active, _safe_div(gamma, delta, np.zeros_like(gamma)), 0.0)
        u = u + _chan_scale(alpha, p)
        r = r - scale_stacked(alpha, q)
        report.iterations_run += 1
        s = adj(r)
        gamma_new = _chan_dot(s, s)
        beta = np.where(active, _safe_div(gamma_new, gamma, np.zeros_like(gamma)), 0.0)
        gamma = gamma_new
        p = s + _chan_scale(beta, p)
    return u


def solve(sino, ops: TomoOperators, cfg: SolverConfig) -> tuple[np.ndarray, SolverReport]:
    """Dispatch to the solver named by cfg.algorithm."""
    if cfg.algorithm == "fbp":
        return solve_fbp(sino, ops)
    if cfg.algorithm == "sirt":
        return solve_sirt(sino, ops, cfg)
    if cfg.algorithm == "cgls":
        return solve_cgls(sino, ops, cfg)
    if cfg.algorithm == "tv":
        return solve_tv(sino, ops, cfg)
    raise ValueError(f"unknown algorithm {cfg.algorithm!r}")
