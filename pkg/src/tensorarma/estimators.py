"""High-dimensional estimators: squared loss, alternating minimization, ADMM.

Two fitting routes share the same blockwise structure: scalar decay
parameters are updated by safeguarded 1-D/2-D Newton solves on their partial
losses, and the factor blocks (U1, U2, core) by least squares built from the
filtered lag features z_{t,k} = sum_j l_{j,k} y_{t-j}.  The sparse route
additionally runs an ADMM whose factor subproblems are l1-penalized least
squares under orthonormality constraints, and whose core is driven to
row-orthogonal matricizations through a diagonal-times-orthonormal splitting.
"""
from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from .basis import DEFAULT_RHO_BAR, DecayParams, canonicalize, loading_matrix
from .model import VarInfModel
from .tensor_ops import TuckerFactors, hosvd, matricize, mode_product, tensorize

RIDGE = 1e-10  # fallback regularization for rank-deficient least squares


# ---------------------------------------------------------------------------
# Lag features and loss
# ---------------------------------------------------------------------------

def _geometric_feature(y: np.ndarray, coef: complex, p: int) -> np.ndarray:
    """z_t = sum_{m=1}^{t-1-p} coef^m y_{t-p-m}, exact via the IIR recursion
    z_{t+1} = coef (y_{t-p} + z_t)."""
    t_len = y.shape[0]
    out = np.zeros(y.shape, dtype=complex if np.iscomplexobj(np.asarray(coef)) else float)
    if t_len > p + 1:
        filt = lfilter([coef], [1.0, -coef], y, axis=0)
        out[p + 1:] = filt[: t_len - p - 1]
    return out


def _z_all(y: np.ndarray, params: DecayParams) -> np.ndarray:
    """All lag features as a (T, N, d) array; column k at time t is z_{t,k}."""
    t_len, n = y.shape
    z = np.zeros((t_len, n, params.d))
    for k in range(1, params.p + 1):
        z[k:, :, k - 1] = y[:-k]
    for i, lam in enumerate(params.lambdas):
        z[:, :, params.p + i] = _geometric_feature(y, lam, params.p)
    for h, (gam, th) in enumerate(zip(params.gammas, params.thetas)):
        w = _geometric_feature(y, gam * np.exp(1j * th), params.p)
        col = params.p + params.r + 2 * h
        z[:, :, col] = w.real
        z[:, :, col + 1] = w.imag
    return z


def lag_features(data: np.ndarray, params: DecayParams, t: int | None = None) -> np.ndarray:
    """Filtered lag features.  With ``t`` (1-based) returns the N x d matrix
    whose column k is z_{t,k}; otherwise the full (T, N, d) array."""
    y = np.asarray(data, dtype=float)
    z = _z_all(y, params)
    if t is None:
        return z
    if not 1 <= t <= y.shape[0]:
        raise IndexError(f"t must lie in 1..{y.shape[0]}")
    return z[t - 1]


def _z_to_design(z: np.ndarray) -> np.ndarray:
    """(T, N, d) features to the (T, N*d) design whose row t stacks the columns
    z_{t,1}, ..., z_{t,d} (matching the mode-1 matricization of g)."""
    t_len, n, d = z.shape
    return z.transpose(0, 2, 1).reshape(t_len, d * n)


def squared_loss(data: np.ndarray, params: DecayParams, g: np.ndarray) -> float:
    """sum_t || y_t - sum_{j<t} A_j y_{t-j} ||^2 with zero pre-sample values."""
    y = np.asarray(data, dtype=float)
    g = np.asarray(g, dtype=float)
    if g.shape != (y.shape[1], y.shape[1], params.d):
        raise ValueError(f"g must be N x N x {params.d}, got {g.shape}")
    if params.d == 0:
        return float(np.sum(y**2))
    pred = _z_to_design(_z_all(y, params)) @ matricize(g, 1).T
    return float(np.sum((y - pred) ** 2))


def soft_threshold(x: np.ndarray, level: float) -> np.ndarray:
    """Proximal operator of level * ||.||_1: sign(x) * max(|x| - level, 0)."""
    return np.sign(x) * np.maximum(np.abs(x) - level, 0.0)


def procrustes_orthonormal(a: np.ndarray) -> np.ndarray:
    """The orthonormal matrix maximizing <V, a>: the polar factor u @ vt of a."""
    u, _, vt = np.linalg.svd(a, full_matrices=False)
    return u @ vt


# ---------------------------------------------------------------------------
# Configuration and report
# ---------------------------------------------------------------------------

@dataclass
class FitConfig:
    ranks: tuple[int, int]
    orders: tuple[int, int, int]
    max_outer_iters: int = 200
    tol_rel_loss: float = 1e-6
    lambda_l1: float = 0.0
    admm_rho1: float = 1.0
    admm_rho2: float = 1.0
    admm_kappa: float = 1.0
    admm_max_iters: int = 500
    admm_tol: float = 1e-6
    newton_max_steps: int = 25
    newton_step_tol: float = 1e-9
    rho_bar: float = DEFAULT_RHO_BAR
    lambda_floor: float = 1e-4  # the box excludes 0: |lambda| >= lambda_floor
    seed: int | None = None

    def __post_init__(self):
        r1, r2 = self.ranks
        if r1 < 1 or r2 < 1:
            raise ValueError("ranks must be >= 1")
        if min(self.orders) < 0 or sum(self.orders) == 0:
            raise ValueError("orders must be nonnegative and not all zero")
        if self.tol_rel_loss <= 0 or self.admm_tol <= 0 or self.newton_step_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.lambda_l1 < 0:
            raise ValueError("lambda_l1 must be >= 0")
        if self.admm_rho1 <= 0 or self.admm_rho2 <= 0 or self.admm_kappa <= 0:
            raise ValueError("ADMM penalties must be positive")

    @property
    def d(self) -> int:
        p, r, s = self.orders
        return p + r + 2 * s

    def replace(self, **kwargs) -> "FitConfig":
        out = dict(self.__dict__)
        out.update(kwargs)
        return FitConfig(**out)


@dataclass
class FitReport:
    model: VarInfModel
    loss_trajectory: list[float]
    converged: bool
    n_iters: int
    hyperparameters: dict
    wall_time: float
    flags: list[str] = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.loss_trajectory[-1]

    def to_dict(self) -> dict:
        from .model import model_to_dict

        return {
            "type": "fit_report",
            "model": model_to_dict(self.model),
            "loss_trajectory": list(map(float, self.loss_trajectory)),
            "converged": self.converged,
            "n_iters": self.n_iters,
            "hyperparameters": self.hyperparameters,
            "wall_time": self.wall_time,
            "flags": self.flags,
        }


def _check_data(y: np.ndarray, d: int) -> None:
    if y.ndim != 2:
        raise ValueError("data must be a T x N array")
    if y.shape[0] <= d:
        raise ValueError(f"need T > d = {d} observations, got T = {y.shape[0]}")
    if np.any(np.ptp(y, axis=0) == 0):
        raise ValueError("constant series detected; the loss is degenerate")


# ---------------------------------------------------------------------------
# Safeguarded scalar solvers for the decay-parameter blocks
# ---------------------------------------------------------------------------

def _golden_section(f, lo: float, hi: float, tol: float = 1e-8, max_iters: int = 80):
    ratio = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    if b <= a:
        return lo, f(lo)
    c, d = b - ratio * (b - a), a + ratio * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iters):
        if b - a < tol:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - ratio * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + ratio * (b - a)
            fd = f(d)
    x = c if fc < fd else d
    return x, min(fc, fd)


def _newton_1d(f, x0: float, lo: float, hi: float, max_steps: int, step_tol: float):
    """Damped Newton with numerical derivatives.

    Overshooting steps are backtracked inside the box rather than projected
    onto it (projection would jump across basins straight to the boundary).
    A local golden-section bracket takes over when the curvature is not
    positive.
    """
    span = hi - lo
    x = min(max(x0, lo), hi)
    fx = f(x)
    for _ in range(max_steps):
        h = 1e-5 * max(1.0, abs(x))
        h = min(h, span / 4)
        xp, xm = min(x + h, hi), max(x - h, lo)
        if xp - xm < 1e-14:
            break
        fp, fm = f(xp), f(xm)
        grad = (fp - fm) / (xp - xm)
        hess = (fp - 2 * fx + fm) / ((0.5 * (xp - xm)) ** 2)
        if not np.isfinite(hess) or hess <= 0:
            width = 0.15 * span
            xg, fg = _golden_section(f, max(lo, x - width), min(hi, x + width))
            if fg < fx:
                x, fx = xg, fg
                continue
            break
        step = -grad / hess
        improved = False
        for _ in range(30):
            xn = x + step
            if lo <= xn <= hi:
                fn = f(xn)
                if fn <= fx:
                    improved = True
                    break
            step *= 0.5
            if abs(step) < step_tol:
                break
        if not improved:
            break
        moved = abs(xn - x)
        x, fx = xn, fn
        if moved < step_tol:
            break
    return x, fx


def _grid_refine_2d(f, x0, bounds, fx0, rounds: int = 6):
    # local 9-point stencil; deliberately narrow so the solve stays in the
    # current basin, like the damped Newton step it substitutes for
    (g_lo, g_hi), (t_lo, t_hi) = bounds
    x, fx = np.array(x0, dtype=float), fx0
    h = np.array([(g_hi - g_lo) / 32, (t_hi - t_lo) / 32])
    for _ in range(rounds):
        best, fbest = x, fx
        for dg in (-1, 0, 1):
            for dt in (-1, 0, 1):
                if dg == 0 and dt == 0:
                    continue
                cand = np.array([
                    min(max(x[0] + dg * h[0], g_lo), g_hi),
                    min(max(x[1] + dt * h[1], t_lo), t_hi),
                ])
                fc = f(cand)
                if fc < fbest:
                    best, fbest = cand, fc
        x, fx = best, fbest
        h *= 0.5
    return x, fx


def _newton_2d(f, x0, bounds, max_steps: int, step_tol: float):
    (g_lo, g_hi), (t_lo, t_hi) = bounds

    def clip(v):
        return np.array([min(max(v[0], g_lo), g_hi), min(max(v[1], t_lo), t_hi)])

    x = clip(np.asarray(x0, dtype=float))
    fx = f(x)
    for _ in range(max_steps):
        h = np.array([1e-5 * max(1.0, abs(x[0])), 1e-5 * max(1.0, abs(x[1]))])
        e0, e1 = np.array([h[0], 0.0]), np.array([0.0, h[1]])
        fpp, fpm = f(clip(x + e0)), f(clip(x - e0))
        ftp, ftm = f(clip(x + e1)), f(clip(x - e1))
        grad = np.array([(fpp - fpm) / (2 * h[0]), (ftp - ftm) / (2 * h[1])])
        h11 = (fpp - 2 * fx + fpm) / h[0] ** 2
        h22 = (ftp - 2 * fx + ftm) / h[1] ** 2
        h12 = (
            f(clip(x + e0 + e1)) - f(clip(x + e0 - e1))
            - f(clip(x - e0 + e1)) + f(clip(x - e0 - e1))
        ) / (4 * h[0] * h[1])
        hess = np.array([[h11, h12], [h12, h22]])
        pd = np.all(np.isfinite(hess)) and h11 > 0 and np.linalg.det(hess) > 0
        if not pd:
            return _grid_refine_2d(f, x, bounds, fx)
        step = -np.linalg.solve(hess, grad)
        improved = False
        for _ in range(30):
            xn = x + step
            if np.all(xn == clip(xn)):  # backtrack inside the box, do not project
                fn = f(xn)
                if fn <= fx:
                    improved = True
                    break
            step *= 0.5
            if np.linalg.norm(step) < step_tol:
                break
        if not improved:
            break
        moved = np.linalg.norm(xn - x)
        x, fx = xn, fn
        if moved < step_tol:
            break
    return x, fx


class _OmegaState:
    """Shared bookkeeping for the blockwise decay-parameter updates."""

    def __init__(self, y: np.ndarray, params: DecayParams, g: np.ndarray, cfg: FitConfig):
        self.y = y
        self.params = params
        self.g = g
        self.cfg = cfg
        self.z = _z_all(y, params)
        self.flags: list[str] = []
        self._refresh_pred()

    def _refresh_pred(self):
        self.g1 = matricize(self.g, 1)
        self.pred = _z_to_design(self.z) @ self.g1.T

    def loss(self) -> float:
        return float(np.sum((self.y - self.pred) ** 2))

    def set_g(self, g: np.ndarray):
        self.g = g
        self._refresh_pred()

    def update_lambdas(self):
        cfg, p = self.cfg, self.params.p
        eps, hi = cfg.lambda_floor, cfg.rho_bar * (1 - 1e-9)
        lambdas = self.params.lambdas.copy()
        for i in range(self.params.r):
            col = p + i
            gk = self.g[:, :, col]
            contrib = self.z[:, :, col] @ gk.T
            target = self.y - self.pred + contrib

            def part_loss(lam):
                zf = _geometric_feature(self.y, lam, p)
                return float(np.sum((target - zf @ gk.T) ** 2))

            cur = lambdas[i]
            best_x, best_f = cur, part_loss(cur)
            for lo, up in ((eps, hi), (-hi, -eps)):
                start = cur if lo <= cur <= up else 0.5 * (lo + up)
                x, fval = _newton_1d(part_loss, start, lo, up,
                                     cfg.newton_max_steps, cfg.newton_step_tol)
                if fval < best_f:
                    best_x, best_f = x, fval
            if abs(best_x) >= hi - 1e-12 or abs(best_x) <= eps + 1e-12:
                self.flags.append(f"lambda_{i + 1} clamped to the box boundary")
            lambdas[i] = best_x
            new_z = _geometric_feature(self.y, best_x, p)
            self.pred += (new_z - self.z[:, :, col]) @ gk.T
            self.z[:, :, col] = new_z
        self.params = self.params.replace(lambdas=lambdas)

    def update_pairs(self):
        cfg, p = self.cfg, self.params.p
        bounds = ((cfg.lambda_floor, cfg.rho_bar * (1 - 1e-9)),
                  (1e-4, np.pi - 1e-4))
        gammas = self.params.gammas.copy()
        thetas = self.params.thetas.copy()
        for h in range(self.params.s):
            c1 = p + self.params.r + 2 * h
            g_cos, g_sin = self.g[:, :, c1], self.g[:, :, c1 + 1]
            contrib = self.z[:, :, c1] @ g_cos.T + self.z[:, :, c1 + 1] @ g_sin.T
            target = self.y - self.pred + contrib

            def part_loss(x):
                w = _geometric_feature(self.y, x[0] * np.exp(1j * x[1]), p)
                return float(np.sum((target - w.real @ g_cos.T - w.imag @ g_sin.T) ** 2))

            cur = np.array([gammas[h], thetas[h]])
            f_cur = part_loss(cur)
            x, fval = _newton_2d(part_loss, cur, bounds,
                                 cfg.newton_max_steps, cfg.newton_step_tol)
            if fval >= f_cur:
                x, fval = cur, f_cur
            on_edge = (x[0] <= bounds[0][0] + 1e-12 or x[0] >= bounds[0][1] - 1e-12
                       or x[1] <= bounds[1][0] + 1e-12 or x[1] >= bounds[1][1] - 1e-12)
            if on_edge:
                self.flags.append(f"pair_{h + 1} clamped to the box boundary")
            gammas[h], thetas[h] = x
            w = _geometric_feature(self.y, x[0] * np.exp(1j * x[1]), p)
            self.pred += ((w.real - self.z[:, :, c1]) @ g_cos.T
                          + (w.imag - self.z[:, :, c1 + 1]) @ g_sin.T)
            self.z[:, :, c1] = w.real
            self.z[:, :, c1 + 1] = w.imag
        self.params = self.params.replace(gammas=gammas, thetas=thetas)


# ---------------------------------------------------------------------------
# Factor-block least squares (shared between the two fitting routes)
# ---------------------------------------------------------------------------

def _solve_psd(a: np.ndarray, b: np.ndarray, flags: list[str], what: str) -> np.ndarray:
    """Solve a x = b for symmetric PSD a, adding a ridge when near-singular."""
    try:
        cond_bad = np.linalg.cond(a) > 1e12
    except np.linalg.LinAlgError:
        cond_bad = True
    if cond_bad:
        flags.append(f"{what} least squares was rank-deficient; ridge applied")
        a = a + RIDGE * max(np.trace(a) / max(a.shape[0], 1), 1.0) * np.eye(a.shape[0])
    return np.linalg.solve(a, b)


def _stacked_features(z: np.ndarray, u2: np.ndarray) -> np.ndarray:
    """q_t = stacked U2' z_{t,k} over k, as a (T, d*R2) array whose column
    blocks match the mode-1 matricization of the core."""
    zu = np.einsum("tnk,nb->tbk", z, u2, optimize=True)  # (T, R2, d)
    t_len, r2, d = zu.shape
    return zu.transpose(0, 2, 1).reshape(t_len, d * r2)


def _u2_normal_equations(z, y, u1, s1):
    """Gram matrix and right-hand side of the U2 least squares (vec row-major)."""
    t_len, n, d = z.shape
    r2 = s1.shape[1] // d
    f = (u1 @ s1).reshape(n, r2, d, order="F")  # slices F_k = U1 S_k
    zf = z.reshape(t_len, n * d)
    zz = (zf.T @ zf).reshape(n, d, n, d)
    ftf = np.einsum("nbk,ncl->kblc", f, f, optimize=True)
    gram = np.einsum("jkil,kblc->jbic", zz, ftf, optimize=True).reshape(n * r2, n * r2)
    yf = np.einsum("tn,nbk->tbk", y, f, optimize=True)
    rhs = np.einsum("tjk,tbk->jb", z, yf, optimize=True).reshape(n * r2)
    return gram, rhs


def _core_matrix(core: np.ndarray) -> np.ndarray:
    return matricize(core, 1)


def _als_factor_updates(state: _OmegaState, u1, u2, core, flags):
    """One pass of the closed-form U1 / U2 / core least-squares updates,
    each accepted only if it does not increase the loss."""
    y, z = state.y, state.z
    r1, r2 = u1.shape[1], u2.shape[1]
    d = core.shape[2]

    def try_accept(u1n, u2n, coren):
        g_new = mode_product(mode_product(coren, u1n, 1), u2n, 2)
        pred = _z_to_design(z) @ matricize(g_new, 1).T
        new_loss = float(np.sum((y - pred) ** 2))
        if new_loss <= state.loss():
            state.set_g(g_new)
            return u1n, u2n, coren
        flags.append("factor update rejected (would increase loss)")
        return None

    s1 = _core_matrix(core)
    c = _stacked_features(z, u2) @ s1.T
    u1_new = _solve_psd(c.T @ c, c.T @ y, flags, "U1").T
    out = try_accept(u1_new, u2, core)
    if out is not None:
        u1, u2, core = out

    s1 = _core_matrix(core)
    gram, rhs = _u2_normal_equations(z, y, u1, s1)
    u2_new = _solve_psd(gram, rhs, flags, "U2").reshape(u2.shape)
    out = try_accept(u1, u2_new, core)
    if out is not None:
        u1, u2, core = out

    q = _stacked_features(z, u2)
    m1 = u1.T @ u1
    rhs = u1.T @ (y.T @ q)
    s1_new = _solve_psd(m1, rhs, flags, "core")
    s1_new = _solve_psd((q.T @ q).T, s1_new.T, flags, "core").T
    core_new = tensorize(s1_new, 1, (r1, r2, d))
    out = try_accept(u1, u2, core_new)
    if out is not None:
        u1, u2, core = out
    return u1, u2, core


def _finalize_model(params, g, ranks, noise_from, flags) -> VarInfModel:
    params, g = canonicalize(params, g)
    factors = hosvd(g, ranks) if np.linalg.norm(g) > 0 else None
    resid_cov = np.cov(noise_from.T) if noise_from is not None else None
    model = VarInfModel(params=params, g=g, factors=factors, noise_cov=resid_cov)
    return model


def fit_rank_constrained(data: np.ndarray, cfg: FitConfig,
                         init: VarInfModel) -> FitReport:
    """Alternating minimization for the rank-constrained estimator.

    Cycles 1-D/2-D decay-parameter solves with closed-form least squares for
    the two loadings and the core; every block update is accepted only when it
    does not increase the loss, so the recorded trajectory is non-increasing.
    """
    start = time.perf_counter()
    y = np.asarray(data, dtype=float)
    _check_data(y, cfg.d)
    params = init.params.replace(rho_bar=cfg.rho_bar)
    if init.factors is not None:
        u1, u2, core = init.factors.u1, init.factors.u2, init.factors.core
        g = init.factors.compose()
    else:
        fac = hosvd(init.g, cfg.ranks)
        u1, u2, core = fac.u1, fac.u2, fac.core
        g = fac.compose()

    state = _OmegaState(y, params, g, cfg)
    flags = state.flags
    trajectory = [state.loss()]
    converged = False
    iters = 0
    for iters in range(1, cfg.max_outer_iters + 1):
        state.update_lambdas()
        state.update_pairs()
        u1, u2, core = _als_factor_updates(state, u1, u2, core, flags)
        cur = state.loss()
        prev = trajectory[-1]
        trajectory.append(cur)
        if prev - cur < cfg.tol_rel_loss * max(prev, 1e-30):
            converged = True
            break

    pred = state.pred
    model = _finalize_model(state.params, state.g, cfg.ranks, y - pred, flags)
    return FitReport(
        model=model,
        loss_trajectory=trajectory,
        converged=converged,
        n_iters=iters,
        hyperparameters={"method": "rank", "ranks": list(cfg.ranks),
                         "orders": list(cfg.orders)},
        wall_time=time.perf_counter() - start,
        flags=sorted(set(flags)),
    )


# ---------------------------------------------------------------------------
# Sparse low-Tucker-rank (SLTR) estimator
# ---------------------------------------------------------------------------

def _sparse_orthogonal_ls(gram, rhs, shape, b0, lam, kappa_factor, cfg: FitConfig):
    """ADMM for min ||y - X vec(B)||^2 + lam ||B||_1 subject to B'B = I.

    ``gram``/``rhs`` define the quadratic part (vec row-major).  The
    orthogonality-constrained B-step is handled by an inner splitting whose
    projection step is the polar factor; the W-step is elementwise
    soft-thresholding at lam/(2 kappa).  ``kappa_factor`` multiplies the mean
    squared magnitude of the design (the gram's mean diagonal), keeping the
    penalty on the data's scale.
    """
    n_rows, n_cols = shape
    size = n_rows * n_cols
    kappa = kappa_factor * max(float(np.trace(gram)) / size, 1e-12)
    soc_rho = kappa
    try:
        chol = np.linalg.cholesky(gram + (kappa + soc_rho) * np.eye(size))
    except np.linalg.LinAlgError:
        chol = np.linalg.cholesky(gram + (kappa + soc_rho + RIDGE) * np.eye(size))

    def quad_solve(v_kappa, v_soc):
        b = rhs + kappa * v_kappa.ravel() + soc_rho * v_soc.ravel()
        x = np.linalg.solve(chol.T, np.linalg.solve(chol, b))
        return x.reshape(shape)

    def b_step(v_kappa, q_init):
        q = q_init
        z = np.zeros(shape)
        b = q
        for _ in range(40):
            b = quad_solve(v_kappa, q - z)
            q_new = procrustes_orthonormal(b + z)
            z = z + b - q_new
            if np.linalg.norm(b - q_new) < 1e-10 * max(1.0, np.linalg.norm(q_new)):
                q = q_new
                break
            q = q_new
        return q

    b = procrustes_orthonormal(b0)
    w = b.copy()
    m = np.zeros(shape)
    scale = max(1.0, np.sqrt(n_cols))
    best_primal = np.inf
    since_progress = 0
    for _ in range(cfg.admm_max_iters):
        b = b_step(w - m, b)
        w_new = soft_threshold(b + m, lam / (2.0 * kappa))
        m = m + b - w_new
        primal = np.linalg.norm(b - w_new)
        dual = np.linalg.norm(w_new - w)
        w = w_new
        if primal <= cfg.admm_tol * scale and dual <= cfg.admm_tol * scale:
            break
        if primal < 0.99 * best_primal:
            best_primal = primal
            since_progress = 0
        else:
            # no primal progress: an extreme penalty can make B'B = I and the
            # sparsity prox irreconcilable, so do not grind out the budget
            since_progress += 1
            if since_progress >= 25:
                break
    return b


def _core_penalized_update(z, y, u1, u2, dims, targets, flags):
    """Ridge-augmented least squares for the core given the splitting targets."""
    r1, r2, d = dims
    s1_cols = r2 * d
    q = _stacked_features(z, u2)
    gram = np.kron(q.T @ q, u1.T @ u1)  # column-major vec(S_(1))
    rhs = (u1.T @ (y.T @ q)).ravel(order="F")
    total_rho = 0.0
    for rho_j, target_mat, mode in targets:
        tens = tensorize(target_mat, mode, dims)
        rhs = rhs + rho_j * matricize(tens, 1).ravel(order="F")
        total_rho += rho_j
    gram = gram + total_rho * np.eye(gram.shape[0])
    vec = _solve_psd(gram, rhs, flags, "core")
    return tensorize(vec.reshape((r1, s1_cols), order="F"), 1, dims)


def fit_sltr(data: np.ndarray, cfg: FitConfig, init: VarInfModel) -> FitReport:
    """ADMM for the l1-regularized sparse low-Tucker-rank estimator.

    Decay parameters update as in the rank-constrained route.  Each loading
    solves a sparse-and-orthogonal regression subproblem; the core is pulled
    toward diagonal-times-orthonormal matricizations (D_j V_j') via scaled
    dual tensors, which enforces row-orthogonality at convergence.  Final
    loadings are hard-thresholded at 1e-6 and the reported factors re-extracted
    so that orthonormality and row-orthogonality hold exactly.
    """
    start = time.perf_counter()
    y = np.asarray(data, dtype=float)
    _check_data(y, cfg.d)
    if cfg.lambda_l1 < 0:
        raise ValueError("lambda_l1 must be >= 0 for the SLTR estimator")
    r1, r2 = cfg.ranks
    params = init.params.replace(rho_bar=cfg.rho_bar)
    if init.factors is not None:
        fac = init.factors
    else:
        fac = hosvd(init.g, cfg.ranks)
    u1 = procrustes_orthonormal(fac.u1)
    u2 = procrustes_orthonormal(fac.u2)
    core = fac.core.copy()
    d = cfg.d
    dims = (r1, r2, d)

    # Splitting variables for the row-orthogonality of the core matricizations.
    dv: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    duals: dict[int, np.ndarray] = {}
    for mode in (1, 2):
        s_mat = matricize(core, mode)
        diag = np.linalg.norm(s_mat, axis=1)
        v = procrustes_orthonormal(s_mat.T @ np.diag(diag))
        dv[mode] = (diag, v)
        duals[mode] = np.zeros_like(s_mat)

    g = mode_product(mode_product(core, u1, 1), u2, 2)
    state = _OmegaState(y, params, g, cfg)
    flags = state.flags

    # Fix the core-splitting weights on the data's scale once, from the initial
    # design (the subproblem grams' mean diagonal).
    q0 = _stacked_features(state.z, u2)
    core_scale = max(np.trace(q0.T @ q0) * np.trace(u1.T @ u1)
                     / (q0.shape[1] * u1.shape[1]), 1e-12)
    rho1 = cfg.admm_rho1 * core_scale
    rho2 = cfg.admm_rho2 * core_scale

    def objective():
        return state.loss() + cfg.lambda_l1 * (np.abs(u1).sum() + np.abs(u2).sum())

    trajectory = [objective()]
    primal_history: list[float] = []
    converged = False
    iters = 0
    for iters in range(1, cfg.max_outer_iters + 1):
        state.update_lambdas()
        state.update_pairs()
        z = state.z

        s1 = _core_matrix(core)
        c = _stacked_features(z, u2) @ s1.T
        gram1 = np.kron(np.eye(y.shape[1]), c.T @ c)  # rows of U1 are independent
        rhs1 = (y.T @ c).ravel()
        u1 = _sparse_orthogonal_ls(gram1, rhs1, u1.shape, u1, cfg.lambda_l1,
                                   cfg.admm_kappa, cfg)

        gram2, rhs2 = _u2_normal_equations(z, y, u1, s1)
        u2 = _sparse_orthogonal_ls(gram2, rhs2, u2.shape, u2, cfg.lambda_l1,
                                   cfg.admm_kappa, cfg)

        targets = [
            (rho1, np.diag(dv[1][0]) @ dv[1][1].T - duals[1], 1),
            (rho2, np.diag(dv[2][0]) @ dv[2][1].T - duals[2], 2),
        ]
        core = _core_penalized_update(z, y, u1, u2, dims, targets, flags)

        primal = 0.0
        for mode, rho_j in ((1, rho1), (2, rho2)):
            s_mat = matricize(core, mode)
            diag_target = s_mat + duals[mode]
            v = dv[mode][1]
            diag = np.einsum("ij,ji->i", diag_target, v)  # row_i . v_i, V orthonormal
            v = procrustes_orthonormal(diag_target.T @ np.diag(diag))
            dv[mode] = (diag, v)
            resid = s_mat - np.diag(diag) @ v.T
            duals[mode] = duals[mode] + resid
            primal = max(primal, float(np.linalg.norm(resid)))
        primal_history.append(primal)
        if len(primal_history) > 50 and primal > 10 * primal_history[-51] and primal > 1e-6:
            raise ArithmeticError(
                "ADMM divergence: core primal residual grew from "
                f"{primal_history[-51]:.3e} to {primal:.3e} over 50 iterations"
            )

        state.set_g(mode_product(mode_product(core, u1, 1), u2, 2))
        cur = objective()
        prev = trajectory[-1]
        trajectory.append(cur)
        if abs(prev - cur) < cfg.tol_rel_loss * max(abs(prev), 1e-30) \
                and primal < 1e3 * cfg.admm_tol:
            converged = True
            break

    # Hard-threshold tiny loadings, then re-extract so U_i'U_i = I and the core
    # matricizations are exactly row-orthogonal (row supports are preserved).
    u1 = np.where(np.abs(u1) < 1e-6, 0.0, u1)
    u2 = np.where(np.abs(u2) < 1e-6, 0.0, u2)
    g_final = mode_product(mode_product(core, u1, 1), u2, 2)
    params_c, g_final = canonicalize(state.params, g_final)
    fac = hosvd(g_final, cfg.ranks)
    fac = TuckerFactors(core=fac.core,
                        u1=np.where(np.abs(fac.u1) < 1e-12, 0.0, fac.u1),
                        u2=np.where(np.abs(fac.u2) < 1e-12, 0.0, fac.u2))
    resid = y - _z_to_design(_z_all(y, params_c)) @ matricize(g_final, 1).T
    model = VarInfModel(params=params_c, g=g_final, factors=fac,
                        noise_cov=np.cov(resid.T))
    return FitReport(
        model=model,
        loss_trajectory=trajectory,
        converged=converged,
        n_iters=iters,
        hyperparameters={"method": "sltr", "ranks": list(cfg.ranks),
                         "orders": list(cfg.orders), "lambda_l1": cfg.lambda_l1,
                         "admm_rhos": [cfg.admm_rho1, cfg.admm_rho2],
                         "admm_kappa": cfg.admm_kappa},
        wall_time=time.perf_counter() - start,
        flags=sorted(set(flags)),
    )


# ---------------------------------------------------------------------------
# Initial VAR(P) estimators and the grid initializer
# ---------------------------------------------------------------------------

def _var_design(y: np.ndarray, trunc_lag: int):
    t_len = y.shape[0]
    x = np.column_stack([y[trunc_lag - j: t_len - j] for j in range(1, trunc_lag + 1)])
    return x, y[trunc_lag:]


def _svt(mat: np.ndarray, level: float) -> np.ndarray:
    u, s, vt = np.linalg.svd(mat, full_matrices=False)
    s = np.maximum(s - level, 0.0)
    return (u * s) @ vt


def default_var_reg(t_len: int, n_series: int, trunc_lag: int, kind: str,
                    scale: float = 1.0) -> float:
    """Rate-matched default regularization weights for the initial VAR(P)."""
    denom = max(t_len - trunc_lag, 1)
    if kind == "nuclear":
        return 1.0 * scale * np.sqrt(n_series * (trunc_lag + 1) / denom)
    if kind == "group_lasso":
        return 1.0 * scale * n_series / np.sqrt(denom)
    raise ValueError(f"unknown initial estimator kind {kind!r}")


def initial_var_estimator(data: np.ndarray, kind: str = "nuclear",
                          trunc_lag: int | None = None, reg: float | None = None,
                          max_iters: int = 300, tol: float = 1e-7) -> np.ndarray:
    """Truncated VAR(P) estimate of the coefficient tensor (N x N x P).

    ``nuclear`` penalizes the nuclear norms of both mode-1/2 unfoldings via a
    consensus splitting with singular-value soft-thresholding on each copy;
    ``group_lasso`` penalizes per-lag Frobenius norms by accelerated proximal
    gradient.  ``reg = 0`` returns the ordinary least squares solution.
    """
    y = np.asarray(data, dtype=float)
    t_len, n = y.shape
    if trunc_lag is None:
        trunc_lag = int(np.ceil(t_len ** (1.0 / 3.0)))
    if not 1 <= trunc_lag < t_len:
        raise ValueError(f"need 1 <= P < T, got P={trunc_lag}, T={t_len}")
    if reg is None:
        reg = default_var_reg(t_len, n, trunc_lag, kind, scale=float(np.mean(y**2)))
    x, yt = _var_design(y, trunc_lag)
    denom = x.shape[0]
    gram = x.T @ x / denom
    xty = x.T @ yt / denom
    ols = np.linalg.solve(gram + RIDGE * np.eye(gram.shape[0]), xty).T
    dims = (n, n, trunc_lag)
    if reg == 0:
        return tensorize(ols, 1, dims)
    if kind == "nuclear":
        rho = max(float(np.trace(gram)) / gram.shape[0], 1e-8)
        a = tensorize(ols, 1, dims)
        z1, z2 = a.copy(), a.copy()
        w1, w2 = np.zeros_like(a), np.zeros_like(a)
        chol = np.linalg.cholesky(gram + 2 * rho * np.eye(gram.shape[0]))
        for _ in range(max_iters):
            rhs = xty + rho * matricize(z1 - w1, 1).T + rho * matricize(z2 - w2, 1).T
            a1 = np.linalg.solve(chol.T, np.linalg.solve(chol, rhs)).T
            a = tensorize(a1, 1, dims)
            z1 = tensorize(_svt(matricize(a + w1, 1), reg / (2 * rho)), 1, dims)
            z2 = tensorize(_svt(matricize(a + w2, 2), reg / (2 * rho)), 2, dims)
            w1 = w1 + a - z1
            w2 = w2 + a - z2
            res = max(np.linalg.norm(a - z1), np.linalg.norm(a - z2))
            if res < tol * max(1.0, np.linalg.norm(a)):
                break
        return a
    if kind == "group_lasso":
        lip = 2 * float(np.linalg.eigvalsh(gram)[-1])
        step = 1.0 / lip
        a1 = ols.copy()
        momentum = a1.copy()
        t_acc = 1.0
        prev = a1
        for _ in range(max_iters + 200):
            grad = 2 * (momentum @ gram - xty.T)
            b = momentum - step * grad
            a_new = np.empty_like(b)
            for j in range(trunc_lag):
                blk = b[:, j * n:(j + 1) * n]
                nrm = np.linalg.norm(blk)
                shrink = max(0.0, 1.0 - step * reg / nrm) if nrm > 0 else 0.0
                a_new[:, j * n:(j + 1) * n] = shrink * blk
            t_next = 0.5 * (1 + np.sqrt(1 + 4 * t_acc**2))
            momentum = a_new + ((t_acc - 1) / t_next) * (a_new - prev)
            t_acc = t_next
            if np.linalg.norm(a_new - prev) < 1e-9 * max(1.0, np.linalg.norm(a_new)):
                prev = a_new
                break
            prev = a_new
        return tensorize(prev, 1, dims)
    raise ValueError(f"unknown initial estimator kind {kind!r}")


LAMBDA_INIT_GRID = (-0.75, -0.5, -0.25, 0.25, 0.5, 0.75)
PAIR_INIT_GRID = tuple(
    (g, t) for g in (0.25, 0.5, 0.75) for t in (np.pi / 4, 3 * np.pi / 4)
)


def initial_grid(orders: tuple[int, int, int],
                 rho_bar: float = DEFAULT_RHO_BAR) -> list[DecayParams]:
    """Distinct, canonically ordered decay-parameter candidates for the grid search."""
    p, r, s = orders
    out = []
    for lams in itertools.combinations(LAMBDA_INIT_GRID, r):
        for prs in itertools.combinations(PAIR_INIT_GRID, s):
            out.append(DecayParams(
                p=p,
                lambdas=np.array(sorted(lams)),
                gammas=np.array([g for g, _ in sorted(prs)]),
                thetas=np.array([t for _, t in sorted(prs)]),
                rho_bar=rho_bar,
            ))
    return out


def initialize(data: np.ndarray, ranks: tuple[int, int], orders: tuple[int, int, int],
               kind: str = "nuclear", reg: float | None = None,
               rho_bar: float = DEFAULT_RHO_BAR,
               init_estimate: np.ndarray | None = None) -> VarInfModel:
    """Grid initializer: truncated-VAR estimate, mode-1/2 factorization, then a
    decay-parameter grid resolved through the basis pseudo-inverse; the
    candidate with the smallest loss wins.

    ``init_estimate`` lets callers reuse one truncated-VAR estimate across
    several order choices; it must have at least d+1 lags.
    """
    y = np.asarray(data, dtype=float)
    p, r, s = orders
    d = p + r + 2 * s
    if d == 0:
        raise ValueError("orders (0, 0, 0) do not define a model")
    _check_data(y, d)
    t_len = y.shape[0]
    if init_estimate is not None and init_estimate.shape[2] <= d:
        init_estimate = None
    if init_estimate is not None:
        a_init = init_estimate
        trunc_lag = a_init.shape[2]
    else:
        trunc_lag = min(max(int(np.ceil(t_len ** (1.0 / 3.0))), d + 1), t_len - 1)
        a_init = initial_var_estimator(y, kind=kind, trunc_lag=trunc_lag, reg=reg)
    fac = hosvd(a_init, ranks)
    best = None
    for cand in initial_grid(orders, rho_bar):
        basis_rows = loading_matrix(cand, trunc_lag)
        core = mode_product(fac.core, np.linalg.pinv(basis_rows), 3)
        g = mode_product(mode_product(core, fac.u1, 1), fac.u2, 2)
        val = squared_loss(y, cand, g)
        if best is None or val < best[0]:
            best = (val, cand, g, core)
    _, cand, g, core = best
    cand, g = canonicalize(cand, g)
    return VarInfModel(params=cand, g=g,
                       factors=TuckerFactors(core=core, u1=fac.u1, u2=fac.u2))


def cross_validate_lambda(data: np.ndarray, cfg: FitConfig, grid,
                          n_folds: int = 3, train_frac: float = 0.6,
                          init_kind: str = "group_lasso") -> float:
    """Rolling-origin cross-validation for the l1 penalty.

    Ordered splits: each fold fits on an initial segment and scores one-step
    forecasts on the following block; the penalty minimizing mean validation
    MSFE wins, with ties broken toward the larger value.
    """
    from .forecast import one_step_forecast

    grid = sorted(set(float(v) for v in grid))
    if not grid:
        raise ValueError("the penalty grid is empty")
    y = np.asarray(data, dtype=float)
    t_len = y.shape[0]
    t0 = int(train_frac * t_len)
    block = (t_len - t0) // n_folds
    if block < 1:
        raise ValueError("not enough observations for the requested folds")
    inits = {}
    scores = {lam: [] for lam in grid}
    for fold in range(n_folds):
        t_train = t0 + fold * block
        train = y[:t_train]
        if fold not in inits:
            inits[fold] = initialize(train, cfg.ranks, cfg.orders, kind=init_kind)
        for lam in grid:
            report = fit_sltr(train, cfg.replace(lambda_l1=lam), inits[fold])
            errs = []
            for origin in range(t_train, min(t_train + block, t_len - 1) + 1):
                if origin >= t_len:
                    break
                pred = one_step_forecast(report.model, y[:origin])
                errs.append(np.mean((y[origin] - pred) ** 2))
            scores[lam].append(float(np.mean(errs)))
    best_lam, best_score = None, np.inf
    for lam in grid:  # ascending; ties go to the larger penalty via <=
        mean_score = float(np.mean(scores[lam]))
        if mean_score <= best_score:
            best_lam, best_score = lam, mean_score
    return best_lam
