"""Parametric temporal loading matrix: indicator, geometric and damped-sinusoid lags.

Column layout for order constants (p, r, s), d = p + r + 2s:
  columns 1..p          indicator lags (entry 1 at lag j = k),
  columns p+1..p+r      geometric decay lambda^(j-p) for lags j > p,
  columns p+r+1..d      damped sinusoids in consecutive (cos, sin) pairs:
                        gamma^(j-p) cos((j-p) theta) and gamma^(j-p) sin((j-p) theta).

The decay parameters live in the open box |lambda| in (0, rho_bar),
gamma in (0, rho_bar), theta in (0, pi).  The theta box used here is the
estimation convention; conversion from moving-average companion eigenvalues
maps each conjugate pair to the member with positive imaginary part, whose
argument always lies in (0, pi), so both sides agree.
"""
from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

DEFAULT_RHO_BAR = 0.98

# Absolute tolerance below which two decay parameters are considered
# duplicates, violating identifiability.
IDENTIFIABILITY_TOL = 1e-8


class LagBasis(ABC):
    """Extension point for alternative lag families (Pascal, Gamma, ...)."""

    @property
    @abstractmethod
    def n_columns(self) -> int:
        """Number of basis columns d."""

    @abstractmethod
    def rows(self, n_lags: int) -> np.ndarray:
        """The first ``n_lags`` rows of the (conceptually infinite) loading matrix."""


@dataclass
class DecayParams(LagBasis):
    """Temporal decay parameters (p indicator lags, r geometric, s sinusoid pairs)."""

    p: int = 0
    lambdas: np.ndarray = field(default_factory=lambda: np.empty(0))
    gammas: np.ndarray = field(default_factory=lambda: np.empty(0))
    thetas: np.ndarray = field(default_factory=lambda: np.empty(0))
    rho_bar: float = DEFAULT_RHO_BAR

    def __post_init__(self):
        self.lambdas = np.atleast_1d(np.asarray(self.lambdas, dtype=float))
        self.gammas = np.atleast_1d(np.asarray(self.gammas, dtype=float))
        self.thetas = np.atleast_1d(np.asarray(self.thetas, dtype=float))
        if self.p < 0:
            raise ValueError("p must be >= 0")
        if self.gammas.shape != self.thetas.shape:
            raise ValueError("gammas and thetas must have equal length")
        abs_lam = np.abs(self.lambdas)
        if np.any((abs_lam <= 0) | (abs_lam >= self.rho_bar)):
            raise ValueError(f"|lambda| must lie in (0, {self.rho_bar})")
        if np.any((self.gammas <= 0) | (self.gammas >= self.rho_bar)):
            raise ValueError(f"gamma must lie in (0, {self.rho_bar})")
        if np.any((self.thetas <= 0) | (self.thetas >= np.pi)):
            raise ValueError("theta must lie in (0, pi)")

    @property
    def r(self) -> int:
        return len(self.lambdas)

    @property
    def s(self) -> int:
        return len(self.gammas)

    @property
    def d(self) -> int:
        return self.p + self.r + 2 * self.s

    @property
    def orders(self) -> tuple[int, int, int]:
        return (self.p, self.r, self.s)

    @property
    def n_columns(self) -> int:
        return self.d

    def rows(self, n_lags: int) -> np.ndarray:
        return loading_matrix(self, n_lags)

    def vector(self) -> np.ndarray:
        """Free parameters as (lambda_1..lambda_r, gamma_1, theta_1, ..)."""
        pairs = np.empty(2 * self.s)
        pairs[0::2] = self.gammas
        pairs[1::2] = self.thetas
        return np.concatenate([self.lambdas, pairs])

    def max_modulus(self) -> float:
        """Largest decay modulus of the non-indicator columns (0 if none)."""
        mods = np.concatenate([np.abs(self.lambdas), self.gammas])
        return float(mods.max()) if mods.size else 0.0

    def is_canonical(self, tol: float = IDENTIFIABILITY_TOL) -> bool:
        if np.any(np.diff(self.lambdas) <= tol):
            return False
        pairs = list(zip(self.gammas, self.thetas))
        for a, b in zip(pairs, pairs[1:]):
            if not (a[0] < b[0] - tol or (abs(a[0] - b[0]) <= tol and a[1] < b[1] - tol)):
                return False
        return True

    def replace(self, **kwargs) -> "DecayParams":
        fields = dict(p=self.p, lambdas=self.lambdas.copy(), gammas=self.gammas.copy(),
                      thetas=self.thetas.copy(), rho_bar=self.rho_bar)
        fields.update(kwargs)
        return DecayParams(**fields)


def lag_weight(params: DecayParams, j: int, k: int) -> float:
    """Entry (j, k) of the loading matrix, 1-based lag j >= 1 and column k."""
    if j < 1:
        raise IndexError(f"lag index must be >= 1, got {j}")
    if not 1 <= k <= params.d:
        raise IndexError(f"column {k} out of range 1..{params.d}")
    p = params.p
    if k <= p:
        return 1.0 if j == k else 0.0
    if j <= p:
        return 0.0
    m = j - p
    if k <= p + params.r:
        return float(params.lambdas[k - p - 1] ** m)
    idx = k - p - params.r - 1  # 0-based within the sinusoid block
    pair, phase = divmod(idx, 2)
    gamma, theta = params.gammas[pair], params.thetas[pair]
    trig = np.cos if phase == 0 else np.sin
    return float(gamma**m * trig(m * theta))


def _ma_block(params: DecayParams, n_lags: int) -> tuple[np.ndarray, np.ndarray]:
    """Geometric and sinusoid columns evaluated at lags p+1..n_lags.

    Returns (values J'x(r+2s), lag offsets m = 1..J') with J' = n_lags - p.
    """
    m = np.arange(1, max(n_lags - params.p, 0) + 1)
    cols = []
    for lam in params.lambdas:
        cols.append(lam**m)
    for gamma, theta in zip(params.gammas, params.thetas):
        damp = gamma**m
        cols.append(damp * np.cos(m * theta))
        cols.append(damp * np.sin(m * theta))
    if not cols:
        return np.zeros((len(m), 0)), m
    return np.column_stack(cols), m


def loading_matrix(params: DecayParams, n_lags: int) -> np.ndarray:
    """The first ``n_lags`` rows of the loading matrix (n_lags x d)."""
    if n_lags < 1:
        raise ValueError("n_lags must be >= 1")
    p, d = params.p, params.d
    out = np.zeros((n_lags, d))
    for k in range(min(p, n_lags)):
        out[k, k] = 1.0
    if n_lags > p:
        block, _ = _ma_block(params, n_lags)
        out[p:, p:] = block
    return out


def stacked_loading_matrix(params: DecayParams, n_lags: int) -> np.ndarray:
    """Loading matrix augmented with its first-derivative columns (n_lags x (d+r+2s)).

    Appended columns: d/d(lambda) of each geometric column (j lambda^(j-1))
    and d/d(theta) of each sinusoid pair (-j gamma^j sin(j theta),
    j gamma^j cos(j theta)).  The gamma-derivative columns span the same
    space as the theta ones and are deliberately not stacked; see
    :func:`gamma_derivative_columns`.
    """
    base = loading_matrix(params, n_lags)
    p = params.p
    m = np.arange(1, max(n_lags - p, 0) + 1)
    cols = []
    for lam in params.lambdas:
        cols.append(m * lam ** (m - 1))
    for gamma, theta in zip(params.gammas, params.thetas):
        damp = m * gamma**m
        cols.append(-damp * np.sin(m * theta))
        cols.append(damp * np.cos(m * theta))
    grad = np.zeros((n_lags, params.r + 2 * params.s))
    if cols and n_lags > p:
        grad[p:, :] = np.column_stack(cols)
    return np.hstack([base, grad])


def gamma_derivative_columns(params: DecayParams, n_lags: int) -> np.ndarray:
    """d/d(gamma) of the sinusoid columns (n_lags x 2s), for Newton steps."""
    p = params.p
    m = np.arange(1, max(n_lags - p, 0) + 1)
    out = np.zeros((n_lags, 2 * params.s))
    for h, (gamma, theta) in enumerate(zip(params.gammas, params.thetas)):
        damp = m * gamma ** (m - 1)
        out[p:, 2 * h] = damp * np.cos(m * theta)
        out[p:, 2 * h + 1] = damp * np.sin(m * theta)
    return out


def canonicalize(params: DecayParams, g: np.ndarray) -> tuple[DecayParams, np.ndarray]:
    """Sort decay parameters ascending and permute the frontal slices of ``g`` to match.

    Lambdas sort ascending; (gamma, theta) pairs sort ascending
    lexicographically, each pair keeping its (cos, sin) slice order.
    Raises on duplicate parameters within the identifiability tolerance.
    """
    g = np.asarray(g)
    if g.ndim != 3 or g.shape[2] != params.d:
        raise ValueError(f"expected g with {params.d} frontal slices, got shape {g.shape}")
    lam_order = np.argsort(params.lambdas, kind="stable")
    lambdas = params.lambdas[lam_order]
    if np.any(np.diff(lambdas) <= IDENTIFIABILITY_TOL):
        raise ValueError("duplicate lambda values violate identifiability")
    pair_keys = list(zip(params.gammas, params.thetas))
    pair_order = sorted(range(params.s), key=lambda i: pair_keys[i])
    for a, b in zip(pair_order, pair_order[1:]):
        ga, ta = pair_keys[a]
        gb, tb = pair_keys[b]
        if abs(ga - gb) <= IDENTIFIABILITY_TOL and abs(ta - tb) <= IDENTIFIABILITY_TOL:
            raise ValueError("duplicate (gamma, theta) pairs violate identifiability")
    perm = list(range(params.p))
    perm += [params.p + i for i in lam_order]
    for i in pair_order:
        base = params.p + params.r + 2 * i
        perm += [base, base + 1]
    out = params.replace(
        lambdas=lambdas,
        gammas=params.gammas[pair_order],
        thetas=params.thetas[pair_order],
    )
    return out, g[:, :, perm]
