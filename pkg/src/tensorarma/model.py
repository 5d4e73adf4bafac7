"""Model objects, VARMA -> VAR(infinity) conversion, and data simulation."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .basis import DEFAULT_RHO_BAR, DecayParams, canonicalize, loading_matrix
from .tensor_ops import TuckerFactors, matricize, mode_product

# Eigenvalues closer than this are treated as repeated (no structured output).
_EIG_SEP_TOL = 1e-7
# Moduli below this are treated as zero eigenvalues of the companion matrix.
_EIG_ZERO_TOL = 1e-8


@dataclass
class VarInfModel:
    """Parametric VAR(infinity) model: decay parameters plus slice tensor g (N x N x d)."""

    params: DecayParams
    g: np.ndarray
    factors: TuckerFactors | None = None
    noise_cov: np.ndarray | None = None
    standardization: tuple[np.ndarray, np.ndarray] | None = None

    def __post_init__(self):
        self.g = np.asarray(self.g, dtype=float)
        if self.g.ndim != 3 or self.g.shape[0] != self.g.shape[1]:
            raise ValueError(f"g must be N x N x d, got shape {self.g.shape}")
        if self.g.shape[2] != self.params.d:
            raise ValueError(
                f"g has {self.g.shape[2]} slices but the parameters imply d={self.params.d}"
            )
        if self.noise_cov is None:
            self.noise_cov = np.eye(self.n_series)
        self.noise_cov = np.asarray(self.noise_cov, dtype=float)

    @property
    def n_series(self) -> int:
        return self.g.shape[0]

    def validate(self) -> None:
        np.linalg.cholesky(self.noise_cov)  # SPD check
        if self.factors is not None:
            err = np.linalg.norm(self.g - self.factors.compose())
            if err > 1e-8 * max(np.linalg.norm(self.g), 1e-300):
                raise ValueError("stored factors do not reconstruct g to 1e-8 relative")


@dataclass
class VarmaSpec:
    """Finite VARMA(p, q): y_t = sum phi_i y_{t-i} + e_t - sum theta_j e_{t-j}."""

    phi: list = field(default_factory=list)
    theta: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.phi = [np.asarray(m, dtype=float) for m in self.phi]
        self.theta = [np.asarray(m, dtype=float) for m in self.theta]
        if not self.phi and not self.theta:
            raise ValueError("spec needs at least one AR or MA matrix")

    @property
    def n_series(self) -> int:
        return (self.phi or self.theta)[0].shape[0]

    @property
    def p(self) -> int:
        return len(self.phi)

    @property
    def q(self) -> int:
        return len(self.theta)

    def companion(self) -> np.ndarray:
        """MA companion matrix (Nq x Nq); empty for a pure VAR."""
        n, q = self.n_series, self.q
        comp = np.zeros((n * q, n * q))
        for j, th in enumerate(self.theta):
            comp[:n, j * n:(j + 1) * n] = th
        if q > 1:
            comp[n:, :-n] += np.eye(n * (q - 1))
        return comp

    def is_invertible(self, margin: float = 1e-10) -> bool:
        if self.q == 0:
            return True
        return np.max(np.abs(np.linalg.eigvals(self.companion()))) < 1.0 - margin


def ar_stack(model: VarInfModel, n_lags: int) -> np.ndarray:
    """AR coefficient matrices A_1..A_n stacked as an N x N x n_lags tensor."""
    return mode_product(model.g, loading_matrix(model.params, n_lags), 3)


def ar_coefficient(model: VarInfModel, j: int) -> np.ndarray:
    """A_j = sum_k l_{j,k} G_k; equals G_j exactly for j <= p."""
    if j < 1:
        raise ValueError("lag index must be >= 1")
    return ar_stack(model, j)[:, :, j - 1]


def stationarity_margin(model: VarInfModel) -> float:
    """(1/rho - 1) - sum_k ||G_k||_op, a sufficient stationarity check when positive.

    rho is the largest decay modulus when p = 0; with indicator lags present
    the entries only decay after lag p, so the conservative library bound
    rho_bar is used instead.
    """
    rho = model.params.max_modulus() if model.params.p == 0 else model.params.rho_bar
    norm_sum = sum(
        np.linalg.norm(model.g[:, :, k], 2) for k in range(model.params.d)
    )
    if rho == 0.0:
        return np.inf if norm_sum == 0 else -norm_sum
    return (1.0 / rho - 1.0) - norm_sum


def ma_weights(model: VarInfModel, n_lags: int) -> list[np.ndarray]:
    """Moving-average weights of the stationary solution via the standard recursion
    Psi_j = sum_{i<=j} A_i Psi_{j-i}, Psi_0 = I (Psi_0 not included in the output)."""
    import warnings

    if stationarity_margin(model) <= 0:
        warnings.warn("sufficient stationarity condition does not hold; "
                      "the MA expansion may diverge", stacklevel=2)
    n = model.n_series
    a = ar_stack(model, n_lags)
    psi = [np.eye(n)]
    for j in range(1, n_lags + 1):
        acc = np.zeros((n, n))
        for i in range(1, j + 1):
            acc += a[:, :, i - 1] @ psi[j - i]
        psi.append(acc)
    return psi[1:]


def companion_ar_coefficients(spec: VarmaSpec, n_lags: int) -> list[np.ndarray]:
    """A_1..A_n of the VAR(infinity) form via the companion-matrix recursion.

    A_k = sum_{i=0}^{min(p,k)} P Cmp^{k-i} P' Phi_i with Phi_0 = -I, where Cmp
    is the MA companion matrix and P picks its first block row.
    """
    n, p, q = spec.n_series, spec.p, spec.q
    if q == 0:
        return [spec.phi[k] if k < p else np.zeros((n, n)) for k in range(n_lags)]
    if not spec.is_invertible():
        raise ValueError("MA polynomial is not invertible (companion spectral radius >= 1)")
    comp = spec.companion()
    phi_aug = [-np.eye(n)] + list(spec.phi)
    # w[k] = P Cmp^k restricted to the first block column stack; track full rows.
    rows = [np.hstack([np.eye(n), np.zeros((n, n * (q - 1)))])]  # P Cmp^0
    for _ in range(n_lags):
        rows.append(rows[-1] @ comp)
    pt_phi = [np.vstack([ph, np.zeros((n * (q - 1), n))]) for ph in phi_aug]  # P' Phi_i
    out = []
    for k in range(1, n_lags + 1):
        acc = np.zeros((n, n))
        for i in range(0, min(p, k) + 1):
            acc += rows[k - i] @ pt_phi[i]
        out.append(acc)
    return out


def _classify_eigenvalues(comp: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split companion eigenvalues into sorted real values and conjugate-pair reps.

    Returns (lambdas, pair values with positive imaginary part).  Raises if any
    nonzero eigenvalue is repeated within tolerance.
    """
    eig = np.linalg.eigvals(comp)
    eig = eig[np.abs(eig) > _EIG_ZERO_TOL * max(1.0, np.max(np.abs(eig)))]
    nonreal_tol = _EIG_SEP_TOL
    real_mask = np.abs(eig.imag) <= nonreal_tol
    lambdas = np.sort(eig[real_mask].real)
    pairs = eig[~real_mask]
    pos = np.sort_complex(pairs[pairs.imag > 0])
    neg = np.sort_complex(pairs[pairs.imag < 0].conj())
    if len(pos) != len(neg) or (len(pos) and np.max(np.abs(pos - neg)) > 1e-6):
        raise ValueError("complex eigenvalues do not form conjugate pairs")
    values = np.concatenate([lambdas.astype(complex), pos, pos.conj()])
    for i in range(len(values)):
        for j in range(i + 1, len(values)):
            if abs(values[i] - values[j]) < _EIG_SEP_TOL:
                raise ValueError(
                    "repeated companion eigenvalues: structured output requires "
                    "simple nonzero eigenvalues"
                )
    return lambdas, pos


def varma_to_var_inf(
    spec: VarmaSpec,
    n_lags: int,
    structured: bool = True,
    noise_cov: np.ndarray | None = None,
) -> tuple[list[np.ndarray], VarInfModel | None]:
    """VAR(infinity) coefficients of an invertible VARMA, with structured form.

    Always returns the raw A_1..A_n from the companion recursion.  When
    ``structured`` and all nonzero companion eigenvalues are simple, also
    returns the equivalent parametric model: decay parameters are read off the
    eigenvalues (conjugate pairs give (gamma, theta) with theta = argument of
    the positive-imaginary member), and the slice matrices are recovered by
    least squares of the stacked A_j on the basis rows (4d rows).
    """
    a_list = companion_ar_coefficients(spec, n_lags)
    if not structured:
        return a_list, None
    n, p = spec.n_series, spec.p
    if spec.q == 0:
        params = DecayParams(p=p)
        g = np.stack(spec.phi, axis=2) if p else np.zeros((n, n, 0))
        return a_list, VarInfModel(params=params, g=g, noise_cov=noise_cov)
    lambdas, pair_values = _classify_eigenvalues(spec.companion())
    gammas = np.abs(pair_values)
    thetas = np.angle(pair_values)
    max_mod = max(np.max(np.abs(lambdas), initial=0.0), np.max(gammas, initial=0.0))
    rho_bar = DEFAULT_RHO_BAR if max_mod < DEFAULT_RHO_BAR else min(
        1.0 - 1e-12, max_mod * (1 + 1e-9) + 1e-12
    )
    order = np.lexsort((thetas, gammas))
    params = DecayParams(p=p, lambdas=lambdas, gammas=gammas[order], thetas=thetas[order],
                         rho_bar=rho_bar)
    d = params.d
    fit_rows = 4 * d
    need = p + fit_rows
    a_fit = a_list if len(a_list) >= need else companion_ar_coefficients(spec, need)
    g = np.zeros((n, n, d))
    for j in range(p):
        g[:, :, j] = a_fit[j]
    design = loading_matrix(params, need)[p:, p:]  # fit_rows x (r+2s)
    targets = np.stack([a_fit[p + m].ravel() for m in range(fit_rows)])
    coefs, *_ = np.linalg.lstsq(design, targets, rcond=None)
    for k in range(d - p):
        g[:, :, p + k] = coefs[k].reshape(n, n)
    params, g = canonicalize(params, g)
    return a_list, VarInfModel(params=params, g=g, noise_cov=noise_cov)


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def truncation_lag(model: VarInfModel, tol: float = 1e-10) -> int:
    """Lag J such that rho_bar^J/(1-rho_bar) * sum ||G_k||_op < tol."""
    rho = model.params.rho_bar
    norm_sum = sum(np.linalg.norm(model.g[:, :, k], 2) for k in range(model.params.d))
    if norm_sum == 0:
        return model.params.p + 1
    j = int(np.ceil(np.log(tol * (1 - rho) / norm_sum) / np.log(rho)))
    return max(j, model.params.p + 1)


def simulate(model, t_len: int, burn_in: int = 500, seed=None,
             noise_cov: np.ndarray | None = None) -> np.ndarray:
    """Simulate a T x N sample path from a VarInfModel or VarmaSpec.

    Innovations are iid Gaussian with the given covariance (the model's own
    covariance for VarInfModel inputs, identity by default for specs).  The
    first ``burn_in`` samples are discarded; output is deterministic for a
    fixed seed.
    """
    if t_len < 1:
        raise ValueError("t_len must be >= 1")
    rng = _as_rng(seed)
    if isinstance(model, VarmaSpec):
        return _simulate_varma(model, t_len, burn_in, rng, noise_cov)
    if isinstance(model, VarInfModel):
        if stationarity_margin(model) <= 0:
            raise ValueError("model fails the sufficient stationarity condition; "
                             "simulate from an equivalent VARMA spec instead")
        cov = model.noise_cov if noise_cov is None else np.asarray(noise_cov)
        return _simulate_var_trunc(model, t_len, burn_in, rng, cov)
    raise TypeError(f"cannot simulate from {type(model).__name__}")


def _draw_noise(rng, cov, total, n):
    chol = np.linalg.cholesky(cov)
    return rng.standard_normal((total, n)) @ chol.T


def _simulate_varma(spec, t_len, burn_in, rng, noise_cov):
    n, p, q = spec.n_series, spec.p, spec.q
    cov = np.eye(n) if noise_cov is None else np.asarray(noise_cov)
    total = t_len + burn_in
    eps = _draw_noise(rng, cov, total, n)
    y = np.zeros((total, n))
    for t in range(total):
        acc = eps[t].copy()
        for i, ph in enumerate(spec.phi, start=1):
            if t - i >= 0:
                acc += ph @ y[t - i]
        for j, th in enumerate(spec.theta, start=1):
            if t - j >= 0:
                acc -= th @ eps[t - j]
        y[t] = acc
    return y[burn_in:]


def _simulate_var_trunc(model, t_len, burn_in, rng, cov):
    n = model.n_series
    j_max = truncation_lag(model)
    a1 = matricize(ar_stack(model, j_max), 1)  # N x (N * j_max)
    total = t_len + burn_in
    eps = _draw_noise(rng, cov, total, n)
    y = np.zeros((total, n))
    hist = np.zeros(n * j_max)  # (y_{t-1}, y_{t-2}, ...)
    for t in range(total):
        y[t] = a1 @ hist + eps[t]
        hist[n:] = hist[:-n]
        hist[:n] = y[t]
    return y[burn_in:]


def random_orthogonal(n: int, rng) -> np.ndarray:
    """Haar-ish orthogonal matrix via QR with sign-fixed R diagonal."""
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def build_dgp(kind: int, n_series: int, lambdas=(), pairs=(), delta: float = 0.5,
              sparsity: int | None = None, seed=None) -> VarmaSpec:
    """Benchmark data-generating processes.

    kind 1 is the VMA(1) y_t = e_t - Theta e_{t-1}; kind 2 the VARMA(1,1)
    with AR matrix Phi = B K B' where K = diag(delta, 0, ..).  Theta = B J B'
    with J the real Jordan form holding the requested real eigenvalues and
    (gamma, theta) conjugate pairs.  In the sparse case B embeds an S x S
    orthogonal block on a random subset of S rows (zero elsewhere), so every
    slice of the converted model has exactly S nonzero rows and columns.
    """
    rng = _as_rng(seed)
    lambdas = np.atleast_1d(np.asarray(lambdas, dtype=float))
    pairs = [(float(g), float(t)) for g, t in pairs]
    k_eig = len(lambdas) + 2 * len(pairs)
    block = n_series if sparsity is None else int(sparsity)
    if not 1 <= block <= n_series:
        raise ValueError(f"sparsity must lie in 1..{n_series}")
    if k_eig > block:
        raise ValueError("more eigenvalues than the (sparse) block can hold")
    jordan = np.zeros((block, block))
    pos = 0
    for lam in lambdas:
        jordan[pos, pos] = lam
        pos += 1
    for gamma, theta in pairs:
        c, s_ = gamma * np.cos(theta), gamma * np.sin(theta)
        jordan[pos:pos + 2, pos:pos + 2] = [[c, s_], [-s_, c]]
        pos += 2
    basis = random_orthogonal(block, rng)
    if sparsity is None:
        b_mat = basis
    else:
        rows = np.sort(rng.choice(n_series, size=block, replace=False))
        b_mat = np.zeros((n_series, block))
        b_mat[rows] = basis
    theta_mat = b_mat @ jordan @ b_mat.T
    meta = {"kind": kind, "lambdas": lambdas.tolist(), "pairs": pairs,
            "sparsity": sparsity}
    if kind == 1:
        return VarmaSpec(phi=[], theta=[theta_mat], meta=meta)
    if kind == 2:
        k_mat = np.zeros((block, block))
        k_mat[0, 0] = delta
        phi_mat = b_mat @ k_mat @ b_mat.T
        meta["delta"] = delta
        return VarmaSpec(phi=[phi_mat], theta=[theta_mat], meta=meta)
    raise ValueError(f"unknown DGP kind {kind}")


def coefficient_distance(model_a: VarInfModel, model_b: VarInfModel,
                         n_lags: int = 200) -> float:
    """Frobenius distance between the stacked AR coefficients of two models."""
    return float(np.linalg.norm(ar_stack(model_a, n_lags) - ar_stack(model_b, n_lags)))


# ---------------------------------------------------------------------------
# Serialization: structured text (JSON) documents that round-trip losslessly.
# ---------------------------------------------------------------------------

def model_to_dict(model: VarInfModel) -> dict:
    doc = {
        "type": "var_inf_model",
        "n_series": model.n_series,
        "orders": {"p": model.params.p, "r": model.params.r, "s": model.params.s},
        "rho_bar": model.params.rho_bar,
        "lambdas": model.params.lambdas.tolist(),
        "gammas": model.params.gammas.tolist(),
        "thetas": model.params.thetas.tolist(),
        "g_slices": [model.g[:, :, k].tolist() for k in range(model.params.d)],
        "noise_cov": model.noise_cov.tolist(),
    }
    if model.factors is not None:
        doc["factors"] = {
            "ranks": [model.factors.u1.shape[1], model.factors.u2.shape[1]],
            "core_slices": [model.factors.core[:, :, k].tolist()
                            for k in range(model.factors.core.shape[2])],
            "u1": model.factors.u1.tolist(),
            "u2": model.factors.u2.tolist(),
        }
    if model.standardization is not None:
        means, scales = model.standardization
        doc["standardization"] = {"means": np.asarray(means).tolist(),
                                  "scales": np.asarray(scales).tolist()}
    return doc


def model_from_dict(doc: dict) -> VarInfModel:
    if doc.get("type") != "var_inf_model":
        raise ValueError(f"not a model document (type={doc.get('type')!r})")
    n = doc["n_series"]
    params = DecayParams(
        p=doc["orders"]["p"],
        lambdas=np.array(doc["lambdas"], dtype=float),
        gammas=np.array(doc["gammas"], dtype=float),
        thetas=np.array(doc["thetas"], dtype=float),
        rho_bar=doc["rho_bar"],
    )
    slices = [np.array(s, dtype=float) for s in doc["g_slices"]]
    g = np.stack(slices, axis=2) if slices else np.zeros((n, n, 0))
    factors = None
    if "factors" in doc:
        f = doc["factors"]
        core = np.stack([np.array(s, dtype=float) for s in f["core_slices"]], axis=2)
        factors = TuckerFactors(core=core, u1=np.array(f["u1"], dtype=float),
                                u2=np.array(f["u2"], dtype=float))
    standardization = None
    if "standardization" in doc:
        standardization = (np.array(doc["standardization"]["means"], dtype=float),
                           np.array(doc["standardization"]["scales"], dtype=float))
    return VarInfModel(params=params, g=g, factors=factors,
                       noise_cov=np.array(doc["noise_cov"], dtype=float),
                       standardization=standardization)


def spec_to_dict(spec: VarmaSpec) -> dict:
    return {
        "type": "varma_spec",
        "phi": [m.tolist() for m in spec.phi],
        "theta": [m.tolist() for m in spec.theta],
        "meta": spec.meta,
    }


def spec_from_dict(doc: dict) -> VarmaSpec:
    if doc.get("type") != "varma_spec":
        raise ValueError(f"not a spec document (type={doc.get('type')!r})")
    return VarmaSpec(phi=[np.array(m, dtype=float) for m in doc["phi"]],
                     theta=[np.array(m, dtype=float) for m in doc["theta"]],
                     meta=doc.get("meta", {}))


def save_document(doc: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_document(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def save_model(model, path) -> None:
    doc = spec_to_dict(model) if isinstance(model, VarmaSpec) else model_to_dict(model)
    save_document(doc, path)


def load_model(path):
    doc = load_document(path)
    if doc.get("type") == "varma_spec":
        return spec_from_dict(doc)
    return model_from_dict(doc)
