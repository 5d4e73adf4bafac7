"""Dense third-order tensor algebra: matricization, mode products, HOSVD."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def matricize(t: np.ndarray, mode: int) -> np.ndarray:
    """Unfold a third-order tensor along ``mode`` (1, 2 or 3).

    With frontal slices X_1..X_{d3}, mode 1 gives (X_1 | ... | X_{d3}),
    mode 2 gives (X_1' | ... | X_{d3}'), and mode 3 has vec(X_k)' as rows,
    where vec stacks columns.
    """
    t = np.asarray(t)
    if t.ndim != 3:
        raise ValueError(f"expected a third-order tensor, got ndim={t.ndim}")
    d1, d2, d3 = t.shape
    if mode == 1:
        return t.reshape(d1, d2 * d3, order="F")
    if mode == 2:
        return t.transpose(1, 0, 2).reshape(d2, d1 * d3, order="F")
    if mode == 3:
        return t.reshape(d1 * d2, d3, order="F").T
    raise ValueError(f"mode must be 1, 2 or 3, got {mode}")


def tensorize(m: np.ndarray, mode: int, dims: tuple[int, int, int]) -> np.ndarray:
    """Inverse of :func:`matricize`: fold a matrix back into shape ``dims``."""
    m = np.asarray(m)
    d1, d2, d3 = dims
    if mode == 1:
        return m.reshape(d1, d2, d3, order="F")
    if mode == 2:
        return m.reshape(d2, d1, d3, order="F").transpose(1, 0, 2)
    if mode == 3:
        return m.T.reshape(d1, d2, d3, order="F")
    raise ValueError(f"mode must be 1, 2 or 3, got {mode}")


def mode_product(t: np.ndarray, m: np.ndarray, mode: int) -> np.ndarray:
    """Mode-``mode`` product: satisfies matricize(result, mode) = m @ matricize(t, mode)."""
    t = np.asarray(t)
    m = np.atleast_2d(np.asarray(m))
    if m.shape[1] != t.shape[mode - 1]:
        raise ValueError(
            f"mode-{mode} product needs a matrix with {t.shape[mode - 1]} columns, "
            f"got shape {m.shape}"
        )
    dims = list(t.shape)
    dims[mode - 1] = m.shape[0]
    return tensorize(m @ matricize(t, mode), mode, tuple(dims))


def frobenius_norm(t: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(t).ravel()))


def fix_column_signs(u: np.ndarray) -> np.ndarray:
    """Flip column signs so the first entry of each column is strictly positive.

    Falls back to the largest-magnitude entry when |first entry| < 1e-12, to
    avoid instability on near-zero leading loadings.
    """
    u = np.array(u, copy=True)
    for j in range(u.shape[1]):
        pivot = u[0, j]
        if abs(pivot) < 1e-12:
            pivot = u[np.argmax(np.abs(u[:, j])), j]
        if pivot < 0:
            u[:, j] = -u[:, j]
    return u


@dataclass
class TuckerFactors:
    """Mode-1/2 Tucker factorization ``core x_1 u1 x_2 u2`` with orthonormal loadings."""

    core: np.ndarray
    u1: np.ndarray
    u2: np.ndarray

    def compose(self) -> np.ndarray:
        return mode_product(mode_product(self.core, self.u1, 1), self.u2, 2)

    def validate(self, tol: float = 1e-10) -> None:
        for i, u in enumerate((self.u1, self.u2), start=1):
            gram = u.T @ u
            if np.max(np.abs(gram - np.eye(u.shape[1]))) > tol:
                raise ValueError(f"u{i} columns are not orthonormal to {tol:g}")
            for j in range(u.shape[1]):
                pivot = u[0, j]
                if abs(pivot) < 1e-12:
                    pivot = u[np.argmax(np.abs(u[:, j])), j]
                if pivot <= 0:
                    raise ValueError(f"u{i} column {j} violates the sign convention")


def hosvd(g: np.ndarray, ranks: tuple[int, int]) -> TuckerFactors:
    """Higher-order SVD of ``g`` over modes 1 and 2 at the given ranks.

    The loadings are the top-R_i left singular vectors of the mode-i
    unfoldings, sign-fixed columnwise; the core is ``g x_1 u1' x_2 u2'``.
    For tensors whose mode-1/2 Tucker ranks are at most ``ranks`` the core
    unfoldings are exactly row-orthogonal.
    """
    g = np.asarray(g, dtype=float)
    r1, r2 = ranks
    if not (1 <= r1 <= g.shape[0] and 1 <= r2 <= g.shape[1]):
        raise ValueError(f"ranks {ranks} exceed tensor dimensions {g.shape[:2]}")
    if frobenius_norm(g) == 0.0:
        raise ValueError("cannot factor the zero tensor")
    factors = []
    for mode, r in ((1, r1), (2, r2)):
        try:
            u, _, _ = np.linalg.svd(matricize(g, mode), full_matrices=False)
        except np.linalg.LinAlgError as exc:  # pragma: no cover - numerical failure path
            raise ArithmeticError(f"SVD failed on mode-{mode} unfolding") from exc
        factors.append(fix_column_signs(u[:, :r]))
    u1, u2 = factors
    core = mode_product(mode_product(g, u1.T, 1), u2.T, 2)
    return TuckerFactors(core=core, u1=u1, u2=u2)
