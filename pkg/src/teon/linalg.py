"""Dense matrix / order-3 tensor primitives.

Conventions used throughout the package:

* a "matrix" is a 2-D float ndarray of shape (m, n);
* a "tensor" is a 3-D float ndarray of shape (m, n, K) holding K stacked
  slices, slice k being ``t[:, :, k]``;
* matricization uses contiguous block concatenation:

      mode 1:  [X1 X2 ... XK]          shape (m, n*K)
      mode 2:  [X1.T X2.T ... XK.T]    shape (n, m*K)
      mode 3:  row k = vec(Xk)         shape (K, m*n)   (row-major vec)

Folding is the exact inverse; round-trips are bit-exact because only
reshape/transpose/concatenate are involved, never arithmetic.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

__all__ = [
    "SvdResult",
    "as_matrix",
    "as_tensor3",
    "matricize",
    "fold",
    "inner",
    "frobenius",
    "svd",
]


def as_matrix(a, *, dtype=np.float64) -> np.ndarray:
    """Validate and return `a` as a 2-D float array with finite entries."""
    m = np.asarray(a, dtype=dtype)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got ndim={m.ndim}")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError(f"matrix dimensions must be positive, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix entries must be finite (no NaN/Inf)")
    return m


def as_tensor3(t, *, dtype=np.float64) -> np.ndarray:
    """Validate and return `t` as an (m, n, K) float array with finite entries."""
    a = np.asarray(t, dtype=dtype)
    if a.ndim != 3:
        raise ValueError(f"expected an (m, n, K) tensor, got ndim={a.ndim}")
    if min(a.shape) < 1:
        raise ValueError(f"tensor dimensions must be positive, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("tensor entries must be finite (no NaN/Inf)")
    return a


def stack_slices(slices) -> np.ndarray:
    """Stack a list of same-shaped matrices [X1..XK] into an (m, n, K) tensor."""
    mats = [as_matrix(s) for s in slices]
    shapes = {s.shape for s in mats}
    if len(shapes) != 1:
        raise ValueError(f"all slices must share one shape, got {sorted(shapes)}")
    return np.stack(mats, axis=2)


def matricize(t: np.ndarray, mode: int) -> np.ndarray:
    """Unfold an (m, n, K) tensor along `mode` in {1, 2, 3} (block layout)."""
    t = np.asarray(t)
    if t.ndim != 3:
        raise ValueError(f"matricize expects an (m, n, K) tensor, got ndim={t.ndim}")
    m, n, k = t.shape
    if mode == 1:
        # [X1 X2 ... XK]: (m, K, n) laid out row-major gives exactly the block row.
        return t.transpose(0, 2, 1).reshape(m, k * n)
    if mode == 2:
        return t.transpose(1, 2, 0).reshape(n, k * m)
    if mode == 3:
        return t.transpose(2, 0, 1).reshape(k, m * n)
    raise ValueError(f"mode must be 1, 2 or 3, got {mode}")


def fold(x: np.ndarray, mode: int, shape: tuple[int, int, int]) -> np.ndarray:
    """Inverse of :func:`matricize`: rebuild the (m, n, K) tensor from an unfolding."""
    x = np.asarray(x)
    m, n, k = shape
    expected = {1: (m, k * n), 2: (n, k * m), 3: (k, m * n)}.get(mode)
    if expected is None:
        raise ValueError(f"mode must be 1, 2 or 3, got {mode}")
    if x.shape != expected:
        raise ValueError(
            f"fold mode {mode} with shape {shape} needs a {expected} matrix, got {x.shape}"
        )
    if mode == 1:
        return x.reshape(m, k, n).transpose(0, 2, 1)
    if mode == 2:
        return x.reshape(n, k, m).transpose(2, 0, 1)
    return x.reshape(k, m, n).transpose(1, 2, 0)


def inner(a: np.ndarray, b: np.ndarray) -> float:
    """Frobenius inner product; shapes must agree exactly."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"inner product needs equal shapes, got {a.shape} vs {b.shape}")
    return float(np.vdot(a, b))


def frobenius(t: np.ndarray) -> float:
    """Frobenius norm, invariant under matricization mode."""
    return float(np.linalg.norm(np.asarray(t)))


class SvdResult(NamedTuple):
    """Thin SVD A = U diag(sigma) V^T with r = min(m, n).

    u: (m, r) with orthonormal columns; sigma: (r,) non-increasing, >= 0;
    v: (n, r) with orthonormal columns (right singular vectors as columns).
    """

    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.sigma) @ self.v.T


def svd(a: np.ndarray) -> SvdResult:
    """Thin SVD used as the ground-truth oracle everywhere else.

    Deterministic for a fixed input on a fixed build (single-threaded
    LAPACK path). Non-convergence is surfaced as a numerical error rather
    than returning garbage.
    """
    a = as_matrix(a)
    try:
        u, s, vh = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as e:  # pragma: no cover - hardware dependent
        raise np.linalg.LinAlgError(
            f"SVD did not converge for shape {a.shape}: {e}"
        ) from e
    return SvdResult(u, s, vh.T)
