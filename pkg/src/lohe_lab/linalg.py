"""Dense complex matrix helpers used throughout the package.

Matrices are plain ``complex128`` numpy arrays. Most helpers also accept a
stack of matrices with shape ``(..., d, d)`` so that the per-member work on
an ensemble can be done in one vectorized call.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "LinalgError",
    "as_matrix",
    "hermitian_conjugate",
    "frobenius_inner",
    "frobenius_norm",
    "operator_norm",
    "skew_projection",
    "polar_unitary",
    "exp_skew",
    "unitarity_residual",
]


class LinalgError(ValueError):
    """Raised when an input violates the precondition of a matrix routine."""


class ConvergenceError(LinalgError):
    def __init__(self, message: str, iterations: int):
        super().__init__(f"{message} (after {iterations} iterations)")
        self.iterations = iterations


def as_matrix(A) -> np.ndarray:
    """Coerce to a finite square complex128 array (or stack of them)."""
    A = np.asarray(A, dtype=np.complex128)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise LinalgError(f"expected square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise LinalgError("matrix has non-finite entries")
    return A


def hermitian_conjugate(A: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(A, -1, -2))


def frobenius_inner(A: np.ndarray, B: np.ndarray) -> complex:
    """tr(A^dagger B)."""
    A = np.asarray(A)
    B = np.asarray(B)
    if A.shape != B.shape:
        raise LinalgError(f"dimension mismatch: {A.shape} vs {B.shape}")
    return complex(np.vdot(A, B))


def frobenius_norm(A: np.ndarray) -> float | np.ndarray:
    """Frobenius norm; for a stack ``(..., d, d)`` returns one norm per matrix."""
    A = np.asarray(A)
    if A.ndim == 2:
        return float(np.linalg.norm(A))
    return np.sqrt(np.sum(np.abs(A) ** 2, axis=(-2, -1)))


def operator_norm(A: np.ndarray, rtol: float = 1e-12, max_iter: int = 10_000) -> float:
    """Largest singular value of ``A`` by power iteration on ``A^dagger A``.

    The start vector is the normalized all-ones vector, so the result is
    deterministic. Raises :class:`ConvergenceError` if the Rayleigh quotient
    has not settled to ``rtol`` within ``max_iter`` iterations.
    """
    A = as_matrix(A)
    d = A.shape[0]
    G = hermitian_conjugate(A) @ A
    scale = np.linalg.norm(G)
    if scale == 0.0:
        return 0.0

    starts = [np.full(d, 1.0 / np.sqrt(d), dtype=np.complex128)]
    starts += [np.eye(d, dtype=np.complex128)[k] for k in range(d)]
    for v in starts:
        w = G @ v
        if np.linalg.norm(w) <= 1e-14 * scale:
            # start vector lies in the null space of A; try the next one
            continue
        lam = np.vdot(v, w).real
        for it in range(1, max_iter + 1):
            v = w / np.linalg.norm(w)
            w = G @ v
            lam_new = np.vdot(v, w).real
            if abs(lam_new - lam) <= rtol * abs(lam_new):
                return float(np.sqrt(lam_new))
            lam = lam_new
        raise ConvergenceError("power iteration did not converge", max_iter)
    raise ConvergenceError("no start vector escaped the null space", 0)


def skew_projection(A: np.ndarray) -> np.ndarray:
    """Orthogonal projection (A - A^dagger)/2 onto skew-hermitian matrices."""
    return 0.5 * (A - hermitian_conjugate(A))


def unitarity_residual(U: np.ndarray) -> float | np.ndarray:
    """||U U^dagger - I||_F, per matrix for stacks."""
    d = U.shape[-1]
    return frobenius_norm(U @ hermitian_conjugate(U) - np.eye(d))


def polar_unitary(A: np.ndarray) -> np.ndarray:
    """Unitary polar factor of ``A`` (the nearest unitary in Frobenius norm).

    Works on a single matrix or a stack. Computed from the SVD
    ``A = W S V^dagger`` as ``W V^dagger``.
    """
    A = as_matrix(A)
    W, s, Vh = np.linalg.svd(A)
    smax = s[..., :1]
    if np.any(s[..., -1:] <= 1e-12 * smax):
        raise LinalgError("polar factor undefined for (near-)singular matrix")
    return W @ Vh


def exp_skew(S: np.ndarray, check: bool = True) -> np.ndarray:
    """exp(S) for skew-hermitian ``S`` (single matrix or stack).

    Uses the eigendecomposition of the hermitian matrix ``iS``, which keeps
    the result unitary to rounding error.
    """
    S = np.asarray(S, dtype=np.complex128)
    if check:
        S = as_matrix(S)
        defect = frobenius_norm(S + hermitian_conjugate(S))
        size = np.maximum(1.0, frobenius_norm(S))
        if np.any(defect > 1e-10 * size):
            raise LinalgError("exp_skew requires a skew-hermitian argument")
    K = 1j * S
    K = 0.5 * (K + hermitian_conjugate(K))
    w, V = np.linalg.eigh(K)
    # S = -i V diag(w) V^dagger
    return (V * np.exp(-1j * w)[..., None, :]) @ hermitian_conjugate(V)
