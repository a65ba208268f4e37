"""Ensembles of unitary matrices, Hamiltonian sets, samplers and diagnostics."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .linalg import (
    LinalgError,
    exp_skew,
    frobenius_norm,
    hermitian_conjugate,
    skew_projection,
    unitarity_residual,
)

__all__ = [
    "Ensemble",
    "HamiltonianSet",
    "make_rng",
    "complex_gaussian",
    "centroid",
    "order_parameter_sq",
    "diameter_sq",
    "pairwise_distances_sq",
    "hamiltonian_diameter",
    "sample_haar",
    "sample_perturbed",
    "sample_with_diameter",
    "random_hermitian",
    "perturbed_hamiltonians",
    "unitarity_defect",
    "ensemble_to_json",
    "ensemble_from_json",
    "save_ensemble",
    "load_ensemble",
]


@dataclass(frozen=True)
class Ensemble:
    """N unitary d x d matrices stored as one ``(N, d, d)`` array.

    ``tol`` is the admissible unitarity defect per member; ``None`` means
    the default ``1e-8 * sqrt(d)``.
    """

    members: np.ndarray
    tol: float | None = None

    def __post_init__(self):
        U = np.array(self.members, dtype=np.complex128, copy=True)
        if U.ndim == 2:
            U = U[None]
        if U.ndim != 3 or U.shape[1] != U.shape[2] or U.shape[0] < 1 or U.shape[1] < 1:
            raise ValueError(f"ensemble must have shape (N, d, d), got {U.shape}")
        if not np.all(np.isfinite(U)):
            raise ValueError("ensemble has non-finite entries")
        tol = 1e-8 * np.sqrt(U.shape[1]) if self.tol is None else self.tol
        worst = float(np.max(unitarity_residual(U)))
        if worst > tol:
            raise ValueError(f"member not unitary: defect {worst:.3e} > {tol:.3e}")
        U.setflags(write=False)
        object.__setattr__(self, "members", U)
        object.__setattr__(self, "tol", tol)

    @property
    def dim(self) -> int:
        return self.members.shape[1]

    @property
    def size(self) -> int:
        return self.members.shape[0]

    def __len__(self) -> int:
        return self.size

    def __getitem__(self, j: int) -> np.ndarray:
        return self.members[j]

    def right_multiply(self, L: np.ndarray) -> Ensemble:
        return Ensemble(self.members @ L, tol=self.tol)


@dataclass(frozen=True)
class HamiltonianSet:
    """Either one shared hermitian matrix (shape ``(d, d)``) or one per member
    (shape ``(N, d, d)``)."""

    matrices: np.ndarray

    def __post_init__(self):
        H = np.array(self.matrices, dtype=np.complex128, copy=True)
        if H.ndim not in (2, 3) or H.shape[-1] != H.shape[-2]:
            raise ValueError(f"hamiltonians must be (d, d) or (N, d, d), got {H.shape}")
        defect = frobenius_norm(H - hermitian_conjugate(H))
        if np.any(defect > 1e-10 * np.maximum(1.0, frobenius_norm(H))):
            raise ValueError("hamiltonian is not hermitian")
        H.setflags(write=False)
        object.__setattr__(self, "matrices", H)

    @property
    def shared(self) -> bool:
        return self.matrices.ndim == 2

    @property
    def dim(self) -> int:
        return self.matrices.shape[-1]

    def stack(self, n: int) -> np.ndarray:
        """Per-member view with shape ``(n, d, d)``."""
        if self.shared:
            return np.broadcast_to(self.matrices, (n,) + self.matrices.shape)
        if self.matrices.shape[0] != n:
            raise ValueError(f"{self.matrices.shape[0]} hamiltonians for {n} members")
        return self.matrices


# -- random numbers ---------------------------------------------------------------


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator; the bit stream is fixed across platforms for a seed."""
    return np.random.Generator(np.random.PCG64(seed))


def complex_gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard complex Gaussian entries (E|z|^2 = 1) via Box-Muller.

    Each complex entry uses the two normals of a single Box-Muller pair, so the
    stream does not depend on numpy's normal sampler.
    """
    n = int(np.prod(shape))
    u1 = rng.random(n)
    u2 = rng.random(n)
    r = np.sqrt(-2.0 * np.log1p(-u1))  # 1 - u1 lies in (0, 1]
    z = r * np.exp(2j * np.pi * u2) / np.sqrt(2.0)
    return z.reshape(shape)


# -- diagnostics ------------------------------------------------------------------


def _members(E) -> np.ndarray:
    return E.members if isinstance(E, Ensemble) else np.asarray(E)


def centroid(E) -> np.ndarray:
    """Average state U_c = (1/N) sum_k U_k."""
    return _members(E).mean(axis=0)


def order_parameter_sq(E) -> float:
    """R^2 = ||U_c||_F^2."""
    Uc = centroid(E)
    return float(np.vdot(Uc, Uc).real)


def pairwise_distances_sq(U: np.ndarray) -> np.ndarray:
    """Matrix of ||U_i - U_j||_F^2 over all pairs (direct differences)."""
    U = _members(U)
    diff = U[:, None] - U[None, :]
    return np.sum(np.abs(diff) ** 2, axis=(-2, -1))


def diameter_sq(E) -> float:
    """max_{i,j} ||U_i - U_j||_F^2."""
    U = _members(E)
    if U.shape[0] < 2:
        return 0.0
    return float(pairwise_distances_sq(U).max())


def hamiltonian_diameter(HS: HamiltonianSet | None) -> float:
    """max_{i,j} ||H_i - H_j||_F; zero for a shared (or absent) Hamiltonian."""
    if HS is None or HS.shared:
        return 0.0
    return float(np.sqrt(pairwise_distances_sq(HS.matrices).max()))


def unitarity_defect(E) -> float:
    """max_j ||U_j U_j^dagger - I||_F."""
    return float(np.max(unitarity_residual(_members(E))))


# -- samplers ---------------------------------------------------------------------


def _haar(rng: np.random.Generator, d: int, n: int) -> np.ndarray:
    Z = complex_gaussian(rng, (n, d, d))
    Q, R = np.linalg.qr(Z)
    diag = np.diagonal(R, axis1=-2, axis2=-1)
    phases = diag / np.abs(diag)
    return Q * phases[:, None, :]


def sample_haar(d: int, N: int, seed: int) -> Ensemble:
    """N independent Haar unitaries (QR of a Ginibre matrix, phase-corrected)."""
    if d < 1 or N < 1:
        raise ValueError("need d >= 1 and N >= 1")
    return Ensemble(_haar(make_rng(seed), d, N))


def _unit_skew_directions(rng: np.random.Generator, d: int, n: int) -> np.ndarray:
    S = skew_projection(complex_gaussian(rng, (n, d, d)))
    return S / frobenius_norm(S)[:, None, None]


def sample_perturbed(U0: np.ndarray, epsilon: float, d: int, N: int, seed: int) -> Ensemble:
    """Members exp(epsilon S_j) U0 with random unit-norm skew-hermitian S_j."""
    U0 = np.asarray(U0, dtype=np.complex128)
    if U0.shape != (d, d):
        raise ValueError(f"U0 has shape {U0.shape}, expected {(d, d)}")
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    if unitarity_residual(U0) > 1e-10 * np.sqrt(d):
        raise LinalgError("U0 is not unitary")
    S = _unit_skew_directions(make_rng(seed), d, N)
    return Ensemble(exp_skew(epsilon * S, check=False) @ U0)


def sample_with_diameter(U0: np.ndarray, target_sq: float, d: int, N: int, seed: int) -> Ensemble:
    """Perturbed ensemble around U0 rescaled so that diameter_sq hits ``target_sq``.

    The perturbation directions are those of :func:`sample_perturbed` with the
    same seed; only the amplitude epsilon is solved for.
    """
    from scipy.optimize import brentq

    if target_sq == 0.0:
        return sample_perturbed(U0, 0.0, d, N, seed)
    if N < 2:
        raise ValueError("a nonzero diameter needs N >= 2")

    def gap(eps):
        return diameter_sq(sample_perturbed(U0, eps, d, N, seed)) - target_sq

    hi = np.sqrt(target_sq)
    while gap(hi) < 0:
        hi *= 2.0
        if hi > np.pi:
            raise ValueError(f"cannot reach diameter_sq={target_sq}")
    eps = brentq(gap, 0.0, hi, xtol=1e-15, rtol=1e-15, maxiter=200)
    return sample_perturbed(U0, eps, d, N, seed)


def random_hermitian(d: int, seed: int, norm: float = 1.0) -> np.ndarray:
    """Random hermitian matrix with Frobenius norm ``norm``."""
    A = complex_gaussian(make_rng(seed), (d, d))
    H = 0.5 * (A + A.conj().T)
    return norm * H / np.linalg.norm(H)


def perturbed_hamiltonians(H0: np.ndarray, target_DH: float, N: int, seed: int) -> HamiltonianSet:
    """Per-member set H_j = H0 + diag(delta_j) with real delta_j scaled so that
    the Hamiltonian diameter equals ``target_DH``."""
    H0 = np.asarray(H0, dtype=np.complex128)
    d = H0.shape[0]
    if target_DH < 0:
        raise ValueError("target_DH must be nonnegative")
    if N < 2:
        raise ValueError("a per-member set needs N >= 2")
    delta = complex_gaussian(make_rng(seed), (N, d)).real
    spread = np.sqrt(pairwise_distances_sq(delta[:, :, None]).max())
    scale = 0.0 if target_DH == 0 else target_DH / spread
    H = H0[None] + np.einsum("ja,ab->jab", scale * delta, np.eye(d))
    return HamiltonianSet(H)


# -- serialization ----------------------------------------------------------------


def ensemble_to_json(E) -> list:
    """Nested lists: members -> rows -> [re, im] pairs (row-major)."""
    U = _members(E)
    return [[[[float(z.real), float(z.imag)] for z in row] for row in M] for M in U]


def ensemble_from_json(data, tol: float | None = None) -> Ensemble:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 4 or arr.shape[-1] != 2:
        raise ValueError("ensemble JSON must be members x rows x cols x [re, im]")
    return Ensemble(arr[..., 0] + 1j * arr[..., 1], tol=tol)


def save_ensemble(E, path: str | Path) -> None:
    Path(path).write_text(json.dumps(ensemble_to_json(E)) + "\n", encoding="utf-8")


def load_ensemble(path: str | Path, tol: float | None = None) -> Ensemble:
    return ensemble_from_json(json.loads(Path(path).read_text(encoding="utf-8")), tol=tol)
