"""Vector fields, potentials and derivative identities for the Lohe flows.

Every flow here is a polynomial mean-field flow

    dU_j/dt = -i H_j U_j + 1/2 (M - U_j M^dagger U_j),
    M = sum_n kappa_n (U_c U_c^dagger)^(n-1) U_c,

so one power chain of ``A = U_c U_c^dagger`` per evaluation serves every
member and every order. Cost is O(m d^3 + N d^3) per right-hand side.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ensemble import Ensemble, HamiltonianSet
from .linalg import hermitian_conjugate as dag
from .linalg import skew_projection

__all__ = [
    "ModelSpec",
    "PotentialSpec",
    "R2Term",
    "OrderRate",
    "rhs",
    "coupling",
    "rhs_cubic",
    "rhs_monomial",
    "rhs_polynomial",
    "potential",
    "euclidean_gradient",
    "riemannian_gradient",
    "vdot_chain_rule",
    "vdot_closed_form",
    "r2dot_direct",
    "r2dot_closed_form",
    "dyadic_blocks",
    "kappa_bounds",
    "UnsupportedPairError",
]

FLOW_KINDS = ("cubic", "monomial", "polynomial", "dyadic")
POTENTIAL_KINDS = ("V1", "Vm", "Vpoly")


class UnsupportedPairError(ValueError):
    pass


def _is_power_of_two(m: int) -> bool:
    return m >= 1 and (m & (m - 1)) == 0


@dataclass(frozen=True)
class ModelSpec:
    """Which flow to run.

    ``kappas`` holds one coupling for ``cubic``/``monomial``, the coefficients
    kappa_1..kappa_m for ``polynomial``, and kappa_{2^0}..kappa_{2^(l-1)} for
    ``dyadic`` (``m`` is then ``l``).
    """

    kind: str
    kappas: tuple[float, ...]
    m: int = 1
    hamiltonians: HamiltonianSet | None = None

    def __post_init__(self):
        if self.kind not in FLOW_KINDS:
            raise ValueError(f"unknown flow kind {self.kind!r}")
        kappas = tuple(float(k) for k in np.atleast_1d(self.kappas))
        object.__setattr__(self, "kappas", kappas)
        if not kappas:
            raise ValueError("kappas must be nonempty")
        if self.kind in ("cubic", "monomial") and len(kappas) != 1:
            raise ValueError(f"{self.kind} flow takes exactly one kappa")
        if self.kind == "cubic":
            object.__setattr__(self, "m", 1)
        elif self.kind == "monomial" and self.m < 1:
            raise ValueError("monomial order m must be >= 1")
        elif self.kind == "polynomial":
            object.__setattr__(self, "m", len(kappas))
        elif self.kind == "dyadic":
            object.__setattr__(self, "m", len(kappas))

    @classmethod
    def cubic(cls, kappa: float, hamiltonians=None) -> ModelSpec:
        return cls("cubic", (kappa,), 1, _as_hs(hamiltonians))

    @classmethod
    def monomial(cls, m: int, kappa: float, hamiltonians=None) -> ModelSpec:
        return cls("monomial", (kappa,), m, _as_hs(hamiltonians))

    @classmethod
    def polynomial(cls, kappas, hamiltonians=None) -> ModelSpec:
        return cls("polynomial", tuple(kappas), len(kappas), _as_hs(hamiltonians))

    @classmethod
    def dyadic(cls, kappas, hamiltonians=None) -> ModelSpec:
        return cls("dyadic", tuple(kappas), len(kappas), _as_hs(hamiltonians))

    @property
    def coefficients(self) -> tuple[float, ...]:
        """Dense coefficients c_1..c_M with dU/dt built from sum c_n A^(n-1) U_c."""
        if self.kind == "cubic":
            return self.kappas
        if self.kind == "monomial":
            return (0.0,) * (self.m - 1) + self.kappas
        if self.kind == "polynomial":
            return self.kappas
        c = [0.0] * (2 ** (len(self.kappas) - 1))
        for k, kap in enumerate(self.kappas):
            c[2**k - 1] = kap
        return tuple(c)

    @property
    def dyadic_levels(self) -> list[tuple[int, float]]:
        """(k, kappa_{2^k}) pairs when the flow only has orders 2^k."""
        if self.kind == "cubic":
            return [(0, self.kappas[0])]
        if self.kind == "monomial":
            if not _is_power_of_two(self.m):
                raise ValueError(f"m={self.m} is not a power of two")
            return [(self.m.bit_length() - 1, self.kappas[0])]
        if self.kind == "dyadic":
            return list(enumerate(self.kappas))
        raise ValueError("polynomial flows have no dyadic decomposition; use kind='dyadic'")

    @property
    def homogeneous(self) -> bool:
        return self.hamiltonians is None or self.hamiltonians.shared

    def without_hamiltonian(self) -> ModelSpec:
        return ModelSpec(self.kind, self.kappas, self.m, None)

    def natural_potential(self) -> PotentialSpec:
        """The potential this flow is the gradient flow of."""
        if self.kind == "cubic":
            return PotentialSpec("V1", self.kappas, 1)
        if self.kind == "monomial":
            return PotentialSpec("Vm", self.kappas, self.m)
        return PotentialSpec("Vpoly", self.coefficients)


def _as_hs(h) -> HamiltonianSet | None:
    if h is None or isinstance(h, HamiltonianSet):
        return h
    return HamiltonianSet(h)


@dataclass(frozen=True)
class PotentialSpec:
    """V1 = -(kN/2)||U_c||^2, Vm = -(kN/2m) tr(A^m), Vpoly = -N tr f(A)."""

    kind: str
    kappas: tuple[float, ...]
    m: int = 1

    def __post_init__(self):
        if self.kind not in POTENTIAL_KINDS:
            raise ValueError(f"unknown potential kind {self.kind!r}")
        kappas = tuple(float(k) for k in np.atleast_1d(self.kappas))
        object.__setattr__(self, "kappas", kappas)
        if not kappas:
            raise ValueError("kappas must be nonempty")
        if self.kind == "V1":
            object.__setattr__(self, "m", 1)
        if self.kind == "Vpoly":
            object.__setattr__(self, "m", len(kappas))
        elif len(kappas) != 1:
            raise ValueError(f"{self.kind} takes exactly one kappa")
        if self.m < 1:
            raise ValueError("m must be >= 1")

    @classmethod
    def V1(cls, kappa: float) -> PotentialSpec:
        return cls("V1", (kappa,), 1)

    @classmethod
    def Vm(cls, m: int, kappa: float) -> PotentialSpec:
        return cls("Vm", (kappa,), m)

    @classmethod
    def Vpoly(cls, kappas) -> PotentialSpec:
        return cls("Vpoly", tuple(kappas))

    @property
    def coefficients(self) -> tuple[float, ...]:
        if self.kind == "Vpoly":
            return self.kappas
        return (0.0,) * (self.m - 1) + self.kappas


# -- kernels on raw (N, d, d) arrays ----------------------------------------------


def _arr(E) -> np.ndarray:
    return E.members if isinstance(E, Ensemble) else np.asarray(E)


def _drive(Uc: np.ndarray, coeffs) -> np.ndarray:
    """M = sum_n c_n A^(n-1) U_c with the power chain built incrementally."""
    A = Uc @ dag(Uc)
    P = Uc
    M = coeffs[0] * P
    for c in coeffs[1:]:
        P = A @ P
        if c != 0.0:
            M = M + c * P
    return M


def _coupling(U: np.ndarray, coeffs) -> np.ndarray:
    Uc = U.mean(axis=0)
    M = _drive(Uc, coeffs)
    return 0.5 * (M - U @ dag(M) @ U)


def _hamiltonian_term(U: np.ndarray, hs: HamiltonianSet | None) -> np.ndarray | None:
    if hs is None:
        return None
    if hs.dim != U.shape[-1]:
        raise ValueError(f"hamiltonian dimension {hs.dim} != ensemble dimension {U.shape[-1]}")
    return -1j * (hs.stack(U.shape[0]) @ U)


def _full_rhs(U: np.ndarray, model: ModelSpec) -> np.ndarray:
    C = _coupling(U, model.coefficients)
    Hterm = _hamiltonian_term(U, model.hamiltonians)
    return C if Hterm is None else C + Hterm


def coupling(E, model: ModelSpec) -> np.ndarray:
    """Interaction part of the vector field (the H = 0 flow)."""
    return _coupling(_arr(E), model.coefficients)


def rhs(E, model: ModelSpec) -> np.ndarray:
    """Full vector field dU_j/dt for every member, shape ``(N, d, d)``."""
    return _full_rhs(_arr(E), model)


# -- the named right-hand sides ---------------------------------------------------


def rhs_cubic(E, kappa: float, HS=None) -> np.ndarray:
    """-i H_j U_j + (kappa/2)(U_c - U_j U_c^dagger U_j)."""
    U = _arr(E)
    Uc = U.mean(axis=0)
    out = 0.5 * kappa * (Uc - U @ dag(Uc) @ U)
    Hterm = _hamiltonian_term(U, _as_hs(HS))
    return out if Hterm is None else out + Hterm


def rhs_monomial(E, m: int, kappa: float, HS=None) -> np.ndarray:
    """-i H_j U_j + (kappa/2)[A^(m-1) U_c - U_j (A^(m-1) U_c)^dagger U_j]."""
    if m < 1:
        raise ValueError("monomial order m must be >= 1")
    U = _arr(E)
    Uc = U.mean(axis=0)
    A = Uc @ dag(Uc)
    P = Uc
    for _ in range(m - 1):
        P = A @ P
    out = 0.5 * kappa * (P - U @ dag(P) @ U)
    Hterm = _hamiltonian_term(U, _as_hs(HS))
    return out if Hterm is None else out + Hterm


def rhs_polynomial(E, kappas, HS=None) -> np.ndarray:
    """Sum over n of the order-n monomial fields with couplings kappas[n-1]."""
    kappas = tuple(kappas)
    if not kappas:
        raise ValueError("kappas must be nonempty")
    U = _arr(E)
    out = _coupling(U, kappas)
    Hterm = _hamiltonian_term(U, _as_hs(HS))
    return out if Hterm is None else out + Hterm


# -- potentials and gradients -----------------------------------------------------


def _trace_powers(A: np.ndarray, m: int) -> list[float]:
    """[tr(A), tr(A^2), ..., tr(A^m)] for hermitian A."""
    out = []
    P = A
    for n in range(m):
        if n:
            P = P @ A
        out.append(float(np.trace(P).real))
    return out


def potential(E, P: PotentialSpec) -> float:
    U = _arr(E)
    N = U.shape[0]
    Uc = U.mean(axis=0)
    if P.kind == "V1":
        return -0.5 * P.kappas[0] * N * float(np.vdot(Uc, Uc).real)
    A = Uc @ dag(Uc)
    traces = _trace_powers(A, P.m)
    if P.kind == "Vm":
        return -P.kappas[0] * N / (2 * P.m) * traces[-1]
    return -N * sum(k / (2 * n) * t for n, (k, t) in enumerate(zip(P.kappas, traces), start=1))


def euclidean_gradient(E, P: PotentialSpec) -> np.ndarray:
    """dV/dU_j in the ambient space; identical for every member: -2 f'(A) U_c."""
    U = _arr(E)
    G = -_drive(U.mean(axis=0), P.coefficients)
    return np.broadcast_to(G, U.shape)


def riemannian_gradient(E, P: PotentialSpec) -> np.ndarray:
    """Projection pi(G U_j^dagger) U_j of the Euclidean gradient onto T_{U_j} U(d)."""
    U = _arr(E)
    G = euclidean_gradient(U, P)
    return skew_projection(G @ dag(U)) @ U


# -- derivative identities --------------------------------------------------------


def _sq(X: np.ndarray) -> np.ndarray:
    return np.sum(np.abs(X) ** 2, axis=(-2, -1))


def vdot_chain_rule(E, flow: ModelSpec, P: PotentialSpec) -> float:
    """dV/dt = sum_j Re<grad_j V, dU_j/dt> evaluated along the interaction field."""
    U = _arr(E)
    G = euclidean_gradient(U, P)
    Udot = coupling(U, flow)
    return float(np.sum(np.real(np.conj(G) * Udot)))


def vdot_closed_form(E, flow: ModelSpec, P: PotentialSpec) -> float:
    """Closed-form dV/dt along the H = 0 part of ``flow``.

    Supported pairs: (cubic, V1), (monomial m=2, V1), (monomial m, Vm) with
    the same m (this covers m=2 with V2), and (polynomial or dyadic, Vpoly)
    with identical coefficients. When flow and potential carry different
    single couplings the product kappa_flow * kappa_potential replaces kappa^2.
    """
    U = _arr(E)
    N = U.shape[0]
    Uc = U.mean(axis=0)
    A = Uc @ dag(Uc)

    if flow.kind in ("polynomial", "dyadic") or P.kind == "Vpoly":
        if flow.kind not in ("polynomial", "dyadic") or P.kind != "Vpoly":
            raise UnsupportedPairError(f"unsupported pair ({flow.kind}, {P.kind})")
        if tuple(flow.coefficients) != tuple(P.coefficients):
            raise UnsupportedPairError("Vpoly identity needs the flow's own coefficients")
        F = 0.5 * _drive(Uc, flow.coefficients)  # f'(A) U_c
        X = F @ dag(U) - U @ dag(F)
        return -float(np.sum(_sq(X)))

    m_flow, m_pot = flow.m, P.m
    kk = flow.kappas[0] * P.kappas[0]

    if m_pot == 1 and m_flow == 1:
        W = Uc - U @ dag(Uc) @ U
        return -0.25 * kk * float(np.sum(_sq(W)))
    if m_pot == 1 and m_flow == 2:
        B = dag(Uc) @ Uc
        X = A @ U - Uc @ dag(U) @ Uc
        Y = A @ U - U @ B
        return -0.25 * kk * float(np.sum(_sq(X))) - 0.125 * kk * float(np.sum(_sq(Y)))
    if m_pot == m_flow:
        Pm = Uc
        for _ in range(m_flow - 1):
            Pm = A @ Pm
        X = U @ dag(Pm) - Pm @ dag(U)
        return -0.25 * kk * float(np.sum(_sq(X)))
    raise UnsupportedPairError(f"unsupported pair (order {m_flow} flow, order {m_pot} potential)")


def r2dot_direct(E, flow: ModelSpec) -> float:
    """dR^2/dt = 2 Re tr(U_c^dagger dU_c/dt) along the H = 0 part of the flow."""
    U = _arr(E)
    Uc = U.mean(axis=0)
    Ucdot = coupling(U, flow).mean(axis=0)
    return 2.0 * float(np.real(np.vdot(Uc, Ucdot)))


@dataclass(frozen=True)
class R2Term:
    """One nonnegative summand of dR^2/dt.

    ``p == 0`` marks the commutator term ||(U_c U_i^+ - U_i U_c^+) A^(2^(k-1)-1) U_c||^2
    (just ||U_c U_i^+ - U_i U_c^+||^2 when k = 0); ``p >= 1`` the 2^-p weighted terms.
    ``value`` includes every prefactor.
    """

    k: int
    p: int
    member: int
    value: float


@dataclass(frozen=True)
class OrderRate:
    value: float
    terms: list[R2Term] = field(default_factory=list)

    @property
    def term_sum(self) -> float:
        return float(sum(t.value for t in self.terms))


def _mpow(X: np.ndarray, n: int) -> np.ndarray:
    return np.linalg.matrix_power(X, n)


def dyadic_blocks(U: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Unweighted squared norms for the order-2^k level.

    Returns ``(comm, cascade)`` with ``comm[i]`` the commutator quantity and
    ``cascade[p-1, i]`` the p-th cascade quantity, p = 1..k.
    """
    U = _arr(U)
    Uc = U.mean(axis=0)
    A = Uc @ dag(Uc)
    B = dag(Uc) @ Uc
    Y = Uc @ dag(U) - U @ dag(Uc)
    if k == 0:
        comm = _sq(Y)
    else:
        comm = _sq(Y @ _mpow(A, 2 ** (k - 1) - 1) @ Uc)
    half = 2 ** (k - 1) if k else 0
    cascade = np.empty((k, U.shape[0]))
    for p in range(1, k + 1):
        q = 2 ** (p - 1)
        Z = U @ _mpow(B, q) @ dag(U)
        cascade[p - 1] = _sq(_mpow(A, half) - _mpow(A, half - q) @ Z)
    return comm, cascade


def r2dot_closed_form(E, flow: ModelSpec) -> OrderRate:
    """dR^2/dt together with its decomposition into nonnegative terms.

    ``value`` is computed from the vector field directly; the terms come from
    the closed-form cascade, so ``value == term_sum`` is a genuine identity.
    For the cubic flow the single term family is (kappa/2N) ||U_c U_i^+ - U_i U_c^+||^2,
    which equals (2/(kappa N)) sum ||dU_i/dt||^2.
    """
    if flow.kind == "polynomial":
        raise ValueError("r2dot decomposition needs kind cubic, monomial (m = 2^k) or dyadic")
    levels = flow.dyadic_levels
    U = _arr(E)
    N = U.shape[0]
    terms: list[R2Term] = []
    for k, kap in levels:
        comm, cascade = dyadic_blocks(U, k)
        w = kap / (2.0 * N)
        terms += [R2Term(k, 0, i, float(w * comm[i])) for i in range(N)]
        for p in range(1, k + 1):
            terms += [R2Term(k, p, i, float(w * 2.0**-p * cascade[p - 1, i])) for i in range(N)]
    return OrderRate(r2dot_direct(U, flow), terms)


def kappa_bounds(kappas, d: int) -> tuple[float, float]:
    """(kappa_minus, kappa_plus) = 2 kappa_1 -/+ sqrt(d) sum_{n>=2} kappa_n."""
    kappas = list(kappas)
    if not kappas:
        raise ValueError("kappas must be nonempty")
    tail = float(np.sqrt(d) * sum(kappas[1:]))
    return 2.0 * kappas[0] - tail, 2.0 * kappas[0] + tail
