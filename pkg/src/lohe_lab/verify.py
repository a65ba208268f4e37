"""Decay envelopes, identity audits and pass/fail verdicts for recorded runs."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import dynamics as dyn
from .ensemble import Ensemble, _unit_skew_directions, hamiltonian_diameter, make_rng
from .integrate import TrajectoryRecord
from .linalg import exp_skew, frobenius_norm
from .linalg import hermitian_conjugate as dag

__all__ = [
    "PreconditionError",
    "EnvelopeParams",
    "Verdict",
    "riccati_envelope",
    "cubic_envelope",
    "sync_roots",
    "check_diameter_decay",
    "check_cubic_envelope",
    "check_practical_sync",
    "check_equilibration",
    "check_commutator_limits",
    "fd_gradient_errors",
    "fd_gradient_audit",
    "time_fd_rate",
]

DECAY_SLACK = 1e-3
SYNC_SLACK = 1e-2
# D(U) is computed from differences of unit-size entries, so it never drops
# below ~1e-16; this floor keeps the D(H) = 0 bound meaningful
SYNC_ATOL = 1e-10
TAIL_FRACTION = 0.2
LIMIT_THRESHOLD = 1e-6
MONOTONE_SLACK = 1e-9
NEGTERM_TOL = 1e-12


class PreconditionError(ValueError):
    """The hypotheses of the bound being checked do not hold."""


@dataclass(frozen=True)
class EnvelopeParams:
    D0_sq: float
    kappa_minus: float
    kappa_plus: float
    kappa1: float
    DH: float = 0.0

    @classmethod
    def from_kappas(cls, kappas, d: int, D0_sq: float, DH: float = 0.0) -> EnvelopeParams:
        km, kp = dyn.kappa_bounds(kappas, d)
        return cls(float(D0_sq), km, kp, float(list(kappas)[0]), float(DH))

    @classmethod
    def for_trajectory(cls, traj: TrajectoryRecord) -> EnvelopeParams:
        """Parameters implied by the run's model and its first recorded row."""
        return cls.from_kappas(
            traj.model.coefficients,
            traj.initial.dim,
            float(traj.D2[0]),
            hamiltonian_diameter(traj.model.hamiltonians),
        )

    def require_decay_hypotheses(self) -> None:
        if self.D0_sq < 0 or self.DH < 0:
            raise PreconditionError("D0_sq and DH must be nonnegative")
        if not self.kappa_minus > 0:
            raise PreconditionError(f"kappa_minus = {self.kappa_minus:g} is not positive")
        if self.kappa1 < 0:
            raise PreconditionError("kappa1 must be nonnegative")
        if self.kappa_plus < self.kappa_minus:
            raise PreconditionError("kappa_plus < kappa_minus: the envelopes would cross")
        if self.kappa1 * self.D0_sq >= self.kappa_minus:
            raise PreconditionError(
                f"D0_sq = {self.D0_sq:g} is not below kappa_minus/kappa1 = "
                f"{self.kappa_minus / self.kappa1:g}"
            )


@dataclass(frozen=True)
class Verdict:
    """``margin`` is positive when the observation is inside the bound."""

    name: str
    passed: bool
    observed: float
    bound: float
    margin: float

    def to_dict(self) -> dict:
        return asdict(self)


# -- envelopes --------------------------------------------------------------------


def riccati_envelope(P: EnvelopeParams, t):
    """Lower/upper solutions of -k+ X - k1 X^2 <= X' <= -k- X + k1 X^2.

    Written without dividing by kappa1 so that kappa1 -> 0 degenerates to the
    linear bounds X(0) exp(-k t). Accepts a scalar or an array of times.
    """
    P.require_decay_hypotheses()
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise PreconditionError("t must be nonnegative")
    X0, km, kp, k1 = P.D0_sq, P.kappa_minus, P.kappa_plus, P.kappa1
    with np.errstate(over="ignore"):
        upper = km * X0 / (np.exp(km * t) * (km - k1 * X0) + k1 * X0)
        lower = kp * X0 / (np.exp(kp * t) * (kp + k1 * X0) - k1 * X0)
    if t.ndim == 0:
        return float(lower), float(upper)
    return lower, upper


def cubic_envelope(D0: float, kappa: float, t):
    """Two-sided bound on D(U(t)) for the cubic flow started at D(U(0)) = D0 < 1."""
    if not 0 <= D0 < 1:
        raise PreconditionError(f"need 0 <= D0 < 1, got {D0}")
    if not kappa > 0:
        raise PreconditionError("kappa must be positive")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise PreconditionError("t must be nonnegative")
    with np.errstate(over="ignore"):
        g = np.exp(kappa * t)
        lower = D0 / ((1 + D0) * g - D0)
        upper = D0 / ((1 - D0) * g + D0)
    if t.ndim == 0:
        return float(lower), float(upper)
    return lower, upper


def sync_roots(P: EnvelopeParams) -> tuple[float, float, float]:
    """(zeta, eta1, eta2) for f(x) = D(H) - (k-/2) x + (k1/2) x^3 on x >= 0.

    zeta is the minimizer of f; eta1 < zeta < eta2 are its positive roots.
    """
    km, k1, DH = P.kappa_minus, P.kappa1, P.DH
    if not km > 0 or not k1 > 0:
        raise PreconditionError("practical synchronization needs kappa_minus > 0 and kappa1 > 0")
    zeta = float(np.sqrt(km / (3 * k1)))
    fmin = DH - zeta * km / 3
    if fmin >= 0:
        raise PreconditionError(
            f"D(H) = {DH:g} is not below (1/3) sqrt(kappa_-^3 / (3 kappa_1)) = {zeta * km / 3:g}"
        )
    roots = np.roots([k1 / 2, 0.0, -km / 2, DH])
    pos = sorted(float(r.real) for r in roots if abs(r.imag) < 1e-12 and r.real >= 0)
    if DH == 0:
        pos = [0.0] + [r for r in pos if r > 0]
    return zeta, pos[0], pos[-1]


# -- trajectory checks ------------------------------------------------------------


def _require_matching(traj: TrajectoryRecord, P: EnvelopeParams) -> None:
    implied = EnvelopeParams.for_trajectory(traj)
    if not np.isclose(implied.D0_sq, P.D0_sq, rtol=1e-9, atol=1e-15):
        raise PreconditionError(
            f"trajectory starts at D2 = {implied.D0_sq:.17g}, params say {P.D0_sq:.17g}"
        )
    for name in ("kappa_minus", "kappa_plus", "kappa1"):
        if not np.isclose(getattr(implied, name), getattr(P, name), rtol=1e-12, atol=0):
            raise PreconditionError(f"{name} does not match the trajectory's couplings")


def check_diameter_decay(traj: TrajectoryRecord, P: EnvelopeParams) -> Verdict:
    """Every recorded D(U)^2 lies within the Riccati envelopes (1e-3 relative slack)."""
    if not traj.model.homogeneous:
        raise PreconditionError("diameter decay needs a homogeneous run")
    P.require_decay_hypotheses()
    _require_matching(traj, P)
    lower, upper = riccati_envelope(P, traj.t)
    X = traj.D2
    above = upper * (1 + DECAY_SLACK) - X
    below = X - lower * (1 - DECAY_SLACK)
    gap = np.minimum(above, below)
    i = int(np.argmin(gap))
    bound = upper[i] if above[i] <= below[i] else lower[i]
    return Verdict("diameter_decay", bool(gap[i] >= 0), float(X[i]), float(bound), float(gap[i]))


def check_cubic_envelope(traj: TrajectoryRecord, kappa: float) -> Verdict:
    """D(U(t)) inside the cubic two-sided envelope (1e-3 relative slack)."""
    D = np.sqrt(traj.D2)
    lower, upper = cubic_envelope(float(D[0]), kappa, traj.t)
    above = upper * (1 + DECAY_SLACK) - D
    below = D - lower * (1 - DECAY_SLACK)
    gap = np.minimum(above, below)
    i = int(np.argmin(gap))
    bound = upper[i] if above[i] <= below[i] else lower[i]
    return Verdict("cubic_envelope", bool(gap[i] >= 0), float(D[i]), float(bound), float(gap[i]))


def check_practical_sync(traj: TrajectoryRecord, P: EnvelopeParams) -> Verdict:
    """Tail max of D(U) against rho = 2 D(H) / kappa1.

    The tail is the last 20% of recorded rows. The hypothesis on the initial
    data is D(U_in) < eta2, the larger positive root of
    D(H) - (k-/2) x + (k1/2) x^3.
    """
    if traj.model.homogeneous:
        raise PreconditionError("practical synchronization needs per-member hamiltonians")
    observed_DH = hamiltonian_diameter(traj.model.hamiltonians)
    if not np.isclose(observed_DH, P.DH, rtol=1e-9, atol=1e-15):
        raise PreconditionError(f"run has D(H) = {observed_DH:.17g}, params say {P.DH:.17g}")
    _zeta, _eta1, eta2 = sync_roots(P)
    D0 = float(np.sqrt(traj.D2[0]))
    if D0 >= eta2:
        raise PreconditionError(f"D(U_in) = {D0:g} is not below eta2 = {eta2:g}")
    n = len(traj)
    start = min(n - 1, int(np.floor((1 - TAIL_FRACTION) * n)))
    tail = float(np.sqrt(np.max(traj.D2[start:])))
    rho = 2 * P.DH / P.kappa1
    bound = rho * (1 + SYNC_SLACK) + SYNC_ATOL
    return Verdict("practical_sync", tail <= bound, tail, rho, bound - tail)


def check_equilibration(traj: TrajectoryRecord) -> Verdict:
    """Final max ||dU_j/dt|| below 1e-6 and non-increasing over the last quarter."""
    speed = traj.max_udot
    final = float(speed[-1])
    q = speed[(3 * len(speed)) // 4 :]
    rise = float(np.max(np.diff(q))) if len(q) > 1 else 0.0
    passed = final < LIMIT_THRESHOLD and rise <= MONOTONE_SLACK
    margin = min(LIMIT_THRESHOLD - final, MONOTONE_SLACK - rise)
    return Verdict("equilibration", bool(passed), final, LIMIT_THRESHOLD, margin)


def _limit_verdict(name: str, value: float) -> Verdict:
    return Verdict(name, bool(value < LIMIT_THRESHOLD), value, LIMIT_THRESHOLD, LIMIT_THRESHOLD - value)


def check_commutator_limits(traj: TrajectoryRecord, M: dyn.ModelSpec) -> list[Verdict]:
    """Asymptotic commutator quantities of the order-2^k levels at the final record.

    One verdict per level k with nonzero coupling (the commutator norm) and per
    cascade index p = 1..k, each the max over members. For m = 2 the squared
    quantity ||A U_c U_j^+ - U_j U_c^+ A||^2 is added, and if the run recorded
    the term-list scan, a nonnegativity verdict over all records.
    """
    if M.kind == "polynomial" or (M.kind == "monomial" and not dyn._is_power_of_two(M.m)):
        raise PreconditionError("commutator limits need a cubic, dyadic or m = 2^k monomial flow")
    U = traj.final.members
    out = []
    for k, kap in M.dyadic_levels:
        if kap == 0:
            continue
        comm, cascade = dyn.dyadic_blocks(U, k)
        out.append(_limit_verdict(f"commutator[k={k}]", float(np.sqrt(comm.max()))))
        for p in range(1, k + 1):
            out.append(_limit_verdict(f"cascade[k={k},p={p}]", float(np.sqrt(cascade[p - 1].max()))))
    if M.kind == "monomial" and M.m == 2:
        Uc = U.mean(axis=0)
        A = Uc @ dag(Uc)
        X = A @ Uc @ dag(U) - U @ dag(Uc) @ A
        out.append(_limit_verdict("quartic_commutator_sq", float(np.max(frobenius_norm(X) ** 2))))
    neg = traj.residuals.get("r2dot_negterm")
    if neg is not None:
        worst = float(np.max(neg))
        out.append(Verdict("term_nonnegativity", worst <= NEGTERM_TOL, -worst, -NEGTERM_TOL, NEGTERM_TOL - worst))
    return out


# -- finite-difference audits -----------------------------------------------------


def fd_gradient_errors(E, P: dyn.PotentialSpec, h: float = 1e-5, seed: int = 0, directions: int = 8):
    """Absolute and relative errors of central differences against Re<grad_j, S U_j>.

    For every member j and ``directions`` random unit skew-hermitian S, the
    potential is evaluated with U_j replaced by exp(+-hS) U_j. The relative
    error divides by ||grad_j||_F ||S U_j||_F (plus 1e-12 so that a vanishing
    gradient does not divide by zero). Returns two ``(N, directions)`` arrays.
    """
    if not 1e-8 <= h <= 1e-3:
        raise ValueError("h must lie in [1e-8, 1e-3]")
    U = E.members if isinstance(E, Ensemble) else np.asarray(E)
    N, d = U.shape[0], U.shape[1]
    grad = dyn.riemannian_gradient(U, P)
    S = _unit_skew_directions(make_rng(seed), d, N * directions).reshape(N, directions, d, d)
    Ep = exp_skew(h * S, check=False)
    Em = exp_skew(-h * S, check=False)
    abs_err = np.empty((N, directions))
    rel_err = np.empty((N, directions))
    for j in range(N):
        gnorm = frobenius_norm(grad[j])
        for a in range(directions):
            V = U.copy()
            V[j] = Ep[j, a] @ U[j]
            vp = dyn.potential(V, P)
            V[j] = Em[j, a] @ U[j]
            vm = dyn.potential(V, P)
            fd = (vp - vm) / (2 * h)
            SU = S[j, a] @ U[j]
            exact = float(np.real(np.vdot(grad[j], SU)))
            abs_err[j, a] = abs(fd - exact)
            rel_err[j, a] = abs_err[j, a] / (gnorm * frobenius_norm(SU) + 1e-12)
    return abs_err, rel_err


def fd_gradient_audit(E, P: dyn.PotentialSpec, h: float = 1e-5, seed: int = 0) -> float:
    """Worst relative error of :func:`fd_gradient_errors` over members and directions."""
    _abs, rel = fd_gradient_errors(E, P, h, seed)
    return float(rel.max())


def _rk4_shift(U: np.ndarray, model: dyn.ModelSpec, h: float) -> np.ndarray:
    f = dyn._full_rhs
    k1 = f(U, model)
    k2 = f(U + 0.5 * h * k1, model)
    k3 = f(U + 0.5 * h * k2, model)
    k4 = f(U + h * k3, model)
    return U + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def time_fd_rate(E, flow: dyn.ModelSpec, quantity, h: float = 1e-6) -> float:
    """Centered difference in time of ``quantity(U)`` along ``flow``.

    The states at t = +-h come from one RK4 step each, whose O(h^5) error is
    far below the O(h^2) truncation of the difference itself.
    """
    U = E.members if isinstance(E, Ensemble) else np.asarray(E)
    return (quantity(_rk4_shift(U, flow, h)) - quantity(_rk4_shift(U, flow, -h))) / (2 * h)
