"""Fixed-step integrators on U(d)^N and trajectory recording."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import dynamics as dyn
from .ensemble import Ensemble, diameter_sq, order_parameter_sq
from .linalg import exp_skew, frobenius_norm, polar_unitary, skew_projection, unitarity_residual
from .linalg import hermitian_conjugate as dag

__all__ = [
    "METHODS",
    "IntegratorConfig",
    "IntegrationError",
    "TrajectoryRecord",
    "step",
    "integrate",
    "split_propagate",
]

METHODS = ("rk4_project", "lie_euler", "lie_midpoint")

# consecutive near-zero records required for the optional early exit
_EARLY_EXIT_RECORDS = 10
_EARLY_EXIT_SPEED = 1e-12


class IntegrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "lie_midpoint"
    dt: float = 1e-2
    t_final: float = 1.0
    record_every: int = 1
    retract_every: int = 1
    unitarity_tol: float = 1e-8
    early_exit: bool = False
    identities: bool = True

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")
        if not self.dt > 0 or not self.t_final > 0:
            raise ValueError("dt and t_final must be positive")
        if self.record_every < 1 or self.retract_every < 1:
            raise ValueError("record_every and retract_every must be >= 1")
        if not self.unitarity_tol > 0:
            raise ValueError("unitarity_tol must be positive")
        n = round(self.t_final / self.dt)
        if n < 1 or abs(n * self.dt - self.t_final) > 1e-9 * self.t_final:
            raise ValueError(f"t_final={self.t_final} is not a whole number of steps dt={self.dt}")

    @property
    def n_steps(self) -> int:
        return round(self.t_final / self.dt)


@dataclass
class TrajectoryRecord:
    """Diagnostic time series of one run plus the final snapshot."""

    model: dyn.ModelSpec
    initial: Ensemble
    final: Ensemble
    t: np.ndarray
    R2: np.ndarray
    V: np.ndarray
    D2: np.ndarray
    unitarity_defect: np.ndarray
    max_udot: np.ndarray
    residuals: dict[str, np.ndarray] = field(default_factory=dict)

    COLUMNS = ("t", "R2", "V", "D2", "unitarity_defect", "max_udot")

    def __len__(self) -> int:
        return len(self.t)

    def columns(self) -> dict[str, np.ndarray]:
        cols = {name: getattr(self, name) for name in self.COLUMNS}
        cols.update({f"res_{k}": v for k, v in self.residuals.items()})
        return cols


# -- steppers ---------------------------------------------------------------------


def _omega(U: np.ndarray, model: dyn.ModelSpec) -> np.ndarray:
    """Right-trivialized field: skew part of C_j U_j^dagger minus i H_j."""
    Om = skew_projection(dyn._coupling(U, model.coefficients) @ dag(U))
    if model.hamiltonians is not None:
        Om = Om - 1j * model.hamiltonians.stack(U.shape[0])
    return Om


def _step_array(U: np.ndarray, model: dyn.ModelSpec, cfg: IntegratorConfig, index: int) -> np.ndarray:
    dt = cfg.dt
    if cfg.method == "lie_euler":
        return exp_skew(dt * _omega(U, model), check=False) @ U
    if cfg.method == "lie_midpoint":
        Uh = exp_skew(0.5 * dt * _omega(U, model), check=False) @ U
        return exp_skew(dt * _omega(Uh, model), check=False) @ U
    f = dyn._full_rhs
    k1 = f(U, model)
    k2 = f(U + 0.5 * dt * k1, model)
    k3 = f(U + 0.5 * dt * k2, model)
    k4 = f(U + dt * k3, model)
    U = U + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if (index + 1) % cfg.retract_every == 0:
        U = polar_unitary(U)
    return U


def _advance(U: np.ndarray, model, cfg, index: int) -> np.ndarray:
    U = _step_array(U, model, cfg, index)
    defect = float(np.max(unitarity_residual(U)))
    if not np.isfinite(defect) or defect > cfg.unitarity_tol:
        raise IntegrationError(
            f"unitarity defect {defect:.3e} exceeds {cfg.unitarity_tol:.3e} after step {index}"
        )
    return U


def step(E: Ensemble, M: dyn.ModelSpec, cfg: IntegratorConfig, index: int = 0) -> Ensemble:
    """Advance the ensemble by one step of ``cfg.method``.

    ``index`` is the global step number; it decides when ``rk4_project``
    retracts and is quoted in error messages.
    """
    if float(np.max(unitarity_residual(E.members))) > cfg.unitarity_tol:
        raise IntegrationError("initial ensemble exceeds the unitarity tolerance")
    return Ensemble(_advance(E.members, M, cfg, index), tol=max(E.tol, cfg.unitarity_tol))


# -- diagnostics ------------------------------------------------------------------


def _rel(a: float, b: float) -> float:
    return abs(a - b) / (1.0 + abs(b))


def _diagnostics(U: np.ndarray, model: dyn.ModelSpec, pot: dyn.PotentialSpec, identities: bool):
    speeds = frobenius_norm(dyn._full_rhs(U, model))
    row = {
        "R2": order_parameter_sq(U),
        "V": dyn.potential(U, pot),
        "D2": diameter_sq(U),
        "unitarity_defect": float(np.max(unitarity_residual(U))),
        "max_udot": float(np.max(speeds)),
    }
    res = {}
    if identities and model.homogeneous:
        res["vdot"] = _rel(dyn.vdot_closed_form(U, model, pot), dyn.vdot_chain_rule(U, model, pot))
        if model.kind in ("cubic", "dyadic") or (
            model.kind == "monomial" and dyn._is_power_of_two(model.m)
        ):
            rate = dyn.r2dot_closed_form(U, model)
            res["r2dot"] = _rel(rate.term_sum, rate.value)
            res["r2dot_negterm"] = max(0.0, -min(t.value for t in rate.terms))
    return row, res


def integrate(E0: Ensemble, M: dyn.ModelSpec, cfg: IntegratorConfig) -> TrajectoryRecord:
    """Run to ``cfg.t_final``, recording every ``cfg.record_every`` steps.

    Rows are taken at step indices 0, r, 2r, ... and at the last step. The time
    stamp of step k is ``k * dt``.
    """
    if M.hamiltonians is not None and M.hamiltonians.dim != E0.dim:
        raise ValueError("hamiltonian dimension does not match the ensemble")
    pot = M.natural_potential()
    n = cfg.n_steps
    U = E0.members
    if float(np.max(unitarity_residual(U))) > cfg.unitarity_tol:
        raise IntegrationError("initial ensemble exceeds the unitarity tolerance")

    rows: dict[str, list] = {name: [] for name in TrajectoryRecord.COLUMNS}
    residuals: dict[str, list] = {}
    quiet = 0

    def record(k: int) -> float:
        row, res = _diagnostics(U, M, pot, cfg.identities)
        row["t"] = k * cfg.dt
        for key, val in row.items():
            if not np.isfinite(val):
                raise IntegrationError(f"non-finite diagnostic {key} at step {k}")
            rows[key].append(val)
        for key, val in res.items():
            residuals.setdefault(key, []).append(val)
        return row["max_udot"]

    record(0)
    for k in range(n):
        U = _advance(U, M, cfg, k)
        done = k + 1
        if done % cfg.record_every == 0 or done == n:
            speed = record(done)
            quiet = quiet + 1 if speed < _EARLY_EXIT_SPEED else 0
            if cfg.early_exit and quiet >= _EARLY_EXIT_RECORDS:
                break

    return TrajectoryRecord(
        model=M,
        initial=E0,
        final=Ensemble(U, tol=max(E0.tol, cfg.unitarity_tol)),
        residuals={k: np.array(v) for k, v in residuals.items()},
        **{k: np.array(v) for k, v in rows.items()},
    )


def split_propagate(E0: Ensemble, H, M: dyn.ModelSpec, cfg: IntegratorConfig) -> Ensemble:
    """Integrate the H = 0 flow, then rotate every member by exp(-i H t_final)."""
    if M.hamiltonians is not None and not M.hamiltonians.shared:
        raise ValueError("solution splitting needs a single shared hamiltonian")
    H = np.asarray(H, dtype=np.complex128)
    if np.linalg.norm(H - dag(H)) > 1e-10 * max(1.0, np.linalg.norm(H)):
        raise ValueError("H must be hermitian")
    free = replace(cfg, identities=False, early_exit=False)
    L = integrate(E0, M.without_hamiltonian(), free).final.members
    t = cfg.n_steps * cfg.dt
    R = exp_skew(-1j * t * H, check=False)
    return Ensemble(R @ L, tol=E0.tol)
