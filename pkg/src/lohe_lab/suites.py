"""Seeded verification batteries behind ``lohe-lab verify``.

Each suite returns a list of :class:`~lohe_lab.verify.Verdict`. Everything is
seeded, so two invocations produce identical verdicts.
"""

from __future__ import annotations

import numpy as np

from . import dynamics as dyn
from . import verify as vf
from .ensemble import (
    order_parameter_sq,
    pairwise_distances_sq,
    perturbed_hamiltonians,
    random_hermitian,
    sample_haar,
    sample_perturbed,
    sample_with_diameter,
)
from .integrate import IntegratorConfig, integrate, split_propagate
from .linalg import frobenius_norm
from .linalg import hermitian_conjugate as dag

__all__ = ["SUITES", "run_suite", "kuramoto_phases"]

VDOT_PAIRS = [
    (dyn.ModelSpec.cubic(1.0), dyn.PotentialSpec.V1(1.0)),
    (dyn.ModelSpec.monomial(2, 1.0), dyn.PotentialSpec.V1(1.0)),
    (dyn.ModelSpec.monomial(2, 1.0), dyn.PotentialSpec.Vm(2, 1.0)),
    (dyn.ModelSpec.monomial(3, 1.0), dyn.PotentialSpec.Vm(3, 1.0)),
    (dyn.ModelSpec.monomial(4, 1.0), dyn.PotentialSpec.Vm(4, 1.0)),
    (dyn.ModelSpec.polynomial([1.0, 0.5, 0.25]), dyn.PotentialSpec.Vpoly([1.0, 0.5, 0.25])),
]
R2_FLOWS = [
    dyn.ModelSpec.cubic(1.0),
    dyn.ModelSpec.monomial(2, 1.0),
    dyn.ModelSpec.monomial(4, 1.0),
    dyn.ModelSpec.monomial(8, 1.0),
    dyn.ModelSpec.dyadic([1.0, 1.0]),
    dyn.ModelSpec.dyadic([1.0, 1.0, 1.0]),
]
POTENTIALS = [
    dyn.PotentialSpec.V1(1.0),
    dyn.PotentialSpec.Vm(2, 1.0),
    dyn.PotentialSpec.Vm(3, 1.0),
    dyn.PotentialSpec.Vm(4, 1.0),
    dyn.PotentialSpec.Vpoly([1.0, 0.5, 0.25]),
]
SHAPES = [(2, 5), (4, 20)]
SEEDS = range(5)


def _at_most(name: str, observed: float, bound: float) -> vf.Verdict:
    return vf.Verdict(name, bool(observed <= bound), float(observed), float(bound), float(bound - observed))


def _at_least(name: str, observed: float, bound: float) -> vf.Verdict:
    return vf.Verdict(name, bool(observed >= bound), float(observed), float(bound), float(observed - bound))


def _label(M: dyn.ModelSpec) -> str:
    if M.kind == "cubic":
        return "cubic"
    if M.kind == "monomial":
        return f"m={M.m}"
    return f"{M.kind}{list(M.kappas)}"


def _flow_for(P: dyn.PotentialSpec) -> dyn.ModelSpec:
    if P.kind == "V1":
        return dyn.ModelSpec.cubic(P.kappas[0])
    if P.kind == "Vm":
        return dyn.ModelSpec.monomial(P.m, P.kappas[0])
    return dyn.ModelSpec.polynomial(P.kappas)


def _rel(a: float, b: float) -> float:
    return abs(a - b) / abs(b)


# -- identities -------------------------------------------------------------------


def suite_identities() -> list[vf.Verdict]:
    out = []
    ensembles = [sample_haar(d, N, s) for d, N in SHAPES for s in SEEDS]
    # Haar draws can have rates near rounding level (R^(2m-1) with small R),
    # where a time difference has no relative accuracy; use spread-out but
    # partially aligned ensembles for the finite-difference comparisons
    fd_ensembles = [sample_perturbed(np.eye(d), 1.0, d, N, s) for d, N in SHAPES for s in SEEDS]
    still = sample_perturbed(np.eye(3), 0.0, 3, 6, 0)

    for M, P in VDOT_PAIRS:
        tag = f"{_label(M)},{P.kind}" + (f"{P.m}" if P.kind == "Vm" else "")
        chain = fd = 0.0
        for E, F in zip(ensembles, fd_ensembles):
            chain = max(chain, _rel(dyn.vdot_closed_form(E, M, P), dyn.vdot_chain_rule(E, M, P)))
            cf = dyn.vdot_closed_form(F, M, P)
            fd = max(fd, _rel(cf, vf.time_fd_rate(F, M, lambda U: dyn.potential(U, P))))
        out.append(_at_most(f"vdot_chain_rule[{tag}]", chain, 1e-10))
        out.append(_at_most(f"vdot_time_fd[{tag}]", fd, 1e-5))
        out.append(_at_most(f"vdot_equilibrium[{tag}]", abs(dyn.vdot_closed_form(still, M, P)), 1e-12))
        if (M.kind, P.kind) in (("cubic", "V1"), ("monomial", "Vm"), ("polynomial", "Vpoly")):
            out.append(_at_most(f"vdot_sign[{tag}]", max(dyn.vdot_closed_form(E, M, P) for E in ensembles), 0.0))

    for M in R2_FLOWS:
        tag = _label(M)
        split = fd = 0.0
        low = np.inf
        for E, F in zip(ensembles, fd_ensembles):
            rate = dyn.r2dot_closed_form(E, M)
            split = max(split, _rel(rate.term_sum, rate.value))
            low = min(low, min(t.value for t in rate.terms))
            value = dyn.r2dot_closed_form(F, M).value
            fd = max(fd, _rel(value, vf.time_fd_rate(F, M, order_parameter_sq)))
        out.append(_at_most(f"r2dot_term_sum[{tag}]", split, 1e-12))
        out.append(_at_least(f"r2dot_terms_nonneg[{tag}]", low, -1e-12))
        out.append(_at_most(f"r2dot_time_fd[{tag}]", fd, 1e-5))
        out.append(_at_most(f"r2dot_equilibrium[{tag}]", abs(dyn.r2dot_closed_form(still, M).value), 1e-12))

    # cubic: dR^2/dt = (2 / (kappa N)) sum ||dU_j/dt||^2
    worst = 0.0
    for E in ensembles:
        M = dyn.ModelSpec.cubic(1.0)
        speed = float(np.sum(frobenius_norm(dyn.rhs(E, M)) ** 2))
        worst = max(worst, _rel(dyn.r2dot_direct(E, M), 2.0 / E.size * speed))
    out.append(_at_most("r2dot_cubic_speed_form", worst, 1e-12))

    # order parameter vs pairwise distances, and the distance expansion
    ident = expand = 0.0
    for E in ensembles:
        U = E.members
        N, d = U.shape[0], U.shape[1]
        D = pairwise_distances_sq(U)
        ident = max(ident, abs(order_parameter_sq(E) - d + D.sum() / (2 * N * N)) / d)
        tr = np.einsum("iab,jab->ij", U, U.conj())
        expand = max(expand, float(np.max(np.abs(D - (2 * d - 2 * tr.real)))) / d)
    out.append(_at_most("order_parameter_distance_identity", ident, 1e-10))
    out.append(_at_most("distance_trace_expansion", expand, 1e-10))

    # tangency and unitary invariance of every right-hand side
    L = sample_haar(4, 1, 99).members[0]
    tang = inv = 0.0
    for M in [m for m, _ in VDOT_PAIRS] + R2_FLOWS[-2:]:
        for E in ensembles:
            if E.dim != 4:
                continue
            F = dyn.rhs(E, M)
            X = F @ dag(E.members)
            tang = max(tang, float(np.max(frobenius_norm(X + dag(X)))))
            inv = max(inv, float(np.max(np.abs(dyn.rhs(E.right_multiply(L), M) - F @ L))))
    out.append(_at_most("tangency", tang, 1e-12))
    out.append(_at_most("unitary_invariance", inv, 1e-12))
    return out


# -- gradients --------------------------------------------------------------------


def suite_gradients() -> list[vf.Verdict]:
    out = []
    for P in POTENTIALS:
        tag = P.kind + (f"{P.m}" if P.kind == "Vm" else "")
        M = _flow_for(P)
        fd = cons = 0.0
        for d, N in [(2, 5), (2, 20), (4, 5), (4, 20)]:
            for s in range(2):
                E = sample_haar(d, N, 100 + s)
                fd = max(fd, vf.fd_gradient_audit(E, P, h=1e-5, seed=s))
                cons = max(cons, float(np.max(np.abs(-dyn.riemannian_gradient(E, P) - dyn.rhs(E, M)))))
        out.append(_at_most(f"fd_gradient[{tag}]", fd, 1e-6))
        out.append(_at_most(f"gradient_flow_consistency[{tag}]", cons, 1e-13))
        still = sample_perturbed(np.eye(2), 0.0, 2, 4, 0)
        abs_err, _ = vf.fd_gradient_errors(still, P, h=1e-5)
        out.append(_at_most(f"fd_gradient_equilibrium_abs[{tag}]", float(abs_err.max()), 1e-10))
    return out


# -- envelopes --------------------------------------------------------------------


def _scalar_riccati(X0: float, km: float, k1: float, t_final: float, dt: float = 1e-4) -> float:
    """RK4 for X' = -km X + k1 X^2."""
    f = lambda x: -km * x + k1 * x * x  # noqa: E731
    x = X0
    for _ in range(round(t_final / dt)):
        a = f(x)
        b = f(x + 0.5 * dt * a)
        c = f(x + 0.5 * dt * b)
        e = f(x + dt * c)
        x += dt / 6 * (a + 2 * b + 2 * c + e)
    return x


def suite_envelopes() -> list[vf.Verdict]:
    out = []
    rng = np.random.Generator(np.random.PCG64(2024))
    worst = np.inf
    for _ in range(200):
        k1 = rng.uniform(0.1, 3.0)
        km = rng.uniform(0.1, 4.0)
        kp = km + rng.uniform(0.0, 4.0)
        P = vf.EnvelopeParams(rng.uniform(0, 0.99) * km / k1, km, kp, k1)
        lo, hi = vf.riccati_envelope(P, rng.uniform(0, 20, size=5))
        worst = min(worst, float(np.min(hi - lo)))
    out.append(_at_least("riccati_ordering", worst, 0.0))

    P = vf.EnvelopeParams(0.5, 1.0, 1.0, 1e-9)
    t = np.linspace(0, 5, 11)
    _lo, hi = vf.riccati_envelope(P, t)
    out.append(_at_most("riccati_linear_limit", float(np.max(np.abs(hi - 0.5 * np.exp(-t)))), 1e-6))

    P = vf.EnvelopeParams(0.5, 1.0, 3.0, 1.0)
    _lo, hi = vf.riccati_envelope(P, 2.0)
    out.append(_at_least("riccati_dominates_scalar_ode", hi - _scalar_riccati(0.5, 1.0, 1.0, 2.0), -1e-12))

    cfg = IntegratorConfig(dt=1e-2, t_final=10.0, record_every=10)
    for kappas in ([1.0], [1.0, 0.1]):
        E = sample_with_diameter(np.eye(2), 0.1, 2, 5, 0)
        traj = integrate(E, dyn.ModelSpec.polynomial(kappas), cfg)
        v = vf.check_diameter_decay(traj, vf.EnvelopeParams.for_trajectory(traj))
        out.append(vf.Verdict(f"diameter_decay[kappas={kappas}]", v.passed, v.observed, v.bound, v.margin))

    for N in (2, 5, 10):
        E = sample_with_diameter(np.eye(2), 0.25, 2, N, 0)
        traj = integrate(E, dyn.ModelSpec.cubic(1.0), cfg)
        v = vf.check_cubic_envelope(traj, 1.0)
        out.append(vf.Verdict(f"cubic_envelope[N={N}]", v.passed, v.observed, v.bound, v.margin))
    return out


# -- theorems ---------------------------------------------------------------------


def kuramoto_phases(theta0: np.ndarray, kappa: float, m: int, t_final: float, dt: float) -> np.ndarray:
    """RK4 for theta_j' = kappa R^(2m-1) sin(phi - theta_j), R e^{i phi} = mean e^{i theta}."""

    def f(th):
        z = np.mean(np.exp(1j * th))
        R, phi = np.abs(z), np.angle(z)
        return kappa * R ** (2 * m - 1) * np.sin(phi - th)

    th = np.array(theta0, dtype=float)
    for _ in range(round(t_final / dt)):
        a = f(th)
        b = f(th + 0.5 * dt * a)
        c = f(th + 0.5 * dt * b)
        e = f(th + dt * c)
        th = th + dt / 6 * (a + 2 * b + 2 * c + e)
    return th


def _phase_error(m: int, seed: int) -> float:
    E = sample_haar(1, 6, seed)
    theta0 = np.angle(E.members[:, 0, 0])
    cfg = IntegratorConfig(method="rk4_project", dt=1e-3, t_final=1.0, record_every=1000, identities=False)
    M = dyn.ModelSpec.cubic(1.0) if m == 1 else dyn.ModelSpec.monomial(m, 1.0)
    final = np.angle(integrate(E, M, cfg).final.members[:, 0, 0])
    ref = kuramoto_phases(theta0, 1.0, m, 1.0, 1e-3)
    return float(np.max(np.abs(np.angle(np.exp(1j * (final - ref))))))


def suite_theorems() -> list[vf.Verdict]:
    out = []
    flows = [
        dyn.ModelSpec.cubic(1.0),
        dyn.ModelSpec.monomial(3, 1.0),
        dyn.ModelSpec.polynomial([1.0, 0.5, 0.25]),
        dyn.ModelSpec.dyadic([1.0, 1.0]),
    ]
    cfg = IntegratorConfig(dt=1e-2, t_final=20.0, record_every=100, identities=False)
    for d in (2, 4):
        worst = 0.0
        for M in flows:
            traj = integrate(sample_haar(d, 5, 7), M, cfg)
            worst = max(worst, float(traj.unitarity_defect.max()))
        out.append(_at_most(f"conservation[d={d}]", worst, 1e-9 * np.sqrt(d)))

    long = IntegratorConfig(dt=1e-2, t_final=50.0, record_every=10)
    traj = integrate(sample_haar(2, 10, 0), dyn.ModelSpec.cubic(1.0), long)
    out.append(vf.check_equilibration(traj))
    out.append(_at_least("order_parameter_nondecreasing[cubic]", float(np.min(np.diff(traj.R2))), -1e-9))

    hundred = IntegratorConfig(dt=1e-2, t_final=100.0, record_every=10)
    for M, N in ((dyn.ModelSpec.monomial(2, 1.0), 5), (dyn.ModelSpec.dyadic([1.0, 1.0]), 10)):
        traj = integrate(sample_haar(2, N, 0), M, hundred)
        tag = _label(M)
        out.append(_at_most(f"potential_nonincreasing[{tag}]", float(np.max(np.diff(traj.V))), 1e-9))
        for v in vf.check_commutator_limits(traj, M):
            out.append(vf.Verdict(f"{v.name}[{tag}]", v.passed, v.observed, v.bound, v.margin))

    H = random_hermitian(2, 3)
    E = sample_haar(2, 5, 3)
    M = dyn.ModelSpec.monomial(2, 1.0, hamiltonians=H)
    fine = IntegratorConfig(method="rk4_project", dt=1e-3, t_final=1.0, record_every=1000, identities=False)
    direct = integrate(E, M, fine).final.members
    split = split_propagate(E, H, M, fine).members
    out.append(_at_most("solution_splitting", float(np.max(frobenius_norm(direct - split))), 1e-6))

    sync = IntegratorConfig(dt=1e-2, t_final=10.0, record_every=10, identities=False)
    H0 = random_hermitian(2, 7)
    tails = []
    for k1 in (4.0, 8.0, 16.0):
        HS = perturbed_hamiltonians(H0, 0.05, 5, 1)
        traj = integrate(sample_perturbed(np.eye(2), 0.05, 2, 5, 2), dyn.ModelSpec.polynomial([k1], HS), sync)
        v = vf.check_practical_sync(traj, vf.EnvelopeParams.for_trajectory(traj))
        out.append(vf.Verdict(f"practical_sync[kappa1={k1:g}]", v.passed, v.observed, v.bound, v.margin))
        tails.append(v.observed)
    out.append(_at_most("practical_sync_tail_shrinks", float(np.max(np.diff(tails))), 0.0))

    for m in (1, 2):
        out.append(_at_most(f"kuramoto_reduction[m={m}]", max(_phase_error(m, s) for s in range(3)), 1e-8))
    return out


SUITES = {
    "identities": suite_identities,
    "gradients": suite_gradients,
    "envelopes": suite_envelopes,
    "theorems": suite_theorems,
}


def run_suite(name: str) -> list[vf.Verdict]:
    """Verdicts of one suite, or of every suite in order for ``all``."""
    if name == "all":
        return [v for key in SUITES for v in SUITES[key]()]
    if name not in SUITES:
        raise KeyError(name)
    return SUITES[name]()
