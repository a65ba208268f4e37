"""Acceptance criteria at their stated tolerances, one PASS/FAIL line each.

Criteria 5 (m = 3, 4 at t = 100) and 6 (kappas = [1, 0.1]) are expected to
fail; see the README for the analysis.
"""

from __future__ import annotations

import time

import numpy as np
import pytest

from lohe_lab import cli
from lohe_lab import dynamics as dyn
from lohe_lab import verify as vf
from lohe_lab.ensemble import (
    order_parameter_sq,
    perturbed_hamiltonians,
    random_hermitian,
    sample_haar,
    sample_perturbed,
    sample_with_diameter,
)
from lohe_lab.integrate import IntegratorConfig, integrate, split_propagate
from lohe_lab.linalg import frobenius_norm
from lohe_lab.suites import kuramoto_phases


@pytest.fixture
def report(capsys, request):
    def emit(criterion: int, passed: bool, detail: str, seconds: float | None = None, budget: float | None = None):
        timing = ""
        if seconds is not None:
            timing = f" [{seconds:.1f}s / {budget:g}s]"
            passed = passed and seconds <= budget
        line = f"criterion {criterion:>2} {'PASS' if passed else 'FAIL'}: {request.node.name}: {detail}{timing}"
        with capsys.disabled():
            print("\n" + line)
        assert passed, line

    return emit


def _flows(H=None):
    return {
        "cubic": dyn.ModelSpec.cubic(1.0, H),
        "monomial3": dyn.ModelSpec.monomial(3, 1.0, H),
        "polynomial": dyn.ModelSpec.polynomial([1.0, 0.5, 0.25], H),
        "dyadic": dyn.ModelSpec.dyadic([1.0, 1.0], H),
    }


# 1. conservation


@pytest.mark.parametrize("d", [2, 4, 8])
@pytest.mark.parametrize("N", [5, 20])
def test_c1_conservation(report, d, N):
    cfg = IntegratorConfig(method="lie_midpoint", dt=1e-2, t_final=20.0, record_every=1, identities=False)
    E = sample_haar(d, N, 100 * d + N)
    HS = perturbed_hamiltonians(random_hermitian(d, 1), 0.1, N, 2)
    worst, slowest = 0.0, 0.0
    for M in list(_flows().values()) + [_flows(HS)["polynomial"]]:
        t0 = time.perf_counter()
        traj = integrate(E, M, cfg)
        slowest = max(slowest, time.perf_counter() - t0)
        worst = max(worst, float(traj.unitarity_defect.max()))
    bound = 1e-9 * np.sqrt(d)
    report(1, worst <= bound, f"max defect {worst:.3e} <= {bound:.3e}", slowest, 10)


# 2. gradient-flow equivalence


def test_c2_gradient_flow(report):
    t0 = time.perf_counter()
    pairs = [(dyn.PotentialSpec.Vm(m, 1.0), dyn.ModelSpec.monomial(m, 1.0)) for m in (1, 2, 3, 4)]
    pairs.append((dyn.PotentialSpec.Vpoly([1.0, 0.5, 0.25]), dyn.ModelSpec.polynomial([1.0, 0.5, 0.25])))
    worst = 0.0
    fd = 0.0
    for P, M in pairs:
        for s in range(100):
            E = sample_haar(3, 6, s)
            worst = max(worst, float(np.max(np.abs(-dyn.riemannian_gradient(E, P) - dyn.rhs(E, M)))))
        for s in range(5):
            fd = max(fd, vf.fd_gradient_audit(sample_haar(3, 6, s), P, h=1e-5))
    ok = worst <= 1e-13 and fd <= 1e-6
    report(2, ok, f"entrywise {worst:.2e} <= 1e-13, fd audit {fd:.2e} <= 1e-6", time.perf_counter() - t0, 30)


# 3. closed-form derivative identities

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


def _fd_ensembles():
    return [sample_perturbed(sample_haar(3, 1, s).members[0], 1.0, 3, 6, s) for s in range(20)]


def test_c3_derivative_identities(report):
    t0 = time.perf_counter()
    ens = _fd_ensembles()
    worst = 0.0
    for M, P in VDOT_PAIRS:
        for E in ens:
            cf = dyn.vdot_closed_form(E, M, P)
            fd = vf.time_fd_rate(E, M, lambda U, P=P: dyn.potential(U, P))
            worst = max(worst, abs(fd - cf) / abs(cf))
    for M in R2_FLOWS:
        for E in ens:
            cf = dyn.r2dot_closed_form(E, M).value
            fd = vf.time_fd_rate(E, M, order_parameter_sq)
            worst = max(worst, abs(fd - cf) / abs(cf))
    report(3, worst <= 1e-5, f"max relative error {worst:.2e} <= 1e-5", time.perf_counter() - t0, 30)


# 4. dyadic decomposition


def test_c4_dyadic_decomposition(report):
    t0 = time.perf_counter()
    flows = [dyn.ModelSpec.monomial(2**k, 1.0) for k in (1, 2, 3)]
    flows += [dyn.ModelSpec.dyadic([1.0, 1.0]), dyn.ModelSpec.dyadic([1.0, 1.0, 1.0])]
    neg, gap = 0.0, 0.0
    for M in flows:
        for s in range(20):
            rate = dyn.r2dot_closed_form(sample_haar(3, 6, s), M)
            neg = min(neg, min(t.value for t in rate.terms))
            gap = max(gap, abs(rate.term_sum - rate.value) / abs(rate.value))
    ok = neg >= -1e-12 and gap <= 1e-12
    report(4, ok, f"min term {neg:.2e} >= -1e-12, sum gap {gap:.2e} <= 1e-12", time.perf_counter() - t0, 10)


# 5. monotonicity and limits

C5_FLOWS = {
    "m1": dyn.ModelSpec.cubic(1.0),
    "m2": dyn.ModelSpec.monomial(2, 1.0),
    "m3": dyn.ModelSpec.monomial(3, 1.0),
    "m4": dyn.ModelSpec.monomial(4, 1.0),
    "dyadic_1_2_4": dyn.ModelSpec.dyadic([1.0, 1.0, 1.0]),
}


@pytest.mark.parametrize("flow", list(C5_FLOWS))
def test_c5_monotonicity_and_limits(report, flow):
    M = C5_FLOWS[flow]
    t0 = time.perf_counter()
    cfg = IntegratorConfig(dt=1e-2, t_final=100.0, record_every=10)
    traj = integrate(sample_haar(2, 10, 0), M, cfg)
    parts = []
    ok = True
    rise = float(np.max(np.diff(traj.V)))
    ok &= rise <= 1e-9
    parts.append(f"max dV {rise:.1e}")
    if flow == "m1":
        drop = float(np.min(np.diff(traj.R2)))
        ok &= drop >= -1e-9
        parts.append(f"min dR2 {drop:.1e}")
    speed = float(traj.max_udot[-1])
    ok &= speed < 1e-6
    parts.append(f"final udot {speed:.2e} < 1e-6")
    if flow != "m3":
        lims = vf.check_commutator_limits(traj, M)
        ok &= all(v.passed for v in lims)
        worst = max(v.observed for v in lims if v.name != "term_nonnegativity")
        parts.append(f"commutator max {worst:.2e} < 1e-6")
    report(5, ok, ", ".join(parts), time.perf_counter() - t0, 60)


# 6. aggregation envelopes


@pytest.mark.parametrize("kappas", [[1.0], [1.0, 0.1]], ids=["k1", "k1_0.1"])
def test_c6_riccati_envelopes(report, kappas):
    t0 = time.perf_counter()
    E = sample_with_diameter(np.eye(2), 0.1, 2, 5, 0)
    traj = integrate(E, dyn.ModelSpec.polynomial(kappas), IntegratorConfig(dt=1e-2, t_final=10.0, record_every=10))
    v = vf.check_diameter_decay(traj, vf.EnvelopeParams.from_kappas(kappas, 2, traj.D2[0]))
    report(6, v.passed, f"D2 {v.observed:.4e} vs envelope {v.bound:.4e}, margin {v.margin:.2e}",
           time.perf_counter() - t0, 20)


def test_c6_cubic_envelope(report):
    t0 = time.perf_counter()
    E = sample_with_diameter(np.eye(2), 0.25, 2, 2, 0)
    traj = integrate(E, dyn.ModelSpec.cubic(1.0), IntegratorConfig(dt=1e-3, t_final=10.0, record_every=10))
    v = vf.check_cubic_envelope(traj, 1.0)
    report(6, v.passed, f"D {v.observed:.4e} vs nearest envelope {v.bound:.4e}, margin {v.margin:.2e}", time.perf_counter() - t0, 20)


# 7. solution splitting


def test_c7_splitting(report):
    t0 = time.perf_counter()
    H = random_hermitian(2, 3)
    E = sample_haar(2, 5, 3)
    M = dyn.ModelSpec.monomial(2, 1.0, hamiltonians=H)
    cfg = IntegratorConfig(method="rk4_project", dt=1e-3, t_final=1.0, record_every=1000, identities=False)
    gap = float(np.max(frobenius_norm(integrate(E, M, cfg).final.members - split_propagate(E, H, M, cfg).members)))
    report(7, gap <= 1e-6, f"max distance {gap:.2e} <= 1e-6", time.perf_counter() - t0, 10)


# 8. practical synchronization


def test_c8_practical_sync(report):
    t0 = time.perf_counter()
    cfg = IntegratorConfig(dt=1e-2, t_final=10.0, record_every=10, identities=False)
    H0 = random_hermitian(2, 7)
    tails, ok = [], True
    for k1 in (4.0, 8.0, 16.0):
        HS = perturbed_hamiltonians(H0, 0.05, 5, 1)
        traj = integrate(sample_perturbed(np.eye(2), 0.05, 2, 5, 2), dyn.ModelSpec.polynomial([k1], HS), cfg)
        v = vf.check_practical_sync(traj, vf.EnvelopeParams.for_trajectory(traj))
        ok &= v.passed
        tails.append(v.observed)
    ok &= bool(np.all(np.diff(tails) < 0))
    tail_s = ", ".join(f"{x:.4e}" for x in tails)
    report(8, ok, f"tails ({tail_s}) vs 1.01*2D(H)/kappa1 and shrinking", time.perf_counter() - t0, 60)


# 9. Kuramoto reduction


@pytest.mark.parametrize("m", [1, 2, 3])
def test_c9_kuramoto(report, m):
    t0 = time.perf_counter()
    M = dyn.ModelSpec.cubic(1.0) if m == 1 else dyn.ModelSpec.monomial(m, 1.0)
    cfg = IntegratorConfig(method="rk4_project", dt=1e-3, t_final=1.0, record_every=1000, identities=False)
    worst = 0.0
    for s in range(3):
        E = sample_haar(1, 6, s)
        th0 = np.angle(E.members[:, 0, 0])
        got = np.angle(integrate(E, M, cfg).final.members[:, 0, 0])
        ref = kuramoto_phases(th0, 1.0, m, 1.0, 1e-3)
        worst = max(worst, float(np.max(np.abs(np.angle(np.exp(1j * (got - ref)))))))
    report(9, worst <= 1e-8, f"phase error {worst:.2e} <= 1e-8", time.perf_counter() - t0, 5)


# 10. determinism


def test_c10_determinism(report, tmp_path):
    blobs, slowest = [], 0.0
    for i in range(2):
        t0 = time.perf_counter()
        out = tmp_path / f"run{i}"
        cli.main(["verify", "all", "--out-dir", str(out)])
        slowest = max(slowest, time.perf_counter() - t0)
        blobs.append((out / "verify_all.json").read_bytes())
    report(10, blobs[0] == blobs[1], f"byte-identical reports ({len(blobs[0])} bytes)", slowest, 300)
