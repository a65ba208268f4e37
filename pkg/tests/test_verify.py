from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lohe_lab import dynamics as dyn
from lohe_lab import verify as vf
from lohe_lab.ensemble import (
    HamiltonianSet,
    hamiltonian_diameter,
    perturbed_hamiltonians,
    random_hermitian,
    sample_haar,
    sample_perturbed,
    sample_with_diameter,
)
from lohe_lab.integrate import IntegratorConfig, integrate
from lohe_lab.verify import EnvelopeParams, PreconditionError


def scalar_riccati(X0, km, k1, t, dt=1e-4):
    X = X0
    f = lambda x: -km * x + k1 * x * x  # noqa: E731
    for _ in range(round(t / dt)):
        a = f(X)
        b = f(X + 0.5 * dt * a)
        c = f(X + 0.5 * dt * b)
        e = f(X + dt * c)
        X += dt / 6 * (a + 2 * b + 2 * c + e)
    return X


def identical(d=2, N=5):
    return sample_perturbed(np.eye(d), 0.0, d, N, 0)


# -- envelopes --------------------------------------------------------------------


def test_riccati_trivial_cases():
    assert vf.riccati_envelope(EnvelopeParams(0.0, 1.0, 3.0, 1.0), 4.0) == (0.0, 0.0)
    lo, up = vf.riccati_envelope(EnvelopeParams(0.3, 1.0, 3.0, 1.0), 0.0)
    assert lo == pytest.approx(0.3, rel=1e-15) and up == pytest.approx(0.3, rel=1e-15)


def test_riccati_hand_value():
    P = EnvelopeParams(0.5, 1.0, 3.0, 1.0)
    lo, up = vf.riccati_envelope(P, 2.0)
    assert up == pytest.approx(0.5 / (np.e**2 * 0.5 + 0.5), rel=1e-14)
    assert lo == pytest.approx(1.5 / (np.exp(6.0) * 3.5 - 0.5), rel=1e-14)
    # the upper envelope solves the upper Riccati equation exactly
    assert scalar_riccati(0.5, 1.0, 1.0, 2.0) == pytest.approx(up, rel=1e-10)
    assert lo <= up


def test_riccati_array_input():
    P = EnvelopeParams(0.2, 1.5, 2.5, 0.5)
    t = np.linspace(0, 5, 11)
    lo, up = vf.riccati_envelope(P, t)
    assert lo.shape == up.shape == (11,)
    assert np.all(np.diff(up) < 0) and np.all(np.diff(lo) < 0)


@given(
    st.floats(0.0, 2.0),
    st.floats(0.1, 5.0),
    st.floats(0.0, 3.0),
    st.one_of(st.just(0.0), st.floats(1e-3, 1.0)),
    st.integers(0, 2**31),
)
def test_riccati_ordering(frac, km, extra, k1, seed):
    X0 = frac * (km / k1 if k1 > 0 else 1.0) * 0.499
    P = EnvelopeParams(X0, km, km + extra, k1)
    t = np.random.default_rng(seed).uniform(0, 50, 1000)
    lo, up = vf.riccati_envelope(P, t)
    assert np.all(lo <= up * (1 + 1e-12) + 1e-300)


def test_riccati_linear_limit():
    t = np.linspace(0, 10, 51)
    lo, up = vf.riccati_envelope(EnvelopeParams(0.4, 1.3, 2.0, 1e-12), t)
    assert np.max(np.abs(up - 0.4 * np.exp(-1.3 * t))) <= 1e-6
    lo0, up0 = vf.riccati_envelope(EnvelopeParams(0.4, 1.3, 2.0, 0.0), t)
    np.testing.assert_allclose(up0, 0.4 * np.exp(-1.3 * t), rtol=1e-14)
    np.testing.assert_allclose(lo0, 0.4 * np.exp(-2.0 * t), rtol=1e-14)


@pytest.mark.parametrize(
    "P",
    [
        EnvelopeParams(0.1, 0.0, 1.0, 1.0),
        EnvelopeParams(2.5, 2.0, 2.0, 1.0),
        EnvelopeParams(0.1, 2.0, 1.0, 1.0),
        EnvelopeParams(-0.1, 2.0, 2.0, 1.0),
    ],
)
def test_riccati_refuses(P):
    with pytest.raises(PreconditionError):
        vf.riccati_envelope(P, 1.0)


def test_cubic_envelope_examples():
    assert vf.cubic_envelope(0.0, 1.0, 3.0) == (0.0, 0.0)
    lo, up = vf.cubic_envelope(0.5, 2.0, 0.0)
    assert lo == pytest.approx(0.5) and up == pytest.approx(0.5)
    lo, up = vf.cubic_envelope(0.5, 1.0, 1.0)
    assert lo == pytest.approx(0.5 / (1.5 * np.e - 0.5), rel=1e-14)
    assert up == pytest.approx(0.5 / (0.5 * np.e + 0.5), rel=1e-14)
    for bad in (1.0, 1.5, -0.1):
        with pytest.raises(PreconditionError):
            vf.cubic_envelope(bad, 1.0, 1.0)
    with pytest.raises(PreconditionError):
        vf.cubic_envelope(0.5, 0.0, 1.0)


def test_cubic_envelope_two_member_run():
    E = sample_with_diameter(np.eye(2), 0.25, 2, 2, 3)
    traj = integrate(E, dyn.ModelSpec.cubic(1.0), IntegratorConfig(dt=1e-3, t_final=1.0, record_every=10))
    v = vf.check_cubic_envelope(traj, 1.0)
    assert v.passed, v


# -- diameter decay ---------------------------------------------------------------


def _decay_run(kappas, d, N, D0_sq, seed, t_final=10.0):
    E = sample_with_diameter(sample_haar(d, 1, seed).members[0], D0_sq, d, N, seed)
    cfg = IntegratorConfig(dt=1e-2, t_final=t_final, record_every=10, identities=False)
    traj = integrate(E, dyn.ModelSpec.polynomial(kappas), cfg)
    return traj, EnvelopeParams.from_kappas(kappas, d, traj.D2[0])


def test_diameter_decay_identical():
    cfg = IntegratorConfig(dt=0.01, t_final=1.0, record_every=10)
    traj = integrate(identical(), dyn.ModelSpec.polynomial([1.0]), cfg)
    v = vf.check_diameter_decay(traj, EnvelopeParams.from_kappas([1.0], 2, 0.0))
    assert v.passed and v.observed == 0.0


CONFIGS = [(d, N, s) for s in range(3) for d in (2, 4) for N in (5, 20)][:10]


@pytest.mark.parametrize("d,N,seed", CONFIGS)
def test_diameter_decay_seeded(d, N, seed):
    D0_sq = 0.05 + 0.1 * seed
    traj, P = _decay_run([1.0], d, N, D0_sq, seed)
    v = vf.check_diameter_decay(traj, P)
    assert v.passed, v


def test_diameter_decay_refuses_large_initial_diameter():
    traj, _ = _decay_run([1.0], 2, 5, 2.5, 0, t_final=0.1)
    P = EnvelopeParams.from_kappas([1.0], 2, traj.D2[0])
    with pytest.raises(PreconditionError):
        vf.check_diameter_decay(traj, P)


def test_diameter_decay_refuses_mismatched_params():
    traj, P = _decay_run([1.0], 2, 5, 0.1, 0, t_final=0.1)
    with pytest.raises(PreconditionError):
        vf.check_diameter_decay(traj, EnvelopeParams(P.D0_sq, 1.0, 3.0, 1.0))
    with pytest.raises(PreconditionError):
        vf.check_diameter_decay(traj, EnvelopeParams(0.2, P.kappa_minus, P.kappa_plus, P.kappa1))


def test_diameter_decay_refuses_heterogeneous():
    E = sample_with_diameter(np.eye(2), 0.1, 2, 5, 0)
    HS = perturbed_hamiltonians(random_hermitian(2, 0), 0.01, 5, 1)
    traj = integrate(E, dyn.ModelSpec.polynomial([1.0], hamiltonians=HS), IntegratorConfig(dt=0.01, t_final=0.1))
    with pytest.raises(PreconditionError):
        vf.check_diameter_decay(traj, EnvelopeParams.from_kappas([1.0], 2, traj.D2[0]))


# -- practical synchronization ----------------------------------------------------


def _sync_run(kappa, DH, seed=0, H0=None, t_final=20.0, conj=None):
    d, N = 2, 5
    H0 = random_hermitian(d, 7) if H0 is None else H0
    HS = perturbed_hamiltonians(H0, DH, N, seed)
    E = sample_with_diameter(np.eye(d), 0.1, d, N, seed)
    if conj is not None:
        HS = HamiltonianSet(conj @ HS.matrices @ conj.conj().T)
        E = type(E)(conj @ E.members @ conj.conj().T)
    cfg = IntegratorConfig(dt=1e-2, t_final=t_final, record_every=10, identities=False)
    traj = integrate(E, dyn.ModelSpec.polynomial([kappa], hamiltonians=HS), cfg)
    return traj, EnvelopeParams.from_kappas([kappa], d, traj.D2[0], hamiltonian_diameter(HS))


def test_sync_roots():
    P = EnvelopeParams(0.0, 8.0, 8.0, 4.0, DH=0.05)
    zeta, e1, e2 = vf.sync_roots(P)
    f = lambda x: 0.05 - 4.0 * x + 2.0 * x**3  # noqa: E731
    assert zeta == pytest.approx(np.sqrt(8 / 12))
    assert abs(f(e1)) < 1e-12 and abs(f(e2)) < 1e-12
    assert 0 < e1 < zeta < e2
    assert vf.sync_roots(EnvelopeParams(0.0, 2.0, 2.0, 1.0))[1] == 0.0
    with pytest.raises(PreconditionError):
        vf.sync_roots(EnvelopeParams(0.0, 2.0, 2.0, 1.0, DH=5.0))


def test_practical_sync_example():
    traj, P = _sync_run(4.0, 0.05)
    v = vf.check_practical_sync(traj, P)
    assert v.passed, v
    assert v.bound == pytest.approx(0.025)


def test_practical_sync_zero_spread():
    traj, P = _sync_run(4.0, 0.0)
    v = vf.check_practical_sync(traj, P)
    assert v.passed and v.observed < 1e-10


def test_practical_sync_conjugation_invariance():
    Q = sample_haar(2, 1, 99).members[0]
    a, Pa = _sync_run(4.0, 0.05)
    b, Pb = _sync_run(4.0, 0.05, conj=Q)
    assert Pa.DH == pytest.approx(Pb.DH, rel=1e-12)
    va, vb = vf.check_practical_sync(a, Pa), vf.check_practical_sync(b, Pb)
    assert va.passed == vb.passed
    assert va.observed == pytest.approx(vb.observed, rel=1e-8)


def test_practical_sync_refuses():
    traj, P = _decay_run([1.0], 2, 5, 0.1, 0, t_final=0.1)
    with pytest.raises(PreconditionError):
        vf.check_practical_sync(traj, P)
    traj, P = _sync_run(4.0, 0.05, t_final=0.1)
    with pytest.raises(PreconditionError):
        vf.check_practical_sync(traj, EnvelopeParams(P.D0_sq, P.kappa_minus, P.kappa_plus, P.kappa1, DH=0.01))


# -- equilibration and commutator limits ------------------------------------------


def test_equilibration_at_equilibrium():
    traj = integrate(identical(), dyn.ModelSpec.cubic(1.0), IntegratorConfig(dt=0.1, t_final=1.0))
    assert vf.check_equilibration(traj).passed


def test_equilibration_cubic_run():
    cfg = IntegratorConfig(dt=1e-2, t_final=50.0, record_every=10, identities=False)
    traj = integrate(sample_haar(2, 10, 0), dyn.ModelSpec.cubic(1.0), cfg)
    assert vf.check_equilibration(traj).passed


def test_equilibration_free_flow_fails():
    M = dyn.ModelSpec.cubic(0.0, hamiltonians=random_hermitian(2, 1))
    traj = integrate(sample_haar(2, 4, 0), M, IntegratorConfig(dt=0.1, t_final=5.0))
    v = vf.check_equilibration(traj)
    assert not v.passed and v.observed > 0.1


def test_commutator_limits_identical():
    M = dyn.ModelSpec.dyadic([1.0, 1.0, 1.0])
    traj = integrate(identical(), M, IntegratorConfig(dt=0.1, t_final=1.0))
    verdicts = vf.check_commutator_limits(traj, M)
    assert all(v.passed for v in verdicts)
    assert all(v.observed <= 1e-14 for v in verdicts if v.name != "term_nonnegativity")
    names = {v.name for v in verdicts}
    assert {"commutator[k=2]", "cascade[k=2,p=1]", "cascade[k=2,p=2]", "term_nonnegativity"} <= names


@pytest.mark.slow
def test_commutator_limits_quartic_run():
    M = dyn.ModelSpec.monomial(2, 1.0)
    cfg = IntegratorConfig(dt=1e-2, t_final=100.0, record_every=10)
    traj = integrate(sample_haar(2, 5, 0), M, cfg)
    verdicts = vf.check_commutator_limits(traj, M)
    assert "quartic_commutator_sq" in {v.name for v in verdicts}
    assert all(v.passed for v in verdicts), [v for v in verdicts if not v.passed]


def test_commutator_limits_refuses():
    traj = integrate(identical(), dyn.ModelSpec.monomial(3, 1.0), IntegratorConfig(dt=0.1, t_final=0.1))
    with pytest.raises(PreconditionError):
        vf.check_commutator_limits(traj, dyn.ModelSpec.monomial(3, 1.0))
    with pytest.raises(PreconditionError):
        vf.check_commutator_limits(traj, dyn.ModelSpec.polynomial([1.0, 1.0]))


# -- finite-difference audit ------------------------------------------------------


def test_fd_audit_identical_is_zero():
    ab, _rel = vf.fd_gradient_errors(identical(3, 4), dyn.PotentialSpec.Vm(3, 1.0))
    assert ab.max() <= 1e-10


@pytest.mark.parametrize("P", [dyn.PotentialSpec.Vm(3, 1.0), dyn.PotentialSpec.Vpoly([1.0, 0.5, 0.25])])
def test_fd_audit_haar(P):
    assert vf.fd_gradient_audit(sample_haar(3, 6, 1), P, h=1e-5) <= 1e-6


def test_fd_audit_step_range():
    for h in (1e-9, 1e-2):
        with pytest.raises(ValueError):
            vf.fd_gradient_audit(sample_haar(2, 3, 0), dyn.PotentialSpec.V1(1.0), h=h)


def test_verdict_serializes():
    v = vf.Verdict("x", True, 1.0, 2.0, 1.0)
    assert v.to_dict() == {"name": "x", "passed": True, "observed": 1.0, "bound": 2.0, "margin": 1.0}
