import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from xxzness import fcs, oracle
from xxzness.errors import NoSolution, UnlabeledJump, ValidationError

GENERIC = fcs.DrivingRates(0.9, 0.1, 0.2, 0.8, eps=0.01)


def test_untilted_matches_oracle():
    model = fcs.fcs_model(3, 0.5, GENERIC)
    A, _ = oracle.build_liouvillean(model).sector(0)
    assert np.array_equal(fcs.build_tilted(model, 0.0), A)
    full = fcs.build_tilted(model, 0.0, sector=False).matrix
    assert abs(full - oracle.build_liouvillean(model).matrix).max() == 0


def test_tilt_periodic():
    model = fcs.fcs_model(3, 0.5, GENERIC)
    assert abs(fcs.build_tilted(model, 0.4) - fcs.build_tilted(model, 0.4 + 2 * np.pi)).max() < 1e-14


def test_unlabeled_jump():
    model = fcs.fcs_model(2, 1.0, GENERIC)
    model.jumps[0] = model.jumps[0]._replace(flow=0)
    with pytest.raises(UnlabeledJump):
        fcs.build_tilted(model, 0.1)


def test_lambda_zero_and_periodic():
    model = fcs.fcs_model(3, 0.5, GENERIC)
    lam = fcs.track_lambda(model, [0.0, 1.0, 1.0 + 2 * np.pi, -np.pi, np.pi])
    assert abs(lam[0]) < 1e-10
    assert abs(lam[1] - lam[2]) < 1e-9
    assert abs(lam[3] - lam[4]) < 1e-9


def test_tracking_is_continuous():
    model = fcs.fcs_model(3, 0.5, GENERIC)
    chis = np.linspace(-np.pi, np.pi, 315)
    lam = fcs.track_lambda(model, chis, max_step=0.05)
    assert abs(np.diff(lam)).max() < 0.01 * 0.05 * 10


def test_maximal_branch():
    r = fcs.DrivingRates(1, 0, 0, 1)
    chis = np.linspace(-3, 3, 13)
    assert np.allclose(fcs.lambda1_closed(chis, r), np.exp(-1j * chis) - 1)
    assert np.allclose(fcs.lambda1_quoted(chis, r), 2 * np.exp(-1j * chis) - 2)


@settings(max_examples=30, deadline=None)
@given(st.floats(-1, 1), st.floats(-3.1, 3.1))
def test_symmetric_closed_form(mu, chi):
    r = fcs.DrivingRates.symmetric(mu)
    assert abs(fcs.lambda1_closed(chi, r) - fcs.lambda1_symmetric(chi, mu)) < 1e-12
    assert abs(fcs.nu_closed(chi, r)) < 1e-12


@settings(max_examples=30, deadline=None)
@given(st.tuples(*[st.floats(0.05, 1)] * 4), st.floats(-3.0, 3.0))
def test_nu_quadratic_consistent(rates, chi):
    r = fcs.DrivingRates(*rates)
    assert abs(fcs.lambda1_from_nu(chi, r) - fcs.lambda1_closed(chi, r)) < 1e-10
    assert abs(fcs.lambda1_closed(0.0, r)) < 1e-14
    assert abs(fcs.nu_closed(0.0, r) - fcs.nu_at_zero(r)) < 1e-14


def test_leading_order_generic_rates():
    model = fcs.fcs_model(3, 0.5, GENERIC)
    chis = np.linspace(-np.pi, np.pi, 41)
    lam = fcs.track_lambda(model, chis) / GENERIC.eps
    assert abs(lam - fcs.lambda1_closed(chis, GENERIC)).max() < 1e-3


def test_zeroth_order_state_is_small_eps_limit():
    n = 3
    rho0 = fcs.zeroth_order_state(GENERIC, 0.0, n)
    assert abs(np.trace(rho0) - 1) < 1e-14
    # steady state at eps -> 0 by Richardson in eps
    rhos = []
    for eps in (0.004, 0.002):
        model = fcs.fcs_model(n, 0.5, GENERIC, eps=eps)
        rhos.append(oracle.steady_state(oracle.build_liouvillean(model)))
    limit = 2 * rhos[1] - rhos[0]
    assert abs(limit - rho0).max() < 1e-5
    sym = fcs.zeroth_order_state(fcs.DrivingRates.symmetric(0.4), 0.7, n)
    assert np.allclose(sym, np.eye(8) / 8)


def test_first_cumulant_closed():
    model = fcs.fcs_model(3, 0.5, GENERIC)
    val, err = fcs.cumulants_numeric(model, [1])
    assert val[0] == pytest.approx(fcs.first_cumulant_closed(GENERIC), rel=1e-3)
    assert err[0] < 1e-5 * abs(val[0])


def test_poisson_limit():
    r = fcs.DrivingRates.symmetric(1.0, eps=0.01)
    vals, _ = fcs.cumulants_numeric(fcs.fcs_model(3, 0.5, r), [1, 2, 3, 4, 5, 6])
    assert np.allclose(vals, 0.005, rtol=1e-2)


def test_z_operator_residual_and_gauges():
    for gauge in ("min-norm", "lax"):
        z = fcs.build_z_operator(4, 0.5, gauge)
        assert z.residual <= 1e-9
    zmin = fcs.build_z_operator(4, 0.5, "min-norm").matrix
    assert abs(zmin @ zmin.conj().T - zmin.conj().T @ zmin).max() < 1e-12
    zl = fcs.build_z_operator(4, 1.0, "lax")
    assert fcs.f_from_z(zl).real == pytest.approx(3.0, rel=1e-9)


def test_z_obstruction_raises():
    H = oracle.build_xxz(3, 0.5)
    adh = fcs._AdH(H)
    with pytest.raises(NoSolution):
        adh.solve(H.copy())


def test_lambda3_gauge_independence(rng):
    n, d = 4, 0.5
    z = fcs.build_z_operator(n, d)
    adh = fcs._AdH(oracle.build_xxz(n, d))
    ref = fcs.lambda3(0.7, 0.5, n, d, z)
    for _ in range(3):
        K = adh.kernel_part(rng.normal(size=(16, 16)) + 1j * rng.normal(size=(16, 16)))
        assert abs(fcs.lambda3(0.7, 0.5, n, d, z.matrix + K) - ref) <= 1e-9
    zl = fcs.build_z_operator(n, d, "lax")
    assert abs(fcs.lambda3(0.7, 0.5, n, d, zl) - ref) <= 1e-9


def test_lambda3_reduced_trace_form():
    for n, d in ((3, 1.0), (4, 0.5)):
        out = fcs.third_order(1.1, 0.3, n, d)
        assert abs(out.lambda3 - out.lambda3_reduced) < 1e-12
        assert abs(fcs.third_order(0.0, 0.3, n, d).lambda3) < 1e-14


@pytest.mark.parametrize("n,delta,f", [
    (3, 1.0, 2.0), (4, 1.0, 3.0), (5, 1.0, 4.0),
    # Delta = 1/2: twice the quoted closed form, e.g. 279/192 at n = 4
    (3, 0.5, 1.25), (4, 0.5, 279 / 192), (5, 0.5, 1.57421875),
])
def test_f_frozen(n, delta, f):
    for chi, mu in ((0.7, 0.5), (2.2, -0.3)):
        got = fcs.f_from_lambda3(chi, mu, fcs.lambda3(chi, mu, n, delta))
        assert abs(got - f) < 1e-9


def test_f_half_ratio_to_quoted_form():
    for n in (3, 4, 5, 6):
        f = fcs.f_from_lambda3(0.7, 0.5, fcs.lambda3(0.7, 0.5, n, 0.5)).real
        assert f / fcs.f_half_quoted(n) == pytest.approx(2.0, rel=1e-9)


def test_ansatz_lambda3_factor():
    # the literal ansatz is -8 times the solvable construction at mu = 0
    for chi in (0.4, 1.3):
        ratio = fcs.lambda3_ansatz(chi, 0.0, 4, 1.0) / fcs.lambda3(chi, 0.0, 4, 1.0)
        assert abs(ratio + 8) < 1e-8


def test_third_order_cumulants_match_numeric():
    mu, n, d = 0.5, 4, 1.0
    f = 3.0
    eps = 0.05
    r = fcs.DrivingRates.symmetric(mu, eps)
    vals, _ = fcs.cumulants_numeric(fcs.fcs_model(n, d, r), [1, 2, 3, 4, 5])
    for m, v in zip((1, 2, 3, 4, 5), vals):
        lead = eps * (mu / 2 if m % 2 else 0.5)
        pred = lead + eps ** 3 * fcs.cumulant_third_order(m, mu, f)
        assert abs(v - pred) < 5 * eps ** 5 * 10
        quoted = lead + eps ** 3 * fcs.cumulant_third_order_quoted(m, mu, f)
        if m >= 3:
            assert abs(v - quoted) > 10 * abs(v - pred)


def test_perturbative_fit_validation():
    r = fcs.DrivingRates.symmetric(0.5)
    with pytest.raises(ValidationError):
        fcs.perturbative_extraction(3, 0.5, r, 0.7, [0.1, 0.2, 0.3, 0.4])
    with pytest.raises(ValidationError):
        fcs.perturbative_extraction(3, 0.5, r, 0.7, [0.1, 0.2])


def test_equilibrium_has_no_odd_part():
    r = fcs.DrivingRates.symmetric(0.0)
    model = fcs.fcs_model(3, 0.5, r, eps=0.1)
    lam = fcs.track_lambda(model, [0.6, -0.6])
    assert abs(lam[0] - lam[1]) < 1e-12
    assert abs(lam[0].imag) < 1e-12


def test_direction_reversal_symmetry():
    # swapping a<->b and c<->d reverses the flow: lambda(chi) -> conj(lambda(chi))
    r = fcs.DrivingRates(0.7, 0.2, 0.4, 0.9, eps=0.3)
    s = fcs.DrivingRates(0.2, 0.7, 0.9, 0.4, eps=0.3)
    chis = [0.3, 1.1, 2.5]
    a = fcs.track_lambda(fcs.fcs_model(3, 0.5, r), chis)
    b = fcs.track_lambda(fcs.fcs_model(3, 0.5, s), chis)
    assert np.allclose(a, np.conj(b), atol=1e-10)
