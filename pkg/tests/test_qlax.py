import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from xxzness import qlax
from xxzness.errors import ContractViolation, ValidationError


def test_gamma_branches():
    assert qlax.gamma_from_delta(0.5) == pytest.approx(np.pi / 3)
    g = qlax.gamma_from_delta(1.5)
    assert g.real == 0 and g.imag == pytest.approx(np.arccosh(1.5))
    for d in (-2.0, -0.3, 0.5, 1.0, 1.5, 3.0):
        assert abs(np.cos(qlax.gamma_from_delta(d)) - d) < 1e-12


def test_q_number_limits():
    assert qlax.q_number(3.0, 0.0) == 3.0
    assert qlax.q_number(2.0, np.pi / 3) == pytest.approx(1.0)
    assert abs(qlax.q_number(2.5, 1e-6) - 2.5) < 1e-9


def test_context_validation():
    with pytest.raises(ValidationError):
        qlax.QContext(0.5, 0.3, 1.0)
    with pytest.raises(ValidationError):
        qlax.QContext.from_delta(0.5, 1.0, cutoff=1)
    ctx = qlax.QContext.solved(0.5, 1.0, 9)
    assert qlax.QContext.from_record(ctx.to_record()) == ctx


def test_s_from_epsilon_frozen_values():
    # derived by the Newton solve and back-substitution
    s = qlax.s_from_epsilon(1.0, qlax.gamma_from_delta(0.5))
    assert abs(s - (1.5 + 0.2837290359674172j)) < 1e-12
    s = qlax.s_from_epsilon(1.0, qlax.gamma_from_delta(1.5))
    assert abs(s - 1.4035485819910227j) < 1e-12
    assert qlax.s_from_epsilon(0.5, 0.0) == 8j


@settings(max_examples=40, deadline=None)
@given(st.floats(-0.95, 3.0), st.floats(0.05, 2.0))
def test_s_from_epsilon_roundtrip(delta, eps):
    g = qlax.gamma_from_delta(delta)
    s = qlax.s_from_epsilon(eps, g)
    assert abs(qlax.epsilon_from_s(s, g) - eps) <= 1e-10


def test_epsilon_pole():
    with pytest.raises(ValidationError):
        qlax.epsilon_from_s(0.0, 0.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.05, 3.0), st.floats(-2, 2), st.floats(-2, 2), st.integers(3, 12))
def test_algebra_closure(gamma_abs, sre, sim, D):
    for gamma in (complex(gamma_abs), complex(0, gamma_abs)):
        ctx = qlax.QContext(float(np.cos(gamma).real), gamma, complex(sre, sim), 0.0, D)
        assert qlax.algebra_residual(qlax.build_verma(ctx), gamma) <= 1e-10


def test_algebra_negative_control():
    ctx = qlax.QContext.from_delta(0.5, 1.3, cutoff=6)
    ops = qlax.build_verma(ctx)
    bad = qlax.VermaOps(ops.sz, 2 * ops.sp, ops.sm, ops.spin, ops.cutoff)
    assert qlax.algebra_residual(bad, ctx.gamma) > 0.1


def test_isotropic_lax_limit():
    ctx = qlax.QContext.from_delta(1.0, 2j, cutoff=5)
    L = qlax.build_lax(ctx, normalized=True).blocks
    k = np.arange(5)
    assert np.allclose(np.diag(L[0, 0]), 2j - k)
    assert np.allclose(np.diag(L[1, 1]), -(2j - k))
    assert np.allclose(np.diag(L[1, 0], 1), k[1:])


def test_sutherland_examples():
    ctx = qlax.QContext.solved(0.5, 1.0, 8)
    assert qlax.sutherland_residual(ctx) <= 1e-10
    rng = np.random.default_rng(7)
    phi, s = rng.normal(size=2) + 1j * rng.normal(size=2)
    ctx = qlax.QContext.from_delta(0.7, s, phi, 10)
    assert qlax.sutherland_residual(ctx) <= 1e-10


@settings(max_examples=30, deadline=None)
@given(st.floats(-0.99, 2.5), st.floats(-1.5, 1.5), st.floats(-1.5, 1.5), st.floats(-2, 2))
def test_sutherland_property(delta, phire, sre, sim):
    ctx = qlax.QContext.from_delta(delta, complex(sre, sim), complex(phire, 0.2), 8)
    assert qlax.sutherland_residual(ctx, relative=True) <= 1e-10


def test_sutherland_negative_control():
    # wrong sign of the right-hand side must break the identity
    ctx = qlax.QContext.from_delta(0.5, 1.1 + 0.3j, 0.4, 8)
    bad = ctx
    L = qlax.build_lax(bad).blocks
    Lp = qlax.lax_phi_derivative(bad).blocks
    h = qlax.two_site_h(bad.delta)
    LL = qlax._pair(L, L)
    lhs = np.einsum("ab,bcij->acij", h, LL) - np.einsum("abij,bc->acij", LL, h)
    rhs = -2 * np.sin(bad.gamma) * (qlax._pair(L, Lp) - qlax._pair(Lp, L))
    assert abs(lhs - rhs)[:, :, :6, :6].max() > 0.1


def test_sutherland_raises_with_location():
    ctx = qlax.QContext.from_delta(0.5, 1.0, cutoff=6)
    with pytest.raises(ContractViolation, match="auxiliary"):
        qlax.sutherland_residual(ctx, tol=-1.0)
