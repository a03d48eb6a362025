import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from blowrefine.errors import ConfigurationError, DomainError, IntegrationWindowError
from blowrefine.nonlinearity import (
    ModelParams,
    beta_factor,
    eval_F,
    eval_H,
    eval_h,
    eval_h_prime,
    kappa,
    omega,
    profile_f,
    scaled_H,
    solve_phi,
)


def params(p=3.0, a=1.0, mu=1.0, **kw):
    return ModelParams.build(p, a, mu, kw.get("lambda_inv", 2), kw.get("alpha", 0.6),
                             kw.get("c_delta", 0.25), kw.get("hbar", 0.04), 4.0)


P1 = params()


def test_F_at_one_matches_closed_form():
    assert eval_F(1.0, P1) == pytest.approx(1.0 + 1.0 / math.log(3.0), rel=1e-15)
    assert eval_F(1.0, P1) == pytest.approx(1.9102392266, abs=1e-10)


def test_F_is_odd_and_vectorised():
    u = np.linspace(-3, 3, 13)
    np.testing.assert_array_equal(eval_F(u, P1), -eval_F(-u, P1))


def test_nonfinite_input_rejected():
    with pytest.raises(DomainError):
        eval_F(np.array([1.0, np.nan]), P1)
    with pytest.raises(DomainError):
        eval_H(np.inf, P1)


@given(st.floats(0.05, 30.0), st.floats(0.1, 10.0))
def test_h_prime_matches_finite_difference(z, a):
    P = params(a=a)
    d = 1e-6 * max(1.0, z)
    fd = (eval_h(z + d, P) - eval_h(z - d, P)) / (2 * d)
    assert eval_h_prime(z, P) == pytest.approx(fd, rel=1e-6, abs=1e-9)


@pytest.mark.parametrize("z", [0.3, 1.0, 4.0, 25.0])
def test_H_against_direct_quadrature(z):
    ref = integrate.quad(lambda x: eval_h(x, P1), 0.0, z, epsabs=0, epsrel=1e-12, limit=200)[0]
    assert eval_H(z, P1) == pytest.approx(ref, rel=1e-9)


@given(st.floats(0.0, 50.0))
def test_H_even_and_nonnegative(z):
    assert eval_H(z, P1) == eval_H(-z, P1)
    assert eval_H(z, P1) >= 0.0


def test_scaled_H_reduces_to_H_at_s_zero():
    w = np.array([0.0, 0.2, -0.7, 1.0, 3.0])
    np.testing.assert_allclose(scaled_H(w, 0.0, P1), eval_H(w, P1), rtol=1e-9)


def test_scaled_H_matches_definition_at_moderate_s():
    s, w = 6.0, np.array([0.1, 0.5, 0.9])
    e = 1.0 / (P1.p - 1.0)
    ref = np.exp(-(P1.p + 1) * s * e) * eval_H(np.exp(s * e) * w, P1)
    np.testing.assert_allclose(scaled_H(w, s, P1), ref, rtol=1e-8)


def test_scaled_H_stays_finite_for_large_s():
    w = np.linspace(-1, 1, 101)
    v = scaled_H(w, 400.0, P1)
    assert np.all(np.isfinite(v)) and np.all(v >= 0)
    # for huge s the log is ~ 2s/(p-1), so H ~ w^4/(4 (s)^a)
    assert v[-1] == pytest.approx(1.0 / (4 * 400.0), rel=0.05)


def test_threshold_table():
    # M = lambda^{-2/(p-1)} hbar^{2/(p-1)} |phi| = 8 hbar for phi = 2(1 + cos pi x), p = 3
    for hbar, M in [(0.04, 0.32), (0.02, 0.16), (0.01, 0.08), (0.005, 0.04)]:
        assert params(hbar=hbar).M == M


def test_params_validation():
    with pytest.raises(ConfigurationError, match="C_Delta"):
        params(c_delta=0.6)
    with pytest.raises(ConfigurationError) as exc:
        params(alpha=1.2)
    assert exc.value.key == "alpha"
    with pytest.raises(ConfigurationError):
        ModelParams(3.0, 1.0, M0=1.0, M=3.0)


def test_kappa_and_profile():
    assert kappa(3.0) == pytest.approx(1 / math.sqrt(2), rel=1e-15)
    assert kappa(5.0) == pytest.approx(4 ** -0.25, rel=1e-15)
    assert profile_f(0.0, P1) == kappa(P1)
    assert profile_f(2.0, P1) == pytest.approx(kappa(3) * (1 + 4 / 6) ** -0.5, rel=1e-14)
    assert profile_f(2.0, P1, l=0) == kappa(P1)


@pytest.fixture(scope="module")
def phi1():
    return solve_phi(1.0, 200.0, P1)


def test_phi_residual(phi1):
    s = np.linspace(1.5, 199.0, 997)
    assert np.max(phi1.residual(s)) < 1e-8


def test_phi_tends_to_kappa_from_below(phi1):
    s = np.array([10.0, 50.0, 150.0])
    v = phi1(s)
    assert np.all(v < kappa(P1)) and np.all(np.diff(v) > 0)


def test_eta_expansion(phi1):
    # eta s^a -> C* = mu ((p-1)/2)^a = 1
    assert phi1.eta(100.0) * 100.0 == pytest.approx(1.0, rel=0.15)
    # next order: s (eta s - C*) -> C* a (log(p-1) - 1) from the log kappa^2 shift
    assert 150.0 * (phi1.eta(150.0) * 150.0 - 1.0) == pytest.approx(math.log(2) - 1, rel=0.1)


def test_phi_is_constant_without_perturbation():
    P = params(mu=0.0)
    sol = solve_phi(1.0, 5.0, P)
    assert sol(3.3) == kappa(P)
    assert omega(2.0, sol, P) == pytest.approx(0.0, abs=1e-15)
    assert beta_factor(2.0, sol, P) == 1.0


def test_phi_window_checks():
    with pytest.raises(IntegrationWindowError):
        solve_phi(0.5, 10.0, P1)
    with pytest.raises(IntegrationWindowError):
        solve_phi(1.0, 5.0, params(a=0.1))
    # the non-strict mode trusts the backward damping instead
    sol = solve_phi(1.0, 120.0, params(a=0.1), strict=False)
    assert sol.seed_error < 1e-40 and np.all(sol.values > 0)


def test_phi_independent_of_seed_window():
    a = solve_phi(1.0, 120.0, P1)
    b = solve_phi(1.0, 200.0, P1)
    s = np.linspace(2, 60, 30)
    np.testing.assert_allclose(a(s), b(s), rtol=1e-12)


def test_omega_decays_like_power(phi1):
    s = np.array([50.0, 100.0, 150.0, 190.0])
    scaled = omega(s, phi1, P1) * s ** (P1.a + 1)
    assert np.all(np.isfinite(scaled))
    assert np.all(np.abs(scaled) <= 10 * abs(scaled[0]))
    with pytest.raises(DomainError):
        omega(250.0, phi1, P1)


def test_beta_stable_under_refinement(phi1):
    b1 = beta_factor(50.0, phi1, P1)
    b2 = beta_factor(50.0, phi1, P1, n_intervals=60000)
    assert 0.9 < b1 < 1.1
    assert b1 == pytest.approx(b2, rel=1e-8)
