from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sidebandsim.langevin import (ComplexRegimeError, RegimeWarning, coherent_amplitude,
                                  decay_constants, linear_model, moment_dynamics,
                                  occupation_formula, steady_covariance)


def test_decay_constants_limits():
    dc = decay_constants(0.0, 1e6, 0.0)
    assert (dc.lambda_plus, dc.lambda_minus) == (1e6, 0.0)
    dc = decay_constants(0.0, 1e6, 2.5e5)
    assert dc.lambda_plus == pytest.approx(5e5) and dc.lambda_minus == pytest.approx(5e5)


def test_decay_constants_arithmetic_and_drift_cross_check():
    dc = decay_constants(0.0, 4e6, 5e5)
    assert dc.lambda_plus == pytest.approx(2e6 + math.sqrt(3) * 1e6, rel=1e-12)
    assert dc.lambda_minus == pytest.approx(2e6 - math.sqrt(3) * 1e6, rel=1e-12)
    eig = sorted(2 * e.real for e in dc.drift_eigenvalues)
    assert eig == pytest.approx(sorted([dc.lambda_minus, dc.lambda_plus]), rel=1e-9)


def test_complex_regime_and_gamma_warning():
    assert not decay_constants(0.0, 1e6, 1e6).real
    with pytest.raises(ComplexRegimeError):
        occupation_formula(10.0, 1e6, 1e6, 1.0)
    with pytest.warns(RegimeWarning):
        decay_constants(5e5, 1e6, 1e5)


def test_coherent_amplitude_examples():
    z = coherent_amplitude(0.0, 100.0, 1e6, 2e5)
    assert z.formula == 0 and z.exact == 0
    z = coherent_amplitude(1.0, 1256.6, 1e6, 2e5)
    assert z.formula == pytest.approx(-5.9375e-3j, rel=1e-12)
    closed = -1j * (1e3 / 2e5) / (1 + 1256.6 * 1e6 / (4 * 2e5 ** 2))
    assert z.exact == pytest.approx(closed, rel=1e-12)
    assert abs(z.exact) == pytest.approx(4.96e-3, rel=2e-3)
    assert coherent_amplitude(1.0, 0.0, 3.0, 1.0).formula_singular


def test_steady_covariance_examples():
    m = steady_covariance(linear_model(100.0, 1e6, 0.0, n_target=3.68))
    assert m.n_target == pytest.approx(3.68) and m.n_aux == pytest.approx(0.0, abs=1e-15)
    m = steady_covariance(linear_model(100.0, 1e6, 2e5))
    np.testing.assert_allclose(m.N, 0, atol=1e-18)
    np.testing.assert_allclose(m.mean, 0)


def test_occupation_formula_limits_and_report():
    assert occupation_formula(100.0, 1e6, 1e5, 0.0) == 0.0
    assert occupation_formula(0.0, 1e6, 1e5, 3.0) == 0.0
    gamma, kappa, g = 2 * math.pi * 200, 1e6, 2e5
    lyap = steady_covariance(linear_model(gamma, kappa, g, n_target=3.68)).n_target
    ratio = occupation_formula(gamma, kappa, g, 3.68) / lyap
    assert np.isfinite(ratio) and ratio > 0


def test_moment_dynamics_relaxes_to_lyapunov():
    lm = linear_model(1e4, 1e6, 2e6, n_target=3.68)
    t = np.linspace(0, 6e-5, 61)
    traj = moment_dynamics(lm, t, n0_target=3.68)
    assert traj.n_target[0] == pytest.approx(3.68)
    assert traj.n_target[-1] == pytest.approx(steady_covariance(lm).n_target, rel=1e-6)


@settings(max_examples=30, deadline=None)
@given(gamma=st.floats(1.0, 1e4), kappa=st.floats(1e5, 1e7), g=st.floats(1e3, 1e7),
       n_t=st.floats(0.0, 10.0))
def test_lyapunov_occupation_between_zero_and_bath(gamma, kappa, g, n_t):
    m = steady_covariance(linear_model(gamma, kappa, g, n_target=n_t))
    assert -1e-12 <= m.n_target <= n_t * (1 + 1e-9) + 1e-12
    # heat balance: gamma (n_T - n_a) = kappa n_b
    assert gamma * (n_t - m.n_target) == pytest.approx(kappa * m.n_aux, rel=1e-6, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(theta=st.floats(-math.pi, math.pi), beta=st.floats(1.0, 1e4))
def test_coherent_amplitude_phase_covariance(theta, beta):
    base = coherent_amplitude(beta, 100.0, 1e6, 2e5).exact
    rot = coherent_amplitude(beta * complex(math.cos(theta), math.sin(theta)), 100.0, 1e6, 2e5).exact
    assert rot == pytest.approx(base * complex(math.cos(theta), math.sin(theta)), rel=1e-12)
