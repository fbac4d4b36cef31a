from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.integrate import quad

from sidebandsim.fock import FockSpace, expectation, fock_state
from sidebandsim.model import (CouplingParams, DriveParams, ModelWarning, ModeParams, build_drive,
                               build_model, estimate_cooling, thermal_occupation)

W = 2 * math.pi * 20e6
G = W / (20 * math.pi)


def _model(frame="interaction_rwa", beta=0.0, dims=(4, 3), gamma=0.0, kappa=0.0):
    target = ModeParams(W, gamma, dims[0], n_thermal=0.0)
    aux = ModeParams(2 * math.pi * 5e9, kappa, dims[1], n_thermal=0.0)
    return build_model(target, aux, CouplingParams(G, frame), DriveParams(beta))


def test_thermal_occupation_examples():
    assert thermal_occupation(2 * math.pi * 100e6, 20e-3) == pytest.approx(3.68, abs=0.01)
    assert thermal_occupation(2 * math.pi * 1e6, 0.0) == 0.0
    assert thermal_occupation(2 * math.pi * 5e9, 20e-3) == pytest.approx(6.1e-6, rel=0.05)
    with pytest.raises(ValueError):
        thermal_occupation(1.0, -1.0)


def test_rwa_hamiltonian_swap_matrix_element():
    m = _model()
    h = m.hamiltonian(0.0).dense()
    s = m.space
    assert not m.time_dependent
    np.testing.assert_allclose(h, h.conj().T, atol=1e-12)
    assert h[s.index(1, 0), s.index(0, 1)] == pytest.approx(G)


def test_full_hamiltonian_at_t0_is_product_of_quadratures():
    m = _model("interaction_full")
    a, b = m.ops["a"].dense(), m.ops["b"].dense()
    xa, xb = a + a.conj().T, b + b.conj().T
    np.testing.assert_allclose(m.hamiltonian(0.0).dense(), G * xa @ xb, atol=1e-6)


def test_full_hamiltonian_period_average_is_rwa():
    full, rwa = _model("interaction_full"), _model("interaction_rwa")
    period = 2 * math.pi / (2 * W)
    i, j = full.space.index(1, 1), full.space.index(0, 0)
    re = quad(lambda t: full.hamiltonian(t).dense()[i, j].real, 0, period, limit=200)[0] / period
    im = quad(lambda t: full.hamiltonian(t).dense()[i, j].imag, 0, period, limit=200)[0] / period
    assert abs(complex(re, im)) < 1e-12 * G
    assert rwa.hamiltonian().dense()[i, j] == 0


def test_drive_matrix_elements_and_ehrenfest_forcing():
    space = FockSpace(2, 2)
    assert build_drive(0.0, 1e6, space).matrix.nnz == 0
    kappa, beta = 1e6, 3.0
    hd = build_drive(beta, kappa, FockSpace(2, 2)).dense()
    s = FockSpace(2, 2)
    assert hd[s.index(0, 1), s.index(0, 0)] == pytest.approx(1j * math.sqrt(kappa) * beta)
    # d<b>/dt = -i <[b, H_d]> evaluated on vacuum
    space = FockSpace(2, 6)
    hd = build_drive(beta, kappa, space).dense()
    m = _model(dims=(2, 6))
    b = m.ops["b"].dense()
    vac = fock_state(space, 0, 0).amplitudes
    rate = -1j * vac.conj() @ (b @ hd - hd @ b) @ vac
    assert rate == pytest.approx(math.sqrt(kappa) * beta)


def test_estimate_cooling_examples():
    gamma = 2 * math.pi * 200
    assert estimate_cooling(gamma, 1e6, 1.0) == pytest.approx(1.3e-3, rel=0.05)
    assert estimate_cooling(gamma, 0.0, 3.68) == 3.68
    assert estimate_cooling(5.0, 5.0, 4.0) == 2.0


def test_mode_params_from_hz_and_validation():
    p = ModeParams.from_hz(20e6, 8, quality_factor=1e4, n_thermal=3.68)
    assert p.angular_frequency == pytest.approx(W)
    assert p.damping_rate == pytest.approx(W / 1e4)
    with pytest.raises(ValueError):
        ModeParams(W, 1.0, 8)
    with pytest.raises(ValueError):
        ModeParams(W, 1.0, 8, temperature=0.01, n_thermal=1.0)
    with pytest.warns(ModelWarning):
        ModeParams(W, W / 5, 8, n_thermal=0.0)


def test_dissipators_have_thermal_rates():
    target = ModeParams(W, 100.0, 4, n_thermal=2.0)
    aux = ModeParams(2 * W, 10.0, 3, n_thermal=0.5)
    m = build_model(target, aux, CouplingParams(G, "interaction_rwa"))
    rates = sorted(d.rate for d in m.dissipators)
    assert rates == pytest.approx(sorted([300.0, 200.0, 15.0, 5.0]))


def test_lab_frame_and_drive_conflict():
    with pytest.raises(ValueError):
        _model("lab_modulated", beta=1.0)


def test_excitation_conservation_flag():
    assert _model().conserves_excitations
    assert not _model("interaction_full").conserves_excitations
    assert not _model(beta=1.0).conserves_excitations
    n_tot = _model().ops["n_a"].dense() + _model().ops["n_b"].dense()
    h = _model().hamiltonian().dense()
    np.testing.assert_allclose(h @ n_tot - n_tot @ h, 0, atol=1e-6)
