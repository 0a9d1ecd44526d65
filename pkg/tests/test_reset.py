import math

import numpy as np
import pytest

from aqec_sim.reset import (
    DISPLACED_DIM,
    ResetChannel,
    ResetDriveParams,
    ResetGenerator,
    ResetPhaseTable,
    _reset_model,
    calibrate_reset_phases,
    displaced_amplitude,
    effective_model,
    reset_channel,
    run_reset,
    steady_state_photons,
)

OPERATING = ResetDriveParams()


def test_displaced_amplitude_formula(device):
    kappa = device.angular.kappa_r
    eps, delta = 2 * math.pi * 80.0, 2 * math.pi * 41.5
    xi = displaced_amplitude(eps, delta, kappa)
    assert xi == pytest.approx(-eps * (delta + 0.5j * kappa) / (delta**2 + kappa**2 / 4))
    # kappa_r / 2pi = 1.408 MHz for T1_r = 113 ns
    assert abs(xi) ** 2 == pytest.approx(80**2 / (41.5**2 + (1 / (2 * math.pi * 0.113) / 2) ** 2))
    assert abs(xi) ** 2 == pytest.approx(3.71, abs=0.01)


def test_no_drive_no_reset(device):
    m = effective_model(OPERATING.replace(drive_mhz=0.0), device)
    assert m.xi_r == 0 and m.gamma_eff == 0


def test_effective_rate_monotone_in_drive(device):
    rates = [effective_model(OPERATING.replace(drive_mhz=e), device).gamma_eff for e in (10, 20, 40, 80, 120)]
    assert np.all(np.diff(rates) > 0)


def test_regime_flags_at_operating_point(device):
    m = effective_model(OPERATING, device)
    assert m.strong_rabi
    assert not m.weak_coupling  # chi_qr |xi_r| exceeds kappa_r here


def test_steady_state_photons_match_xi(device):
    n = steady_state_photons(OPERATING, device)
    assert n == pytest.approx(effective_model(OPERATING, device).photons, rel=0.02)


def test_structured_rhs_matches_dense_model(device):
    dim_r = 6
    params = OPERATING.replace(hold_us=0.1)
    gen = ResetGenerator(params, device, dim_r)
    dense = _reset_model(params, device, dim_r)
    rng = np.random.default_rng(4)
    a = rng.normal(size=(2 * dim_r,) * 2) + 1j * rng.normal(size=(2 * dim_r,) * 2)
    rho = a @ a.conj().T
    rho /= np.trace(rho)
    for t in (0.0, 0.05, 0.2, 0.3):
        assert np.abs(gen(t, rho) - dense.rhs(t, rho)).max() < 1e-9 * np.abs(dense.rhs(t, rho)).max()


def test_lab_and_displaced_frames_agree(device):
    params = OPERATING.replace(hold_us=0.12)
    lab = run_reset(params, device, "e", dim_r=25, frame="lab")
    disp = run_reset(params, device, "e", dim_r=DISPLACED_DIM)
    assert lab[0] == pytest.approx(disp[0], abs=1e-6)
    assert lab[2] == pytest.approx(disp[2], abs=1e-4)


def test_lab_frame_needs_large_resonator(device):
    with pytest.raises(ValueError):
        run_reset(OPERATING, device, "e", dim_r=10, frame="lab")


def test_undriven_ancilla_is_left_alone(device):
    # no drives and no qubit detuning: only decoherence acts during the window
    params = OPERATING.replace(rabi_mhz=0.0, drive_mhz=0.0, qubit_detuning_mhz=0.0, stark_tracking=False)
    bound = params.duration / device.t1_q + params.duration / device.tphi_q
    assert run_reset(params, device, "g")[0] >= 1 - bound
    assert run_reset(params, device, "e")[0] <= bound


def test_residual_photons_need_extra_wait(device):
    # leftover photons after a reset from |e> take a few hundred ns to leak out
    _, _, photons, wait_ns = run_reset(OPERATING, device, "e")
    assert photons > 1e-3
    assert 300 <= wait_ns <= 500


def test_zero_duration_reset_has_no_phases(device):
    table = calibrate_reset_phases(OPERATING.replace(ramp_us=0.0, hold_us=0.0), device, n_max=3)
    assert np.allclose(table.phases_g, 0) and np.allclose(table.phases_e, 0)


@pytest.fixture(scope="module")
def table(device):
    return calibrate_reset_phases(OPERATING, device)


def test_phases_linear_in_photon_number(table):
    for slope, resid in ((table.slope_g, table.residual_g), (table.slope_e, table.residual_e)):
        assert resid < 0.05 * abs(slope)


def test_doubling_hold_doubles_phase(device):
    # unramped drive so every photon-number phase accrues at a fixed rate
    base = OPERATING.replace(ramp_us=0.0, hold_us=0.1)
    one = calibrate_reset_phases(base, device, n_max=3)
    two = calibrate_reset_phases(base.replace(hold_us=0.2), device, n_max=3)
    assert two.slope_g == pytest.approx(2 * one.slope_g, rel=0.05)


def test_channel_is_cptp():
    rng = np.random.default_rng(2)
    table = ResetPhaseTable(np.array([0, 0.3, 0.7]), np.array([0, -0.2, 0.5]))
    basis = (np.array([1, 0, 0], complex), np.array([0, 0, 1], complex))
    ch = ResetChannel(3, table, 0.02, basis)
    choi = ch.choi()
    assert np.linalg.eigvalsh(0.5 * (choi + choi.conj().T)).min() > -1e-8
    a = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    rho = a @ a.conj().T
    rho /= np.trace(rho)
    assert np.trace(ch(rho)) == pytest.approx(1.0)


def test_channel_ground_input_unchanged():
    ch = reset_channel(None, None, None, cavity_dim=4)
    psi = np.kron(np.array([0.6, 0, 0.8, 0]), [1, 0]).astype(complex)
    rho = np.outer(psi, psi.conj())
    assert np.allclose(ch(rho), rho)


def test_channel_excited_input_goes_to_ground_with_phases():
    phases = np.array([0.0, 0.4, 1.1, 1.5])
    ch = ResetChannel(4, ResetPhaseTable(np.zeros(4), phases))
    c = np.array([0.6, 0, 0.8, 0], complex)
    rho = np.outer(np.kron(c, [0, 1]), np.kron(c, [0, 1]).conj())
    expect = np.kron(c * np.exp(1j * phases), [1, 0])
    assert np.allclose(ch(rho), np.outer(expect, expect.conj()))
