import json
import math

import numpy as np
import pytest
import scipy.linalg as sla

from aqec_sim.codes import code_by_name
from aqec_sim.grape import (
    PulseSchedule,
    TransferTarget,
    complete_unitary,
    control_system,
    encode_target,
    fidelity,
    fourier_basis,
    gradient,
    lowdin,
    optimize,
    qubit_ket,
    total_unitary,
)

TWO_PI = 2 * math.pi


def _random_schedule(rng, n_steps=40, dt=0.002, scale=3.0):
    return PulseSchedule(dt, scale * TWO_PI * rng.normal(size=(4, n_steps)) / 10)


def test_fourier_round_trip():
    basis = fourier_basis(0.4, 0.002, 50.0)
    rng = np.random.default_rng(0)
    coeffs = rng.normal(size=(4, basis.n_coeffs))
    back = basis.coefficients(basis.samples(coeffs))
    assert np.abs(back - coeffs).max() < 1e-10


def test_fourier_basis_spacing_and_cutoff():
    basis = fourier_basis(2.0, 0.002, 50.0)
    assert basis.delta_f == pytest.approx(0.5)
    assert basis.frequencies.max() <= 50.0
    assert basis.harmonics == 100


def test_cutoff_above_nyquist_rejected():
    with pytest.raises(ValueError):
        fourier_basis(0.02, 0.002, 500.0)


def test_total_unitary_matches_stepwise_expm(device):
    rng = np.random.default_rng(1)
    system = control_system(device, 4)
    sched = _random_schedule(rng, n_steps=15)
    ref = np.eye(8, dtype=complex)
    for j in range(sched.n_steps):
        h = system.drift + sum(sched.controls[k, j] * op for k, op in enumerate(system.controls))
        ref = sla.expm(-1j * h * sched.dt) @ ref
    assert np.abs(total_unitary(system, sched) - ref).max() < 1e-10


def test_fidelity_is_normalized_overlap(device):
    rng = np.random.default_rng(2)
    code = code_by_name("binomial")
    target = encode_target(code, 6)
    sched = _random_schedule(rng)
    u = total_unitary(control_system(device, 6), sched)
    overlap = np.trace(target.outputs.conj().T @ u @ target.inputs)
    assert fidelity(sched, target, device) == pytest.approx(abs(overlap) ** 2 / 4, abs=1e-12)


def _fd_check(sched, target, device, idx, h=1e-4):
    analytic = gradient(sched, target, device)
    out = []
    for k, j in idx:
        up = sched.controls.copy()
        dn = sched.controls.copy()
        up[k, j] += h
        dn[k, j] -= h
        fd = (fidelity(PulseSchedule(sched.dt, up), target, device)
              - fidelity(PulseSchedule(sched.dt, dn), target, device)) / (2 * h)
        out.append((analytic[k, j], fd))
    return np.array(out)


def test_gradient_matches_finite_differences(device):
    rng = np.random.default_rng(3)
    target = encode_target(code_by_name("binomial"), 5)
    sched = _random_schedule(rng, n_steps=40)
    idx = [(int(rng.integers(4)), int(rng.integers(40))) for _ in range(50)]
    pairs = _fd_check(sched, target, device, idx)
    scale = np.abs(pairs[:, 1]).max()
    assert np.abs(pairs[:, 0] - pairs[:, 1]).max() < 1e-5 * scale


def test_fourier_gradient_is_chain_rule(device):
    rng = np.random.default_rng(4)
    basis = fourier_basis(0.08, 0.002, 50.0)
    coeffs = rng.normal(size=(4, basis.n_coeffs))
    sched = PulseSchedule(0.002, basis.samples(coeffs), basis, coeffs)
    target = encode_target(code_by_name("binomial"), 5)
    g = gradient(sched, target, device)
    h = 1e-5
    for k, c in ((0, 0), (2, 1), (3, basis.n_coeffs - 1)):
        up, dn = coeffs.copy(), coeffs.copy()
        up[k, c] += h
        dn[k, c] -= h
        fd = (fidelity(PulseSchedule(0.002, basis.samples(up)), target, device)
              - fidelity(PulseSchedule(0.002, basis.samples(dn)), target, device)) / (2 * h)
        assert g[k, c] == pytest.approx(fd, rel=1e-5, abs=1e-9)


@pytest.mark.filterwarnings("ignore:duration")
def test_qubit_flip_converges(device):
    vac = np.zeros(4, complex)
    vac[0] = 1
    target = TransferTarget.from_pairs([(np.kron(vac, qubit_ket("g")), np.kron(vac, qubit_ket("e")))], 4)
    sched, report = optimize(target, device, duration=0.1, max_iter=200, seed=1)
    assert report.converged
    assert fidelity(sched, target, device) >= 0.999


def test_schedule_json_round_trip():
    rng = np.random.default_rng(5)
    basis = fourier_basis(0.1, 0.002, 50.0)
    coeffs = rng.normal(size=(4, basis.n_coeffs))
    sched = PulseSchedule(0.002, basis.samples(coeffs), basis, coeffs)
    back = PulseSchedule.from_dict(json.loads(json.dumps(sched.to_dict())))
    assert back.parameterization == "fourier"
    assert np.allclose(back.controls, sched.controls, atol=1e-12)
    assert np.allclose(back.coefficients, sched.coefficients, atol=1e-12)


def test_amplitude_cap_enforced():
    controls = np.zeros((4, 10))
    controls[0, 3] = TWO_PI * 41.0
    with pytest.raises(ValueError):
        PulseSchedule(0.002, controls)
    controls[0, 3] = 0.0
    controls[2, 3] = TWO_PI * 11.0
    with pytest.raises(ValueError):
        PulseSchedule(0.002, controls)


@pytest.mark.filterwarnings("ignore:duration")
def test_optimized_schedule_respects_caps(device):
    vac = np.zeros(4, complex)
    vac[0] = 1
    target = TransferTarget.from_pairs([(np.kron(vac, qubit_ket("g")), np.kron(vac, qubit_ket("e")))], 4)
    sched, _ = optimize(target, device, duration=0.04, max_iter=30, qubit_cap_mhz=5.0)
    assert np.abs(sched.qubit_envelope).max() <= TWO_PI * 5.0 * (1 + 1e-9)


def test_complete_unitary():
    rng = np.random.default_rng(6)
    q_in, _ = np.linalg.qr(rng.normal(size=(8, 3)) + 1j * rng.normal(size=(8, 3)))
    q_out, _ = np.linalg.qr(rng.normal(size=(8, 3)) + 1j * rng.normal(size=(8, 3)))
    u = complete_unitary(q_in, q_out)
    assert np.abs(u.conj().T @ u - np.eye(8)).max() < 1e-10
    assert np.abs(u @ q_in - q_out).max() < 1e-10


def test_lowdin_orthonormalizes_and_stays_close():
    rng = np.random.default_rng(7)
    base, _ = np.linalg.qr(rng.normal(size=(6, 3)))
    noisy = base + 0.01 * rng.normal(size=(6, 3))
    out = lowdin(noisy)
    assert np.abs(out.conj().T @ out - np.eye(3)).max() < 1e-12
    assert np.abs(out - base).max() < 0.05


def test_lowdin_refuses_large_overlap():
    v = np.array([[1.0, 1.0], [0.0, 0.2]])
    with pytest.raises(ValueError):
        lowdin(v)


def test_target_requires_orthonormal_states():
    vac = np.zeros(3, complex)
    vac[0] = 1
    s = np.kron(vac, qubit_ket("g"))
    with pytest.raises(ValueError):
        TransferTarget.from_pairs([(s, s), (s, s)], 3)


def test_short_duration_warns(device):
    vac = np.zeros(3, complex)
    vac[0] = 1
    target = TransferTarget.from_pairs([(np.kron(vac, qubit_ket("g")), np.kron(vac, qubit_ket("e")))], 3)
    with pytest.warns(UserWarning, match="pi/chi_qc"):
        optimize(target, device, duration=0.02, max_iter=1)
