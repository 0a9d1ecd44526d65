import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aqec_sim.dynamics import (
    PAULIS,
    LindbladModel,
    compose_chi,
    evolve,
    evolve_series,
    fit_exponential,
    liouvillian,
    process_fidelity,
    process_tomography,
    propagator,
    sampled_drive,
    unitary_chi,
)


def _random_model(seed, dim=4, n_ops=2):
    rng = np.random.default_rng(seed)
    h = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    h = h + h.conj().T
    cops = tuple((rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim)), float(rng.uniform(0.05, 0.5)))
                 for _ in range(n_ops))
    return LindbladModel(h, cops)


def _random_density(seed, dim=4):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    r = a @ a.conj().T
    return r / np.trace(r)


def test_integrator_matches_matrix_exponential():
    model = _random_model(0)
    rho0 = _random_density(1)
    t = 1.3
    exact = (propagator(model, t) @ rho0.reshape(-1)).reshape(4, 4)
    assert np.abs(evolve(model, rho0, t, rtol=1e-10, atol=1e-12) - exact).max() < 1e-7


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_trace_and_positivity_preserved(seed):
    model = _random_model(seed)
    states = evolve_series(model, _random_density(seed + 1), np.linspace(0, 2.0, 5))
    for s in states:
        assert abs(np.trace(s) - 1) < 1e-7
        assert np.linalg.eigvalsh(s).min() > -1e-8


def test_liouvillian_annihilates_trace():
    sup = liouvillian(_random_model(3))
    # d/dt Tr(rho) = vec(I)^T L vec(rho) = 0 for every rho
    assert np.abs(np.eye(4).reshape(-1) @ sup).max() < 1e-10


def test_time_dependent_rabi():
    sx = PAULIS[1]
    omega = 2 * math.pi * 2.0
    times = np.linspace(0, 1.0, 11)
    drive = sampled_drive(times, np.full(times.size, omega / 2))
    model = LindbladModel(np.zeros((2, 2)), (), ((sx, drive),))
    rho = evolve(model, np.diag([1.0, 0.0]).astype(complex), 0.1, rtol=1e-10, atol=1e-12)
    assert rho[1, 1].real == pytest.approx(math.sin(omega * 0.1 / 2) ** 2, abs=1e-8)


def test_propagator_rejects_time_dependence():
    model = LindbladModel(np.zeros((2, 2)), (), ((PAULIS[1], lambda t: 1.0),))
    with pytest.raises(ValueError):
        propagator(model, 1.0)


def test_chi_identity():
    chi = process_tomography(lambda r: r, workers=1)
    expect = np.zeros((4, 4))
    expect[0, 0] = 1
    assert np.allclose(chi.matrix, expect, atol=1e-12)


@pytest.mark.parametrize("p", [0.0, 0.3, 1.0])
def test_chi_depolarizing(p):
    chi = process_tomography(lambda r: (1 - p) * r + p * np.trace(r) * np.eye(2) / 2, workers=1)
    assert np.allclose(chi.matrix, np.diag([1 - 3 * p / 4, p / 4, p / 4, p / 4]), atol=1e-12)
    assert chi.trace == pytest.approx(1.0)


def test_chi_bit_flip():
    x = PAULIS[1]
    chi = process_tomography(lambda r: x @ r @ x, workers=2)
    assert chi.matrix[1, 1].real == pytest.approx(1.0)
    assert process_fidelity(chi, unitary_chi(np.eye(2))) == pytest.approx(0.0, abs=1e-12)


def test_chi_composition():
    x = unitary_chi(PAULIS[1])
    assert process_fidelity(compose_chi(x, x), unitary_chi(np.eye(2))) == pytest.approx(1.0)


def test_exponential_fit_recovers_parameters():
    t = np.linspace(0, 2000, 14)
    y = 0.7 * np.exp(-t / 850.0) + 0.25
    fit = fit_exponential(t, y)
    assert fit.tau == pytest.approx(850.0, rel=1e-8)
    assert fit.amplitude == pytest.approx(0.7, rel=1e-8)


def test_exponential_fit_rejects_short_series():
    from aqec_sim.dynamics import FitError

    with pytest.raises(FitError):
        fit_exponential([0, 1, 2], [1, 0.5, 0.3])
