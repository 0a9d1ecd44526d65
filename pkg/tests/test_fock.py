import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aqec_sim.fock import (
    HilbertSpec,
    build_operators,
    destroy,
    dm,
    ket,
    partial_trace,
    system_hamiltonian,
    wigner,
)


def test_ladder_commutator_below_truncation():
    a = destroy(8)
    comm = a @ a.conj().T - a.conj().T @ a
    assert np.allclose(np.diag(comm)[:-1], 1.0)
    assert comm[-1, -1] == pytest.approx(-7.0)


def test_index_order_is_cavity_qubit_resonator():
    spec = HilbertSpec(cavity_dim=4, qubit_dim=2, resonator_dim=3)
    psi = ket(spec, 2, 1, 1)
    assert np.argmax(np.abs(psi)) == (2 * 2 + 1) * 3 + 1


def test_hamiltonian_is_hermitian_and_diagonal_in_fock_basis(device):
    spec = HilbertSpec(cavity_dim=6, qubit_dim=2, resonator_dim=3)
    for frame in ("lab", "rotating", "dispersive-two-level"):
        h = system_hamiltonian(device, spec, frame).matrix
        assert np.allclose(h, h.conj().T)
        assert np.allclose(h, np.diag(np.diag(h)))


def test_dispersive_shift_per_photon(device):
    spec = HilbertSpec(cavity_dim=5, qubit_dim=2, resonator_dim=1)
    h = np.real(np.diag(system_hamiltonian(device.replace(kerr_c=0.0, chi_prime_qc=0.0), spec).matrix))
    # E(n, e) - E(n, g) = -chi n
    shift = h[1::2] - h[0::2]
    assert np.allclose(shift, -2 * math.pi * 0.88 * np.arange(5))


def test_unknown_frame_rejected(device):
    with pytest.raises(ValueError, match="unknown frame"):
        system_hamiltonian(device, HilbertSpec(cavity_dim=3, qubit_dim=2, resonator_dim=1), "interaction")


def test_partial_trace_of_product():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    ra = a @ a.conj().T
    ra /= np.trace(ra)
    rb = np.diag([0.25, 0.75])
    out = partial_trace(np.kron(ra, rb), [3, 2], [0])
    assert np.allclose(out, ra)


def test_pauli_algebra():
    ops = build_operators(HilbertSpec(cavity_dim=2, qubit_dim=2, resonator_dim=1))
    sx, sy, sz = ops.sx.matrix, ops.sy.matrix, ops.sz.matrix
    assert np.allclose(sx @ sy - sy @ sx, 2j * sz)


def test_wigner_vacuum_closed_form():
    grid = wigner(np.eye(6)[0], extent=3.0, points=31)
    xx, pp = np.meshgrid(grid.x, grid.p, indexing="ij")
    assert np.allclose(grid.values, np.exp(-xx**2 - pp**2) / math.pi, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.complex_numbers(max_magnitude=1.0, allow_nan=False, allow_infinity=False), min_size=6, max_size=6))
def test_wigner_origin_is_parity_over_pi(amps):
    v = np.array(amps + [0, 0, 0, 0], dtype=complex)
    if np.linalg.norm(v) < 1e-3:
        return
    v /= np.linalg.norm(v)
    w0 = wigner(v, x=[0.0], p=[0.0]).values[0, 0]
    parity = sum((-1) ** n * abs(c) ** 2 for n, c in enumerate(v))
    assert w0 == pytest.approx(parity / math.pi, abs=1e-12)


def test_wigner_integrates_to_one():
    v = np.zeros(10, complex)
    v[0] = v[4] = 1 / math.sqrt(2)
    assert wigner(dm(v), extent=7.0, points=201).integral() == pytest.approx(1.0, abs=1e-6)


def test_wigner_rejects_truncated_state():
    v = np.zeros(5)
    v[4] = 1
    with pytest.raises(ValueError, match="truncation"):
        wigner(v)
