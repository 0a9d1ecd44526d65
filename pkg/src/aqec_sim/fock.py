"""Truncated Fock-space operators, states and Wigner functions.

The joint space is always ordered (cavity, qubit, resonator).  A resonator
dimension of 1 means the resonator is not part of the model.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np
from scipy.special import eval_genlaguerre, gammaln

from .config import DeviceParams

DEFAULT_DIM_CAP = 4096
FRAMES = ("lab", "rotating", "dispersive-two-level")


@dataclass(frozen=True)
class HilbertSpec:
    cavity_dim: int = 12
    qubit_dim: int = 2
    resonator_dim: int = 1
    dim_cap: int = DEFAULT_DIM_CAP

    def __post_init__(self) -> None:
        if self.cavity_dim < 2:
            raise ValueError(f"cavity_dim must be >= 2, got {self.cavity_dim}")
        if self.qubit_dim not in (2, 3):
            raise ValueError(f"qubit_dim must be 2 or 3, got {self.qubit_dim}")
        if self.resonator_dim < 1:
            raise ValueError(f"resonator_dim must be >= 1, got {self.resonator_dim}")
        if self.total > self.dim_cap:
            raise ValueError(f"total dimension {self.total} exceeds cap {self.dim_cap}")

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.cavity_dim, self.qubit_dim, self.resonator_dim)

    @property
    def total(self) -> int:
        return self.cavity_dim * self.qubit_dim * self.resonator_dim


@dataclass(frozen=True, eq=False)
class FockOperator:
    spec: HilbertSpec
    matrix: np.ndarray
    hermitian: bool = False

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (self.spec.total, self.spec.total):
            raise ValueError(f"matrix shape {m.shape} does not match dimension {self.spec.total}")
        if self.hermitian and np.max(np.abs(m - m.conj().T), initial=0.0) >= 1e-12:
            raise ValueError("operator flagged hermitian is not hermitian to 1e-12")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dag(self) -> "FockOperator":
        return FockOperator(self.spec, self.matrix.conj().T, self.hermitian)

    def __matmul__(self, other):
        if isinstance(other, FockOperator):
            return FockOperator(self.spec, self.matrix @ other.matrix)
        return self.matrix @ other

    def __add__(self, other: "FockOperator") -> "FockOperator":
        return FockOperator(self.spec, self.matrix + other.matrix, self.hermitian and other.hermitian)

    def __sub__(self, other: "FockOperator") -> "FockOperator":
        return FockOperator(self.spec, self.matrix - other.matrix, self.hermitian and other.hermitian)

    def __mul__(self, scalar) -> "FockOperator":
        keep = self.hermitian and np.isreal(scalar)
        return FockOperator(self.spec, scalar * self.matrix, bool(keep))

    __rmul__ = __mul__

    def expect(self, state: np.ndarray) -> complex:
        state = np.asarray(state)
        if state.ndim == 1:
            return complex(np.vdot(state, self.matrix @ state))
        return complex(np.trace(self.matrix @ state))


def destroy(dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1).astype(complex)


def number(dim: int) -> np.ndarray:
    return np.diag(np.arange(dim, dtype=float)).astype(complex)


def basis(dim: int, n: int) -> np.ndarray:
    if not 0 <= n < dim:
        raise ValueError(f"Fock index {n} outside truncation {dim}")
    v = np.zeros(dim, dtype=complex)
    v[n] = 1.0
    return v


def tensor(*parts: np.ndarray) -> np.ndarray:
    return reduce(np.kron, parts)


def embed(spec: HilbertSpec, op: np.ndarray, slot: int) -> np.ndarray:
    """Place a single-subsystem operator into the joint space."""
    mats = [np.eye(d, dtype=complex) for d in spec.dims]
    mats[slot] = np.asarray(op, dtype=complex)
    return tensor(*mats)


@dataclass(frozen=True)
class OperatorSet:
    spec: HilbertSpec
    a_c: FockOperator
    a_q: FockOperator
    a_r: FockOperator
    n_c: FockOperator
    n_q: FockOperator
    n_r: FockOperator
    parity_c: FockOperator
    sx: FockOperator
    sy: FockOperator
    sz: FockOperator
    sp: FockOperator
    sm: FockOperator
    identity: FockOperator


def build_operators(spec: HilbertSpec) -> OperatorSet:
    """Ladder, number, parity and qubit Pauli operators on the joint space.

    Pauli operators act on the {g, e} subspace of the transmon; for
    ``qubit_dim == 3`` the second excited level is left untouched.
    """
    dc, dq, dr = spec.dims
    sm = np.zeros((dq, dq), dtype=complex)
    sm[0, 1] = 1.0
    sx = sm + sm.T
    sy = 1j * sm - 1j * sm.T
    sz = np.zeros((dq, dq), dtype=complex)
    sz[0, 0], sz[1, 1] = -1.0, 1.0  # |e> carries +1
    parity = np.diag((-1.0) ** np.arange(dc)).astype(complex)

    def op(m, slot, herm=False):
        return FockOperator(spec, embed(spec, m, slot), herm)

    return OperatorSet(
        spec=spec,
        a_c=op(destroy(dc), 0),
        a_q=op(destroy(dq), 1),
        a_r=op(destroy(dr), 2),
        n_c=op(number(dc), 0, True),
        n_q=op(number(dq), 1, True),
        n_r=op(number(dr), 2, True),
        parity_c=op(parity, 0, True),
        sx=op(sx, 1, True),
        sy=op(sy, 1, True),
        sz=op(sz, 1, True),
        sp=op(sm.T.copy(), 1),
        sm=op(sm, 1),
        identity=FockOperator(spec, np.eye(spec.total, dtype=complex), True),
    )


def system_hamiltonian(params: DeviceParams, spec: HilbertSpec, frame: str = "rotating") -> FockOperator:
    """Dispersive cavity-transmon-resonator Hamiltonian in rad/µs.

    H = -K_c/2 a_c†² a_c² - K_q/2 a_q†² a_q² - chi_qc n_q n_c - chi_qr n_q n_r
        + chi'_qc/2 n_q a_c†² a_c²   (+ bare mode energies in the lab frame)
    The resonator self-Kerr is taken as zero.
    """
    if frame not in FRAMES:
        raise ValueError(f"unknown frame {frame!r}; valid: {', '.join(FRAMES)}")
    if frame == "dispersive-two-level" and spec.qubit_dim != 2:
        raise ValueError("dispersive-two-level frame requires qubit_dim == 2")
    w = params.angular
    ops = build_operators(spec)
    n_c, n_q, n_r = ops.n_c.matrix, ops.n_q.matrix, ops.n_r.matrix
    a_c, a_q = ops.a_c.matrix, ops.a_q.matrix
    kerr_c_op = a_c.conj().T @ a_c.conj().T @ a_c @ a_c
    h = -0.5 * w.kerr_c * kerr_c_op
    h = h - w.chi_qc * n_q @ n_c - w.chi_qr * n_q @ n_r
    h = h + 0.5 * w.chi_prime_qc * n_q @ kerr_c_op
    if spec.qubit_dim == 3:
        h = h - 0.5 * w.kerr_q * a_q.conj().T @ a_q.conj().T @ a_q @ a_q
    if frame == "lab":
        if None in (w.omega_c, w.omega_q, w.omega_r):
            raise ValueError("lab frame needs all three mode frequencies")
        h = h + w.omega_c * n_c + w.omega_q * n_q + w.omega_r * n_r
    h = 0.5 * (h + h.conj().T)
    return FockOperator(spec, h, hermitian=True)


# ---------------------------------------------------------------- states

def ket(spec: HilbertSpec, cavity, qubit=0, resonator=0) -> np.ndarray:
    """Product state.  Each factor is an int (Fock index) or an amplitude vector."""
    parts = []
    for dim, f in zip(spec.dims, (cavity, qubit, resonator)):
        if isinstance(f, (int, np.integer)):
            parts.append(basis(dim, int(f)))
        else:
            v = np.zeros(dim, dtype=complex)
            f = np.asarray(f, dtype=complex)
            if f.size > dim:
                if np.linalg.norm(f[dim:]) > 1e-12:
                    raise ValueError("state support exceeds truncation")
                f = f[:dim]
            v[: f.size] = f
            parts.append(v)
    return tensor(*parts)


def dm(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def check_state(psi: np.ndarray, tol: float = 1e-10) -> None:
    norm = np.linalg.norm(psi)
    if abs(norm - 1) > tol:
        raise ValueError(f"state norm {norm} differs from 1")


def check_density(rho: np.ndarray, tol: float = 1e-10, eig_tol: float = 1e-9) -> None:
    tr = np.trace(rho).real
    if abs(tr - 1) > tol:
        raise ValueError(f"trace {tr} differs from 1")
    herm = 0.5 * (rho + rho.conj().T)
    if np.linalg.eigvalsh(herm).min() < -eig_tol:
        raise ValueError("density operator is not positive semidefinite")


def partial_trace(rho: np.ndarray, dims, keep) -> np.ndarray:
    """Reduced density matrix on the subsystems listed in ``keep``."""
    dims = list(dims)
    keep = sorted(keep)
    n = len(dims)
    t = np.asarray(rho).reshape(dims + dims)
    drop = [i for i in range(n) if i not in keep]
    for count, i in enumerate(sorted(drop, reverse=True)):
        width = t.ndim // 2
        t = np.trace(t, axis1=i, axis2=i + width)
    d = int(np.prod([dims[i] for i in keep]))
    return t.reshape(d, d)


def cavity_state(rho: np.ndarray, spec: HilbertSpec) -> np.ndarray:
    rho = np.asarray(rho)
    if rho.ndim == 1:
        rho = dm(rho)
    return partial_trace(rho, spec.dims, [0])


# ---------------------------------------------------------------- Wigner

@dataclass(frozen=True, eq=False)
class WignerGrid:
    x: np.ndarray
    p: np.ndarray
    values: np.ndarray  # values[i, j] = W(x[i], p[j])

    def integral(self) -> float:
        return float(np.trapezoid(np.trapezoid(self.values, self.p, axis=1), self.x))


def wigner(rho: np.ndarray, extent: float = 6.0, points: int = 121, x=None, p=None) -> WignerGrid:
    """Displaced-parity Wigner function of a single-mode state.

    Phase-space coordinates use alpha = (x + i p)/sqrt(2), so the vacuum is
    exp(-x^2 - p^2)/pi.  Evaluated with the closed Laguerre form of the
    Fock-basis matrix elements, which is exact for the truncated state.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim == 1:
        rho = dm(rho)
    dim = rho.shape[0]
    pops = np.real(np.diag(rho))
    if dim >= 3 and pops[-2:].sum() > 1e-3:
        raise ValueError("truncation too small: population in the top two Fock levels exceeds 1e-3")
    x = np.linspace(-extent, extent, points) if x is None else np.asarray(x, float)
    p = np.linspace(-extent, extent, points) if p is None else np.asarray(p, float)
    alpha = (x[:, None] + 1j * p[None, :]) / np.sqrt(2.0)
    r2 = 4.0 * np.abs(alpha) ** 2
    w = np.zeros(alpha.shape)
    for m in range(dim):
        if abs(rho[m, m]) > 0:
            w += np.real(rho[m, m]) * (-1) ** m * eval_genlaguerre(m, 0, r2)
        for n in range(m + 1, dim):
            if abs(rho[m, n]) == 0:
                continue
            k = n - m
            scale = np.exp(0.5 * (gammaln(m + 1) - gammaln(n + 1)))
            term = rho[m, n] * (-1) ** m * (2 * alpha) ** k * scale * eval_genlaguerre(m, k, r2)
            w += 2.0 * np.real(term)
    w *= np.exp(-0.5 * r2) / np.pi
    return WignerGrid(x=x, p=p, values=w)
