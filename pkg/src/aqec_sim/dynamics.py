"""Master-equation integration, process tomography and decay fits."""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.interpolate import CubicSpline
from scipy.optimize import least_squares

from .config import DeviceParams
from .fock import FockOperator, HilbertSpec, build_operators

PAULIS = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]]),
    np.array([[1, 0], [0, -1]], dtype=complex),
)
PAULI_LABELS = ("I", "X", "Y", "Z")
FIT_OFFSET = 0.25


class IntegrationError(RuntimeError):
    pass


class FitError(RuntimeError):
    pass


def thread_cap() -> int:
    try:
        return max(1, int(os.environ.get("AQEC_SIM_THREADS", "4")))
    except ValueError:
        return 1


# ------------------------------------------------------------------ model

def _mat(op) -> np.ndarray:
    return op.matrix if isinstance(op, FockOperator) else np.asarray(op, dtype=complex)


@dataclass(frozen=True, eq=False)
class LindbladModel:
    """H(t) = H0 + sum_k f_k(t) * V_k with dissipators D[sqrt(rate) * L].

    ``drives`` holds (hermitian operator, real-valued function of t in µs).
    """

    hamiltonian: np.ndarray
    collapse_ops: tuple = ()
    drives: tuple = ()

    def __post_init__(self) -> None:
        h = _mat(self.hamiltonian)
        object.__setattr__(self, "hamiltonian", h)
        cops = []
        for op, rate in self.collapse_ops:
            if not rate >= 0:
                raise ValueError(f"collapse rate must be >= 0, got {rate}")
            if rate > 0:
                cops.append((_mat(op), float(rate)))
        object.__setattr__(self, "collapse_ops", tuple(cops))
        object.__setattr__(self, "drives", tuple((_mat(v), f) for v, f in self.drives))
        # cached pieces of the right-hand side
        jumps = [math.sqrt(r) * op for op, r in cops]
        object.__setattr__(self, "_jumps", jumps)
        object.__setattr__(self, "_jumps_dag", [j.conj().T for j in jumps])
        loss = sum((j.conj().T @ j for j in jumps), np.zeros_like(h))
        object.__setattr__(self, "_heff", h - 0.5j * loss)

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]

    @property
    def time_dependent(self) -> bool:
        return bool(self.drives)

    def h_eff(self, t: float) -> np.ndarray:
        """Non-hermitian H - i/2 sum L†L at time t."""
        h = self._heff
        for v, f in self.drives:
            c = f(t)
            if c:
                h = h + c * v
        return h

    def rhs(self, t: float, rho: np.ndarray) -> np.ndarray:
        h = self.h_eff(t)
        hr = h @ rho
        out = -1j * (hr - hr.conj().T)  # uses rho hermitian: (H rho)† = rho H†
        for j, jd in zip(self._jumps, self._jumps_dag):
            out += j @ rho @ jd
        return out

    def with_hamiltonian(self, extra: np.ndarray) -> "LindbladModel":
        return LindbladModel(self.hamiltonian + _mat(extra), self.collapse_ops, self.drives)


def device_collapse_ops(device: DeviceParams, spec: HilbertSpec, tphi_c: float | None = None,
                        qubit: bool = True, resonator: bool = True) -> list[tuple[np.ndarray, float]]:
    """Thermal loss/gain and pure dephasing for each mode.

    Dephasing enters as D[sqrt(2/T_phi) n] so a {0,1} coherence decays at 1/T_phi.
    """
    ops = build_operators(spec)
    w = device.angular
    gphi_c = w.gamma_phi_c if tphi_c is None else (0.0 if math.isinf(tphi_c) else 1.0 / tphi_c)
    out = [
        (ops.a_c.matrix, (1 + w.nth_c) * w.kappa_c),
        (ops.a_c.dag.matrix, w.nth_c * w.kappa_c),
        (ops.n_c.matrix, 2 * gphi_c),
    ]
    if qubit:
        out += [
            (ops.a_q.matrix, (1 + w.nth_q) * w.kappa_q),
            (ops.a_q.dag.matrix, w.nth_q * w.kappa_q),
            (ops.n_q.matrix, 2 * w.gamma_phi_q),
        ]
    if resonator and spec.resonator_dim > 1:
        out += [
            (ops.a_r.matrix, (1 + w.nth_r) * w.kappa_r),
            (ops.a_r.dag.matrix, w.nth_r * w.kappa_r),
        ]
    return out


def sampled_drive(times: np.ndarray, values: np.ndarray) -> Callable[[float], float]:
    """Cubic interpolation of a real control sampled at ``times``; zero outside."""
    spline = CubicSpline(times, values)
    t0, t1 = float(times[0]), float(times[-1])

    def f(t):
        return float(spline(t)) if t0 <= t <= t1 else 0.0

    return f


# ------------------------------------------------------------ integrator

# Dormand-Prince 5(4) tableau
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40)
_E = tuple(b5 - b4 for b5, b4 in zip(_B5, _B4))


def _dp45(f, t0, y0, t_stops, rtol, atol, h0, max_step, min_step):
    """Adaptive Dormand-Prince; returns y at each of the sorted ``t_stops``."""
    t, y = t0, y0
    k1 = f(t, y)
    h = h0 or min(max_step, (t_stops[-1] - t0) / 100 or 1.0)
    out = []
    for stop in t_stops:
        while stop - t > 1e-14 * max(1.0, abs(stop)):
            h = min(h, max_step, stop - t)
            if h < min_step:
                raise IntegrationError(
                    f"step size underflow at t={t:.6g} µs (h={h:.3g}); the problem is stiff at this "
                    "tolerance: lower the truncation, loosen rtol/atol, or use the expm propagator"
                )
            ks = [k1]
            for i in range(1, 7):
                yi = y + h * sum(a * k for a, k in zip(_A[i], ks) if a)
                ks.append(f(t + _C[i] * h, yi))
            y_new = y + h * sum(b * k for b, k in zip(_B5, ks) if b)
            err = h * sum(e * k for e, k in zip(_E, ks) if e)
            scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
            en = float(np.max(np.abs(err) / scale))
            if en <= 1.0:
                t, y, k1 = t + h, y_new, ks[6]
                h *= min(5.0, 0.9 * en ** -0.2) if en > 0 else 5.0
            else:
                h *= max(0.2, 0.9 * en ** -0.2)
        out.append(y)
    return out


def evolve_series(model: LindbladModel, rho0: np.ndarray, times: Sequence[float], rtol: float = 1e-8,
                  atol: float = 1e-10, max_step: float = math.inf, min_step: float = 1e-12) -> np.ndarray:
    """States at each requested time (µs, non-decreasing, first >= 0)."""
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        return np.zeros((0,) + rho0.shape, dtype=complex)
    if np.any(np.diff(times) < 0) or times[0] < 0:
        raise ValueError("times must be non-negative and non-decreasing")
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape != (model.dim, model.dim):
        raise ValueError(f"state shape {rho0.shape} does not match model dimension {model.dim}")
    states = _dp45(model.rhs, 0.0, rho0, list(times), rtol, atol, None, max_step, min_step)
    return np.array([0.5 * (s + s.conj().T) for s in states])


def evolve(model: LindbladModel, rho0: np.ndarray, t: float, rtol: float = 1e-8, atol: float = 1e-10,
           max_step: float = math.inf, min_step: float = 1e-12) -> np.ndarray:
    """rho(t) by adaptive Dormand-Prince 5(4) on the density matrix."""
    return evolve_series(model, rho0, [t], rtol, atol, max_step, min_step)[0]


def liouvillian(model: LindbladModel, t: float = 0.0) -> np.ndarray:
    """Superoperator acting on row-major vec(rho)."""
    d = model.dim
    eye = np.eye(d)
    h = model.h_eff(t)
    sup = -1j * (np.kron(h, eye) - np.kron(eye, h.conj()))
    for j in model._jumps:
        sup += np.kron(j, j.conj())
    return sup


def propagator(model: LindbladModel, t: float) -> np.ndarray:
    """exp(L t) for a time-independent model."""
    if model.time_dependent:
        raise ValueError("propagator needs a time-independent model; use evolve")
    return sla.expm(liouvillian(model) * t)


def apply_superop(sup: np.ndarray, rho: np.ndarray) -> np.ndarray:
    return (sup @ rho.reshape(-1)).reshape(rho.shape)


def evolve_no_jump(model: LindbladModel, psi0: np.ndarray, t: float) -> np.ndarray:
    """Normalized exp(-i H_eff t) psi0 for a time-independent model."""
    if model.time_dependent:
        raise ValueError("evolve_no_jump needs a time-independent model")
    psi = sla.expm(-1j * model.h_eff(0.0) * t) @ np.asarray(psi0, dtype=complex)
    norm = np.linalg.norm(psi)
    if norm < 1e-150:
        raise IntegrationError("no-jump norm underflow; shorten t")
    return psi / norm


# ----------------------------------------------------------- tomography

def _pauli_transfer_basis() -> np.ndarray:
    # column (m, n) is vec(P_m (.) P_n†) as a superoperator, flattened
    cols = [np.kron(pm, pn.conj()).reshape(-1) for pm in PAULIS for pn in PAULIS]
    return np.array(cols).T


_BASIS = _pauli_transfer_basis()


@dataclass(frozen=True, eq=False)
class ChiMatrix:
    """Process matrix in the Pauli basis: E(rho) = sum chi_mn P_m rho P_n†."""

    matrix: np.ndarray
    labels: tuple[str, ...] = PAULI_LABELS
    choi_min_eig: float = field(init=False)

    def __post_init__(self) -> None:
        m = 0.5 * (self.matrix + self.matrix.conj().T)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "choi_min_eig", float(np.linalg.eigvalsh(m).min()))

    @property
    def trace(self) -> float:
        return float(np.real(np.trace(self.matrix)))

    @property
    def physical(self) -> bool:
        return self.choi_min_eig >= -1e-6

    def superop(self) -> np.ndarray:
        return chi_to_superop(self.matrix)

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return apply_superop(self.superop(), rho)

    def to_dict(self) -> dict:
        return {
            "basis": list(self.labels),
            "re": np.real(self.matrix).tolist(),
            "im": np.imag(self.matrix).tolist(),
            "trace": self.trace,
            "choi_min_eig": self.choi_min_eig,
        }


def chi_to_superop(chi: np.ndarray) -> np.ndarray:
    return (_BASIS @ np.asarray(chi).reshape(-1)).reshape(4, 4)


def superop_to_chi(sup: np.ndarray) -> ChiMatrix:
    coeffs = np.linalg.solve(_BASIS, np.asarray(sup).reshape(-1))
    return ChiMatrix(coeffs.reshape(4, 4))


def compose_chi(outer: ChiMatrix, inner: ChiMatrix) -> ChiMatrix:
    """chi of outer∘inner (inner applied first)."""
    return superop_to_chi(outer.superop() @ inner.superop())


def unitary_chi(u: np.ndarray) -> ChiMatrix:
    coeffs = np.array([np.trace(p.conj().T @ u) / 2 for p in PAULIS])
    return ChiMatrix(np.outer(coeffs, coeffs.conj()))


TOMOGRAPHY_INPUTS = (
    np.array([1, 0], dtype=complex),
    np.array([0, 1], dtype=complex),
    np.array([1, 1], dtype=complex) / math.sqrt(2),
    np.array([1, -1j]) / math.sqrt(2),
)


def _logical_images(channel, encode, decode, workers):
    rhos = [np.outer(v, v.conj()) for v in TOMOGRAPHY_INPUTS]

    def run(r):
        return np.asarray(decode(channel(encode(r))), dtype=complex)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=min(workers, 4)) as pool:
            return list(pool.map(run, rhos))
    return [run(r) for r in rhos]


def process_tomography(channel: Callable, encode: Callable | None = None, decode: Callable | None = None,
                       workers: int | None = None) -> ChiMatrix:
    """Linear-inversion chi from the inputs |0>, |1>, |+>, |-i>.

    ``encode`` maps a 2x2 logical density matrix to the physical one and
    ``decode`` maps back; both default to identity.
    """
    encode = encode or (lambda r: r)
    decode = decode or (lambda r: r)
    return chi_from_images(_logical_images(channel, encode, decode, workers or thread_cap()))


def chi_from_images(images) -> ChiMatrix:
    """chi from the 2x2 output images of |0>, |1>, |+>, |-i> (in that order)."""
    e0, e1, ep, em = (np.asarray(x, dtype=complex) for x in images)
    # |+><+| = (00 + 01 + 10 + 11)/2, |-i><-i| = (00 + i01 - i10 + 11)/2
    mid = 0.5 * (e0 + e1)
    e01 = (ep - mid) - 1j * (em - mid)
    e10 = (ep - mid) + 1j * (em - mid)
    sup = np.zeros((4, 4), dtype=complex)
    for (i, j), img in zip(((0, 0), (0, 1), (1, 0), (1, 1)), (e0, e01, e10, e1)):
        sup[:, 2 * i + j] = img.reshape(-1)
    return superop_to_chi(sup)


def process_fidelity(chi: ChiMatrix, ideal: ChiMatrix) -> float:
    """Tr(chi_ideal chi), clipped to [0, 1]."""
    f = float(np.real(np.trace(ideal.matrix @ chi.matrix)))
    return min(1.0, max(0.0, f))


# ----------------------------------------------------------------- fits

@dataclass(frozen=True)
class DecayFit:
    amplitude: float
    tau: float
    offset: float
    covariance: np.ndarray
    residual_norm: float

    @property
    def sigma_amplitude(self) -> float:
        return float(math.sqrt(max(self.covariance[0, 0], 0.0)))

    @property
    def sigma_tau(self) -> float:
        return float(math.sqrt(max(self.covariance[1, 1], 0.0)))

    def __call__(self, t):
        return self.amplitude * np.exp(-np.asarray(t) / self.tau) + self.offset


def fit_exponential(t, values, offset: float = FIT_OFFSET, sigma=None) -> DecayFit:
    """Fit values = A exp(-t/tau) + offset with the offset held fixed."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.size < 4 or t.size != y.size:
        raise FitError("need at least 4 (t, value) points")
    if np.any(np.diff(t) <= 0):
        raise FitError("t must be strictly increasing")
    w = np.ones_like(y) if sigma is None else 1.0 / np.asarray(sigma, dtype=float)

    above = y - offset > 1e-12
    if above.sum() >= 2:
        slope, icpt = np.polyfit(t[above], np.log(y[above] - offset), 1)
        tau0 = -1.0 / slope if slope < 0 else (t[-1] - t[0])
        a0 = math.exp(icpt)
    else:
        tau0, a0 = (t[-1] - t[0]) or 1.0, max(y[0] - offset, 1e-3)

    # parameterize by log(tau) so tau stays positive
    def resid(p):
        a, lt = p
        return w * (a * np.exp(-t / math.exp(lt)) + offset - y)

    def jac(p):
        a, lt = p
        tau = math.exp(lt)
        ex = np.exp(-t / tau)
        return np.column_stack([w * ex, w * a * ex * t / tau])

    sol = least_squares(resid, [a0, math.log(tau0)], jac=jac, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15)
    if not sol.success:
        raise FitError(f"decay fit did not converge: {sol.message}")
    a, lt = sol.x
    if a < 0:
        raise FitError(f"fit returned negative amplitude A={a:.4g}")
    tau = math.exp(lt)
    # covariance in (A, tau) coordinates
    ex = np.exp(-t / tau)
    jmat = np.column_stack([w * ex, w * a * ex * t / tau**2])
    dof = max(t.size - 2, 1)
    s2 = 1.0 if sigma is not None else float(sol.fun @ sol.fun) / dof
    try:
        cov = np.linalg.inv(jmat.T @ jmat) * s2
    except np.linalg.LinAlgError:
        cov = np.full((2, 2), np.inf)
    return DecayFit(float(a), float(tau), float(offset), cov, float(np.linalg.norm(sol.fun)))


# ------------------------------------------------------------- writers

def fmt(x: float) -> str:
    return repr(float(x))


def write_decay_csv(path, t_us, fidelity, sigma=None) -> None:
    sigma = np.zeros(len(t_us)) if sigma is None else sigma
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_us", "fidelity", "sigma"])
        for row in zip(t_us, fidelity, sigma):
            w.writerow([fmt(v) for v in row])


def write_chi_json(path, chi: ChiMatrix) -> None:
    with open(path, "w") as fh:
        json.dump(chi.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
