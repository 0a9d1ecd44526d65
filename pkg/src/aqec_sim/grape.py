"""Gradient-ascent pulse engineering for state-transfer targets.

Four real controls drive the cavity (x) qubit system on top of the
dispersive drift Hamiltonian:

    qI * sigma_x + qQ * sigma_y + cI * (a + a†) + cQ * i(a† - a)

Controls are piecewise constant on a grid of step ``dt``; they are either
free per-sample parameters or generated from band-limited Fourier
coefficients.  Propagation is closed-system.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize

from .codes import error_operator
from .config import TWO_PI, DeviceParams
from .fock import HilbertSpec, build_operators, system_hamiltonian

log = logging.getLogger(__name__)

CHANNELS = ("qI", "qQ", "cI", "cQ")
DEFAULT_CUTOFF_MHZ = 50.0
DEFAULT_QUBIT_CAP_MHZ = 40.0
DEFAULT_CAVITY_CAP_MHZ = 10.0


# ------------------------------------------------------------ schedules

@dataclass(frozen=True, eq=False)
class FourierBasis:
    """u(t) = A_0 + sum_k A_k cos(2 pi k df t) + B_k sin(2 pi k df t) at step midpoints.

    ``transfer`` maps a frequency in MHz to a real amplitude scale applied to
    that component before sampling; identity by default.
    """

    n_steps: int
    dt: float  # µs
    delta_f: float  # MHz
    harmonics: int
    transfer: Callable[[float], float] | None = None

    @property
    def n_coeffs(self) -> int:
        return 2 * self.harmonics + 1

    @property
    def frequencies(self) -> np.ndarray:
        return self.delta_f * np.arange(self.harmonics + 1)

    def matrix(self) -> np.ndarray:
        t = (np.arange(self.n_steps) + 0.5) * self.dt
        k = np.arange(1, self.harmonics + 1)
        arg = TWO_PI * np.outer(t, k * self.delta_f)
        m = np.hstack([np.ones((self.n_steps, 1)), np.cos(arg), np.sin(arg)])
        if self.transfer is not None:
            f = self.frequencies
            scale = np.array([self.transfer(float(x)) for x in f])
            m = m * np.concatenate([scale, scale[1:]])[None, :]
        return m

    def samples(self, coeffs: np.ndarray) -> np.ndarray:
        """(channels, n_coeffs) -> (channels, n_steps)."""
        return np.asarray(coeffs) @ self.matrix().T

    def coefficients(self, samples: np.ndarray) -> np.ndarray:
        """Least-squares inverse of ``samples``; exact for band-limited input."""
        m = self.matrix()
        sol, *_ = np.linalg.lstsq(m, np.asarray(samples).T, rcond=None)
        return sol.T


def fourier_basis(duration: float, dt: float, cutoff_mhz: float = DEFAULT_CUTOFF_MHZ,
                  transfer: Callable[[float], float] | None = None) -> FourierBasis:
    n = int(round(duration / dt))
    df = 1.0 / duration
    harmonics = int(math.floor(cutoff_mhz / df + 1e-9))
    if 2 * harmonics + 1 > n:
        raise ValueError("cutoff too high for the sampling grid; reduce cutoff or dt")
    return FourierBasis(n, dt, df, harmonics, transfer)


@dataclass(frozen=True, eq=False)
class PulseSchedule:
    """Sampled controls in rad/µs, shape (4, n_steps), channel order qI, qQ, cI, cQ."""

    dt: float
    controls: np.ndarray
    basis: FourierBasis | None = None
    coefficients: np.ndarray | None = None
    qubit_cap: float = TWO_PI * DEFAULT_QUBIT_CAP_MHZ
    cavity_cap: float = TWO_PI * DEFAULT_CAVITY_CAP_MHZ

    def __post_init__(self) -> None:
        c = np.asarray(self.controls, dtype=float)
        if c.ndim != 2 or c.shape[0] != 4:
            raise ValueError("controls must have shape (4, n_steps)")
        object.__setattr__(self, "controls", c)
        if c.size:
            q = np.abs(c[0] + 1j * c[1]).max()
            cav = np.abs(c[2] + 1j * c[3]).max()
            if q > self.qubit_cap * (1 + 1e-9) or cav > self.cavity_cap * (1 + 1e-9):
                raise ValueError(f"envelope exceeds amplitude cap (qubit {q:.3g}, cavity {cav:.3g} rad/µs)")

    @property
    def parameterization(self) -> str:
        return "piecewise" if self.basis is None else "fourier"

    @property
    def n_steps(self) -> int:
        return self.controls.shape[1]

    @property
    def duration(self) -> float:
        return self.n_steps * self.dt

    @property
    def qubit_envelope(self) -> np.ndarray:
        return self.controls[0] + 1j * self.controls[1]

    @property
    def cavity_envelope(self) -> np.ndarray:
        return self.controls[2] + 1j * self.controls[3]

    def to_dict(self) -> dict:
        par: dict = {"kind": self.parameterization}
        if self.basis is not None:
            par.update(
                delta_f_mhz=self.basis.delta_f,
                harmonics=self.basis.harmonics,
                coefficients_mhz={ch: (self.coefficients[i] / TWO_PI).tolist() for i, ch in enumerate(CHANNELS)},
            )
        return {
            "dt_ns": self.dt * 1e3,
            "units": "MHz",
            "channels": {ch: (self.controls[i] / TWO_PI).tolist() for i, ch in enumerate(CHANNELS)},
            "parameterization": par,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PulseSchedule":
        dt = doc["dt_ns"] * 1e-3
        controls = TWO_PI * np.array([doc["channels"][ch] for ch in CHANNELS], dtype=float)
        par = doc.get("parameterization", {})
        if par.get("kind") == "fourier":
            n = controls.shape[1]
            basis = FourierBasis(n, dt, par["delta_f_mhz"], par["harmonics"])
            coeffs = TWO_PI * np.array([par["coefficients_mhz"][ch] for ch in CHANNELS])
            return cls(dt, controls, basis, coeffs)
        return cls(dt, controls)


def empty_schedule(dt: float = 0.002) -> PulseSchedule:
    return PulseSchedule(dt, np.zeros((4, 0)))


# --------------------------------------------------------------- target

@dataclass(frozen=True, eq=False)
class TransferTarget:
    """Orthonormal input states and the orthonormal outputs they must reach."""

    inputs: np.ndarray  # (dim, n_pairs)
    outputs: np.ndarray
    cavity_dim: int
    label: str = ""

    def __post_init__(self) -> None:
        ins = np.atleast_2d(np.asarray(self.inputs, dtype=complex))
        outs = np.atleast_2d(np.asarray(self.outputs, dtype=complex))
        if ins.shape != outs.shape:
            raise ValueError("inputs and outputs must have the same shape")
        if ins.shape[0] != 2 * self.cavity_dim:
            raise ValueError("states must live on cavity (x) two-level qubit")
        for name, m in (("inputs", ins), ("outputs", outs)):
            gram = m.conj().T @ m
            if np.abs(gram - np.eye(m.shape[1])).max() > 1e-9:
                raise ValueError(f"{name} are not orthonormal; the transfer would not be unitary")
        object.__setattr__(self, "inputs", ins)
        object.__setattr__(self, "outputs", outs)

    @property
    def n_pairs(self) -> int:
        return self.inputs.shape[1]

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple[np.ndarray, np.ndarray]], cavity_dim: int, label: str = ""):
        ins = np.array([p[0] for p in pairs]).T
        outs = np.array([p[1] for p in pairs]).T
        return cls(ins, outs, cavity_dim, label)

    def completed_unitary(self) -> np.ndarray:
        """A unitary that performs the transfer, arbitrary on the complement."""
        return complete_unitary(self.inputs, self.outputs)

    def to_dict(self) -> dict:
        def cx(m):
            return [[[float(z.real), float(z.imag)] for z in col] for col in m.T]

        return {"label": self.label, "cavity_dim": self.cavity_dim, "inputs": cx(self.inputs), "outputs": cx(self.outputs)}

    @classmethod
    def from_dict(cls, doc: dict) -> "TransferTarget":
        def vecs(cols):
            return np.array([[complex(re, im) for re, im in col] for col in cols]).T

        return cls(vecs(doc["inputs"]), vecs(doc["outputs"]), int(doc["cavity_dim"]), doc.get("label", ""))


def _complement(v: np.ndarray) -> np.ndarray:
    d, k = v.shape
    proj = np.eye(d) - v @ v.conj().T
    u, s, _ = np.linalg.svd(proj)
    return u[:, : d - k]


def complete_unitary(inputs: np.ndarray, outputs: np.ndarray) -> np.ndarray:
    return outputs @ inputs.conj().T + _complement(outputs) @ _complement(inputs).conj().T


def qubit_ket(label: str) -> np.ndarray:
    return {"g": np.array([1, 0], complex), "e": np.array([0, 1], complex)}[label]


def make_aqec_target(code, no_jump=None, phase_table=None, cavity_dim: int = 10,
                     idle_phase: np.ndarray | None = None) -> TransferTarget:
    """Recovery transfer for one correction cycle.

    Distorted codewords with the ancilla in |g> go back to the codewords
    (ancilla stays in |g>); the single-loss error states go to the codewords
    with the ancilla flipped to |e>.  Outputs carry the inverse of the reset
    phases of the branch they will pass through.  ``idle_phase`` is the
    diagonal of a deterministic idle evolution exp(-i E_n T) (Kerr plus
    Stark shifts); inputs are taken after it, with the loss applied last.
    """
    if not code.error_subspaces:
        raise ValueError(f"code {code.name} has no error subspace to recover from")
    g, e = qubit_ket("g"), qubit_ket("e")
    if no_jump is not None:
        dist = [np.pad(no_jump.zero, (0, max(0, cavity_dim - no_jump.zero.size)))[:cavity_dim],
                np.pad(no_jump.one, (0, max(0, cavity_dim - no_jump.one.size)))[:cavity_dim]]
    else:
        dist = list(code.codewords(cavity_dim))
    targets = code.recovered_codewords(cavity_dim)
    errs = code.error_states(cavity_dim)
    if idle_phase is not None:
        idle_phase = np.asarray(idle_phase)[:cavity_dim]
        dist = [idle_phase * v for v in dist]
        label = code.error_subspaces[0].label
        op = error_operator(label, cavity_dim)
        errs = []
        for cw in code.codewords(cavity_dim):
            img = op @ (idle_phase * cw)
            errs.append(img / np.linalg.norm(img))
    comp_g = comp_e = np.ones(cavity_dim)
    if phase_table is not None:
        comp_g = phase_table.diagonal("g", cavity_dim).conj()
        comp_e = phase_table.diagonal("e", cavity_dim).conj()
    ins = lowdin(np.array([np.kron(dist[0], g), np.kron(dist[1], g), np.kron(errs[0], g), np.kron(errs[1], g)]).T)
    outs = np.array([np.kron(comp_g * code.codewords(cavity_dim)[i], g) for i in range(2)]
                    + [np.kron(comp_e * targets[i], e) for i in range(2)]).T
    return TransferTarget(ins, outs, cavity_dim, f"aqec:{code.name}")


def lowdin(states: np.ndarray, max_overlap: float = 0.1) -> np.ndarray:
    """Symmetric orthonormalization of the columns, closest to the originals.

    Deformed codewords can pick up a small overlap with the error states;
    anything larger than ``max_overlap`` is treated as a real error.
    """
    states = states / np.linalg.norm(states, axis=0)
    gram = states.conj().T @ states
    off = np.abs(gram - np.eye(gram.shape[0])).max()
    if off > max_overlap:
        raise ValueError(f"input states overlap by {off:.3g}; cannot orthonormalize safely")
    w, v = np.linalg.eigh(gram)
    return states @ (v * w**-0.5) @ v.conj().T


def encode_target(code, cavity_dim: int = 10) -> TransferTarget:
    """Qubit state (c0|g> + c1|e>)|0> -> (c0|0_L> + c1|1_L>)|g>."""
    g, e = qubit_ket("g"), qubit_ket("e")
    vac = np.zeros(cavity_dim, complex)
    vac[0] = 1
    z, o = code.codewords(cavity_dim)
    return TransferTarget.from_pairs([(np.kron(vac, g), np.kron(z, g)), (np.kron(vac, e), np.kron(o, g))],
                                     cavity_dim, f"encode:{code.name}")


# ----------------------------------------------------------- propagation

@dataclass(frozen=True, eq=False)
class ControlSystem:
    drift: np.ndarray
    controls: tuple[np.ndarray, ...]
    cavity_dim: int


def control_system(device: DeviceParams, cavity_dim: int = 10) -> ControlSystem:
    spec = HilbertSpec(cavity_dim=cavity_dim, qubit_dim=2, resonator_dim=1)
    drift = system_hamiltonian(device, spec, "dispersive-two-level").matrix
    ops = build_operators(spec)
    a = ops.a_c.matrix
    ad = a.conj().T
    ctrl = (ops.sx.matrix, ops.sy.matrix, a + ad, 1j * (ad - a))
    return ControlSystem(drift, ctrl, cavity_dim)


def _step_hamiltonians(system: ControlSystem, controls: np.ndarray) -> np.ndarray:
    h = np.broadcast_to(system.drift, (controls.shape[1],) + system.drift.shape).copy()
    for k, op in enumerate(system.controls):
        h += controls[k][:, None, None] * op[None]
    return h


def propagators(system: ControlSystem, controls: np.ndarray, dt: float):
    """Per-step eigendecompositions and unitaries."""
    h = _step_hamiltonians(system, controls)
    lam, vec = np.linalg.eigh(h)
    ph = np.exp(-1j * lam * dt)
    u = (vec * ph[:, None, :]) @ vec.conj().transpose(0, 2, 1)
    return lam, vec, ph, u


def total_unitary(system: ControlSystem, schedule: PulseSchedule) -> np.ndarray:
    d = system.drift.shape[0]
    out = np.eye(d, dtype=complex)
    if schedule.n_steps == 0:
        return out
    _, _, _, u = propagators(system, schedule.controls, schedule.dt)
    for uj in u:
        out = uj @ out
    return out


def _overlap_and_grad(system, controls, dt, target, want_grad=True):
    n_steps = controls.shape[1]
    psi0, phi = target.inputs, target.outputs
    if n_steps == 0:
        return complex(np.trace(phi.conj().T @ psi0)), np.zeros((4, 0))
    lam, vec, ph, u = propagators(system, controls, dt)
    fwd = np.empty((n_steps + 1,) + psi0.shape, complex)
    fwd[0] = psi0
    for j in range(n_steps):
        fwd[j + 1] = u[j] @ fwd[j]
    g = complex(np.sum(phi.conj() * fwd[-1]))
    if not want_grad:
        return g, None
    bwd = np.empty_like(fwd)
    bwd[-1] = phi
    for j in range(n_steps - 1, 0, -1):
        bwd[j] = u[j].conj().T @ bwd[j + 1]
    # bwd[j + 1] is the co-state seen by step j
    lam_states = bwd[1:]
    vh = vec.conj().transpose(0, 2, 1)
    b = vh @ fwd[:-1]
    a = vh @ lam_states
    m = b @ a.conj().transpose(0, 2, 1)  # M_ba summed over pairs
    diff = lam[:, :, None] - lam[:, None, :]
    mean = 0.5 * (lam[:, :, None] + lam[:, None, :])
    kernel = -1j * dt * np.exp(-1j * mean * dt) * np.sinc(diff * dt / (2 * math.pi))
    w = kernel * m.transpose(0, 2, 1)
    x = vec.conj() @ w @ vec.transpose(0, 2, 1)
    grad = np.empty((4, n_steps), complex)
    for k, op in enumerate(system.controls):
        grad[k] = np.einsum("cd,jcd->j", op, x)
    return g, grad


def fidelity(schedule: PulseSchedule, target: TransferTarget, device: DeviceParams | None = None,
             system: ControlSystem | None = None) -> float:
    """|sum_i <out_i| U |in_i>|^2 / N^2."""
    system = system or control_system(device, target.cavity_dim)
    g, _ = _overlap_and_grad(system, schedule.controls, schedule.dt, target, want_grad=False)
    return float(abs(g) ** 2 / target.n_pairs**2)


def sample_gradient(controls: np.ndarray, dt: float, target: TransferTarget, system: ControlSystem):
    """(F, dF/du) for piecewise-constant controls of shape (4, n_steps)."""
    g, dg = _overlap_and_grad(system, controls, dt, target)
    n2 = target.n_pairs**2
    return float(abs(g) ** 2 / n2), 2 * np.real(np.conj(g) * dg) / n2


def gradient(schedule: PulseSchedule, target: TransferTarget, device: DeviceParams | None = None,
             system: ControlSystem | None = None) -> np.ndarray:
    """dF/d(parameters): per sample for piecewise schedules, per coefficient for Fourier ones."""
    system = system or control_system(device, target.cavity_dim)
    _, du = sample_gradient(schedule.controls, schedule.dt, target, system)
    if schedule.basis is None:
        return du
    return du @ schedule.basis.matrix()


# ------------------------------------------------------------ optimizer

@dataclass
class OptimizeReport:
    fidelity: float
    iterations: int
    converged: bool
    message: str
    history: list = field(default_factory=list)  # (iteration, fidelity)


def optimize(target: TransferTarget, device: DeviceParams, duration: float = 2.1, dt: float = 0.002,
             parameterization: str = "fourier", cutoff_mhz: float = DEFAULT_CUTOFF_MHZ, max_iter: int = 2000,
             tol: float = 1e-3, seed: int = 0, init_scale_mhz: float = 0.5,
             qubit_cap_mhz: float = DEFAULT_QUBIT_CAP_MHZ, cavity_cap_mhz: float = DEFAULT_CAVITY_CAP_MHZ,
             transfer: Callable[[float], float] | None = None, initial: PulseSchedule | None = None):
    """Quasi-Newton (L-BFGS) ascent of the transfer fidelity.

    Stops once 1 - F <= ``tol`` or after ``max_iter`` iterations.  Amplitude
    caps are enforced by a quadratic penalty above 95% of the cap, and the
    returned schedule is clipped to the cap.
    """
    if parameterization not in ("fourier", "piecewise"):
        raise ValueError(f"unknown parameterization {parameterization!r}")
    system = control_system(device, target.cavity_dim)
    chi = device.angular.chi_qc
    if chi > 0 and duration < math.pi / chi:
        warnings.warn(f"duration {duration} µs is shorter than pi/chi_qc = {math.pi / chi:.3f} µs", stacklevel=2)
    n_steps = int(round(duration / dt))
    rng = np.random.default_rng(seed)
    caps = np.array([TWO_PI * qubit_cap_mhz, TWO_PI * cavity_cap_mhz])

    if parameterization == "fourier":
        basis = fourier_basis(n_steps * dt, dt, cutoff_mhz, transfer)
        bmat = basis.matrix()
        # low-frequency weighted noise keeps the starting pulse smooth
        k = np.arange(1, basis.harmonics + 1)
        weights = 1.0 / (1.0 + np.concatenate([[0.0], k, k]))
        x0 = TWO_PI * init_scale_mhz * rng.normal(size=(4, basis.n_coeffs)) * weights[None, :]
        if initial is not None:
            x0 = basis.coefficients(initial.controls)
    else:
        basis, bmat = None, None
        x0 = TWO_PI * init_scale_mhz * rng.normal(size=(4, n_steps)) * 0.1
        if initial is not None:
            x0 = initial.controls.copy()
    shape = x0.shape

    def to_samples(x):
        x = x.reshape(shape)
        return x @ bmat.T if bmat is not None else x

    def penalty(u):
        amp_q = np.hypot(u[0], u[1])
        amp_c = np.hypot(u[2], u[3])
        pen, du = 0.0, np.zeros_like(u)
        for amp, (i, j), cap in ((amp_q, (0, 1), caps[0]), (amp_c, (2, 3), caps[1])):
            over = np.maximum(amp - 0.95 * cap, 0.0)
            if over.any():
                pen += float(np.sum(over**2)) / cap**2
                scale = 2 * over / cap**2 / np.where(amp > 0, amp, 1)
                du[i] += scale * u[i]
                du[j] += scale * u[j]
        return pen, du

    history = []
    state = {"best": (-1.0, x0.ravel().copy())}

    def objective(x):
        u = to_samples(x)
        f, du = sample_gradient(u, dt, target, system)
        pen, dpen = penalty(u)
        grad_u = -du + dpen
        grad = grad_u @ bmat if bmat is not None else grad_u
        if f > state["best"][0]:
            state["best"] = (f, x.copy())
        state["last"] = (x.copy(), f)
        return (1.0 - f) + pen, grad.ravel()

    class _Done(Exception):
        pass

    def callback(xk):
        last = state.get("last")
        if last is not None and np.array_equal(last[0], xk):
            f = last[1]
        else:
            f = fidelity(PulseSchedule(dt, to_samples(xk), qubit_cap=np.inf, cavity_cap=np.inf), target,
                         system=system)
        history.append((len(history) + 1, f))
        if 1 - f <= tol:
            raise _Done

    converged, message = False, ""
    try:
        res = minimize(objective, x0.ravel(), jac=True, method="L-BFGS-B", callback=callback,
                       options={"maxiter": max_iter, "maxcor": 30, "ftol": 1e-14, "gtol": 1e-10})
        x_best = res.x
        message = str(res.message)
    except _Done:
        converged = True
        x_best = state["best"][1]
        message = "fidelity target reached"
    u = to_samples(x_best)
    u = _clip(u, caps)
    coeffs = x_best.reshape(shape) if basis is not None else None
    if basis is not None and not np.allclose(u, coeffs @ bmat.T):
        coeffs = basis.coefficients(u)
    sched = PulseSchedule(dt, u, basis, coeffs, caps[0], caps[1])
    f = fidelity(sched, target, system=system)
    converged = converged or (1 - f <= tol)
    if not converged:
        log.warning("GRAPE stopped at F=%.5f (%s)", f, message)
    return sched, OptimizeReport(f, len(history), converged, message, history)


def _clip(u, caps):
    u = u.copy()
    for (i, j), cap in (((0, 1), caps[0]), ((2, 3), caps[1])):
        amp = np.hypot(u[i], u[j])
        scale = np.where(amp > cap, cap / np.where(amp > 0, amp, 1), 1.0)
        u[i] *= scale
        u[j] *= scale
    return u
