"""Repetitive autonomous correction cycles, lifetimes and error budgets.

One cycle is idle evolution under the dissipative cavity-ancilla model,
then the recovery unitary (instantaneous ideal map or a dissipatively
evaluated pulse), then the ancilla reset channel.  Two tiers are exposed:

``ideal``  instantaneous recovery, idle spans the whole cycle, gate error
           enters as a code-space depolarization.
``pulse``  the recovery is a control schedule propagated with dissipation
           (Strang splitting of unitary steps and the dissipator).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .codes import CodeSpec, code_by_name, generalized_binomial, no_jump_map
from .config import TWO_PI, DeviceParams
from .dynamics import (
    DecayFit,
    LindbladModel,
    chi_from_images,
    device_collapse_ops,
    fit_exponential,
    process_fidelity,
    propagator,
    unitary_chi,
    TOMOGRAPHY_INPUTS,
)
from .fock import HilbertSpec, system_hamiltonian
from .grape import (
    PulseSchedule,
    TransferTarget,
    complete_unitary,
    control_system,
    make_aqec_target,
    propagators,
    qubit_ket,
)
from .reset import ResetChannel, ResetDriveParams, ResetPhaseTable, calibrate_reset_phases

log = logging.getLogger(__name__)

TIERS = ("ideal", "pulse")
RESET_ERROR_E = 0.02  # logical error when the reset starts from |e>
IDEAL_CAVITY_DIM = 12
PULSE_CAVITY_DIM = 10
SAMPLES = 14


@dataclass(frozen=True)
class EncodingDefaults:
    tphi_eff: float | None  # µs; None -> device value
    gate_error: float
    residual_dephasing: float
    pass_detuning_chi: float | None
    idle_kerr: bool = True


ENCODING_DEFAULTS = {
    "binomial": EncodingDefaults(34000.0, 0.0182, 0.001, -3.5),
    "sqrt17": EncodingDefaults(24000.0, 0.0179, 0.011, -1.325),
    # metrology probe: sqrt17 dephasing and gate values (same {1,4} support);
    # no stated Kerr handling, so Kerr is treated as cancelled
    "fock14": EncodingDefaults(24000.0, 0.0179, 0.0, None, idle_kerr=False),
    "fock01": EncodingDefaults(None, 0.0, 0.0, None),
}


# ----------------------------------------------------------------- PASS

@dataclass(frozen=True)
class PassDrive:
    """Off-resonant ancilla drive: detuning in units of chi_qc, amplitude in MHz.

    The drive term is amplitude * sigma_x (so the Rabi rate is twice it).
    """

    detuning_chi: float
    amplitude_mhz: float
    ramp_us: float = 1.0


def _dressed_ground(device: DeviceParams, n_max: int, detuning_chi: float, amplitude_mhz: float) -> np.ndarray:
    w = device.angular
    n = np.arange(n_max + 1, dtype=float)
    kerr = -0.5 * w.kerr_c * n * (n - 1)
    e_g = kerr
    # excited level in the drive frame
    e_e = kerr - w.chi_qc * n + 0.5 * w.chi_prime_qc * n * (n - 1) - detuning_chi * w.chi_qc
    omega = TWO_PI * amplitude_mhz
    mean = 0.5 * (e_g + e_e)
    half = 0.5 * (e_e - e_g)
    root = np.sqrt(half**2 + omega**2)
    # branch continuously connected to |g>
    return np.where(half >= 0, mean - root, mean + root)


def fock_rates(device: DeviceParams, drive: PassDrive | None, n_max: int = 5) -> np.ndarray:
    """Frequency shift f_n of |n>|g> relative to |0>|g>, in MHz, including self-Kerr."""
    if drive is None:
        e = _dressed_ground(device, n_max, 0.0, 0.0)
    else:
        e = _dressed_ground(device, n_max, drive.detuning_chi, drive.amplitude_mhz)
    return (e - e[0]) / TWO_PI


def stark_shifts(device: DeviceParams, drive: PassDrive, n_max: int) -> np.ndarray:
    """Drive-induced part of the level energies (rad/µs), relative to |0>."""
    with_drive = _dressed_ground(device, n_max, drive.detuning_chi, drive.amplitude_mhz)
    bare = _dressed_ground(device, n_max, drive.detuning_chi, 0.0)
    s = with_drive - bare
    return s - s[0]


def _pass_conditions(code_name: str, f: np.ndarray) -> dict[str, float]:
    if code_name == "binomial":
        return {"(f4-f2)-(f3-f1)": (f[4] - f[2]) - (f[3] - f[1])}
    if code_name == "sqrt17":
        return {"(f3-f2)-f1": (f[3] - f[2]) - f[1], "(f4-f1)-f3": (f[4] - f[1]) - f[3]}
    raise ValueError(f"no error-transparent condition defined for {code_name!r}")


@dataclass(frozen=True)
class PassTuning:
    code: str
    detuning_chi: float
    amplitude_mhz: float
    rates_mhz: np.ndarray
    residuals: dict
    scale: float  # |f4 - f2| at the optimum, for relative residuals

    @property
    def drive(self) -> PassDrive:
        return PassDrive(self.detuning_chi, self.amplitude_mhz)

    def to_dict(self) -> dict:
        return {
            "code": self.code,
            "detuning_chi": self.detuning_chi,
            "amplitude_mhz": self.amplitude_mhz,
            "rates_mhz": self.rates_mhz.tolist(),
            "residuals_mhz": self.residuals,
        }


def tune_pass(code: CodeSpec | str, device: DeviceParams, detuning_chi: float | None = None,
              max_amplitude_mhz: float = 0.1, points: int = 2001) -> PassTuning:
    """Find the drive amplitude that makes the code's idle phases error-transparent.

    Binomial: one root of (f4-f2)-(f3-f1).  sqrt17: least squares over both
    conditions, which must change sign somewhere in the sweep.
    """
    name = code if isinstance(code, str) else code.name
    if detuning_chi is None:
        defaults = ENCODING_DEFAULTS.get(name)
        if defaults is None or defaults.pass_detuning_chi is None:
            raise ValueError(f"no default PASS detuning for {name!r}")
        detuning_chi = defaults.pass_detuning_chi

    def resid(amp):
        return _pass_conditions(name, fock_rates(device, PassDrive(detuning_chi, amp)))

    amps = np.linspace(0.0, max_amplitude_mhz, points)
    values = np.array([list(resid(a).values()) for a in amps])
    if np.all(np.abs(values[0]) < 1e-15):
        best = 0.0
    elif name == "binomial":
        r = values[:, 0]
        idx = np.nonzero(np.sign(r[:-1]) * np.sign(r[1:]) <= 0)[0]
        if idx.size == 0:
            raise ValueError(f"no zero crossing of the PASS condition below {max_amplitude_mhz} MHz")
        i = int(idx[0])
        best = brentq(lambda a: resid(a)["(f4-f2)-(f3-f1)"], amps[i], amps[i + 1], xtol=1e-14)
    else:
        changes = [np.any(np.sign(values[:-1, k]) * np.sign(values[1:, k]) <= 0) for k in range(values.shape[1])]
        if not any(changes):
            raise ValueError(f"no zero crossing of the PASS conditions below {max_amplitude_mhz} MHz")
        cost = np.sum(values**2, axis=1)
        i = int(np.argmin(cost))
        lo, hi = amps[max(i - 1, 0)], amps[min(i + 1, points - 1)]
        res = minimize_scalar(lambda a: float(np.sum(np.square(list(resid(a).values())))),
                              bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
        best = float(res.x)
    f = fock_rates(device, PassDrive(detuning_chi, best))
    return PassTuning(name, detuning_chi, float(best), f, resid(best), float(abs(f[4] - f[2])))


# ---------------------------------------------------------------- cycle

@dataclass(frozen=True, eq=False)
class CycleSpec:
    """One correction cycle.  Durations in µs; defaults give 152.81 µs."""

    wait_us: float = 150.0
    recovery: str | PulseSchedule = "ideal"
    recovery_us: float = 2.1
    reset: str = "ideal"  # or "simulated": phases calibrated from the reset dynamics
    reset_us: float = 0.71
    pass_drive: PassDrive | None = None
    idle_kerr: bool = True
    tphi_eff: float | None = None
    gate_error: float = 0.0
    reset_error: float = RESET_ERROR_E
    residual_dephasing: float = 0.0
    phase_table: ResetPhaseTable | None = None

    def __post_init__(self) -> None:
        if isinstance(self.recovery, str) and self.recovery != "ideal":
            raise ValueError("recovery must be 'ideal' or a PulseSchedule")
        if self.reset not in ("ideal", "simulated"):
            raise ValueError("reset must be 'ideal' or 'simulated'")
        if isinstance(self.recovery, PulseSchedule) and abs(self.recovery.duration - self.recovery_us) > 1e-9:
            object.__setattr__(self, "recovery_us", self.recovery.duration)
        for name in ("gate_error", "reset_error", "residual_dephasing"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must be a probability")

    @property
    def total_duration(self) -> float:
        return self.wait_us + self.recovery_us + self.reset_us

    @property
    def tier(self) -> str:
        return "ideal" if isinstance(self.recovery, str) else "pulse"

    @property
    def idle_between_recoveries(self) -> float:
        """Free evolution the recovery has to undo.

        The ideal tier lumps the whole cycle into one idle before an
        instantaneous recovery.  With a shaped recovery only the wait
        precedes it; the coherent part of the reset window is carried by
        the reset phase table.
        """
        return self.total_duration if self.tier == "ideal" else self.wait_us

    def replace(self, **kw) -> "CycleSpec":
        return replace(self, **kw)


def default_cycle(encoding: str, device: DeviceParams, schedule: PulseSchedule | None = None,
                  **overrides) -> CycleSpec:
    """Cycle with the per-encoding defaults (effective dephasing, PASS, gate error)."""
    d = ENCODING_DEFAULTS.get(encoding, EncodingDefaults(None, 0.0, 0.0, None))
    drive = None
    if d.pass_detuning_chi is not None and device.kerr_c > 0:
        drive = tune_pass(encoding, device, d.pass_detuning_chi).drive
    kw = dict(pass_drive=drive, idle_kerr=d.idle_kerr, tphi_eff=d.tphi_eff,
              gate_error=d.gate_error if schedule is None else 0.0, residual_dephasing=d.residual_dephasing)
    if schedule is not None:
        kw["recovery"] = schedule
    kw.update(overrides)
    return CycleSpec(**kw)


def idle_hamiltonian(device: DeviceParams, cavity_dim: int, pass_drive: PassDrive | None = None,
                     kerr: bool = True, detuning: float = 0.0) -> np.ndarray:
    """Diagonal idle Hamiltonian on cavity (x) qubit, rad/µs.

    ``detuning`` adds delta * n_c (a physical frequency offset).
    """
    dev = device if kerr else device.replace(kerr_c=0.0, chi_prime_qc=0.0)
    spec = HilbertSpec(cavity_dim=cavity_dim, qubit_dim=2, resonator_dim=1)
    h = system_hamiltonian(dev, spec, "dispersive-two-level").matrix.copy()
    n = np.arange(cavity_dim)
    extra = detuning * n
    if pass_drive is not None:
        extra = extra + stark_shifts(device, pass_drive, cavity_dim - 1)
    h += np.diag(np.repeat(extra, 2))
    return h


def _idle_model(device, cavity_dim, cycle: CycleSpec, detuning=0.0, qubit=True) -> LindbladModel:
    spec = HilbertSpec(cavity_dim=cavity_dim, qubit_dim=2, resonator_dim=1)
    h = idle_hamiltonian(device, cavity_dim, cycle.pass_drive, cycle.idle_kerr, detuning)
    cops = device_collapse_ops(device, spec, tphi_c=cycle.tphi_eff, qubit=qubit, resonator=False)
    cops = [(op, rate) for op, rate in cops if rate > 0]
    return LindbladModel(h, tuple(cops))


def _frame(h: np.ndarray, t: float) -> np.ndarray:
    """exp(-i E_n t) for the |g> branch of a diagonal idle Hamiltonian."""
    return np.exp(-1j * np.real(np.diag(h))[0::2] * t)


class PulseChannel:
    """Control schedule propagated with dissipation by symmetric splitting."""

    def __init__(self, schedule: PulseSchedule, device: DeviceParams, cavity_dim: int,
                 tphi_c: float | None = None, qubit_noise: bool = True):
        system = control_system(device, cavity_dim)
        _, _, _, self.steps = propagators(system, schedule.controls, schedule.dt)
        spec = HilbertSpec(cavity_dim=cavity_dim, qubit_dim=2, resonator_dim=1)
        cops = [(op, r) for op, r in device_collapse_ops(device, spec, tphi_c=tphi_c, qubit=qubit_noise,
                                                          resonator=False) if r > 0]
        d = 2 * cavity_dim
        if cops:
            model = LindbladModel(np.zeros((d, d), complex), tuple(cops))
            self.half = propagator(model, schedule.dt / 2)
            self.full = self.half @ self.half
        else:
            self.half = self.full = None

    def _diss(self, sup, rho):
        return rho if sup is None else (sup @ rho.reshape(-1)).reshape(rho.shape)

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        n = len(self.steps)
        if n == 0:
            return rho
        rho = self._diss(self.half, rho)
        for j, u in enumerate(self.steps):
            rho = u @ rho @ u.conj().T
            rho = self._diss(self.half if j == n - 1 else self.full, rho)
        return rho


class AqecCycle:
    """Precomputed maps for repeated application of one cycle to one code."""

    def __init__(self, code: CodeSpec, cycle: CycleSpec, device: DeviceParams, cavity_dim: int | None = None,
                 detuning: float = 0.0, reset_params: ResetDriveParams | None = None):
        if cavity_dim is None:
            cavity_dim = IDEAL_CAVITY_DIM if cycle.tier == "ideal" else PULSE_CAVITY_DIM
        self.code, self.cycle, self.device, self.cavity_dim = code, cycle, device, cavity_dim
        model = _idle_model(device, cavity_dim, cycle, detuning)
        # the recovery is designed for the nominal idle, blind to any sensed detuning
        self.hamiltonian = model.hamiltonian if not detuning else _idle_model(device, cavity_dim, cycle).hamiltonian
        if cycle.tier == "ideal":
            self.idle = propagator(model, cycle.total_duration)
            self.post_idle = None
        else:
            self.idle = propagator(model, cycle.wait_us)
            # decoherence only: the reset's coherent action is in the phase table
            self.post_idle = propagator(LindbladModel(np.zeros_like(model.hamiltonian), model.collapse_ops),
                                        cycle.reset_us)
        table = cycle.phase_table
        if table is None:
            table = (calibrate_reset_phases(reset_params or ResetDriveParams(), device)
                     if cycle.reset == "simulated" else ResetPhaseTable.zeros())
        self.phase_table = table
        self.target = recovery_target(code, cycle, device, cavity_dim, table, self.hamiltonian)
        if cycle.tier == "ideal":
            u = self.target.completed_unitary()
            self.recovery = lambda r: u @ r @ u.conj().T
            self.unitary = u
        else:
            self.recovery = PulseChannel(cycle.recovery, device, cavity_dim, cycle.tphi_eff)
            self.unitary = None
        self.reset = ResetChannel(cavity_dim, table, cycle.reset_error, tuple(code.codewords(cavity_dim)))
        g = qubit_ket("g")
        vecs = [np.kron(c, g) for c in code.codewords(cavity_dim)]
        self._code_mix = sum(np.outer(v, v.conj()) for v in vecs) / 2

    def _depolarize(self, rho, p):
        if p <= 0:
            return rho
        return (1 - p) * rho + p * np.trace(rho) * self._code_mix

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        c = self.cycle
        rho = (self.idle @ rho.reshape(-1)).reshape(rho.shape)
        rho = self.recovery(rho)
        rho = self._depolarize(rho, c.gate_error)
        if self.post_idle is not None:
            rho = (self.post_idle @ rho.reshape(-1)).reshape(rho.shape)
        rho = self.reset(rho)
        rho = self._depolarize(rho, c.residual_dephasing)
        return rho


def recovery_target(code: CodeSpec, cycle: CycleSpec, device: DeviceParams, cavity_dim: int,
                    phase_table: ResetPhaseTable | None = None, idle_h: np.ndarray | None = None,
                    tier: str | None = None) -> TransferTarget:
    """The state transfer the recovery must implement for this cycle.

    ``tier="pulse"`` designs the target for a shaped recovery before the
    schedule exists (the recovery itself is then excluded from the idle).
    """
    tier = tier or cycle.tier
    if tier not in TIERS:
        raise ValueError(f"tier must be one of {TIERS}")
    t_idle = cycle.total_duration if tier == "ideal" else cycle.wait_us
    nj = None
    if not code.name.startswith("fock"):
        nj = no_jump_map(code, device.angular.kappa_c, t_idle)
    if idle_h is None:
        idle_h = idle_hamiltonian(device, cavity_dim, cycle.pass_drive, cycle.idle_kerr)
    return make_aqec_target(code, nj, phase_table, cavity_dim, idle_phase=_frame(idle_h, t_idle))


def run_cycle(state: np.ndarray, cycle: CycleSpec, device: DeviceParams, code: CodeSpec) -> np.ndarray:
    """Apply one cycle to a cavity (x) qubit density matrix."""
    dim = state.shape[0] // 2
    return AqecCycle(code, cycle, device, dim)(state)


# ----------------------------------------------------------- tomography

def encode_logical(code: CodeSpec, cavity_dim: int, frame: np.ndarray | None = None) -> np.ndarray:
    """Isometry (2 cavity_dim x 2): logical qubit -> codewords (x) |g>."""
    g = qubit_ket("g")
    cols = []
    for c in code.codewords(cavity_dim):
        if frame is not None:
            c = frame * c
        cols.append(np.kron(c, g))
    return np.array(cols).T


def decode_logical(rho: np.ndarray, code: CodeSpec, cavity_dim: int, frame: np.ndarray | None = None) -> np.ndarray:
    """Project onto the codewords for either ancilla state; leakage counts as a fully mixed qubit."""
    out = np.zeros((2, 2), complex)
    cws = list(code.codewords(cavity_dim))
    if frame is not None:
        cws = [frame * c for c in cws]
    for q in ("g", "e"):
        v = np.array([np.kron(c, qubit_ket(q)) for c in cws])
        out += v.conj() @ rho @ v.T
    leak = 1.0 - float(np.real(np.trace(out)))
    return out + 0.5 * leak * np.eye(2)


def _inputs(iso: np.ndarray) -> list[np.ndarray]:
    return [iso @ np.outer(v, v.conj()) @ iso.conj().T for v in TOMOGRAPHY_INPUTS]


IDENTITY_CHI = unitary_chi(np.eye(2))


def logical_fidelity(images) -> float:
    return process_fidelity(chi_from_images(images), IDENTITY_CHI)


def normalized_infidelity(f_chi: float) -> float:
    return 1.0 - (f_chi - 0.25) / 0.75


# -------------------------------------------------------------- lifetimes

@dataclass
class LifetimeResult:
    encoding: str
    times_us: np.ndarray
    fidelities: np.ndarray
    fit: DecayFit
    corrected: bool
    ratios: dict = field(default_factory=dict)

    @property
    def tau_ms(self) -> float:
        return self.fit.tau / 1000.0

    def to_dict(self) -> dict:
        return {
            "encoding": self.encoding,
            "corrected": self.corrected,
            "tau_ms": self.tau_ms,
            "sigma": self.fit.sigma_tau / 1000.0,
            "amplitude": self.fit.amplitude,
            "ratios": self.ratios,
        }


def _transmon_series(device: DeviceParams, times: np.ndarray) -> np.ndarray:
    w = device.angular
    sm = np.array([[0, 1], [0, 0]], complex)
    nq = np.diag([0.0, 1.0]).astype(complex)
    cops = [(sm, (1 + w.nth_q) * w.kappa_q), (sm.conj().T, w.nth_q * w.kappa_q), (nq, 2 * w.gamma_phi_q)]
    model = LindbladModel(np.zeros((2, 2), complex), tuple((o, r) for o, r in cops if r > 0))
    step = propagator(model, float(times[1] - times[0])) if len(times) > 1 else np.eye(4)
    rhos = _inputs(np.eye(2))
    out = []
    for _ in times:
        out.append(logical_fidelity(rhos))
        rhos = [(step @ r.reshape(-1)).reshape(2, 2) for r in rhos]
    return np.array(out)


def lifetime_experiment(encoding: CodeSpec | str, device: DeviceParams, cycles: int = SAMPLES - 1,
                        cycle: CycleSpec | None = None, sampling_us: float | None = None,
                        cavity_dim: int | None = None, ancilla_noise: bool | None = None) -> LifetimeResult:
    """Process fidelity after 0..cycles cycles, fitted to A exp(-t/tau) + 1/4.

    ``cycle=None`` runs idle-only with the same sampling (``sampling_us``
    defaults to the standard cycle length).  ``ancilla_noise`` switches the
    ancilla jumps during idle-only runs; by default it is off for the Fock
    {0,1} qubit, whose measured dephasing time already contains them.
    """
    if isinstance(encoding, str) and encoding == "transmon":
        dt = sampling_us or CycleSpec().total_duration
        times = dt * np.arange(cycles + 1)
        fids = _transmon_series(device, times)
        return LifetimeResult("transmon", times, fids, fit_exponential(times, fids), False)
    code = code_by_name(encoding) if isinstance(encoding, str) else encoding
    name = encoding if isinstance(encoding, str) else code.name
    if cycle is not None:
        runner = AqecCycle(code, cycle, device, cavity_dim)
        dim = runner.cavity_dim
        dt = cycle.total_duration
        step = runner
        frame_at = lambda k: None  # recovery re-aligns the frame each cycle
    else:
        dim = cavity_dim or IDEAL_CAVITY_DIM
        d = ENCODING_DEFAULTS.get(name, EncodingDefaults(None, 0.0, 0.0, None))
        idle_spec = CycleSpec(tphi_eff=d.tphi_eff, idle_kerr=d.idle_kerr)
        if d.pass_detuning_chi is not None and device.kerr_c > 0:
            idle_spec = idle_spec.replace(pass_drive=tune_pass(name, device).drive)
        if ancilla_noise is None:
            ancilla_noise = name != "fock01"
        model = _idle_model(device, dim, idle_spec, qubit=ancilla_noise)
        dt = sampling_us or CycleSpec().total_duration
        prop = propagator(model, dt)
        step = lambda r: (prop @ r.reshape(-1)).reshape(r.shape)
        h = model.hamiltonian
        frame_at = lambda k: _frame(h, k * dt)
    iso = encode_logical(code, dim)
    rhos = _inputs(iso)
    times = dt * np.arange(cycles + 1)
    fids = []
    for k in range(cycles + 1):
        fr = frame_at(k)
        fids.append(logical_fidelity([decode_logical(r, code, dim, fr) for r in rhos]))
        if k < cycles:
            rhos = [step(r) for r in rhos]
    fids = np.array(fids)
    return LifetimeResult(name, times, fids, fit_exponential(times, fids), cycle is not None)


def break_even(device: DeviceParams, encoding: str = "binomial", cycles: int = SAMPLES - 1,
               cycle: CycleSpec | None = None) -> dict[str, LifetimeResult]:
    """Corrected code against its uncorrected self, the Fock {0,1} qubit and the bare ancilla."""
    cycle = cycle or default_cycle(encoding, device)
    dt = cycle.total_duration
    res = {
        "corrected": lifetime_experiment(encoding, device, cycles, cycle),
        "uncorrected": lifetime_experiment(encoding, device, cycles, None, dt),
        "fock01": lifetime_experiment("fock01", device, cycles, None, dt),
        "transmon": lifetime_experiment("transmon", device, cycles, None, dt),
    }
    tau = res["corrected"].fit.tau
    res["corrected"].ratios = {
        "vs_uncorrected": tau / res["uncorrected"].fit.tau,
        "vs_fock01": tau / res["fock01"].fit.tau,
        "vs_transmon": tau / res["transmon"].fit.tau,
    }
    return res


# ---------------------------------------------------------- error budget

BUDGET_ROWS = ("multi_photon_loss_gain", "intrinsic_dephasing", "induced_dephasing", "gate", "reset")


@dataclass
class ErrorBudget:
    encoding: str
    tier: str
    rows: dict
    direct: float

    @property
    def total(self) -> float:
        return float(sum(self.rows.values()))

    def to_dict(self) -> dict:
        return {"encoding": self.encoding, "tier": self.tier, "rows": self.rows, "total": self.total,
                "direct": self.direct}


def single_cycle_infidelity(code: CodeSpec, cycle: CycleSpec, device: DeviceParams,
                            cavity_dim: int | None = None, runner: AqecCycle | None = None) -> float:
    """Normalized infidelity 1 - (F_chi - 1/4)/(3/4) of one cycle on the code."""
    runner = runner or AqecCycle(code, cycle, device, cavity_dim)
    iso = encode_logical(code, runner.cavity_dim)
    images = [decode_logical(runner(r), code, runner.cavity_dim) for r in _inputs(iso)]
    return normalized_infidelity(logical_fidelity(images))


def error_budget(encoding: str, device: DeviceParams, cycle: CycleSpec | None = None) -> ErrorBudget:
    """Itemized single-cycle infidelity.

    Loss/gain and intrinsic dephasing are simulated differences; induced
    dephasing and reset use their closed-form estimates; the gate row is the
    configured depolarization (ideal tier) or the pulse-versus-ideal
    difference (pulse tier).
    """
    if encoding not in ("binomial", "sqrt17"):
        raise ValueError("error budget is defined for binomial and sqrt17")
    code = code_by_name(encoding)
    cycle = cycle or default_cycle(encoding, device)
    dim = IDEAL_CAVITY_DIM if cycle.tier == "ideal" else PULSE_CAVITY_DIM
    w = device.angular
    clean = cycle.replace(recovery="ideal", gate_error=0.0, reset_error=0.0, residual_dephasing=0.0)
    if cycle.tier == "pulse":
        clean = clean.replace(recovery_us=cycle.recovery_us)
    # idle with cavity loss/gain only
    lossy = device.replace(tphi_c=math.inf, t1_q=math.inf, tphi_q=math.inf, nth_q=0.0)
    e_loss = single_cycle_infidelity(code, clean.replace(tphi_eff=math.inf), lossy, dim)
    e_deph = single_cycle_infidelity(code, clean, lossy, dim) - e_loss
    induced = w.nth_q * (1 - math.exp(-cycle.total_duration * w.kappa_q)) + cycle.residual_dephasing
    if cycle.tier == "ideal":
        gate = cycle.gate_error
    else:
        pulse_only = cycle.replace(tphi_eff=math.inf, reset_error=0.0, residual_dephasing=0.0, gate_error=0.0)
        ideal_only = pulse_only.replace(recovery="ideal")
        gate = (single_cycle_infidelity(code, pulse_only, device.replace(tphi_c=math.inf, nth_q=0.0), dim)
                - single_cycle_infidelity(code, ideal_only, lossy, dim))
    nbar = code.average_photon_number
    reset = cycle.reset_error * (1 - math.exp(-cycle.wait_us * nbar * w.kappa_c))
    rows = {
        "multi_photon_loss_gain": e_loss,
        "intrinsic_dephasing": e_deph,
        "induced_dephasing": induced,
        "gate": gate,
        "reset": reset,
    }
    direct = single_cycle_infidelity(code, cycle, device, dim)
    return ErrorBudget(encoding, cycle.tier, {k: float(v) for k, v in rows.items()}, float(direct))


# ------------------------------------------------------------- cascaded

def cascaded_target(L: int, G: int, D: int, cavity_dim: int | None = None) -> TransferTarget:
    """Hierarchical recovery for the generalized binomial code.

    k-th order losses step down one order with an ancilla flip, first-order
    losses return to the code (flip).  Gains and dephasing step down with a
    flip until first order, where they are left in place without a flip.
    """
    code = generalized_binomial(L, G, D)
    dim = cavity_dim or code.meta["required_dim"]
    if dim < code.meta["required_dim"]:
        raise ValueError(f"cavity_dim {dim} below the {code.meta['required_dim']} levels the code needs")
    g, e = qubit_ket("g"), qubit_ket("e")
    cw = code.codewords(dim)
    families: dict[str, list[tuple[np.ndarray, np.ndarray]]] = {"a": [], "adag": [], "n": []}
    for k, sub in enumerate(code.error_subspaces):
        base = sub.label.split("^")[0]
        families[base].append(code.error_states(dim, k))
    pairs = [(np.kron(cw[i], g), np.kron(cw[i], g)) for i in range(2)]
    for base, levels in families.items():
        for order, states in enumerate(levels, start=1):
            for i in range(2):
                src = np.kron(states[i], g)
                if order == 1 and base == "a":
                    dst = np.kron(cw[i], e)
                elif order == 1:
                    dst = src
                else:
                    dst = np.kron(levels[order - 2][i], e)
                pairs.append((src, dst))
    ins = np.array([p[0] for p in pairs]).T
    outs = np.array([p[1] for p in pairs]).T
    for name, m in (("input", ins), ("output", outs)):
        if np.abs(m.conj().T @ m - np.eye(m.shape[1])).max() > 1e-9:
            raise ValueError(f"{name} subspaces overlap; the cascaded map would not be unitary")
    return TransferTarget(ins, outs, dim, f"cascaded:{code.name}")


def cascaded_unitary(L: int, G: int, D: int, cavity_dim: int | None = None) -> np.ndarray:
    t = cascaded_target(L, G, D, cavity_dim)
    return complete_unitary(t.inputs, t.outputs)
