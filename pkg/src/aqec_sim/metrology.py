"""Ramsey interferometry on two-level Fock probes and Fisher-information accounting.

The probe (|m> + e^{i phi}|n>)/sqrt2 dephases while a frequency shift
delta * n imprints a relative phase (n - m) delta t.  The fringe is read in
the |+-> = (|m> +- |n>)/sqrt2 basis; population outside {|m>, |n>} is
counted as a fully mixed readout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .codes import fock_superposition
from .config import DeviceParams
from .dynamics import FitError
from .protocol import (
    ENCODING_DEFAULTS,
    IDEAL_CAVITY_DIM,
    AqecCycle,
    CycleSpec,
    _frame,
    _idle_model,
    default_cycle,
)
from .dynamics import propagator
from .grape import qubit_ket

PHI_POINTS = 21
MIN_CONTRAST = 1e-3


def probe_idle(m: int, n: int) -> CycleSpec:
    """Idle model for an unprotected probe: same dephasing as the protected one."""
    d = ENCODING_DEFAULTS["fock14"]
    return CycleSpec(idle_kerr=(m, n) != (1, 4), tphi_eff=d.tphi_eff)


def phi_grid(points: int = PHI_POINTS) -> np.ndarray:
    return 2 * math.pi * np.arange(points) / points


@dataclass(frozen=True)
class Overheads:
    """Fixed and per-cycle durations (µs) entering the total measurement time."""

    correction_us: float = 2.0
    reset_us: float = 0.71
    encode_decode_us: float | None = None  # None: 4.08 for m >= 1, 3.08 for m = 0
    readout_us: float = 2.0

    def fixed(self, m: int) -> float:
        enc = self.encode_decode_us
        if enc is None:
            enc = 4.08 if m >= 1 else 3.08
        return enc + self.readout_us


@dataclass
class RamseyRun:
    m: int
    n: int
    cycles: int
    tau_int: float  # µs per cycle
    corrected: bool
    phis: np.ndarray
    p_g: np.ndarray
    amplitude: float = math.nan
    offset: float = math.nan
    phase: float = math.nan
    sigma_amplitude: float = 0.0
    sigma_offset: float = 0.0

    @property
    def t_int(self) -> float:
        return self.cycles * self.tau_int

    def to_rows(self):
        return list(zip(self.phis.tolist(), self.p_g.tolist()))


@dataclass(frozen=True)
class FisherResult:
    fisher: float  # µs, i.e. 1/MHz
    amplitude: float
    offset: float
    separation: int
    t_int: float
    t_tot: float
    overheads: dict = field(default_factory=dict)

    @property
    def kHz_inv(self) -> float:
        return self.fisher / 1000.0

    def to_dict(self, gain_db: float | None = None) -> dict:
        return {
            "A": self.amplitude,
            "B": self.offset,
            "F_kHz_inv": self.kHz_inv,
            "t_int_us": self.t_int,
            "t_tot_us": self.t_tot,
            "gain_dB": gain_db,
        }


def fit_fringe(phis: np.ndarray, p_g: np.ndarray):
    """Least squares P = A cos(phi + phi0) + B with the period fixed.

    Returns (A, B, phi0, sigma_A, sigma_B).
    """
    x = np.column_stack([np.cos(phis), np.sin(phis), np.ones_like(phis)])
    coef, *_ = np.linalg.lstsq(x, p_g, rcond=None)
    a, b, offset = coef
    amp = math.hypot(a, b)
    phase = math.atan2(-b, a)
    resid = p_g - x @ coef
    dof = max(len(phis) - 3, 1)
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(x.T @ x)
    # amplitude variance by propagation through (a, b)
    if amp > 0:
        ga = np.array([a / amp, b / amp])
        sig_a = math.sqrt(max(float(ga @ cov[:2, :2] @ ga), 0.0))
    else:
        sig_a = math.sqrt(max(cov[0, 0], 0.0))
    return amp, float(offset), phase, sig_a, math.sqrt(max(cov[2, 2], 0.0))


def _probe_blocks(m: int, n: int, dim: int):
    """Density blocks |m><m|, |n><n|, |m><n|, |n><m| with the ancilla in |g>."""
    g = qubit_ket("g")
    km = np.kron(np.eye(dim)[m], g)
    kn = np.kron(np.eye(dim)[n], g)
    return [np.outer(km, km), np.outer(kn, kn), np.outer(km, kn), np.outer(kn, km)]


def ramsey(m: int, n: int, cycles: int, device: DeviceParams, cycle: CycleSpec | None = None,
           phis: np.ndarray | None = None, tau_int: float = 150.0, delta: float = 0.0,
           mode: str = "virtual", shots: int | None = None, rng: np.random.Generator | None = None,
           corrected: bool | None = None, cavity_dim: int = IDEAL_CAVITY_DIM) -> RamseyRun:
    """Fringe P_g(phi) after ``cycles`` interrogation periods of ``tau_int`` µs.

    With ``corrected`` (default: when a cycle is given) each period is a full
    correction cycle whose idle lasts ``tau_int``.  ``delta`` is a frequency
    shift in rad/µs, imprinted either as the phase (n - m) delta t on the
    prepared state ("virtual") or through delta * n in the idle Hamiltonian
    ("physical").
    """
    if mode not in ("virtual", "physical"):
        raise ValueError("mode must be 'virtual' or 'physical'")
    phis = phi_grid() if phis is None else np.asarray(phis, dtype=float)
    code = fock_superposition(m, n)
    if corrected is None:
        corrected = cycle is not None
    if corrected and cycle is None:
        cycle = default_cycle("fock14", device)
    phys = delta if mode == "physical" else 0.0
    if corrected:
        cycle = cycle.replace(wait_us=tau_int)
        runner = AqecCycle(code, cycle, device, cavity_dim, detuning=phys)
        step = runner
        exposure = cycles * runner.cycle.total_duration
        frame = None
        # the recovery re-aligns to the frame that excludes delta
    else:
        spec = cycle or probe_idle(m, n)
        model = _idle_model(device, cavity_dim, spec, detuning=phys)
        prop = propagator(model, tau_int)
        step = lambda r: (prop @ r.reshape(-1)).reshape(r.shape)
        exposure = cycles * tau_int
        h0 = _idle_model(device, cavity_dim, spec).hamiltonian
        frame = _frame(h0, exposure)
    blocks = _probe_blocks(m, n, cavity_dim)
    for _ in range(cycles):
        blocks = [step(b) for b in blocks]
    plus = np.zeros(cavity_dim, complex)
    plus[m] = plus[n] = 1 / math.sqrt(2)
    basis = [np.eye(cavity_dim)[m], np.eye(cavity_dim)[n]]
    if frame is not None:
        plus = frame * plus
        basis = [frame * v for v in basis]
    vals = []
    for b in blocks:
        rc = b.reshape(cavity_dim, 2, cavity_dim, 2).trace(axis1=1, axis2=3)
        inside = sum(np.vdot(v, rc @ v) for v in basis)
        vals.append((np.vdot(plus, rc @ plus), inside))
    virt = (n - m) * delta * exposure if mode == "virtual" else 0.0
    # rho(phi) = (B_mm + B_nn + e^{-i phi'} B_mn + e^{i phi'} B_nm)/2 with phi' = phi - virtual phase
    p = []
    for phi in phis:
        ph = phi - virt
        w = [0.5, 0.5, 0.5 * np.exp(-1j * ph), 0.5 * np.exp(1j * ph)]
        proj = sum(wi * v[0] for wi, v in zip(w, vals))
        inside = sum(wi * v[1] for wi, v in zip(w, vals))
        p.append(float(np.real(proj + 0.5 * (1 - inside))))
    p_g = np.clip(np.array(p), 0.0, 1.0)
    if shots:
        rng = rng or np.random.default_rng(0)
        p_g = rng.binomial(shots, p_g) / shots
    amp, off, phase, sa, sb = fit_fringe(phis, p_g)
    if amp < MIN_CONTRAST:
        raise FitError(f"fringe contrast {amp:.2e} below {MIN_CONTRAST}")
    return RamseyRun(m, n, cycles, tau_int, corrected, phis, p_g, amp, off, phase, sa, sb)


def fisher_value(amplitude: float, offset: float, separation: int, t_int: float, t_tot: float) -> float:
    """(n - m)^2 A^2 t_int^2 / (B (1 - B) t_tot); same time unit in and out."""
    denom = offset * (1 - offset)
    if denom <= 0:
        raise ValueError("B(1 - B) must be positive")
    if t_tot <= 0:
        raise ValueError("total time must be positive")
    return separation**2 * amplitude**2 * t_int**2 / (denom * t_tot)


def total_time(run: RamseyRun, overheads: Overheads = Overheads()) -> float:
    per_cycle = run.tau_int + (overheads.correction_us + overheads.reset_us if run.corrected else 0.0)
    return run.cycles * per_cycle + overheads.fixed(run.m)


def fisher(run: RamseyRun, overheads: Overheads = Overheads()) -> FisherResult:
    t_tot = total_time(run, overheads)
    f = fisher_value(run.amplitude, run.offset, run.n - run.m, run.t_int, t_tot)
    return FisherResult(f, run.amplitude, run.offset, run.n - run.m, run.t_int, t_tot,
                        {"fixed_us": overheads.fixed(run.m),
                         "per_cycle_us": t_tot - overheads.fixed(run.m)})


def fisher_from_samples(run: RamseyRun, overheads: Overheads = Overheads(), upsample: int = 4096) -> float:
    """max over phi of (dP/d delta)^2 / (P(1-P)) / t_tot from the sampled fringe.

    The fringe is trigonometrically interpolated from the raw samples (the
    grid must be uniform over one period).
    """
    k = np.fft.rfft(run.p_g)
    n = len(run.p_g)
    fine = np.fft.irfft(k, upsample) * upsample / n
    freqs = np.arange(len(k))
    dk = 1j * freqs * k
    dfine = np.fft.irfft(dk, upsample) * upsample / n
    dp_ddelta = (run.n - run.m) * run.t_int * dfine
    ok = (fine > 0) & (fine < 1)
    val = np.max(dp_ddelta[ok] ** 2 / (fine[ok] * (1 - fine[ok])))
    return float(val / total_time(run, overheads))


def gain_db(f_a: float, f_b: float) -> float:
    if f_a <= 0 or f_b <= 0:
        raise ValueError("Fisher informations must be positive")
    return 10.0 * math.log10(f_a / f_b)


@dataclass
class SweepResult:
    cycles: np.ndarray
    t_int: np.ndarray
    fisher: np.ndarray  # µs
    best_cycles: int
    interior_optimum: bool
    note: str = ""


def sweep_interrogation(m: int, n: int, device: DeviceParams, cycle_range, cycle: CycleSpec | None = None,
                        corrected: bool | None = None, tau_int: float = 150.0,
                        overheads: Overheads = Overheads(), cavity_dim: int = IDEAL_CAVITY_DIM) -> SweepResult:
    """Normalized Fisher information against the number of interrogation periods."""
    ms = np.array(list(cycle_range), dtype=int)
    vals = []
    for k in ms:
        try:
            run = ramsey(m, n, int(k), device, cycle, tau_int=tau_int, corrected=corrected, cavity_dim=cavity_dim)
            vals.append(fisher(run, overheads).fisher)
        except FitError:
            vals.append(0.0)
    vals = np.array(vals)
    i = int(np.argmax(vals))
    interior = 0 < i < len(ms) - 1
    note = "" if interior else "no optimum in range"
    return SweepResult(ms, ms * tau_int, vals, int(ms[i]), interior, note)
