"""Engineered-dissipation ancilla reset through a driven lossy resonator.

The qubit is Rabi-driven at Omega_R while the resonator is driven at
detuning Delta_r.  In the frame displaced by the resonator steady-state
amplitude xi_r, the cross-Kerr term becomes a sideband coupling that removes
one dressed-state excitation into the resonator whenever Delta_r - chi_qr/2
matches Omega_R.  Basis-change rotations before and after the drive map the
stabilized dressed state back to |g>.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .config import TWO_PI, DeviceParams
from .dynamics import LindbladModel, _dp45, evolve_series, liouvillian
from .fock import destroy

# maps |g> to (|g>-|e>)/sqrt2, the dressed state the drive stabilizes
PRE_ROTATION = np.array([[1, 1], [-1, 1]], dtype=complex) / math.sqrt(2)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
PROJ_E = np.diag([0.0, 1.0]).astype(complex)

RESERVOIR_DIM = 25
DISPLACED_DIM = 10
TOP_LEVEL_TOL = 1e-3


class TruncationError(RuntimeError):
    pass


@dataclass(frozen=True)
class ResetDriveParams:
    """Reset drive settings: frequencies in MHz, times in µs.

    ``stark_offset_mhz`` is the bare qubit detuning delta_qc; ``None`` means
    qubit_detuning - chi_qr |xi_r|^2.
    """

    rabi_mhz: float = 40.0
    drive_mhz: float = 80.0
    resonator_detuning_mhz: float = 41.5
    qubit_detuning_mhz: float = 12.4
    stark_offset_mhz: float | None = None
    ramp_us: float = 0.19
    hold_us: float = 0.19
    post_wait_us: float = 0.4
    stark_tracking: bool = True

    def __post_init__(self) -> None:
        for name in ("rabi_mhz", "drive_mhz", "ramp_us", "hold_us", "post_wait_us"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @property
    def duration(self) -> float:
        return 2 * self.ramp_us + self.hold_us

    def replace(self, **kw) -> "ResetDriveParams":
        from dataclasses import replace

        return replace(self, **kw)

    def envelope(self, t: float) -> float:
        """Cosine-edged resonator drive envelope in [0, 1]."""
        r, T = self.ramp_us, self.duration
        if t < 0 or t > T:
            return 0.0
        if r > 0 and t < r:
            return 0.5 * (1 - math.cos(math.pi * t / r))
        if r > 0 and t > T - r:
            return 0.5 * (1 - math.cos(math.pi * (T - t) / r))
        return 1.0


@dataclass(frozen=True)
class EffectiveResetModel:
    xi_r: complex
    gamma_eff: float  # 1/µs
    dephasing_coeff: float  # chi_qc chi_qr |xi_r| / (2 Omega_R sqrt(kappa_r)), sqrt(1/µs)
    resonance_mismatch: float  # (Delta_r - chi_qr/2) - Omega_R in rad/µs
    resonant: bool
    strong_rabi: bool  # Omega_R >> chi_qc
    weak_coupling: bool  # chi_qr |xi_r| << kappa_r
    coupling_ratio: float  # chi_qr |xi_r| / kappa_r

    @property
    def photons(self) -> float:
        return abs(self.xi_r) ** 2


def displaced_amplitude(drive: float, detuning: float, kappa: float) -> complex:
    """xi = -eps / (Delta - i kappa/2), all in angular units."""
    return -drive / complex(detuning, -kappa / 2)


def effective_model(params: ResetDriveParams, device: DeviceParams) -> EffectiveResetModel:
    w = device.angular
    eps = TWO_PI * params.drive_mhz
    delta_r = TWO_PI * params.resonator_detuning_mhz
    rabi = TWO_PI * params.rabi_mhz
    xi = displaced_amplitude(eps, delta_r, w.kappa_r)
    gamma = w.chi_qr**2 * abs(xi) ** 2 / w.kappa_r
    deph = w.chi_qc * w.chi_qr * abs(xi) / (2 * rabi * math.sqrt(w.kappa_r)) if rabi > 0 else math.inf
    mismatch = (delta_r - w.chi_qr / 2) - rabi
    ratio = w.chi_qr * abs(xi) / w.kappa_r
    return EffectiveResetModel(
        xi_r=xi,
        gamma_eff=gamma,
        dephasing_coeff=deph,
        resonance_mismatch=mismatch,
        resonant=abs(mismatch) <= w.kappa_r / 2,
        strong_rabi=rabi >= 10 * w.chi_qc,
        weak_coupling=ratio <= 0.1 + 1e-12,
        coupling_ratio=ratio,
    )


# ------------------------------------------------------------ full model

@dataclass(frozen=True, eq=False)
class _ResetOps:
    dim_r: int
    a: np.ndarray
    n_r: np.ndarray
    n_q: np.ndarray
    sx: np.ndarray
    sm: np.ndarray
    drive_x: np.ndarray


def _ops(dim_r: int) -> _ResetOps:
    # ordering (qubit, resonator); qubit index 0 = g
    a_r = destroy(dim_r)
    eye_r = np.eye(dim_r)
    a = np.kron(np.eye(2), a_r)
    return _ResetOps(
        dim_r,
        a,
        a.conj().T @ a,
        np.kron(PROJ_E, eye_r),
        np.kron(SIGMA_X, eye_r),
        np.kron(np.array([[0, 1], [0, 0]], dtype=complex), eye_r),
        a + a.conj().T,
    )


def _stark_photons(params: ResetDriveParams, device: DeviceParams) -> float:
    # mean-field photon number with the qubit in the stabilized dressed
    # state, which pulls the resonator by chi_qr/2
    w = device.angular
    return abs(displaced_amplitude(TWO_PI * params.drive_mhz,
                                   TWO_PI * params.resonator_detuning_mhz - w.chi_qr / 2, w.kappa_r)) ** 2


def stark_offset(params: ResetDriveParams, device: DeviceParams) -> float:
    """delta_qc in rad/µs."""
    if params.stark_offset_mhz is not None:
        return TWO_PI * params.stark_offset_mhz
    xi2 = effective_model(params, device).photons
    return TWO_PI * params.qubit_detuning_mhz - device.angular.chi_qr * xi2


def _pieces(params: ResetDriveParams, device: DeviceParams, dim_r: int, cavity_photons: int = 0,
            qubit_noise: bool = True):
    """Static Hamiltonian, drive hooks and collapse list for one cavity sector."""
    w = device.angular
    o = _ops(dim_r)
    delta_r = TWO_PI * params.resonator_detuning_mhz
    rabi = TWO_PI * params.rabi_mhz
    eps = TWO_PI * params.drive_mhz
    offset = stark_offset(params, device)
    # the qubit drive follows the Stark shift of the ramping resonator field
    # so the detuning at full drive equals qubit_detuning
    track = w.chi_qr * effective_model(params, device).photons if params.stark_tracking else 0.0
    if not params.stark_tracking:
        offset = TWO_PI * params.qubit_detuning_mhz
    T = params.duration

    h0 = delta_r * o.n_r - w.chi_qr * o.n_q @ o.n_r + (offset - w.chi_qc * cavity_photons) * o.n_q
    drives = [
        (o.drive_x, lambda t: eps * params.envelope(t)),
        (0.5 * rabi * o.sx, lambda t: 1.0 if 0 <= t <= T else 0.0),
    ]
    if track:
        drives.append((o.n_q, lambda t: track * params.envelope(t) ** 2))
    cops = [(o.a, (1 + w.nth_r) * w.kappa_r)]
    if w.nth_r:
        cops.append((o.a.conj().T, w.nth_r * w.kappa_r))
    if qubit_noise:
        cops += [
            (o.sm, (1 + w.nth_q) * w.kappa_q),
            (o.sm.conj().T, w.nth_q * w.kappa_q),
            (o.n_q, 2 * w.gamma_phi_q),
        ]
    return o, h0, drives, cops


class ResetGenerator:
    """Lindblad right-hand side for the qubit (x) resonator reset problem.

    Every term is diagonal, a qubit swap or a resonator ladder shift, so the
    action on a (2, n, 2, n) block costs O(n^2) instead of dense matrix
    products.  ``n_left``/``n_right`` select the cavity Fock sectors on the
    two sides of a cavity coherence; equal values give the ordinary
    density-matrix equation.

    With ``displaced=True`` the resonator is written relative to the classical
    field alpha(t) of the driven, qubit-free resonator.  The drive then drops
    out and the cross-Kerr term supplies the sideband coupling
    -chi_qr n_q (alpha* a + alpha a†) plus the Stark term -chi_qr |alpha|^2 n_q.
    """

    def __init__(self, params: ResetDriveParams, device: DeviceParams, dim_r: int,
                 n_left: int = 0, n_right: int = 0, qubit_noise: bool = True, displaced: bool = False):
        w = device.angular
        self.params = params
        self.dim_r = dim_r
        self.displaced = displaced
        r = np.arange(dim_r, dtype=float)
        q = np.array([0.0, 1.0])
        offset = stark_offset(params, device) if params.stark_tracking else TWO_PI * params.qubit_detuning_mhz
        self.track = w.chi_qr * effective_model(params, device).photons if params.stark_tracking else 0.0
        self.chi = w.chi_qr
        self.eps = TWO_PI * params.drive_mhz
        self.half_rabi = 0.5 * TWO_PI * params.rabi_mhz
        base = TWO_PI * params.resonator_detuning_mhz * r[None, :] - w.chi_qr * q[:, None] * r[None, :]
        k_down = (1 + w.nth_r) * w.kappa_r
        k_up = w.nth_r * w.kappa_r
        if qubit_noise:
            self.q_down = (1 + w.nth_q) * w.kappa_q
            self.q_up = w.nth_q * w.kappa_q
            self.q_phi = 2 * w.gamma_phi_q
        else:
            self.q_down = self.q_up = self.q_phi = 0.0
        loss = 0.5 * (k_down * r[None, :] + k_up * (r[None, :] + 1))
        loss = loss + 0.5 * (self.q_down * q[:, None] + self.q_up * (1 - q[:, None]) + self.q_phi * q[:, None])
        e_left = base + (offset - w.chi_qc * n_left) * q[:, None]
        e_right = base + (offset - w.chi_qc * n_right) * q[:, None]
        # -i(E_L - E_R) - (G_L + G_R), static part
        self.static = -1j * (e_left[:, :, None, None] - e_right[None, None, :, :]) - (
            loss[:, :, None, None] + loss[None, None, :, :])
        self.qdiff = -1j * (q[:, None, None, None] - q[None, None, :, None])
        self.ladder = np.sqrt(r[1:])  # <k|a|k+1>
        self.k_down, self.k_up = k_down, k_up
        self.lad2 = np.outer(self.ladder, self.ladder)
        self.alpha = classical_field(params, device) if displaced else None

    def _x(self, x, axis):
        # (a + a†) along one resonator axis; it is real symmetric so the
        # same shift serves left and right multiplication
        out = np.zeros_like(x)
        s = self.ladder
        if axis == 1:
            out[:, :-1] += s[None, :, None, None] * x[:, 1:]
            out[:, 1:] += s[None, :, None, None] * x[:, :-1]
        else:
            out[..., :-1] += s * x[..., 1:]
            out[..., 1:] += s * x[..., :-1]
        return out

    def _sideband(self, x, alpha):
        # -i[-chi n_q (alpha* a + alpha a†), x]
        s = self.ladder
        ca = np.conj(alpha)
        left = np.zeros_like(x[1])
        left[:-1] += ca * s[:, None, None] * x[1, 1:]
        left[1:] += alpha * s[:, None, None] * x[1, :-1]
        right = np.zeros_like(x[:, :, 1])
        right[..., 1:] += ca * s * x[:, :, 1, :-1]
        right[..., :-1] += alpha * s * x[:, :, 1, 1:]
        out = np.zeros_like(x)
        out[1] += 1j * self.chi * left
        out[:, :, 1] -= 1j * self.chi * right
        return out

    def __call__(self, t: float, x: np.ndarray) -> np.ndarray:
        p = self.params
        d = self.dim_r
        x = x.reshape(2, d, 2, d)
        env = p.envelope(t)
        out = self.static * x
        shift = self.track * env * env
        if self.displaced:
            alpha = self.alpha(t)
            shift -= self.chi * abs(alpha) ** 2
            if alpha:
                out += self._sideband(x, alpha)
        elif env:
            out += -1j * self.eps * env * (self._x(x, 1) - self._x(x, 3))
        if shift:
            out += shift * self.qdiff * x
        if 0 <= t <= p.duration and self.half_rabi:
            out += -1j * self.half_rabi * (x[::-1] - x[:, :, ::-1])
        # resonator jumps
        out[:, :-1, :, :-1] += self.k_down * self.lad2[None, :, None, :] * x[:, 1:, :, 1:]
        if self.k_up:
            out[:, 1:, :, 1:] += self.k_up * self.lad2[None, :, None, :] * x[:, :-1, :, :-1]
        # qubit jumps
        if self.q_down:
            out[0, :, 0, :] += self.q_down * x[1, :, 1, :]
        if self.q_up:
            out[1, :, 1, :] += self.q_up * x[0, :, 0, :]
        if self.q_phi:
            out[1, :, 1, :] += self.q_phi * x[1, :, 1, :]
        return out.reshape(2 * d, 2 * d)


def classical_field(params: ResetDriveParams, device: DeviceParams):
    """alpha(t) for the driven lossy resonator with the qubit ignored.

    d alpha/dt = -(i Delta_r + kappa_r/2) alpha - i eps env(t), alpha(0) = 0.
    Returned as a callable valid for all t >= 0.
    """
    w = device.angular
    rate = complex(w.kappa_r / 2, TWO_PI * params.resonator_detuning_mhz)
    eps = TWO_PI * params.drive_mhz
    T = params.duration
    if T == 0 or eps == 0:
        return lambda t: 0j

    def f(t, y):
        a = complex(y[0], y[1])
        d = -rate * a - 1j * eps * params.envelope(t)
        return [d.real, d.imag]

    edges = sorted({0.0, params.ramp_us, params.ramp_us + params.hold_us, T})
    pieces = []
    y0 = [0.0, 0.0]
    for lo, hi in zip(edges[:-1], edges[1:]):
        sol = solve_ivp(f, (lo, hi), y0, method="DOP853", rtol=1e-11, atol=1e-13, dense_output=True)
        pieces.append((lo, hi, sol.sol))
        y0 = sol.y[:, -1]
    a_end = complex(*y0)

    def alpha(t):
        if t >= T:
            return a_end * np.exp(-rate * (t - T))
        for lo, hi, sol in pieces:
            if t <= hi:
                v = sol(t)
                return complex(v[0], v[1])
        return 0j

    return alpha


def _reset_model(params, device, dim_r, cavity_photons=0, qubit_noise=True) -> LindbladModel:
    """Dense reference model with the same physics as ResetGenerator."""
    _, h0, drives, cops = _pieces(params, device, dim_r, cavity_photons, qubit_noise)
    return LindbladModel(h0, tuple(cops), tuple(drives))


def _qubit_state(state) -> np.ndarray:
    if isinstance(state, str):
        v = {"g": np.array([1, 0], complex), "e": np.array([0, 1], complex)}[state]
        return np.outer(v, v)
    s = np.asarray(state, dtype=complex)
    return np.outer(s, s.conj()) if s.ndim == 1 else s


def _rotate(rho, rot, dim_r):
    r = np.kron(rot, np.eye(dim_r))
    return r @ rho @ r.conj().T


@dataclass(frozen=True)
class ResetTrace:
    hold_ns: np.ndarray
    p_g: dict  # initial label -> array over holds
    purity: dict  # qubit reduced-state purity
    photons: dict  # resonator photons at the end of the drive
    residual_wait_ns: dict  # extra wait until the resonator is empty

    def crossing_ns(self, label: str, threshold: float = 0.99) -> float:
        """First hold time where P_g reaches ``threshold`` (linear interpolation)."""
        p = self.p_g[label]
        idx = np.nonzero(p >= threshold)[0]
        if idx.size == 0:
            return math.inf
        i = int(idx[0])
        if i == 0:
            return float(self.hold_ns[0])
        h0, h1, p0, p1 = self.hold_ns[i - 1], self.hold_ns[i], p[i - 1], p[i]
        return float(h0 + (threshold - p0) * (h1 - h0) / (p1 - p0))


def _end_states(params, device, ancilla, dim_r, cavity_photons, displaced, rtol):
    gen = ResetGenerator(params, device, dim_r, cavity_photons, cavity_photons, displaced=displaced)
    rho_r = np.zeros((dim_r, dim_r), complex)
    rho_r[0, 0] = 1
    rho = _rotate(np.kron(_qubit_state(ancilla), rho_r), PRE_ROTATION, dim_r)
    T = params.duration
    stops = sorted({params.ramp_us, params.ramp_us + params.hold_us, T} - {0.0})
    states = [rho] if T == 0 else _dp45(gen, 0.0, rho, stops, rtol, 1e-10, None, math.inf, 1e-12)
    for s in states:
        top = np.real(np.trace(s.reshape(2, dim_r, 2, dim_r)[:, -2:, :, -2:], axis1=0, axis2=2)).sum()
        if top > TOP_LEVEL_TOL:
            raise TruncationError(f"resonator top-level population {top:.2e} > {TOP_LEVEL_TOL}; raise resonator_dim")
    final = states[-1]
    return 0.5 * (final + final.conj().T), (gen.alpha(T) if displaced else 0j)


def run_reset(params: ResetDriveParams, device: DeviceParams, ancilla="e", dim_r: int | None = None,
              cavity_photons: int = 0, empty_threshold: float = 1e-3, rtol: float = 1e-7,
              frame: str = "displaced"):
    """Single reset: returns (P_g, qubit purity, end photons, residual wait in ns).

    ``frame="lab"`` integrates the undisplaced equations and needs a
    resonator truncation of at least 20; the displaced frame only has to hold
    the quantum fluctuations around the classical field.
    """
    if frame not in ("lab", "displaced"):
        raise ValueError(f"unknown frame {frame!r}")
    displaced = frame == "displaced"
    dim_r = dim_r or (DISPLACED_DIM if displaced else RESERVOIR_DIM)
    if not displaced and dim_r < 20:
        raise ValueError("lab-frame reset simulations need resonator_dim >= 20")
    rho, alpha = _end_states(params, device, ancilla, dim_r, cavity_photons, displaced, rtol)
    final = _rotate(rho, PRE_ROTATION.conj().T, dim_r)
    blocks = final.reshape(2, dim_r, 2, dim_r)
    q = np.trace(blocks, axis1=1, axis2=3)
    p_g = float(np.real(q[0, 0]))
    purity = float(np.real(np.trace(q @ q)))
    res = np.trace(blocks, axis1=0, axis2=2)
    a = destroy(dim_r)
    n_end = float(np.real(np.trace(res @ a.conj().T @ a)))
    # lab photons = <(a† + alpha*)(a + alpha)>
    n_end += 2 * float(np.real(np.conj(alpha) * np.trace(res @ a))) + abs(alpha) ** 2
    # free decay of the leftover photons
    wait = 0.0 if n_end <= empty_threshold else math.log(n_end / empty_threshold) / device.angular.kappa_r
    return p_g, purity, n_end, 1e3 * wait


def simulate_reset(params: ResetDriveParams, device: DeviceParams, holds_ns=None, initial=("g", "e"),
                   dim_r: int | None = None, cavity_photons: int = 0, frame: str = "displaced") -> ResetTrace:
    """Ground-state population after resets of varying hold duration."""
    holds = np.asarray(holds_ns if holds_ns is not None else np.arange(0, 401, 40), dtype=float)
    pg, pur, nph, wait = {}, {}, {}, {}
    for label in initial:
        rows = [run_reset(params.replace(hold_us=h * 1e-3), device, label, dim_r, cavity_photons, frame=frame)
                for h in holds]
        pg[label] = np.array([r[0] for r in rows])
        pur[label] = np.array([r[1] for r in rows])
        nph[label] = np.array([r[2] for r in rows])
        wait[label] = np.array([r[3] for r in rows])
    return ResetTrace(holds, pg, pur, nph, wait)


def steady_state_photons(params: ResetDriveParams, device: DeviceParams, dim_r: int = RESERVOIR_DIM) -> float:
    """Resonator photon number under constant drive with the qubit idle in |g>."""
    w = device.angular
    a = destroy(dim_r)
    h = TWO_PI * params.resonator_detuning_mhz * a.conj().T @ a + TWO_PI * params.drive_mhz * (a + a.conj().T)
    model = LindbladModel(h, ((a, (1 + w.nth_r) * w.kappa_r), (a.conj().T, w.nth_r * w.kappa_r)))
    sup = liouvillian(model)
    # replace one equation by the trace condition
    trace_row = np.eye(dim_r).reshape(-1)
    sup[0, :] = trace_row
    rhs = np.zeros(dim_r * dim_r, complex)
    rhs[0] = 1
    rho = np.linalg.solve(sup, rhs).reshape(dim_r, dim_r)
    return float(np.real(np.trace(a.conj().T @ a @ rho)))


def measured_decay_rate(params: ResetDriveParams, device: DeviceParams, t_max: float, samples: int = 40,
                        dim_r: int = 8) -> float:
    """Decay rate (1/µs) of the dressed |+> population under constant drives.

    Qubit decoherence is switched off so only the engineered channel acts.
    The resonator starts in its coherent steady state and the qubit drive
    is tuned onto the Stark-shifted transition.
    """
    w = device.angular
    # the qubit drive sits exactly on the Stark-shifted transition
    p = params.replace(ramp_us=0.0, hold_us=t_max, stark_offset_mhz=0.0, stark_tracking=True)
    o, h0, drives, cops = _pieces(p, device, dim_r, qubit_noise=False)
    # constant drive: fold the hooks into a static Hamiltonian
    xi2 = _stark_photons(p, device)
    h = h0 + TWO_PI * p.drive_mhz * o.drive_x + 0.5 * TWO_PI * p.rabi_mhz * o.sx + w.chi_qr * xi2 * o.n_q
    model = LindbladModel(h, tuple(cops))
    xi = displaced_amplitude(TWO_PI * p.drive_mhz, TWO_PI * p.resonator_detuning_mhz - w.chi_qr / 2, w.kappa_r)
    coh = _coherent(xi, dim_r)
    plus = np.array([1, 1], complex) / math.sqrt(2)
    psi = np.kron(plus, coh)
    times = np.linspace(0, t_max, samples + 1)
    proj = np.kron(np.outer(plus, plus), np.eye(dim_r))
    states = evolve_series(model, np.outer(psi, psi.conj()), times, rtol=1e-8, atol=1e-11)
    pop = np.array([np.real(np.trace(proj @ s)) for s in states])
    # fit log population on the portion above numerical floor, skipping the
    # resonator transient
    keep = (pop > 1e-6) & (times > 5 / w.kappa_r)
    slope, _ = np.polyfit(times[keep], np.log(pop[keep]), 1)
    return float(-slope)


def _coherent(alpha: complex, dim: int) -> np.ndarray:
    n = np.arange(dim)
    logf = np.array([math.lgamma(k + 1) for k in n])
    v = np.exp(-abs(alpha) ** 2 / 2) * np.exp(n * np.log(alpha + 0j) - 0.5 * logf) if alpha else (n == 0).astype(complex)
    return v / np.linalg.norm(v)


# --------------------------------------------------------- reset phases

@dataclass(frozen=True, eq=False)
class ResetPhaseTable:
    """Cavity phases picked up per Fock number during one reset.

    ``phases_g[N]`` / ``phases_e[N]`` are for the ancilla starting in |g> / |e>;
    index 0 is the reference and always 0.
    """

    phases_g: np.ndarray
    phases_e: np.ndarray
    slope_g: float = 0.0
    slope_e: float = 0.0
    residual_g: float = 0.0
    residual_e: float = 0.0
    contrast: np.ndarray = field(default_factory=lambda: np.ones(1))

    @classmethod
    def zeros(cls, n_max: int = 1) -> "ResetPhaseTable":
        z = np.zeros(n_max + 1)
        return cls(z, z.copy(), contrast=np.ones(n_max + 1))

    def phase(self, branch: str, n: int) -> float:
        """Phase for Fock number n; beyond the table the linear fit extrapolates."""
        table, slope = (self.phases_g, self.slope_g) if branch == "g" else (self.phases_e, self.slope_e)
        if n < table.size:
            return float(table[n])
        return float(slope * n)

    def diagonal(self, branch: str, dim: int) -> np.ndarray:
        return np.exp(1j * np.array([self.phase(branch, n) for n in range(dim)]))

    def to_dict(self) -> dict:
        return {
            "phases_g": self.phases_g.tolist(),
            "phases_e": self.phases_e.tolist(),
            "slope_g": self.slope_g,
            "slope_e": self.slope_e,
        }


def _sector_coherence(params, device, dim_r, n_left, n_right, ancilla):
    """Trace of the <n_left| rho |n_right> cavity block after one reset."""
    rhs = ResetGenerator(params, device, dim_r, n_left, n_right, displaced=True)
    rho_r = np.zeros((dim_r, dim_r), complex)
    rho_r[0, 0] = 1
    x0 = _rotate(np.kron(_qubit_state(ancilla), rho_r), PRE_ROTATION, dim_r)
    T = params.duration
    if T == 0:
        return 1.0 + 0j
    stops = sorted({params.ramp_us, params.ramp_us + params.hold_us, T} - {0.0})
    x = _dp45(rhs, 0.0, x0, stops, 1e-8, 1e-11, None, math.inf, 1e-12)[-1]
    return complex(np.trace(x))


def calibrate_reset_phases(params: ResetDriveParams, device: DeviceParams, n_max: int = 4,
                           dim_r: int = DISPLACED_DIM, min_contrast: float = 0.1) -> ResetPhaseTable:
    """Simulated Ramsey on (|0>+|N>)/sqrt2 through one reset, for N = 1..n_max.

    Cavity Fock number is conserved by the reset Hamiltonian, so each
    coherence evolves in the qubit-resonator space alone.
    """
    phases = {"g": np.zeros(n_max + 1), "e": np.zeros(n_max + 1)}
    contrast = np.ones(n_max + 1)
    for branch in ("g", "e"):
        for n in range(1, n_max + 1):
            c = _sector_coherence(params, device, dim_r, n, 0, branch)
            # the cavity state picks up e^{i phi_N} on |N>
            phases[branch][n] = math.atan2(c.imag, c.real)
            contrast[n] = min(contrast[n], abs(c))
    if np.any(contrast[1:] < min_contrast):
        raise RuntimeError(f"reset Ramsey contrast {contrast.min():.3f} below {min_contrast}; phase fit unreliable")
    fits = {}
    ns = np.arange(n_max + 1)
    for branch in ("g", "e"):
        ph = np.unwrap(phases[branch])
        phases[branch] = ph
        slope = float(ph @ ns / (ns @ ns))
        resid = float(np.max(np.abs(ph - slope * ns)))
        fits[branch] = (slope, resid)
    return ResetPhaseTable(
        phases["g"], phases["e"], fits["g"][0], fits["e"][0], fits["g"][1], fits["e"][1], contrast
    )


# ------------------------------------------------------------- channel

@dataclass(frozen=True, eq=False)
class ResetChannel:
    """Reset as a channel on cavity (x) qubit densities (qubit dimension 2).

    Both ancilla states end in |g>, with Fock-number phases from the table.
    With ``error_prob`` > 0 and a code projector supplied, the |e> branch is
    depolarized inside the code space with that probability.
    """

    cavity_dim: int
    phase_table: ResetPhaseTable
    error_prob: float = 0.0
    code_basis: tuple | None = None

    def kraus(self) -> list[np.ndarray]:
        d = self.cavity_dim
        dg = np.diag(self.phase_table.diagonal("g", d))
        de = np.diag(self.phase_table.diagonal("e", d))
        k_g = np.kron(dg, np.array([[1, 0], [0, 0]], complex))
        k_e = np.kron(de, np.array([[0, 1], [0, 0]], complex))
        return [k_g, k_e]

    def apply(self, rho: np.ndarray) -> np.ndarray:
        k_g, k_e = self.kraus()
        out_g = k_g @ rho @ k_g.conj().T
        out_e = k_e @ rho @ k_e.conj().T
        if self.error_prob and self.code_basis is not None:
            mixed = self._code_mixture()
            out_e = (1 - self.error_prob) * out_e + self.error_prob * np.trace(out_e) * mixed
        return out_g + out_e

    def _code_mixture(self) -> np.ndarray:
        g = np.array([1, 0], complex)
        vecs = [np.kron(c, g) for c in self.code_basis]
        return sum(np.outer(v, v.conj()) for v in vecs) / len(vecs)

    __call__ = apply

    def choi(self) -> np.ndarray:
        d = 2 * self.cavity_dim
        out = np.zeros((d * d, d * d), complex)
        for i in range(d):
            for j in range(d):
                e = np.zeros((d, d), complex)
                e[i, j] = 1
                out += np.kron(e, self.apply(e))
        return out


def reset_channel(params: ResetDriveParams | None, device: DeviceParams | None, phase_table: ResetPhaseTable | None,
                  cavity_dim: int = 12, error_prob: float = 0.0, code=None) -> ResetChannel:
    """Idealized reset channel; calibrates phases when no table is supplied."""
    if phase_table is None:
        if params is None or device is None:
            phase_table = ResetPhaseTable.zeros()
        else:
            phase_table = calibrate_reset_phases(params, device)
    basis = None if code is None else tuple(code.codewords(cavity_dim))
    return ResetChannel(cavity_dim, phase_table, error_prob, basis)
