"""Device parameters, experiment specs and config-file loading.

Config files carry ordinary frequencies in MHz and times in µs.  The
simulation kernels work in angular frequency (rad/µs); `DeviceParams.angular`
is the only place that conversion happens.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

log = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi

EXPERIMENT_KINDS = ("reset", "aqec-lifetime", "grape", "metrology", "wigner", "error-budget")
TIERS = ("ideal", "pulse")
ENCODINGS = ("binomial", "sqrt17", "fock14", "fock01", "transmon")

DEFAULT_CHI_PRIME_MHZ = 0.97e-3


class ConfigError(ValueError):
    """Raised for malformed or invalid configuration input."""


@dataclass(frozen=True)
class AngularParams:
    """Device constants in rad/µs and 1/µs, ready for Hamiltonians."""

    kerr_c: float
    kerr_q: float
    chi_qc: float
    chi_qr: float
    chi_prime_qc: float
    kappa_c: float
    kappa_q: float
    kappa_r: float
    gamma_phi_c: float
    gamma_phi_q: float
    nth_c: float
    nth_q: float
    nth_r: float
    omega_c: float | None
    omega_q: float | None
    omega_r: float | None


@dataclass(frozen=True)
class DeviceParams:
    """Hamiltonian and coherence constants.

    Frequencies are ordinary frequencies in MHz (so ``chi_qc=0.88`` means
    chi/2pi = 0.88 MHz), times in µs.  A coherence time of ``math.inf``
    switches the corresponding channel off.
    """

    kerr_c: float = 1.0e-3
    kerr_q: float = 221.0
    kerr_r: float = 0.0
    chi_qc: float = 0.88
    chi_qr: float = 3.0
    chi_prime_qc: float = DEFAULT_CHI_PRIME_MHZ
    t1_c: float = 1400.0
    tphi_c: float = 6500.0
    t1_q: float = 133.0
    tphi_q: float = 388.0
    t1_r: float = 0.113
    nth_c: float = 0.002
    nth_q: float = 0.012
    nth_r: float = 0.0
    freq_c: float | None = 6611.0
    freq_q: float | None = 5478.0
    freq_r: float | None = 8578.0

    def __post_init__(self) -> None:
        for name in ("t1_c", "tphi_c", "t1_q", "tphi_q", "t1_r"):
            value = getattr(self, name)
            if not value > 0:
                raise ConfigError(f"{name} must be > 0 µs, got {value!r}")
        for name in ("kerr_c", "kerr_q", "kerr_r", "chi_qc", "chi_qr", "chi_prime_qc"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ConfigError(f"{name} must be a finite non-negative rate, got {value!r}")
        for name in ("nth_c", "nth_q", "nth_r"):
            value = getattr(self, name)
            if not 0 <= value < 0.5:
                raise ConfigError(f"{name} must lie in [0, 0.5), got {value!r}")

    @property
    def kappa_r_mhz(self) -> float:
        """Resonator linewidth kappa_r/2pi in MHz."""
        return 1.0 / (TWO_PI * self.t1_r)

    @property
    def angular(self) -> AngularParams:
        def rate(t):
            return 0.0 if math.isinf(t) else 1.0 / t

        def opt(f):
            return None if f is None else TWO_PI * f

        return AngularParams(
            kerr_c=TWO_PI * self.kerr_c,
            kerr_q=TWO_PI * self.kerr_q,
            chi_qc=TWO_PI * self.chi_qc,
            chi_qr=TWO_PI * self.chi_qr,
            chi_prime_qc=TWO_PI * self.chi_prime_qc,
            kappa_c=rate(self.t1_c),
            kappa_q=rate(self.t1_q),
            kappa_r=rate(self.t1_r),
            gamma_phi_c=rate(self.tphi_c),
            gamma_phi_q=rate(self.tphi_q),
            nth_c=self.nth_c,
            nth_q=self.nth_q,
            nth_r=self.nth_r,
            omega_c=opt(self.freq_c),
            omega_q=opt(self.freq_q),
            omega_r=opt(self.freq_r),
        )

    def replace(self, **changes) -> "DeviceParams":
        return dataclasses.replace(self, **changes)

    def noiseless(self) -> "DeviceParams":
        """Same Hamiltonian, every dissipative channel switched off."""
        return self.replace(
            t1_c=math.inf, tphi_c=math.inf, t1_q=math.inf, tphi_q=math.inf,
            nth_c=0.0, nth_q=0.0, nth_r=0.0,
        )

    def to_dict(self) -> dict[str, Any]:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            out[f.name] = "inf" if isinstance(v, float) and math.isinf(v) else v
        return out


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    encoding: str = "binomial"
    tier: str = "ideal"
    overrides: Mapping[str, Any] = field(default_factory=dict)
    output_dir: str = "out"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in EXPERIMENT_KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; valid: {', '.join(EXPERIMENT_KINDS)}")
        if self.tier not in TIERS:
            raise ConfigError(f"unknown tier {self.tier!r}; valid: {', '.join(TIERS)}")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "encoding": self.encoding,
            "tier": self.tier,
            "overrides": dict(self.overrides),
            "output_dir": self.output_dir,
            "seed": int(self.seed),
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


# Config file keys are the DeviceParams field names.
_DEVICE_KEYS = {f.name for f in dataclasses.fields(DeviceParams)}
_SPEC_KEYS = {f.name for f in dataclasses.fields(ExperimentSpec)}


def _parse_text(text: str, suffix: str, origin: str) -> dict:
    if suffix == ".json":
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{origin}: JSON parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        # the message already carries "(at line L, column C)"
        raise ConfigError(f"{origin}: TOML parse error: {exc}") from exc


def _number(value, name):
    if isinstance(value, str) and value.strip().lower() in ("inf", "infinity"):
        return math.inf
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"device field {name!r} must be a number, got {value!r}")
    return float(value)


def device_from_mapping(data: Mapping[str, Any]) -> DeviceParams:
    unknown = set(data) - _DEVICE_KEYS
    if unknown:
        raise ConfigError(f"unknown device keys: {', '.join(sorted(unknown))}")
    values = {}
    for k, v in data.items():
        values[k] = None if v is None and k.startswith("freq_") else _number(v, k)
    if "chi_prime_qc" not in values:
        log.info("chi_prime_qc not given; using default %.2f kHz", DEFAULT_CHI_PRIME_MHZ * 1e3)
    return DeviceParams(**values)


def spec_from_mapping(data: Mapping[str, Any]) -> ExperimentSpec:
    unknown = set(data) - _SPEC_KEYS
    if unknown:
        raise ConfigError(f"unknown experiment keys: {', '.join(sorted(unknown))}")
    if "kind" not in data:
        raise ConfigError("experiment section requires field 'kind'")
    return ExperimentSpec(**data)


def load_device(path: str | Path) -> DeviceParams:
    path = Path(path)
    data = _parse_text(path.read_text(), path.suffix.lower(), str(path))
    return device_from_mapping(data.get("device", data))


def load_config(path: str | Path) -> tuple[DeviceParams, ExperimentSpec | None]:
    """Read a TOML or JSON file with a ``[device]`` and optional ``[experiment]`` table."""
    path = Path(path)
    data = _parse_text(path.read_text(), path.suffix.lower(), str(path))
    unknown = set(data) - {"device", "experiment"}
    if unknown:
        raise ConfigError(f"unknown top-level sections: {', '.join(sorted(unknown))}")
    device = device_from_mapping(data.get("device", {}))
    spec = spec_from_mapping(data["experiment"]) if "experiment" in data else None
    return device, spec


def bundled_device_path() -> Path:
    return Path(str(resources.files("aqec_sim") / "data" / "device_reference.toml"))


def default_device() -> DeviceParams:
    return load_device(bundled_device_path())
