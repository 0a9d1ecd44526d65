"""Command-line runner: ``aqec-sim <subcommand> [options]``.

Every run writes its data files plus ``manifest.json`` into ``--out``.
Data files depend only on (spec, device, seed); the manifest also records
the wall time, so it is the one file that differs between reruns.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import platform
import sys
import time
from dataclasses import fields
from importlib import resources
from pathlib import Path
from typing import Any, Callable

import numpy as np
import scipy

from . import __version__
from .codes import LOGICAL_LABELS, code_by_name, logical_state
from .config import ENCODINGS, TIERS, ConfigError, DeviceParams, ExperimentSpec, default_device, load_config, load_device
from .dynamics import FitError, IntegrationError
from .fock import wigner
from .grape import PulseSchedule, TransferTarget, optimize
from .metrology import Overheads, fisher, gain_db, ramsey
from .protocol import (
    PULSE_CAVITY_DIM,
    CycleSpec,
    break_even,
    cascaded_target,
    default_cycle,
    error_budget,
    lifetime_experiment,
    recovery_target,
)
from .reset import ResetDriveParams, TruncationError, calibrate_reset_phases, simulate_reset, steady_state_photons

log = logging.getLogger("aqec_sim")

EXIT_USAGE = 2
EXIT_FAILURE = 1

SUBCOMMANDS = {
    "simulate-reset": "reset",
    "simulate-aqec": "aqec-lifetime",
    "grape": "grape",
    "metrology": "metrology",
    "wigner": "wigner",
    "error-budget": "error-budget",
}

# reference Ramsey settings: (m, n, cycles, corrected)
METROLOGY_RUNS = {
    "fock14_corrected": (1, 4, 3, True),
    "fock14_uncorrected": (1, 4, 2, False),
    "fock01_uncorrected": (0, 1, 8, False),
}


# bundled schema for each JSON output file
OUTPUT_SCHEMAS = {
    "manifest.json": "manifest",
    "reset_summary.json": "reset_summary",
    "summary.json": "aqec_summary",
    "schedule.json": "schedule",
    "grape_report.json": "grape_report",
    "metrology_summary.json": "metrology_summary",
    "error_budget.json": "error_budget",
}


def schema_document(name: str) -> dict:
    path = resources.files("aqec_sim") / "data" / "schemas" / f"{name}.schema.json"
    return json.loads(path.read_text())


class UsageError(Exception):
    pass


# ------------------------------------------------------------- writing

def _clean(x: Any) -> Any:
    """JSON-safe copy: numpy scalars to Python, non-finite floats to null."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        return float(x) if math.isfinite(x) else None
    return x


def write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n")


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


# -------------------------------------------------------------- inputs

def _split_overrides(overrides: dict, allowed: dict[str, type]) -> dict:
    unknown = set(overrides) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown overrides for this experiment: {', '.join(sorted(unknown))}; "
                          f"valid: {', '.join(sorted(allowed))}")
    return dict(overrides)


def _dataclass_keys(cls) -> dict[str, type]:
    return {f.name: object for f in fields(cls)}


def _check_encoding(name: str, allowed=ENCODINGS) -> str:
    if name not in allowed:
        raise UsageError(f"unknown encoding {name!r}; valid encodings: {', '.join(allowed)}")
    return name


def _device(args) -> DeviceParams:
    return load_device(args.device) if args.device else default_device()


def _spec(args, kind: str) -> tuple[ExperimentSpec, DeviceParams]:
    """Merge the optional spec file with command-line flags (flags win)."""
    device = _device(args)
    data: dict[str, Any] = {"kind": kind}
    if args.spec:
        dev_from_spec, file_spec = load_config(args.spec)
        if file_spec is not None:
            if file_spec.kind != kind:
                raise ConfigError(f"spec file describes a {file_spec.kind!r} run, not {kind!r}")
            data.update(file_spec.to_dict())
        if not args.device:
            device = dev_from_spec
    for key in ("encoding", "tier", "seed"):
        val = getattr(args, key, None)
        if val is not None:
            data[key] = val
    if args.out is not None:
        data["output_dir"] = args.out
    return ExperimentSpec(**data), device


# ------------------------------------------------------------ commands

def run_reset(spec: ExperimentSpec, device: DeviceParams, out: Path, args) -> list[str]:
    ov = _split_overrides(spec.overrides, {**_dataclass_keys(ResetDriveParams), "holds_ns": list})
    holds = np.asarray(ov.pop("holds_ns", np.arange(0, 401, 10)), dtype=float)
    params = ResetDriveParams(**ov)
    trace = simulate_reset(params, device, holds)
    rows = zip(holds, trace.p_g["g"], trace.p_g["e"], trace.purity["e"])
    write_csv(out / "reset.csv", ["t_ns", "P_g_from_g", "P_g_from_e", "purity"], rows)
    summary = {
        "crossing_ns": {k: trace.crossing_ns(k) for k in ("g", "e")},
        "steady_state_photons": steady_state_photons(params, device),
        "end_photons": {k: trace.photons[k][-1] for k in ("g", "e")},
    }
    write_json(out / "reset_summary.json", summary)
    return ["reset.csv", "reset_summary.json"]


def _cycle_for(spec: ExperimentSpec, device: DeviceParams, schedule: PulseSchedule | None, overrides: dict):
    kw = {k: v for k, v in overrides.items() if k in _dataclass_keys(CycleSpec)}
    if schedule is not None:
        kw.setdefault("reset", "simulated")
    return default_cycle(spec.encoding, device, schedule, **kw)


def _load_schedule(path: str | None) -> PulseSchedule | None:
    if path is None:
        return None
    return PulseSchedule.from_dict(json.loads(Path(path).read_text()))


def run_aqec(spec: ExperimentSpec, device: DeviceParams, out: Path, args) -> list[str]:
    _check_encoding(spec.encoding, ("binomial", "sqrt17", "fock14", "fock01", "transmon"))
    ov = _split_overrides(spec.overrides, {**_dataclass_keys(CycleSpec), "cycles": int})
    cycles = int(ov.pop("cycles", 13))
    schedule = _load_schedule(args.schedule) if spec.tier == "pulse" else None
    if spec.tier == "pulse" and schedule is None:
        raise UsageError("--tier pulse needs --schedule (a schedule JSON written by the grape subcommand)")
    written = []
    if spec.encoding in ("binomial", "sqrt17"):
        cycle = _cycle_for(spec, device, schedule, ov)
        results = break_even(device, spec.encoding, cycles, cycle)
        main = results["corrected"]
        for label, res in results.items():
            name = f"decay_{spec.encoding}_{label}.csv" if label in ("corrected", "uncorrected") else f"decay_{label}.csv"
            write_csv(out / name, ["t_us", "F_chi"], zip(res.times_us, res.fidelities))
            written.append(name)
    else:
        main = lifetime_experiment(spec.encoding, device, cycles)
        name = f"decay_{spec.encoding}.csv"
        write_csv(out / name, ["t_us", "F_chi"], zip(main.times_us, main.fidelities))
        written.append(name)
    summary = main.to_dict()
    summary["tier"] = spec.tier
    write_json(out / "summary.json", summary)
    return written + ["summary.json"]


def _grape_target(doc: dict | None, spec: ExperimentSpec, device: DeviceParams) -> TransferTarget:
    if doc is not None and "inputs" in doc:
        return TransferTarget.from_dict(doc)
    if doc is not None and "cascaded" in doc:
        L, G, D = doc["cascaded"]
        return cascaded_target(int(L), int(G), int(D), doc.get("cavity_dim"))
    encoding = (doc or {}).get("encoding", spec.encoding)
    _check_encoding(encoding, ("binomial", "sqrt17", "fock14"))
    dim = int((doc or {}).get("cavity_dim", PULSE_CAVITY_DIM))
    table = calibrate_reset_phases(ResetDriveParams(), device)
    cycle = default_cycle(encoding, device, reset="simulated", phase_table=table)
    return recovery_target(code_by_name(encoding), cycle, device, dim, table, tier="pulse")


def run_grape(spec: ExperimentSpec, device: DeviceParams, out: Path, args) -> list[str]:
    allowed = {"duration": float, "dt": float, "max_iter": int, "tol": float, "cutoff_mhz": float,
               "parameterization": str, "qubit_cap_mhz": float, "cavity_cap_mhz": float}
    ov = _split_overrides(spec.overrides, allowed)
    doc = json.loads(Path(args.target).read_text()) if args.target else None
    target = _grape_target(doc, spec, device)
    schedule, report = optimize(target, device, seed=spec.seed, **ov)
    write_json(out / "schedule.json", schedule.to_dict())
    write_csv(out / "convergence.csv", ["iter", "fidelity"], report.history)
    write_json(out / "grape_report.json", {"fidelity": report.fidelity, "iterations": report.iterations,
                                           "converged": report.converged, "target": target.label})
    return ["schedule.json", "convergence.csv", "grape_report.json"]


def run_metrology(spec: ExperimentSpec, device: DeviceParams, out: Path, args) -> list[str]:
    allowed = {"tau_int": float, "shots": int, "runs": list}
    ov = _split_overrides(spec.overrides, allowed)
    names = ov.get("runs", list(METROLOGY_RUNS))
    unknown = set(names) - set(METROLOGY_RUNS)
    if unknown:
        raise ConfigError(f"unknown metrology runs {sorted(unknown)}; valid: {', '.join(METROLOGY_RUNS)}")
    rng = np.random.default_rng(spec.seed)
    results = {}
    written = []
    for name in names:
        m, n, cycles, corrected = METROLOGY_RUNS[name]
        run = ramsey(m, n, cycles, device, tau_int=ov.get("tau_int", 150.0), corrected=corrected,
                     shots=ov.get("shots"), rng=rng)
        write_csv(out / f"fringe_{name}.csv", ["phi", "P_g"], run.to_rows())
        written.append(f"fringe_{name}.csv")
        results[name] = fisher(run, Overheads())
    ref = results.get("fock14_corrected")
    summary = {}
    for name, res in results.items():
        gain = gain_db(ref.fisher, res.fisher) if ref is not None and name != "fock14_corrected" else None
        summary[name] = res.to_dict(gain)
    write_json(out / "metrology_summary.json", summary)
    return written + ["metrology_summary.json"]


def run_wigner(spec: ExperimentSpec, device: DeviceParams, out: Path, args) -> list[str]:
    allowed = {"extent": float, "points": int, "cavity_dim": int}
    ov = _split_overrides(spec.overrides, allowed)
    code_name, _, label = args.state.partition(":")
    _check_encoding(code_name, ("binomial", "sqrt17", "fock14", "fock01"))
    if label not in LOGICAL_LABELS:
        raise UsageError(f"unknown logical state {label!r}; valid: {', '.join(LOGICAL_LABELS)}")
    code = code_by_name(code_name)
    psi = logical_state(code, label, ov.get("cavity_dim", code.dim + 4))
    grid = wigner(psi, ov.get("extent", 4.0), ov.get("points", 81))
    rows = ((x, p, grid.values[i, j]) for i, x in enumerate(grid.x) for j, p in enumerate(grid.p))
    write_csv(out / "wigner.csv", ["x", "p", "W"], rows)
    return ["wigner.csv"]


def run_budget(spec: ExperimentSpec, device: DeviceParams, out: Path, args) -> list[str]:
    _check_encoding(spec.encoding, ("binomial", "sqrt17"))
    ov = _split_overrides(spec.overrides, _dataclass_keys(CycleSpec))
    schedule = _load_schedule(args.schedule) if spec.tier == "pulse" else None
    if spec.tier == "pulse" and schedule is None:
        raise UsageError("--tier pulse needs --schedule (a schedule JSON written by the grape subcommand)")
    cycle = _cycle_for(spec, device, schedule, ov)
    budget = error_budget(spec.encoding, device, cycle)
    write_json(out / "error_budget.json", budget.to_dict())
    return ["error_budget.json"]


RUNNERS: dict[str, Callable] = {
    "simulate-reset": run_reset,
    "simulate-aqec": run_aqec,
    "grape": run_grape,
    "metrology": run_metrology,
    "wigner": run_wigner,
    "error-budget": run_budget,
}


# -------------------------------------------------------------- parser

def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aqec-sim", description="Autonomous bosonic error-correction simulator.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in RUNNERS:
        sp = sub.add_parser(name)
        sp.add_argument("--device", help="device TOML/JSON (default: bundled reference device)")
        sp.add_argument("--spec", help="experiment TOML/JSON with [device] and [experiment] tables")
        sp.add_argument("--out", help="output directory (default: spec output_dir or ./out)")
        sp.add_argument("--seed", type=_u64)
        sp.add_argument("--tier", choices=TIERS)
        sp.add_argument("--encoding", help=f"one of: {', '.join(ENCODINGS)}")
        sp.add_argument("-v", "--verbose", action="store_true")
        if name in ("simulate-aqec", "error-budget"):
            sp.add_argument("--schedule", help="recovery schedule JSON for the pulse tier")
        if name == "grape":
            sp.add_argument("--target", help="target JSON: explicit pairs, {'encoding': ...} or {'cascaded': [L, G, D]}")
        if name == "wigner":
            sp.add_argument("--state", default="binomial:+Z", help="code:label, e.g. binomial:+X")
    return p


def _versions() -> dict[str, str]:
    return {"aqec_sim": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    kind = SUBCOMMANDS[args.command]
    start = time.perf_counter()
    try:
        spec, device = _spec(args, kind)
        _check_encoding(spec.encoding)
        out = Path(spec.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = RUNNERS[args.command](spec, device, out, args)
    except (UsageError, ConfigError) as exc:
        print(f"aqec-sim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FitError, IntegrationError, TruncationError, ValueError, OSError) as exc:
        print(f"aqec-sim: {args.command} failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    # where the files go is not part of what was computed
    identity = {k: v for k, v in spec.to_dict().items() if k != "output_dir"}
    blob = json.dumps({"spec": identity, "device": device.to_dict()}, sort_keys=True).encode()
    write_json(out / "manifest.json", {
        "command": args.command,
        "spec_hash": hashlib.sha256(blob).hexdigest(),
        "seed": spec.seed,
        "versions": _versions(),
        "wall_time_s": time.perf_counter() - start,
        "outputs": written,
    })
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
