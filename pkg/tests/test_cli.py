import csv
import json
from pathlib import Path

import jsonschema
import numpy as np
import pytest

from aqec_sim.cli import OUTPUT_SCHEMAS, main, schema_document
from aqec_sim.config import DeviceParams, default_device


def _run(tmp_path: Path, name: str, *argv: str) -> Path:
    out = tmp_path / name
    assert main([*argv, "--out", str(out)]) == 0
    return out


def _validate(out: Path) -> None:
    for f in out.glob("*.json"):
        schema = schema_document(OUTPUT_SCHEMAS[f.name])
        jsonschema.validate(json.loads(f.read_text()), schema)


def _csv_headers_ok(out: Path) -> None:
    for f in out.glob("*.csv"):
        with open(f) as fh:
            header = next(csv.reader(fh))
        assert header and not any(_is_number(h) for h in header), f.name


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def _grape_spec(tmp_path: Path) -> Path:
    p = tmp_path / "grape.toml"
    p.write_text('[experiment]\nkind = "grape"\nencoding = "binomial"\n'
                 'overrides = { max_iter = 3, duration = 0.6 }\n')
    return p


def test_spec_file_without_device_uses_reference_values():
    assert DeviceParams() == default_device()


def test_invalid_encoding_exit_code(tmp_path, capsys):
    code = main(["simulate-aqec", "--encoding", "cat", "--out", str(tmp_path)])
    assert code == 2
    err = capsys.readouterr().err
    assert "valid encodings" in err and "binomial" in err and "sqrt17" in err


def test_unknown_override_is_usage_error(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text('[experiment]\nkind = "metrology"\noverrides = { tau = 3.0 }\n')
    assert main(["metrology", "--spec", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "tau_int" in capsys.readouterr().err


def test_spec_kind_must_match_subcommand(tmp_path):
    assert main(["metrology", "--spec", str(_grape_spec(tmp_path)), "--out", str(tmp_path / "o")]) == 2


def test_pulse_tier_needs_schedule(tmp_path, capsys):
    assert main(["simulate-aqec", "--tier", "pulse", "--out", str(tmp_path)]) == 2
    assert "--schedule" in capsys.readouterr().err


def test_wigner_plus_x_mirror_symmetry(tmp_path):
    out = _run(tmp_path, "w", "wigner", "--state", "binomial:+X")
    data = np.loadtxt(out / "wigner.csv", delimiter=",", skiprows=1)
    n = int(round(np.sqrt(len(data))))
    w = data[:, 2].reshape(n, n)
    assert np.abs(w).max() > 0.1
    assert np.abs(w - w[:, ::-1]).max() < 1e-12  # p -> -p
    assert np.abs(w - w[::-1, :]).max() < 1e-12  # x -> -x (even Fock support)
    _csv_headers_ok(out)


def test_wigner_rejects_unknown_label(tmp_path):
    assert main(["wigner", "--state", "binomial:+Q", "--out", str(tmp_path)]) == 2


def test_aqec_summary(tmp_path):
    out = _run(tmp_path, "a", "simulate-aqec", "--encoding", "binomial", "--tier", "ideal")
    summary = json.loads((out / "summary.json").read_text())
    assert summary["tau_ms"] > 0
    assert set(summary["ratios"]) == {"vs_uncorrected", "vs_fock01", "vs_transmon"}
    manifest = json.loads((out / "manifest.json").read_text())
    assert "decay_binomial_corrected.csv" in manifest["outputs"]
    _validate(out)
    _csv_headers_ok(out)


def test_metrology_outputs_validate(tmp_path):
    out = _run(tmp_path, "m", "metrology")
    summary = json.loads((out / "metrology_summary.json").read_text())
    assert summary["fock14_corrected"]["gain_dB"] is None
    assert summary["fock14_uncorrected"]["gain_dB"] > 0
    _validate(out)
    _csv_headers_ok(out)


def test_error_budget_outputs_validate(tmp_path):
    out = _run(tmp_path, "b", "error-budget", "--encoding", "sqrt17")
    _validate(out)


def test_grape_outputs_validate_and_reload(tmp_path):
    from aqec_sim.grape import PulseSchedule

    out = _run(tmp_path, "g", "grape", "--spec", str(_grape_spec(tmp_path)))
    _validate(out)
    _csv_headers_ok(out)
    sched = PulseSchedule.from_dict(json.loads((out / "schedule.json").read_text()))
    assert sched.duration == pytest.approx(0.6)


def _compare_dirs(a: Path, b: Path) -> None:
    files = sorted(p.name for p in a.iterdir())
    assert files == sorted(p.name for p in b.iterdir())
    for name in files:
        if name == "manifest.json":
            ma, mb = (json.loads((d / name).read_text()) for d in (a, b))
            ma.pop("wall_time_s")
            mb.pop("wall_time_s")
            assert ma == mb
        else:
            assert (a / name).read_bytes() == (b / name).read_bytes(), name


@pytest.mark.parametrize("argv", [
    ("metrology", "--seed", "7"),
    ("wigner", "--state", "sqrt17:+Y"),
])
def test_reruns_are_byte_identical(tmp_path, argv):
    _compare_dirs(_run(tmp_path, "one", *argv), _run(tmp_path, "two", *argv))


def test_grape_reruns_are_byte_identical(tmp_path):
    spec = str(_grape_spec(tmp_path))
    _compare_dirs(_run(tmp_path, "one", "grape", "--spec", spec, "--seed", "3"),
                  _run(tmp_path, "two", "grape", "--spec", spec, "--seed", "3"))


def test_seed_changes_grape_start(tmp_path):
    spec = str(_grape_spec(tmp_path))
    a = _run(tmp_path, "one", "grape", "--spec", spec, "--seed", "3")
    b = _run(tmp_path, "two", "grape", "--spec", spec, "--seed", "4")
    assert (a / "schedule.json").read_bytes() != (b / "schedule.json").read_bytes()
