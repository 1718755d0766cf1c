import json
import math
import subprocess
import sys

import numpy as np
import pytest

from liblab.cli import ExperimentSpec, main, spec_from_dict

from liblab import SpecValidationError


def run_cli(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_json_report_shape(capsys):
    code, out, err = run_cli(["moments", "--preset", "delta_zero", "--t", "0.5"], capsys)
    assert code == 0
    payload = json.loads(out)
    assert set(payload) == {"meta", "provenance", "data"}
    assert "timestamp" in payload["meta"]
    prov = payload["provenance"]
    assert {"spec", "spec_hash", "versions"} <= set(prov)
    assert payload["data"]["columns"][0] == "t"
    assert len(payload["data"]["columns"]) == 17
    # liberation time t corresponds to recursion time 2t
    c1 = payload["data"]["rows"][0][1]
    assert c1 == pytest.approx(math.exp(-0.5), abs=1e-6)


def test_evolve_delta_first_moment(tmp_path, capsys):
    out_file = tmp_path / "m.csv"
    code, _, _ = run_cli(
        ["evolve", "--preset", "delta_zero", "--t", "1", "--format", "csv",
         "--out", str(out_file)],
        capsys,
    )
    assert code == 0
    lines = out_file.read_text().splitlines()
    assert lines[0] == "# liblab evolve"
    header = lines[3].split(",")
    row = dict(zip(header, map(float, lines[4].split(","))))
    assert row["moment_1"] == pytest.approx(math.exp(-1.0), abs=1e-5)
    assert row["interior_mass"] == pytest.approx(0.5, abs=1e-6)


def test_verify_haar(capsys):
    code, out, _ = run_cli(["verify", "--preset", "haar_half"], capsys)
    assert code == 0
    data = json.loads(out)["data"]
    assert data["holds"] is True
    assert abs(data["i_star"]) < 1e-6
    assert abs(data["chi_orb"]) < 1e-6
    assert data["gap"] < 1e-6


def test_unknown_preset_is_validation_failure(capsys):
    code, out, err = run_cli(["evolve", "--preset", "nope", "--t", "1"], capsys)
    assert code == 1
    assert "validation error" in err


def test_unknown_flag_and_bad_values(capsys):
    assert run_cli(["evolve", "--bogus", "1"], capsys)[0] == 1
    assert run_cli(["evolve", "--preset", "haar_half", "--grid", "100"], capsys)[0] == 1
    assert run_cli(["evolve", "--preset", "haar_half", "--tauP", "1.5"], capsys)[0] == 1
    assert run_cli(["evolve", "--preset", "haar_half", "--times", "2,1"], capsys)[0] == 1
    assert run_cli(["evolve", "--amplitude", "0.5", "--t", "1"], capsys)[0] == 1
    assert run_cli(["evolve", "--preset", "haar_half", "--format", "csv",
                    "--times", "abc"], capsys)[0] == 1


def test_csv_format_only_for_grid_commands(capsys):
    code, _, err = run_cli(["istar", "--preset", "haar_half", "--format", "csv"], capsys)
    assert code == 1
    assert "scalar report" in err


def test_numerical_failure_exits_two(capsys):
    # a snapshot time off the Euler grid surfaces as a numerical failure
    code, _, err = run_cli(
        ["oracle-mc", "--preset", "haar_half", "--n", "8", "--samples", "1",
         "--times", "0.005"],
        capsys,
    )
    assert code == 2
    assert "offending spec" in err


def test_config_file_round_trip(tmp_path, capsys):
    cfg = tmp_path / "spec.json"
    cfg.write_text(json.dumps({
        "command": "moments",
        "preset": "delta_zero",
        "times": [0.5, 1.0],
        "seed": 3,
    }))
    code1, out1, _ = run_cli(["moments", "--config", str(cfg)], capsys)
    code2, out2, _ = run_cli(["moments", "--config", str(cfg)], capsys)
    assert code1 == code2 == 0
    a, b = json.loads(out1), json.loads(out2)
    a.pop("meta"), b.pop("meta")
    assert a == b  # idempotent modulo the timestamp


def test_config_syntax_error_has_line_and_column(tmp_path, capsys):
    cfg = tmp_path / "broken.json"
    cfg.write_text('{\n  "command": "moments",\n  oops\n}\n')
    code, _, err = run_cli(["moments", "--config", str(cfg)], capsys)
    assert code == 1
    assert f"{cfg}:3:3" in err


def test_config_rejects_unknown_keys_and_conflicts(tmp_path, capsys):
    cfg = tmp_path / "spec.json"
    cfg.write_text(json.dumps({"command": "moments", "bogus": 1}))
    code, _, err = run_cli(["moments", "--config", str(cfg)], capsys)
    assert code == 1 and "bogus" in err
    cfg.write_text(json.dumps({"command": "moments"}))
    code, _, err = run_cli(
        ["moments", "--config", str(cfg), "--preset", "haar_half"], capsys
    )
    assert code == 1 and "inline" in err
    cfg.write_text(json.dumps({"command": "evolve"}))
    code, _, err = run_cli(["moments", "--config", str(cfg)], capsys)
    assert code == 1 and "disagrees" in err


def test_spec_dict_round_trip_is_lossless():
    spec = spec_from_dict({
        "command": "evolve",
        "tauP": 0.5,
        "tauQ": 0.5,
        "measure": "raised_cosine",
        "times": [0.5, 1.0],
        "grid": 512,
    })
    again = spec_from_dict(json.loads(spec.canonical()))
    assert again == spec
    assert again.canonical() == spec.canonical()


def test_spec_alias_keys():
    spec = spec_from_dict({"command": "istar", "preset": "haar_half", "tauP": 0.5})
    assert spec.measure == "haar_half"
    assert spec.tau_p == 0.5


def test_spec_validation_rules():
    with pytest.raises(SpecValidationError):
        spec_from_dict({"command": "fly"})
    with pytest.raises(SpecValidationError):
        spec_from_dict({"command": "evolve", "grid": 100})
    with pytest.raises(SpecValidationError):
        spec_from_dict({"command": "evolve", "tol": 0.0})
    with pytest.raises(SpecValidationError):
        spec_from_dict({"command": "evolve", "format": "yaml"})
    with pytest.raises(SpecValidationError):
        ExperimentSpec(command="evolve", times=[1.0, 0.5]).validate()


def test_floats_serialized_round_trip_exact(capsys):
    code, out, _ = run_cli(["moments", "--preset", "delta_zero", "--t", "0.3"], capsys)
    assert code == 0
    c1 = json.loads(out)["data"]["rows"][0][1]
    assert float(repr(c1)) == c1


def test_console_script_entry_point():
    proc = subprocess.run(
        [sys.executable, "-c", "import liblab.cli as c, sys; sys.exit(c.main(['istar', '--preset', 'haar_half']))"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["data"]["i_star"] == 0.0
