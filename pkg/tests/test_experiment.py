import json
import os
import subprocess
import sys

import numpy as np
import pytest
import yaml

from riskg.cli import main
from riskg.config import ValidationError
from riskg.experiment import (PRESETS, ExperimentConfig, ResultRow, dbm_to_mw, draw_seeds,
                              format_rows, load_schema, preset, run_experiment, seed_hash,
                              with_overrides)

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
SMOKE = os.path.join(ROOT, "configs", "smoke.yaml")


def smoke_dict():
    with open(SMOKE) as fh:
        return yaml.safe_load(fh)


def test_dbm_conversion():
    assert dbm_to_mw(30.0) == pytest.approx(1000.0)
    assert dbm_to_mw(-90.0) == pytest.approx(1e-9)


def test_presets_layout():
    two, four = preset("two-cell"), preset("four-cell")
    assert (two.K, two.L, four.K, four.L) == (2, 1, 4, 2)
    g = two.geometry()
    assert g.ut_positions.shape == (2, 3) and g.ris_positions.shape == (1, 3)
    assert four.geometry(ris_x_m=100.0).ris_positions[0, 0] == 100.0


def test_unknown_preset_lists_names():
    with pytest.raises(ValidationError, match="two-cell"):
        preset("nine-cell")


def test_schema_copies_identical():
    with open(os.path.join(ROOT, "docs", "config_schema.json")) as fh:
        assert json.load(fh) == load_schema()


def test_shipped_configs_validate():
    for name in os.listdir(os.path.join(ROOT, "configs")):
        with open(os.path.join(ROOT, "configs", name)) as fh:
            ExperimentConfig.from_dict(yaml.safe_load(fh))


@pytest.mark.parametrize("patch", [
    {"sweep": {"variable": "height", "values": [1]}},
    {"sweep": {"variable": "ris_elements", "values": []}},
    {"draws": 0},
    {"bdr_rounds": 1},
    {"weights": [1.0]},
    {"unexpected": 1},
    {"params": {"M": 2, "M_e": 3}},
])
def test_invalid_configs_rejected(patch):
    raw = smoke_dict()
    raw.update(patch)
    with pytest.raises(ValidationError):
        ExperimentConfig.from_dict(raw)


def test_power_normalized_by_pilot():
    exp = ExperimentConfig.from_dict(dict(smoke_dict(), sweep={"variable": "transmit_power_dbm",
                                                               "values": [20, 30]}))
    assert exp.system(20.0).P_A == pytest.approx(0.1)
    assert exp.system(30.0).P_A == pytest.approx(1.0)


def test_draw_seeds_independent_of_sweep_value():
    a = [s.generate_state(2).tolist() for s in draw_seeds(1, 3)]
    b = [s.generate_state(2).tolist() for s in draw_seeds(1, 3)]
    c = [s.generate_state(2).tolist() for s in draw_seeds(1, 4)]
    assert a == b and a != c and len({tuple(x) for x in a}) == 3


def test_seed_hash_stable():
    assert seed_hash(7, 2) == seed_hash(7, 2) != seed_hash(7, 3)
    assert len(seed_hash(0, 1)) == 16


def test_result_row_checks():
    with pytest.raises(ValidationError):
        ResultRow(1.0, "proposed", 2.0, 1.0, 0.1, 1, "x").check()
    with pytest.raises(ValidationError):
        ResultRow(1.0, "proposed", 1.0, 1.0, 1.5, 1, "x").check()


@pytest.fixture(scope="module")
def smoke_rows():
    exp = ExperimentConfig.from_dict(smoke_dict())
    return exp, run_experiment(exp)


def test_smoke_run_shape(smoke_rows):
    exp, rows = smoke_rows
    assert len(rows) == len(exp.sweep_values) * len(exp.schemes)
    text = format_rows(rows)
    assert text.splitlines()[0] == "sweep_value,scheme,wskr_bits,wskr_ub_bits,bdr,outer_iters,seed_hash"
    for r in rows:
        assert r.wskr_bits <= r.wskr_ub_bits + 1e-6 and 0 <= r.bdr <= 1


def test_rerun_byte_identical(smoke_rows):
    exp, rows = smoke_rows
    again = run_experiment(with_overrides(exp))
    assert format_rows(rows) == format_rows(again)


def test_parallel_run_matches_serial(smoke_rows):
    exp, rows = smoke_rows
    assert format_rows(run_experiment(exp, jobs=2)) == format_rows(rows)


def test_cli_run_and_exit_codes(tmp_path, capsys):
    out = tmp_path / "r.csv"
    assert main(["run", SMOKE, "--draws", "1", "--out", str(out)]) == 0
    assert out.read_text().startswith("sweep_value,")
    assert main(["run", SMOKE, "--validate"]) == 0
    bad = tmp_path / "bad.yaml"
    bad.write_text("preset: two-cell\nsweep: {variable: nope, values: [1]}\n")
    assert main(["run", str(bad)]) == 2
    bad.write_text("preset: [unclosed\n")
    assert main(["run", str(bad)]) == 2
    assert main(["run", str(tmp_path / "missing.yaml")]) == 2
    assert main(["run", SMOKE, "--draws", "1", "--out", str(tmp_path / "no" / "dir.csv")]) == 2
    assert "error:" in capsys.readouterr().err


def test_cli_bits(tmp_path):
    out = tmp_path / "k.bin"
    assert main(["bits", SMOKE, "--out", str(out), "--rounds", "64"]) == 0
    assert 0 < len(out.read_bytes()) <= 64 * 2 * 2 // 8
    assert main(["bits", SMOKE, "--out", str(out), "--cell", "5"]) == 2


def test_cli_presets(capsys):
    assert main(["presets"]) == 0
    text = capsys.readouterr().out
    assert all(name in text for name in PRESETS)


def test_console_script_help():
    out = subprocess.run([sys.executable, "-m", "riskg.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "run" in out.stdout


def test_cli_numeric_failure_exit_code(monkeypatch):
    import riskg.cli as cli
    from riskg.metrics import NumericalConsistencyError

    def boom(*a, **k):
        raise NumericalConsistencyError("negative rate")

    monkeypatch.setattr(cli, "run_experiment", boom)
    assert main(["run", SMOKE]) == 3
