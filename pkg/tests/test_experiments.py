import json
import math

import numpy as np
import pytest

from maglt.core.config import parse_config
from maglt.core.errors import BudgetExceeded, ConfigError
from maglt.core.experiments import (
    MANIFEST,
    TIMINGS,
    ArtifactWriter,
    dumps_report,
    format_cell,
    resolve_spacing,
    run,
    to_plain,
)

SMALL_OPINEQ = {"run": {"steps": ["opineq"]}, "opineq": {"count": 20}, "seed": 5}


def _config(tmp_path, **raw):
    return parse_config({"output_dir": str(tmp_path / "out"), **raw})


def test_to_plain_handles_non_finite_and_numpy_values():
    payload = {"a": math.inf, "b": -np.inf, "c": float("nan"), "d": np.float64(0.5), "e": np.arange(2), "z": 1j}

    assert to_plain(payload) == {"a": "inf", "b": "-inf", "c": None, "d": 0.5, "e": [0, 1], "z": [0.0, 1.0]}
    assert dumps_report({"b": 1, "a": 2}) == '{\n  "a": 2,\n  "b": 1\n}\n'


def test_format_cell_uses_seventeen_digits():
    assert format_cell(0.1) == "0.10000000000000001"
    assert format_cell(True) == "true"
    assert format_cell(None) == ""
    assert format_cell(np.int64(3)) == "3"


def test_csv_writer_layout(tmp_path):
    writer = ArtifactWriter(tmp_path)
    path = writer.csv("t.csv", ("x", "flag"), [[1.5, False], [None, True]])

    assert path.read_text(encoding="utf-8") == "x,flag\n1.5,false\n,true\n"
    assert writer.written == ["t.csv"]


def test_opineq_run_writes_report_and_manifest(tmp_path):
    config = _config(tmp_path, **SMALL_OPINEQ)
    seen = []

    manifest = run(config, on_step=seen.append)

    out = tmp_path / "out"
    report = json.loads((out / "opineq.json").read_text(encoding="utf-8"))
    listed = json.loads((out / MANIFEST).read_text(encoding="utf-8"))
    assert manifest.passed
    assert report["passed"] is True
    assert [r.name for r in seen] == ["opineq"]
    assert listed["config_hash"] == config.config_hash()
    assert listed["steps"] == [{"name": "opineq", "status": "ok", "artifacts": ["opineq.json"]}]
    assert listed["files"] == sorted(["opineq.json", MANIFEST, TIMINGS])
    assert set(json.loads((out / TIMINGS).read_text(encoding="utf-8"))) == {"opineq"}


def test_deterministic_reruns_are_byte_identical(tmp_path):
    raw = {**SMALL_OPINEQ, "deterministic": True, "run": {"steps": ["bounds", "opineq"]}}
    first = run(_config(tmp_path / "one", **raw))
    second = run(_config(tmp_path / "two", **raw))

    for name in first.files:
        if name == TIMINGS:
            continue
        a = (first.output_dir / name).read_bytes()
        b = (second.output_dir / name).read_bytes()
        assert a == b, name


def test_empty_step_list_is_a_config_error(tmp_path):
    with pytest.raises(ConfigError, match="no steps") as info:
        run(_config(tmp_path))

    assert info.value.key == "run.steps"


def test_unknown_step_override_is_rejected(tmp_path):
    with pytest.raises(ConfigError, match="unknown step"):
        run(_config(tmp_path), steps=["plot"])


def test_budget_error_is_recorded_in_manifest(tmp_path):
    config = _config(
        tmp_path,
        run={"steps": ["opineq", "spectrum"]},
        opineq={"count": 5},
        grid={"spacing": 0.05, "max_dimension": 1000},
    )

    with pytest.raises(BudgetExceeded, match="max_dimension"):
        run(config)

    listed = json.loads((tmp_path / "out" / MANIFEST).read_text(encoding="utf-8"))
    assert [s["status"] for s in listed["steps"]] == ["ok", "error"]


def test_resolve_spacing_prefers_magnetic_length():
    config = parse_config({"field": {"params": {"b": [0.0, 0.0, 4.0]}}})
    spacing = resolve_spacing(config, config.field.build(), config.potential.build(), config.box.build())

    assert spacing == pytest.approx(0.5 / 8.0)


def test_resolve_spacing_uses_explicit_value():
    config = parse_config({"grid": {"spacing": 0.25}})

    assert resolve_spacing(config, config.field.build(), config.potential.build(), config.box.build()) == 0.25


def test_bounds_step_reports_landau_pressure(tmp_path):
    manifest = run(_config(tmp_path, run={"steps": ["bounds"]}))

    out = tmp_path / "out"
    lines = (out / "pressure.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0].startswith("B,W,pressure")
    b, w, p = (float(v) for v in lines[2].split(",")[:3])
    assert (b, w) == (1.0, 1.0)
    assert p == pytest.approx(1.0 / (3.0 * math.pi**2), abs=1e-12)
    assert manifest.steps[0].status == "ok"


def test_const_field_step_matches_oracle(tmp_path):
    manifest = run(_config(tmp_path, run={"steps": ["const-field"]}, const_field={"decay_fit": False}))

    report = json.loads((tmp_path / "out" / "const_field.json").read_text(encoding="utf-8"))
    assert report["oracle_defect"] <= 1e-6
    assert report["semigroup_defect"] <= 1e-6
    assert manifest.passed


def test_verify_lt_csv_columns(tmp_path):
    config = _config(
        tmp_path,
        run={"steps": ["verify-lt"]},
        potential={"name": "box-well", "params": {"depth": 30.0, "half_widths": 0.5}},
        grid={"spacing": 0.25},
        verify_lt={"amplitudes": [1.0, 4.0]},
    )

    run(config)

    lines = (tmp_path / "out" / "verify_lt.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "b,trace_sum,term1,term2,term3,ratio"
    assert len(lines) == 3
    report = json.loads((tmp_path / "out" / "verify_lt.json").read_text(encoding="utf-8"))
    assert report["statuses"] == ["ok", "ok"]


def test_zero_modes_step_fails_when_the_loss_yau_gate_fails(tmp_path):
    config = _config(
        tmp_path,
        run={"steps": ["zero-modes"]},
        field={"name": "loss-yau", "params": {"w": [0.0, 0.0, 1.0]}},
        box={"lower": [-1.0, -1.0, -1.0], "upper": [1.0, 1.0, 1.0]},
        grid={"spacing": 1.0 / 7.0},
        zero_modes={"k": 2, "refine": True},
    )

    manifest = run(config)

    report = json.loads((tmp_path / "out" / "zero_modes.json").read_text(encoding="utf-8"))["loss_yau"]
    assert report["ok"] is False
    assert report["ratio"] > 1e-2
    assert manifest.steps[0].status == "checks-failed"
    assert manifest.steps[0].summary["loss_yau_overlap"] == pytest.approx(report["overlap"])
