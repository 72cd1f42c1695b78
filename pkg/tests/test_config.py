from pathlib import Path

import pytest

from maglt.core.config import STEP_NAMES, ExperimentConfig, load_config, parse_config
from maglt.core.errors import ConfigError
from maglt.core.field_model import ConstantField, TubeRegularField


def _write(tmp_path: Path, text: str) -> Path:
    path = tmp_path / "exp.toml"
    path.write_text(text, encoding="utf-8")
    return path


def test_defaults_build_a_constant_field_without_potential():
    config = parse_config({})

    assert config.epsilon == pytest.approx(1.0 / 1024)
    assert config.run.steps == []
    assert isinstance(config.field.build(), ConstantField)
    assert config.potential.name == "zero"
    assert config.max_workers is None


def test_load_config_reads_sections(tmp_path):
    path = _write(
        tmp_path,
        """
epsilon = 0.0005
seed = 3

[field]
name = "tube-regular"
params = { b = 2.0, a = 0.1 }

[potential]
name = "box-well"
params = { depth = 30.0, half_widths = 0.5 }

[run]
steps = ["bounds", "opineq"]

[opineq]
count = 50
""",
    )

    config = load_config(path)

    assert config.epsilon == 0.0005
    assert isinstance(config.field.build(), TubeRegularField)
    assert config.potential.build().well_depth == 30.0
    assert config.run.steps == ["bounds", "opineq"]
    assert config.opineq.count == 50


def test_unknown_field_name_points_at_key():
    with pytest.raises(ConfigError, match="unknown field") as info:
        parse_config({"field": {"name": "dipole"}})

    assert info.value.key == "field.name"
    assert info.value.exit_code == 2
    assert info.value.diagnostic()["key"] == "field.name"


@pytest.mark.parametrize("epsilon", [0.0, 1e-3, 0.5, -1.0])
def test_epsilon_must_be_small_and_positive(epsilon):
    with pytest.raises(ConfigError) as info:
        parse_config({"epsilon": epsilon})

    assert info.value.key == "epsilon"


def test_extra_keys_are_rejected():
    with pytest.raises(ConfigError) as info:
        parse_config({"spectrum": {"hh": 1.0}})

    assert info.value.key == "spectrum.hh"


def test_unknown_step_is_rejected():
    with pytest.raises(ConfigError) as info:
        parse_config({"run": {"steps": ["opineq", "plot"]}})

    assert info.value.key == "run.steps.1"


def test_box_must_be_ordered():
    with pytest.raises(ConfigError, match="lower must be below upper"):
        parse_config({"box": {"lower": [0.0, 0.0, 0.0], "upper": [1.0, -1.0, 1.0]}})


def test_invalid_field_params_are_config_errors():
    with pytest.raises(ConfigError) as info:
        parse_config({"field": {"name": "tube-regular", "params": {"a": -1.0}}})

    assert info.value.key == "field"


def test_hash_ignores_output_location_and_threads():
    a = parse_config({"seed": 1, "output_dir": "a", "threads": 2})
    b = parse_config({"seed": 1, "output_dir": "b"})
    c = parse_config({"seed": 2})

    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != c.config_hash()
    assert len(a.config_hash()) == 64


def test_deterministic_forces_single_worker():
    assert parse_config({"deterministic": True, "threads": 8}).max_workers == 1
    assert parse_config({"threads": 8}).max_workers == 8


def test_output_root_env_prefixes_relative_dirs(monkeypatch, tmp_path):
    monkeypatch.setenv("MAGLT_OUTPUT_ROOT", str(tmp_path))
    config = parse_config({"output_dir": "runs/one"})

    assert config.resolved_output_dir() == tmp_path / "runs" / "one"
    assert config.resolved_output_dir(Path("/abs")) == Path("/abs")


def test_section_lookup_uses_step_names():
    config = ExperimentConfig()

    for step in STEP_NAMES:
        assert config.section(step) is getattr(config, step.replace("-", "_"))


def test_invalid_toml_is_a_config_error(tmp_path):
    path = _write(tmp_path, "epsilon = = 1\n")

    with pytest.raises(ConfigError, match="invalid TOML"):
        load_config(path)


def test_missing_file_is_a_config_error(tmp_path):
    with pytest.raises(ConfigError, match="cannot read config"):
        load_config(tmp_path / "nope.toml")


def test_shipped_configs_validate():
    shipped = sorted((Path(__file__).resolve().parents[1] / "configs").glob("*.toml"))

    assert shipped
    for path in shipped:
        config = load_config(path)
        assert config.run.steps, path.name
