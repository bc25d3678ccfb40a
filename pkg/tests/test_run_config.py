import logging
from pathlib import Path

import pytest
from pydantic import ValidationError

from contracts import ConfigError, GridProductKind, TestKind
from processors.core import WeatherVariable
from processors.interfaces import TestId
from processors.transform import TransformKind
from utils.environment_config import EnvironmentConfig, get_or_create_env_config, reset_env_config
from utils.run_config import RunConfig, load_run_config, parse_key_values, setup_logging


def _inputs(tmp_path):
    for name in ("stations.csv", "official.csv", "tpaws.csv", "era.grid"):
        (tmp_path / name).write_text("")
    return ("stations = stations.csv\n"
            "official_daily = official.csv\n"
            "tpaws_daily = tpaws.csv\n")


def test_parse_key_values_fills_maps():
    raw = parse_key_values("variable = WindGust  # daily max gust\n"
                           "\n"
                           "grid.ERA = era.grid\n"
                           "utc_offset.TP001 = 8\n")
    assert raw == {"variable": "WindGust", "grid": {"ERA": "era.grid"}, "utc_offset": {"TP001": "8"}}


def test_parse_key_values_reports_every_problem():
    with pytest.raises(ConfigError) as excinfo:
        parse_key_values("seed = 1\nseed = 2\nnot a pair\nbogus.x = 1\ngrid.ERA = a\ngrid.ERA = b\n")
    problems = excinfo.value.context["problems"]
    assert len(problems) == 4
    assert problems[0].startswith("line 2")


def test_load_run_config_resolves_relative_paths(tmp_path):
    text = _inputs(tmp_path) + ("variable = WindGust\n"
                                "grid.ERA = era.grid\n"
                                "enabled_tests = Spatial, Gridded(ERA)\n"
                                "transform.Tmax = LogSinh\n"
                                "utc_offset_hours = 8\n"
                                "utc_offset.TP002 = 9.5\n"
                                "radius_km = 150\n")
    path = tmp_path / "run.conf"
    path.write_text(text)
    config = load_run_config(path)

    assert config.stations == tmp_path / "stations.csv"
    assert config.grid == {GridProductKind.ERA: tmp_path / "era.grid"}
    assert config.variable == WeatherVariable.WIND_GUST
    assert config.enabled_tests == [TestId(TestKind.SPATIAL), TestId(TestKind.GRIDDED, GridProductKind.ERA)]
    assert config.offset_for("TP001") == 8.0
    assert config.offset_for("TP002") == 9.5

    settings = config.to_settings()
    assert settings.radius_km == 150.0
    assert settings.transforms[WeatherVariable.TMAX] == TransformKind.LOG_SINH
    assert settings.transforms[WeatherVariable.WIND_GUST] == TransformKind.LOG_SINH


def test_missing_input_paths_are_listed(tmp_path):
    path = tmp_path / "run.conf"
    path.write_text(_inputs(tmp_path) + "grid.NWP = nwp.grid\n")
    with pytest.raises(ConfigError) as excinfo:
        load_run_config(path)
    assert excinfo.value.context["missing"] == [f"grid.NWP={tmp_path / 'nwp.grid'}"]


def test_unknown_and_invalid_keys_are_rejected(tmp_path):
    path = tmp_path / "run.conf"
    path.write_text(_inputs(tmp_path) + "radius = 100\n")
    with pytest.raises(ConfigError):
        load_run_config(path)
    path.write_text(_inputs(tmp_path) + "cl_threshold = 1.5\n")
    with pytest.raises(ConfigError):
        load_run_config(path)
    with pytest.raises(ConfigError):
        load_run_config(tmp_path / "absent.conf")


def test_config_is_frozen(tmp_path):
    config = RunConfig(stations=tmp_path / "s", official_daily=tmp_path / "o", tpaws_daily=tmp_path / "t")
    with pytest.raises(ValidationError):
        config.seed = 1
    assert config.model_copy(update={"seed": 1}).seed == 1


def test_setup_logging_writes_run_file(tmp_path):
    run_logger = setup_logging(tmp_path / "logs", "assess_test", verbose=True)
    logging.getLogger("processors.pipeline").debug("engine detail")
    run_logger.info("run message")
    for handler in run_logger.handlers:
        handler.flush()
    text = (tmp_path / "logs" / "assess_test.log").read_text()
    assert "engine detail" in text
    assert "run message" in text
    for name in ("tpaws_qc.assess_test", "processors", "utils", "cli", "workflows"):
        for handler in logging.getLogger(name).handlers:
            handler.close()
        logging.getLogger(name).handlers.clear()
        logging.getLogger(name).propagate = True


def test_environment_defaults_and_overrides(tmp_path, monkeypatch):
    monkeypatch.setenv("TPAWS_MODEL_STORE", str(tmp_path / "store"))
    monkeypatch.delenv("TPAWS_CONFIG", raising=False)
    reset_env_config()
    try:
        env = get_or_create_env_config()
        assert env.model_store == tmp_path / "store"
        assert env.config_path is None
        assert get_or_create_env_config() is env
    finally:
        reset_env_config()


def test_environment_defaults_live_under_data_root(tmp_path):
    env = EnvironmentConfig.from_environ({"TPAWS_OUTPUT_DIR": "  ", "TPAWS_LOG_DIR": "/var/log/qc"}, tmp_path)
    assert env.config_path is None
    assert env.model_store == tmp_path / "models"
    assert env.output_dir == tmp_path / "outputs"
    assert env.log_dir == Path("/var/log/qc")
