import pytest

from series_inference.exceptions import DataFormatError
from series_inference.exceptions import MissingConfigError
from series_inference.settings import OUTPUT_DIR_ENV_VAR
from series_inference.settings import config
from series_inference.settings import default_config
from series_inference.settings import parse_config_from_environment
from series_inference.settings import read_config_file


def test_defaults():
    assert config["POINTWISE_DRAWS"] == default_config["POINTWISE_DRAWS"] == 5000
    assert config["BAND_GRID_SIZE"] == 91
    assert config["ANNIHILATOR_FLOOR"] == 0.01


def test_unknown_setting():
    with pytest.raises(MissingConfigError):
        config["NOT_A_SETTING"]  # type: ignore


def test_output_dir_from_environment(monkeypatch):
    monkeypatch.setenv(OUTPUT_DIR_ENV_VAR, "/tmp/reports")
    assert parse_config_from_environment() == {"OUTPUT_DIR": "/tmp/reports"}
    monkeypatch.setenv(OUTPUT_DIR_ENV_VAR, "  ")
    assert parse_config_from_environment() == {}


def test_only_output_dir_is_read_from_environment(monkeypatch):
    monkeypatch.setenv("POINTWISE_DRAWS", "10")
    assert "POINTWISE_DRAWS" not in parse_config_from_environment()


def test_config_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(
        "# comment\n\nalpha=0.1\nk-list = 6,7,8\noutput_dir = out\n", encoding="utf-8"
    )
    assert read_config_file(path) == {
        "alpha": "0.1",
        "k_list": "6,7,8",
        "output_dir": "out",
    }


def test_malformed_config_line(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("alpha=0.1\njust some words\n", encoding="utf-8")
    with pytest.raises(DataFormatError) as error:
        read_config_file(path)
    assert error.value.row == 2
