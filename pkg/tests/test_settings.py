"""Tests for logging set-up, YAML configuration and exit codes."""

import pytest
from loguru import logger

from errors import (
    EXIT_CONFIG,
    EXIT_RUNTIME,
    ConfigError,
    DomainError,
    SynthesisError,
    exit_code_for,
)
from settings import (
    SECTIONS,
    build_asym_config,
    build_estimator_params,
    build_experiment_config,
    build_mc_settings,
    configure_logging,
    load_config,
    merge_flags,
)


@pytest.fixture
def write_config(tmp_path):
    """
    Write YAML text to a temporary file.

    Args:
        tmp_path (Path): Pytest temporary directory.

    Returns:
        callable: Takes the YAML text and returns the file path.

    """
    def _write(text):
        path = tmp_path / "config.yaml"
        path.write_text(text, encoding="utf-8")
        return path

    return _write


def test_configure_logging_reads_environment(monkeypatch):
    """
    Test that LOG_LEVEL applies when no level is passed, and an explicit level wins.

    Args:
        monkeypatch (MonkeyPatch): Pytest monkeypatch fixture.

    """
    monkeypatch.setenv("LOG_LEVEL", "warning")

    assert configure_logging() == "WARNING"
    assert configure_logging("debug") == "DEBUG"

    monkeypatch.delenv("LOG_LEVEL")
    assert configure_logging() == "INFO"
    logger.remove()


def test_load_config_fills_missing_sections(write_config):
    """
    Test a valid file with two sections.

    Args:
        write_config (callable): Fixture writer.

    """
    path = write_config("estimate:\n  bandwidth: 0.1\n  degree: 2\nmc:\n  reps: 2000\n")

    config = load_config(path)

    assert config["estimate"] == {"bandwidth": 0.1, "degree": 2}
    assert config["mc"] == {"reps": 2000}
    assert set(config) == set(SECTIONS)
    assert config["study"] == {}


def test_empty_file_is_an_empty_config(write_config):
    """
    Test that an empty file yields empty sections.

    Args:
        write_config (callable): Fixture writer.

    """
    config = load_config(write_config(""))

    assert all(values == {} for values in config.values())


@pytest.mark.parametrize(
    "text, message",
    [
        ("plotting:\n  dpi: 300\n", "unknown config section"),
        ("estimate:\n  bandwith: 0.1\n", "unknown key"),
        ("estimate: [0.1, 0.2]\n", "must be a mapping"),
        ("- 1\n- 2\n", "mapping at top level"),
        ("estimate:\n  bandwidth: [0.1\n", "not valid YAML"),
    ],
)
def test_load_config_rejects_bad_files(write_config, text, message):
    """
    Test each kind of malformed file.

    Args:
        write_config (callable): Fixture writer.
        text (str): File content.
        message (str): Expected fragment of the error.

    """
    with pytest.raises(ConfigError, match=message):
        load_config(write_config(text))


def test_missing_file_is_a_config_error(tmp_path):
    """
    Test that an unreadable path raises ConfigError.

    Args:
        tmp_path (Path): Pytest temporary directory.

    """
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "absent.yaml")


def test_merge_flags_skips_unset_values():
    """
    Test that only flags given on the command line override the file.

    Raises:
        AssertionError: If a None flag overrides a file value.

    """
    merged = merge_flags({"bandwidth": 0.1, "degree": 2}, {"bandwidth": None, "degree": 3, "lag": 5})

    assert merged == {"bandwidth": 0.1, "degree": 3, "lag": 5}


def test_build_estimator_params():
    """
    Test that kernel and support keys build the kernel.

    Raises:
        AssertionError: If a setting is not applied.

    """
    params = build_estimator_params({"kernel": "uniform", "support": "left", "bandwidth": 0.2, "degree": 0})

    assert params.kernel.shape == "uniform"
    assert params.kernel.support == "left"
    assert params.bandwidth == 0.2
    assert params.degree == 0


@pytest.mark.parametrize(
    "build, values",
    [
        (build_estimator_params, {"bandwidth": 0.7}),
        (build_estimator_params, {"kernel": "gaussian"}),
        (build_estimator_params, {"smoothing": 2}),
        (build_mc_settings, {"reps": 10}),
        (build_asym_config, {"convention": "rounded"}),
    ],
)
def test_invalid_values_become_config_errors(build, values):
    """
    Test that domain and keyword errors surface as ConfigError.

    Args:
        build (callable): Section builder.
        values (dict): Section values.

    """
    with pytest.raises(ConfigError):
        build(values)


def test_build_experiment_config(write_config):
    """
    Test a study section with nested estimator and Monte-Carlo settings.

    Args:
        write_config (callable): Fixture writer.

    """
    config = load_config(write_config(
        "study:\n  scenario: [jump_h, linear_h]\n  n_list: [512, 1024]\n  replications: 5\n"
        "estimate:\n  degree: 2\nmc:\n  reps: 1500\n"
    ))

    cfg = build_experiment_config(config, threads=2)

    assert cfg.scenario == ("jump_h", "linear_h")
    assert cfg.n_list == (512, 1024)
    assert cfg.params.degree == 2
    assert cfg.mc.reps == 1500
    assert cfg.threads == 2


def test_invalid_study_is_a_config_error(write_config):
    """
    Test that zero replications are refused.

    Args:
        write_config (callable): Fixture writer.

    """
    config = load_config(write_config("study:\n  replications: 0\n"))

    with pytest.raises(ConfigError, match="replications"):
        build_experiment_config(config)


@pytest.mark.parametrize(
    "exc, code",
    [
        (ConfigError("bad key"), EXIT_CONFIG),
        (DomainError("bad value"), EXIT_RUNTIME),
        (SynthesisError("no factorization"), EXIT_RUNTIME),
        (OSError("disk full"), EXIT_RUNTIME),
    ],
)
def test_exit_codes(exc, code):
    """
    Test the exception to exit-code mapping.

    Args:
        exc (Exception): The failure.
        code (int): Expected exit code.

    """
    assert exit_code_for(exc) == code
