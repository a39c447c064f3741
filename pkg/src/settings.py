"""Logging set-up and the structured YAML configuration file."""

import os
import sys
from pathlib import Path

import yaml
from loguru import logger

from errors import ConfigError
from estimators import EstimatorParams
from experiments import ExperimentConfig
from fracmath import AsymVarConfig
from hypo_tests import MCSettings
from localpoly import Kernel

SECTIONS = {
    "simulate": {
        "kind", "hurst", "sigma", "n", "lead_in", "seed", "past_horizon",
        "m_sub", "variant", "hurst_nodes", "theta", "theta_file",
    },
    "estimate": {
        "kernel", "support", "bandwidth", "bandwidth_const", "eta", "degree",
        "epsilon_floor", "lag",
    },
    "mc": {"reps", "grid_size", "seed", "alpha"},
    "fracmath": {"h_max", "tail_tol", "convention"},
    "study": {
        "scenario", "n_list", "replications", "seed", "output_dir", "hurst",
        "sigma", "test", "gof_class", "probes", "past_horizon", "m_sub",
        "theta_file",
    },
}


def configure_logging(level=None):
    """
    Route loguru output to stderr at the requested level.

    Args:
        level (str, optional): Log level name. Defaults to the ``LOG_LEVEL``
            environment variable, or "INFO" when that is unset.

    Returns:
        str: The level that was applied.

    """
    level = (level or os.getenv("LOG_LEVEL", "INFO")).upper()
    logger.remove()
    logger.add(sys.stderr, level=level)
    return level


def load_config(path):
    """
    Read and validate a YAML configuration file.

    Args:
        path (str or Path): Location of the file.

    Returns:
        dict: Mapping of section name to a dict of settings. Missing sections
        are returned as empty dicts.

    Raises:
        ConfigError: If the file cannot be read, is not a mapping, or holds
            an unknown section or key.

    """
    path = Path(path)
    logger.info(f"Loading configuration from {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"config file {path} is not valid YAML: {e}") from e

    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must hold a mapping at top level")

    config = {}
    for section, values in raw.items():
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section '{section}' in {path}")
        values = values or {}
        if not isinstance(values, dict):
            raise ConfigError(f"config section '{section}' must be a mapping")
        unknown = set(values) - SECTIONS[section]
        if unknown:
            raise ConfigError(
                f"unknown key(s) {sorted(unknown)} in config section '{section}'"
            )
        config[section] = dict(values)

    for section in SECTIONS:
        config.setdefault(section, {})
    logger.debug(f"Configuration sections: {sorted(k for k, v in config.items() if v)}")
    return config


def merge_flags(section, flags):
    """
    Overlay command-line values on a config section.

    Flags left at ``None`` do not override the file.

    Args:
        section (dict): Values read from the file.
        flags (dict): Values parsed from the command line.

    Returns:
        dict: A new dict with the merged values.

    """
    merged = dict(section)
    merged.update({key: value for key, value in flags.items() if value is not None})
    return merged


def _build(factory, values, section):
    try:
        return factory(**values)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid '{section}' settings: {e}") from e


def build_estimator_params(values):
    """
    Build EstimatorParams from an ``estimate`` section.

    Args:
        values (dict): Merged file and flag values.

    Returns:
        EstimatorParams: The validated settings.

    Raises:
        ConfigError: If a value is out of range.

    """
    values = dict(values)
    kernel = _build(
        Kernel,
        {"shape": values.pop("kernel", "epanechnikov"), "support": values.pop("support", "two_sided")},
        "estimate",
    )
    return _build(EstimatorParams, {"kernel": kernel, **values}, "estimate")


def build_mc_settings(values):
    """Build MCSettings from an ``mc`` section."""
    return _build(MCSettings, values, "mc")


def build_asym_config(values):
    """Build AsymVarConfig from a ``fracmath`` section."""
    return _build(AsymVarConfig, values, "fracmath")


def build_experiment_config(config, threads=1):
    """
    Build an ExperimentConfig from a full configuration.

    Args:
        config (dict): Sections as returned by :func:`load_config`, with
            flags already merged.
        threads (int, optional): Worker processes.

    Returns:
        ExperimentConfig: The validated study settings.

    """
    return _build(
        ExperimentConfig,
        {
            **config["study"],
            "params": build_estimator_params(config["estimate"]),
            "mc": build_mc_settings(config["mc"]),
            "asym": build_asym_config(config["fracmath"]),
            "threads": threads,
        },
        "study",
    )
