"""
Simulation studies: estimator rates and test level/power.

Every replication draws its data from a seed derived from
(base seed, scenario, n, replication), so a single failed row can be
replayed on its own and reruns reproduce the tables exactly.
"""

import json
import math
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
import scipy
from loguru import logger

import hypo_tests
from core_model import ThetaFunction, constant_theta, read_theta_csv
from errors import ConfigError, HurstError
from estimators import (
    EstimatorParams,
    hurst_log_ratio,
    hurst_smoothed_log,
    increments,
    integrated_hurst,
    naive_integrated_hurst,
)
from fracmath import AsymVarConfig
from hypo_tests import FunctionClass, MCSettings
from simulate import FbmConfig, MbmConfig, derive_seed, simulate_fbm, simulate_mbm

SCENARIOS = ("constant_h", "smooth_h", "jump_h", "sine_sigma", "linear_h", "custom")
TESTS = ("constancy", "gof")
GOF_CLASSES = ("singleton", "constant", "linear")
MIN_STUDY_N = 256
JUMP_AT = 0.5
JUMP_RAMP = 0.01
SINGLETON_NODES = 257


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Settings of a simulation study.

    Attributes:
        scenario (tuple): Scenario names; a single string is accepted.
        n_list (tuple): Grid resolutions, each at least 256.
        replications (int): Replications per (scenario, n).
        seed (int): Base seed.
        output_dir (str): Directory receiving the CSV tables and manifest.
        hurst (float): H of the constant_h and sine_sigma scenarios.
        sigma (float): Volatility of the constant_h scenario.
        params (EstimatorParams): Estimator settings.
        mc (MCSettings): Test calibration settings.
        asym (AsymVarConfig): Variance settings.
        test (str): "constancy" or "gof".
        gof_class (str): "singleton", "constant" or "linear".
        probes (tuple): Points where local estimates are recorded.
        past_horizon (float): M of the multifractional simulator.
        m_sub (int): Sub-steps of the multifractional simulator.
        theta_file (str): Parameter path of the custom scenario.
        threads (int): Worker processes.

    """

    scenario: tuple = ("constant_h",)
    n_list: tuple = (1024, 2048, 4096)
    replications: int = 100
    seed: int = 0
    output_dir: str = "results"
    hurst: float = 0.5
    sigma: float = 1.0
    params: EstimatorParams = field(default_factory=EstimatorParams)
    mc: MCSettings = field(default_factory=MCSettings)
    asym: AsymVarConfig = field(default_factory=AsymVarConfig)
    test: str = "constancy"
    gof_class: str = "constant"
    probes: tuple = (0.25, 0.5, 0.75)
    past_horizon: float = 10.0
    m_sub: int = 8
    theta_file: str = None
    threads: int = 1

    def __post_init__(self):
        scenarios = (self.scenario,) if isinstance(self.scenario, str) else tuple(self.scenario)
        object.__setattr__(self, "scenario", scenarios)
        object.__setattr__(self, "n_list", tuple(int(n) for n in self.n_list))
        object.__setattr__(self, "probes", tuple(float(p) for p in self.probes))
        if not scenarios:
            raise ConfigError("at least one scenario is required")
        for name in scenarios:
            if name not in SCENARIOS:
                raise ConfigError(f"unknown scenario {name!r}; choose from {SCENARIOS}")
        if "custom" in scenarios and not self.theta_file:
            raise ConfigError("the custom scenario needs theta_file")
        if int(self.replications) != self.replications or self.replications < 1:
            raise ConfigError(f"replications must be a positive integer, got {self.replications}")
        if not self.n_list:
            raise ConfigError("n_list must not be empty")
        if min(self.n_list) < MIN_STUDY_N:
            raise ConfigError(f"every n must be at least {MIN_STUDY_N}, got {min(self.n_list)}")
        if self.test not in TESTS:
            raise ConfigError(f"test must be one of {TESTS}, got {self.test!r}")
        if self.gof_class not in GOF_CLASSES:
            raise ConfigError(f"gof_class must be one of {GOF_CLASSES}, got {self.gof_class!r}")
        if self.threads < 1:
            raise ConfigError(f"threads must be positive, got {self.threads}")
        if not all(0.0 < p < 1.0 for p in self.probes):
            raise ConfigError(f"probes must lie in (0, 1), got {self.probes}")


@dataclass
class ResultTable:
    """Per-replication rows and their aggregate summary."""

    rows: pd.DataFrame
    summary: pd.DataFrame
    manifest: dict = field(default_factory=dict)

    def write(self, output_dir, stem):
        """
        Write ``<stem>_table.csv``, ``<stem>_summary.csv`` and ``manifest.json``.

        Args:
            output_dir (str or Path): Target directory, created if missing.
            stem (str): File name prefix.

        Returns:
            list: The written paths.

        Raises:
            OSError: If a file cannot be written; the message names the file.

        """
        output_dir = Path(output_dir)
        targets = [output_dir / f"{stem}_table.csv", output_dir / f"{stem}_summary.csv", output_dir / "manifest.json"]
        try:
            output_dir.mkdir(parents=True, exist_ok=True)
            self.rows.to_csv(targets[0], index=False)
            self.summary.to_csv(targets[1], index=False)
            targets[2].write_text(json.dumps(self.manifest, indent=2, sort_keys=True, default=str), encoding="utf-8")
        except OSError as e:
            logger.error(f"Failed writing study results to {output_dir}: {e}")
            raise OSError(f"cannot write study results under {output_dir}: {e}") from e
        logger.info(f"Wrote {len(self.rows)} row(s) and summary to {output_dir}")
        return targets


def _sine(v, mean, amplitude):
    return mean + amplitude * np.sin(2.0 * np.pi * np.asarray(v, dtype=float))


def _jump(v):
    ramp = np.clip((np.asarray(v, dtype=float) - (JUMP_AT - JUMP_RAMP / 2)) / JUMP_RAMP, 0.0, 1.0)
    return 0.3 + 0.4 * ramp


def _linear(v):
    return 0.4 + 0.3 * np.asarray(v, dtype=float)


def _ones(v):
    return np.ones(np.shape(v))


def scenario_theta(cfg, name):
    """
    The parameter path of a named scenario.

    Args:
        cfg (ExperimentConfig): Study settings.
        name (str): Scenario name.

    Returns:
        ThetaFunction: The path.

    """
    horizon = cfg.past_horizon
    if name == "constant_h":
        return constant_theta(cfg.hurst, cfg.sigma, horizon=horizon)
    if name == "smooth_h":
        return ThetaFunction(lambda v: _sine(v, 0.5, 0.2), _ones, eta=1.0, bounds=(0.3, 0.7, 1.0, 1.0), horizon=horizon)
    if name == "jump_h":
        return ThetaFunction(_jump, _ones, eta=1.0, bounds=(0.3, 0.7, 1.0, 1.0), horizon=horizon)
    if name == "sine_sigma":
        h = float(cfg.hurst)
        return ThetaFunction(
            lambda v: np.full(np.shape(v), h), lambda v: _sine(v, 1.0, 0.5),
            eta=1.0, bounds=(h, h, 0.25, 2.25), horizon=horizon,
        )
    if name == "linear_h":
        return ThetaFunction(_linear, _ones, eta=1.0, bounds=(0.4, 0.7, 1.0, 1.0), horizon=horizon)
    return read_theta_csv(cfg.theta_file, horizon=horizon)


def simulate_scenario(cfg, name, n, seed):
    """
    Simulate one path of a scenario.

    constant_h uses the exact fBm generator; every other scenario uses the
    Itô multifractional simulator.

    Args:
        cfg (ExperimentConfig): Study settings.
        name (str): Scenario name.
        n (int): Grid resolution.
        seed (int): Data seed.

    Returns:
        tuple: (SamplePath, ThetaFunction).

    """
    theta = scenario_theta(cfg, name)
    if name == "constant_h":
        path = simulate_fbm(FbmConfig(hurst=cfg.hurst, sigma=cfg.sigma, n=n, seed=seed))
    else:
        mbm = MbmConfig(theta=theta, n=n, past_horizon=cfg.past_horizon, m_sub=cfg.m_sub, variant="ito", seed=seed)
        path = simulate_mbm(mbm)
    return path, theta


def _rate_replication(cfg, name, n, rep):
    seed = derive_seed(cfg.seed, name, n, rep)
    row = {"scenario": name, "n": n, "replication": rep, "seed": str(seed), "error": ""}
    try:
        path, theta = simulate_scenario(cfg, name, n, seed)
        inc = increments(path)
        probes = np.array(cfg.probes)
        log_ratio = hurst_log_ratio(inc, cfg.params, probes)
        smoothed = hurst_smoothed_log(inc, cfg.params, probes)
        truth = theta.hurst(probes)
        for k, p in enumerate(cfg.probes):
            row[f"truth_{p:g}"] = float(np.atleast_1d(truth)[k])
            row[f"log_ratio_{p:g}"] = float(log_ratio.values[k])
            row[f"smoothed_log_{p:g}"] = float(smoothed.values[k])

        one_sided = cfg.params.one_sided()
        curve = integrated_hurst(inc, one_sided)
        t = np.arange(curve.start, n + 1)
        naive = naive_integrated_hurst(hurst_log_ratio(inc, one_sided, t / n))
        origin = (curve.start - 1) / n
        row["truth_integrated"] = float(theta.integrated_hurst(1.0) - theta.integrated_hurst(origin))
        row["integrated"] = float(curve.values[-1])
        row["naive_integrated"] = float(naive.values[-1])
    except HurstError as e:
        logger.error(f"Replication failed: scenario={name} n={n} rep={rep}; replay with seed {seed}: {e}")
        row["error"] = f"{type(e).__name__}: {e}"
    return row


def _test_replication(cfg, name, n, rep):
    seed = derive_seed(cfg.seed, name, n, rep)
    row = {"scenario": name, "n": n, "replication": rep, "seed": str(seed), "error": ""}
    try:
        path, theta = simulate_scenario(cfg, name, n, seed)
        mc = MCSettings(
            reps=cfg.mc.reps, grid_size=cfg.mc.grid_size, alpha=cfg.mc.alpha,
            chunk=cfg.mc.chunk, grid_correction=cfg.mc.grid_correction,
            seed=derive_seed(cfg.mc.seed, name, n, rep, "mc"),
        )
        if cfg.test == "constancy":
            report = hypo_tests.test_constancy(path, cfg.params, mc, cfg.asym)
        else:
            report = hypo_tests.test_gof(path, cfg.params, study_class(cfg, theta), mc, cfg.asym)
        row.update(
            statistic=report.statistic, quantile=report.quantile, p_value=report.p_value,
            rejected=int(report.rejected),
        )
    except HurstError as e:
        logger.error(f"Replication failed: scenario={name} n={n} rep={rep}; replay with seed {seed}: {e}")
        row["error"] = f"{type(e).__name__}: {e}"
    return row


def study_class(cfg, theta):
    """The GOF null class of a study; the singleton holds the true path."""
    if cfg.gof_class == "singleton":
        return FunctionClass.singleton(theta.hurst(np.linspace(0.0, 1.0, SINGLETON_NODES)))
    if cfg.gof_class == "constant":
        return FunctionClass.constant_family()
    return FunctionClass.linear_family()


def _run(cfg, worker):
    jobs = [(name, n, rep) for name in cfg.scenario for n in cfg.n_list for rep in range(cfg.replications)]
    logger.info(f"Running {len(jobs)} replication(s) on {cfg.threads} worker(s)")
    started = time.perf_counter()
    if cfg.threads == 1:
        rows = [worker(cfg, *job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            futures = [pool.submit(worker, cfg, *job) for job in jobs]
            rows = []
            for job, future in zip(jobs, futures):
                try:
                    rows.append(future.result())
                except Exception as e:
                    name, n, rep = job
                    seed = derive_seed(cfg.seed, name, n, rep)
                    logger.error(f"Worker crashed: scenario={name} n={n} rep={rep}; replay with seed {seed}: {e}")
                    rows.append({"scenario": name, "n": n, "replication": rep, "seed": str(seed),
                                 "error": f"{type(e).__name__}: {e}"})
    return pd.DataFrame(rows), time.perf_counter() - started


def _manifest(cfg, kind, rows, wall_time):
    return {
        "study": kind,
        "config": asdict(cfg),
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "pandas": pd.__version__,
        },
        "wall_time_s": round(wall_time, 3),
        "rows": int(len(rows)),
        "failures": int((rows["error"] != "").sum()),
    }


def log_log_slope(n_values, errors):
    """Least-squares slope of log(error) against log(n); NaN with fewer than two finite points."""
    n_values, errors = np.asarray(n_values, dtype=float), np.asarray(errors, dtype=float)
    ok = np.isfinite(errors) & (errors > 0)
    if ok.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(n_values[ok]), np.log(errors[ok]), 1)[0])


def _rate_summary(cfg, rows):
    valid = rows[rows["error"] == ""]
    records = []
    targets = [(f"{est}_{p:g}", f"truth_{p:g}", est, p) for est in ("log_ratio", "smoothed_log") for p in cfg.probes]
    targets += [("integrated", "truth_integrated", "integrated", 1.0),
                ("naive_integrated", "truth_integrated", "naive_integrated", 1.0)]
    for name in cfg.scenario:
        for column, truth, estimator, probe in targets:
            per_n = []
            for n in cfg.n_list:
                subset = valid[(valid["scenario"] == name) & (valid["n"] == n)]
                if column not in subset or subset.empty:
                    errors = np.array([])
                else:
                    errors = subset[column].to_numpy(dtype=float) - subset[truth].to_numpy(dtype=float)
                rmse = float(np.sqrt(np.mean(errors**2))) if len(errors) else math.nan
                bias = float(np.mean(errors)) if len(errors) else math.nan
                per_n.append({"scenario": name, "estimator": estimator, "probe": probe, "n": n,
                              "replications": len(errors), "rmse": rmse, "bias": bias})
            slope = log_log_slope([r["n"] for r in per_n], [r["rmse"] for r in per_n])
            for r in per_n:
                r["slope"] = slope
            records.extend(per_n)
    return pd.DataFrame(records)


def run_rate_study(cfg):
    """
    Estimate H at the probe points and the integrated H over replications.

    Args:
        cfg (ExperimentConfig): Study settings.

    Returns:
        ResultTable: One row per (scenario, n, replication), a summary with
        RMSE, bias and the fitted log-log slope per estimator and probe.

    """
    rows, wall_time = _run(cfg, _rate_replication)
    summary = _rate_summary(cfg, rows)
    for (name, estimator, probe), group in summary.groupby(["scenario", "estimator", "probe"], sort=False):
        logger.info(f"{name} {estimator}@{probe:g}: slope={group['slope'].iloc[0]:.3f}")
    return ResultTable(rows=rows, summary=summary, manifest=_manifest(cfg, "rate", rows, wall_time))


def _test_summary(cfg, rows):
    records = []
    for name in cfg.scenario:
        for n in cfg.n_list:
            subset = rows[(rows["scenario"] == name) & (rows["n"] == n)]
            valid = subset[subset["error"] == ""]
            m = len(valid)
            rate = float(valid["rejected"].mean()) if m else math.nan
            se = math.sqrt(rate * (1.0 - rate) / m) if m else math.nan
            records.append({"scenario": name, "n": n, "test": cfg.test, "alpha": cfg.mc.alpha,
                            "replications": m, "failures": len(subset) - m,
                            "rejection_rate": rate, "se": se})
    return pd.DataFrame(records)


def run_test_study(cfg):
    """
    Run the configured test over replications and tabulate rejection rates.

    Args:
        cfg (ExperimentConfig): Study settings.

    Returns:
        ResultTable: One row per replication and a summary with rejection
        rates and binomial standard errors per (scenario, n).

    """
    rows, wall_time = _run(cfg, _test_replication)
    summary = _test_summary(cfg, rows)
    for record in summary.itertuples():
        logger.info(f"{record.scenario} n={record.n}: rejection rate {record.rejection_rate:.3f} (se {record.se:.3f})")
    return ResultTable(rows=rows, summary=summary, manifest=_manifest(cfg, "level-power", rows, wall_time))
