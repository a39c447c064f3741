"""Command-line entry point: simulate, estimate, test, study and fracmath verbs."""

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import pandas as pd
from loguru import logger

import hypo_tests
from core_model import (
    constant_theta,
    read_path_csv,
    read_theta_csv,
    theta_from_samples,
    validate_path,
    write_path_csv,
)
from errors import EXIT_OK, ConfigError, DomainError, HurstError, exit_code_for
from estimators import (
    bandwidth,
    hurst_log_ratio,
    hurst_smoothed_log,
    increments,
    integrated_hurst,
)
from experiments import run_rate_study, run_test_study
from fracmath import asymptotic_variance, long_run_variance, tau_squared
from hypo_tests import FunctionClass
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
from simulate import FbmConfig, MbmConfig, mesh_diagnostics, simulate_fbm, simulate_mbm

METHODS = {"log-ratio": hurst_log_ratio, "smoothed": hurst_smoothed_log}
QUANTITIES = {"tau2": tau_squared, "lrv": long_run_variance, "asymvar": asymptotic_variance}


def build_parser():
    """
    Build the argument parser.

    Returns:
        argparse.ArgumentParser: Parser with one sub-command per verb.

    """
    parser = argparse.ArgumentParser(prog="hurst", description="Local and integrated Hurst estimation and tests")
    parser.add_argument("--config", help="YAML configuration file")
    parser.add_argument("--threads", type=int, default=1, help="worker processes for studies")
    parser.add_argument("--log-level", help="log level, overrides LOG_LEVEL")
    verbs = parser.add_subparsers(dest="verb", required=True)

    simulate = verbs.add_parser("simulate", help="simulate a sample path to CSV")
    simulate.add_argument("kind", choices=["fbm", "mbm"])
    simulate.add_argument("--output", required=True)
    simulate.add_argument("--hurst", type=float)
    simulate.add_argument("--sigma", type=float)
    simulate.add_argument("--n", type=int)
    simulate.add_argument("--lead-in", dest="lead_in", type=int)
    simulate.add_argument("--seed", type=int)
    simulate.add_argument("--past-horizon", dest="past_horizon", type=float)
    simulate.add_argument("--m-sub", dest="m_sub", type=int)
    simulate.add_argument("--variant", choices=["ito", "classical"])
    simulate.add_argument("--hurst-nodes", dest="hurst_nodes", type=int)
    simulate.add_argument("--theta-file", dest="theta_file", help="CSV with columns v,hurst,sigma")

    estimate = verbs.add_parser("estimate", help="estimate the Hurst curve of a path")
    estimate.add_argument("--input", required=True)
    estimate.add_argument("--output", required=True, help="CSV u,value; diagnostics go next to it as JSON")
    estimate.add_argument("--method", choices=["log-ratio", "smoothed", "integrated"], default="smoothed")
    _estimator_flags(estimate)
    estimate.add_argument("--points", type=int, default=101, help="evaluation points of the local estimators")

    test = verbs.add_parser("test", help="test the Hurst path of a sample")
    test.add_argument("kind", choices=["constancy", "gof"])
    test.add_argument("--input", required=True)
    test.add_argument("--output", help="write the JSON report here instead of stdout")
    test.add_argument("--class", dest="gof_class", choices=["singleton", "constant", "linear"], default="constant")
    test.add_argument("--null-hurst", dest="null_hurst", type=float, help="H of the singleton null class")
    test.add_argument("--alpha", type=float)
    test.add_argument("--mc-reps", dest="reps", type=int)
    test.add_argument("--grid-size", dest="grid_size", type=int)
    test.add_argument("--seed", type=int)
    _estimator_flags(test)

    study = verbs.add_parser("study", help="run a simulation study")
    study.add_argument("kind", choices=["rate", "level-power"])
    study.add_argument("--scenario", nargs="+")
    study.add_argument("--n-list", dest="n_list", type=int, nargs="+")
    study.add_argument("--replications", type=int)
    study.add_argument("--seed", type=int)
    study.add_argument("--output-dir", dest="output_dir")
    study.add_argument("--test", choices=["constancy", "gof"])
    study.add_argument("--class", dest="gof_class", choices=["singleton", "constant", "linear"])

    frac = verbs.add_parser("fracmath", help="evaluate the asymptotic variance")
    frac.add_argument(
        "quantity", choices=list(QUANTITIES),
        help="tau2: printed series; lrv: long-run variance; asymvar: the one selected by --convention",
    )
    frac.add_argument("--hurst", type=float, nargs="+", required=True)
    frac.add_argument("--convention", choices=["exact", "printed"], help="variance used by asymvar")
    return parser


def _estimator_flags(parser):
    parser.add_argument("--bandwidth", type=float)
    parser.add_argument("--degree", type=int)
    parser.add_argument("--lag", type=int)
    parser.add_argument("--kernel", choices=["epanechnikov", "uniform", "triangular"])
    parser.add_argument("--support", choices=["two_sided", "left", "right"])


def _flags(args, keys):
    return {key: getattr(args, key, None) for key in keys}


def _theta_for(values):
    if values.get("theta_file"):
        return read_theta_csv(values["theta_file"], horizon=values.get("past_horizon", 10.0))
    samples = values.get("theta")
    if samples:
        try:
            return theta_from_samples(samples["hurst"], samples["sigma"], eta=samples.get("eta", 1.0))
        except KeyError as e:
            raise ConfigError(f"simulate.theta needs 'hurst' and 'sigma' lists, missing {e}") from e
    return constant_theta(values.get("hurst", 0.5), values.get("sigma", 1.0))


def cmd_simulate(args, config):
    """Simulate a path and write it as CSV."""
    values = merge_flags(config["simulate"], _flags(args, SECTIONS["simulate"]))
    values.pop("kind", None)
    common = {key: values[key] for key in ("n", "lead_in", "seed") if key in values}
    try:
        if args.kind == "fbm":
            cfg = FbmConfig(hurst=values.get("hurst", 0.5), sigma=values.get("sigma", 1.0), **common)
        else:
            extra = {key: values[key] for key in ("past_horizon", "m_sub", "variant", "hurst_nodes") if key in values}
            cfg = MbmConfig(theta=_theta_for(values), **common, **extra)
    except (TypeError, DomainError) as e:
        raise ConfigError(f"invalid simulate settings: {e}") from e

    if args.kind == "fbm":
        path = simulate_fbm(cfg)
    else:
        report = mesh_diagnostics(cfg)
        logger.info(
            f"Mesh: {report.cells} cells, {report.hurst_nodes} H node(s), "
            f"truncated variance share {report.truncated_variance_ratio:.2%}"
        )
        path = simulate_mbm(cfg)
    write_path_csv(path, args.output)


def _load_path(source):
    path = read_path_csv(source)
    report = validate_path(path)
    if not report.valid:
        raise DomainError(f"{source}: {report.bad_count} non-finite value(s) at indices {list(report.bad_indices)[:10]}")
    return path


def _estimate_grid(params, n, points):
    margin = params.degree + 1
    lo = margin if params.kernel.support == "left" else 0
    hi = n - margin if params.kernel.support == "right" else n
    j = np.unique(np.rint(np.linspace(lo, hi, min(points, hi - lo + 1))).astype(int))
    return j / n


def cmd_estimate(args, config):
    """Estimate a Hurst curve and write CSV plus a JSON sidecar."""
    params = build_estimator_params(
        merge_flags(config["estimate"], _flags(args, ("bandwidth", "degree", "lag", "kernel", "support")))
    )
    path = _load_path(args.input)
    inc = increments(path)
    if args.method == "integrated":
        curve = integrated_hurst(inc, params.one_sided())
        u, values = curve.u, curve.values
        diagnostics = curve.diagnostics.to_dict()
    else:
        u_grid = _estimate_grid(params, inc.n, args.points)
        curve = METHODS[args.method](inc, params, u_grid)
        u, values = curve.u, curve.values
        diagnostics = curve.diagnostics.to_dict()

    output = Path(args.output)
    pd.DataFrame({"u": u, "value": values}).to_csv(output, index=False)
    sidecar = output.with_suffix(".json")
    diagnostics.update(method=args.method, n=inc.n, resolved_bandwidth=bandwidth(params, inc.n))
    sidecar.write_text(json.dumps(diagnostics, indent=2, sort_keys=True), encoding="utf-8")
    logger.info(f"Wrote {len(u)} estimate(s) to {output} and diagnostics to {sidecar}")


def _function_class(args):
    if args.gof_class == "constant":
        return FunctionClass.constant_family()
    if args.gof_class == "linear":
        return FunctionClass.linear_family()
    if args.null_hurst is None:
        raise ConfigError("the singleton class needs --null-hurst")
    return FunctionClass.singleton([args.null_hurst, args.null_hurst])


def cmd_test(args, config):
    """Run a test and emit its report."""
    params = build_estimator_params(
        merge_flags(config["estimate"], _flags(args, ("bandwidth", "degree", "lag", "kernel", "support")))
    )
    mc = build_mc_settings(merge_flags(config["mc"], _flags(args, ("alpha", "reps", "grid_size", "seed"))))
    asym = build_asym_config(config["fracmath"])
    path = _load_path(args.input)
    if args.kind == "constancy":
        report = hypo_tests.test_constancy(path, params, mc, asym)
    else:
        report = hypo_tests.test_gof(path, params, _function_class(args), mc, asym)

    payload = json.dumps(report.to_dict(), indent=2, sort_keys=True, default=str)
    if args.output:
        Path(args.output).write_text(payload, encoding="utf-8")
        logger.info(f"Wrote report to {args.output}")
        print(report.summary())
    else:
        # stdout carries the JSON document only
        print(payload)


def cmd_study(args, config):
    """Run a study and persist its tables."""
    config = dict(config)
    config["study"] = merge_flags(
        config["study"],
        _flags(args, ("scenario", "n_list", "replications", "seed", "output_dir", "test", "gof_class")),
    )
    cfg = build_experiment_config(config, threads=args.threads)
    if args.kind == "rate":
        table = run_rate_study(cfg)
        table.write(cfg.output_dir, "rate")
    else:
        table = run_test_study(cfg)
        table.write(cfg.output_dir, "test")


def cmd_fracmath(args, config):
    """Print the requested variance at each H, one tab-separated line per H."""
    asym = build_asym_config(merge_flags(config["fracmath"], {"convention": args.convention}))
    quantity = QUANTITIES[args.quantity]
    for hurst in args.hurst:
        print(f"{hurst:g}\t{quantity(hurst, asym):.12g}")


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "test": cmd_test,
    "study": cmd_study,
    "fracmath": cmd_fracmath,
}


def main(argv=None):
    """
    Run the command line.

    Args:
        argv (list, optional): Arguments, defaults to ``sys.argv[1:]``.

    Returns:
        int: 0 on success, 2 on configuration errors, 3 on runtime failures.

    """
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    logger.info(f"Starting '{args.verb}'")
    try:
        config = load_config(args.config) if args.config else {section: {} for section in SECTIONS}
        if args.threads < 1:
            raise ConfigError(f"--threads must be positive, got {args.threads}")
        COMMANDS[args.verb](args, config)
    except (HurstError, OSError) as e:
        logger.error(f"'{args.verb}' failed: {e}")
        return exit_code_for(e)
    logger.info(f"Finished '{args.verb}'")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
