"""Tests for the CUSUM and goodness-of-fit statistics and their Monte-Carlo calibration."""

import math

import numpy as np
import pytest
from scipy import stats

import hypo_tests
from errors import DegenerateVarianceError, DomainError
from estimators import EstimatorParams, IntegratedCurve, VarCurve
from experiments import ExperimentConfig, simulate_scenario
from hypo_tests import (
    FunctionClass,
    MCSettings,
    TestReport,
    cusum_statistic,
    gof_statistic,
    integrated_class_curve,
    mc_quantile_cusum,
    mc_quantile_gof,
    simulate_suprema,
)
from simulate import FbmConfig, derive_seed, simulate_fbm

# 95% quantile of sup_{u <= 1} |W(u)|
SUP_ABS_BM_95 = 2.2414


def _curve(values, n=1000):
    u = np.linspace(0.0, 1.0, len(values))
    return IntegratedCurve(u=u, values=np.asarray(values, dtype=float), start=0, n=n)


@pytest.fixture
def unit_grid():
    """
    The grid u = k/1000, k = 0..1000.

    Returns:
        np.ndarray: The grid.

    """
    return np.linspace(0.0, 1.0, 1001)


@pytest.fixture
def linear_clock():
    """
    The clock Sigma(u) = u.

    Returns:
        VarCurve: The clock.

    """
    u = np.linspace(0.0, 1.0, 101)
    return VarCurve(u=u, values=u.copy())


@pytest.fixture
def small_mc():
    """
    Cheap calibration settings for pipeline tests.

    Returns:
        MCSettings: 1000 paths on a 128-point grid.

    """
    return MCSettings(reps=1000, grid_size=128, seed=1)


def test_cusum_of_linear_curve_vanishes(unit_grid):
    """
    Test that a straight line through the origin has zero CUSUM statistic.

    Args:
        unit_grid (np.ndarray): Fixture grid.

    """
    assert cusum_statistic(_curve(0.37 * unit_grid)) == pytest.approx(0.0, abs=1e-12)


def test_cusum_of_parabola(unit_grid):
    """
    Test sup |u^2 - u| = 1/4, reached at u = 1/2, with or without an added slope.

    Args:
        unit_grid (np.ndarray): Fixture grid.

    """
    assert cusum_statistic(_curve(unit_grid**2)) == pytest.approx(0.25, abs=1e-12)
    assert cusum_statistic(_curve(unit_grid**2 + 0.3 * unit_grid)) == pytest.approx(0.25, abs=1e-12)


def test_cusum_is_stable_under_grid_refinement():
    """
    Test that doubling the supremum grid from 512 to 1024 points moves the statistic by under 2%.

    Raises:
        AssertionError: If the relative change is too large.

    """
    u = np.linspace(0.0, 1.0, 4097)
    curve = _curve(u**2 + 0.1 * np.sin(6.0 * u), n=4096)

    coarse = cusum_statistic(curve, max_points=512)
    fine = cusum_statistic(curve, max_points=1024)

    assert abs(coarse - fine) / fine < 0.02


def test_cusum_rejects_short_or_empty_curves():
    """
    Test that an empty curve or one ending before u = 1 raises DomainError.

    Raises:
        AssertionError: If no error is raised.

    """
    with pytest.raises(DomainError):
        cusum_statistic(IntegratedCurve(u=np.array([]), values=np.array([]), start=0, n=10))
    with pytest.raises(DomainError, match="u = 1"):
        cusum_statistic(IntegratedCurve(u=np.linspace(0, 0.9, 10), values=np.zeros(10), start=0, n=10))


def test_cusum_quantile_matches_kolmogorov(linear_clock):
    """
    Test that the 95% quantile for Sigma(u) = u is the Kolmogorov quantile 1.358.

    Args:
        linear_clock (VarCurve): Fixture clock.

    """
    quantile = mc_quantile_cusum(linear_clock, 0.05, 100_000, 512, seed=1)

    assert quantile == pytest.approx(stats.kstwobign.ppf(0.95), abs=0.03)


def test_gof_quantile_matches_brownian_supremum(linear_clock):
    """
    Test that the 95% quantile of sup |W(u)| is about 2.24.

    Args:
        linear_clock (VarCurve): Fixture clock.

    """
    quantile = mc_quantile_gof(linear_clock, 0.05, 100_000, 512, seed=2)

    assert quantile == pytest.approx(SUP_ABS_BM_95, abs=0.04)


@pytest.mark.parametrize("scale", [0.25, 4.0, 17.0])
def test_quantiles_scale_with_the_clock(linear_clock, scale):
    """
    Test that multiplying Sigma by c multiplies the quantile by sqrt(c).

    Args:
        linear_clock (VarCurve): Fixture clock.
        scale (float): The factor c.

    """
    scaled = VarCurve(u=linear_clock.u, values=scale * linear_clock.values)

    base = mc_quantile_cusum(linear_clock, 0.05, 2000, 256, seed=3)
    stretched = mc_quantile_cusum(scaled, 0.05, 2000, 256, seed=3)

    assert stretched / base == pytest.approx(math.sqrt(scale), rel=1e-9)


def test_quantiles_are_deterministic_and_ordered(linear_clock):
    """
    Test reproducibility from the seed and monotonicity in alpha.

    Args:
        linear_clock (VarCurve): Fixture clock.

    """
    first = mc_quantile_gof(linear_clock, 0.05, 2000, 256, seed=4)

    assert first == mc_quantile_gof(linear_clock, 0.05, 2000, 256, seed=4)
    assert mc_quantile_gof(linear_clock, 0.5, 2000, 256, seed=4) < first


def test_chunking_does_not_change_suprema(linear_clock):
    """
    Test that simulating in one batch or several gives identical draws.

    Args:
        linear_clock (VarCurve): Fixture clock.

    """
    whole = simulate_suprema(linear_clock, MCSettings(reps=3000, grid_size=64, seed=5), bridge=True)
    pieces = simulate_suprema(linear_clock, MCSettings(reps=3000, grid_size=64, seed=5, chunk=1000), bridge=True)

    np.testing.assert_array_equal(whole, pieces)


def test_calibration_input_checks(linear_clock):
    """
    Test that too few paths and a zero clock are refused.

    Args:
        linear_clock (VarCurve): Fixture clock.

    """
    flat = VarCurve(u=linear_clock.u, values=np.zeros_like(linear_clock.u))

    with pytest.raises(DomainError):
        mc_quantile_cusum(linear_clock, 0.05, 999, 256, seed=0)
    with pytest.raises(DegenerateVarianceError):
        mc_quantile_gof(flat, 0.05, 1000, 256, seed=0)


@pytest.mark.parametrize(
    "factory",
    [
        lambda: FunctionClass(kind="quadratic"),
        lambda: FunctionClass.singleton([0.3, 1.0]),
        lambda: FunctionClass.sampled_grid([]),
        lambda: FunctionClass.constant_family(0.0, 0.5),
        lambda: FunctionClass(kind="singleton", curves=((0.3, 0.4), (0.5, 0.5))),
    ],
)
def test_function_class_validation(factory):
    """
    Test that malformed classes raise DomainError.

    Args:
        factory (callable): Builds the class.

    """
    with pytest.raises(DomainError):
        factory()


def test_integrated_class_curves(unit_grid):
    """
    Test the closed-form integrals of each kind of member.

    Args:
        unit_grid (np.ndarray): Fixture grid.

    """
    u = unit_grid
    sampled = FunctionClass.sampled_grid([[0.2, 0.6], [0.5, 0.5]])

    np.testing.assert_allclose(integrated_class_curve(FunctionClass.constant_family(), 0.4, u), 0.4 * u)
    np.testing.assert_allclose(integrated_class_curve(FunctionClass.linear_family(), (0.2, 0.3), u), 0.1 * u**2 + 0.3 * u)
    np.testing.assert_allclose(integrated_class_curve(sampled, 0, u), 0.2 * u + 0.2 * u**2, atol=1e-14)


def test_gof_singleton_of_true_curve(unit_grid):
    """
    Test a zero statistic when the estimate equals the integral of the null curve.

    Args:
        unit_grid (np.ndarray): Fixture grid.

    """
    value, member = gof_statistic(_curve(0.4 * unit_grid), FunctionClass.singleton([0.4, 0.4]))

    assert value == pytest.approx(0.0, abs=1e-12)
    assert member == 0


def test_gof_constant_family_recovers_level(unit_grid):
    """
    Test that the constant family fits 0.5 u exactly at c = 0.5.

    Args:
        unit_grid (np.ndarray): Fixture grid.

    """
    value, level = gof_statistic(_curve(0.5 * unit_grid), FunctionClass.constant_family())

    assert value == pytest.approx(0.0, abs=1e-8)
    assert level == pytest.approx(0.5, abs=1e-6)


def test_gof_sampled_grid_picks_closest_member(unit_grid):
    """
    Test that the member whose integral matches the curve is selected.

    Args:
        unit_grid (np.ndarray): Fixture grid.

    """
    cls = FunctionClass.sampled_grid([[0.3, 0.3], [0.2, 0.6], [0.7, 0.7]])

    value, member = gof_statistic(_curve(0.2 * unit_grid + 0.2 * unit_grid**2), cls)

    assert member == 1
    assert value == pytest.approx(0.0, abs=1e-12)


def test_gof_linear_family_against_brute_force(unit_grid):
    """
    Test the linear-family search on u^2 against a 200 x 200 grid and the analytic optimum.

    The best member keeps a + b at its upper bound 0.99 with
    b = sqrt(1.0201 / 2), giving the distance 0.505 - b/2.

    Args:
        unit_grid (np.ndarray): Fixture grid.

    """
    # Arrange
    values = unit_grid**2
    cls = FunctionClass.linear_family()
    a_grid = np.linspace(*cls.a_range, 200)
    b_grid = np.linspace(*cls.b_range, 200)
    A, B = (m.ravel() for m in np.meshgrid(a_grid, b_grid, indexing="ij"))
    ok = cls.feasible(A, B)
    fitted = A[ok, None] * 0.5 * unit_grid**2 + B[ok, None] * unit_grid
    oracle = float(np.min(np.max(np.abs(values - fitted), axis=1)))
    analytic = 0.505 - 0.5 * math.sqrt(1.0201 / 2.0)

    # Act
    value, (a, b) = gof_statistic(_curve(values), cls)

    # Assert
    assert value <= oracle + 1e-3
    assert value == pytest.approx(analytic, abs=1e-3)
    assert bool(cls.feasible(a, b))


def test_gof_classes_are_nested(unit_grid):
    """
    Test that a larger class never scores worse than a smaller one.

    Args:
        unit_grid (np.ndarray): Fixture grid.

    """
    curve = _curve(0.45 * unit_grid + 0.1 * np.sin(5.0 * unit_grid))

    singleton, _ = gof_statistic(curve, FunctionClass.singleton([0.6, 0.6]))
    constant, _ = gof_statistic(curve, FunctionClass.constant_family())
    linear, _ = gof_statistic(curve, FunctionClass.linear_family())

    assert linear <= constant + 1e-12
    assert constant <= singleton + 1e-12


def test_gof_anchors_members_at_first_summation_point():
    """
    Test that the member integral starts where the estimate starts summing.

    Raises:
        AssertionError: If the exact anchored member is not a perfect fit.

    """
    n, start = 1000, 21
    u = np.arange(n + 1) / n
    origin = (start - 1) / n
    values = np.where(u >= origin, 0.6 * (u - origin), 0.0)
    curve = IntegratedCurve(u=u, values=values, start=start, n=n)

    value, level = gof_statistic(curve, FunctionClass.constant_family())

    assert value == pytest.approx(0.0, abs=1e-8)
    assert level == pytest.approx(0.6, abs=1e-6)
    assert cusum_statistic(curve) == pytest.approx(0.0, abs=1e-12)


def test_report_fields_and_collection_flag():
    """
    Test the report helpers, and that pytest does not collect the class.

    Raises:
        AssertionError: If a helper returns the wrong value.

    """
    report = TestReport(
        test="constancy", statistic=2.0, quantile=1.5, alpha=0.05, p_value=0.01, decision="reject", mc_reps=1000
    )

    assert TestReport.__test__ is False
    assert report.rejected
    assert report.to_dict()["statistic"] == 2.0
    assert "reject" in report.summary()


def test_constancy_pipeline_on_fbm(small_mc):
    """
    Test the full constancy test on an fBm path: consistency and determinism.

    Args:
        small_mc (MCSettings): Fixture settings.

    """
    # Arrange
    path = simulate_fbm(FbmConfig(hurst=0.5, n=1024, seed=31))
    params = EstimatorParams()

    # Act
    report = hypo_tests.test_constancy(path, params, small_mc)
    again = hypo_tests.test_constancy(path, params, small_mc)

    # Assert
    assert report.to_dict() == again.to_dict()
    assert report.statistic >= 0.0
    assert 0.0 < report.p_value <= 1.0
    assert report.rejected == (report.statistic > report.quantile)
    assert report.mc_reps == 1000
    assert report.diagnostics["sigma_hat_1"] > 0.0


def test_gof_pipeline_reports_minimizer(small_mc):
    """
    Test that the constant-family GOF test reports a level near the true H.

    Args:
        small_mc (MCSettings): Fixture settings.

    """
    path = simulate_fbm(FbmConfig(hurst=0.6, n=4096, seed=32))

    report = hypo_tests.test_gof(path, EstimatorParams(), FunctionClass.constant_family(), small_mc)

    assert report.test == "gof"
    assert report.diagnostics["function_class"] == "constant_family"
    assert report.diagnostics["minimizer"] == pytest.approx(0.6, abs=0.1)


def test_gof_rejects_a_distant_singleton(small_mc):
    """
    Test rejection with the smallest attainable p-value against a wrong null.

    Args:
        small_mc (MCSettings): Fixture settings.

    """
    path = simulate_fbm(FbmConfig(hurst=0.8, n=2048, seed=33))

    report = hypo_tests.test_gof(path, EstimatorParams(), FunctionClass.singleton([0.1, 0.1]), small_mc)

    assert report.rejected
    assert report.p_value == pytest.approx(1.0 / 1001)


def _rejection_rate(paths, run):
    return float(np.mean([run(path, k).rejected for k, path in enumerate(paths)]))


@pytest.mark.slow
def test_constancy_level_on_fbm():
    """
    Test that the CUSUM test holds its 5% level on fBm with H = 1/2.

    Raises:
        AssertionError: If the rejection rate leaves [0.02, 0.10].

    """
    paths = (simulate_fbm(FbmConfig(hurst=0.5, n=4096, seed=derive_seed(7, "level", k))) for k in range(500))

    rate = _rejection_rate(
        paths,
        lambda path, k: hypo_tests.test_constancy(path, EstimatorParams(), MCSettings(reps=1000, grid_size=256, seed=k)),
    )

    assert 0.02 <= rate <= 0.10, f"rejection rate {rate:.3f}"


@pytest.mark.slow
def test_constancy_level_under_varying_volatility():
    """
    Test that a time-varying sigma with constant H does not inflate the level.

    Raises:
        AssertionError: If the rejection rate leaves [0.02, 0.10].

    """
    cfg = ExperimentConfig(scenario="sine_sigma", n_list=(4096,), past_horizon=4.0, m_sub=2)
    paths = (simulate_scenario(cfg, "sine_sigma", 4096, derive_seed(8, "sine", k))[0] for k in range(500))

    rate = _rejection_rate(
        paths,
        lambda path, k: hypo_tests.test_constancy(path, EstimatorParams(), MCSettings(reps=1000, grid_size=256, seed=k)),
    )

    assert 0.02 <= rate <= 0.10, f"rejection rate {rate:.3f}"


@pytest.mark.slow
def test_constancy_power_against_a_jump():
    """
    Test that a jump of H from 0.3 to 0.7 is detected at n = 8192.

    Raises:
        AssertionError: If the power is below 0.9.

    """
    cfg = ExperimentConfig(scenario="jump_h", n_list=(8192,), past_horizon=4.0, m_sub=2)
    paths = (simulate_scenario(cfg, "jump_h", 8192, derive_seed(9, "jump", k))[0] for k in range(50))

    rate = _rejection_rate(
        paths,
        lambda path, k: hypo_tests.test_constancy(path, EstimatorParams(), MCSettings(reps=1000, grid_size=256, seed=k)),
    )

    assert rate >= 0.9, f"power {rate:.3f}"


@pytest.mark.slow
def test_gof_level_for_the_true_singleton():
    """
    Test that the GOF test against the true constant curve keeps its level.

    Raises:
        AssertionError: If the rejection rate exceeds 0.10.

    """
    cls = FunctionClass.singleton([0.5, 0.5])
    paths = (simulate_fbm(FbmConfig(hurst=0.5, n=4096, seed=derive_seed(10, "gof", k))) for k in range(200))

    rate = _rejection_rate(
        paths,
        lambda path, k: hypo_tests.test_gof(path, EstimatorParams(), cls, MCSettings(reps=1000, grid_size=256, seed=k)),
    )

    assert rate <= 0.10, f"rejection rate {rate:.3f}"


@pytest.mark.slow
def test_gof_power_of_constant_class_against_linear_path():
    """
    Test that the constant class is rejected for H_v = 0.4 + 0.3 v on long paths.

    Raises:
        AssertionError: If the power is below 0.9.

    """
    n = 2**16
    cfg = ExperimentConfig(scenario="linear_h", n_list=(n,), past_horizon=2.0, m_sub=1)
    cls = FunctionClass.constant_family()
    paths = (simulate_scenario(cfg, "linear_h", n, derive_seed(11, "linear", k))[0] for k in range(40))

    rate = _rejection_rate(
        paths,
        lambda path, k: hypo_tests.test_gof(path, EstimatorParams(), cls, MCSettings(reps=1000, grid_size=256, seed=k)),
    )

    assert rate >= 0.9, f"power {rate:.3f}"
