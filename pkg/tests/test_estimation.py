"""Test map estimation and the comparisons that motivate the weighted L1-L2 estimator."""
import time
from dataclasses import replace

import numpy as np
import pytest

from qus_tools import errors as e
from qus_tools import model
from qus_tools import synth
from qus_tools import weighting
from qus_tools.estimation import METHODS, estimate_map, method_preset
from qus_tools.estimation import solvers


def three_inclusion_phantom(calibration, n_freqs, n_depths, n_columns):
    """Return a phantom with +12, +6 and -6 dB inclusions in a reference-like background."""
    grid = model.SpectralGrid.uniform(4.0, 9.0, n_freqs, 0.5, 3.5, n_depths)
    return synth.InclusionPhantom(
        grid=grid,
        calibration=calibration,
        lateral=np.linspace(0.0, 3.6, n_columns),
        background_alpha=calibration.alpha0_r,
        background_beta=calibration.beta_r,
        background_nu=calibration.nu_r,
        inclusions=(
            synth.Inclusion(depth=1.0, lateral=0.9, radius=0.5, bsc_db=12.0),
            synth.Inclusion(depth=2.0, lateral=2.7, radius=0.5, bsc_db=6.0),
            synth.Inclusion(depth=2.9, lateral=1.2, radius=0.5, bsc_db=-6.0),
        ),
    )


@pytest.fixture
def three_inclusions(calibration):
    """Provide a 24-depth, 16-column three-inclusion phantom."""
    return three_inclusion_phantom(calibration, 12, 24, 16)


@pytest.fixture
def column_stack(small_grid, rng):
    """Provide a 4-column noisy stack on the small grid."""
    spec = synth.PhantomSpec.homogeneous(small_grid, model.ReferenceCalibration(0.6035, 2.9966e-6, 3.4281), 0.8)
    return synth.generate_columns([spec] * 4, synth.NoiseSpec(sigma0=0.1, seed=2), 1)[0]


def rmse(estimate, truth):
    return float(np.sqrt(np.mean((np.asarray(estimate) - np.asarray(truth))**2)))


###################################


def test_single_column_matches_solve_column(column_stack, small_grid):
    """Ensure that a one-column stack gives exactly the per-column solution."""
    cfg = solvers.SolverConfig(lam1=0.3, lam2=0.2)
    estimate = estimate_map(column_stack[:1], small_grid, None, cfg)
    params, report = solvers.solve_column(column_stack[0], small_grid, None, cfg)

    np.testing.assert_array_equal(estimate.maps.b[:, 0], params.b)
    assert estimate.reports[0].iterations == report.iterations


def test_column_permutation(column_stack, small_grid):
    """Ensure that permuting input columns permutes the output columns."""
    cfg = solvers.SolverConfig(method="l2l2", lam=0.5)
    order = [2, 0, 3, 1]
    straight = estimate_map(column_stack, small_grid, None, cfg)
    permuted = estimate_map(column_stack[order], small_grid, None, cfg)

    for name in ("a", "b", "n"):
        np.testing.assert_array_equal(permuted.maps[name], straight.maps[name][:, order])


def test_parallel_matches_serial(column_stack, small_grid):
    """Ensure that worker count does not change any value."""
    cfg = solvers.SolverConfig(lam1=0.3, lam2=0.2)
    serial = estimate_map(column_stack, small_grid, None, cfg, n_jobs=1)
    parallel = estimate_map(column_stack, small_grid, None, cfg, n_jobs=2)

    for name in ("a", "b", "n"):
        np.testing.assert_array_equal(serial.maps[name], parallel.maps[name])


def test_failing_column_is_recorded(column_stack, small_grid):
    """Ensure that one bad column becomes NaN while the others are solved."""
    stack = np.array(column_stack)
    stack[1, 0, 0] = np.nan
    estimate = estimate_map(stack, small_grid, None, solvers.SolverConfig(method="lsq"))

    assert list(estimate.failures) == [1]
    assert estimate.params[1] is None
    assert np.all(np.isnan(estimate.maps.a[:, 1]))
    assert np.all(np.isfinite(estimate.maps.a[:, [0, 2, 3]]))
    assert not estimate.all_converged


def test_per_column_weights(column_stack, small_grid):
    """Ensure that a list of weights is applied column by column."""
    cfg = solvers.SolverConfig(method="lsq")
    uniform = weighting.WeightMap.uniform(small_grid)
    ramp = weighting.WeightMap(values=np.linspace(0.1, 1.0, small_grid.n_freqs)[:, None] * np.ones(small_grid.shape),
                               grid=small_grid)
    estimate = estimate_map(column_stack[:2], small_grid, [uniform, ramp], cfg)
    expected, _ = solvers.solve_column(column_stack[1], small_grid, ramp, cfg)

    np.testing.assert_array_equal(estimate.maps.a[:, 1], expected.a)


def test_stack_shape_is_checked(column_stack, small_grid):
    """Ensure that a stack of the wrong shape is rejected."""
    with pytest.raises(e.DimensionMismatchError):
        estimate_map(column_stack[0], small_grid, None, solvers.SolverConfig())


def test_property_maps(column_stack, small_grid, calibration):
    """Ensure that property maps follow from the parameter maps and calibration."""
    estimate = estimate_map(
        column_stack, small_grid, None, solvers.SolverConfig(method="lsq"), calib=calibration, center_frequency=5.0
    )
    maps = estimate.maps
    np.testing.assert_allclose(maps.alpha_eff, model.np_to_db(maps.a) + calibration.alpha0_r)
    np.testing.assert_allclose(maps.beta, calibration.beta_r * np.exp(maps.b))
    np.testing.assert_allclose(maps.bsc_fc, maps.beta * 5.0**maps.nu)


def test_method_presets():
    """Ensure that the six named methods map onto estimator and weighting choices."""
    assert len(METHODS) == 6
    cfg, weighted = method_preset("admm_l1l2_wd", solvers.SolverConfig(method="lsq", lam1=2.0))
    assert cfg.method == "admm_l1l2" and cfg.lam1 == 2.0 and weighted

    cfg, weighted = method_preset("algebra")
    assert cfg.method == "l2l2" and not weighted

    with pytest.raises(e.ConfigError):
        method_preset("magic")


def assert_inclusion_plateaus(phantom, calibration):
    """Estimate the phantom's map at low noise and check every inclusion core within 1 dB."""
    stack = synth.generate_map(phantom, synth.NoiseSpec(sigma0=0.01, seed=4), 1)[0]
    cfg = solvers.SolverConfig(lam1=1e-3, lam2=1e-3, rho_auto=True, data_mode="normal_equations")
    estimate = estimate_map(stack, phantom.grid, None, cfg, calib=calibration, center_frequency=8.0)

    _, beta, nu = phantom.truth_maps()
    truth_db = 10.0 * np.log10(model.bsc_at(beta, nu, 8.0))
    estimate_db = 10.0 * np.log10(estimate.maps.bsc_fc)
    depths, lateral = np.meshgrid(phantom.grid.depths, phantom.lateral, indexing="ij")

    background_db = 10.0 * np.log10(model.bsc_at(calibration.beta_r, calibration.nu_r, 8.0))
    for inclusion in phantom.inclusions:
        core = replace(inclusion, radius=0.5 * inclusion.radius).contains(depths, lateral)
        assert core.any()
        assert np.all(np.abs(estimate_db[core] - truth_db[core]) <= 1.0)
        assert estimate_db[core].mean() - background_db == pytest.approx(inclusion.bsc_db, abs=1.0)


def test_three_inclusion_plateaus(three_inclusions, calibration):
    """Ensure that every inclusion core is recovered within 1 dB at low noise."""
    assert_inclusion_plateaus(three_inclusions, calibration)


def test_full_size_three_inclusion_map(calibration):
    """Ensure that a 64-depth, 64-column map keeps its plateaus and finishes within five minutes."""
    start = time.perf_counter()
    assert_inclusion_plateaus(three_inclusion_phantom(calibration, 32, 64, 64), calibration)
    assert time.perf_counter() - start < 300.0


def test_l1l2_preserves_edges_better_than_l2(calibration):
    """Ensure that L1 on b recovers a step with lower error than L2 on every parameter, within a minute."""
    start = time.perf_counter()
    grid = model.SpectralGrid.uniform(3.0, 10.0, 16, 0.5, 3.0, 30)
    z = grid.depths
    params = model.ParamColumn(
        a=0.01 + 0.01 * (z - z[0]) / (z[-1] - z[0]),
        b=np.where(np.arange(z.size) < 15, 0.0, np.log(10**1.2)),
        n=np.full(z.size, 0.2),
    )
    exact = model.forward_log_ratio(params, grid)
    lambdas = [0.3, 1.0, 3.0, 10.0, 30.0, 100.0]
    base = solvers.SolverConfig(rho_auto=True, max_iter=2000, data_mode="normal_equations")

    best_l1l2, best_l2, jump_share = [], [], []
    for seed in range(20):
        noisy = exact + 0.1 * np.random.default_rng(seed).standard_normal(grid.shape)

        l1l2 = [solvers.solve_column(noisy, grid, None, replace(base, lam1=lam, lam2=lam))[0] for lam in lambdas]
        l2 = [solvers.solve_column(noisy, grid, None, replace(base, method="admm_l2", lam1=lam))[0] for lam in lambdas]

        errors = [rmse(p.b, params.b) for p in l1l2]
        best = l1l2[int(np.argmin(errors))]
        best_l1l2.append(min(errors))
        best_l2.append(min(rmse(p.b, params.b) for p in l2))

        jumps = np.diff(best.b)
        jump_share.append(jumps[14]**2 / np.sum(jumps**2))

    assert np.median(best_l1l2) < np.median(best_l2)
    assert np.median(jump_share) >= 0.8
    assert time.perf_counter() - start < 60.0


def test_weighting_reduces_attenuation_bias():
    """Ensure that inverse-variance data weights lower the attenuation bias when noise grows with f*z."""
    grid = model.SpectralGrid.uniform(1.0, 10.0, 16, 0.5, 4.0, 20)
    params = model.ParamColumn(a=np.full(20, 0.02), b=np.full(20, 0.3), n=np.full(20, 0.1))
    exact = model.forward_log_ratio(params, grid)

    noise = synth.NoiseSpec(sigma0=0.02, slope_fz=0.1)
    variance = noise.std(grid)**2
    raw = weighting.WeightMap(values=variance.min() / variance, grid=grid)
    weights = weighting.normalize_floor(raw, 1e-4)
    cfg = solvers.SolverConfig(method="lsq")

    plain_bias, weighted_bias = [], []
    for seed in range(20):
        noisy = exact + noise.std(grid) * np.random.default_rng(seed).standard_normal(grid.shape)
        plain, _ = solvers.solve_column(noisy, grid, None, cfg)
        weighted, _ = solvers.solve_column(noisy, grid, weights, cfg)
        plain_bias.append(abs(plain.a.mean() - 0.02))
        weighted_bias.append(abs(weighted.a.mean() - 0.02))

    assert np.median(weighted_bias) <= np.median(plain_bias)
