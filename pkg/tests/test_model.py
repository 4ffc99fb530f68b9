"""Test the domain types, unit conversions and forward physics."""
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qus_tools import errors as e
from qus_tools import model

from .helpers import oracles

finite = st.floats(min_value=-1e3, max_value=1e3, allow_nan=False)


@pytest.fixture
def unit_grid():
    """Provide a grid whose first cell sits at f = 2 MHz, z = 3 cm."""
    return model.SpectralGrid(freqs=[2.0, 4.0], depths=[3.0, 4.0])


###################################


def test_db_to_np_examples():
    """Ensure that the dB to Np conversion matches its closed form."""
    assert model.db_to_np(20.0 / np.log(10.0)) == pytest.approx(1.0, rel=1e-15)
    assert model.db_to_np(8.685889638) == pytest.approx(1.0, rel=1e-9)
    assert model.db_to_np(0.6035) == pytest.approx(0.6035 * np.log(10.0) / 20.0, rel=1e-15)


@given(finite)
def test_db_np_inverse(value):
    """Ensure that np_to_db undoes db_to_np."""
    assert model.np_to_db(model.db_to_np(value)) == pytest.approx(value, rel=1e-12, abs=1e-12)


def test_db_to_np_keeps_arrays():
    """Ensure that arrays come back as arrays and scalars as floats."""
    assert isinstance(model.db_to_np(1.0), float)
    converted = model.db_to_np(np.array([0.0, 1.0]))
    assert converted.shape == (2, )


def test_forward_single_cell(unit_grid):
    """Ensure that the forward model matches a hand evaluation."""
    params = model.ParamColumn(a=[0.1, 0.0], b=[1.0, 0.0], n=[0.0, 0.0])
    x_map = model.forward_log_ratio(params, unit_grid)

    assert x_map.shape == unit_grid.shape
    assert x_map[0, 0] == pytest.approx(-1.4, abs=1e-12)


def test_forward_zero_params(small_grid):
    """Ensure that zero unknowns give a zero log ratio."""
    x_map = model.forward_log_ratio(model.ParamColumn.zeros(small_grid.n_depths), small_grid)
    assert np.all(x_map == 0)


def test_forward_depth_mismatch(small_grid):
    """Ensure that a ParamColumn of the wrong length is rejected."""
    with pytest.raises(e.DimensionMismatchError):
        model.forward_log_ratio(model.ParamColumn.zeros(small_grid.n_depths + 1), small_grid)


def test_forward_matches_design_matrix(rng):
    """Ensure that the vectorized forward model equals Q x on random grids."""
    for _ in range(10):
        grid = oracles.random_grid(rng, 5, 4)
        params = oracles.random_params(rng, 4)
        expected = oracles.dense_design(grid) @ params.stacked()
        np.testing.assert_allclose(model.forward_log_ratio(params, grid).ravel(), expected, rtol=1e-13, atol=1e-13)


def test_bsc_at_reference_phantom(calibration):
    """Ensure that the reference phantom BSC at 8 MHz is about 3.74e-3."""
    value = model.bsc_at(calibration.beta_r, calibration.nu_r, 8.0)
    assert value == pytest.approx(3.74e-3, rel=5e-3)


def test_bsc_at_rejects_nonpositive():
    """Ensure that nonpositive beta or frequency is rejected."""
    with pytest.raises(e.NonPositiveValueError):
        model.bsc_at(0.0, 3.0, 8.0)
    with pytest.raises(e.NonPositiveValueError):
        model.bsc_at(1e-6, 3.0, 0.0)


def test_attenuation_factor_example():
    """Ensure that alpha=0.05, f=5, z=2 gives exp(-2)."""
    assert model.attenuation_factor(0.05, 5.0, 2.0) == pytest.approx(np.exp(-2.0), rel=1e-15)


def test_attenuation_factor_vanishes_at_surface():
    """Ensure that there is no attenuation at zero depth."""
    assert model.attenuation_factor(0.3, 7.0, 0.0) == 1.0


positive = st.floats(min_value=0.01, max_value=2.0)


@given(positive, positive, positive, st.floats(min_value=1.01, max_value=3.0))
def test_attenuation_factor_decreases(alpha, f, z, factor):
    """Ensure that raising frequency, depth or the attenuation coefficient lowers the factor."""
    base = model.attenuation_factor(alpha, f, z)
    assert 0 < model.attenuation_factor(factor * alpha, f, z) < base
    assert 0 < model.attenuation_factor(alpha, factor * f, z) < base
    assert 0 < model.attenuation_factor(alpha, f, factor * z) < base


coefficients = st.floats(min_value=-10.0, max_value=10.0)


@given(coefficients, coefficients, st.integers(min_value=0, max_value=2**32 - 1))
def test_forward_log_ratio_is_linear(c1, c2, seed):
    """Ensure that the forward model of a combination of columns is the same combination of their maps."""
    rng = np.random.default_rng(seed)
    grid = model.SpectralGrid.uniform(1.0, 8.0, 5, 0.2, 2.0, 4)
    p, q = (oracles.random_params(rng, grid.n_depths) for _ in range(2))

    combined = model.ParamColumn.from_stacked(c1 * p.stacked() + c2 * q.stacked())
    expected = c1 * model.forward_log_ratio(p, grid) + c2 * model.forward_log_ratio(q, grid)
    np.testing.assert_allclose(
        model.forward_log_ratio(combined, grid), expected, rtol=1e-9, atol=1e-9 * (1.0 + abs(c1) + abs(c2))
    )


@given(
    st.floats(min_value=0.0, max_value=2.0),
    st.floats(min_value=1e-7, max_value=1e-2),
    st.floats(min_value=0.5, max_value=5.0),
)
def test_physics_ratio_matches_linear_form(alpha, beta, nu):
    """Ensure that ln(S_s/S_r) from the physical models equals the linear forward model."""
    grid = model.SpectralGrid.uniform(2.0, 10.0, 5, 0.5, 4.0, 4)
    calib = model.ReferenceCalibration(alpha0_r=0.6035, beta_r=2.9966e-6, nu_r=3.4281)
    field = model.TissueField.uniform(grid.n_depths, alpha, beta, nu)

    direct = model.log_ratio_from_spectra_model(field, calib, grid)
    linear = model.forward_log_ratio(model.parameterize(field, calib), grid)
    np.testing.assert_allclose(direct, linear, rtol=1e-9, atol=1e-9)


def test_reconstruct_inverts_parameterize(calibration):
    """Ensure that reconstruct maps parameterized properties back onto themselves."""
    field = model.TissueField(alpha_eff=[0.4, 0.6, 0.9], beta=[1e-5, 3e-6, 2e-4], nu=[2.0, 3.4, 4.1])
    back = model.reconstruct(model.parameterize(field, calibration), calibration)

    np.testing.assert_allclose(back.alpha_eff, field.alpha_eff, rtol=1e-12)
    np.testing.assert_allclose(back.beta, field.beta, rtol=1e-12)
    np.testing.assert_allclose(back.nu, field.nu, rtol=1e-12)


def test_stacked_layout():
    """Ensure that the stacked vector is [a; b; n] and round-trips."""
    params = model.ParamColumn(a=[1, 2], b=[3, 4], n=[5, 6])
    np.testing.assert_array_equal(params.stacked(), [1, 2, 3, 4, 5, 6])
    back = model.ParamColumn.from_stacked(params.stacked())
    np.testing.assert_array_equal(back.a, params.a)
    np.testing.assert_array_equal(back.n, params.n)

    with pytest.raises(e.DimensionMismatchError):
        model.ParamColumn.from_stacked(np.zeros(7))


@pytest.mark.parametrize(
    "freqs, depths, error",
    [
        ([1.0], [1.0, 2.0], e.DataError),
        ([1.0, 2.0], [2.0, 1.0], e.DataError),
        ([0.0, 2.0], [1.0, 2.0], e.NonPositiveValueError),
        ([1.0, np.nan], [1.0, 2.0], e.NonPositiveValueError),
    ],
)
def test_grid_validation(freqs, depths, error):
    """Ensure that malformed axes are rejected."""
    with pytest.raises(error):
        model.SpectralGrid(freqs=freqs, depths=depths)


def test_grid_is_read_only(small_grid):
    """Ensure that grid axes cannot be modified in place."""
    with pytest.raises(ValueError):
        small_grid.freqs[0] = 10.0


def test_param_column_rejects_bad_input():
    """Ensure that unequal lengths and non-finite entries are rejected."""
    with pytest.raises(e.DimensionMismatchError):
        model.ParamColumn(a=[0, 0], b=[0], n=[0, 0])
    with pytest.raises(e.DataError):
        model.ParamColumn(a=[0, np.inf], b=[0, 0], n=[0, 0])


def test_calibration_validation():
    """Ensure that a nonpositive beta_r or negative alpha0_r is rejected."""
    with pytest.raises(e.NonPositiveValueError):
        model.ReferenceCalibration(alpha0_r=0.5, beta_r=0.0, nu_r=3.0)
    with pytest.raises(e.DataError):
        model.ReferenceCalibration(alpha0_r=-0.1, beta_r=1e-6, nu_r=3.0)
