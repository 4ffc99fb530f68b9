"""Test the band selection and SNR-based weight maps."""
import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from qus_tools import errors as e
from qus_tools import model
from qus_tools import spectra
from qus_tools import weighting


@pytest.fixture
def grid_4x3():
    """Provide a 4 frequency by 3 depth grid."""
    return model.SpectralGrid.uniform(2.0, 5.0, 4, 1.0, 3.0, 3)


@pytest.fixture
def peaked_spectra(grid_4x3):
    """Provide a spectrum pair whose dB maps have a usable dynamic range."""
    sample = np.array([[1e2, 1e2, 1e1], [1e5, 1e4, 1e3], [1e5, 1e5, 1e4], [1e3, 1e2, 1e1]])
    reference = np.array([[1e3, 1e2, 1e1], [1e5, 1e5, 1e4], [1e5, 1e4, 1e3], [1e2, 1e2, 1e1]])
    return (
        spectra.SpectrumMap(values=sample, grid=grid_4x3),
        spectra.SpectrumMap(values=reference, grid=grid_4x3),
    )


def constant_map(grid, value):
    return weighting.WeightMap(values=np.full(grid.shape, value), grid=grid)


###################################


def test_select_band_constant_is_full_band():
    """Ensure that a constant column selects the whole band."""
    ranges = weighting.select_band(np.full((7, 2), 30.0))
    np.testing.assert_array_equal(ranges, [[0, 6], [0, 6]])


def test_select_band_symmetric_triangle():
    """Ensure that a symmetric triangle selects a range symmetric about its peak."""
    column = np.array([1.0, 2.0, 3.0, 4.0, 5.0, 4.0, 3.0, 2.0, 1.0])
    lo, hi = weighting.select_band(column[:, None])[0]
    assert (lo, hi) == (3, 5)


def test_select_band_negative_peak_keeps_peak_bin(monkeypatch):
    """Ensure that a depth peaking below 0 dB keeps only its peak bin and is logged."""
    warnings = []
    monkeypatch.setattr(weighting.log, "warning", warnings.append)
    column = np.array([-9.0, -6.0, -5.0, -6.0, -9.0])
    spectra_map = np.column_stack([column, column + 20.0])

    ranges = weighting.select_band(spectra_map, 0.8)
    np.testing.assert_array_equal(ranges[0], [2, 2])
    assert tuple(ranges[1]) == (1, 3)
    assert len(warnings) == 1
    assert "1 depth(s)" in warnings[0]


def test_select_band_gaussian_crossings():
    """Ensure that the range ends exactly where the Gaussian crosses the level."""
    f = np.linspace(1.0, 11.0, 41)
    column = 50.0 * np.exp(-0.5 * ((f - 6.0) / 2.0)**2)
    lo, hi = weighting.select_band(column[:, None], 0.8)[0]
    level = 0.8 * column.max()

    assert np.all(column[lo:hi + 1] >= level)
    assert column[lo - 1] < level and column[hi + 1] < level
    assert lo <= np.argmax(column) <= hi


def test_phantom_weights_examples(grid_4x3):
    """Ensure that the ramp is 1 at the maximum, 0 at the minimum and 0.5 halfway between thresholds."""
    upper, lower = 0.9 * 10.0, 1.67 * 1.0
    s_log = np.full(grid_4x3.shape, 10.0)
    s_log[0, :] = 1.0
    s_log[1, 0] = 0.5 * (upper + lower)
    weights = weighting.phantom_weights(s_log, grid_4x3).values

    assert np.all(weights[2:] == 1.0)
    assert np.all(weights[0] == 0.0)
    assert weights[1, 0] == pytest.approx(0.5, abs=1e-12)


def test_phantom_weights_constant_map(grid_4x3):
    """Ensure that a map equal to its maximum everywhere gets weight 1."""
    weights = weighting.phantom_weights(np.full(grid_4x3.shape, 25.0), grid_4x3)
    assert np.all(weights.values == 1.0)


def test_phantom_weights_degenerate(grid_4x3):
    """Ensure that T1 <= T2 with cells below T1 is reported as a degenerate range."""
    s_log = np.full(grid_4x3.shape, 10.0)
    s_log[0, 0] = 6.0
    with pytest.raises(e.DegenerateRangeError) as caught:
        weighting.phantom_weights(s_log, grid_4x3)
    assert caught.value.upper == pytest.approx(9.0)
    assert caught.value.lower == pytest.approx(10.02)


def test_phantom_weights_rejects_non_finite(grid_4x3):
    """Ensure that -inf from a zero power cell is rejected."""
    s_log = np.full(grid_4x3.shape, 10.0)
    s_log[1, 1] = -np.inf
    with pytest.raises(e.DataError):
        weighting.phantom_weights(s_log, grid_4x3)


@given(arrays(np.float64, (4, 3), elements=st.floats(min_value=1.0, max_value=100.0)))
def test_phantom_weights_monotone(s_log):
    """Ensure that a larger log spectrum value never gets a smaller weight."""
    assume(0.9 * s_log.max() > 1.67 * s_log.min())
    grid = model.SpectralGrid.uniform(2.0, 5.0, 4, 1.0, 3.0, 3)
    weights = weighting.phantom_weights(s_log, grid).values.ravel()

    order = np.argsort(s_log.ravel(), kind="mergesort")
    assert np.all(np.diff(weights[order]) >= 0)
    assert weights.min() >= 0 and weights.max() <= 1


def test_combine_weights_examples(grid_4x3):
    """Ensure that ones are an identity, zeros annihilate and halves multiply to a quarter."""
    ones, zeros, halves = (constant_map(grid_4x3, v) for v in (1.0, 0.0, 0.5))

    assert np.all(weighting.combine_weights(ones, halves).values == 0.5)
    assert np.all(weighting.combine_weights(zeros, halves).values == 0.0)
    assert np.all(weighting.combine_weights(halves, halves).values == 0.25)
    assert np.all(weighting.combine_weights(zeros, halves, "reference_only").values == 0.5)

    with pytest.raises(e.ConfigError):
        weighting.combine_weights(ones, halves, "sample_only")


def test_normalize_floor_examples(grid_4x3):
    """Ensure that zeros rise to floor / (1 + floor), the maximum becomes 1 and order is kept."""
    values = np.ones(grid_4x3.shape)
    values[0, 0] = 0.0
    values[1, 1] = 0.5
    floored = weighting.normalize_floor(weighting.WeightMap(values=values, grid=grid_4x3), 0.05).values

    assert floored[0, 0] == pytest.approx(0.05 / 1.05, rel=1e-15)
    assert floored.max() == 1.0
    assert floored[0, 0] < floored[1, 1] < floored[2, 2]


def test_normalize_floor_rejects(grid_4x3):
    """Ensure that all-zero maps and floors outside (0, 1) are rejected."""
    with pytest.raises(e.DataError):
        weighting.normalize_floor(constant_map(grid_4x3, 0.0))
    with pytest.raises(e.ConfigError):
        weighting.normalize_floor(constant_map(grid_4x3, 1.0), 0.0)


def test_weight_map_bounds(grid_4x3):
    """Ensure that weights outside [0, 1] are rejected."""
    with pytest.raises(e.DataError):
        constant_map(grid_4x3, 1.5)


def test_identical_spectra_give_identical_weights(peaked_spectra):
    """Ensure that the same spectra on both sides give w_s == w_r."""
    _, reference = peaked_spectra
    bundle = weighting.build_data_weights(reference, reference)

    np.testing.assert_array_equal(bundle.w_s.values, bundle.w_r.values)
    np.testing.assert_array_equal(bundle.w_d.values, bundle.w_r.values**2)


def test_reference_only_mode(peaked_spectra):
    """Ensure that reference_only makes w_d equal to w_r."""
    sample, reference = peaked_spectra
    bundle = weighting.build_data_weights(sample, reference, weighting.WeightConfig(combine_mode="reference_only"))
    np.testing.assert_array_equal(bundle.w_d.values, bundle.w_r.values)


def test_constant_spectra_give_unit_weights(grid_4x3):
    """Ensure that flat spectra produce all-ones floored data weights."""
    flat = spectra.SpectrumMap(values=np.full(grid_4x3.shape, 1e3), grid=grid_4x3)
    bundle = weighting.build_data_weights(flat, flat)
    assert np.all(bundle.w_d_floored.values == 1.0)


def test_floored_weights_are_positive(peaked_spectra):
    """Ensure that every floored map is strictly positive with maximum 1."""
    bundle = weighting.build_data_weights(*peaked_spectra)
    for floored in (bundle.w_s_floored, bundle.w_r_floored, bundle.w_d_floored):
        assert floored.values.min() > 0
        assert floored.values.max() == 1.0


def test_apply_band_zeroes_outside(peaked_spectra):
    """Ensure that apply_band zeroes w_d outside the selected bands."""
    bundle = weighting.build_data_weights(*peaked_spectra, weighting.WeightConfig(apply_band=True))
    index = np.arange(4)[:, None]
    inside = np.zeros((4, 3), dtype=bool)
    for band in (bundle.band_s, bundle.band_r):
        inside |= (index >= band[:, 0]) & (index <= band[:, 1])

    assert np.all(bundle.w_d.values[~inside] == 0.0)


def test_degenerate_sample_in_reference_only_mode(grid_4x3, peaked_spectra):
    """Ensure that a degenerate sample map only fails when the sample weights are needed."""
    _, reference = peaked_spectra
    values = np.full(grid_4x3.shape, 1e10)
    values[0, 0] = 1e6
    sample = spectra.SpectrumMap(values=values, grid=grid_4x3)

    with pytest.raises(e.DegenerateRangeError):
        weighting.build_data_weights(sample, reference)
    bundle = weighting.build_data_weights(sample, reference, weighting.WeightConfig(combine_mode="reference_only"))
    assert np.all(bundle.w_s.values == 1.0)


@pytest.mark.parametrize("kwargs", [{"floor": 0.0}, {"floor": 1.0}, {"band_fraction": 0.0}, {"combine_mode": "x"}])
def test_weight_config_validation(kwargs):
    """Ensure that invalid settings are rejected."""
    with pytest.raises(e.ConfigError):
        weighting.WeightConfig(**kwargs)
