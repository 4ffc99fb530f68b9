#!/usr/bin/env python
"""Provide bandwidth selection and the SNR-based data-term weights."""
from dataclasses import dataclass

import numpy as np
from logzero import logger as log

from qus_tools import errors as e
from qus_tools.etl import is_subset
from qus_tools.spectra import log_spectrum

COMBINE_MODES = ("both", "reference_only")


@dataclass(frozen=True)
class WeightConfig(object):
    """Thresholds and options of the weight-map pipeline."""

    band_fraction: float = 0.8
    upper_fraction: float = 0.9
    lower_fraction: float = 1.67
    floor: float = 0.05
    combine_mode: str = "both"
    apply_band: bool = False

    def __post_init__(self):
        """Validate the settings."""
        if not 0 < self.floor < 1:
            raise e.ConfigError(f"floor must be in (0, 1), got {self.floor}.")
        for name in ("band_fraction", "upper_fraction", "lower_fraction"):
            if not getattr(self, name) > 0:
                raise e.ConfigError(f"{name} must be > 0, got {getattr(self, name)}.")
        if not is_subset(self.combine_mode, COMBINE_MODES):
            raise e.ConfigError(f"combine_mode must be one of {COMBINE_MODES}, got {self.combine_mode!r}.")


@dataclass(frozen=True)
class WeightMap(object):
    """Per-frequency, per-depth data weights w(l, i) in [0, 1]."""

    values: np.ndarray
    grid: object

    def __post_init__(self):
        """Validate the map."""
        values = np.array(self.values, dtype=float)
        self.grid.check_map(values, "WeightMap values")
        if not np.all(np.isfinite(values)) or np.any(values < 0) or np.any(values > 1):
            raise e.DataError("WeightMap entries must lie in [0, 1].")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def uniform(cls, grid):
        return cls(values=np.ones(grid.shape), grid=grid)


def select_band(s_log, band_fraction=0.8):
    """Return an (N_R, 2) array of inclusive [lo, hi] frequency indices per depth.

    Each range is the contiguous run around the per-depth peak where
    ``s_log >= band_fraction * peak``; it always contains the peak bin. A peak below
    0 dB puts that level above the peak, so such depths keep the peak bin alone and
    are logged.
    """
    s_log = np.asarray(s_log, dtype=float)
    if s_log.ndim != 2 or s_log.size == 0:
        raise e.DimensionMismatchError(f"Log spectrum must be a nonempty 2-D map, got shape {s_log.shape}.")

    negative = np.flatnonzero(s_log.max(axis=0) < 0)
    if negative.size:
        log.warning(
            f"{negative.size} depth(s) peak below 0 dB (first: {negative[0]}); "
            "their bands hold only the peak bin."
        )

    ranges = np.empty((s_log.shape[1], 2), dtype=int)
    for i, column in enumerate(s_log.T):
        peak = int(np.argmax(column))
        level = band_fraction * column[peak]
        lo = hi = peak
        while lo > 0 and column[lo - 1] >= level:
            lo -= 1
        while hi < column.size - 1 and column[hi + 1] >= level:
            hi += 1
        ranges[i] = (lo, hi)
    return ranges


def phantom_weights(s_log, grid, upper_fraction=0.9, lower_fraction=1.67):
    """Return the contour-threshold WeightMap of one phantom's log spectrum.

    T1 = upper_fraction * max and T2 = lower_fraction * min over the whole map;
    weights are 1 above T1, 0 below T2 and a linear ramp between.
    """
    s_log = np.asarray(s_log, dtype=float)
    grid.check_map(s_log, "log spectrum")
    if not np.all(np.isfinite(s_log)):
        raise e.DataError("Log spectrum contains non-finite values.")

    upper = upper_fraction * s_log.max()
    lower = lower_fraction * s_log.min()

    if upper <= lower:
        # every cell above T1 leaves no ramp to define
        if np.all(s_log > upper):
            return WeightMap(values=np.ones_like(s_log), grid=grid)
        raise e.DegenerateRangeError(upper=upper, lower=lower)

    ramp = np.clip((s_log - lower) / (upper - lower), 0.0, 1.0)
    return WeightMap(values=ramp, grid=grid)


def combine_weights(w_s, w_r, mode="both"):
    """Return w_d: the element-wise product, or w_r alone in ``reference_only`` mode."""
    if not w_s.grid.same_as(w_r.grid):
        raise e.GridMismatchError("Sample and reference weights are on different grids.")
    if not is_subset(mode, COMBINE_MODES):
        raise e.ConfigError(f"combine mode must be one of {COMBINE_MODES}, got {mode!r}.")

    if mode == "reference_only":
        return WeightMap(values=w_r.values, grid=w_r.grid)
    return WeightMap(values=w_s.values * w_r.values, grid=w_r.grid)


def normalize_floor(w, floor=0.05):
    """Return (w + floor) / max(w + floor), so no weight is exactly zero and the largest is 1."""
    if not 0 < floor < 1:
        raise e.ConfigError(f"floor must be in (0, 1), got {floor}.")
    if not w.values.max() > 0:
        raise e.DataError("Cannot normalize an all-zero weight map.")

    shifted = w.values + floor
    return WeightMap(values=shifted / shifted.max(), grid=w.grid)


@dataclass(frozen=True)
class WeightBundle(object):
    """Every intermediate of the weight pipeline, for estimation and inspection."""

    w_s: WeightMap
    w_r: WeightMap
    w_d: WeightMap
    w_s_floored: WeightMap
    w_r_floored: WeightMap
    w_d_floored: WeightMap
    band_s: np.ndarray
    band_r: np.ndarray


def _band_mask(grid, *bands):
    mask = np.zeros(grid.shape, dtype=bool)
    freq_index = np.arange(grid.n_freqs)[:, None]
    for band in bands:
        mask |= (freq_index >= band[:, 0][None, :]) & (freq_index <= band[:, 1][None, :])
    return mask


def build_data_weights(sample, reference, cfg=None):
    """Return the WeightBundle for a sample/reference pair of lateral-averaged spectra.

    Args:
        sample (SpectrumMap): Sample phantom spectra.
        reference (SpectrumMap): Reference phantom spectra on the same grid.
        cfg (WeightConfig): Pipeline settings.
    """
    cfg = cfg or WeightConfig()
    if not sample.grid.same_as(reference.grid):
        raise e.GridMismatchError("Sample and reference spectra are on different grids.")
    grid = reference.grid

    s_log = log_spectrum(sample)
    r_log = log_spectrum(reference)

    w_r = phantom_weights(r_log, grid, cfg.upper_fraction, cfg.lower_fraction)
    try:
        w_s = phantom_weights(s_log, grid, cfg.upper_fraction, cfg.lower_fraction)
    except e.DegenerateRangeError:
        if cfg.combine_mode != "reference_only":
            raise
        log.warning("Sample log spectrum has a degenerate dynamic range; using uniform sample weights.")
        w_s = WeightMap.uniform(grid)

    w_d = combine_weights(w_s, w_r, cfg.combine_mode)

    band_s = select_band(s_log, cfg.band_fraction)
    band_r = select_band(r_log, cfg.band_fraction)
    if cfg.apply_band:
        bands = (band_r, ) if cfg.combine_mode == "reference_only" else (band_s, band_r)
        w_d = WeightMap(values=np.where(_band_mask(grid, *bands), w_d.values, 0.0), grid=grid)

    return WeightBundle(
        w_s=w_s,
        w_r=w_r,
        w_d=w_d,
        w_s_floored=normalize_floor(w_s, cfg.floor),
        w_r_floored=normalize_floor(w_r, cfg.floor),
        w_d_floored=normalize_floor(w_d, cfg.floor),
        band_s=band_s,
        band_r=band_r,
    )
