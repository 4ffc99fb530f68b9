#!/usr/bin/env python
"""Provide power spectra from RF frames and the reference phantom log ratio."""
from dataclasses import dataclass

import numpy as np
from logzero import logger as log
from scipy import signal

from qus_tools import errors as e
from qus_tools import model

PLAUSIBLE_SOUND_SPEED = (1400.0, 1650.0)


@dataclass(frozen=True)
class RFFrame(object):
    """Beamformed RF samples shaped (axial sample, lateral line).

    Attributes:
        samples (np.ndarray): RF amplitudes.
        sampling_rate (float): MHz.
        sound_speed (float): m/s.
    """

    samples: np.ndarray
    sampling_rate: float
    sound_speed: float = 1540.0

    def __post_init__(self):
        """Validate the frame."""
        samples = np.array(self.samples, dtype=float)
        if samples.ndim == 1:
            samples = samples[:, None]
        if samples.ndim != 2 or samples.size == 0:
            raise e.DimensionMismatchError(f"RF samples must be a nonempty 2-D array, got shape {samples.shape}.")
        if not self.sampling_rate > 0:
            raise e.NonPositiveValueError(f"sampling_rate must be > 0, got {self.sampling_rate}.")

        lo, hi = PLAUSIBLE_SOUND_SPEED
        if not lo <= self.sound_speed <= hi:
            log.warning(f"Sound speed {self.sound_speed} m/s is outside the plausible tissue range [{lo}, {hi}].")
        object.__setattr__(self, "samples", samples)

    @property
    def n_samples(self):
        return self.samples.shape[0]

    @property
    def n_lines(self):
        return self.samples.shape[1]

    def sample_depth(self, index):
        """Return the depth in cm of (fractional) axial sample ``index``."""
        time_us = np.asarray(index, dtype=float) / self.sampling_rate
        # m/s -> cm/us is 1e-4; two-way travel
        return self.sound_speed * 1e-4 * time_us / 2.0


@dataclass(frozen=True)
class SpectrumMap(object):
    """Power spectrum values S(f_l, z_i) shaped like the grid, all >= 0."""

    values: np.ndarray
    grid: model.SpectralGrid

    def __post_init__(self):
        """Validate the map against its grid."""
        values = np.array(self.values, dtype=float)
        self.grid.check_map(values, "SpectrumMap values")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise e.DataError("SpectrumMap values must be finite and >= 0.")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


def _window_starts(n_samples, window_len, overlap):
    hop = max(int(round(window_len * (1.0 - overlap))), 1)
    return np.arange(0, n_samples - window_len + 1, hop)


def power_spectrum(frame, window_len, overlap, band):
    """Return the lateral-averaged Hann periodogram of ``frame`` per depth window.

    Args:
        frame (RFFrame): RF data.
        window_len (int): Axial window length in samples.
        overlap (float): Fraction of overlap between consecutive windows, in [0, 1).
        band: Analysis frequencies (MHz), or a SpectralGrid whose ``freqs`` are used; output
            depths come from the window centers.
    """
    band_freqs = np.asarray(getattr(band, "freqs", band), dtype=float)
    window_len = int(window_len)
    if not 0 <= overlap < 1:
        raise e.ConfigError(f"overlap must be in [0, 1), got {overlap}.")
    if window_len < 2 or window_len > frame.n_samples:
        raise e.DataError(f"Window length {window_len} does not fit {frame.n_samples} axial samples.")

    nyquist = frame.sampling_rate / 2.0
    if band_freqs[-1] >= nyquist:
        raise e.DataError(f"Band up to {band_freqs[-1]} MHz exceeds the Nyquist frequency {nyquist} MHz.")

    starts = _window_starts(frame.n_samples, window_len, overlap)
    if starts.size < 2:
        raise e.DataError("RF frame yields fewer than 2 depth windows; shorten window_len or raise overlap.")

    rows = []
    for start in starts:
        segment = frame.samples[start:start + window_len, :]
        freqs, pxx = signal.periodogram(
            segment, fs=frame.sampling_rate, window="hann", detrend="constant", axis=0, scaling="spectrum"
        )
        mean_pxx = pxx.mean(axis=1)
        rows.append(np.interp(band_freqs, freqs, mean_pxx))

    centers = starts + (window_len - 1) / 2.0
    grid = model.SpectralGrid(freqs=band_freqs, depths=frame.sample_depth(centers))
    return SpectrumMap(values=np.stack(rows, axis=1), grid=grid)


def rf_to_columns(frame, lateral_block):
    """Return the frame split into consecutive blocks of ``lateral_block`` lines."""
    lateral_block = int(lateral_block)
    if lateral_block < 1:
        raise e.ConfigError(f"lateral_block must be >= 1, got {lateral_block}.")

    n_blocks = frame.n_lines // lateral_block
    if n_blocks == 0:
        raise e.DataError(f"Frame has {frame.n_lines} lines, fewer than one block of {lateral_block}.")
    if frame.n_lines % lateral_block:
        log.warning(f"Dropping {frame.n_lines % lateral_block} trailing lines that do not fill a block.")

    return [
        RFFrame(
            samples=frame.samples[:, k * lateral_block:(k + 1) * lateral_block],
            sampling_rate=frame.sampling_rate,
            sound_speed=frame.sound_speed,
        ) for k in range(n_blocks)
    ]


def rpm_log_ratio(sample, reference):
    """Return X = ln(S_s / S_r) on the shared grid."""
    if not sample.grid.same_as(reference.grid):
        raise e.GridMismatchError("Sample and reference spectra are on different grids.")

    bad = np.argwhere(reference.values <= 0)
    if bad.size:
        l, i = (int(v) for v in bad[0])
        raise e.NonPositiveValueError(
            f"Reference power is {reference.values[l, i]:g} at freq index {l} ({reference.grid.freqs[l]:g} MHz), "
            f"depth index {i} ({reference.grid.depths[i]:g} cm); {len(bad)} offending cells in total.",
            cell=(l, i),
        )

    with np.errstate(divide="ignore"):
        return np.log(sample.values / reference.values)


def lateral_average(maps):
    """Return the element-wise mean of a stack of SpectrumMaps on one grid."""
    maps = list(maps)
    if not maps:
        raise e.EmptyInputError("Cannot average an empty stack of spectra.")

    grid = maps[0].grid
    if any(not m.grid.same_as(grid) for m in maps[1:]):
        raise e.GridMismatchError("All spectra in a stack must share one grid.")

    # mean taken as deviations from the first map keeps identical stacks bit-exact
    stack = np.stack([m.values for m in maps])
    return SpectrumMap(values=stack[0] + (stack - stack[0]).mean(axis=0), grid=grid)


def log_spectrum(spectrum):
    """Return 10*log10 of the spectrum values (dB), the input of the weighting rules."""
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(spectrum.values)
