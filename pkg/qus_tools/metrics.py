#!/usr/bin/env python
"""Provide ROI bias/variance metrics for attenuation and dB-scaled BSC maps."""
from dataclasses import dataclass

import numpy as np
import pandas as pd

from qus_tools import errors as e
from qus_tools.etl import is_subset

BSC_REFERENCE = 1e-4
VARIANCE_MODES = ("roi", "frames")
METRIC_COLUMNS = ["method", "roi", "parameter", "metric", "value"]


@dataclass(frozen=True)
class ROISpec(object):
    """A named rectangle of map cells: half-open depth and lateral index ranges."""

    name: str
    depth_start: int
    depth_stop: int
    lateral_start: int
    lateral_stop: int

    def __post_init__(self):
        """Validate the ranges."""
        if not (0 <= self.depth_start < self.depth_stop and 0 <= self.lateral_start < self.lateral_stop):
            raise e.EmptyInputError(f"ROI {self.name!r} has an empty or negative range.")

    @property
    def n_cells(self):
        return (self.depth_stop - self.depth_start) * (self.lateral_stop - self.lateral_start)

    def check(self, shape):
        """Raise unless the ROI lies inside a map of ``shape`` (N_R, n_columns)."""
        if self.depth_stop > shape[0] or self.lateral_stop > shape[1]:
            raise e.DimensionMismatchError(f"ROI {self.name!r} exceeds map bounds {shape}.")


def roi_values(values, roi):
    """Return the ROI cells of a (N_R, n_columns) map, flattened."""
    values = np.asarray(values, dtype=float)
    roi.check(values.shape)
    return values[roi.depth_start:roi.depth_stop, roi.lateral_start:roi.lateral_stop].ravel()


def frame_average(estimates):
    """Return the element-wise mean of per-frame maps."""
    estimates = [np.asarray(m, dtype=float) for m in estimates]
    if not estimates:
        raise e.EmptyInputError("Cannot average an empty list of frames.")
    if any(m.shape != estimates[0].shape for m in estimates):
        raise e.DimensionMismatchError("All frames must share one map shape.")

    stack = np.stack(estimates)
    return stack[0] + (stack - stack[0]).mean(axis=0)


def _sample_variance(values):
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return 0.0
    return float(np.var(values, ddof=1))


def bsc_to_db(values):
    """Return 10 log10(v / 1e-4) for strictly positive BSC values."""
    values = np.asarray(values, dtype=float)
    bad = np.argwhere(~(values > 0))
    if bad.size:
        cell = tuple(int(v) for v in bad[0])
        raise e.NonPositiveValueError(f"BSC value {values[cell]:g} at cell {cell} is not > 0.", cell=cell)
    return 10.0 * np.log10(values / BSC_REFERENCE)


def bias_variance_attenuation(m_roi, gt_alpha, frame_values=None):
    """Return (|mean(M) - GT|, variance) for attenuation over one ROI.

    The variance is taken over the ROI cells of M, or across frames of the per-frame
    ROI means when ``frame_values`` (one cell array per frame) is given.
    """
    m_roi = np.asarray(m_roi, dtype=float).ravel()
    if m_roi.size == 0:
        raise e.EmptyInputError("ROI is empty.")

    bias = abs(float(m_roi.mean()) - float(np.mean(gt_alpha)))
    if frame_values is None:
        return bias, _sample_variance(m_roi)
    return bias, _sample_variance([np.mean(v) for v in frame_values])


def bias_variance_bsc_db(m_bsc, gt_bsc, frame_values=None):
    """Return (bias, variance) of the BSC in dB re 1e-4 over one ROI."""
    m_db = bsc_to_db(np.asarray(m_bsc, dtype=float).ravel())
    if m_db.size == 0:
        raise e.EmptyInputError("ROI is empty.")
    gt_db = bsc_to_db(np.asarray(gt_bsc, dtype=float)).mean()

    bias = abs(float(m_db.mean()) - float(gt_db))
    if frame_values is None:
        return bias, _sample_variance(m_db)
    return bias, _sample_variance([bsc_to_db(v).mean() for v in frame_values])


def evaluate(estimates, truth, rois, variance_mode="roi"):
    """Return a tidy metrics table, one row per (method, ROI, parameter, metric).

    Args:
        estimates (dict): method name -> {"alpha_eff": [frame maps], "bsc_fc": [frame maps]}.
        truth (dict): {"alpha_eff": map, "bsc_fc": map} ground truth.
        rois (list): ROISpec objects.
        variance_mode (str): ``roi`` (variance over ROI cells of M) or ``frames``.
    """
    if not is_subset(variance_mode, VARIANCE_MODES):
        raise e.ConfigError(f"variance_mode must be one of {VARIANCE_MODES}, got {variance_mode!r}.")

    measures = (("alpha_eff", bias_variance_attenuation), ("bsc_fc", bias_variance_bsc_db))
    rows = []
    for method, frames in estimates.items():
        for parameter, measure in measures:
            per_frame = frames[parameter]
            averaged = frame_average(per_frame)
            if averaged.shape != np.shape(truth[parameter]):
                raise e.DimensionMismatchError(
                    f"{method} {parameter} map has shape {averaged.shape}, truth has {np.shape(truth[parameter])}."
                )
            for roi in rois:
                frame_values = [roi_values(m, roi) for m in per_frame] if variance_mode == "frames" else None
                bias, variance = measure(roi_values(averaged, roi), roi_values(truth[parameter], roi), frame_values)
                rows.append((method, roi.name, parameter, "bias", bias))
                rows.append((method, roi.name, parameter, "variance", variance))

    table = pd.DataFrame(rows, columns=METRIC_COLUMNS)
    return table.sort_values(METRIC_COLUMNS[:4], kind="mergesort").reset_index(drop=True)
