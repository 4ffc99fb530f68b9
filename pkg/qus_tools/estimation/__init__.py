"""Provide per-column estimation of parametric maps from log-ratio stacks."""
from dataclasses import dataclass, field, replace
import typing as typ

import numpy as np
from box import Box
from joblib import Parallel, delayed
from logzero import logger as log

from qus_tools import errors as e
from qus_tools import model

from . import assembly
from . import solvers

__all__ = [
    "assembly",
    "solvers",
    "METHODS",
    "MapEstimate",
    "estimate_map",
    "method_preset",
]

# The six compared techniques: estimator plus whether the data term is weighted.
METHODS = Box({
    "algebra": {"method": "l2l2", "weighted": False},
    "algebra_wd": {"method": "l2l2", "weighted": True},
    "admm_l2": {"method": "admm_l2", "weighted": False},
    "admm_l2_wd": {"method": "admm_l2", "weighted": True},
    "admm_l1l2": {"method": "admm_l1l2", "weighted": False},
    "admm_l1l2_wd": {"method": "admm_l1l2", "weighted": True},
})


def method_preset(name, cfg=None):
    """Return (SolverConfig, weighted) for one of the named METHODS."""
    if name not in METHODS:
        raise e.ConfigError(f"Unknown method preset {name!r}; choose from {sorted(METHODS)}.")
    preset = METHODS[name]
    cfg = cfg or solvers.SolverConfig()
    return replace(cfg, method=preset.method), preset.weighted


PARAMETER_MAPS = ("a", "b", "n")
PROPERTY_MAPS = ("alpha_eff", "beta", "nu", "bsc_fc")


@dataclass
class MapEstimate(object):
    """Per-column solutions assembled into (N_R, n_columns) maps."""

    params: typ.List[typ.Optional[model.ParamColumn]]
    reports: typ.List[typ.Optional[solvers.SolveReport]]
    failures: typ.Dict[int, str] = field(default_factory=dict)
    maps: Box = field(default_factory=Box)

    @property
    def n_columns(self):
        return len(self.params)

    @property
    def all_converged(self):
        return not self.failures and all(r.converged for r in self.reports if r is not None)


def _solve_one(column, x_map, grid, weights, cfg):
    try:
        params, report = solvers.solve_column(x_map, grid, weights, cfg)
        return column, params, report, None
    except e.QUSToolsError as err:
        return column, None, None, f"{type(err).__name__}: {err}"


def _column_weights(weights, column):
    if isinstance(weights, (list, tuple)):
        return weights[column]
    return weights


def estimate_map(x_stack, grid, weights, cfg, calib=None, center_frequency=None, n_jobs=1):
    """Return the MapEstimate of an (n_columns, N_F, N_R) log-ratio stack.

    Columns are solved independently, in parallel when ``n_jobs`` != 1; results are
    ordered by column index. A failing column is recorded in ``failures`` and left as
    NaN in the maps.

    Args:
        x_stack (np.ndarray): One log-ratio map per lateral column.
        grid (SpectralGrid): Axes shared by every column.
        weights: None, one WeightMap for all columns, or a list with one per column.
        cfg (SolverConfig): Estimator settings.
        calib (ReferenceCalibration): When given, property maps are reconstructed too.
        center_frequency (float): Frequency (MHz) of the ``bsc_fc`` map.
        n_jobs (int): joblib worker count.
    """
    x_stack = np.asarray(x_stack, dtype=float)
    if x_stack.ndim != 3 or x_stack.shape[1:] != grid.shape:
        raise e.DimensionMismatchError(f"x_stack must be (n_columns,) + {grid.shape}, got {x_stack.shape}.")

    results = Parallel(n_jobs=n_jobs)(
        delayed(_solve_one)(j, x_stack[j], grid, _column_weights(weights, j), cfg)
        for j in range(x_stack.shape[0])
    )
    results = sorted(results, key=lambda item: item[0])

    estimate = MapEstimate(params=[r[1] for r in results], reports=[r[2] for r in results])
    for column, _, _, failure in results:
        if failure is not None:
            log.warning(f"Column {column} failed: {failure}")
            estimate.failures[column] = failure

    shape = (grid.n_depths, estimate.n_columns)
    maps = Box({name: np.full(shape, np.nan) for name in PARAMETER_MAPS})
    if calib is not None:
        maps.update({name: np.full(shape, np.nan) for name in PROPERTY_MAPS})

    for j, params in enumerate(estimate.params):
        if params is None:
            continue
        for name in PARAMETER_MAPS:
            maps[name][:, j] = getattr(params, name)
        if calib is not None:
            field_ = model.reconstruct(params, calib)
            maps.alpha_eff[:, j] = field_.alpha_eff
            maps.beta[:, j] = field_.beta
            maps.nu[:, j] = field_.nu
            if center_frequency is not None:
                maps.bsc_fc[:, j] = field_.bsc(center_frequency)

    estimate.maps = maps
    return estimate
