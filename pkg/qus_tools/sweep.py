#!/usr/bin/env python
"""Provide the regularization-weight ladder sweep and its doubling stability check.

Starting from the LSQ map (weight 0), every ladder weight is classified as too small
(map almost identical to LSQ), too large (maps constant in depth) or in between; the
candidate is the ladder midpoint between the two regimes, accepted when doubling it
barely changes the map.
"""
from dataclasses import dataclass, replace
import typing as typ

import numpy as np
import pandas as pd
from logzero import logger as log

from qus_tools import errors as e
from qus_tools.estimation import PARAMETER_MAPS, estimate_map

DEFAULT_LADDER = (0.1, 10.0, 1e2, 1e3, 1e4, 1e5, 1e6, 1e7, 1e8)
SWEEP_COLUMNS = ["weight", "verdict", "rel_diff_lsq", "spread_a", "spread_b", "spread_n", "rel_diff_candidate",
                 "converged"]


@dataclass(frozen=True)
class SweepPlan(object):
    """Weight ladder and the thresholds used to classify it."""

    ladder: typ.Tuple[float, ...] = DEFAULT_LADDER
    check_doubling: bool = True
    small_tol: float = 0.01
    constant_tol: float = 0.01
    stable_tol: float = 0.05

    def __post_init__(self):
        """Validate the ladder."""
        ladder = tuple(float(w) for w in self.ladder)
        if not ladder:
            raise e.ConfigError("Sweep ladder is empty.")
        if any(w <= 0 for w in ladder) or any(b <= a for a, b in zip(ladder[:-1], ladder[1:])):
            raise e.ConfigError(f"Sweep ladder must be positive and strictly increasing, got {ladder}.")
        object.__setattr__(self, "ladder", ladder)


@dataclass
class SweepResult(object):
    table: pd.DataFrame
    candidate: typ.Optional[float]
    stable: typ.Optional[bool]


@dataclass
class DoublingCheck(object):
    """Maps at twice a weight and how far they moved from the maps at the weight."""

    weight: float
    difference: float
    stable: bool
    maps: np.ndarray
    converged: bool


def with_strength(cfg, weight):
    """Return ``cfg`` with every regularization strength set to ``weight`` and rho sized per solve."""
    return replace(cfg, lam=weight, lam1=weight, lam2=weight, rho_auto=True)


def _parameter_stack(estimate):
    return np.stack([estimate.maps[name] for name in PARAMETER_MAPS])


def relative_difference(maps, reference):
    """Return ||maps - reference||_F / ||reference||_F (absolute when the reference is zero)."""
    scale = np.linalg.norm(reference)
    diff = np.linalg.norm(maps - reference)
    return float(diff / scale) if scale > 0 else float(diff)


def depth_spreads(maps, reference):
    """Return, per parameter, the largest per-column depth range over the reference's dynamic range."""
    spreads = []
    for values, ref in zip(maps, reference):
        dynamic = np.nanmax(ref) - np.nanmin(ref)
        spread = np.nanmax(np.nanmax(values, axis=0) - np.nanmin(values, axis=0))
        spreads.append(float(spread / dynamic) if dynamic > 0 else float(spread))
    return spreads


def _solve(x_stack, grid, weights, cfg, n_jobs):
    estimate = estimate_map(x_stack, grid, weights, cfg, n_jobs=n_jobs)
    return _parameter_stack(estimate), estimate.all_converged


def doubling_check(x_stack, grid, weights, cfg, weight, stable_tol=0.05, n_jobs=1, maps=None):
    """Return the DoublingCheck of ``weight``, stable when the maps at ``2 * weight`` move by < ``stable_tol``.

    ``maps`` reuses an existing solve at ``weight``.
    """
    if maps is None:
        maps, _ = _solve(x_stack, grid, weights, with_strength(cfg, weight), n_jobs)
    doubled, converged = _solve(x_stack, grid, weights, with_strength(cfg, 2.0 * weight), n_jobs)
    diff = relative_difference(doubled, maps)
    return DoublingCheck(
        weight=2.0 * weight, difference=diff, stable=diff < stable_tol, maps=doubled, converged=converged
    )


def candidate_index(verdicts):
    """Return the ladder index midway between the last too-small and first later too-large verdict."""
    small = [k for k, v in enumerate(verdicts) if v == "too_small"]
    lo = small[-1] if small else -1
    large = [k for k, v in enumerate(verdicts) if v == "too_large" and k > lo]
    hi = large[0] if large else len(verdicts)

    if hi - lo > 1:
        return (lo + hi) // 2
    log.warning("No ladder weight lies between the too-small and too-large regimes.")
    return hi if hi < len(verdicts) else None


def run_sweep(x_stack, grid, weights, cfg, plan=None, n_jobs=1):
    """Return the SweepResult of one frame's (n_columns, N_F, N_R) log-ratio stack."""
    plan = plan or SweepPlan()

    lsq_maps, _ = _solve(x_stack, grid, weights, replace(cfg, method="lsq"), n_jobs)
    rows = [(0.0, "lsq_anchor", 0.0) + tuple(depth_spreads(lsq_maps, lsq_maps)) + (np.nan, True)]

    verdicts = []
    ladder_maps = []
    for weight in plan.ladder:
        maps, converged = _solve(x_stack, grid, weights, with_strength(cfg, weight), n_jobs)
        diff = relative_difference(maps, lsq_maps)
        spreads = depth_spreads(maps, lsq_maps)

        if diff < plan.small_tol:
            verdict = "too_small"
        elif max(spreads) < plan.constant_tol:
            verdict = "too_large"
        else:
            verdict = "intermediate"
        log.debug(f"Sweep weight {weight:g}: {verdict} (rel diff {diff:.3g}, spreads {spreads}).")

        verdicts.append(verdict)
        ladder_maps.append(maps)
        rows.append((weight, verdict, diff) + tuple(spreads) + (np.nan, converged))

    index = candidate_index(verdicts)
    candidate = None if index is None else plan.ladder[index]
    stable = None
    if candidate is not None:
        row = list(rows[index + 1])
        row[1] = "candidate"
        rows[index + 1] = tuple(row)

        if plan.check_doubling:
            check = doubling_check(
                x_stack, grid, weights, cfg, candidate, plan.stable_tol, n_jobs, maps=ladder_maps[index]
            )
            stable = check.stable
            rows.append((
                check.weight, "stable" if stable else "unstable", relative_difference(check.maps, lsq_maps),
                *depth_spreads(check.maps, lsq_maps), check.difference, check.converged
            ))
            log.info(f"Candidate weight {candidate:g} is {'stable' if stable else 'unstable'} under doubling.")

    return SweepResult(table=pd.DataFrame(rows, columns=SWEEP_COLUMNS), candidate=candidate, stable=stable)
