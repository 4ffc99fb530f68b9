#!/usr/bin/env python
"""Provide the domain types and forward physics of the reference phantom method.

Units used throughout the package:

* frequency in MHz
* depth in cm
* attenuation slope in Np/cm/MHz internally, dB/cm/MHz at every file or report boundary
* backscatter coefficient in 1/(cm sr)
"""
from dataclasses import dataclass

import numpy as np

from qus_tools import errors as e

NP_PER_DB = np.log(10.0) / 20.0
DB_PER_NP = 20.0 / np.log(10.0)


def db_to_np(alpha_db):
    """Return attenuation converted from dB/cm/MHz to Np/cm/MHz."""
    value = np.asarray(alpha_db, dtype=float) * NP_PER_DB
    return float(value) if value.ndim == 0 else value


def np_to_db(alpha_np):
    """Return attenuation converted from Np/cm/MHz to dB/cm/MHz."""
    value = np.asarray(alpha_np, dtype=float) * DB_PER_NP
    return float(value) if value.ndim == 0 else value


def _as_vector(values, name):
    vector = np.array(values, dtype=float, ndmin=1)
    if vector.ndim != 1:
        raise e.DimensionMismatchError(f"`{name}` must be one-dimensional, got shape {vector.shape}.")
    vector.setflags(write=False)
    return vector


@dataclass(frozen=True)
class SpectralGrid(object):
    """Frequency bins (MHz) and depth positions (cm) indexing every map."""

    freqs: np.ndarray
    depths: np.ndarray

    def __post_init__(self):
        """Validate and freeze the axes."""
        freqs = _as_vector(self.freqs, "freqs")
        depths = _as_vector(self.depths, "depths")

        for name, axis in (("freqs", freqs), ("depths", depths)):
            if axis.size < 2:
                raise e.DataError(f"SpectralGrid needs at least 2 {name}, got {axis.size}.")
            if not np.all(np.isfinite(axis)) or np.any(axis <= 0):
                raise e.NonPositiveValueError(f"SpectralGrid {name} must be finite and > 0.")
            if np.any(np.diff(axis) <= 0):
                raise e.DataError(f"SpectralGrid {name} must be strictly increasing.")

        object.__setattr__(self, "freqs", freqs)
        object.__setattr__(self, "depths", depths)

    @classmethod
    def uniform(cls, freq_min, freq_max, n_freqs, depth_min, depth_max, n_depths):
        """Return a grid with evenly spaced axes."""
        return cls(
            freqs=np.linspace(freq_min, freq_max, n_freqs),
            depths=np.linspace(depth_min, depth_max, n_depths),
        )

    @property
    def n_freqs(self):
        return self.freqs.size

    @property
    def n_depths(self):
        return self.depths.size

    @property
    def shape(self):
        """Shape of every map on this grid: (N_F, N_R)."""
        return (self.n_freqs, self.n_depths)

    def same_as(self, other):
        """Return True if ``other`` has identical axes."""
        return (
            self.shape == other.shape and np.array_equal(self.freqs, other.freqs)
            and np.array_equal(self.depths, other.depths)
        )

    def check_map(self, values, name="map"):
        """Raise unless ``values`` has this grid's (N_F, N_R) shape."""
        if np.shape(values) != self.shape:
            raise e.DimensionMismatchError(f"`{name}` has shape {np.shape(values)}, grid expects {self.shape}.")


@dataclass(frozen=True)
class ReferenceCalibration(object):
    """Known acoustic properties of the reference phantom.

    Attributes:
        alpha0_r (float): Attenuation slope in dB/cm/MHz.
        beta_r (float): BSC power-law magnitude in 1/(cm sr MHz^nu).
        nu_r (float): BSC power-law exponent.
    """

    alpha0_r: float
    beta_r: float
    nu_r: float

    def __post_init__(self):
        """Validate the calibration values."""
        if not self.beta_r > 0:
            raise e.NonPositiveValueError(f"beta_r must be > 0, got {self.beta_r}.")
        if not self.alpha0_r >= 0:
            raise e.DataError(f"alpha0_r must be >= 0, got {self.alpha0_r}.")


@dataclass(frozen=True)
class ParamColumn(object):
    """Solver unknowns for one lateral column: a (Np/cm/MHz), b and n per depth."""

    a: np.ndarray
    b: np.ndarray
    n: np.ndarray

    def __post_init__(self):
        """Validate and freeze the three parameter vectors."""
        a, b, n = (_as_vector(getattr(self, name), name) for name in ("a", "b", "n"))
        if not a.size == b.size == n.size:
            raise e.DimensionMismatchError(f"a, b, n lengths differ: {a.size}, {b.size}, {n.size}.")
        if not all(np.all(np.isfinite(v)) for v in (a, b, n)):
            raise e.DataError("ParamColumn entries must be finite.")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "n", n)

    @property
    def n_depths(self):
        return self.a.size

    def stacked(self):
        """Return x = [a_1..a_N, b_1..b_N, n_1..n_N]."""
        return np.concatenate([self.a, self.b, self.n])

    @classmethod
    def from_stacked(cls, x):
        """Return a ParamColumn from the stacked vector layout of ``stacked``."""
        x = np.asarray(x, dtype=float)
        if x.ndim != 1 or x.size % 3:
            raise e.DimensionMismatchError(f"Stacked parameter vector must have length 3*N_R, got {x.shape}.")
        a, b, n = np.split(x, 3)
        return cls(a=a, b=b, n=n)

    @classmethod
    def zeros(cls, n_depths):
        return cls(a=np.zeros(n_depths), b=np.zeros(n_depths), n=np.zeros(n_depths))


@dataclass(frozen=True)
class TissueField(object):
    """Per-depth acoustic properties: alpha_eff (dB/cm/MHz), beta, nu."""

    alpha_eff: np.ndarray
    beta: np.ndarray
    nu: np.ndarray

    def __post_init__(self):
        """Validate and freeze the property vectors."""
        alpha, beta, nu = (_as_vector(getattr(self, name), name) for name in ("alpha_eff", "beta", "nu"))
        if not alpha.size == beta.size == nu.size:
            raise e.DimensionMismatchError("alpha_eff, beta and nu must share one length.")
        if np.any(beta <= 0):
            raise e.NonPositiveValueError("TissueField beta entries must be > 0.", cell=int(np.argmin(beta)))
        object.__setattr__(self, "alpha_eff", alpha)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "nu", nu)

    @property
    def n_depths(self):
        return self.alpha_eff.size

    def bsc(self, f):
        """Return the per-depth backscatter coefficient at frequency ``f``."""
        return bsc_at(self.beta, self.nu, f)

    @classmethod
    def uniform(cls, n_depths, alpha_eff, beta, nu):
        return cls(
            alpha_eff=np.full(n_depths, float(alpha_eff)),
            beta=np.full(n_depths, float(beta)),
            nu=np.full(n_depths, float(nu)),
        )


def forward_log_ratio(params, grid):
    """Return the (N_F, N_R) log-ratio map X[l, i] = -4 a_i f_l z_i + b_i + n_i ln f_l.

    Args:
        params (ParamColumn): Unknowns per depth, ``a`` in Np/cm/MHz.
        grid (SpectralGrid): Frequencies and depths to evaluate on.
    """
    if params.n_depths != grid.n_depths:
        raise e.DimensionMismatchError(f"ParamColumn has {params.n_depths} depths, grid has {grid.n_depths}.")

    f = grid.freqs[:, None]
    z = grid.depths[None, :]
    return -4.0 * params.a[None, :] * f * z + params.b[None, :] + params.n[None, :] * np.log(f)


def bsc_at(beta, nu, f):
    """Return the power-law backscatter coefficient beta * f**nu."""
    beta = np.asarray(beta, dtype=float)
    f = np.asarray(f, dtype=float)
    if np.any(beta <= 0):
        raise e.NonPositiveValueError("beta must be > 0.")
    if np.any(f <= 0):
        raise e.NonPositiveValueError("frequency must be > 0.")

    value = beta * np.power(f, nu)
    return float(value) if np.ndim(value) == 0 else value


def attenuation_factor(alpha_np, f, z):
    """Return the two-way power attenuation exp(-4 f alpha z), alpha in Np/cm/MHz."""
    value = np.exp(-4.0 * np.asarray(f, dtype=float) * np.asarray(alpha_np, dtype=float) * np.asarray(z, dtype=float))
    return float(value) if np.ndim(value) == 0 else value


def reconstruct(params, calib):
    """Return the TissueField estimate implied by solver unknowns and the reference calibration."""
    return TissueField(
        alpha_eff=np_to_db(params.a) + calib.alpha0_r,
        beta=calib.beta_r * np.exp(params.b),
        nu=calib.nu_r + params.n,
    )


def parameterize(field, calib):
    """Return the solver unknowns that ``reconstruct`` maps back onto ``field``."""
    return ParamColumn(
        a=db_to_np(field.alpha_eff - calib.alpha0_r),
        b=np.log(field.beta / calib.beta_r),
        n=field.nu - calib.nu_r,
    )


def log_ratio_from_spectra_model(field, calib, grid):
    """Return ln(S_s / S_r) built from the power-law BSC and exponential attenuation models.

    Evaluates the physical spectra ratio directly rather than the linearized form, so
    comparing against ``forward_log_ratio(parameterize(field, calib), grid)`` checks the
    identity between the two.
    """
    if field.n_depths != grid.n_depths:
        raise e.DimensionMismatchError(f"TissueField has {field.n_depths} depths, grid has {grid.n_depths}.")

    f = grid.freqs[:, None]
    z = grid.depths[None, :]
    sample = bsc_at(field.beta[None, :], field.nu[None, :], f) * attenuation_factor(
        db_to_np(field.alpha_eff)[None, :], f, z
    )
    reference = bsc_at(calib.beta_r, calib.nu_r, f) * attenuation_factor(db_to_np(calib.alpha0_r), f, z)
    return np.log(sample / reference)
