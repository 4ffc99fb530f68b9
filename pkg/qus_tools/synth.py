#!/usr/bin/env python
"""Provide synthetic phantoms and noisy spectra with known ground truth."""
import typing as typ
from dataclasses import dataclass, field, replace

import numpy as np
from logzero import logger as log

from qus_tools import errors as e
from qus_tools import model
from qus_tools.spectra import SpectrumMap


@dataclass(frozen=True)
class Layer(object):
    """A depth interval [start, stop) with uniform acoustic properties."""

    start: float
    stop: float
    alpha_eff: float
    beta: float
    nu: float

    def __post_init__(self):
        """Validate the layer."""
        if not self.stop > self.start:
            raise e.ConfigError(f"Layer stop ({self.stop}) must exceed start ({self.start}).")
        if not self.beta > 0:
            raise e.NonPositiveValueError(f"Layer beta must be > 0, got {self.beta}.")


@dataclass(frozen=True)
class NoiseSpec(object):
    """Additive Gaussian noise on log spectra with std = sigma0 + slope_fz * f * z."""

    sigma0: float = 0.0
    slope_fz: float = 0.0
    seed: int = 0

    def __post_init__(self):
        """Validate the noise levels."""
        if self.sigma0 < 0 or self.slope_fz < 0:
            raise e.ConfigError(f"Noise levels must be >= 0, got sigma0={self.sigma0}, slope_fz={self.slope_fz}.")

    def std(self, grid):
        """Return the (N_F, N_R) noise standard deviation on ``grid``."""
        return self.sigma0 + self.slope_fz * grid.freqs[:, None] * grid.depths[None, :]

    def rng(self):
        return np.random.default_rng(self.seed)


@dataclass(frozen=True)
class PhantomSpec(object):
    """One lateral column of a phantom: layers tiling the grid's depth range."""

    layout: typ.Tuple[Layer, ...]
    grid: model.SpectralGrid
    background: model.ReferenceCalibration

    def __post_init__(self):
        """Validate that the layers tile the depth axis without overlap."""
        layout = tuple(sorted(self.layout, key=lambda layer: layer.start))
        if not layout:
            raise e.EmptyInputError("PhantomSpec layout is empty.")

        for left, right in zip(layout[:-1], layout[1:]):
            if not np.isclose(left.stop, right.start):
                raise e.ConfigError(f"Layers must be contiguous: {left.stop} != {right.start}.")

        depths = self.grid.depths
        if layout[0].start > depths[0] or layout[-1].stop < depths[-1]:
            raise e.ConfigError(
                f"Layers cover [{layout[0].start}, {layout[-1].stop}] but grid depths span "
                f"[{depths[0]}, {depths[-1]}]."
            )
        object.__setattr__(self, "layout", layout)

    @classmethod
    def homogeneous(cls, grid, background, alpha_eff=None, beta=None, nu=None):
        """Return a single-layer phantom, defaulting to the background's own properties."""
        layer = Layer(
            start=grid.depths[0],
            stop=grid.depths[-1],
            alpha_eff=background.alpha0_r if alpha_eff is None else alpha_eff,
            beta=background.beta_r if beta is None else beta,
            nu=background.nu_r if nu is None else nu,
        )
        return cls(layout=(layer, ), grid=grid, background=background)

    def layer_index(self):
        """Return, per depth, the index of the layer containing it (last layer closed)."""
        starts = np.array([layer.start for layer in self.layout])
        idx = np.searchsorted(starts, self.grid.depths, side="right") - 1
        return np.clip(idx, 0, len(self.layout) - 1)

    def field(self):
        """Return the ground-truth TissueField sampled on the grid depths."""
        idx = self.layer_index()
        props = np.array([(layer.alpha_eff, layer.beta, layer.nu) for layer in self.layout])[idx]
        return model.TissueField(alpha_eff=props[:, 0], beta=props[:, 1], nu=props[:, 2])

    def true_params(self):
        """Return the ParamColumn the estimators should recover."""
        return model.parameterize(self.field(), self.background)


def generate_column(spec, noise, n_frames):
    """Return an (n_frames, N_F, N_R) stack of noisy log-ratio maps for one column."""
    if n_frames < 1:
        raise e.ConfigError(f"n_frames must be >= 1, got {n_frames}.")

    exact = model.forward_log_ratio(spec.true_params(), spec.grid)
    std = noise.std(spec.grid)
    draws = noise.rng().standard_normal((n_frames, ) + spec.grid.shape)
    return exact[None, :, :] + draws * std[None, :, :]


def gaussian_response(freqs, center, bandwidth, gain=1.0):
    """Return a strictly positive Gaussian system response sampled at ``freqs``."""
    if not (bandwidth > 0 and gain > 0):
        raise e.ConfigError("Response bandwidth and gain must be > 0.")
    freqs = np.asarray(freqs, dtype=float)
    return gain * np.exp(-0.5 * ((freqs - center) / bandwidth)**2)


def generate_spectra_pair(spec, system_response, noise):
    """Return (sample, reference) SpectrumMaps following the reference phantom model.

    Both spectra share ``system_response`` so it cancels in their ratio. Noise is
    multiplicative log-normal, drawn independently for sample and reference.
    """
    grid = spec.grid
    response = np.asarray(system_response, dtype=float)
    if response.shape != (grid.n_freqs, ):
        raise e.DimensionMismatchError(f"system_response has shape {response.shape}, expected ({grid.n_freqs},).")
    if np.any(response <= 0):
        raise e.NonPositiveValueError("system_response must be > 0.", cell=int(np.argmin(response)))

    f = grid.freqs[:, None]
    z = grid.depths[None, :]
    calib = spec.background
    truth = spec.field()

    reference = response[:, None] * model.bsc_at(calib.beta_r, calib.nu_r, f) * model.attenuation_factor(
        model.db_to_np(calib.alpha0_r), f, z
    )
    sample = response[:, None] * truth.bsc(f) * model.attenuation_factor(model.db_to_np(truth.alpha_eff)[None, :], f, z)

    std = noise.std(grid)
    if np.any(std > 0):
        rng = noise.rng()
        sample = sample * np.exp(rng.standard_normal(grid.shape) * std)
        reference = reference * np.exp(rng.standard_normal(grid.shape) * std)

    return SpectrumMap(values=sample, grid=grid), SpectrumMap(values=reference, grid=grid)


def inject_specular(sample, depth_indices, boost):
    """Return a copy of ``sample`` with the listed depth rows multiplied by ``boost``."""
    if not boost > 1:
        raise e.ConfigError(f"Specular boost must be > 1, got {boost}.")

    indices = sorted(set(int(i) for i in depth_indices))
    n_depths = sample.grid.n_depths
    bad = [i for i in indices if not 0 <= i < n_depths]
    if bad:
        raise e.DataError(f"Depth indices out of range [0, {n_depths}): {bad}.")

    values = np.array(sample.values, dtype=float)
    values[:, indices] *= boost
    log.debug(f"Injected specular boost {boost:g} at depth rows {indices}.")
    return SpectrumMap(values=values, grid=sample.grid)


@dataclass(frozen=True)
class Inclusion(object):
    """A circular inclusion in the (depth, lateral) plane.

    Attributes:
        depth (float): Center depth, cm.
        lateral (float): Center lateral position, cm.
        radius (float): Radius, cm.
        bsc_db (float): BSC offset relative to the background, dB.
        alpha_eff (float): Optional attenuation override, dB/cm/MHz.
    """

    depth: float
    lateral: float
    radius: float
    bsc_db: float
    alpha_eff: typ.Optional[float] = None

    def contains(self, depths, lateral):
        return (depths - self.depth)**2 + (lateral - self.lateral)**2 <= self.radius**2


@dataclass(frozen=True)
class InclusionPhantom(object):
    """A 2-D phantom reduced to one PhantomSpec per lateral column."""

    grid: model.SpectralGrid
    calibration: model.ReferenceCalibration
    lateral: np.ndarray
    background_alpha: float
    background_beta: float
    background_nu: float
    inclusions: typ.Tuple[Inclusion, ...] = field(default_factory=tuple)

    def __post_init__(self):
        """Validate the lateral axis."""
        lateral = np.array(self.lateral, dtype=float, ndmin=1)
        if lateral.ndim != 1 or lateral.size < 1:
            raise e.EmptyInputError("InclusionPhantom needs at least one lateral position.")
        if np.any(np.diff(lateral) <= 0):
            raise e.ConfigError("Lateral positions must be strictly increasing.")
        if not self.background_beta > 0:
            raise e.NonPositiveValueError("background_beta must be > 0.")
        object.__setattr__(self, "lateral", lateral)
        object.__setattr__(self, "inclusions", tuple(self.inclusions))

    @property
    def n_columns(self):
        return self.lateral.size

    def truth_maps(self):
        """Return (alpha_eff, beta, nu) maps shaped (N_R, n_columns)."""
        shape = (self.grid.n_depths, self.n_columns)
        alpha = np.full(shape, float(self.background_alpha))
        beta = np.full(shape, float(self.background_beta))
        nu = np.full(shape, float(self.background_nu))

        depths, lateral = np.meshgrid(self.grid.depths, self.lateral, indexing="ij")
        for inclusion in self.inclusions:
            inside = inclusion.contains(depths, lateral)
            beta[inside] = self.background_beta * 10**(inclusion.bsc_db / 10.0)
            if inclusion.alpha_eff is not None:
                alpha[inside] = inclusion.alpha_eff
        return alpha, beta, nu

    def column_spec(self, column):
        """Return the PhantomSpec of one lateral column, runs of equal properties merged into layers."""
        alpha, beta, nu = (m[:, column] for m in self.truth_maps())
        depths = self.grid.depths

        props = np.stack([alpha, beta, nu], axis=1)
        changes = np.flatnonzero(np.any(props[1:] != props[:-1], axis=1)) + 1
        starts = np.concatenate([[0], changes])
        stops = np.concatenate([changes, [depths.size]])

        layers = []
        for first, last in zip(starts, stops):
            lo = depths[0] if first == 0 else 0.5 * (depths[first - 1] + depths[first])
            hi = depths[-1] if last == depths.size else 0.5 * (depths[last - 1] + depths[last])
            layers.append(Layer(start=lo, stop=hi, alpha_eff=alpha[first], beta=beta[first], nu=nu[first]))

        return PhantomSpec(layout=tuple(layers), grid=self.grid, background=self.calibration)


def generate_columns(specs, noise, n_frames):
    """Return an (n_frames, n_columns, N_F, N_R) stack of column PhantomSpecs; column j uses seed + j."""
    specs = list(specs)
    if not specs:
        raise e.EmptyInputError("Need at least one column spec.")
    columns = [generate_column(spec, replace(noise, seed=noise.seed + j), n_frames) for j, spec in enumerate(specs)]
    return np.stack(columns, axis=1)


def generate_map(phantom, noise, n_frames):
    """Return the (n_frames, n_columns, N_F, N_R) log-ratio stack of an InclusionPhantom."""
    return generate_columns((phantom.column_spec(j) for j in range(phantom.n_columns)), noise, n_frames)
