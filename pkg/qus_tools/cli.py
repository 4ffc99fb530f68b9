# -*- coding: utf-8 -*-
"""Console script for qus_tools.

Every subcommand reads its settings from one ``[command]`` section of the file given
by ``--config``. Relative paths in a config resolve against the config's directory.
Exit codes: 0 success, 1 usage or config error, 2 data error, 3 convergence failure
under ``--strict``.
"""
import logging
import sys
from dataclasses import dataclass
from functools import partial
from pathlib import Path

import click
import logzero
import numpy as np
import pandas as pd
from box import Box
from logzero import logger as log

import qus_tools
from qus_tools import errors as e
from qus_tools import metrics, model, spectra, synth, sweep, weighting
from qus_tools.estimation import PARAMETER_MAPS, PROPERTY_MAPS, METHODS, estimate_map, method_preset
from qus_tools.estimation.solvers import (
    DATA_MODE_ALIASES, DATA_MODES, PROX_VARIANT_ALIASES, PROX_VARIANTS, SOLVERS, SolverConfig
)
from qus_tools.etl import config_hash, loaders, recast

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_CONVERGENCE = 3

REQUIRED = object()

# Background and reference phantom constants of the calibrated tissue-mimicking phantom
PHANTOM_ALPHA = 0.6035
PHANTOM_BETA = 2.9966e-6
PHANTOM_NU = 3.4281
CENTER_FREQUENCY = 8.0

LAYER_FIELDS = ("start", "stop", "alpha_eff", "beta", "nu")
INCLUSION_FIELDS = ("depth", "lateral", "radius", "bsc_db")
REPORT_COLUMNS = [
    "frame", "column", "solver", "data_mode", "prox_variant", "iterations", "primal_residual", "dual_residual",
    "objective", "converged", "rho", "rho_l2", "condition", "polished", "failure"
]

# Keys that change where outputs go or how fast they are made, but not what they contain
UNHASHED_KEYS = ("out", "n_jobs")


def _choice(choices):
    return partial(recast.as_choice, choices=choices)


def _records(fields):
    return partial(recast.as_records, fields=fields)


COMMON_KEYS = {
    "out": (recast.as_string, "qus_out"),
    "n_jobs": (recast.as_integer, 1),
}

CALIBRATION_DEFAULTS = {
    "reference_alpha0": PHANTOM_ALPHA,
    "reference_beta": PHANTOM_BETA,
    "reference_nu": PHANTOM_NU,
    "center_frequency": CENTER_FREQUENCY,
}

SYNTH_KEYS = {
    **COMMON_KEYS,
    "freq_min": (recast.as_float, 4.0),
    "freq_max": (recast.as_float, 9.0),
    "n_freqs": (recast.as_integer, 24),
    "depth_min": (recast.as_float, 0.5),
    "depth_max": (recast.as_float, 3.5),
    "n_depths": (recast.as_integer, 40),
    "lateral_min": (recast.as_float, 0.0),
    "lateral_max": (recast.as_float, 3.8),
    "n_columns": (recast.as_integer, 20),
    **{key: (recast.as_float, value) for key, value in CALIBRATION_DEFAULTS.items()},
    "background_alpha": (recast.as_float, PHANTOM_ALPHA),
    "background_beta": (recast.as_float, PHANTOM_BETA),
    "background_nu": (recast.as_float, PHANTOM_NU),
    "layers": (_records(LAYER_FIELDS), []),
    "inclusions": (_records(INCLUSION_FIELDS), []),
    "sigma0": (recast.as_float, 0.0),
    "slope_fz": (recast.as_float, 0.0),
    "seed": (recast.as_integer, 0),
    "n_frames": (recast.as_integer, 1),
    "response_center": (recast.as_float, CENTER_FREQUENCY),
    "response_bandwidth": (recast.as_float, 3.0),
    "response_gain": (recast.as_float, 1e8),
    "specular_depths": (recast.as_integer_list, []),
    "specular_boost": (recast.as_float, 100.0),
}

SPECTRA_KEYS = {
    "dataset": (recast.as_string, None),
    "sample_spectra": (recast.as_string, None),
    "reference_spectra": (recast.as_string, None),
}

WEIGHT_KEYS = {
    "band_fraction": (recast.as_float, 0.8),
    "upper_fraction": (recast.as_float, 0.9),
    "lower_fraction": (recast.as_float, 1.67),
    "floor": (recast.as_float, 0.05),
    "combine_mode": (_choice(weighting.COMBINE_MODES), "both"),
    "apply_band": (recast.as_bool, False),
}

ESTIMATE_KEYS = {
    **COMMON_KEYS,
    **SPECTRA_KEYS,
    **WEIGHT_KEYS,
    "x_stack": (recast.as_string, None),
    "sample_rf": (recast.as_string, None),
    "reference_rf": (recast.as_string, None),
    "sampling_rate": (recast.as_float, None),
    "sound_speed": (recast.as_float, 1540.0),
    "window_len": (recast.as_integer, 64),
    "overlap": (recast.as_float, 0.5),
    "lateral_block": (recast.as_integer, 8),
    "freq_min": (recast.as_float, None),
    "freq_max": (recast.as_float, None),
    "n_freqs": (recast.as_integer, 32),
    "method": (_choice(tuple(METHODS)), None),
    "solver": (_choice(SOLVERS), "admm_l1l2"),
    "lam": (recast.as_float, 0.0),
    "lam1": (recast.as_float, 0.0),
    "lam2": (recast.as_float, 0.0),
    "rho": (recast.as_float, 1.0),
    "rho_auto": (recast.as_bool, False),
    "max_iter": (recast.as_integer, 5000),
    "eps_abs": (recast.as_float, 1e-6),
    "eps_rel": (recast.as_float, 1e-4),
    "data_mode": (_choice(DATA_MODES + tuple(DATA_MODE_ALIASES)), "residual"),
    "prox_variant": (_choice(PROX_VARIANTS + tuple(PROX_VARIANT_ALIASES)), "derived"),
    "w_a": (recast.as_float, 1.0),
    "w_b": (recast.as_float, 1.0),
    "w_n": (recast.as_float, 1.0),
    "l2_params": (recast.as_string_list, ["a"]),
    "weighting": (_choice(("none", "spectra")), "none"),
    **{key: (recast.as_float, None) for key in CALIBRATION_DEFAULTS},
}

WEIGHTS_KEYS = {**COMMON_KEYS, **SPECTRA_KEYS, **WEIGHT_KEYS}

EVALUATE_KEYS = {
    **COMMON_KEYS,
    "estimates": (recast.as_mapping, REQUIRED),
    "truth": (recast.as_string, REQUIRED),
    "rois": (recast.as_string, REQUIRED),
    "variance_mode": (_choice(metrics.VARIANCE_MODES), "roi"),
}

SWEEP_KEYS = {
    **ESTIMATE_KEYS,
    "ladder": (recast.as_float_list, list(sweep.DEFAULT_LADDER)),
    "check_doubling": (recast.as_bool, True),
    "frame": (recast.as_integer, 0),
}


def render(value):
    """Return the canonical config text of a resolved value; recasting it gives the value back."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, dict):
        return ", ".join(f"{key}={item}" for key, item in value.items())
    if isinstance(value, (list, tuple)):
        if value and isinstance(value[0], dict):
            return "; ".join(" ".join(render(item) for item in record.values()) for record in value)
        return ", ".join(render(item) for item in value)
    return str(value)


def resolve_section(command, raw, keys):
    """Return a Box of typed settings from the raw strings of one config section."""
    unknown = sorted(set(raw) - set(keys))
    if unknown:
        raise e.ConfigError(f"Unknown keys in [{command}]: {', '.join(unknown)}.")

    settings = Box()
    for key, (cast, default) in keys.items():
        if key in raw:
            settings[key] = cast(raw[key])
        elif default is REQUIRED:
            raise e.ConfigError(f"[{command}] needs a value for `{key}`.")
        else:
            settings[key] = default
    return settings


@dataclass(frozen=True)
class RunConfig(object):
    """Resolved settings of one subcommand and the directory relative paths resolve against."""

    command: str
    settings: Box
    base_dir: Path

    @property
    def canonical(self):
        """Return the settings that determine the outputs, rendered as config text."""
        return {
            key: render(value)
            for key, value in self.settings.items() if value is not None and key not in UNHASHED_KEYS
        }

    @property
    def config_hash(self):
        return config_hash(self.canonical)

    def path(self, key):
        """Return the resolved path of a path-valued key, None when unset; the path must exist."""
        value = self.settings[key]
        if value is None:
            return None
        path = recast.as_path(value, self.base_dir)
        if not path.exists():
            raise e.ConfigError(f"`{key}` points to a missing path: {path}")
        return path

    def out_dir(self):
        path = recast.as_path(self.settings.out, self.base_dir)
        try:
            path.mkdir(parents=True, exist_ok=True)
        except OSError as err:
            raise e.ConfigError(f"Cannot create output directory {path}: {err}") from err
        return path

    def stamp(self):
        """Return the header fields every output file of this run carries."""
        return {"command": self.command, "config": self.config_hash}


def load_run(ctx, command, keys):
    """Return the RunConfig of ``command`` with the global --seed and --out overrides applied."""
    opts = ctx.obj
    if opts.config is None:
        raise e.ConfigError("No config file given; pass --config PATH.")

    sections = loaders.read_config(opts.config)
    if command not in sections:
        raise e.ConfigError(f"{opts.config} has no [{command}] section.")

    raw = dict(sections[command])
    if opts.seed is not None:
        if "seed" in keys:
            raw["seed"] = str(opts.seed)
        else:
            log.warning(f"--seed has no effect on `{command}`.")
    if opts.out is not None:
        raw["out"] = str(Path(opts.out).resolve())

    settings = resolve_section(command, raw, keys)
    return RunConfig(command=command, settings=settings, base_dir=Path(opts.config).resolve().parent)


# Input assembly shared by several commands
def _dataset_file(run, key, name):
    """Return the explicit path of ``key`` or, failing that, ``name`` inside the dataset directory."""
    path = run.path(key)
    if path is not None:
        return path
    dataset = run.path("dataset") if "dataset" in run.settings else None
    if dataset is None:
        return None
    candidate = dataset / name
    return candidate if candidate.is_file() else None


def _dataset_manifest(run):
    dataset = run.path("dataset")
    if dataset is None or not (dataset / "manifest.ini").is_file():
        return Box()
    return loaders.read_manifest(dataset / "manifest.ini").get("synth", Box())


def _fill_calibration(run):
    """Fill unset calibration keys from the dataset manifest, else from the phantom defaults."""
    manifest = _dataset_manifest(run)
    for key, default in CALIBRATION_DEFAULTS.items():
        if run.settings[key] is None:
            run.settings[key] = recast.as_float(manifest[key]) if key in manifest else default
    s = run.settings
    calib = model.ReferenceCalibration(alpha0_r=s.reference_alpha0, beta_r=s.reference_beta, nu_r=s.reference_nu)
    return calib, s.center_frequency


def _spectra_pair(run, required=False):
    """Return (sample, reference) SpectrumMaps from explicit paths or the dataset; None when absent."""
    sample_path = _dataset_file(run, "sample_spectra", "sample_spectra.csv")
    reference_path = _dataset_file(run, "reference_spectra", "reference_spectra.csv")
    if sample_path is None or reference_path is None:
        if required:
            raise e.ConfigError("Need `sample_spectra` and `reference_spectra`, or a `dataset` holding both.")
        return None, None

    sample = spectra.SpectrumMap(*loaders.read_grid_map(sample_path))
    reference = spectra.SpectrumMap(*loaders.read_grid_map(reference_path))
    return sample, reference


def _rf_inputs(run):
    """Return (stack, grid, sample, reference) computed from sample and reference RF frames."""
    s = run.settings
    for key in ("sampling_rate", "freq_min", "freq_max"):
        if s[key] is None:
            raise e.ConfigError(f"RF input needs a value for `{key}`.")

    sample_frame = loaders.read_rf(run.path("sample_rf"), s.sampling_rate, s.sound_speed)
    reference_frame = loaders.read_rf(run.path("reference_rf"), s.sampling_rate, s.sound_speed)
    band = np.linspace(s.freq_min, s.freq_max, s.n_freqs)

    columns = [
        spectra.power_spectrum(block, s.window_len, s.overlap, band)
        for block in spectra.rf_to_columns(sample_frame, s.lateral_block)
    ]
    reference = spectra.power_spectrum(reference_frame, s.window_len, s.overlap, band)
    stack = np.stack([spectra.rpm_log_ratio(column, reference) for column in columns])[None]
    return stack, reference.grid, spectra.lateral_average(columns), reference


def _log_ratio_inputs(run):
    """Return (stack, grid, sample, reference) from an X stack file or from RF frames."""
    stack_path = _dataset_file(run, "x_stack", "x_stack.csv")
    if stack_path is not None:
        stack, grid = loaders.read_stack(stack_path)
        sample, reference = _spectra_pair(run)
        return stack, grid, sample, reference

    if run.settings.sample_rf is not None and run.settings.reference_rf is not None:
        return _rf_inputs(run)
    raise e.ConfigError("Need `dataset`, `x_stack`, or `sample_rf` plus `reference_rf`.")


def weight_config(settings):
    return weighting.WeightConfig(
        band_fraction=settings.band_fraction,
        upper_fraction=settings.upper_fraction,
        lower_fraction=settings.lower_fraction,
        floor=settings.floor,
        combine_mode=settings.combine_mode,
        apply_band=settings.apply_band,
    )


def solver_config(settings):
    """Return (SolverConfig, weighted) from estimate settings; a ``method`` preset overrides the solver."""
    cfg = SolverConfig(
        method=settings.solver,
        rho=settings.rho,
        rho_auto=settings.rho_auto,
        lam=settings.lam,
        lam1=settings.lam1,
        lam2=settings.lam2,
        w_a=settings.w_a,
        w_b=settings.w_b,
        w_n=settings.w_n,
        max_iter=settings.max_iter,
        eps_abs=settings.eps_abs,
        eps_rel=settings.eps_rel,
        data_mode=settings.data_mode,
        prox_variant=settings.prox_variant,
        l2_params=tuple(settings.l2_params),
    )
    weighted = settings.weighting == "spectra"
    if settings.method is not None:
        cfg, weighted = method_preset(settings.method, cfg)
        log.info(f"Method preset {settings.method}: solver {cfg.method}, weighted data term: {weighted}.")
    return cfg, weighted


def _data_weights(run, grid, sample, reference, weighted):
    if not weighted:
        return None
    if sample is None or reference is None:
        raise e.ConfigError("A weighted data term needs sample and reference spectra.")
    if not (sample.grid.same_as(grid) and reference.grid.same_as(grid)):
        raise e.GridMismatchError("Spectra and log-ratio stack are on different grids.")
    return weighting.build_data_weights(sample, reference, weight_config(run.settings)).w_d_floored


def _report_rows(frame, estimate, cfg):
    rows = []
    for column, report in enumerate(estimate.reports):
        if report is None:
            summary = {
                "solver": cfg.method,
                "data_mode": cfg.data_mode,
                "prox_variant": cfg.prox_variant,
                "iterations": 0,
                "converged": False,
            }
        else:
            summary = report.summary()
        rows.append({"frame": frame, "column": column, **summary, "failure": estimate.failures.get(column, "")})
    return rows


# Commands
class QUSGroup(click.Group):
    """Click group that maps library errors onto the documented exit codes."""

    def main(self, args=None, prog_name=None, complete_var=None, standalone_mode=True, **extra):
        """Run the group and exit with the code of the outcome."""
        try:
            rv = super().main(
                args=args, prog_name=prog_name, complete_var=complete_var, standalone_mode=False, **extra
            )
        except click.ClickException as err:
            err.show()
            sys.exit(EXIT_CONFIG)
        except click.Abort:
            click.echo("Aborted!", err=True)
            sys.exit(EXIT_CONFIG)
        except e.ConvergenceError as err:
            click.echo(f"Error: {err}", err=True)
            sys.exit(EXIT_CONVERGENCE)
        except e.ConfigError as err:
            click.echo(f"Error: {err}", err=True)
            sys.exit(EXIT_CONFIG)
        except e.QUSToolsError as err:
            click.echo(f"Error: {type(err).__name__}: {err}", err=True)
            sys.exit(EXIT_DATA)
        sys.exit(rv if isinstance(rv, int) else EXIT_OK)


@click.group(cls=QUSGroup)
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
              help="Config file with one [command] section per subcommand.")
@click.option("--seed", type=int, default=None, help="Override the `seed` of the active section.")
@click.option("--strict", is_flag=True, default=False, help="Exit with code 3 if any column solve did not converge.")
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Override the output directory.")
@click.option("-v", "--verbose", is_flag=True, default=False, help="Log debug messages.")
@click.option("-q", "--quiet", is_flag=True, default=False, help="Log warnings and errors only.")
@click.version_option(version=qus_tools.__version__)
@click.pass_context
def cli(ctx, config_path, seed, strict, out, verbose, quiet):
    """Estimate attenuation and backscatter maps from reference-phantom-normalized spectra."""
    if verbose:
        logzero.loglevel(logging.DEBUG)
    elif quiet:
        logzero.loglevel(logging.WARNING)
    else:
        logzero.loglevel(logging.INFO)
    ctx.obj = Box(config=config_path, seed=seed, strict=strict, out=out)


def _phantom_columns(s, grid, calib):
    """Return the per-column PhantomSpecs and the (alpha_eff, beta, nu) truth maps."""
    if s.layers:
        if s.inclusions:
            raise e.ConfigError("`layers` and `inclusions` cannot be combined.")
        spec = synth.PhantomSpec(
            layout=tuple(synth.Layer(**record) for record in s.layers), grid=grid, background=calib
        )
        field = spec.field()
        truth = tuple(np.tile(v[:, None], (1, s.n_columns)) for v in (field.alpha_eff, field.beta, field.nu))
        return [spec] * s.n_columns, truth

    phantom = synth.InclusionPhantom(
        grid=grid,
        calibration=calib,
        lateral=np.linspace(s.lateral_min, s.lateral_max, s.n_columns),
        background_alpha=s.background_alpha,
        background_beta=s.background_beta,
        background_nu=s.background_nu,
        inclusions=tuple(synth.Inclusion(**record) for record in s.inclusions),
    )
    return [phantom.column_spec(j) for j in range(phantom.n_columns)], phantom.truth_maps()


@cli.command("synth")
@click.pass_context
def synth_cmd(ctx):
    """Generate a synthetic dataset with known ground truth."""
    run = load_run(ctx, "synth", SYNTH_KEYS)
    s = run.settings
    if s.n_columns < 1:
        raise e.ConfigError(f"n_columns must be >= 1, got {s.n_columns}.")

    grid = model.SpectralGrid.uniform(s.freq_min, s.freq_max, s.n_freqs, s.depth_min, s.depth_max, s.n_depths)
    calib = model.ReferenceCalibration(alpha0_r=s.reference_alpha0, beta_r=s.reference_beta, nu_r=s.reference_nu)
    noise = synth.NoiseSpec(sigma0=s.sigma0, slope_fz=s.slope_fz, seed=s.seed)

    specs, (alpha, beta, nu) = _phantom_columns(s, grid, calib)
    stack = synth.generate_columns(specs, noise, s.n_frames)

    response = synth.gaussian_response(grid.freqs, s.response_center, s.response_bandwidth, s.response_gain)
    pairs = [synth.generate_spectra_pair(spec, response, synth.NoiseSpec()) for spec in specs]
    samples = [pair[0] for pair in pairs]
    if s.specular_depths:
        # a specular row brightens the sample alone, so its log ratio shifts by ln(boost)
        samples = [synth.inject_specular(sample, s.specular_depths, s.specular_boost) for sample in samples]
        stack = stack.copy()
        stack[..., sorted(set(s.specular_depths))] += np.log(s.specular_boost)
    sample = spectra.lateral_average(samples)
    reference = pairs[0][1]

    out = run.out_dir()
    stamp = run.stamp()
    loaders.write_stack(out / "x_stack.csv", stack, grid, **stamp)
    truth = {"alpha_eff": alpha, "beta": beta, "nu": nu, "bsc_fc": beta * s.center_frequency**nu}
    for name, values in truth.items():
        loaders.write_param_map(out / f"truth_{name}.csv", values, grid.depths, **stamp)
    loaders.write_grid_map(out / "sample_spectra.csv", sample.values, grid, **stamp)
    loaders.write_grid_map(out / "reference_spectra.csv", reference.values, grid, **stamp)

    files = ["x_stack.csv"] + [f"truth_{name}.csv" for name in truth] + ["sample_spectra.csv", "reference_spectra.csv"]
    loaders.write_manifest(out / "manifest.ini", "synth", run.canonical, files, run.config_hash, qus_tools.__version__)
    log.info(f"Wrote a {stack.shape[0]}-frame, {stack.shape[1]}-column dataset to {out}.")


@cli.command("estimate")
@click.pass_context
def estimate_cmd(ctx):
    """Estimate a, b, n and the reconstructed property maps for every frame."""
    run = load_run(ctx, "estimate", ESTIMATE_KEYS)
    s = run.settings
    calib, center_frequency = _fill_calibration(run)
    cfg, weighted = solver_config(s)

    stack, grid, sample, reference = _log_ratio_inputs(run)
    weights = _data_weights(run, grid, sample, reference, weighted)

    estimates = [
        estimate_map(frame, grid, weights, cfg, calib=calib, center_frequency=center_frequency, n_jobs=s.n_jobs)
        for frame in stack
    ]

    out = run.out_dir()
    stamp = run.stamp()
    rows = []
    for k, estimate in enumerate(estimates):
        for name in PARAMETER_MAPS + PROPERTY_MAPS:
            loaders.write_param_map(out / f"frame{k:03d}_{name}.csv", estimate.maps[name], grid.depths, **stamp)
        rows.extend(_report_rows(k, estimate, cfg))
    loaders.write_table(out / "reports.csv", pd.DataFrame(rows, columns=REPORT_COLUMNS), "reports", **stamp)

    unconverged = sum(1 for row in rows if not row["converged"])
    if unconverged:
        message = f"{unconverged} of {len(rows)} column solves did not converge or failed."
        if ctx.obj.strict:
            raise e.ConvergenceError(message)
        log.warning(message)
    log.info(f"Wrote {len(estimates)} frame(s) of maps to {out}.")


@cli.command("weights")
@click.pass_context
def weights_cmd(ctx):
    """Write the sample, reference and combined data weights plus the selected bands."""
    run = load_run(ctx, "weights", WEIGHTS_KEYS)
    sample, reference = _spectra_pair(run, required=True)
    bundle = weighting.build_data_weights(sample, reference, weight_config(run.settings))
    grid = reference.grid

    out = run.out_dir()
    stamp = run.stamp()
    for name in ("w_s", "w_r", "w_d"):
        loaders.write_grid_map(out / f"{name}.csv", getattr(bundle, name).values, grid, **stamp)
        loaders.write_grid_map(out / f"{name}_floored.csv", getattr(bundle, f"{name}_floored").values, grid, **stamp)

    bands = pd.DataFrame({
        "depth_cm": grid.depths,
        "sample_low": bundle.band_s[:, 0],
        "sample_high": bundle.band_s[:, 1],
        "sample_low_mhz": grid.freqs[bundle.band_s[:, 0]],
        "sample_high_mhz": grid.freqs[bundle.band_s[:, 1]],
        "reference_low": bundle.band_r[:, 0],
        "reference_high": bundle.band_r[:, 1],
        "reference_low_mhz": grid.freqs[bundle.band_r[:, 0]],
        "reference_high_mhz": grid.freqs[bundle.band_r[:, 1]],
    })
    loaders.write_table(out / "bands.csv", bands, "bands", **stamp)
    log.info(f"Wrote weight maps to {out}.")


def _method_frames(directory):
    frames = {}
    for parameter in ("alpha_eff", "bsc_fc"):
        files = sorted(directory.glob(f"frame*_{parameter}.csv"))
        if not files:
            raise e.ConfigError(f"No frame*_{parameter}.csv maps in {directory}.")
        frames[parameter] = [loaders.read_param_map(path) for path in files]
    return frames


@cli.command("evaluate")
@click.pass_context
def evaluate_cmd(ctx):
    """Write ROI bias and variance of attenuation and dB-scaled BSC for every method."""
    run = load_run(ctx, "evaluate", EVALUATE_KEYS)
    s = run.settings

    estimates = {}
    for method, directory in s.estimates.items():
        directory = recast.as_path(directory, run.base_dir)
        if not directory.is_dir():
            raise e.ConfigError(f"Estimates of `{method}` point to a missing directory: {directory}")
        estimates[method] = _method_frames(directory)

    truth_dir = run.path("truth")
    truth = {
        parameter: loaders.read_param_map(truth_dir / f"truth_{parameter}.csv")
        for parameter in ("alpha_eff", "bsc_fc")
    }
    rois = loaders.load_rois(run.path("rois"))

    table = metrics.evaluate(estimates, truth, rois, s.variance_mode)
    out = run.out_dir()
    loaders.write_table(out / "metrics.csv", table, "metrics", **run.stamp())
    log.info(f"Wrote {len(table)} metric rows to {out / 'metrics.csv'}.")


@cli.command("sweep")
@click.pass_context
def sweep_cmd(ctx):
    """Sweep the regularization weight ladder on one frame and check the candidate by doubling."""
    run = load_run(ctx, "sweep", SWEEP_KEYS)
    s = run.settings
    cfg, weighted = solver_config(s)
    plan = sweep.SweepPlan(ladder=tuple(s.ladder), check_doubling=s.check_doubling)

    stack, grid, sample, reference = _log_ratio_inputs(run)
    if not 0 <= s.frame < stack.shape[0]:
        raise e.ConfigError(f"frame must be in [0, {stack.shape[0]}), got {s.frame}.")
    weights = _data_weights(run, grid, sample, reference, weighted)

    result = sweep.run_sweep(stack[s.frame], grid, weights, cfg, plan, n_jobs=s.n_jobs)

    out = run.out_dir()
    loaders.write_table(out / "sweep.csv", result.table, "sweep", **run.stamp())
    if result.candidate is None:
        log.warning("The ladder produced no candidate weight.")
    else:
        log.info(f"Candidate weight {result.candidate:g} (stable under doubling: {result.stable}).")


def main():
    """Console script for qus_tools."""
    cli()


if __name__ == "__main__":
    main()
