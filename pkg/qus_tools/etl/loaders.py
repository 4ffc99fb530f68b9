#!/usr/bin/env python
"""Provide code to read and write config files, maps, stacks, tables and manifests.

Every data file written here starts with a one-line ``#`` header naming its format
version, the producing command and the config hash. Floats are written with 17
significant digits so a read-back reproduces the written values exactly.
"""
import configparser
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from box import Box
from logzero import logger as log
from table_enforcer import Column, Enforcer

from qus_tools import errors as e
from qus_tools import model
from qus_tools.etl import recode, validate
from qus_tools.metrics import ROISpec
from qus_tools.spectra import RFFrame

MAP_FORMAT = "qus-map v1"
STACK_FORMAT = "qus-stack v1"
TABLE_FORMAT = "qus-table v1"
MANIFEST_FORMAT = "qus-manifest v1"
FLOAT_FORMAT = "%.17g"

STACK_COLUMNS = ["frame", "column", "depth_cm", "freq_mhz", "value"]
ROI_COLUMNS = ["name", "depth_start", "depth_stop", "lateral_start", "lateral_stop"]


# Headers
def header_line(fmt, **fields):
    """Return the ``# <format>, key=value, ...`` first line of a data file."""
    return "# " + ", ".join([fmt] + [f"{key}={value}" for key, value in fields.items()]) + "\n"


def parse_header(path, line, fmt):
    """Return the key=value fields of a header line after checking its format tag."""
    if not line.startswith(f"# {fmt}"):
        raise e.MalformedFileError(path, f"expected a `# {fmt}` header, found {line.strip()[:40]!r}", line=1)

    fields = Box()
    for item in line[2:].strip().split(", ")[1:]:
        key, _, value = item.partition("=")
        fields[key.strip()] = value.strip()
    return fields


def _existing(path):
    path = Path(path)
    if not path.is_file():
        raise e.DataError(f"Input file not found: {path}")
    return path


def _first_line(path):
    with path.open("r") as handle:
        return handle.readline()


def _number(value):
    return FLOAT_FORMAT % value


def _read_raw(path, **kwargs):
    try:
        return pd.read_csv(path, dtype=str, keep_default_na=False, **kwargs)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as err:
        raise e.MalformedFileError(path, f"not a readable CSV table ({err})") from err


def _to_numbers(raw, path, line_offset, column_offset):
    """Return ``raw`` as a float array; the first unreadable cell is reported by line and column."""
    values = raw.apply(pd.to_numeric, errors="coerce")
    missing = raw.isna().to_numpy()
    literal_nan = raw.apply(lambda col: col.astype(str).str.strip().str.lower().eq("nan")).to_numpy()
    bad = missing | (values.isna().to_numpy() & ~literal_nan)
    if bad.any():
        row, col = (int(v) for v in np.argwhere(bad)[0])
        what = "missing value" if missing[row, col] else f"cannot read {raw.iat[row, col]!r} as a number"
        raise e.MalformedFileError(path, what, line=row + line_offset, column=col + column_offset)
    return values.to_numpy(dtype=float)


def _axis(labels, path, line=None, column=None):
    axis = []
    for k, label in enumerate(labels):
        try:
            axis.append(float(label))
        except ValueError as err:
            raise e.MalformedFileError(
                path,
                f"axis value {label!r} is not a number",
                line=line if line is not None else k + 3,
                column=column if column is not None else k + 2,
            ) from err
    return np.array(axis)


# Matrix maps
@dataclass(frozen=True)
class MapFile(object):
    """Contents of a qus-map file: data rows, their axis values and the header fields."""

    values: np.ndarray
    row_axis: np.ndarray
    col_axis: np.ndarray
    header: Box


def write_map(path, values, row_axis, col_axis, cols, command="", config="", rows="depth(cm)"):
    """Write a 2-D matrix as a qus-map v1 CSV."""
    values = np.asarray(values, dtype=float)
    if values.shape != (len(row_axis), len(col_axis)):
        raise e.DimensionMismatchError(f"Map of shape {values.shape} does not match its axes.")

    table = pd.DataFrame(values, index=[_number(v) for v in row_axis], columns=[_number(v) for v in col_axis])
    path = Path(path)
    with path.open("w", newline="") as handle:
        handle.write(header_line(MAP_FORMAT, rows=rows, cols=cols, command=command, config=config))
        table.to_csv(handle, index_label="axis", float_format=FLOAT_FORMAT, na_rep="nan")
    log.debug(f"Wrote {path}.")


def read_map(path):
    """Return the MapFile of a qus-map v1 CSV."""
    path = _existing(path)
    header = parse_header(path, _first_line(path), MAP_FORMAT)

    raw = _read_raw(path, skiprows=1, index_col=0)
    if raw.empty:
        raise e.EmptyInputError(f"{path}: map has no data rows.")

    return MapFile(
        values=_to_numbers(raw, path, line_offset=3, column_offset=2),
        row_axis=_axis(raw.index, path, column=1),
        col_axis=_axis(raw.columns, path, line=2),
        header=header,
    )


def write_grid_map(path, values, grid, command="", config=""):
    """Write an (N_F, N_R) map (spectra, weights) with depth rows and frequency columns."""
    grid.check_map(values)
    write_map(path, np.asarray(values).T, grid.depths, grid.freqs, cols="freq(MHz)", command=command, config=config)


def read_grid_map(path):
    """Return (values (N_F, N_R), SpectralGrid) of a map written by write_grid_map."""
    contents = read_map(path)
    grid = model.SpectralGrid(freqs=contents.col_axis, depths=contents.row_axis)
    return contents.values.T, grid


def write_param_map(path, values, depths, command="", config=""):
    """Write an (N_R, n_columns) parameter or property map with depth rows and column-index columns."""
    values = np.asarray(values, dtype=float)
    write_map(path, values, depths, np.arange(values.shape[1]), cols="column", command=command, config=config)


def read_param_map(path):
    """Return the (N_R, n_columns) values of a parameter or property map."""
    return read_map(path).values


# Log-ratio stacks
def write_stack(path, stack, grid, command="", config=""):
    """Write an (n_frames, n_columns, N_F, N_R) stack as a tidy qus-stack v1 CSV."""
    stack = np.asarray(stack, dtype=float)
    if stack.ndim != 4 or stack.shape[2:] != grid.shape:
        raise e.DimensionMismatchError(f"Stack must be (n_frames, n_columns) + {grid.shape}, got {stack.shape}.")

    n_frames, n_columns = stack.shape[:2]
    frame, column, depth, freq = np.meshgrid(
        np.arange(n_frames), np.arange(n_columns), np.arange(grid.n_depths), np.arange(grid.n_freqs), indexing="ij"
    )
    table = pd.DataFrame({
        "frame": frame.ravel(),
        "column": column.ravel(),
        "depth_cm": grid.depths[depth.ravel()],
        "freq_mhz": grid.freqs[freq.ravel()],
        "value": stack.transpose(0, 1, 3, 2).ravel(),
    })

    path = Path(path)
    with path.open("w", newline="") as handle:
        handle.write(header_line(STACK_FORMAT, command=command, config=config))
        table.to_csv(handle, index=False, float_format=FLOAT_FORMAT)
    log.debug(f"Wrote {path}.")


def read_stack(path):
    """Return (stack, SpectralGrid) of a qus-stack v1 CSV."""
    path = _existing(path)
    parse_header(path, _first_line(path), STACK_FORMAT)

    raw = _read_raw(path, skiprows=1)
    if list(raw.columns) != STACK_COLUMNS:
        raise e.MalformedFileError(path, f"expected columns {STACK_COLUMNS}, found {list(raw.columns)}", line=2)
    if raw.empty:
        raise e.EmptyInputError(f"{path}: stack has no data rows.")

    numbers = _to_numbers(raw, path, line_offset=3, column_offset=1)
    index = numbers[:, :2]
    if np.any(index < 0) or np.any(index != np.round(index)):
        row = int(np.argwhere(np.any((index < 0) | (index != np.round(index)), axis=1))[0][0])
        raise e.MalformedFileError(path, "frame and column must be non-negative integers", line=row + 3)

    grid = model.SpectralGrid(freqs=np.unique(numbers[:, 3]), depths=np.unique(numbers[:, 2]))
    frame = index[:, 0].astype(int)
    column = index[:, 1].astype(int)
    shape = (frame.max() + 1, column.max() + 1) + grid.shape
    if numbers.shape[0] != np.prod(shape):
        raise e.MalformedFileError(path, f"{numbers.shape[0]} rows do not fill a complete stack of shape {shape}")

    stack = np.full(shape, np.nan)
    filled = np.zeros(shape, dtype=bool)
    cells = (frame, column, np.searchsorted(grid.freqs, numbers[:, 3]), np.searchsorted(grid.depths, numbers[:, 2]))
    stack[cells] = numbers[:, 4]
    filled[cells] = True
    if not filled.all():
        raise e.MalformedFileError(path, "stack has duplicate cells and so misses others")
    return stack, grid


# Tables
def write_table(path, table, kind, command="", config=""):
    """Write a pandas table (reports, metrics, sweep, bands) with a qus-table v1 header."""
    path = Path(path)
    with path.open("w", newline="") as handle:
        handle.write(header_line(TABLE_FORMAT, kind=kind, command=command, config=config))
        table.to_csv(handle, index=False, float_format=FLOAT_FORMAT, na_rep="nan")
    log.debug(f"Wrote {path}.")


def read_table(path):
    """Return the DataFrame of a qus-table v1 CSV."""
    path = _existing(path)
    parse_header(path, _first_line(path), TABLE_FORMAT)
    try:
        return pd.read_csv(path, skiprows=1)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as err:
        raise e.MalformedFileError(path, f"not a readable CSV table ({err})") from err


# RF frames
def read_rf(path, sampling_rate, sound_speed=1540.0):
    """Return the RFFrame of a headerless numeric CSV: one row per axial sample, one column per line."""
    path = _existing(path)
    raw = _read_raw(path, header=None)
    if raw.empty:
        raise e.EmptyInputError(f"{path}: RF file has no samples.")
    return RFFrame(samples=_to_numbers(raw, path, line_offset=1, column_offset=1), sampling_rate=sampling_rate,
                   sound_speed=sound_speed)


# ROI tables
def roi_enforcer():
    """Return the Enforcer that recodes and validates an ROI table."""
    name = Column(
        name="name",
        dtype=str,
        unique=True,
        validators=[validate.nonempty, validate.no_separators],
        recoders=[recode.to_str],
    )
    bounds = [
        Column(
            name=column,
            dtype=(int, np.integer),
            unique=False,
            validators=[validate.nonnegative],
            recoders=[recode.to_int],
        ) for column in ROI_COLUMNS[1:]
    ]
    return Enforcer([name] + bounds)


def load_rois(path):
    """Return the ROISpec list of an ROI CSV (name, depth_start, depth_stop, lateral_start, lateral_stop).

    Ranges are half-open cell index ranges. Lines starting with ``#`` are ignored.
    """
    path = _existing(path)
    data = _read_raw(path, comment="#")
    missing = [column for column in ROI_COLUMNS if column not in data.columns]
    if missing:
        raise e.MalformedFileError(path, f"missing columns {missing}")
    if data.empty:
        raise e.EmptyInputError(f"{path}: no ROIs defined.")

    try:
        table = roi_enforcer().recode(data[ROI_COLUMNS], validate=True)
    except Exception as err:
        # table_enforcer wraps recoder and validator failures in its own error types
        raise e.MalformedFileError(path, f"ROI table failed validation: {err}") from err

    return [
        ROISpec(
            name=str(record["name"]),
            depth_start=int(record["depth_start"]),
            depth_stop=int(record["depth_stop"]),
            lateral_start=int(record["lateral_start"]),
            lateral_stop=int(record["lateral_stop"]),
        ) for record in table[ROI_COLUMNS].to_dict("records")
    ]


# Config files and manifests
def read_config(path):
    """Return a Box with one Box of raw string values per ``[section]`` of a config file."""
    path = Path(path)
    if not path.is_file():
        raise e.ConfigError(f"Config file not found: {path}")

    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ), inline_comment_prefixes=("#", ))
    try:
        with path.open("r") as handle:
            parser.read_file(handle)
    except configparser.Error as err:
        raise e.ConfigError(f"{path}: {err}") from err

    return Box({name: dict(parser[name]) for name in parser.sections()})


def write_manifest(path, command, settings, files, config, tool_version):
    """Write the resolved ``[command]`` section plus a ``[manifest]`` section; re-runnable as a config."""
    parser = configparser.ConfigParser(interpolation=None)
    parser[command] = {key: settings[key] for key in sorted(settings)}
    parser["manifest"] = {
        "tool_version": tool_version,
        "command": command,
        "config_hash": config,
        "files": ", ".join(files),
    }

    path = Path(path)
    with path.open("w", newline="") as handle:
        handle.write(header_line(MANIFEST_FORMAT, command=command, config=config))
        parser.write(handle)
    log.debug(f"Wrote {path}.")


def read_manifest(path):
    """Return the sections of a manifest written by write_manifest."""
    path = _existing(path)
    parse_header(path, _first_line(path), MANIFEST_FORMAT)
    return read_config(path)
