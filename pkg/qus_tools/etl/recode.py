#!/usr/bin/env python
"""Provide code to recode columns of tabular inputs."""

from qus_tools.etl import recast


def to_str(series):
    """Return series with data re-cast as stripped strings."""
    return series.astype(str).str.strip()


def to_int(series):
    """Return series with values converted to int; raises ConfigError on non-integers."""
    return series.apply(recast.as_integer)
