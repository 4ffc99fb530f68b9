#!/usr/bin/env python
"""Provide code to validate columns of tabular inputs."""


def nonempty(series):
    """Enforce that values are non-empty strings."""
    return series.astype(str).str.len() > 0


def nonnegative(series):
    """Enforce that values are >= 0."""
    return series >= 0


def no_separators(series):
    """Enforce that names contain no commas, which would break the CSV outputs."""
    return ~series.astype(str).str.contains(",", regex=False)
