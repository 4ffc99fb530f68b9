"""Provide code to recast config values from one type (usually str) to another."""
from pathlib import Path

from qus_tools import errors as e
from qus_tools.etl import is_subset

TRUE_WORDS = ("1", "true", "yes", "on")
FALSE_WORDS = ("0", "false", "no", "off")


def _fail(value, kind, err=None):
    raise e.ConfigError(f"`{value}` cannot be recast as {kind}.") from err


# Recasting functions
def as_string(value):
    """Return value recast as string."""
    return str(value).strip()


def as_integer(value):
    """Return value recast as integer."""
    try:
        return int(str(value).strip())
    except ValueError as err:
        _fail(value, "integer", err)


def as_float(value):
    """Return value recast as float."""
    try:
        return float(str(value).strip())
    except ValueError as err:
        _fail(value, "float", err)


def as_bool(value):
    """Return value recast as bool."""
    word = str(value).strip().lower()
    if word in TRUE_WORDS:
        return True
    if word in FALSE_WORDS:
        return False
    _fail(value, "bool")


def as_choice(value, choices):
    """Return value as string after checking it is one of ``choices``."""
    word = as_string(value)
    if not is_subset(word, choices):
        raise e.ConfigError(f"`{word}` is not one of {tuple(choices)}.")
    return word


def as_float_list(value):
    """Return a comma or whitespace separated value recast as a list of floats."""
    return [as_float(item) for item in str(value).replace(",", " ").split()]


def as_integer_list(value):
    """Return a comma or whitespace separated value recast as a list of integers."""
    return [as_integer(item) for item in str(value).replace(",", " ").split()]


def as_string_list(value):
    """Return a comma or whitespace separated value recast as a list of strings."""
    return str(value).replace(",", " ").split()


def as_records(value, fields):
    """Return ``;``-separated records of whitespace-separated floats as dicts keyed by ``fields``."""
    records = []
    for chunk in str(value).split(";"):
        if not chunk.strip():
            continue
        items = chunk.split()
        if len(items) != len(fields):
            raise e.ConfigError(f"Record `{chunk.strip()}` needs {len(fields)} fields: {', '.join(fields)}.")
        records.append(dict(zip(fields, (as_float(item) for item in items))))
    return records


def as_mapping(value):
    """Return ``name=value, ...`` pairs as a dict of strings."""
    mapping = {}
    for chunk in str(value).split(","):
        if not chunk.strip():
            continue
        if "=" not in chunk:
            raise e.ConfigError(f"`{chunk.strip()}` is not a `name=value` pair.")
        name, item = chunk.split("=", 1)
        mapping[name.strip()] = item.strip()
    return mapping


def as_path(value, base=None):
    """Return value recast as a Path, resolved against ``base`` when relative."""
    path = Path(as_string(value)).expanduser()
    if base is not None and not path.is_absolute():
        path = Path(base) / path
    return path
