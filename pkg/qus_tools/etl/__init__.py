"""Provide top level code in support of reading, recasting and writing QUS data files."""
import hashlib


def is_subset(x, ref_set):
    """Return ``True`` if ``x`` is a subset of ``ref_set``."""
    if not isinstance(ref_set, set):
        ref_set = set(ref_set)

    if isinstance(x, (list, tuple, set)):
        set_x = set(x)
    else:
        set_x = set([x])

    return set_x.issubset(ref_set)


def canonical_text(settings):
    """Return ``settings`` rendered as sorted ``key = value`` lines."""
    return "\n".join(f"{key} = {settings[key]}" for key in sorted(settings)) + "\n"


def config_hash(settings, length=12):
    """Return a short sha256 digest of the canonical rendering of ``settings``."""
    return hashlib.sha256(canonical_text(settings).encode("utf-8")).hexdigest()[:length]
