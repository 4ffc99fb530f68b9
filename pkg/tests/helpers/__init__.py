"""Provide shared test helpers: numerical oracles and output-file checks."""
