"""Simulated magnetic skin sensing: physics, wire protocol, decoder and experiments."""

import json as _json

from . import _core
from ._core import (
    ConfigError,
    DimensionError,
    IoError,
    Model,
    NumericalError,
    crc16,
    decode_stream,
    dipole_field,
    encode_frame,
    localization_accuracy,
    mse,
    presets,
)

__all__ = [
    "ConfigError", "DimensionError", "IoError", "Model", "NumericalError",
    "config", "crc16", "decode_stream", "dipole_field", "encode_frame",
    "localization_accuracy", "mse", "presets", "run_experiment", "simulate", "train",
]


def _dump(overrides):
    return _json.dumps(overrides or {})


def config(overrides=None, preset=""):
    """Resolved flat config and its hash."""
    flat, digest = _core.config_resolve(_dump(overrides), preset)
    return _json.loads(flat), digest


def simulate(overrides=None):
    """Single-sensor snake-grid dataset as (X, Y) arrays."""
    return _core.simulate(_dump(overrides))


def train(X, Y, overrides=None):
    """Train a decoder; returns (Model, training log CSV)."""
    return _core.train(X, Y, _dump(overrides))


def run_experiment(preset, overrides=None, jobs=1):
    """Run a preset; returns (list of report dicts, {artifact name: text})."""
    reports, artifacts = _core.run_experiment(preset, _dump(overrides), jobs)
    return _json.loads(reports)["reports"], artifacts
