"""Diffeomorphic alignment of vector fields with invertible residual networks.

The compiled core lives in ``vfalign._core``; this module adds dict-based
wrappers around the JSON-speaking entry points.
"""

import json as _json

from . import _core
from ._core import (
    ConfigError,
    ContractError,
    DimensionError,
    IResNet,
    IterationLimitError,
    NumericalError,
    ParseError,
    Sampler,
    VectorField,
    cca,
    conjugate,
    linear,
    orbital_loss,
    pitchfork,
    random_gaussian_positive_det,
    random_orthogonal,
    simulate_ensemble,
    van_der_pol,
)

__all__ = [
    "ConfigError",
    "ContractError",
    "DimensionError",
    "IResNet",
    "IterationLimitError",
    "NumericalError",
    "ParseError",
    "Sampler",
    "VectorField",
    "cca",
    "conjugate",
    "field_from_spec",
    "linear",
    "orbital_loss",
    "pitchfork",
    "random_gaussian_positive_det",
    "random_orthogonal",
    "run_experiment",
    "similarity",
    "simulate_ensemble",
    "train",
    "van_der_pol",
]


def field_from_spec(spec):
    """Build a field from a system description such as ``{"kind": "vdp", "mu": 1.0}``."""
    return _core.field_from_json(_json.dumps(spec))


def similarity(f, g, phi, psi, p, q, samples=10000):
    """Min-of-directions orbital similarity, returned as a dict."""
    return _json.loads(_core.similarity(f, g, phi, psi, p, q, samples))


def train(f, g, p, q, include_timing=True, **config):
    """Train the two networks; keyword arguments are training settings
    (``batches``, ``restarts``, ``seed``, ``lr`` ...). Returns ``(phi, psi, record)``."""
    phi, psi, record = _core.train(f, g, p, q, _json.dumps(config), include_timing)
    return phi, psi, _json.loads(record)


def run_experiment(config, workers=1, full_scale=False, seed=None, include_timing=True):
    """Run an experiment config (dict). Returns ``(result_dict, csv_text)``."""
    result, csv = _core.run_experiment(_json.dumps(config), workers, full_scale, seed, include_timing)
    return _json.loads(result), csv
