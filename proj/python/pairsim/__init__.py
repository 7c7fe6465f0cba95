"""Matched-pair cluster-randomized experiments: generation, estimation,
matching and Monte Carlo studies."""

import json

from . import _core
from ._core import CellAborted, InputError, sha256_hex

__version__ = _core.__version__

__all__ = [
    "CellAborted",
    "InputError",
    "estimate",
    "figure1",
    "generate",
    "match",
    "sha256_hex",
    "simulate",
]


def generate(config=None, seed=None):
    """Draw one synthetic experiment from a DGP configuration dict."""
    return _core.generate(json.dumps(config or {}), seed)


def estimate(data_csv, estimator="design", level=0.95, alpha=0.05):
    """Estimate the treatment effect from experiment CSV text."""
    return _core.estimate(data_csv, estimator, level, alpha)


def match(covariates, method="optimal", bins=None, ridge=None):
    """Pair the rows of a clusters x covariates array."""
    return _core.match(covariates, method, bins, ridge)


def simulate(plan, workers=1):
    """Run a simulation plan dict; returns one metrics dict per cell."""
    return _core.simulate(json.dumps(plan), workers)


def figure1(iterations=1000, grid=(), seed=42, workers=1):
    return _core.figure1(iterations, list(grid), seed, workers)
