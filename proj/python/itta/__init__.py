"""Interactive test-time adaptation benchmark harness."""

import json

from ._itta import (
    BACKGROUND_ID,
    BudgetState,
    ClassRegistry,
    ConfigError,
    DataError,
    DegenerateInputError,
    DimensionError,
    EmptyRegistryError,
    EmptyStreamError,
    Error,
    FormatError,
    InvariantError,
    IoError,
    StateError,
    UsageError,
    auc_step,
    classify,
    cosine_similarity,
    dataset_info,
    harmonic_mean,
    icdd,
    softmax_scaled,
    uncertainty_score,
)
from . import _itta


def synth(out, config=None, stream_out=None):
    """Write a synthetic dataset to `out` and return its default stream."""
    return json.loads(_itta._synth(json.dumps(config or {}), out, stream_out))


def split(dataset, unseen_ratio=0.25, seed=0, policy="shuffle"):
    return json.loads(_itta._split(dataset, unseen_ratio, seed, policy))


def run(config):
    """Run one stream. `config` uses the same keys as the JSON run config."""
    return json.loads(_itta._run(json.dumps(config)))
