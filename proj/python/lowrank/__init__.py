"""Low-rank compression of a tiny byte-level language model."""

import json

from ._core import (
    CompressedLM,
    NumericalError,
    TinyLM,
    ValidationError,
    factorize,
    proportional_ranks,
    rouge_l,
    svd,
)
from . import _core

STAGES = ("train", "calibrate", "allocate", "compress", "schedule-search",
          "generate", "eval", "bench", "ablate")


def run_stage(stage, config):
    """Runs one pipeline stage; `config` is a dict of run settings."""
    return json.loads(_core.run_stage(stage, json.dumps(config)))


def run_pipeline(config, stages=STAGES[:7]):
    """Runs `stages` in order and returns their summaries."""
    return {s: run_stage(s, config) for s in stages}


def model_config(**overrides):
    """Config JSON for TinyLM.initialize."""
    return json.dumps(overrides)


__all__ = [
    "CompressedLM", "NumericalError", "TinyLM", "ValidationError", "STAGES",
    "factorize", "model_config", "proportional_ranks", "rouge_l",
    "run_pipeline", "run_stage", "svd",
]
