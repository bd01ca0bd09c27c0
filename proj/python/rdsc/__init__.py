"""Python interface to the R-DeepSC simulator.

Run configurations are passed as dicts with the same keys as the CLI's JSON
config files; missing keys take their defaults.
"""

import json

from ._rdsc import (
    ClassicalChain,
    ConfigError,
    HuffmanTable,
    RdscError,
    ReedSolomon,
    awgn,
    bleu,
    brevity_penalty,
    fgm_perturbation,
    idf_weights,
    normalize,
    rayleigh,
    rescale_similarity,
    sentence_bleu,
    snr_to_noise_var,
    tokenize,
)
from . import _rdsc


def _text(config):
    return "" if config is None else json.dumps(config)


def session(config=None):
    """Corpus workspace (vocabulary, lexicon, split) for a run config."""
    return _rdsc.Session(_text(config))


def load(checkpoint):
    """Workspace plus trained model restored from a checkpoint."""
    return _rdsc.Session.load(str(checkpoint))


def train(config, resume=False):
    return _rdsc.train(_text(config), resume)


def evaluate(config, checkpoint):
    return _rdsc.evaluate(_text(config), str(checkpoint))


def baseline(config):
    return _rdsc.baseline(_text(config))


def corrupt_corpus(config):
    return _rdsc.corrupt_corpus(_text(config))


__all__ = [
    "ClassicalChain", "ConfigError", "HuffmanTable", "RdscError", "ReedSolomon", "awgn", "baseline", "bleu",
    "brevity_penalty", "corrupt_corpus", "evaluate", "fgm_perturbation", "idf_weights", "load", "normalize",
    "rayleigh", "rescale_similarity", "sentence_bleu", "session", "snr_to_noise_var", "tokenize", "train",
]
