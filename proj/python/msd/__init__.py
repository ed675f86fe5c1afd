"""Two-classifier register detector: train, score and run experiments."""

from ._msd import (
    DataError,
    Model,
    RemoteError,
    __version__,
    confidence_to_score,
    load_corpus,
    load_model,
    pearson_r,
    synth,
    to_bs_meter,
    train,
    welch_t,
)

__all__ = [
    "DataError",
    "Model",
    "RemoteError",
    "__version__",
    "confidence_to_score",
    "load_corpus",
    "load_model",
    "pearson_r",
    "synth",
    "to_bs_meter",
    "train",
    "welch_t",
]
