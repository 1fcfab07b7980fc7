"""Feature-distributed training of composite classifiers.

Each of m parties holds a vertical slice of every sample's features and
trains its own sub-model; only scalar local predictions are ever shared.
A coordinator aggregates the per-party predictions and enforces a
bounded-staleness admission rule so workers may run asynchronously.
"""

__version__ = "0.1.0"

from fdml.model import (
    LinearLogit,
    FeedForward,
    sigmoid,
    aggregate,
    log_loss,
    h_term,
)
from fdml.coordinator import Coordinator
from fdml.config import TrainingConfig

__all__ = [
    "LinearLogit",
    "FeedForward",
    "sigmoid",
    "aggregate",
    "log_loss",
    "h_term",
    "Coordinator",
    "TrainingConfig",
]
