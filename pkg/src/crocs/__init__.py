"""Contrastive learning of attribute-indexed clinical prototypes for 1-D physiological signals."""

from .attributes import INFINITE, AttributeSet, AttributeSpace
from .prototypes import PrototypeBank
from .training import TrainConfig, TrainResult, train

__all__ = ["INFINITE", "AttributeSet", "AttributeSpace", "PrototypeBank", "TrainConfig", "TrainResult", "train"]
__version__ = "0.1.0"
