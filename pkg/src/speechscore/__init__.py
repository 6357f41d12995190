"""Speech quality and speaker-similarity scoring models on a small
from-scratch autodiff core: CNN-BLSTM frame scorers with optional
quality-token attention and residual-encoding pooling."""

__version__ = "0.1.0"
