"""Real-model adapter for the frame-repetition pipeline.

Two jobs, both speaking only the published contracts of the scoring package:
extract frame/question features from actual videos into the binary sample
format, and serve answer log-probabilities over the HTTP oracle protocol
backed by a vision-language model (or a deterministic toy stand-in for
integration testing).
"""

from .config import BridgeConfig
from .extract import extract_features
from .server import serve_oracle

__version__ = "0.1.0"

__all__ = ["BridgeConfig", "extract_features", "serve_oracle"]
