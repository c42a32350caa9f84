"""Bridge configuration."""

from __future__ import annotations

from dataclasses import dataclass

PROMPT_MODES = ("train-scoring", "think", "no-think")


@dataclass(frozen=True)
class BridgeConfig:
    """Model and sampling choices for extraction and serving.

    encoder/vlm name "hashed" / "toy" select the deterministic offline
    backends; any other name is treated as a hub model id for the real
    backends (requires the `real` extra and downloaded weights).
    """

    encoder: str = "hashed"
    vlm: str = "toy"
    device: str = "cpu"
    prompt_mode: str = "train-scoring"
    frames_per_video: int = 128
    encoder_dim: int = 64  # hashed backend width; real encoders fix their own

    def __post_init__(self) -> None:
        if self.prompt_mode not in PROMPT_MODES:
            raise ValueError(f"prompt_mode must be one of {PROMPT_MODES}")
        if self.frames_per_video < 1:
            raise ValueError("frames_per_video must be >= 1")
        if self.encoder_dim < 4 or self.encoder_dim % 4:
            raise ValueError("encoder_dim must be a positive multiple of 4")
