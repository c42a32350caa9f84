"""Feature extraction: video -> sample directory in the binary format."""

from __future__ import annotations

import logging
from pathlib import Path

import cv2
import numpy as np

from .config import BridgeConfig
from .encoders import make_encoder
from .sampleio import BridgeSample, write_sample

log = logging.getLogger(__name__)

_IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")


def _decode_video(path: Path) -> list[np.ndarray]:
    cap = cv2.VideoCapture(str(path))
    if not cap.isOpened():
        raise RuntimeError(f"cannot open video: {path}")
    frames = []
    while True:
        ok, frame = cap.read()
        if not ok:
            break
        frames.append(frame)
    cap.release()
    if not frames:
        raise RuntimeError(f"no decodable frames in {path}")
    return frames


def _load_frame_dir(path: Path) -> list[np.ndarray]:
    files = sorted(
        p for p in path.iterdir() if p.suffix.lower() in _IMAGE_SUFFIXES
    )
    if not files:
        raise RuntimeError(f"no frame images in {path}")
    frames = []
    for f in files:
        image = cv2.imread(str(f))
        if image is None:
            raise RuntimeError(f"unreadable frame image: {f}")
        frames.append(image)
    return frames


def uniform_indices(total: int, wanted: int) -> list[int]:
    """`wanted` distinct indices spread evenly over [0, total)."""
    n = min(total, wanted)
    return sorted(set(np.round(np.linspace(0, total - 1, n)).astype(int).tolist()))


def extract_features(
    source: Path | str,
    question: str,
    options: list[str],
    answer_id: int,
    out_dir: Path | str,
    config: BridgeConfig | None = None,
    sample_id: str | None = None,
) -> Path:
    """Encode a video (or directory of frames) plus its question into a sample.

    Frames are sampled uniformly, each encoded independently; sims are the
    cosine similarities against the pooled question embedding, computed from
    the same embeddings that get stored. Returns the manifest path; output is
    deterministic for identical inputs.
    """
    config = config or BridgeConfig()
    if not 0 <= answer_id < len(options):
        raise ValueError(f"answer_id {answer_id} outside the {len(options)} options")
    source = Path(source)
    all_frames = _load_frame_dir(source) if source.is_dir() else _decode_video(source)
    picks = uniform_indices(len(all_frames), config.frames_per_video)
    frames = [all_frames[i] for i in picks]
    log.info("%s: %d/%d frames sampled", source.name, len(frames), len(all_frames))

    encoder = make_encoder(config.encoder, dim=config.encoder_dim, device=config.device)
    frame_emb = encoder.encode_images(frames)
    tokens, pooled = encoder.encode_text(question)
    sims = np.clip(frame_emb @ pooled / np.linalg.norm(pooled)
                   / np.linalg.norm(frame_emb, axis=1), -1.0, 1.0)

    sample = BridgeSample(
        sample_id=sample_id or source.stem,
        frames=frame_emb,
        tokens=tokens,
        pooled=pooled,
        sims=sims,
        answer_id=answer_id,
        n_options=len(options),
        question=question,
        options=tuple(options),
    )
    return write_sample(sample, out_dir)
