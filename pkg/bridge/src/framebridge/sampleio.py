"""Bridge-side reader/writer for the binary sample format.

Implements the published contract directly (manifest.json + four raw
little-endian float32 blobs) so the bridge has no code dependency on the
scoring package. The bridge adds its own sidecar, qa.json, carrying the
question text and options the answering model needs; the scoring side never
reads it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1
BLOB_NAMES = ("frames", "tokens", "pooled", "sims")


@dataclass
class BridgeSample:
    sample_id: str
    frames: np.ndarray  # (n, d) float32-representable
    tokens: np.ndarray  # (L, d)
    pooled: np.ndarray  # (d,)
    sims: np.ndarray  # (n,)
    answer_id: int
    n_options: int
    question: str = ""
    options: tuple[str, ...] = ()


def write_sample(sample: BridgeSample, out_dir: Path | str) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    arrays = {
        "frames": sample.frames,
        "tokens": sample.tokens,
        "pooled": sample.pooled,
        "sims": sample.sims,
    }
    for name, arr in arrays.items():
        (out_dir / f"{name}.f32").write_bytes(
            np.ascontiguousarray(arr, dtype="<f4").tobytes()
        )
    manifest = {
        "format_version": FORMAT_VERSION,
        "sample_id": sample.sample_id,
        "n_frames": int(sample.frames.shape[0]),
        "n_tokens": int(sample.tokens.shape[0]),
        "dim": int(sample.frames.shape[1]),
        "n_options": sample.n_options,
        "answer_id": sample.answer_id,
        "blobs": {name: f"{name}.f32" for name in BLOB_NAMES},
    }
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")
    if sample.question:
        (out_dir / "qa.json").write_text(
            json.dumps(
                {"question": sample.question, "options": list(sample.options)},
                indent=2,
            )
            + "\n"
        )
    return manifest_path


def read_sample(sample_dir: Path | str) -> BridgeSample:
    sample_dir = Path(sample_dir)
    manifest = json.loads((sample_dir / "manifest.json").read_text())
    if manifest.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported sample format in {sample_dir}")
    n, length, d = manifest["n_frames"], manifest["n_tokens"], manifest["dim"]
    shapes = {"frames": (n, d), "tokens": (length, d), "pooled": (d,), "sims": (n,)}
    arrays = {}
    for name in BLOB_NAMES:
        raw = (sample_dir / manifest["blobs"][name]).read_bytes()
        expected = 4 * int(np.prod(shapes[name]))
        if len(raw) != expected:
            raise ValueError(f"{sample_dir}: blob {name} has {len(raw)} bytes, want {expected}")
        arrays[name] = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(shapes[name])
    question, options = "", ()
    qa_path = sample_dir / "qa.json"
    if qa_path.is_file():
        qa = json.loads(qa_path.read_text())
        question, options = qa.get("question", ""), tuple(qa.get("options", ()))
    return BridgeSample(
        sample_id=manifest["sample_id"],
        frames=arrays["frames"],
        tokens=arrays["tokens"],
        pooled=arrays["pooled"],
        sims=arrays["sims"],
        answer_id=manifest["answer_id"],
        n_options=manifest["n_options"],
        question=question,
        options=options,
    )
