"""Frame/question feature data model and its on-disk format.

A sample lives in its own directory: `manifest.json` declares extents and
names four sibling blob files (frames, tokens, pooled, sims), each of which is
raw little-endian float32, row-major, headerless. Values are widened to
float64 on load. The format is the contract between this package and any
external feature producer, so loading validates aggressively and each failure
mode has its own error class.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BlobSizeError,
    DegenerateInputError,
    ManifestError,
    MissingBlobError,
    NonFiniteValueError,
    SimilarityRangeError,
)

FORMAT_VERSION = 1
SIMS_CONSISTENCY_TOL = 1e-5

_BLOB_NAMES = ("frames", "tokens", "pooled", "sims")


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity of two vectors, clamped to [-1, 1]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise DegenerateInputError("cosine undefined for zero-norm input")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


@dataclass(frozen=True)
class FrameFeatureSet:
    """Per-video frame embeddings plus each frame's similarity to the question.

    frames: (n_frames, dim) float64; sims: (n_frames,) cosine similarities
    between each frame embedding and the pooled question embedding.
    """

    frames: np.ndarray
    sims: np.ndarray

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]

    def validate(self) -> None:
        if self.frames.ndim != 2 or self.n_frames < 1 or self.dim < 2:
            raise ManifestError(
                f"frames must be (n>=1, d>=2), got shape {self.frames.shape}"
            )
        if self.sims.shape != (self.n_frames,):
            raise ManifestError(
                f"sims shape {self.sims.shape} != (n_frames,)={self.n_frames}"
            )
        if not np.all(np.isfinite(self.frames)) or not np.all(np.isfinite(self.sims)):
            raise NonFiniteValueError("frame features contain NaN/Inf")
        if np.any(self.sims < -1.0) or np.any(self.sims > 1.0):
            raise SimilarityRangeError("sims outside [-1, 1]")


@dataclass(frozen=True)
class QuestionEncoding:
    """Token embeddings (n_tokens, dim) plus one pooled question vector (dim,)."""

    tokens: np.ndarray
    pooled: np.ndarray

    @property
    def n_tokens(self) -> int:
        return self.tokens.shape[0]

    @property
    def dim(self) -> int:
        return self.tokens.shape[1]

    def validate(self) -> None:
        if self.tokens.ndim != 2 or self.n_tokens < 1:
            raise ManifestError(f"tokens must be (L>=1, d), got {self.tokens.shape}")
        if self.pooled.shape != (self.dim,):
            raise ManifestError(
                f"pooled shape {self.pooled.shape} != (dim,)={self.dim}"
            )
        if not np.all(np.isfinite(self.tokens)) or not np.all(np.isfinite(self.pooled)):
            raise NonFiniteValueError("question encoding contains NaN/Inf")
        if np.linalg.norm(self.pooled) == 0.0:
            raise DegenerateInputError("pooled question embedding has zero norm")


@dataclass(frozen=True)
class SampleRecord:
    """One training/inference unit: features, question, and the answer key."""

    sample_id: str
    features: FrameFeatureSet
    question: QuestionEncoding
    answer_id: int
    n_options: int

    @property
    def n_frames(self) -> int:
        return self.features.n_frames

    @property
    def dim(self) -> int:
        return self.features.dim

    def validate(self) -> None:
        self.features.validate()
        self.question.validate()
        if self.question.dim != self.features.dim:
            raise ManifestError(
                f"question dim {self.question.dim} != frame dim {self.features.dim}"
            )
        if self.n_options < 2:
            raise ManifestError(f"n_options must be >= 2, got {self.n_options}")
        if not 0 <= self.answer_id < self.n_options:
            raise ManifestError(
                f"answer_id {self.answer_id} outside [0, {self.n_options})"
            )


def check_sims_consistency(record: SampleRecord, tol: float = SIMS_CONSISTENCY_TOL) -> None:
    """Require stored sims to match cosine(frames[i], pooled) within `tol`.

    Enforced when a sample is read back from disk; in-memory records may carry
    producer-specific similarity conventions.
    """
    for i in range(record.n_frames):
        expect = cosine(record.features.frames[i], record.question.pooled)
        if abs(expect - record.features.sims[i]) > tol:
            raise SimilarityRangeError(
                f"sims[{i}]={record.features.sims[i]:.6f} disagrees with "
                f"cosine(frames[{i}], pooled)={expect:.6f}"
            )


def _write_blob(path: Path, arr: np.ndarray) -> None:
    path.write_bytes(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _read_blob(path: Path, shape: tuple[int, ...], label: str) -> np.ndarray:
    if not path.is_file():
        raise MissingBlobError(f"blob file missing: {path}")
    raw = path.read_bytes()
    expected = 4 * int(np.prod(shape))
    if len(raw) != expected:
        raise BlobSizeError(
            f"blob '{label}' at {path}: {len(raw)} bytes, expected {expected} "
            f"for extents {shape}"
        )
    return np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(shape)


def save_sample(record: SampleRecord, out_dir: Path | str) -> Path:
    """Write a sample directory; returns the manifest path.

    Bytes are deterministic for identical records (fixed field order, fixed
    float32 blob encoding).
    """
    record.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format_version": FORMAT_VERSION,
        "sample_id": record.sample_id,
        "n_frames": record.n_frames,
        "n_tokens": record.question.n_tokens,
        "dim": record.dim,
        "n_options": record.n_options,
        "answer_id": record.answer_id,
        "blobs": {name: f"{name}.f32" for name in _BLOB_NAMES},
    }
    _write_blob(out_dir / "frames.f32", record.features.frames)
    _write_blob(out_dir / "tokens.f32", record.question.tokens)
    _write_blob(out_dir / "pooled.f32", record.question.pooled)
    _write_blob(out_dir / "sims.f32", record.features.sims)
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest_path


def load_sample(manifest_path: Path | str) -> SampleRecord:
    """Load and fully validate a sample directory from its manifest."""
    manifest_path = Path(manifest_path)
    if manifest_path.is_dir():
        manifest_path = manifest_path / "manifest.json"
    if not manifest_path.is_file():
        raise ManifestError(f"manifest not found: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"unreadable manifest {manifest_path}: {exc}") from exc

    if manifest.get("format_version") != FORMAT_VERSION:
        raise ManifestError(
            f"unsupported format_version {manifest.get('format_version')!r}"
        )
    try:
        sample_id = str(manifest["sample_id"])
        n_frames = int(manifest["n_frames"])
        n_tokens = int(manifest["n_tokens"])
        dim = int(manifest["dim"])
        n_options = int(manifest["n_options"])
        answer_id = int(manifest["answer_id"])
        blobs = manifest["blobs"]
        blob_files = {name: blobs[name] for name in _BLOB_NAMES}
    except (KeyError, TypeError, ValueError) as exc:
        raise ManifestError(f"manifest {manifest_path} missing field: {exc}") from exc

    base = manifest_path.parent
    frames = _read_blob(base / blob_files["frames"], (n_frames, dim), "frames")
    tokens = _read_blob(base / blob_files["tokens"], (n_tokens, dim), "tokens")
    pooled = _read_blob(base / blob_files["pooled"], (dim,), "pooled")
    sims = _read_blob(base / blob_files["sims"], (n_frames,), "sims")

    record = SampleRecord(
        sample_id=sample_id,
        features=FrameFeatureSet(frames=frames, sims=sims),
        question=QuestionEncoding(tokens=tokens, pooled=pooled),
        answer_id=answer_id,
        n_options=n_options,
    )
    record.validate()
    check_sims_consistency(record)
    return record


def make_sample(
    sample_id: str,
    frames: np.ndarray,
    tokens: np.ndarray,
    pooled: np.ndarray,
    answer_id: int,
    n_options: int,
    sims: np.ndarray | None = None,
) -> SampleRecord:
    """Assemble a validated record, computing sims from the embeddings if absent."""
    frames = np.asarray(frames, dtype=np.float64)
    pooled = np.asarray(pooled, dtype=np.float64)
    if sims is None:
        sims = np.array([cosine(f, pooled) for f in frames])
    record = SampleRecord(
        sample_id=sample_id,
        features=FrameFeatureSet(frames=frames, sims=np.asarray(sims, np.float64)),
        question=QuestionEncoding(
            tokens=np.asarray(tokens, dtype=np.float64), pooled=pooled
        ),
        answer_id=answer_id,
        n_options=n_options,
    )
    record.validate()
    return record
