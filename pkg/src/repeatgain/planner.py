"""Inference-time repetition planning.

Given per-frame scores, pick the k best frames (ties break toward the earlier
frame) and emit the frame sequence with each selected frame duplicated
immediately after its original position, leaving all other frames in place.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InternalError
from .features import SampleRecord
from .scorer import ScorerConfig, ScorerParams, forward


@dataclass(frozen=True)
class RepetitionPlan:
    sample_id: str
    n_frames: int
    k: int
    selected: tuple[int, ...]  # ascending, unique
    sequence: tuple[int, ...]  # length n_frames + k

    def to_json(self) -> str:
        return json.dumps(
            {
                "sample_id": self.sample_id,
                "n_frames": self.n_frames,
                "k": self.k,
                "selected": list(self.selected),
                "sequence": list(self.sequence),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "RepetitionPlan":
        doc = json.loads(text)
        return cls(
            sample_id=doc["sample_id"],
            n_frames=doc["n_frames"],
            k=doc["k"],
            selected=tuple(doc["selected"]),
            sequence=tuple(doc["sequence"]),
        )

    def validate(self) -> None:
        n, k = self.n_frames, self.k
        if len(self.selected) != k or sorted(set(self.selected)) != list(self.selected):
            raise InternalError("selected must be k unique ascending indices")
        if len(self.sequence) != n + k:
            raise InternalError(f"sequence length {len(self.sequence)} != n+k={n + k}")
        chosen = set(self.selected)
        expect = []
        for i in range(n):
            expect.append(i)
            if i in chosen:
                expect.append(i)
        if list(self.sequence) != expect:
            raise InternalError("sequence is not the in-place duplication of selected")


def default_k(n_frames: int) -> int:
    """Scaled default: 8 repeats per 128 base frames, at least 1."""
    return max(1, round(n_frames / 16))


def top_k_indices(scores: np.ndarray, k: int) -> list[int]:
    """k highest-scoring frame indices, ascending; ties keep the earlier frame."""
    scores = np.asarray(scores, dtype=np.float64)
    n = scores.shape[0]
    if not 1 <= k <= n:
        raise ConfigError(f"k={k} outside [1, {n}]")
    winners = np.argsort(-scores, kind="stable")[:k]
    return sorted(int(i) for i in winners)


def plan_from_scores(sample_id: str, scores: np.ndarray, k: int) -> RepetitionPlan:
    n = int(np.asarray(scores).shape[0])
    selected = top_k_indices(scores, k)
    chosen = set(selected)
    sequence: list[int] = []
    for i in range(n):
        sequence.append(i)
        if i in chosen:
            sequence.append(i)
    plan_ = RepetitionPlan(
        sample_id=sample_id,
        n_frames=n,
        k=k,
        selected=tuple(selected),
        sequence=tuple(sequence),
    )
    plan_.validate()
    return plan_


def plan(
    sample: SampleRecord,
    params: ScorerParams,
    config: ScorerConfig,
    k: int | None = None,
) -> RepetitionPlan:
    """Score a sample and build its repetition plan."""
    if k is None:
        k = default_k(sample.n_frames)
    scores = forward(sample, params, config)
    return plan_from_scores(sample.sample_id, scores, k)


def plan_select_only(
    sample: SampleRecord,
    params: ScorerParams,
    config: ScorerConfig,
    k: int,
) -> list[int]:
    """Ablation mode: the k top-scored frames alone, ascending, no duplication."""
    scores = forward(sample, params, config)
    return top_k_indices(scores, k)
