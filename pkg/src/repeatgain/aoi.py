"""Add-One-In supervision: measure each frame's repeat gain through an oracle.

For a sample with n frames, one baseline oracle call scores the unmodified
sequence [0..n-1]; then each candidate frame i is duplicated in place (the
copy immediately after the original) and rescored. The gain of frame i is the
log-probability difference against the baseline. A scan therefore costs
exactly |candidates| + 1 oracle calls.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Protocol, runtime_checkable

import numpy as np

from .errors import ConfigError, OracleError
from .features import SampleRecord

log = logging.getLogger(__name__)

FrameMultiset = list[int]
"""Ordered frame indices exactly as presented to the answering model."""


@runtime_checkable
class OracleHandle(Protocol):
    """Answer-probability interface standing in for the frozen backbone."""

    oracle_id: str

    def logprob(self, sample_id: str, sequence: FrameMultiset, answer_id: int) -> float:
        """log P(answer | frames in `sequence` order, question). Always <= 0."""
        ...

    def sample_answer(
        self, sample_id: str, sequence: FrameMultiset, temperature: float = 1.0
    ) -> int:
        """Stochastically decode one answer option."""
        ...


def baseline_multiset(n_frames: int) -> FrameMultiset:
    if n_frames < 1:
        raise ConfigError("need at least one frame")
    return list(range(n_frames))


def repeat_multiset(n_frames: int, frame: int) -> FrameMultiset:
    """[0..frame, frame, frame+1..n-1]: the duplicate sits right after the original."""
    if not 0 <= frame < n_frames:
        raise ConfigError(f"frame {frame} outside [0, {n_frames})")
    seq = list(range(n_frames))
    seq.insert(frame + 1, frame)
    return seq


@dataclass(frozen=True)
class GainEntry:
    frame: int
    logprob: float
    gain: float


@dataclass
class RepeatGainRecord:
    """Per-sample scan result; persisted as one JSON document."""

    sample_id: str
    baseline_logprob: float
    entries: list[GainEntry]
    complete: bool
    oracle_id: str
    failed: list[int] = field(default_factory=list)

    @property
    def candidate_frames(self) -> list[int]:
        return [e.frame for e in self.entries]

    def gains(self) -> np.ndarray:
        return np.array([e.gain for e in self.entries])

    def to_json(self) -> str:
        doc = {
            "sample_id": self.sample_id,
            "baseline_logprob": self.baseline_logprob,
            "entries": [asdict(e) for e in self.entries],
            "complete": self.complete,
            "oracle_id": self.oracle_id,
            "failed": self.failed,
        }
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RepeatGainRecord":
        doc = json.loads(text)
        return cls(
            sample_id=doc["sample_id"],
            baseline_logprob=doc["baseline_logprob"],
            entries=[GainEntry(**e) for e in doc["entries"]],
            complete=doc["complete"],
            oracle_id=doc["oracle_id"],
            failed=list(doc.get("failed", [])),
        )

    def save(self, path: Path | str) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text(self.to_json())
        tmp.replace(path)  # atomic per record, so interrupted scans resume cleanly

    @classmethod
    def load(cls, path: Path | str) -> "RepeatGainRecord":
        return cls.from_json(Path(path).read_text())


def baseline_logprob(sample: SampleRecord, oracle: OracleHandle) -> float:
    """Score the unmodified frame sequence once."""
    try:
        return oracle.logprob(
            sample.sample_id, baseline_multiset(sample.n_frames), sample.answer_id
        )
    except OracleError as exc:
        raise OracleError(f"baseline scan failed for {sample.sample_id}: {exc}") from exc


def scan_repeat_gains(
    sample: SampleRecord,
    candidates,
    oracle: OracleHandle,
    max_in_flight: int = 1,
) -> RepeatGainRecord:
    """One baseline call plus one repeat call per candidate frame.

    Candidate indices must be unique and in range. Per-candidate oracle
    failures mark the record incomplete and are listed in `failed`; calls may
    fan out over `max_in_flight` threads, with results assembled in
    frame-index order either way.
    """
    cand = [int(c) for c in candidates]
    if not cand:
        raise ConfigError("candidate set must be nonempty")
    if len(set(cand)) != len(cand):
        raise ConfigError(f"duplicate candidate indices: {sorted(cand)}")
    for c in cand:
        if not 0 <= c < sample.n_frames:
            raise ConfigError(f"candidate {c} outside [0, {sample.n_frames})")
    cand = sorted(cand)

    base = baseline_logprob(sample, oracle)

    def score_one(frame: int) -> float:
        seq = repeat_multiset(sample.n_frames, frame)
        return oracle.logprob(sample.sample_id, seq, sample.answer_id)

    results: dict[int, float] = {}
    failures: dict[int, Exception] = {}
    if max_in_flight > 1 and len(cand) > 1:
        with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
            futures = {frame: pool.submit(score_one, frame) for frame in cand}
            for frame, fut in futures.items():
                try:
                    results[frame] = fut.result()
                except OracleError as exc:
                    failures[frame] = exc
    else:
        for frame in cand:
            try:
                results[frame] = score_one(frame)
            except OracleError as exc:
                failures[frame] = exc

    entries = [
        GainEntry(frame=f, logprob=results[f], gain=results[f] - base)
        for f in cand
        if f in results
    ]
    failed = sorted(failures)
    if failed:
        log.warning(
            "scan of %s incomplete: %d/%d candidates failed",
            sample.sample_id,
            len(failed),
            len(cand),
        )
    return RepeatGainRecord(
        sample_id=sample.sample_id,
        baseline_logprob=base,
        entries=entries,
        complete=not failed,
        oracle_id=oracle.oracle_id,
        failed=failed,
    )


def select_candidates(scores: np.ndarray, k: int, seed) -> list[int]:
    """Top-k scored frames plus k distinct random frames from the rest.

    Ties break toward the lower frame index; the random half excludes the
    top half, so the result always has min(2k, n) distinct indices. Returned
    sorted ascending.
    """
    scores = np.asarray(scores, dtype=np.float64)
    n = scores.shape[0]
    if k < 1:
        raise ConfigError("k must be >= 1")
    if k > n:
        raise ConfigError(f"k={k} exceeds frame count {n}")
    top = np.argsort(-scores, kind="stable")[:k]
    remaining = np.setdiff1d(np.arange(n), top)
    rng = np.random.default_rng(seed)
    n_random = min(k, remaining.size)
    random_half = rng.choice(remaining, size=n_random, replace=False)
    return sorted(int(i) for i in np.concatenate([top, random_half]))


def filter_dataset(
    samples: list[SampleRecord],
    oracle: OracleHandle,
    trials: int = 5,
    temperature: float = 1.0,
) -> list[SampleRecord]:
    """Keep samples the oracle answers inconsistently over `trials` draws.

    All-correct and all-wrong samples carry no usable ranking signal and are
    dropped; oracle failures skip the sample with a warning.
    """
    if trials < 2:
        raise ConfigError("trials must be >= 2")
    retained: list[SampleRecord] = []
    n_failed = 0
    for sample in samples:
        seq = baseline_multiset(sample.n_frames)
        try:
            answers = [
                oracle.sample_answer(sample.sample_id, seq, temperature)
                for _ in range(trials)
            ]
        except OracleError as exc:
            n_failed += 1
            log.warning("filter skipped %s: %s", sample.sample_id, exc)
            continue
        n_correct = sum(a == sample.answer_id for a in answers)
        if 0 < n_correct < trials:
            retained.append(sample)
    if n_failed:
        log.warning("filter_dataset skipped %d samples on oracle failures", n_failed)
    return retained
