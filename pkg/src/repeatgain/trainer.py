"""Training orchestration and ranking evaluation.

Per sample: score all frames with the current weights, pick the candidate set
(current top-k plus k random), obtain its repeat gains from the oracle (or a
cached scan record), build the loss, and accumulate gradients; an optimizer
step fires every `grad_accumulation` samples. Scan records can be cached
keyed by (sample, oracle, candidate set), making repeat runs oracle-free and
bit-reproducible.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import stats

from . import numerics as nm
from .aoi import OracleHandle, RepeatGainRecord, scan_repeat_gains, select_candidates
from .errors import ConfigError, OracleError, RunError
from .features import SampleRecord
from .losses import LossConfig, total_loss
from .oracles import TruthRecord
from .planner import top_k_indices
from .scorer import ScorerConfig, ScorerParams, forward, forward_tensor, register_params

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    epochs: int = 1
    grad_accumulation: int = 4
    k_candidates: int = 16
    loss: LossConfig = field(default_factory=LossConfig)
    seed: int = 0
    cache_dir: Path | None = None
    refresh_candidates_per_epoch: bool = True
    max_in_flight: int = 1

    def __post_init__(self) -> None:
        # 0 is allowed so dry runs can verify plumbing without moving weights
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be >= 0")
        if self.epochs < 1 or self.grad_accumulation < 1 or self.k_candidates < 1:
            raise ConfigError("epochs, grad_accumulation and k_candidates must be >= 1")


@dataclass
class StepLog:
    step: int
    loss: float
    score_std: float
    elapsed_s: float
    oracle_calls: int
    samples: int
    skipped: int

    def to_json(self) -> str:
        return json.dumps(asdict(self))


@dataclass
class TrainLog:
    """One entry per optimizer step, plus run-level counters."""

    steps: list[StepLog] = field(default_factory=list)
    total_oracle_calls: int = 0
    skipped_samples: int = 0

    def losses(self) -> np.ndarray:
        return np.array([s.loss for s in self.steps])

    def score_stds(self) -> np.ndarray:
        return np.array([s.score_std for s in self.steps])

    def save_ndjson(self, path: Path | str) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = [s.to_json() for s in self.steps]
        lines.append(
            json.dumps(
                {
                    "summary": True,
                    "total_oracle_calls": self.total_oracle_calls,
                    "skipped_samples": self.skipped_samples,
                }
            )
        )
        path.write_text("\n".join(lines) + "\n")


class _CountingOracle:
    """Pass-through wrapper that counts logprob calls."""

    def __init__(self, inner: OracleHandle):
        self._inner = inner
        self.oracle_id = inner.oracle_id
        self.calls = 0

    def logprob(self, sample_id, sequence, answer_id):
        self.calls += 1
        return self._inner.logprob(sample_id, sequence, answer_id)

    def sample_answer(self, sample_id, sequence, temperature=1.0):
        return self._inner.sample_answer(sample_id, sequence, temperature)


def _cache_path(cache_dir: Path, sample_id: str, oracle_id: str, candidates) -> Path:
    key = f"{sample_id}|{oracle_id}|{','.join(map(str, candidates))}"
    digest = hashlib.sha1(key.encode()).hexdigest()[:20]
    return cache_dir / f"{digest}.json"


def _obtain_record(
    sample: SampleRecord,
    candidates: list[int],
    oracle: _CountingOracle,
    config: TrainConfig,
) -> RepeatGainRecord:
    if config.cache_dir is not None:
        path = _cache_path(Path(config.cache_dir), sample.sample_id, oracle.oracle_id, candidates)
        if path.is_file():
            record = RepeatGainRecord.load(path)
            if record.complete and record.candidate_frames == sorted(candidates):
                return record
        record = scan_repeat_gains(sample, candidates, oracle, config.max_in_flight)
        if record.complete:
            record.save(path)
        return record
    return scan_repeat_gains(sample, candidates, oracle, config.max_in_flight)


def train(
    samples: list[SampleRecord],
    oracle: OracleHandle,
    params: ScorerParams,
    scorer_config: ScorerConfig,
    config: TrainConfig,
    on_step: Callable[[int, ScorerParams], None] | None = None,
) -> tuple[ScorerParams, TrainLog]:
    """Run the training loop; returns updated params and the step log.

    Deterministic for a fixed config seed given a deterministic oracle (or a
    warm cache). Samples whose scan fails are skipped and counted; the run
    fails only if an entire epoch contributes nothing.
    """
    if not samples:
        raise RunError("empty dataset")
    counting = _CountingOracle(oracle)
    arrays = [a.copy() for a in params.as_list()]
    adam_state = nm.AdamState.initial(arrays)
    train_log = TrainLog()
    started = time.monotonic()

    step = 0
    for epoch in range(config.epochs):
        epoch_contributed = 0
        acc_grads = [np.zeros_like(a) for a in arrays]
        window_losses: list[float] = []
        window_stds: list[float] = []
        window_skipped = 0
        calls_at_window_start = counting.calls

        def flush_window():
            nonlocal arrays, adam_state, step, acc_grads
            nonlocal window_losses, window_stds, window_skipped, calls_at_window_start
            if not window_losses:
                return
            n = len(window_losses)
            mean_grads = [g / n for g in acc_grads]
            arrays, adam_state = nm.adam_step(
                arrays, mean_grads, adam_state, lr=config.learning_rate
            )
            step += 1
            train_log.steps.append(
                StepLog(
                    step=step,
                    loss=float(np.mean(window_losses)),
                    score_std=float(np.mean(window_stds)) if window_stds else 0.0,
                    elapsed_s=time.monotonic() - started,
                    oracle_calls=counting.calls - calls_at_window_start,
                    samples=n,
                    skipped=window_skipped,
                )
            )
            if on_step is not None:
                on_step(step, ScorerParams.from_list([a.copy() for a in arrays]))
            acc_grads = [np.zeros_like(a) for a in arrays]
            window_losses, window_stds = [], []
            window_skipped = 0
            calls_at_window_start = counting.calls

        for index, sample in enumerate(samples):
            current = ScorerParams.from_list(arrays)
            scores = forward(sample, current, scorer_config)
            window_stds.append(float(scores.std()))

            cand_epoch = epoch if config.refresh_candidates_per_epoch else 0
            candidates = select_candidates(
                scores,
                min(config.k_candidates, sample.n_frames),
                seed=[config.seed, cand_epoch, index, 0],
            )
            try:
                record = _obtain_record(sample, candidates, counting, config)
            except OracleError as exc:
                window_skipped += 1
                train_log.skipped_samples += 1
                log.warning("skipping %s: %s", sample.sample_id, exc)
                continue
            if not record.complete or len(record.entries) < 2:
                window_skipped += 1
                train_log.skipped_samples += 1
                log.warning("skipping %s: incomplete scan", sample.sample_id)
                continue

            pool = np.setdiff1d(np.arange(sample.n_frames), record.candidate_frames)
            n_extra = min(config.loss.n_extra_negatives, pool.size)
            extras_rng = np.random.default_rng([config.seed, epoch, index, 1])
            extras = (
                np.sort(extras_rng.choice(pool, size=n_extra, replace=False))
                if n_extra
                else np.array([], dtype=np.intp)
            )

            tape = nm.GradTape()
            pmap = register_params(tape, current)
            scores_t = forward_tensor(sample, pmap, scorer_config)
            loss_t = total_loss(
                scores_t, record.candidate_frames, record.gains(), extras, config.loss
            )
            grads = nm.backward(tape, loss_t)
            for acc, g in zip(acc_grads, grads):
                acc += g
            window_losses.append(loss_t.item())
            epoch_contributed += 1

            if len(window_losses) == config.grad_accumulation:
                flush_window()

        flush_window()  # partial tail window still steps
        if epoch_contributed == 0:
            raise RunError(f"epoch {epoch}: every sample was skipped")

    train_log.total_oracle_calls = counting.calls
    return ScorerParams.from_list(arrays), train_log


# --- evaluation --------------------------------------------------------------------


def _spearman(a: np.ndarray, b: np.ndarray) -> float:
    # rank correlation is 0 by convention when either side is constant
    if np.std(a) == 0.0 or np.std(b) == 0.0:
        return 0.0
    return float(stats.spearmanr(a, b).statistic)


def evaluate_ranking(
    params: ScorerParams,
    scorer_config: ScorerConfig,
    samples: list[SampleRecord],
    truth: dict[str, TruthRecord],
    k: int = 8,
) -> dict[str, float]:
    """Score held-out samples against their hidden per-frame gains.

    Reports the mean Spearman correlation between predicted scores and true
    gains, recall of the planted key frames within the top-k selection, and
    the mean true gain of the k frames the planner would duplicate.
    """
    if not samples:
        raise ConfigError("no samples to evaluate")
    spearmans, recalls, planned_gains = [], [], []
    for sample in samples:
        t = truth.get(sample.sample_id)
        if t is None:
            raise ConfigError(f"no ground truth for {sample.sample_id}")
        scores = forward(sample, params, scorer_config)
        gains = np.asarray(t.gains)
        spearmans.append(_spearman(scores, gains))
        top = top_k_indices(scores, min(k, sample.n_frames))
        hits = len(set(top) & set(t.key_frames))
        recalls.append(hits / min(k, len(t.key_frames)))
        planned_gains.append(float(gains[top].mean()))
    return {
        "spearman": float(np.mean(spearmans)),
        "recall_at_k": float(np.mean(recalls)),
        "mean_planned_gain": float(np.mean(planned_gains)),
        "k": float(k),
        "n_samples": float(len(samples)),
    }


def evaluate_plan_strategies(
    params: ScorerParams,
    scorer_config: ScorerConfig,
    samples: list[SampleRecord],
    truth: dict[str, TruthRecord],
    k: int = 8,
    seed: int = 0,
) -> dict[str, float]:
    """Mean true gain of top-k, random-k and bottom-k repetition plans.

    The random strategy also reports the standard error of its mean, the
    yardstick for separation between strategies.
    """
    rng = np.random.default_rng(seed)
    top, bottom, random_ = [], [], []
    for sample in samples:
        t = truth[sample.sample_id]
        gains = np.asarray(t.gains)
        scores = forward(sample, params, scorer_config)
        kk = min(k, sample.n_frames)
        top.append(gains[top_k_indices(scores, kk)].mean())
        bottom.append(gains[top_k_indices(-scores, kk)].mean())
        random_.append(gains[rng.choice(sample.n_frames, size=kk, replace=False)].mean())
    random_arr = np.asarray(random_)
    return {
        "top_k": float(np.mean(top)),
        "random_k": float(random_arr.mean()),
        "bottom_k": float(np.mean(bottom)),
        "random_k_sem": float(random_arr.std(ddof=1) / np.sqrt(len(random_arr))),
        "k": float(k),
        "n_samples": float(len(samples)),
    }
