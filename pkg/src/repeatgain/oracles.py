"""Oracle implementations: synthetic closed-form, replay, and remote client.

The synthetic oracle fabricates a world where every frame has a planted gain
w_i and the answer log-probability is exactly additive in single-frame
repeats, so a repeat-gain scan recovers w_i to machine precision. Frame
features are built so that w_i is a joint function of the frame embedding and
the question (a hidden linear image of the question vector), i.e. exactly the
kind of signal a question-conditioned scorer can learn. The replay oracle
serves persisted scan records; the remote client speaks the HTTP wire
protocol to an external model bridge.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import requests
from scipy.special import expit

from .aoi import FrameMultiset, RepeatGainRecord, baseline_multiset
from .errors import (
    ConfigError,
    ManifestError,
    OracleError,
    OracleProtocolError,
    OracleTransportError,
    ReplayMissError,
)
from .features import SampleRecord, load_sample, make_sample, save_sample

log = logging.getLogger(__name__)

DATASET_VERSION = 1


# --- synthetic world ---------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticOracleSpec:
    """Generator and oracle knobs for the synthetic benchmark world.

    Defaults are calibrated so that a full scan shows a mean absolute repeat
    gain near 0.105 and a mean best-minus-worst gain gap near 0.33 per sample.
    """

    seed: int = 0
    n_frames: int = 32
    dim: int = 32
    n_key_frames: int = 13
    gain_scale: float = 0.29
    noise_scale: float = 0.004
    saturation_cap: int = 4
    answer_temperature: float = 1.0
    key_alignment: float = 1.0
    n_tokens: int = 8
    token_noise: float = 0.1
    prior_alignment: float = 0.0
    qmap_rank: int | None = 4
    n_options: int = 4
    answer_center: float = -1.75

    def __post_init__(self) -> None:
        if not 1 <= self.n_key_frames <= self.n_frames:
            raise ConfigError("n_key_frames must be in [1, n_frames]")
        if self.gain_scale <= 0:
            raise ConfigError("gain_scale must be > 0")
        if self.noise_scale < 0:
            raise ConfigError("noise_scale must be >= 0")
        if self.saturation_cap < 2:
            raise ConfigError("saturation_cap must be >= 2")
        if not 0.0 <= self.prior_alignment <= 1.0:
            raise ConfigError("prior_alignment must be in [0, 1]")
        if self.n_options < 2:
            raise ConfigError("n_options must be >= 2")

    def oracle_id(self) -> str:
        digest = hashlib.sha1(
            json.dumps(asdict(self), sort_keys=True).encode()
        ).hexdigest()[:12]
        return f"synthetic-{digest}"


@dataclass
class TruthRecord:
    """Hidden per-sample ground truth written as a sidecar next to the features."""

    sample_id: str
    base_logprob: float
    gains: list[float]
    key_frames: list[int]
    answer_id: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "TruthRecord":
        return cls(**json.loads(text))


def _normalize(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _question_map(spec: SyntheticOracleSpec) -> np.ndarray:
    """Fixed map from question space to the hidden importance direction.

    A blend of the identity and a seeded random rotation: at prior_alignment 1
    frame importance lines up with plain question similarity, at 0 it is
    unrelated to it and must be learned from the joint (frame, question)
    structure.
    """
    rng = np.random.default_rng([spec.seed, 0x4D17])
    if spec.qmap_rank is None:
        raw_q, raw_r = np.linalg.qr(rng.standard_normal((spec.dim, spec.dim)))
        hidden = raw_q * np.sign(np.diag(raw_r))  # Haar-uniform sign convention
    else:
        r = spec.qmap_rank
        lift = rng.standard_normal((spec.dim, r))
        project = rng.standard_normal((r, spec.dim))
        hidden = lift @ project / np.sqrt(r * spec.dim)
    return spec.prior_alignment * np.eye(spec.dim) + (1.0 - spec.prior_alignment) * hidden


def _generate_one(
    spec: SyntheticOracleSpec, index: int, qmap: np.ndarray
) -> tuple[SampleRecord, TruthRecord]:
    rng = np.random.default_rng([spec.seed, 1, index])
    n, d = spec.n_frames, spec.dim
    sample_id = f"sample_{index:05d}"

    q = _normalize(rng.standard_normal(d))
    u = _normalize(qmap @ q)
    key_frames = np.sort(rng.choice(n, size=spec.n_key_frames, replace=False))

    frames = np.empty((n, d))
    is_key = np.zeros(n, dtype=bool)
    is_key[key_frames] = True
    for i in range(n):
        noise = rng.standard_normal(d)
        if is_key[i]:
            # noise rescaled to unit expected norm, so key_alignment is a
            # signal-to-noise ratio independent of the embedding width
            frames[i] = _normalize(spec.key_alignment * u + noise / np.sqrt(d))
        else:
            frames[i] = _normalize(noise)

    base_logprob = float(rng.uniform(-3.0, -0.5))
    gains = spec.gain_scale * (frames @ u) + spec.noise_scale * rng.standard_normal(n)
    # keep every single-repeat log-prob strictly below zero so the additive
    # form is never clamped and scans recover the planted gains exactly
    gains = np.minimum(gains, -base_logprob - 1e-3)

    tokens = q + spec.token_noise * rng.standard_normal((spec.n_tokens, d))
    tokens /= np.linalg.norm(tokens, axis=1, keepdims=True)
    answer_id = int(rng.integers(spec.n_options))

    record = make_sample(
        sample_id, frames, tokens, pooled=q, answer_id=answer_id, n_options=spec.n_options
    )
    truth = TruthRecord(
        sample_id=sample_id,
        base_logprob=base_logprob,
        gains=[float(g) for g in gains],
        key_frames=[int(k) for k in key_frames],
        answer_id=answer_id,
    )
    return record, truth


class SyntheticOracle:
    """Closed-form oracle over planted per-frame gains.

    logprob = clamp_0(base + sum_i w_i * min(count_i - 1, cap - 1)): strictly
    additive for single-frame repeats, saturating for higher multiplicities.
    """

    def __init__(self, spec: SyntheticOracleSpec, truths: dict[str, TruthRecord]):
        self.spec = spec
        self.oracle_id = spec.oracle_id()
        self._truths = truths
        self._answer_rng = np.random.default_rng([spec.seed, 0xA27])
        self._lock = threading.Lock()

    def _truth(self, sample_id: str) -> TruthRecord:
        try:
            return self._truths[sample_id]
        except KeyError:
            raise OracleError(f"unknown sample_id {sample_id!r}") from None

    def raw_logprob(self, sample_id: str, sequence: FrameMultiset) -> float:
        """Pre-clamp value of the additive form (diagnostic)."""
        truth = self._truth(sample_id)
        n = len(truth.gains)
        if len(sequence) < 1:
            raise OracleError("sequence must be nonempty")
        seq = np.asarray(sequence, dtype=np.intp)
        if seq.min(initial=0) < 0 or seq.max(initial=0) >= n:
            raise OracleError(f"sequence indices outside [0, {n})")
        counts = np.bincount(seq, minlength=n)
        mult = np.minimum(np.maximum(counts - 1, 0), self.spec.saturation_cap - 1)
        return truth.base_logprob + float(np.asarray(truth.gains) @ mult)

    def logprob(self, sample_id: str, sequence: FrameMultiset, answer_id: int) -> float:
        truth = self._truth(sample_id)
        correct = min(0.0, self.raw_logprob(sample_id, sequence))
        if answer_id == truth.answer_id:
            return correct
        residual = max(1.0 - np.exp(correct), 1e-300)
        return float(np.log(residual / (self.spec.n_options - 1)))

    def sample_answer(
        self, sample_id: str, sequence: FrameMultiset, temperature: float = 1.0
    ) -> int:
        """Pick the true option with probability sigmoid((l - center) / T)."""
        truth = self._truth(sample_id)
        lp = self.logprob(sample_id, sequence, truth.answer_id)
        temp = max(self.spec.answer_temperature * temperature, 1e-9)
        p_correct = float(expit((lp - self.spec.answer_center) / temp))
        with self._lock:
            if self._answer_rng.random() < p_correct:
                return truth.answer_id
            wrong = int(self._answer_rng.integers(self.spec.n_options - 1))
        return wrong if wrong < truth.answer_id else wrong + 1


@dataclass
class SyntheticDataset:
    """Samples plus their hidden truth; the oracle is derived from the truth."""

    spec: SyntheticOracleSpec
    samples: list[SampleRecord]
    truth: dict[str, TruthRecord] = field(repr=False)

    def oracle(self) -> SyntheticOracle:
        return SyntheticOracle(self.spec, self.truth)

    def save(self, out_dir: Path | str) -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        sample_dirs = []
        for record in self.samples:
            rel = record.sample_id
            save_sample(record, out_dir / rel)
            (out_dir / rel / "truth.json").write_text(self.truth[record.sample_id].to_json())
            sample_dirs.append(rel)
        index = {
            "format_version": DATASET_VERSION,
            "kind": "synthetic",
            "n_samples": len(self.samples),
            "oracle_spec": asdict(self.spec),
            "samples": sample_dirs,
        }
        path = out_dir / "dataset.json"
        path.write_text(json.dumps(index, indent=2) + "\n")
        return path

    @classmethod
    def load(cls, in_dir: Path | str) -> "SyntheticDataset":
        in_dir = Path(in_dir)
        index = _load_dataset_index(in_dir)
        if index.get("kind") != "synthetic" or "oracle_spec" not in index:
            raise ManifestError(f"{in_dir}: not a synthetic dataset")
        spec = SyntheticOracleSpec(**index["oracle_spec"])
        samples, truth = [], {}
        for rel in index["samples"]:
            record = load_sample(in_dir / rel / "manifest.json")
            truth_path = in_dir / rel / "truth.json"
            if not truth_path.is_file():
                raise ManifestError(f"missing truth sidecar: {truth_path}")
            samples.append(record)
            truth[record.sample_id] = TruthRecord.from_json(truth_path.read_text())
        return cls(spec=spec, samples=samples, truth=truth)


def _load_dataset_index(in_dir: Path) -> dict:
    path = in_dir / "dataset.json"
    if not path.is_file():
        raise ManifestError(f"dataset index not found: {path}")
    index = json.loads(path.read_text())
    if index.get("format_version") != DATASET_VERSION:
        raise ManifestError(f"{path}: unsupported dataset format_version")
    return index


def load_samples(in_dir: Path | str) -> list[SampleRecord]:
    """Load just the feature records of any dataset directory."""
    in_dir = Path(in_dir)
    index = _load_dataset_index(in_dir)
    return [load_sample(in_dir / rel / "manifest.json") for rel in index["samples"]]


def generate_synthetic_dataset(
    spec: SyntheticOracleSpec, n_samples: int, start_index: int = 0
) -> SyntheticDataset:
    """Deterministically fabricate `n_samples` feature records with hidden gains.

    Samples are indexed within one shared world (one hidden question map per
    spec seed), so disjoint `start_index` ranges give train/held-out splits
    that share the structure a scorer is supposed to learn.
    """
    if n_samples < 1:
        raise ConfigError("n_samples must be >= 1")
    if start_index < 0:
        raise ConfigError("start_index must be >= 0")
    qmap = _question_map(spec)
    samples, truth = [], {}
    for i in range(start_index, start_index + n_samples):
        record, t = _generate_one(spec, i, qmap)
        samples.append(record)
        truth[record.sample_id] = t
    return SyntheticDataset(spec=spec, samples=samples, truth=truth)


def gain_statistics(dataset: SyntheticDataset) -> dict[str, float]:
    """Per-sample mean |gain| and best-minus-worst gap, averaged over samples."""
    mean_abs, gaps = [], []
    for t in dataset.truth.values():
        g = np.asarray(t.gains)
        mean_abs.append(np.abs(g).mean())
        gaps.append(g.max() - g.min())
    return {
        "mean_abs_gain": float(np.mean(mean_abs)),
        "mean_best_worst_gap": float(np.mean(gaps)),
    }


# --- replay ------------------------------------------------------------------------


def _classify_sequence(sequence: FrameMultiset) -> tuple[str, int]:
    """Recognize baseline [0..n-1] or single-repeat [0..i,i,..n-1] sequences."""
    n = len(sequence)
    if sequence == list(range(n)):
        return "baseline", -1
    m = n - 1
    for i, (a, b) in enumerate(zip(sequence, sequence[1:])):
        if a == b:
            rest = sequence[:i] + sequence[i + 1:]
            if rest == list(range(m)):
                return "repeat", a
            break
    raise ReplayMissError(f"sequence {sequence} is neither baseline nor single-repeat")


class ReplayOracle:
    """Serve logprobs from persisted scan records; never fabricates a value."""

    def __init__(self, records: dict[str, RepeatGainRecord], oracle_id: str | None = None):
        self._records = records
        ids = {r.oracle_id for r in records.values()}
        if oracle_id is None:
            if len(ids) > 1:
                raise ConfigError(f"records from multiple oracles: {sorted(ids)}")
            oracle_id = next(iter(ids)) if ids else "replay-empty"
        self.oracle_id = f"replay({oracle_id})"

    @classmethod
    def from_dir(cls, records_dir: Path | str) -> "ReplayOracle":
        records = {}
        for path in sorted(Path(records_dir).glob("*.json")):
            try:
                record = RepeatGainRecord.load(path)
            except (KeyError, TypeError, json.JSONDecodeError):
                log.debug("skipping non-record file %s", path)
                continue
            records[record.sample_id] = record
        return cls(records)

    def logprob(self, sample_id: str, sequence: FrameMultiset, answer_id: int) -> float:
        record = self._records.get(sample_id)
        if record is None:
            raise ReplayMissError(f"no record for sample {sample_id!r}")
        kind, frame = _classify_sequence(list(sequence))
        if kind == "baseline":
            return record.baseline_logprob
        for entry in record.entries:
            if entry.frame == frame:
                return entry.logprob
        raise ReplayMissError(f"sample {sample_id!r} has no entry for frame {frame}")

    def sample_answer(self, sample_id: str, sequence: FrameMultiset, temperature: float = 1.0) -> int:
        raise OracleError("replay oracle cannot sample answers")


# --- remote wire-protocol client ------------------------------------------------------


class RemoteOracle:
    """HTTP client for the oracle wire protocol.

    POST /v1/logprob  {sample_id, sequence, answer_id} -> {logprob}
    POST /v1/answer   {sample_id, sequence, temperature} -> {answer_id}
    GET  /v1/health   -> {oracle_id, model_name}

    logprob calls are read-only and retried with exponential backoff; answer
    sampling is attempted once. At most `in_flight_budget` requests run
    concurrently.
    """

    def __init__(
        self,
        endpoint: str,
        auth_token: str | None = None,
        in_flight_budget: int = 4,
        timeout: float = 30.0,
        retries: int = 3,
        backoff: float = 0.25,
    ):
        if in_flight_budget < 1:
            raise ConfigError("in_flight_budget must be >= 1")
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self.retry_count = 0
        self._session = requests.Session()
        if auth_token:
            self._session.headers["Authorization"] = f"Bearer {auth_token}"
        self._slots = threading.BoundedSemaphore(in_flight_budget)
        self._oracle_id: str | None = None

    @property
    def oracle_id(self) -> str:
        if self._oracle_id is None:
            self._oracle_id = str(self.health()["oracle_id"])
        return self._oracle_id

    def _roundtrip(self, method: str, path: str, payload: dict | None) -> dict:
        url = f"{self.endpoint}{path}"
        with self._slots:
            try:
                if method == "GET":
                    resp = self._session.get(url, timeout=self.timeout)
                else:
                    resp = self._session.post(url, json=payload, timeout=self.timeout)
            except requests.RequestException as exc:
                raise OracleTransportError(f"{method} {url}: {exc}") from exc
        if resp.status_code >= 500:
            raise OracleTransportError(f"{method} {url}: HTTP {resp.status_code}")
        if resp.status_code != 200:
            raise OracleProtocolError(
                f"{method} {url}: HTTP {resp.status_code}: {resp.text[:200]}"
            )
        try:
            return resp.json()
        except ValueError as exc:
            raise OracleProtocolError(f"{method} {url}: non-JSON body") from exc

    def _roundtrip_with_retries(self, method: str, path: str, payload: dict | None) -> dict:
        attempt = 0
        while True:
            try:
                return self._roundtrip(method, path, payload)
            except OracleTransportError:
                if attempt >= self.retries:
                    raise
                delay = self.backoff * (2**attempt)
                attempt += 1
                self.retry_count += 1
                log.info("retrying %s %s (attempt %d) after %.2fs", method, path, attempt, delay)
                time.sleep(delay)

    @staticmethod
    def _field(body: dict, name: str, path: str):
        if name not in body:
            raise OracleProtocolError(f"{path}: response missing field {name!r}")
        return body[name]

    def health(self) -> dict:
        body = self._roundtrip_with_retries("GET", "/v1/health", None)
        self._field(body, "oracle_id", "/v1/health")
        return body

    def logprob(self, sample_id: str, sequence: FrameMultiset, answer_id: int) -> float:
        body = self._roundtrip_with_retries(
            "POST",
            "/v1/logprob",
            {"sample_id": sample_id, "sequence": list(sequence), "answer_id": answer_id},
        )
        value = self._field(body, "logprob", "/v1/logprob")
        try:
            return float(value)
        except (TypeError, ValueError) as exc:
            raise OracleProtocolError(f"/v1/logprob: non-numeric logprob {value!r}") from exc

    def sample_answer(
        self, sample_id: str, sequence: FrameMultiset, temperature: float = 1.0
    ) -> int:
        body = self._roundtrip(
            "POST",
            "/v1/answer",
            {"sample_id": sample_id, "sequence": list(sequence), "temperature": temperature},
        )
        value = self._field(body, "answer_id", "/v1/answer")
        try:
            return int(value)
        except (TypeError, ValueError) as exc:
            raise OracleProtocolError(f"/v1/answer: non-integer answer_id {value!r}") from exc


def scan_baseline_sequence(n: int) -> FrameMultiset:
    """Convenience re-export so callers need not import aoi for one helper."""
    return baseline_multiset(n)
