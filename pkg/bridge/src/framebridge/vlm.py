"""Answering-model backends for the oracle server.

`ToyAnswerModel` is a deterministic closed-form stand-in used for protocol
conformance testing: option logits are derived from the stored sample
features, and presenting a frame more than once shifts the logits by that
frame's question relevance, so repetition measurably changes the returned
log-probabilities. `TransformersAnswerModel` scores the correct option
letter with a real vision-language model.
"""

from __future__ import annotations

import hashlib
import threading
from pathlib import Path

import numpy as np

from .config import BridgeConfig
from .prompts import OPTION_LETTERS, build_prompt
from .sampleio import BridgeSample, read_sample


class SampleStore:
    """Lazy directory-backed lookup of extracted samples by id."""

    def __init__(self, root: Path | str):
        self.root = Path(root)
        self._cache: dict[str, BridgeSample] = {}
        self._lock = threading.Lock()

    def get(self, sample_id: str) -> BridgeSample:
        with self._lock:
            if sample_id in self._cache:
                return self._cache[sample_id]
        path = self.root / sample_id
        if not (path / "manifest.json").is_file():
            raise KeyError(f"unknown sample_id {sample_id!r}")
        sample = read_sample(path)
        with self._lock:
            self._cache[sample_id] = sample
        return sample


def _validate_sequence(sequence, n_frames: int) -> np.ndarray:
    seq = np.asarray(sequence, dtype=np.intp)
    if seq.size < 1:
        raise ValueError("sequence must be nonempty")
    if seq.min() < 0 or seq.max() >= n_frames:
        raise ValueError(f"sequence indices outside [0, {n_frames})")
    return seq


class ToyAnswerModel:
    """Deterministic feature-based option scorer."""

    def __init__(self, store: SampleStore, seed: int = 0):
        self.store = store
        self.model_name = "toy-feature-scorer"
        self._rng = np.random.default_rng([seed, 0x70])
        self._lock = threading.Lock()

    def _base_logits(self, sample: BridgeSample) -> np.ndarray:
        digest = hashlib.blake2b(sample.sample_id.encode(), digest_size=8).digest()
        rng = np.random.default_rng(int.from_bytes(digest, "little"))
        logits = rng.normal(scale=0.8, size=sample.n_options)
        logits[sample.answer_id] += 0.5  # the right option starts plausible
        return logits

    def _logits(self, sample: BridgeSample, sequence) -> np.ndarray:
        seq = _validate_sequence(sequence, sample.frames.shape[0])
        logits = self._base_logits(sample)
        counts = np.bincount(seq, minlength=sample.frames.shape[0])
        extra = np.maximum(counts - 1, 0)
        # a repeated frame reinforces the correct option in proportion to its
        # question relevance (centered so irrelevant frames can hurt)
        relevance = sample.sims - sample.sims.mean() + 0.02
        logits[sample.answer_id] += 2.0 * float(extra @ relevance)
        return logits

    def logprob(self, sample_id: str, sequence, answer_id: int) -> float:
        sample = self.store.get(sample_id)
        if not 0 <= answer_id < sample.n_options:
            raise ValueError(f"answer_id {answer_id} outside [0, {sample.n_options})")
        logits = self._logits(sample, sequence)
        shifted = logits - logits.max()
        return float(shifted[answer_id] - np.log(np.exp(shifted).sum()))

    def sample_answer(self, sample_id: str, sequence, temperature: float = 1.0) -> int:
        sample = self.store.get(sample_id)
        logits = self._logits(sample, sequence)
        if temperature <= 1e-9:
            return int(np.argmax(logits))
        shifted = (logits - logits.max()) / temperature
        probs = np.exp(shifted)
        probs /= probs.sum()
        with self._lock:
            return int(self._rng.choice(sample.n_options, p=probs))


class TransformersAnswerModel:
    """Score option letters with a real VLM (requires the `real` extra).

    The prompt is rendered from the configured template; frames are passed in
    the request's sequence order, so a duplicated index is simply encoded
    twice. The returned value sums the log-probabilities of the option
    letter's tokens at the answer position.
    """

    def __init__(self, config: BridgeConfig, store: SampleStore, frame_root: Path | str):
        import torch
        from transformers import AutoModelForImageTextToText, AutoProcessor

        self._torch = torch
        self.store = store
        self.frame_root = Path(frame_root)
        self.model_name = config.vlm
        self.prompt_mode = config.prompt_mode
        self._processor = AutoProcessor.from_pretrained(config.vlm)
        self._model = (
            AutoModelForImageTextToText.from_pretrained(config.vlm)
            .to(config.device)
            .eval()
        )

    def _load_frames(self, sample_id: str, sequence) -> list:
        import cv2

        frame_dir = self.frame_root / sample_id
        images = []
        for index in sequence:
            path = frame_dir / f"{index:05d}.png"
            image = cv2.imread(str(path))
            if image is None:
                raise ValueError(f"missing rendered frame {path}")
            images.append(cv2.cvtColor(image, cv2.COLOR_BGR2RGB))
        return images

    def _prompt(self, sample: BridgeSample) -> str:
        return build_prompt(self.prompt_mode, sample.question, list(sample.options))

    def logprob(self, sample_id: str, sequence, answer_id: int) -> float:
        torch = self._torch
        sample = self.store.get(sample_id)
        _validate_sequence(sequence, sample.frames.shape[0])
        images = self._load_frames(sample_id, sequence)
        prompt = self._prompt(sample)
        letter = OPTION_LETTERS[answer_id]
        inputs = self._processor(
            text=prompt, images=images, return_tensors="pt"
        ).to(self._model.device)
        letter_ids = self._processor.tokenizer(letter, add_special_tokens=False).input_ids
        total = 0.0
        with torch.no_grad():
            generated = inputs["input_ids"]
            for token_id in letter_ids:
                logits = self._model(**{**inputs, "input_ids": generated}).logits[0, -1]
                logprobs = torch.log_softmax(logits, dim=-1)
                total += float(logprobs[token_id])
                generated = torch.cat(
                    [generated, torch.tensor([[token_id]], device=generated.device)], dim=1
                )
        return min(0.0, total)

    def sample_answer(self, sample_id: str, sequence, temperature: float = 1.0) -> int:
        sample = self.store.get(sample_id)
        scores = [
            self.logprob(sample_id, sequence, option)
            for option in range(sample.n_options)
        ]
        if temperature <= 1e-9:
            return int(np.argmax(scores))
        shifted = (np.asarray(scores) - max(scores)) / temperature
        probs = np.exp(shifted)
        probs /= probs.sum()
        return int(np.random.default_rng().choice(sample.n_options, p=probs))


def make_answer_model(config: BridgeConfig, store: SampleStore, frame_root=None):
    if config.vlm == "toy":
        return ToyAnswerModel(store)
    return TransformersAnswerModel(config, store, frame_root or store.root)
