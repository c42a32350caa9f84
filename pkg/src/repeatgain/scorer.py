"""The frame-repeat scoring network.

Pipeline per sample: add sinusoidal positional encodings to the frame
embeddings, cross-attend from each frame (query) to the question tokens
(keys/values) with multiple heads, refine through residual+LayerNorm and a
GELU feed-forward block, map to a scalar per frame with a two-layer ReLU
head, then add a zero-centered question-similarity prior. Frames never attend
to each other; each row is scored independently given the question.

All math runs on :mod:`repeatgain.numerics` tensors, so the same code path
serves gradient-free inference (constants) and training (taped parameters).
"""

from __future__ import annotations

import io
import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import numerics as nm
from .errors import CheckpointError, ConfigError, DimensionError
from .features import SampleRecord

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ScorerConfig:
    dim: int = 768
    n_heads: int = 8
    ffn_hidden: int = 768
    prior_weight: float = 5.0
    ln_eps: float = 1e-5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.dim % 2 != 0:
            raise ConfigError(f"dim must be even for positional encoding, got {self.dim}")
        if self.dim % self.n_heads != 0:
            raise ConfigError(f"dim {self.dim} not divisible by n_heads {self.n_heads}")
        if self.dim % 4 != 0:
            raise ConfigError(f"dim {self.dim} not divisible by 4 (score head width d/4)")
        if self.ffn_hidden < 1:
            raise ConfigError("ffn_hidden must be >= 1")
        if self.prior_weight < 0:
            raise ConfigError("prior_weight must be >= 0")

    @property
    def head_dim(self) -> int:
        return self.dim // self.n_heads

    @property
    def score_hidden(self) -> int:
        return self.dim // 4


# Field order is the canonical flattening order (optimizer state, checkpoints).
@dataclass
class ScorerParams:
    w_q: np.ndarray
    b_q: np.ndarray
    w_k: np.ndarray
    b_k: np.ndarray
    w_v: np.ndarray
    b_v: np.ndarray
    w_o: np.ndarray
    b_o: np.ndarray
    ln1_gain: np.ndarray
    ln1_bias: np.ndarray
    ffn_w1: np.ndarray
    ffn_b1: np.ndarray
    ffn_w2: np.ndarray
    ffn_b2: np.ndarray
    ln2_gain: np.ndarray
    ln2_bias: np.ndarray
    head_w1: np.ndarray
    head_b1: np.ndarray
    head_w2: np.ndarray
    head_b2: np.ndarray

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    def as_list(self) -> list[np.ndarray]:
        return [getattr(self, name) for name in self.field_names()]

    @classmethod
    def from_list(cls, arrays: list[np.ndarray]) -> "ScorerParams":
        names = cls.field_names()
        if len(arrays) != len(names):
            raise DimensionError(f"expected {len(names)} arrays, got {len(arrays)}")
        return cls(**dict(zip(names, arrays)))

    def count(self) -> int:
        return sum(a.size for a in self.as_list())


def expected_param_count(config: ScorerConfig) -> int:
    """Closed-form scalar parameter count for a config (shape-sum)."""
    d, h, q = config.dim, config.ffn_hidden, config.score_hidden
    attn = 4 * (d * d + d)
    norms = 2 * 2 * d
    ffn = (d * h + h) + (h * d + d)
    head = (d * q + q) + (q * 1 + 1)
    return attn + norms + ffn + head


def _shapes(config: ScorerConfig) -> dict[str, tuple[int, ...]]:
    d, h, q = config.dim, config.ffn_hidden, config.score_hidden
    return {
        "w_q": (d, d), "b_q": (d,),
        "w_k": (d, d), "b_k": (d,),
        "w_v": (d, d), "b_v": (d,),
        "w_o": (d, d), "b_o": (d,),
        "ln1_gain": (d,), "ln1_bias": (d,),
        "ffn_w1": (d, h), "ffn_b1": (h,),
        "ffn_w2": (h, d), "ffn_b2": (d,),
        "ln2_gain": (d,), "ln2_bias": (d,),
        "head_w1": (d, q), "head_b1": (q,),
        "head_w2": (q, 1), "head_b2": (1,),
    }


def _quantize_f32(a: np.ndarray) -> np.ndarray:
    # Checkpoints store float32, so fresh params are snapped to float32-
    # representable values up front; save/load then round-trips bit-exactly.
    return a.astype(np.float32).astype(np.float64)


def init_params(config: ScorerConfig, seed: int | None = None) -> ScorerParams:
    """Glorot-uniform matrices, zero biases, unit LayerNorm gains.

    The final head layer starts at exactly zero, so a fresh scorer outputs the
    similarity prior alone; training grows the learned part from there.
    """
    rng = np.random.default_rng(config.seed if seed is None else seed)
    out: dict[str, np.ndarray] = {}
    for name, shape in _shapes(config).items():
        if name in ("head_w2", "head_b2"):
            out[name] = np.zeros(shape)
        elif name in ("ln1_gain", "ln2_gain"):
            out[name] = np.ones(shape)
        elif len(shape) == 1:
            out[name] = np.zeros(shape)
        else:
            limit = np.sqrt(6.0 / (shape[0] + shape[1]))
            out[name] = _quantize_f32(rng.uniform(-limit, limit, size=shape))
    return ScorerParams(**out)


# --- forward pass ---------------------------------------------------------------

ParamMap = dict[str, nm.Tensor]


def register_params(tape: nm.GradTape, params: ScorerParams) -> ParamMap:
    """Designate every scorer weight on a tape; returns name -> param tensor."""
    return {name: tape.param(arr, name=name) for name, arr in
            zip(params.field_names(), params.as_list())}


def _as_param_map(params) -> ParamMap:
    if isinstance(params, dict):
        return params
    return {name: nm.as_tensor(arr) for name, arr in
            zip(params.field_names(), params.as_list())}


def sinusoidal_table(n: int, dim: int) -> np.ndarray:
    """Fixed (n, dim) table: PE[i, 2j] = sin(i / 10000^(2j/dim)), odd cols cos."""
    if dim % 2 != 0:
        raise ConfigError(f"positional encoding needs even dim, got {dim}")
    pos = np.arange(n, dtype=np.float64)[:, None]
    rates = np.power(10000.0, -np.arange(0, dim, 2, dtype=np.float64) / dim)
    table = np.zeros((n, dim))
    table[:, 0::2] = np.sin(pos * rates)
    table[:, 1::2] = np.cos(pos * rates)
    return table


def positional_encode(frames: np.ndarray) -> np.ndarray:
    """Add the sinusoidal position table to (n, dim) frame embeddings."""
    frames = np.asarray(frames, dtype=np.float64)
    return frames + sinusoidal_table(frames.shape[0], frames.shape[1])


def cross_attention(v_pe, tokens, params, config: ScorerConfig) -> nm.Tensor:
    """Multi-head attention with frames as queries, question tokens as keys/values.

    Each of the n frames attends independently over all L tokens; heads are
    concatenated and passed through the output projection.
    """
    p = _as_param_map(params)
    v_pe = nm.as_tensor(v_pe)
    tokens = nm.as_tensor(tokens)
    if v_pe.shape[1] != config.dim or tokens.shape[1] != config.dim:
        raise DimensionError(
            f"expected width {config.dim}, got frames {v_pe.shape} tokens {tokens.shape}"
        )
    q = nm.matmul(v_pe, p["w_q"]) + p["b_q"]
    k = nm.matmul(tokens, p["w_k"]) + p["b_k"]
    v = nm.matmul(tokens, p["w_v"]) + p["b_v"]

    dh = config.head_dim
    scale = 1.0 / np.sqrt(dh)
    heads = []
    for h in range(config.n_heads):
        cols = slice(h * dh, (h + 1) * dh)
        qh, kh, vh = q[:, cols], k[:, cols], v[:, cols]
        weights = nm.softmax_rows(nm.matmul(qh, nm.transpose(kh)) * scale)
        heads.append(nm.matmul(weights, vh))
    merged = nm.concat(heads, axis=1)
    return nm.matmul(merged, p["w_o"]) + p["b_o"]


def forward_tensor(sample: SampleRecord, params, config: ScorerConfig) -> nm.Tensor:
    """Full scoring pipeline; returns a length-n tensor of frame scores."""
    p = _as_param_map(params)
    v_pe = nm.as_tensor(positional_encode(sample.features.frames))
    attended = cross_attention(v_pe, sample.question.tokens, p, config)
    x1 = nm.layer_norm(v_pe + attended, p["ln1_gain"], p["ln1_bias"], config.ln_eps)
    ffn = nm.matmul(nm.gelu_tanh(nm.matmul(x1, p["ffn_w1"]) + p["ffn_b1"]),
                    p["ffn_w2"]) + p["ffn_b2"]
    x2 = nm.layer_norm(x1 + ffn, p["ln2_gain"], p["ln2_bias"], config.ln_eps)
    hidden = nm.relu(nm.matmul(x2, p["head_w1"]) + p["head_b1"])
    learned = nm.reshape(nm.matmul(hidden, p["head_w2"]) + p["head_b2"],
                         (sample.n_frames,))
    sims = sample.features.sims
    prior = config.prior_weight * (sims - sims.mean())
    return learned + prior


def forward(sample: SampleRecord, params: ScorerParams, config: ScorerConfig) -> np.ndarray:
    """Gradient-free scoring; returns a length-n float64 array."""
    return forward_tensor(sample, params, config).data


# --- checkpoint serialization ------------------------------------------------------

# Layout: one JSON header line {format_version, config, tensors:[{name, shape,
# offset, nbytes}...]} + "\n", then the concatenated little-endian float32
# blobs. Values are widened to float64 on load.


def save_checkpoint(params: ScorerParams, config: ScorerConfig, path: Path | str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tensors = []
    blob = io.BytesIO()
    offset = 0
    for name, arr in zip(params.field_names(), params.as_list()):
        raw = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        tensors.append(
            {"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)}
        )
        blob.write(raw)
        offset += len(raw)
    header = {
        "format_version": CHECKPOINT_VERSION,
        "config": asdict(config),
        "tensors": tensors,
    }
    payload = json.dumps(header, separators=(",", ":")).encode() + b"\n" + blob.getvalue()
    path.write_bytes(payload)


def load_checkpoint(path: Path | str) -> tuple[ScorerParams, ScorerConfig]:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    raw = path.read_bytes()
    sep = raw.find(b"\n")
    if sep < 0:
        raise CheckpointError(f"{path}: missing header line")
    try:
        header = json.loads(raw[:sep].decode())
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable header: {exc}") from exc
    if header.get("format_version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported format_version {header.get('format_version')!r}"
        )
    try:
        config = ScorerConfig(**header["config"])
        entries = header["tensors"]
    except (KeyError, TypeError, ConfigError) as exc:
        raise CheckpointError(f"{path}: bad header: {exc}") from exc

    data = raw[sep + 1:]
    expected_shapes = _shapes(config)
    arrays: dict[str, np.ndarray] = {}
    total = 0
    for entry in entries:
        name, shape = entry["name"], tuple(entry["shape"])
        off, nbytes = entry["offset"], entry["nbytes"]
        if name not in expected_shapes or expected_shapes[name] != shape:
            raise CheckpointError(f"{path}: unexpected tensor {name} shape {shape}")
        if nbytes != 4 * int(np.prod(shape)) or off + nbytes > len(data):
            raise CheckpointError(f"{path}: tensor {name} blob length mismatch")
        arrays[name] = (
            np.frombuffer(data[off:off + nbytes], dtype="<f4")
            .astype(np.float64)
            .reshape(shape)
        )
        total += nbytes
    if set(arrays) != set(expected_shapes):
        raise CheckpointError(f"{path}: missing tensors {set(expected_shapes) - set(arrays)}")
    if total != len(data):
        raise CheckpointError(f"{path}: trailing or missing blob bytes")
    params = ScorerParams(**arrays)
    if params.count() != expected_param_count(config):
        raise CheckpointError(
            f"{path}: parameter count {params.count()} != expected "
            f"{expected_param_count(config)}"
        )
    if not all(np.all(np.isfinite(a)) for a in arrays.values()):
        raise CheckpointError(f"{path}: non-finite parameter values")
    return params, config


def clone_params(params: ScorerParams) -> ScorerParams:
    return ScorerParams.from_list([a.copy() for a in params.as_list()])


__all__ = [
    "ScorerConfig",
    "ScorerParams",
    "expected_param_count",
    "init_params",
    "register_params",
    "sinusoidal_table",
    "positional_encode",
    "cross_attention",
    "forward",
    "forward_tensor",
    "save_checkpoint",
    "load_checkpoint",
    "clone_params",
]
