"""Image/text encoder backends.

The "hashed" backend is fully deterministic and dependency-light: frames are
downscaled and projected through a fixed seeded matrix, text tokens are
hashed to seeded vectors. It produces format-valid, stable features for
integration tests and offline development. Real encoders (e.g. a CLIP
checkpoint via transformers) plug in behind the same two methods.
"""

from __future__ import annotations

import hashlib

import cv2
import numpy as np

_PATCH = 16  # hashed backend downscale resolution


def _unit_rows(m: np.ndarray) -> np.ndarray:
    return m / np.linalg.norm(m, axis=-1, keepdims=True)


class HashedEncoder:
    """Deterministic stand-in encoder with a CLIP-like interface."""

    def __init__(self, dim: int = 64, seed: int = 0):
        self.dim = dim
        self.name = f"hashed-{dim}"
        rng = np.random.default_rng([seed, 0xE4C])
        self._projection = rng.standard_normal((_PATCH * _PATCH, dim)) / np.sqrt(_PATCH * _PATCH)

    def encode_images(self, images: list[np.ndarray]) -> np.ndarray:
        """BGR uint8 images -> (n, dim) unit-norm embeddings."""
        rows = []
        for image in images:
            gray = cv2.cvtColor(image, cv2.COLOR_BGR2GRAY)
            small = cv2.resize(gray, (_PATCH, _PATCH), interpolation=cv2.INTER_AREA)
            flat = small.astype(np.float64).ravel() / 255.0
            flat -= flat.mean()
            rows.append(flat @ self._projection + 1e-6)  # epsilon keeps norms nonzero
        return _unit_rows(np.stack(rows))

    def _token_vector(self, token: str) -> np.ndarray:
        digest = hashlib.blake2b(token.lower().encode(), digest_size=8).digest()
        rng = np.random.default_rng(int.from_bytes(digest, "little"))
        return rng.standard_normal(self.dim)

    def encode_text(self, text: str) -> tuple[np.ndarray, np.ndarray]:
        """-> (tokens (L, dim), pooled (dim,)), both unit-norm rows."""
        words = text.split() or ["<empty>"]
        tokens = _unit_rows(np.stack([self._token_vector(w) for w in words]))
        pooled = tokens.mean(axis=0)
        pooled = pooled / np.linalg.norm(pooled)
        return tokens, pooled


class ClipEncoder:
    """CLIP image/text encoder via transformers (requires downloaded weights)."""

    def __init__(self, model_name: str, device: str = "cpu"):
        import torch  # deferred: heavy optional dependency
        from transformers import CLIPModel, CLIPProcessor

        self._torch = torch
        self.name = model_name
        self.device = device
        self._model = CLIPModel.from_pretrained(model_name).to(device).eval()
        self._processor = CLIPProcessor.from_pretrained(model_name)
        self.dim = self._model.config.projection_dim

    def encode_images(self, images: list[np.ndarray]) -> np.ndarray:
        rgb = [cv2.cvtColor(im, cv2.COLOR_BGR2RGB) for im in images]
        inputs = self._processor(images=rgb, return_tensors="pt").to(self.device)
        with self._torch.no_grad():
            feats = self._model.get_image_features(**inputs)
        feats = feats / feats.norm(dim=-1, keepdim=True)
        return feats.cpu().numpy().astype(np.float64)

    def encode_text(self, text: str) -> tuple[np.ndarray, np.ndarray]:
        inputs = self._processor(
            text=[text], return_tensors="pt", padding=True, truncation=True
        ).to(self.device)
        with self._torch.no_grad():
            out = self._model.text_model(**inputs)
            pooled = self._model.text_projection(out.pooler_output)
            tokens = self._model.text_projection(out.last_hidden_state[0])
        pooled = (pooled / pooled.norm(dim=-1, keepdim=True))[0]
        tokens = tokens / tokens.norm(dim=-1, keepdim=True)
        return (
            tokens.cpu().numpy().astype(np.float64),
            pooled.cpu().numpy().astype(np.float64),
        )


def make_encoder(name: str, dim: int = 64, device: str = "cpu"):
    if name == "hashed":
        return HashedEncoder(dim=dim)
    return ClipEncoder(name, device=device)
