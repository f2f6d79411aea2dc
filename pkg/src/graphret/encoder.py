"""Text-to-vector encoders for node, edge and section texts."""

from __future__ import annotations

import json
import re
from functools import lru_cache
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

_TOKEN_RE = re.compile(r"[^\W_]+")

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK = (1 << 64) - 1


def tokenize(text: str) -> list[str]:
    """Lowercase and split on runs of non-alphanumeric characters."""
    return _TOKEN_RE.findall(text.lower())


def fnv1a_64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & _MASK
    return h


@lru_cache(maxsize=1 << 16)
def _bucket_and_sign(token: str, seed: int, dim: int) -> tuple[int, float]:
    key = f"{seed}\x1f{token}".encode("utf-8")
    bucket = fnv1a_64(key) % dim
    parity = bin(fnv1a_64(b"sign\x1f" + key)).count("1") & 1
    return bucket, (1.0 if parity == 0 else -1.0)


class HashingEncoder(TransformerMixin, BaseEstimator):
    """Signed feature hashing of bag-of-words counts.

    Parameters
    ----------
    dim : int
        Output dimensionality.
    normalize : bool
        Scale non-empty outputs to unit L2 norm.
    seed : int
        Selects the member of the hash family.
    """

    def __init__(self, dim: int = 32, normalize: bool = True, seed: int = 0):
        self.dim = dim
        self.normalize = normalize
        self.seed = seed

    def fit(self, X=None, y=None):
        if int(self.dim) <= 0:
            raise ValueError(f"dim must be positive, got {self.dim}")
        return self

    def encode(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim)
        for tok in tokenize(text):
            bucket, sign = _bucket_and_sign(tok, self.seed, self.dim)
            vec[bucket] += sign
        if self.normalize:
            norm = np.linalg.norm(vec)
            if norm > 0:
                vec /= norm
        return vec

    def encode_global(self, section_text: str) -> np.ndarray:
        """Encoding of a whole section, used for the virtual global node."""
        return self.encode(section_text)

    def transform(self, X) -> np.ndarray:
        return np.stack([self.encode(t) for t in X]) if len(X) else np.zeros((0, self.dim))

    def config(self) -> dict:
        return {"kind": "hashing", **self.get_params()}


class TableEncoder(TransformerMixin, BaseEstimator):
    """Looks vectors up in a precomputed embedding table.

    The table is a JSON-lines file of ``{"text": ..., "vector": [...]}``
    records. Texts missing from the table go to ``fallback`` if one is
    given, otherwise a ``KeyError`` is raised.
    """

    def __init__(self, path=None, dim: int = 32, fallback=None):
        self.path = path
        self.dim = dim
        self.fallback = fallback

    def fit(self, X=None, y=None):
        table = {}
        with open(self.path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                rec = json.loads(line)
                vec = np.asarray(rec["vector"], dtype=np.float64)
                if vec.shape != (self.dim,):
                    raise ValueError(
                        f"{self.path}:{lineno}: vector length {vec.size} != dim {self.dim}"
                    )
                table[rec["text"]] = vec
        self.table_ = table
        return self

    def encode(self, text: str) -> np.ndarray:
        if not hasattr(self, "table_"):
            self.fit()
        vec = self.table_.get(text)
        if vec is not None:
            return vec.copy()
        if self.fallback is None:
            raise KeyError(f"text not in embedding table: {text[:60]!r}")
        return self.fallback.encode(text)

    def encode_global(self, section_text: str) -> np.ndarray:
        return self.encode(section_text)

    def transform(self, X) -> np.ndarray:
        return np.stack([self.encode(t) for t in X]) if len(X) else np.zeros((0, self.dim))

    def config(self) -> dict:
        return {"kind": "table", "path": str(Path(self.path)), "dim": self.dim}


def encoder_from_config(cfg: dict):
    cfg = dict(cfg)
    kind = cfg.pop("kind", "hashing")
    if kind == "hashing":
        return HashingEncoder(**cfg).fit()
    if kind == "table":
        return TableEncoder(**cfg).fit()
    raise ValueError(f"unknown encoder kind {kind!r}")
