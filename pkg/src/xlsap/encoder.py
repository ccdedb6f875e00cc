"""Hashed character n-gram encoder mapping names to unit vectors.

A name is lowercased, wrapped in ``^``/``$`` boundary markers and split into
character n-grams; each n-gram is hashed (64-bit FNV-1a) into a row of an
embedding table. The encoding is the mean of those rows, multiplied by a
square projection and L2-normalized, so cosine similarity is a dot product.
"""

from __future__ import annotations

import functools
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from xlsap.core import TrainConfig, atomic_write_bytes, format_config, parse_config
from xlsap.rng import SplitMix64

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK = (1 << 64) - 1

INIT_SCALE = 0.05
CHECKPOINT_MAGIC = b"XSAP"
CHECKPOINT_VERSION = 1


def fnv1a_64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * FNV_PRIME) & _MASK
    return h


def char_ngrams(name: str, n: int) -> list[str]:
    wrapped = f"^{name.lower()}$"
    if len(wrapped) <= n:
        return [wrapped]
    return [wrapped[i : i + n] for i in range(len(wrapped) - n + 1)]


@functools.lru_cache(maxsize=1 << 18)
def _featurize(name: str, n: int, vocab_size: int) -> tuple[int, ...]:
    return tuple(fnv1a_64(g.encode("utf-8")) % vocab_size for g in char_ngrams(name, n))


def featurize(name: str, n: int = 3, vocab_size: int = 1 << 16) -> list[int]:
    """Hashed n-gram ids of ``name`` as a multiset (one id per n-gram position)."""
    return list(_featurize(name, n, vocab_size))


@dataclass
class EncoderParams:
    table: np.ndarray
    projection: np.ndarray
    ngram_order: int = 3

    @property
    def vocab_size(self) -> int:
        return self.table.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.table.shape[1]

    def copy(self) -> "EncoderParams":
        return EncoderParams(self.table.copy(), self.projection.copy(), self.ngram_order)

    def all_finite(self) -> bool:
        return bool(np.isfinite(self.table).all() and np.isfinite(self.projection).all())


@dataclass
class ParamGrad:
    """Gradient w.r.t. `EncoderParams`; the table part is row-sparse."""

    ids: np.ndarray
    table_rows: np.ndarray
    projection: np.ndarray

    def dense_table(self, vocab_size: int) -> np.ndarray:
        out = np.zeros((vocab_size, self.projection.shape[0]))
        out[self.ids] = self.table_rows
        return out


def init_params(config: TrainConfig, seed: int | None = None) -> EncoderParams:
    rng = SplitMix64(config.seed if seed is None else seed)
    size = config.vocab_size * config.embed_dim
    table = rng.uniform_array(size, -INIT_SCALE, INIT_SCALE).reshape(config.vocab_size, config.embed_dim)
    return EncoderParams(table, np.eye(config.embed_dim), config.ngram_order)


def _segments(params: EncoderParams, names: Sequence[str]):
    feats = [_featurize(name, params.ngram_order, params.vocab_size) for name in names]
    counts = np.fromiter((len(f) for f in feats), dtype=np.int64, count=len(feats))
    ids = np.fromiter((i for f in feats for i in f), dtype=np.int64, count=int(counts.sum()))
    return ids, counts


def _forward(params: EncoderParams, names: Sequence[str]):
    ids, counts = _segments(params, names)
    d = params.embed_dim
    if not len(names):
        empty = np.zeros((0, d))
        return ids, counts, empty, empty, np.zeros(0), empty
    offsets = np.concatenate(([0], np.cumsum(counts)[:-1]))
    means = np.add.reduceat(params.table[ids], offsets, axis=0) / counts[:, None]
    pre = means @ params.projection
    norms = np.sqrt(np.einsum("ij,ij->i", pre, pre))
    zero = norms == 0
    with np.errstate(invalid="ignore"):
        out = pre / np.where(zero, 1.0, norms)[:, None]
    out[zero] = 0.0
    out[zero, 0] = 1.0
    return ids, counts, means, pre, norms, out


def encode_batch(params: EncoderParams, names: Sequence[str]) -> np.ndarray:
    return _forward(params, names)[-1]


def encode(params: EncoderParams, name: str) -> np.ndarray:
    return encode_batch(params, [name])[0]


def encode_batch_backward(params: EncoderParams, names: Sequence[str], grad_out: np.ndarray) -> ParamGrad:
    """Vector-Jacobian product of `encode_batch` w.r.t. the parameters.

    ``grad_out`` has one row per name. Rows whose pre-normalization vector
    is zero are treated as constant (their output is the fixed basis vector).
    """
    ids, counts, means, pre, norms, out = _forward(params, names)
    grad_out = np.asarray(grad_out, dtype=np.float64).reshape(len(names), params.embed_dim)
    # d(v/|v|) = (I - u u^T) / |v|
    safe = np.where(norms > 0, norms, 1.0)
    radial = np.einsum("ij,ij->i", grad_out, out)
    grad_pre = (grad_out - radial[:, None] * out) / safe[:, None]
    grad_pre[norms == 0] = 0.0
    grad_proj = means.T @ grad_pre
    grad_means = grad_pre @ params.projection.T
    per_id = np.repeat(grad_means / np.maximum(counts, 1)[:, None], counts, axis=0)
    uniq, inverse = np.unique(ids, return_inverse=True)
    rows = np.zeros((len(uniq), params.embed_dim))
    np.add.at(rows, inverse, per_id)
    return ParamGrad(uniq, rows, grad_proj)


def encode_backward(params: EncoderParams, name: str, grad_out: np.ndarray) -> ParamGrad:
    return encode_batch_backward(params, [name], np.asarray(grad_out)[None, :])


def apply_sgd(params: EncoderParams, grad: ParamGrad, learning_rate: float) -> None:
    params.table[grad.ids] -= learning_rate * grad.table_rows
    params.projection -= learning_rate * grad.projection


def checkpoint_bytes(params: EncoderParams) -> bytes:
    header = CHECKPOINT_MAGIC + struct.pack("<III", CHECKPOINT_VERSION, params.vocab_size, params.embed_dim)
    body = np.concatenate([params.table.ravel(), params.projection.ravel()]).astype("<f4").tobytes()
    return header + body


def save_checkpoint(params: EncoderParams, path: str | os.PathLike, config: TrainConfig | None = None) -> None:
    """Binary checkpoint plus a ``<path>.cfg`` sidecar with the config."""
    path = Path(path)
    config = config or TrainConfig(
        embed_dim=params.embed_dim, vocab_size=params.vocab_size, ngram_order=params.ngram_order
    )
    atomic_write_bytes(path, checkpoint_bytes(params))
    atomic_write_bytes(sidecar_path(path), format_config(config).encode("utf-8"))


def sidecar_path(path: str | os.PathLike) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".cfg")


class CheckpointError(ValueError):
    pass


def load_checkpoint(path: str | os.PathLike) -> tuple[EncoderParams, TrainConfig | None]:
    path = Path(path)
    data = path.read_bytes()
    if len(data) < 16 or data[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not an XSAP checkpoint")
    version, vocab, dim = struct.unpack("<III", data[4:16])
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    expected = 16 + 4 * (vocab * dim + dim * dim)
    if len(data) != expected:
        raise CheckpointError(f"{path}: size {len(data)} != expected {expected}")
    values = np.frombuffer(data, dtype="<f4", offset=16).astype(np.float64)
    table = values[: vocab * dim].reshape(vocab, dim).copy()
    projection = values[vocab * dim :].reshape(dim, dim).copy()
    config = None
    sidecar = sidecar_path(path)
    if sidecar.exists():
        config = parse_config(sidecar.read_text(encoding="utf-8"), source=str(sidecar))
    params = EncoderParams(table, projection, config.ngram_order if config else 3)
    return params, config
