"""Shared domain types, configuration and the canonical record format."""

from __future__ import annotations

import dataclasses
import logging
import os
import re
import tempfile
import unicodedata
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

logger = logging.getLogger(__name__)

_LANG_RE = re.compile(r"^[a-z]{2}$")
_FORBIDDEN_LABEL_CHARS = frozenset("\t\n\r|")


class ConfigError(ValueError):
    """Raised for a bad config file or an invalid hyperparameter combination."""


class RecordFormatError(ValueError):
    """Raised when a canonical TSV record file cannot be read."""


def is_valid_label(label: str) -> bool:
    return bool(label) and not any(c in _FORBIDDEN_LABEL_CHARS for c in label)


def is_valid_lang(lang: str) -> bool:
    return bool(_LANG_RE.match(lang))


@dataclass(frozen=True)
class NameRecord:
    """One (name, label, language) item.

    Construction does not validate; `validate_records` is the gate that
    cleans and filters raw records before they reach training or indexing.
    """

    name: str
    label: str
    lang: str


@dataclass(frozen=True)
class TrainConfig:
    margin_lambda: float = 0.2
    alpha: float = 2.0
    beta: float = 50.0
    epsilon: float = 1.0
    batch_size: int = 512
    names_per_class: int = 2
    learning_rate: float = 2e-5
    epochs: int = 1
    max_name_chars: int = 25
    embed_dim: int = 64
    ngram_order: int = 3
    vocab_size: int = 1 << 16
    seed: int = 0

    def __post_init__(self) -> None:
        problems = []
        if self.margin_lambda < 0:
            problems.append("margin_lambda must be >= 0")
        if self.alpha <= 0:
            problems.append("alpha must be > 0")
        if self.beta <= 0:
            problems.append("beta must be > 0")
        if self.batch_size < 1:
            problems.append("batch_size must be positive")
        if self.names_per_class < 2:
            problems.append("names_per_class must be >= 2")
        elif self.batch_size % self.names_per_class:
            problems.append(
                f"batch_size ({self.batch_size}) is not a multiple of "
                f"names_per_class ({self.names_per_class})"
            )
        if self.learning_rate <= 0:
            problems.append("learning_rate must be > 0")
        if self.epochs < 0:
            problems.append("epochs must be >= 0")
        for name in ("max_name_chars", "embed_dim", "ngram_order", "vocab_size"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be positive")
        if not 0 <= self.seed < 1 << 64:
            problems.append("seed must fit in an unsigned 64-bit integer")
        if problems:
            raise ConfigError("; ".join(problems))

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)


_CONFIG_FIELDS = {f.name: f for f in dataclasses.fields(TrainConfig)}


def _coerce(key: str, raw: str):
    kind = _CONFIG_FIELDS[key].type
    try:
        if kind in ("int", int):
            return int(raw, 0) if raw.lower().startswith(("0x", "0o", "0b")) else int(raw)
        return float(raw)
    except ValueError:
        raise ConfigError(f"cannot parse value {raw!r} for key {key!r}") from None


def parse_config(text: str, source: str = "<string>") -> TrainConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        if key not in _CONFIG_FIELDS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        values[key] = _coerce(key, raw)
    return TrainConfig(**values)


def load_config(path: str | os.PathLike) -> TrainConfig:
    """Read a flat ``key = value`` config file; file values override defaults."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    return parse_config(text, source=str(path))


def format_config(config: TrainConfig) -> str:
    lines = []
    for name in _CONFIG_FIELDS:
        value = getattr(config, name)
        lines.append(f"{name} = {value!r}")
    return "\n".join(lines) + "\n"


def write_config(config: TrainConfig, path: str | os.PathLike) -> None:
    atomic_write_text(path, format_config(config))


def clean_name(name: str, max_chars: int) -> str:
    # Truncation can expose trailing whitespace or a non-NFC tail, so iterate
    # to a fixed point to keep validate_records idempotent.
    while True:
        cleaned = unicodedata.normalize("NFC", name).strip()[:max_chars].strip()
        if cleaned == name:
            return cleaned
        name = cleaned


def validate_records(records: Iterable[NameRecord], max_name_chars: int = 25) -> list[NameRecord]:
    """NFC-normalize, trim and truncate names; drop records that are invalid.

    Input order is preserved. Truncation counts code points, not bytes.
    """
    kept = []
    dropped = 0
    for rec in records:
        name = clean_name(rec.name, max_name_chars)
        if not name or not is_valid_label(rec.label) or not is_valid_lang(rec.lang):
            dropped += 1
            continue
        kept.append(rec if name == rec.name else NameRecord(name, rec.label, rec.lang))
    if dropped:
        logger.warning("validate_records dropped %d invalid record(s)", dropped)
    return kept


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def atomic_write_bytes(path: str | os.PathLike, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_records(records: Iterable[NameRecord]) -> str:
    return "".join(f"{r.label}\t{r.name}\t{r.lang}\n" for r in records)


def write_records(records: Iterable[NameRecord], path: str | os.PathLike) -> None:
    """Write the canonical ``label<TAB>name<TAB>lang`` format."""
    atomic_write_text(path, format_records(records))


def iter_records(lines: Iterable[str], source: str = "<stream>") -> Iterator[NameRecord]:
    for lineno, line in enumerate(lines, 1):
        line = line.rstrip("\r\n")
        if not line:
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise RecordFormatError(f"{source}:{lineno}: expected 3 tab-separated fields")
        label, name, lang = fields
        yield NameRecord(name, label, lang)


def read_records(path: str | os.PathLike) -> list[NameRecord]:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        return list(iter_records(fh, source=str(path)))
