"""Turn word and title translation pairs into pseudo-labelled name records."""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable

from xlsap.core import NameRecord

logger = logging.getLogger(__name__)

# Muse dictionaries get their own label segment so that combining them with
# title pairs for the same language pair cannot reuse a label.
MUSE_TAG = "M"
TITLE_TAG = ""


@dataclass(frozen=True)
class TranslationPair:
    src_name: str
    tgt_name: str
    src_lang: str
    tgt_lang: str


def _parse(lines, src_lang, tgt_lang, split, kind):
    pairs = []
    malformed = 0
    for line in lines:
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        fields = split(line)
        if len(fields) != 2 or not fields[0].strip() or not fields[1].strip():
            malformed += 1
            continue
        pairs.append(TranslationPair(fields[0].strip(), fields[1].strip(), src_lang, tgt_lang))
    if malformed:
        logger.warning("skipped %d malformed %s line(s)", malformed, kind)
    return pairs


def parse_word_translations(lines: Iterable[str], src_lang: str, tgt_lang: str) -> list[TranslationPair]:
    """Muse-style dictionaries: ``source target`` separated by any whitespace."""
    return _parse(lines, src_lang, tgt_lang, str.split, "word-translation")


def parse_title_pairs(lines: Iterable[str], src_lang: str, tgt_lang: str) -> list[TranslationPair]:
    """Parallel titles: ``source<TAB>target``; titles keep their inner spaces."""
    return _parse(lines, src_lang, tgt_lang, lambda s: s.split("\t"), "title-pair")


def pseudo_label(src_lang: str, tgt_lang: str, index: int, tag: str = TITLE_TAG) -> str:
    if index < 1:
        raise ValueError("pseudo-label index is 1-based")
    return f"{src_lang.upper()}{tgt_lang.upper()}{tag}{index}"


def pairs_to_records(pairs: Iterable[TranslationPair], tag: str = TITLE_TAG) -> list[NameRecord]:
    """Two records per pair sharing a fresh label; counters run per language pair."""
    counters: dict[tuple[str, str], int] = defaultdict(int)
    out = []
    for pair in pairs:
        key = (pair.src_lang, pair.tgt_lang)
        counters[key] += 1
        label = pseudo_label(pair.src_lang, pair.tgt_lang, counters[key], tag)
        out.append(NameRecord(pair.src_name, label, pair.src_lang))
        out.append(NameRecord(pair.tgt_name, label, pair.tgt_lang))
    return out
