"""Streaming MRCONSO.RRF parser and per-language synonym statistics."""

from __future__ import annotations

import hashlib
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from xlsap.core import NameRecord

logger = logging.getLogger(__name__)

# MRCONSO column positions; see the RRF column reference for MRCONSO.
CUI_COL = 0
LAT_COL = 1
STR_COL = 14
MIN_FIELDS = 15

_CUI_RE = re.compile(r"^C[0-9]+$")

RRF_LANGS = {
    "ENG": "en", "SPA": "es", "JPN": "ja", "RUS": "ru", "GER": "de",
    "KOR": "ko", "CHI": "zh", "TUR": "tr", "FIN": "fi", "FRE": "fr",
    "POR": "pt", "DUT": "nl", "ITA": "it", "CZE": "cs", "NOR": "no",
    "POL": "pl", "EST": "et", "SWE": "sv", "HRV": "hr", "GRE": "el",
    "LAV": "lv",
    # Present in recent releases but absent from the 2020AA language table.
    "HUN": "hu", "DAN": "da", "HEB": "he", "ARA": "ar", "BAQ": "eu",
    "UKR": "uk", "THA": "th",
}
UNKNOWN_LANG = "xx"


class RrfParseError(ValueError):
    pass


@dataclass(frozen=True)
class RrfRow:
    cui: str
    lat: str
    str_field: str

    @property
    def lang(self) -> str:
        return RRF_LANGS.get(self.lat, UNKNOWN_LANG)


def parse_rrf_line(line: str | bytes) -> RrfRow:
    """Parse one MRCONSO line. Raises `RrfParseError` on any malformed input."""
    if isinstance(line, (bytes, bytearray)):
        try:
            line = line.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise RrfParseError(f"invalid UTF-8: {exc.reason}") from None
    if not isinstance(line, str):
        raise RrfParseError(f"expected text, got {type(line).__name__}")
    fields = line.rstrip("\r\n").split("|")
    if len(fields) < MIN_FIELDS:
        raise RrfParseError(f"too few fields: {len(fields)} < {MIN_FIELDS}")
    cui, lat, name = fields[CUI_COL], fields[LAT_COL], fields[STR_COL]
    if not cui:
        raise RrfParseError("empty CUI")
    if not _CUI_RE.match(cui):
        raise RrfParseError(f"malformed CUI {cui!r}")
    if not name.strip():
        raise RrfParseError("empty STR")
    return RrfRow(cui, lat, name)


@dataclass
class IngestReport:
    lines: int = 0
    kept: int = 0
    malformed: int = 0
    duplicates: int = 0
    filtered: int = 0
    unknown_lat: Counter = field(default_factory=Counter)


def _dedup_key(cui: str, name: str, lang: str) -> bytes:
    data = "\x00".join((cui, name, lang)).encode("utf-8")
    return hashlib.blake2b(data, digest_size=16).digest()


def extract_synonyms(
    lines: Iterable[str | bytes],
    lang_filter: Iterable[str] | None = None,
    report: IngestReport | None = None,
) -> list[NameRecord]:
    """Map RRF lines to `NameRecord`s, dropping exact (cui, name, lang) duplicates.

    Malformed lines are counted in ``report`` and skipped. Output order
    follows input order.
    """
    report = report if report is not None else IngestReport()
    wanted = set(lang_filter) if lang_filter is not None else None
    seen: set[bytes] = set()
    out = []
    for line in lines:
        report.lines += 1
        try:
            row = parse_rrf_line(line)
        except RrfParseError:
            report.malformed += 1
            continue
        lang = row.lang
        if lang == UNKNOWN_LANG:
            report.unknown_lat[row.lat] += 1
        if wanted is not None and lang not in wanted:
            report.filtered += 1
            continue
        key = _dedup_key(row.cui, row.str_field, lang)
        if key in seen:
            report.duplicates += 1
            continue
        seen.add(key)
        out.append(NameRecord(row.str_field, row.cui, lang))
    report.kept = len(out)
    if report.malformed:
        logger.warning("skipped %d malformed RRF line(s)", report.malformed)
    if report.unknown_lat:
        logger.warning("unknown LAT codes mapped to %r: %s", UNKNOWN_LANG, dict(report.unknown_lat))
    return out


@dataclass(frozen=True)
class LanguageStats:
    counts: Mapping[str, int]

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    @property
    def fractions(self) -> dict[str, float]:
        total = self.total
        return {lang: n / total for lang, n in self.counts.items()} if total else {}

    def format(self) -> str:
        rows = ["lang\tcount\tfraction"]
        fractions = self.fractions
        for lang in sorted(self.counts, key=lambda k: (-self.counts[k], k)):
            rows.append(f"{lang}\t{self.counts[lang]}\t{fractions[lang]:.6f}")
        rows.append(f"total\t{self.total}\t{1.0 if self.total else 0.0:.6f}")
        return "\n".join(rows) + "\n"


def language_stats(records: Iterable[NameRecord]) -> LanguageStats:
    return LanguageStats(dict(Counter(r.lang for r in records)))
