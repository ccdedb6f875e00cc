"""Build cross-lingual linking test sets from hyperlinked mention occurrences."""

from __future__ import annotations

import logging
import os
import unicodedata
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from xlsap.linker import EvalExample
from xlsap.rng import SplitMix64

logger = logging.getLogger(__name__)

DEFAULT_SAMPLE_SIZE = 1000


@dataclass(frozen=True)
class MentionOccurrence:
    lang: str
    sentence: str
    mention: str
    page_title: str


class TitleCuiMap:
    """Page title -> CUI lookup.

    Entries may be scoped to one language; unscoped entries apply to every
    language and are consulted after the scoped ones.
    """

    def __init__(self, entries: Mapping[tuple[str | None, str], str] | None = None):
        self._entries: dict[tuple[str | None, str], str] = {}
        for (lang, title), cui in (entries or {}).items():
            self.add(title, cui, lang)

    def add(self, title: str, cui: str, lang: str | None = None) -> None:
        key = (lang, title)
        if key in self._entries and self._entries[key] != cui:
            raise ValueError(f"title {title!r} ({lang or 'any'}) mapped to two CUIs")
        self._entries[key] = cui

    def get(self, lang: str, title: str) -> str | None:
        cui = self._entries.get((lang, title))
        return cui if cui is not None else self._entries.get((None, title))

    def __len__(self) -> int:
        return len(self._entries)

    @classmethod
    def read(cls, path: str | os.PathLike) -> "TitleCuiMap":
        """``title<TAB>cui`` lines, with an optional third ``lang`` column."""
        out = cls()
        path = Path(path)
        with path.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\r\n")
                if not line:
                    continue
                fields = line.split("\t")
                if len(fields) not in (2, 3) or not fields[0] or not fields[1]:
                    raise ValueError(f"{path}:{lineno}: expected title<TAB>cui[<TAB>lang]")
                out.add(fields[0], fields[1], fields[2] if len(fields) == 3 else None)
        return out


def read_occurrences(path: str | os.PathLike) -> list[MentionOccurrence]:
    """``lang<TAB>sentence<TAB>mention<TAB>page_title`` lines; invalid lines are skipped."""
    out = []
    bad = 0
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\r\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 4 or not fields[2] or not fields[3]:
                bad += 1
                continue
            out.append(MentionOccurrence(*fields))
    if bad:
        logger.warning("skipped %d malformed occurrence line(s)", bad)
    return out


def _nfc(s: str) -> str:
    return unicodedata.normalize("NFC", s)


def link_mentions(occurrences: Iterable[MentionOccurrence], title_map: TitleCuiMap) -> list[EvalExample]:
    out = []
    unmapped = 0
    for occ in occurrences:
        cui = title_map.get(occ.lang, occ.page_title)
        if cui is None:
            unmapped += 1
            continue
        out.append(EvalExample(occ.sentence, occ.mention, cui, occ.lang, occ.page_title))
    if unmapped:
        logger.info("%d occurrence(s) link to titles without a CUI", unmapped)
    return out


def dedup_surface_forms(examples: Iterable[EvalExample]) -> list[EvalExample]:
    """Keep the first example of each (language, NFC mention); case is significant."""
    seen = set()
    out = []
    for ex in examples:
        key = (ex.lang, _nfc(ex.mention))
        if key not in seen:
            seen.add(key)
            out.append(ex)
    return out


def filter_mention_equals_title(examples: Iterable[EvalExample]) -> list[EvalExample]:
    return [ex for ex in examples if _nfc(ex.mention) != _nfc(ex.title)]


def sample_test_set(examples: Sequence[EvalExample], n: int = DEFAULT_SAMPLE_SIZE, seed: int = 0) -> list[EvalExample]:
    """Uniform sample of ``n`` examples without replacement, sorted by (mention, cui)."""
    if n > len(examples):
        raise ValueError(f"asked for {n} examples but only {len(examples)} are available")
    picks = SplitMix64(seed).sample(len(examples), n)
    chosen = [examples[i] for i in picks]
    return sorted(chosen, key=lambda ex: (ex.mention, ex.gold_cui, ex.sentence, ex.title))


@dataclass
class BenchmarkStats:
    lang: str
    sentences: int = 0
    unique_titles: int = 0
    mentions: int = 0
    unique_mentions: int = 0
    unique_mentions_not_title: int = 0


STATS_COLUMNS = ("sentences", "unique_titles", "mentions", "unique_mentions", "unique_mentions_not_title")


def stats(linked: Sequence[EvalExample]) -> dict[str, BenchmarkStats]:
    """Per-language counts over the linked examples and the two filter stages."""
    out: dict[str, BenchmarkStats] = {}
    by_lang: dict[str, list[EvalExample]] = {}
    for ex in linked:
        by_lang.setdefault(ex.lang, []).append(ex)
    for lang in sorted(by_lang):
        exs = by_lang[lang]
        unique = dedup_surface_forms(exs)
        out[lang] = BenchmarkStats(
            lang,
            sentences=len({ex.sentence for ex in exs}),
            unique_titles=len({ex.title for ex in exs}),
            mentions=len(exs),
            unique_mentions=len(unique),
            unique_mentions_not_title=len(filter_mention_equals_title(unique)),
        )
    return out


def format_stats(table: Mapping[str, BenchmarkStats]) -> str:
    """Rows are statistics, columns are languages."""
    langs = sorted(table)
    lines = ["\t".join(["statistic", *langs])]
    for col in STATS_COLUMNS:
        lines.append("\t".join([col, *(str(asdict(table[lang])[col]) for lang in langs)]))
    return "\n".join(lines) + "\n"


@dataclass
class BenchmarkBuild:
    test_sets: dict[str, list[EvalExample]]
    stats: dict[str, BenchmarkStats]


def build_benchmark(
    occurrences: Iterable[MentionOccurrence],
    title_map: TitleCuiMap,
    n: int = DEFAULT_SAMPLE_SIZE,
    seed: int = 0,
    langs: Iterable[str] | None = None,
) -> BenchmarkBuild:
    """link -> dedup -> mention != title filter -> sample, per language.

    Languages with fewer than ``n`` surviving examples keep all of them.
    """
    wanted = set(langs) if langs is not None else None
    linked = [ex for ex in link_mentions(occurrences, title_map) if wanted is None or ex.lang in wanted]
    table = stats(linked)
    sets = {}
    for lang in sorted(table):
        pool = filter_mention_equals_title(dedup_surface_forms(ex for ex in linked if ex.lang == lang))
        size = min(n, len(pool))
        if size < n:
            logger.warning("%s: only %d examples survive filtering (< %d); keeping all", lang, size, n)
        sets[lang] = sample_test_set(pool, size, seed)
    return BenchmarkBuild(sets, table)
