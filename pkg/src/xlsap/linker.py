"""Exhaustive cosine nearest-neighbour linking and Precision@k scoring."""

from __future__ import annotations

import json
import logging
import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from xlsap.core import NameRecord
from xlsap.encoder import EncoderParams, encode_batch

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EvalExample:
    sentence: str
    mention: str
    gold_cui: str
    lang: str
    # Linked page title; only the benchmark builder uses it.
    title: str = ""


@dataclass
class CandidateIndex:
    names: list[str]
    cuis: list[str]
    embeddings: np.ndarray

    def __len__(self) -> int:
        return len(self.names)


@dataclass
class RankedResult:
    query: str
    hits: list[tuple[str, str, float]]
    predicted_cuis: list[str]


def build_index(params: EncoderParams, ontology: Sequence[NameRecord]) -> CandidateIndex:
    if not ontology:
        raise ValueError("cannot build an index over an empty ontology")
    names = [r.name for r in ontology]
    return CandidateIndex(names, [r.label for r in ontology], encode_batch(params, names))


def _ranked_order(sims: np.ndarray, want: int) -> np.ndarray:
    """Indices of the top ``want`` similarities, ties by ascending index."""
    m = len(sims)
    if want >= m:
        return np.lexsort((np.arange(m), -sims))
    cut = np.partition(-sims, want - 1)[want - 1]
    cand = np.flatnonzero(-sims <= cut)
    return cand[np.lexsort((cand, -sims[cand]))][:want]


def _dedup_cuis(index: CandidateIndex, sims: np.ndarray, k: int) -> list[str]:
    # Widen the window until k distinct CUIs are found or the index is exhausted.
    want = min(len(index), max(4 * k, 16))
    while True:
        order = _ranked_order(sims, want)
        seen: dict[str, None] = {}
        for i in order:
            seen.setdefault(index.cuis[i])
            if len(seen) == k:
                return list(seen)
        if want >= len(index):
            return list(seen)
        want = min(len(index), want * 4)


def rank_embeddings(index: CandidateIndex, queries: Sequence[str], query_emb: np.ndarray, k: int) -> list[RankedResult]:
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > len(index):
        logger.warning("k=%d exceeds index size %d; clamping", k, len(index))
        k = len(index)
    sims_all = np.asarray(query_emb) @ index.embeddings.T
    results = []
    for query, sims in zip(queries, sims_all):
        order = _ranked_order(sims, k)
        hits = [(index.names[i], index.cuis[i], float(sims[i])) for i in order]
        results.append(RankedResult(query, hits, _dedup_cuis(index, sims, k)))
    return results


def rank(index: CandidateIndex, query: str, params: EncoderParams, k: int) -> RankedResult:
    """Top-``k`` candidates for ``query`` by exact dot-product search."""
    return rank_many(index, [query], params, k)[0]


def rank_many(index: CandidateIndex, queries: Sequence[str], params: EncoderParams, k: int) -> list[RankedResult]:
    return rank_embeddings(index, queries, encode_batch(params, queries), k)


def precision_at_k(results: Sequence[RankedResult], golds: Sequence[str], k: int) -> float:
    """Fraction of queries whose gold CUI is among the first ``k`` distinct predicted CUIs."""
    if len(results) != len(golds):
        raise ValueError(f"{len(results)} results but {len(golds)} gold labels")
    if not results:
        return 0.0
    hits = sum(gold in res.predicted_cuis[:k] for res, gold in zip(results, golds))
    return hits / len(results)


@dataclass
class LangMetrics:
    lang: str
    p_at_1: float
    p_at_5: float
    n: int


@dataclass
class EvalReport:
    languages: list[LangMetrics]
    skipped: list[str]

    @property
    def avg_p_at_1(self) -> float:
        return float(np.mean([m.p_at_1 for m in self.languages])) if self.languages else 0.0

    @property
    def avg_p_at_5(self) -> float:
        return float(np.mean([m.p_at_5 for m in self.languages])) if self.languages else 0.0

    def get(self, lang: str) -> LangMetrics:
        for m in self.languages:
            if m.lang == lang:
                return m
        raise KeyError(lang)

    def to_json(self) -> str:
        doc = {
            "languages": [
                {"lang": m.lang, "p_at_1": m.p_at_1, "p_at_5": m.p_at_5, "n": m.n} for m in self.languages
            ],
            "avg": {"p_at_1": self.avg_p_at_1, "p_at_5": self.avg_p_at_5},
            "skipped": self.skipped,
        }
        return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def evaluate(
    params: EncoderParams,
    index: CandidateIndex,
    test_sets: Mapping[str, Sequence[EvalExample]],
) -> EvalReport:
    """Per-language P@1/P@5 and their unweighted mean across languages.

    Languages with empty test sets are reported as skipped and excluded
    from the average. The sentence context is ignored.
    """
    metrics = []
    skipped = []
    k = min(5, len(index))
    for lang in sorted(test_sets):
        examples = test_sets[lang]
        if not examples:
            logger.warning("empty test set for %r; excluded from the average", lang)
            skipped.append(lang)
            continue
        results = rank_many(index, [ex.mention for ex in examples], params, k)
        golds = [ex.gold_cui for ex in examples]
        metrics.append(
            LangMetrics(lang, precision_at_k(results, golds, 1), precision_at_k(results, golds, 5), len(examples))
        )
    return EvalReport(metrics, skipped)


_LANG_IN_NAME = re.compile(r"(?:^|[._-])([a-z]{2})$")


def lang_from_filename(path: str | os.PathLike) -> str:
    stem = Path(path).stem
    match = _LANG_IN_NAME.search(stem)
    if not match:
        raise ValueError(f"cannot infer a language code from file name {Path(path).name!r}")
    return match.group(1)


def read_test_set(path: str | os.PathLike, lang: str | None = None) -> list[EvalExample]:
    """Read ``sentence<TAB>mention<TAB>cui`` lines."""
    path = Path(path)
    lang = lang or lang_from_filename(path)
    out = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 3 or not fields[1]:
                raise ValueError(f"{path}:{lineno}: expected sentence<TAB>mention<TAB>cui")
            out.append(EvalExample(fields[0], fields[1], fields[2], lang))
    return out


def read_test_dir(directory: str | os.PathLike) -> dict[str, list[EvalExample]]:
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"test directory not found: {directory}")
    sets = {}
    for path in sorted(directory.glob("*.tsv")):
        lang = lang_from_filename(path)
        sets.setdefault(lang, []).extend(read_test_set(path, lang))
    return sets


def format_test_set(examples: Sequence[EvalExample]) -> str:
    return "".join(f"{ex.sentence}\t{ex.mention}\t{ex.gold_cui}\n" for ex in examples)
