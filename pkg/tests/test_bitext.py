import re

import pytest
from hypothesis import given
from hypothesis import strategies as st

from xlsap.bitext import (
    MUSE_TAG,
    TranslationPair,
    pairs_to_records,
    parse_title_pairs,
    parse_word_translations,
    pseudo_label,
)
from xlsap.core import NameRecord


def test_word_translations():
    assert parse_word_translations([], "en", "es") == []
    assert parse_word_translations(["dog perro\n"], "en", "es") == [TranslationPair("dog", "perro", "en", "es")]
    assert parse_word_translations(["dog\tperro", "", "too many words", "alone"], "en", "es") == [
        TranslationPair("dog", "perro", "en", "es")
    ]


def test_title_pairs_keep_spaces():
    pairs = parse_title_pairs(["Incubation period\tInkubationszeit\n", "no tab here\n"], "en", "de")
    assert pairs == [TranslationPair("Incubation period", "Inkubationszeit", "en", "de")]


@pytest.mark.parametrize(
    "src, tgt, index, expected",
    [("en", "de", 2344, "ENDE2344"), ("en", "th", 1, "ENTH1"), ("es", "en", 7, "ESEN7")],
)
def test_pseudo_label(src, tgt, index, expected):
    assert pseudo_label(src, tgt, index) == expected


def test_pseudo_label_rejects_zero():
    with pytest.raises(ValueError):
        pseudo_label("en", "de", 0)


def test_pairs_to_records():
    assert pairs_to_records([]) == []
    recs = pairs_to_records([TranslationPair("dog", "Hund", "en", "de")])
    assert recs == [NameRecord("dog", "ENDE1", "en"), NameRecord("Hund", "ENDE1", "de")]
    three = pairs_to_records([TranslationPair(f"w{i}", f"v{i}", "en", "es") for i in range(3)])
    assert len(three) == 6
    assert len({r.label for r in three}) == 3


def test_muse_tag_separates_streams():
    pair = TranslationPair("dog", "Hund", "en", "de")
    assert pairs_to_records([pair], MUSE_TAG)[0].label == "ENDEM1"
    assert pairs_to_records([pair])[0].label != pairs_to_records([pair], MUSE_TAG)[0].label


langs = st.sampled_from(["en", "de", "es", "cs", "zh"])


@given(st.lists(st.tuples(st.text(min_size=1, max_size=5), st.text(min_size=1, max_size=5), langs, langs)))
def test_pseudo_label_classes(raw):
    pairs = [TranslationPair(*r) for r in raw]
    recs = pairs_to_records(pairs)
    assert len(recs) == 2 * len(pairs)
    sizes = {}
    for r in recs:
        sizes[r.label] = sizes.get(r.label, 0) + 1
        assert not re.fullmatch(r"C[0-9]+", r.label)
    assert all(v == 2 for v in sizes.values())
