import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_unit_rows
from xlsap.core import NameRecord, TrainConfig
from xlsap.encoder import encode_batch, init_params
from xlsap.linker import (
    CandidateIndex,
    EvalExample,
    RankedResult,
    build_index,
    evaluate,
    format_test_set,
    lang_from_filename,
    precision_at_k,
    rank,
    rank_embeddings,
    read_test_dir,
)

CFG = TrainConfig(vocab_size=1 << 10, embed_dim=16)


@pytest.fixture
def params():
    return init_params(CFG, 3)


def test_build_index(params):
    with pytest.raises(ValueError):
        build_index(params, [])
    one = build_index(params, [NameRecord("vaccination", "C0042196", "en")])
    assert len(one) == 1
    dup = build_index(params, [NameRecord("cold", "C1", "en"), NameRecord("cold", "C2", "en")])
    assert dup.cuis == ["C1", "C2"]


def test_rank_self_match(params):
    onto = [NameRecord(n, f"C{i}", "en") for i, n in enumerate(["vaccination", "influenza", "fever", "cough"])]
    idx = build_index(params, onto)
    res = rank(idx, "influenza", params, 1)
    assert res.hits[0][:2] == ("influenza", "C1")
    assert res.hits[0][2] == pytest.approx(1.0, abs=1e-12)


def test_rank_ties_break_by_index():
    emb = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
    idx = CandidateIndex(["a", "b", "c"], ["C1", "C2", "C3"], emb)
    (res,) = rank_embeddings(idx, ["q"], np.array([[0.0, 1.0]]), 3)
    assert [h[0] for h in res.hits] == ["b", "c", "a"]


def test_rank_hand_fixture():
    angles = np.array([0.0, 0.4, 1.2, 2.0, 3.0])
    emb = np.column_stack([np.cos(angles), np.sin(angles)])
    idx = CandidateIndex(list("abcde"), ["C1", "C2", "C1", "C3", "C4"], emb)
    q = np.array([[np.cos(1.0), np.sin(1.0)]])
    (res,) = rank_embeddings(idx, ["q"], q, 5)
    # angular distances from 1.0: c .2, b .6, a 1.0, d 1.0 (tie -> lower index a), e 2.0
    assert [h[0] for h in res.hits] == ["c", "b", "a", "d", "e"]
    sims = [h[2] for h in res.hits]
    assert sims == sorted(sims, reverse=True)
    assert res.predicted_cuis == ["C1", "C2", "C3", "C4"]


def test_rank_clamps_k(params, caplog):
    idx = build_index(params, [NameRecord("a", "C1", "en"), NameRecord("b", "C2", "en")])
    res = rank(idx, "a", params, 10)
    assert len(res.hits) == 2
    assert "clamping" in caplog.text


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32), st.integers(1, 300), st.integers(1, 8))
def test_rank_is_exact(seed, m, k):
    r = np.random.default_rng(seed)
    emb = random_unit_rows(r, m, 4)
    cuis = [f"C{i}" for i in r.integers(0, 20, m)]
    idx = CandidateIndex([str(i) for i in range(m)], cuis, emb)
    q = random_unit_rows(r, 3, 4)
    # brute-force scan over the same similarity rows (the selection is under test)
    for res, sims in zip(rank_embeddings(idx, ["x"] * 3, q, k), q @ emb.T):
        assert res.hits[0][2] == sims.max()
        order = sorted(range(m), key=lambda i: (-sims[i], i))
        assert [h[0] for h in res.hits] == [str(i) for i in order[: min(k, m)]]
        dedup = list(dict.fromkeys(cuis[i] for i in order))
        assert res.predicted_cuis == dedup[: min(k, m)]


def _result(cuis):
    return RankedResult("q", [], cuis)


def test_precision_at_k_hand_counts():
    results = [
        _result(["G1", "a", "b", "c", "d", "e", "f"]),
        _result(["a", "b", "G2", "c", "d", "e", "f"]),
        _result(["a", "b", "c", "d", "e", "f", "G3"]),
    ]
    golds = ["G1", "G2", "G3"]
    assert precision_at_k(results, golds, 1) == pytest.approx(1 / 3)
    assert precision_at_k(results, golds, 5) == pytest.approx(2 / 3)
    assert precision_at_k([_result(["G"])], ["G"], 1) == 1
    assert precision_at_k([_result(["x", "y"])], ["G"], 5) == 0
    with pytest.raises(ValueError):
        precision_at_k(results, golds[:2], 1)


def test_precision_counts_cuis_not_names():
    # five synonyms of one wrong concept ahead of the gold one
    emb = np.array([[1.0, 0.0]] * 5 + [[0.9, np.sqrt(1 - 0.81)]])
    idx = CandidateIndex(list("abcdef"), ["C1"] * 5 + ["C2"], emb)
    (res,) = rank_embeddings(idx, ["q"], np.array([[1.0, 0.0]]), 5)
    assert precision_at_k([res], ["C2"], 5) == 1.0


def test_evaluate_single_language(params):
    onto = [NameRecord("influenza", "C1", "en"), NameRecord("fever", "C2", "en")]
    idx = build_index(params, onto)
    report = evaluate(params, idx, {"en": [EvalExample("", "influenza", "C1", "en")]})
    assert report.get("en").p_at_1 == 1.0
    assert report.avg_p_at_1 == 1.0


def test_evaluate_macro_average_and_skips(params):
    onto = [NameRecord("influenza", "C1", "en"), NameRecord("fever", "C2", "en")]
    idx = build_index(params, onto)
    sets = {
        "de": [EvalExample("", "influenza", "C1", "de")],
        "es": [EvalExample("", "influenza", "C2", "es"), EvalExample("", "influenza", "C9", "es")],
        "fi": [],
    }
    report = evaluate(params, idx, sets)
    assert report.get("de").p_at_1 == 1.0
    assert report.get("es").p_at_1 == 0.0
    assert report.avg_p_at_1 == 0.5
    assert report.skipped == ["fi"]
    for m in report.languages:
        assert m.p_at_1 <= m.p_at_5
    doc = report.to_json()
    assert doc.index('"lang"') < doc.index('"p_at_1"') < doc.index('"p_at_5"') < doc.index('"n"') < doc.index('"avg"')


def test_metrics_invariant_to_index_permutation(params, rng):
    names = [f"term{i}x" for i in range(40)]
    onto = [NameRecord(n, f"C{i % 13}", "en") for i, n in enumerate(names)]
    tests = {"en": [EvalExample("", f"term{i}", f"C{i % 13}", "en") for i in range(40)]}
    a = evaluate(params, build_index(params, onto), tests)
    perm = rng.permutation(40)
    b = evaluate(params, build_index(params, [onto[i] for i in perm]), tests)
    assert a.to_json() == b.to_json()


def test_test_set_files(tmp_path):
    d = tmp_path / "tests"
    d.mkdir()
    exs = [EvalExample("Die Inkubationszeit ...", "Inkubationszeit", "C0021215", "de")]
    (d / "xlbel_de.tsv").write_text(format_test_set(exs), encoding="utf-8")
    (d / "es.tsv").write_text("", encoding="utf-8")
    sets = read_test_dir(d)
    assert sets == {"de": exs, "es": []}
    assert lang_from_filename("test-fi.tsv") == "fi"
    with pytest.raises(ValueError):
        lang_from_filename("english.tsv")
    with pytest.raises(FileNotFoundError):
        read_test_dir(tmp_path / "missing")
