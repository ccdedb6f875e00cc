import hashlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xlsap.core import TrainConfig
from xlsap.encoder import (
    EncoderParams,
    CheckpointError,
    char_ngrams,
    checkpoint_bytes,
    encode,
    encode_backward,
    encode_batch,
    encode_batch_backward,
    featurize,
    fnv1a_64,
    init_params,
    load_checkpoint,
    save_checkpoint,
)

SMALL = TrainConfig(vocab_size=97, embed_dim=8, batch_size=4)


@pytest.mark.parametrize(
    "data, expected",
    [(b"", 0xCBF29CE484222325), (b"a", 0xAF63DC4C8601EC8C), (b"foobar", 0x85944171F73967E8)],
)
def test_fnv1a_reference_vectors(data, expected):
    assert fnv1a_64(data) == expected


def test_ngrams_by_enumeration():
    assert char_ngrams("ab", 3) == ["^ab", "ab$"]
    assert char_ngrams("a", 3) == ["^a$"]
    assert char_ngrams("AB", 3) == ["^ab", "ab$"]
    grams = char_ngrams("vaccination", 3)
    wrapped = "^vaccination$"
    assert grams == [wrapped[i:i + 3] for i in range(len(wrapped) - 2)]
    assert len(featurize("vaccination", 3)) == len("vaccination") + 2 - 3 + 1 == 11


def test_featurize_ids_in_range():
    assert len(featurize("ab", 3, 97)) == 2
    assert len(featurize("a", 3, 97)) == 1
    assert all(0 <= i < 97 for i in featurize("vacunación", 3, 97))


def test_featurize_digest_is_stable():
    corpus = ["vaccination", "active immunization", "vacunación", "予防接種", "Inkubationszeit", "a"]
    ids = [i for name in corpus for i in featurize(name, 3, 1 << 16)]
    digest = hashlib.sha256(np.asarray(ids, dtype="<u4").tobytes()).hexdigest()
    assert digest == FEATURE_DIGEST


FEATURE_DIGEST = "debb67c97ac8779d8e7f9b2b73ca6cd36c001e01392e60dc77060f5b9eca7bc1"


def test_init_determinism():
    a, b = init_params(SMALL, 1), init_params(SMALL, 1)
    assert np.array_equal(a.table, b.table)
    assert not np.array_equal(a.table, init_params(SMALL, 2).table)
    assert np.array_equal(a.projection, np.eye(8))
    assert np.abs(a.table).max() <= 0.05


def test_encode_unit_norm_and_pure():
    p = init_params(SMALL, 3)
    for name in ["a", "vaccination", "予防接種", "x y z"]:
        v = encode(p, name)
        assert abs(np.linalg.norm(v) - 1) < 1e-6
        assert np.array_equal(v, encode(p, name))


def test_encode_single_ngram_is_normalized_row():
    table = np.zeros((1, 3))
    table[0] = [3.0, 0.0, 4.0]
    p = EncoderParams(table, np.eye(3))
    np.testing.assert_allclose(encode(p, "a"), [0.6, 0.0, 0.8])


def test_zero_vector_maps_to_first_basis_vector():
    p = EncoderParams(np.zeros((5, 3)), np.eye(3))
    np.testing.assert_array_equal(encode(p, "abc"), [1.0, 0.0, 0.0])


def test_encode_batch_shapes():
    p = init_params(SMALL, 0)
    assert encode_batch(p, []).shape == (0, 8)
    np.testing.assert_array_equal(encode_batch(p, ["vaccination"])[0], encode(p, "vaccination"))
    names = [f"name{i}" for i in range(512)]
    out = encode_batch(p, names)
    assert out.shape == (512, 8)
    np.testing.assert_allclose(np.linalg.norm(out, axis=1), 1, atol=1e-6)
    np.testing.assert_allclose(out[17], encode(p, "name17"))


def _perturbed(p):
    rng = np.random.default_rng(0)
    q = p.copy()
    q.projection = np.eye(p.embed_dim) + 0.3 * rng.standard_normal(p.projection.shape)
    return q


def test_backward_zero_and_radial_grad():
    p = _perturbed(init_params(SMALL, 5))
    g = encode_backward(p, "vaccination", np.zeros(8))
    assert not g.table_rows.any() and not g.projection.any()
    u = encode(p, "vaccination")
    g = encode_backward(p, "vaccination", 2.5 * u)
    assert np.abs(g.table_rows).max() < 1e-12
    assert np.abs(g.projection).max() < 1e-12


def _fd_check(p, names, upstream, h=1e-4):
    """Central differences of <upstream, encode_batch> against the analytic VJP."""
    grad = encode_batch_backward(p, names, upstream)
    dense = grad.dense_table(p.vocab_size)

    def objective(q):
        return float(np.sum(upstream * encode_batch(q, names)))

    worst = 0.0
    for attr, analytic in (("table", dense), ("projection", grad.projection)):
        arr = getattr(p, attr)
        for idx in np.ndindex(arr.shape):
            if attr == "table" and not dense[idx[0]].any():
                continue
            old = arr[idx]
            arr[idx] = old + h
            up = objective(p)
            arr[idx] = old - h
            down = objective(p)
            arr[idx] = old
            fd = (up - down) / (2 * h)
            worst = max(worst, abs(fd - analytic[idx]) / max(1e-6, abs(fd), abs(analytic[idx])))
    return worst


def test_backward_matches_finite_differences():
    p = _perturbed(init_params(SMALL, 11))
    names = ["vaccination", "vacunación", "immunization", "ab", "予防接種"]
    upstream = np.random.default_rng(1).standard_normal((5, 8))
    assert _fd_check(p, names, upstream) < 1e-5


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32), st.lists(st.text("abcdé ", min_size=1, max_size=8), min_size=1, max_size=4))
def test_backward_fd_property(seed, names):
    # O(1) table entries: at init scale a one-n-gram name has a tiny
    # pre-normalization norm and h=1e-4 is no longer in the linear regime.
    p = _perturbed(init_params(SMALL, seed))
    p.table *= 20.0
    upstream = np.random.default_rng(seed).standard_normal((len(names), 8))
    assert _fd_check(p, names, upstream) < 1e-4


def test_checkpoint_round_trip(tmp_path):
    cfg = SMALL.replace(ngram_order=4)
    p = init_params(cfg, 9)
    path = tmp_path / "model.bin"
    save_checkpoint(p, path, cfg)
    raw = path.read_bytes()
    assert raw[:4] == b"XSAP"
    assert int.from_bytes(raw[4:8], "little") == 1
    assert int.from_bytes(raw[8:12], "little") == 97
    assert int.from_bytes(raw[12:16], "little") == 8
    assert len(raw) == 16 + 4 * (97 * 8 + 64)
    q, loaded_cfg = load_checkpoint(path)
    assert loaded_cfg == cfg
    assert q.ngram_order == 4
    np.testing.assert_allclose(q.table, p.table, atol=1e-7)
    assert checkpoint_bytes(q) == raw


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"NOPE" + bytes(20))
    with pytest.raises(CheckpointError):
        load_checkpoint(path)
