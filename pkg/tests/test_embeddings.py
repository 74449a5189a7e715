import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from metricf.embeddings import (
    BiasTable, DropoutMask, EmbeddingTable, clip_norm, clip_rows, init_params,
    load_params, pairwise_sq_distances, sample_mask, save_params, squared_distance,
)
from metricf.errors import ConfigError, DataFormatError, ShapeError


def chi_mean(k, std):
    # E||x|| for x ~ N(0, std^2 I_k)
    return std * math.sqrt(2) * math.exp(math.lgamma((k + 1) / 2) - math.lgamma(k / 2))


def test_init_deterministic():
    a = init_params(5, 7, 3, seed=11)
    b = init_params(5, 7, 3, seed=11)
    for x, y in ((a[0].P, b[0].P), (a[0].Q, b[0].Q), (a[1].b_u, b[1].b_u), (a[1].b_i, b[1].b_i)):
        assert x.tobytes() == y.tobytes()
    assert a[1].mu == 0.0


def test_init_row_norms_match_chi_mean():
    emb, _ = init_params(2000, 10, 150, seed=0, std=0.01)
    norms = np.linalg.norm(emb.P, axis=1)
    assert abs(norms.mean() - chi_mean(150, 0.01)) < 0.002
    assert abs(chi_mean(150, 0.01) - 0.01 * math.sqrt(150)) < 0.001
    assert norms.max() < 1.0


def test_init_draw_order_scalar_case():
    emb, bias = init_params(1, 1, 1, seed=3, std=0.5)
    expected = np.random.default_rng(3).normal(0.0, 0.5, size=4)
    got = [emb.P[0, 0], emb.Q[0, 0], bias.b_u[0], bias.b_i[0]]
    assert got == expected.tolist()


def test_init_rejects_bad_args():
    with pytest.raises(ConfigError):
        init_params(0, 1, 1, 0)
    with pytest.raises(ConfigError):
        init_params(1, 1, 1, 0, std=0.0)


def test_squared_distance_examples():
    assert squared_distance([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert squared_distance([1, 0], [0, 1]) == 2.0
    mask = DropoutMask(np.array([True, False]))
    assert squared_distance([1, 2], [0, 0], mask) == 2.0


def test_squared_distance_shape_errors():
    with pytest.raises(ShapeError):
        squared_distance([1, 2], [1, 2, 3])
    with pytest.raises(ShapeError):
        squared_distance([1, 2], [1, 2], DropoutMask(np.array([True, True, True])))


def test_mask_never_empty():
    with pytest.raises(ConfigError):
        DropoutMask(np.zeros(3, dtype=bool))
    rng = np.random.default_rng(0)
    for _ in range(200):
        assert sample_mask(2, 0.9, rng).keep_count >= 1


def test_metric_axioms_on_random_triples():
    rng = np.random.default_rng(1)
    for _ in range(10_000):
        k = int(rng.integers(1, 9))
        p, q, r = rng.normal(size=(3, k))
        d = lambda x, y: math.sqrt(squared_distance(x, y))
        assert d(p, q) >= 0
        assert d(p, p) == 0
        assert d(p, q) == d(q, p)
        assert d(p, r) <= d(p, q) + d(q, r) + 1e-9


def test_dropout_unbiased():
    rng = np.random.default_rng(5)
    p, q = rng.normal(size=(2, 50))
    exact = squared_distance(p, q)
    masks = [sample_mask(50, 0.3, rng) for _ in range(10_000)]
    est = np.mean([squared_distance(p, q, m) for m in masks])
    assert abs(est - exact) / exact < 0.02


def test_sample_mask_rates():
    rng = np.random.default_rng(2)
    assert sample_mask(150, 0.0, rng).keep_count == 150
    kept = [sample_mask(150, 0.05, rng).keep_count for _ in range(10_000)]
    assert abs(np.mean(kept) - 142.5) < 1
    with pytest.raises(ConfigError):
        sample_mask(10, 1.0, rng)


def test_sample_mask_determinism():
    a = sample_mask(40, 0.2, np.random.default_rng(9))
    b = sample_mask(40, 0.2, np.random.default_rng(9))
    assert np.array_equal(a.kept, b.kept)


def test_clip_norm_examples():
    np.testing.assert_array_equal(clip_norm([0.3, 0.4], 1.0), [0.3, 0.4])
    np.testing.assert_allclose(clip_norm([3.0, 4.0], 1.0), [0.6, 0.8], rtol=1e-15)
    np.testing.assert_array_equal(clip_norm([0.0, 0.0], 1.0), [0.0, 0.0])


@settings(max_examples=100)
@given(v=arrays(np.float64, st.integers(1, 10), elements=st.floats(-1e3, 1e3)), l=st.floats(0.01, 10))
def test_clip_norm_idempotent_and_non_expanding(v, l):
    once = clip_norm(v, l)
    assert np.linalg.norm(once) <= max(np.linalg.norm(v), 0) + 1e-12
    assert np.linalg.norm(once) <= l + 1e-9
    np.testing.assert_allclose(clip_norm(once, l), once, rtol=1e-12, atol=1e-300)


def test_clip_rows_matches_clip_norm():
    rng = np.random.default_rng(0)
    M = rng.normal(size=(20, 4))
    expected = np.array([clip_norm(r, 1.0) for r in M])
    clip_rows(M, 1.0, np.arange(0, 20, 2))
    np.testing.assert_allclose(M[::2], expected[::2])
    clip_rows(M, 1.0)
    np.testing.assert_allclose(M, expected)


def test_pairwise_matches_kernel():
    rng = np.random.default_rng(3)
    P, Q = rng.normal(size=(5, 6)), rng.normal(size=(7, 6))
    mask = DropoutMask(rng.random(6) > 0.4)
    D = pairwise_sq_distances(P, Q)
    Dm = pairwise_sq_distances(P, Q, mask.weights())
    for u in range(5):
        for i in range(7):
            assert D[u, i] == pytest.approx(squared_distance(P[u], Q[i]), rel=1e-12, abs=1e-12)
            assert Dm[u, i] == pytest.approx(squared_distance(P[u], Q[i], mask), rel=1e-12, abs=1e-12)


def test_persistence_roundtrip_bit_exact(tmp_path):
    emb, bias = init_params(4, 6, 3, seed=1)
    bias.mu, bias.tau = 1.2345678901234567, 0.9
    path = tmp_path / "m.bin"
    save_params(path, "rating", emb, bias, 1.0, 5.0)
    header = path.read_bytes().split(b"\n", 1)[0].decode()
    assert header.split()[:6] == ["METRICF", "v1", "rating", "4", "6", "3"]
    got = load_params(path)
    assert got.mode == "rating" and (got.r_min, got.r_max) == (1.0, 5.0)
    assert got.embeddings.P.tobytes() == emb.P.tobytes()
    assert got.embeddings.Q.tobytes() == emb.Q.tobytes()
    assert got.biases.b_u.tobytes() == bias.b_u.tobytes()
    assert got.biases.b_i.tobytes() == bias.b_i.tobytes()
    assert (got.biases.mu, got.biases.tau) == (bias.mu, bias.tau)


def test_persistence_without_biases(tmp_path):
    emb = EmbeddingTable(np.arange(6.0).reshape(2, 3), np.arange(9.0).reshape(3, 3))
    path = tmp_path / "r.bin"
    save_params(path, "ranking", emb, None, 0.0, 1.0)
    got = load_params(path)
    assert got.biases is None
    assert np.array_equal(got.embeddings.Q, emb.Q)
    # payload is exactly (M + N) k little-endian doubles after the header
    payload = path.read_bytes().split(b"\n", 1)[1]
    assert np.array_equal(np.frombuffer(payload, "<f8"), np.r_[emb.P.ravel(), emb.Q.ravel()])


def test_persistence_rejects_garbage(tmp_path):
    p = tmp_path / "bad.bin"
    p.write_bytes(b"NOTAMODEL\n\x00\x00")
    with pytest.raises(DataFormatError):
        load_params(p)
    emb = EmbeddingTable(np.zeros((2, 2)), np.zeros((2, 2)))
    save_params(p, "ranking", emb, None, 0, 1)
    p.write_bytes(p.read_bytes()[:-8])
    with pytest.raises(DataFormatError):
        load_params(p)
    with pytest.raises(ConfigError):
        save_params(p, "mystery", emb, BiasTable(np.zeros(2), np.zeros(2)), 0, 1)
