import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fedht.compressors import (
    CompressorKind,
    SparseUpdate,
    compress,
    compress_hard_threshold,
    compress_topk,
    compression_ratio,
    decompress,
    encoded_size_bytes,
    quantize_ternary,
    topk_count,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, width=64)


def test_hard_threshold_examples():
    u = compress_hard_threshold(np.array([0.5, -0.2, 1.0]), 0.3)
    assert u.indices.tolist() == [0, 2] and u.values.tolist() == [0.5, 1.0]
    assert compress_hard_threshold(np.array([0.3, -0.3]), 0.3).nnz == 0


def test_topk_examples():
    assert compress_topk(np.array([0.5, -0.2, 1.0]), 0.34).indices.tolist() == [2]
    u = compress_topk(np.array([-2.0, 2.0, 1.0]), 2 / 3 + 1e-9)
    assert u.indices.tolist() == [0, 1] and u.values.tolist() == [-2.0, 2.0]
    assert topk_count(10, 0.25) == 2
    assert topk_count(100, 0.001) == 1
    with pytest.raises(ValueError):
        compress_topk(np.ones(3), 0.0)


def test_ternary_examples():
    u = quantize_ternary(SparseUpdate(4, [0, 3], [0.5, -0.3]))
    assert u.encoding == "ternary" and u.ternary_magnitude == pytest.approx(0.4)
    assert u.values == pytest.approx([0.4, -0.4])
    e = quantize_ternary(SparseUpdate(4, [], []))
    assert e.nnz == 0 and e.ternary_magnitude == 0.0
    one = quantize_ternary(SparseUpdate(4, [2], [-1.0]))
    assert one.values.tolist() == [-1.0] and one.ternary_magnitude == 1.0
    with pytest.raises(ValueError):
        quantize_ternary(u)


def test_decompress_examples():
    assert decompress(SparseUpdate(3, [0, 2], [0.5, 1.0])).tolist() == [0.5, 0.0, 1.0]
    assert decompress(SparseUpdate(4, [], [])).tolist() == [0.0] * 4


def test_byte_accounting_examples():
    assert encoded_size_bytes(SparseUpdate(10, [1, 4], [1.0, 2.0])) == 24
    assert encoded_size_bytes(SparseUpdate(10, [], [])) == 8
    t = quantize_ternary(SparseUpdate(20, np.arange(8), np.linspace(-1, 1, 8)))
    assert encoded_size_bytes(t) == 45
    assert encoded_size_bytes(compress(np.ones(5), CompressorKind("identity"))) == 20


@pytest.mark.parametrize("nnz", [0, 1, 7, 8, 9, 30])
def test_wire_length_matches_accounting(nnz, rng):
    idx = np.sort(rng.choice(40, size=nnz, replace=False))
    u = SparseUpdate(40, idx, rng.standard_normal(nnz))
    assert len(u.to_bytes()) == encoded_size_bytes(u)
    q = quantize_ternary(u)
    assert len(q.to_bytes()) == encoded_size_bytes(q)


def test_compression_ratio_examples():
    assert compression_ratio(SparseUpdate(1000, [3], [1.0])) == 0.001
    assert compression_ratio(compress_hard_threshold(np.array([1.0, -2.0, 0.1]), 0.0)) == 1.0
    assert compression_ratio(SparseUpdate(5, [], [])) == 0.0


def test_validate_rejects_bad_messages():
    with pytest.raises(ValueError):
        SparseUpdate(5, [3, 1], [1.0, 2.0]).validate()
    with pytest.raises(ValueError):
        SparseUpdate(5, [1, 5], [1.0, 2.0]).validate()
    with pytest.raises(ValueError):
        SparseUpdate(5, [1, 2], [0.4, -0.5], "ternary", 0.4).validate()
    with pytest.raises(ValueError):
        SparseUpdate(5, [1], [1.0, 2.0])


def test_compressor_kind_domains():
    with pytest.raises(ValueError):
        CompressorKind("hard_threshold", -0.1)
    with pytest.raises(ValueError):
        CompressorKind("topk", 1.5)
    with pytest.raises(ValueError):
        CompressorKind("gamma_fedht", lambda0=0.1, alpha=0.5)
    with pytest.raises(ValueError):
        CompressorKind("randk", 0.1)


@settings(max_examples=300, deadline=None)
@given(arrays(np.float64, st.integers(1, 64), elements=finite), st.floats(0, 10))
def test_absolute_compressor_bound(x, lam):
    u = compress_hard_threshold(x, lam)
    u.validate()
    r = decompress(u) - x
    assert np.max(np.abs(r)) <= lam
    # the sum of squares is rounded; the per-coordinate check above is exact
    assert float(r @ r) <= x.size * lam**2 * (1 + 1e-12)


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.integers(1, 64), elements=finite))
def test_lambda_zero_roundtrip(x):
    assert np.array_equal(decompress(compress_hard_threshold(x, 0.0)), np.where(x != 0, x, 0.0))


@pytest.mark.parametrize("d", range(1, 13))
def test_topk_subset_optimality_exhaustive(d, rng):
    x = rng.standard_normal(d)
    x[rng.integers(d)] = x[0]  # a tie in magnitude
    for m in range(1, d + 1):
        u = compress_topk(x, (m + 0.5) / d if m < d else 1.0)
        assert u.nnz == m
        err = float(np.sum(np.delete(x, u.indices) ** 2))
        best = min(float(np.sum(np.delete(x, list(s)) ** 2)) for s in itertools.combinations(range(d), m))
        assert err <= best


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.integers(2, 64), elements=finite, unique=True), st.data())
def test_threshold_topk_duality(x, data):
    mag = np.abs(x)
    if np.unique(mag).size != mag.size:
        return
    lam = data.draw(st.sampled_from(sorted(mag)[:-1]))
    ht = compress_hard_threshold(x, lam)
    tk = compress_topk(x, (ht.nnz + 0.5) / x.size)
    assert np.array_equal(ht.indices, tk.indices) and np.array_equal(ht.values, tk.values)


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.integers(1, 64), elements=finite), st.floats(0, 5))
def test_ternary_sign_and_mass(x, lam):
    u = compress_hard_threshold(x, lam)
    q = quantize_ternary(u)
    q.validate()
    assert np.all(np.sign(q.values) == np.sign(u.values))
    assert np.sum(np.abs(q.values)) == pytest.approx(np.sum(np.abs(u.values)), rel=1e-12, abs=1e-12)


def test_compress_is_deterministic(rng):
    x = rng.standard_normal(1000)
    for comp in (CompressorKind("topk", 0.05), CompressorKind("hard_threshold", 1.0, True)):
        assert compress(x, comp).to_bytes() == compress(x.copy(), comp).to_bytes()


def test_gamma_fedht_needs_round_threshold():
    with pytest.raises(ValueError):
        compress(np.ones(3), CompressorKind("gamma_fedht", lambda0=0.1))
    assert compress(np.array([1.0, 0.1]), CompressorKind("gamma_fedht", lambda0=0.1), 0.5).indices.tolist() == [0]
