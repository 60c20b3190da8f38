import gzip
import struct
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedht.data import (
    BatchSampler,
    Dataset,
    IDXError,
    PartitionError,
    load_idx_dataset,
    make_blobs,
    make_quadratic,
    make_quadratic_clients,
    parse_idx,
    partition_quantity_label,
    read_idx,
    split_holdout,
)

DATA = Path(__file__).parent / "data"
IMAGES = DATA / "tiny-images-idx3-ubyte"
LABELS = DATA / "tiny-labels-idx1-ubyte"

GOLDEN_PIXELS = np.array([
    [[0, 255, 128], [1, 2, 3]],
    [[10, 20, 30], [40, 50, 60]],
    [[255, 255, 255], [0, 0, 0]],
    [[7, 0, 7], [0, 7, 0]],
]) / 255.0


def test_golden_image_file():
    raw = IMAGES.read_bytes()
    assert raw[:16] == bytes.fromhex("00000803000000040000000200000003")
    assert len(raw) == 16 + 4 * 6
    arr = read_idx(IMAGES)
    assert arr.shape == (4, 2, 3) and arr.dtype == np.float64
    assert np.array_equal(arr, GOLDEN_PIXELS)


def test_golden_label_file():
    assert LABELS.read_bytes() == bytes.fromhex("0000080100000004") + bytes([3, 0, 9, 3])
    assert read_idx(LABELS).tolist() == [3, 0, 9, 3]


def test_gzip_file_decodes_identically():
    assert read_idx(DATA / "tiny-labels-idx1-ubyte.gz").tolist() == [3, 0, 9, 3]


def test_load_pair():
    ds = load_idx_dataset(IMAGES, LABELS, classes=10)
    assert ds.inputs.shape == (4, 6) and ds.classes == 10
    assert np.array_equal(ds.inputs[3], GOLDEN_PIXELS[3].ravel())


def test_format_examples():
    assert parse_idx(bytes.fromhex("00000801 00000003 070201".replace(" ", ""))).tolist() == [7, 2, 1]
    img = parse_idx(bytes.fromhex("00000803 00000001 00000002 00000002 00ff8000".replace(" ", "")))
    assert img.reshape(-1).tolist() == [0.0, 1.0, 128 / 255, 0.0]


def test_other_element_types():
    raw = struct.pack(">HBBI", 0, 0x0D, 1, 2) + struct.pack(">ff", 1.5, -2.0)
    assert parse_idx(raw).tolist() == [1.5, -2.0]
    raw = struct.pack(">HBBI", 0, 0x0B, 1, 2) + struct.pack(">hh", -300, 7)
    assert parse_idx(raw).tolist() == [-300, 7]


def test_bad_magic():
    raw = bytearray(LABELS.read_bytes())
    raw[0] = 0x01
    with pytest.raises(IDXError) as exc:
        parse_idx(bytes(raw))
    assert "magic" in str(exc.value) and exc.value.offset == 0
    with pytest.raises(IDXError, match="magic"):
        parse_idx(bytes.fromhex("00000a0100000001") + b"\x00")


def test_truncated_payload():
    raw = IMAGES.read_bytes()[:-5]
    with pytest.raises(IDXError) as exc:
        parse_idx(raw)
    assert "declared 24 bytes, found 19" in str(exc.value)
    assert exc.value.offset == 16


def test_truncated_header():
    with pytest.raises(IDXError, match="truncated header"):
        parse_idx(IMAGES.read_bytes()[:10])
    with pytest.raises(IDXError, match="truncated header"):
        parse_idx(b"\x00\x00")


def test_dimension_overflow():
    raw = struct.pack(">HBBIII", 0, 0x08, 3, 0xFFFFFFFF, 0xFFFFFFFF, 2) + b"\x00" * 8
    with pytest.raises(IDXError, match="exceed"):
        parse_idx(raw)


def test_read_idx_names_the_file(tmp_path):
    p = tmp_path / "bad.idx"
    p.write_bytes(b"\x01\x02\x03\x04")
    with pytest.raises(IDXError, match="bad.idx"):
        read_idx(p)


def test_gzip_roundtrip_of_images(tmp_path):
    p = tmp_path / "img.gz"
    p.write_bytes(gzip.compress(IMAGES.read_bytes()))
    assert np.array_equal(read_idx(p), GOLDEN_PIXELS)


# ------------------------------------------------------------ partitions


def balanced(classes=10, per=20, features=3):
    labels = np.repeat(np.arange(classes), per)
    return Dataset(np.zeros((labels.size, features)), labels, classes)


def test_iid_degenerate_case():
    part = partition_quantity_label(balanced(), 10, 10, seed=0)
    ds = balanced()
    for a in part.assignments:
        assert set(ds.labels[a]) == set(range(10))


def test_two_clients_one_label_each():
    ds = balanced(classes=2, per=7)
    part = partition_quantity_label(ds, 2, 1, seed=3)
    assert sorted(len(set(ds.labels[a])) for a in part.assignments) == [1, 1]
    assert sorted(a.size for a in part.assignments) == [7, 7]


def test_two_labels_balanced_gives_equal_weights():
    part = partition_quantity_label(balanced(), 10, 2, seed=1)
    assert np.allclose(part.weights, 0.1, rtol=0, atol=1e-15)


def test_infeasible_partition():
    with pytest.raises(PartitionError):
        partition_quantity_label(balanced(), 3, 2, seed=0)
    with pytest.raises(PartitionError):
        partition_quantity_label(balanced(), 10, 11, seed=0)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 8), st.integers(1, 12), st.integers(0, 10**6), st.data())
def test_partition_properties(classes, n, seed, data):
    C = data.draw(st.integers(1, classes))
    if n * C < classes:
        with pytest.raises(PartitionError):
            partition_quantity_label(balanced(classes, 30), n, C, seed)
        return
    rng = np.random.default_rng(seed)
    holders_max = -(-n * C // classes)
    labels = np.repeat(np.arange(classes), holders_max + rng.integers(0, 5, classes))
    ds = Dataset(np.zeros((labels.size, 1)), labels, classes)
    part = partition_quantity_label(ds, n, C, seed)
    allidx = np.concatenate(part.assignments)
    assert np.unique(allidx).size == allidx.size == len(ds)
    assert abs(part.weights.sum() - 1.0) <= 1e-12
    for a in part.assignments:
        assert len(set(ds.labels[a])) == C
    counts = np.zeros(classes, int)
    for a in part.assignments:
        counts[list(set(ds.labels[a]))] += 1
    assert counts.max() - counts.min() <= 1


def test_partition_is_seed_deterministic():
    a = partition_quantity_label(balanced(), 10, 2, seed=5)
    b = partition_quantity_label(balanced(), 10, 2, seed=5)
    assert all(np.array_equal(x, y) for x, y in zip(a.assignments, b.assignments))


# ------------------------------------------------------------- synthetic


def test_blobs_deterministic_and_scaled():
    a = make_blobs(200, 5, 4, seed=9)
    b = make_blobs(200, 5, 4, seed=9)
    assert np.array_equal(a.inputs, b.inputs) and np.array_equal(a.labels, b.labels)
    assert a.inputs.min() == 0.0 and a.inputs.max() == 1.0
    assert np.bincount(a.labels).tolist() == [50] * 4


def test_blobs_standard_scaling():
    ds = make_blobs(500, 6, 3, seed=2, scale="standard")
    assert np.allclose(ds.inputs.mean(axis=0), 0, atol=1e-12)
    assert np.allclose(ds.inputs.std(axis=0), 1, atol=1e-12)
    with pytest.raises(ValueError):
        make_blobs(10, 2, 2, scale="minmax")


def test_blobs_zero_separation_is_chance_level():
    # nearest class mean on held-out data cannot beat chance by much
    train, test = split_holdout(make_blobs(6000, 8, 5, separation=0.0, seed=4), 0.5, seed=0)
    means = np.stack([train.inputs[train.labels == c].mean(axis=0) for c in range(5)])
    pred = np.argmin(((test.inputs[:, None, :] - means) ** 2).sum(axis=2), axis=1)
    assert abs(np.mean(pred == test.labels) - 0.2) < 0.04


def test_blobs_need_two_classes():
    with pytest.raises(ValueError):
        make_blobs(10, 2, 1)


def test_quadratic_forced_spectrum():
    q = make_quadratic(2, 1.0, 1.0, seed=0)
    assert np.array_equal(q.A, np.eye(2))
    q = make_quadratic(6, 0.5, 8.0, seed=1)
    assert np.allclose(np.linalg.eigvalsh(q.A), np.linspace(0.5, 8.0, 6))


def test_quadratic_clients_pool_to_zero_mean():
    clients = make_quadratic_clients(4, 5, 30, noise=1.0, heterogeneity=2.0, seed=0)
    pooled = np.concatenate([c.inputs for c in clients])
    assert np.allclose(pooled.mean(axis=0), 0, atol=1e-12)


# --------------------------------------------------------------- sampler


def test_sampler_covers_epoch_and_wraps():
    s = BatchSampler(10, 4, seed=0)
    first = np.concatenate([s.next_indices() for _ in range(5)])
    assert first.size == 20
    assert sorted(first[:10]) == list(range(10)) and sorted(first[10:20]) == list(range(10))
    full = BatchSampler(3, 8, seed=0)
    assert full.next_indices().tolist() == [0, 1, 2]


def test_sampler_state_roundtrip():
    s = BatchSampler(13, 5, seed=1)
    s.next_indices()
    st_ = s.state()
    ahead = [s.next_indices() for _ in range(4)]
    t = BatchSampler(13, 5, seed=99)
    t.set_state(st_)
    assert all(np.array_equal(a, t.next_indices()) for a in ahead)
