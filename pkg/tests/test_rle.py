import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crowdsim.rle import RleError, RleMask, decode_rle, encode_rle


def test_golden_all_background():
    assert encode_rle(np.zeros((2, 2), dtype=bool)).counts == [4]


def test_golden_all_foreground():
    assert encode_rle(np.ones((2, 2), dtype=bool)).counts == [0, 4]


def test_golden_decode():
    assert not decode_rle(RleMask(size=(2, 2), counts=[4])).any()
    assert decode_rle(RleMask(size=(2, 2), counts=[0, 4])).all()


def test_column_major_order():
    # single pixel at row 1, col 0 of a 3x2 mask: F-order index 1
    m = np.zeros((3, 2), dtype=bool)
    m[1, 0] = True
    r = encode_rle(m)
    assert r.counts == [1, 1, 4]
    assert (decode_rle(r) == m).all()


def test_counts_invariants():
    rng = np.random.default_rng(0)
    for _ in range(100):
        h, w = rng.integers(1, 20, size=2)
        m = rng.random((h, w)) > 0.5
        r = encode_rle(m)
        assert sum(r.counts) == h * w
        # zero only allowed as the leading run
        assert all(c > 0 for c in r.counts[1:])
        assert r.area() == int(m.sum())


def test_roundtrip_random_seeded():
    rng = np.random.default_rng(12)
    for _ in range(300):
        h, w = rng.integers(1, 64, size=2)
        m = rng.random((h, w)) > rng.uniform(0.1, 0.9)
        assert (decode_rle(encode_rle(m)) == m).all()


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 24), st.integers(1, 24), st.integers(0, 2 ** 32 - 1))
def test_roundtrip_property(h, w, seed):
    m = np.random.default_rng(seed).random((h, w)) > 0.5
    assert (decode_rle(encode_rle(m)) == m).all()


def test_sum_mismatch_raises():
    with pytest.raises(RleError) as exc:
        decode_rle(RleMask(size=(2, 2), counts=[3]))
    assert "3" in str(exc.value)


def test_negative_count_raises():
    with pytest.raises(RleError):
        decode_rle(RleMask(size=(2, 2), counts=[5, -1]))


def test_empty_mask_rejected():
    with pytest.raises(RleError):
        encode_rle(np.zeros((0, 4), dtype=bool))
    with pytest.raises(RleError):
        decode_rle(RleMask(size=(0, 4), counts=[]))
