import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sketchgemm import HllSketch, hash64
from sketchgemm.hll import estimate_registers, hash_ranks

MASK64 = (1 << 64) - 1


def hash64_oracle(key: int) -> int:
    """The finalizer evaluated with plain Python integers."""
    z = (key + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def test_hash64_matches_oracle():
    for key in [0, 1, 2, 12345, 2**31 - 1, 2**32 - 1]:
        assert hash64(key) == hash64_oracle(key)
    # spot-check the array path against the scalar path
    keys = np.arange(1000, dtype=np.uint64)
    out = hash64(keys)
    assert out[0] == hash64_oracle(0)
    assert out[999] == hash64_oracle(999)


def test_hash64_deterministic():
    assert hash64(42) == hash64(42)


def test_hash64_bit_frequency():
    # over 10^6 consecutive keys every output bit should be near-fair
    keys = np.arange(1_000_000, dtype=np.uint64)
    h = hash64(keys)
    for bit in range(64):
        freq = ((h >> np.uint64(bit)) & np.uint64(1)).mean()
        assert abs(freq - 0.5) <= 0.01, f"bit {bit}: {freq}"


def test_update_idempotent():
    s = HllSketch.empty(6)
    s.update(1234)
    snapshot = s.registers.copy()
    s.update(1234)
    np.testing.assert_array_equal(s.registers, snapshot)


def test_single_update_sets_one_register():
    s = HllSketch.empty(5)
    s.update(99)
    assert int(np.count_nonzero(s.registers)) == 1


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32))
def test_insertion_order_invariance(seed):
    keys = np.arange(1000, dtype=np.uint64)
    rng = np.random.default_rng(seed)
    shuffled = rng.permutation(keys)
    a = HllSketch.from_keys(keys, 6)
    b = HllSketch.from_keys(shuffled, 6)
    np.testing.assert_array_equal(a.registers, b.registers)


def test_merge_identity():
    s = HllSketch.from_keys(np.arange(50), 5)
    merged = s.merge(HllSketch.empty(5))
    np.testing.assert_array_equal(merged.registers, s.registers)


def test_merge_commutative():
    a = HllSketch.from_keys(np.arange(0, 300), 6)
    b = HllSketch.from_keys(np.arange(150, 500), 6)
    np.testing.assert_array_equal(a.merge(b).registers, b.merge(a).registers)


def test_merge_is_union_sketch():
    rng = np.random.default_rng(5)
    x = rng.integers(0, 10**6, 400)
    y = rng.integers(0, 10**6, 400)
    for p in (5, 6, 7):
        merged = HllSketch.from_keys(x, p).merge(HllSketch.from_keys(y, p))
        union = HllSketch.from_keys(np.concatenate([x, y]), p)
        np.testing.assert_array_equal(merged.registers, union.registers)


def test_merge_precision_mismatch():
    with pytest.raises(ValueError, match="precision"):
        HllSketch.empty(5).merge(HllSketch.empty(6))


def test_estimate_empty_is_zero():
    for p in (5, 6, 7):
        assert HllSketch.empty(p).estimate() == 0.0


def test_estimate_duplicate_insensitive():
    keys = np.arange(137)
    repeated = np.repeat(keys, 10)
    assert (HllSketch.from_keys(keys, 6).estimate()
            == HllSketch.from_keys(repeated, 6).estimate())


def test_estimate_5000_keys_within_bound():
    # 1000 seeded trials; |est - 5000| <= 3 sigma in at least 99% of them
    m, p, c = 64, 6, 5000
    sigma = 1.04 / np.sqrt(m) * c
    rng = np.random.default_rng(2024)
    hits = 0
    for _ in range(1000):
        base = rng.integers(0, 2**40)
        est = HllSketch.from_keys(np.arange(base, base + c, dtype=np.uint64), p).estimate()
        hits += abs(est - c) <= 3 * sigma
    assert hits >= 990


def test_register_monotonicity():
    s = HllSketch.empty(6)
    prev = s.registers.copy()
    rng = np.random.default_rng(8)
    for key in rng.integers(0, 2**32, 500):
        s.update(int(key))
        assert (s.registers >= prev).all()
        prev = s.registers.copy()


def test_rank_fits_one_byte():
    for p in (5, 6, 7):
        # worst case: hash with all-zero high bits maximizes the rank
        _, ranks = hash_ranks(np.arange(100_000, dtype=np.uint64), p)
        assert ranks.max() <= 64 - p + 1
        assert ranks.min() >= 1


def test_invalid_precision_rejected():
    with pytest.raises(ValueError):
        HllSketch.empty(4)
    with pytest.raises(ValueError):
        HllSketch.empty(8)


def test_estimate_registers_batched_matches_scalar():
    rng = np.random.default_rng(3)
    sketches = [HllSketch.from_keys(rng.integers(0, 10**6, n), 6)
                for n in (0, 3, 50, 900)]
    batch = estimate_registers(np.stack([s.registers for s in sketches]))
    for s, e in zip(sketches, batch):
        assert s.estimate() == e
