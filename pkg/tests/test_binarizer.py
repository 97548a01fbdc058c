import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from deepcabac import _kernels
from deepcabac.binarizer import (BYPASS, BinarizerConfig, ContextSet, binarize, bin_counts,
                                 bin_string, debinarize, decode_level, decode_levels,
                                 encode_level, encode_levels, estimate_level_bits)
from deepcabac.cabac import COST_TABLE, PROB_ONE, ArithmeticDecoder, ArithmeticEncoder
from deepcabac.errors import (ContractError, CorruptStreamError, LevelRangeError,
                              TruncatedStreamError)

N1 = BinarizerConfig(n_flags=1)


@pytest.mark.parametrize("level,bits", [
    (0, "0"), (1, "100"), (-1, "110"), (2, "1010"), (-4, "111101"), (7, "10111010")])
def test_golden_strings_n1(level, bits):
    assert bin_string(binarize(level, N1)) == bits


def test_default_config():
    cfg = BinarizerConfig()
    assert cfg.n_flags == 10 and cfg.max_golomb_order == 31
    assert cfg.n_golomb_contexts == 16
    assert cfg.n_contexts == 2 + 1 + 10 + 16


@pytest.mark.parametrize("kw", [dict(n_flags=0), dict(n_flags=256), dict(max_golomb_order=-1)])
def test_config_rejects_bad_values(kw):
    with pytest.raises(ContractError):
        BinarizerConfig(**kw)


def test_level_one_uses_three_context_bins():
    bins = binarize(1)
    assert len(bins) == 3 and all(b.role != BYPASS for b in bins)


def test_exhaustive_roundtrip_window():
    for cfg in (N1, BinarizerConfig()):
        for level in range(-10_000, 10_001):
            bins = [b.value for b in binarize(level, cfg)]
            assert debinarize(bins, cfg) == level


def test_prefix_free_small_window():
    strings = [bin_string(binarize(v, N1)) for v in range(-300, 301)]
    assert len(set(strings)) == len(strings)
    by_len = sorted(strings, key=len)
    for i, s in enumerate(by_len):
        for t in by_len[i + 1:]:
            assert not t.startswith(s)


def test_max_level_is_representable_and_next_is_not():
    cfg = BinarizerConfig(n_flags=2, max_golomb_order=3)
    top = cfg.max_abs_level
    assert debinarize([b.value for b in binarize(-top, cfg)], cfg) == -top
    with pytest.raises(LevelRangeError):
        binarize(top + 1, cfg)
    with pytest.raises(LevelRangeError):
        encode_levels(np.array([top + 1]), cfg)


def test_overlong_prefix_is_corrupt():
    cfg = BinarizerConfig(n_flags=1, max_golomb_order=3)
    with pytest.raises(CorruptStreamError):
        debinarize([1, 0, 1] + [1] * 10, cfg)


def test_bins_ending_early_are_truncated():
    with pytest.raises(TruncatedStreamError):
        debinarize([1, 0, 1], N1)


def test_estimate_examples_fresh_contexts():
    ctxs = ContextSet.fresh(BinarizerConfig(), frozen=True)
    cfg = BinarizerConfig()
    assert estimate_level_bits(ctxs, 0, cfg, False) == 1.0
    assert estimate_level_bits(ctxs, 1, cfg, False) == 3.0
    assert estimate_level_bits(ctxs, -4, N1, False) == 6.0


def test_estimate_does_not_touch_contexts():
    cfg = BinarizerConfig()
    ctxs = ContextSet.fresh(cfg)
    before = ctxs.states()
    estimate_level_bits(ctxs, 37, cfg, True)
    assert np.array_equal(ctxs.states(), before)


def _random_contexts(rng, cfg):
    ctxs = ContextSet.fresh(cfg, frozen=True)
    ctxs.load_states(rng.integers(64, PROB_ONE - 63, cfg.n_contexts))
    return ctxs


def test_estimate_matches_float_log2_within_1_128_bit_per_bin(rng):
    cfg = BinarizerConfig(n_flags=3)
    for _ in range(200):
        ctxs = _random_contexts(rng, cfg)
        level = int(rng.integers(-5000, 5001))
        prev = bool(rng.integers(2))
        want = 0.0
        for value, role, index in binarize(level, cfg):
            if role == BYPASS:
                want += 1.0
            else:
                p0 = ctxs.model(role, index, prev).state / PROB_ONE
                want -= math.log2(p0 if value == 0 else 1 - p0)
        n = len(binarize(level, cfg))
        assert abs(estimate_level_bits(ctxs, level, cfg, prev) - want) <= n / 128


def test_kernel_cost_equals_python_cost(rng):
    cfg = BinarizerConfig(n_flags=4)
    for _ in range(300):
        ctxs = _random_contexts(rng, cfg)
        level = int(rng.integers(-3000, 3001))
        prev = bool(rng.integers(2))
        k = _kernels.level_bits(ctxs.states(), COST_TABLE, level, int(prev), cfg.n_flags,
                                cfg.n_golomb_contexts)
        assert k == estimate_level_bits(ctxs, level, cfg, prev)


def test_tail_cost_is_monotone_with_fresh_contexts():
    cfg = BinarizerConfig()
    ctxs = ContextSet.fresh(cfg, frozen=True)
    costs = [estimate_level_bits(ctxs, m, cfg, False) for m in range(0, 5000)]
    assert all(a <= b for a, b in zip(costs, costs[1:]))


def test_previous_significance_selects_context_only():
    cfg = BinarizerConfig()
    ctxs = ContextSet.fresh(cfg)
    assert ctxs.model("sig", 0, True) is not ctxs.model("sig", 0, False)
    assert binarize(5, cfg) == binarize(5, cfg)


def _python_encode(levels, cfg):
    ctxs = ContextSet.fresh(cfg)
    enc = ArithmeticEncoder()
    prev = False
    for v in levels:
        encode_level(enc, ctxs, int(v), cfg, prev)
        prev = v != 0
    return enc.finish(), ctxs


def test_bulk_encoder_matches_per_level_engine(rng):
    for cfg in (N1, BinarizerConfig()):
        levels = np.where(rng.random(3000) < 0.7, 0, rng.integers(-400, 401, 3000))
        payload, ctxs = _python_encode(levels, cfg)
        bulk_ctxs = ContextSet.fresh(cfg)
        assert encode_levels(levels, cfg, bulk_ctxs) == payload
        assert np.array_equal(bulk_ctxs.states(), ctxs.states())


def test_python_decode_level_roundtrip(rng):
    cfg = BinarizerConfig(n_flags=2)
    levels = rng.integers(-50, 51, 1500)
    payload, _ = _python_encode(levels, cfg)
    dec = ArithmeticDecoder(payload)
    ctxs = ContextSet.fresh(cfg)
    prev, out = False, []
    for _ in levels:
        v = decode_level(dec, ctxs, cfg, prev)
        out.append(v)
        prev = v != 0
    assert out == levels.tolist()


@given(st.lists(st.integers(-100_000, 100_000), max_size=200), st.integers(1, 12))
def test_bulk_roundtrip_property(levels, n_flags):
    cfg = BinarizerConfig(n_flags)
    payload = encode_levels(np.array(levels, dtype=np.int64), cfg)
    assert decode_levels(payload, len(levels), cfg).tolist() == levels


def test_all_zero_tensor_is_cheap():
    payload = encode_levels(np.zeros(10_000, dtype=np.int64))
    assert 8 * len(payload) / 10_000 < 0.15


def test_truncated_level_payload(rng):
    levels = rng.integers(-1000, 1001, 2000)
    payload = encode_levels(levels)
    with pytest.raises(TruncatedStreamError):
        decode_levels(payload[: len(payload) // 2], levels.size)


def test_bin_counts_match_binarize(rng):
    levels = rng.integers(-3000, 3001, 500)
    ctx_bins, bypass = bin_counts(levels, 3)
    cfg = BinarizerConfig(3)
    for v, c, b in zip(levels, ctx_bins, bypass):
        bins = binarize(int(v), cfg)
        n_bypass = sum(x.role == BYPASS for x in bins)
        assert (c, b) == (len(bins) - n_bypass, n_bypass)
