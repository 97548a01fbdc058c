"""Compiled hot loops: bulk bin/level coding and the RD quantizer.

The arithmetic here mirrors ``cabac.ArithmeticEncoder``/``ArithmeticDecoder``
operation for operation; the test suite checks byte identity between the two.
State lives in small int64 arrays so the helpers can be shared across kernels.

Context-state layout for one tensor (see ``binarizer.ContextSet``):
    0, 1                 sig flag, selected by previous-weight significance
    2                    sign flag
    3 .. 3+n-1           AbsGr(j) flags
    3+n .. 3+n+G-1       Exp-Golomb unary prefix positions (last one shared)
"""

import numpy as np
from numba import njit

from .errors import CorruptStreamError, LevelRangeError, TruncatedStreamError

PROB_ONE = 1 << 16
PROB_MIN = PROB_ONE >> 10
PROB_MAX = PROB_ONE - PROB_MIN
ADAPT_SHIFT = 5
RANGE_TOP = 1 << 24
MAX_PAD = 4

OK, TRUNCATED, CORRUPT, OUT_OF_RANGE = 0, 1, 2, 3

# encoder registers
E_LOW, E_RANGE, E_CACHE, E_PENDING, E_POS, E_START = 0, 1, 2, 3, 4, 5
# decoder registers
D_RANGE, D_CODE, D_POS, D_PAD, D_ERR = 0, 1, 2, 3, 4

_jit = njit(cache=True, nogil=True)


def raise_for_status(status, what="payload"):
    if status == TRUNCATED:
        raise TruncatedStreamError(f"{what} ended before all symbols were decoded")
    if status == CORRUPT:
        raise CorruptStreamError(f"{what} holds an Exp-Golomb prefix longer than allowed")
    if status == OUT_OF_RANGE:
        raise LevelRangeError("quantization level outside the representable range")


@_jit
def _update(states, c, b):
    s = states[c]
    if b:
        s -= s >> ADAPT_SHIFT
        if s < PROB_MIN:
            s = PROB_MIN
    else:
        s += (PROB_ONE - s) >> ADAPT_SHIFT
        if s > PROB_MAX:
            s = PROB_MAX
    states[c] = s


@_jit
def _enc_init(reg):
    reg[E_LOW] = 0
    reg[E_RANGE] = 0xFFFFFFFF
    reg[E_CACHE] = -1
    reg[E_PENDING] = 0
    reg[E_POS] = 0
    reg[E_START] = 0


@_jit
def _shift_low(reg, out):
    low = reg[E_LOW]
    if low < 0xFF000000 or low > 0xFFFFFFFF:
        carry = low >> 32
        pos = reg[E_POS]
        if reg[E_CACHE] >= 0:
            out[pos] = (reg[E_CACHE] + carry) & 0xFF
            pos += 1
        for _ in range(reg[E_PENDING]):
            out[pos] = (0xFF + carry) & 0xFF
            pos += 1
        reg[E_PENDING] = 0
        reg[E_POS] = pos
        reg[E_CACHE] = (low >> 24) & 0xFF
    else:
        reg[E_PENDING] += 1
    reg[E_LOW] = (low & 0x00FFFFFF) << 8


@_jit
def _enc_bin(reg, out, states, c, b, adaptive):
    bound = (reg[E_RANGE] >> 16) * states[c]
    if b:
        reg[E_LOW] += bound
        reg[E_RANGE] -= bound
    else:
        reg[E_RANGE] = bound
    while reg[E_RANGE] < RANGE_TOP:
        reg[E_RANGE] <<= 8
        _shift_low(reg, out)
    if adaptive:
        _update(states, c, b)


@_jit
def _enc_bypass(reg, out, b):
    reg[E_RANGE] >>= 1
    if b:
        reg[E_LOW] += reg[E_RANGE]
    while reg[E_RANGE] < RANGE_TOP:
        reg[E_RANGE] <<= 8
        _shift_low(reg, out)


@_jit
def _enc_finish(reg, out):
    low = reg[E_LOW]
    high = low + reg[E_RANGE]
    value = low
    nbits = 0
    for nb in range(33):
        gran = np.int64(1) << (32 - nb)
        value = (low + gran - 1) & ~(gran - 1)
        nbits = nb
        if value < high:
            break
    reg[E_LOW] = value
    for _ in range((nbits + 7) // 8 + 1):
        _shift_low(reg, out)
    if reg[E_POS] == reg[E_START]:
        out[reg[E_POS]] = 0
        reg[E_POS] += 1
    return reg[E_POS]


@_jit
def _next_byte(reg, data):
    pos = reg[D_POS]
    if pos < data.shape[0]:
        reg[D_POS] = pos + 1
        return np.int64(data[pos])
    reg[D_PAD] += 1
    if reg[D_PAD] > MAX_PAD:
        reg[D_ERR] = TRUNCATED
    return np.int64(0)


@_jit
def _dec_init(reg, data):
    reg[D_RANGE] = 0xFFFFFFFF
    reg[D_CODE] = 0
    reg[D_POS] = 0
    reg[D_PAD] = 0
    reg[D_ERR] = OK
    if data.shape[0] == 0:
        reg[D_ERR] = TRUNCATED
        return
    for _ in range(4):
        reg[D_CODE] = (reg[D_CODE] << 8) | _next_byte(reg, data)


@_jit
def _dec_bin(reg, data, states, c, adaptive):
    bound = (reg[D_RANGE] >> 16) * states[c]
    if reg[D_CODE] < bound:
        reg[D_RANGE] = bound
        b = 0
    else:
        reg[D_CODE] -= bound
        reg[D_RANGE] -= bound
        b = 1
    while reg[D_RANGE] < RANGE_TOP:
        reg[D_RANGE] <<= 8
        reg[D_CODE] = (reg[D_CODE] << 8) | _next_byte(reg, data)
    if adaptive:
        _update(states, c, b)
    return b


@_jit
def _dec_bypass(reg, data):
    reg[D_RANGE] >>= 1
    if reg[D_CODE] >= reg[D_RANGE]:
        reg[D_CODE] -= reg[D_RANGE]
        b = 1
    else:
        b = 0
    while reg[D_RANGE] < RANGE_TOP:
        reg[D_RANGE] <<= 8
        reg[D_CODE] = (reg[D_CODE] << 8) | _next_byte(reg, data)
    return b


# -- raw bin sequences ---------------------------------------------------------

@_jit
def encode_bins(bins, ids, states, adaptive, out):
    reg = np.empty(6, dtype=np.int64)
    _enc_init(reg)
    for i in range(bins.shape[0]):
        c = ids[i]
        if c < 0:
            _enc_bypass(reg, out, bins[i])
        else:
            _enc_bin(reg, out, states, c, bins[i], adaptive)
    return _enc_finish(reg, out)


@_jit
def decode_bins(data, ids, states, adaptive, result):
    reg = np.empty(5, dtype=np.int64)
    _dec_init(reg, data)
    if reg[D_ERR] != OK:
        return reg[D_ERR]
    for i in range(ids.shape[0]):
        c = ids[i]
        if c < 0:
            result[i] = _dec_bypass(reg, data)
        else:
            result[i] = _dec_bin(reg, data, states, c, adaptive)
        if reg[D_ERR] != OK:
            return reg[D_ERR]
    return OK


# -- levels ----------------------------------------------------------------------

@_jit
def _golomb_ctx(n_flags, n_golomb, pos):
    if pos >= n_golomb:
        pos = n_golomb - 1
    return 3 + n_flags + pos


@_jit
def _bit_length(x):
    k = 0
    while x:
        x >>= 1
        k += 1
    return k


@_jit
def max_level(n_flags, max_order):
    return (np.int64(1) << (max_order + 1)) - 1 + n_flags


@_jit
def _encode_level(reg, out, states, level, prev_sig, n_flags, n_golomb):
    m = level if level >= 0 else -level
    if m == 0:
        _enc_bin(reg, out, states, prev_sig, 0, True)
        return
    _enc_bin(reg, out, states, prev_sig, 1, True)
    _enc_bin(reg, out, states, 2, 1 if level < 0 else 0, True)
    for j in range(n_flags):
        if m > j + 1:
            _enc_bin(reg, out, states, 3 + j, 1, True)
        else:
            _enc_bin(reg, out, states, 3 + j, 0, True)
            return
    rem = m - n_flags
    k = _bit_length(rem) - 1
    for p in range(k):
        _enc_bin(reg, out, states, _golomb_ctx(n_flags, n_golomb, p), 1, True)
    _enc_bin(reg, out, states, _golomb_ctx(n_flags, n_golomb, k), 0, True)
    for b in range(k - 1, -1, -1):
        _enc_bypass(reg, out, (rem >> b) & 1)


@_jit
def encode_levels(levels, n_flags, max_order, states, out):
    """Code ``levels`` in scan order; returns the payload length or -OUT_OF_RANGE."""
    n_golomb = min(max_order + 1, 16)
    limit = max_level(n_flags, max_order)
    for i in range(levels.shape[0]):
        if levels[i] > limit or levels[i] < -limit:
            return -OUT_OF_RANGE
    reg = np.empty(6, dtype=np.int64)
    _enc_init(reg)
    prev = 0
    for i in range(levels.shape[0]):
        lv = levels[i]
        _encode_level(reg, out, states, lv, prev, n_flags, n_golomb)
        prev = 1 if lv != 0 else 0
    return _enc_finish(reg, out)


@_jit
def decode_levels(data, n_flags, max_order, states, result):
    n_golomb = min(max_order + 1, 16)
    reg = np.empty(5, dtype=np.int64)
    _dec_init(reg, data)
    if reg[D_ERR] != OK:
        return reg[D_ERR]
    prev = 0
    for i in range(result.shape[0]):
        if _dec_bin(reg, data, states, prev, True) == 0:
            result[i] = 0
            prev = 0
        else:
            neg = _dec_bin(reg, data, states, 2, True)
            m = 0
            for j in range(n_flags):
                if _dec_bin(reg, data, states, 3 + j, True) == 0:
                    m = j + 1
                    break
            if m == 0:
                k = 0
                while _dec_bin(reg, data, states, _golomb_ctx(n_flags, n_golomb, k), True):
                    k += 1
                    if k > max_order:
                        return CORRUPT
                    if reg[D_ERR] != OK:
                        return reg[D_ERR]
                r = np.int64(0)
                for _ in range(k):
                    r = (r << 1) | _dec_bypass(reg, data)
                m = n_flags + (np.int64(1) << k) + r
            result[i] = -m if neg else m
            prev = 1
        if reg[D_ERR] != OK:
            return reg[D_ERR]
    return OK


# -- rate estimation and RD quantization --------------------------------------------

@_jit
def _cost(states, cost_table, c, b):
    s = states[c]
    return cost_table[PROB_ONE - s] if b else cost_table[s]


@_jit
def level_bits(states, cost_table, level, prev_sig, n_flags, n_golomb):
    m = level if level >= 0 else -level
    if m == 0:
        return _cost(states, cost_table, prev_sig, 0)
    bits = _cost(states, cost_table, prev_sig, 1)
    bits += _cost(states, cost_table, 2, 1 if level < 0 else 0)
    for j in range(n_flags):
        if m > j + 1:
            bits += _cost(states, cost_table, 3 + j, 1)
        else:
            bits += _cost(states, cost_table, 3 + j, 0)
            return bits
    rem = m - n_flags
    k = _bit_length(rem) - 1
    for p in range(k):
        bits += _cost(states, cost_table, _golomb_ctx(n_flags, n_golomb, p), 1)
    bits += _cost(states, cost_table, _golomb_ctx(n_flags, n_golomb, k), 0)
    for _ in range(k):
        bits += 1.0
    return bits


@_jit
def _commit_level(states, level, prev_sig, n_flags, n_golomb):
    m = level if level >= 0 else -level
    if m == 0:
        _update(states, prev_sig, 0)
        return
    _update(states, prev_sig, 1)
    _update(states, 2, 1 if level < 0 else 0)
    for j in range(n_flags):
        if m > j + 1:
            _update(states, 3 + j, 1)
        else:
            _update(states, 3 + j, 0)
            return
    k = _bit_length(m - n_flags) - 1
    for p in range(k):
        _update(states, _golomb_ctx(n_flags, n_golomb, p), 1)
    _update(states, _golomb_ctx(n_flags, n_golomb, k), 0)


@_jit
def nearest_levels(w, delta, result):
    """Round ``w / delta`` half away from zero; returns OUT_OF_RANGE on int overflow."""
    for i in range(w.shape[0]):
        t = np.float64(w[i]) / delta
        tr = np.trunc(t)
        if not np.abs(tr) < 2.0 ** 62:
            return OUT_OF_RANGE
        fr = t - tr
        if fr >= 0.5:
            tr += 1.0
        elif fr <= -0.5:
            tr -= 1.0
        result[i] = np.int64(tr)
    return OK


@_jit
def _prefer(k, best, nn):
    # tie rule: nearest-neighbour level, then smaller |k|, then smaller k
    if best == nn:
        return False
    if k == nn:
        return True
    ak = k if k >= 0 else -k
    ab = best if best >= 0 else -best
    if ak != ab:
        return ak < ab
    return k < best


@_jit
def rd_quantize(w, importance, delta, lam, n_flags, max_order, radius,
                states, commit, cost_table, result):
    n_golomb = min(max_order + 1, 16)
    limit = max_level(n_flags, max_order)
    status = nearest_levels(w, delta, result)
    if status != OK:
        return status
    prev = 0
    for i in range(w.shape[0]):
        nn = result[i]
        if nn > limit or nn < -limit:
            return OUT_OF_RANGE
        t = np.float64(w[i]) / delta
        f = importance[i]
        best = nn
        best_cost = np.inf
        # window around nn, then level 0 if it lies outside the window
        for step in range(2 * radius + 2):
            if step <= 2 * radius:
                k = nn - radius + step
            else:
                k = 0
                if nn - radius <= 0 <= nn + radius:
                    continue
            if k > limit or k < -limit:
                continue
            d = delta * (t - k)
            cost = f * d * d
            if lam != 0.0:
                cost += lam * level_bits(states, cost_table, k, prev, n_flags, n_golomb)
            if cost < best_cost or (cost == best_cost and _prefer(k, best, nn)):
                best = k
                best_cost = cost
        result[i] = best
        if commit:
            _commit_level(states, best, prev, n_flags, n_golomb)
        prev = 1 if best != 0 else 0
    return OK
