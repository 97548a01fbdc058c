"""Adaptive binary arithmetic coder.

The engine is a byte-renormalizing range coder with 32-bit ``low``/``range``
registers and carry propagation through a cached byte plus a run of pending
0xFF bytes. Every context-coded bin splits the current interval as

    bound = (range >> 16) * p0        # p0: 16-bit fixed-point P(bin == 0)
    bin 0 -> [low, low + bound)
    bin 1 -> [low + bound, low + range)

and bypass bins halve the interval (``range >>= 1``). Encoder and decoder use
exactly this formula, which makes the probability rounding identical on both
sides. ``range`` is kept in ``[2**24, 2**32)`` after every renormalization.

Termination writes the shortest value inside the final interval (at most one
bit above the interval's information content) and stops at the byte holding
its last one-bit. The decoder treats missing trailing bytes as zeros, up to
the 4-byte register width; reading further raises ``TruncatedStreamError``.
"""

import numpy as np

from .bitio import BitSink, BitSource
from .errors import ContractError, TruncatedStreamError

PROB_BITS = 16
PROB_ONE = 1 << PROB_BITS
PROB_HALF = PROB_ONE >> 1
PROB_MIN = PROB_ONE >> 10          # p_min = 2**-10
PROB_MAX = PROB_ONE - PROB_MIN
ADAPT_SHIFT = 5                    # smoothing rate 2**-5

RANGE_TOP = 1 << 24
RANGE_INIT = 0xFFFFFFFF
MAX_PAD_BYTES = 4

BYPASS_COST = 1.0
COST_RESOLUTION = 2.0 ** -16


def _build_cost_table():
    # cost of a bin whose probability is p / 2**16, rounded to 2**-16 bit so
    # sums of costs are exact and platform independent
    p = np.arange(PROB_ONE + 1, dtype=np.float64)
    with np.errstate(divide="ignore"):
        bits = -np.log2(p / PROB_ONE)
    table = np.round(bits / COST_RESOLUTION) * COST_RESOLUTION
    table[0] = np.inf
    return table


COST_TABLE = _build_cost_table()


class ContextModel:
    """Adaptive estimate of P(bin == 0), stored as a 16-bit fixed-point integer.

    A ``frozen`` model keeps its probability no matter what is coded with it.
    """

    __slots__ = ("state", "frozen")

    def __init__(self, state: int = PROB_HALF, frozen: bool = False):
        if not PROB_MIN <= state <= PROB_MAX:
            raise ContractError(f"context state {state} outside [{PROB_MIN}, {PROB_MAX}]")
        self.state = state
        self.frozen = frozen

    @classmethod
    def from_probability(cls, p0: float, frozen: bool = False) -> "ContextModel":
        state = min(max(int(round(p0 * PROB_ONE)), PROB_MIN), PROB_MAX)
        return cls(state, frozen)

    @property
    def p0(self) -> float:
        return self.state / PROB_ONE

    def update(self, bin: int) -> None:
        if self.frozen:
            return
        s = self.state
        if bin:
            s -= s >> ADAPT_SHIFT
            if s < PROB_MIN:
                s = PROB_MIN
        else:
            s += (PROB_ONE - s) >> ADAPT_SHIFT
            if s > PROB_MAX:
                s = PROB_MAX
        self.state = s

    def copy(self) -> "ContextModel":
        return ContextModel(self.state, self.frozen)

    def __eq__(self, other):
        if not isinstance(other, ContextModel):
            return NotImplemented
        return self.state == other.state and self.frozen == other.frozen

    def __repr__(self):
        return f"ContextModel(p0={self.p0:.6f}{', frozen' if self.frozen else ''})"


def context_new() -> ContextModel:
    return ContextModel()


def context_update(ctx: ContextModel, bin: int) -> None:
    ctx.update(bin)


def bin_cost(ctx: ContextModel, bin: int) -> float:
    """Estimated code length of ``bin`` under ``ctx`` in bits. Does not touch ``ctx``."""
    return float(COST_TABLE[PROB_ONE - ctx.state if bin else ctx.state])


class ArithmeticEncoder:
    def __init__(self, sink: BitSink = None):
        self.sink = BitSink() if sink is None else sink
        self.low = 0
        self.range = RANGE_INIT
        self._cache = -1        # top byte awaiting a possible carry; -1 = none yet
        self._pending_ff = 0
        self._start = self.sink.bit_position
        self.finished = False

    def _shift_low(self):
        low = self.low
        if low < 0xFF000000 or low > 0xFFFFFFFF:
            carry = low >> 32
            if self._cache >= 0:
                self.sink.write_byte((self._cache + carry) & 0xFF)
            for _ in range(self._pending_ff):
                self.sink.write_byte((0xFF + carry) & 0xFF)
            self._pending_ff = 0
            self._cache = (low >> 24) & 0xFF
        else:
            self._pending_ff += 1
        self.low = (low & 0x00FFFFFF) << 8

    def _check_open(self):
        if self.finished:
            raise ContractError("encoder already finished")

    def encode_bin(self, ctx: ContextModel, bin: int) -> None:
        self._check_open()
        bound = (self.range >> 16) * ctx.state
        if bin:
            self.low += bound
            self.range -= bound
        else:
            self.range = bound
        while self.range < RANGE_TOP:
            self.range <<= 8
            self._shift_low()
        ctx.update(bin)

    def encode_bypass(self, bin: int) -> None:
        self._check_open()
        self.range >>= 1
        if bin:
            self.low += self.range
        while self.range < RANGE_TOP:
            self.range <<= 8
            self._shift_low()

    def finish(self) -> bytes:
        """Terminate the stream and return the whole sink content, byte aligned."""
        self._check_open()
        low, high = self.low, self.low + self.range
        for nbits in range(33):
            gran = 1 << (32 - nbits)
            value = (low + gran - 1) & ~(gran - 1)
            if value < high:
                break
        self.low = value
        for _ in range((nbits + 7) // 8 + 1):
            self._shift_low()
        if self.sink.bit_position == self._start:
            self.sink.write_byte(0)
        self.sink.align_to_byte()
        self.finished = True
        return self.sink.getvalue()


class ArithmeticDecoder:
    def __init__(self, source):
        if not isinstance(source, BitSource):
            source = BitSource(source)
        if source.bits_remaining < 8:
            raise TruncatedStreamError("arithmetic-coded payload is empty")
        self.source = source
        self.range = RANGE_INIT
        self.code = 0
        self._padded = 0
        for _ in range(4):
            self.code = (self.code << 8) | self._next_byte()

    def _next_byte(self) -> int:
        if self.source.bits_remaining >= 8:
            return self.source.read_byte()
        self._padded += 1
        if self._padded > MAX_PAD_BYTES:
            raise TruncatedStreamError("arithmetic decoder ran past the end of the payload")
        return 0

    def decode_bin(self, ctx: ContextModel) -> int:
        bound = (self.range >> 16) * ctx.state
        if self.code < bound:
            self.range = bound
            bin = 0
        else:
            self.code -= bound
            self.range -= bound
            bin = 1
        while self.range < RANGE_TOP:
            self.range <<= 8
            self.code = (self.code << 8) | self._next_byte()
        ctx.update(bin)
        return bin

    def decode_bypass(self) -> int:
        self.range >>= 1
        if self.code >= self.range:
            self.code -= self.range
            bin = 1
        else:
            bin = 0
        while self.range < RANGE_TOP:
            self.range <<= 8
            self.code = (self.code << 8) | self._next_byte()
        return bin


# -- bulk paths (compiled) ---------------------------------------------------

def _payload_bound(n_context, n_bypass):
    # worst case: 10 bits per context bin at the clamp, plus rounding slack
    return (11 * int(n_context) + 2 * int(n_bypass)) // 8 + 16


def encode_bins(bins, context_ids, probabilities, adaptive: bool = True) -> bytes:
    """Encode a bin sequence in one compiled pass.

    ``context_ids[i]`` selects the model for bin ``i``; ``-1`` marks a bypass
    bin. ``probabilities`` gives the initial P(0) of each model.
    """
    from . import _kernels

    bins = np.ascontiguousarray(bins, dtype=np.uint8)
    ids = np.ascontiguousarray(context_ids, dtype=np.int64)
    if bins.shape != ids.shape:
        raise ContractError("bins and context_ids differ in length")
    states = _states_from_probabilities(probabilities)
    if ids.size and ids.max() >= states.size:
        raise ContractError("context id out of range")
    n_bypass = int(np.count_nonzero(ids < 0))
    out = np.empty(_payload_bound(ids.size - n_bypass, n_bypass), dtype=np.uint8)
    n = _kernels.encode_bins(bins, ids, states, adaptive, out)
    return out[:n].tobytes()


def decode_bins(payload: bytes, context_ids, probabilities, adaptive: bool = True) -> np.ndarray:
    from . import _kernels

    ids = np.ascontiguousarray(context_ids, dtype=np.int64)
    states = _states_from_probabilities(probabilities)
    data = np.frombuffer(payload, dtype=np.uint8)
    result = np.empty(ids.size, dtype=np.uint8)
    status = _kernels.decode_bins(data, ids, states, adaptive, result)
    _kernels.raise_for_status(status)
    return result


def _states_from_probabilities(probabilities):
    p = np.atleast_1d(np.asarray(probabilities, dtype=np.float64))
    return np.clip(np.round(p * PROB_ONE), PROB_MIN, PROB_MAX).astype(np.int64)
