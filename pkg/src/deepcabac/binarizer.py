"""Level binarization and per-bin context assignment.

A signed level is mapped to bins as

    sig           1 if level != 0                  context: sig[prev_significant]
    sign          1 for negative                   context: sign
    AbsGr(j)      |level| > j, j = 1..n, stop at 0  context: absgr[j-1]
    Exp-Golomb    i = |level| - n when |level| > n
      prefix      k = floor(log2 i) ones, one zero  context: golomb[min(pos, 15)]
      suffix      low k bits of i, MSB first        bypass

so with n = 1: 1 -> 100, -4 -> 11110|1, 7 -> 101110|10.
"""

from dataclasses import dataclass
from typing import Callable, Iterable, List, NamedTuple

import numpy as np

from . import cabac
from .cabac import (ArithmeticDecoder, ArithmeticEncoder, BYPASS_COST,
                    ContextModel, bin_cost)
from .errors import ContractError, CorruptStreamError, LevelRangeError, TruncatedStreamError

SIG, SIGN, ABSGR, GOLOMB, BYPASS = "sig", "sign", "absgr", "golomb", "bypass"
MAX_GOLOMB_CONTEXTS = 16


@dataclass(frozen=True)
class BinarizerConfig:
    n_flags: int = 10
    max_golomb_order: int = 31

    def __post_init__(self):
        if self.n_flags < 1 or self.n_flags > 255:
            raise ContractError(f"n_flags must be in 1..255, got {self.n_flags}")
        if not 0 <= self.max_golomb_order <= 62:
            raise ContractError(f"max_golomb_order must be in 0..62, got {self.max_golomb_order}")

    @property
    def n_golomb_contexts(self) -> int:
        return min(self.max_golomb_order + 1, MAX_GOLOMB_CONTEXTS)

    @property
    def max_abs_level(self) -> int:
        return (1 << (self.max_golomb_order + 1)) - 1 + self.n_flags

    @property
    def n_contexts(self) -> int:
        return 3 + self.n_flags + self.n_golomb_contexts


class Bin(NamedTuple):
    value: int
    role: str
    index: int = 0   # flag / prefix position for absgr and golomb bins


@dataclass
class ContextSet:
    sig: List[ContextModel]
    sign: ContextModel
    absgr: List[ContextModel]
    golomb: List[ContextModel]

    @classmethod
    def fresh(cls, cfg: BinarizerConfig, frozen: bool = False) -> "ContextSet":
        new = lambda: ContextModel(frozen=frozen)  # noqa: E731
        return cls(sig=[new(), new()], sign=new(),
                   absgr=[new() for _ in range(cfg.n_flags)],
                   golomb=[new() for _ in range(cfg.n_golomb_contexts)])

    def model(self, role: str, index: int, prev_significant: bool) -> ContextModel:
        if role == SIG:
            return self.sig[1 if prev_significant else 0]
        if role == SIGN:
            return self.sign
        if role == ABSGR:
            return self.absgr[index]
        if role == GOLOMB:
            return self.golomb[min(index, len(self.golomb) - 1)]
        raise ContractError(f"role {role!r} has no context model")

    def models(self) -> List[ContextModel]:
        return [*self.sig, self.sign, *self.absgr, *self.golomb]

    def states(self) -> np.ndarray:
        """Model states in the flat layout used by the compiled kernels."""
        return np.array([m.state for m in self.models()], dtype=np.int64)

    def load_states(self, states) -> None:
        for m, s in zip(self.models(), states):
            m.state = int(s)

    def copy(self) -> "ContextSet":
        return ContextSet(sig=[m.copy() for m in self.sig], sign=self.sign.copy(),
                          absgr=[m.copy() for m in self.absgr],
                          golomb=[m.copy() for m in self.golomb])


def _check_level(level: int, cfg: BinarizerConfig) -> None:
    if abs(level) > cfg.max_abs_level:
        raise LevelRangeError(
            f"|level| = {abs(level)} exceeds {cfg.max_abs_level} "
            f"(n_flags={cfg.n_flags}, max_golomb_order={cfg.max_golomb_order})")


def binarize(level: int, cfg: BinarizerConfig = BinarizerConfig()) -> List[Bin]:
    level = int(level)
    _check_level(level, cfg)
    if level == 0:
        return [Bin(0, SIG)]
    m = abs(level)
    bins = [Bin(1, SIG), Bin(int(level < 0), SIGN)]
    for j in range(cfg.n_flags):
        flag = int(m > j + 1)
        bins.append(Bin(flag, ABSGR, j))
        if not flag:
            return bins
    rem = m - cfg.n_flags
    k = rem.bit_length() - 1
    bins.extend(Bin(1, GOLOMB, p) for p in range(k))
    bins.append(Bin(0, GOLOMB, k))
    bins.extend(Bin((rem >> b) & 1, BYPASS, b) for b in range(k - 1, -1, -1))
    return bins


def bin_string(bins: Iterable[Bin]) -> str:
    return "".join(str(b.value) for b in bins)


def _read_level(read_bin: Callable[[str, int], int], read_bypass: Callable[[], int],
                cfg: BinarizerConfig) -> int:
    if not read_bin(SIG, 0):
        return 0
    negative = read_bin(SIGN, 0)
    for j in range(cfg.n_flags):
        if not read_bin(ABSGR, j):
            m = j + 1
            break
    else:
        k = 0
        while read_bin(GOLOMB, k):
            k += 1
            if k > cfg.max_golomb_order:
                raise CorruptStreamError(
                    f"Exp-Golomb prefix longer than max order {cfg.max_golomb_order}")
        r = 0
        for _ in range(k):
            r = (r << 1) | read_bypass()
        m = cfg.n_flags + (1 << k) + r
    return -m if negative else m


def debinarize(bins: Iterable[int], cfg: BinarizerConfig = BinarizerConfig()) -> int:
    """Inverse of :func:`binarize`; ``bins`` yields plain 0/1 values in order."""
    it = iter(bins)

    def take(*_):
        try:
            return int(next(it))
        except StopIteration:
            raise TruncatedStreamError("bin sequence ended inside a level") from None

    return _read_level(take, take, cfg)


def encode_level(enc: ArithmeticEncoder, ctxs: ContextSet, level: int,
                 cfg: BinarizerConfig, prev_significant: bool) -> None:
    for value, role, index in binarize(level, cfg):
        if role == BYPASS:
            enc.encode_bypass(value)
        else:
            enc.encode_bin(ctxs.model(role, index, prev_significant), value)


def decode_level(dec: ArithmeticDecoder, ctxs: ContextSet, cfg: BinarizerConfig,
                 prev_significant: bool) -> int:
    return _read_level(
        lambda role, index: dec.decode_bin(ctxs.model(role, index, prev_significant)),
        dec.decode_bypass, cfg)


def estimate_level_bits(ctxs: ContextSet, level: int, cfg: BinarizerConfig,
                        prev_significant: bool) -> float:
    bits = 0.0
    for value, role, index in binarize(level, cfg):
        if role == BYPASS:
            bits += BYPASS_COST
        else:
            bits += bin_cost(ctxs.model(role, index, prev_significant), value)
    return bits


# -- whole tensors -------------------------------------------------------------

def bin_counts(levels, n_flags: int):
    """Per-level (context-coded bins, bypass bins), vectorized."""
    m = np.abs(np.asarray(levels, dtype=np.int64))
    nz = m > 0
    golomb = m > n_flags
    rem = np.where(golomb, m - n_flags, 1)
    k = np.frexp(rem.astype(np.float64))[1].astype(np.int64) - 1
    ctx_bins = 1 + nz * (1 + np.minimum(m, n_flags)) + golomb * (k + 1)
    bypass = golomb * k
    return ctx_bins, bypass


def encode_levels(levels, cfg: BinarizerConfig = BinarizerConfig(),
                  ctxs: ContextSet = None) -> bytes:
    """Code a whole tensor's levels in row-major order with fresh (or given) contexts."""
    from . import _kernels

    levels = np.ascontiguousarray(levels, dtype=np.int64).ravel()
    if levels.size and np.abs(levels).max() > cfg.max_abs_level:
        raise LevelRangeError(f"levels exceed representable magnitude {cfg.max_abs_level}")
    ctxs = ContextSet.fresh(cfg) if ctxs is None else ctxs
    states = ctxs.states()
    ctx_bins, bypass = bin_counts(levels, cfg.n_flags)
    out = np.empty(cabac._payload_bound(ctx_bins.sum(), bypass.sum()), dtype=np.uint8)
    n = _kernels.encode_levels(levels, cfg.n_flags, cfg.max_golomb_order, states, out)
    if n < 0:
        _kernels.raise_for_status(-n)
    ctxs.load_states(states)
    return out[:n].tobytes()


def decode_levels(payload: bytes, count: int, cfg: BinarizerConfig = BinarizerConfig(),
                  what: str = "payload") -> np.ndarray:
    from . import _kernels

    data = np.frombuffer(payload, dtype=np.uint8)
    result = np.empty(int(count), dtype=np.int64)
    states = ContextSet.fresh(cfg).states()
    status = _kernels.decode_levels(data, cfg.n_flags, cfg.max_golomb_order, states, result)
    _kernels.raise_for_status(status, what)
    return result
