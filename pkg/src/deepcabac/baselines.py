"""Memoryless reference coders: empirical distribution, entropy, scalar Huffman."""

import heapq
import itertools
import math
import struct
from collections import Counter
from dataclasses import dataclass
from typing import Dict, Hashable, Iterable, List, Sequence

import numpy as np

from .errors import ContractError, CorruptStreamError


@dataclass
class SymbolHistogram:
    counts: Dict[Hashable, int]

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def probabilities(self) -> Dict[Hashable, float]:
        total = self.total
        return {s: c / total for s, c in self.counts.items()}


def epmd(levels: Sequence) -> SymbolHistogram:
    """Empirical probability mass distribution of a symbol sequence."""
    if isinstance(levels, np.ndarray):
        if levels.size == 0:
            raise ContractError("empty sequence has no empirical distribution")
        values, counts = np.unique(levels.ravel(), return_counts=True)
        return SymbolHistogram({v.item(): int(c) for v, c in zip(values, counts)})
    counts = Counter(levels)
    if not counts:
        raise ContractError("empty sequence has no empirical distribution")
    return SymbolHistogram(dict(counts))


def entropy(h: SymbolHistogram) -> float:
    """Shannon entropy in bits per symbol."""
    total = h.total
    bits = 0.0
    for c in h.counts.values():
        if c:
            p = c / total
            bits -= p * math.log2(p)
    return bits


@dataclass
class HuffmanCode:
    codewords: Dict[Hashable, str]

    @property
    def lengths(self) -> Dict[Hashable, int]:
        return {s: len(c) for s, c in self.codewords.items()}

    def kraft_sum(self) -> float:
        return sum(2.0 ** -len(c) for c in self.codewords.values())

    def average_length(self, h: SymbolHistogram) -> float:
        return self.total_bits(h) / h.total

    def total_bits(self, h: SymbolHistogram) -> int:
        return sum(c * len(self.codewords[s]) for s, c in h.counts.items())

    def table_bits(self) -> int:
        return 8 * len(serialize_table(self))


def _code_lengths(counts: Dict[Hashable, int]) -> Dict[Hashable, int]:
    symbols = [s for s, c in counts.items() if c > 0]
    if not symbols:
        raise ContractError("histogram has no symbol with positive count")
    if len(symbols) == 1:
        return {symbols[0]: 1}
    tie = itertools.count()
    heap = [(counts[s], next(tie), [s]) for s in symbols]
    heapq.heapify(heap)
    depth = dict.fromkeys(symbols, 0)
    while len(heap) > 1:
        c1, _, left = heapq.heappop(heap)
        c2, _, right = heapq.heappop(heap)
        for s in itertools.chain(left, right):
            depth[s] += 1
        heapq.heappush(heap, (c1 + c2, next(tie), left + right))
    return depth


def _sort_key(symbol):
    return (0, symbol, "") if isinstance(symbol, (int, np.integer)) else (1, 0, repr(symbol))


def canonical_code(lengths: Dict[Hashable, int]) -> HuffmanCode:
    """Assign canonical codewords: shorter first, then by symbol."""
    order = sorted(lengths, key=lambda s: (lengths[s], _sort_key(s)))
    codewords = {}
    code = 0
    prev_len = lengths[order[0]]
    for i, s in enumerate(order):
        n = lengths[s]
        if i:
            code = (code + 1) << (n - prev_len)
        codewords[s] = format(code, f"0{n}b")
        prev_len = n
    return HuffmanCode(codewords)


def huffman_build(h: SymbolHistogram) -> HuffmanCode:
    return canonical_code(_code_lengths(h.counts))


def huffman_encode(code: HuffmanCode, msg: Iterable) -> str:
    try:
        return "".join([code.codewords[s] for s in msg])
    except KeyError as exc:
        raise ContractError(f"symbol {exc.args[0]!r} has no codeword") from None


def huffman_decode(code: HuffmanCode, bits: str) -> List:
    # binary trie walk; nodes are dicts keyed by '0'/'1', leaves hold ('sym', s)
    root: dict = {}
    for s, cw in code.codewords.items():
        node = root
        for b in cw[:-1]:
            node = node.setdefault(b, {})
        node[cw[-1]] = ("sym", s)
    out = []
    node = root
    for b in bits:
        nxt = node.get(b)
        if nxt is None:
            raise CorruptStreamError(f"bit pattern matches no codeword at symbol {len(out)}")
        if isinstance(nxt, tuple):
            out.append(nxt[1])
            node = root
        else:
            node = nxt
    if node is not root:
        raise CorruptStreamError("bit string ends inside a codeword")
    return out


def serialize_table(code: HuffmanCode) -> bytes:
    """Symbol count (u32) then (symbol i32, length u8) pairs, little-endian.

    Codewords are canonical, so the lengths alone rebuild the code.
    """
    items = sorted(code.lengths.items(), key=lambda kv: _sort_key(kv[0]))
    parts = [struct.pack("<I", len(items))]
    for s, n in items:
        parts.append(struct.pack("<iB", int(s), n))
    return b"".join(parts)


def deserialize_table(data: bytes) -> HuffmanCode:
    (count,) = struct.unpack_from("<I", data, 0)
    if len(data) != 4 + 5 * count:
        raise CorruptStreamError("Huffman table size does not match its symbol count")
    lengths = {}
    for i in range(count):
        s, n = struct.unpack_from("<iB", data, 4 + 5 * i)
        lengths[s] = n
    return canonical_code(lengths)
