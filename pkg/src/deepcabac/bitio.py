"""MSB-first bit packing over in-memory byte buffers."""

from .errors import ContractError, TruncatedStreamError


class BitSink:
    """Growable bit writer. Bits are packed most-significant first."""

    __slots__ = ("buffer", "bit_position", "_acc", "_nacc")

    def __init__(self):
        self.buffer = bytearray()
        self.bit_position = 0
        self._acc = 0   # pending bits not yet forming a full byte
        self._nacc = 0

    def write_bits(self, value: int, count: int) -> None:
        if not 1 <= count <= 64:
            raise ContractError(f"bit count must be in 1..64, got {count}")
        if value < 0 or value >> count:
            raise ContractError(f"value {value} does not fit in {count} bits")
        acc = (self._acc << count) | value
        n = self._nacc + count
        while n >= 8:
            n -= 8
            self.buffer.append((acc >> n) & 0xFF)
        self._acc = acc & ((1 << n) - 1)
        self._nacc = n
        self.bit_position += count

    def write_byte(self, value: int) -> None:
        if self._nacc:
            self.write_bits(value, 8)
            return
        self.buffer.append(value)
        self.bit_position += 8

    def write_bytes(self, data) -> None:
        if self._nacc:
            for b in data:
                self.write_bits(b, 8)
            return
        self.buffer += data
        self.bit_position += 8 * len(data)

    def align_to_byte(self) -> None:
        if self._nacc:
            self.write_bits(0, 8 - self._nacc)

    def getvalue(self) -> bytes:
        """Bytes written so far; a partial trailing byte is zero padded."""
        if self._nacc:
            return bytes(self.buffer) + bytes([(self._acc << (8 - self._nacc)) & 0xFF])
        return bytes(self.buffer)

    def __len__(self):
        return (self.bit_position + 7) // 8


class BitSource:
    """Bit reader over an immutable byte view. Reading past the end raises."""

    __slots__ = ("buffer", "cursor", "_nbits")

    def __init__(self, data, cursor: int = 0):
        self.buffer = memoryview(bytes(data))
        self._nbits = 8 * len(self.buffer)
        if not 0 <= cursor <= self._nbits:
            raise ContractError("cursor outside buffer")
        self.cursor = cursor

    @property
    def bits_remaining(self) -> int:
        return self._nbits - self.cursor

    def read_bits(self, count: int) -> int:
        if not 1 <= count <= 64:
            raise ContractError(f"bit count must be in 1..64, got {count}")
        end = self.cursor + count
        if end > self._nbits:
            raise TruncatedStreamError(
                f"read of {count} bits at bit {self.cursor} exceeds {self._nbits}-bit buffer")
        first, last = self.cursor >> 3, (end + 7) >> 3
        chunk = int.from_bytes(self.buffer[first:last], "big")
        chunk >>= 8 * (last - first) - (end - 8 * first)
        self.cursor = end
        return chunk & ((1 << count) - 1)

    def read_byte(self) -> int:
        if self.cursor & 7:
            return self.read_bits(8)
        if self.cursor + 8 > self._nbits:
            raise TruncatedStreamError("read past end of buffer")
        b = self.buffer[self.cursor >> 3]
        self.cursor += 8
        return b

    def read_bytes(self, n: int) -> bytes:
        if self.cursor & 7:
            return bytes(self.read_bits(8) for _ in range(n))
        start = self.cursor >> 3
        if start + n > len(self.buffer):
            raise TruncatedStreamError(
                f"need {n} bytes at offset {start}, only {len(self.buffer) - start} left")
        self.cursor += 8 * n
        return bytes(self.buffer[start:start + n])

    def align_to_byte(self) -> None:
        self.cursor = min(self._nbits, (self.cursor + 7) & ~7)
