"""32-bit range coder with carry propagation.

Frequencies are integers summing to ``TOTAL = 2**16``. The encoder keeps
``low`` in 32 bits and pushes a carry back into already-emitted bytes when
``low`` overflows. The final state is flushed as the shortest value inside
the last interval, and trailing zero bits are not counted: the decoder reads
zeros past the end of the payload.
"""
from __future__ import annotations

from bisect import bisect_right

from ..errors import DecodeError

PRECISION = 16
TOTAL = 1 << PRECISION
_TOP = 1 << 32
_MASK = _TOP - 1
_BOTTOM = 1 << 24


class RangeEncoder:
    def __init__(self):
        self.low = 0
        self.range = _MASK
        self.out = bytearray()

    def _carry(self):
        out = self.out
        i = len(out) - 1
        while out[i] == 0xFF:
            out[i] = 0
            i -= 1
        out[i] += 1

    def encode(self, cum: int, freq: int):
        """Narrow the interval to ``[cum, cum + freq)`` out of ``TOTAL``."""
        r = self.range >> PRECISION
        low = self.low + r * cum
        if cum + freq == TOTAL:
            rng = self.range - r * cum
        else:
            rng = r * freq
        if low > _MASK:
            low &= _MASK
            self._carry()
        while rng < _BOTTOM:
            self.out.append(low >> 24)
            low = (low << 8) & _MASK
            rng <<= 8
        self.low = low
        self.range = rng

    def encode_table(self, symbols, cum_rows):
        """Encode ``symbols[i]`` against cumulative table ``cum_rows[i]``.

        Inlined loop of :meth:`encode`; the per-symbol method call dominates
        runtime otherwise.
        """
        out = self.out
        low = self.low
        rng = self.range
        for s, cum in zip(symbols, cum_rows):
            c0 = cum[s]
            c1 = cum[s + 1]
            r = rng >> PRECISION
            low += r * c0
            if c1 == TOTAL:
                rng -= r * c0
            else:
                rng = r * (c1 - c0)
            if low > _MASK:
                low &= _MASK
                i = len(out) - 1
                while out[i] == 0xFF:
                    out[i] = 0
                    i -= 1
                out[i] += 1
            while rng < _BOTTOM:
                out.append(low >> 24)
                low = (low << 8) & _MASK
                rng <<= 8
        self.low = low
        self.range = rng

    def finish(self) -> tuple[bytes, int]:
        """Flush and return ``(payload, bit_length)``."""
        low, rng = self.low, self.range
        hi = low + rng  # exclusive
        # pick the value in [low, hi) with the most trailing zero bits
        value = hi - 1
        for k in range(32, -1, -1):
            step = 1 << k
            v = (low + step - 1) & ~(step - 1)
            if v < hi:
                value = v
                break
        if value > _MASK:
            value &= _MASK
            self._carry()
        self.out.extend(value.to_bytes(4, "big"))
        payload = bytes(self.out).rstrip(b"\x00")
        if not payload:
            return b"", 0
        last = payload[-1]
        trailing = (last & -last).bit_length() - 1
        return payload, 8 * len(payload) - trailing


class RangeDecoder:
    def __init__(self, payload: bytes):
        self.data = payload
        self.pos = 4
        head = payload[:4].ljust(4, b"\x00")
        self.code = int.from_bytes(head, "big")
        self.range = _MASK

    def _next_byte(self) -> int:
        pos = self.pos
        self.pos = pos + 1
        if pos < len(self.data):
            return self.data[pos]
        return 0

    def decode(self, cum) -> int:
        """Decode one symbol given its cumulative table (length nsym + 1)."""
        r = self.range >> PRECISION
        target = self.code // r
        if target >= TOTAL:
            target = TOTAL - 1
        s = bisect_right(cum, target) - 1
        c0 = cum[s]
        c1 = cum[s + 1]
        self.code -= r * c0
        if c1 == TOTAL:
            self.range -= r * c0
        else:
            self.range = r * (c1 - c0)
        if self.code >= self.range:
            raise DecodeError("payload is not a valid range-coded stream")
        while self.range < _BOTTOM:
            self.code = ((self.code << 8) | self._next_byte()) & _MASK
            self.range <<= 8
        return s

    def decode_table(self, cum_rows, escapes=None) -> tuple[list[int], dict[int, int]]:
        """Decode one symbol per row.

        When ``escapes[i]`` is decoded for row ``i``, two raw 16-bit symbols
        follow; they are returned as a 32-bit value in the ``raw`` dict keyed
        by row index.
        """
        data = self.data
        n = len(data)
        pos = self.pos
        code = self.code
        rng = self.range
        out = []
        raw = {}
        append = out.append
        for idx, cum in enumerate(cum_rows):
            r = rng >> PRECISION
            target = code // r
            if target >= TOTAL:
                target = TOTAL - 1
            s = bisect_right(cum, target) - 1
            c0 = cum[s]
            c1 = cum[s + 1]
            code -= r * c0
            if c1 == TOTAL:
                rng -= r * c0
            else:
                rng = r * (c1 - c0)
            if code >= rng:
                raise DecodeError("payload is not a valid range-coded stream")
            while rng < _BOTTOM:
                b = data[pos] if pos < n else 0
                pos += 1
                code = ((code << 8) | b) & _MASK
                rng <<= 8
            append(s)
            if escapes is not None and s == escapes[idx]:
                value = 0
                for _ in range(2):
                    r = rng >> PRECISION
                    v = code // r
                    if v >= TOTAL:
                        v = TOTAL - 1
                    code -= r * v
                    rng = rng - r * v if v == TOTAL - 1 else r
                    if code >= rng:
                        raise DecodeError("payload is not a valid range-coded stream")
                    while rng < _BOTTOM:
                        b = data[pos] if pos < n else 0
                        pos += 1
                        code = ((code << 8) | b) & _MASK
                        rng <<= 8
                    value = (value << PRECISION) | v
                raw[idx] = value
        self.pos = pos
        self.code = code
        self.range = rng
        return out, raw
