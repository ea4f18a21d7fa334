"""Packed bit sequences.

Bits are stored eight to a byte, first bit in the most significant position
(the ``np.packbits`` default). Analysis code unpacks to one ``uint8`` per bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LABELS = ("S", "Y", "T", "C", "")


@dataclass(frozen=True)
class BitStream:
    """An ordered bit sequence with a stream label and production-time metadata.

    Attributes:
        label: One of ``"S"`` (spatial), ``"Y"`` (pair-XOR of S), ``"T"``
            (temporal), ``"C"`` (combined) or ``""`` for anything else.
        packed: ``uint8`` array holding the bits, MSB first.
        n_bits: Number of valid bits in ``packed``.
        production_time: Simulated seconds it took to produce the bits.
    """

    label: str
    packed: np.ndarray = field(repr=False)
    n_bits: int
    production_time: float = 0.0

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValueError(f"unknown stream label {self.label!r}")
        if self.packed.dtype != np.uint8:
            raise TypeError("packed must be uint8")
        if not 0 <= self.n_bits <= 8 * self.packed.size or (self.packed.size * 8 - self.n_bits) >= 8:
            raise ValueError("n_bits inconsistent with packed buffer length")

    @classmethod
    def from_bits(cls, bits, label: str = "", production_time: float = 0.0) -> BitStream:
        arr = np.asarray(bits, dtype=np.uint8)
        if arr.ndim != 1:
            raise ValueError("bits must be one-dimensional")
        if arr.size and arr.max() > 1:
            raise ValueError("bits must be 0 or 1")
        return cls(label, np.packbits(arr), int(arr.size), production_time)

    @property
    def bits(self) -> np.ndarray:
        return np.unpackbits(self.packed, count=self.n_bits)

    @property
    def rate(self) -> float:
        """Bits per simulated second (0 when no time has elapsed)."""
        return self.n_bits / self.production_time if self.production_time > 0 else 0.0

    def __len__(self) -> int:
        return self.n_bits

    def __eq__(self, other):
        if not isinstance(other, BitStream):
            return NotImplemented
        return self.n_bits == other.n_bits and np.array_equal(self.bits, other.bits)

    def relabel(self, label: str) -> BitStream:
        return BitStream(label, self.packed, self.n_bits, self.production_time)


def as_bits(x) -> np.ndarray:
    """Return ``x`` as a flat ``uint8`` 0/1 array (BitStreams are unpacked)."""
    if isinstance(x, BitStream):
        return x.bits
    arr = np.asarray(x)
    if arr.dtype == np.bool_:
        return arr.astype(np.uint8)
    return arr.astype(np.uint8, copy=False)


class BitAccumulator:
    """Appends bit chunks and keeps them packed, so long runs stay small in memory."""

    def __init__(self, label: str = ""):
        self.label = label
        self._chunks: list[np.ndarray] = []
        self._tail = np.zeros(0, dtype=np.uint8)
        self.n_bits = 0

    def extend(self, bits: np.ndarray) -> None:
        bits = np.asarray(bits, dtype=np.uint8)
        if bits.size == 0:
            return
        self.n_bits += bits.size
        if self._tail.size:
            bits = np.concatenate([self._tail, bits])
        whole = bits.size - bits.size % 8
        if whole:
            self._chunks.append(np.packbits(bits[:whole]))
        self._tail = bits[whole:].copy()

    def __len__(self) -> int:
        return self.n_bits

    def to_stream(self, production_time: float = 0.0) -> BitStream:
        parts = self._chunks + ([np.packbits(self._tail)] if self._tail.size else [])
        packed = np.concatenate(parts) if parts else np.zeros(0, dtype=np.uint8)
        return BitStream(self.label, packed, self.n_bits, production_time)
