"""Fixed-width 256-bit binary descriptors.

Bit order convention (fixed for the whole package): bit position ``p`` lives in
64-bit word ``p // 64`` at bit ``p % 64``, least-significant-bit first.  A
descriptor is therefore equivalent to a single little-endian 256-bit unsigned
integer, which is how it is stored.  Hex serialization emits word 0 first as
16 lowercase hex characters per word (64 characters total).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

DESCRIPTOR_BITS = 256
WORD_BITS = 64
WORD_COUNT = DESCRIPTOR_BITS // WORD_BITS
_WORD_MASK = (1 << WORD_BITS) - 1
_FULL_MASK = (1 << DESCRIPTOR_BITS) - 1


class PerturbationModel(Enum):
    """How perturbed bit positions are drawn."""

    DISTINCT_POSITIONS = "distinct_positions"
    BALLS_INTO_BINS = "balls_into_bins"


@dataclass(frozen=True, slots=True)
class PerturbationSpec:
    """Uniform bit-perturbation model: flip ``epsilon`` positions.

    DISTINCT_POSITIONS flips exactly ``epsilon`` distinct positions, so the
    Hamming distance to the input is exactly ``epsilon``.  BALLS_INTO_BINS
    draws ``epsilon`` positions with replacement and flips each draw; repeated
    draws cancel pairwise, so the distance is at most ``epsilon``.
    """

    epsilon: int
    model: PerturbationModel = PerturbationModel.DISTINCT_POSITIONS

    def __post_init__(self) -> None:
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be non-negative, got {self.epsilon}")
        if self.model is PerturbationModel.DISTINCT_POSITIONS and self.epsilon > DESCRIPTOR_BITS:
            raise ValueError(
                f"epsilon must be <= {DESCRIPTOR_BITS} for distinct positions, got {self.epsilon}"
            )


@dataclass(frozen=True, slots=True)
class BinaryDescriptor:
    """Immutable 256-bit string stored as one little-endian integer."""

    value: int

    def __post_init__(self) -> None:
        if not 0 <= self.value <= _FULL_MASK:
            raise ValueError("descriptor value out of 256-bit range")

    @property
    def words(self) -> tuple[int, int, int, int]:
        """The four 64-bit machine words, word 0 holding bits 0..63."""
        v = self.value
        return tuple((v >> (WORD_BITS * i)) & _WORD_MASK for i in range(WORD_COUNT))

    def bit(self, position: int) -> int:
        if not 0 <= position < DESCRIPTOR_BITS:
            raise IndexError(f"bit position {position} out of range")
        return (self.value >> position) & 1

    def flip(self, positions) -> "BinaryDescriptor":
        """Return a copy with the given bit positions flipped."""
        mask = 0
        for p in positions:
            if not 0 <= p < DESCRIPTOR_BITS:
                raise IndexError(f"bit position {p} out of range")
            mask ^= 1 << p
        return BinaryDescriptor(self.value ^ mask)

    def complement(self) -> "BinaryDescriptor":
        return BinaryDescriptor(self.value ^ _FULL_MASK)

    def to_bytes(self) -> bytes:
        """32 bytes, bit p in byte p // 8 at bit p % 8."""
        return self.value.to_bytes(DESCRIPTOR_BITS // 8, "little")

    def to_hex(self) -> str:
        """64 lowercase hex characters, word 0 first."""
        return "".join(f"{w:016x}" for w in self.words)

    @classmethod
    def from_bytes(cls, raw: bytes) -> "BinaryDescriptor":
        if len(raw) != DESCRIPTOR_BITS // 8:
            raise ValueError(f"expected {DESCRIPTOR_BITS // 8} bytes, got {len(raw)}")
        return cls(int.from_bytes(raw, "little"))

    @classmethod
    def from_hex(cls, text: str) -> "BinaryDescriptor":
        if len(text) != 64:
            raise ValueError(f"expected 64 hex characters, got {len(text)}")
        words = [int(text[16 * i : 16 * (i + 1)], 16) for i in range(WORD_COUNT)]
        value = 0
        for i, w in enumerate(words):
            value |= w << (WORD_BITS * i)
        return cls(value)


@dataclass(frozen=True, slots=True)
class SubstringView:
    """Value of one disjoint contiguous substring of a descriptor."""

    table_index: int
    value: int


def substring_width(table_count: int) -> int:
    """Substring bit width for ``table_count`` tables (floor division)."""
    if not 1 <= table_count <= DESCRIPTOR_BITS:
        raise ValueError(f"table count must be in 1..{DESCRIPTOR_BITS}, got {table_count}")
    return DESCRIPTOR_BITS // table_count


def substring_value(descriptor: BinaryDescriptor, table_index: int, width: int) -> int:
    """Extract substring ``table_index`` covering bits [i*width, (i+1)*width)."""
    return (descriptor.value >> (table_index * width)) & ((1 << width) - 1)


def split_substrings(descriptor: BinaryDescriptor, table_count: int) -> list[SubstringView]:
    """Split into ``table_count`` disjoint contiguous substrings.

    When ``table_count`` does not divide 256 the trailing
    ``256 - table_count * floor(256 / table_count)`` bits are not covered by
    any substring.
    """
    width = substring_width(table_count)
    return [
        SubstringView(i, substring_value(descriptor, i, width)) for i in range(table_count)
    ]


def hamming_distance(a: BinaryDescriptor, b: BinaryDescriptor) -> int:
    """Popcount of XOR; symmetric, zero iff equal, at most 256."""
    return (a.value ^ b.value).bit_count()


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def random_descriptor(rng) -> BinaryDescriptor:
    """Uniformly random descriptor; ``rng`` is a seed or a Generator."""
    gen = _as_generator(rng)
    raw = gen.bytes(DESCRIPTOR_BITS // 8)
    return BinaryDescriptor.from_bytes(raw)


def perturb(descriptor: BinaryDescriptor, spec: PerturbationSpec, rng) -> BinaryDescriptor:
    """Flip bit positions drawn per ``spec``; ``rng`` is a seed or a Generator."""
    if spec.epsilon == 0:
        return descriptor
    gen = _as_generator(rng)
    if spec.model is PerturbationModel.DISTINCT_POSITIONS:
        positions = gen.choice(DESCRIPTOR_BITS, size=spec.epsilon, replace=False)
    else:
        positions = gen.integers(0, DESCRIPTOR_BITS, size=spec.epsilon)
    return descriptor.flip(int(p) for p in positions)


# ---------------------------------------------------------------------------
# Packed-array helpers for batch Hamming computations (hot paths).

_POPCOUNT8 = np.array([bin(i).count("1") for i in range(256)], dtype=np.uint8)


def pack_descriptors(descriptors) -> np.ndarray:
    """Pack descriptors into an (n, 32) uint8 matrix (byte p//8, bit p%8)."""
    items = list(descriptors)
    raw = b"".join(d.to_bytes() for d in items)
    return np.frombuffer(raw, dtype=np.uint8).reshape(len(items), DESCRIPTOR_BITS // 8)


def hamming_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise Hamming distances between packed (n, 32) and (m, 32) arrays."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ValueError("packed arrays must be 2-D with matching byte width")
    xor = a[:, None, :] ^ b[None, :, :]
    if hasattr(np, "bitwise_count"):
        return np.bitwise_count(xor).sum(axis=2, dtype=np.int32)
    return _POPCOUNT8[xor].sum(axis=2, dtype=np.int32)
