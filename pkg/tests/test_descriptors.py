from __future__ import annotations

import numpy as np
import pytest

from mih_localmap.descriptors import (
    DESCRIPTOR_BITS,
    BinaryDescriptor,
    PerturbationModel,
    PerturbationSpec,
    hamming_distance,
    hamming_matrix,
    pack_descriptors,
    perturb,
    random_descriptor,
    split_substrings,
    substring_value,
)

ALL_ONES = BinaryDescriptor((1 << DESCRIPTOR_BITS) - 1)


def test_hamming_identity():
    d = random_descriptor(3)
    assert hamming_distance(d, d) == 0


def test_hamming_complement():
    assert hamming_distance(BinaryDescriptor(0), ALL_ONES) == 256


def test_hamming_three_flips():
    d = random_descriptor(4)
    flipped = d.flip([3, 77, 200])
    assert hamming_distance(d, flipped) == 3


def test_hamming_symmetric_and_triangle():
    rng = np.random.default_rng(5)
    for _ in range(200):
        a, b, c = (random_descriptor(rng) for _ in range(3))
        assert hamming_distance(a, b) == hamming_distance(b, a)
        assert hamming_distance(a, c) <= hamming_distance(a, b) + hamming_distance(b, c)


def test_split_32_gives_8bit_views():
    d = random_descriptor(6)
    views = split_substrings(d, 32)
    assert len(views) == 32
    assert all(0 <= v.value < 256 for v in views)


def test_split_zero_descriptor():
    views = split_substrings(BinaryDescriptor(0), 32)
    assert all(v.value == 0 for v in views)


def test_split_first_byte_bit_order():
    # Bits 0..7 = 10110001 (numeral, bit 7 leftmost): set positions 0, 4, 5, 7.
    d = BinaryDescriptor(0).flip([0, 4, 5, 7])
    views = split_substrings(d, 32)
    assert views[0].value == 0b10110001
    assert all(v.value == 0 for v in views[1:])


def test_split_reconstructs_prefix():
    rng = np.random.default_rng(7)
    for t in (1, 2, 3, 5, 8, 32, 64, 100, 256):
        d = random_descriptor(rng)
        views = split_substrings(d, t)
        width = DESCRIPTOR_BITS // t
        rebuilt = 0
        for v in views:
            rebuilt |= v.value << (v.table_index * width)
        prefix_mask = (1 << (width * t)) - 1
        assert rebuilt == d.value & prefix_mask


def test_split_rejects_bad_table_count():
    d = random_descriptor(8)
    with pytest.raises(ValueError):
        split_substrings(d, 0)
    with pytest.raises(ValueError):
        split_substrings(d, 257)


def test_substring_value_matches_views():
    d = random_descriptor(9)
    views = split_substrings(d, 16)
    for v in views:
        assert substring_value(d, v.table_index, 16) == v.value


def test_perturb_zero_is_identity():
    d = random_descriptor(10)
    assert perturb(d, PerturbationSpec(0), 1) == d


def test_perturb_full_flip_is_complement():
    d = random_descriptor(11)
    assert perturb(d, PerturbationSpec(256), 1) == d.complement()


def test_perturb_distinct_gives_exact_distance():
    rng = np.random.default_rng(12)
    d = random_descriptor(rng)
    out = perturb(d, PerturbationSpec(40), 99)
    assert hamming_distance(d, out) == 40
    for k in (1, 7, 63, 128, 255):
        out = perturb(d, PerturbationSpec(k), rng)
        assert hamming_distance(d, out) == k


def test_perturb_balls_into_bins_distance_bounded_and_parity():
    rng = np.random.default_rng(13)
    d = random_descriptor(rng)
    for eps in (1, 2, 9, 40):
        out = perturb(d, PerturbationSpec(eps, PerturbationModel.BALLS_INTO_BINS), rng)
        dist = hamming_distance(d, out)
        assert dist <= eps
        assert dist % 2 == eps % 2


def test_perturb_validates_epsilon():
    with pytest.raises(ValueError):
        PerturbationSpec(-1)
    with pytest.raises(ValueError):
        PerturbationSpec(257, PerturbationModel.DISTINCT_POSITIONS)
    # balls-into-bins allows epsilon beyond the width
    PerturbationSpec(400, PerturbationModel.BALLS_INTO_BINS)


def test_random_descriptor_deterministic_per_seed():
    assert random_descriptor(1) == random_descriptor(1)
    assert random_descriptor(1) != random_descriptor(2)


def test_random_descriptor_mean_bit_count():
    rng = np.random.default_rng(14)
    mean = np.mean([random_descriptor(rng).value.bit_count() for _ in range(10_000)])
    assert abs(mean - 128.0) < 3.0


def test_hex_round_trip_and_format():
    d = random_descriptor(15)
    text = d.to_hex()
    assert len(text) == 64
    assert text == text.lower()
    assert BinaryDescriptor.from_hex(text) == d
    # word 0 leads
    assert text[:16] == f"{d.words[0]:016x}"


def test_bytes_round_trip():
    d = random_descriptor(16)
    assert BinaryDescriptor.from_bytes(d.to_bytes()) == d


def test_descriptor_value_range_checked():
    with pytest.raises(ValueError):
        BinaryDescriptor(-1)
    with pytest.raises(ValueError):
        BinaryDescriptor(1 << 256)


def test_hamming_matrix_matches_scalar():
    rng = np.random.default_rng(17)
    left = [random_descriptor(rng) for _ in range(12)]
    right = [random_descriptor(rng) for _ in range(9)]
    matrix = hamming_matrix(pack_descriptors(left), pack_descriptors(right))
    for i, a in enumerate(left):
        for j, b in enumerate(right):
            assert matrix[i, j] == hamming_distance(a, b)
