"""Run-length mask codec round-trips and format structure."""

import numpy as np
import pytest

from embmatch import DataError, RleMask
from embmatch import rle


class TestRoundTrip:
    def test_random_bitmaps_exact(self):
        rng = np.random.default_rng(20)
        for _ in range(200):
            h = int(rng.integers(1, 20))
            w = int(rng.integers(1, 20))
            bitmap = rng.random((h, w)) < rng.uniform(0.05, 0.95)
            encoded = rle.encode(bitmap)
            np.testing.assert_array_equal(rle.decode(encoded), bitmap)

    def test_all_zero_and_all_one(self):
        zero = np.zeros((5, 3), dtype=bool)
        one = np.ones((5, 3), dtype=bool)
        np.testing.assert_array_equal(rle.decode(rle.encode(zero)), zero)
        np.testing.assert_array_equal(rle.decode(rle.encode(one)), one)

    def test_single_pixel(self):
        bitmap = np.zeros((4, 4), dtype=bool)
        bitmap[2, 1] = True
        np.testing.assert_array_equal(rle.decode(rle.encode(bitmap)), bitmap)

    def test_reencode_is_stable(self):
        rng = np.random.default_rng(21)
        bitmap = rng.random((16, 16)) < 0.5
        once = rle.encode(bitmap)
        twice = rle.encode(rle.decode(once))
        assert once == twice


class TestFormatStructure:
    def test_column_major_hand_case(self):
        # 4x4 with the centre 2x2 set; column-major runs are [5, 2, 2, 2, 5]
        # which pack to "52203" (the last two counts are difference-coded).
        bitmap = np.zeros((4, 4), dtype=np.uint8)
        bitmap[1:3, 1:3] = 1
        assert rle.encode(bitmap).counts == "52203"

    def test_leading_one_gets_zero_count(self):
        # first run always counts zeros, so a mask starting with 1 packs a 0 first
        bitmap = np.ones((2, 1), dtype=bool)
        encoded = rle.encode(bitmap)
        assert encoded.counts[0] == "0"

    def test_continuation_char_for_large_count(self):
        # a run of 20 needs two chars: 20 -> 'd0'
        bitmap = np.zeros((20, 1), dtype=bool)
        assert rle.encode(bitmap).counts == "d0"

    def test_negative_difference_roundtrip(self):
        # runs [1, 5, 1, 1]: the 4th count difference-codes to -4
        flat = np.array([0] + [1] * 5 + [0] + [1], dtype=bool)
        bitmap = flat.reshape((8, 1), order="F")
        encoded = rle.encode(bitmap)
        np.testing.assert_array_equal(rle.decode(encoded), bitmap)


class TestAreaAndErrors:
    def test_area_counts_set_pixels(self):
        rng = np.random.default_rng(22)
        bitmap = rng.random((9, 7)) < 0.3
        assert rle.area(rle.encode(bitmap)) == int(bitmap.sum())

    def test_decode_rejects_wrong_total(self):
        encoded = rle.encode(np.zeros((4, 4), dtype=bool))
        wrong = RleMask(size=(5, 5), counts=encoded.counts)
        with pytest.raises(DataError):
            rle.decode(wrong)

    def test_decode_rejects_bad_characters(self):
        with pytest.raises(DataError):
            rle.decode(RleMask(size=(2, 2), counts="\x07"))

    def test_encode_rejects_bad_shape(self):
        with pytest.raises(DataError):
            rle.encode(np.zeros((0, 4), dtype=bool))
        with pytest.raises(DataError):
            rle.encode(np.zeros(4, dtype=bool))
