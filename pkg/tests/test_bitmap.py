import struct

import numpy as np
import pytest

from crackforge.bitmap import (
    BadMagic,
    IntensityGrid,
    Truncated,
    active_pixels,
    parse_idx,
    read_pgm,
    serialize_idx,
    write_pgm,
)


def idx_bytes(images):
    arr = np.asarray(images, dtype=np.uint8)
    header = struct.pack(">IIII", 0x00000803, arr.shape[0], arr.shape[1], arr.shape[2])
    return header + arr.tobytes()


def test_parse_single_2x2():
    data = idx_bytes([[[0, 10], [20, 255]]])
    grids = parse_idx(data)
    assert len(grids) == 1
    assert grids[0].values.tolist() == [[0, 10], [20, 255]]


def test_parse_consumes_exact_length():
    imgs = np.arange(2 * 3 * 4, dtype=np.uint8).reshape(2, 3, 4)
    data = idx_bytes(imgs)
    assert len(data) == 16 + 2 * 3 * 4
    grids = parse_idx(data)
    assert len(grids) == 2
    assert grids[1].values[2, 3] == 23


def test_empty_input_truncated():
    with pytest.raises(Truncated):
        parse_idx(b"")


def test_short_payload_truncated():
    data = idx_bytes([[[1, 2], [3, 4]]])
    with pytest.raises(Truncated):
        parse_idx(data[:-1])


def test_label_magic_rejected():
    data = struct.pack(">III", 0x00000801, 4, 0) + bytes(4)
    with pytest.raises(BadMagic):
        parse_idx(data)


def test_other_dtypes_rejected():
    # IDX float32 3-D magic
    data = struct.pack(">IIII", 0x00000D03, 1, 2, 2) + bytes(16)
    with pytest.raises(BadMagic):
        parse_idx(data)


def test_round_trip_bytes_identical():
    rng = np.random.default_rng(7)
    imgs = rng.integers(0, 256, size=(5, 28, 28), dtype=np.uint8)
    data = idx_bytes(imgs)
    assert serialize_idx(parse_idx(data)) == data


def test_active_pixels_empty_for_zero_grid():
    grid = IntensityGrid(np.zeros((28, 28), dtype=np.uint8))
    assert active_pixels(grid, 10) == []


def test_active_pixels_strict_inequality():
    v = np.zeros((28, 28), dtype=np.uint8)
    v[3, 4] = 11
    v[0, 0] = 10  # exactly the threshold: excluded
    grid = IntensityGrid(v)
    assert active_pixels(grid, 10) == [(3, 4)]


def test_active_pixels_row_major_order():
    v = np.zeros((5, 5), dtype=np.uint8)
    v[4, 0] = 99
    v[1, 3] = 99
    v[1, 1] = 99
    grid = IntensityGrid(v)
    assert active_pixels(grid, 10) == [(1, 1), (1, 3), (4, 0)]


def test_active_pixels_monotone_in_threshold():
    rng = np.random.default_rng(11)
    grid = IntensityGrid(rng.integers(0, 256, size=(28, 28), dtype=np.uint8))
    prev = set(active_pixels(grid, 0))
    for thr in (10, 50, 128, 254, 255):
        cur = set(active_pixels(grid, thr))
        assert cur <= prev
        prev = cur


def test_pgm_round_trip():
    rng = np.random.default_rng(3)
    grid = IntensityGrid(rng.integers(0, 256, size=(17, 9), dtype=np.uint8))
    again = read_pgm(write_pgm(grid))
    assert np.array_equal(again.values, grid.values)
    assert (again.height, again.width) == (17, 9)


def test_pgm_with_comment():
    grid = IntensityGrid(np.full((2, 2), 42, dtype=np.uint8))
    raw = write_pgm(grid)
    with_comment = raw.replace(b"P5\n", b"P5\n# a comment line\n")
    assert np.array_equal(read_pgm(with_comment).values, grid.values)


def test_pgm_truncated():
    grid = IntensityGrid(np.zeros((4, 4), dtype=np.uint8))
    with pytest.raises(Truncated):
        read_pgm(write_pgm(grid)[:-3])
