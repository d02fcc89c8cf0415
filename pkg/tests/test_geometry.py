import math

import numpy as np
import pytest

from gkbm.geometry import BlockPartition, normalize, shifted, support_radius, torus_distance


@pytest.mark.parametrize(
    "x, y, d",
    [(0.0, 0.0, 0.0), (-0.45, 0.45, 0.10), (0.1, 0.3, 0.2), (0.5, -0.5, 0.0), (0.25, -0.25, 0.5)],
)
def test_distance_examples(x, y, d):
    assert torus_distance(x, y) == pytest.approx(d, abs=1e-12)


def test_distance_broadcasts():
    out = torus_distance(np.array([0.0, 0.4]), 0.45)
    assert out.shape == (2,)
    assert np.allclose(out, [0.45, 0.05])


def test_normalize_lands_in_half_open_interval():
    x = np.array([-0.5, 0.5, 1.5, -1.5, 0.75, -0.75, 3.2])
    y = normalize(x)
    assert np.all(y > -0.5) and np.all(y <= 0.5)
    assert np.allclose(torus_distance(x, y), 0.0)
    assert normalize(-0.5) == 0.5


def test_shifted_frame():
    assert shifted(-0.25) == 0.75
    assert shifted(0.5) == 0.5
    assert shifted(-1e-18) == 0.0


def test_partition_small_n():
    part = BlockPartition(55, 1.0)
    assert part.block_width == pytest.approx(math.log(55) / 55)
    assert part.block_width == pytest.approx(0.0729, abs=1e-4)
    assert part.block_count == 14


def test_partition_count_arithmetic():
    assert BlockPartition(1000, 2.0).block_count == 73


def test_widths_cover_torus():
    for n, kappa in [(55, 1.0), (1000, 2.0), (10_000, 0.7), (123, 3.3)]:
        part = BlockPartition(n, kappa)
        w = part.widths()
        assert abs(w.sum() - 1.0) < 1e-12
        assert np.all(w > 0)
        assert np.all(w[:-1] == part.block_width)
        assert w[-1] <= part.block_width + 1e-15


def test_integral_block_count_gives_full_last_block():
    # choose kappa so that 1 / width is exactly 10
    n = 1000
    kappa = n / (10 * math.log(n))
    part = BlockPartition(n, kappa)
    assert part.block_count == 10
    assert part.widths()[-1] == pytest.approx(part.block_width)


def test_assign_is_floor_of_shifted():
    part = BlockPartition(500, 1.0)
    x = np.random.default_rng(1).uniform(-0.5, 0.5, 2000)
    idx = part.assign(x)
    assert idx.min() >= 0 and idx.max() <= part.block_count - 1
    for xi, i in zip(x, idx):
        lo, hi = part.bounds(int(i))
        assert lo <= shifted(xi) < hi


def test_rejects_wide_blocks():
    with pytest.raises(ValueError):
        BlockPartition(2, 0.1)
    with pytest.raises(ValueError):
        BlockPartition(3, 2.0)
    with pytest.raises(ValueError):
        BlockPartition(100, 20.0)
    with pytest.raises(ValueError):
        BlockPartition(100, 0.0)


def test_non_adjacent_blocks_are_far_apart():
    # only holds between full-width blocks; the narrow last block is excluded
    part = BlockPartition(400, 1.0)
    rng = np.random.default_rng(2)
    x = rng.uniform(-0.5, 0.5, 3000)
    y = rng.uniform(-0.5, 0.5, 3000)
    bx, by = part.assign(x), part.assign(y)
    last = part.block_count - 1
    far = (part.gap(bx, by) >= 2) & (bx != last) & (by != last)
    assert far.sum() > 100
    assert np.all(torus_distance(x[far], y[far]) > support_radius(400, 1.0))


def test_gap_is_cyclic():
    part = BlockPartition(1000, 1.0)
    b = part.block_count
    assert part.gap(0, b - 1) == 1
    assert part.gap(0, 2) == 2
