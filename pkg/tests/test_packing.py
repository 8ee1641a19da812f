import numpy as np
import pytest

from agemm import (Matrix, pack_a, pack_b, micro_kernel, macro_kernel,
                   TileRange, BlockingParams, PackBoundsError)

from conftest import to_rows, from_rows
import oracles


class TestPackA:
    def test_two_row_panels(self):
        a = from_rows([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0], [7.0, 8.0]])
        packed = pack_a(a, 0, 0, 4, 2, 2)
        assert packed.data.tolist() == [1.0, 3.0, 2.0, 4.0, 5.0, 7.0, 6.0, 8.0]

    def test_zero_padding_tail(self):
        a = from_rows([[9.0], [8.0], [7.0]])
        packed = pack_a(a, 0, 0, 3, 1, 2)
        assert packed.data.tolist() == [9.0, 8.0, 7.0, 0.0]

    def test_round_trip_large_block(self, rng):
        a = Matrix.random(176, 368, rng)
        packed = pack_a(a, 0, 0, 176, 368, 4)
        block = oracles.unpack_a(packed.data.tolist(), 176, 368, 4)
        assert oracles.grid_equal_bits(block, to_rows(a))

    @pytest.mark.parametrize("mr", [1, 2, 4, 8])
    def test_round_trip_any_register_height(self, rng, mr):
        a = Matrix.random(23, 11, rng, leading_dimension=31)
        packed = pack_a(a, 3, 2, 17, 7, mr)
        block = oracles.unpack_a(packed.data.tolist(), 17, 7, mr)
        want = [row[2:9] for row in to_rows(a)[3:20]]
        assert oracles.grid_equal_bits(block, want)

    def test_out_of_range_block(self, rng):
        a = Matrix.random(8, 8, rng)
        with pytest.raises(PackBoundsError):
            pack_a(a, 4, 0, 5, 8, 2)
        with pytest.raises(PackBoundsError):
            pack_a(a, 0, 7, 8, 2, 2)

    def test_source_unmodified(self, rng):
        a = Matrix.random(12, 12, rng)
        before = a.copy()
        pack_a(a, 1, 1, 8, 8, 4)
        assert a.bitwise_equal(before)


class TestPackB:
    def test_column_panel_layout(self):
        # panels interleave nr columns per k step: (p, j) -> p*nr + j%nr
        b = from_rows([[1.0, 3.0, 5.0, 7.0], [2.0, 4.0, 6.0, 8.0]])
        packed = pack_b(b, 0, 0, 2, 4, 2)
        assert packed.data.tolist() == [1.0, 3.0, 2.0, 4.0, 5.0, 7.0, 6.0, 8.0]

    def test_zero_padding_tail(self):
        b = from_rows([[11.0, 12.0, 13.0]])
        packed = pack_b(b, 0, 0, 1, 3, 2)
        assert packed.data.tolist() == [11.0, 12.0, 13.0, 0.0]

    def test_round_trip_large_block(self, rng):
        b = Matrix.random(368, 512, rng)
        packed = pack_b(b, 0, 0, 368, 512, 4)
        block = oracles.unpack_b(packed.data.tolist(), 368, 512, 4)
        assert oracles.grid_equal_bits(block, to_rows(b))

    @pytest.mark.parametrize("nr", [1, 2, 4, 8])
    def test_round_trip_any_register_width(self, rng, nr):
        b = Matrix.random(19, 21, rng, leading_dimension=25)
        packed = pack_b(b, 2, 3, 9, 13, nr)
        block = oracles.unpack_b(packed.data.tolist(), 9, 13, nr)
        want = [row[3:16] for row in to_rows(b)[2:11]]
        assert oracles.grid_equal_bits(block, want)

    def test_out_of_range_block(self, rng):
        b = Matrix.random(8, 8, rng)
        with pytest.raises(PackBoundsError):
            pack_b(b, 0, 5, 2, 4, 2)


class TestMicroKernel:
    def test_dot_product_with_accumulate(self):
        tile = np.array([[10.0]])
        micro_kernel(np.array([1.0, 2.0, 3.0]), np.array([4.0, 5.0, 6.0]), 3,
                     tile, alpha=1.0, beta_panel=1.0)
        assert tile[0, 0] == 42.0

    def test_empty_accumulation_scales_tile(self):
        tile = np.array([[8.0, -2.0], [4.0, 6.0]])
        micro_kernel(np.empty(0), np.empty(0), 0, tile, alpha=1.0, beta_panel=0.5)
        assert tile.tolist() == [[4.0, -1.0], [2.0, 3.0]]

    def test_matches_dense_oracle(self, rng):
        kc = 368
        a = Matrix.random(4, kc, rng)
        b = Matrix.random(kc, 4, rng)
        pa = pack_a(a, 0, 0, 4, kc, 4)
        pb = pack_b(b, 0, 0, kc, 4, 4)
        c = Matrix.random(4, 4, rng)
        tile = c.as_2d().copy(order="F")
        micro_kernel(pa.data, pb.data, kc, tile, alpha=1.0, beta_panel=1.0)
        want = oracles.naive_gemm(4, 4, kc, 1.0, 1.0, to_rows(a), to_rows(b), to_rows(c))
        got = [[float(tile[i, j]) for j in range(4)] for i in range(4)]
        assert oracles.grid_equal_bits(got, want)

    def test_partial_tile_writes_only_its_extent(self, rng):
        # edge tile: 3 live rows in an mr=4 panel; padded lane stays untouched
        a = Matrix.random(3, 5, rng)
        b = Matrix.random(5, 2, rng)
        pa = pack_a(a, 0, 0, 3, 5, 4)
        pb = pack_b(b, 0, 0, 5, 2, 4)
        c = Matrix.random(3, 2, rng)
        tile = c.as_2d().copy(order="F")
        micro_kernel(pa.data, pb.data, 5, tile, alpha=2.0, beta_panel=-1.0)
        want = oracles.naive_gemm(3, 2, 5, 2.0, -1.0, to_rows(a), to_rows(b), to_rows(c))
        got = [[float(tile[i, j]) for j in range(2)] for i in range(3)]
        assert oracles.grid_equal_bits(got, want)


def _macro_setup(rng, m, k, n, mr=4, nr=4):
    a = Matrix.random(m, k, rng)
    b = Matrix.random(k, n, rng)
    pa = pack_a(a, 0, 0, m, k, mr)
    pb = pack_b(b, 0, 0, k, n, nr)
    params = BlockingParams(nc=max(n, 1), kc=max(k, 1), mc=max(m, 1), nr=nr, mr=mr)
    return a, b, pa, pb, params


class TestMacroKernel:
    def test_full_range_matches_oracle(self, rng):
        a, b, pa, pb, params = _macro_setup(rng, 8, 8, 8)
        c = Matrix.random(8, 8, rng)
        region = c.as_2d().copy(order="F")
        macro_kernel(pa, pb, region, params, alpha=1.0, beta_panel=1.0)
        want = oracles.naive_gemm(8, 8, 8, 1.0, 1.0, to_rows(a), to_rows(b), to_rows(c))
        assert oracles.grid_equal_bits(region.tolist(), want)

    def test_edge_tiles_match_oracle(self, rng):
        a, b, pa, pb, params = _macro_setup(rng, 7, 9, 6, mr=4, nr=4)
        c = Matrix.random(7, 6, rng)
        region = c.as_2d().copy(order="F")
        macro_kernel(pa, pb, region, params, alpha=-0.75, beta_panel=2.0)
        want = oracles.naive_gemm(7, 6, 9, -0.75, 2.0, to_rows(a), to_rows(b), to_rows(c))
        assert oracles.grid_equal_bits(region.tolist(), want)

    def test_empty_range_leaves_c(self, rng):
        _, _, pa, pb, params = _macro_setup(rng, 8, 4, 8)
        c = Matrix.random(8, 8, rng)
        region = c.as_2d().copy(order="F")
        macro_kernel(pa, pb, region, params, tile_range=TileRange(1, 1, 0, 2))
        assert np.array_equal(region, c.as_2d())

    def test_split_ranges_commute(self, rng):
        _, _, pa, pb, params = _macro_setup(rng, 16, 8, 16)
        c = Matrix.random(16, 16, rng)
        whole = c.as_2d().copy(order="F")
        macro_kernel(pa, pb, whole, params, alpha=1.25, beta_panel=0.5)
        for first, second in [((0, 2), (2, 4)), ((2, 4), (0, 2))]:
            split = c.as_2d().copy(order="F")
            macro_kernel(pa, pb, split, params, alpha=1.25, beta_panel=0.5,
                         tile_range=TileRange(*first, 0, 4))
            macro_kernel(pa, pb, split, params, alpha=1.25, beta_panel=0.5,
                         tile_range=TileRange(*second, 0, 4))
            assert np.array_equal(split.view(np.uint64), whole.view(np.uint64))

    def test_range_outside_grid_rejected(self, rng):
        _, _, pa, pb, params = _macro_setup(rng, 8, 4, 8)
        region = np.zeros((8, 8), order="F")
        with pytest.raises(PackBoundsError):
            macro_kernel(pa, pb, region, params, tile_range=TileRange(0, 3, 0, 2))

    def test_tiles_write_disjoint_elements(self, rng):
        # shadow tracking: run each tile alone, record which cells changed
        m, k, n = 11, 6, 10
        a, b, pa, pb, params = _macro_setup(rng, m, k, n)
        sentinel = Matrix.from_2d(np.full((m, n), 1.0))
        seen = np.zeros((m, n), dtype=bool)
        grid_j, grid_i = pb.panels, pa.panels
        for jq in range(grid_j):
            for iq in range(grid_i):
                region = sentinel.as_2d().copy(order="F")
                macro_kernel(pa, pb, region, params, alpha=1.0, beta_panel=0.5,
                             tile_range=TileRange(jq, jq + 1, iq, iq + 1))
                written = region != sentinel.as_2d()
                assert not (seen & written).any(), "tiles overlap"
                seen |= written
        assert seen.all(), "tiles must cover the whole region"


class TestPaddingNeutrality:
    @pytest.mark.parametrize("mr,nr", [(1, 1), (2, 4), (4, 2), (8, 8)])
    def test_padded_panels_equal_unpadded_oracle(self, rng, mr, nr):
        m, k, n = 13, 9, 11  # nothing divides, every edge padded
        a, b, pa, pb, _ = _macro_setup(rng, m, k, n, mr=mr, nr=nr)
        params = BlockingParams(nc=n, kc=k, mc=m, nr=nr, mr=mr)
        c = Matrix.random(m, n, rng)
        region = c.as_2d().copy(order="F")
        macro_kernel(pa, pb, region, params, alpha=1.0, beta_panel=1.0)
        want = oracles.naive_gemm(m, n, k, 1.0, 1.0, to_rows(a), to_rows(b), to_rows(c))
        assert oracles.grid_equal_bits(region.tolist(), want)
