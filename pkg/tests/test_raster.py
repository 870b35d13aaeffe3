import math
import random
from datetime import date

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from agriplot.errors import (
    EmptyInput,
    GridParseError,
    MissingBand,
    NoValidPixels,
)
from agriplot.raster import (
    BandGrid,
    IndexKind,
    PixelMask,
    SceneStack,
    compute_index,
    dump_ascii_grid,
    load_ascii_grid,
    rasterize_polygon_mask,
    scl_cloud_mask,
    temporal_composite,
    zonal_stats,
)
from agriplot.registry import PlotGeometry

from oracles import (
    evi_oracle,
    median_oracle,
    ndvi_oracle,
    ndwi_oracle,
    point_in_polygon_oracle,
    stats_oracle,
)

WINDOW = (date(2025, 5, 1), date(2025, 5, 31))


def grid(values, ncols, nrows, nodata=-9999.0, origin=(0.0, 0.0), cellsize=1.0):
    return BandGrid(ncols=ncols, nrows=nrows, origin_x=origin[0], origin_y=origin[1],
                    cellsize=cellsize, nodata=nodata, values=np.array(values, dtype=float))


def scene(bands_values, ncols=2, nrows=2, ts=date(2025, 5, 10)):
    bands = {name: grid(vals, ncols, nrows) for name, vals in bands_values.items()}
    return SceneStack(timestamp=ts, bands=bands)


class TestAsciiGrid:
    def test_basic_parse(self):
        text = "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n0.1 0.2\n0.3 0.4\n"
        g = load_ascii_grid(text)
        assert g.values.flatten().tolist() == [0.1, 0.2, 0.3, 0.4]
        assert g.nodata == -9999

    def test_header_keys_case_insensitive(self):
        text = "NCOLS 1\nNROWS 1\nXLLCORNER 5\nYLLCORNER 6\nCELLSIZE 2\nnodata_value -1\n3.5\n"
        g = load_ascii_grid(text)
        assert (g.origin_x, g.origin_y, g.cellsize) == (5, 6, 2)

    def test_count_mismatch(self):
        text = "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n0.1 0.2 0.3\n"
        with pytest.raises(GridParseError):
            load_ascii_grid(text)

    def test_missing_header_key(self):
        with pytest.raises(GridParseError):
            load_ascii_grid("ncols 1\nnrows 1\n1.0\n")

    def test_non_numeric_token(self):
        text = "ncols 2\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n0.1 xyz\n"
        with pytest.raises(GridParseError):
            load_ascii_grid(text)

    def test_round_trip_random_grids(self):
        rng = random.Random(42)
        for _ in range(25):
            ncols = rng.randint(1, 8)
            nrows = rng.randint(1, 8)
            g = grid([rng.uniform(-5, 5) for _ in range(ncols * nrows)], ncols, nrows,
                     nodata=rng.choice([-9999.0, -1.0]),
                     origin=(rng.uniform(-10, 10), rng.uniform(-10, 10)),
                     cellsize=rng.uniform(0.1, 3.0))
            g2 = load_ascii_grid(dump_ascii_grid(g))
            assert g2.values.tolist() == g.values.tolist()
            assert (g2.ncols, g2.nrows, g2.origin_x, g2.origin_y, g2.cellsize, g2.nodata) == \
                   (g.ncols, g.nrows, g.origin_x, g.origin_y, g.cellsize, g.nodata)
            # dump of the re-parse is the canonical fixed point
            assert dump_ascii_grid(g2) == dump_ascii_grid(g)


class TestComputeIndex:
    def test_ndvi_direct(self):
        s = scene({"nir": [0.5] * 4, "red": [0.1] * 4})
        out = compute_index(s, IndexKind.NDVI)
        assert out.values[0, 0] == pytest.approx(0.4 / 0.6, abs=1e-12)

    def test_ndvi_symmetry_zero(self):
        s = scene({"nir": [0.3] * 4, "red": [0.3] * 4})
        assert compute_index(s, IndexKind.NDVI).values[0, 0] == 0.0

    def test_evi_value(self):
        s = scene({"nir": [0.5] * 4, "red": [0.1] * 4, "blue": [0.05] * 4})
        expected = evi_oracle(0.5, 0.1, 0.05)
        assert expected == pytest.approx(0.579710, abs=1e-6)
        assert compute_index(s, IndexKind.EVI).values[0, 0] == pytest.approx(expected, rel=1e-12)

    def test_ndwi_value(self):
        s = scene({"green": [0.2] * 4, "nir": [0.6] * 4})
        assert compute_index(s, IndexKind.NDWI).values[0, 0] == pytest.approx(ndwi_oracle(0.2, 0.6), rel=1e-12)

    def test_missing_band(self):
        s = scene({"nir": [0.5] * 4, "red": [0.1] * 4})
        with pytest.raises(MissingBand):
            compute_index(s, IndexKind.EVI)

    def test_nodata_propagates(self):
        s = scene({"nir": [0.5, -9999.0, 0.5, 0.5], "red": [0.1] * 4})
        out = compute_index(s, IndexKind.NDVI)
        assert out.values.flatten()[1] == out.nodata

    def test_small_denominator_becomes_nodata(self):
        s = scene({"nir": [1e-10] * 4, "red": [-1e-10 + 1e-22] * 4})
        out = compute_index(s, IndexKind.NDVI)
        assert (out.values == out.nodata).all()

    def test_matches_oracle_on_random_scenes(self):
        rng = random.Random(7)
        for _ in range(20):
            n = 16
            nir = [rng.random() for _ in range(n)]
            red = [rng.random() for _ in range(n)]
            blue = [rng.random() for _ in range(n)]
            green = [rng.random() for _ in range(n)]
            s = scene({"nir": nir, "red": red, "blue": blue, "green": green}, ncols=4, nrows=4)
            for kind, oracle, args in (
                (IndexKind.NDVI, ndvi_oracle, (nir, red)),
                (IndexKind.EVI, evi_oracle, (nir, red, blue)),
                (IndexKind.NDWI, ndwi_oracle, (green, nir)),
            ):
                out = compute_index(s, kind).values.flatten()
                for i in range(n):
                    expected = oracle(*(a[i] for a in args))
                    assert out[i] == pytest.approx(expected, rel=1e-9)

    @given(st.floats(0, 1), st.floats(0, 1))
    def test_ndvi_bounded(self, nir, red):
        if nir + red < 1e-9:
            return
        s = scene({"nir": [nir] * 4, "red": [red] * 4})
        v = compute_index(s, IndexKind.NDVI).values[0, 0]
        assert -1.0 <= v <= 1.0

    def test_pointwise_permutation(self):
        rng = random.Random(3)
        nir = [rng.random() for _ in range(9)]
        red = [rng.random() for _ in range(9)]
        out = compute_index(scene({"nir": nir, "red": red}, 3, 3), IndexKind.NDVI).values.flatten()
        perm = list(range(9))
        rng.shuffle(perm)
        out_p = compute_index(
            scene({"nir": [nir[i] for i in perm], "red": [red[i] for i in perm]}, 3, 3),
            IndexKind.NDVI,
        ).values.flatten()
        for j, i in enumerate(perm):
            assert out_p[j] == out[i]


class TestCloudMask:
    def test_exclusion_set(self):
        scl = grid([4, 8, 9, 5], 2, 2)
        mask = scl_cloud_mask(scl, {3, 8, 9, 10})
        assert mask.bits.flatten().tolist() == [True, False, False, True]

    def test_empty_exclusion_keeps_all_valid(self):
        scl = grid([4, -9999.0, 9, 5], 2, 2)
        mask = scl_cloud_mask(scl, set())
        assert mask.bits.flatten().tolist() == [True, False, True, True]

    def test_total_exclusion(self):
        scl = grid([9] * 4, 2, 2)
        assert not scl_cloud_mask(scl, {9}).bits.any()


class TestTemporalComposite:
    def test_odd_median(self):
        stacks = [scene({"nir": [v] * 4, "red": [0.0] * 4}) for v in (0.2, 0.4, 0.6)]
        # NDVI of (v, 0) is 1 for v>0, so vary red to get distinct values
        stacks = [scene({"nir": [v] * 4, "red": [v * (1 - v) / (1 + v)] * 4}) for v in (0.2, 0.4, 0.6)]
        out = temporal_composite(stacks, IndexKind.NDVI)
        assert out.values[0, 0] == pytest.approx(0.4, abs=1e-12)

    def test_even_median_mean_of_central(self):
        stacks = [_ndvi_scene(0.2), _ndvi_scene(0.6)]
        out = temporal_composite(stacks, IndexKind.NDVI)
        assert out.values[0, 0] == pytest.approx(0.4, abs=1e-12)

    def test_masked_values_excluded(self):
        stacks = [_ndvi_scene(0.2), _ndvi_scene(0.6), _ndvi_scene(0.8)]
        masks = [
            PixelMask(2, 2, np.zeros((2, 2), dtype=bool)),  # masks out 0.2
            PixelMask(2, 2, np.ones((2, 2), dtype=bool)),
            PixelMask(2, 2, np.ones((2, 2), dtype=bool)),
        ]
        out = temporal_composite(stacks, IndexKind.NDVI, masks)
        assert out.values[0, 0] == pytest.approx(median_oracle([0.6, 0.8]), abs=1e-12)

    def test_no_valid_observation_is_nodata(self):
        stacks = [_ndvi_scene(0.2)]
        masks = [PixelMask(2, 2, np.zeros((2, 2), dtype=bool))]
        out = temporal_composite(stacks, IndexKind.NDVI, masks)
        assert (out.values == out.nodata).all()

    def test_single_stack_equals_compute_index(self):
        rng = random.Random(11)
        s = scene({"nir": [rng.random() for _ in range(16)], "red": [rng.random() for _ in range(16)]}, 4, 4)
        full = [PixelMask(4, 4, np.ones((4, 4), dtype=bool))]
        comp = temporal_composite([s], IndexKind.NDVI, full)
        direct = compute_index(s, IndexKind.NDVI)
        assert np.allclose(comp.values, direct.values)

    def test_empty_input(self):
        with pytest.raises(EmptyInput):
            temporal_composite([], IndexKind.NDVI)


def _ndvi_scene(target_ndvi, ncols=2, nrows=2):
    """Scene whose NDVI is exactly target everywhere (nir=1+t, red=1-t scaled)."""
    nir = (1 + target_ndvi) / 2
    red = (1 - target_ndvi) / 2
    return scene({"nir": [nir] * (ncols * nrows), "red": [red] * (ncols * nrows)}, ncols, nrows)


class TestRasterize:
    def test_unit_square_contains_center(self):
        geom = PlotGeometry((((0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.0, 0.0)),))
        georef = grid([0.0], 1, 1)  # single cell, center (0.5, 0.5)
        mask = rasterize_polygon_mask(geom, georef)
        assert mask.bits[0, 0]

    def test_outside_point(self):
        geom = PlotGeometry((((0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.0, 0.0)),))
        georef = grid([0.0], 1, 1, origin=(1.5, 1.5))  # center (2, 2)
        mask = rasterize_polygon_mask(geom, georef)
        assert not mask.bits[0, 0]

    def test_disjoint_extent_flagged(self):
        geom = PlotGeometry((((10.0, 10.0), (11.0, 10.0), (11.0, 11.0), (10.0, 11.0), (10.0, 10.0)),))
        georef = grid([0.0] * 4, 2, 2)
        mask = rasterize_polygon_mask(geom, georef)
        assert mask.disjoint
        assert not mask.bits.any()

    def test_concave_l_shape_matches_oracle(self):
        rings = (((0.0, 0.0), (6.0, 0.0), (6.0, 3.0), (3.0, 3.0), (3.0, 8.0), (0.0, 8.0), (0.0, 0.0)),)
        geom = PlotGeometry(rings)
        georef = grid([0.0] * 100, 10, 10)
        mask = rasterize_polygon_mask(geom, georef)
        for row in range(10):
            for col in range(10):
                x, y = georef.pixel_center(row, col)
                assert mask.bits[row, col] == point_in_polygon_oracle(x, y, rings), (x, y)

    def test_hole_excluded(self):
        rings = (
            ((0.0, 0.0), (10.0, 0.0), (10.0, 10.0), (0.0, 10.0), (0.0, 0.0)),
            ((4.0, 4.0), (6.0, 4.0), (6.0, 6.0), (4.0, 6.0), (4.0, 4.0)),
        )
        geom = PlotGeometry(rings)
        georef = grid([0.0] * 100, 10, 10)
        mask = rasterize_polygon_mask(geom, georef)
        assert not mask.bits[10 - 1 - 4, 4]  # center (4.5, 4.5) inside the hole... edge-free point
        assert mask.bits[0, 0] == point_in_polygon_oracle(0.5, 9.5, rings)
        for row in range(10):
            for col in range(10):
                x, y = georef.pixel_center(row, col)
                assert mask.bits[row, col] == point_in_polygon_oracle(x, y, rings)

    def test_center_on_edge_is_inside(self):
        geom = PlotGeometry((((0.5, 0.0), (2.0, 0.0), (2.0, 2.0), (0.5, 2.0), (0.5, 0.0)),))
        georef = grid([0.0] * 4, 2, 2)  # centers at x=0.5 and 1.5
        mask = rasterize_polygon_mask(geom, georef)
        assert mask.bits.all()

    def test_axis_aligned_rectangle_count(self):
        # rectangle [1.0, 4.0] x [2.0, 6.0] on a unit grid: centers at
        # x in {1.5, 2.5, 3.5} and y in {2.5, ..., 5.5} -> 3 * 4 cells
        geom = PlotGeometry((((1.0, 2.0), (4.0, 2.0), (4.0, 6.0), (1.0, 6.0), (1.0, 2.0)),))
        georef = grid([0.0] * 64, 8, 8)
        mask = rasterize_polygon_mask(geom, georef)
        assert int(mask.bits.sum()) == 3 * 4


class TestZonalStats:
    def test_known_values(self):
        g = grid([0.2, 0.4, 0.6, 0.8], 2, 2)
        mask = PixelMask(2, 2, np.ones((2, 2), dtype=bool))
        stats = zonal_stats(g, mask, IndexKind.NDVI, WINDOW)
        assert stats.mean == pytest.approx(0.5)
        assert stats.min == pytest.approx(0.2)
        assert stats.max == pytest.approx(0.8)
        assert stats.std_dev == pytest.approx(0.223606, abs=1e-6)
        assert stats.pixel_count == 4

    def test_singleton(self):
        g = grid([0.42], 1, 1)
        mask = PixelMask(1, 1, np.ones((1, 1), dtype=bool))
        stats = zonal_stats(g, mask, IndexKind.NDVI, WINDOW)
        assert stats.min == stats.mean == stats.max == 0.42
        assert stats.std_dev == 0.0

    def test_serialization_keys(self):
        g = grid([0.2, 0.4, 0.6, 0.8], 2, 2)
        mask = PixelMask(2, 2, np.ones((2, 2), dtype=bool))
        stats = zonal_stats(g, mask, IndexKind.NDVI, WINDOW)
        assert list(stats.to_dict()) == ["NDVI_max", "NDVI_mean", "NDVI_min", "NDVI_stdDev"]

    def test_empty_zone_raises(self):
        g = grid([0.2], 1, 1)
        mask = PixelMask(1, 1, np.zeros((1, 1), dtype=bool))
        with pytest.raises(NoValidPixels):
            zonal_stats(g, mask, IndexKind.NDVI, WINDOW)

    def test_matches_brute_force_on_random_grids(self):
        rng = random.Random(99)
        for _ in range(50):
            n = 16 * 16
            vals = [rng.uniform(-1, 1) for _ in range(n)]
            bits = [rng.random() < 0.6 for _ in range(n)]
            if not any(bits):
                bits[0] = True
            g = grid(vals, 16, 16)
            mask = PixelMask(16, 16, np.array(bits).reshape(16, 16))
            stats = zonal_stats(g, mask, IndexKind.NDVI, WINDOW)
            expected = stats_oracle([v for v, b in zip(vals, bits) if b])
            assert stats.mean == pytest.approx(expected["mean"], rel=1e-9, abs=1e-12)
            assert stats.min == pytest.approx(expected["min"], rel=1e-9)
            assert stats.max == pytest.approx(expected["max"], rel=1e-9)
            assert stats.std_dev == pytest.approx(expected["std"], rel=1e-9, abs=1e-12)
