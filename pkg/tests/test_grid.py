import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from shipplume.grid import (GridImage, GridSpec, PointSample, crop,
                            grid_to_csv, parse_grid_csv, parse_samples_csv,
                            quality_filter, regrid, samples_to_csv)

from conftest import random_image


def make_samples(rng, n, spec, spread=1.2):
    out = []
    for _ in range(n):
        out.append(PointSample(
            lat=float(rng.uniform(spec.lat_min - spread * 0.1,
                                  spec.lat_max + spread * 0.1)),
            lon=float(rng.uniform(spec.lon_min - spread * 0.1,
                                  spec.lon_max + spread * 0.1)),
            value=float(rng.normal()),
            qa=float(rng.random()),
            cloud_fraction=float(rng.random())))
    return out


class TestQualityFilter:
    def test_kept_sample(self):
        s = PointSample(lat=0.0, lon=0.0, value=1.0, qa=0.6, cloud_fraction=0.2)
        assert quality_filter([s]) == [s]

    def test_boundary_qa_dropped(self):
        s = PointSample(lat=0.0, lon=0.0, value=1.0, qa=0.5, cloud_fraction=0.2)
        assert quality_filter([s]) == []

    def test_boundary_cloud_dropped(self):
        s = PointSample(lat=0.0, lon=0.0, value=1.0, qa=0.9, cloud_fraction=0.5)
        assert quality_filter([s]) == []

    def test_matches_brute_force_scan(self, rng):
        spec = GridSpec(31.5, 19.5, 0.045, 10, 10)
        samples = make_samples(rng, 1000, spec)
        got = quality_filter(samples)
        expected = [s for s in samples
                    if s.qa > 0.5 and s.cloud_fraction < 0.5]
        assert got == expected

    @given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1))))
    def test_idempotent(self, qa_cf):
        samples = [PointSample(lat=0.0, lon=0.0, value=1.0, qa=q,
                               cloud_fraction=c) for q, c in qa_cf]
        once = quality_filter(samples)
        assert quality_filter(once) == once


class TestRegrid:
    def test_single_sample_at_center(self):
        spec = GridSpec(0.0, 0.0, 1.0, 3, 3)
        img = regrid([PointSample(lat=1.5, lon=1.5, value=3.0)], spec)
        assert img.values[1, 1] == 3.0
        assert img.valid[1, 1]
        assert img.valid.sum() == 1

    def test_two_samples_one_cell(self):
        spec = GridSpec(0.0, 0.0, 1.0, 2, 2)
        img = regrid([PointSample(lat=0.2, lon=0.3, value=2.0),
                      PointSample(lat=0.8, lon=0.9, value=4.0)], spec)
        assert img.values[0, 0] == 3.0

    def test_outside_samples_ignored(self):
        spec = GridSpec(0.0, 0.0, 1.0, 2, 2)
        img = regrid([PointSample(lat=-0.5, lon=0.5, value=9.0),
                      PointSample(lat=0.5, lon=2.5, value=9.0)], spec)
        assert img.valid.sum() == 0

    def test_matches_bucketed_average_oracle(self, rng):
        spec = GridSpec(31.5, 19.5, 0.045, 8, 12)
        samples = make_samples(rng, 500, spec)
        img = regrid(samples, spec)
        buckets = {}
        for s in samples:
            r = math.floor((s.lat - spec.lat_min) / spec.cell_size)
            c = math.floor((s.lon - spec.lon_min) / spec.cell_size)
            if 0 <= r < spec.n_rows and 0 <= c < spec.n_cols:
                buckets.setdefault((r, c), []).append(s.value)
        for r in range(spec.n_rows):
            for c in range(spec.n_cols):
                if (r, c) in buckets:
                    assert img.valid[r, c]
                    expect = np.mean(buckets[(r, c)])
                    assert img.values[r, c] == pytest.approx(expect, rel=1e-12)
                else:
                    assert not img.valid[r, c]

    def test_valid_count_bounded(self, rng):
        spec = GridSpec(31.5, 19.5, 0.045, 5, 7)
        img = regrid(make_samples(rng, 200, spec), spec)
        assert img.valid.sum() <= spec.n_rows * spec.n_cols


class TestCrop:
    def test_default_dims_capped_at_18(self, rng):
        spec = GridSpec(31.5, 19.5, 0.045, 40, 40)
        img = GridImage(spec, rng.normal(size=(40, 40)), np.ones((40, 40), bool))
        for _ in range(50):
            lat = float(rng.uniform(spec.lat_min, spec.lat_max))
            lon = float(rng.uniform(spec.lon_min, spec.lon_max))
            sub = crop(img, lat, lon)
            assert sub.spec.n_rows <= 18
            assert sub.spec.n_cols <= 18

    def test_geometry_oracle(self, rng):
        # cells selected = centers inside the closed square, per a direct scan
        spec = GridSpec(0.0, 0.0, 0.045, 20, 20)
        img = GridImage(spec, rng.normal(size=(20, 20)), np.ones((20, 20), bool))
        for _ in range(50):
            lat = float(rng.uniform(spec.lat_min, spec.lat_max))
            lon = float(rng.uniform(spec.lon_min, spec.lon_max))
            h = float(rng.uniform(0.03, 0.3))
            sub = crop(img, lat, lon, h)
            rows = [r for r in range(20)
                    if abs(spec.lat_min + (r + 0.5) * 0.045 - lat) <= h]
            cols = [c for c in range(20)
                    if abs(spec.lon_min + (c + 0.5) * 0.045 - lon) <= h]
            assert sub.spec.n_rows == len(rows)
            assert sub.spec.n_cols == len(cols)
            assert sub.spec.lat_min == pytest.approx(
                spec.lat_min + rows[0] * 0.045)

    def test_half_cell_extent_alignment(self):
        spec = GridSpec(0.0, 0.0, 1.0, 10, 10)
        img = GridImage(spec, np.zeros((10, 10)), np.ones((10, 10), bool))
        # centered on a cell center: only that center falls in the square
        sub = crop(img, 4.5, 4.5, 0.5)
        assert (sub.spec.n_rows, sub.spec.n_cols) == (1, 1)
        # centered on a cell corner: the square touches both neighbor centers
        sub = crop(img, 4.0, 4.0, 0.5)
        assert (sub.spec.n_rows, sub.spec.n_cols) == (2, 2)

    def test_identity_crop(self, rng):
        img = random_image(rng)
        full = crop(img, (img.spec.lat_min + img.spec.lat_max) / 2,
                    (img.spec.lon_min + img.spec.lon_max) / 2,
                    half_extent=10.0)
        assert full.spec == img.spec
        np.testing.assert_array_equal(full.valid, img.valid)
        np.testing.assert_array_equal(full.values[full.valid],
                                      img.values[img.valid])

    def test_center_out_of_bounds(self, rng):
        img = random_image(rng)
        with pytest.raises(ValueError, match="center out of bounds"):
            crop(img, img.spec.lat_max + 1.0, img.spec.lon_min)

    def test_regrid_crop_commutes(self, rng):
        spec = GridSpec(31.5, 19.5, 0.045, 20, 20)
        samples = make_samples(rng, 800, spec)
        clat, clon = 31.95, 19.95
        h = 0.3
        a = crop(regrid(samples, spec), clat, clon, h)
        sub_spec = a.spec
        inside = [s for s in samples
                  if sub_spec.lat_min <= s.lat < sub_spec.lat_max
                  and sub_spec.lon_min <= s.lon < sub_spec.lon_max]
        b = regrid(inside, sub_spec)
        np.testing.assert_array_equal(a.valid, b.valid)
        np.testing.assert_allclose(a.values[a.valid], b.values[b.valid],
                                   rtol=1e-12)


class TestGridCsv:
    def test_round_trip_bytes(self, rng):
        img = random_image(rng)
        text = grid_to_csv(img)
        again = grid_to_csv(parse_grid_csv(text))
        assert text == again

    def test_invalid_cells_nan(self, rng):
        img = random_image(rng, invalid_fraction=0.5)
        back = parse_grid_csv(grid_to_csv(img))
        np.testing.assert_array_equal(back.valid, img.valid)
        np.testing.assert_array_equal(back.values[back.valid],
                                      img.values[img.valid])

    def test_samples_round_trip(self, rng):
        spec = GridSpec(31.5, 19.5, 0.045, 5, 5)
        samples = make_samples(rng, 40, spec)
        text = samples_to_csv(samples)
        assert samples_to_csv(parse_samples_csv(text)) == text
