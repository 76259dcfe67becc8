import numpy as np
import pytest

from femurseg.errors import (BadParam, DimMismatch, NoMarkers, NotBinary,
                             OutOfBounds)
from femurseg.image import HU, UNIT, ImageBuffer, from_mask
from femurseg.regions import (Blob, BlobParams, blob_detect,
                              connected_components, find_contours, flood_fill,
                              markers_from_seeds, mser, watershed)
from oracles import bfs_label, minimax_assignment, random_blob_mask


def binary(mask):
    return from_mask(np.asarray(mask, dtype=bool))


def unit(arr):
    return ImageBuffer(np.asarray(arr, dtype=np.uint8), UNIT)


class TestConnectedComponents:
    def test_two_separated_blobs(self):
        m = np.zeros((8, 8), dtype=bool)
        m[1:3, 1:3] = True
        m[5:7, 5:7] = True
        lm = connected_components(binary(m), 8)
        assert lm.count == 2
        assert sorted(s.area for s in lm.stats) == [4, 4]

    def test_diagonal_touch_connectivity(self):
        m = np.zeros((4, 4), dtype=bool)
        m[1, 1] = m[2, 2] = True
        assert connected_components(binary(m), 4).count == 2
        assert connected_components(binary(m), 8).count == 1

    def test_empty_mask(self):
        lm = connected_components(binary(np.zeros((4, 4), dtype=bool)), 8)
        assert lm.count == 0
        assert lm.stats == ()

    @pytest.mark.parametrize("connectivity", [4, 8])
    def test_matches_bfs_oracle_200_random(self, connectivity):
        rng = np.random.RandomState(20)
        for _ in range(200):
            m = rng.rand(16, 16) < rng.choice([0.3, 0.5, 0.7])
            lm = connected_components(binary(m), connectivity)
            ref_labels, ref_k = bfs_label(m, connectivity)
            assert lm.count == ref_k
            # both number 1..K by raster order of first pixel, so label maps
            # must be identical, not merely isomorphic
            assert np.array_equal(lm.labels, ref_labels)

    def test_stats_recomputable(self):
        rng = np.random.RandomState(21)
        m = random_blob_mask(rng, (20, 20))
        lm = connected_components(binary(m), 8)
        for s in lm.stats:
            ys, xs = np.nonzero(lm.labels == s.label)
            assert s.area == len(ys)
            assert s.bbox == (xs.min(), ys.min(), xs.max(), ys.max())
            assert s.centroid == pytest.approx((xs.mean(), ys.mean()))

    def test_rejects_non_binary(self):
        with pytest.raises(NotBinary):
            connected_components(unit(np.zeros((4, 4))), 8)


class TestFloodFill:
    def test_fills_closed_rectangle_interior(self):
        img = np.zeros((10, 10), dtype=np.uint8)
        img[2, 2:8] = img[7, 2:8] = 255
        img[2:8, 2] = img[2:8, 7] = 255
        out = flood_fill(unit(img), (4, 4), 200, tolerance=0)
        assert (out.data[3:7, 3:7] == 200).all()
        assert (out.data[2, 2:8] == 255).all()   # outline untouched
        assert out.data[0, 0] == 0               # exterior untouched

    def test_seed_at_new_value_is_noop_success(self):
        img = np.full((5, 5), 9, dtype=np.uint8)
        out = flood_fill(unit(img), (2, 2), 9, tolerance=0)
        assert np.array_equal(out.data, img)

    def test_out_of_bounds_seed(self):
        with pytest.raises(OutOfBounds):
            flood_fill(unit(np.zeros((5, 5))), (-1, 0), 1)

    def test_never_touches_outside_region(self):
        rng = np.random.RandomState(22)
        for _ in range(20):
            img = (rng.rand(12, 12) * 4).astype(np.uint8) * 60
            x, y = rng.randint(12), rng.randint(12)
            tol = float(rng.choice([0, 60]))
            out = flood_fill(unit(img), (x, y), 250, tol)
            changed = out.data != img
            # changed pixels form one 4-connected region containing the seed
            if changed.any():
                labels, k = bfs_label(changed, 4)
                assert k == 1
                assert changed[y, x] or img[y, x] == 250


class TestFindContours:
    def test_filled_square(self):
        m = np.zeros((14, 14), dtype=bool)
        m[2:12, 2:12] = True
        contours = find_contours(binary(m))
        assert len(contours) == 1
        assert not contours[0].is_hole
        assert 81 <= contours[0].area <= 100

    def test_square_with_hole_hierarchy(self):
        m = np.zeros((14, 14), dtype=bool)
        m[2:12, 2:12] = True
        m[5:9, 5:9] = False
        contours = find_contours(binary(m))
        assert len(contours) == 2
        outer, hole = contours
        assert not outer.is_hole and hole.is_hole
        assert hole.parent == 0
        assert outer.area > hole.area

    def test_empty_mask(self):
        assert find_contours(binary(np.zeros((5, 5), dtype=bool))) == []

    def test_sorted_by_area_descending(self):
        m = np.zeros((20, 20), dtype=bool)
        m[1:4, 1:4] = True
        m[6:16, 6:16] = True
        contours = find_contours(binary(m))
        areas = [c.area for c in contours]
        assert areas == sorted(areas, reverse=True)

    def test_rasterize_recovers_components(self):
        rng = np.random.RandomState(23)
        for _ in range(25):
            m = random_blob_mask(rng, (24, 24), n_blobs=2, min_r=2, max_r=5)
            contours = find_contours(binary(m))
            recovered = np.zeros((24, 24), dtype=bool)
            for c in contours:
                if c.is_hole:
                    continue
                recovered |= c.to_mask((24, 24))
            perimeter_slack = sum(len(c.points) for c in contours)
            mismatch = int((recovered ^ m).sum())
            assert mismatch <= perimeter_slack

    def test_consecutive_points_8_adjacent(self):
        rng = np.random.RandomState(24)
        m = random_blob_mask(rng, (20, 20), n_blobs=1, min_r=3, max_r=5)
        for c in find_contours(binary(m)):
            pts = c.points
            diffs = np.abs(np.roll(pts, -1, axis=0) - pts)
            assert diffs.max() <= 1


class TestBlobDetect:
    def test_disk_is_one_round_blob(self):
        yy, xx = np.mgrid[:32, :32]
        img = np.where((yy - 15) ** 2 + (xx - 16) ** 2 <= 100, 200, 10).astype(np.uint8)
        blobs = blob_detect(unit(img), BlobParams(min_threshold=50,
                                                  max_threshold=180,
                                                  threshold_step=20,
                                                  min_repeatability=2,
                                                  min_dist=8))
        assert len(blobs) == 1
        b = blobs[0]
        assert abs(b.center[0] - 16) <= 1 and abs(b.center[1] - 15) <= 1
        assert b.circularity >= 0.9
        assert b.convexity >= 0.9
        assert b.inertia_ratio >= 0.9

    def test_square_circularity_near_pi_over_4(self):
        img = np.full((24, 24), 5, dtype=np.uint8)
        img[6:18, 6:18] = 220
        blobs = blob_detect(unit(img), BlobParams(min_threshold=50,
                                                  max_threshold=200,
                                                  threshold_step=30))
        assert len(blobs) == 1
        assert blobs[0].circularity == pytest.approx(np.pi / 4, abs=0.02)

    def test_circularity_filter_rejects_square(self):
        img = np.full((24, 24), 5, dtype=np.uint8)
        img[6:18, 6:18] = 220
        blobs = blob_detect(unit(img), BlobParams(min_threshold=50,
                                                  max_threshold=200,
                                                  threshold_step=30,
                                                  circularity_range=(0.9, 1.1)))
        assert blobs == []

    def test_blank_image_empty(self):
        assert blob_detect(unit(np.zeros((16, 16))), BlobParams()) == []

    def test_translation_invariance(self):
        def disk_img(cx, cy):
            yy, xx = np.mgrid[:40, :40]
            return np.where((yy - cy) ** 2 + (xx - cx) ** 2 <= 64, 200, 0).astype(np.uint8)

        params = BlobParams(min_threshold=50, max_threshold=180, threshold_step=20)
        a = blob_detect(unit(disk_img(15, 20)), params)[0]
        b = blob_detect(unit(disk_img(21, 14)), params)[0]
        assert abs((b.center[0] - a.center[0]) - 6) <= 1
        assert abs((b.center[1] - a.center[1]) + 6) <= 1

    def test_param_validation(self):
        with pytest.raises(BadParam):
            BlobParams(min_threshold=100, max_threshold=50)
        with pytest.raises(BadParam):
            BlobParams(threshold_step=0)


class TestMser:
    def test_constant_image_empty(self):
        assert mser(unit(np.full((16, 16), 128))) == []

    def test_bright_square_recovered(self):
        img = np.zeros((30, 30), dtype=np.uint8)
        img[5:25, 5:25] = 200
        regions = [r for r in mser(unit(img), delta=5, min_area=20,
                                   max_area=600, max_variation=0.25)
                   if r.polarity == "bright"]
        assert len(regions) == 1
        expected = {(x, y) for y in range(5, 25) for x in range(5, 25)}
        got = regions[0].point_set()
        assert len(got ^ expected) <= len(expected) * 0.02  # within 1px boundary

    def test_nested_squares(self):
        img = np.zeros((40, 40), dtype=np.uint8)
        img[5:35, 5:35] = 100
        img[15:25, 15:25] = 200
        regions = [r for r in mser(unit(img), delta=5, min_area=9,
                                   max_area=1200, max_variation=0.25)
                   if r.polarity == "bright"]
        assert len(regions) == 2
        by_size = sorted(regions, key=lambda r: len(r.points))
        inner, outer = by_size
        assert len(inner.points) == 100
        assert len(outer.points) == 900
        assert inner.point_set() <= outer.point_set()

    def test_area_filters_apply(self):
        img = np.zeros((30, 30), dtype=np.uint8)
        img[5:25, 5:25] = 200
        regions = mser(unit(img), delta=5, min_area=20, max_area=300,
                       max_variation=0.25)
        assert all(20 <= len(r.points) <= 300 for r in regions)

    def test_param_validation(self):
        with pytest.raises(BadParam):
            mser(unit(np.zeros((8, 8))), delta=0)
        with pytest.raises(BadParam):
            mser(ImageBuffer(np.zeros((8, 8), dtype=np.float32), HU))


class TestWatershed:
    def test_single_marker_claims_everything(self):
        relief = ImageBuffer(np.random.RandomState(25).rand(8, 8).astype(np.float32), HU)
        markers = markers_from_seeds((8, 8), [(3, 3)])
        lm = watershed(relief, markers)
        assert (lm.labels == 1).all()

    def test_1x9_hand_flood(self):
        relief = ImageBuffer(np.array([[0, 0, 0, 5, 9, 5, 0, 0, 0]],
                                      dtype=np.float32), HU)
        markers = markers_from_seeds((1, 9), [(1, 0), (7, 0)])
        lm = watershed(relief, markers)
        assert lm.labels[0].tolist() == [1, 1, 1, 1, 0, 2, 2, 2, 2]

    def test_double_well_boundary_on_ridge(self):
        # two basins with a vertical ridge at column 8
        yy, xx = np.mgrid[:16, :16]
        relief_arr = (10.0 - np.abs(xx - 8) * 1.2
                      + 0.01 * np.abs(yy - 8)).astype(np.float32)
        relief = ImageBuffer(relief_arr, HU)
        markers = markers_from_seeds((16, 16), [(2, 8), (14, 8)])
        lm = watershed(relief, markers)
        # every pixel labeled or on the line
        assert set(np.unique(lm.labels)) <= {0, 1, 2}
        left = lm.labels[:, :7]
        right = lm.labels[:, 10:]
        assert (left == 1).all()
        assert (right == 2).all()
        # line/label boundary within 1 px of the crest column
        change = np.nonzero(np.diff((lm.labels == 1).astype(int), axis=1))[1]
        assert np.all(np.abs(change - 8) <= 1)
        # agrees with the minimax-path reference wherever that is exclusive
        ref = minimax_assignment(relief_arr, markers.labels)
        decided = ref > 0
        agree = lm.labels[decided] == ref[decided]
        assert agree.mean() >= 0.95

    def test_regions_connected_and_contain_markers(self):
        rng = np.random.RandomState(26)
        for _ in range(10):
            relief = ImageBuffer((rng.rand(12, 12) * 20).astype(np.float32), HU)
            seeds = [(int(rng.randint(12)), int(rng.randint(12))) for _ in range(3)]
            if len({s for s in seeds}) < 3:
                continue
            markers = markers_from_seeds((12, 12), seeds)
            lm = watershed(relief, markers)
            assert set(np.unique(lm.labels)) <= set(range(markers.count + 1))
            for label in range(1, markers.count + 1):
                region = lm.labels == label
                if not region.any():
                    continue
                _, k = bfs_label(region, 4)
                assert k == 1
            for i, (x, y) in enumerate(seeds):
                assert lm.labels[y, x] == i + 1

    def test_deterministic(self):
        rng = np.random.RandomState(27)
        relief = ImageBuffer((rng.rand(16, 16) * 5).astype(np.float32), HU)
        markers = markers_from_seeds((16, 16), [(2, 2), (13, 13), (2, 13)])
        a = watershed(relief, markers)
        b = watershed(relief, markers)
        assert np.array_equal(a.labels, b.labels)

    def test_errors(self):
        relief = ImageBuffer(np.zeros((4, 4), dtype=np.float32), HU)
        with pytest.raises(NoMarkers):
            watershed(relief, markers_from_seeds((4, 4), []))
        with pytest.raises(DimMismatch):
            watershed(relief, markers_from_seeds((5, 5), [(1, 1)]))
