import math

import numpy as np
import pytest

from shiftscan.errors import ConfigError, DataError, EmptyImageError, NoRingError
from shiftscan.preprocess import (
    Baseline,
    DiffractionConfig,
    Frame,
    angular_signal,
    average_centers,
    band_threshold,
    bands_from_histogram,
    diffraction_observations,
    find_gaps,
    fit_diffraction_geometry,
    hough_circle_center,
    intensity_histogram,
    largest_ring_radius,
    load_baseline,
    load_frames,
    read_pgm,
    read_raw_frames,
    realspace_observations,
    save_baseline,
    standardize_apply,
    standardize_fit,
    write_pgm,
    write_raw_frames,
)

# ---------------------------------------------------------------------------
# oracles and fixture builders


def naive_mean_std(stack):
    """Literal two-pass per-element mean and ddof=1 std."""
    m = stack.shape[0]
    mean = np.zeros(stack.shape[1:])
    for f in stack:
        mean += f
    mean /= m
    var = np.zeros_like(mean)
    for f in stack:
        var += (f - mean) ** 2
    return mean, np.sqrt(var / (m - 1))


def naive_histogram(frame, bins):
    counts = np.zeros(bins, dtype=np.int64)
    for v in frame.pixels.ravel():
        j = int(math.floor(v * bins))
        counts[min(max(j, 0), bins - 1)] += 1
    return counts


def draw_annulus(pixels, center, r_lo, r_hi, value):
    """Set value on pixels with center distance in [r_lo, r_hi)."""
    h, w = pixels.shape
    yy, xx = np.indices((h, w))
    dist = np.hypot(xx - center[0], yy - center[1])
    pixels[(dist >= r_lo) & (dist < r_hi)] = value


def circle_mask(shape, center, r):
    yy, xx = np.indices(shape)
    return np.abs(np.hypot(xx - center[0], yy - center[1]) - r) < 0.5


class TestStandardize:
    def test_matches_naive_oracle(self, rng):
        stack = rng.uniform(size=(6, 8, 8))
        base = standardize_fit([Frame(pixels=f) for f in stack])
        mean, std = naive_mean_std(stack)
        np.testing.assert_allclose(base.mean, mean, atol=1e-12)
        np.testing.assert_allclose(base.std, std, atol=1e-12)
        assert not base.mask.any()
        assert base.training_frames == 6

    def test_two_point_sample(self):
        base = standardize_fit([Frame(pixels=np.zeros((2, 2))), Frame(pixels=np.ones((2, 2)))])
        np.testing.assert_allclose(base.mean, 0.5)
        np.testing.assert_allclose(base.std, math.sqrt(0.5))

    def test_constant_pixels_masked_and_zeroed(self):
        frames = [Frame(pixels=np.full((3, 3), 0.4)) for _ in range(5)]
        base = standardize_fit(frames)
        assert base.mask.all()
        np.testing.assert_array_equal(base.std, np.full((3, 3), 1e-6))
        z = standardize_apply(base, Frame(pixels=np.full((3, 3), 0.9)))
        np.testing.assert_array_equal(z, np.zeros(9))

    def test_apply_is_zscore_row_major(self, rng):
        stack = rng.uniform(size=(4, 3, 5))
        base = standardize_fit(stack)
        frame = Frame(pixels=rng.uniform(size=(3, 5)))
        z = standardize_apply(base, frame)
        want = ((frame.pixels - base.mean) / base.std).ravel()
        np.testing.assert_array_equal(z, want)
        assert z.shape == (15,)

    def test_training_frames_reapplied_have_unit_stats(self, rng):
        stack = rng.uniform(size=(5, 6, 6))
        base = standardize_fit(stack)
        Z = np.stack([standardize_apply(base, f).reshape(6, 6) for f in stack])
        np.testing.assert_allclose(Z.mean(axis=0), 0.0, atol=1e-9)
        np.testing.assert_allclose(Z.std(axis=0, ddof=1), 1.0, atol=1e-9)

    def test_validation(self):
        with pytest.raises(DataError):
            standardize_fit([Frame(pixels=np.zeros((2, 2)))])
        base = standardize_fit([Frame(pixels=np.zeros((2, 2))), Frame(pixels=np.ones((2, 2)))])
        with pytest.raises(DataError):
            standardize_apply(base, Frame(pixels=np.zeros((3, 3))))

    def test_frame_validation(self):
        with pytest.raises(DataError):
            Frame(pixels=np.array([[1.5]]))
        with pytest.raises(DataError):
            Frame(pixels=np.array([[-0.1]]))
        with pytest.raises(DataError):
            Frame(pixels=np.array([[np.nan]]))
        with pytest.raises(DataError):
            Frame(pixels=np.zeros(4))


class TestHistogramAndBands:
    def test_matches_naive_oracle(self, rng):
        frame = Frame(pixels=rng.uniform(size=(17, 13)))
        for bins in (2, 10, 256):
            np.testing.assert_array_equal(
                intensity_histogram(frame, bins), naive_histogram(frame, bins)
            )

    def test_counts_sum_to_pixel_count(self, rng):
        frame = Frame(pixels=rng.uniform(size=(9, 9)))
        assert intensity_histogram(frame, 64).sum() == 81

    def test_extreme_values(self):
        frame = Frame(pixels=np.array([[0.0, 1.0]]))
        counts = intensity_histogram(frame, 10)
        assert counts[0] == 1 and counts[9] == 1  # 1.0 closes the last bin

    def test_two_level_frame(self):
        frame = Frame(pixels=np.array([[0.1, 0.9], [0.1, 0.9]]))
        counts = intensity_histogram(frame, 10)
        assert counts[1] == 2 and counts[9] == 2
        assert counts.sum() == 4

    def test_find_gaps_read_off(self):
        assert find_gaps(np.array([5, 0, 0, 0, 7]), min_width=2) == [(0.2, 0.8)]
        assert find_gaps(np.array([5, 0, 0, 0, 7]), min_width=4) == []
        assert find_gaps(np.array([1, 2, 3]), min_width=1) == []

    def test_find_gaps_at_edges(self):
        gaps = find_gaps(np.array([0, 0, 5, 0, 0, 0]), min_width=2)
        assert gaps == [(0.0, 2 / 6), (3 / 6, 1.0)]

    def test_gap_properties(self, rng):
        counts = rng.integers(0, 3, size=100)
        gaps = find_gaps(counts, min_width=2)
        for lo, hi in gaps:
            assert counts[int(lo * 100) : int(hi * 100)].sum() == 0
        flat = [e for g in gaps for e in g]
        assert flat == sorted(flat)  # disjoint and increasing

    def test_bands_complement_gaps(self):
        counts = np.array([5, 0, 0, 0, 7])
        assert bands_from_histogram(counts, min_width=2) == [(0.0, 0.2), (0.8, 1.0)]
        # zero-mass leading segment is dropped
        counts = np.array([0, 0, 5, 5, 0, 0])
        assert bands_from_histogram(counts, min_width=2) == [(2 / 6, 4 / 6)]

    def test_band_threshold_half_open(self):
        frame = Frame(pixels=np.array([[0.2, 0.5, 0.8, 1.0]]))
        np.testing.assert_array_equal(
            band_threshold(frame, (0.2, 0.8)), [[True, True, False, False]]
        )
        np.testing.assert_array_equal(
            band_threshold(frame, (0.8, 1.0)), [[False, False, True, True]]
        )
        with pytest.raises(ConfigError):
            band_threshold(frame, (0.5, 0.5))
        with pytest.raises(ConfigError):
            band_threshold(frame, (-0.1, 0.5))


class TestHough:
    def test_recovers_clean_circle(self, kernel_backend):
        mask = circle_mask((70, 80), (40, 30), 15)
        res = hough_circle_center(mask, 5, 30, backend=kernel_backend)
        assert abs(res.center_x - 40) <= 1 and abs(res.center_y - 30) <= 1
        assert abs(res.radius - 15) <= 1
        assert res.votes > 0
        assert res.center == (res.center_x, res.center_y)

    def test_concentric_bands_agree_on_center(self, kernel_backend):
        inner = circle_mask((128, 128), (64, 64), 18)
        outer = circle_mask((128, 128), (64, 64), 40)
        a = hough_circle_center(inner, 5, 60, backend=kernel_backend)
        b = hough_circle_center(outer, 5, 60, backend=kernel_backend)
        assert abs(a.center_x - b.center_x) <= 1
        assert abs(a.center_y - b.center_y) <= 1
        assert abs(a.radius - 18) <= 1 and abs(b.radius - 40) <= 1

    def test_single_pixel_ties_to_smallest_radius(self, kernel_backend):
        mask = np.zeros((11, 11), dtype=bool)
        mask[5, 5] = True
        res = hough_circle_center(mask, 2, 4, backend=kernel_backend)
        assert res.votes == 1
        assert res.radius == 2  # all accumulator cells tie at one vote

    def test_radius_step(self, kernel_backend):
        mask = circle_mask((128, 128), (64, 64), 31)
        res = hough_circle_center(mask, 5, 60, step=2, backend=kernel_backend)
        assert res.radius in (29, 31, 33)  # grid 5,7,...; true radius off-grid by <= 1 step
        assert abs(res.center_x - 64) <= 1 and abs(res.center_y - 64) <= 1

    def test_errors(self):
        with pytest.raises(EmptyImageError):
            hough_circle_center(np.zeros((20, 20), dtype=bool), 2, 5)
        mask = np.ones((20, 20), dtype=bool)
        with pytest.raises(ConfigError):
            hough_circle_center(mask, 0, 5)
        with pytest.raises(ConfigError):
            hough_circle_center(mask, 5, 2)
        with pytest.raises(ConfigError):
            hough_circle_center(mask, 2, 11)  # > min(w, h)/2
        with pytest.raises(ConfigError):
            hough_circle_center(mask, 2, 5, step=0)

    def test_average_centers(self):
        assert average_centers([(3.0, 4.0)]) == (3.0, 4.0)
        assert average_centers([(0, 0), (2, 2)]) == (1.0, 1.0)
        with pytest.raises(ConfigError):
            average_centers([])


class TestRingRadius:
    @staticmethod
    def ring_frame(shape, center, radii, value=0.9, background=0.1):
        pix = np.full(shape, background)
        for r in radii:
            draw_annulus(pix, center, r - 0.5, r + 0.5, value)
        return Frame(pixels=pix)

    def test_single_ring(self):
        frame = self.ring_frame((128, 128), (64, 64), [30])
        assert abs(largest_ring_radius(frame, (64, 64)) - 30) <= 1

    def test_outermost_of_two(self):
        frame = self.ring_frame((128, 128), (64, 64), [20, 40])
        assert abs(largest_ring_radius(frame, (64, 64)) - 40) <= 1

    def test_off_center_non_square(self):
        frame = self.ring_frame((100, 140), (50, 45), [25])
        assert abs(largest_ring_radius(frame, (50, 45)) - 25) <= 1

    def test_flat_frame_has_no_ring(self):
        with pytest.raises(NoRingError):
            largest_ring_radius(Frame(pixels=np.full((64, 64), 0.5)), (32, 32))

    def test_min_radius_excludes_inner_peak(self):
        frame = self.ring_frame((128, 128), (64, 64), [10])
        with pytest.raises(NoRingError):
            largest_ring_radius(frame, (64, 64), min_radius=15)

    def test_center_outside_frame_rejected(self):
        frame = self.ring_frame((64, 64), (32, 32), [10])
        with pytest.raises(ConfigError):
            largest_ring_radius(frame, (-5, 32))


def spot_frame(shape, center, radius, degree, base=0.2, half_width=2.0):
    """One max-intensity pixel whose angle (ccw from +x as displayed, nearest
    degree) equals `degree`, chosen by scanning the annulus with the stated
    convention rather than trusting a rounded cos/sin placement."""
    pix = np.full(shape, base)
    yy, xx = np.indices(shape)
    dist = np.hypot(xx - center[0], yy - center[1])
    ang = np.degrees(np.arctan2(-(yy - center[1]), xx - center[0]))
    bins = np.floor(ang + 0.5).astype(np.int64) % 360
    ys, xs = np.nonzero((np.abs(dist - radius) <= half_width) & (bins == degree))
    assert ys.size, f"annulus holds no pixel at degree {degree}"
    pix[ys[0], xs[0]] = 1.0
    return Frame(pixels=pix)


class TestAngularSignal:
    def test_constant_frame(self):
        sig = angular_signal(Frame(pixels=np.full((128, 128), 0.3)), (64, 64), 40.0)
        assert sig.values.shape == (360,)
        np.testing.assert_array_equal(sig.values, np.full(360, 0.3))
        assert sig.annulus_mean == pytest.approx(0.3)

    def test_no_degree_empty_at_probe_scale(self):
        sig = angular_signal(Frame(pixels=np.full((128, 128), 0.3)), (64, 64), 40.0, 2.0)
        assert not sig.missing.any()

    @pytest.mark.parametrize("degree", [0, 17, 90, 171, 213, 359])
    def test_bright_spot_argmax(self, degree):
        frame = spot_frame((129, 129), (64, 64), 40.0, degree)
        sig = angular_signal(frame, (64, 64), 40.0)
        assert int(np.argmax(sig.values)) == degree

    def test_cardinal_directions_by_hand(self):
        # pixels placed without any angle formula: +x axis is degree 0,
        # straight up as displayed (smaller row index) is degree 90
        pix = np.full((129, 129), 0.2)
        pix[64, 104] = 1.0  # 40 px along +x
        sig = angular_signal(Frame(pixels=pix), (64, 64), 40.0)
        assert int(np.argmax(sig.values)) == 0
        pix = np.full((129, 129), 0.2)
        pix[24, 64] = 1.0  # 40 px up
        sig = angular_signal(Frame(pixels=pix), (64, 64), 40.0)
        assert int(np.argmax(sig.values)) == 90

    def test_rot90_shifts_argmax_by_90(self):
        frame = spot_frame((129, 129), (64, 64), 40.0, 171)
        rot = Frame(pixels=np.rot90(frame.pixels).copy())
        sig = angular_signal(rot, (64, 64), 40.0)
        assert int(np.argmax(sig.values)) == (171 + 90) % 360

    def test_missing_degrees_take_annulus_mean(self):
        # half-width 0 at a small radius leaves many degrees without pixels
        pix = np.full((41, 41), 0.25)
        pix[20, 26] = 0.75  # degree 0 at radius 6
        sig = angular_signal(Frame(pixels=pix), (20, 20), 6.0, half_width=0.0)
        assert sig.missing.any()
        np.testing.assert_array_equal(sig.values[sig.missing], sig.annulus_mean)
        assert int(np.argmax(sig.values)) == 0

    def test_annulus_must_fit(self):
        frame = Frame(pixels=np.full((64, 64), 0.5))
        with pytest.raises(ConfigError):
            angular_signal(frame, (32, 32), 40.0)
        with pytest.raises(ConfigError):
            angular_signal(frame, (32, 32), 1.0, half_width=3.0)


def diffraction_fixture(shape=(128, 128), center=(64, 64)):
    """Radially banded beam: bright core, two stepped rings, dim surround.

    Every brightness level is an annulus around the common center, so each
    histogram band hands the Hough transform a centered circle family; the
    two-step ring profiles give the radial profile strict single-bin peaks
    at radii 28 and 44.
    """
    pix = np.full(shape, 0.05)
    draw_annulus(pix, center, 0, 8, 0.95)  # central beam
    draw_annulus(pix, center, 8, 26, 0.12)  # inner haze
    draw_annulus(pix, center, 26, 30, 0.65)  # ring 1 shoulder
    draw_annulus(pix, center, 27, 29, 0.72)  # ring 1 peak
    draw_annulus(pix, center, 30, 42, 0.12)  # haze again (same band as inner)
    draw_annulus(pix, center, 42, 46, 0.75)  # ring 2 shoulder
    draw_annulus(pix, center, 43, 45, 0.85)  # ring 2 peak = outermost
    return Frame(pixels=pix)


class TestDiffractionPipeline:
    def test_geometry_fit(self):
        geom = fit_diffraction_geometry(diffraction_fixture())
        assert abs(geom.center[0] - 64) <= 1
        assert abs(geom.center[1] - 64) <= 1
        assert abs(geom.ring_radius - 44) <= 1
        assert geom.probe_radius == geom.ring_radius + 3
        assert len(geom.band_fits) >= 3
        # bands bounded on both sides (rings, haze) pin the center exactly;
        # the dimmest band is unbounded toward the corners, so its Hough vote
        # sits on a plateau and may land a few pixels off — the average above
        # absorbs that
        for bf in geom.band_fits:
            if bf.band[0] > 0.1:
                assert abs(bf.fit.center_x - 64) <= 1
                assert abs(bf.fit.center_y - 64) <= 1

    def test_geometry_is_deterministic(self):
        a = fit_diffraction_geometry(diffraction_fixture())
        b = fit_diffraction_geometry(diffraction_fixture())
        assert a.to_dict() == b.to_dict()

    def test_observations_shape_and_determinism(self, rng):
        base = diffraction_fixture().pixels
        frames = []
        for _ in range(8):
            noisy = np.clip(base + rng.normal(scale=0.005, size=base.shape), 0.0, 1.0)
            frames.append(Frame(pixels=noisy))
        X1, geom1, base1 = diffraction_observations(frames)
        X2, geom2, base2 = diffraction_observations(frames)
        assert X1.shape == (3, 360)
        np.testing.assert_array_equal(X1, X2)
        assert geom1.to_dict() == geom2.to_dict()
        np.testing.assert_array_equal(base1.mean, base2.mean)

    def test_too_few_frames(self):
        with pytest.raises(DataError):
            diffraction_observations([diffraction_fixture()] * 3)

    def test_tiny_frame_fails_loud(self, rng):
        # 15 pixels: every brightness band falls under min_band_pixels,
        # so no circle can be fitted
        frames = [Frame(pixels=rng.uniform(size=(3, 5))) for _ in range(5)]
        with pytest.raises(DataError):
            diffraction_observations(frames)


class TestRealspacePipeline:
    def test_constant_training_zeros_out(self):
        frames = [Frame(pixels=np.full((4, 4), 0.5)) for _ in range(7)]
        X, baseline = realspace_observations(frames)
        assert X.shape == (2, 16)
        np.testing.assert_array_equal(X, np.zeros((2, 16)))
        assert baseline.mask.all()

    def test_rows_match_standardize_apply(self, rng):
        frames = [Frame(pixels=rng.uniform(size=(6, 5))) for _ in range(9)]
        X, baseline = realspace_observations(frames, training_frames=5)
        assert X.shape == (4, 30)
        for i, f in enumerate(frames[5:]):
            np.testing.assert_array_equal(X[i], standardize_apply(baseline, f))

    def test_no_post_training_frames(self, rng):
        frames = [Frame(pixels=rng.uniform(size=(3, 3))) for _ in range(5)]
        X, _ = realspace_observations(frames)
        assert X.shape == (0, 9)

    def test_too_few_frames(self):
        with pytest.raises(DataError):
            realspace_observations([Frame(pixels=np.zeros((2, 2)))] * 4)


class TestFrameIO:
    def test_pgm8_roundtrip(self, tmp_path, rng):
        # quantize to the 8-bit grid first so the roundtrip is exact
        q = np.round(rng.uniform(size=(12, 17)) * 255) / 255
        frame = Frame(pixels=q)
        write_pgm(tmp_path / "f.pgm", frame)
        back = read_pgm(tmp_path / "f.pgm")
        np.testing.assert_array_equal(back.pixels, frame.pixels)

    def test_pgm16_roundtrip_and_byte_layout(self, tmp_path):
        frame = Frame(pixels=np.array([[0.0, 1.0]]))
        write_pgm(tmp_path / "f.pgm", frame, maxval=65535)
        raw = (tmp_path / "f.pgm").read_bytes()
        assert raw == b"P5\n2 1\n65535\n" + b"\x00\x00\xff\xff"  # big-endian samples
        back = read_pgm(tmp_path / "f.pgm")
        np.testing.assert_array_equal(back.pixels, frame.pixels)

    def test_pgm_header_comments(self, tmp_path):
        (tmp_path / "c.pgm").write_bytes(b"P5\n# a comment\n2 2\n255\n" + bytes([0, 128, 255, 64]))
        frame = read_pgm(tmp_path / "c.pgm")
        np.testing.assert_allclose(
            frame.pixels, np.array([[0, 128], [255, 64]]) / 255
        )

    def test_pgm_malformed(self, tmp_path):
        p = tmp_path / "bad.pgm"
        p.write_bytes(b"P6\n2 2\n255\n" + bytes(4))
        with pytest.raises(DataError):
            read_pgm(p)
        p.write_bytes(b"P5\n2 2\n255\n" + bytes(3))  # short raster
        with pytest.raises(DataError):
            read_pgm(p)

    def test_raw_roundtrip(self, tmp_path, rng):
        frames = [Frame(pixels=rng.uniform(size=(5, 7)).astype(np.float32).astype(np.float64))
                  for _ in range(3)]
        write_raw_frames(tmp_path / "s.raw", frames)
        back = read_raw_frames(tmp_path / "s.raw")
        assert len(back) == 3
        for a, b in zip(frames, back):
            np.testing.assert_array_equal(a.pixels, b.pixels)

    def test_raw_header(self, tmp_path):
        write_raw_frames(tmp_path / "s.raw", [Frame(pixels=np.zeros((3, 4)))])
        assert (tmp_path / "s.raw").read_bytes().startswith(b"4 3 1\n")
        (tmp_path / "bad.raw").write_bytes(b"4 3 1\n" + bytes(10))
        with pytest.raises(DataError):
            read_raw_frames(tmp_path / "bad.raw")

    def test_baseline_roundtrip(self, tmp_path, rng):
        stack = rng.uniform(size=(5, 4, 4)).astype(np.float32).astype(np.float64)
        stack[:, 0, 0] = 0.25  # one constant pixel
        base = standardize_fit(stack)
        save_baseline(tmp_path / "b.raw", base)
        back = load_baseline(tmp_path / "b.raw")
        np.testing.assert_allclose(back.mean, base.mean, atol=1e-7)
        np.testing.assert_allclose(back.std, base.std, atol=1e-7)
        np.testing.assert_array_equal(back.mask, base.mask)
        assert back.mask[0, 0]
        assert back.training_frames is None

    def test_load_frames_directory_order(self, tmp_path):
        for name, v in [("b.pgm", 0.2), ("a.pgm", 0.1), ("c.pgm", 0.4)]:
            write_pgm(tmp_path / name, Frame(pixels=np.full((2, 2), v)))
        frames = load_frames(tmp_path)
        got = [round(float(f.pixels[0, 0]), 1) for f in frames]
        assert got == [0.1, 0.2, 0.4]  # lexicographic by name

    def test_load_frames_shape_drift(self, tmp_path):
        write_pgm(tmp_path / "a.pgm", Frame(pixels=np.zeros((2, 2))))
        write_pgm(tmp_path / "b.pgm", Frame(pixels=np.zeros((3, 3))))
        with pytest.raises(DataError):
            load_frames(tmp_path)

    def test_load_frames_missing(self, tmp_path):
        with pytest.raises(DataError):
            load_frames(tmp_path / "nope")
        with pytest.raises(DataError):
            load_frames(tmp_path)  # exists but holds no frames
