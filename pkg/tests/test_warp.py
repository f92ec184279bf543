import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from deblur_forge.image import sample_bicubic
from deblur_forge.optim import check_gradient
from deblur_forge.synthetic import random_warp, smooth_random_image
from deblur_forge.warp import (
    WarpMatrix,
    _warping_objective,
    degree_sweep,
    fit_warp,
    grid_mapping_error,
    n_features,
    normalize_coords,
    poly_features,
    warp_image,
    warping_loss,
)


@pytest.fixture(scope="module")
def smooth64():
    return smooth_random_image((64, 64), 3.0, seed=7)


class TestFeatures:
    def test_examples(self):
        np.testing.assert_array_equal(poly_features(0.0, 0.0, 3), [1, 0, 0, 0, 0, 0, 0, 0, 0, 0])
        np.testing.assert_array_equal(poly_features(1.0, 1.0, 3), np.ones(10))
        np.testing.assert_array_equal(poly_features(2.0, 3.0, 2), [1, 2, 3, 4, 6, 9])

    @pytest.mark.parametrize("d", range(1, 7))
    def test_length(self, d):
        assert poly_features(0.3, -0.2, d).shape == (n_features(d),) == ((d + 1) * (d + 2) // 2,)

    def test_vectorized_shape(self):
        assert poly_features(np.zeros((4, 5)), np.zeros((4, 5)), 3).shape == (4, 5, 10)

    def test_normalized_corners(self):
        i_n, j_n = normalize_coords(np.array([0, 9]), np.array([0, 19]), (10, 20))
        np.testing.assert_allclose(i_n, [-1, 1])
        np.testing.assert_allclose(j_n, [-1, 1])


class TestWarpMatrix:
    def test_identity_maps_pixels_to_themselves(self):
        ii, jj = np.meshgrid(np.arange(7.0), np.arange(5.0), indexing="ij")
        y, x = WarpMatrix.identity(4).map_pixels(ii, jj, (7, 5))
        np.testing.assert_allclose(y, ii, atol=1e-14)
        np.testing.assert_allclose(x, jj, atol=1e-14)

    def test_with_degree_keeps_mapping(self):
        w = random_warp(2, 0.05, seed=3)
        hi = w.with_degree(4)
        pts = np.linspace(-1, 1, 9)
        for a, b in zip(w.map_normalized(pts, pts[::-1]), hi.map_normalized(pts, pts[::-1])):
            np.testing.assert_allclose(a, b, atol=1e-15)
        with pytest.raises(ValueError):
            hi.with_degree(2)

    def test_validation(self):
        with pytest.raises(ValueError, match="2x10"):
            WarpMatrix(np.zeros((2, 6)), 3)
        with pytest.raises(ValueError):
            WarpMatrix(np.full((2, 3), np.nan), 1)

    def test_file_roundtrip(self, tmp_path):
        w = random_warp(3, 0.05, seed=1)
        w.save(tmp_path / "w.txt")
        assert (tmp_path / "w.txt").read_text().splitlines()[0] == "degree 3"
        back = WarpMatrix.load(tmp_path / "w.txt")
        assert back.degree == 3
        np.testing.assert_array_equal(back.coeffs, w.coeffs)

    @pytest.mark.parametrize("text", ["degree 3\n1 2\n", "deg 1\n0 1 0\n0 0 1\n", "degree 1\n0 1 x\n0 0 1\n"])
    def test_bad_files(self, tmp_path, text):
        (tmp_path / "w.txt").write_text(text)
        with pytest.raises(ValueError):
            WarpMatrix.load(tmp_path / "w.txt")


class TestWarpImage:
    def test_identity_is_exact(self, smooth64):
        out = warp_image(smooth64, WarpMatrix.identity(3))
        np.testing.assert_allclose(out[2:-2, 2:-2], smooth64[2:-2, 2:-2], atol=1e-12)

    def test_translation_on_ramp(self):
        m, n = 20, 30
        ramp = np.tile(np.arange(float(n)), (m, 1))
        c = WarpMatrix.identity(1).coeffs.copy()
        c[1, 0] = 5 * 2.0 / (n - 1)  # +5 px along columns in normalised units
        out = warp_image(ramp, WarpMatrix(c, 1))
        np.testing.assert_allclose(out[:, 2 : n - 7], ramp[:, 7 : n - 2], atol=1e-9)

    def test_matches_per_pixel_loop(self, smooth64):
        img = smooth64[:20, :24]
        c = WarpMatrix.identity(1).coeffs.copy()
        c += np.array([[0.02, 0.97, 0.05], [-0.03, -0.04, 1.02]])
        w = WarpMatrix(c, 1)
        out = warp_image(img, w)
        m, n = img.shape
        for i in range(m):
            for j in range(n):
                i_n, j_n = 2 * i / (m - 1) - 1, 2 * j / (n - 1) - 1
                y = (c[0, 0] + c[0, 1] * i_n + c[0, 2] * j_n + 1) * (m - 1) / 2
                x = (c[1, 0] + c[1, 1] * i_n + c[1, 2] * j_n + 1) * (n - 1) / 2
                assert out[i, j] == pytest.approx(sample_bicubic(img, y, x), abs=1e-13)


class TestWarpingLoss:
    def test_perfect_alignment(self, smooth64):
        loss, grad = warping_loss(WarpMatrix.identity(3), smooth64, smooth64)
        assert loss < 1e-24
        assert np.linalg.norm(grad) < 1e-10

    def test_constants_give_zero(self):
        w = random_warp(3, 0.05, seed=2)
        loss, _ = warping_loss(w, np.full((16, 16), 0.2), np.full((16, 16), 0.9))
        assert loss == pytest.approx(0.0, abs=1e-28)

    @given(st.floats(-2, 2), st.integers(0, 1000))
    def test_offset_invariance(self, c, seed):
        rng = np.random.default_rng(seed)
        b, s = rng.random((12, 12)), rng.random((12, 12))
        w = random_warp(2, 0.05, seed=seed)
        base = warping_loss(w, b, s)[0]
        assert warping_loss(w, b + c, s)[0] == pytest.approx(base, abs=1e-12)
        assert warping_loss(w, b, s - c)[0] == pytest.approx(base, abs=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="differ"):
            warping_loss(WarpMatrix.identity(), np.zeros((8, 8)), np.zeros((8, 9)))

    @pytest.mark.parametrize("seed", range(5))
    def test_gradient_finite_differences(self, smooth64, seed):
        sharp = warp_image(smooth64, random_warp(3, 0.03, seed=100 + seed))
        problem = _warping_objective(smooth64, sharp, 3)
        w = random_warp(3, 0.02, seed=seed)
        assert check_gradient(problem, w.flat(), 1e-5) < 1e-4


class TestFit:
    def test_identical_images_give_identity(self, smooth64):
        w, rep = fit_warp(smooth64, smooth64, 3)
        mean_err, _ = grid_mapping_error(w, WarpMatrix.identity(3), smooth64.shape)
        assert mean_err < 0.05

    def test_recovers_known_warp(self):
        base = smooth_random_image((128, 128), 5.0, seed=11)
        true = random_warp(3, 0.03, seed=4)
        sharp = warp_image(base, true)
        w, rep = fit_warp(base, sharp, 3)
        assert rep.final_loss <= rep.loss_history[0]
        mean_err, _ = grid_mapping_error(w, true, sharp.shape)
        assert mean_err < 0.1

    def test_lower_degree_init_is_lifted(self, smooth64):
        sharp = warp_image(smooth64, random_warp(2, 0.02, seed=9))
        init = random_warp(1, 0.0, seed=0)
        w, rep = fit_warp(smooth64, sharp, 3, init=init)
        assert w.degree == 3
        assert rep.final_loss <= warping_loss(init.with_degree(3), smooth64, sharp)[0]

    def test_degree_sweep_monotone(self, smooth64):
        sharp = warp_image(smooth64, random_warp(5, 0.02, seed=5))
        losses = [loss for _, loss, _ in degree_sweep(smooth64, sharp, range(1, 6))]
        assert all(b <= a for a, b in zip(losses, losses[1:]))
        assert losses[-1] < losses[0]


def test_grid_error_of_translation():
    a = WarpMatrix.identity(1)
    c = a.coeffs.copy()
    c[0, 0] = 2 * 0.5 / 99  # half a pixel down on a 100-row image
    mean_err, max_err = grid_mapping_error(WarpMatrix(c, 1), a, (100, 50))
    assert mean_err == pytest.approx(0.5)
    assert max_err == pytest.approx(0.5)
