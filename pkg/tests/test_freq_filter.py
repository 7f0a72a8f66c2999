import numpy as np
import pytest

from freqsplat import testkit
from freqsplat.freq_filter import (
    FilterKind,
    Kernel,
    PaddingMode,
    bilateral_filter,
    box_filter_array,
    build_kernel,
    convolve,
    filter_image,
    gaussian_sigma_for,
    laplacian_variance,
)
from freqsplat.imaging import ImageBuffer
from freqsplat.suite import load_suite_image


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def rand_img(rng, h=12, w=12):
    return ImageBuffer(rng.uniform(0, 1, (h, w, 3)))


class TestBuildKernel:
    def test_mean(self):
        k = build_kernel(FilterKind.MEAN, 3)
        assert np.allclose(k.weights, 1 / 9) and k.size == 3 and k.radius == 1

    def test_identity(self):
        assert build_kernel("identity", 1).weights.tolist() == [[1.0]]
        assert build_kernel(FilterKind.MEAN, 1).weights.tolist() == [[1.0]]

    def test_gaussian_matches_formula(self):
        k = build_kernel(FilterKind.GAUSSIAN, 3)
        s = gaussian_sigma_for(3)
        u = np.array([-1, 0, 1])
        direct = np.exp(-(u[:, None] ** 2 + u[None, :] ** 2) / (2 * s * s))
        assert np.allclose(k.weights, direct / direct.sum(), atol=1e-15)

    @pytest.mark.parametrize("kind", ["mean", "gaussian"])
    @pytest.mark.parametrize("size", [1, 3, 5, 15, 31])
    def test_low_pass_normalized(self, kind, size):
        w = build_kernel(kind, size).weights
        assert w.shape == (size, size)
        assert abs(w.sum() - 1) < 1e-9 and (w >= 0).all()

    def test_sobel_pair_ignores_size(self):
        kx, ky = build_kernel(FilterKind.SOBEL, 7)
        assert kx.weights.shape == (3, 3) and np.array_equal(kx.weights.T, ky.weights)

    @pytest.mark.parametrize("size", [0, -3, 2, 4])
    def test_rejects_bad_size(self, size):
        with pytest.raises(ValueError):
            build_kernel(FilterKind.MEAN, size)

    def test_even_weights_rejected(self):
        with pytest.raises(ValueError):
            Kernel(np.ones((2, 2)))

    def test_parse(self):
        assert FilterKind.parse("Bilateral") is FilterKind.BILATERAL
        with pytest.raises(ValueError):
            FilterKind.parse("median")


class TestConvolve:
    def test_constant_image(self):
        img = ImageBuffer.constant(9, 7, (0.2, 0.5, 0.8))
        for kind in ("mean", "gaussian"):
            out = convolve(img, build_kernel(kind, 5))
            assert np.allclose(out.data, img.data, atol=1e-15)

    def test_impulse_mean(self):
        data = np.zeros((7, 7, 3))
        data[3, 3] = 1.0
        out = convolve(ImageBuffer(data), build_kernel("mean", 3), PaddingMode.EDGE)
        expect = np.zeros((7, 7, 3))
        expect[2:5, 2:5] = 1 / 9
        assert np.allclose(out.data, expect, atol=1e-15)
        assert np.allclose(out.data, testkit.naive_convolve(ImageBuffer(data), build_kernel("mean", 3)).data)

    def test_identity(self, rng):
        img = rand_img(rng)
        assert convolve(img, build_kernel("identity", 1)) == img

    def test_is_true_convolution(self):
        # an asymmetric kernel must be flipped: output at (i, j) takes F[i - u, j - v]
        data = np.zeros((5, 5, 3))
        data[2, 2] = 1.0
        w = np.zeros((3, 3))
        w[0, 2] = 1.0  # u = -1, v = +1
        out = convolve(ImageBuffer(data), Kernel(w), PaddingMode.ZERO)
        assert out.data[1, 3, 0] == 1.0 and out.data.sum() == 3.0

    @pytest.mark.parametrize("padding", list(PaddingMode))
    def test_matches_oracle(self, rng, padding):
        for size in (1, 3, 5, 9):
            img = rand_img(rng, 9, 11)
            k = build_kernel("gaussian", size)
            assert np.abs(convolve(img, k, padding).data - testkit.naive_convolve(img, k, padding).data).max() < 1e-12

    def test_kernel_larger_than_image(self, rng):
        with pytest.raises(ValueError):
            convolve(rand_img(rng, 4, 8), build_kernel("mean", 5))

    def test_linear(self, rng):
        x, y = rng.uniform(0, 0.4, (10, 10, 3)), rng.uniform(0, 0.4, (10, 10, 3))
        k = build_kernel("gaussian", 5)
        lhs = convolve(ImageBuffer(0.7 * x + 1.2 * y), k).data
        rhs = 0.7 * convolve(ImageBuffer(x), k).data + 1.2 * convolve(ImageBuffer(y), k).data
        assert np.abs(lhs - rhs).max() < 1e-6

    @pytest.mark.parametrize("padding", list(PaddingMode))
    def test_box_filter_matches_mean_kernel(self, rng, padding):
        img = rand_img(rng, 13, 10)
        for size in (1, 3, 7, 9):
            fast = box_filter_array(img.data, size, padding)
            slow = testkit.naive_convolve(img, build_kernel("mean", size), padding).data
            assert np.abs(fast - slow).max() < 1e-6


class TestBilateral:
    def test_constant(self):
        img = ImageBuffer.constant(8, 8, 0.4)
        assert np.allclose(bilateral_filter(img, 5).data, 0.4)

    def test_large_range_sigma_is_gaussian_blur(self, rng):
        img = rand_img(rng, 16, 16)
        bil = bilateral_filter(img, 7, sigma_range=1e6)
        gau = convolve(img, build_kernel("gaussian", 7))
        assert np.abs(bil.data - gau.data).max() < 1e-3

    def test_matches_brute_force(self, rng):
        img = rand_img(rng, 10, 9)
        ours = bilateral_filter(img, 5, sigma_spatial=1.2, sigma_range=0.2).data
        assert np.abs(ours - testkit.naive_bilateral(img, 5, 1.2, 0.2)).max() < 1e-12

    def test_step_edge_preserved(self):
        data = np.full((16, 16, 3), 0.1)
        data[:, 8:] = 0.9
        img = ImageBuffer(data)
        out = bilateral_filter(img, 5, sigma_range=0.1).data
        oracle = testkit.naive_bilateral(img, 5, gaussian_sigma_for(5), 0.1)
        assert np.abs(out - oracle).max() < 1e-12
        assert out[:, 8].mean() - out[:, 7].mean() >= 0.5 * 0.8
        # flat regions stay flat
        assert np.allclose(out[:, :5], 0.1) and np.allclose(out[:, 11:], 0.9)

    def test_bad_sigma(self, rng):
        with pytest.raises(ValueError):
            bilateral_filter(rand_img(rng), 3, sigma_range=0.0)


class TestFilterImage:
    def test_identity_sizes(self, rng):
        img = rand_img(rng)
        assert filter_image(img, "mean", 1) is img
        assert filter_image(img, "identity", 5) is img

    def test_mean_smooths_natural_image(self):
        img = load_suite_image("astronaut", 64)
        assert laplacian_variance(filter_image(img, "mean", 15)) < laplacian_variance(img)

    def test_double_filter_smoother(self):
        img = load_suite_image("coffee", 48)
        once = filter_image(img, "mean", 5)
        assert laplacian_variance(filter_image(once, "mean", 5)) <= laplacian_variance(once)

    def test_sobel_oracle(self, rng):
        img = rand_img(rng, 9, 9)
        out = filter_image(img, "sobel", 3)
        assert out.data.min() >= 0 and out.data.max() <= 1
        assert np.abs(out.data - testkit.naive_sobel_magnitude(img)).max() < 1e-12

    @pytest.mark.parametrize("kind", ["mean", "gaussian", "bilateral"])
    def test_low_pass_stays_in_range(self, kind):
        img = load_suite_image("cartoon", 32)
        out = filter_image(img, kind, 5)
        assert out.data.min() >= 0 and out.data.max() <= 1

    @pytest.mark.parametrize("kind", ["mean", "gaussian"])
    @pytest.mark.parametrize("name", ["gradient", "checkerboard", "cartoon", "astronaut", "coffee"])
    def test_mean_drift_small_kernels(self, kind, name):
        # edge replication only perturbs a border band; with a 3x3 window the
        # image mean moves by far less than 1e-4
        img = load_suite_image(name, 64)
        assert abs(filter_image(img, kind, 3).data.mean() - img.data.mean()) < 1e-4

    def test_mean_preserving_interior(self, rng):
        # exact in the interior: away from borders, a mean filter of a periodic pattern keeps its mean
        data = np.tile(rng.uniform(0, 1, (4, 4, 3)), (6, 6, 1))
        out = filter_image(ImageBuffer(data), "mean", 3).data
        assert abs(out[4:-4, 4:-4].mean() - data[4:-4, 4:-4].mean()) < 1e-4
