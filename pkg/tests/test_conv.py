import time

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from deblur_forge.conv import (
    FixedImageConvolver,
    as_kernel,
    conv_fft,
    conv_naive,
    correlate_fft,
    correlate_naive,
    flip,
    load_kernel,
    save_kernel,
)


def loop_conv_valid(img, k):
    # quadruple loop straight from the indexing convention
    m, n = img.shape
    kh, kw = k.shape
    out = np.zeros((m - kh + 1, n - kw + 1))
    for i in range(out.shape[0]):
        for j in range(out.shape[1]):
            s = 0.0
            for u in range(kh):
                for v in range(kw):
                    s += k[u, v] * img[i + kh - 1 - u, j + kw - 1 - v]
            out[i, j] = s
    return out


def delta(p):
    k = np.zeros((p, p))
    k[p // 2, p // 2] = 1.0
    return k


@st.composite
def instances(draw, max_img=64, max_k=13):
    seed = draw(st.integers(0, 2**31 - 1))
    p = draw(st.sampled_from(range(1, max_k + 1, 2)))
    m = draw(st.integers(p, max_img))
    n = draw(st.integers(p, max_img))
    rng = np.random.default_rng(seed)
    return rng.standard_normal((m, n)), rng.standard_normal((p, p))


class TestNaive:
    def test_matches_loop_oracle(self, rng):
        img, k = rng.standard_normal((16, 16)), rng.standard_normal((5, 5))
        np.testing.assert_allclose(conv_naive(img, k), loop_conv_valid(img, k), atol=1e-12)

    def test_delta_same_is_identity(self, rng):
        img = rng.random((9, 12))
        np.testing.assert_array_equal(conv_naive(img, delta(5), "same"), img)

    def test_box_on_constant(self):
        np.testing.assert_allclose(conv_naive(np.full((6, 7), 0.25), np.ones((3, 3))), np.full((4, 5), 2.25))

    def test_correlate_is_conv_with_flip(self, rng):
        img, k = rng.standard_normal((10, 10)), rng.standard_normal((3, 3))
        np.testing.assert_array_equal(correlate_naive(img, k), conv_naive(img, flip(k)))

    def test_errors(self):
        with pytest.raises(ValueError, match="larger than image"):
            conv_naive(np.zeros((3, 3)), np.zeros((5, 5)))
        with pytest.raises(ValueError, match="mode"):
            conv_naive(np.zeros((5, 5)), np.zeros((3, 3)), "full")


class TestFFT:
    @given(instances(), st.sampled_from(["valid", "same"]))
    def test_agrees_with_naive(self, inst, mode):
        img, k = inst
        assert np.max(np.abs(conv_fft(img, k, mode) - conv_naive(img, k, mode))) < 1e-9

    def test_delta_identity(self, rng):
        img = rng.random((20, 17))
        np.testing.assert_allclose(conv_fft(img, delta(7), "same"), img, atol=1e-9)

    def test_symmetric_kernel_correlation_equals_conv(self, rng):
        img = rng.random((20, 20))
        k = rng.random((5, 5))
        k = k + flip(k)
        np.testing.assert_allclose(correlate_fft(img, k), conv_fft(img, k), atol=1e-9)

    def test_correlate_matches_loop(self, rng):
        img, k = rng.standard_normal((12, 14)), rng.standard_normal((3, 3))
        np.testing.assert_allclose(correlate_fft(img, k), loop_conv_valid(img, flip(k)), atol=1e-10)

    @given(instances(max_img=24, max_k=7), st.floats(-3, 3), st.floats(-3, 3))
    def test_linearity(self, inst, a, b):
        x, k = inst
        y = np.cos(np.arange(x.size)).reshape(x.shape)
        lhs = conv_fft(a * x + b * y, k)
        rhs = a * conv_fft(x, k) + b * conv_fft(y, k)
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)

    @given(instances(max_img=32, max_k=9))
    def test_adjoint_identity(self, inst):
        x, k = inst
        y = np.sin(np.arange(conv_fft(x, k).size) * 0.37).reshape(conv_fft(x, k).shape)
        lhs = np.vdot(conv_fft(x, k), y)
        # the adjoint of valid conv in x is full correlation; build it by zero padding y
        p = k.shape[0]
        rhs = np.vdot(x, correlate_fft(np.pad(y, p - 1), k))
        assert abs(lhs - rhs) <= 1e-8 * max(1.0, abs(lhs))

    def test_faster_than_naive_on_large_kernel(self, rng):
        img, k = rng.random((256, 256)), rng.random((63, 63))
        conv_fft(img, k)  # warm the twiddle caches

        def best(fn, reps=3):
            times = []
            for _ in range(reps):
                t0 = time.perf_counter()
                fn(img, k)
                times.append(time.perf_counter() - t0)
            return min(times)

        assert best(conv_fft) < best(conv_naive, reps=1)


class TestFixedImageConvolver:
    @given(instances(max_img=40, max_k=11))
    def test_conv_matches_conv_fft(self, inst):
        img, k = inst
        fc = FixedImageConvolver(img, k.shape[0])
        np.testing.assert_allclose(fc.conv(k), conv_naive(img, k), atol=1e-9)

    @given(instances(max_img=40, max_k=11))
    def test_correlate_with_is_kernel_adjoint(self, inst):
        img, k = inst
        fc = FixedImageConvolver(img, k.shape[0])
        r = np.cos(np.arange(np.prod(fc.out_shape)) * 1.3).reshape(fc.out_shape)
        lhs = np.vdot(fc.conv(k), r)
        rhs = np.vdot(k, fc.correlate_with(r))
        assert abs(lhs - rhs) <= 1e-8 * max(1.0, abs(lhs))

    def test_correlate_with_loop(self, rng):
        img = rng.standard_normal((9, 8))
        p = 3
        fc = FixedImageConvolver(img, p)
        r = rng.standard_normal(fc.out_shape)
        want = np.zeros((p, p))
        for u in range(p):
            for v in range(p):
                want[u, v] = np.sum(r * img[p - 1 - u : p - 1 - u + r.shape[0], p - 1 - v : p - 1 - v + r.shape[1]])
        np.testing.assert_allclose(fc.correlate_with(r), want, atol=1e-12)

    def test_rejects_oversized_kernel(self):
        with pytest.raises(ValueError):
            FixedImageConvolver(np.zeros((4, 8)), 5)


class TestKernelFiles:
    def test_roundtrip_is_exact(self, tmp_path, rng):
        k = rng.standard_normal((7, 7)) * 1e-3
        save_kernel(k, tmp_path / "k.txt")
        np.testing.assert_array_equal(load_kernel(tmp_path / "k.txt"), k)

    @pytest.mark.parametrize(
        "data", [np.zeros((3, 5)), np.zeros((4, 4)), np.array([[np.inf]]), np.zeros(3)]
    )
    def test_as_kernel_rejects(self, data):
        with pytest.raises(ValueError):
            as_kernel(data)

    @pytest.mark.parametrize("text", ["3\n1 2 3\n", "x\n", "2\n1 2\n3\n", "1\nfoo\n"])
    def test_malformed_files(self, tmp_path, text):
        (tmp_path / "k.txt").write_text(text)
        with pytest.raises(ValueError):
            load_kernel(tmp_path / "k.txt")
