import numpy as np
import pytest

from fwasense.channel import Path, PathKind, PathSet, synthesize_cfr, trace_paths
from fwasense.dsp import (
    LOG_EPS,
    idft3,
    log_amplitude,
    preprocess,
    reshape_normalize,
    truncate_delay,
)


def naive_idft3(h: np.ndarray) -> np.ndarray:
    """Defining triple sum, evaluated bin by bin; independent of any FFT."""
    n_r, n_t, n_c = h.shape
    out = np.empty_like(h, dtype=np.complex128)
    ii = np.arange(n_r)[:, None, None]
    jj = np.arange(n_t)[None, :, None]
    cc = np.arange(n_c)[None, None, :]
    for a in range(n_r):
        for b in range(n_t):
            for k in range(n_c):
                phase = np.exp(
                    2j * np.pi * (a * ii / n_r + b * jj / n_t + k * cc / n_c)
                )
                out[a, b, k] = (h * phase).sum() / (n_r * n_t * n_c)
    return out


def random_tensor(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


class TestIdft3:
    def test_zero_input(self):
        assert np.all(idft3(np.zeros((2, 2, 4))) == 0)

    def test_constant_input_gives_delta_at_origin(self):
        out = idft3(np.ones((4, 2, 8)))
        expected = np.zeros((4, 2, 8), dtype=np.complex128)
        expected[0, 0, 0] = 1.0
        assert np.allclose(out, expected, atol=1e-12)

    def test_matches_naive_triple_sum(self, rng):
        h = random_tensor(rng, (4, 2, 8))
        got = idft3(h)
        want = naive_idft3(h)
        assert np.max(np.abs(got - want)) / np.max(np.abs(want)) < 1e-10

    def test_forward_dft_round_trip(self, rng):
        for shape in [(2, 2, 4), (8, 4, 16), (5, 3, 7)]:
            h = random_tensor(rng, shape)
            x = idft3(h)
            back = np.fft.fftn(x, axes=(0, 1, 2))
            assert np.max(np.abs(back - h)) / np.max(np.abs(h)) < 1e-10

    def test_parseval_under_convention(self, rng):
        h = random_tensor(rng, (6, 3, 10))
        x = idft3(h)
        n = h.size
        lhs = np.sum(np.abs(h) ** 2)
        rhs = n * np.sum(np.abs(x) ** 2)
        assert abs(lhs - rhs) / lhs < 1e-9


class TestTruncateDelay:
    def test_full_keep_is_identity(self, rng):
        t = random_tensor(rng, (4, 2, 8))
        assert np.array_equal(truncate_delay(t, 8), t)

    def test_prefix_slice(self, rng):
        t = random_tensor(rng, (4, 2, 512))
        out = truncate_delay(t, 64)
        assert out.shape == (4, 2, 64)
        assert np.array_equal(out, t[:, :, :64])

    def test_keep_one(self, rng):
        t = random_tensor(rng, (4, 2, 8))
        assert truncate_delay(t, 1).shape == (4, 2, 1)

    def test_out_of_range_rejected(self, rng):
        t = random_tensor(rng, (4, 2, 8))
        with pytest.raises(ValueError):
            truncate_delay(t, 9)
        with pytest.raises(ValueError):
            truncate_delay(t, 0)


class TestLogAmplitude:
    def test_unit_magnitude_gives_zero(self):
        assert log_amplitude(np.array([1.0 + 0j]))[0] == pytest.approx(0.0, abs=1e-12)

    def test_magnitude_ten_gives_one(self):
        assert log_amplitude(np.array([10.0 + 0j]))[0] == pytest.approx(1.0, abs=1e-12)

    def test_zero_maps_to_log_eps(self):
        assert log_amplitude(np.array([0.0 + 0j]))[0] == pytest.approx(np.log10(LOG_EPS))


class TestReshapeNormalize:
    def test_known_values(self):
        out = reshape_normalize(np.array([[0.0, 5.0, 10.0]]))
        assert out.shape == (1, 3, 1)
        assert np.allclose(out[0, :, 0], [0.0, 0.5, 1.0], atol=1e-9)

    def test_constant_input_maps_to_zeros(self):
        out = reshape_normalize(np.full((2, 3), 4.2))
        assert np.all(out == 0.0)

    def test_range_bounds(self, rng):
        for _ in range(20):
            out = reshape_normalize(rng.standard_normal((3, 4, 5)))
            assert out.min() == pytest.approx(0.0, abs=1e-15)
            assert out.max() <= 1.0


class TestPreprocess:
    def test_zero_cfr_gives_zero_map(self):
        out = preprocess(np.zeros((4, 2, 16)), 8)
        assert out.shape == (4, 2, 8, 1)
        assert np.all(out == 0.0)

    def test_single_broadside_path_peaks_at_origin_bin(self, tiny_scenario):
        ps = PathSet(
            pair=tiny_scenario.pairs()[0],
            paths=[Path(PathKind.LOS, delay_s=1e-30, gain=1.0, aoa=(0.0, 0.0), aod=(0.0, 0.0))],
        )
        h = synthesize_cfr(tiny_scenario, ps).data
        out = preprocess(h, tiny_scenario.delay_keep)
        assert np.unravel_index(np.argmax(out), out.shape) == (0, 0, 0, 0)
        assert out.max() == pytest.approx(1.0, abs=1e-9)

    def test_output_shape_matches_contract(self, rng):
        out = preprocess(random_tensor(rng, (8, 2, 64)), 16)
        assert out.shape == (8, 2, 16, 1)

    def test_scale_invariance(self, rng):
        h = random_tensor(rng, (4, 2, 16))
        base = preprocess(h, 8)
        for c in (1e-6, 0.3, 7.0, 1e5):
            assert np.allclose(preprocess(c * h, 8), base, atol=1e-9)

    def test_range_in_unit_interval(self, tiny_scenario, rng):
        uav = np.array([2.0, -3.0, 15.0])
        ps = trace_paths(tiny_scenario, tiny_scenario.pairs()[0], uav)
        out = preprocess(synthesize_cfr(tiny_scenario, ps).data, tiny_scenario.delay_keep)
        assert out.min() >= 0.0 and out.max() <= 1.0
