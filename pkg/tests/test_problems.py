import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ringsim.errors import DimensionError, InvalidConfigurationError, InvalidParameterError
from ringsim.numkit import NoiseModel, RngStream
from ringsim.problems import NoisyOracle, grad_exact, grad_noisy, power_iteration, quad_build


@pytest.fixture(scope="module")
def bench_quad():
    return quad_build(50, 20000, 0.01, RngStream(0, 0))


@pytest.fixture(scope="module")
def small_quad():
    return quad_build(6, 40, 0.1, RngStream(3, 0))


class TestPowerIteration:
    def test_upper_estimate_close(self, small_quad):
        lam = np.linalg.eigvalsh(small_quad.A)[-1]
        assert lam <= small_quad.L <= lam * (1 + 1e-5)

    def test_benchmark_scale_matrix(self, bench_quad):
        lam = np.linalg.eigvalsh(bench_quad.A)[-1]
        assert lam <= bench_quad.L <= lam * (1 + 1e-5)

    def test_diagonal(self):
        assert power_iteration(np.diag([1.0, 3.0, 2.0])) == pytest.approx(3.0, rel=1e-5)

    def test_zero_matrix(self):
        assert power_iteration(np.zeros((3, 3))) == 0.0


class TestQuadratic:
    def test_identity_design(self):
        prob = quad_build(4, 10, 1.0, RngStream(1, 0), data=np.zeros((10, 4)))
        np.testing.assert_array_equal(prob.A, np.eye(4))
        np.testing.assert_allclose(prob.grad(prob.x_star), 0.0, atol=1e-15)
        assert prob.L == pytest.approx(1.0, rel=1e-5)
        assert prob.f_star == pytest.approx(-0.5 * prob.x_star @ prob.x_star, rel=1e-14)

    def test_minimum(self, small_quad):
        assert small_quad.value(small_quad.x_star) == pytest.approx(small_quad.f_star, abs=1e-12)
        np.testing.assert_allclose(small_quad.grad(small_quad.x_star), 0.0, atol=1e-12)

    def test_value_and_grad(self, small_quad):
        x = np.linspace(-1, 1, 6)
        v, g = small_quad.value_and_grad(x)
        assert v == small_quad.value(x)
        np.testing.assert_array_equal(g, small_quad.grad(x))
        np.testing.assert_array_equal(grad_exact(small_quad, x), g)

    def test_gradient_finite_difference(self, small_quad):
        x = np.arange(6.0) / 7
        h = 1e-6
        fd = [(small_quad.value(x + h * e) - small_quad.value(x - h * e)) / (2 * h) for e in np.eye(6)]
        np.testing.assert_allclose(fd, small_quad.grad(x), atol=1e-7)

    @settings(max_examples=50)
    @given(st.lists(st.floats(-10, 10), min_size=12, max_size=12))
    def test_smoothness_and_lower_bound(self, small_quad, xs):
        x, y = np.array(xs[:6]), np.array(xs[6:])
        gx, gy = small_quad.grad(x), small_quad.grad(y)
        assert np.linalg.norm(gx - gy) <= small_quad.L * np.linalg.norm(x - y) * (1 + 1e-12) + 1e-12
        assert small_quad.value(x) >= small_quad.f_star - 1e-9

    def test_deterministic(self):
        a = quad_build(5, 20, 0.1, RngStream(8, 0))
        b = quad_build(5, 20, 0.1, RngStream(8, 0))
        np.testing.assert_array_equal(a.A, b.A)
        assert a.f_star == b.f_star

    def test_dimension_error(self, small_quad):
        with pytest.raises(DimensionError):
            small_quad.grad(np.ones(5))

    @pytest.mark.parametrize("args", [(0, 5, 0.1), (3, 0, 0.1), (3, 5, 0.0)])
    def test_invalid(self, args):
        with pytest.raises(InvalidParameterError):
            quad_build(*args, RngStream(0, 0))

    def test_bad_data_shape(self):
        with pytest.raises(DimensionError):
            quad_build(3, 5, 0.1, RngStream(0, 0), data=np.zeros((4, 3)))


class TestNoisyOracle:
    def test_noiseless_is_exact(self, small_quad):
        orc = NoisyOracle(small_quad, NoiseModel(), RngStream(0, 1))
        x = np.ones(6)
        np.testing.assert_array_equal(grad_noisy(orc, x), small_quad.grad(x))

    def test_unbiased_light_tail(self, small_quad):
        orc = NoisyOracle(small_quad, NoiseModel("student_t", nu=6.0), RngStream(0, 1))
        x = np.ones(6)
        n = 40_000
        mean = np.mean([orc.sample(x) for _ in range(n)], axis=0)
        se = np.sqrt(6.0 / 4.0 / n)
        assert np.max(np.abs(mean - small_quad.grad(x))) < 4.5 * se

    def test_heavy_tail_noise_is_centred(self, small_quad):
        # infinite variance: compare medians instead of a CLT z-score
        orc = NoisyOracle(small_quad, NoiseModel("student_t", nu=1.5), RngStream(2, 1))
        x = np.zeros(6)
        draws = np.array([orc.sample(x) for _ in range(20_000)])
        np.testing.assert_allclose(np.median(draws, axis=0), small_quad.grad(x), atol=0.05)

    def test_independent_streams_per_worker(self, small_quad):
        noise = NoiseModel("gaussian")
        a = NoisyOracle(small_quad, noise, RngStream(0, 1)).sample(np.ones(6))
        b = NoisyOracle(small_quad, noise, RngStream(0, 3)).sample(np.ones(6))
        assert not np.array_equal(a, b)

    def test_rejects_gate(self, small_quad):
        with pytest.raises(InvalidConfigurationError):
            NoisyOracle(small_quad, NoiseModel("bernoulli_gate", q=0.5), RngStream(0, 1))
