import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ringsim.algorithms import (
    DelayAdaptiveASGD,
    GradientMessage,
    RANSGDm,
    Rennala,
    RingmasterASGD,
    ServerState,
    VanillaASGD,
    make_policy,
    theory_alpha,
    theory_params,
)
from ringsim.errors import InvalidParameterError


def msg(g, stamp, worker=0):
    return GradientMessage(np.asarray(g, dtype=float), stamp, worker, 0.0)


def reference_ransgdm(x0, arrivals, eta, beta, R):
    """Plain-loop restatement of the normalised momentum update, for cross-checking."""
    x = list(map(float, x0))
    v = [0.0] * len(x)
    k = 0
    out = []
    for g, stamp in arrivals:
        if k - stamp >= R:
            out.append(False)
            continue
        b = 0.0 if k <= 1 else beta
        v = [b * vi + (1 - beta) * gi for vi, gi in zip(v, g)]
        n = math.sqrt(sum(vi * vi for vi in v))
        if n > 0:
            x = [xi - eta * vi / n for xi, vi in zip(x, v)]
        k += 1
        out.append(True)
    return np.array(x), k, out


class TestTheoryParams:
    def test_noiseless(self):
        tp = theory_params(1.0, 1.0, 0.0, 2.0, 0.1)
        assert (tp.alpha, tp.R, tp.beta, tp.K) == (1.0, 1, 0.0, 7200)
        assert tp.eta == pytest.approx(0.1 / 24, rel=1e-15)

    def test_p2_sigma1(self):
        # alpha = (0.1 / (3 * 2^1.5))^2 = 0.01 / 72
        tp = theory_params(1.0, 1.0, 1.0, 2.0, 0.1)
        assert tp.alpha == pytest.approx(1 / 7200, rel=1e-13)
        assert tp.R == 7200
        assert tp.K == 72 * 7200 * 100
        assert tp.eta == pytest.approx(0.1 / (7200 * 24), rel=1e-13)

    def test_integer_boundary_snaps(self):
        # alpha = (0.2 / (1.5 * 2^(5/3)))^3 = 1/13500 exactly
        tp = theory_params(2.0, 3.0, 0.5, 1.5, 0.2)
        assert tp.R == 13500
        assert tp.K == 72 * 6 * 13500 * 25

    def test_clamp(self):
        assert theory_alpha(1.0, 2.0, 3 * 2**1.5) == 1.0
        assert theory_alpha(1.0, 2.0, 100.0) == 1.0

    @given(st.floats(0.01, 10), st.floats(1.05, 2.0), st.floats(1e-3, 1.0))
    def test_ranges(self, sigma, p, eps):
        tp = theory_params(1.0, 1.0, sigma, p, eps)
        assert 0 < tp.alpha <= 1
        assert tp.R >= 1 / tp.alpha * (1 - 1e-9)
        assert tp.beta == pytest.approx(1 - tp.alpha)

    @given(st.floats(0.01, 1), st.floats(1.05, 2.0), st.floats(1e-3, 0.1))
    def test_alpha_decreases_with_noise(self, sigma, p, eps):
        assert theory_alpha(2 * sigma, p, eps) <= theory_alpha(sigma, p, eps)

    @pytest.mark.parametrize("args", [(1, 1, 1, 1.0, 0.1), (1, 1, 1, 2.1, 0.1), (0, 1, 1, 2, 0.1), (1, 1, -1, 2, 0.1)])
    def test_invalid(self, args):
        with pytest.raises(InvalidParameterError):
            theory_params(*args)


class TestRANSGDm:
    def test_first_step_is_normalised_gradient(self):
        s = ServerState.start(np.zeros(2))
        RANSGDm(eta=0.5, R=3).on_gradient(s, msg([3.0, 4.0], 0))
        np.testing.assert_allclose(s.x, [-0.3, -0.4])
        assert s.k == 1

    def test_discard_at_threshold(self):
        s = ServerState.start(np.zeros(1))
        pol = RANSGDm(eta=1.0, R=2)
        pol.on_gradient(s, msg([1.0], 0))
        pol.on_gradient(s, msg([1.0], 0))  # delay 1 < 2
        x = s.x.copy()
        assert pol.on_gradient(s, msg([1.0], 0)) is False  # delay 2
        np.testing.assert_array_equal(s.x, x)
        assert (s.k, s.accepted, s.discarded) == (2, 2, 1)

    def test_zero_direction_still_counts(self):
        s = ServerState.start(np.ones(3))
        assert RANSGDm(eta=1.0, R=5).on_gradient(s, msg(np.zeros(3), 0))
        np.testing.assert_array_equal(s.x, np.ones(3))
        assert (s.k, s.zero_steps) == (1, 1)

    def test_future_stamp_rejected(self):
        s = ServerState.start(np.zeros(1))
        with pytest.raises(InvalidParameterError):
            RANSGDm(eta=1.0, R=5).on_gradient(s, msg([1.0], 3))

    @settings(max_examples=100)
    @given(st.data())
    def test_matches_reference(self, data):
        dim = data.draw(st.integers(1, 4))
        R = data.draw(st.integers(1, 5))
        beta = data.draw(st.floats(0, 0.99))
        n = data.draw(st.integers(1, 30))
        pol = RANSGDm(eta=0.1, R=R, beta=beta)
        s = ServerState.start(np.zeros(dim))
        arrivals = []
        accepted = []
        for _ in range(n):
            g = data.draw(st.lists(st.floats(-5, 5), min_size=dim, max_size=dim))
            stamp = data.draw(st.integers(max(0, s.k - R - 1), s.k))
            arrivals.append((g, stamp))
            accepted.append(pol.on_gradient(s, msg(g, stamp)))
        x_ref, k_ref, acc_ref = reference_ransgdm(np.zeros(dim), arrivals, 0.1, beta, R)
        np.testing.assert_allclose(s.x, x_ref, rtol=1e-12, atol=1e-12)
        assert s.k == k_ref
        assert accepted == acc_ref

    @given(st.lists(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3), min_size=1, max_size=20))
    def test_steps_have_length_eta(self, grads):
        s = ServerState.start(np.zeros(3))
        pol = RANSGDm(eta=0.25, R=10)
        for g in grads:
            before = s.x.copy()
            pol.on_gradient(s, msg(g, s.k))
            step = np.linalg.norm(s.x - before)
            assert step == pytest.approx(0.25, rel=1e-12) or step == 0.0


class TestBaselines:
    def test_ringmaster(self):
        s = ServerState.start(np.ones(2))
        pol = RingmasterASGD(eta=0.5, R=1)
        assert pol.on_gradient(s, msg([2.0, 0.0], 0))
        np.testing.assert_allclose(s.x, [0.0, 1.0])
        assert not pol.on_gradient(s, msg([2.0, 0.0], 0))

    def test_ringmaster_identity_one_step(self):
        # f = |x - x*|^2/2, grad = x - x*, unit step lands on x*
        x_star = np.array([1.0, -2.0])
        s = ServerState.start(np.zeros(2))
        RingmasterASGD(eta=1.0, R=1).on_gradient(s, msg(s.x - x_star, 0))
        np.testing.assert_array_equal(s.x, x_star)

    def test_vanilla_never_discards(self):
        s = ServerState.start(np.zeros(1))
        pol = VanillaASGD(eta=1.0)
        for _ in range(5):
            pol.on_gradient(s, msg([1.0], 0))
        assert (s.k, s.discarded) == (5, 0)
        np.testing.assert_array_equal(s.x, [-5.0])

    def test_delay_adaptive(self):
        s = ServerState.start(np.zeros(1))
        pol = DelayAdaptiveASGD(eta=1.0)
        pol.on_gradient(s, msg([1.0], 0))
        pol.on_gradient(s, msg([1.0], 0))  # delay 1 -> step 1/2
        pol.on_gradient(s, msg([1.0], 0))  # delay 2 -> step 1/3
        np.testing.assert_allclose(s.x, [-(1 + 1 / 2 + 1 / 3)])

    def test_rennala_batches(self):
        s = ServerState.start(np.zeros(1))
        pol = Rennala(eta=1.0, batch=3)
        assert not pol.on_gradient(s, msg([1.0], 0))
        assert not pol.on_gradient(s, msg([2.0], 0))
        assert pol.on_gradient(s, msg([6.0], 0))
        np.testing.assert_allclose(s.x, [-3.0])
        assert s.k == 1 and s.discarded == 0
        assert not pol.on_gradient(s, msg([1.0], 0))  # stale
        assert s.discarded == 1 and s.buffer_count == 0

    def test_make_policy(self):
        assert make_policy("ransgdm", 0.1, R=4, beta=0.5) == RANSGDm(0.1, 4, 0.5)
        assert make_policy("rennala", 0.1, batch=2) == Rennala(0.1, 2)
        assert make_policy("vanilla_asgd", 0.1).name == "vanilla_asgd"
        with pytest.raises(InvalidParameterError):
            make_policy("adam", 0.1)

    @pytest.mark.parametrize(
        "ctor", [lambda: RANSGDm(0.0, 3), lambda: RANSGDm(0.1, 0), lambda: RANSGDm(0.1, 3, beta=1.0),
                 lambda: VanillaASGD(-1.0), lambda: Rennala(0.1, 0)],
    )
    def test_invalid(self, ctor):
        with pytest.raises(InvalidParameterError):
            ctor()

    def test_from_theory(self):
        tp = theory_params(1.0, 1.0, 1.0, 2.0, 0.1)
        pol = RANSGDm.from_theory(tp)
        assert (pol.eta, pol.R, pol.beta) == (tp.eta, tp.R, tp.beta)
