"""Stable heat kernels, ball masses, and the recurrence dichotomy."""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from decaylab.kernels import (KernelProfile, ball_mass, classify_recurrence,
                              escape_product, kernel_profile, kernel_value)


class TestClosedForms:
    def test_poisson_value_at_origin(self):
        # [PAPER] the s = 1/2 kernel in n = 1 is Poisson: G(0, 1) = 1/pi
        assert kernel_value(0.5, 1, 0.0, 1.0) == pytest.approx(1.0 / math.pi,
                                                               abs=1e-12)

    def test_poisson_profile(self):
        # [DERIVED] c_1 t / (t^2 + r^2) with c_1 = 1/pi
        for r, t in ((0.5, 1.0), (2.0, 0.7), (10.0, 3.0)):
            exact = t / (math.pi * (t * t + r * r))
            assert kernel_value(0.5, 1, r, t) == pytest.approx(exact, rel=1e-8)

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_gaussian_profile(self, n):
        # [DERIVED] unit-mass heat kernel (4 pi t)^(-n/2) exp(-r^2/4t)
        for r, t in ((0.0, 1.0), (1.5, 0.3), (3.0, 2.0)):
            exact = (4.0 * math.pi * t) ** (-n / 2.0) * math.exp(
                -r * r / (4.0 * t))
            assert kernel_value(1.0, n, r, t) == pytest.approx(exact, rel=1e-12)

    def test_general_s_origin_moment(self):
        # [DERIVED] G_s(0, t) by the closed radial moment, n = 1:
        # Gamma(1/2s) t^(-1/2s) / (2 pi s)
        for s in (0.25, 0.4, 0.75):
            exact = math.gamma(1.0 / (2.0 * s)) / (2.0 * math.pi * s)
            assert kernel_value(s, 1, 0.0, 1.0) == pytest.approx(exact,
                                                                 rel=1e-8)

    def test_n1_fourier_inversion_oracle(self):
        # [DERIVED] direct cosine-transform quadrature, independent of the
        # package's oscillatory-weight machinery
        s, r, t = 0.75, 1.3, 0.9
        val, err = quad(lambda xi: math.cos(r * xi)
                        * math.exp(-t * xi ** (2 * s)), 0.0, 60.0, limit=400)
        assert err < 1e-7
        assert kernel_value(s, 1, r, t) == pytest.approx(val / math.pi,
                                                         rel=1e-6)


class TestScalingAndShape:
    @pytest.mark.parametrize("s,n", [(0.25, 1), (0.6, 2), (0.75, 3)])
    def test_scaling_identity(self, s, n):
        rng = np.random.default_rng(5)
        for _ in range(5):
            r = float(rng.uniform(0.05, 4.0))
            t = float(rng.uniform(0.3, 3.0))
            lhs = kernel_value(s, n, r, t)
            rhs = t ** (-n / (2 * s)) * kernel_value(
                s, n, r * t ** (-1 / (2 * s)), 1.0)
            assert lhs == pytest.approx(rhs, rel=1e-8)

    def test_positivity_and_radial_monotonicity(self):
        for s, n in ((0.25, 1), (0.75, 2)):
            vals = [kernel_value(s, n, r, 1.0)
                    for r in (0.0, 0.5, 1.0, 2.0, 5.0, 20.0)]
            assert all(v > 0 for v in vals)
            assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_heavy_tail_exponent(self):
        # [PAPER] G_s ~ r^(-n-2s) at infinity, unlike the Gaussian
        s, n = 0.75, 1
        v1 = kernel_value(s, n, 40.0, 1.0)
        v2 = kernel_value(s, n, 80.0, 1.0)
        assert math.log(v1 / v2) / math.log(2.0) == pytest.approx(
            n + 2 * s, rel=0.01)

    def test_query_validation(self):
        with pytest.raises(ValueError):
            kernel_value(1.5, 1, 0.0, 1.0)
        with pytest.raises(ValueError):
            kernel_value(0.5, 4, 0.0, 1.0)
        with pytest.raises(ValueError):
            kernel_value(0.5, 1, 0.0, -1.0)


class TestBallMass:
    def test_gaussian_closed_forms(self):
        # [DERIVED] erf-type masses in n = 1 and 3, exponential in n = 2
        t, rho = 0.8, 1.2
        x = rho / (2.0 * math.sqrt(t))
        assert ball_mass(1.0, 1, rho, t) == pytest.approx(math.erf(x),
                                                          rel=1e-12)
        assert ball_mass(1.0, 2, rho, t) == pytest.approx(
            1.0 - math.exp(-x * x), rel=1e-12)
        assert ball_mass(1.0, 3, rho, t) == pytest.approx(
            math.erf(x) - 2.0 * x * math.exp(-x * x) / math.sqrt(math.pi),
            rel=1e-12)

    def test_cauchy_closed_form(self):
        # [DERIVED] for the Poisson kernel in n = 1 the ball mass is
        # (2/pi) arctan(rho / t)
        for rho, t in ((0.5, 1.0), (3.0, 0.4)):
            assert ball_mass(0.5, 1, rho, t) == pytest.approx(
                (2.0 / math.pi) * math.atan(rho / t), rel=1e-6)

    def test_monotone_in_rho_and_bounded(self):
        masses = [ball_mass(0.75, 2, rho, 1.0)
                  for rho in (0.1, 0.5, 1.0, 5.0, 50.0)]
        assert all(0.0 < m < 1.0 for m in masses)
        assert all(a < b for a, b in zip(masses, masses[1:]))

    @pytest.mark.parametrize("s,n", [(0.5, 1), (0.75, 2), (1.0, 3)])
    def test_unit_mass_large_ball(self, s, n):
        assert ball_mass(s, n, 1e6, 1.0) == pytest.approx(1.0, abs=1e-4)

    @pytest.mark.parametrize("n", [1, 2, 3])
    @pytest.mark.xfail(strict=True, reason=(
        "for s = 0.25 the truncated heavy-tail series saturates near 8e-4; "
        "the 1e-4 target is unattainable with an asymptotic expansion whose "
        "terms stop decreasing at this order"))
    def test_unit_mass_large_ball_smallest_s(self, n):
        assert ball_mass(0.25, n, 1e6, 1.0) == pytest.approx(1.0, abs=1e-4)

    def test_profile_matches_direct_mass(self):
        profile = kernel_profile(0.6, 2)
        for rho in (0.05, 0.4, 1.3, 7.0):
            direct = ball_mass(0.6, 2, rho, 1.0)
            assert profile.mass(rho) == pytest.approx(direct, abs=2e-4)

    def test_profile_scaling_use(self):
        # mass at time t via the cached unit-time profile
        profile = kernel_profile(0.75, 1)
        t = 3.7
        direct = ball_mass(0.75, 1, 1.0, t)
        assert profile.mass(1.0 * t ** (-1 / 1.5)) == pytest.approx(
            direct, abs=2e-4)


class TestRecurrence:
    def test_dichotomy_statements(self):
        # [PAPER] recurrent iff n <= 2s
        assert classify_recurrence(1, 0.5) == "recurrent"
        assert classify_recurrence(1, 0.75) == "recurrent"
        assert classify_recurrence(1, 0.25) == "transient"
        assert classify_recurrence(2, 1.0) == "recurrent"
        assert classify_recurrence(3, 1.0) == "transient"

    def test_dichotomy_grid(self):
        for n in (1, 2, 3):
            for s in (0.1, 0.3, 0.5, 0.7, 0.9, 1.0):
                expected = "recurrent" if n <= 2 * s else "transient"
                assert classify_recurrence(n, s) == expected

    def test_escape_probabilities_valid(self):
        est = escape_product(0.25, 1, 0.5, 2000)
        assert np.all(est.q >= 0.0)
        assert np.all(est.q <= 1.0)
        assert est.classification == "transient"
        assert 0.0 < est.product < 1.0

    def test_transient_product_stabilizes(self):
        # doubling the horizon moves log-product by less than the tail bound
        short = escape_product(0.25, 1, 0.1, 50_000)
        long = escape_product(0.25, 1, 0.1, 100_000)
        assert abs(long.log_product - short.log_product) <= short.tail_bound

    def test_recurrent_product_decreases(self):
        small = escape_product(0.75, 1, 0.1, 1000)
        big = escape_product(0.75, 1, 0.1, 10_000)
        assert big.product < small.product

    def test_recurrent_tail_bound_infinite(self):
        est = escape_product(0.75, 1, 0.1, 1000)
        assert math.isinf(est.tail_bound)

    def test_large_ball_refused(self):
        # once the one-step escape probability cannot be bounded away from
        # zero the product is numerically meaningless
        with pytest.raises(ValueError):
            escape_product(0.25, 1, 1000.0, 20)
