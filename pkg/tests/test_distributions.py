"""PMF arithmetic: construction, convolution, CDF/percentiles, mixing."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import reliroute as rr
from reliroute.distributions import DiscreteDistribution, convolve, reliability_curve, shifted_dot

E1 = [[2, 0.9], [3, 0.1]]
E2 = [[1, 0.5], [2, 0.3], [3, 0.1], [4, 0.1]]
E3 = [[1, 0.6], [4, 0.4]]
E4 = [[2, 0.5], [3, 0.5]]


def dist(pairs, dt=1.0):
    return DiscreteDistribution.from_pairs(pairs, dt=dt)


class TestConstruction:
    def test_min_bin_and_trim(self):
        d = DiscreteDistribution([0.0, 0.25, 0.75, 0.0, 0.0])
        assert d.min_bin == 1
        assert d.support_end == 3

    def test_rejects_negative_mass(self):
        with pytest.raises(ValueError, match="negative"):
            DiscreteDistribution([0.5, -0.2, 0.7])

    def test_rejects_unnormalized(self):
        with pytest.raises(ValueError, match="sums to"):
            DiscreteDistribution([0.5, 0.4])

    def test_truncated_tail_counts_toward_total(self):
        d = DiscreteDistribution([0.0, 0.7], truncated_tail=0.3)
        assert d.total_mass == pytest.approx(0.7)
        assert d.truncated_tail == pytest.approx(0.3)

    def test_immutable(self):
        d = dist(E4)
        with pytest.raises(AttributeError):
            d.dt = 2.0
        with pytest.raises(ValueError):
            d.mass[2] = 0.9

    def test_from_pairs_rejects_bad_bins(self):
        with pytest.raises(ValueError):
            DiscreteDistribution.from_pairs([[1, 0.5], [1, 0.5]])
        with pytest.raises(ValueError):
            DiscreteDistribution.from_pairs([[-1, 1.0]])

    def test_point_mass(self):
        d = DiscreteDistribution.point_mass(5)
        assert d.min_bin == 5 and d.cdf(5) == 1.0 and d.cdf(4) == 0.0


class TestConvolve:
    def test_identity_point_mass(self):
        d = dist(E2)
        out = convolve(DiscreteDistribution.point_mass(0), d)
        assert out.to_pairs() == d.to_pairs()

    def test_counterexample_product(self):
        # Frozen from expanding the double sum over the fixture PMFs by hand.
        out = convolve(dist(E2), dist(E4))
        assert out.to_pairs() == [[3, 0.25], [4, 0.4], [5, 0.2], [6, 0.1], [7, 0.05]]

    def test_binomial_square(self):
        d = dist([[1, 0.5], [2, 0.5]])
        assert convolve(d, d).to_pairs() == [[2, 0.25], [3, 0.5], [4, 0.25]]

    def test_dt_mismatch(self):
        with pytest.raises(ValueError, match="time-step mismatch"):
            convolve(dist(E2), dist(E4, dt=2.0))

    def test_cap_records_tail(self):
        out = convolve(dist(E2), dist(E4), cap=5)
        assert out.support_end <= 5
        assert out.truncated_tail == pytest.approx(0.35)
        assert out.total_mass + out.truncated_tail == pytest.approx(1.0)

    def test_cap_must_be_positive(self):
        with pytest.raises(ValueError, match="cap"):
            convolve(dist(E2), dist(E4), cap=0)

    def test_min_bin_additive(self):
        out = convolve(dist(E1), dist(E4))
        assert out.min_bin == 2 + 2

    def test_commutative_associative_random(self):
        rng = np.random.default_rng(7)
        for _ in range(40):
            parts = []
            for _ in range(3):
                size = rng.integers(1, 256)
                m = np.zeros(size + 1)
                lo = rng.integers(0, size)
                m[lo:] = rng.random(size + 1 - lo)
                m /= m.sum()
                parts.append(DiscreteDistribution(m))
            a, b, c = parts
            ab = convolve(a, b)
            assert np.allclose(ab.mass, convolve(b, a).mass, atol=1e-12, rtol=0)
            left = convolve(ab, c)
            right = convolve(a, convolve(b, c))
            assert np.allclose(left.mass, right.mass, atol=1e-12, rtol=0)

    @settings(max_examples=60, derandomize=True, deadline=None)
    @given(
        data=st.lists(st.floats(0.01, 1.0), min_size=1, max_size=40),
        other=st.lists(st.floats(0.01, 1.0), min_size=1, max_size=40),
        cap=st.integers(1, 60),
    )
    def test_mass_conserved_under_cap(self, data, other, cap):
        a = DiscreteDistribution(np.array(data) / sum(data))
        b = DiscreteDistribution(np.array(other) / sum(other))
        out = convolve(a, b, cap=cap)
        assert out.total_mass + out.truncated_tail == pytest.approx(
            (a.total_mass + a.truncated_tail) * (b.total_mass + b.truncated_tail),
            abs=1e-9,
        )


class TestCdfPercentile:
    def test_cdf_values_from_fixture_table(self):
        e4 = dist(E4)
        assert e4.cdf(1) == 0.0
        assert e4.cdf(2) == pytest.approx(0.5)
        assert e4.cdf(3) == pytest.approx(1.0)

    def test_cdf_nondecreasing(self):
        d = convolve(dist(E2), dist(E3))
        values = [d.cdf(t) for t in range(10)]
        assert values == sorted(values)

    def test_percentiles_of_product(self):
        d = convolve(dist(E2), dist(E4))
        assert d.percentile(0.05) == 3
        assert d.percentile(0.95) == 6

    def test_percentile_point_mass(self):
        assert DiscreteDistribution.point_mass(5).percentile(0.5) == 5

    def test_percentile_range_check(self):
        d = dist(E4)
        for p in (-0.1, 1.5):
            with pytest.raises(ValueError):
                d.percentile(p)

    def test_percentile_unreachable_mass(self):
        d = DiscreteDistribution([0.0, 0.6], truncated_tail=0.4)
        with pytest.raises(ValueError, match="never reaches"):
            d.percentile(0.99)

    def test_mean_matches_fixture_expectations(self):
        assert dist(E1).mean() == pytest.approx(2.1)
        assert dist(E2).mean() == pytest.approx(1.8)
        assert dist(E3).mean() == pytest.approx(2.2)
        assert dist(E4).mean() == pytest.approx(2.5)


class TestShiftedDot:
    def test_policy_mixing_value(self):
        # q = e2, u = running CDF of e4 (the destination-side reliability).
        u = np.array([dist(E4).cdf(t) for t in range(5)])
        assert shifted_dot(dist(E2), u, 4) == pytest.approx(0.65)

    def test_all_ones_reduces_to_cdf(self):
        q = convolve(dist(E2), dist(E4))
        for T in range(8):
            assert shifted_dot(q, np.ones(T + 1), T) == pytest.approx(q.cdf(T))

    def test_point_mass_at_zero_reads_u(self):
        u = np.array([0.0, 0.2, 0.7, 0.9])
        q = DiscreteDistribution.point_mass(0)
        assert shifted_dot(q, u, 2) == pytest.approx(0.7)

    def test_requires_full_u_coverage(self):
        with pytest.raises(ValueError):
            shifted_dot(dist(E2), np.ones(3), 4)

    def test_nondecreasing_in_budget_for_monotone_u(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            m = rng.random(rng.integers(1, 30))
            q = DiscreteDistribution(m / m.sum())
            u = np.minimum(np.cumsum(rng.random(64)) / 20.0, 1.0)
            vals = [shifted_dot(q, u, T) for T in range(len(u))]
            assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))

    def test_reliability_curve_matches_pointwise(self):
        rng = np.random.default_rng(5)
        m = rng.random(9)
        q = DiscreteDistribution(m / m.sum())
        u = np.minimum(np.cumsum(rng.random(20)) / 5.0, 1.0)
        curve = reliability_curve(q, u, 19)
        for T in range(20):
            assert curve[T] == pytest.approx(shifted_dot(q, u, T), abs=1e-12)
