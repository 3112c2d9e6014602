"""Gain algebra: envelopes, composition, inversion, SGC scan, bi-limits."""

import math

import numpy as np
import pytest

from regiongain.gains import (BracketError, GainError, ScalarGain, TableGain,
                              bilimit_ratios, compose, invert,
                              running_max_envelope, scan_small_gain)


def p(s):
    return s ** 3 / 3 - 3 * s ** 2 / 2 + 2 * s


def identity():
    return ScalarGain(lambda s: np.asarray(s, dtype=float) * 1.0,
                      claimed_class="Kinf", name="id")


@pytest.fixture(scope="module")
def gamma_paper():
    # 1.3 x running max of |p| on [0, 50]
    return running_max_envelope(lambda s: 1.3 * p(np.asarray(s, dtype=float)),
                                50.0, name="gamma")


@pytest.fixture(scope="module")
def delta_paper():
    return running_max_envelope(
        lambda s: np.sin(np.asarray(s, dtype=float) ** 2 / 10), 50.0,
        name="delta",
    )


class TestScalarGain:
    def test_check_basic_clean_for_linear(self):
        g = ScalarGain(lambda s: 0.5 * np.asarray(s, dtype=float),
                       claimed_class="Kinf")
        assert g.check_basic() == []

    def test_nonzero_at_origin_flagged(self):
        g = ScalarGain(lambda s: np.asarray(s, dtype=float) + 1.0)
        assert any("g(0)" in msg for msg in g.check_basic())

    def test_decreasing_flagged(self):
        g = ScalarGain(lambda s: np.sin(np.asarray(s, dtype=float)),
                       claimed_class="K", domain_hint=(0.0, 6.0))
        assert any("decreasing" in msg for msg in g.check_basic())

    def test_saturating_kinf_claim_flagged(self):
        g = ScalarGain(lambda s: np.minimum(np.asarray(s, dtype=float), 1.0),
                       claimed_class="Kinf", domain_hint=(0.0, 10.0))
        assert any("Kinf" in msg for msg in g.check_basic())


class TestTableGain:
    def test_interpolation_and_extrapolation(self):
        t = TableGain([0.0, 1.0, 2.0], [0.0, 2.0, 3.0])
        assert t(0.5) == 1.0
        assert t(1.5) == 2.5
        # linear extrapolation from the last two nodes
        assert t(4.0) == 3.0 + 1.0 * 2.0

    def test_flat_tail_extrapolates_flat(self):
        t = TableGain([0.0, 1.0, 2.0], [0.0, 1.0, 1.0])
        assert t(100.0) == 1.0

    def test_vectorized(self):
        t = TableGain([0.0, 1.0], [0.0, 3.0])
        out = t(np.array([0.0, 0.5, 2.0]))
        assert np.allclose(out, [0.0, 1.5, 6.0])

    def test_rejects_non_increasing_abscissae(self):
        with pytest.raises(GainError):
            TableGain([0.0, 1.0, 1.0], [0.0, 1.0, 2.0])

    def test_rejects_shape_mismatch(self):
        with pytest.raises(GainError):
            TableGain([0.0, 1.0], [0.0, 1.0, 2.0])

    def test_rejects_single_node(self):
        with pytest.raises(GainError):
            TableGain([0.0], [0.0])


class TestRunningMaxEnvelope:
    def test_cubic_envelope_value_at_two(self, gamma_paper):
        # |p| on [0, 2] peaks at the interior max p(1) = 5/6
        assert gamma_paper(2.0) == pytest.approx(1.3 * 5 / 6, abs=1e-9)

    def test_envelope_monotone(self, gamma_paper):
        s = np.linspace(0, 50, 2001)
        assert np.all(np.diff(gamma_paper(s)) >= 0)

    def test_sine_envelope_saturates_at_one(self, delta_paper):
        assert delta_paper(5.0) == pytest.approx(1.0, abs=1e-3)
        assert delta_paper(50.0) == pytest.approx(1.0, abs=1e-3)
        assert delta_paper(50.0) >= delta_paper(5.0)

    def test_envelope_uses_absolute_value(self):
        env = running_max_envelope(
            lambda s: -np.asarray(s, dtype=float), 10.0
        )
        assert env(4.0) == pytest.approx(4.0, abs=1e-9)

    def test_bad_arguments(self):
        with pytest.raises(GainError):
            running_max_envelope(lambda s: s, -1.0)
        with pytest.raises(GainError):
            running_max_envelope(lambda s: s, 1.0, grid_step=0.0)

    def test_non_finite_base_rejected(self):
        with pytest.raises(GainError):
            running_max_envelope(
                lambda s: np.where(np.asarray(s) > 0.5, np.inf, 0.0), 1.0
            )


class TestCompose:
    def test_linear_composition(self):
        g = ScalarGain(lambda s: 2.0 * np.asarray(s, dtype=float), "Kinf")
        d = ScalarGain(lambda s: 0.25 * np.asarray(s, dtype=float), "Kinf")
        c = compose(g, d)
        assert c(8.0) == 4.0
        assert c.claimed_class == "Kinf"

    def test_class_downgrades_to_k(self):
        g = ScalarGain(lambda s: np.asarray(s, dtype=float), "K")
        c = compose(g, identity())
        assert c.claimed_class == "K"

    def test_paper_composition_near_one(self, gamma_paper, delta_paper):
        # frozen regression value: gamma(delta(1)) with delta(1) = sin(0.1)
        c = compose(gamma_paper, delta_paper)
        assert c(1.0) == pytest.approx(0.24054767898879442, abs=1e-9)

    def test_paper_composed_sup_is_13_over_12(self, gamma_paper, delta_paper):
        c = compose(gamma_paper, delta_paper)
        s = np.linspace(0.0, 50.0, 100001)
        assert float(np.max(c(s))) == pytest.approx(13 / 12, abs=1e-6)


class TestInvert:
    def test_round_trip_quadratic(self):
        g = ScalarGain(lambda s: np.asarray(s, dtype=float) ** 2, "Kinf")
        assert invert(g, 4.0) == pytest.approx(2.0, rel=1e-10)

    def test_zero_target(self):
        assert invert(identity(), 0.0) == 0.0

    def test_infinite_target_unbounded_gain(self):
        assert invert(identity(), math.inf) == math.inf

    def test_infinite_target_saturating_gain(self, delta_paper):
        with pytest.raises(BracketError):
            invert(delta_paper, math.inf)

    def test_negative_target(self):
        with pytest.raises(BracketError):
            invert(identity(), -1.0)

    def test_plateau_inverse_is_leftmost_preimage(self, gamma_paper):
        # gamma is flat on [1, 2] at the level 1.3*p(1); the inverse must
        # pin the left edge of the plateau
        assert invert(gamma_paper, 1.3 * 5 / 6) == pytest.approx(1.0,
                                                                 abs=1e-6)

    def test_saturated_target_raises(self, delta_paper):
        with pytest.raises(BracketError):
            invert(delta_paper, 1.5)

    def test_non_monotone_detected_during_expansion(self):
        g = ScalarGain(lambda s: np.sin(np.asarray(s, dtype=float)), "K")
        with pytest.raises(GainError):
            invert(g, 2.0)

    def test_empty_bracket_hint(self):
        with pytest.raises(GainError):
            invert(identity(), 1.0, bracket_hint=(2.0, 1.0))

    def test_random_table_round_trips(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            xs = np.concatenate([[0.0], np.cumsum(rng.uniform(0.1, 1.0, 7))])
            ys = np.concatenate([[0.0], np.cumsum(rng.uniform(0.1, 1.0, 7))])
            g = TableGain(xs, ys, claimed_class="Kinf")
            s = rng.uniform(xs[1], xs[-1])
            assert invert(g, float(g(s))) == pytest.approx(
                s, rel=1e-10, abs=1e-10
            )


class TestScanSmallGain:
    def test_globally_holding_pair(self):
        g = ScalarGain(lambda s: 0.5 * np.asarray(s, dtype=float), "Kinf")
        pieces = scan_small_gain(g, g, (0.0, 10.0), 0.01)
        assert pieces == [((0.0, 10.0), "holds")]

    def test_regime_change_refined(self):
        # gamma(delta(s)) = s^2: holds below 1, fails above
        g = ScalarGain(lambda s: np.asarray(s, dtype=float) ** 2, "Kinf")
        pieces = scan_small_gain(g, identity(), (0.0, 2.0), 0.01)
        assert [v for _, v in pieces] == ["holds", "fails"]
        assert pieces[0][0][1] == pytest.approx(1.0, abs=1e-6)

    def test_planar_example_regions(self, planar_spec):
        pieces = scan_small_gain(planar_spec.gamma, planar_spec.delta,
                                 (0.0, 20.0), 0.01)
        assert [v for _, v in pieces] == ["holds", "fails", "holds"]
        assert pieces[0][0][1] == pytest.approx(2.483, abs=1e-2)
        assert pieces[1][0][1] == pytest.approx(5.496, abs=1e-2)

    def test_tie_counts_as_fails(self):
        # gamma o delta = s exactly: the strict inequality never holds
        pieces = scan_small_gain(identity(), identity(), (0.0, 1.0), 0.1)
        assert pieces == [((0.0, 1.0), "fails")]

    def test_bad_interval(self):
        with pytest.raises(GainError):
            scan_small_gain(identity(), identity(), (2.0, 1.0), 0.1)
        with pytest.raises(GainError):
            scan_small_gain(identity(), identity(), (0.0, 1.0), 0.0)


class TestBilimitRatios:
    def test_linear_ratios_constant(self):
        g = ScalarGain(lambda s: 0.5 * np.asarray(s, dtype=float), "Kinf")
        rep = bilimit_ratios(g, g, 1e-2, 1e2)
        assert rep.worst_zero_ratio == pytest.approx(0.25, rel=1e-12)
        assert rep.worst_infinity_ratio == pytest.approx(0.25, rel=1e-12)
        assert len(rep.zero_probes) == 9
        assert rep.zero_probes[0] == 1e-2

    def test_probe_sequences_geometric(self):
        g = identity()
        rep = bilimit_ratios(g, g, 1e-2, 1e2, n_probes=4)
        assert np.allclose(rep.zero_probes, 1e-2 * 0.5 ** np.arange(4))
        assert np.allclose(rep.infinity_probes, 1e2 * 2.0 ** np.arange(4))

    def test_bad_probe_anchors(self):
        with pytest.raises(GainError):
            bilimit_ratios(identity(), identity(), 1.0, 1.0)
