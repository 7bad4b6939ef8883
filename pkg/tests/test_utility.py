import numpy as np
import pytest
from _oracles import net_benefit_recount
from hypothesis import given, settings
from hypothesis import strategies as st

from fairgate.errors import GridMismatch, InputError, ThresholdOutOfRange
from fairgate.utility import (
    DEFAULT_BAND,
    DEFAULT_GRID,
    band_report,
    decision_curve,
    net_benefit,
)


class TestNetBenefit:
    def test_hand_arithmetic_example(self):
        # N=100, TP=30, FP=10 at t=0.15
        probas = np.array([0.9] * 30 + [0.9] * 10 + [0.01] * 60)
        y = np.array([1] * 30 + [0] * 10 + [0] * 60)
        nb = net_benefit(probas, y, 0.15)
        assert nb == pytest.approx(0.3 - 0.1 * (0.15 / 0.85), abs=1e-12)
        assert nb == pytest.approx(0.28235, abs=1e-5)

    def test_no_positive_predictions_is_zero(self):
        probas = np.full(50, 0.01)
        y = np.array([0, 1] * 25)
        assert net_benefit(probas, y, 0.5) == 0.0

    def test_perfect_classifier_equals_prevalence(self):
        y = np.array([1] * 30 + [0] * 70)
        probas = y.astype(float)
        for t in (0.1, 0.25, 0.5):
            assert net_benefit(probas, y, t) == pytest.approx(0.3)

    def test_threshold_out_of_range(self):
        with pytest.raises(ThresholdOutOfRange):
            net_benefit(np.array([0.5]), np.array([1]), 1.0)
        with pytest.raises(ThresholdOutOfRange):
            net_benefit(np.array([0.5]), np.array([1]), 0.0)

    def test_ties_classified_positive(self):
        probas = np.array([0.3, 0.3])
        y = np.array([1, 0])
        # both predicted positive at exactly t=0.3
        assert net_benefit(probas, y, 0.3) == pytest.approx(
            0.5 - 0.5 * (0.3 / 0.7))

    @given(st.lists(st.tuples(st.floats(0, 1), st.integers(0, 1)),
                    min_size=1, max_size=150),
           st.integers(1, 49))
    @settings(max_examples=80, deadline=None)
    def test_brute_force_recount_property(self, pairs, tk):
        probas = np.array([p for p, _ in pairs])
        y = np.array([label for _, label in pairs])
        t = tk / 100.0
        assert net_benefit(probas, y, t) == pytest.approx(
            net_benefit_recount(probas, y, t), abs=1e-12)


class TestDecisionCurve:
    def random_curve(self, seed=0, n=400, model_id=""):
        rng = np.random.default_rng(seed)
        probas = rng.random(n)
        y = (rng.random(n) < probas).astype(int)
        return decision_curve(probas, y, model_id=model_id), probas, y

    def test_default_grid_spans_001_to_050(self):
        assert DEFAULT_GRID[0] == 0.01 and DEFAULT_GRID[-1] == 0.50
        assert len(DEFAULT_GRID) == 50

    def test_treat_none_is_identically_zero_in_export(self):
        curve, _, _ = self.random_curve()
        csv_text = curve.to_csv()
        for line in csv_text.splitlines()[1:]:
            assert line.rsplit(",", 1)[1] == "0.0"

    def test_treat_all_crosses_zero_at_prevalence(self):
        curve, _, y = self.random_curve(seed=1)
        prev = curve.prevalence
        crossings = [
            t for t, nb_a, nb_b in zip(curve.grid, curve.nb_treat_all,
                                       curve.nb_treat_all[1:])
            if nb_a >= 0 >= nb_b
        ]
        assert crossings, "treat-all never crossed zero on the grid"
        assert abs(crossings[0] - prev) <= 0.01 + 1e-9

    def test_nb_never_exceeds_prevalence(self):
        curve, _, _ = self.random_curve(seed=2)
        assert max(curve.nb_model) <= curve.prevalence + 1e-12

    def test_matches_per_point_net_benefit(self):
        curve, probas, y = self.random_curve(seed=3)
        for p in curve.points[::7]:
            assert p.nb == pytest.approx(net_benefit(probas, y, p.threshold),
                                         abs=1e-15)

    def test_byte_identical_exports_for_identical_inputs(self):
        a, probas, y = self.random_curve(seed=4)
        b = decision_curve(probas, y)
        assert a.to_csv() == b.to_csv()

    def test_grid_validation(self):
        probas = np.array([0.5, 0.6])
        y = np.array([0, 1])
        with pytest.raises(InputError):
            decision_curve(probas, y, grid=[0.2, 0.1, 0.3])
        with pytest.raises(ThresholdOutOfRange):
            decision_curve(probas, y, grid=[0.0, 0.5])


class TestBandReport:
    def test_identical_models_zero_delta(self):
        rng = np.random.default_rng(5)
        probas = rng.random(300)
        y = (rng.random(300) < probas).astype(int)
        a = decision_curve(probas, y)
        b = decision_curve(probas, y)
        report = band_report(a, b)
        assert report.delta_nb_max == 0.0
        assert report.utility_preserved

    def test_single_flip_bound_on_large_n(self):
        rng = np.random.default_rng(6)
        n = 10_000
        probas = rng.random(n)
        y = (rng.random(n) < probas).astype(int)
        flipped = probas.copy()
        flipped[0] = 1.0 - flipped[0]  # one prediction changes
        base = decision_curve(probas, y)
        mit = decision_curve(flipped, y)
        report = band_report(base, mit, bound=1.0)
        t_hi = DEFAULT_BAND[1]
        bound = (2 / n) * max(1.0, t_hi / (1 - t_hi))
        assert report.delta_nb_max <= bound + 1e-12

    def test_grid_mismatch(self):
        rng = np.random.default_rng(7)
        probas = rng.random(100)
        y = (rng.random(100) < 0.5).astype(int)
        a = decision_curve(probas, y)
        b = decision_curve(probas, y, grid=[0.1, 0.2, 0.3],
                           band=(0.1, 0.3))
        with pytest.raises(GridMismatch):
            band_report(a, b)

    def test_flags(self):
        y = np.array([1] * 50 + [0] * 50)
        good = decision_curve(y.astype(float), y)  # perfect: nb = prev
        none_model = decision_curve(np.zeros(100), y)  # treat-none
        report = band_report(good, none_model, bound=0.001)
        assert not report.utility_preserved
        assert not report.both_positive_in_band
        assert report.min_nb_baseline == pytest.approx(0.5)
        assert report.min_nb_mitigated == 0.0
