import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairgate.errors import InputError, SingleClassAUC, WidthMismatch
from fairgate.models import (
    LogisticModel,
    TrainConfig,
    TreeEnsemble,
    auc_score,
    cross_validate,
    evaluate,
    logistic_objective,
    model_from_jsonable,
    model_to_jsonable,
    predict,
    train_gbt,
    train_logistic,
    train_rf,
    weighted_logloss,
)
from fairgate.tabular import ColumnSchema, DataTable, Schema


def toy_dataset(n=200, d=5, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    logit = 1.5 * X[:, 0] - 1.0 * X[:, 1]
    y = (rng.random(n) < 1 / (1 + np.exp(-logit))).astype(int)
    return X, y


class TestTrainConfig:
    def test_family_defaults_match_published_hyperparameters(self):
        gbt = TrainConfig.for_family("gbt")
        assert (gbt.n_estimators, gbt.max_depth, gbt.learning_rate) == (100, 3, 0.1)
        rf = TrainConfig.for_family("rf")
        assert rf.n_estimators == 200
        logistic = TrainConfig.for_family("logistic")
        assert logistic.C == 1.0

    def test_invariants(self):
        with pytest.raises(InputError):
            TrainConfig(family="gbt", n_estimators=0, max_depth=3, learning_rate=0.1)
        with pytest.raises(InputError):
            TrainConfig(family="gbt", n_estimators=1, max_depth=0, learning_rate=0.1)
        with pytest.raises(InputError):
            TrainConfig(family="gbt", n_estimators=1, max_depth=1, learning_rate=0.0)
        with pytest.raises(InputError):
            TrainConfig(family="logistic", n_estimators=1, max_depth=1,
                        learning_rate=0.1, C=0.0)


class TestLogistic:
    def test_separable_1d(self):
        X = np.linspace(-2, 2, 40).reshape(-1, 1)
        y = (X[:, 0] > 0).astype(int)
        model = train_logistic(X, y)
        assert model.coef[0] > 0
        preds = predict(model, X)
        assert (preds.label == y).all()

    def test_constant_feature_shrunk_to_zero_intercept_is_log_odds(self):
        X = np.full((100, 1), 7.0)
        y = np.array([1] * 30 + [0] * 70)
        model = train_logistic(X, y)
        # the penalized optimum puts the whole fit on the free intercept
        assert model.decision(X[:1])[0] == pytest.approx(math.log(0.3 / 0.7), abs=1e-6)
        assert abs(model.coef[0]) < 1e-6

    def test_gradient_matches_central_finite_differences(self):
        rng = np.random.default_rng(42)
        X, y = toy_dataset(n=60, d=4, seed=1)
        Xa = np.hstack([X, np.ones((60, 1))])
        w = rng.uniform(0.5, 2.0, 60)
        w = w * (60 / w.sum())
        for _ in range(5):
            theta = rng.normal(scale=0.8, size=5)
            _, grad = logistic_objective(theta, Xa, y.astype(float), w, C=1.0)
            h = 1e-6
            fd = np.empty_like(theta)
            for j in range(theta.size):
                up, dn = theta.copy(), theta.copy()
                up[j] += h
                dn[j] -= h
                lu, _ = logistic_objective(up, Xa, y.astype(float), w, C=1.0)
                ld, _ = logistic_objective(dn, Xa, y.astype(float), w, C=1.0)
                fd[j] = (lu - ld) / (2 * h)
            assert np.abs(grad - fd).max() < 1e-5

    def test_weight_scale_invariance_within_tolerance(self):
        X, y = toy_dataset(n=150, d=3, seed=2)
        rng = np.random.default_rng(3)
        w = rng.uniform(0.2, 3.0, 150)
        a = train_logistic(X, y, w)
        b = train_logistic(X, y, 16.0 * w)
        assert np.abs(a.coef - b.coef).max() < 1e-7
        assert abs(a.intercept - b.intercept) < 1e-7

    def test_deterministic(self):
        X, y = toy_dataset(seed=4)
        a = train_logistic(X, y)
        b = train_logistic(X, y)
        assert (a.coef == b.coef).all() and a.intercept == b.intercept


class TestGbt:
    def test_single_round_newton_leaf_values_hand_computed(self):
        # x=0 group: y = 0,0,0,1 ; x=1 group: y = 1,1,1,0 ; base rate 0.5
        # g_i = 0.5 - y_i, h_i = 0.25 -> leaf = -G/H = -(+-1.0)/1.0
        X = np.array([[0.0]] * 4 + [[1.0]] * 4)
        y = np.array([0, 0, 0, 1, 1, 1, 1, 0])
        cfg = TrainConfig(family="gbt", n_estimators=1, max_depth=1, learning_rate=1.0)
        ens = train_gbt(X, y, None, cfg)
        out = ens.raw_output(X)
        assert out[0] == pytest.approx(-1.0, abs=1e-12)
        assert out[4] == pytest.approx(1.0, abs=1e-12)

    def test_uniform_weights_give_identical_model(self):
        X, y = toy_dataset(n=120, d=4, seed=5)
        cfg = TrainConfig(family="gbt", n_estimators=20, max_depth=3, learning_rate=0.1)
        a = train_gbt(X, y, None, cfg)
        b = train_gbt(X, y, np.full(120, 3.7), cfg)
        assert (a.raw_output(X) == b.raw_output(X)).all()

    def test_power_of_two_weight_scaling_exact(self):
        X, y = toy_dataset(n=120, d=4, seed=6)
        rng = np.random.default_rng(7)
        w = rng.uniform(0.5, 2.0, 120)
        cfg = TrainConfig(family="gbt", n_estimators=15, max_depth=3, learning_rate=0.1)
        a = train_gbt(X, y, w, cfg)
        b = train_gbt(X, y, 8.0 * w, cfg)
        assert (a.raw_output(X) == b.raw_output(X)).all()

    def test_training_loss_non_increasing_over_rounds(self):
        X, y = toy_dataset(n=250, d=5, seed=8)
        cfg = TrainConfig(family="gbt", n_estimators=100, max_depth=3, learning_rate=0.1)
        ens = train_gbt(X, y, None, cfg)
        w = np.ones(X.shape[0])
        losses = [weighted_logloss(y, ens.raw_output(X, m), w)
                  for m in range(0, 101, 5)]
        assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))

    def test_depth_bound(self):
        X, y = toy_dataset(n=300, d=6, seed=9)
        cfg = TrainConfig(family="gbt", n_estimators=30, max_depth=3, learning_rate=0.1)
        ens = train_gbt(X, y, None, cfg)
        assert all(t.max_depth_reached() <= 3 for t in ens.trees)

    def test_serialization_roundtrip(self):
        X, y = toy_dataset(n=80, d=3, seed=10)
        cfg = TrainConfig(family="gbt", n_estimators=5, max_depth=2, learning_rate=0.2)
        ens = train_gbt(X, y, None, cfg)
        doc = model_to_jsonable(ens)
        again = model_from_jsonable(doc)
        assert (again.raw_output(X) == ens.raw_output(X)).all()


class TestRf:
    def test_degenerate_forest_equals_single_gini_tree(self):
        from fairgate.trees import grow_gini_tree

        X, y = toy_dataset(n=100, d=4, seed=11)
        cfg = TrainConfig(family="rf", n_estimators=1, max_depth=3, learning_rate=0.1)
        forest = train_rf(X, y, None, cfg, bootstrap=False, feature_subsample=False)
        rng = np.random.default_rng(0)
        single = grow_gini_tree(X, y, np.ones(100), max_depth=3, rng=rng)
        assert (forest.trees[0].predict(X) == single.predict(X)).all()

    def test_same_seed_identical_predictions(self):
        X, y = toy_dataset(n=150, d=5, seed=12)
        cfg = TrainConfig(family="rf", n_estimators=10, max_depth=4, learning_rate=0.1)
        a = train_rf(X, y, None, cfg)
        b = train_rf(X, y, None, cfg)
        assert (a.raw_output(X) == b.raw_output(X)).all()

    def test_depth_bound(self):
        X, y = toy_dataset(n=200, d=5, seed=20)
        cfg = TrainConfig(family="rf", n_estimators=8, max_depth=4, learning_rate=0.1)
        forest = train_rf(X, y, None, cfg)
        assert all(t.max_depth_reached() <= 4 for t in forest.trees)

    def test_probability_average_within_unit_interval(self):
        X, y = toy_dataset(n=120, d=4, seed=13)
        cfg = TrainConfig(family="rf", n_estimators=7, max_depth=4, learning_rate=0.1)
        proba = predict(train_rf(X, y, None, cfg), X).proba
        assert proba.min() >= 0.0 and proba.max() <= 1.0


class TestPredict:
    def test_empty_ensemble_gives_half(self):
        cfg = TrainConfig(family="gbt", n_estimators=1, max_depth=1, learning_rate=0.1)
        ens = TreeEnsemble(trees=[], base_score=0.0, mode="additive-logit", config=cfg)
        X = np.zeros((5, 3))
        assert (predict(ens, X).proba == 0.5).all()

    def test_zero_coefficients_constant_sigmoid(self):
        cfg = TrainConfig.for_family("logistic")
        model = LogisticModel(coef=np.zeros(3), intercept=1.2, config=cfg)
        proba = predict(model, np.random.default_rng(0).normal(size=(10, 3))).proba
        assert np.allclose(proba, 1 / (1 + math.exp(-1.2)))

    def test_single_depth1_tree_depends_only_on_split_side(self):
        X = np.array([[0.0, 5.0], [0.0, -5.0], [0.0, 1.0], [0.0, -1.0],
                      [1.0, 2.0], [1.0, -2.0], [1.0, 4.0], [1.0, -4.0]])
        y = np.array([0, 0, 0, 0, 1, 1, 1, 1])
        cfg = TrainConfig(family="gbt", n_estimators=1, max_depth=1, learning_rate=1.0)
        ens = train_gbt(X, y, None, cfg)
        proba = predict(ens, X).proba
        assert (proba[:4] == proba[0]).all() and (proba[4:] == proba[4]).all()
        assert proba[0] != proba[4]

    def test_width_mismatch(self):
        cfg = TrainConfig.for_family("logistic")
        model = LogisticModel(coef=np.zeros(3), intercept=0.0, config=cfg)
        with pytest.raises(WidthMismatch):
            predict(model, np.zeros((4, 2)))


class TestEvaluate:
    def test_perfect_ranking_auc_one(self):
        y = np.array([0, 0, 1, 1])
        assert auc_score(np.array([0.1, 0.2, 0.8, 0.9]), y) == 1.0

    def test_all_ties_auc_half(self):
        y = np.array([0, 1] * 10)
        assert auc_score(np.full(20, 0.3), y) == 0.5

    def test_single_class_raises(self):
        with pytest.raises(SingleClassAUC):
            auc_score(np.array([0.1, 0.9]), np.array([1, 1]))

    def test_auc_equals_pairwise_concordance_oracle(self):
        rng = np.random.default_rng(14)
        proba = np.round(rng.random(200), 2)  # coarse grid forces ties
        y = (rng.random(200) < 0.4).astype(int)
        fast = auc_score(proba, y)
        pos = proba[y == 1]
        neg = proba[y == 0]
        wins = sum((p > n) + 0.5 * (p == n) for p in pos for n in neg)
        oracle = wins / (pos.size * neg.size)
        assert abs(fast - oracle) < 1e-12

    @given(st.lists(st.tuples(st.floats(0, 1), st.integers(0, 1)),
                    min_size=4, max_size=120))
    @settings(max_examples=50, deadline=None)
    def test_auc_oracle_property(self, pairs):
        proba = np.array([p for p, _ in pairs])
        y = np.array([label for _, label in pairs])
        if y.min() == y.max():
            return
        fast = auc_score(proba, y)
        pos = proba[y == 1]
        neg = proba[y == 0]
        wins = sum((p > n) + 0.5 * (p == n) for p in pos for n in neg)
        assert abs(fast - wins / (pos.size * neg.size)) < 1e-12

    def test_report_metrics_in_unit_interval(self):
        X, y = toy_dataset(n=150, d=4, seed=15)
        cfg = TrainConfig.for_family("gbt", n_estimators=10)
        report = evaluate(predict(train_gbt(X, y, None, cfg), X), y)
        for value in report.to_jsonable().values():
            assert 0.0 <= value <= 1.0


def cv_table(n=40, seed=16):
    rng = np.random.default_rng(seed)
    schema = Schema((ColumnSchema("x", "numeric"),
                     ColumnSchema("s", "sensitive", audited=True),
                     ColumnSchema("y", "target")))
    rows = []
    for _ in range(n):
        s = float(rng.integers(0, 2))
        y = float(rng.integers(0, 2))
        rows.append((float(rng.normal() + 2 * y), s, y))
    return DataTable(schema, rows)


class TestCrossValidate:
    def test_leave_one_out_boundary_runs(self):
        table = cv_table(n=10, seed=17)
        cfg = TrainConfig(family="logistic", n_estimators=1, max_depth=1,
                          learning_rate=0.1)
        report = cross_validate(table, k=10, cfg=cfg, seed=1)
        assert 0.0 <= report.mean["accuracy"] <= 1.0

    def test_identical_folds_for_fixed_seed(self):
        table = cv_table(n=60, seed=18)
        cfg = TrainConfig(family="gbt", n_estimators=5, max_depth=2,
                          learning_rate=0.3)
        a = cross_validate(table, k=5, cfg=cfg, seed=9)
        b = cross_validate(table, k=5, cfg=cfg, seed=9)
        assert a.to_jsonable() == b.to_jsonable()

    def test_k_validation(self):
        table = cv_table(n=20, seed=19)
        cfg = TrainConfig.for_family("logistic")
        with pytest.raises(InputError):
            cross_validate(table, k=1, cfg=cfg)
        with pytest.raises(InputError):
            cross_validate(table, k=21, cfg=cfg)
