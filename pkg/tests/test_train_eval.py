import math

import numpy as np
import pytest

from gafunet.hsi import stratified_split
from gafunet.model import ModelConfig, build_model
from gafunet.synthetic import make_synthetic_cube
from gafunet.train import (TrainConfig, evaluate, lr_at_epoch, majority_vote,
                           metrics_from_confusion, predict_map, train)


def small_cube(seed=0, size=12, bands=24, classes=2):
    return make_synthetic_cube(size, size, bands, classes, seed=seed)


def toy_model(classes=2, seed=0, **kw):
    cfg = dict(num_classes=classes, gaf_side=8, base_filters=4, depth=2, seed=seed)
    cfg.update(kw)
    return build_model(ModelConfig(**cfg))


class TestLrSchedule:
    def test_defaults(self):
        cfg = TrainConfig()
        assert cfg.epochs == 150
        assert cfg.batch_size == 64
        assert cfg.lr0 == 1e-3
        assert cfg.train_fraction == 0.10

    def test_epoch_zero(self):
        assert lr_at_epoch(TrainConfig(), 0) == 1e-3

    def test_epoch_100_is_one_decade_of_e(self):
        assert abs(lr_at_epoch(TrainConfig(), 100) - 1e-3 * math.exp(-1)) < 1e-12

    def test_strictly_decreasing(self):
        cfg = TrainConfig()
        lrs = [lr_at_epoch(cfg, e) for e in range(20)]
        assert all(a > b for a, b in zip(lrs, lrs[1:]))

    def test_negative_epoch_rejected(self):
        with pytest.raises(ValueError):
            lr_at_epoch(TrainConfig(), -1)

    def test_bad_config_rejected(self):
        with pytest.raises(ValueError):
            TrainConfig(epochs=0)
        with pytest.raises(ValueError):
            TrainConfig(lr0=-1.0)


class TestMajorityVote:
    def test_unanimous(self):
        logits = np.zeros((4, 2, 2))
        logits[3] = 10.0
        assert majority_vote(logits) == 3

    def test_strict_majority(self):
        logits = np.zeros((3, 4, 4))
        flat = np.zeros(16, dtype=int)
        flat[:9] = 1
        flat[9:] = 2
        for pos, cls in enumerate(flat):
            logits[cls, pos // 4, pos % 4] = 5.0
        assert majority_vote(logits) == 1

    def test_matches_exhaustive_tally(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            logits = rng.normal(size=(3, 4, 4))
            votes = [int(logits[:, y, x].argmax()) for y in range(4) for x in range(4)]
            counts = [votes.count(c) for c in range(3)]
            expected = counts.index(max(counts))
            assert majority_vote(logits) == expected

    def test_invariant_to_positive_rescaling(self):
        rng = np.random.default_rng(1)
        logits = rng.normal(size=(4, 8, 8))
        assert majority_vote(logits) == majority_vote(3.7 * logits)

    def test_modal_tie_breaks_low(self):
        logits = np.zeros((2, 2, 1))
        logits[0, 0, 0] = 1.0
        logits[1, 1, 0] = 1.0  # one vote each
        assert majority_vote(logits) == 0


class TestMetrics:
    def test_perfect_predictions(self):
        m = metrics_from_confusion(np.diag([10, 20, 30]))
        assert m["OA"] == 1.0 and m["AA"] == 1.0 and m["kappa"] == 1.0

    def test_hand_computed_two_class(self):
        m = metrics_from_confusion([[40, 10], [20, 30]])
        assert abs(m["OA"] - 0.70) < 1e-15
        assert abs(m["AA"] - 0.70) < 1e-15
        assert abs(m["kappa"] - 0.40) < 1e-15

    def test_random_predictions_kappa_near_zero(self):
        rng = np.random.default_rng(2)
        c, n = 4, 10000
        truth = rng.integers(0, c, size=n)
        pred = rng.integers(0, c, size=n)
        cm = np.zeros((c, c), dtype=int)
        np.add.at(cm, (truth, pred), 1)
        kappa = metrics_from_confusion(cm)["kappa"]
        # kappa of independent uniform predictions: sd ~ 1/sqrt(n * (1-p_e))
        sigma = 1.0 / math.sqrt(n * (1 - 1.0 / c))
        assert abs(kappa) < 3 * sigma

    def test_kappa_bounded_by_oa(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            cm = rng.integers(0, 50, size=(3, 3))
            cm += np.diag(rng.integers(1, 50, size=3))
            m = metrics_from_confusion(cm)
            assert m["kappa"] <= m["OA"] + 1e-12

    def test_absent_class_excluded_with_warning(self):
        cm = [[5, 0, 0], [1, 4, 0], [0, 0, 0]]
        with pytest.warns(UserWarning, match="absent"):
            m = metrics_from_confusion(cm)
        assert m["per_class_recall"][2] is None
        assert abs(m["AA"] - (1.0 + 0.8) / 2) < 1e-12


class TestTraining:
    def test_single_epoch_logs_finite_loss(self):
        cube = small_cube()
        split = stratified_split(cube, (0.2, 0.2, 0.6), seed=0)
        model = toy_model()
        _, log = train(model, cube, split, TrainConfig(epochs=1, batch_size=16, seed=0))
        assert len(log) == 1
        assert math.isfinite(log[0]["train_loss"])

    def test_loss_halves_on_separable_cube(self):
        cube = small_cube(seed=1)
        split = stratified_split(cube, (0.3, 0.2, 0.5), seed=1)
        model = toy_model(seed=1)
        _, log = train(model, cube, split, TrainConfig(epochs=20, batch_size=8, seed=1))
        assert log[-1]["train_loss"] <= 0.5 * log[0]["train_loss"]

    def test_same_seed_identical_first_epoch_loss(self):
        cube = small_cube(seed=2)
        split = stratified_split(cube, (0.2, 0.2, 0.6), seed=2)
        losses = []
        for _ in range(2):
            model = toy_model(seed=2)
            _, log = train(model, cube, split, TrainConfig(epochs=1, batch_size=16, seed=2))
            losses.append(log[0]["train_loss"])
        assert losses[0] == losses[1]

    def test_empty_train_partition_rejected(self):
        cube = small_cube()
        split = stratified_split(cube, (0.2, 0.2, 0.6), seed=0)
        split.partition[split.partition == 0] = 2
        with pytest.raises(ValueError, match="empty"):
            train(toy_model(), cube, split, TrainConfig(epochs=1))


class TestEvaluate:
    def setup_method(self):
        self.cube = small_cube(seed=5)
        self.split = stratified_split(self.cube, (0.3, 0.2, 0.5), seed=5)
        self.model = toy_model(seed=5)
        self.model, _ = train(self.model, self.cube, self.split,
                              TrainConfig(epochs=15, batch_size=32, seed=5))

    def test_metrics_schema(self):
        m = evaluate(self.model, self.cube, self.split, "test")
        assert set(m) == {"OA", "AA", "kappa", "per_class_recall", "confusion"}
        total = sum(sum(row) for row in m["confusion"])
        assert total == int(self.split.mask("test").sum())

    def test_separable_cube_classified_well(self):
        m = evaluate(self.model, self.cube, self.split, "test")
        assert m["OA"] >= 0.9

    def test_deterministic_evaluation(self):
        a = evaluate(self.model, self.cube, self.split, "test")
        b = evaluate(self.model, self.cube, self.split, "test")
        assert a == b

    def test_predict_map_shape_and_range(self):
        labels = predict_map(self.model, self.cube)
        assert labels.shape == (self.cube.height, self.cube.width)
        assert labels.min() >= 1 and labels.max() <= self.cube.num_classes

    def test_predict_map_accuracy(self):
        labels = predict_map(self.model, self.cube)
        mask = self.cube.labeled_mask()
        acc = (labels[mask] == self.cube.labels[mask]).mean()
        assert acc >= 0.9
