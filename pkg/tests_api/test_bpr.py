from pathlib import Path
import sys

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

import numpy as np
import pytest

from app.errors import DatasetError, UnknownEntityError
from app.services import bpr
from app.services.evaluation import bpr_relevance, context_profiles, evaluate
from models.bpr_models import BprConfig, GradientCase
from models.dataset_models import UserProfile

FAST = BprConfig(learning_rate=0.05, init_scale=0.1, epochs=100, seed=0)


def test_predict_is_a_dot_product():
    model = bpr.FactorModel(
        user_ids=(7,),
        item_ids=(3, 4),
        user_factors=np.array([[1.0, 2.0]]),
        item_factors=np.array([[3.0, 0.5], [0.0, -1.0]]),
    )
    assert bpr.predict(model, 7, 3) == pytest.approx(4.0)
    assert model.score_items(7, [3, 4]) == pytest.approx([4.0, -2.0])
    assert model.d == 2


def test_unknown_ids_raise():
    model = bpr.FactorModel((1,), (1,), np.zeros((1, 2)), np.zeros((1, 2)))
    with pytest.raises(UnknownEntityError):
        model.predict(2, 1)
    with pytest.raises(KeyError):
        model.predict(1, 2)


class TestGradients:
    """Analytic gradients against central differences"""

    @pytest.mark.parametrize("reg_lambda", [0.0, 0.01, 0.5])
    def test_gradient_check(self, reg_lambda):
        cfg = BprConfig(reg_lambda=reg_lambda)
        rng = np.random.default_rng(0)
        for _ in range(100):
            assert bpr.gradient_check(cfg, rng=rng) < 1e-4

    def test_explicit_case(self):
        case = GradientCase(
            user_factors=np.array([[0.3, -0.2]]),
            item_factors=np.array([[0.1, 0.4], [-0.5, 0.2]]),
            u=0, i=0, j=1,
        )
        assert bpr.gradient_check(BprConfig(), case=case) < 1e-6

    def test_loss_matches_definition(self):
        users = np.array([[1.0, 0.0]])
        items = np.array([[2.0, 0.0], [0.0, 1.0]])
        loss, _, _ = bpr.bpr_loss_and_gradients(users, items, 0, 0, 1, 0.0)
        assert loss == pytest.approx(np.log1p(np.exp(-2.0)))


class TestTraining:
    """SGD on small synthetic data"""

    def test_single_triple_is_learned(self):
        model = bpr.train([UserProfile(1, (10,), (20,))], BprConfig(learning_rate=0.1, init_scale=0.1, epochs=100))
        assert model.predict(1, 10) > model.predict(1, 20)

    def test_objective_never_drops_without_regularization(self):
        cfg = BprConfig(learning_rate=0.05, init_scale=0.1, epochs=50, reg_lambda=0.0)
        model = bpr.train([UserProfile(1, (10,), (20,))], cfg)
        values = [value for _, value in model.history]
        assert len(values) == 50
        assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))

    def test_training_is_deterministic(self, planted_dataset):
        cfg = BprConfig(epochs=5, seed=3)
        first = bpr.train(planted_dataset.train_profiles, cfg)
        second = bpr.train(planted_dataset.train_profiles, cfg)
        assert np.array_equal(first.user_factors, second.user_factors)
        assert np.array_equal(first.item_factors, second.item_factors)

    def test_separates_planted_clusters(self, planted_dataset):
        """FAST (lr 0.05, init 0.1, 100 epochs) is used because BprConfig() defaults underfit this small catalog."""
        profiles = planted_dataset.train_profiles + context_profiles(planted_dataset.instances)
        candidates = sorted({c for i in planted_dataset.instances for c in i.candidate_ids})
        model = bpr.train(profiles, FAST, extra_items=candidates)
        report = evaluate(bpr_relevance(model), planted_dataset.instances, bootstrap_samples=0)
        assert report.map_at_1 >= 0.9

    def test_needs_positives(self):
        with pytest.raises(DatasetError):
            bpr.train([UserProfile(1, (), (5,))], BprConfig())

    def test_user_who_likes_everything(self):
        with pytest.raises(DatasetError):
            bpr.train([UserProfile(1, (1, 2)), UserProfile(2, (1,))], BprConfig(epochs=1))

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            BprConfig(d=0)
        with pytest.raises(ValueError):
            BprConfig(learning_rate=0.0)


def test_save_and_load(tmp_path):
    model = bpr.train([UserProfile(1, (10, 11), (20,)), UserProfile(2, (20,), (10,))], BprConfig(epochs=3))
    path = tmp_path / "bpr_model.npz"
    bpr.save_model(model, path)
    loaded = bpr.load_model(path)
    assert loaded.user_ids == model.user_ids
    assert loaded.item_ids == model.item_ids
    assert np.array_equal(loaded.item_factors, model.item_factors)
    assert loaded.history == model.history
    assert loaded.predict(2, 11) == model.predict(2, 11)
