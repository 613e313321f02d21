"""Projection heads, pair losses, and the mini-batch trainer."""

import math

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from artmatch import numeric
from artmatch.embedding import (
    AmdModel,
    CmlModel,
    ProjectionHead,
    TrainConfig,
    _BowTextTower,
    _init_head,
    amd_loss,
    batch_objective,
    cml_loss,
    project,
    train_cml,
)
from artmatch.errors import DegenerateInputError


def unit(v):
    return np.asarray(v, float) / np.linalg.norm(v)


class TestProject:
    def test_bias_only_head(self):
        head = ProjectionHead(W=np.zeros((3, 4)), b=np.array([1.0, 0.0, 0.0]))
        out = project(head, np.array([5.0, -1.0, 2.0, 0.0]))
        np.testing.assert_allclose(out, [1.0, 0.0, 0.0], atol=1e-12)

    def test_always_unit_norm(self):
        rng = np.random.default_rng(0)
        head = ProjectionHead(W=rng.normal(size=(6, 9)), b=rng.normal(size=6))
        for _ in range(20):
            out = project(head, rng.normal(size=9))
            assert abs(np.linalg.norm(out) - 1.0) < 1e-12

    def test_composition_oracle(self):
        # project must equal the three numeric ops composed independently
        rng = np.random.default_rng(1)
        W = rng.normal(size=(5, 7))
        b = rng.normal(size=5)
        x = rng.normal(size=7)
        expected = numeric.l2_normalize(numeric.tanh(numeric.linear(x, W, b)))
        np.testing.assert_array_equal(project(ProjectionHead(W, b), x), expected)

    def test_zero_activation_is_degenerate(self):
        head = ProjectionHead(W=np.zeros((2, 3)), b=np.zeros(2))
        with pytest.raises(DegenerateInputError):
            project(head, np.ones(3))


class TestCmlLoss:
    def test_identical_positive_is_zero(self):
        p = np.array([0.6, 0.8, 0.0])  # exactly unit in float64
        assert cml_loss(p, p.copy(), positive=True, m=0.1) == 0.0
        q = unit([0.3, -0.4, 0.5])
        assert cml_loss(q, q.copy(), positive=True, m=0.1) == pytest.approx(0.0, abs=1e-12)

    def test_negative_below_margin_is_zero(self):
        u = np.array([1.0, 0.0])
        v = np.array([0.0, 1.0])
        assert cml_loss(u, v, positive=False, m=0.1) == 0.0

    def test_negative_above_margin_arithmetic(self):
        # cos = 0.5, m = 0.1 -> 0.4
        u = np.array([1.0, 0.0])
        v = np.array([0.5, math.sqrt(3) / 2])
        assert cml_loss(u, v, positive=False, m=0.1) == pytest.approx(0.4, abs=1e-12)

    def test_nonnegative_everywhere(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            u = unit(rng.normal(size=4))
            v = unit(rng.normal(size=4))
            assert cml_loss(u, v, positive=True, m=0.1) >= 0.0
            assert cml_loss(u, v, positive=False, m=0.1) >= 0.0

    def test_positive_zero_iff_cosine_one(self):
        u = np.array([1.0, 0.0])
        assert cml_loss(u, u, positive=True, m=0.1) == 0.0
        v = unit([0.9, 0.1])
        assert cml_loss(u, v, positive=True, m=0.1) > 0.0


class TestAmdLoss:
    def test_alpha_zero_reduces_bitwise(self):
        rng = np.random.default_rng(3)
        for positive in (True, False):
            u = unit(rng.normal(size=6))
            v = unit(rng.normal(size=6))
            logits_t = rng.normal(size=4)
            logits_v = rng.normal(size=4)
            full = amd_loss(u, v, logits_t, logits_v, 1, 2, positive, 0.1, 0.0)
            assert full == cml_loss(v, u, positive, 0.1)

    def test_weighted_sum_arithmetic(self):
        # L_CML = 1 (orthogonal positive), both CE terms = ln 2, alpha = 0.01:
        # 0.98 * 1.0 + 0.01 * ln2 + 0.01 * ln2
        u = np.array([1.0, 0.0])
        v = np.array([0.0, 1.0])
        logits = np.array([0.0, 0.0])
        expected = 0.98 + 0.02 * math.log(2)
        got = amd_loss(u, v, logits, logits, 0, 0, True, 0.1, 0.01)
        assert got == pytest.approx(expected, abs=1e-12)

    def test_composition_oracle_random(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            u = unit(rng.normal(size=5))
            v = unit(rng.normal(size=5))
            lt = rng.normal(size=3)
            lv = rng.normal(size=3)
            alpha = float(rng.uniform(0, 0.49))
            m = float(rng.uniform(0, 0.5))
            expected = (
                (1 - 2 * alpha) * cml_loss(v, u, True, m)
                + alpha * numeric.cross_entropy(lt, 1)
                + alpha * numeric.cross_entropy(lv, 2)
            )
            assert amd_loss(u, v, lt, lv, 1, 2, True, m, alpha) == pytest.approx(
                expected, abs=1e-12
            )

    def test_negative_pair_skips_classifiers(self):
        u = np.array([1.0, 0.0])
        v = np.array([0.6, 0.8])
        got = amd_loss(u, v, np.zeros(2), np.zeros(2), 0, 0, False, 0.1, 0.01)
        assert got == pytest.approx(0.98 * 0.5, abs=1e-12)

    def test_label_out_of_range(self):
        u = np.array([1.0, 0.0])
        with pytest.raises(ValueError):
            amd_loss(u, u, np.zeros(2), np.zeros(2), 5, 0, True, 0.1, 0.01)


def objective_instance(seed, alpha=0.0, n_classes=None, margin=0.1):
    """A small training mini-batch with parameters, kept away from the
    hinge kink so finite differences stay valid."""
    rng = np.random.default_rng(seed)
    batch, vis_dim, text_dim, dim = 5, 6, 7, 4
    for attempt in range(50):
        X = rng.normal(size=(batch, vis_dim))
        Y = np.abs(rng.normal(size=(batch, text_dim)))
        tower = _BowTextTower(dim, text_dim)
        params = {}
        params["vis.W"], params["vis.b"] = _init_head(rng, dim, vis_dim)
        params["vis.b"] += 0.05 * rng.normal(size=dim)
        tower.init_params(rng, params)
        params["text.b"] += 0.05 * rng.normal(size=dim)
        labels = None
        if n_classes:
            labels = rng.integers(n_classes, size=batch)
            limit = math.sqrt(6 / (dim + n_classes))
            for side in ("cls_text", "cls_vis"):
                params[f"{side}.W"] = rng.uniform(-limit, limit, size=(n_classes, dim))
                params[f"{side}.b"] = 0.01 * rng.normal(size=n_classes)
        negatives = [(k, (k + 1) % batch) for k in range(batch)]

        from artmatch.embedding import _head_forward

        p_vis, _ = _head_forward(params, "vis", X)
        p_text, _ = tower.forward(params, Y)
        margins = [
            abs(float(p_text[a] @ p_vis[b]) - margin)
            for k, j in negatives
            for a, b in ((k, j), (j, k))
        ]
        if min(margins) > 1e-2:
            return params, tower, X, Y, negatives, labels
    raise AssertionError("could not build an instance away from the hinge kink")


class TestObjectiveGradients:
    def test_cml_objective_passes_grad_check(self):
        for seed in range(5):
            params, tower, X, Y, negatives, _ = objective_instance(seed)

            def loss_and_grad(p):
                return batch_objective(p, "vis", tower, X, Y, negatives, 0.1)

            err = numeric.grad_check(loss_and_grad, params)
            assert err < 1e-4, f"seed {seed}: rel err {err}"

    def test_amd_objective_passes_grad_check(self):
        for seed in range(5):
            params, tower, X, Y, negatives, labels = objective_instance(
                seed + 100, n_classes=3
            )

            def loss_and_grad(p):
                return batch_objective(
                    p, "vis", tower, X, Y, negatives, 0.1, alpha=0.01, labels=labels
                )

            err = numeric.grad_check(loss_and_grad, params)
            assert err < 1e-4, f"seed {seed}: rel err {err}"


def tiny_dataset(seed=0, n=48, classes=6, vis_dim=12, text_dim=20):
    """Directly generated encoded pairs (no text pipeline) for trainer tests."""
    rng = np.random.default_rng(seed)
    centroids_v = rng.normal(size=(classes, vis_dim))
    X = np.stack([centroids_v[i % classes] for i in range(n)]) + 0.1 * rng.normal(
        size=(n, vis_dim)
    )
    Y = np.zeros((n, text_dim))
    for i in range(n):
        Y[i, i % classes] = 1.0  # class indicator block
        Y[i, classes + (i % (text_dim - classes))] = 1.0  # sample-ish marker
    Y /= np.linalg.norm(Y, axis=1, keepdims=True)
    labels = np.array([i % classes for i in range(n)])
    return X, Y, labels


class TestTrainer:
    def test_lr_zero_leaves_parameters(self):
        X, Y, _ = tiny_dataset()
        model = CmlModel(dim=8, lr=0.0, epochs=3, seed=1, model_selection="last_epoch")
        model.fit(X, Y)
        fresh = CmlModel(dim=8, lr=0.0, epochs=0, seed=1, model_selection="last_epoch")
        fresh.fit(X, Y)
        for name in model.params_:
            np.testing.assert_array_equal(model.params_[name], fresh.params_[name])

    def test_fixed_seed_bit_identical_history(self):
        X, Y, _ = tiny_dataset()
        runs = []
        for _ in range(2):
            model = CmlModel(dim=8, epochs=5, seed=3)
            model.fit(X, Y, validation=(X[:8], Y[:8]))
            runs.append([(h.loss, h.val_mr_t2i, h.val_mr_i2t) for h in model.history_])
        assert runs[0] == runs[1]

    def test_loss_decreases(self):
        X, Y, _ = tiny_dataset()
        model = CmlModel(dim=8, epochs=30, seed=0, model_selection="last_epoch", patience=None)
        model.fit(X, Y)
        losses = [h.loss for h in model.history_]
        assert losses[-1] < losses[0]

    def test_amd_alpha_zero_matches_cml_trajectory(self):
        X, Y, labels = tiny_dataset()
        cml = CmlModel(dim=8, epochs=4, seed=7)
        cml.fit(X, Y, validation=(X[:8], Y[:8]))
        amd = AmdModel(dim=8, alpha=0.0, epochs=4, seed=7)
        amd.fit(X, Y, labels=labels, validation=(X[:8], Y[:8]))
        assert [h.loss for h in cml.history_] == [h.loss for h in amd.history_]
        np.testing.assert_array_equal(cml.params_["vis.W"], amd.params_["vis.W"])

    def test_odd_sample_count_drops_lone_trailing_sample(self):
        X, Y, _ = tiny_dataset(n=33)
        model = CmlModel(dim=8, epochs=2, seed=0, batch_size=32)
        model.fit(X, Y)
        assert len(model.history_) == 2

    def test_projections_unit(self):
        X, Y, _ = tiny_dataset()
        model = CmlModel(dim=8, epochs=3, seed=0)
        model.fit(X, Y)
        for P in (model.project_images(X), model.project_texts(Y)):
            np.testing.assert_allclose(np.linalg.norm(P, axis=1), 1.0, atol=1e-9)

    def test_patience_stops_early(self):
        X, Y, _ = tiny_dataset()
        model = CmlModel(dim=8, epochs=200, seed=0, patience=3)
        model.fit(X, Y, validation=(X[:8], Y[:8]))
        assert len(model.history_) < 200

    def test_needs_two_pairs(self):
        with pytest.raises(ValueError):
            CmlModel().fit(np.ones((1, 3)), np.ones((1, 4)))

    def test_batch_size_floor(self):
        with pytest.raises(ValueError):
            CmlModel(batch_size=1)._config()

    def test_functional_wrapper(self):
        X, Y, _ = tiny_dataset()
        cfg = TrainConfig(epochs=2, seed=0)
        model = train_cml((X, Y), (X[:8], Y[:8]), cfg, dim=8)
        assert len(model.history_) == 2
        assert model.margin == 0.1


class TestAmdTraining:
    def test_requires_labels(self):
        X, Y, _ = tiny_dataset()
        with pytest.raises(ValueError):
            AmdModel(dim=8, epochs=1).fit(X, Y)

    def test_label_range_enforced(self):
        X, Y, labels = tiny_dataset()
        with pytest.raises(ValueError):
            AmdModel(dim=8, n_classes=2, epochs=1).fit(X, Y, labels=labels)

    def test_classifier_learns_latent_class(self):
        X, Y, labels = tiny_dataset(n=60)
        model = AmdModel(
            dim=16, lr=1e-3, batch_size=16, epochs=200, seed=2,
            model_selection="last_epoch", patience=None,
        )
        model.fit(X, Y, labels=labels)
        acc_text = float((model.classify_texts(Y) == labels).mean())
        acc_vis = float((model.classify_images(X) == labels).mean())
        assert acc_text > 0.9 and acc_vis > 0.9

    def test_cml_rejects_labels(self):
        X, Y, labels = tiny_dataset()
        with pytest.raises(TypeError):
            CmlModel(dim=8, epochs=1).fit(X, Y, labels=labels)


class TestMlpArch:
    def test_requires_comment_dim(self):
        X, Y, _ = tiny_dataset()
        with pytest.raises(ValueError):
            CmlModel(arch="mlp", epochs=1).fit(X, Y)

    def test_trains_and_projects(self):
        X, Y, _ = tiny_dataset()
        model = CmlModel(
            dim=8,
            arch="mlp",
            comment_dim=12,
            mlp_comment_dim=10,
            mlp_title_dim=6,
            epochs=3,
            seed=0,
        )
        model.fit(X, Y)
        P = model.project_texts(Y)
        assert P.shape == (48, 8)
        np.testing.assert_allclose(np.linalg.norm(P, axis=1), 1.0, atol=1e-9)

    def test_mlp_gradients_pass(self):
        from artmatch.embedding import _MlpTextTower

        rng = np.random.default_rng(11)
        batch, vis_dim, text_dim = 4, 5, 9
        X = rng.normal(size=(batch, vis_dim))
        Y = np.abs(rng.normal(size=(batch, text_dim)))
        tower = _MlpTextTower(4, comment_dim=5, title_dim=4, mlp_comment_dim=3, mlp_title_dim=3)
        params = {}
        params["vis.W"], params["vis.b"] = _init_head(rng, 4, vis_dim)
        params["vis.b"] += 0.05 * rng.normal(size=4)
        tower.init_params(rng, params)
        negatives = [(k, (k + 2) % batch) for k in range(batch)]

        def loss_and_grad(p):
            return batch_objective(p, "vis", tower, X, Y, negatives, 0.45)

        err = numeric.grad_check(loss_and_grad, params)
        assert err < 1e-4


class TestEstimatorApi:
    def test_get_params_round_trip(self):
        model = CmlModel(dim=64, margin=0.2, seed=9)
        cloned = clone(model)
        assert cloned.get_params() == model.get_params()
        assert cloned.dim == 64

    def test_amd_params_include_alpha(self):
        params = AmdModel(alpha=0.05).get_params()
        assert params["alpha"] == 0.05

    def test_not_fitted(self):
        with pytest.raises(NotFittedError):
            CmlModel().project_texts(np.ones((1, 4)))
