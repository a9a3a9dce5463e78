import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from charnet.data import LabeledDataset
from charnet.encoding import EncodingConfig
from charnet.errors import DataError
from charnet.gradcheck import grad_check
from charnet.metrics import evaluate, f1_score, metrics_from_scores, roc_auc
from charnet.model import Model, build_default_spec
from charnet.tensor import Tensor
from charnet.training import (
    AdamState,
    Hyperparams,
    adam_step,
    loss,
    train,
)

from synth import two_class_corpus

ENC = EncodingConfig(max_chars=24, max_sentences=3)


def _toy_model(n_classes=2, head="sigmoid", seed=0, scale=0.1):
    spec = build_default_spec(n_classes, ENC, scale=scale, head=head)
    return Model.initialize(spec, seed=seed)


class TestLoss:
    def test_bce_closed_form(self):
        val = loss(Tensor(np.array([0.5])), np.array([1.0]), "sigmoid").item()
        assert abs(val - math.log(2)) < 1e-6

    def test_exact_match_is_near_zero(self):
        p = Tensor(np.array([1.0, 0.0, 1.0]))
        assert loss(p, np.array([1.0, 0.0, 1.0]), "sigmoid").item() < 1e-6

    def test_gradient_through_model_head(self, rng):
        x = Tensor(rng.normal(size=(2, 3)), requires_grad=True)
        t = np.eye(3)[[0, 2]]

        def f():
            from charnet import ops

            return loss(ops.softmax(x), t, "softmax")

        assert grad_check(f, {"x": x}, eps=1e-5) < 1e-6

    def test_unknown_head(self):
        with pytest.raises(ValueError):
            loss(Tensor(np.array([0.5])), np.array([1.0]), "linear")


class TestAdam:
    def test_first_step_is_signed_lr(self):
        hp = Hyperparams(learning_rate=0.01)
        params = {"w": Tensor(np.array([1.0, -2.0, 3.0], dtype=np.float32),
                              requires_grad=True)}
        g = np.array([0.5, -1.5, 2.0], dtype=np.float32)
        before = params["w"].data.copy()
        adam_step(params, {"w": g}, AdamState.for_params(params), hp, t=1)
        delta = params["w"].data - before
        assert np.abs(delta + hp.learning_rate * np.sign(g)).max() < hp.learning_rate * 1e-6

    def test_zero_gradient_leaves_parameters(self):
        hp = Hyperparams()
        params = {"w": Tensor(np.ones(4, dtype=np.float32), requires_grad=True)}
        state = AdamState.for_params(params)
        for t in range(1, 20):
            adam_step(params, {"w": np.zeros(4, dtype=np.float32)}, state, hp, t)
        assert (params["w"].data == 1.0).all()

    def test_quadratic_convergence(self):
        # minimize (w - 1)^2 by running the recurrence itself; steps are
        # bounded by lr, so 500 steps comfortably cover unit distance
        hp = Hyperparams(learning_rate=0.01)
        params = {"w": Tensor(np.array([0.0], dtype=np.float32),
                              requires_grad=True)}
        state = AdamState.for_params(params)
        for t in range(1, 501):
            g = 2 * (params["w"].data - 1.0)
            adam_step(params, {"w": g}, state, hp, t)
        assert abs(float(params["w"].data[0]) - 1.0) < 1e-2

    def test_step_count_validated(self):
        params = {"w": Tensor(np.ones(1), requires_grad=True)}
        with pytest.raises(ValueError):
            adam_step(params, {"w": np.ones(1)}, AdamState.for_params(params),
                      Hyperparams(), t=0)


class TestTrainLoop:
    def test_overfits_separable_toy_set(self):
        data = two_class_corpus(10, seed=3, n_sentences=2)
        model = _toy_model()
        hp = Hyperparams(learning_rate=3e-3, batch_size=8, epochs=25, seed=1)
        model, history = train(model, data, None, hp)
        assert max(r.train_accuracy for r in history.rows) >= 0.95

    def test_identical_seeds_identical_runs(self):
        data = two_class_corpus(5, seed=2, n_sentences=2)
        hp = Hyperparams(batch_size=4, epochs=3, seed=9)
        m1, h1 = train(_toy_model(seed=1), data, None, hp)
        m2, h2 = train(_toy_model(seed=1), data, None, hp)
        assert h1.rows == h2.rows
        for name in m1.weights:
            assert (m1.weights[name].data == m2.weights[name].data).all()

    def test_zero_epochs_is_identity(self):
        data = two_class_corpus(3, seed=0, n_sentences=2)
        model = _toy_model()
        before = {n: t.data.copy() for n, t in model.weights.items()}
        model, history = train(model, data, None, Hyperparams(epochs=0))
        assert len(history) == 0
        for name in before:
            assert (model.weights[name].data == before[name]).all()

    def test_empty_dataset_rejected(self):
        with pytest.raises(DataError):
            train(_toy_model(), LabeledDataset([], []), None, Hyperparams())

    def test_label_out_of_range_rejected(self):
        data = LabeledDataset([("x", frozenset({2}))], ["a", "b", "c"])
        with pytest.raises(DataError):
            train(_toy_model(n_classes=2), data, None, Hyperparams(epochs=1))

    def test_history_has_one_row_per_epoch(self):
        data = two_class_corpus(3, seed=1, n_sentences=2)
        _, history = train(_toy_model(), data, None,
                           Hyperparams(epochs=4, batch_size=4))
        assert [r.epoch for r in history.rows] == [0, 1, 2, 3]

    def test_validation_tracked_and_early_stop(self):
        data = two_class_corpus(8, seed=5, n_sentences=2)
        val = two_class_corpus(3, seed=6, n_sentences=2)
        hp = Hyperparams(learning_rate=3e-3, batch_size=8, epochs=40, seed=1,
                         early_stop_patience=3)
        _, history = train(_toy_model(), data, val, hp)
        assert all(r.val_loss is not None for r in history.rows)
        assert len(history) <= 40

    def test_model_vocab_adopted_from_dataset(self):
        data = two_class_corpus(3, seed=1, n_sentences=2)
        model = _toy_model()
        model, _ = train(model, data, None, Hyperparams(epochs=1, batch_size=4))
        assert model.label_vocab == ["friend", "foe"]


class TestMetrics:
    def test_f1_identity_for_reported_precision_recall(self):
        assert abs(f1_score(0.96, 0.49) - 0.6488) < 0.0005

    def test_perfect_predictions(self):
        scores = np.array([[0.9, 0.1], [0.1, 0.9]])
        targets = np.array([[1.0, 0.0], [0.0, 1.0]])
        m = metrics_from_scores(scores, targets, ["a", "b"])
        assert m.binary_accuracy == 1.0
        assert all(c.precision == c.recall == c.f1 == 1.0 for c in m.per_class)

    def test_hand_confusion_matrix(self):
        # one class: tp=1, fp=1, fn=1, tn=1
        scores = np.array([[0.9], [0.9], [0.1], [0.1]])
        targets = np.array([[1.0], [0.0], [1.0], [0.0]])
        m = metrics_from_scores(np.hstack([scores, 1 - scores]),
                                np.hstack([targets, 1 - targets]), ["a", "b"])
        c = m.per_class[0]
        assert (c.tp, c.fp, c.fn, c.tn) == (1, 1, 1, 1)
        assert c.precision == c.recall == c.f1 == 0.5

    def test_zero_over_zero_is_zero(self):
        scores = np.array([[0.1], [0.2]])
        targets = np.array([[0.0], [0.0]])
        m = metrics_from_scores(np.hstack([scores, 1 - scores]),
                                np.hstack([targets, 1 - targets]), ["a", "b"])
        assert m.per_class[0].precision == 0.0
        assert m.per_class[0].recall == 0.0
        assert m.per_class[0].f1 == 0.0

    def test_threshold_monotone_recall(self, rng):
        scores = rng.random((40, 2))
        targets = (rng.random((40, 2)) > 0.5).astype(float)
        last = None
        for thr in (0.2, 0.4, 0.6, 0.8):
            m = metrics_from_scores(scores, targets, ["a", "b"], threshold=thr)
            recall = m.per_class[0].recall
            if last is not None:
                assert recall <= last + 1e-12
            last = recall

    def test_evaluate_smoke(self):
        data = two_class_corpus(4, seed=7, n_sentences=2)
        m = evaluate(_toy_model(), data)
        assert 0.0 <= m.binary_accuracy <= 1.0
        assert len(m.per_class) == 2
        assert math.isfinite(m.auc)

    def test_evaluate_aligns_labels_by_name(self):
        data = two_class_corpus(4, seed=7, n_sentences=2)
        model = _toy_model()
        model.label_vocab = ["friend", "foe"]
        # same records, but the vocabulary enumerates classes backwards
        flipped = LabeledDataset(
            [(t, frozenset({1 - next(iter(l))})) for t, l in data.records],
            ["foe", "friend"])
        a = evaluate(model, data)
        b = evaluate(model, flipped)
        assert a.binary_accuracy == b.binary_accuracy
        assert [(c.label, c.tp, c.fp) for c in a.per_class] \
            == [(c.label, c.tp, c.fp) for c in b.per_class]

    def test_evaluate_rejects_unknown_label_names(self):
        model = _toy_model()
        model.label_vocab = ["friend", "foe"]
        stranger = LabeledDataset([("x", frozenset({0}))], ["alien"])
        with pytest.raises(DataError, match="alien"):
            evaluate(model, stranger)

    def test_evaluate_bad_threshold(self):
        data = two_class_corpus(2, seed=7, n_sentences=2)
        with pytest.raises(DataError):
            evaluate(_toy_model(), data, threshold=1.5)


@pytest.fixture(scope="module")
def trained_toy():
    """A toy 2-class model trained to saturation, shared by the
    trained-behavior checks below."""
    data = two_class_corpus(10, seed=3, n_sentences=2)
    model = _toy_model(seed=1)
    hp = Hyperparams(learning_rate=3e-3, batch_size=8, epochs=80, seed=1)
    model, history = train(model, data, None, hp)
    assert history.rows[-1].train_accuracy == 1.0
    return model, data


class TestTrainedToyModel:
    def test_train_items_confident(self, trained_toy):
        from charnet.model import predict_probs
        import numpy as np

        model, data = trained_toy
        grids = np.stack([model.encode_text(t) for t, _ in data.records])
        probs = predict_probs(model, grids)
        correct = [probs[i, next(iter(labels))]
                   for i, (_, labels) in enumerate(data.records)]
        assert all(p > 0.9 for p in correct)

    def test_sentence_features_differ_across_classes(self, trained_toy):
        from charnet.encoding import encode_sentence
        import numpy as np

        model, data = trained_toy
        friend_text = next(t for t, l in data.records if l == frozenset({0}))
        foe_text = next(t for t, l in data.records if l == frozenset({1}))
        enc = model.spec.encoding
        a = model.encode_sentence_features(
            encode_sentence(friend_text, model.alphabet, enc))
        b = model.encode_sentence_features(
            encode_sentence(foe_text, model.alphabet, enc))
        cosine = float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))
        assert cosine < 0.99

    def test_document_features_separate_classes(self, trained_toy):
        from charnet.embedding import extract_embeddings, silhouette

        model, data = trained_toy
        embeddings = extract_embeddings(model, data)
        assert silhouette(embeddings.matrix, embeddings.labels) > 0.2

    def test_intra_class_closer_than_inter(self, trained_toy):
        from charnet.embedding import extract_embeddings
        import numpy as np

        model, data = trained_toy
        es = extract_embeddings(model, data)
        x = es.matrix.astype(np.float64)
        labels = np.asarray(es.labels)
        d = np.sqrt(((x[:, None] - x[None]) ** 2).sum(-1))
        same = labels[:, None] == labels[None, :]
        np.fill_diagonal(same, False)
        intra = d[same].mean()
        inter = d[~same & ~np.eye(len(x), dtype=bool)].mean()
        assert intra < inter


class TestRocAuc:
    def test_perfect_separation(self):
        _, auc = roc_auc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0])
        assert auc == 1.0

    def test_constant_scores(self):
        _, auc = roc_auc([0.5] * 6, [1, 0, 1, 0, 1, 0])
        assert auc == 0.5

    def test_single_class_rejected(self):
        with pytest.raises(DataError):
            roc_auc([0.5, 0.6], [1, 1])

    def test_fpr_monotone_nondecreasing(self, rng):
        scores = rng.random(60)
        labels = rng.integers(0, 2, 60)
        if labels.sum() in (0, 60):
            labels[0] = 1 - labels[0]
        points, _ = roc_auc(scores, labels)
        fprs = [p[0] for p in points]
        assert all(b >= a for a, b in zip(fprs, fprs[1:]))

    @given(st.integers(0, 10_000))
    @settings(max_examples=60, deadline=None)
    def test_trapezoid_equals_pair_counting(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(4, 50))
        scores = np.round(rng.random(n), 1)  # coarse grid forces ties
        labels = rng.integers(0, 2, n)
        if labels.sum() in (0, n):
            labels[0] = 1 - labels[0]
        _, auc = roc_auc(scores, labels)
        pos, neg = scores[labels == 1], scores[labels == 0]
        wins = (pos[:, None] > neg[None, :]).sum()
        ties = (pos[:, None] == neg[None, :]).sum()
        expected = (wins + 0.5 * ties) / (len(pos) * len(neg))
        assert abs(auc - expected) < 1e-9
