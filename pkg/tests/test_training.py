import io

import numpy as np
import pytest

from conftest import make_table
from toxicspans.dataio import CharSpanSet, LabeledPost
from toxicspans.embeddings import load_embeddings
from toxicspans.errors import TrainingDivergedError, ValidationError
from toxicspans.model import deep_equal, predict
from toxicspans.span_codec import BridgePolicy
from toxicspans.synthetic import generate_posts, write_embedding_file
from toxicspans.training import (
    AdamState,
    TrainConfig,
    adam_step,
    build_examples,
    clip_gradients,
    dev_char_f1,
    train,
)


def synthetic_setup(n_posts=120, dim=16, seed=5):
    buf = io.BytesIO()
    write_embedding_file(buf, dim=dim, seed=7)
    table = load_embeddings(io.BytesIO(buf.getvalue()), expected_dim=dim)
    posts = generate_posts(n_posts, seed=seed)
    return table, posts


class TestTrainConfig:
    def test_defaults_validate(self):
        TrainConfig().validate()

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"epochs": 0},
            {"batch_size": 0},
            {"learning_rate": 0.0},
            {"hidden_size": 0},
            {"gradient_clip_norm": 0.0},
            {"early_stop_patience": 0},
            {"dev_fraction": 0.0},
            {"dev_fraction": 1.0},
            {"max_len": 0},
        ],
    )
    def test_bad_values_rejected(self, kwargs):
        with pytest.raises(ValidationError):
            TrainConfig(**kwargs).validate()

    def test_dict_round_trip(self):
        cfg = TrainConfig(epochs=7, seed=99, learning_rate=0.5)
        assert TrainConfig.from_dict(cfg.to_dict()) == cfg


class TestAdam:
    def test_zero_gradient_from_fresh_state_leaves_params_unchanged(self):
        params = {"w": np.array([1.0, -2.0, 3.0])}
        grads = {"w": np.zeros(3)}
        state = AdamState.for_arrays(params, learning_rate=0.1)
        adam_step(params, grads, state)
        np.testing.assert_array_equal(params["w"], [1.0, -2.0, 3.0])
        assert state.step == 1

    def test_first_step_magnitude_approximates_lr_times_sign(self):
        params = {"w": np.zeros(4)}
        g = np.array([0.5, -3.0, 1e-3, 0.0])
        state = AdamState.for_arrays(params, learning_rate=0.01)
        adam_step(params, {"w": g.copy()}, state)
        # first bias-corrected step is lr * g / (|g| + eps) = lr * sign(g)
        expected = -0.01 * np.sign(g) * (np.abs(g) / (np.abs(g) + state.epsilon))
        np.testing.assert_allclose(params["w"], expected, atol=1e-12)

    def test_clipping_scales_by_global_norm(self):
        grads = {"a": np.array([6.0, 8.0]), "b": np.array([0.0])}  # norm 10
        norm = clip_gradients(grads, max_norm=1.0)
        assert norm == pytest.approx(10.0)
        np.testing.assert_allclose(grads["a"], [0.6, 0.8])

    def test_no_clipping_below_threshold(self):
        grads = {"a": np.array([0.3, 0.4])}
        clip_gradients(grads, max_norm=1.0)
        np.testing.assert_allclose(grads["a"], [0.3, 0.4])


class TestTrain:
    def test_empty_data_rejected(self):
        table = make_table(["a"])
        with pytest.raises(ValidationError, match="empty"):
            train([], TrainConfig(epochs=1, hidden_size=2), table)

    def test_fixed_seed_gives_identical_history_and_params(self):
        table, posts = synthetic_setup(n_posts=30)
        examples = build_examples(posts, table, max_len=32)
        cfg = TrainConfig(epochs=3, batch_size=8, seed=17, hidden_size=6, max_len=32)
        params_a, history_a = train(examples, cfg, table)
        params_b, history_b = train(examples, cfg, table)
        assert history_a == history_b
        assert deep_equal(params_a, params_b)

    def test_different_seed_changes_the_run(self):
        table, posts = synthetic_setup(n_posts=30)
        examples = build_examples(posts, table, max_len=32)
        p1, h1 = train(examples, TrainConfig(epochs=2, seed=1, hidden_size=6, max_len=32), table)
        p2, h2 = train(examples, TrainConfig(epochs=2, seed=2, hidden_size=6, max_len=32), table)
        assert h1 != h2 or not deep_equal(p1, p2)

    def test_single_example_overfit_nll_monotone_non_increasing(self):
        table, posts = synthetic_setup(n_posts=40)
        toxic = next(p for p in posts if p.gold)
        examples = build_examples([toxic], table, max_len=32)
        cfg = TrainConfig(
            epochs=10, batch_size=1, seed=0, learning_rate=1e-3,
            hidden_size=8, max_len=32, early_stop_patience=10,
        )
        _, history = train(examples, cfg, table)
        nlls = [h.train_nll for h in history]
        assert len(nlls) == 10
        assert all(b <= a + 1e-12 for a, b in zip(nlls, nlls[1:]))

    def test_synthetic_lexicon_task_reaches_high_dev_f1(self):
        table, posts = synthetic_setup(n_posts=200, dim=25, seed=11)
        examples = build_examples(posts, table, max_len=64)
        cfg = TrainConfig(
            epochs=30, batch_size=8, seed=3, learning_rate=3e-3,
            hidden_size=24, early_stop_patience=10, dev_fraction=0.15, max_len=64,
        )
        params, history = train(examples, cfg, table)
        assert max(h.dev_f1 for h in history) >= 0.95
        held_out = build_examples(generate_posts(50, seed=99), table, max_len=64)
        assert dev_char_f1(held_out, params, BridgePolicy()) >= 0.95

    def test_zero_token_examples_are_tolerated(self):
        table, posts = synthetic_setup(n_posts=20)
        blank = LabeledPost(id=len(posts), text="   ", gold=CharSpanSet(()))
        examples = build_examples(list(posts) + [blank], table, max_len=32)
        cfg = TrainConfig(epochs=1, hidden_size=4, seed=0, max_len=32)
        params, history = train(examples, cfg, table)
        assert len(history) == 1

    def test_nan_loss_aborts_with_diagnostic(self, monkeypatch):
        import toxicspans.training as training_mod

        table, posts = synthetic_setup(n_posts=10)
        examples = build_examples(posts, table, max_len=32)

        def poisoned(post, labels, params, finetune=False):
            return float("nan"), {
                name: np.zeros_like(arr) for name, arr in params.named_arrays()
            }

        monkeypatch.setattr(training_mod, "nll_and_gradients", poisoned)
        with pytest.raises(TrainingDivergedError, match="epoch 1"):
            train(examples, TrainConfig(epochs=1, hidden_size=4, max_len=32), table)

    def test_early_stopping_returns_best_dev_params(self):
        table, posts = synthetic_setup(n_posts=60, seed=21)
        examples = build_examples(posts, table, max_len=32)
        cfg = TrainConfig(
            epochs=30, batch_size=8, seed=2, learning_rate=5e-3,
            hidden_size=12, early_stop_patience=2, max_len=32,
        )
        params, history = train(examples, cfg, table)
        # Either it ran out of epochs or it stopped early; either way the
        # returned params must reproduce the best recorded dev F1.  Replay
        # the seeded draw order (init first, then the split permutation).
        from toxicspans.model import init_params

        rng = np.random.default_rng(cfg.seed)
        init_params(table, cfg.hidden_size, rng)
        dev_count = max(1, int(round(len(examples) * cfg.dev_fraction)))
        order = rng.permutation(len(examples))
        dev = [examples[int(i)] for i in sorted(order[:dev_count])]
        best = max(h.dev_f1 for h in history)
        assert dev_char_f1(dev, params, BridgePolicy()) == pytest.approx(best, abs=1e-12)


class TestEndToEndWordMemorization:
    def test_trained_model_fires_on_the_toxic_word(self):
        # Micro-corpus where one word is always toxic; the trained model must
        # mark exactly that word in an unseen sentence.
        vocab = [
            "indeed", ",", "people", "the", "world", "over", "all", "know",
            "that", "president", "trump", "is", "a", "loser", "!", "fine",
            "day", "good", "game", "we", "saw",
        ]
        table = make_table(vocab, dim=12, seed=4)
        rng = np.random.default_rng(8)
        carriers = [w for w in vocab if w not in (",", "!", "loser")]
        posts = []
        for k in range(60):
            words = [carriers[int(rng.integers(len(carriers)))] for _ in range(6)]
            gold = set()
            if k % 2 == 0:
                slot = int(rng.integers(len(words)))
                words[slot] = "loser"
                start = sum(len(w) + 1 for w in words[:slot])
                gold = set(range(start, start + len("loser")))
            posts.append(LabeledPost(id=k, text=" ".join(words), gold=CharSpanSet(tuple(gold))))
        examples = build_examples(posts, table, max_len=16)
        cfg = TrainConfig(
            epochs=40, batch_size=8, seed=1, learning_rate=5e-3,
            hidden_size=10, early_stop_patience=40, max_len=16,
        )
        params, _ = train(examples, cfg, table)

        text = "Indeed, people the world over, all know that President Trump is a loser!"
        spans = predict(params, text, max_len=32)
        assert spans.indexes == (66, 67, 68, 69, 70)
