import numpy as np
import pytest

from conftest import make_table
from oracles import finite_difference, max_relative_error
from toxicspans.crf import crf_nll
from toxicspans.dataio import CharSpanSet
from toxicspans.embeddings import encode_post
from toxicspans.errors import DataFormatError, ValidationError
from toxicspans.model import (
    backward,
    bilstm_emissions,
    deep_equal,
    init_params,
    nll_and_gradients,
    predict,
)
from toxicspans.span_codec import BridgePolicy
from toxicspans.tokenizer import tokenize


def make_model(table, hidden=5, seed=0):
    return init_params(table, hidden_size=hidden, rng=np.random.default_rng(seed))


def encoded(table, text, max_len=16):
    return encode_post(tokenize(text), table, max_len)


class TestEmissions:
    def test_shape_matches_effective_length(self):
        table = make_table(["a", "b", "c"])
        params = make_model(table)
        post = encoded(table, "a b c a b c a")
        emissions, _ = bilstm_emissions(post, params)
        assert emissions.shape == (7, 2)

    def test_zero_projection_yields_bias_everywhere(self):
        table = make_table(["a", "b"])
        params = make_model(table)
        params.emit.W_out[:] = 0.0
        params.emit.b_out[:] = [0.25, -1.5]
        emissions, _ = bilstm_emissions(post := encoded(table, "a b a"), params)
        assert post.effective_len == 3
        np.testing.assert_allclose(emissions, np.tile([0.25, -1.5], (3, 1)))

    def test_empty_post_rejected(self):
        table = make_table(["a"])
        params = make_model(table)
        with pytest.raises(ValidationError):
            bilstm_emissions(encoded(table, ""), params)

    def test_pad_rows_never_enter_the_computation(self):
        table = make_table(["a", "b"])
        params = make_model(table)
        post = encoded(table, "a b", max_len=12)
        before, _ = bilstm_emissions(post, params)
        params.embedding.matrix[table.pad_index] += 123.0
        after, _ = bilstm_emissions(post, params)
        np.testing.assert_array_equal(before, after)


class TestBackward:
    def test_zero_upstream_gradient_gives_zero_gradients(self):
        table = make_table(["a", "b"])
        params = make_model(table)
        emissions, cache = bilstm_emissions(encoded(table, "a b a b"), params)
        grads = backward(params, cache, np.zeros_like(emissions), finetune_embeddings=True)
        for arr in grads.values():
            assert np.all(arr == 0.0)

    def test_full_stack_gradients_match_finite_differences(self):
        rng = np.random.default_rng(1)
        table = make_table([f"w{i}" for i in range(12)], dim=4, seed=2)
        params = make_model(table, hidden=4, seed=3)
        batch = []
        for n in (3, 5, 6):
            text = " ".join(f"w{int(rng.integers(12))}" for _ in range(n))
            batch.append((encoded(table, text), [int(rng.integers(2)) for _ in range(n)]))

        def batch_loss():
            total = 0.0
            for post, labels in batch:
                em, _ = bilstm_emissions(post, params)
                total += crf_nll(em, params.crf, labels)
            return total / len(batch)

        analytic = {}
        for post, labels in batch:
            _, grads = nll_and_gradients(post, labels, params)
            for name, arr in grads.items():
                analytic[name] = analytic.get(name, 0.0) + arr / len(batch)

        numeric = finite_difference(batch_loss, dict(params.named_arrays()), h=1e-5)
        assert max_relative_error(analytic, numeric) < 1e-4

    def test_embedding_gradients_only_touch_used_rows(self):
        table = make_table(["a", "b", "c"])
        params = make_model(table)
        post = encoded(table, "a a b", max_len=8)
        _, grads = nll_and_gradients(post, [1, 0, 1], params, finetune_embeddings=True)
        d_matrix = grads["embedding.matrix"]
        assert np.any(d_matrix[table.vocab["a"]] != 0.0)
        assert np.all(d_matrix[table.vocab["c"]] == 0.0)
        assert np.all(d_matrix[table.pad_index] == 0.0)

    def test_pad_row_perturbation_leaves_loss_unchanged(self):
        table = make_table(["a", "b"])
        params = make_model(table)
        post = encoded(table, "a b a", max_len=10)
        nll_before, _ = nll_and_gradients(post, [0, 1, 0], params)
        params.embedding.matrix[table.pad_index] += 7.5
        nll_after, _ = nll_and_gradients(post, [0, 1, 0], params)
        assert nll_before == nll_after


def all_label_model(table, toxic: bool, seed=0):
    """A model that deterministically labels every token one way."""
    params = make_model(table, seed=seed)
    params.emit.W_out[:] = 0.0
    params.emit.b_out[:] = [-10.0, 10.0] if toxic else [10.0, -10.0]
    params.crf.trans[:] = 0.0
    params.crf.start[:] = 0.0
    params.crf.stop[:] = 0.0
    return params


class TestPredict:
    def test_empty_text_gives_empty_spans(self):
        table = make_table(["a"])
        params = make_model(table)
        assert predict(params, "", max_len=8) == CharSpanSet(())

    def test_all_non_toxic_decode_gives_empty_spans(self):
        table = make_table(["the", "cat"])
        params = all_label_model(table, toxic=False)
        assert predict(params, "the cat sat", max_len=8) == CharSpanSet(())

    def test_all_toxic_decode_covers_text_with_bridging(self):
        table = make_table(["the", "cat"])
        params = all_label_model(table, toxic=True)
        spans = predict(params, "the cat", max_len=8)
        assert spans.indexes == tuple(range(7))

    def test_tokens_beyond_max_len_are_non_toxic(self):
        table = make_table(["w"])
        params = all_label_model(table, toxic=True)
        spans = predict(params, "w w w w", max_len=2,
                        policy=BridgePolicy(bridge_gaps=True, max_gap=1))
        assert spans.indexes == (0, 1, 2)  # first two tokens plus the bridge


class TestCheckpoint:
    def test_round_trip_preserves_everything(self, tmp_path):
        from toxicspans.checkpoint import load_checkpoint, save_checkpoint
        from toxicspans.training import TrainConfig

        table = make_table(["a", "b", "c"], dim=4)
        params = make_model(table, hidden=6, seed=9)
        cfg = TrainConfig(epochs=3, hidden_size=6, max_len=32, seed=5)
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, params, cfg, table)
        loaded, loaded_cfg = load_checkpoint(path, table)
        assert deep_equal(params, loaded)
        assert loaded_cfg == cfg

    def test_serialization_is_byte_deterministic(self):
        from toxicspans.checkpoint import serialize_checkpoint
        from toxicspans.training import TrainConfig

        table = make_table(["a", "b"], dim=3)
        params = make_model(table, hidden=4, seed=1)
        cfg = TrainConfig(hidden_size=4)
        assert serialize_checkpoint(params, cfg, table) == serialize_checkpoint(
            params, cfg, table
        )

    def test_vocab_hash_mismatch_rejected(self, tmp_path):
        from toxicspans.checkpoint import load_checkpoint, save_checkpoint
        from toxicspans.training import TrainConfig

        table = make_table(["a", "b"], dim=3)
        other = make_table(["a", "zzz"], dim=3)
        params = make_model(table, hidden=4)
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, params, TrainConfig(hidden_size=4), table)
        with pytest.raises(ValidationError, match="vocabulary"):
            load_checkpoint(path, other)

    def test_dimension_mismatch_rejected(self, tmp_path):
        from toxicspans.checkpoint import load_checkpoint, save_checkpoint
        from toxicspans.training import TrainConfig

        table = make_table(["a", "b"], dim=3)
        wider = make_table(["a", "b"], dim=5)
        params = make_model(table, hidden=4)
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, params, TrainConfig(hidden_size=4), table)
        with pytest.raises(ValidationError, match="dim"):
            load_checkpoint(path, wider)

    def test_truncated_file_rejected(self, tmp_path):
        from toxicspans.checkpoint import load_checkpoint, save_checkpoint
        from toxicspans.training import TrainConfig

        table = make_table(["a", "b"], dim=3)
        params = make_model(table, hidden=4)
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, params, TrainConfig(hidden_size=4), table)
        path.write_bytes(path.read_bytes()[:-40])
        with pytest.raises(DataFormatError, match="truncated"):
            load_checkpoint(path, table)

    def test_non_checkpoint_file_rejected(self, tmp_path):
        from toxicspans.checkpoint import load_checkpoint

        table = make_table(["a"], dim=3)
        path = tmp_path / "junk"
        path.write_bytes(b"this is not a checkpoint")
        with pytest.raises(DataFormatError, match="magic"):
            load_checkpoint(path, table)
