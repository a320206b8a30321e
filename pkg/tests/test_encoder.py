"""Vocabulary and shared contextual encoder."""
from __future__ import annotations

import numpy as np
import pytest

from clner import numcore as nc
from clner.encoder import EncoderConfig, TransformerEncoder, Vocab


def small_encoder(seed=0, **overrides):
    cfg = EncoderConfig(**{"d_model": 16, "n_heads": 2, "max_len": 12, "dropout": 0.1, **overrides})
    return TransformerEncoder(vocab_size=20, config=cfg, rng=np.random.default_rng(seed))


class TestVocab:
    def test_reserved_ids(self):
        v = Vocab(["apple", "bee"])
        assert v.pad_id == 0 and v.unk_id == 1
        assert v.id_of("apple") == 2
        assert v.id_of("unheard") == v.unk_id

    def test_dedupe_preserves_first_occurrence_order(self):
        v = Vocab(["b", "a", "b", "c", "a"])
        assert [v.token_of(i) for i in range(len(v))] == ["<pad>", "<unk>", "b", "a", "c"]

    def test_round_trip_file(self, tmp_path):
        v = Vocab(["alpha", "beta", "gamma"])
        path = tmp_path / "vocab.txt"
        v.save(path)
        assert path.read_text().splitlines() == ["<pad>", "<unk>", "alpha", "beta", "gamma"]
        loaded = Vocab.load(path)
        assert loaded.encode(["beta", "nope"]) == v.encode(["beta", "nope"])

    def test_load_rejects_file_without_header(self, tmp_path):
        path = tmp_path / "vocab.txt"
        path.write_text("alpha\nbeta\n")
        with pytest.raises(ValueError):
            Vocab.load(path)


class TestEncoderConfig:
    def test_head_divisibility(self):
        with pytest.raises(ValueError):
            EncoderConfig(d_model=10, n_heads=3)

    def test_dropout_range(self):
        with pytest.raises(ValueError):
            EncoderConfig(dropout=1.0)


class TestEncode:
    def test_output_shape_single_token(self):
        enc = small_encoder()
        out = enc.encode([3])
        assert out.shape == (1, 16)

    def test_eval_mode_deterministic(self):
        enc = small_encoder()
        a = enc.encode([3, 4, 5], train=False)
        b = enc.encode([3, 4, 5], train=False)
        np.testing.assert_array_equal(a.data, b.data)

    def test_position_embeddings_break_order_symmetry(self):
        enc = small_encoder(seed=11)
        ab = enc.encode([4, 7], train=False).data
        ba = enc.encode([7, 4], train=False).data
        assert not np.allclose(ab, ba)

    def test_empty_and_overlong_rejected(self):
        enc = small_encoder()
        with pytest.raises(ValueError):
            enc.encode([])
        with pytest.raises(ValueError):
            enc.encode(list(range(13)))

    def test_output_finite(self):
        enc = small_encoder(seed=2)
        rng = np.random.default_rng(0)
        for _ in range(20):
            ids = rng.integers(0, 20, size=rng.integers(1, 12)).tolist()
            assert np.all(np.isfinite(enc.encode(ids).data))

    def test_gradients_reach_every_parameter(self):
        enc = small_encoder(seed=3)
        out = enc.encode([2, 5, 9], train=False)
        loss = nc.tensor_sum(nc.mul(out, out))
        loss.backward()
        for name, p in enc.named_parameters().items():
            assert p.grad is not None, name
            assert np.any(p.grad != 0.0), f"zero gradient on {name}"

    def test_dropout_active_only_in_train_mode(self):
        enc = small_encoder(seed=4)
        base = enc.encode([1, 2, 3], train=False).data
        dropped = enc.encode([1, 2, 3], train=True, rng=np.random.default_rng(0)).data
        assert not np.allclose(base, dropped)
