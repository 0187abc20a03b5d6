import numpy as np
import pytest

from gnnmoe import autodiff as ad
from gnnmoe.exceptions import ContractError, DimensionError
from gnnmoe.graph import Graph
from gnnmoe.model import (
    GnnMoeConfig, forward, init_model, load_checkpoint, loss, predict, save_checkpoint,
)

from conftest import random_graph
from oracles import ce_loop, ce_trace, dense_adjacency, dense_gcn, layernorm, max_row_spread, relu, softmax


def small_model(**kw):
    cfg = GnnMoeConfig(hidden_dim=kw.pop("hidden_dim", 8), gate_hidden=4, **kw)
    return init_model(cfg, 4, 3, np.random.default_rng(0))


class TestConfig:
    @pytest.mark.parametrize("kw", [
        {"num_blocks": 0}, {"prop": "gin"}, {"dropout": 1.0}, {"tau": 0.0}, {"force_expert": "PX"},
        {"dtype": "float16"},
    ])
    def test_rejects(self, kw):
        with pytest.raises(ContractError):
            GnnMoeConfig(**kw)


class TestForward:
    @pytest.mark.parametrize("prop", ["gcn", "sage", "gat"])
    def test_shape(self, graph30, prop):
        assert forward(small_model(prop=prop), graph30).shape == (30, 3)

    def test_eval_deterministic(self, graph30):
        m = small_model(prop="gat")
        assert np.array_equal(forward(m, graph30).values, forward(m, graph30).values)

    def test_training_needs_rng(self, graph30):
        with pytest.raises(ContractError):
            forward(small_model(), graph30, training=True)

    def test_feature_mismatch(self):
        g = random_graph(10, 10, 5, 3, seed=0)
        with pytest.raises(DimensionError):
            forward(small_model(), g)

    def test_float32_stays_float32(self, graph30):
        assert forward(small_model(dtype="float32"), graph30).values.dtype == np.float32

    def test_ablate_ffn_skips_ffn(self, graph30):
        m = small_model(ablate_ffn=True)
        before = forward(m, graph30).values
        m.ffn.hard_gate_weight.values[...] = 1e3
        assert np.array_equal(before, forward(m, graph30).values)

    def test_frozen_parameters(self):
        m = small_model(force_expert="PT", ablate_residual=True, ablate_ffn=True)
        trainable = {n for n, _ in m.named_parameters(trainable_only=True)}
        assert not any(n.startswith("ffn.") for n in trainable)
        assert not any(".gate." in n for n in trainable)
        assert not any(n.endswith("alpha_raw") for n in trainable)
        assert "blocks.0.experts.PT.t0.weight" in trainable
        assert "blocks.0.experts.TT.t0.weight" not in trainable


def ring_graph(n, extra, d, seed):
    rng = np.random.default_rng(seed)
    ring = np.stack([np.arange(n), (np.arange(n) + 1) % n], axis=1)
    edges = np.concatenate([ring, rng.integers(0, n, size=(extra, 2))])
    return Graph.from_edges(rng.normal(size=(n, d)), np.arange(n) % 2, edges, num_classes=2)


class TestOverSmoothing:
    def test_pp_stack_collapses_rows(self):
        g = ring_graph(40, 40, 4, seed=1)
        cfg = GnnMoeConfig(hidden_dim=8, gate_hidden=4, num_blocks=32, force_expert="PP",
                           ablate_residual=True, ablate_ffn=True)
        full = init_model(cfg, 4, 2, np.random.default_rng(2))
        p = dense_gcn(dense_adjacency(40, g.edge_pairs()))
        h = relu(g.features @ full.w0.values + full.b0.values)
        spreads = []
        for depth in range(1, 33):
            h = layernorm(p @ (p @ h), 1.0, 0.0, cfg.ln_eps)
            if depth in (1, 2, 4, 8, 16, 32):
                blocks = full.blocks
                full.blocks = blocks[:depth]
                logits = forward(full, g).values
                full.blocks = blocks
                assert np.max(np.abs(logits - h @ full.w6.values)) < 1e-10
                spreads.append(max_row_spread(h))
        assert all(a > b for a, b in zip(spreads, spreads[1:]))
        assert spreads[-1] < 1e-2 * spreads[0]


class TestLoss:
    def test_uniform_is_log_c(self):
        z = ad.Tensor(np.zeros((5, 4)))
        assert loss(z, np.arange(5) % 4, np.arange(5)).item() == pytest.approx(np.log(4), abs=1e-15)

    def test_saturated(self):
        labels = np.array([0, 2, 1])
        z = ad.Tensor(np.eye(3)[labels] * 1e3)
        assert loss(z, labels, np.arange(3)).item() < 1e-6

    def test_scalar_loop_oracle(self):
        rng = np.random.default_rng(3)
        z, labels = rng.normal(size=(10, 3)) * 3, rng.integers(0, 3, 10)
        idx = np.array([0, 1, 4, 5, 7, 9])
        got = loss(ad.Tensor(z), labels, idx).item()
        assert abs(got - ce_loop(z, labels, idx)) < 1e-12
        assert abs(got - ce_trace(z, labels, idx, 3)) < 1e-12

    def test_boolean_mask(self):
        rng = np.random.default_rng(4)
        z, labels = ad.Tensor(rng.normal(size=(6, 2))), rng.integers(0, 2, 6)
        mask = np.array([True, False, True, True, False, False])
        assert loss(z, labels, mask).item() == loss(z, labels, [0, 2, 3]).item()

    def test_empty_subset(self):
        with pytest.raises(ContractError):
            loss(ad.Tensor(np.zeros((3, 2))), [0, 1, 0], [])


class TestPredict:
    def test_tie_goes_low(self):
        assert predict(np.zeros((1, 3)))[0] == 0

    def test_softmax_monotone(self):
        z = np.random.default_rng(5).normal(size=(50, 4))
        np.testing.assert_array_equal(predict(z), np.argmax(softmax(z), axis=1))

    def test_hand_count(self):
        z = np.array([[1, 0], [0, 1], [1, 0], [0, 1], [2, 1]])
        labels = np.array([0, 0, 0, 1, 1])
        assert int((predict(z) == labels).sum()) == 3


class TestCheckpoint:
    @pytest.mark.parametrize("prop", ["gcn", "gat"])
    def test_roundtrip(self, tmp_path, graph30, prop):
        m = small_model(prop=prop)
        save_checkpoint(m, tmp_path / "ck")
        back = load_checkpoint(tmp_path / "ck", m.config, 4, 3)
        assert np.array_equal(forward(m, graph30).values, forward(back, graph30).values)

    def test_manifest_layout(self, tmp_path):
        m = small_model()
        _, manifest = save_checkpoint(m, tmp_path / "ck")
        lines = manifest.read_text().splitlines()
        assert lines[0].startswith("#")
        name, rows, cols, offset = lines[1].split()
        assert (name, rows, cols, offset) == ("w0", "4", "8", "0")
        assert (tmp_path / "ck.bin").stat().st_size == 8 * sum(t.values.size for _, t in m.named_parameters())

    def test_shape_mismatch(self, tmp_path):
        save_checkpoint(small_model(), tmp_path / "ck")
        with pytest.raises(DimensionError):
            load_checkpoint(tmp_path / "ck", GnnMoeConfig(hidden_dim=8, gate_hidden=4), 5, 3)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="ck.bin"):
            load_checkpoint(tmp_path / "ck", GnnMoeConfig(), 4, 3)
