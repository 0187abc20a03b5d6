import numpy as np
import pytest

from gnnmoe.autodiff import Tensor
from gnnmoe.data import SyntheticSpec, generate_synthetic
from gnnmoe.exceptions import ContractError, DivergenceError
from gnnmoe.graph import Graph
from gnnmoe.model import GnnMoeConfig, init_model
from gnnmoe.training import (
    AdamState, RunSummary, SeedResult, TrainConfig, adamw_step, evaluate, make_splits, run_one_seed,
    run_seeds, sample_std, seed_streams, train_one,
)

SMALL = GnnMoeConfig(hidden_dim=8, gate_hidden=4)


def blobs(n=60, seed=0):
    return generate_synthetic(SyntheticSpec(num_nodes=n, num_classes=3, feature_dim=4, homophily=0.9,
                                            mean_degree=4, feature_noise=0.3, seed=seed))


def strip_time(history):
    return [(r.epoch, r.train_loss, r.val_acc, r.val_loss) for r in history]


class TestSplits:
    def test_exact_sizes(self):
        g = Graph.from_edges(np.zeros((100, 1)), np.arange(100) % 2, np.zeros((0, 2)))
        train, val, test = make_splits(g, (0.48, 0.32, 0.20), seed=0)
        assert (train.size, val.size, test.size) == (48, 32, 20)
        for c in (0, 1):
            assert [int(np.sum(g.labels[s] == c)) for s in (train, val, test)] == [24, 16, 10]

    def test_same_seed_same_split(self):
        g = blobs()
        a, b = make_splits(g, seed=4), make_splits(g, seed=4)
        assert all(np.array_equal(x, y) for x, y in zip(a, b))

    @pytest.mark.parametrize("seed", range(5))
    def test_partition(self, seed):
        g = blobs(n=37 + seed)
        parts = make_splits(g, (0.5, 0.25, 0.25), seed)
        joined = np.concatenate(parts)
        assert np.array_equal(np.sort(joined), np.arange(g.num_nodes))

    def test_tiny_class(self):
        g = Graph.from_edges(np.zeros((5, 1)), [0, 0, 0, 1, 1], np.zeros((0, 2)))
        with pytest.raises(ContractError):
            make_splits(g)

    def test_bad_fractions(self):
        with pytest.raises(ContractError):
            make_splits(blobs(), (0.5, 0.5, 0.5))


class TestAdamW:
    def test_zero_grad_no_decay(self):
        p = Tensor([[1.0, -2.0]])
        adamw_step([p], [np.zeros((1, 2))], AdamState(), lr=0.1, weight_decay=0.0)
        np.testing.assert_array_equal(p.values, [[1.0, -2.0]])

    def test_first_step_moves_by_lr(self):
        p = Tensor([[1.0]])
        adamw_step([p], [np.ones((1, 1))], AdamState(), lr=0.1, weight_decay=0.0)
        # m_hat = 1, v_hat = 1 -> step = lr / (1 + eps)
        assert p.values[0, 0] == pytest.approx(1.0 - 0.1 / (1.0 + 1e-8), abs=1e-15)
        assert abs(p.values[0, 0] - 0.9) < 1e-8

    def test_decay_only(self):
        p = Tensor([[1.0]])
        adamw_step([p], [np.zeros((1, 1))], AdamState(), lr=0.1, weight_decay=0.01)
        assert p.values[0, 0] == pytest.approx(0.999, abs=1e-15)

    def test_second_step_recurrence(self):
        p = Tensor([[0.5]])
        state = AdamState()
        g1, g2 = 0.3, -0.7
        adamw_step([p], [np.array([[g1]])], state, lr=0.01, weight_decay=0.1)
        adamw_step([p], [np.array([[g2]])], state, lr=0.01, weight_decay=0.1)
        q = 0.5
        m = v = 0.0
        for t, g in enumerate((g1, g2), start=1):
            q -= 0.01 * 0.1 * q
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            q -= 0.01 * (m / (1 - 0.9**t)) / ((v / (1 - 0.999**t)) ** 0.5 + 1e-8)
        assert p.values[0, 0] == pytest.approx(q, abs=1e-15)


class TestTrainOne:
    def test_overfits_small_graph(self):
        g = blobs(50)
        splits = make_splits(g, seed=0)
        _, init_rng, train_rng = seed_streams(0)
        model = init_model(SMALL, 4, 3, init_rng)
        cfg = TrainConfig(max_epochs=200, patience=200, monitor="loss")
        model, history = train_one(model, g, splits, cfg, train_rng)
        assert evaluate(model, g, splits[0]) == 1.0

    def test_patience_with_frozen_model(self):
        g = blobs()
        splits = make_splits(g, seed=0)
        model = init_model(SMALL, 4, 3, np.random.default_rng(0))
        _, history = train_one(model, g, splits, TrainConfig(lr=0.0, max_epochs=100, patience=7),
                               np.random.default_rng(1))
        assert len(history) == 8

    def test_deterministic_history(self):
        g = blobs()
        cfg = TrainConfig(max_epochs=15, patience=15, seeds=(3,))
        _, _, h1 = run_one_seed(SMALL, cfg, g, 3)
        _, _, h2 = run_one_seed(SMALL, cfg, g, 3)
        assert strip_time(h1) == strip_time(h2)

    def test_restores_best_epoch(self):
        g = blobs()
        cfg = TrainConfig(max_epochs=30, patience=30)
        result, model, history = run_one_seed(SMALL, cfg, g, 0)
        best = max(history, key=lambda r: r.val_acc)
        assert result.val_acc == best.val_acc
        assert result.best_epoch == best.epoch

    def test_divergence(self):
        g = blobs()
        model = init_model(SMALL, 4, 3, np.random.default_rng(0))
        model.w6.values[...] = np.nan
        with pytest.raises(DivergenceError):
            train_one(model, g, make_splits(g), TrainConfig(max_epochs=5, patience=5), np.random.default_rng(0))


class TestEvaluate:
    def test_all_correct_and_wrong(self):
        g = blobs()
        model = init_model(SMALL, 4, 3, np.random.default_rng(0))
        model.w6.values[...] = 0.0  # every prediction is class 0
        zeros = np.flatnonzero(g.labels == 0)
        others = np.flatnonzero(g.labels != 0)
        assert evaluate(model, g, zeros) == 1.0
        assert evaluate(model, g, others) == 0.0

    def test_hand_count(self):
        g = blobs()
        model = init_model(SMALL, 4, 3, np.random.default_rng(0))
        model.w6.values[...] = 0.0
        idx = np.arange(10)
        assert evaluate(model, g, idx) == int(np.sum(g.labels[idx] == 0)) / 10


def summary(accs):
    return RunSummary([SeedResult(i, 1.0, 1.0, a, 1, 1, 0.0) for i, a in enumerate(accs)])


class TestSummary:
    def test_one_seed_zero_std(self):
        assert summary([0.7]).std == 0.0

    def test_constant(self):
        s = summary([0.6, 0.6, 0.6])
        assert s.mean == pytest.approx(0.6) and s.std == pytest.approx(0.0, abs=1e-15)

    def test_two_values(self):
        s = summary([0.8, 0.9])
        assert s.mean == pytest.approx(0.85, abs=1e-12)
        assert s.std == pytest.approx(0.0707, abs=1e-4)
        assert sample_std([0.8, 0.9]) == pytest.approx(np.sqrt(0.005), abs=1e-12)

    def test_parallel_matches_sequential(self):
        g = blobs()
        cfg = TrainConfig(max_epochs=5, patience=5, seeds=(0, 1))
        a = run_seeds(SMALL, cfg, g).metrics()
        b = run_seeds(SMALL, cfg, g, jobs=2).metrics()
        assert a == b

    def test_writes_artifacts(self, tmp_path):
        g = blobs()
        run_seeds(SMALL, TrainConfig(max_epochs=3, patience=3, seeds=(5,)), g, out_dir=tmp_path)
        assert (tmp_path / "seed5.bin").exists() and (tmp_path / "seed5.manifest").exists()
        assert len((tmp_path / "history_seed5.jsonl").read_text().splitlines()) == 3


class TestTrainConfig:
    @pytest.mark.parametrize("kw", [{"lr": -1}, {"max_epochs": 0}, {"patience": 600}, {"monitor": "f1"}])
    def test_rejects(self, kw):
        with pytest.raises(ContractError):
            TrainConfig(**kw)
