import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pclab import oracles
from pclab.errors import ConfigError, ContractError
from pclab.model import ClassifierWeights, Encoder, Model
from pclab.numerics import Tensor
from pclab.synthdata import make_benchmark
from pclab.training import (
    METRIC_COLUMNS,
    TrainConfig,
    cross_entropy,
    deviation_score,
    pseudo_label_loss,
    records_equal,
    train,
)
import pclab.training as training_mod

QUICK = TrainConfig(steps=40, eval_interval=10, probe_steps=50)


@pytest.fixture(scope="module")
def bench():
    return make_benchmark(seed=0)


def _softmax(z):
    e = np.exp(z - z.max(1, keepdims=True))
    return e / e.sum(1, keepdims=True)


class TestCrossEntropy:
    def test_perfect_prediction(self):
        assert cross_entropy(Tensor(np.eye(3)), [0, 1, 2]).item() == 0.0

    @pytest.mark.parametrize("c", [2, 3, 7])
    def test_uniform(self, c):
        assert cross_entropy(Tensor(np.full((4, c), 1 / c)), [0] * 4).item() == pytest.approx(math.log(c), abs=1e-12)

    @given(st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_matches_loop(self, seed):
        rng = np.random.default_rng(seed)
        p = _softmax(rng.standard_normal((5, 4)))
        y = rng.integers(0, 4, 5)
        assert cross_entropy(Tensor(p), y).item() == pytest.approx(oracles.cross_entropy(p, y), abs=1e-12)

    def test_label_range(self):
        with pytest.raises(ContractError):
            cross_entropy(Tensor(np.full((2, 3), 1 / 3)), [0, 3])


class TestPseudoLabel:
    def test_nothing_confident(self):
        loss, count = pseudo_label_loss(Tensor(np.full((4, 4), 0.25)), Tensor(np.full((4, 4), 0.25)), 0.95)
        assert loss.item() == 0.0 and count == 0

    def test_perfect_agreement(self):
        onehot = np.eye(4)[[0, 3, 1, 1]]
        loss, count = pseudo_label_loss(Tensor(onehot), Tensor(onehot), 0.95)
        assert loss.item() == 0.0 and count == 4

    @given(st.integers(0, 10_000), st.floats(0.3, 0.99))
    @settings(max_examples=40, deadline=None)
    def test_matches_loop(self, seed, tau):
        rng = np.random.default_rng(seed)
        weak, strong = _softmax(3 * rng.standard_normal((6, 4))), _softmax(rng.standard_normal((6, 4)))
        loss, count = pseudo_label_loss(Tensor(weak), Tensor(strong), tau)
        want, want_count = oracles.pseudo_label(weak, strong, tau)
        assert count == want_count
        assert loss.item() == pytest.approx(want, abs=1e-12)

    def test_no_gradient_into_weak_view(self):
        weak = Tensor(np.eye(3), requires_grad=True)
        strong = Tensor(_softmax(np.random.default_rng(0).standard_normal((3, 3))), requires_grad=True)
        loss, _ = pseudo_label_loss(weak, strong, 0.5)
        loss.backward()
        assert weak.grad is None and strong.grad is not None


class TestDeviation:
    def _model(self, W):
        clf = ClassifierWeights(*W.shape, zero=True)
        clf.W.data[...] = W
        return Model(Encoder([W.shape[1]]), clf)

    def test_aligned(self):
        pts = np.array([[2.0, 0.0], [3.0, 0.0], [0.0, 1.0]])
        assert deviation_score(self._model(np.eye(2)), pts, [0, 0, 1]) == pytest.approx(0.0, abs=1e-15)

    def test_orthogonal(self):
        pts = np.array([[0.0, 1.0], [1.0, 0.0]])
        assert deviation_score(self._model(np.eye(2)), pts, [0, 1]) == pytest.approx(1.0, abs=1e-15)

    def test_needs_some_class(self):
        with pytest.raises(ContractError):
            deviation_score(self._model(np.eye(2)), np.zeros((0, 2)), [])


class TestConfig:
    def test_round_trip(self):
        cfg = TrainConfig(lr=0.3, loss={"kind": "BCE", "scale": 20.0}, pseudo_label={"enabled": True})
        assert TrainConfig.from_dict(cfg.to_dict()) == cfg
        json.dumps(cfg.to_dict())

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            TrainConfig.from_dict({"learning_rate": 1})

    def test_nested_override_merges(self):
        cfg = TrainConfig(loss={"kind": "PCL", "scale": 20.0}).with_overrides({"loss": {"kind": "FCL"}})
        assert cfg.loss.kind.value == "FCL" and cfg.loss.scale == 20.0

    @pytest.mark.parametrize("bad", [{"steps": 0}, {"lambda_contrastive": -1.0}, {"batch_target": 0}])
    def test_validation(self, bad):
        with pytest.raises(ConfigError):
            TrainConfig(**bad)


class TestTrain:
    def test_single_step_single_interval(self, bench):
        rec = train(QUICK.with_overrides({"steps": 1}), bench)
        assert len(rec.metrics) == 1 and rec.metrics[0]["step"] == 1
        assert rec.final["steps_completed"] == 1

    def test_interval_count(self, bench):
        rec = train(QUICK.with_overrides({"steps": 25, "eval_interval": 10}), bench)
        assert [m["step"] for m in rec.metrics] == [10, 20, 25]

    def test_deterministic(self, bench):
        assert records_equal(train(QUICK, bench), train(QUICK, make_benchmark(seed=0)))

    def test_seed_matters(self, bench):
        assert not records_equal(train(QUICK, bench), train(QUICK.with_overrides({"seed": 1}), bench))

    @pytest.mark.parametrize("kind", ["PCL", "LCL", "BCE", "SFCL", "NTCL"])
    def test_zero_lambda_removes_the_term(self, bench, kind):
        base = train(QUICK.with_overrides({"lambda_contrastive": 0.0, "loss": {"kind": "FCL"}}), bench)
        other = train(QUICK.with_overrides({"lambda_contrastive": 0.0, "loss": {"kind": kind}}), bench)
        for a, b in zip(base.model.encoder.parameters(), other.model.encoder.parameters()):
            assert np.array_equal(a.data, b.data)
        assert np.array_equal(base.class_weights, other.class_weights)

    @pytest.mark.parametrize("kind", ["FCL", "LCL", "NTCL", "SFCL", "PCL", "PCL_L2", "PCL_MSE", "BCE"])
    def test_every_kind_runs(self, bench, kind):
        rec = train(QUICK.with_overrides({"loss": {"kind": kind}, "steps": 10}), bench)
        assert not rec.diverged
        assert 0.0 <= rec.final["actual_accuracy"] <= 1.0

    def test_pseudo_label_branch(self, bench):
        cfg = QUICK.with_overrides({"pseudo_label": {"enabled": True, "confidence": 0.3}})
        rec = train(cfg, bench)
        assert any(m["loss_pseudo"] > 0 for m in rec.metrics)

    def test_few_shot_kept_out_of_pool(self, bench):
        rec = train(QUICK.with_overrides({"few_shot_in_contrastive": False}), bench)
        assert not rec.diverged

    def test_divergence_guard(self, bench, monkeypatch):
        calls = {"n": 0}
        real = training_mod.compute_loss

        def poisoned(*args, **kw):
            calls["n"] += 1
            out = real(*args, **kw)
            return Tensor(math.nan) if calls["n"] == 3 else out

        monkeypatch.setattr(training_mod, "compute_loss", poisoned)
        rec = train(QUICK, bench)
        assert rec.diverged and rec.final["steps_completed"] == 2
        assert "step 3" in rec.final["failure"]

    def test_exports(self, bench):
        rec = train(QUICK, bench)
        n = len(bench.source) + len(bench.target)
        assert rec.features.shape == (n, QUICK.feature_dim)
        assert rec.class_weights.shape == (4, QUICK.feature_dim)
        assert rec.feature_domains.count("target") == len(bench.target)

    def test_write(self, bench, tmp_path):
        rec = train(QUICK, bench)
        rec.write(tmp_path / "cell")
        with open(tmp_path / "cell" / "metrics.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert tuple(rows[0]) == METRIC_COLUMNS and len(rows) == len(rec.metrics)
        assert float(rows[-1]["target_accuracy"]) == rec.metrics[-1]["target_accuracy"]
        saved = json.loads((tmp_path / "cell" / "record.json").read_text())
        assert saved["final"] == rec.final


class TestBenchmarkRuns:
    """Properties of the shared Baseline/FCL/PCL grid on the default benchmark."""

    def test_oracle_never_far_below_actual(self, benchmark_results):
        for runs in benchmark_results.values():
            for r in runs:
                assert r["oracle_accuracy"] >= r["actual_accuracy"] - 0.01

    def test_pcl_is_more_confident_than_fcl(self, benchmark_results):
        mmp = {k: np.mean([r["mean_max_prob"] for r in v]) for k, v in benchmark_results.items()}
        assert mmp["PCL"] > mmp["FCL"]

    def test_nothing_diverged(self, benchmark_results):
        assert not any(r["diverged"] for runs in benchmark_results.values() for r in runs)
