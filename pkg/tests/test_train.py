# SPDX-License-Identifier: MIT
# SPDX-FileCopyrightText: 2025 xbar-resilience contributors

import importlib

import numpy as np
import pytest

from xbar_resilience.archspec import parse_arch, resolve_arch
from xbar_resilience.data import DataSet, load_dataset
from xbar_resilience.errors import TrainConfigError, TrainingDivergedError
from xbar_resilience.metrics import metrics
from xbar_resilience.nn import Gradients, ModelState, init_model
from xbar_resilience.train import (
    Adam,
    LrSchedule,
    Optimizer,
    SGDMomentum,
    TrainConfig,
    accuracy_from_logits,
    evaluate,
    load_bundle,
    save_bundle,
    train,
)

tr = importlib.import_module("xbar_resilience.train")


def _micro(n=10, d=20, seed=0):
    rng = np.random.default_rng(seed)
    return DataSet(rng.random((n, d)).astype(np.float32), np.arange(n) % 10, "mnist")


def test_config_validation():
    for bad in ({"epochs": 0}, {"batch_size": 0}, {"lr": 0.0}, {"sigma_neu": -1.0}, {"grad_clip": 0.0}):
        with pytest.raises(TrainConfigError):
            TrainConfig(**bad)
    with pytest.raises(TrainConfigError):
        TrainConfig(optimizer="rmsprop")
    with pytest.raises(TrainConfigError, match="unknown"):
        TrainConfig.from_dict({"epochs": 2, "warmup": 3})


def test_config_defaults_per_arch():
    rnn = TrainConfig.for_arch(resolve_arch("rnn@t7"))
    assert rnn.epochs == 30 and rnn.grad_clip == 5.0
    mlp = TrainConfig.for_arch(resolve_arch("mlp"), lr=None, seed=4)
    assert mlp.epochs == 20 and mlp.grad_clip is None and mlp.seed == 4
    assert mlp.optimizer is Optimizer.ADAM and mlp.lr == 1e-3 and mlp.batch_size == 64


def test_config_dict_round_trip():
    cfg = TrainConfig(optimizer="sgd-momentum", lr_schedule="exponential", sigma_neu=0.05, grad_clip=1.0)
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg
    assert cfg.lr_schedule is LrSchedule.EXPONENTIAL
    assert cfg.lr_at(2) == pytest.approx(1e-3 * 0.95**2)
    assert TrainConfig().lr_at(5) == 1e-3


def test_optimizers_descend():
    for opt in (SGDMomentum(0.9), Adam()):
        w = {"a": np.array([3.0, -2.0])}
        for _ in range(200):
            opt.step(w, {"a": 2 * w["a"]}, 0.05)
        assert np.linalg.norm(w["a"]) < 0.5


def test_accuracy_fixtures():
    logits = np.array([[0.0, 1.0], [2.0, 0.0], [0.0, 3.0]])
    assert accuracy_from_logits(logits, np.array([1, 0, 1])) == 1.0
    assert accuracy_from_logits(logits, np.array([0, 1, 0])) == 0.0
    assert accuracy_from_logits(logits, np.array([1, 0, 0])) == pytest.approx(2 / 3)
    assert accuracy_from_logits(np.zeros((0, 2)), np.array([])) == 0.0


def test_evaluate_known_logits():
    arch = parse_arch("D4", 1)
    w = np.zeros((2, 4))
    w[0, 2] = 1.0
    ds = DataSet(np.ones((3, 1), dtype=np.float32), np.array([2, 2, 3]))
    assert evaluate(ModelState(arch, {"dense0": w}), ds) == pytest.approx(2 / 3)


def test_overfits_micro_dataset():
    ds = _micro()
    cfg = TrainConfig(lr=0.01, batch_size=10, epochs=200)
    bundle = train(parse_arch("D64-65x10", 20), ds, cfg)
    assert bundle.train_accuracy == 1.0
    assert bundle.test_accuracy is None
    assert bundle.train_config["epochs"] == 200


def test_training_is_deterministic():
    ds = _micro(seed=1)
    arch = parse_arch("D16-17x10", 20)
    cfg = TrainConfig(epochs=3, batch_size=4, sigma_neu=0.1, seed=7)
    a, b = train(arch, ds, cfg), train(arch, ds, cfg)
    assert a.digest == b.digest
    assert train(arch, ds, TrainConfig(epochs=3, batch_size=4, sigma_neu=0.1, seed=8)).digest != a.digest


def test_regularization_keeps_shapes():
    ds = _micro(seed=2)
    arch = parse_arch("D16-17x10", 20)
    plain = train(arch, ds, TrainConfig(epochs=2))
    noisy = train(arch, ds, TrainConfig(epochs=2, sigma_neu=0.05))
    assert {k: v.shape for k, v in plain.weights.items()} == {k: v.shape for k, v in noisy.weights.items()}
    assert noisy.regularized and not plain.regularized
    assert plain.digest != noisy.digest


def test_divergence_aborts(monkeypatch):
    def nan_backward(model, x, labels):
        return Gradients(float("nan"), {lid: np.zeros_like(w) for lid, w in model.weights.items()})

    monkeypatch.setattr(tr, "backward", nan_backward)
    with pytest.raises(TrainingDivergedError) as exc:
        train(parse_arch("D4-5x10", 20), _micro(), TrainConfig(epochs=1, lr=0.5))
    assert exc.value.epoch == 1 and exc.value.batch == 0 and exc.value.lr == 0.5
    assert "learning rate" in str(exc.value)


def test_grad_clip_bounds_updates():
    arch = parse_arch("D8-9x10", 20)
    cfg = TrainConfig(optimizer="sgd-momentum", lr=1.0, epochs=2, batch_size=5, grad_clip=1e-9, seed=3)
    bundle = train(arch, _micro(), cfg)
    start = init_model(arch, 3)
    for lid, w in bundle.weights.items():
        np.testing.assert_allclose(w, start.weights[lid].astype(np.float32), atol=1e-6)


def test_epoch_metric_counts():
    before = metrics.train_epochs_total._value.get()
    train(parse_arch("D4-5x10", 20), _micro(), TrainConfig(epochs=3))
    assert metrics.train_epochs_total._value.get() == before + 3


def test_train_on_dataset_directory(data_root, tmp_path):
    arch = resolve_arch("mlp")
    cfg = TrainConfig(epochs=3, batch_size=16)
    bundle = train(arch, load_dataset("mnist", "train"), cfg, load_dataset("mnist", "test"))
    assert bundle.dataset == "mnist"
    assert 0.0 <= bundle.test_accuracy <= 1.0
    path = save_bundle(bundle, tmp_path / "mlp.bundle")
    again = load_bundle(path)
    assert evaluate(again, load_dataset("mnist", "test")) == bundle.test_accuracy


def test_empty_training_set():
    empty = DataSet(np.zeros((0, 20), dtype=np.float32), np.zeros(0, dtype=np.int64))
    with pytest.raises(TrainConfigError):
        train(parse_arch("D4-5x10", 20), empty, TrainConfig(epochs=1))
