# SPDX-License-Identifier: MIT
# SPDX-FileCopyrightText: 2025 xbar-resilience contributors

import numpy as np
import pytest

from xbar_resilience.archspec import parse_arch, resolve_arch
from xbar_resilience.bundle import WeightBundle
from xbar_resilience.data import DataSet, NoiseConfig, SynMode
from xbar_resilience.errors import CrossbarMappingError, NoiseConfigError
from xbar_resilience.nn import init_model
from xbar_resilience.train import TrainConfig, evaluate, train
from xbar_resilience.xbar import (
    CrossbarArray,
    CrossbarProgram,
    count_ops,
    infer,
    map_to_arrays,
    perturb_devices,
)


def _bundle(name, seed=0):
    return WeightBundle.from_model(init_model(resolve_arch(name), seed))


def _images(n, d, seed=0):
    rng = np.random.default_rng(seed)
    return DataSet(rng.random((n, d)).astype(np.float32), rng.integers(0, 10, n))


@pytest.fixture(scope="module")
def micro():
    rng = np.random.default_rng(5)
    ds = DataSet(rng.random((10, 20)).astype(np.float32), np.arange(10))
    bundle = train(parse_arch("D64-65x10", 20), ds, TrainConfig(lr=0.01, batch_size=10, epochs=200))
    return bundle, ds


def test_mlp_mapping():
    prog = map_to_arrays(_bundle("mlp"))
    assert [(a.layer_id, a.rows, a.cols) for a in prog.arrays] == [("dense0", 785, 300), ("dense1", 301, 10)]
    assert prog.devices == 238_510
    for a in prog.arrays:
        assert a.scale == pytest.approx(float(np.max(np.abs(a.weights))))
        assert np.max(np.abs(a.programmed)) == pytest.approx(1.0)


def test_rnn_core_is_one_array():
    prog = map_to_arrays(_bundle("rnn@t7"))
    assert [(a.layer_id, a.rows, a.cols) for a in prog.arrays] == [("recurrent0", 301, 400), ("readout1", 401, 10)]


def test_cnn_arrays_skip_pooling():
    prog = map_to_arrays(_bundle("cnn"))
    assert [a.layer_id for a in prog.arrays] == ["conv0", "conv1", "conv3", "conv4", "dense5", "dense6"]
    assert prog.devices == 119_322


def test_zero_array_scale():
    arr = CrossbarArray("dense0", np.zeros((3, 2)), 1.0)
    assert arr.scale == 1.0 and not np.any(arr.programmed)
    bundle = WeightBundle(parse_arch("D2", 2), {"dense0": np.zeros((3, 2))})
    assert map_to_arrays(bundle).arrays[0].scale == 1.0


def test_zero_sigma_is_identity():
    prog = map_to_arrays(_bundle("mlp"))
    assert perturb_devices(prog, 0.0, seed=3) is prog


def test_negative_sigma_rejected():
    with pytest.raises(NoiseConfigError):
        perturb_devices(map_to_arrays(_bundle("mlp")), -0.01, seed=0)


def test_static_delta_statistics():
    prog = perturb_devices(map_to_arrays(_bundle("mlp")), 0.025, seed=11)
    deltas = np.concatenate([a.deltas.ravel() for a in prog.arrays])
    assert deltas.size == 238_510
    assert abs(deltas.std() - 0.025) < 0.01 * 0.025
    assert abs(deltas.mean()) < 5e-4
    a = prog.array("dense1")
    np.testing.assert_allclose(a.effective(), a.weights + a.deltas * a.scale)


def test_perturbation_seeding():
    base = map_to_arrays(_bundle("mlp"))
    a = perturb_devices(base, 0.05, seed=1)
    b = perturb_devices(base, 0.05, seed=1)
    c = perturb_devices(base, 0.05, seed=2)
    assert np.array_equal(a.array("dense0").deltas, b.array("dense0").deltas)
    assert not np.array_equal(a.array("dense0").deltas, c.array("dense0").deltas)


def test_perturbation_replaces_previous():
    base = map_to_arrays(_bundle("mlp"))
    once = perturb_devices(base, 0.05, seed=4)
    twice = perturb_devices(once, 0.05, seed=4)
    assert np.array_equal(once.array("dense1").deltas, twice.array("dense1").deltas)


def test_zero_sigma_clears_earlier_perturbation(micro):
    bundle, ds = micro
    clean = map_to_arrays(bundle)
    for mode in ("static-per-run", "per-read"):
        noisy = perturb_devices(clean, 0.05, seed=1, mode=mode)
        reset = perturb_devices(noisy, 0.0, seed=2)
        assert reset.sigma_syn == 0.0 and reset.syn_mode is SynMode.STATIC
        assert all(a.deltas is None for a in reset.arrays)
        expected = infer(clean, bundle.arch, ds, NoiseConfig()).accuracy
        assert infer(reset, bundle.arch, ds, NoiseConfig()).accuracy == expected


def test_noiseless_inference_matches_reference():
    bundle = _bundle("mlp", seed=2)
    ds = _images(300, 784)
    result = infer(map_to_arrays(bundle), bundle.arch, ds, NoiseConfig())
    assert result.accuracy == evaluate(bundle, ds)


def test_noiseless_cnn_matches_reference():
    bundle = _bundle("cnn", seed=2)
    ds = _images(40, 784)
    assert infer(map_to_arrays(bundle), bundle.arch, ds, NoiseConfig()).accuracy == evaluate(bundle, ds)


def test_op_counts():
    mlp = count_ops(resolve_arch("mlp"))
    assert mlp.activations == 310
    assert (mlp.row_drives, mlp.column_conversions) == (1086, 310)

    rnn = count_ops(resolve_arch("rnn@t7"))
    assert [(r.layer_id, r.count) for r in rnn.reads] == [("recurrent0", 7), ("readout1", 1)]
    assert rnn.activations == 7 * 189
    assert (rnn.row_drives, rnn.column_conversions) == (2508, 2810)

    cnn = count_ops(resolve_arch("cnn"))
    assert cnn.activations == 7156
    assert [r.count for r in cnn.reads] == [784, 784, 196, 196, 1, 1]
    assert (cnn.row_drives, cnn.column_conversions) == (47_338, 7_166)
    assert cnn.to_dict()["cells"] == cnn.cells


def test_counts_independent_of_noise():
    bundle = _bundle("mlp")
    ds = _images(20, 784)
    prog = perturb_devices(map_to_arrays(bundle), 0.1, seed=0)
    noisy = infer(prog, bundle.arch, ds, NoiseConfig(sigma_syn=0.1, sigma_te=0.2, seed=1))
    assert noisy.counts == count_ops(bundle.arch)


def test_per_read_column_spread():
    w = np.array([[0.5, -1.0], [0.25, 0.5], [0.0, 0.0]])
    arch = parse_arch("D2", 2)
    prog = CrossbarProgram(arch, (CrossbarArray("dense0", w, 1.0),))
    noisy = perturb_devices(prog, 0.1, seed=9, mode=SynMode.PER_READ)
    x = np.tile([[3.0, 4.0, 0.0]], (20_000, 1))
    read = noisy.reader(0)
    y = read("dense0", x)
    spread = (y - x @ w).std(axis=0)
    np.testing.assert_allclose(spread, 0.1 * 5.0, rtol=0.03)
    assert np.array_equal(noisy.reader(0)("dense0", x[:5]), y[:5])
    assert not np.array_equal(noisy.reader(1)("dense0", x[:5]), y[:5])


def test_per_read_inference_is_reproducible():
    bundle = _bundle("mlp")
    ds = _images(64, 784)
    noise = NoiseConfig(sigma_syn=0.5, syn_mode="per-read", seed=3)
    prog = perturb_devices(map_to_arrays(bundle), 0.5, seed=3, mode="per-read")
    a = infer(prog, bundle.arch, ds, noise, batch_size=16)
    b = infer(prog, bundle.arch, ds, noise, batch_size=16, jobs=4)
    assert a == b


def test_threaded_inference_matches_serial():
    bundle = _bundle("mlp", seed=1)
    ds = _images(100, 784)
    prog = perturb_devices(map_to_arrays(bundle), 0.05, seed=2)
    noise = NoiseConfig(sigma_syn=0.05, sigma_te=0.1, seed=2)
    assert infer(prog, bundle.arch, ds, noise, batch_size=7).accuracy == infer(
        prog, bundle.arch, ds, noise, batch_size=7, jobs=3
    ).accuracy


def test_heavy_noise_degrades(micro):
    bundle, ds = micro
    clean = infer(map_to_arrays(bundle), bundle.arch, ds, NoiseConfig())
    assert clean.accuracy == 1.0
    prog = perturb_devices(map_to_arrays(bundle), 5.0, seed=1)
    noisy = infer(prog, bundle.arch, ds, NoiseConfig(sigma_syn=5.0, seed=1))
    assert noisy.accuracy < 1.0


def test_mapping_errors():
    mlp = _bundle("mlp")
    prog = map_to_arrays(mlp)
    with pytest.raises(CrossbarMappingError):
        infer(prog, resolve_arch("mlp128"), _images(4, 784), NoiseConfig())
    with pytest.raises(CrossbarMappingError, match="inputs"):
        infer(prog, mlp.arch, _images(4, 100), NoiseConfig())
    with pytest.raises(CrossbarMappingError, match="perturb_devices"):
        infer(prog, mlp.arch, _images(4, 784), NoiseConfig(sigma_syn=0.1))
    static = perturb_devices(prog, 0.1, seed=0)
    with pytest.raises(CrossbarMappingError):
        infer(static, mlp.arch, _images(4, 784), NoiseConfig(sigma_syn=0.1, syn_mode="per-read"))


def test_empty_dataset():
    bundle = _bundle("mlp")
    empty = DataSet(np.zeros((0, 784), dtype=np.float32), np.zeros(0, dtype=np.int64))
    assert infer(map_to_arrays(bundle), bundle.arch, empty, NoiseConfig()).accuracy == 0.0
