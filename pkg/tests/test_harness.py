# SPDX-License-Identifier: MIT
# SPDX-FileCopyrightText: 2025 xbar-resilience contributors

import csv
import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xbar_resilience.archspec import resolve_arch
from xbar_resilience.bundle import WeightBundle, save_bundle
from xbar_resilience.data import load_dataset
from xbar_resilience.energy import estimate_energy, load_profile
from xbar_resilience.errors import SweepConfigError
from xbar_resilience.harness import (
    CSV_COLUMNS,
    Scenario,
    SweepConfig,
    SweepRecord,
    aggregate,
    export_csv,
    load_records,
    point_seed,
    run_point,
    run_sweep,
    scenario_of,
    table_grid,
)
from xbar_resilience.metrics import metrics
from xbar_resilience.nn import init_model
from xbar_resilience.xbar import count_ops


def _save(tmp_path, name, seed=0, **meta):
    meta.setdefault("dataset", "mnist")
    bundle = WeightBundle.from_model(init_model(resolve_arch(name), seed), **meta)
    return save_bundle(bundle, tmp_path / f"{name}-{seed}.bundle"), bundle


def _record(acc, seed=0, **kw):
    base = dict(
        arch="mlp", dataset="mnist", sigma_syn=0.05, sigma_te=0.0, t=None,
        regularized=False, seed=seed, accuracy=acc, bundle="abc",
    )
    base.update(kw)
    return SweepRecord(**base)


def test_scenarios():
    assert [scenario_of(*p) for p in table_grid()] == [
        Scenario.NOISELESS, Scenario.INTERNAL, Scenario.EXTERNAL, Scenario.COMBINED,
    ]
    assert table_grid(0.1)[3] == (0.1, 0.1)
    assert _record(0.5, sigma_syn=0.0, sigma_te=0.2).scenario is Scenario.EXTERNAL


def test_config_validation(tmp_path):
    b = tmp_path / "b"
    with pytest.raises(SweepConfigError, match="empty"):
        SweepConfig(bundles=(b,), sigma_syn=())
    with pytest.raises(SweepConfigError, match="distinct"):
        SweepConfig(bundles=(b,), seeds=(1, 1))
    with pytest.raises(SweepConfigError):
        SweepConfig(bundles=(b,), sigma_te=(-0.1,))
    with pytest.raises(SweepConfigError):
        SweepConfig(bundles=(b,), split="validation")
    with pytest.raises(SweepConfigError):
        SweepConfig(bundles=())
    with pytest.raises(SweepConfigError, match="unknown"):
        SweepConfig.from_dict({"bundles": ["b"], "sigma": [0.1]})
    with pytest.raises(SweepConfigError, match="bundles"):
        SweepConfig.from_dict({"seeds": [0]})
    with pytest.raises(SweepConfigError, match="does not exist"):
        SweepConfig.from_file(tmp_path / "absent.json")


def test_config_defaults():
    cfg = SweepConfig(bundles="x")
    assert cfg.sigma_syn == (0.0, 0.0125, 0.025, 0.05, 0.075, 0.1)
    assert cfg.seeds == tuple(range(10))
    assert len(cfg.points) == 6


def test_yaml_config_paths_are_relative(tmp_path):
    (tmp_path / "cfg").mkdir()
    path = tmp_path / "cfg" / "sweep.yaml"
    path.write_text("bundles: [models/mlp]\nsigma_syn: [0, 0.05]\nseeds: 3\nsyn_mode: per-read\ntech: SONOS\n")
    cfg = SweepConfig.from_file(path)
    assert cfg.bundles == (tmp_path / "cfg" / "models" / "mlp",)
    assert cfg.seeds == (3,)
    assert cfg.to_dict()["syn_mode"] == "per-read"
    assert cfg.to_dict()["tech"] == "sonos"


def test_run_point_is_reproducible(data_root):
    bundle = WeightBundle.from_model(init_model(resolve_arch("mlp128"), 1))
    ds = load_dataset("mnist", "test")
    a = run_point(bundle, ds, 0.1, 0.1, seed=4)
    assert a == run_point(bundle, ds, 0.1, 0.1, seed=4)
    assert 0.0 <= a <= 1.0
    assert point_seed(bundle.digest, 0.1, 0.1, 4) != point_seed(bundle.digest, 0.1, 0.1, 5)
    assert point_seed(bundle.digest, 0.1, 0, 4) == point_seed(bundle.digest, 0.1, 0.0, 4)


def test_sweep_writes_one_record_per_seed(tmp_path, data_root):
    path, bundle = _save(tmp_path, "mlp128")
    cfg = SweepConfig(bundles=(path,), sigma_syn=(0.05,), seeds=(0, 1, 2))
    log = tmp_path / "records.jsonl"
    records = run_sweep(cfg, log)
    assert [r.seed for r in records] == [0, 1, 2]
    assert all(r.n == 30 and r.dataset == "mnist" and r.arch == "mlp128" for r in records)
    assert all(r.bundle == bundle.digest and r.t is None for r in records)
    assert len({r.sub_seed for r in records}) == 3
    assert load_records(log) == records


def test_sweep_resume_is_idempotent(tmp_path, data_root):
    path, _ = _save(tmp_path, "mlp128")
    log = tmp_path / "records.jsonl"
    first = run_sweep(SweepConfig(bundles=(path,), sigma_syn=(0.0, 0.1), seeds=(0,)), log)
    assert len(log.read_text().splitlines()) == 2

    skipped = metrics.sweep_points_total.labels("skipped")
    before = skipped._value.get()
    cfg = SweepConfig(bundles=(path,), sigma_syn=(0.0, 0.1), seeds=(0, 1))
    full = run_sweep(cfg, log)
    assert skipped._value.get() == before + 2
    assert len(log.read_text().splitlines()) == 4
    assert [r for r in full if r.seed == 0] == first

    again = run_sweep(cfg, log)
    assert again == full
    assert len(log.read_text().splitlines()) == 4


def test_sweep_resume_keys_on_batch_size(tmp_path, data_root):
    path, _ = _save(tmp_path, "mlp128")
    log = tmp_path / "records.jsonl"
    base = dict(bundles=(path,), sigma_syn=(0.1,), seeds=(0,), syn_mode="per-read")
    (small,) = run_sweep(SweepConfig(**base, batch_size=8), log)
    (large,) = run_sweep(SweepConfig(**base, batch_size=512), log)
    assert len(log.read_text().splitlines()) == 2
    assert (small.batch_size, large.batch_size) == (8, 512)
    assert run_sweep(SweepConfig(**base, batch_size=8), log) == [small]
    assert len(log.read_text().splitlines()) == 2


def test_threaded_sweep_matches_serial(tmp_path, data_root):
    path, _ = _save(tmp_path, "mlp128")
    cfg = SweepConfig(bundles=(path,), sigma_syn=(0.0, 0.1), sigma_te=(0.0, 0.2), seeds=(0, 1))
    serial = run_sweep(cfg, tmp_path / "a.jsonl")
    threaded = run_sweep(cfg, tmp_path / "b.jsonl", jobs=3)
    assert serial == threaded
    assert len(serial) == 8


def test_sweep_attaches_energy(tmp_path, data_root):
    path, bundle = _save(tmp_path, "mlp128")
    records = run_sweep(SweepConfig(bundles=(path,), sigma_syn=(0.0,), seeds=(0,), tech="reram"), tmp_path / "r.jsonl")
    expected = estimate_energy(count_ops(bundle.arch), load_profile("reram")).total
    assert records[0].energy["tech"] == "reram"
    assert records[0].energy["total"] == pytest.approx(expected)


def test_sweep_filters(tmp_path, data_root):
    plain, _ = _save(tmp_path, "mlp128")
    reg, _ = _save(tmp_path, "mlp128", seed=1, train_config={"sigma_neu": 0.05})
    records = run_sweep(
        SweepConfig(bundles=(plain, reg), sigma_syn=(0.0,), seeds=(0,), regularized=True), tmp_path / "r.jsonl"
    )
    assert [r.regularized for r in records] == [True]
    with pytest.raises(SweepConfigError, match="filters"):
        run_sweep(SweepConfig(bundles=(plain,), time_steps=(7,), seeds=(0,)), tmp_path / "s.jsonl")


def test_sweep_needs_dataset(tmp_path, data_root):
    path, _ = _save(tmp_path, "mlp128", dataset="")
    with pytest.raises(SweepConfigError, match="dataset"):
        run_sweep(SweepConfig(bundles=(path,), seeds=(0,)), tmp_path / "r.jsonl")
    records = run_sweep(
        SweepConfig(bundles=(path,), sigma_syn=(0.0,), seeds=(0,), dataset="fashion-mnist", limit=10),
        tmp_path / "r.jsonl",
    )
    assert records[0].dataset == "fashion-mnist" and records[0].n == 10


def test_aggregate_single_and_pair():
    (one,) = aggregate([_record(0.9)])
    assert (one.n, one.mean, one.std) == (1, 0.9, 0.0)
    (pair,) = aggregate([_record(0.9, 0), _record(0.8, 1)])
    assert pair.mean == pytest.approx(0.85)
    assert pair.std == pytest.approx(math.sqrt(0.005))


def test_aggregate_groups_and_orders():
    rows = aggregate([
        _record(0.5, sigma_syn=0.1),
        _record(0.7, arch="rnn@t7", t=7),
        _record(0.6, sigma_syn=0.0),
        _record(0.4, arch="rnn@t4", t=4),
    ])
    assert [(r.arch, r.sigma_syn) for r in rows] == [("mlp", 0.0), ("mlp", 0.1), ("rnn@t4", 0.05), ("rnn@t7", 0.05)]


def test_aggregate_rejects_mixed_noise_modes():
    records = [_record(0.9, syn_mode="static-per-run"), _record(0.5, seed=1, syn_mode="per-read")]
    with pytest.raises(SweepConfigError, match="per-read"):
        aggregate(records)


def test_aggregate_rejects_mixed_bundles():
    with pytest.raises(SweepConfigError, match="separately"):
        aggregate([_record(0.9, bundle="abc"), _record(0.8, seed=1, bundle="def")])


def test_aggregate_keeps_modes_apart_per_point():
    rows = aggregate([_record(0.9, syn_mode="per-read"), _record(0.5, sigma_syn=0.1)])
    assert [(r.sigma_syn, r.n) for r in rows] == [(0.05, 1), (0.1, 1)]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=12), st.randoms())
def test_aggregate_ignores_record_order(accs, rnd):
    records = [_record(a, seed=i) for i, a in enumerate(accs)]
    shuffled = records[:]
    rnd.shuffle(shuffled)
    assert aggregate(records) == aggregate(shuffled)


def test_export_csv(tmp_path):
    rows = aggregate([_record(0.9), _record(0.7, arch="rnn@t7", t=7, regularized=True)])
    path = export_csv(rows, tmp_path / "out" / "summary.csv")
    with path.open(newline="") as fh:
        table = list(csv.reader(fh))
    assert tuple(table[0]) == CSV_COLUMNS
    assert table[1][CSV_COLUMNS.index("t")] == ""
    assert table[2][CSV_COLUMNS.index("t")] == "7"
    assert table[2][CSV_COLUMNS.index("regularized")] == "True"
    assert float(table[1][CSV_COLUMNS.index("mean")]) == 0.9


def test_record_round_trip_ignores_extra_keys():
    rec = _record(0.5, energy={"tech": "sonos", "total": 1e-9})
    data = json.loads(json.dumps({**rec.to_dict(), "host": "x"}))
    assert SweepRecord.from_dict(data) == rec
