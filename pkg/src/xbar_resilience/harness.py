# SPDX-License-Identifier: MIT
# SPDX-FileCopyrightText: 2025 xbar-resilience contributors
"""Noise sweeps over trained bundles: grid expansion, resumable execution,
multi-seed aggregation and plot-ready CSV export.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from itertools import product
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import yaml
from tqdm import tqdm

from .archspec import ArchSpec, preset_name
from .bundle import WeightBundle, load_bundle
from .data import DataSet, NoiseConfig, SynMode, load_dataset
from .energy import EnergyParams, Tech, estimate_energy, load_profile
from .errors import NoiseConfigError, SweepConfigError
from .ledger import RecordLog
from .metrics import metrics
from .rng import derive_seed
from .utils.logging import get_logger
from .xbar import CrossbarProgram, count_ops, infer, map_to_arrays, perturb_devices

__all__ = [
    "CSV_COLUMNS",
    "DEFAULT_SEEDS",
    "DEFAULT_SIGMA_SYN_GRID",
    "Scenario",
    "SummaryRow",
    "SweepConfig",
    "SweepRecord",
    "aggregate",
    "arch_label",
    "export_csv",
    "load_records",
    "point_seed",
    "run_point",
    "run_sweep",
    "scenario_of",
    "table_grid",
]

log = get_logger("xbar.sweep")

DEFAULT_SIGMA_SYN_GRID: tuple[float, ...] = (0.0, 0.0125, 0.025, 0.05, 0.075, 0.1)
DEFAULT_SEEDS: tuple[int, ...] = tuple(range(10))
TABLE_SIGMA = 0.025
CSV_COLUMNS = ("arch", "dataset", "sigma_syn", "sigma_te", "t", "regularized", "n", "mean", "std")


class Scenario(str, Enum):
    NOISELESS = "noiseless"
    INTERNAL = "internal"
    EXTERNAL = "external"
    COMBINED = "combined"


def scenario_of(sigma_syn: float, sigma_te: float) -> Scenario:
    if sigma_syn > 0 and sigma_te > 0:
        return Scenario.COMBINED
    if sigma_syn > 0:
        return Scenario.INTERNAL
    if sigma_te > 0:
        return Scenario.EXTERNAL
    return Scenario.NOISELESS


def table_grid(sigma: float = TABLE_SIGMA) -> list[tuple[float, float]]:
    """(sigma_syn, sigma_te) for the noiseless, internal, external and combined scenarios."""
    return [(0.0, 0.0), (sigma, 0.0), (0.0, sigma), (sigma, sigma)]


def _floats(name: str, values: Any) -> tuple[float, ...]:
    if isinstance(values, (int, float)):
        values = [values]
    try:
        out = tuple(float(v) for v in values)
    except (TypeError, ValueError):
        raise SweepConfigError(f"{name} must be a list of numbers, got {values!r}") from None
    if not out:
        raise SweepConfigError(f"{name} grid is empty")
    bad = [v for v in out if not math.isfinite(v) or v < 0]
    if bad:
        raise SweepConfigError(f"{name} values must be finite and >= 0, got {bad}")
    return out


@dataclass(frozen=True)
class SweepConfig:
    bundles: tuple[Path, ...]
    sigma_syn: tuple[float, ...] = DEFAULT_SIGMA_SYN_GRID
    sigma_te: tuple[float, ...] = (0.0,)
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    dataset: str | None = None
    split: str = "test"
    time_steps: tuple[int, ...] = ()
    regularized: bool | None = None
    syn_mode: SynMode = SynMode.STATIC
    limit: int | None = None
    tech: Tech | None = None
    batch_size: int = 512

    def __post_init__(self) -> None:
        set_ = object.__setattr__
        if isinstance(self.bundles, (str, Path)):
            set_(self, "bundles", (self.bundles,))
        set_(self, "bundles", tuple(Path(b) for b in self.bundles))
        if not self.bundles:
            raise SweepConfigError("sweep names no bundles")
        set_(self, "sigma_syn", _floats("sigma_syn", self.sigma_syn))
        set_(self, "sigma_te", _floats("sigma_te", self.sigma_te))
        seeds = (self.seeds,) if isinstance(self.seeds, int) else tuple(self.seeds)
        if not seeds:
            raise SweepConfigError("seed list is empty")
        if len(set(seeds)) != len(seeds):
            raise SweepConfigError(f"seeds must be distinct, got {list(seeds)}")
        set_(self, "seeds", tuple(int(s) for s in seeds))
        set_(self, "time_steps", tuple(int(t) for t in self.time_steps))
        if self.split not in ("train", "test"):
            raise SweepConfigError(f"split must be train or test, got {self.split!r}")
        try:
            set_(self, "syn_mode", SynMode(self.syn_mode))
        except ValueError:
            raise SweepConfigError(f"unknown syn_mode {self.syn_mode!r}") from None
        if self.tech is not None:
            set_(self, "tech", Tech.parse(self.tech))
        if self.limit is not None and self.limit < 1:
            raise SweepConfigError(f"limit must be >= 1, got {self.limit}")
        if self.batch_size < 1:
            raise SweepConfigError(f"batch_size must be >= 1, got {self.batch_size}")

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(product(self.sigma_syn, self.sigma_te))

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], base_dir: Path | None = None) -> SweepConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise SweepConfigError(f"unknown sweep config keys: {', '.join(sorted(unknown))}")
        if "bundles" not in data:
            raise SweepConfigError("sweep config has no 'bundles' list")
        kwargs = dict(data)
        bundles = kwargs["bundles"]
        if isinstance(bundles, (str, Path)):
            bundles = [bundles]
        if base_dir is not None:
            bundles = [p if Path(p).is_absolute() else base_dir / p for p in bundles]
        kwargs["bundles"] = tuple(bundles)
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str | Path) -> SweepConfig:
        """JSON, or YAML when the suffix is ``.yml``/``.yaml``; bundle paths are relative to the file."""
        p = Path(path)
        try:
            text = p.read_text()
        except FileNotFoundError:
            raise SweepConfigError(f"sweep config {p} does not exist") from None
        try:
            data = yaml.safe_load(text) if p.suffix.lower() in (".yml", ".yaml") else json.loads(text)
        except (ValueError, yaml.YAMLError) as exc:
            raise SweepConfigError(f"{p}: unreadable sweep config ({exc})") from exc
        if not isinstance(data, dict):
            raise SweepConfigError(f"{p}: sweep config must be a mapping")
        return cls.from_dict(data, p.parent)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["bundles"] = [str(b) for b in self.bundles]
        d["syn_mode"] = self.syn_mode.value
        d["tech"] = self.tech.value if self.tech else None
        return d


@dataclass(frozen=True)
class SweepRecord:
    arch: str
    dataset: str
    sigma_syn: float
    sigma_te: float
    t: int | None
    regularized: bool
    seed: int
    accuracy: float
    bundle: str
    syn_mode: str = SynMode.STATIC.value
    n: int = 0
    sub_seed: int = 0
    batch_size: int = 512
    energy: dict[str, Any] | None = field(default=None, compare=False)

    @property
    def key(self) -> tuple[Any, ...]:
        return (
            self.bundle, self.dataset, self.n, self.syn_mode, self.batch_size, self.sigma_syn, self.sigma_te, self.seed
        )

    @property
    def scenario(self) -> Scenario:
        return scenario_of(self.sigma_syn, self.sigma_te)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> SweepRecord:
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})


def arch_label(arch: ArchSpec) -> str:
    return preset_name(arch) or arch.render()


def point_seed(bundle_digest: str, sigma_syn: float, sigma_te: float, seed: int) -> int:
    """Sub-seed for one grid point; keyed by the point's values so grid edits never reshuffle seeds."""
    return derive_seed(seed, bundle_digest, repr(float(sigma_syn)), repr(float(sigma_te)))


def run_point(
    bundle: WeightBundle,
    dataset: DataSet,
    sigma_syn: float,
    sigma_te: float,
    seed: int,
    *,
    syn_mode: SynMode | str = SynMode.STATIC,
    program: CrossbarProgram | None = None,
    batch_size: int = 512,
) -> float:
    """Accuracy of one (bundle, sigma_syn, sigma_te, seed) grid point."""
    sub = point_seed(bundle.digest, sigma_syn, sigma_te, seed)
    mode = SynMode(syn_mode)
    prog = perturb_devices(program or map_to_arrays(bundle), sigma_syn, sub, mode)
    try:
        noise = NoiseConfig(sigma_syn=sigma_syn, sigma_te=sigma_te, syn_mode=mode, seed=sub)
    except NoiseConfigError as exc:
        raise SweepConfigError(str(exc)) from exc
    return infer(prog, bundle.arch, dataset, noise, batch_size=batch_size).accuracy


def _energy_ref(arch: ArchSpec, params: EnergyParams) -> dict[str, Any]:
    report = estimate_energy(count_ops(arch), params)
    return {
        "tech": params.tech.value,
        "total": report.total,
        "vmm": report.vmm_energy,
        "activation": report.activation_energy,
    }


def load_records(path: str | Path) -> list[SweepRecord]:
    return [SweepRecord.from_dict(r) for r in RecordLog(path).records()]


def run_sweep(
    cfg: SweepConfig,
    log_path: str | Path,
    *,
    jobs: int = 1,
    progress: bool = False,
    root: str | Path | None = None,
) -> list[SweepRecord]:
    """Run every (bundle, sigma_syn, sigma_te, seed) point not already in ``log_path``.

    Finished points are appended to the record log as they complete, so an
    interrupted sweep resumes where it stopped. Returns all records of the
    grid in grid order, resumed ones included.
    """
    bundles: list[WeightBundle] = []
    for path in cfg.bundles:
        b = load_bundle(path)
        if cfg.time_steps and b.arch.time_steps not in cfg.time_steps:
            continue
        if cfg.regularized is not None and b.regularized != cfg.regularized:
            continue
        bundles.append(b)
    if not bundles:
        raise SweepConfigError("no bundle matches the sweep filters (time_steps / regularized)")

    datasets: dict[str, DataSet] = {}
    for b in bundles:
        name = cfg.dataset or b.dataset
        if not name:
            raise SweepConfigError(f"bundle {arch_label(b.arch)} records no dataset; set 'dataset' in the sweep config")
        if name not in datasets:
            datasets[name] = load_dataset(name, cfg.split, root=root, limit=cfg.limit)
    params = load_profile(cfg.tech) if cfg.tech else None

    ledger = RecordLog(log_path)
    done = {r.key: r for r in load_records(log_path)}
    programs = {b.digest: map_to_arrays(b) for b in bundles}

    grid: list[tuple[WeightBundle, DataSet, float, float, int]] = [
        (b, datasets[cfg.dataset or b.dataset], s_syn, s_te, seed)
        for b in bundles
        for (s_syn, s_te), seed in product(cfg.points, cfg.seeds)
    ]

    def key_of(b: WeightBundle, ds: DataSet, s_syn: float, s_te: float, seed: int) -> tuple[Any, ...]:
        return (b.digest, ds.name, len(ds), cfg.syn_mode.value, cfg.batch_size, s_syn, s_te, seed)

    pending = [p for p in grid if key_of(*p) not in done]
    skipped = len(grid) - len(pending)
    if skipped:
        metrics.sweep_points_total.labels("skipped").inc(skipped)
        log.info("sweep resume log=%s done=%d pending=%d", log_path, skipped, len(pending))

    def run(point: tuple[WeightBundle, DataSet, float, float, int]) -> SweepRecord:
        b, ds, s_syn, s_te, seed = point
        acc = run_point(
            b, ds, s_syn, s_te, seed,
            syn_mode=cfg.syn_mode, program=programs[b.digest], batch_size=cfg.batch_size,
        )
        rec = SweepRecord(
            arch=arch_label(b.arch),
            dataset=ds.name,
            sigma_syn=s_syn,
            sigma_te=s_te,
            t=b.arch.time_steps,
            regularized=b.regularized,
            seed=seed,
            accuracy=acc,
            bundle=b.digest,
            syn_mode=cfg.syn_mode.value,
            n=len(ds),
            sub_seed=point_seed(b.digest, s_syn, s_te, seed),
            batch_size=cfg.batch_size,
            energy=_energy_ref(b.arch, params) if params else None,
        )
        ledger.append(rec.to_dict())
        metrics.sweep_points_total.labels("completed").inc()
        log.info(
            "point done arch=%s dataset=%s sigma_syn=%g sigma_te=%g seed=%d acc=%.4f",
            rec.arch, rec.dataset, s_syn, s_te, seed, acc,
        )
        return rec

    bar = tqdm(total=len(pending), desc="sweep", disable=not progress)
    fresh: list[SweepRecord] = []
    try:
        if jobs > 1 and len(pending) > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                futures = [pool.submit(run, p) for p in pending]
                try:
                    for fut in as_completed(futures):
                        fresh.append(fut.result())
                        bar.update()
                except BaseException:
                    metrics.sweep_points_total.labels("failed").inc()
                    for f in futures:
                        f.cancel()
                    raise
        else:
            for p in pending:
                try:
                    fresh.append(run(p))
                except BaseException:
                    metrics.sweep_points_total.labels("failed").inc()
                    raise
                bar.update()
    finally:
        bar.close()

    by_key = {**done, **{r.key: r for r in fresh}}
    return [by_key[key_of(*p)] for p in grid]


@dataclass(frozen=True)
class SummaryRow:
    arch: str
    dataset: str
    sigma_syn: float
    sigma_te: float
    t: int | None
    regularized: bool
    n: int
    mean: float
    std: float

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def _group_key(r: SweepRecord) -> tuple[Any, ...]:
    return (r.arch, r.dataset, r.sigma_syn, r.sigma_te, r.t, r.regularized)


def _sort_key(key: tuple[Any, ...]) -> tuple[Any, ...]:
    arch, dataset, s_syn, s_te, t, reg = key
    return (arch, dataset, -1 if t is None else t, reg, s_syn, s_te)


def aggregate(records: Iterable[SweepRecord]) -> list[SummaryRow]:
    """Mean and sample standard deviation of accuracy per grid point, across seeds.

    A grid point must come from one bundle under one synaptic noise mode;
    records that mix either raise :class:`SweepConfigError`.
    """
    groups: dict[tuple[Any, ...], list[float]] = {}
    origin: dict[tuple[Any, ...], tuple[str, str]] = {}
    for r in records:
        key = _group_key(r)
        seen = origin.setdefault(key, (r.bundle, r.syn_mode))
        if seen != (r.bundle, r.syn_mode):
            raise SweepConfigError(
                f"records for {r.arch}/{r.dataset} sigma_syn={r.sigma_syn} sigma_te={r.sigma_te} mix "
                f"bundle/syn_mode {seen[0][:12]}/{seen[1]} and {r.bundle[:12]}/{r.syn_mode}; "
                "summarize them separately"
            )
        groups.setdefault(key, []).append(r.accuracy)
    rows = []
    for key in sorted(groups, key=_sort_key):
        accs = sorted(groups[key])
        n = len(accs)
        mean = math.fsum(accs) / n
        std = math.sqrt(math.fsum((a - mean) ** 2 for a in accs) / (n - 1)) if n > 1 else 0.0
        rows.append(SummaryRow(*key, n=n, mean=mean, std=std))
    return rows


def export_csv(rows: Sequence[SummaryRow], path: str | Path) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            d = row.to_dict()
            writer.writerow(["" if d[c] is None else d[c] for c in CSV_COLUMNS])
    return out
