# SPDX-License-Identifier: MIT
# SPDX-FileCopyrightText: 2025 xbar-resilience contributors
"""``xbar`` command-line interface.

Exit status: 0 on success, 1 for invalid input (bad flags, architecture
strings, configs or files), 2 when a well-formed run fails (e.g. training
diverges). Machine-readable output: ``--output json`` or ``--output yaml``.
"""

from __future__ import annotations

import json
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Iterator, NoReturn, Sequence

import click
import yaml

from .archspec import PRESETS, count_params, preset_name, resolve_arch
from .config import get_settings
from .data import DATASETS, NoiseConfig, SynMode, load_dataset
from .energy import (
    EnergyParams,
    Tech,
    calibrate,
    compare_architectures,
    estimate_energy,
    load_profile,
    load_table,
    observations_from_table,
)
from .errors import RuntimeFailure, ValidationError
from .harness import SweepConfig, aggregate, export_csv, load_records, run_sweep
from .metrics import metrics
from .train import TrainConfig, load_bundle, save_bundle, train
from .utils.logging import get_file_logger, get_logger, level_from_name
from .xbar import count_ops, infer, map_to_arrays, perturb_devices

__all__ = ["cli", "main"]

log = get_logger("xbar.cli")

_LOGGERS = ("xbar.cli", "xbar.train", "xbar.sweep", "xbar.energy", "xbar.sim", "xbar.ledger")


# ────────────────────────── helpers ──────────────────────────
def _abort(msg: str, code: int = 1) -> NoReturn:
    click.echo(f"Error: {msg}", err=True)
    click.echo("Aborted", err=True)
    sys.exit(code)


@contextmanager
def _guard() -> Iterator[None]:
    """Turn library errors into one-line messages and exit codes."""
    try:
        yield
    except ValidationError as exc:
        _abort(str(exc), 1)
    except RuntimeFailure as exc:
        _abort(str(exc), 2)
    except FileNotFoundError as exc:
        _abort(f"{exc.filename or exc}: no such file", 1)


def _emit(ctx: click.Context, data: dict[str, Any], fmt: str | None = None) -> None:
    """Print ``data`` using given or global format."""
    fmt = fmt or (ctx.obj.get("output") if ctx.obj else "text")
    if fmt == "json":
        click.echo(json.dumps(data, indent=2, default=str))
    elif fmt == "yaml":
        click.echo(yaml.safe_dump(json.loads(json.dumps(data, default=str)), sort_keys=False))
    else:
        for key, value in data.items():
            if isinstance(value, (dict, list)):
                value = json.dumps(value, default=str)
            click.echo(f"{key}: {value}")


def _opt(ctx: click.Context, key: str) -> Any:
    return ctx.obj.get(key) if ctx.obj else None


def _progress(ctx: click.Context) -> bool:
    return bool(_opt(ctx, "progress")) and sys.stderr.isatty()


# ────────────────────────── root group ──────────────────────────
@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option(
    "--output",
    type=click.Choice(["text", "json", "yaml"], case_sensitive=False),
    default="text",
    show_default=True,
    help="Output format",
)
@click.option("--jobs", type=click.IntRange(min=1), metavar="N", help="Worker threads [default: XBAR_JOBS or CPU count]")
@click.option("--data-root", type=click.Path(file_okay=False, path_type=Path), help="Dataset directory [XBAR_DATA_ROOT]")
@click.option("--metrics-port", type=int, metavar="PORT", help="Expose Prometheus metrics on PORT")
@click.option("--log-file", type=click.Path(dir_okay=False), metavar="FILE", help="Also append log records to FILE")
@click.pass_context
def cli(
    ctx: click.Context,
    output: str,
    jobs: int | None,
    data_root: Path | None,
    metrics_port: int | None,
    log_file: str | None,
) -> None:
    """Crossbar resilience experiments: train, evaluate under device noise,
    sweep noise grids, and estimate inference energy.

    Datasets are read from ``<data-root>/{mnist,fashion-mnist}/`` in IDX
    format (optionally gzipped).
    """
    settings = get_settings()
    level = level_from_name(settings.log_level)
    for name in _LOGGERS:
        get_logger(name).setLevel(level)
    if metrics_port:
        metrics.serve(metrics_port)
    if log_file:
        for name in _LOGGERS:
            get_file_logger(name, log_file)
    ctx.obj = {
        "output": output.lower(),
        "jobs": jobs or settings.jobs,
        "data_root": data_root or settings.data_root,
        "progress": settings.progress,
    }


# ────────────────────────── train / eval ──────────────────────────
@cli.command("train")
@click.option("--arch", "arch_text", required=True, metavar="SPEC|PRESET", help="Architecture string or preset name")
@click.option("--data", "data_name", type=click.Choice(DATASETS), default="mnist", show_default=True)
@click.option("--sigma-neu", type=click.FloatRange(min=0), default=0.0, show_default=True, help="Training neuron noise")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), required=True, help="Bundle directory")
@click.option("--epochs", type=click.IntRange(min=1), help="[default: 20, RNN 30]")
@click.option("--lr", type=click.FloatRange(min=0, min_open=True), help="Learning rate [default: 1e-3]")
@click.option("--batch-size", type=click.IntRange(min=1))
@click.option("--optimizer", type=click.Choice(["adam", "sgd-momentum"]))
@click.option("--lr-schedule", type=click.Choice(["constant", "exponential"]))
@click.option("--grad-clip", type=click.FloatRange(min=0, min_open=True), help="[default: RNN 5.0, else off]")
@click.option("--limit", type=click.IntRange(min=1), help="Train on the first N images only")
@click.option("--no-test", is_flag=True, help="Skip test-split evaluation")
@click.pass_context
@metrics.record_cli("train")
def train_cmd(
    ctx: click.Context,
    arch_text: str,
    data_name: str,
    sigma_neu: float,
    seed: int,
    out: Path,
    epochs: int | None,
    lr: float | None,
    batch_size: int | None,
    optimizer: str | None,
    lr_schedule: str | None,
    grad_clip: float | None,
    limit: int | None,
    no_test: bool,
) -> None:
    """Train a network and write its weight bundle."""
    with _guard():
        arch = resolve_arch(arch_text)
        cfg = TrainConfig.for_arch(
            arch,
            sigma_neu=sigma_neu,
            seed=seed,
            epochs=epochs,
            lr=lr,
            batch_size=batch_size,
            optimizer=optimizer,
            lr_schedule=lr_schedule,
            grad_clip=grad_clip,
        )
        root = _opt(ctx, "data_root")
        train_set = load_dataset(data_name, "train", root=root, limit=limit)
        test_set = None if no_test else load_dataset(data_name, "test", root=root)
        bundle = train(arch, train_set, cfg, test_set, progress=_progress(ctx))
        save_bundle(bundle, out)
    _emit(
        ctx,
        {
            "bundle": str(out),
            "arch": preset_name(arch) or arch.render(),
            "dataset": data_name,
            "train_accuracy": bundle.train_accuracy,
            "test_accuracy": bundle.test_accuracy,
            "digest": bundle.digest,
        },
    )


@cli.command("eval")
@click.option("--bundle", "bundle_path", type=click.Path(path_type=Path), required=True)
@click.option("--data", "data_name", type=click.Choice(DATASETS), help="[default: the bundle's training dataset]")
@click.option("--split", type=click.Choice(["test", "train"]), default="test", show_default=True)
@click.option("--limit", type=click.IntRange(min=1), help="Evaluate the first N images only")
@click.option("--sigma-syn", type=click.FloatRange(min=0), default=0.0, show_default=True)
@click.option("--sigma-te", type=click.FloatRange(min=0), default=0.0, show_default=True)
@click.option("--syn-mode", type=click.Choice([m.value for m in SynMode]), default=SynMode.STATIC.value, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--batch-size", type=click.IntRange(min=1), default=512, show_default=True)
@click.pass_context
@metrics.record_cli("eval")
def eval_cmd(
    ctx: click.Context,
    bundle_path: Path,
    data_name: str | None,
    split: str,
    limit: int | None,
    sigma_syn: float,
    sigma_te: float,
    syn_mode: str,
    seed: int,
    batch_size: int,
) -> None:
    """Accuracy of a bundle on simulated crossbars, optionally under noise.

    With both noise widths at 0 the result equals the float accuracy
    recorded in the bundle manifest.
    """
    with _guard():
        bundle = load_bundle(bundle_path)
        name = data_name or bundle.dataset or "mnist"
        ds = load_dataset(name, split, root=_opt(ctx, "data_root"), limit=limit)
        noise = NoiseConfig(sigma_syn=sigma_syn, sigma_te=sigma_te, syn_mode=SynMode(syn_mode), seed=seed)
        prog = perturb_devices(map_to_arrays(bundle), sigma_syn, seed, noise.syn_mode)
        result = infer(prog, bundle.arch, ds, noise, batch_size=batch_size, jobs=_opt(ctx, "jobs") or 1)
    _emit(
        ctx,
        {
            "accuracy": result.accuracy,
            "arch": preset_name(bundle.arch) or bundle.arch.render(),
            "dataset": name,
            "split": split,
            "n": len(ds),
            "sigma_syn": sigma_syn,
            "sigma_te": sigma_te,
            "manifest_test_accuracy": bundle.test_accuracy,
        },
    )


# ────────────────────────── sweeps ──────────────────────────
@cli.command("sweep")
@click.option("--config", "config_path", type=click.Path(path_type=Path), required=True, help="Sweep config (JSON/YAML)")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True, help="JSON-lines record log")
@click.pass_context
@metrics.record_cli("sweep")
def sweep_cmd(ctx: click.Context, config_path: Path, out: Path) -> None:
    """Run a noise sweep; re-running with the same --out resumes it.

    \b
    Config keys: bundles (required), sigma_syn, sigma_te, seeds, dataset,
    split, time_steps, regularized, syn_mode, limit, tech, batch_size.
    Each record line holds: arch, dataset, sigma_syn, sigma_te, t,
    regularized, seed, accuracy, bundle, syn_mode, n, sub_seed, energy.
    """
    with _guard():
        cfg = SweepConfig.from_file(config_path)
        records = run_sweep(
            cfg, out, jobs=_opt(ctx, "jobs") or 1, progress=_progress(ctx), root=_opt(ctx, "data_root")
        )
    _emit(ctx, {"records": len(records), "log": str(out), "summary": [r.to_dict() for r in aggregate(records)]})


@cli.command("report")
@click.option("--records", "records_path", type=click.Path(path_type=Path), required=True)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True, help="Summary CSV")
@click.option("--syn-mode", type=click.Choice([m.value for m in SynMode]), help="Only records of this noise mode")
@click.pass_context
@metrics.record_cli("report")
def report_cmd(ctx: click.Context, records_path: Path, out: Path, syn_mode: str | None) -> None:
    """Summarize a record log into CSV.

    \b
    Columns: arch,dataset,sigma_syn,sigma_te,t,regularized,n,mean,std
    (one row per grid point; n seeds, sample standard deviation).
    """
    with _guard():
        if not records_path.is_file():
            raise FileNotFoundError(2, "no such file", str(records_path))
        records = load_records(records_path)
        if syn_mode:
            records = [r for r in records if r.syn_mode == syn_mode]
        rows = aggregate(records)
        export_csv(rows, out)
    _emit(ctx, {"rows": len(rows), "out": str(out)})


# ────────────────────────── energy ──────────────────────────
def _params(tech: str, params_path: Path | None) -> EnergyParams:
    return load_profile(params_path) if params_path else load_profile(tech)


@cli.command("energy")
@click.option("--bundle", "bundle_path", type=click.Path(path_type=Path), help="Bundle whose architecture to cost")
@click.option("--arch", "arch_text", metavar="SPEC|PRESET", help="Architecture instead of a bundle")
@click.option("--tech", type=click.Choice([t.value for t in Tech]), default="reram", show_default=True)
@click.option("--params", "params_path", type=click.Path(path_type=Path), help="Energy profile JSON")
@click.pass_context
@metrics.record_cli("energy")
def energy_cmd(
    ctx: click.Context, bundle_path: Path | None, arch_text: str | None, tech: str, params_path: Path | None
) -> None:
    """Per-inference energy (joules) of an architecture.

    \b
    JSON fields: arch, tech, total, vmm, activation, layers, counts.
    """
    if (bundle_path is None) == (arch_text is None):
        _abort("give exactly one of --bundle or --arch")
    with _guard():
        arch = load_bundle(bundle_path).arch if bundle_path else resolve_arch(str(arch_text))
        p = _params(tech, params_path)
        counts = count_ops(arch)
        report = estimate_energy(counts, p)
    _emit(
        ctx,
        {
            "arch": preset_name(arch) or arch.render(),
            "tech": p.tech.value,
            **report.to_dict(),
            "counts": counts.to_dict(),
        },
    )


@cli.command("calibrate")
@click.option("--table", "table_path", type=click.Path(path_type=Path), help="Reference table [default: shipped]")
@click.option("--tech", type=click.Choice([t.value for t in Tech]), default="reram", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), help="Write the fitted profile here")
@click.pass_context
@metrics.record_cli("calibrate")
def calibrate_cmd(ctx: click.Context, table_path: Path | None, tech: str, out: Path | None) -> None:
    """Fit e_row, e_adc and e_act (e_cell = 0) to a reference energy table.

    Entries flagged ``fit_vmm: false`` only constrain e_act; their VMM
    prediction is reported next to the table value as the model gap.
    """
    with _guard():
        entries = load_table(table_path)
        result = calibrate(
            observations_from_table(entries, tech),
            free=("e_row", "e_adc", "e_act"),
            base=EnergyParams(Tech.parse(tech)),
        )
        params = result.params
        gap = []
        reports = {}
        for e in entries:
            if e.tech is not params.tech:
                continue
            predicted = estimate_energy(count_ops(resolve_arch(e.arch)), params)
            reports[e.arch] = e.report
            if not e.fit_vmm:
                gap.append({"arch": e.arch, "table_vmm": e.vmm, "predicted_vmm": predicted.vmm_energy})
        if out:
            out.parent.mkdir(parents=True, exist_ok=True)
            body = {**params.to_dict(), "provenance": f"xbar calibrate --tech {tech} ({table_path or 'shipped table'})"}
            out.write_text(json.dumps(body, indent=2) + "\n")
    _emit(
        ctx,
        {
            "tech": params.tech.value,
            "params": {k: v for k, v in params.to_dict().items() if k.startswith("e_")},
            "residuals": [
                {"label": r.label, "quantity": r.quantity, "observed": r.observed, "predicted": r.predicted,
                 "relative": r.relative}
                for r in result.residuals
            ],
            "model_gap": gap,
            "table_ratios": compare_architectures(reports),
        },
    )


# ────────────────────────── architectures ──────────────────────────
@cli.command("arch")
@click.argument("spec", required=False)
@click.option("--list", "list_presets", is_flag=True, help="List preset names")
@click.pass_context
def arch_cmd(ctx: click.Context, spec: str | None, list_presets: bool) -> None:
    """Parse an architecture string or preset and describe its crossbar mapping."""
    if list_presets:
        _emit(ctx, {"presets": {name: layout for name, (layout, _) in PRESETS.items()}})
        return
    if not spec:
        _abort("give an architecture string or preset name (or --list)")
    with _guard():
        arch = resolve_arch(spec)
    _emit(
        ctx,
        {
            "arch": arch.render(),
            "preset": preset_name(arch),
            "kind": arch.arch_kind.value,
            "input_dims": list(arch.input_dims),
            "params": count_params(arch),
            "time_steps": arch.time_steps,
            "arrays": [[layer.layer_id, layer.rows, layer.cols] for layer in arch.weight_layers()],
            "activations": count_ops(arch).activations,
        },
    )


def main(argv: Sequence[str] | None = None) -> int:
    """Entry point; usage errors exit 1 like any other invalid input."""
    try:
        rv = cli.main(args=list(argv) if argv is not None else None, prog_name="xbar", standalone_mode=False)
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.exceptions.Abort:
        click.echo("Aborted", err=True)
        return 1
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    return rv if isinstance(rv, int) else 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
