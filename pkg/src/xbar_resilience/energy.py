# SPDX-License-Identifier: MIT
# SPDX-FileCopyrightText: 2025 xbar-resilience contributors
"""Per-inference energy from operation counts, and calibration of the constants.

The model is linear in four constants:

* ``e_cell``  J per device per array read
* ``e_row``   J per driven row per read
* ``e_adc``   J per column conversion per read
* ``e_act``   J per rectifier evaluation

Softmax and max-pool cost nothing. Shipped profiles live in
``xbar_resilience/profiles/*.json`` together with the reference table they were
fitted to.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from importlib.resources import files
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import nnls

from .archspec import resolve_arch
from .errors import CalibrationError, EnergyParamsError
from .utils.logging import get_logger
from .xbar import OpCounts, count_ops

__all__ = [
    "PARAM_NAMES",
    "CalibrationResult",
    "EnergyParams",
    "EnergyReport",
    "LayerEnergy",
    "Observation",
    "Residual",
    "TableEntry",
    "Tech",
    "calibrate",
    "compare_architectures",
    "estimate_energy",
    "load_profile",
    "load_table",
    "observations_from_table",
]

log = get_logger("xbar.energy")

PARAM_NAMES: tuple[str, ...] = ("e_cell", "e_row", "e_adc", "e_act")
REFERENCE_TABLE = "reference"
_RANK_RTOL = 1e-10


class Tech(str, Enum):
    RERAM = "reram"
    SONOS = "sonos"

    @classmethod
    def parse(cls, value: Tech | str) -> Tech:
        try:
            return cls(value.value if isinstance(value, Tech) else str(value).lower())
        except ValueError:
            raise EnergyParamsError(f"unknown technology {value!r}; expected one of reram, sonos") from None


@dataclass(frozen=True)
class EnergyParams:
    tech: Tech
    e_cell: float = 0.0
    e_row: float = 0.0
    e_adc: float = 0.0
    e_act: float = 0.0
    provenance: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "tech", Tech.parse(self.tech))
        for name in PARAM_NAMES:
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value) or value < 0:
                raise EnergyParamsError(f"{name} must be a finite value >= 0, got {value!r}")
            object.__setattr__(self, name, float(value))

    def values(self, names: Sequence[str] = PARAM_NAMES) -> np.ndarray:
        return np.array([getattr(self, n) for n in names], dtype=np.float64)

    def scaled(self, factor: float) -> EnergyParams:
        return replace(self, **{n: getattr(self, n) * factor for n in PARAM_NAMES})

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["tech"] = self.tech.value
        return d

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> EnergyParams:
        unknown = set(data) - {"tech", "provenance", *PARAM_NAMES}
        if unknown:
            raise EnergyParamsError(f"unknown energy profile keys: {', '.join(sorted(unknown))}")
        if "tech" not in data:
            raise EnergyParamsError("energy profile has no 'tech' field")
        return cls(**dict(data))


@dataclass(frozen=True)
class LayerEnergy:
    layer_id: str
    vmm: float
    activation: float

    @property
    def total(self) -> float:
        return self.vmm + self.activation


@dataclass(frozen=True)
class EnergyReport:
    """Joules per inference."""

    total: float
    vmm_energy: float
    activation_energy: float
    layers: tuple[LayerEnergy, ...] = ()

    @classmethod
    def from_observed(cls, vmm: float, activation: float, total: float | None = None) -> EnergyReport:
        """Report for published values, whose total may be rounded independently."""
        return cls(vmm + activation if total is None else total, vmm, activation)

    def to_dict(self) -> dict[str, Any]:
        return {
            "total": self.total,
            "vmm": self.vmm_energy,
            "activation": self.activation_energy,
            "layers": [{"layer": le.layer_id, "vmm": le.vmm, "activation": le.activation} for le in self.layers],
        }


def estimate_energy(counts: OpCounts, p: EnergyParams) -> EnergyReport:
    fired = dict(counts.layer_activations)
    layers = []
    for r in counts.reads:
        vmm = r.count * (r.rows * r.cols * p.e_cell + r.rows * p.e_row + r.cols * p.e_adc)
        layers.append(LayerEnergy(r.layer_id, vmm, fired.get(r.layer_id, 0) * p.e_act))
    vmm_energy = math.fsum(le.vmm for le in layers)
    activation_energy = counts.activations * p.e_act
    return EnergyReport(vmm_energy + activation_energy, vmm_energy, activation_energy, tuple(layers))


def compare_architectures(reports: Mapping[str, EnergyReport]) -> dict[str, dict[str, float]]:
    """``table[a][b]`` = total energy of ``a`` over total energy of ``b``."""
    table: dict[str, dict[str, float]] = {}
    for a, ra in reports.items():
        row = {}
        for b, rb in reports.items():
            if rb.total == 0:
                row[b] = 1.0 if ra.total == 0 else math.inf
            else:
                row[b] = ra.total / rb.total
        table[a] = row
    return table


@dataclass(frozen=True)
class Observation:
    """Measured or published energy for one architecture; ``None`` leaves a quantity out of the fit."""

    counts: OpCounts
    vmm: float | None = None
    activation: float | None = None
    label: str = ""


@dataclass(frozen=True)
class Residual:
    label: str
    quantity: str
    observed: float
    predicted: float

    @property
    def relative(self) -> float:
        return (self.predicted - self.observed) / self.observed


@dataclass(frozen=True)
class CalibrationResult:
    params: EnergyParams
    residuals: tuple[Residual, ...] = field(default_factory=tuple)

    @property
    def max_relative_residual(self) -> float:
        return max((abs(r.relative) for r in self.residuals), default=0.0)


def _features(counts: OpCounts, quantity: str) -> np.ndarray:
    if quantity == "vmm":
        return np.array([counts.cells, counts.row_drives, counts.column_conversions, 0.0])
    return np.array([0.0, 0.0, 0.0, float(counts.activations)])


def _unidentifiable(a: np.ndarray, names: Sequence[str]) -> tuple[str, ...]:
    _, s, vt = np.linalg.svd(a)
    # columns are unit-norm, so a relative cutoff is scale free
    tol = _RANK_RTOL * (s[0] if s.size else 0.0)
    rank = int(np.count_nonzero(s > tol))
    null = vt[rank:]
    if null.size == 0:
        return ()
    weight = np.sqrt(np.sum(null * null, axis=0))
    return tuple(n for n, w in zip(names, weight) if w > 1e-8)


def calibrate(
    observations: Iterable[Observation],
    free: Sequence[str],
    base: EnergyParams | None = None,
) -> CalibrationResult:
    """Fit the ``free`` constants by nonnegative least squares on relative error.

    Constants not in ``free`` stay at their ``base`` value (zero by default).
    Each observed quantity contributes one equation ``(pred - obs) / obs``;
    equations that no free constant affects are reported but do not count
    toward the fit.
    """
    obs = list(observations)
    free = list(dict.fromkeys(free))
    unknown = [n for n in free if n not in PARAM_NAMES]
    if unknown or not free:
        raise CalibrationError(f"free parameters must be a non-empty subset of {', '.join(PARAM_NAMES)}; got {free}")
    base = base or EnergyParams(Tech.RERAM)
    cols = [PARAM_NAMES.index(n) for n in free]
    fixed = base.values()
    fixed[cols] = 0.0

    equations: list[tuple[Observation, str, float, np.ndarray]] = []
    for ob in obs:
        for quantity in ("vmm", "activation"):
            value = getattr(ob, quantity)
            if value is None:
                continue
            if not value > 0:
                raise CalibrationError(f"{ob.label or 'observation'}: observed {quantity} must be > 0, got {value}")
            equations.append((ob, quantity, float(value), _features(ob.counts, quantity)))

    rows = [(feat[cols] / value, 1.0 - float(feat @ fixed) / value) for _, _, value, feat in equations]
    rows = [(a, b) for a, b in rows if np.any(a != 0)]
    if len(rows) < len(free):
        raise CalibrationError(
            f"{len(rows)} informative observation(s) for {len(free)} free parameter(s)",
            unidentifiable=tuple(free),
        )
    a = np.vstack([r[0] for r in rows])
    b = np.array([r[1] for r in rows])
    norms = np.linalg.norm(a, axis=0)
    a_scaled = a / np.where(norms > 0, norms, 1.0)
    lost = _unidentifiable(a_scaled, free)
    if lost:
        raise CalibrationError("observations do not determine every free parameter", unidentifiable=lost)

    x, _ = nnls(a_scaled, b)
    fitted = dict(zip(free, (x / norms).tolist()))
    params = replace(base, **fitted)

    residuals = []
    for ob, quantity, value, feat in equations:
        residuals.append(Residual(ob.label, quantity, value, float(feat @ params.values())))
    result = CalibrationResult(params, tuple(residuals))
    log.info(
        "calibrate tech=%s free=%s max_rel_residual=%.4f %s",
        params.tech.value, ",".join(free), result.max_relative_residual,
        " ".join(f"{n}={fitted[n]:.6e}" for n in free),
    )
    return result


def _read_json(path: Path, what: str) -> Any:
    try:
        return json.loads(path.read_text())
    except FileNotFoundError:
        raise EnergyParamsError(f"{what} {path} does not exist") from None
    except (OSError, ValueError) as exc:
        raise EnergyParamsError(f"{what} {path}: unreadable ({exc})") from exc


def _shipped(name: str) -> Any:
    resource = files("xbar_resilience").joinpath("profiles", f"{name}.json")
    if not resource.is_file():
        raise EnergyParamsError(f"no shipped energy profile named {name!r}")
    return json.loads(resource.read_text())


def load_profile(source: str | Path | Tech) -> EnergyParams:
    """Shipped profile by technology name, or a JSON profile file."""
    if isinstance(source, Tech):
        return EnergyParams.from_dict(_shipped(source.value))
    text = str(source)
    if text.lower() in {t.value for t in Tech}:
        return EnergyParams.from_dict(_shipped(text.lower()))
    return EnergyParams.from_dict(_read_json(Path(text), "energy profile"))


@dataclass(frozen=True)
class TableEntry:
    tech: Tech
    arch: str
    total: float
    vmm: float
    activation: float
    fit_vmm: bool = True

    @property
    def report(self) -> EnergyReport:
        return EnergyReport.from_observed(self.vmm, self.activation, self.total)


def load_table(path: str | Path | None = None) -> list[TableEntry]:
    """Reference energy table; the shipped one when ``path`` is None."""
    data = _shipped(REFERENCE_TABLE) if path is None else _read_json(Path(path), "energy table")
    try:
        return [
            TableEntry(
                Tech.parse(e["tech"]),
                str(e["arch"]),
                float(e["total"]),
                float(e["vmm"]),
                float(e["activation"]),
                bool(e.get("fit_vmm", True)),
            )
            for e in data["entries"]
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise EnergyParamsError(f"malformed energy table ({exc})") from exc


def observations_from_table(entries: Iterable[TableEntry], tech: Tech | str) -> list[Observation]:
    """Observations for one technology; entries marked ``fit_vmm: false`` contribute activation only."""
    tech = Tech.parse(tech)
    out = []
    for e in entries:
        if e.tech is not tech:
            continue
        out.append(
            Observation(
                count_ops(resolve_arch(e.arch)),
                vmm=e.vmm if e.fit_vmm else None,
                activation=e.activation,
                label=f"{e.arch}/{tech.value}",
            )
        )
    return out
