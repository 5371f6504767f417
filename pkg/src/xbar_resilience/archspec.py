# SPDX-License-Identifier: MIT
# SPDX-FileCopyrightText: 2025 xbar-resilience contributors
"""Architecture strings: parsing, shape propagation and parameter counts.

Grammar (tokens joined by ``-``)::

    C<k>/<f>          k x k same-padded convolution with f filters, bounded ReLU
    MP<s>             s x s max-pool, stride s
    D<n>              dense layer to n units (+ bias row)
    <r>x<c>           raw dense matrix, r rows including the bias row
    R<in>x<out>@t<t>  recurrent core re-used for t steps (first layer only)

The last layer is always a dense logit layer. A raw matrix that follows a
recurrent core is that core's readout.
"""

from __future__ import annotations

import math
import re
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Any, Iterator

from .errors import ArchError, ArchParseError, ArchShapeError, DivisibilityError

__all__ = [
    "Activation",
    "ArchKind",
    "ArchSpec",
    "CORE_ROWS",
    "IMAGE_DIMS",
    "LayerKind",
    "LayerSpec",
    "MNIST_DIM",
    "PRESETS",
    "count_params",
    "parse_arch",
    "preset_name",
    "render",
    "resolve_arch",
    "rnn_partition",
]

MNIST_DIM = 784
IMAGE_DIMS = (28, 28, 1)
CORE_ROWS = 301


class ArchKind(str, Enum):
    MLP = "mlp"
    CNN = "cnn"
    RNN = "rnn"


class LayerKind(str, Enum):
    DENSE = "dense"
    CONV = "conv"
    MAXPOOL = "maxpool"
    RECURRENT = "recurrent"
    READOUT = "readout"


class Activation(str, Enum):
    BOUNDED_RELU = "bounded_relu"
    NONE = "none"
    SOFTMAX_LOGIT = "softmax_logit"


@dataclass(frozen=True)
class LayerSpec:
    index: int
    kind: LayerKind
    activation: Activation
    in_shape: tuple[int, ...]
    out_shape: tuple[int, ...]
    rows: int = 0
    cols: int = 0
    has_bias_row: bool = False
    kernel: int = 0
    filters: int = 0
    stride: int = 0
    time_steps: int = 0
    raw: bool = False

    @property
    def layer_id(self) -> str:
        return f"{self.kind.value}{self.index}"

    @property
    def has_weights(self) -> bool:
        return self.kind is not LayerKind.MAXPOOL

    @property
    def param_count(self) -> int:
        return self.rows * self.cols if self.has_weights else 0

    @property
    def chunk(self) -> int:
        """Input pixels consumed per step (recurrent cores only)."""
        return math.prod(self.in_shape) // self.time_steps if self.time_steps else 0

    @property
    def d_hl(self) -> int:
        """Hidden components fed back per step (recurrent cores only)."""
        return self.rows - self.chunk if self.time_steps else 0

    def token(self) -> str:
        if self.kind is LayerKind.CONV:
            return f"C{self.kernel}/{self.filters}"
        if self.kind is LayerKind.MAXPOOL:
            return f"MP{self.stride}"
        if self.kind is LayerKind.RECURRENT:
            return f"R{self.rows}x{self.cols}@t{self.time_steps}"
        if self.raw or self.kind is LayerKind.READOUT:
            return f"{self.rows}x{self.cols}"
        return f"D{self.cols}"

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d.update(
            id=self.layer_id,
            kind=self.kind.value,
            activation=self.activation.value,
            in_shape=list(self.in_shape),
            out_shape=list(self.out_shape),
        )
        return d


@dataclass(frozen=True)
class ArchSpec:
    layers: tuple[LayerSpec, ...]
    input_dims: tuple[int, ...]
    arch_kind: ArchKind
    _ids: tuple[str, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "_ids", tuple(layer.layer_id for layer in self.layers))

    @property
    def flat_input(self) -> int:
        return math.prod(self.input_dims)

    @property
    def num_classes(self) -> int:
        return self.layers[-1].out_shape[0] if self.layers else 0

    @property
    def time_steps(self) -> int | None:
        for layer in self.layers:
            if layer.kind is LayerKind.RECURRENT:
                return layer.time_steps
        return None

    def weight_layers(self) -> Iterator[LayerSpec]:
        return (layer for layer in self.layers if layer.has_weights)

    def layer(self, layer_id: str) -> LayerSpec:
        try:
            return self.layers[self._ids.index(layer_id)]
        except ValueError:
            raise KeyError(layer_id) from None

    def render(self) -> str:
        return render(self)

    def to_dict(self) -> dict[str, Any]:
        return {
            "spec": self.render(),
            "input_dims": list(self.input_dims),
            "kind": self.arch_kind.value,
            "params": count_params(self),
            "layers": [layer.to_dict() for layer in self.layers],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ArchSpec:
        try:
            arch = parse_arch(str(data["spec"]), tuple(int(d) for d in data["input_dims"]))
        except KeyError as exc:
            raise ArchError(f"architecture record is missing {exc}") from exc
        except (TypeError, ValueError, AttributeError) as exc:
            raise ArchError(f"malformed architecture record ({exc})") from exc
        if "kind" in data and data["kind"] != arch.arch_kind.value:
            raise ArchError(f"architecture kind {data['kind']!r} does not match {arch.render()!r}")
        return arch


_CONV = re.compile(r"C(\d+)/(\d+)", re.IGNORECASE)
_POOL = re.compile(r"MP(\d+)", re.IGNORECASE)
_DENSE = re.compile(r"D(\d+)", re.IGNORECASE)
_CORE = re.compile(r"R(\d+)x(\d+)@t(\d+)", re.IGNORECASE)
_RAW = re.compile(r"(\d+)x(\d+)", re.IGNORECASE)


def rnn_partition(M: int, t: int, core_rows: int = CORE_ROWS) -> tuple[int, int]:
    """Split the core's input rows into ``(chunk, d_hl)`` for ``t`` time steps."""
    if t < 1 or M % t:
        raise DivisibilityError("input dimension", M, t)
    chunk = M // t
    if chunk >= core_rows:
        raise ArchError(f"chunk of {chunk} inputs leaves no feedback rows in a {core_rows}-row core (t={t})")
    return chunk, core_rows - chunk


def _label(index: int, token: str) -> str:
    return f"layer {index} ({token})" if index >= 0 else "input"


def parse_arch(spec: str, input_dims: int | tuple[int, ...]) -> ArchSpec:
    """Parse ``spec`` against ``input_dims`` and return a validated ArchSpec."""
    dims = (input_dims,) if isinstance(input_dims, int) else tuple(input_dims)
    if len(dims) not in (1, 3) or any(d < 1 for d in dims):
        raise ArchError(f"input dims must be (M,) or (H, W, C) of positive ints, got {dims}")

    tokens = spec.split("-")
    offsets = []
    pos = 0
    for tok in tokens:
        offsets.append(pos)
        pos += len(tok) + 1

    layers: list[LayerSpec] = []
    shape = dims
    prev = _label(-1, "")
    for i, (raw_tok, offset) in enumerate(zip(tokens, offsets)):
        tok = raw_tok.strip()
        if not tok:
            raise ArchParseError(raw_tok, offset, "empty token")
        here = _label(i, tok)
        layer: LayerSpec

        if m := _CONV.fullmatch(tok):
            k, f = int(m[1]), int(m[2])
            if k < 1 or f < 1 or k % 2 == 0:
                raise ArchParseError(tok, offset, "same-padded convolution needs an odd positive kernel and filters in")
            if len(shape) != 3:
                raise ArchShapeError(prev, here, f"convolution needs an HxWxC input, got {shape}")
            h, w, c = shape
            layer = LayerSpec(
                i, LayerKind.CONV, Activation.BOUNDED_RELU, shape, (h, w, f),
                rows=k * k * c + 1, cols=f, has_bias_row=True, kernel=k, filters=f,
            )
        elif m := _POOL.fullmatch(tok):
            s = int(m[1])
            if s < 1:
                raise ArchParseError(tok, offset, "pool size must be positive in")
            if len(shape) != 3:
                raise ArchShapeError(prev, here, f"max-pool needs an HxWxC input, got {shape}")
            h, w, c = shape
            if h % s:
                raise DivisibilityError(f"{here} input height", h, s)
            if w % s:
                raise DivisibilityError(f"{here} input width", w, s)
            layer = LayerSpec(i, LayerKind.MAXPOOL, Activation.NONE, shape, (h // s, w // s, c), stride=s)
        elif m := _CORE.fullmatch(tok):
            rows, cols, t = int(m[1]), int(m[2]), int(m[3])
            if rows < 1 or cols < 1 or t < 1:
                raise ArchParseError(tok, offset, "recurrent core dims must be positive in")
            if i != 0:
                raise ArchShapeError(prev, here, "a recurrent core must be the first layer")
            M = math.prod(shape)
            chunk, d_hl = rnn_partition(M, t, rows)
            if d_hl > cols:
                raise ArchShapeError(prev, here, f"{d_hl} feedback rows exceed the core's {cols} outputs")
            layer = LayerSpec(
                i, LayerKind.RECURRENT, Activation.BOUNDED_RELU, (M,), (cols,),
                rows=rows, cols=cols, time_steps=t,
            )
        elif (m := _DENSE.fullmatch(tok)) or (m := _RAW.fullmatch(tok)):
            is_raw = m.re is _RAW
            flat = math.prod(shape)
            if is_raw:
                rows, cols = int(m[1]), int(m[2])
                if rows < 2 or cols < 1:
                    raise ArchParseError(tok, offset, "dense matrix needs >= 2 rows and >= 1 column in")
                if rows != flat + 1:
                    raise ArchShapeError(
                        prev, here, f"{rows} rows expect {rows - 1} inputs plus a bias row, previous layer gives {flat}"
                    )
            else:
                rows, cols = flat + 1, int(m[1])
                if cols < 1:
                    raise ArchParseError(tok, offset, "dense width must be positive in")
            after_core = bool(layers) and layers[-1].kind is LayerKind.RECURRENT
            layer = LayerSpec(
                i, LayerKind.READOUT if after_core else LayerKind.DENSE, Activation.BOUNDED_RELU,
                (flat,), (cols,), rows=rows, cols=cols, has_bias_row=True, raw=is_raw,
            )
        else:
            raise ArchParseError(tok, offset)

        layers.append(layer)
        shape = layer.out_shape
        prev = here

    last = layers[-1]
    if last.kind not in (LayerKind.DENSE, LayerKind.READOUT):
        raise ArchShapeError(prev, "output", "the network must end with a dense logit layer")
    layers[-1] = replace(last, activation=Activation.SOFTMAX_LOGIT)

    kinds = {layer.kind for layer in layers}
    if LayerKind.RECURRENT in kinds:
        kind = ArchKind.RNN
    elif LayerKind.CONV in kinds or LayerKind.MAXPOOL in kinds:
        kind = ArchKind.CNN
    else:
        kind = ArchKind.MLP
    return ArchSpec(tuple(layers), dims, kind)


def render(arch: ArchSpec) -> str:
    return "-".join(layer.token() for layer in arch.layers)


def count_params(arch: ArchSpec) -> int:
    """Physical trainable weights, bias rows included; independent of time steps."""
    return sum(layer.param_count for layer in arch.layers)


def _rnn_presets() -> dict[str, tuple[str, tuple[int, ...]]]:
    out: dict[str, tuple[str, tuple[int, ...]]] = {}
    for t in range(1, MNIST_DIM + 1):
        if MNIST_DIM % t == 0 and MNIST_DIM // t < CORE_ROWS:
            out[f"rnn@t{t}"] = (f"R{CORE_ROWS}x400@t{t}-401x10", (MNIST_DIM,))
    return out


PRESETS: dict[str, tuple[str, tuple[int, ...]]] = {
    "mlp": ("785x300-301x10", (MNIST_DIM,)),
    "mlp128": ("785x128-129x10", (MNIST_DIM,)),
    "cnn": ("C3/3-C3/3-MP2-C3/6-C3/6-D100-D10", IMAGE_DIMS),
    **_rnn_presets(),
}
PRESETS["rnn"] = PRESETS["rnn@t7"]


def resolve_arch(text: str, input_dims: int | tuple[int, ...] | None = None) -> ArchSpec:
    """Accept a preset name or a raw architecture string."""
    key = text.strip().lower()
    if key in PRESETS:
        spec, dims = PRESETS[key]
        return parse_arch(spec, dims if input_dims is None else input_dims)
    if input_dims is None:
        input_dims = IMAGE_DIMS if re.search(r"(^|-)\s*(C\d|MP\d)", text, re.IGNORECASE) else (MNIST_DIM,)
    return parse_arch(text, input_dims)


def preset_name(arch: ArchSpec) -> str | None:
    """Preset whose layout equals ``arch`` (``rnn@t7`` rather than the ``rnn`` alias)."""
    spec = arch.render()
    for name, (preset, dims) in PRESETS.items():
        if name != "rnn" and preset == spec and tuple(dims) == arch.input_dims:
            return name
    return None
