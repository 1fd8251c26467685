"""Layer descriptors and classical FLOPs counting.

All counts follow the classical convention: every multiplication and every
addition is one FLOP, so a multiply-accumulate costs two.  Accumulators in
GEMM, dense and convolution kernels start from zero, hence a length-``k``
dot product inside those kernels costs ``2k`` (the standalone inner product
keeps the textbook ``2n - 1``).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Union

from .errors import FlopsOverflowError, ParseError, ShapeError

__all__ = [
    "Padding",
    "DenseDescriptor",
    "Conv2DDescriptor",
    "LayerDescriptor",
    "GemmSpec",
    "OpCount",
    "inner_product_flops",
    "gemm_flops",
    "dense_flops",
    "output_shape",
    "conv_flops",
    "dense_as_conv",
    "as_conv",
    "layer_flops",
    "kernel_size",
    "surface",
    "parse_layer",
    "format_layer",
]

UINT64_MAX = 2**64 - 1


class Padding(str, enum.Enum):
    SAME = "same"
    VALID = "valid"


def _check_positive(name, value):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ShapeError(f"{name} must be an integer, got {value!r}")
    if value < 1:
        raise ShapeError(f"{name} must be >= 1, got {value}")


def _checked(count):
    if count > UINT64_MAX:
        raise FlopsOverflowError(f"FLOPs count {count} exceeds the unsigned 64-bit range")
    return count


@dataclass(frozen=True)
class DenseDescriptor:
    d_in: int
    d_out: int
    has_bias: bool = True

    def __post_init__(self):
        _check_positive("d_in", self.d_in)
        _check_positive("d_out", self.d_out)


@dataclass(frozen=True)
class Conv2DDescriptor:
    w_in: int
    h_in: int
    c_in: int
    c_out: int
    k1: int
    k2: int
    stride: int = 1
    padding: Padding = Padding.SAME
    batch: int = 1

    def __post_init__(self):
        for name in ("w_in", "h_in", "c_in", "c_out", "k1", "k2", "stride", "batch"):
            _check_positive(name, getattr(self, name))
        object.__setattr__(self, "padding", Padding(self.padding))
        if self.padding is Padding.VALID and (self.k1 > self.w_in or self.k2 > self.h_in):
            raise ShapeError(
                f"kernel {self.k1}x{self.k2} does not fit a {self.w_in}x{self.h_in} input "
                "under valid padding"
            )


LayerDescriptor = Union[DenseDescriptor, Conv2DDescriptor]


@dataclass(frozen=True)
class GemmSpec:
    """``C <- alpha * A @ B + beta * C`` with A of shape (m, k) and B of shape (k, n).

    The scalar values never change the count, so only their presence is recorded.
    """

    m: int
    k: int
    n: int
    use_alpha: bool = True
    use_beta: bool = True

    def __post_init__(self):
        for name in ("m", "k", "n"):
            _check_positive(name, getattr(self, name))


@dataclass(frozen=True)
class OpCount:
    multiplications: int = 0
    additions: int = 0

    def total(self) -> int:
        return self.multiplications + self.additions

    def __add__(self, other):
        if not isinstance(other, OpCount):
            return NotImplemented
        return OpCount(
            self.multiplications + other.multiplications,
            self.additions + other.additions,
        )


def inner_product_flops(n: int) -> int:
    """``n`` multiplications and ``n - 1`` additions."""
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise ShapeError(f"inner product length must be a positive integer, got {n!r}")
    return 2 * n - 1


def gemm_flops(spec: GemmSpec, exact: bool = True) -> int:
    """FLOPs of a general matrix multiply.

    The approximate count is ``2mkn``.  The exact count adds ``mn`` for the
    alpha scaling, and ``2mn`` for scaling C by beta and summing it in.
    """
    m, k, n = spec.m, spec.k, spec.n
    count = 2 * m * k * n
    if exact:
        if spec.use_alpha:
            count += m * n
        if spec.use_beta:
            count += 2 * m * n
    return _checked(count)


def dense_flops(d: DenseDescriptor, exact: bool = False) -> int:
    count = 2 * d.d_in * d.d_out
    if exact and d.has_bias:
        count += d.d_out
    return _checked(count)


def output_shape(c: Conv2DDescriptor) -> tuple[int, int]:
    if c.padding is Padding.SAME:
        return -(-c.w_in // c.stride), -(-c.h_in // c.stride)
    if c.k1 > c.w_in or c.k2 > c.h_in:
        raise ShapeError("kernel larger than input under valid padding")
    return (c.w_in - c.k1) // c.stride + 1, (c.h_in - c.k2) // c.stride + 1


def conv_flops(c: Conv2DDescriptor) -> int:
    """Convolution FLOPs; bias is not counted."""
    w_out, h_out = output_shape(c)
    return _checked(c.batch * 2 * c.k1 * c.k2 * c.c_in * w_out * h_out * c.c_out)


def dense_as_conv(d: DenseDescriptor) -> Conv2DDescriptor:
    """The 1x1 convolution on a 1x1 input that computes the same product as ``d``."""
    return Conv2DDescriptor(w_in=1, h_in=1, c_in=d.d_in, c_out=d.d_out, k1=1, k2=1)


def as_conv(layer: LayerDescriptor) -> Conv2DDescriptor:
    if isinstance(layer, DenseDescriptor):
        return dense_as_conv(layer)
    if isinstance(layer, Conv2DDescriptor):
        return layer
    raise TypeError(f"not a layer descriptor: {layer!r}")


def layer_flops(layer: LayerDescriptor) -> int:
    """Asymptotic FLOPs of any layer (dense layers count as unary convolutions)."""
    return conv_flops(as_conv(layer))


def kernel_size(layer: LayerDescriptor) -> int:
    """Regime selector: the larger kernel axis."""
    c = as_conv(layer)
    return max(c.k1, c.k2)


def surface(layer: LayerDescriptor) -> int:
    """Effective surface: output width times output height times batch."""
    c = as_conv(layer)
    w_out, h_out = output_shape(c)
    return w_out * h_out * c.batch


# -- text records -----------------------------------------------------------

_CONV_FIELDS = {
    "w": "w_in",
    "h": "h_in",
    "cin": "c_in",
    "cout": "c_out",
    "k1": "k1",
    "k2": "k2",
    "stride": "stride",
    "pad": "padding",
    "batch": "batch",
}
_CONV_REQUIRED = ("w", "h", "cin", "cout", "k1", "k2")
_DENSE_FIELDS = {"din": "d_in", "dout": "d_out", "bias": "has_bias"}
_DENSE_REQUIRED = ("din", "dout")


def _tokens(text):
    """Yield ``(column, token)`` pairs for whitespace-separated tokens."""
    col = 0
    for part in text.split(" "):
        if part.strip():
            yield col + 1, part.strip()
        col += len(part) + 1


def _parse_int(key, raw, pos):
    if not (raw.isascii() and raw.isdigit()):
        raise ParseError(f"field {key!r} must be a decimal integer, got {raw!r}", pos)
    value = int(raw)
    if value < 1:
        raise ParseError(f"field {key!r} must be >= 1, got {value}", pos)
    return value


def parse_layer(text: str) -> LayerDescriptor:
    """Parse ``conv2d w=.. h=.. ...`` or ``dense din=.. dout=..``.

    Field order is free and names are case-sensitive.  ``stride``, ``pad``
    and ``batch`` default to 1, same and 1; ``bias`` defaults to true.
    """
    toks = list(_tokens(text.replace("\t", " ")))
    if not toks:
        raise ParseError("empty layer descriptor", 1)
    kind_pos, kind = toks[0]
    if kind == "conv2d":
        fields, required = _CONV_FIELDS, _CONV_REQUIRED
    elif kind == "dense":
        fields, required = _DENSE_FIELDS, _DENSE_REQUIRED
    else:
        raise ParseError(f"unknown layer kind {kind!r} (expected conv2d or dense)", kind_pos)

    values = {}
    for pos, tok in toks[1:]:
        key, sep, raw = tok.partition("=")
        if not sep:
            raise ParseError(f"expected key=value, got {tok!r}", pos)
        if key not in fields:
            raise ParseError(f"unknown field {key!r} for {kind}", pos)
        if key in values:
            raise ParseError(f"duplicate field {key!r}", pos)
        if key == "pad":
            if raw not in ("same", "valid"):
                raise ParseError(f"field 'pad' must be same or valid, got {raw!r}", pos)
            values[key] = Padding(raw)
        elif key == "bias":
            if raw not in ("true", "false"):
                raise ParseError(f"field 'bias' must be true or false, got {raw!r}", pos)
            values[key] = raw == "true"
        else:
            values[key] = _parse_int(key, raw, pos)

    missing = [k for k in required if k not in values]
    if missing:
        raise ParseError(f"missing field(s) {', '.join(missing)} for {kind}", len(text) + 1)

    kwargs = {fields[k]: v for k, v in values.items()}
    try:
        if kind == "conv2d":
            return Conv2DDescriptor(**kwargs)
        return DenseDescriptor(**kwargs)
    except ShapeError as exc:
        raise ParseError(str(exc), kind_pos) from exc


def format_layer(layer: LayerDescriptor) -> str:
    if isinstance(layer, DenseDescriptor):
        return f"dense din={layer.d_in} dout={layer.d_out} bias={'true' if layer.has_bias else 'false'}"
    c = layer
    return (
        f"conv2d w={c.w_in} h={c.h_in} cin={c.c_in} cout={c.c_out} k1={c.k1} k2={c.k2} "
        f"stride={c.stride} pad={c.padding.value} batch={c.batch}"
    )

