"""Equal-FLOPs sweeps: vary one axis, compensate with another to hold FLOPs fixed."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

from .errors import ShapeError, SweepError
from .layers import Conv2DDescriptor, Padding, conv_flops

__all__ = [
    "Axis",
    "Compensation",
    "SweepSpec",
    "SweepPoint",
    "plan_sweep",
    "generate_sweep",
    "PRESETS",
]

log = logging.getLogger(__name__)


class Axis(str, enum.Enum):
    K = "k"
    W_H = "wh"
    C_IN = "cin"
    C_OUT = "cout"
    BATCH = "batch"


class Compensation(str, enum.Enum):
    C_IN_C_OUT = "cin_cout"
    W_H = "wh"
    NONE = "none"


_FIELDS = ("w_in", "h_in", "c_in", "c_out", "k1", "k2", "stride", "padding", "batch")
_VARIED = {
    Axis.K: ("k1", "k2"),
    Axis.W_H: ("w_in", "h_in"),
    Axis.C_IN: ("c_in",),
    Axis.C_OUT: ("c_out",),
    Axis.BATCH: ("batch",),
}
_COMPENSATING = {
    Compensation.C_IN_C_OUT: ("c_in", "c_out"),
    Compensation.W_H: ("w_in", "h_in"),
    Compensation.NONE: (),
}


@dataclass(frozen=True)
class SweepSpec:
    """One equal-FLOPs experiment.

    ``fixed_dims`` holds Conv2DDescriptor field values shared by every point;
    ``overrides`` maps a point index to field values for that point only
    (for hand-built rows that do not follow the compensation rule).
    """

    target_flops: int
    varied_axis: Axis
    compensating_axis: Compensation
    axis_values: tuple
    fixed_dims: Mapping = field(default_factory=dict)
    overrides: Mapping = field(default_factory=dict)
    tolerance: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "varied_axis", Axis(self.varied_axis))
        object.__setattr__(self, "compensating_axis", Compensation(self.compensating_axis))
        object.__setattr__(self, "axis_values", tuple(int(v) for v in self.axis_values))
        if self.target_flops < 1:
            raise SweepError("target_flops must be positive")
        if set(_VARIED[self.varied_axis]) & set(_COMPENSATING[self.compensating_axis]):
            raise SweepError(
                f"varied axis {self.varied_axis.value} overlaps compensating axis {self.compensating_axis.value}"
            )
        for name in list(self.fixed_dims) + [k for o in self.overrides.values() for k in o]:
            if name not in _FIELDS:
                raise SweepError(f"unknown dimension {name!r}")


@dataclass(frozen=True)
class SweepPoint:
    index: int
    value: int
    layer: Optional[Conv2DDescriptor]
    flops: int
    rel_error: float

    @property
    def kept(self) -> bool:
        return self.layer is not None


def _make(dims):
    try:
        return Conv2DDescriptor(**dims)
    except ShapeError:
        return None


def _flops(dims):
    layer = _make(dims)
    return (conv_flops(layer), layer) if layer is not None else (None, None)


def _closest(target, evaluate):
    """Integer >= 1 whose FLOPs are nearest ``target``, for a nondecreasing ``evaluate``.

    ``evaluate`` may return None for values too small to form a valid layer.
    """
    hi = 1
    while True:
        f = evaluate(hi)
        if f is not None and f >= target:
            break
        if hi > 1 << 40:
            return None
        hi *= 2
    lo = 1
    while lo < hi:
        mid = (lo + hi) // 2
        f = evaluate(mid)
        if f is None or f < target:
            lo = mid + 1
        else:
            hi = mid
    best = None
    for v in (lo - 1, lo):
        f = evaluate(v) if v >= 1 else None
        if f is not None and (best is None or abs(f - target) < best[0]):
            best = (abs(f - target), v)
    return best[1]


def _solve_one(dims, name, target):
    v = _closest(target, lambda v: _flops({**dims, name: v})[0])
    return None if v is None else {**dims, name: v}


def _solve_pair(dims, first, second, target):
    """Pick ``(first, second)`` minimising the FLOPs error, then their imbalance."""
    probe = max(64, dims.get("k1", 1), dims.get("k2", 1))
    f_probe = _flops({**dims, first: probe, second: probe})[0]
    if f_probe is None:
        return None
    root = probe * math.sqrt(target / f_probe)
    spread = max(3, int(root * 0.02))
    lo = max(1, int(root) - spread)
    hi = int(root) + spread + 1
    best = None
    for a in range(lo, hi + 1):
        b = _closest(target, lambda v, a=a: _flops({**dims, first: a, second: v})[0])
        if b is None:
            continue
        f = _flops({**dims, first: a, second: b})[0]
        key = (abs(f - target), abs(a - b), a)
        if best is None or key < best[0]:
            best = (key, a, b)
    if best is None:
        return None
    return {**dims, first: best[1], second: best[2]}


def plan_sweep(spec: SweepSpec) -> list[SweepPoint]:
    """Build every point of ``spec``, keeping dropped points with ``layer=None``."""
    if spec.compensating_axis is Compensation.NONE:
        raise SweepError(
            f"FLOPs cannot stay constant while varying {spec.varied_axis.value} with no compensating axis"
        )
    points = []
    for index, value in enumerate(spec.axis_values):
        dims = {"stride": 1, "padding": Padding.SAME, "batch": 1}
        dims.update(spec.fixed_dims)
        for name in _VARIED[spec.varied_axis]:
            dims[name] = value
        override = dict(spec.overrides.get(index, {}))
        dims.update(override)
        free = [n for n in _COMPENSATING[spec.compensating_axis] if n not in override]
        missing = [n for n in _FIELDS if n not in dims and n not in free]
        if missing:
            raise SweepError(f"dimension(s) {', '.join(missing)} are neither fixed nor compensated")

        if len(free) == 2:
            solved = _solve_pair(dims, free[0], free[1], spec.target_flops)
        elif len(free) == 1:
            solved = _solve_one(dims, free[0], spec.target_flops)
        else:
            solved = dims
        flops, layer = _flops(solved) if solved is not None else (None, None)
        if flops is None:
            points.append(SweepPoint(index, value, None, 0, math.inf))
            continue
        rel = abs(flops - spec.target_flops) / spec.target_flops
        if rel > spec.tolerance:
            layer = None
        points.append(SweepPoint(index, value, layer, flops, rel))

    dropped = [p for p in points if not p.kept]
    for p in dropped:
        log.warning(
            "dropping sweep point %d (%s=%d): FLOPs off target by %.1f%%",
            p.index,
            spec.varied_axis.value,
            p.value,
            100 * p.rel_error,
        )
    if points and len(dropped) == len(points):
        raise SweepError("target FLOPs unachievable at every sweep point")
    return points


def generate_sweep(spec: SweepSpec) -> list[Conv2DDescriptor]:
    return [p.layer for p in plan_sweep(spec) if p.kept]


def _dense_vs_conv():
    return SweepSpec(
        target_flops=327_680_000,
        varied_axis=Axis.W_H,
        compensating_axis=Compensation.C_IN_C_OUT,
        axis_values=(1, 1, 2, 4),
        fixed_dims={"k1": 1, "k2": 1},
        overrides={1: {"w_in": 1, "h_in": 2, "c_in": 6400, "c_out": 12800}},
    )


def _k_vs_channels(target=2025 * 10**6):
    return SweepSpec(
        target_flops=target,
        varied_axis=Axis.K,
        compensating_axis=Compensation.C_IN_C_OUT,
        axis_values=tuple(range(1, 31)),
        fixed_dims={"w_in": 10, "h_in": 10},
    )


def _k_vs_spatial(target=2025 * 10**6):
    # channel count chosen so K=1 starts at a 300x300 input
    channels = max(1, round(math.sqrt(target / (2 * 300 * 300))))
    return SweepSpec(
        target_flops=target,
        varied_axis=Axis.K,
        compensating_axis=Compensation.W_H,
        axis_values=tuple(range(1, 31)),
        fixed_dims={"c_in": channels, "c_out": channels},
    )


def _cpu_flatness(target=2 * 10**8):
    return SweepSpec(
        target_flops=target,
        varied_axis=Axis.K,
        compensating_axis=Compensation.W_H,
        axis_values=(1, 3, 5, 7),
        fixed_dims={"c_in": 16, "c_out": 16},
    )


def _desk_dense_vs_conv(scale=16):
    base = _dense_vs_conv()
    return SweepSpec(
        target_flops=base.target_flops // scale**2,
        varied_axis=base.varied_axis,
        compensating_axis=base.compensating_axis,
        axis_values=base.axis_values,
        fixed_dims=base.fixed_dims,
        overrides={1: {"w_in": 1, "h_in": 2, "c_in": 6400 // scale, "c_out": 12800 // scale}},
    )


# Named sweep constructors; each accepts an optional target FLOPs where it makes sense.
PRESETS = {
    "dense-vs-conv": _dense_vs_conv,
    "dense-vs-conv-desk": _desk_dense_vs_conv,
    "k-vs-channels": _k_vs_channels,
    "k-vs-spatial": _k_vs_spatial,
    "cpu-flatness": _cpu_flatness,
}
