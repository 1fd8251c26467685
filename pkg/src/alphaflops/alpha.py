"""The alpha correction to FLOPs and its parameter sets.

For a layer with effective surface ``S`` (output width x height x batch) and
kernel regime parameters ``(beta, gamma, s_k)``::

    alpha(S) = ((1 - beta) * s_k / S + beta) ** gamma

alpha-FLOPs are ``FLOPs * alpha``; predicted time is ``c * alpha-FLOPs``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import ParseError
from .layers import LayerDescriptor, kernel_size, layer_flops, surface

__all__ = [
    "RegimeParams",
    "AlphaParams",
    "AlphaInput",
    "DEFAULT_REGIMES",
    "DEFAULT_TIME_PER_FLOP",
    "default_params",
    "alpha_curve",
    "alpha_factor",
    "layer_alpha",
    "alpha_flops",
    "predicted_time",
    "gustafson_ratio",
    "parse_params",
    "format_params",
    "load_params",
    "save_params",
]


@dataclass(frozen=True)
class RegimeParams:
    beta: float
    gamma: float
    s_k: float = 1.0

    def __post_init__(self):
        for name in ("beta", "gamma", "s_k"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or isinstance(value, bool) or not math.isfinite(value):
                raise ValueError(f"{name} must be a finite real, got {value!r}")
            object.__setattr__(self, name, float(value))
        if not 0.0 < self.beta <= 1.0:
            raise ValueError(f"beta must lie in (0, 1], got {self.beta}")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.s_k < 1.0:
            raise ValueError(f"s_k must be >= 1, got {self.s_k}")


def _normalize_regimes(regimes):
    if isinstance(regimes, Mapping):
        items = regimes.items()
    else:
        items = regimes
    out = []
    for threshold, regime in items:
        if isinstance(threshold, bool) or not isinstance(threshold, int) or threshold < 1:
            raise ValueError(f"regime threshold must be a positive integer, got {threshold!r}")
        if not isinstance(regime, RegimeParams):
            regime = RegimeParams(*regime)
        out.append((threshold, regime))
    out.sort(key=lambda item: item[0])
    thresholds = [t for t, _ in out]
    if len(set(thresholds)) != len(thresholds):
        raise ValueError("duplicate regime thresholds")
    return tuple(out)


@dataclass(frozen=True)
class AlphaParams:
    """Regime table plus the device's seconds-per-alpha-FLOP constant.

    ``regimes`` maps a kernel-size threshold to its parameters; a kernel of
    size K uses the entry with the largest threshold <= K.
    """

    regimes: tuple
    time_per_flop_c: float = 1.0

    def __post_init__(self):
        regimes = _normalize_regimes(self.regimes)
        if len(regimes) < 2:
            raise ValueError("at least two regimes (K=1 and K>1) are required")
        if regimes[0][0] != 1:
            raise ValueError("the regime table must start at threshold 1")
        if regimes[0][1].s_k != 1.0:
            raise ValueError("the K=1 regime must have s_k == 1")
        object.__setattr__(self, "regimes", regimes)
        c = self.time_per_flop_c
        if isinstance(c, bool) or not isinstance(c, (int, float)) or not math.isfinite(c) or c <= 0:
            raise ValueError(f"time_per_flop_c must be a positive real, got {c!r}")
        object.__setattr__(self, "time_per_flop_c", float(c))

    @property
    def thresholds(self) -> tuple[int, ...]:
        return tuple(t for t, _ in self.regimes)

    def regime_threshold(self, k: int) -> int:
        chosen = self.regimes[0][0]
        for threshold, _ in self.regimes:
            if threshold <= k:
                chosen = threshold
        return chosen

    def regime_for(self, k: int) -> RegimeParams:
        return dict(self.regimes)[self.regime_threshold(k)]

    def with_regime(self, threshold: int, regime: RegimeParams) -> "AlphaParams":
        table = dict(self.regimes)
        table[threshold] = regime
        return replace(self, regimes=tuple(table.items()))

    def with_c(self, time_per_flop_c: float) -> "AlphaParams":
        return replace(self, time_per_flop_c=time_per_flop_c)


@dataclass(frozen=True)
class AlphaInput:
    surface: float
    kernel_k: int

    def __post_init__(self):
        if not self.surface >= 1:
            raise ValueError(f"surface must be >= 1, got {self.surface}")
        if isinstance(self.kernel_k, bool) or not isinstance(self.kernel_k, int) or self.kernel_k < 1:
            raise ValueError(f"kernel_k must be a positive integer, got {self.kernel_k!r}")


# Regime values reported for an NVIDIA Quadro T2000.
DEFAULT_REGIMES = {
    1: RegimeParams(beta=0.02, gamma=0.99, s_k=1.0),
    2: RegimeParams(beta=0.001, gamma=0.56, s_k=1.0),
}

# Maps a 327.68 MFLOP unary convolution on a 1x1 input to 6.154 ms.
DEFAULT_TIME_PER_FLOP = 6.154e-3 / 327_680_000


def default_params(time_per_flop_c: float = DEFAULT_TIME_PER_FLOP) -> AlphaParams:
    return AlphaParams(regimes=DEFAULT_REGIMES, time_per_flop_c=time_per_flop_c)


def alpha_curve(s, beta, gamma, s_k=1.0):
    """Vectorised correction factor; surfaces at or below ``s_k`` give exactly 1."""
    s = np.asarray(s, dtype=float)
    beta = np.asarray(beta, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    s_k = np.asarray(s_k, dtype=float)
    clamped = np.maximum(s, s_k)
    value = ((1.0 - beta) * s_k / clamped + beta) ** gamma
    return np.where(s <= s_k, 1.0, value)


def alpha_factor(inp: AlphaInput, params: AlphaParams) -> float:
    regime = params.regime_for(inp.kernel_k)
    return float(alpha_curve(inp.surface, regime.beta, regime.gamma, regime.s_k))


def layer_alpha(layer: LayerDescriptor, params: AlphaParams) -> float:
    return alpha_factor(AlphaInput(surface(layer), kernel_size(layer)), params)


def alpha_flops(layer: LayerDescriptor, params: AlphaParams) -> float:
    return layer_flops(layer) * layer_alpha(layer, params)


def predicted_time(layer: LayerDescriptor, params: AlphaParams) -> float:
    """Predicted execution time in seconds."""
    return params.time_per_flop_c * alpha_flops(layer, params)


def gustafson_ratio(beta: float, n_scale: float) -> float:
    """Scaled work over sequential work when a task grows by ``n_scale``.

    Only the fraction ``beta`` of the work grows with the problem, so the
    ratio is ``(1 - beta) / n_scale + beta``.
    """
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must lie in [0, 1], got {beta}")
    if not n_scale >= 1.0:
        raise ValueError(f"n_scale must be >= 1, got {n_scale}")
    return (1.0 - beta) / n_scale + beta


# -- parameter files ------------------------------------------------------------

_REGIME_KEYS = ("beta", "gamma", "s_k")
_TOP_KEYS = ("time_per_flop_c",)


def _parse_float(raw, lineno, key):
    try:
        return float(raw)
    except ValueError:
        raise ParseError(f"{key} must be a real number, got {raw!r}", f"line {lineno}") from None


def parse_params(text: str) -> AlphaParams:
    """Parse the ``key = value`` / ``[regime k=N]`` parameter format."""
    top = {}
    regimes = {}
    current = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ParseError(f"unterminated section header {line!r}", f"line {lineno}")
            header = line[1:-1].split()
            if len(header) != 2 or header[0] != "regime" or not header[1].startswith("k="):
                raise ParseError(f"expected [regime k=N], got {line!r}", f"line {lineno}")
            raw_k = header[1][2:]
            if not (raw_k.isascii() and raw_k.isdigit()) or int(raw_k) < 1:
                raise ParseError(f"regime threshold must be a positive integer, got {raw_k!r}", f"line {lineno}")
            current = int(raw_k)
            if current in regimes:
                raise ParseError(f"duplicate regime k={current}", f"line {lineno}")
            regimes[current] = {}
            continue
        key, sep, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if not sep or not key:
            raise ParseError(f"expected key = value, got {line!r}", f"line {lineno}")
        target, allowed = (top, _TOP_KEYS) if current is None else (regimes[current], _REGIME_KEYS)
        if key not in allowed:
            raise ParseError(f"unknown key {key!r}", f"line {lineno}")
        if key in target:
            raise ParseError(f"duplicate key {key!r}", f"line {lineno}")
        target[key] = _parse_float(raw, lineno, key)

    if "time_per_flop_c" not in top:
        raise ParseError("missing time_per_flop_c")
    table = {}
    for k, values in regimes.items():
        missing = [name for name in ("beta", "gamma") if name not in values]
        if missing:
            raise ParseError(f"regime k={k} is missing {', '.join(missing)}")
        try:
            table[k] = RegimeParams(**values)
        except ValueError as exc:
            raise ParseError(f"regime k={k}: {exc}") from None
    try:
        return AlphaParams(regimes=table, time_per_flop_c=top["time_per_flop_c"])
    except ValueError as exc:
        raise ParseError(str(exc)) from None


def format_params(params: AlphaParams) -> str:
    lines = [f"time_per_flop_c = {params.time_per_flop_c!r}"]
    for threshold, regime in params.regimes:
        lines += [
            "",
            f"[regime k={threshold}]",
            f"beta = {regime.beta!r}",
            f"gamma = {regime.gamma!r}",
            f"s_k = {regime.s_k!r}",
        ]
    return "\n".join(lines) + "\n"


def load_params(path) -> AlphaParams:
    return parse_params(Path(path).read_text(encoding="utf-8"))


def save_params(params: AlphaParams, path) -> None:
    Path(path).write_text(format_params(params), encoding="utf-8")
