"""Fitting alpha parameters to measured timings.

The loss is the sum of squared relative errors ``((pred - t) / t) ** 2``.
For a candidate regime table the time-per-FLOP constant ``c`` enters
linearly, so with ``r_j = alpha_flops_j / t_j`` its optimum is
``sum(r) / sum(r ** 2)`` and the loss reduces to ``n - sum(r) ** 2 / sum(r ** 2)``.
The search over ``(beta, gamma, s_k)`` runs a lexicographically ordered grid
per regime, alternates between regimes so they share one ``c``, and then
polishes all free parameters jointly with bounded Nelder-Mead.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .alpha import AlphaParams, RegimeParams, alpha_curve, default_params
from .dataset import TimingRecord
from .errors import FitError, MixedDevicesError, NonIdentifiableError, TooFewRecordsError
from .layers import Conv2DDescriptor, LayerDescriptor, kernel_size, layer_flops, surface

__all__ = [
    "FitConfig",
    "FitResult",
    "parse_fixed",
    "predict_ms",
    "evaluate",
    "fit",
    "synthesize_dataset",
    "synthetic_layouts",
]

_PARAM_NAMES = ("beta", "gamma", "s_k")
_BETA_FLOOR = 1e-6
_GAMMA_FLOOR = 1e-3


@dataclass(frozen=True)
class FitConfig:
    beta_grid: tuple = (1e-4, 1.0, 25)
    gamma_grid: tuple = (0.05, 1.0, 20)
    s_k_grid: tuple = (1.0, 64.0, 13)
    refine_evals: int = 500
    alternations: int = 2
    min_records: int = 4
    workers: int = 1
    trim: bool = False
    trim_fraction: float = 0.01
    # Supplies regime thresholds and the values of regimes without data.
    template: AlphaParams = field(default_factory=default_params)


@dataclass(frozen=True)
class FitResult:
    params: AlphaParams
    mape: float
    max_ape: float
    n_records: int
    converged: bool = True
    loss: float = 0.0

    def __post_init__(self):
        if self.mape > self.max_ape:
            raise ValueError("mape cannot exceed max_ape")


def parse_fixed(items: Sequence[str]) -> dict[str, float]:
    """Turn ``["gamma=1", "k2.s_k=4"]`` into a fixed-parameter mapping."""
    fixed = {}
    for item in items:
        key, sep, raw = item.partition("=")
        key = key.strip()
        if not sep:
            raise ValueError(f"expected key=value, got {item!r}")
        _split_key(key)
        try:
            fixed[key] = float(raw)
        except ValueError:
            raise ValueError(f"value for {key!r} must be a number, got {raw!r}") from None
    return fixed


def _split_key(key):
    if key in ("c", "time_per_flop_c"):
        return None, "time_per_flop_c"
    threshold = None
    name = key
    if "." in key:
        prefix, name = key.split(".", 1)
        if not (prefix.startswith("k") and prefix[1:].isdigit() and int(prefix[1:]) >= 1):
            raise ValueError(f"bad regime prefix in {key!r} (expected kN.name)")
        threshold = int(prefix[1:])
    if name not in _PARAM_NAMES:
        raise ValueError(f"unknown parameter {key!r}")
    return threshold, name


def _fixed_for(fixed, threshold):
    out = {}
    for key, value in fixed.items():
        thr, name = _split_key(key)
        if name == "time_per_flop_c":
            continue
        if thr is None and name not in out:
            out[name] = value
    for key, value in fixed.items():
        thr, name = _split_key(key)
        if thr == threshold:
            out[name] = value
    return out


def _fixed_c(fixed):
    for key, value in fixed.items():
        if _split_key(key)[1] == "time_per_flop_c":
            return value
    return None


# -- prediction / evaluation ------------------------------------------------------


class _Columns:
    """Per-record arrays used by both evaluation and fitting."""

    def __init__(self, records: Sequence[TimingRecord], params: AlphaParams):
        self.flops = np.array([float(layer_flops(r.layer)) for r in records])
        self.surface = np.array([float(surface(r.layer)) for r in records])
        self.time_ms = np.array([r.time_ms for r in records])
        self.regime = np.array([params.regime_threshold(kernel_size(r.layer)) for r in records])


def _alpha_for(cols, params):
    alpha = np.ones_like(cols.flops)
    for threshold, regime in params.regimes:
        mask = cols.regime == threshold
        if mask.any():
            alpha[mask] = alpha_curve(cols.surface[mask], regime.beta, regime.gamma, regime.s_k)
    return alpha


def predict_ms(records: Sequence[TimingRecord], params: AlphaParams) -> np.ndarray:
    """Predicted times in milliseconds, one per record."""
    cols = _Columns(records, params)
    return params.time_per_flop_c * (cols.flops * _alpha_for(cols, params)) * 1e3


def _ape(records, params):
    pred = predict_ms(records, params)
    measured = np.array([r.time_ms for r in records])
    return np.abs(pred - measured) / measured, pred, measured


def evaluate(records: Sequence[TimingRecord], params: AlphaParams) -> FitResult:
    """Score ``params`` on ``records`` without refitting."""
    if not records:
        raise FitError("cannot evaluate an empty record list")
    ape, pred, measured = _ape(records, params)
    loss = float(np.sum(((pred - measured) / measured) ** 2))
    return FitResult(
        params=params,
        mape=float(np.mean(ape)),
        max_ape=float(np.max(ape)),
        n_records=len(records),
        converged=True,
        loss=loss,
    )


# -- fitting ----------------------------------------------------------------------


def _axis(lo, hi, n, log):
    if n == 1:
        return np.array([float(lo)])
    return np.geomspace(lo, hi, n) if log else np.linspace(lo, hi, n)


@dataclass
class _Regime:
    threshold: int
    idx: np.ndarray
    flops: np.ndarray
    surface: np.ndarray
    time: np.ndarray
    fixed: dict
    free: tuple
    best: RegimeParams
    sum1: float = 0.0
    sum2: float = 0.0


def _check_records(records, config, fixed):
    if not records:
        raise NonIdentifiableError("no records to fit: parameters are not identifiable")
    devices = sorted({r.device for r in records})
    if len(devices) > 1:
        raise MixedDevicesError(f"records come from several devices ({', '.join(devices)}); fit each device separately")
    if len({r.layer for r in records}) < 2:
        raise NonIdentifiableError("all records describe the same layer; parameters are not identifiable")


def _build_regimes(records, config, fixed):
    template = config.template
    cols = _Columns(records, template)
    time_s = cols.time_ms * 1e-3
    regimes = []
    for threshold, default in template.regimes:
        idx = np.flatnonzero(cols.regime == threshold)
        if idx.size == 0:
            continue
        pinned = _fixed_for(fixed, threshold)
        if threshold == 1:
            if pinned.get("s_k", 1.0) != 1.0:
                raise FitError("s_k of the K=1 regime is pinned to 1")
            pinned["s_k"] = 1.0
        free = tuple(name for name in _PARAM_NAMES if name not in pinned)
        start = {name: pinned.get(name, getattr(default, name)) for name in _PARAM_NAMES}
        try:
            best = RegimeParams(**start)
        except ValueError as exc:
            raise FitError(f"regime k={threshold}: {exc}") from None
        if free:
            if idx.size < config.min_records:
                raise TooFewRecordsError(
                    f"regime k={threshold} has {idx.size} record(s); at least {config.min_records} are required"
                )
            surfaces = np.unique(cols.surface[idx])
            if surfaces.size < 2:
                raise NonIdentifiableError(
                    f"regime k={threshold}: all records share surface {surfaces[0]:g}; "
                    "beta/gamma/s_k are not identifiable"
                )
        regimes.append(
            _Regime(
                threshold=threshold,
                idx=idx,
                flops=cols.flops[idx],
                surface=cols.surface[idx],
                time=time_s[idx],
                fixed=pinned,
                free=free,
                best=best,
            )
        )
    return regimes


def _candidates(reg, config):
    axes = {
        "beta": _axis(*config.beta_grid, log=True),
        "gamma": _axis(*config.gamma_grid, log=False),
        "s_k": _axis(*config.s_k_grid, log=True),
    }
    for name, value in reg.fixed.items():
        axes[name] = np.array([value])
    grid = np.array(list(itertools.product(axes["beta"], axes["gamma"], axes["s_k"])))
    return grid


def _ratio_sums(reg, cand):
    """Sums of r and r**2 for each candidate row ``(beta, gamma, s_k)``."""
    alpha = alpha_curve(reg.surface[None, :], cand[:, 0:1], cand[:, 1:2], cand[:, 2:3])
    r = reg.flops[None, :] * alpha / reg.time[None, :]
    return r.sum(axis=1), (r * r).sum(axis=1), r


def _chunked_sums(reg, cand, workers):
    if workers <= 1 or len(cand) < 2 * workers:
        s1, s2, r = _ratio_sums(reg, cand)
        return s1, s2, r
    chunks = np.array_split(cand, workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(lambda c: _ratio_sums(reg, c), chunks))
    return (
        np.concatenate([p[0] for p in parts]),
        np.concatenate([p[1] for p in parts]),
        np.concatenate([p[2] for p in parts]),
    )


def _grid_losses(s1, s2, r, other1, other2, n_total, c_fixed, other_loss):
    if c_fixed is not None:
        return other_loss + ((c_fixed * r - 1.0) ** 2).sum(axis=1)
    t1 = s1 + other1
    t2 = s2 + other2
    return n_total - t1 * t1 / t2


def _grid_search(regimes, config, c_fixed, n_total):
    searchable = [reg for reg in regimes if reg.free]
    for reg in regimes:
        reg.sum1, reg.sum2, _ = _ratio_sums(reg, np.array([[reg.best.beta, reg.best.gamma, reg.best.s_k]]))
        reg.sum1, reg.sum2 = float(reg.sum1[0]), float(reg.sum2[0])
    # First pass: each regime with its own scale; later passes share c.
    for sweep in range(1 + config.alternations):
        for reg in searchable:
            cand = _candidates(reg, config)
            s1, s2, r = _chunked_sums(reg, cand, config.workers)
            if sweep == 0:
                losses = _grid_losses(s1, s2, r, 0.0, 0.0, len(reg.time), c_fixed, 0.0)
            else:
                others = [o for o in regimes if o is not reg]
                other1 = sum(o.sum1 for o in others)
                other2 = sum(o.sum2 for o in others)
                other_loss = 0.0
                if c_fixed is not None:
                    other_loss = sum(_fixed_c_loss(o, c_fixed) for o in others)
                losses = _grid_losses(s1, s2, r, other1, other2, n_total, c_fixed, other_loss)
            best = int(np.argmin(losses))  # first minimum = lexicographically smallest tie
            beta, gamma, s_k = cand[best]
            reg.best = RegimeParams(beta=float(beta), gamma=float(gamma), s_k=float(s_k))
            reg.sum1, reg.sum2 = float(s1[best]), float(s2[best])


def _fixed_c_loss(reg, c):
    alpha = alpha_curve(reg.surface, reg.best.beta, reg.best.gamma, reg.best.s_k)
    r = reg.flops * alpha / reg.time
    return float(((c * r - 1.0) ** 2).sum())


def _encode(regimes):
    x, bounds = [], []
    for reg in regimes:
        max_log_s = math.log(max(float(reg.surface.max()), 1.0) * 4.0)
        for name in reg.free:
            value = getattr(reg.best, name)
            if name == "beta":
                x.append(math.log(value))
                bounds.append((math.log(_BETA_FLOOR), 0.0))
            elif name == "gamma":
                x.append(value)
                bounds.append((_GAMMA_FLOOR, 1.0))
            else:
                x.append(math.log(value))
                bounds.append((0.0, max(max_log_s, math.log(value))))
    return np.array(x), bounds


def _decode(regimes, x):
    out = []
    pos = 0
    for reg in regimes:
        values = dict(beta=reg.best.beta, gamma=reg.best.gamma, s_k=reg.best.s_k)
        values.update(reg.fixed)
        for name in reg.free:
            v = float(x[pos])
            pos += 1
            values[name] = math.exp(v) if name in ("beta", "s_k") else v
        values["beta"] = min(max(values["beta"], _BETA_FLOOR), 1.0)
        values["gamma"] = min(max(values["gamma"], _GAMMA_FLOOR), 1.0)
        values["s_k"] = max(values["s_k"], 1.0)
        out.append(RegimeParams(**values))
    return out


def _joint_loss(regimes, table, c_fixed):
    s1 = s2 = 0.0
    fixed_loss = 0.0
    n = 0
    for reg, params in zip(regimes, table):
        alpha = alpha_curve(reg.surface, params.beta, params.gamma, params.s_k)
        r = reg.flops * alpha / reg.time
        if c_fixed is not None:
            fixed_loss += float(((c_fixed * r - 1.0) ** 2).sum())
        s1 += float(r.sum())
        s2 += float((r * r).sum())
        n += r.size
    if c_fixed is not None:
        return fixed_loss, c_fixed
    return n - s1 * s1 / s2, s1 / s2


def _initial_simplex(x0, bounds, regimes):
    steps = []
    for reg in regimes:
        for name in reg.free:
            steps.append({"beta": 0.5, "gamma": 0.05, "s_k": 0.5}[name])
    simplex = [x0.copy()]
    for i, step in enumerate(steps):
        v = x0.copy()
        lo, hi = bounds[i]
        v[i] = v[i] + step if v[i] + step <= hi else v[i] - step
        v[i] = min(max(v[i], lo), hi)
        simplex.append(v)
    return np.array(simplex)


def _fit_once(records, fixed, config):
    _check_records(records, config, fixed)
    c_fixed = _fixed_c(fixed)
    regimes = _build_regimes(records, config, fixed)
    n_total = len(records)
    _grid_search(regimes, config, c_fixed, n_total)

    grid_table = [reg.best for reg in regimes]
    best_loss, best_c = _joint_loss(regimes, grid_table, c_fixed)
    best_table = grid_table
    converged = True

    x0, bounds = _encode(regimes)
    if x0.size and config.refine_evals > 0:
        objective = lambda x: _joint_loss(regimes, _decode(regimes, x), c_fixed)[0]  # noqa: E731
        res = minimize(
            objective,
            x0,
            method="Nelder-Mead",
            bounds=bounds,
            options={
                "maxfev": config.refine_evals,
                "initial_simplex": _initial_simplex(x0, bounds, regimes),
                "xatol": 1e-10,
                "fatol": 1e-14,
            },
        )
        table = _decode(regimes, res.x)
        loss, c = _joint_loss(regimes, table, c_fixed)
        # budget exhaustion still counts if the simplex has flattened out
        spread = float(np.ptp(res.final_simplex[1]))
        converged = bool(res.success) or spread <= 1e-10 + 1e-6 * loss
        if loss <= best_loss:
            best_loss, best_c, best_table = loss, c, table

    if not (math.isfinite(best_c) and best_c > 0):
        raise FitError(f"fitted time_per_flop_c is not positive ({best_c})")
    params = config.template.with_c(best_c)
    for reg, regime in zip(regimes, best_table):
        params = params.with_regime(reg.threshold, regime)
    result = evaluate(records, params)
    return replace(result, converged=converged)


def fit(
    records: Sequence[TimingRecord],
    fixed: Optional[Mapping[str, float]] = None,
    config: Optional[FitConfig] = None,
) -> FitResult:
    """Fit alpha parameters (and ``c``) to one device's timing records.

    ``fixed`` pins parameters: ``beta``/``gamma``/``s_k`` apply to every
    regime, ``k<threshold>.<name>`` to one regime, ``c`` to the time
    constant.  With ``config.trim`` the worst ``trim_fraction`` of records by
    relative error are dropped after a first fit and the fit is repeated.
    """
    fixed = dict(fixed or {})
    config = config or FitConfig()
    for key in fixed:
        threshold, _ = _split_key(key)
        if threshold is not None and threshold not in config.template.thresholds:
            raise ValueError(f"{key!r} names no regime (thresholds are {config.template.thresholds})")
    records = list(records)
    result = _fit_once(records, fixed, config)
    if config.trim:
        n_drop = int(len(records) * config.trim_fraction)
        if n_drop:
            ape, _, _ = _ape(records, result.params)
            order = sorted(range(len(records)), key=lambda i: (-ape[i], i))
            dropped = set(order[:n_drop])
            kept = [r for i, r in enumerate(records) if i not in dropped]
            result = _fit_once(kept, fixed, config)
    return result


# -- synthetic data ---------------------------------------------------------------


def synthesize_dataset(
    params: AlphaParams,
    layouts: Sequence[LayerDescriptor],
    noise_rel: float = 0.0,
    seed: int = 0,
    device: str = "synthetic",
) -> list[TimingRecord]:
    """Timings generated by the model itself, with optional uniform relative noise."""
    if not 0.0 <= noise_rel < 0.5:
        raise ValueError(f"noise_rel must lie in [0, 0.5), got {noise_rel}")
    rng = np.random.default_rng(seed)
    eps = rng.uniform(-noise_rel, noise_rel, size=len(layouts)) if noise_rel > 0 else np.zeros(len(layouts))
    base = predict_ms([TimingRecord(layer, device, 1.0) for layer in layouts], params)
    return [
        TimingRecord(layer=layer, device=device, time_ms=float(t * (1.0 + e)) if noise_rel > 0 else float(t))
        for layer, t, e in zip(layouts, base, eps)
    ]


def synthetic_layouts(
    n: int,
    seed: int = 0,
    max_surface: float = 1e5,
    kernels: Sequence[int] = (1, 3, 5, 7),
) -> list[Conv2DDescriptor]:
    """Stride-1 same-padding convolutions with surfaces spread log-uniformly in [1, max_surface].

    Kernels cycle through ``kernels`` so every regime receives data, and the
    first point of each kernel sits at surface 1 and the last near ``max_surface``.
    """
    rng = np.random.default_rng(seed)
    out = []
    per_kernel = {k: [] for k in kernels}
    for i in range(n):
        per_kernel[kernels[i % len(kernels)]].append(i)
    for k, indices in per_kernel.items():
        m = len(indices)
        if m == 0:
            continue
        log_s = np.linspace(0.0, math.log10(max_surface), m) if m > 1 else np.array([0.0])
        for ls in log_s:
            side = max(1, int(round(math.sqrt(10**ls))))
            other = max(1, int(round(10**ls / side)))
            c_in = int(rng.integers(1, 65))
            c_out = int(rng.integers(1, 65))
            out.append(Conv2DDescriptor(w_in=side, h_in=other, c_in=c_in, c_out=c_out, k1=k, k2=k))
    return out
