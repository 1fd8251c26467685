"""Prediction reports (TSV) and per-sweep SVG line charts."""

from __future__ import annotations

import math
from dataclasses import dataclass
from html import escape
from typing import Optional, Sequence

from .alpha import AlphaParams, layer_alpha
from .calibration import predict_ms
from .dataset import TimingRecord
from .layers import LayerDescriptor, format_layer, layer_flops

__all__ = ["ReportRow", "rows_for_records", "rows_for_layers", "summary", "format_tsv", "group_rows", "render_svg"]

HEADER = ("layer", "flops", "alpha", "alpha_flops", "predicted_ms", "measured_ms", "ape")


@dataclass(frozen=True)
class ReportRow:
    layer: LayerDescriptor
    flops: int
    alpha: float
    alpha_flops: float
    predicted_ms: Optional[float] = None
    measured_ms: Optional[float] = None
    ape: Optional[float] = None


def rows_for_records(records: Sequence[TimingRecord], params: AlphaParams) -> list[ReportRow]:
    predicted = predict_ms(records, params)
    rows = []
    for record, pred in zip(records, predicted):
        flops = layer_flops(record.layer)
        alpha = layer_alpha(record.layer, params)
        pred = float(pred)
        rows.append(
            ReportRow(
                layer=record.layer,
                flops=flops,
                alpha=alpha,
                alpha_flops=flops * alpha,
                predicted_ms=pred,
                measured_ms=record.time_ms,
                ape=abs(pred - record.time_ms) / record.time_ms,
            )
        )
    return rows


def rows_for_layers(layers: Sequence[LayerDescriptor], params: AlphaParams) -> list[ReportRow]:
    """Rows with predictions only (no measurements)."""
    records = [TimingRecord(layer, "model", 1.0) for layer in layers]
    predicted = predict_ms(records, params) if records else []
    rows = []
    for layer, pred in zip(layers, predicted):
        flops = layer_flops(layer)
        alpha = layer_alpha(layer, params)
        rows.append(ReportRow(layer, flops, alpha, flops * alpha, float(pred)))
    return rows


def summary(rows: Sequence[ReportRow]) -> tuple[Optional[float], Optional[float]]:
    """(MAPE, max APE) over rows that carry measurements."""
    apes = [r.ape for r in rows if r.ape is not None]
    if not apes:
        return None, None
    return math.fsum(apes) / len(apes), max(apes)


def _fmt(value, spec):
    return "" if value is None else format(value, spec)


def format_tsv(rows: Sequence[ReportRow]) -> str:
    lines = ["\t".join(HEADER)]
    for r in rows:
        lines.append(
            "\t".join(
                [
                    format_layer(r.layer),
                    str(r.flops),
                    _fmt(r.alpha, ".6f"),
                    _fmt(r.alpha_flops, ".1f"),
                    _fmt(r.predicted_ms, ".6g"),
                    _fmt(r.measured_ms, ".6g"),
                    _fmt(r.ape, ".6f"),
                ]
            )
        )
    mape, max_ape = summary(rows)
    if mape is not None:
        lines.append(f"# mape\t{mape:.6f}")
        lines.append(f"# max_ape\t{max_ape:.6f}")
    return "\n".join(lines) + "\n"


def group_rows(rows: Sequence[ReportRow]) -> dict[int, list[ReportRow]]:
    """Group rows into sweeps by their (constant) FLOPs, keeping input order."""
    groups: dict[int, list[ReportRow]] = {}
    for r in rows:
        groups.setdefault(r.flops, []).append(r)
    return groups


_W, _H, _PAD = 640, 400, 60


def _polyline(points, dashed, color):
    coords = " ".join(f"{x:.2f},{y:.2f}" for x, y in points)
    dash = ' stroke-dasharray="6,4"' if dashed else ""
    return f'<polyline fill="none" stroke="{color}" stroke-width="2"{dash} points="{coords}"/>'


def render_svg(rows: Sequence[ReportRow], title: str) -> str:
    """Line chart of measured (solid) and predicted (dashed) time against sweep position.

    The plotted values are repeated in a leading comment so charts can be
    compared as text.
    """
    values = [v for r in rows for v in (r.measured_ms, r.predicted_ms) if v is not None]
    top = max(values) * 1.1 if values else 1.0
    n = len(rows)

    def xy(i, v):
        x = _PAD + (i * (_W - 2 * _PAD) / (n - 1) if n > 1 else (_W - 2 * _PAD) / 2)
        y = _H - _PAD - v / top * (_H - 2 * _PAD)
        return x, y

    table = ["index\tlayer\tmeasured_ms\tpredicted_ms"]
    for i, r in enumerate(rows):
        table.append(f"{i}\t{format_layer(r.layer)}\t{_fmt(r.measured_ms, '.6g')}\t{_fmt(r.predicted_ms, '.6g')}")
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        "<!-- data",
        *(line.replace("--", "- -") for line in table),
        "-->",
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{_W / 2:.0f}" y="24" text-anchor="middle" font-family="sans-serif" font-size="14">{escape(title)}</text>',
        f'<line x1="{_PAD}" y1="{_H - _PAD}" x2="{_W - _PAD}" y2="{_H - _PAD}" stroke="black"/>',
        f'<line x1="{_PAD}" y1="{_PAD}" x2="{_PAD}" y2="{_H - _PAD}" stroke="black"/>',
        f'<text x="{_PAD - 8}" y="{_PAD + 4}" text-anchor="end" font-family="sans-serif" font-size="11">{top:.3g} ms</text>',
        f'<text x="{_W / 2:.0f}" y="{_H - 20}" text-anchor="middle" font-family="sans-serif" font-size="12">sweep point</text>',
    ]
    measured = [xy(i, r.measured_ms) for i, r in enumerate(rows) if r.measured_ms is not None]
    predicted = [xy(i, r.predicted_ms) for i, r in enumerate(rows) if r.predicted_ms is not None]
    if measured:
        out.append(_polyline(measured, dashed=False, color="#1f77b4"))
    if predicted:
        out.append(_polyline(predicted, dashed=True, color="#d62728"))
    out.append("</svg>")
    return "\n".join(out) + "\n"
