"""Timing datasets: one measured (layer, device, time) observation per CSV row."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

from .errors import DatasetError, ParseError, ShapeError
from .layers import Conv2DDescriptor, DenseDescriptor, LayerDescriptor, Padding

__all__ = [
    "COLUMNS",
    "TimingRecord",
    "load_dataset",
    "read_dataset",
    "save_dataset",
    "write_dataset",
    "dataset_text",
    "parse_mapping",
    "import_dataset",
]

COLUMNS = (
    "device",
    "layer",
    "w",
    "h",
    "cin",
    "cout",
    "k1",
    "k2",
    "stride",
    "pad",
    "batch",
    "time_ms",
    "runs",
    "time_std_ms",
)
_INT_COLUMNS = ("w", "h", "cin", "cout", "k1", "k2", "stride", "batch")


@dataclass(frozen=True)
class TimingRecord:
    layer: LayerDescriptor
    device: str
    time_ms: float
    runs: int = 1
    time_std_ms: Optional[float] = None

    def __post_init__(self):
        if not (isinstance(self.time_ms, (int, float)) and math.isfinite(self.time_ms) and self.time_ms > 0):
            raise ValueError(f"time_ms must be a positive real, got {self.time_ms!r}")
        if isinstance(self.runs, bool) or not isinstance(self.runs, int) or self.runs < 1:
            raise ValueError(f"runs must be a positive integer, got {self.runs!r}")
        if self.time_std_ms is not None and not (math.isfinite(self.time_std_ms) and self.time_std_ms >= 0):
            raise ValueError(f"time_std_ms must be >= 0, got {self.time_std_ms!r}")
        if not self.device or "," in self.device or "\n" in self.device:
            raise ValueError(f"invalid device label {self.device!r}")

    @property
    def time_s(self) -> float:
        return self.time_ms * 1e-3


def _int_field(row, col, rowno):
    raw = row[col].strip()
    if not (raw.isascii() and raw.isdigit()):
        raise DatasetError(f"expected a positive integer, got {raw!r}", rowno, col)
    value = int(raw)
    if value < 1:
        raise DatasetError(f"expected a positive integer, got {raw!r}", rowno, col)
    return value


def _float_field(row, col, rowno):
    raw = row[col].strip()
    try:
        value = float(raw)
    except ValueError:
        raise DatasetError(f"expected a number, got {raw!r}", rowno, col) from None
    if not math.isfinite(value):
        raise DatasetError(f"expected a finite number, got {raw!r}", rowno, col)
    return value


def _record_from_row(row, rowno):
    kind = row["layer"].strip()
    if kind not in ("dense", "conv2d"):
        raise DatasetError(f"layer must be dense or conv2d, got {kind!r}", rowno, "layer")
    pad = row["pad"].strip()
    if pad not in ("same", "valid"):
        raise DatasetError(f"pad must be same or valid, got {pad!r}", rowno, "pad")
    dims = {col: _int_field(row, col, rowno) for col in _INT_COLUMNS}

    if kind == "dense":
        for col in ("w", "h", "k1", "k2", "stride", "batch"):
            if dims[col] != 1:
                raise DatasetError(f"dense rows require {col}=1", rowno, col)
        layer = DenseDescriptor(dims["cin"], dims["cout"])
    else:
        try:
            layer = Conv2DDescriptor(
                w_in=dims["w"],
                h_in=dims["h"],
                c_in=dims["cin"],
                c_out=dims["cout"],
                k1=dims["k1"],
                k2=dims["k2"],
                stride=dims["stride"],
                padding=Padding(pad),
                batch=dims["batch"],
            )
        except ShapeError as exc:
            raise DatasetError(str(exc), rowno, "k1") from None

    time_ms = _float_field(row, "time_ms", rowno)
    if time_ms <= 0:
        raise DatasetError(f"time must be positive, got {row['time_ms'].strip()!r}", rowno, "time_ms")
    runs = _int_field(row, "runs", rowno)
    std = None
    if row["time_std_ms"].strip():
        std = _float_field(row, "time_std_ms", rowno)
        if std < 0:
            raise DatasetError("standard deviation must be >= 0", rowno, "time_std_ms")
    device = row["device"].strip()
    if not device:
        raise DatasetError("empty device label", rowno, "device")
    return TimingRecord(layer=layer, device=device, time_ms=time_ms, runs=runs, time_std_ms=std)


def read_dataset(stream) -> list[TimingRecord]:
    """Parse CSV text from ``stream``; an empty stream is an empty dataset.

    Row numbers in errors count the header as row 1.
    """
    reader = csv.DictReader(stream)
    if reader.fieldnames is None:
        return []
    header = [name.strip() for name in reader.fieldnames]
    missing = [col for col in COLUMNS if col not in header]
    if missing:
        raise DatasetError(f"missing column(s): {', '.join(missing)}")
    reader.fieldnames = header
    records = []
    for rowno, row in enumerate(reader, start=2):
        if None in row or any(row[col] is None for col in COLUMNS):
            raise DatasetError("wrong number of fields", rowno)
        records.append(_record_from_row(row, rowno))
    return records


def load_dataset(path) -> list[TimingRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        return read_dataset(fh)


def _row(record: TimingRecord):
    layer = record.layer
    if isinstance(layer, DenseDescriptor):
        dims = dict(w=1, h=1, cin=layer.d_in, cout=layer.d_out, k1=1, k2=1, stride=1, pad="same", batch=1)
        kind = "dense"
    else:
        dims = dict(
            w=layer.w_in,
            h=layer.h_in,
            cin=layer.c_in,
            cout=layer.c_out,
            k1=layer.k1,
            k2=layer.k2,
            stride=layer.stride,
            pad=layer.padding.value,
            batch=layer.batch,
        )
        kind = "conv2d"
    std = "" if record.time_std_ms is None else repr(float(record.time_std_ms))
    return [record.device, kind] + [str(dims[c]) for c in COLUMNS[2:11]] + [
        repr(float(record.time_ms)),
        str(record.runs),
        std,
    ]


def write_dataset(records: Iterable[TimingRecord], stream) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(COLUMNS)
    for record in records:
        writer.writerow(_row(record))


def dataset_text(records: Iterable[TimingRecord]) -> str:
    buf = io.StringIO()
    write_dataset(records, buf)
    return buf.getvalue()


def save_dataset(records: Iterable[TimingRecord], path) -> None:
    Path(path).write_text(dataset_text(records), encoding="utf-8")


# -- import adapter ---------------------------------------------------------------

_DEFAULTS = {"stride": "1", "pad": "same", "batch": "1", "runs": "1", "time_std_ms": ""}


def parse_mapping(text: str) -> dict[str, tuple[str, str]]:
    """Parse a column-mapping file.

    Each line is ``target = source`` where ``target`` is one of the dataset
    columns.  ``source`` is either a column name of the foreign file or a
    double-quoted literal, e.g. ``device = "quadro-t2000"``.  An optional
    ``* factor`` suffix scales a numeric source column, e.g.
    ``time_ms = elapsed_s * 1000``.
    """
    mapping = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        target, sep, source = line.partition("=")
        target, source = target.strip(), source.strip()
        if not sep or not source:
            raise ParseError(f"expected target = source, got {line!r}", f"line {lineno}")
        if target not in COLUMNS:
            raise ParseError(f"unknown target column {target!r}", f"line {lineno}")
        if target in mapping:
            raise ParseError(f"duplicate target column {target!r}", f"line {lineno}")
        if len(source) >= 2 and source[0] == source[-1] == '"':
            mapping[target] = ("literal", source[1:-1])
        elif "*" in source:
            column, _, factor = source.partition("*")
            try:
                float(factor)
            except ValueError:
                raise ParseError(f"bad scale factor {factor.strip()!r}", f"line {lineno}") from None
            mapping[target] = ("scaled", f"{column.strip()}*{factor.strip()}")
        else:
            mapping[target] = ("column", source)
    return mapping


def import_dataset(path, mapping_path) -> list[TimingRecord]:
    """Load a foreign CSV by mapping its columns onto the dataset schema."""
    mapping = parse_mapping(Path(mapping_path).read_text(encoding="utf-8"))
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(COLUMNS)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        fields = [f.strip() for f in reader.fieldnames or []]
        reader.fieldnames = fields
        for rowno, row in enumerate(reader, start=2):
            values = []
            for col in COLUMNS:
                kind, source = mapping.get(col, ("literal", _DEFAULTS.get(col)))
                if source is None:
                    raise DatasetError(f"no mapping for required column {col!r}")
                if kind == "literal":
                    values.append(source)
                    continue
                name, _, factor = source.partition("*") if kind == "scaled" else (source, "", "")
                if name not in fields:
                    raise DatasetError(f"mapped source column {name!r} not found", None, col)
                raw = (row[name] or "").strip()
                if kind == "scaled":
                    try:
                        raw = repr(float(raw) * float(factor))
                    except ValueError:
                        raise DatasetError(f"expected a number, got {raw!r}", rowno, name) from None
                values.append(raw)
            writer.writerow(values)
    out.seek(0)
    return read_dataset(out)
