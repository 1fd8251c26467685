import pytest

from alphaflops.alpha import default_params
from alphaflops.calibration import synthesize_dataset, synthetic_layouts
from alphaflops.dataset import TimingRecord
from alphaflops.layers import Conv2DDescriptor
from alphaflops.report import format_tsv, group_rows, render_svg, rows_for_layers, rows_for_records, summary

PARAMS = default_params()


def test_noiseless_rows_have_zero_error():
    records = synthesize_dataset(PARAMS, synthetic_layouts(12))
    rows = rows_for_records(records, PARAMS)
    assert all(r.ape == pytest.approx(0.0, abs=1e-12) for r in rows)
    assert all(r.alpha_flops == pytest.approx(r.flops * r.alpha, rel=1e-12) for r in rows)


def test_summary():
    layer = Conv2DDescriptor(1, 1, 12800, 12800, 1, 1)
    rows = rows_for_records([TimingRecord(layer, "d", 6.154 * 1.1), TimingRecord(layer, "d", 6.154 / 2)], PARAMS)
    mape, max_ape = summary(rows)
    assert max_ape == pytest.approx(1.0)
    assert mape == pytest.approx((0.1 / 1.1 + 1.0) / 2)


def test_layer_rows_have_no_measurements():
    rows = rows_for_layers([Conv2DDescriptor(4, 4, 8, 8, 3, 3)], PARAMS)
    assert rows[0].measured_ms is None and rows[0].ape is None
    assert summary(rows) == (None, None)
    text = format_tsv(rows)
    assert "# mape" not in text
    assert text.splitlines()[1].endswith("\t\t")


def test_tsv_layout():
    records = synthesize_dataset(PARAMS, synthetic_layouts(4))
    text = format_tsv(rows_for_records(records, PARAMS))
    lines = text.splitlines()
    assert lines[0] == "layer\tflops\talpha\talpha_flops\tpredicted_ms\tmeasured_ms\tape"
    assert len(lines) == 1 + 4 + 2
    assert lines[-2].startswith("# mape\t") and lines[-1].startswith("# max_ape\t")
    assert all(len(line.split("\t")) == 7 for line in lines[1:5])


def test_group_rows_by_flops():
    layers = [
        Conv2DDescriptor(1, 1, 100, 100, 1, 1),
        Conv2DDescriptor(2, 2, 50, 50, 1, 1),
        Conv2DDescriptor(3, 3, 5, 5, 3, 3),
    ]
    groups = group_rows(rows_for_layers(layers, PARAMS))
    assert [len(g) for g in groups.values()] == [2, 1]


def test_svg_is_deterministic_and_carries_data():
    records = synthesize_dataset(PARAMS, synthetic_layouts(4))
    rows = rows_for_records(records, PARAMS)
    svg = render_svg(rows, "sweep <1>")
    assert svg == render_svg(rows, "sweep <1>")
    assert svg.startswith("<?xml")
    assert "<!-- data" in svg and "index\tlayer\tmeasured_ms\tpredicted_ms" in svg
    assert 'stroke-dasharray="6,4"' in svg
    assert svg.count("<polyline") == 2
    assert "sweep &lt;1&gt;" in svg


def test_svg_single_point():
    rows = rows_for_layers([Conv2DDescriptor(4, 4, 8, 8, 3, 3)], PARAMS)
    assert svg_ok(render_svg(rows, "one"))


def svg_ok(svg):
    return svg.rstrip().endswith("</svg>") and svg.count("<polyline") == 1
