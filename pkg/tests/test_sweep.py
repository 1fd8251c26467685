import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from alphaflops.errors import SweepError
from alphaflops.layers import Conv2DDescriptor, conv_flops
from alphaflops.sweep import PRESETS, SweepSpec, generate_sweep, plan_sweep


def test_k_vs_channels_sweep():
    spec = SweepSpec(
        target_flops=2025 * 10**6,
        varied_axis="k",
        compensating_axis="cin_cout",
        axis_values=range(1, 31),
        fixed_dims={"w_in": 10, "h_in": 10},
    )
    layers = generate_sweep(spec)
    assert len(layers) == 30
    assert [l.k1 for l in layers] == list(range(1, 31))
    for layer in layers:
        assert abs(conv_flops(layer) - 2025e6) / 2025e6 <= 0.05
        assert abs(layer.c_in - layer.c_out) <= max(2, 0.1 * layer.c_in)


def test_equal_flops_rows_reproduced():
    layers = generate_sweep(PRESETS["dense-vs-conv"]())
    assert layers == [
        Conv2DDescriptor(1, 1, 12800, 12800, 1, 1),
        Conv2DDescriptor(1, 2, 6400, 12800, 1, 1),
        Conv2DDescriptor(2, 2, 6400, 6400, 1, 1),
        Conv2DDescriptor(4, 4, 3200, 3200, 1, 1),
    ]


def test_desk_scale_rows_have_equal_flops():
    layers = generate_sweep(PRESETS["dense-vs-conv-desk"]())
    assert len(layers) == 4
    assert len({conv_flops(l) for l in layers}) == 1


def test_no_compensation_is_an_error():
    spec = SweepSpec(2025 * 10**6, "k", "none", range(1, 4), {"w_in": 10, "h_in": 10})
    with pytest.raises(SweepError, match="constant"):
        plan_sweep(spec)


def test_overlapping_axes_rejected():
    with pytest.raises(SweepError):
        SweepSpec(10**6, "wh", "wh", (1, 2), {"c_in": 4, "c_out": 4, "k1": 1, "k2": 1})


def test_unknown_dimension_rejected():
    with pytest.raises(SweepError):
        SweepSpec(10**6, "k", "cin_cout", (1, 2), {"width": 4})


def test_unreachable_points_are_dropped(caplog):
    # a 1x1 input cannot absorb the FLOPs of K=1 at this target with 1 channel pair
    spec = SweepSpec(100, "wh", "cin_cout", (1, 50), {"k1": 1, "k2": 1})
    points = plan_sweep(spec)
    assert points[0].kept
    assert not points[1].kept
    assert "dropping sweep point 1" in caplog.text


def test_all_points_unreachable():
    spec = SweepSpec(100, "wh", "cin_cout", (50, 60), {"k1": 1, "k2": 1})
    with pytest.raises(SweepError, match="every"):
        plan_sweep(spec)


def test_missing_dimension():
    with pytest.raises(SweepError, match="neither"):
        plan_sweep(SweepSpec(10**6, "k", "cin_cout", (1, 3), {"w_in": 10}))


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_spread(name):
    layers = generate_sweep(PRESETS[name]())
    flops = [conv_flops(l) for l in layers]
    assert max(flops) / min(flops) <= 1.10


@settings(max_examples=15, deadline=None)
@given(
    st.integers(10**6, 10**9),
    st.sampled_from(["k", "batch"]),
    st.sampled_from(["cin_cout", "wh"]),
    st.lists(st.integers(1, 12), min_size=1, max_size=5),
)
def test_emitted_sweeps_stay_within_tolerance(target, vary, compensate, values):
    fixed = {"w_in": 16, "h_in": 16, "c_in": 16, "c_out": 16, "k1": 3, "k2": 3, "batch": 1}
    spec = SweepSpec(target, vary, compensate, values, {k: v for k, v in fixed.items() if k in _fixed_names(vary, compensate)})
    try:
        points = plan_sweep(spec)
    except SweepError:
        return
    kept = [p for p in points if p.kept]
    flops = [conv_flops(p.layer) for p in kept]
    assert all(abs(f - target) / target <= 0.05 for f in flops)
    assert max(flops) / min(flops) <= 1.10


def _fixed_names(vary, compensate):
    varied = {"k": {"k1", "k2"}, "batch": {"batch"}}[vary]
    comp = {"cin_cout": {"c_in", "c_out"}, "wh": {"w_in", "h_in"}}[compensate]
    return {"w_in", "h_in", "c_in", "c_out", "k1", "k2", "batch"} - varied - comp
