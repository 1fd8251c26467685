import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from alphaflops.bench import (
    MEMCAP_ENV,
    BenchConfig,
    BenchResult,
    KernelVariant,
    count_ops,
    estimate_bytes,
    expected_count,
    run_sweep_bench,
    time_layer,
)
from alphaflops.dataset import COLUMNS, load_dataset
from alphaflops.errors import MemoryCapError, SizeGuardError
from alphaflops.kernels import CountingOps, NumpyOps, conv_direct, conv_im2col, dot, gemm, matvec_bias
from alphaflops.layers import (
    Conv2DDescriptor,
    DenseDescriptor,
    GemmSpec,
    OpCount,
    Padding,
    conv_flops,
    dense_as_conv,
    dense_flops,
    gemm_flops,
    inner_product_flops,
    output_shape,
)

FAST = BenchConfig(warmup_runs=0, timed_runs=2)

def _valid_small_convs():
    def build(w, h, cin, cout, k1, k2, stride, pad, batch):
        if pad is Padding.VALID:
            w, h = max(w, k1), max(h, k2)
        return Conv2DDescriptor(w, h, cin, cout, k1, k2, stride=stride, padding=pad, batch=batch)

    return st.builds(
        build,
        st.integers(1, 9),
        st.integers(1, 9),
        st.integers(1, 6),
        st.integers(1, 6),
        st.integers(1, 5),
        st.integers(1, 5),
        st.integers(1, 3),
        st.sampled_from(list(Padding)),
        st.integers(1, 3),
    )


def reference_conv(x, weight, desc):
    """Straightforward loop convolution used to check kernel numerics."""
    from alphaflops.kernels import pad_input

    w_out, h_out = output_shape(desc)
    xp = pad_input(x.astype(np.float64), desc)
    out = np.zeros((desc.batch, desc.c_out, h_out, w_out))
    for r in range(h_out):
        for c in range(w_out):
            patch = xp[:, :, r * desc.stride : r * desc.stride + desc.k2, c * desc.stride : c * desc.stride + desc.k1]
            out[:, :, r, c] = np.einsum("bijk,oijk->bo", patch, weight.astype(np.float64))
    return out


# -- instrumented counts ---------------------------------------------------------


def test_dot_count():
    ops = CountingOps()
    x = np.arange(7, dtype=np.float64)
    assert dot(x, x, ops) == float((x * x).sum())
    assert ops.count.total() == inner_product_flops(7) == 13


def test_gemm_count_with_scalars():
    rng = np.random.default_rng(0)
    a, b, c = rng.standard_normal((2, 3)), rng.standard_normal((3, 2)), rng.standard_normal((2, 2))
    ops = CountingOps()
    out = gemm(a, b, c, ops, alpha=2.0, beta=0.5)
    np.testing.assert_allclose(out, 2.0 * a @ b + 0.5 * c)
    assert ops.count.total() == gemm_flops(GemmSpec(2, 3, 2)) == 36


def test_gemm_count_plain():
    ops = CountingOps()
    gemm(np.ones((3, 4)), np.ones((4, 5)), None, ops)
    assert ops.count == OpCount(60, 60)


def test_matvec_bias_count_and_value():
    rng = np.random.default_rng(1)
    w, x, bias = rng.standard_normal((4, 10)), rng.standard_normal(10), rng.standard_normal(4)
    ops = CountingOps()
    np.testing.assert_allclose(matvec_bias(w, x, bias, ops), w @ x + bias)
    assert ops.count.total() == 84


def test_count_ops_examples():
    assert count_ops(DenseDescriptor(10, 4)).total() == 84
    layer = Conv2DDescriptor(6, 6, 2, 3, 3, 3)
    assert count_ops(layer).total() == 3888
    assert count_ops(layer, KernelVariant.IM2COL_GEMM).total() == 3888


@pytest.mark.parametrize("d", [1, 3, 17, 64])
def test_unit_conv_counts_like_bias_free_dense(d):
    dense = DenseDescriptor(d, d, has_bias=False)
    assert count_ops(dense) == count_ops(dense_as_conv(dense))


@given(_valid_small_convs())
def test_direct_count_matches_formula(layer):
    assert count_ops(layer).total() == conv_flops(layer)


@given(_valid_small_convs())
def test_im2col_count_is_lowered_gemm(layer):
    w_out, h_out = output_shape(layer)
    expected = 2 * w_out * h_out * layer.k1 * layer.k2 * layer.c_in * layer.c_out * layer.batch
    assert count_ops(layer, KernelVariant.IM2COL_GEMM).total() == expected == conv_flops(layer)


@given(st.integers(1, 40), st.integers(1, 40), st.booleans())
def test_dense_count_matches_formula(d_in, d_out, bias):
    d = DenseDescriptor(d_in, d_out, has_bias=bias)
    expected = dense_flops(d, exact=True) if bias else dense_flops(d)
    assert count_ops(d).total() == expected


def test_size_guard():
    with pytest.raises(SizeGuardError):
        count_ops(Conv2DDescriptor(64, 64, 64, 64, 3, 3), max_flops=10**6)


# -- kernel numerics ---------------------------------------------------------------


@given(_valid_small_convs(), st.integers(0, 100))
def test_kernels_match_reference(layer, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((layer.batch, layer.c_in, layer.h_in, layer.w_in))
    w = rng.standard_normal((layer.c_out, layer.c_in, layer.k2, layer.k1))
    want = reference_conv(x, w, layer)
    np.testing.assert_allclose(conv_direct(x, w, layer, NumpyOps()), want, rtol=1e-10, atol=1e-10)
    np.testing.assert_allclose(conv_im2col(x, w, layer, NumpyOps()), want, rtol=1e-10, atol=1e-10)


def test_direct_blocking_over_many_rows():
    # enough output rows to need several blocks
    layer = Conv2DDescriptor(128, 300, 1, 4, 3, 3)
    rng = np.random.default_rng(2)
    x = rng.standard_normal((1, 1, 300, 128))
    w = rng.standard_normal((4, 1, 3, 3))
    np.testing.assert_allclose(conv_direct(x, w, layer, NumpyOps()), reference_conv(x, w, layer), rtol=1e-10, atol=1e-10)


# -- timing ----------------------------------------------------------------------------


def test_time_layer_is_deterministic_in_counts():
    layer = Conv2DDescriptor(16, 16, 4, 4, 3, 3)
    a, b = time_layer(layer, FAST), time_layer(layer, FAST)
    assert a.op_count == b.op_count
    assert a.checksum == b.checksum
    assert a.median_ms > 0


def test_variants_agree_on_checksum():
    layer = Conv2DDescriptor(20, 12, 8, 6, 3, 5)
    naive = time_layer(layer, FAST)
    lowered = time_layer(layer, BenchConfig(warmup_runs=0, timed_runs=2, kernel_variant=KernelVariant.IM2COL_GEMM))
    assert abs(naive.checksum - lowered.checksum) <= 1e-4 * abs(naive.checksum)


def test_bench_result_rejects_wrong_count():
    layer = Conv2DDescriptor(2, 2, 1, 1, 1, 1)
    with pytest.raises(AssertionError):
        BenchResult(layer, OpCount(1, 1), 1.0, 1.0, 0.0)


def test_expected_count_variants():
    layer = Conv2DDescriptor(5, 5, 2, 2, 3, 3, batch=2)
    assert expected_count(layer) == expected_count(layer, KernelVariant.IM2COL_GEMM) == conv_flops(layer)


def test_bench_config_validation():
    with pytest.raises(ValueError):
        BenchConfig(timed_runs=0)
    with pytest.raises(ValueError):
        BenchConfig(warmup_runs=-1)


def test_memory_cap(monkeypatch):
    layer = Conv2DDescriptor(64, 64, 64, 64, 3, 3)
    assert estimate_bytes(layer) > 1024 * 1024
    with pytest.raises(MemoryCapError):
        time_layer(layer, BenchConfig(warmup_runs=0, timed_runs=1, memcap_mb=1))
    monkeypatch.setenv(MEMCAP_ENV, "1")
    with pytest.raises(MemoryCapError):
        time_layer(layer, BenchConfig(warmup_runs=0, timed_runs=1))


def test_empty_sweep_writes_header_only(tmp_path):
    path = tmp_path / "empty.csv"
    records, skipped = run_sweep_bench([], FAST, path)
    assert records == [] and skipped == []
    assert path.read_text() == ",".join(COLUMNS) + "\n"


def test_sweep_bench_writes_loadable_rows(tmp_path):
    layers = [
        Conv2DDescriptor(1, 1, 50, 50, 1, 1),
        Conv2DDescriptor(1, 2, 25, 50, 1, 1),
        Conv2DDescriptor(2, 2, 25, 25, 1, 1),
        Conv2DDescriptor(4, 4, 12, 13, 1, 1),
        Conv2DDescriptor(64, 64, 64, 64, 3, 3),
    ]
    path = tmp_path / "b.csv"
    records, skipped = run_sweep_bench(layers, BenchConfig(warmup_runs=0, timed_runs=1, memcap_mb=1), path)
    assert skipped == [layers[-1]]
    loaded = load_dataset(path)
    assert loaded == records
    assert [r.layer for r in loaded] == layers[:4]
    assert all(r.runs == 1 and r.device == "cpu-singlethread" for r in loaded)


def test_equal_flops_pair_is_flat():
    # larger kernel, smaller surface, same FLOPs
    a = Conv2DDescriptor(312, 312, 16, 16, 1, 1)
    b = Conv2DDescriptor(104, 104, 16, 16, 3, 3)
    assert conv_flops(a) == conv_flops(b)
    config = BenchConfig(warmup_runs=1, timed_runs=5)
    ta, tb = time_layer(a, config).median_ms, time_layer(b, config).median_ms
    assert abs(ta - tb) / max(ta, tb) < 0.30
