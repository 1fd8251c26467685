"""FLOPs and alpha-FLOPs cost models for dense and convolutional layers."""

from .alpha import (
    AlphaInput,
    AlphaParams,
    RegimeParams,
    alpha_factor,
    alpha_flops,
    gustafson_ratio,
    load_params,
    default_params,
    predicted_time,
    save_params,
)
from .bench import BenchConfig, BenchResult, KernelVariant, count_ops, run_sweep_bench, time_layer
from .calibration import FitConfig, FitResult, evaluate, fit, synthesize_dataset
from .dataset import TimingRecord, load_dataset, save_dataset
from .estimators import AlphaFlopsRegressor, LayerFeatures
from .layers import (
    Conv2DDescriptor,
    DenseDescriptor,
    GemmSpec,
    OpCount,
    Padding,
    conv_flops,
    dense_as_conv,
    dense_flops,
    format_layer,
    gemm_flops,
    inner_product_flops,
    output_shape,
    parse_layer,
)
from .sweep import SweepSpec, generate_sweep

__version__ = "0.1.0"

__all__ = [
    "AlphaInput",
    "AlphaParams",
    "RegimeParams",
    "alpha_factor",
    "alpha_flops",
    "gustafson_ratio",
    "load_params",
    "default_params",
    "predicted_time",
    "save_params",
    "Conv2DDescriptor",
    "DenseDescriptor",
    "GemmSpec",
    "OpCount",
    "Padding",
    "conv_flops",
    "dense_as_conv",
    "dense_flops",
    "format_layer",
    "gemm_flops",
    "inner_product_flops",
    "output_shape",
    "parse_layer",
    "BenchConfig",
    "BenchResult",
    "KernelVariant",
    "count_ops",
    "run_sweep_bench",
    "time_layer",
    "FitConfig",
    "FitResult",
    "evaluate",
    "fit",
    "synthesize_dataset",
    "TimingRecord",
    "load_dataset",
    "save_dataset",
    "AlphaFlopsRegressor",
    "LayerFeatures",
    "SweepSpec",
    "generate_sweep",
]
