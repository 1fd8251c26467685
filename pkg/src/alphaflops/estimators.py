"""scikit-learn compatible wrappers.

``LayerFeatures`` turns layer descriptions into numeric columns and
``AlphaFlopsRegressor`` fits alpha parameters to measured times, so both
can sit inside a ``Pipeline`` or be cross-validated like any estimator.

Layers can be given as descriptor objects, descriptor text
(``"conv2d w=4 h=4 cin=8 cout=8 k1=3 k2=3"``), or rows of a numeric array
with columns ``w, h, cin, cout, k1, k2`` and optionally ``stride, batch``
(same padding).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_consistent_length, check_is_fitted, column_or_1d

from .alpha import layer_alpha, default_params
from .calibration import FitConfig, fit, predict_ms
from .dataset import TimingRecord
from .layers import Conv2DDescriptor, DenseDescriptor, kernel_size, layer_flops, parse_layer, surface

__all__ = ["check_layers", "LayerFeatures", "AlphaFlopsRegressor"]


def check_layers(X) -> list:
    """Validate ``X`` and return a list of layer descriptors."""
    if isinstance(X, str):
        raise ValueError("expected a sequence of layers, got a single string")
    if isinstance(X, np.ndarray) and X.dtype.kind in "iuf":
        arr = check_array(X, dtype=None, ensure_min_samples=1)
        if arr.shape[1] not in (6, 7, 8):
            raise ValueError(f"numeric layer arrays need 6 to 8 columns, got {arr.shape[1]}")
        if not np.all(arr == np.round(arr)):
            raise ValueError("layer dimensions must be integers")
        layers = []
        for row in arr.astype(np.int64):
            w, h, cin, cout, k1, k2 = (int(v) for v in row[:6])
            stride = int(row[6]) if arr.shape[1] > 6 else 1
            batch = int(row[7]) if arr.shape[1] > 7 else 1
            layers.append(Conv2DDescriptor(w, h, cin, cout, k1, k2, stride=stride, batch=batch))
        return layers
    layers = []
    for item in X:
        if isinstance(item, (DenseDescriptor, Conv2DDescriptor)):
            layers.append(item)
        elif isinstance(item, str):
            layers.append(parse_layer(item))
        else:
            raise ValueError(f"cannot interpret {item!r} as a layer")
    if not layers:
        raise ValueError("at least one layer is required")
    return layers


class LayerFeatures(TransformerMixin, BaseEstimator):
    """Columns ``flops, surface, kernel_k`` plus ``alpha, alpha_flops`` when ``params`` is set."""

    def __init__(self, params=None):
        self.params = params

    def fit(self, X, y=None):
        check_layers(X)
        return self

    def transform(self, X):
        layers = check_layers(X)
        cols = [
            [float(layer_flops(l)) for l in layers],
            [float(surface(l)) for l in layers],
            [float(kernel_size(l)) for l in layers],
        ]
        if self.params is not None:
            alpha = [layer_alpha(l, self.params) for l in layers]
            cols.append(alpha)
            cols.append([f * a for f, a in zip(cols[0], alpha)])
        return np.column_stack(cols)

    def get_feature_names_out(self, input_features=None):
        names = ["flops", "surface", "kernel_k"]
        if self.params is not None:
            names += ["alpha", "alpha_flops"]
        return np.array(names, dtype=object)


class AlphaFlopsRegressor(RegressorMixin, BaseEstimator):
    """Predict layer execution time (ms) from alpha-FLOPs.

    Parameters mirror :class:`~alphaflops.calibration.FitConfig`; ``fixed``
    pins parameters by name (``{"gamma": 1.0}``) and ``template`` supplies the
    regime thresholds (defaults to the two-regime K=1 / K>1 table).
    """

    def __init__(
        self,
        fixed=None,
        template=None,
        refine_evals=500,
        trim=False,
        workers=1,
        beta_grid=(1e-4, 1.0, 25),
        gamma_grid=(0.05, 1.0, 20),
        s_k_grid=(1.0, 64.0, 13),
    ):
        self.fixed = fixed
        self.template = template
        self.refine_evals = refine_evals
        self.trim = trim
        self.workers = workers
        self.beta_grid = beta_grid
        self.gamma_grid = gamma_grid
        self.s_k_grid = s_k_grid

    def _config(self):
        return FitConfig(
            beta_grid=tuple(self.beta_grid),
            gamma_grid=tuple(self.gamma_grid),
            s_k_grid=tuple(self.s_k_grid),
            refine_evals=self.refine_evals,
            workers=self.workers,
            trim=self.trim,
            template=self.template if self.template is not None else default_params(),
        )

    def fit(self, X, y):
        layers = check_layers(X)
        y = column_or_1d(np.asarray(y, dtype=float))
        check_consistent_length(layers, y)
        if np.any(~np.isfinite(y)) or np.any(y <= 0):
            raise ValueError("target times must be positive and finite")
        records = [TimingRecord(layer, "estimator", float(t)) for layer, t in zip(layers, y)]
        result = fit(records, self.fixed, self._config())
        self.fit_result_ = result
        self.params_ = result.params
        return self

    def predict(self, X):
        check_is_fitted(self, "params_")
        layers = check_layers(X)
        return predict_ms([TimingRecord(layer, "estimator", 1.0) for layer in layers], self.params_)
