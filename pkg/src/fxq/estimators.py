"""Scikit-learn style wrappers around the quantization pipeline.

``fit(model, dataset)`` calibrates activations and searches a plan;
``transform(model)`` returns a new model with the plan applied.  Both
estimators follow the sklearn parameter conventions, so ``get_params``,
``set_params``, and ``clone`` work as usual.
"""

from __future__ import annotations

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from fxq.inference import accuracy, calibrate_activations
from fxq.model_ir import LabeledDataset, ModelGraph
from fxq.plan import ParamKind
from fxq.quantizer import apply_plan, full_precision_accuracy
from fxq.search import (
    PARAM_ORDER_AWB,
    PARAM_ORDER_WBA,
    AllocationScheme,
    SearchConfig,
    baseline_fixed_bitwidth,
    final_method,
    opt_search,
)

__all__ = ["MixedPrecisionQuantizer", "UniformQuantizer"]


def _check_inputs(model, dataset):
    if not isinstance(model, ModelGraph):
        raise TypeError(f"expected a ModelGraph, got {type(model).__name__}")
    if not isinstance(dataset, LabeledDataset):
        raise TypeError(f"expected a LabeledDataset, got {type(dataset).__name__}")


class MixedPrecisionQuantizer(BaseEstimator, TransformerMixin):
    """Searches minimal per-layer bitwidths under an accuracy-loss budget.

    With ``mode="final"`` the weights ramp up to half the budget, biases get
    a constant half, and activations ramp from half to the full budget; any
    other mode runs the raw search with one scheme for all parameter kinds.

    Parameters
    ----------
    epsilon : acceptable relative accuracy loss of the quantized network.
    bw0 : initial bitwidth the search contracts from.
    delta : loss-difference threshold when arbitrating search phases.
    mode : "final", "dependent", or "independent".
    scheme : budget allocation scheme for non-final modes.
    order : parameter processing order, "wba" or "awb".
    layer_order : "forward" or "reverse".
    calib_size : examples used for activation calibration (None = all).
    batch_size : evaluation batch size (None = single batch).
    """

    def __init__(self, epsilon=0.01, bw0=12, delta=0.001, mode="final",
                 scheme="linear", order="wba", layer_order="forward",
                 calib_size=None, batch_size=None):
        self.epsilon = epsilon
        self.bw0 = bw0
        self.delta = delta
        self.mode = mode
        self.scheme = scheme
        self.order = order
        self.layer_order = layer_order
        self.calib_size = calib_size
        self.batch_size = batch_size

    def fit(self, X, y=None):
        """Search a plan for model ``X`` against calibration dataset ``y``."""
        if y is None:
            raise ValueError("fit requires the calibration dataset as y")
        _check_inputs(X, y)
        if self.mode not in ("final", "dependent", "independent"):
            raise ValueError(f"unknown mode {self.mode!r}")
        profile = calibrate_activations(X, y, limit=self.calib_size,
                                        batch_size=self.batch_size)
        if self.mode == "final":
            report = final_method(X, y, profile, epsilon=self.epsilon,
                                  bw0=self.bw0, delta=self.delta,
                                  batch_size=self.batch_size)
        else:
            scheme = AllocationScheme(self.scheme)
            config = SearchConfig(
                bw0=self.bw0,
                independent=(self.mode == "independent"),
                delta=self.delta,
                param_order=PARAM_ORDER_AWB if self.order == "awb" else PARAM_ORDER_WBA,
                layer_order=self.layer_order,
                schemes={k: scheme for k in ParamKind},
                terminal_eps={k: self.epsilon for k in ParamKind},
                batch_size=self.batch_size,
            )
            report = opt_search(X, y, profile, config)
        self.profile_ = profile
        self.report_ = report
        self.plan_ = report.plan
        self.a0_ = report.a0
        return self

    def transform(self, X):
        """Return a copy of model ``X`` with the fitted plan applied."""
        check_is_fitted(self, "plan_")
        if not isinstance(X, ModelGraph):
            raise TypeError(f"expected a ModelGraph, got {type(X).__name__}")
        return apply_plan(X, self.plan_)

    def score(self, X, y):
        """Accuracy of model ``X`` on dataset ``y`` under the fitted plan."""
        check_is_fitted(self, "plan_")
        _check_inputs(X, y)
        return accuracy(X, y, self.plan_, batch_size=self.batch_size)


class UniformQuantizer(BaseEstimator, TransformerMixin):
    """Uniform-bitwidth baseline with per-tensor clip-free offsets."""

    def __init__(self, bw=8, calib_size=None, batch_size=None):
        self.bw = bw
        self.calib_size = calib_size
        self.batch_size = batch_size

    def fit(self, X, y=None):
        if y is None:
            raise ValueError("fit requires the calibration dataset as y")
        _check_inputs(X, y)
        profile = calibrate_activations(X, y, limit=self.calib_size,
                                        batch_size=self.batch_size)
        self.profile_ = profile
        self.plan_ = baseline_fixed_bitwidth(X, profile, self.bw)
        self.a0_ = full_precision_accuracy(X, y, batch_size=self.batch_size)
        return self

    def transform(self, X):
        check_is_fitted(self, "plan_")
        if not isinstance(X, ModelGraph):
            raise TypeError(f"expected a ModelGraph, got {type(X).__name__}")
        return apply_plan(X, self.plan_)

    def score(self, X, y):
        check_is_fitted(self, "plan_")
        _check_inputs(X, y)
        return accuracy(X, y, self.plan_, batch_size=self.batch_size)
