"""Post-training quantization pipeline and accuracy-loss evaluation.

The relative accuracy loss of a quantized network is
``delta_a = (a0 - a_q) / a0`` against the full-precision accuracy ``a0``.
It may be negative (quantization occasionally helps) and is compared to
budgets as-is.

Two evaluation modes exist for a single target parameter: independent
(only the target is quantized, everything else stays full precision) and
dependent (all previously chosen plan entries are applied first, then the
target).
"""

from __future__ import annotations

from fxq.errors import NonQuantizableLayerError
from fxq.fixedpoint import FixedPointRepr, quantize_tensor
from fxq.inference import accuracy
from fxq.model_ir import LabeledDataset, ModelGraph
from fxq.plan import AccuracyLossRecord, ParamKind, QuantizationPlan

__all__ = [
    "ParamKind",
    "QuantizationPlan",
    "AccuracyLossRecord",
    "eval_acc_loss",
    "apply_plan",
    "network_acc_loss",
    "full_precision_accuracy",
]


def full_precision_accuracy(model: ModelGraph, dataset: LabeledDataset,
                            batch_size: int | None = None) -> float:
    """Reference accuracy a0; evaluating losses against a0 = 0 is rejected."""
    a0 = accuracy(model, dataset, None, batch_size=batch_size)
    if a0 == 0.0:
        raise ValueError("full-precision accuracy is zero; loss ratios are undefined")
    return a0


def _check_target(model: ModelGraph, layer_id: str, kind: ParamKind):
    if layer_id not in model.quantizable_index:
        raise NonQuantizableLayerError(
            f"target layer '{layer_id}' ({kind}) is not quantizable")


def eval_acc_loss(model: ModelGraph, dataset: LabeledDataset,
                  target: tuple[str, ParamKind], repr: FixedPointRepr,
                  independent: bool, plan: QuantizationPlan | None = None,
                  a0: float | None = None,
                  batch_size: int | None = None) -> AccuracyLossRecord:
    """Accuracy loss of quantizing one target parameter group.

    Independent mode ignores ``plan`` entirely; dependent mode applies every
    plan entry first and then the target representation on top.
    """
    layer_id, kind = target
    _check_target(model, layer_id, kind)
    if a0 is None:
        a0 = full_precision_accuracy(model, dataset, batch_size)
    elif a0 == 0.0:
        raise ValueError("a0 must be nonzero")
    if independent:
        effective = QuantizationPlan({(layer_id, kind): repr})
    else:
        effective = (plan or QuantizationPlan()).merged_with(layer_id, kind, repr)
    a_q = accuracy(model, dataset, effective, batch_size=batch_size)
    return AccuracyLossRecord(
        layer_id=layer_id, kind=kind, repr=repr,
        delta_a=(a0 - a_q) / a0,
        mode="independent" if independent else "dependent",
    )


def apply_plan(model: ModelGraph, plan: QuantizationPlan) -> ModelGraph:
    """New model with quantized weight/bias tensors and armed activation hooks.

    The input model is left untouched; unplanned tensors are shared.
    """
    plan.validate(model)
    out = model.copy()
    for (lid, kind), repr_ in plan.entries.items():
        spec = out.layer(lid)
        if kind is ParamKind.WEIGHTS:
            out.tensors[spec.weights] = quantize_tensor(out.tensors[spec.weights], repr_)
        elif kind is ParamKind.BIASES:
            out.tensors[spec.bias] = quantize_tensor(out.tensors[spec.bias], repr_)
        else:
            out.activation_plan[lid] = repr_
    return out


def network_acc_loss(model: ModelGraph, dataset: LabeledDataset,
                     plan: QuantizationPlan, a0: float | None = None,
                     batch_size: int | None = None) -> float:
    """Accuracy loss of the fully applied plan."""
    if a0 is None:
        a0 = full_precision_accuracy(model, dataset, batch_size)
    a_q = accuracy(model, dataset, plan, batch_size=batch_size)
    return (a0 - a_q) / a0
