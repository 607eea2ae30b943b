"""Memory and multiplication-cost model for quantized networks.

Memory is the sum of bitwidth times element count over all planned
parameter groups.  The multiplication cost of a layer is the product of
its total weight bits and total activation bits, summed over layers; this
is a comparison proxy, not a per-MAC hardware cost.  Activation counts
refer to one example's activation tensor at the layer's quantization site.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from fxq.errors import MissingPlanEntryError
from fxq.inference import accuracy, activation_sites, layer_output_shapes
from fxq.model_ir import LabeledDataset, ModelGraph
from fxq.plan import ParamKind, QuantizationPlan

__all__ = [
    "element_counts",
    "memory_bits",
    "memory_bits_by_kind",
    "mult_cost",
    "CostReport",
    "build_report",
]


def element_counts(model: ModelGraph) -> dict:
    """Element count per (layer id, kind); activations count one example."""
    shapes = layer_output_shapes(model)
    sites = activation_sites(model)
    counts = {}
    for lid in model.quantizable_index:
        spec = model.layer(lid)
        counts[(lid, ParamKind.WEIGHTS)] = int(model.tensors[spec.weights].size)
        counts[(lid, ParamKind.BIASES)] = int(model.tensors[spec.bias].size)
        counts[(lid, ParamKind.ACTIVATIONS)] = int(np.prod(shapes[sites[lid]]))
    return counts


def _require_entry(plan: QuantizationPlan, lid: str, kind: ParamKind):
    repr_ = plan.get(lid, kind)
    if repr_ is None:
        raise MissingPlanEntryError(f"plan has no entry for ({lid}, {kind})")
    return repr_


def memory_bits_by_kind(model: ModelGraph, plan: QuantizationPlan,
                        kinds=tuple(ParamKind)) -> dict[ParamKind, int]:
    counts = element_counts(model)
    out = {}
    for kind in kinds:
        total = 0
        for lid in model.quantizable_index:
            repr_ = _require_entry(plan, lid, kind)
            total += repr_.bw * counts[(lid, kind)]
        out[kind] = total
    return out


def memory_bits(model: ModelGraph, plan: QuantizationPlan,
                kinds=tuple(ParamKind)) -> int:
    """Total storage bits of the planned parameter groups."""
    return sum(memory_bits_by_kind(model, plan, kinds).values())


def mult_cost(model: ModelGraph, plan: QuantizationPlan) -> int:
    """Sum over layers of (weight bits) * (activation bits)."""
    counts = element_counts(model)
    total = 0
    for lid in model.quantizable_index:
        rw = _require_entry(plan, lid, ParamKind.WEIGHTS)
        ra = _require_entry(plan, lid, ParamKind.ACTIVATIONS)
        total += (rw.bw * counts[(lid, ParamKind.WEIGHTS)]) \
            * (ra.bw * counts[(lid, ParamKind.ACTIVATIONS)])
    return total


@dataclass
class CostReport:
    """Costs of a plan next to a reference plan, with reduction ratios."""

    memory_bits: int
    memory_by_kind: dict[ParamKind, int]
    mult_cost: int
    delta_a: float
    reference_memory_bits: int
    reference_mult_cost: int
    reference_delta_a: float

    @property
    def memory_ratio(self) -> float:
        return self.memory_bits / self.reference_memory_bits

    @property
    def mult_cost_ratio(self) -> float:
        return self.mult_cost / self.reference_mult_cost

    def to_json(self) -> dict:
        return {
            "memory_bits": {
                "total": self.memory_bits,
                **{k.value: v for k, v in self.memory_by_kind.items()},
            },
            "mult_cost": self.mult_cost,
            "delta_a": self.delta_a,
            "reference": {
                "memory_bits": self.reference_memory_bits,
                "mult_cost": self.reference_mult_cost,
                "delta_a": self.reference_delta_a,
            },
            "ratios": {
                "memory": self.memory_ratio,
                "mult_cost": self.mult_cost_ratio,
            },
        }

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_json(), indent=1), "utf-8")


def build_report(model: ModelGraph, dataset: LabeledDataset,
                 plan: QuantizationPlan, reference_plan: QuantizationPlan,
                 a0: float | None = None,
                 batch_size: int | None = None) -> CostReport:
    """Assemble costs and accuracy losses of a plan against a reference plan."""
    if a0 is None:
        a0 = accuracy(model, dataset, None, batch_size=batch_size)
        if a0 == 0.0:
            raise ValueError("full-precision accuracy is zero; loss ratios are undefined")
    a_plan = accuracy(model, dataset, plan, batch_size=batch_size)
    a_ref = accuracy(model, dataset, reference_plan, batch_size=batch_size)
    return CostReport(
        memory_bits=memory_bits(model, plan),
        memory_by_kind=memory_bits_by_kind(model, plan),
        mult_cost=mult_cost(model, plan),
        delta_a=(a0 - a_plan) / a0,
        reference_memory_bits=memory_bits(model, reference_plan),
        reference_mult_cost=mult_cost(model, reference_plan),
        reference_delta_a=(a0 - a_ref) / a0,
    )


def bitwidth_table(model: ModelGraph, plan: QuantizationPlan) -> str:
    """CSV of per-layer bitwidths, one row per quantizable layer."""
    lines = ["layer,weights_bw,biases_bw,activations_bw"]
    for lid in model.quantizable_index:
        cells = [lid]
        for kind in ParamKind:
            repr_ = plan.get(lid, kind)
            cells.append(str(repr_.bw) if repr_ else "")
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
