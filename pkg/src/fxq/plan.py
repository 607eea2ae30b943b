"""Quantization plan types: which (layer, parameter kind) gets which format."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

from fxq.errors import NonQuantizableLayerError
from fxq.fixedpoint import FixedPointRepr

__all__ = ["ParamKind", "QuantizationPlan", "AccuracyLossRecord"]


class ParamKind(enum.Enum):
    """The three quantizable parameter groups of a layer."""

    WEIGHTS = "weights"
    BIASES = "biases"
    ACTIVATIONS = "activations"

    def __str__(self) -> str:
        return self.value


PlanKey = tuple[str, ParamKind]


@dataclass
class QuantizationPlan:
    """Map from (layer id, parameter kind) to a fixed-point representation."""

    entries: dict[PlanKey, FixedPointRepr] = field(default_factory=dict)

    def set(self, layer_id: str, kind: ParamKind, repr: FixedPointRepr):
        self.entries[(layer_id, kind)] = repr

    def get(self, layer_id: str, kind: ParamKind) -> FixedPointRepr | None:
        return self.entries.get((layer_id, kind))

    def __contains__(self, key: PlanKey) -> bool:
        return key in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def merged_with(self, layer_id: str, kind: ParamKind,
                    repr: FixedPointRepr) -> "QuantizationPlan":
        merged = dict(self.entries)
        merged[(layer_id, kind)] = repr
        return QuantizationPlan(merged)

    def validate(self, model) -> None:
        quantizable = set(model.quantizable_index)
        for (lid, kind) in self.entries:
            if lid not in quantizable:
                raise NonQuantizableLayerError(
                    f"plan targets non-quantizable layer '{lid}' ({kind})"
                )

    def to_records(self, model=None) -> list[dict]:
        """JSON-ready records, ordered by layer position then kind."""
        if model is not None:
            layer_pos = {lid: i for i, lid in enumerate(model.quantizable_index)}
        else:
            layer_pos = {}
        kind_pos = {ParamKind.WEIGHTS: 0, ParamKind.BIASES: 1, ParamKind.ACTIVATIONS: 2}
        keys = sorted(self.entries,
                      key=lambda k: (layer_pos.get(k[0], 0), k[0], kind_pos[k[1]]))
        return [
            {"layer": lid, "kind": kind.value,
             "bw": self.entries[(lid, kind)].bw, "f": self.entries[(lid, kind)].f}
            for (lid, kind) in keys
        ]

    @classmethod
    def from_records(cls, records: list[dict]) -> "QuantizationPlan":
        entries = {}
        for rec in records:
            key = (rec["layer"], ParamKind(rec["kind"]))
            if key in entries:
                raise ValueError(f"duplicate plan entry for {key}")
            entries[key] = FixedPointRepr(int(rec["bw"]), int(rec["f"]))
        return cls(entries)

    def save(self, path, model=None):
        Path(path).write_text(json.dumps(self.to_records(model), indent=1), "utf-8")

    @classmethod
    def load(cls, path) -> "QuantizationPlan":
        return cls.from_records(json.loads(Path(path).read_text("utf-8")))


@dataclass(frozen=True)
class AccuracyLossRecord:
    """One accuracy-loss measurement for a candidate representation."""

    layer_id: str
    kind: ParamKind
    repr: FixedPointRepr
    delta_a: float
    mode: str  # "independent" | "dependent"

    def to_json(self) -> dict:
        return {"layer": self.layer_id, "kind": self.kind.value,
                "bw": self.repr.bw, "f": self.repr.f,
                "delta_a": self.delta_a, "mode": self.mode}
