"""Greedy per-layer bitwidth search under an accuracy-loss budget.

For each parameter group the search starts at a clip-free offset for a
generous initial bitwidth, walks diagonally (bw and f together, which
preserves the most significant bit), then reduces bw alone, then inspects
the 3x3 neighborhood, and finally arbitrates between the diagonal and
local results with a small threshold ``delta`` on their loss difference.

Budgets are allocated across layers by one of five schemes (constant,
log, linear, quadratic, exponential), normalized so the last layer gets
the configured terminal budget.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from fxq.errors import BudgetInfeasibleError, SearchExhaustedError
from fxq.fixedpoint import FixedPointRepr, no_clip_offset
from fxq.inference import ActivationProfile, activation_sites, descendants, run_layers
from fxq.model_ir import LabeledDataset, ModelGraph
from fxq.plan import AccuracyLossRecord, ParamKind, QuantizationPlan
from fxq.quantizer import full_precision_accuracy

__all__ = [
    "AllocationScheme",
    "allocate_budget",
    "build_budget",
    "SearchConfig",
    "SearchReport",
    "opt_search",
    "brute_force_grid",
    "baseline_fixed_bitwidth",
    "final_method",
]

DEFAULT_BW0 = 12
DEFAULT_DELTA = 0.001
PARAM_ORDER_WBA = (ParamKind.WEIGHTS, ParamKind.BIASES, ParamKind.ACTIVATIONS)
PARAM_ORDER_AWB = (ParamKind.ACTIVATIONS, ParamKind.WEIGHTS, ParamKind.BIASES)


class AllocationScheme(enum.Enum):
    """Budget growth profile across layers."""

    CONSTANT = "constant"
    LOG = "log"
    LINEAR = "linear"
    QUADRATIC = "quadratic"
    EXPONENTIAL = "exponential"

    def factor(self, x: int) -> float:
        if self is AllocationScheme.CONSTANT:
            return 1.0
        if self is AllocationScheme.LOG:
            # ln(x) would zero out the first layer's budget; shift by one
            return math.log(x + 1)
        if self is AllocationScheme.LINEAR:
            return float(x)
        if self is AllocationScheme.QUADRATIC:
            return float(x) ** 2
        return 2.0 ** x


def allocate_budget(scheme: AllocationScheme, terminal_eps: float, L: int) -> list[float]:
    """Per-layer budgets eps_l = terminal * f(l)/f(L) for l = 1..L."""
    if L < 1:
        raise ValueError(f"L must be >= 1, got {L}")
    if terminal_eps < 0:
        raise ValueError(f"terminal budget must be >= 0, got {terminal_eps}")
    fL = scheme.factor(L)
    # ratio first: f(L)/f(L) is exactly 1.0, so the last budget is terminal-exact
    return [terminal_eps * (scheme.factor(l) / fL) for l in range(1, L + 1)]


def build_budget(model: ModelGraph,
                 schemes: dict[ParamKind, AllocationScheme],
                 terminals: dict[ParamKind, float]) -> dict:
    """Budget map keyed by (layer id, kind), allocated over the quantizable index."""
    index = model.quantizable_index
    budget = {}
    for kind in ParamKind:
        eps = allocate_budget(schemes[kind], terminals[kind], len(index))
        for lid, e in zip(index, eps):
            budget[(lid, kind)] = e
    return budget


@dataclass
class SearchConfig:
    """Inputs of the optimized search.

    An explicit ``budget`` map takes precedence; otherwise budgets are
    allocated from ``schemes``/``terminal_eps``.  Processing order is one
    parameter kind at a time across all layers; quantizing activations
    before weights is permitted but tends to exhaust the budget early on
    dependently-evaluated networks.
    """

    bw0: int = DEFAULT_BW0
    independent: bool = False
    delta: float = DEFAULT_DELTA
    param_order: tuple[ParamKind, ...] = PARAM_ORDER_WBA
    layer_order: str = "forward"  # or "reverse"
    schemes: dict = field(default_factory=lambda: {k: AllocationScheme.LINEAR for k in ParamKind})
    terminal_eps: dict = field(default_factory=lambda: {k: 0.005 for k in ParamKind})
    budget: dict | None = None
    batch_size: int | None = None

    def __post_init__(self):
        if self.bw0 < 2:
            raise ValueError(f"initial bitwidth must be >= 2, got {self.bw0}")
        if self.delta < 0:
            raise ValueError(f"delta must be >= 0, got {self.delta}")
        if self.layer_order not in ("forward", "reverse"):
            raise ValueError(f"layer_order must be forward or reverse, got {self.layer_order!r}")
        if sorted(k.value for k in self.param_order) != sorted(k.value for k in ParamKind):
            raise ValueError("param_order must be a permutation of the three kinds")

    def resolve_budget(self, model: ModelGraph) -> dict:
        if self.budget is not None:
            missing = [
                (lid, kind) for kind in ParamKind for lid in model.quantizable_index
                if (lid, kind) not in self.budget
            ]
            if missing:
                raise ValueError(f"budget missing entries for {missing[:3]}...")
            bad = [k for k, e in self.budget.items() if e < 0]
            if bad:
                raise ValueError(f"negative budget for {bad[:3]}")
            return dict(self.budget)
        return build_budget(model, self.schemes, self.terminal_eps)


@dataclass
class SearchReport:
    """Search outcome: the plan, every loss evaluation, and the budgets used."""

    plan: QuantizationPlan
    trace: list[AccuracyLossRecord]
    budgets: dict
    a0: float
    mode: str
    status: str = "ok"

    def to_json(self, model: ModelGraph | None = None) -> dict:
        return {
            "status": self.status,
            "mode": self.mode,
            "a0": self.a0,
            "plan": self.plan.to_records(model),
            "budgets": [
                {"layer": lid, "kind": kind.value, "epsilon": eps}
                for (lid, kind), eps in self.budgets.items()
            ],
            "trace": [rec.to_json() for rec in self.trace],
        }

    def save(self, path, model: ModelGraph | None = None):
        Path(path).write_text(json.dumps(self.to_json(model), indent=1), "utf-8")


class _CachedEvaluator:
    """Loss evaluator that reuses activations upstream of the current target.

    Layers that cannot be affected by the target's representation are
    computed once per (target, plan) and reused across all candidate
    representations, which leaves results bit-identical to a full forward
    pass because the reused values are produced by the same operations.
    """

    def __init__(self, model: ModelGraph, dataset: LabeledDataset,
                 independent: bool, batch_size: int | None = None):
        self.model = model
        self.dataset = dataset
        self.independent = independent
        n = len(dataset)
        step = n if batch_size is None else max(1, batch_size)
        self._chunks = [
            (dataset.images[s:min(s + step, n)], dataset.labels[s:min(s + step, n)])
            for s in range(0, n, step)
        ]
        self.sites = activation_sites(model)
        self._descendants: dict[str, set[str]] = {}
        self.a0 = full_precision_accuracy(model, dataset, batch_size=batch_size)
        # independent-mode prefixes never depend on the plan; compute once
        self._fp_acts = (
            [run_layers(model, x, None) for x, _ in self._chunks]
            if independent else None
        )
        self._prefix: list[dict] | None = None
        self._target = None
        self._plan = QuantizationPlan()
        self._memo: dict[tuple[int, int], float] = {}

    def _desc(self, lid: str) -> set[str]:
        if lid not in self._descendants:
            self._descendants[lid] = descendants(self.model, lid)
        return self._descendants[lid]

    def begin_target(self, target: tuple[str, ParamKind], plan: QuantizationPlan):
        lid, kind = target
        start = self.sites[lid] if kind is ParamKind.ACTIVATIONS else lid
        affected = self._desc(start) | {start}
        prefix_ids = {l.id for l in self.model.layers} - affected
        if self.independent:
            self._prefix = [
                {k: acts[k] for k in prefix_ids} for acts in self._fp_acts
            ]
            self._plan = QuantizationPlan()
        else:
            self._prefix = [
                run_layers(self.model, x, plan, subset=prefix_ids)
                for x, _ in self._chunks
            ]
            self._plan = QuantizationPlan(dict(plan.entries))
        self._target = target
        self._memo = {}

    def eval(self, bw: int, f: int) -> float:
        key = (bw, f)
        if key in self._memo:
            return self._memo[key]
        lid, kind = self._target
        effective = self._plan.merged_with(lid, kind, FixedPointRepr(bw, f))
        correct = 0
        total = 0
        out_id = self.model.output_layer.id
        for (x, labels), prefix in zip(self._chunks, self._prefix):
            acts = run_layers(self.model, x, effective, precomputed=prefix)
            scores = acts[out_id]
            correct += int(np.sum(np.argmax(scores, axis=1) == labels))
            total += len(labels)
        delta = (self.a0 - correct / total) / self.a0
        self._memo[key] = delta
        return delta


def _target_max_abs(model: ModelGraph, profile: ActivationProfile | None,
                    lid: str, kind: ParamKind) -> float:
    spec = model.layer(lid)
    if kind is ParamKind.WEIGHTS:
        return float(np.max(np.abs(model.tensors[spec.weights])))
    if kind is ParamKind.BIASES:
        b = model.tensors[spec.bias]
        return float(np.max(np.abs(b))) if b.size else 0.0
    if profile is None:
        raise ValueError("an activation profile is required to search activations")
    return profile[lid]


def opt_search(model: ModelGraph, dataset: LabeledDataset,
               profile: ActivationProfile | None,
               config: SearchConfig) -> SearchReport:
    """Find minimal per-layer representations meeting the loss budgets.

    Raises :class:`BudgetInfeasibleError` when a target already exceeds its
    budget at the initial bitwidth.
    """
    if profile is not None:
        profile.validate(model)
    budgets = config.resolve_budget(model)
    mode = "independent" if config.independent else "dependent"
    ev = _CachedEvaluator(model, dataset, config.independent, config.batch_size)

    plan = QuantizationPlan()
    trace: list[AccuracyLossRecord] = []

    layer_seq = list(model.quantizable_index)
    if config.layer_order == "reverse":
        layer_seq.reverse()

    for kind in config.param_order:
        for lid in layer_seq:
            eps = budgets[(lid, kind)]
            ev.begin_target((lid, kind), plan)

            def measure(bw: int, f: int) -> float:
                d = ev.eval(bw, f)
                trace.append(AccuracyLossRecord(lid, kind, FixedPointRepr(bw, f), d, mode))
                return d

            f0 = no_clip_offset(config.bw0, _target_max_abs(model, profile, lid, kind))
            d = measure(config.bw0, f0)
            if d > eps:
                raise BudgetInfeasibleError(lid, kind.value, d, eps)

            # diagonal phase: drop bw and f together while acceptable
            bw, f = config.bw0, f0
            best: tuple[int, int] | None = (bw, f)
            while d <= eps and bw > 1:
                bw, f = bw - 1, f - 1
                d = measure(bw, f)
                if d <= eps:
                    best = (bw, f)
            if best is None:  # pragma: no cover - entry point is always acceptable
                raise SearchExhaustedError(
                    f"no acceptable representation on the diagonal for ({lid}, {kind})")
            hat_bw, hat_f = best

            # reduce bw alone at the kept offset
            bw = hat_bw
            while bw > 1:
                bw -= 1
                d = measure(bw, hat_f)
                if d <= eps:
                    hat_bw = bw
                else:
                    break
            hat_d = measure(hat_bw, hat_f)

            # local phase: all neighbors at distance <= 1, bw clamped to >= 1
            candidates = []
            for db in (-1, 0, 1):
                for df in (-1, 0, 1):
                    nbw, nf = hat_bw + db, hat_f + df
                    if nbw < 1:
                        continue
                    nd = measure(nbw, nf)
                    if nd <= eps:
                        candidates.append((nd, nbw, nf))
            _, til_bw, til_f = min(candidates)
            til_d = measure(til_bw, til_f)

            if til_bw != hat_bw and til_f != hat_f:
                if hat_d - til_d > config.delta:
                    winner = (til_bw, til_f) if til_d < hat_d else (hat_bw, hat_f)
                else:
                    winner = (til_bw, til_f) if til_bw < hat_bw else (hat_bw, hat_f)
            else:
                winner = (til_bw, til_f)

            plan.set(lid, kind, FixedPointRepr(*winner))

    return SearchReport(plan=plan, trace=trace, budgets=budgets,
                        a0=ev.a0, mode=mode)


def brute_force_grid(model: ModelGraph, dataset: LabeledDataset,
                     target: tuple[str, ParamKind],
                     bw_range, f_range, independent: bool = True,
                     plan: QuantizationPlan | None = None,
                     batch_size: int | None = None) -> np.ndarray:
    """Loss over the Cartesian (bw, f) grid; rows follow bw, columns f."""
    bws = list(bw_range)
    fs = list(f_range)
    if not bws or not fs:
        raise ValueError("bw and f ranges must be non-empty")
    ev = _CachedEvaluator(model, dataset, independent, batch_size)
    ev.begin_target(target, plan or QuantizationPlan())
    out = np.empty((len(bws), len(fs)))
    for i, bw in enumerate(bws):
        for j, f in enumerate(fs):
            out[i, j] = ev.eval(bw, f)
    return out


def baseline_fixed_bitwidth(model: ModelGraph, profile: ActivationProfile,
                            bw: int) -> QuantizationPlan:
    """Uniform-bitwidth plan with per-tensor clip-free offsets."""
    if bw < 2:
        raise ValueError(f"baseline bitwidth must be >= 2, got {bw}")
    profile.validate(model)
    plan = QuantizationPlan()
    for lid in model.quantizable_index:
        for kind in ParamKind:
            f = no_clip_offset(bw, _target_max_abs(model, profile, lid, kind))
            plan.set(lid, kind, FixedPointRepr(bw, f))
    return plan


def final_method(model: ModelGraph, dataset: LabeledDataset,
                 profile: ActivationProfile, epsilon: float,
                 bw0: int = DEFAULT_BW0, delta: float = DEFAULT_DELTA,
                 batch_size: int | None = None) -> SearchReport:
    """Dependent search spending half the budget on weights, half on activations.

    Weights ramp linearly up to epsilon/2, biases get a constant epsilon/2,
    and activations ramp linearly from epsilon/2 up to the full epsilon.
    A zero budget is degenerate but allowed: the search then only succeeds
    if it finds lossless representations at the initial bitwidth.
    """
    if epsilon < 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    index = model.quantizable_index
    L = len(index)
    half = epsilon / 2.0
    budget = {}
    for pos, lid in enumerate(index, start=1):
        budget[(lid, ParamKind.WEIGHTS)] = half * pos / L
        budget[(lid, ParamKind.BIASES)] = half
        budget[(lid, ParamKind.ACTIVATIONS)] = half + half * pos / L
    config = SearchConfig(bw0=bw0, independent=False, delta=delta,
                          param_order=PARAM_ORDER_WBA, layer_order="forward",
                          budget=budget, batch_size=batch_size)
    return opt_search(model, dataset, profile, config)
