"""Deterministic forward-pass engine with quantization insertion points.

All arithmetic runs in float64 with a fixed accumulation order
(kernel-row, kernel-col, then the in-channel contraction inside one
matmul), so repeated runs and arbitrary batch partitionings produce
bit-identical results.

Quantization hooks: weight and bias tensors of planned layers are replaced
by their quantized values before use; activation quantization applies to
the ReLU output of a planned convolutional layer (located through any
intervening batchnorm) and to the dense output right before the final
softmax.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fxq.errors import ShapeMismatchError
from fxq.fixedpoint import quantize_tensor
from fxq.model_ir import LabeledDataset, LayerSpec, ModelGraph
from fxq.plan import ParamKind, QuantizationPlan

__all__ = [
    "ActivationProfile",
    "forward",
    "accuracy",
    "calibrate_activations",
    "activation_sites",
    "layer_output_shapes",
]


@dataclass
class ActivationProfile:
    """Largest absolute activation seen per quantizable layer on a calibration set."""

    max_abs: dict[str, float]

    def __post_init__(self):
        for lid, v in self.max_abs.items():
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"profile entry for '{lid}' must be finite and >= 0")

    def __getitem__(self, layer_id: str) -> float:
        return self.max_abs[layer_id]

    def validate(self, model: ModelGraph):
        expected = set(model.quantizable_index)
        if set(self.max_abs) != expected:
            raise ValueError(
                "profile layers do not match the model's quantizable layers: "
                f"{sorted(set(self.max_abs) ^ expected)}"
            )


def _consumers(model: ModelGraph) -> dict[str, list[str]]:
    out: dict[str, list[str]] = {l.id: [] for l in model.layers}
    for l in model.layers:
        for ref in l.inputs:
            out[ref].append(l.id)
    return out


def activation_sites(model: ModelGraph) -> dict[str, str]:
    """Layer whose output carries each quantizable layer's activation hook.

    Follows single-consumer chains of batchnorm/relu after the layer; the
    final dense layer keeps the hook on its own output (before softmax).
    """
    consumers = _consumers(model)
    sites = {}
    for lid in model.quantizable_index:
        cur = lid
        while True:
            nxt = consumers[cur]
            if len(nxt) != 1:
                break
            spec = model.layer(nxt[0])
            if spec.kind not in ("batchnorm", "relu"):
                break
            cur = spec.id
        sites[lid] = cur
    return sites


def descendants(model: ModelGraph, layer_id: str) -> set[str]:
    """All layers strictly downstream of ``layer_id``."""
    consumers = _consumers(model)
    seen: set[str] = set()
    stack = list(consumers[layer_id])
    while stack:
        cur = stack.pop()
        if cur in seen:
            continue
        seen.add(cur)
        stack.extend(consumers[cur])
    return seen


def _same_pad(size: int, kernel: int, stride: int) -> tuple[int, int, int]:
    out = -(-size // stride)
    total = max((out - 1) * stride + kernel - size, 0)
    return out, total // 2, total - total // 2


def _conv2d(x: np.ndarray, spec: LayerSpec, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    B, H, W, C = x.shape
    kh, kw, ic, oc = w.shape
    if C != ic:
        raise ShapeMismatchError(spec.id, f"input has {C} channels, kernel expects {ic}")
    sh, sw = spec.strides
    if spec.padding == "same":
        oh, pt, pb = _same_pad(H, kh, sh)
        ow, pl, pr = _same_pad(W, kw, sw)
        if pt or pb or pl or pr:
            x = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    else:
        oh = (H - kh) // sh + 1
        ow = (W - kw) // sw + 1
        if oh < 1 or ow < 1:
            raise ShapeMismatchError(spec.id, f"kernel {kh}x{kw} larger than input {H}x{W}")
    out = np.zeros((B, oh, ow, oc))
    tmp = np.empty((B, oh, ow, oc))
    for r in range(kh):
        for c in range(kw):
            xs = x[:, r:r + sh * (oh - 1) + 1:sh, c:c + sw * (ow - 1) + 1:sw, :]
            np.matmul(xs, w[r, c], out=tmp)
            out += tmp
    return out + b


def _pool(x: np.ndarray, spec: LayerSpec) -> np.ndarray:
    B, H, W, C = x.shape
    kh, kw = spec.pool
    sh, sw = spec.strides
    if spec.padding == "same":
        oh, pt, pb = _same_pad(H, kh, sh)
        ow, pl, pr = _same_pad(W, kw, sw)
    else:
        oh = (H - kh) // sh + 1
        ow = (W - kw) // sw + 1
        if oh < 1 or ow < 1:
            raise ShapeMismatchError(spec.id, f"pool {kh}x{kw} larger than input {H}x{W}")
        pt = pb = pl = pr = 0
    if spec.kind == "maxpool":
        fill = -np.inf
        xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)), constant_values=fill)
        out = np.full((B, oh, ow, C), fill)
        for r in range(kh):
            for c in range(kw):
                np.maximum(out, xp[:, r:r + sh * (oh - 1) + 1:sh,
                                   c:c + sw * (ow - 1) + 1:sw, :], out=out)
        return out
    # average pooling excludes padded cells from the divisor
    xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    ones = np.pad(np.ones((1, H, W, 1)), ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    out = np.zeros((B, oh, ow, C))
    count = np.zeros((1, oh, ow, 1))
    for r in range(kh):
        for c in range(kw):
            out += xp[:, r:r + sh * (oh - 1) + 1:sh, c:c + sw * (ow - 1) + 1:sw, :]
            count += ones[:, r:r + sh * (oh - 1) + 1:sh, c:c + sw * (ow - 1) + 1:sw, :]
    return out / count


def _batchnorm(x: np.ndarray, spec: LayerSpec, tensors: dict) -> np.ndarray:
    gamma = tensors[spec.params["gamma"]]
    beta = tensors[spec.params["beta"]]
    mean = tensors[spec.params["mean"]]
    var = tensors[spec.params["variance"]]
    if x.shape[-1] != gamma.shape[0]:
        raise ShapeMismatchError(spec.id, f"{x.shape[-1]} channels vs {gamma.shape[0]} parameters")
    scale = gamma / np.sqrt(var + spec.epsilon)
    return x * scale + (beta - mean * scale)


def _softmax(x: np.ndarray) -> np.ndarray:
    z = x - np.max(x, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def _normalize_plan(plan) -> dict:
    if plan is None:
        return {}
    if isinstance(plan, QuantizationPlan):
        return dict(plan.entries)
    return dict(plan)


def run_layers(model: ModelGraph, batch: np.ndarray, plan=None,
               precomputed: dict | None = None,
               subset: set[str] | None = None) -> dict[str, np.ndarray]:
    """Compute layer outputs in topological order.

    ``precomputed`` outputs are reused as-is and never recomputed;
    ``subset`` restricts computation to the named layers (callers must pass
    a prefix-closed set).  Returns a dict covering every computed layer
    plus the precomputed ones.
    """
    entries = _normalize_plan(plan)
    act_plan = {lid: r for (lid, kind), r in entries.items()
                if kind is ParamKind.ACTIVATIONS}
    for lid, r in model.activation_plan.items():
        act_plan.setdefault(lid, r)
    sites = activation_sites(model)
    hook_by_site = {site: lid for lid, site in sites.items() if lid in act_plan}

    acts: dict[str, np.ndarray] = dict(precomputed) if precomputed else {}
    for spec in model.layers:
        if spec.id in acts:
            continue
        if subset is not None and spec.id not in subset:
            continue
        if spec.kind == "input":
            if batch.ndim != 4 or batch.shape[1:] != spec.shape:
                raise ShapeMismatchError(
                    spec.id, f"batch shape {batch.shape} vs input {spec.shape}")
            out = np.asarray(batch, dtype=np.float64)
        else:
            xs = []
            for ref in spec.inputs:
                if ref not in acts:
                    raise ShapeMismatchError(spec.id, f"input '{ref}' was not computed")
                xs.append(acts[ref])
            x = xs[0]
            if spec.kind == "conv2d" or spec.kind == "dense":
                w = model.tensors[spec.weights]
                b = model.tensors[spec.bias]
                rw = entries.get((spec.id, ParamKind.WEIGHTS))
                if rw is not None:
                    w = quantize_tensor(w, rw)
                rb = entries.get((spec.id, ParamKind.BIASES))
                if rb is not None:
                    b = quantize_tensor(b, rb)
                if spec.kind == "conv2d":
                    out = _conv2d(x, spec, w, b)
                else:
                    if x.ndim != 2 or x.shape[1] != w.shape[0]:
                        raise ShapeMismatchError(
                            spec.id, f"dense input {x.shape} vs kernel {w.shape}")
                    # row-wise matvec keeps results independent of batch size
                    out = (x[:, None, :] @ w)[:, 0, :] + b
            elif spec.kind == "batchnorm":
                out = _batchnorm(x, spec, model.tensors)
            elif spec.kind == "relu":
                out = np.maximum(x, 0.0)
            elif spec.kind in ("maxpool", "avgpool"):
                if x.ndim != 4:
                    raise ShapeMismatchError(spec.id, f"pooling needs 4-d input, got {x.shape}")
                out = _pool(x, spec)
            elif spec.kind == "flatten":
                out = x.reshape(x.shape[0], -1)
            elif spec.kind == "softmax":
                out = _softmax(x)
            elif spec.kind == "add":
                for other in xs[1:]:
                    if other.shape != x.shape:
                        raise ShapeMismatchError(
                            spec.id, f"add inputs disagree: {x.shape} vs {other.shape}")
                out = x.copy()
                for other in xs[1:]:
                    out += other
            elif spec.kind == "concat":
                for other in xs[1:]:
                    if other.shape[:-1] != x.shape[:-1]:
                        raise ShapeMismatchError(
                            spec.id, f"concat inputs disagree: {x.shape} vs {other.shape}")
                out = np.concatenate(xs, axis=-1)
            else:  # pragma: no cover - kinds are validated at load time
                raise ShapeMismatchError(spec.id, f"unknown kind {spec.kind}")
        hooked = hook_by_site.get(spec.id)
        if hooked is not None:
            out = quantize_tensor(out, act_plan[hooked])
        acts[spec.id] = out
    return acts


def forward(model: ModelGraph, batch: np.ndarray, plan=None) -> np.ndarray:
    """Class scores for a batch, optionally under a quantization plan."""
    if isinstance(plan, QuantizationPlan):
        plan.validate(model)
    acts = run_layers(model, np.asarray(batch, dtype=np.float64), plan)
    return acts[model.output_layer.id]


def _batches(n: int, batch_size: int | None):
    step = n if batch_size is None else max(1, batch_size)
    for start in range(0, n, step):
        yield start, min(start + step, n)


def accuracy(model: ModelGraph, dataset: LabeledDataset, plan=None,
             batch_size: int | None = None) -> float:
    """Top-1 accuracy; argmax ties resolve to the lowest class index."""
    if isinstance(plan, QuantizationPlan):
        plan.validate(model)
    correct = 0
    for start, stop in _batches(len(dataset), batch_size):
        scores = forward(model, dataset.images[start:stop], plan)
        correct += int(np.sum(np.argmax(scores, axis=1) == dataset.labels[start:stop]))
    return correct / len(dataset)


def calibrate_activations(model: ModelGraph, dataset: LabeledDataset,
                          limit: int | None = None,
                          batch_size: int | None = None) -> ActivationProfile:
    """Per-layer max absolute activation at each quantization site, full precision."""
    data = dataset if limit is None else dataset.take(limit)
    sites = activation_sites(model)
    peaks = {lid: 0.0 for lid in model.quantizable_index}
    for start, stop in _batches(len(data), batch_size):
        acts = run_layers(model, data.images[start:stop])
        for lid, site in sites.items():
            peaks[lid] = max(peaks[lid], float(np.max(np.abs(acts[site]))))
    return ActivationProfile(peaks)


def layer_output_shapes(model: ModelGraph) -> dict[str, tuple[int, ...]]:
    """Per-example output shape of every layer (batch axis dropped)."""
    dummy = np.zeros((1, *model.input_layer.shape))
    acts = run_layers(model, dummy)
    return {lid: tuple(a.shape[1:]) for lid, a in acts.items()}
