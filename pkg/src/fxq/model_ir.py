"""Model graph representation and the canonical on-disk formats.

A model is a JSON manifest describing a DAG of typed layers plus a sidecar
blob of little-endian float32 tensor data, each tensor addressed by name,
byte offset and shape.  Datasets are a single binary file: magic ``FXQD``,
five little-endian u32 header fields (n, h, w, c, classes), n*h*w*c float32
image values, then n uint16 labels.

Weight layouts: conv2d kernels are stored ``[kh, kw, in_c, out_c]`` and
dense kernels ``[in, out]``.  Batchnorm carries four vectors (gamma, beta,
moving mean, moving variance) and is never quantized.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from fxq.errors import (
    CycleError,
    DanglingTensorError,
    DatasetFormatError,
    LabelOutOfRangeError,
    MalformedManifestError,
    UnsupportedLayerKindError,
)

__all__ = [
    "LAYER_KINDS",
    "QUANTIZABLE_KINDS",
    "LayerSpec",
    "ModelGraph",
    "LabeledDataset",
    "load_model",
    "save_model",
    "load_dataset",
    "save_dataset",
]

LAYER_KINDS = frozenset({
    "input", "conv2d", "dense", "batchnorm", "maxpool", "avgpool",
    "relu", "softmax", "flatten", "add", "concat",
})
QUANTIZABLE_KINDS = frozenset({"conv2d", "dense"})
BATCHNORM_PARAMS = ("gamma", "beta", "mean", "variance")

DATASET_MAGIC = b"FXQD"
_HEADER = struct.Struct("<4s5I")


@dataclass
class LayerSpec:
    """One node of the model DAG; attribute validity depends on ``kind``."""

    id: str
    kind: str
    inputs: list[str] = field(default_factory=list)
    shape: tuple[int, ...] | None = None          # input: [h, w, c]
    kernel: tuple[int, int] | None = None         # conv2d
    filters: int | None = None                    # conv2d
    units: int | None = None                      # dense
    strides: tuple[int, int] = (1, 1)             # conv2d / pooling
    padding: str = "valid"                        # conv2d / pooling
    pool: tuple[int, int] | None = None           # maxpool / avgpool
    epsilon: float | None = None                  # batchnorm
    weights: str | None = None                    # conv2d / dense kernel tensor
    bias: str | None = None                       # conv2d / dense bias tensor
    params: dict[str, str] | None = None          # batchnorm vector tensors

    @property
    def quantizable(self) -> bool:
        return self.kind in QUANTIZABLE_KINDS


@dataclass
class ModelGraph:
    """Topologically ordered layer list plus the tensors they reference.

    ``activation_plan`` holds armed activation-quantization hooks, set when a
    plan is applied to the model; the forward pass honors them.
    """

    name: str
    layers: list[LayerSpec]
    tensors: dict[str, np.ndarray]
    activation_plan: dict = field(default_factory=dict)

    def __post_init__(self):
        self.layers_by_id = {l.id: l for l in self.layers}
        self.quantizable_index = [l.id for l in self.layers if l.quantizable]

    def layer(self, layer_id: str) -> LayerSpec:
        return self.layers_by_id[layer_id]

    @property
    def input_layer(self) -> LayerSpec:
        return next(l for l in self.layers if l.kind == "input")

    @property
    def output_layer(self) -> LayerSpec:
        return next(l for l in self.layers if l.kind == "softmax")

    def copy(self) -> "ModelGraph":
        return ModelGraph(
            name=self.name,
            layers=list(self.layers),
            tensors=dict(self.tensors),
            activation_plan=dict(self.activation_plan),
        )


@dataclass
class LabeledDataset:
    """Images of shape [n, h, w, c] with integer labels in [0, classes)."""

    images: np.ndarray
    labels: np.ndarray
    classes: int

    def __post_init__(self):
        if self.images.ndim != 4:
            raise DatasetFormatError(f"images must be 4-d, got {self.images.shape}")
        n = self.images.shape[0]
        if n < 1:
            raise DatasetFormatError("dataset must contain at least one example")
        if self.labels.shape != (n,):
            raise DatasetFormatError(
                f"labels must have shape ({n},), got {self.labels.shape}"
            )
        if self.classes < 1:
            raise DatasetFormatError("classes must be >= 1")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.classes):
            raise LabelOutOfRangeError(
                f"labels must lie in [0, {self.classes}), got range "
                f"[{self.labels.min()}, {self.labels.max()}]"
            )

    def __len__(self) -> int:
        return int(self.images.shape[0])

    def take(self, n: int) -> "LabeledDataset":
        n = min(n, len(self))
        return LabeledDataset(self.images[:n], self.labels[:n], self.classes)


def _require(cond: bool, message: str):
    if not cond:
        raise MalformedManifestError(message)


def _pair(value, name: str, layer_id: str) -> tuple[int, int]:
    _require(
        isinstance(value, (list, tuple)) and len(value) == 2
        and all(isinstance(v, int) and v >= 1 for v in value),
        f"layer '{layer_id}': {name} must be a pair of positive integers",
    )
    return (int(value[0]), int(value[1]))


def _layer_from_manifest(entry: dict) -> LayerSpec:
    _require(isinstance(entry, dict), "layer entry must be an object")
    _require(isinstance(entry.get("id"), str) and entry["id"], "layer id missing")
    lid = entry["id"]
    kind = entry.get("kind")
    if kind not in LAYER_KINDS:
        raise UnsupportedLayerKindError(f"layer '{lid}': unsupported kind {kind!r}")
    inputs = entry.get("inputs", [])
    _require(isinstance(inputs, list) and all(isinstance(i, str) for i in inputs),
             f"layer '{lid}': inputs must be a list of layer ids")
    spec = LayerSpec(id=lid, kind=kind, inputs=list(inputs))

    if kind == "input":
        shape = entry.get("shape")
        _require(isinstance(shape, list) and len(shape) == 3
                 and all(isinstance(v, int) and v >= 1 for v in shape),
                 f"layer '{lid}': input shape must be [h, w, c]")
        spec.shape = tuple(shape)
        _require(not inputs, f"layer '{lid}': input layer takes no inputs")
    elif kind == "conv2d":
        spec.kernel = _pair(entry.get("kernel"), "kernel", lid)
        _require(isinstance(entry.get("filters"), int) and entry["filters"] >= 1,
                 f"layer '{lid}': filters must be a positive integer")
        spec.filters = entry["filters"]
        spec.strides = _pair(entry.get("strides", [1, 1]), "strides", lid)
        spec.padding = entry.get("padding", "valid")
        _require(spec.padding in ("same", "valid"),
                 f"layer '{lid}': padding must be 'same' or 'valid'")
        _require(isinstance(entry.get("weights"), str),
                 f"layer '{lid}': conv2d requires a weights tensor")
        _require(isinstance(entry.get("bias"), str),
                 f"layer '{lid}': conv2d requires a bias tensor")
        spec.weights, spec.bias = entry["weights"], entry["bias"]
    elif kind == "dense":
        _require(isinstance(entry.get("units"), int) and entry["units"] >= 1,
                 f"layer '{lid}': units must be a positive integer")
        spec.units = entry["units"]
        _require(isinstance(entry.get("weights"), str),
                 f"layer '{lid}': dense requires a weights tensor")
        _require(isinstance(entry.get("bias"), str),
                 f"layer '{lid}': dense requires a bias tensor")
        spec.weights, spec.bias = entry["weights"], entry["bias"]
    elif kind in ("maxpool", "avgpool"):
        spec.pool = _pair(entry.get("pool"), "pool", lid)
        spec.strides = _pair(entry.get("strides", list(spec.pool)), "strides", lid)
        spec.padding = entry.get("padding", "valid")
        _require(spec.padding in ("same", "valid"),
                 f"layer '{lid}': padding must be 'same' or 'valid'")
    elif kind == "batchnorm":
        eps = entry.get("epsilon", 1e-3)
        _require(isinstance(eps, (int, float)) and eps > 0,
                 f"layer '{lid}': batchnorm epsilon must be positive")
        spec.epsilon = float(eps)
        params = entry.get("params")
        _require(isinstance(params, dict) and set(params) == set(BATCHNORM_PARAMS)
                 and all(isinstance(v, str) for v in params.values()),
                 f"layer '{lid}': batchnorm needs tensors {BATCHNORM_PARAMS}")
        spec.params = {k: params[k] for k in BATCHNORM_PARAMS}
    return spec


def _layer_to_manifest(spec: LayerSpec) -> dict:
    entry: dict = {"id": spec.id, "kind": spec.kind, "inputs": list(spec.inputs)}
    if spec.kind == "input":
        entry["shape"] = list(spec.shape)
    elif spec.kind == "conv2d":
        entry.update(kernel=list(spec.kernel), filters=spec.filters,
                     strides=list(spec.strides), padding=spec.padding,
                     weights=spec.weights, bias=spec.bias)
    elif spec.kind == "dense":
        entry.update(units=spec.units, weights=spec.weights, bias=spec.bias)
    elif spec.kind in ("maxpool", "avgpool"):
        entry.update(pool=list(spec.pool), strides=list(spec.strides),
                     padding=spec.padding)
    elif spec.kind == "batchnorm":
        entry.update(epsilon=spec.epsilon, params=dict(spec.params))
    return entry


def _referenced_tensors(spec: LayerSpec) -> list[str]:
    names = []
    if spec.weights:
        names.append(spec.weights)
    if spec.bias:
        names.append(spec.bias)
    if spec.params:
        names.extend(spec.params[k] for k in BATCHNORM_PARAMS)
    return names


def validate_graph(layers: list[LayerSpec], tensors: dict[str, np.ndarray]):
    """Check structural invariants; raises a named error on the first violation."""
    ids = [l.id for l in layers]
    _require(len(ids) == len(set(ids)), "duplicate layer ids")
    by_id = {l.id: l for l in layers}

    for l in layers:
        for ref in l.inputs:
            _require(ref in by_id, f"layer '{l.id}': unknown input layer '{ref}'")
        if l.kind != "input":
            _require(len(l.inputs) >= 1, f"layer '{l.id}': missing inputs")
        if l.kind in ("add", "concat"):
            _require(len(l.inputs) >= 2,
                     f"layer '{l.id}': {l.kind} needs at least two inputs")
        elif l.kind != "input":
            _require(len(l.inputs) == 1,
                     f"layer '{l.id}': {l.kind} takes exactly one input")
        for name in _referenced_tensors(l):
            if name not in tensors:
                raise DanglingTensorError(
                    f"layer '{l.id}' references missing tensor '{name}'"
                )

    # Kahn's algorithm distinguishes a genuine cycle from a mis-ordered list.
    indeg = {l.id: len(l.inputs) for l in layers}
    consumers: dict[str, list[str]] = {l.id: [] for l in layers}
    for l in layers:
        for ref in l.inputs:
            consumers[ref].append(l.id)
    ready = [i for i, d in indeg.items() if d == 0]
    seen = 0
    while ready:
        seen += 1
        for nxt in consumers[ready.pop()]:
            indeg[nxt] -= 1
            if indeg[nxt] == 0:
                ready.append(nxt)
    if seen != len(layers):
        raise CycleError("layer graph contains a cycle")

    pos = {lid: i for i, lid in enumerate(ids)}
    for l in layers:
        for ref in l.inputs:
            _require(pos[ref] < pos[l.id],
                     f"layers are not topologically ordered: '{ref}' follows '{l.id}'")

    inputs = [l for l in layers if l.kind == "input"]
    outputs = [l for l in layers if l.kind == "softmax"]
    _require(len(inputs) == 1, f"model must have exactly one input layer, got {len(inputs)}")
    _require(len(outputs) == 1, f"model must have exactly one softmax layer, got {len(outputs)}")

    quantizable = [l for l in layers if l.quantizable]
    _require(len(quantizable) >= 1, "model has no quantizable layers")

    for l in quantizable:
        w = tensors[l.weights]
        b = tensors[l.bias]
        if l.kind == "conv2d":
            _require(w.ndim == 4 and w.shape[:2] == l.kernel and w.shape[3] == l.filters,
                     f"layer '{l.id}': weight shape {w.shape} inconsistent with "
                     f"kernel {l.kernel} and filters {l.filters}")
            _require(b.shape == (l.filters,),
                     f"layer '{l.id}': bias shape {b.shape} != ({l.filters},)")
        else:
            _require(w.ndim == 2 and w.shape[1] == l.units,
                     f"layer '{l.id}': dense weight shape {w.shape} inconsistent "
                     f"with units {l.units}")
            _require(b.shape == (l.units,),
                     f"layer '{l.id}': bias shape {b.shape} != ({l.units},)")


def _tensor_index(manifest: dict) -> dict[str, tuple[int, tuple[int, ...]]]:
    raw = manifest.get("tensors")
    _require(isinstance(raw, dict), "manifest missing 'tensors' index")
    index = {}
    for name, meta in raw.items():
        _require(isinstance(meta, dict) and isinstance(meta.get("offset"), int)
                 and meta["offset"] >= 0 and isinstance(meta.get("shape"), list)
                 and all(isinstance(v, int) and v >= 1 for v in meta["shape"]),
                 f"tensor '{name}': index entry must carry offset and shape")
        index[name] = (meta["offset"], tuple(meta["shape"]))
    return index


def load_model(path: str | Path) -> ModelGraph:
    """Load and validate a model manifest plus its weight blob."""
    path = Path(path)
    try:
        manifest = json.loads(path.read_text("utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedManifestError(f"{path}: invalid JSON ({exc})") from exc
    _require(isinstance(manifest, dict), "manifest root must be an object")
    _require(manifest.get("format") == "fxq-model",
             f"unexpected manifest format {manifest.get('format')!r}")
    _require(isinstance(manifest.get("blob"), str), "manifest missing 'blob'")

    blob_path = path.parent / manifest["blob"]
    try:
        blob = blob_path.read_bytes()
    except OSError as exc:
        raise MalformedManifestError(f"cannot read blob {blob_path}: {exc}") from exc

    index = _tensor_index(manifest)
    tensors: dict[str, np.ndarray] = {}
    for name, (offset, shape) in index.items():
        count = int(np.prod(shape))
        end = offset + 4 * count
        if end > len(blob):
            raise DanglingTensorError(
                f"tensor '{name}': blob range [{offset}, {end}) exceeds "
                f"blob size {len(blob)}"
            )
        flat = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
        if not np.all(np.isfinite(flat)):
            raise MalformedManifestError(f"tensor '{name}' contains non-finite values")
        tensors[name] = flat.astype(np.float64).reshape(shape)

    raw_layers = manifest.get("layers")
    _require(isinstance(raw_layers, list) and raw_layers, "manifest missing 'layers'")
    layers = [_layer_from_manifest(e) for e in raw_layers]
    validate_graph(layers, tensors)
    return ModelGraph(name=manifest.get("name", path.stem), layers=layers,
                      tensors=tensors)


def save_model(model: ModelGraph, path: str | Path, blob_name: str | None = None):
    """Write a model back out in the canonical manifest + blob format."""
    path = Path(path)
    blob_name = blob_name or path.stem + ".bin"

    order: list[str] = []
    for l in model.layers:
        for name in _referenced_tensors(l):
            if name not in order:
                order.append(name)

    chunks = []
    index = {}
    offset = 0
    for name in order:
        data = np.ascontiguousarray(model.tensors[name], dtype="<f4")
        index[name] = {"offset": offset, "shape": list(data.shape)}
        raw = data.tobytes()
        chunks.append(raw)
        offset += len(raw)

    manifest = {
        "format": "fxq-model",
        "version": 1,
        "name": model.name,
        "blob": blob_name,
        "layers": [_layer_to_manifest(l) for l in model.layers],
        "tensors": index,
    }
    path.write_text(json.dumps(manifest, indent=1), "utf-8")
    (path.parent / blob_name).write_bytes(b"".join(chunks))


def load_dataset(path: str | Path) -> LabeledDataset:
    """Load a dataset file, verifying header consistency and label range."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise DatasetFormatError(f"{path}: file shorter than header")
    magic, n, h, w, c, classes = _HEADER.unpack_from(raw)
    if magic != DATASET_MAGIC:
        raise DatasetFormatError(f"{path}: bad magic {magic!r}")
    if n < 1:
        raise DatasetFormatError(f"{path}: dataset must contain at least one example")
    expected = _HEADER.size + 4 * n * h * w * c + 2 * n
    if len(raw) != expected:
        raise DatasetFormatError(
            f"{path}: payload length {len(raw)} does not match header "
            f"(expected {expected})"
        )
    images = np.frombuffer(raw, dtype="<f4", count=n * h * w * c,
                           offset=_HEADER.size).reshape(n, h, w, c)
    if not np.all(np.isfinite(images)):
        raise DatasetFormatError(f"{path}: images contain non-finite values")
    labels = np.frombuffer(raw, dtype="<u2", count=n,
                           offset=_HEADER.size + 4 * n * h * w * c)
    return LabeledDataset(images=images.astype(np.float64),
                          labels=labels.astype(np.int64), classes=classes)


def save_dataset(dataset: LabeledDataset, path: str | Path):
    n, h, w, c = dataset.images.shape
    header = _HEADER.pack(DATASET_MAGIC, n, h, w, c, dataset.classes)
    images = np.ascontiguousarray(dataset.images, dtype="<f4").tobytes()
    labels = np.ascontiguousarray(dataset.labels, dtype="<u2").tobytes()
    Path(path).write_bytes(header + images + labels)


def file_digest(path: str | Path) -> str:
    """Hex sha256 of a file, for run manifests."""
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()
