"""Fixed-point post-training quantization of CNNs with budgeted bitwidth search."""

from fxq.errors import (
    BudgetInfeasibleError,
    CycleError,
    DanglingTensorError,
    DatasetFormatError,
    FxqError,
    LabelOutOfRangeError,
    MalformedManifestError,
    MissingPlanEntryError,
    NonQuantizableLayerError,
    SearchExhaustedError,
    ShapeMismatchError,
    UnsupportedLayerKindError,
)
from fxq.fixedpoint import (
    FixedPointRepr,
    clip,
    clipped_count,
    no_clip_offset,
    quantize,
    quantize_tensor,
    repr_range,
)
from fxq.model_ir import (
    LabeledDataset,
    LayerSpec,
    ModelGraph,
    load_dataset,
    load_model,
    save_dataset,
    save_model,
)
from fxq.inference import (
    ActivationProfile,
    accuracy,
    calibrate_activations,
    forward,
)
from fxq.plan import AccuracyLossRecord, ParamKind, QuantizationPlan
from fxq.quantizer import apply_plan, eval_acc_loss, network_acc_loss
from fxq.search import (
    AllocationScheme,
    SearchConfig,
    SearchReport,
    allocate_budget,
    baseline_fixed_bitwidth,
    brute_force_grid,
    final_method,
    opt_search,
)
from fxq.metrics import CostReport, build_report, memory_bits, mult_cost
from fxq.estimators import MixedPrecisionQuantizer, UniformQuantizer

__version__ = "0.1.0"
