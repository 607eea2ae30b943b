"""Exception taxonomy shared across the package."""


class FxqError(Exception):
    """Base class for all errors raised by this package."""


class MalformedManifestError(FxqError):
    """Model manifest is structurally invalid (bad JSON, missing fields, bad order)."""


class DanglingTensorError(FxqError):
    """A layer references a tensor name that is not present in the blob index."""


class CycleError(FxqError):
    """The layer graph contains a cycle."""


class UnsupportedLayerKindError(FxqError):
    """A layer declares a kind the engine does not implement."""


class DatasetFormatError(FxqError):
    """Dataset file header/payload is inconsistent or otherwise unreadable."""


class LabelOutOfRangeError(DatasetFormatError):
    """A label is outside [0, classes)."""


class ShapeMismatchError(FxqError):
    """Tensor shapes are inconsistent at a layer during the forward pass."""

    def __init__(self, layer_id: str, message: str):
        super().__init__(f"layer '{layer_id}': {message}")
        self.layer_id = layer_id


class NonQuantizableLayerError(FxqError):
    """A plan entry targets a layer that is not a conv2d or dense layer."""


class BudgetInfeasibleError(FxqError):
    """The accuracy-loss budget cannot be met even at the initial bitwidth."""

    def __init__(self, layer_id: str, kind, delta_a: float, epsilon: float):
        super().__init__(
            f"budget infeasible for ({layer_id}, {kind}): measured loss "
            f"{delta_a:.6f} exceeds budget {epsilon:.6f} at the initial bitwidth; "
            f"increase the initial bitwidth or the acceptable loss"
        )
        self.layer_id = layer_id
        self.kind = kind
        self.delta_a = delta_a
        self.epsilon = epsilon


class SearchExhaustedError(FxqError):
    """Bitwidth reduction ran out of representations without an acceptable one."""


class MissingPlanEntryError(FxqError):
    """A cost computation needs a plan entry that is absent."""
