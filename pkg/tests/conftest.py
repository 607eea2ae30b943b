import os
from pathlib import Path

import numpy as np
import pytest

from fxq.model_ir import LabeledDataset, LayerSpec, ModelGraph, validate_graph

# FXQ_FIXTURE_DIR points the fixture-driven tests at a regenerated bundle
# before it is committed
FIXTURE_DIR = Path(os.environ.get("FXQ_FIXTURE_DIR",
                                  Path(__file__).parent / "fixtures"))


def build_graph(layers, tensors, name="test-model"):
    validate_graph(layers, tensors)
    return ModelGraph(name=name, layers=layers, tensors=tensors)


def template_model(h=6, w=6, noise_seed=0):
    """Small conv + dense model that classifies blob positions by template match.

    Three classes, each a bright 2x2 blob in a distinct corner.  The dense
    layer holds the class templates, so the untrained model classifies the
    synthetic dataset below with high accuracy.
    """
    rng = np.random.default_rng(noise_seed)
    conv_w = np.zeros((3, 3, 1, 2))
    conv_w[1, 1, 0, 0] = 1.0          # identity channel
    conv_w[:, :, 0, 1] = 1.0 / 9.0    # smoothing channel
    conv_b = np.array([0.05, -0.05])

    pooled = (h // 2) * (w // 2) * 2
    dense_w = np.zeros((pooled, 3))
    # class templates over the pooled identity channel
    grid = np.zeros((h // 2, w // 2, 2))
    positions = [(0, 0), (0, w // 2 - 1), (h // 2 - 1, 0)]
    for k, (r, c) in enumerate(positions):
        t = grid.copy()
        t[r, c, 0] = 4.0
        t[r, c, 1] = 1.0
        dense_w[:, k] = t.reshape(-1)
    dense_w += rng.normal(scale=0.01, size=dense_w.shape)
    dense_b = np.array([0.02, 0.0, -0.02])

    gamma = np.ones(2)
    beta = np.zeros(2)
    mean = np.array([0.1, 0.05])
    var = np.array([1.0, 0.5])

    tensors = {
        "c1.w": conv_w, "c1.b": conv_b,
        "bn1.gamma": gamma, "bn1.beta": beta, "bn1.mean": mean, "bn1.var": var,
        "fc.w": dense_w, "fc.b": dense_b,
    }
    layers = [
        LayerSpec(id="in", kind="input", shape=(h, w, 1)),
        LayerSpec(id="c1", kind="conv2d", inputs=["in"], kernel=(3, 3), filters=2,
                  strides=(1, 1), padding="same", weights="c1.w", bias="c1.b"),
        LayerSpec(id="bn1", kind="batchnorm", inputs=["c1"], epsilon=1e-3,
                  params={"gamma": "bn1.gamma", "beta": "bn1.beta",
                          "mean": "bn1.mean", "variance": "bn1.var"}),
        LayerSpec(id="r1", kind="relu", inputs=["bn1"]),
        LayerSpec(id="p1", kind="maxpool", inputs=["r1"], pool=(2, 2), strides=(2, 2)),
        LayerSpec(id="flat", kind="flatten", inputs=["p1"]),
        LayerSpec(id="fc", kind="dense", inputs=["flat"], units=3,
                  weights="fc.w", bias="fc.b"),
        LayerSpec(id="out", kind="softmax", inputs=["fc"]),
    ]
    return build_graph(layers, tensors, name="template-toy")


def blob_dataset(n=120, h=6, w=6, noise=0.25, seed=42):
    """Images with a bright 2x2 blob whose corner decides the class."""
    rng = np.random.default_rng(seed)
    positions = [(0, 0), (0, w - 2), (h - 2, 0)]
    images = rng.normal(scale=noise, size=(n, h, w, 1))
    labels = rng.integers(0, 3, size=n)
    for i, k in enumerate(labels):
        r, c = positions[k]
        images[i, r:r + 2, c:c + 2, 0] += 1.0
    return LabeledDataset(images=images, labels=labels.astype(np.int64), classes=3)


@pytest.fixture
def toy_model():
    return template_model()


@pytest.fixture
def toy_dataset():
    return blob_dataset()


def fixture_path(name: str) -> Path:
    return FIXTURE_DIR / name


def has_fixture(name: str) -> bool:
    return (FIXTURE_DIR / name).exists()
