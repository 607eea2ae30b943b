"""Checks on the committed exporter bundles beyond the acceptance criteria.

The branched bundle exercises concat, add, and same-padding pooling in the
engine against reference outputs from the source framework.
"""

import json
import struct

import numpy as np
import pytest

from conftest import FIXTURE_DIR
from fxq.inference import activation_sites, calibrate_activations, forward
from fxq.model_ir import load_dataset, load_model


def load_bundle(name):
    path = FIXTURE_DIR / name
    if not (path / "model.json").exists():
        pytest.fail(f"committed fixture bundle '{name}' missing; "
                    "run the exporter and commit tests/fixtures/")
    model = load_model(path / "model.json")
    dataset = load_dataset(path / "dataset.fxqd")
    metadata = json.loads((path / "metadata.json").read_text())
    raw = (path / "reference.fxqr").read_bytes()
    _, n, classes = struct.unpack_from("<4sII", raw)
    reference = np.frombuffer(raw, dtype="<f4", offset=44).reshape(n, classes)
    return model, dataset, metadata, reference


@pytest.fixture(scope="module")
def branched():
    return load_bundle("branched")


class TestBranchedBundle:
    def test_structure(self, branched):
        model, _, metadata, _ = branched
        assert len(model.quantizable_index) == 23 == metadata["quantizable_layers"]
        kinds = [l.kind for l in model.layers]
        assert kinds.count("concat") == 5
        assert kinds.count("add") == 1
        assert any(l.kind == "maxpool" and l.padding == "same" for l in model.layers)

    def test_reference_round_trip(self, branched):
        model, dataset, metadata, reference = branched
        scores = forward(model, dataset.images)
        assert float(np.abs(scores - reference).max()) <= 1e-4
        assert np.array_equal(scores.argmax(axis=1), reference.argmax(axis=1))
        from fxq.inference import accuracy
        assert accuracy(model, dataset) == pytest.approx(metadata["a0"], abs=1e-12)

    def test_activation_sites_stop_before_merges(self, branched):
        model, _, _, _ = branched
        sites = activation_sites(model)
        merge_inputs = set()
        for l in model.layers:
            if l.kind in ("add", "concat"):
                merge_inputs.update(l.inputs)
        # every site that feeds a merge is a relu output, never the merge itself
        for lid, site in sites.items():
            spec = model.layer(site)
            assert spec.kind in ("relu", "dense", "conv2d")

    def test_calibration_covers_all_layers(self, branched):
        model, dataset, _, _ = branched
        profile = calibrate_activations(model, dataset.take(64))
        profile.validate(model)
        assert all(v >= 0 for v in profile.max_abs.values())


class TestSequentialBundleStructure:
    def test_layer_roster(self):
        model, dataset, metadata, _ = load_bundle("sequential")
        assert len(model.quantizable_index) == 15
        kinds = [l.kind for l in model.layers]
        assert kinds.count("conv2d") == 14
        assert kinds.count("dense") == 1
        assert kinds.count("avgpool") == 1
        assert kinds.count("batchnorm") == 14
        # dropout was stripped by the exporter
        assert "dropout" not in kinds
        assert metadata["input_shape"] == [28, 28, 1]
        assert dataset.images.shape == (1000, 28, 28, 1)
        assert dataset.classes == 10
        assert metadata["a0"] >= 0.9

    def test_recorded_layer2_example(self):
        from fxq.fixedpoint import FixedPointRepr
        from fxq.inference import accuracy
        from fxq.plan import ParamKind
        from fxq.quantizer import eval_acc_loss

        model, dataset, _, _ = load_bundle("sequential")
        recorded = json.loads((FIXTURE_DIR / "sequential" / "recorded.json").read_text())
        a0 = accuracy(model, dataset)
        rec = eval_acc_loss(model, dataset,
                            (model.quantizable_index[1], ParamKind.WEIGHTS),
                            FixedPointRepr(3, 4), independent=True, a0=a0)
        assert rec.delta_a == pytest.approx(
            recorded["layer2_w_3_4"]["delta_a"], abs=1e-12)
