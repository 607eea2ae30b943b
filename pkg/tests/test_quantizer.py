import numpy as np
import pytest

from fxq.errors import NonQuantizableLayerError
from fxq.fixedpoint import FixedPointRepr, no_clip_offset
from fxq.inference import accuracy, calibrate_activations
from fxq.plan import ParamKind, QuantizationPlan
from fxq.quantizer import (
    apply_plan,
    eval_acc_loss,
    full_precision_accuracy,
    network_acc_loss,
)


def identity_plan(model, dataset):
    profile = calibrate_activations(model, dataset)
    plan = QuantizationPlan()
    for lid in model.quantizable_index:
        spec = model.layer(lid)
        wmax = float(np.abs(model.tensors[spec.weights]).max())
        bmax = float(np.abs(model.tensors[spec.bias]).max()) or 0.0
        plan.set(lid, ParamKind.WEIGHTS, FixedPointRepr(31, no_clip_offset(31, wmax)))
        plan.set(lid, ParamKind.BIASES, FixedPointRepr(31, no_clip_offset(31, bmax)))
        plan.set(lid, ParamKind.ACTIVATIONS,
                 FixedPointRepr(31, no_clip_offset(31, profile[lid])))
    return plan


class TestEvalAccLoss:
    def test_identity_repr_is_lossless(self, toy_model, toy_dataset):
        a0 = full_precision_accuracy(toy_model, toy_dataset)
        wmax = float(np.abs(toy_model.tensors["c1.w"]).max())
        rec = eval_acc_loss(toy_model, toy_dataset, ("c1", ParamKind.WEIGHTS),
                            FixedPointRepr(31, no_clip_offset(31, wmax)),
                            independent=True, a0=a0)
        assert abs(rec.delta_a) <= 1e-9

    def test_modes_coincide_on_empty_plan(self, toy_model, toy_dataset):
        a0 = full_precision_accuracy(toy_model, toy_dataset)
        for repr_ in (FixedPointRepr(4, 5), FixedPointRepr(2, 3), FixedPointRepr(8, 6)):
            ind = eval_acc_loss(toy_model, toy_dataset, ("fc", ParamKind.WEIGHTS),
                                repr_, independent=True, a0=a0)
            dep = eval_acc_loss(toy_model, toy_dataset, ("fc", ParamKind.WEIGHTS),
                                repr_, independent=False,
                                plan=QuantizationPlan(), a0=a0)
            assert ind.delta_a == dep.delta_a
            assert ind.mode == "independent" and dep.mode == "dependent"

    def test_dependent_applies_plan(self, toy_model, toy_dataset):
        a0 = full_precision_accuracy(toy_model, toy_dataset)
        crush = QuantizationPlan({("c1", ParamKind.WEIGHTS): FixedPointRepr(1, 0)})
        target = ("fc", ParamKind.WEIGHTS)
        repr_ = FixedPointRepr(8, 6)
        ind = eval_acc_loss(toy_model, toy_dataset, target, repr_, True, crush, a0=a0)
        dep = eval_acc_loss(toy_model, toy_dataset, target, repr_, False, crush, a0=a0)
        # the crushed conv only shows up in the dependent measurement
        assert dep.delta_a > ind.delta_a

    def test_rejects_non_quantizable_target(self, toy_model, toy_dataset):
        with pytest.raises(NonQuantizableLayerError):
            eval_acc_loss(toy_model, toy_dataset, ("bn1", ParamKind.WEIGHTS),
                          FixedPointRepr(8, 4), True, a0=0.9)

    def test_rejects_zero_a0(self, toy_model, toy_dataset):
        with pytest.raises(ValueError):
            eval_acc_loss(toy_model, toy_dataset, ("c1", ParamKind.WEIGHTS),
                          FixedPointRepr(8, 4), True, a0=0.0)

    def test_negative_loss_is_possible_and_preserved(self, toy_model, toy_dataset):
        # losses are reported as-is; this just checks no flooring happens
        a0 = full_precision_accuracy(toy_model, toy_dataset)
        rec = eval_acc_loss(toy_model, toy_dataset, ("c1", ParamKind.WEIGHTS),
                            FixedPointRepr(6, 6), True, a0=a0)
        assert rec.delta_a == (a0 - accuracy(
            toy_model, toy_dataset,
            QuantizationPlan({("c1", ParamKind.WEIGHTS): FixedPointRepr(6, 6)}))) / a0


class TestApplyPlan:
    def test_empty_plan_keeps_accuracy(self, toy_model, toy_dataset):
        applied = apply_plan(toy_model, QuantizationPlan())
        assert accuracy(applied, toy_dataset) == accuracy(toy_model, toy_dataset)

    def test_original_model_untouched(self, toy_model):
        before = toy_model.tensors["c1.w"].copy()
        plan = QuantizationPlan({("c1", ParamKind.WEIGHTS): FixedPointRepr(3, 2)})
        apply_plan(toy_model, plan)
        np.testing.assert_array_equal(toy_model.tensors["c1.w"], before)
        assert toy_model.activation_plan == {}

    def test_two_code_paths_agree(self, toy_model, toy_dataset):
        plan = QuantizationPlan({
            ("c1", ParamKind.WEIGHTS): FixedPointRepr(5, 4),
            ("c1", ParamKind.BIASES): FixedPointRepr(4, 5),
            ("c1", ParamKind.ACTIVATIONS): FixedPointRepr(6, 2),
            ("fc", ParamKind.WEIGHTS): FixedPointRepr(5, 3),
            ("fc", ParamKind.BIASES): FixedPointRepr(3, 5),
            ("fc", ParamKind.ACTIVATIONS): FixedPointRepr(7, 3),
        })
        applied = apply_plan(toy_model, plan)
        assert accuracy(applied, toy_dataset) == accuracy(toy_model, toy_dataset, plan)

    def test_apply_is_pure_and_repeatable(self, toy_model):
        plan = QuantizationPlan({("fc", ParamKind.WEIGHTS): FixedPointRepr(4, 4)})
        m1 = apply_plan(toy_model, plan)
        m2 = apply_plan(toy_model, plan)
        np.testing.assert_array_equal(m1.tensors["fc.w"], m2.tensors["fc.w"])

    def test_bias_pruning_zeroes_biases(self, toy_model):
        plan = QuantizationPlan({
            ("c1", ParamKind.BIASES): FixedPointRepr(1, 0),
            ("fc", ParamKind.BIASES): FixedPointRepr(1, 0),
        })
        applied = apply_plan(toy_model, plan)
        assert not applied.tensors["c1.b"].any()
        assert not applied.tensors["fc.b"].any()

    def test_rejects_non_quantizable_entry(self, toy_model):
        plan = QuantizationPlan({("p1", ParamKind.WEIGHTS): FixedPointRepr(4, 4)})
        with pytest.raises(NonQuantizableLayerError):
            apply_plan(toy_model, plan)

    def test_order_insensitive(self, toy_model, toy_dataset):
        entries = [
            (("c1", ParamKind.WEIGHTS), FixedPointRepr(5, 4)),
            (("fc", ParamKind.WEIGHTS), FixedPointRepr(4, 3)),
            (("c1", ParamKind.ACTIVATIONS), FixedPointRepr(6, 2)),
        ]
        fwd = apply_plan(toy_model, QuantizationPlan(dict(entries)))
        rev = apply_plan(toy_model, QuantizationPlan(dict(reversed(entries))))
        assert accuracy(fwd, toy_dataset) == accuracy(rev, toy_dataset)


class TestNetworkAccLoss:
    def test_empty_plan_loss_is_zero(self, toy_model, toy_dataset):
        assert network_acc_loss(toy_model, toy_dataset, QuantizationPlan()) == 0.0

    def test_identity_plan_lossless(self, toy_model, toy_dataset):
        plan = identity_plan(toy_model, toy_dataset)
        assert abs(network_acc_loss(toy_model, toy_dataset, plan)) <= 1e-9


class TestPlanSerialization:
    def test_round_trip(self, tmp_path, toy_model):
        plan = QuantizationPlan({
            ("c1", ParamKind.WEIGHTS): FixedPointRepr(5, 4),
            ("fc", ParamKind.ACTIVATIONS): FixedPointRepr(7, -2),
        })
        path = tmp_path / "plan.json"
        plan.save(path, toy_model)
        loaded = QuantizationPlan.load(path)
        assert loaded.entries == plan.entries

    def test_duplicate_entries_rejected(self):
        records = [
            {"layer": "c1", "kind": "weights", "bw": 5, "f": 4},
            {"layer": "c1", "kind": "weights", "bw": 4, "f": 4},
        ]
        with pytest.raises(ValueError):
            QuantizationPlan.from_records(records)
