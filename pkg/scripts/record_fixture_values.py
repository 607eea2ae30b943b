#!/usr/bin/env python3
"""Recompute and pin the fixture-dependent measured values.

Run this after regenerating tests/fixtures/ with the exporter; it writes
recorded.json next to the sequential bundle.  The acceptance suite asserts
both the specified bounds and equality with these pinned values.
"""

import json
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

from fxq.fixedpoint import FixedPointRepr, clipped_count
from fxq.inference import accuracy, calibrate_activations
from fxq.metrics import memory_bits, mult_cost
from fxq.model_ir import load_dataset, load_model
from fxq.plan import ParamKind
from fxq.quantizer import network_acc_loss
from fxq.search import (
    AllocationScheme,
    SearchConfig,
    baseline_fixed_bitwidth,
    brute_force_grid,
    final_method,
    opt_search,
)


def acceptable_min_bw(grid, bws, fs, threshold):
    mask = grid <= threshold
    seen = np.zeros_like(mask, dtype=bool)
    best = None
    for i in range(mask.shape[0]):
        for j in range(mask.shape[1]):
            if not mask[i, j] or seen[i, j]:
                continue
            stack, comp_min = [(i, j)], bws[i]
            seen[i, j] = True
            while stack:
                a, b = stack.pop()
                comp_min = min(comp_min, bws[a])
                for da, db in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                    na, nb = a + da, b + db
                    if 0 <= na < mask.shape[0] and 0 <= nb < mask.shape[1] \
                            and mask[na, nb] and not seen[na, nb]:
                        seen[na, nb] = True
                        stack.append((na, nb))
            best = comp_min if best is None else min(best, comp_min)
    return best


def main():
    import os
    root = os.environ.get("FXQ_FIXTURE_DIR",
                          Path(__file__).resolve().parent.parent / "tests" / "fixtures")
    seq_dir = Path(root) / "sequential"
    model = load_model(seq_dir / "model.json")
    dataset = load_dataset(seq_dir / "dataset.fxqd")
    profile = calibrate_activations(model, dataset)
    a0 = accuracy(model, dataset)
    print(f"a0 = {a0}")

    out = {"a0": a0}

    # the paper-style starting point is 12 bits; when the fixture's first
    # layer cannot hold its sliver of budget there, the documented response
    # is a larger initial bitwidth
    from fxq.errors import BudgetInfeasibleError
    report = None
    for bw0 in (12, 14, 16):
        print(f"running final method (epsilon = 0.01, bw0 = {bw0})...")
        try:
            report = final_method(model, dataset, profile, epsilon=0.01, bw0=bw0)
            break
        except BudgetInfeasibleError as exc:
            print(f"  infeasible at bw0={bw0}: {exc}")
    if report is None:
        raise SystemExit("final method infeasible up to bw0=16; rebuild the fixture")
    delta = network_acc_loss(model, dataset, report.plan, a0=report.a0)
    baseline8 = baseline_fixed_bitwidth(model, profile, 8)
    out["final_method"] = {
        "bw0": bw0,
        "network_delta_a": delta,
        "memory_bits": memory_bits(model, report.plan),
        "mult_cost": mult_cost(model, report.plan),
        "baseline_memory_bits": memory_bits(model, baseline8),
        "baseline_mult_cost": mult_cost(model, baseline8),
        "evaluations": len(report.trace),
        "weight_bitwidths": [report.plan.get(lid, ParamKind.WEIGHTS).bw
                             for lid in model.quantizable_index],
        "bias_bitwidths": [report.plan.get(lid, ParamKind.BIASES).bw
                           for lid in model.quantizable_index],
        "activation_bitwidths": [report.plan.get(lid, ParamKind.ACTIVATIONS).bw
                                 for lid in model.quantizable_index],
    }
    mem_red = 1 - out["final_method"]["memory_bits"] / out["final_method"]["baseline_memory_bits"]
    mc_red = 1 - out["final_method"]["mult_cost"] / out["final_method"]["baseline_mult_cost"]
    print(f"  delta_a = {delta:.6f}, memory -{100*mem_red:.1f}%, mult -{100*mc_red:.1f}%")

    ind = None
    for ind_bw0 in (8, 10, 12):
        print(f"running independent search (epsilon = 0.003, bw0 = {ind_bw0})...")
        config = SearchConfig(bw0=ind_bw0, independent=True,
                              schemes={k: AllocationScheme.CONSTANT for k in ParamKind},
                              terminal_eps={k: 0.003 for k in ParamKind})
        try:
            ind = opt_search(model, dataset, profile, config)
            break
        except BudgetInfeasibleError as exc:
            print(f"  infeasible at bw0={ind_bw0}: {exc}")
    if ind is None:
        raise SystemExit("independent search infeasible up to bw0=12; rebuild the fixture")
    ind_delta = network_acc_loss(model, dataset, ind.plan, a0=ind.a0)
    out["independent_plan"] = {
        "bw0": ind_bw0,
        "network_delta_a": ind_delta,
        "budget": 0.003,
        "ratio_over_budget": ind_delta / 0.003,
        "evaluations": len(ind.trace),
    }
    print(f"  network delta_a = {ind_delta:.6f} ({ind_delta/0.003:.1f}x budget)")

    print("running brute-force grid on layer-2 weights (bw 2..8, f 0..8)...")
    layer2 = model.quantizable_index[1]
    bws, fs = list(range(2, 9)), list(range(0, 9))
    grid = brute_force_grid(model, dataset, (layer2, ParamKind.WEIGHTS), bws, fs)
    out["grid"] = {
        "layer": layer2,
        "min_acceptable_bw": acceptable_min_bw(grid, bws, fs, 0.003),
        "min_delta_a": float(grid.min()),
    }
    print(f"  min acceptable bw = {out['grid']['min_acceptable_bw']}")

    print("running 8-bit baseline...")
    out["baseline8"] = {
        "network_delta_a": network_acc_loss(model, dataset, baseline8, a0=a0),
    }
    print(f"  baseline delta_a = {out['baseline8']['network_delta_a']:.6f}")

    from fxq.quantizer import eval_acc_loss
    rec = eval_acc_loss(model, dataset, (layer2, ParamKind.WEIGHTS),
                        FixedPointRepr(3, 4), independent=True, a0=a0)
    out["layer2_w_3_4"] = {"delta_a": rec.delta_a}
    print(f"  layer-2 weights at (3,4): delta_a = {rec.delta_a:.6f}")

    (seq_dir / "recorded.json").write_text(json.dumps(out, indent=1))
    print(f"wrote {seq_dir / 'recorded.json'}")


if __name__ == "__main__":
    main()
