"""Command-line entry points: quantize, bruteforce, baseline, eval.

Exit codes: 0 success, 2 usage or parse error, 3 budget infeasible,
4 file I/O error.  Every command writes a run manifest capturing the
resolved configuration and input digests, so runs can be reproduced.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from fxq.errors import BudgetInfeasibleError, FxqError
from fxq.inference import accuracy, calibrate_activations
from fxq.metrics import bitwidth_table, build_report
from fxq.model_ir import file_digest, load_dataset, load_model
from fxq.plan import ParamKind, QuantizationPlan
from fxq.quantizer import full_precision_accuracy, network_acc_loss
from fxq.search import (
    PARAM_ORDER_AWB,
    PARAM_ORDER_WBA,
    AllocationScheme,
    SearchConfig,
    baseline_fixed_bitwidth,
    brute_force_grid,
    final_method,
    opt_search,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_BUDGET = 3
EXIT_IO = 4


def _add_io_args(p: argparse.ArgumentParser, with_data: bool = True):
    p.add_argument("--model", required=True, help="model manifest (JSON)")
    if with_data:
        p.add_argument("--data", required=True, help="dataset file (FXQD)")
    p.add_argument("--out-dir", default=".", help="directory for output files")
    p.add_argument("--calib-size", type=int, default=None,
                   help="number of examples used for activation calibration "
                        "(default: the whole dataset)")
    p.add_argument("--batch-size", type=int, default=None,
                   help="evaluation batch size (default: one batch)")
    p.add_argument("--threads", type=int, default=None,
                   help="cap BLAS threads used during evaluation")


def _parse_range(text: str) -> range:
    try:
        lo, hi = text.split(":")
        lo, hi = int(lo), int(hi)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"range must look like LO:HI, got {text!r}") from None
    if hi < lo:
        raise argparse.ArgumentTypeError(f"empty range {text!r}")
    return range(lo, hi + 1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fxq",
        description="Fixed-point post-training quantization with budgeted bitwidth search",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    q = sub.add_parser("quantize", help="search a quantization plan under a loss budget")
    _add_io_args(q)
    q.add_argument("--epsilon", type=float, required=True,
                   help="acceptable relative accuracy loss for the quantized network")
    q.add_argument("--bw0", type=int, default=12, help="initial bitwidth")
    q.add_argument("--delta", type=float, default=0.001,
                   help="loss-difference threshold when arbitrating search phases")
    q.add_argument("--mode", choices=["independent", "dependent"], default=None,
                   help="evaluation mode; overrides the default half-and-half recipe")
    q.add_argument("--scheme", choices=[s.value for s in AllocationScheme], default=None,
                   help="budget allocation scheme; overrides the default recipe")
    q.add_argument("--order", choices=["wba", "awb"], default=None,
                   help="parameter processing order; overrides the default recipe")
    q.add_argument("--layer-order", choices=["forward", "reverse"], default=None)

    b = sub.add_parser("bruteforce", help="loss over a (bw, f) grid for one target")
    _add_io_args(b)
    b.add_argument("--layer", required=True, help="quantizable layer id")
    b.add_argument("--kind", required=True,
                   choices=[k.value for k in ParamKind])
    b.add_argument("--bw-range", type=_parse_range, required=True, metavar="LO:HI")
    b.add_argument("--f-range", type=_parse_range, required=True, metavar="LO:HI")
    b.add_argument("--mode", choices=["independent", "dependent"], default="independent")

    s = sub.add_parser("baseline", help="uniform-bitwidth plan with clip-free offsets")
    _add_io_args(s)
    s.add_argument("--bw", type=int, default=8, help="uniform bitwidth (>= 2)")

    e = sub.add_parser("eval", help="accuracy of a model, optionally under a plan")
    _add_io_args(e)
    e.add_argument("--plan", default=None, help="plan file (JSON) to apply")

    return parser


def _write_manifest(out_dir: Path, command: str, config: dict,
                    inputs: dict, outputs: list[str], started: float):
    manifest = {
        "command": command,
        "config": config,
        "inputs": {
            name: {"path": str(p), "sha256": file_digest(p)}
            for name, p in inputs.items()
        },
        "outputs": outputs,
        "duration_s": round(time.monotonic() - started, 3),
    }
    (out_dir / "run_manifest.json").write_text(json.dumps(manifest, indent=1), "utf-8")


def _load_inputs(args):
    for name in ("model", "data"):
        path = getattr(args, name, None)
        if path is not None and not Path(path).is_file():
            raise OSError(f"{name} file not found: {path}")
    model = load_model(args.model)
    dataset = load_dataset(args.data)
    return model, dataset


def cmd_quantize(args) -> int:
    started = time.monotonic()
    model, dataset = _load_inputs(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    profile = calibrate_activations(model, dataset, limit=args.calib_size,
                                    batch_size=args.batch_size)

    custom = any(v is not None for v in (args.mode, args.scheme, args.order,
                                         args.layer_order))
    if custom:
        scheme = AllocationScheme(args.scheme or "linear")
        config = SearchConfig(
            bw0=args.bw0,
            independent=(args.mode == "independent"),
            delta=args.delta,
            param_order=PARAM_ORDER_AWB if args.order == "awb" else PARAM_ORDER_WBA,
            layer_order=args.layer_order or "forward",
            schemes={k: scheme for k in ParamKind},
            terminal_eps={k: args.epsilon for k in ParamKind},
            batch_size=args.batch_size,
        )
        report = opt_search(model, dataset, profile, config)
    else:
        report = final_method(model, dataset, profile, epsilon=args.epsilon,
                              bw0=args.bw0, delta=args.delta,
                              batch_size=args.batch_size)

    reference = baseline_fixed_bitwidth(model, profile, 8)
    cost = build_report(model, dataset, report.plan, reference, a0=report.a0,
                        batch_size=args.batch_size)

    report.plan.save(out_dir / "plan.json", model)
    report.save(out_dir / "search_report.json", model)
    cost.save(out_dir / "cost_report.json")
    (out_dir / "bitwidths.csv").write_text(bitwidth_table(model, report.plan), "utf-8")

    config_json = {k: v for k, v in vars(args).items() if k != "command"}
    _write_manifest(out_dir, "quantize", config_json,
                    {"model": args.model, "data": args.data},
                    ["plan.json", "search_report.json", "cost_report.json",
                     "bitwidths.csv"], started)

    print(f"full-precision accuracy a0 = {report.a0:.4f}")
    print(f"network accuracy loss = {cost.delta_a:.6f} (budget {args.epsilon})")
    print(f"memory bits: {cost.memory_bits} "
          f"({100 * (1 - cost.memory_ratio):.1f}% below 8-bit baseline)")
    print(f"multiplication cost: {cost.mult_cost} "
          f"({100 * (1 - cost.mult_cost_ratio):.1f}% below 8-bit baseline)")
    print(f"wrote plan and reports to {out_dir}")
    return EXIT_OK


def cmd_bruteforce(args) -> int:
    started = time.monotonic()
    model, dataset = _load_inputs(args)
    if args.layer not in model.quantizable_index:
        print(f"error: layer {args.layer!r} is not a quantizable layer of the model",
              file=sys.stderr)
        return EXIT_USAGE
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    kind = ParamKind(args.kind)
    grid = brute_force_grid(model, dataset, (args.layer, kind),
                            args.bw_range, args.f_range,
                            independent=(args.mode == "independent"),
                            batch_size=args.batch_size)
    lines = ["bw\\f," + ",".join(str(f) for f in args.f_range)]
    for bw, row in zip(args.bw_range, grid):
        lines.append(f"{bw}," + ",".join(repr(v) for v in row))
    csv_path = out_dir / f"grid_{args.layer}_{kind.value}.csv"
    csv_path.write_text("\n".join(lines) + "\n", "utf-8")

    config_json = {k: str(v) if isinstance(v, range) else v
                   for k, v in vars(args).items() if k != "command"}
    _write_manifest(out_dir, "bruteforce", config_json,
                    {"model": args.model, "data": args.data},
                    [csv_path.name], started)
    print(f"wrote {grid.shape[0]}x{grid.shape[1]} grid to {csv_path}")
    return EXIT_OK


def cmd_baseline(args) -> int:
    started = time.monotonic()
    if args.bw < 2:
        print("error: --bw must be >= 2", file=sys.stderr)
        return EXIT_USAGE
    model, dataset = _load_inputs(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    profile = calibrate_activations(model, dataset, limit=args.calib_size,
                                    batch_size=args.batch_size)
    plan = baseline_fixed_bitwidth(model, profile, args.bw)
    a0 = full_precision_accuracy(model, dataset, batch_size=args.batch_size)
    cost = build_report(model, dataset, plan, plan, a0=a0,
                        batch_size=args.batch_size)
    plan.save(out_dir / "baseline_plan.json", model)
    cost.save(out_dir / "baseline_cost_report.json")

    config_json = {k: v for k, v in vars(args).items() if k != "command"}
    _write_manifest(out_dir, "baseline", config_json,
                    {"model": args.model, "data": args.data},
                    ["baseline_plan.json", "baseline_cost_report.json"], started)
    print(f"baseline bw={args.bw}: accuracy loss = {cost.delta_a:.6g}")
    print(f"memory bits: {cost.memory_bits}, multiplication cost: {cost.mult_cost}")
    return EXIT_OK


def cmd_eval(args) -> int:
    model, dataset = _load_inputs(args)
    if args.plan is not None:
        if not Path(args.plan).is_file():
            raise OSError(f"plan file not found: {args.plan}")
        plan = QuantizationPlan.load(args.plan)
        a0 = full_precision_accuracy(model, dataset, batch_size=args.batch_size)
        a_q = accuracy(model, dataset, plan, batch_size=args.batch_size)
        print(f"accuracy = {a_q:.4f}")
        print(f"delta_a = {network_acc_loss(model, dataset, plan, a0=a0, batch_size=args.batch_size):.6f}")
    else:
        a0 = full_precision_accuracy(model, dataset, batch_size=args.batch_size)
        print(f"accuracy = {a0:.4f}")
    return EXIT_OK


_COMMANDS = {
    "quantize": cmd_quantize,
    "bruteforce": cmd_bruteforce,
    "baseline": cmd_baseline,
    "eval": cmd_eval,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    runner = _COMMANDS[args.command]

    def run() -> int:
        try:
            return runner(args)
        except BudgetInfeasibleError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_BUDGET
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_IO
        except (FxqError, ValueError, json.JSONDecodeError, KeyError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE

    threads = getattr(args, "threads", None)
    if threads is not None:
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=threads):
            return run()
    return run()


if __name__ == "__main__":
    sys.exit(main())
