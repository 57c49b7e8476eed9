"""Command-line entry point wiring the full workflow:
parse -> predict -> price -> optimize -> report.

Exit codes: 0 success (an infeasible plan is still a successful
computation, reported as "NA"), 2 usage/parse/validation errors,
3 internal contract violations.  Set EDA_PLANNER_LOG=debug|info|warning
to control verbosity.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path
from typing import Dict, Optional

from . import __version__
from .errors import (
    ConfigurationError,
    ContractViolation,
    EdaPlannerError,
    ModelFormatError,
    ParseError,
    StateError,
    ValidationError,
)
from .aiger import parse_aiger_file
from .gcn import GcnModel, init_model, load_model, predict_runtimes, save_model, train
from .graphs import DesignGraph, SourceKind, dump_graph, graph_stats, load_graph_file
from .mckp import (
    DeploymentPlan,
    MckpInstance,
    Objective,
    StageChoices,
    Choice,
    brute_force_oracle,
    build_instance,
    compute_savings,
    compute_speedups,
    instance_from_tables,
    solve_dp,
    validate_instance,
)
from .netlist import parse_netlist_json_file, parse_verilog_subset, star_expand
from .pricing import format_cost, job_cost, load_pricing, recommend_family
from .stages import Stage, VCPU_OPTIONS
from .synth_data import default_params, gen_dataset, load_samples, write_dataset

log = logging.getLogger("eda_planner")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INTERNAL = 3


def load_design(path) -> DesignGraph:
    """Dispatch on extension: .aag -> AIGER, .json -> netlist, .v -> Verilog
    subset, .graph -> canonical dump."""
    p = Path(path)
    if not p.exists():
        raise ConfigurationError(f"no such file: {p}")
    ext = p.suffix.lower()
    if ext == ".aag":
        return parse_aiger_file(p)
    if ext == ".json":
        return star_expand(parse_netlist_json_file(p))
    if ext == ".v":
        return star_expand(parse_verilog_subset(p.read_text(encoding="utf-8"), name_hint=p.stem))
    if ext == ".graph":
        return load_graph_file(p)
    raise ConfigurationError(f"cannot infer design format from extension {ext!r} ({p})")


# ---------------------------------------------------------------------------
# Subcommands.


def cmd_parse(args) -> int:
    graph = load_design(args.design)
    stats = graph_stats(graph)
    if args.dump:
        with open(args.dump, "w", encoding="utf-8") as fh:
            fh.write(dump_graph(graph))
    if args.format == "json":
        print(json.dumps({
            "name": stats.name,
            "source": graph.source_kind.value,
            "nodes": stats.node_count,
            "edges": stats.edge_count,
            "kinds": stats.kind_counts,
            "max_fanout": stats.max_fanout,
            "depth": stats.depth_label(),
        }, indent=1))
    else:
        print(f"design       {stats.name}")
        print(f"source       {graph.source_kind.value}")
        print(f"nodes        {stats.node_count}")
        print(f"edges        {stats.edge_count}")
        for kind, count in stats.kind_counts.items():
            print(f"  {kind:<15} {count}")
        print(f"max fanout   {stats.max_fanout}")
        print(f"depth        {stats.depth_label()}")
    return EXIT_OK


def cmd_train(args) -> int:
    application = Stage.from_name(args.application)
    samples = load_samples(args.dataset)
    model = init_model(application, seed=args.seed, aggregation=args.aggregation)
    history = train(model, samples, epochs=args.epochs, lr=args.lr)
    save_model(model, args.out)
    if args.history:
        with open(args.history, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["epoch", "mean_loss"])
            for epoch, loss in enumerate(history, start=1):
                writer.writerow([epoch, repr(loss)])
    log.info("trained %s model on %d samples for %d epochs (final loss %.6f)",
             application.value, len(samples), args.epochs, history[-1])
    print(f"model written to {args.out} (final epoch loss {history[-1]:.6f})")
    return EXIT_OK


def cmd_predict(args) -> int:
    model = load_model(args.model)
    graph = load_design(args.design)
    runtimes = predict_runtimes(model, graph)
    speedups = compute_speedups(runtimes)
    doc = {
        "design": graph.name,
        "application": model.application.value,
        "runtimes": {str(k): runtimes[k] for k in VCPU_OPTIONS},
        "speedups": {str(k): speedups[k] for k in VCPU_OPTIONS},
    }
    if args.format == "json":
        print(json.dumps(doc, indent=1))
    else:
        print(f"design       {graph.name}")
        print(f"application  {model.application.value}")
        print("vcpus  runtime_s  speedup")
        for k in VCPU_OPTIONS:
            print(f"{k:>5}  {runtimes[k]:>9}  {speedups[k]:.3f}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1)
    return EXIT_OK


def _read_runtimes_files(paths) -> tuple[Dict[Stage, Dict[int, int]], Dict[Stage, Dict[int, float]]]:
    """Merge one combined or several per-stage runtime JSON files.

    Returns (runtimes, costs); costs only holds stages whose file carried
    explicit cost tables.
    """
    runtimes: Dict[Stage, Dict[int, int]] = {}
    costs: Dict[Stage, Dict[int, float]] = {}

    def add_stage(stage: Stage, block) -> None:
        if stage in runtimes:
            raise ConfigurationError(f"duplicate runtimes for stage {stage.value}")
        try:
            runtimes[stage] = {int(k): int(v) for k, v in block["runtimes"].items()}
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigurationError(f"bad runtimes block for {stage.value}: {exc}") from None
        if "costs" in block and block["costs"] is not None:
            costs[stage] = {int(k): float(v) for k, v in block["costs"].items()}

    for path in paths:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except FileNotFoundError:
            raise ConfigurationError(f"no such file: {path}") from None
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON: {exc}") from None
        if "stages" in doc:
            for stage_name, block in doc["stages"].items():
                add_stage(Stage.from_name(stage_name), block)
        elif "application" in doc:
            add_stage(Stage.from_name(doc["application"]), doc)
        else:
            raise ValidationError(f"{path}: expected a 'stages' map or an 'application' record")
    return runtimes, costs


def _build_optimize_instance(args) -> MckpInstance:
    runtimes, costs = _read_runtimes_files(args.runtimes)
    missing = [s for s in Stage if s not in runtimes]
    if missing:
        raise ConfigurationError(
            "runtimes missing for stages: " + ", ".join(s.value for s in missing)
        )
    stages_without_costs = [s for s in Stage if s not in costs]
    if stages_without_costs:
        if not args.pricing:
            raise ConfigurationError(
                "no cost tables for "
                + ", ".join(s.value for s in stages_without_costs)
                + "; provide --pricing"
            )
        pricing = load_pricing(args.pricing)
        for stage in stages_without_costs:
            family = recommend_family(stage)
            costs[stage] = {
                v: job_cost(runtimes[stage][v], pricing.price_for(family, v))
                for v in runtimes[stage]
            }
    return instance_from_tables(runtimes, costs, args.deadline)


def _plan_report(plan: DeploymentPlan, instance: MckpInstance) -> Dict:
    doc: Dict = {
        "feasible": plan.feasible,
        "deadline_s": instance.capacity_s,
        "objective": plan.objective.value,
    }
    if not plan.feasible:
        doc.update({"selections": None, "total_runtime_s": None,
                    "total_cost": None, "savings": None})
        return doc
    savings = compute_savings(plan, instance)
    doc.update({
        "selections": {s.value: plan.selection[s] for s in Stage if s in plan.selection},
        "total_runtime_s": plan.total_runtime_s,
        "total_cost": round(plan.total_cost, 4),
        "objective_value": plan.objective_value,
        "savings": {
            "over_provision_cost": round(savings.over_provision_cost, 4),
            "under_provision_cost": round(savings.under_provision_cost, 4),
            "savings_vs_over_pct": round(savings.savings_vs_over_pct, 2),
            "savings_vs_under_pct": round(savings.savings_vs_under_pct, 2),
            "runtime_overhead_vs_over_s": savings.runtime_overhead_vs_over_s,
        },
    })
    return doc


def _print_plan_table(plan: DeploymentPlan, instance: MckpInstance) -> None:
    print(f"deadline     {instance.capacity_s} s")
    print(f"objective    {plan.objective.value}")
    if not plan.feasible:
        print("result       NA (deadline cannot be met with any configuration)")
        return
    print("stage       vcpus  runtime_s  cost")
    for sc in instance.stages:
        v = plan.selection[sc.stage]
        choice = next(ch for ch in sc.choices if ch.vcpus == v)
        print(f"{sc.stage.value:<11} {v:>5}  {choice.runtime_s:>9}  {format_cost(choice.cost)}")
    print(f"total              {plan.total_runtime_s:>9}  {format_cost(plan.total_cost)}")
    savings = compute_savings(plan, instance)
    print(f"over-provisioning (all 8 vCPUs):  cost {format_cost(savings.over_provision_cost)}, "
          f"runtime {savings.over_provision_runtime_s} s")
    print(f"under-provisioning (all 1 vCPU):  cost {format_cost(savings.under_provision_cost)}, "
          f"runtime {savings.under_provision_runtime_s} s")
    print(f"savings vs over-provisioning:  {savings.savings_vs_over_pct:.2f}%")
    print(f"savings vs under-provisioning: {savings.savings_vs_under_pct:.2f}%")


def _print_plan_csv(plan: DeploymentPlan, instance: MckpInstance) -> None:
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["stage", "vcpus", "runtime_s", "cost"])
    if plan.feasible:
        for sc in instance.stages:
            v = plan.selection[sc.stage]
            choice = next(ch for ch in sc.choices if ch.vcpus == v)
            writer.writerow([sc.stage.value, v, choice.runtime_s, f"{choice.cost:.4f}"])
        writer.writerow(["total", "", plan.total_runtime_s, f"{plan.total_cost:.4f}"])
    else:
        writer.writerow(["NA", "", "", ""])


def _emit_plan_output(args, plan: DeploymentPlan, instance: MckpInstance) -> None:
    if args.format == "json":
        print(json.dumps(_plan_report(plan, instance), indent=1))
    elif args.format == "csv":
        _print_plan_csv(plan, instance)
    else:
        _print_plan_table(plan, instance)
    if args.emit_svg:
        write_cost_chart_svg(args.emit_svg, plan, instance)


def cmd_optimize(args) -> int:
    instance = _build_optimize_instance(args)
    plan = solve_dp(instance, Objective(args.objective))
    _emit_plan_output(args, plan, instance)
    return EXIT_OK


def cmd_plan(args) -> int:
    model_dir = Path(args.model_dir)
    estimates: Dict[Stage, Dict[int, int]] = {}
    for stage in Stage:
        model_path = model_dir / f"{stage.value}.model"
        if not model_path.exists():
            raise ConfigurationError(f"missing model for stage {stage.value}: {model_path}")
        model = load_model(model_path)
        if model.application is not stage:
            raise ConfigurationError(
                f"{model_path} is a {model.application.value} model, expected {stage.value}"
            )
        design_path = args.aig if stage is Stage.SYNTHESIS else args.netlist
        graph = load_design(design_path)
        estimates[stage] = predict_runtimes(model, graph)
        log.info("%s: predicted %s", stage.value, estimates[stage])

    pricing = load_pricing(args.pricing)
    instance = build_instance(estimates, pricing, args.deadline)
    plan = solve_dp(instance, Objective(args.objective))
    _emit_plan_output(args, plan, instance)
    return EXIT_OK


def cmd_gen_data(args) -> int:
    applications = list(Stage) if args.application == "all" else [Stage.from_name(args.application)]
    outdir = Path(args.out)
    for application in applications:
        params = default_params(
            application, size_class=args.size_class, noise_rel=args.noise, seed=args.seed
        )
        dataset = gen_dataset(args.graphs, params, seed=args.seed, size_class=args.size_class)
        target = outdir / application.value if len(applications) > 1 else outdir
        train_path, test_path = write_dataset(dataset, target)
        print(f"{application.value}: wrote {train_path} ({len(dataset.train_indices)} samples) "
              f"and {test_path} ({len(dataset.test_indices)} samples)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# SVG cost chart (plan vs over/under-provisioning), template-rendered.


def write_cost_chart_svg(path, plan: DeploymentPlan, instance: MckpInstance) -> None:
    if not plan.feasible:
        raise StateError("cannot chart an infeasible plan")
    savings = compute_savings(plan, instance)
    bars = [
        ("plan", plan.total_cost, "#4c78a8"),
        ("over-provision", savings.over_provision_cost, "#e45756"),
        ("under-provision", savings.under_provision_cost, "#f58518"),
    ]
    width, height, margin = 480, 320, 48
    peak = max(value for _, value, _ in bars) or 1.0
    bar_w = (width - 2 * margin) / len(bars) * 0.6
    step = (width - 2 * margin) / len(bars)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<text x="{width / 2}" y="24" text-anchor="middle" font-size="15" '
        f'font-family="sans-serif">Deployment cost vs provisioning baselines</text>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="#333"/>',
    ]
    for i, (label, value, color) in enumerate(bars):
        bar_h = (height - 2 * margin) * (value / peak)
        x = margin + i * step + (step - bar_w) / 2
        y = height - margin - bar_h
        parts.append(f'<rect x="{x:.1f}" y="{y:.1f}" width="{bar_w:.1f}" '
                     f'height="{bar_h:.1f}" fill="{color}"/>')
        parts.append(f'<text x="{x + bar_w / 2:.1f}" y="{height - margin + 18}" '
                     f'text-anchor="middle" font-size="12" font-family="sans-serif">{label}</text>')
        parts.append(f'<text x="{x + bar_w / 2:.1f}" y="{y - 6:.1f}" text-anchor="middle" '
                     f'font-size="12" font-family="sans-serif">{format_cost(value)}</text>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")


# ---------------------------------------------------------------------------
# Argument parsing and dispatch.


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eda-planner",
        description="Predict EDA stage runtimes and pick cost-optimal cloud machine sizes.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="parse a design and print graph statistics")
    p.add_argument("design", help="design file (.aag, .json, .v, .graph)")
    p.add_argument("--dump", help="write the canonical graph dump to this path")
    p.add_argument("--format", choices=["table", "json"], default="table")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("train", help="train a runtime model on a JSONL dataset")
    p.add_argument("--dataset", required=True, help="train.jsonl path")
    p.add_argument("--application", required=True,
                   help="synthesis | placement | routing | sta")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--aggregation", choices=["in", "undirected"], default="in")
    p.add_argument("--out", required=True, help="output model path")
    p.add_argument("--history", help="optional loss-history CSV path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict runtimes for a design")
    p.add_argument("--model", required=True)
    p.add_argument("design")
    p.add_argument("--format", choices=["table", "json"], default="table")
    p.add_argument("--out", help="also write the JSON report here")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("optimize", help="pick machine sizes under a deadline")
    p.add_argument("--runtimes", action="append", required=True,
                   help="runtimes JSON (combined or per-stage); repeatable")
    p.add_argument("--deadline", type=int, required=True, help="total runtime budget in seconds")
    p.add_argument("--objective", choices=[o.value for o in Objective],
                   default=Objective.RECIPROCAL_COST.value)
    p.add_argument("--pricing", help="pricing CSV (needed when costs are not embedded)")
    p.add_argument("--format", choices=["table", "json", "csv"], default="table")
    p.add_argument("--emit-svg", help="write a cost-comparison bar chart")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("plan", help="end-to-end: parse, predict, price, optimize")
    p.add_argument("--aig", required=True, help="synthesis-stage design (.aag)")
    p.add_argument("--netlist", required=True, help="physical-stage design (.json or .v)")
    p.add_argument("--model-dir", required=True,
                   help="directory with <stage>.model files for all four stages")
    p.add_argument("--pricing", required=True)
    p.add_argument("--deadline", type=int, required=True)
    p.add_argument("--objective", choices=[o.value for o in Objective],
                   default=Objective.RECIPROCAL_COST.value)
    p.add_argument("--format", choices=["table", "json", "csv"], default="table")
    p.add_argument("--emit-svg", help="write a cost-comparison bar chart")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("gen-data", help="generate a synthetic labeled dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--graphs", type=int, default=250)
    p.add_argument("--application", default="all",
                   help="one stage name or 'all' (default)")
    p.add_argument("--size-class", choices=["small", "medium", "large"], default="small")
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_data)

    return parser


def _setup_logging() -> None:
    level_name = os.environ.get("EDA_PLANNER_LOG", "warning").upper()
    level = getattr(logging, level_name, logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ValidationError, ConfigurationError, ModelFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ContractViolation, StateError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
