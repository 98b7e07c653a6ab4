"""Command-line surface.

Subcommands: analyze, optimize, compare, validate, and zoo (list/emit).
Architectures are given either as JSON files or as `zoo:NAME` shorthands.
Reports go to stdout, diagnostics to stderr; exit codes are part of the
contract: 0 success, 2 validation failure, 3 no-op optimization, 64 usage
error, 66 file error.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import sys
from typing import Any, Sequence

from . import __version__
from .archjson import DocumentError, parse, serialize
from .border_analysis import BorderReport, classify
from .graph_ir import ArchGraph, GraphValidationError, InputSpec, validate
from .rf_analysis import FrontierLimitError, propagate_dag
from .shape_cost_model import CostReport, ShapeError, cost_report
from .transforms import (
    ComparisonReport,
    TransformDelta,
    TransformError,
    compare,
    remove_stem_downsampling,
    truncate_at_border,
)
from .zoo import FAMILIES, build_named

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NOOP = 3
EXIT_USAGE = 64
EXIT_FILE = 66

FORMATS = ("text", "json", "csv")


class UsageError(Exception):
    """Bad argument values discovered after argparse (unknown zoo name, bad pass spec)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rfscope", description="Receptive-field border analysis for CNN architecture graphs.")
    parser.add_argument("--version", action="version", version=f"rfscope {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add_arch_args(p: argparse.ArgumentParser) -> None:
        p.add_argument("arch", help="architecture JSON file or zoo:NAME shorthand")
        p.add_argument("--input-size", nargs=2, type=int, metavar=("H", "W"), help="override input height and width")
        p.add_argument("--classes", type=int, default=10, help="class count for zoo heads (default 10)")

    p = sub.add_parser("analyze", help="receptive-field, border, and cost report")
    add_arch_args(p)
    p.add_argument("--format", choices=FORMATS, default="text")

    p = sub.add_parser("optimize", help="apply a rewrite pass and report the delta")
    add_arch_args(p)
    p.add_argument("--pass", dest="pass_spec", required=True, metavar="PASS",
                   help="truncate | remove-stem-downsampling[:N]")
    p.add_argument("--emit", metavar="OUT_JSON", help="write the rewritten architecture to this file")
    p.add_argument("--format", choices=("text", "json"), default="text")

    p = sub.add_parser("compare", help="side-by-side analysis of two architectures")
    p.add_argument("arch_a")
    p.add_argument("arch_b")
    p.add_argument("--input-size", nargs=2, type=int, metavar=("H", "W"))
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--format", choices=("text", "json"), default="text")

    p = sub.add_parser("validate", help="check a document; exit 0 if the graph is valid")
    add_arch_args(p)

    p = sub.add_parser("zoo", help="built-in architectures")
    zoo_sub = p.add_subparsers(dest="zoo_command", required=True, parser_class=_Parser)
    zoo_sub.add_parser("list", help="list builder names")
    p = zoo_sub.add_parser("emit", help="write a zoo model as an architecture document")
    p.add_argument("name")
    p.add_argument("--out", metavar="FILE", help="output path (stdout when omitted)")
    p.add_argument("--input-size", nargs=2, type=int, metavar=("H", "W"))
    p.add_argument("--classes", type=int, default=10)
    return parser


def _load_graph(ref: str, input_size: Sequence[int] | None, classes: int) -> ArchGraph:
    override = None
    if input_size is not None:
        h, w = input_size
        override = (h, w)
    if ref.startswith("zoo:"):
        name = ref[len("zoo:"):]
        spec = None
        if override is not None:
            spec = InputSpec(override[0], override[1], 3)
        try:
            return build_named(name, input_spec=spec, num_classes=classes)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    with open(ref, "rb") as handle:
        graph = parse(handle.read())
    if override is not None:
        graph = dataclasses.replace(
            graph, input=InputSpec(override[0], override[1], graph.input.channels)
        )
    return graph


def _num(value: int | float) -> int | str:
    return "global" if isinstance(value, float) and math.isinf(value) else int(value)


def _analysis_payload(graph: ArchGraph) -> dict[str, Any]:
    annotations = propagate_dag(graph)
    border = classify(graph, annotations)
    cost = cost_report(graph)
    cost_by_id = {c.node_id: c for c in cost.per_layer}
    rows = []
    for conv in border.per_conv:
        finite_j = [s.j for s in annotations[conv.node_id].in_frontier if not s.global_rf]
        rows.append(
            {
                "ordinal": conv.ordinal,
                "id": conv.node_id,
                "r_in_min": _num(conv.r_in_min),
                "r_in_max": _num(conv.r_in_max),
                "j_min": min(finite_j) if finite_j else "global",
                "j_max": max(finite_j) if finite_j else "global",
                "params": cost_by_id[conv.node_id].params,
                "macs": cost_by_id[conv.node_id].macs,
                "classification": conv.classification,
            }
        )
    return {
        "name": graph.name,
        "input": {
            "height": graph.input.height,
            "width": graph.input.width,
            "channels": graph.input.channels,
        },
        "resolution": graph.input.resolution,
        "border_min": border.border_min,
        "border_max": border.border_max,
        "border_min_node": border.border_min_node,
        "border_max_node": border.border_max_node,
        "per_conv": rows,
        "totals": {
            "params": cost.total_params,
            "macs": cost.total_macs,
            "flops": cost.total_flops,
            "gflops_mac1": cost.gflops_mac1,
        },
    }


_TABLE_COLUMNS = (
    "ordinal",
    "id",
    "r_in_min",
    "r_in_max",
    "j_min",
    "j_max",
    "params",
    "macs",
    "classification",
)


def _render_analysis_text(payload: dict[str, Any]) -> str:
    out = io.StringIO()
    spec = payload["input"]
    out.write(f"rfscope {__version__} analysis: {payload['name']}\n")
    out.write(
        f"input: {spec['height']}x{spec['width']}x{spec['channels']} (resolution {payload['resolution']})\n"
    )
    bmin = payload["border_min"]
    bmax = payload["border_max"]
    out.write(f"border_min: {'conv%d' % bmin if bmin else 'none'}")
    out.write(f"  border_max: {'conv%d' % bmax if bmax else 'none'}\n")
    totals = payload["totals"]
    out.write(
        f"totals: params={totals['params']} macs={totals['macs']} "
        f"flops={totals['flops']} gflops_mac1={totals['gflops_mac1']:.6f}\n\n"
    )
    id_width = max([len("id")] + [len(r["id"]) for r in payload["per_conv"]])
    header = (
        f"{'conv':>6} {'id':<{id_width}} {'r_in_min':>9} {'r_in_max':>9} "
        f"{'j_min':>9} {'j_max':>9} {'params':>12} {'macs':>14} class\n"
    )
    out.write(header)
    for r in payload["per_conv"]:
        out.write(
            f"{r['ordinal']:>6} {r['id']:<{id_width}} {str(r['r_in_min']):>9} {str(r['r_in_max']):>9} "
            f"{str(r['j_min']):>9} {str(r['j_max']):>9} {r['params']:>12} {r['macs']:>14} "
            f"{r['classification']}\n"
        )
    return out.getvalue()


def _render_analysis_csv(payload: dict[str, Any]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(_TABLE_COLUMNS)
    for r in payload["per_conv"]:
        writer.writerow([r[c] for c in _TABLE_COLUMNS])
    return out.getvalue()


def _border_payload(report: BorderReport) -> dict[str, Any]:
    return {
        "resolution": report.resolution,
        "border_min": report.border_min,
        "border_max": report.border_max,
        "unproductive_convs": len(report.unproductive_conv_ids),
    }


def _cost_payload(report: CostReport) -> dict[str, Any]:
    return {
        "params": report.total_params,
        "macs": report.total_macs,
        "flops": report.total_flops,
        "gflops_mac1": report.gflops_mac1,
    }


def _delta_payload(delta: TransformDelta) -> dict[str, Any]:
    return {
        "pass": delta.pass_name,
        "changed": delta.changed,
        "removed_node_ids": list(delta.removed_node_ids),
        "modified_node_ids": list(delta.modified_node_ids),
        "before": {"border": _border_payload(delta.before_border), "cost": _cost_payload(delta.before_cost)},
        "after": {"border": _border_payload(delta.after_border), "cost": _cost_payload(delta.after_cost)},
        "deltas": {"params": delta.params_delta, "macs": delta.macs_delta},
    }


def _render_delta_text(payload: dict[str, Any]) -> str:
    out = io.StringIO()
    out.write(f"pass: {payload['pass']} (changed: {str(payload['changed']).lower()})\n")
    for side in ("before", "after"):
        b = payload[side]["border"]
        c = payload[side]["cost"]
        bmin = b["border_min"]
        out.write(
            f"{side:>6}: border_min={'conv%d' % bmin if bmin else 'none'} "
            f"unproductive_convs={b['unproductive_convs']} params={c['params']} "
            f"macs={c['macs']} gflops_mac1={c['gflops_mac1']:.6f}\n"
        )
    out.write(f"deltas: params={payload['deltas']['params']:+d} macs={payload['deltas']['macs']:+d}\n")
    if payload["removed_node_ids"]:
        out.write(f"removed: {', '.join(payload['removed_node_ids'])}\n")
    if payload["modified_node_ids"]:
        out.write(f"modified: {', '.join(payload['modified_node_ids'])}\n")
    return out.getvalue()


def _compare_payload(report: ComparisonReport) -> dict[str, Any]:
    return {
        "a": {
            "name": report.name_a,
            "border": _border_payload(report.border_a),
            "cost": _cost_payload(report.cost_a),
        },
        "b": {
            "name": report.name_b,
            "border": _border_payload(report.border_b),
            "cost": _cost_payload(report.cost_b),
        },
        "deltas": {
            "params": report.params_delta,
            "macs": report.macs_delta,
            "params_rel": report.params_rel,
            "macs_rel": report.macs_rel,
        },
    }


def _render_compare_text(payload: dict[str, Any]) -> str:
    out = io.StringIO()
    for side in ("a", "b"):
        s = payload[side]
        bmin = s["border"]["border_min"]
        out.write(
            f"{s['name']}: border_min={'conv%d' % bmin if bmin else 'none'} "
            f"params={s['cost']['params']} macs={s['cost']['macs']}\n"
        )
    d = payload["deltas"]
    out.write(
        f"deltas (b - a): params={d['params']:+d} ({d['params_rel']:+.2%}) "
        f"macs={d['macs']:+d} ({d['macs_rel']:+.2%})\n"
    )
    return out.getvalue()


def _parse_pass_spec(spec: str) -> tuple[str, int]:
    if spec == "truncate":
        return "truncate", 0
    if spec == "remove-stem-downsampling":
        return "remove-stem-downsampling", 2
    if spec.startswith("remove-stem-downsampling:"):
        raw = spec.split(":", 1)[1]
        try:
            count = int(raw)
        except ValueError:
            raise UsageError(f"bad downsampling count {raw!r} in --pass {spec!r}") from None
        if count < 1:
            raise UsageError(f"downsampling count must be >= 1, got {count}")
        return "remove-stem-downsampling", count
    raise UsageError(f"unknown pass {spec!r}; expected truncate or remove-stem-downsampling[:N]")


def _cmd_analyze(args: argparse.Namespace) -> int:
    graph = _load_graph(args.arch, args.input_size, args.classes)
    payload = _analysis_payload(graph)
    if args.format == "json":
        sys.stdout.write(json.dumps(payload, indent=2) + "\n")
    elif args.format == "csv":
        sys.stdout.write(_render_analysis_csv(payload))
    else:
        sys.stdout.write(_render_analysis_text(payload))
    return EXIT_OK


def _cmd_optimize(args: argparse.Namespace) -> int:
    graph = _load_graph(args.arch, args.input_size, args.classes)
    pass_name, count = _parse_pass_spec(args.pass_spec)
    if pass_name == "truncate":
        rewritten, delta = truncate_at_border(graph, num_classes=args.classes)
    else:
        rewritten, delta = remove_stem_downsampling(graph, count)
    payload = _delta_payload(delta)
    if args.format == "json":
        sys.stdout.write(json.dumps(payload, indent=2) + "\n")
    else:
        sys.stdout.write(_render_delta_text(payload))
    if args.emit:
        with open(args.emit, "w", encoding="utf-8") as handle:
            handle.write(serialize(rewritten))
    if not delta.changed:
        sys.stderr.write("optimize: pass was a no-op (no border layer)\n")
        return EXIT_NOOP
    return EXIT_OK


def _cmd_compare(args: argparse.Namespace) -> int:
    graph_a = _load_graph(args.arch_a, args.input_size, args.classes)
    graph_b = _load_graph(args.arch_b, args.input_size, args.classes)
    try:
        report = compare(graph_a, graph_b)
    except ValueError as exc:
        sys.stderr.write(f"compare: {exc}\n")
        return EXIT_INVALID
    payload = _compare_payload(report)
    if args.format == "json":
        sys.stdout.write(json.dumps(payload, indent=2) + "\n")
    else:
        sys.stdout.write(_render_compare_text(payload))
    return EXIT_OK


def _cmd_validate(args: argparse.Namespace) -> int:
    graph = _load_graph(args.arch, args.input_size, args.classes)
    violations = validate(graph)
    if violations:
        for v in violations:
            sys.stderr.write(f"{v}\n")
        return EXIT_INVALID
    sys.stdout.write(f"ok: {graph.name} ({len(graph.nodes)} nodes, {len(graph.edges)} edges)\n")
    return EXIT_OK


def _cmd_zoo(args: argparse.Namespace) -> int:
    if args.zoo_command == "list":
        for name in FAMILIES:
            sys.stdout.write(name + "\n")
        sys.stdout.write("# options: NAME-dilN (vgg), NAME-noskip, NAME-nostem (resnet)\n")
        return EXIT_OK
    spec = None
    if args.input_size is not None:
        spec = InputSpec(args.input_size[0], args.input_size[1], 3)
    try:
        graph = build_named(args.name, input_spec=spec, num_classes=args.classes)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    text = serialize(graph)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


_COMMANDS = {
    "analyze": _cmd_analyze,
    "optimize": _cmd_optimize,
    "compare": _cmd_compare,
    "validate": _cmd_validate,
    "zoo": _cmd_zoo,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        sys.stderr.write(f"rfscope: error: {exc}\n")
        return EXIT_USAGE
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        sys.stderr.write(f"rfscope: file error: {exc}\n")
        return EXIT_FILE
    except DocumentError as exc:
        sys.stderr.write(f"rfscope: invalid architecture document: {exc}\n")
        return EXIT_INVALID
    except GraphValidationError as exc:
        for violation in exc.violations:
            sys.stderr.write(f"{violation}\n")
        return EXIT_INVALID
    except (TransformError, ShapeError, FrontierLimitError) as exc:
        sys.stderr.write(f"rfscope: {exc}\n")
        return EXIT_INVALID
    except OSError as exc:
        sys.stderr.write(f"rfscope: file error: {exc}\n")
        return EXIT_FILE


def entrypoint() -> None:
    sys.exit(main())
