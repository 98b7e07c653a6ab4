"""Typed DAG representation of CNN architectures.

An :class:`ArchGraph` is an immutable directed acyclic graph of layer nodes
with exactly one input and one sink. All analysis and rewrite passes in this
package consume and produce these graphs; none of them mutate their input.

Kernel sizes, strides, and dilations are scalars: only square layers are
supported, and non-square configurations are rejected by :func:`validate`.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Union

PADDING_SAME = "same"
PADDING_VALID = "valid"

POOL_MODES = ("max", "avg")
ATTENTION_VARIANTS = ("se", "spatial", "cbam")


@dataclass(frozen=True)
class InputSpec:
    """Spatial size and channel count of the image a graph consumes."""

    height: int
    width: int
    channels: int

    def __post_init__(self) -> None:
        for name in ("height", "width", "channels"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ValueError(f"input {name} must be a positive integer, got {value!r}")

    @property
    def resolution(self) -> int:
        """max(height, width): the budget receptive fields are judged against."""
        return max(self.height, self.width)


@dataclass(frozen=True)
class Conv2d:
    kernel: int
    filters: int
    stride: int = 1
    dilation: int = 1
    padding: Union[str, int] = PADDING_SAME
    bias: bool = True


@dataclass(frozen=True)
class Pool:
    mode: str
    kernel: int
    stride: int
    padding: int = 0


@dataclass(frozen=True)
class GlobalAvgPool:
    pass


@dataclass(frozen=True)
class Dense:
    units: int
    bias: bool = True


@dataclass(frozen=True)
class Add:
    pass


@dataclass(frozen=True)
class Concat:
    pass


@dataclass(frozen=True)
class BatchNorm:
    pass


@dataclass(frozen=True)
class Activation:
    name: str = "relu"


@dataclass(frozen=True)
class Attention:
    variant: str


@dataclass(frozen=True)
class Input:
    pass


@dataclass(frozen=True)
class Softmax:
    pass


LayerKind = Union[
    Conv2d,
    Pool,
    GlobalAvgPool,
    Dense,
    Add,
    Concat,
    BatchNorm,
    Activation,
    Attention,
    Input,
    Softmax,
]

# Kinds that never alter receptive-field state.
RF_NEUTRAL_KINDS = (BatchNorm, Activation, Attention, Softmax, Add, Concat, Input)

# Classifier-head kinds: exempt from productive/unproductive classification.
HEAD_KINDS = (GlobalAvgPool, Dense, Softmax)

MERGE_KINDS = (Add, Concat)


@dataclass(frozen=True)
class LayerNode:
    id: str
    kind: LayerKind
    declaration_index: int


@dataclass(frozen=True)
class Violation:
    """One broken graph invariant; validation reports these as data."""

    rule: str
    subject: str
    message: str

    def __str__(self) -> str:
        return f"[{self.rule}] {self.subject}: {self.message}"


class GraphValidationError(ValueError):
    """Raised by operations that require a valid graph."""

    def __init__(self, violations: list[Violation]):
        self.violations = list(violations)
        lines = "; ".join(str(v) for v in self.violations)
        super().__init__(f"invalid architecture graph: {lines}")


@dataclass(frozen=True)
class ArchGraph:
    """Immutable layer DAG: nodes in declaration order plus an ordered edge list."""

    name: str
    input: InputSpec
    nodes: tuple[LayerNode, ...]
    edges: tuple[tuple[str, str], ...]

    @cached_property
    def node_map(self) -> dict[str, LayerNode]:
        return {n.id: n for n in self.nodes}

    @cached_property
    def predecessors(self) -> dict[str, tuple[str, ...]]:
        preds: dict[str, list[str]] = {n.id: [] for n in self.nodes}
        for src, dst in self.edges:
            if dst in preds:
                preds[dst].append(src)
        return {k: tuple(v) for k, v in preds.items()}

    @cached_property
    def successors(self) -> dict[str, tuple[str, ...]]:
        succs: dict[str, list[str]] = {n.id: [] for n in self.nodes}
        for src, dst in self.edges:
            if src in succs:
                succs[src].append(dst)
        return {k: tuple(v) for k, v in succs.items()}

    def kind(self, node_id: str) -> LayerKind:
        return self.node_map[node_id].kind

    @cached_property
    def input_id(self) -> str:
        ids = [n.id for n in self.nodes if isinstance(n.kind, Input)]
        if len(ids) != 1:
            raise GraphValidationError(
                [Violation("single_input", self.name, f"expected exactly one input node, found {len(ids)}")]
            )
        return ids[0]

    @cached_property
    def sink_id(self) -> str:
        ids = [n.id for n in self.nodes if not self.successors[n.id]]
        if len(ids) != 1:
            raise GraphValidationError(
                [Violation("single_sink", self.name, f"expected exactly one sink node, found {len(ids)}")]
            )
        return ids[0]


def make_graph(
    name: str,
    input_spec: InputSpec,
    layers: Iterable[tuple[str, LayerKind]],
    edges: Iterable[tuple[str, str]],
) -> ArchGraph:
    """Build a graph from (id, kind) pairs; declaration order is list order."""
    nodes = tuple(LayerNode(nid, kind, idx) for idx, (nid, kind) in enumerate(layers))
    return ArchGraph(name=name, input=input_spec, nodes=nodes, edges=tuple((a, b) for a, b in edges))


def chain_graph(name: str, input_spec: InputSpec, layers: Iterable[tuple[str, LayerKind]]) -> ArchGraph:
    """Build a purely sequential graph: an Input node followed by `layers` in order."""
    pairs = [("input", Input())] + list(layers)
    edges = [(pairs[i][0], pairs[i + 1][0]) for i in range(len(pairs) - 1)]
    return make_graph(name, input_spec, pairs, edges)


def _positive_int(value: object) -> bool:
    return isinstance(value, int) and not isinstance(value, bool) and value >= 1


def _kind_violations(node: LayerNode) -> list[Violation]:
    out: list[Violation] = []
    k = node.kind

    def bad(field: str, why: str) -> None:
        out.append(Violation("layer_fields", node.id, f"{field} {why}"))

    if isinstance(k, Conv2d):
        if not _positive_int(k.kernel):
            bad("kernel", f"must be a positive square scalar, got {k.kernel!r}")
        if not _positive_int(k.stride):
            bad("stride", f"must be a positive square scalar, got {k.stride!r}")
        if not _positive_int(k.dilation):
            bad("dilation", f"must be an integer >= 1, got {k.dilation!r}")
        if not _positive_int(k.filters):
            bad("filters", f"must be a positive integer, got {k.filters!r}")
        pad_ok = k.padding in (PADDING_SAME, PADDING_VALID) or (
            isinstance(k.padding, int) and not isinstance(k.padding, bool) and k.padding >= 0
        )
        if not pad_ok:
            bad("padding", f"must be 'same', 'valid', or an integer >= 0, got {k.padding!r}")
    elif isinstance(k, Pool):
        if k.mode not in POOL_MODES:
            bad("mode", f"must be one of {POOL_MODES}, got {k.mode!r}")
        if not _positive_int(k.kernel):
            bad("kernel", f"must be a positive square scalar, got {k.kernel!r}")
        if not _positive_int(k.stride):
            bad("stride", f"must be a positive square scalar, got {k.stride!r}")
        if not (isinstance(k.padding, int) and not isinstance(k.padding, bool) and k.padding >= 0):
            bad("padding", f"must be an integer >= 0, got {k.padding!r}")
    elif isinstance(k, Dense):
        if not _positive_int(k.units):
            bad("units", f"must be a positive integer, got {k.units!r}")
    elif isinstance(k, Attention):
        if k.variant not in ATTENTION_VARIANTS:
            bad("variant", f"must be one of {ATTENTION_VARIANTS}, got {k.variant!r}")
    return out


def validate(graph: ArchGraph) -> list[Violation]:
    """Check every graph invariant; an empty list means the graph is valid.

    Violations are data, not exceptions: arbitrary candidate graphs are
    accepted and each problem is reported against the node or edge that
    breaks the rule.
    """
    violations: list[Violation] = []

    seen_ids: set[str] = set()
    for node in graph.nodes:
        if node.id in seen_ids:
            violations.append(Violation("unique_ids", node.id, "duplicate node id"))
        seen_ids.add(node.id)
        violations.extend(_kind_violations(node))

    indices = sorted(n.declaration_index for n in graph.nodes)
    if indices != list(range(len(graph.nodes))):
        violations.append(
            Violation("declaration_order", graph.name, "declaration indices must be unique and contiguous from 0")
        )

    known = {n.id for n in graph.nodes}
    seen_edges: set[tuple[str, str]] = set()
    for src, dst in graph.edges:
        label = f"{src}->{dst}"
        if src not in known:
            violations.append(Violation("edge_endpoints", label, f"unknown source node {src!r}"))
        if dst not in known:
            violations.append(Violation("edge_endpoints", label, f"unknown target node {dst!r}"))
        if src == dst:
            violations.append(Violation("acyclic", label, "self-edge"))
        if (src, dst) in seen_edges:
            violations.append(Violation("edge_endpoints", label, "duplicate edge"))
        seen_edges.add((src, dst))

    if violations:
        # Degree/reachability checks below assume well-formed ids and edges.
        return violations

    indeg = {n.id: len(graph.predecessors[n.id]) for n in graph.nodes}
    outdeg = {n.id: len(graph.successors[n.id]) for n in graph.nodes}

    input_ids = [n.id for n in graph.nodes if isinstance(n.kind, Input)]
    if len(input_ids) != 1:
        violations.append(
            Violation("single_input", graph.name, f"expected exactly one Input node, found {len(input_ids)}")
        )
    for nid in input_ids:
        if indeg[nid] != 0:
            violations.append(Violation("input_degree", nid, "Input node must have in-degree 0"))

    sinks = [n.id for n in graph.nodes if outdeg[n.id] == 0]
    if len(sinks) != 1:
        violations.append(
            Violation("single_sink", graph.name, f"expected exactly one sink node, found {len(sinks)}: {sorted(sinks)}")
        )

    for node in graph.nodes:
        if isinstance(node.kind, Input):
            continue
        if isinstance(node.kind, MERGE_KINDS):
            if indeg[node.id] < 2:
                violations.append(Violation("merge_arity", node.id, f"merge arity < 2 (got {indeg[node.id]})"))
        elif indeg[node.id] != 1:
            violations.append(
                Violation("unary_arity", node.id, f"expected exactly one predecessor, got {indeg[node.id]}")
            )

    # Cycle detection via Kahn elimination; the residue is the cyclic core.
    pending = dict(indeg)
    queue = [nid for nid, d in pending.items() if d == 0]
    removed = 0
    while queue:
        nid = queue.pop()
        removed += 1
        for succ in graph.successors[nid]:
            pending[succ] -= 1
            if pending[succ] == 0:
                queue.append(succ)
    if removed != len(graph.nodes):
        cyclic = sorted(nid for nid, d in pending.items() if d > 0)
        violations.append(Violation("acyclic", "{" + ",".join(cyclic) + "}", "cycle through these nodes"))
        return violations

    if not input_ids or len(sinks) != 1:
        return violations

    reachable = _forward_reachable(graph, input_ids[0])
    for node in graph.nodes:
        if node.id not in reachable:
            violations.append(Violation("reachable_from_input", node.id, "not reachable from the input node"))
    co_reachable = _backward_reachable(graph, sinks[0])
    for node in graph.nodes:
        if node.id not in co_reachable:
            violations.append(Violation("reaches_sink", node.id, "sink not reachable from this node"))
    if violations:
        return violations

    # Channel bookkeeping is meaningful only once the DAG shape is sound.
    channels = _propagate_channels(graph)
    for node in graph.nodes:
        if isinstance(node.kind, Add):
            widths = sorted({channels[p] for p in graph.predecessors[node.id]})
            if len(widths) > 1:
                violations.append(
                    Violation("merge_channels", node.id, f"element-wise add over unequal channel counts {widths}")
                )
    return violations


def _forward_reachable(graph: ArchGraph, start: str) -> set[str]:
    seen = {start}
    stack = [start]
    while stack:
        for succ in graph.successors[stack.pop()]:
            if succ not in seen:
                seen.add(succ)
                stack.append(succ)
    return seen


def _backward_reachable(graph: ArchGraph, start: str) -> set[str]:
    seen = {start}
    stack = [start]
    while stack:
        for pred in graph.predecessors[stack.pop()]:
            if pred not in seen:
                seen.add(pred)
                stack.append(pred)
    return seen


def _propagate_channels(graph: ArchGraph) -> dict[str, int]:
    """Channel count carried out of each node; assumes a structurally valid DAG."""
    channels: dict[str, int] = {}
    for nid in topological_order(graph, _checked=False):
        kind = graph.node_map[nid].kind
        preds = graph.predecessors[nid]
        if isinstance(kind, Input):
            channels[nid] = graph.input.channels
        elif isinstance(kind, Conv2d):
            channels[nid] = kind.filters
        elif isinstance(kind, Dense):
            channels[nid] = kind.units
        elif isinstance(kind, Concat):
            channels[nid] = sum(channels[p] for p in preds)
        else:
            channels[nid] = channels[preds[0]]
    return channels


def ensure_valid(graph: ArchGraph) -> None:
    """Raise :class:`GraphValidationError` unless `graph` is valid."""
    violations = validate(graph)
    if violations:
        raise GraphValidationError(violations)


def topological_order(graph: ArchGraph, _checked: bool = True) -> list[str]:
    """Node ids with every edge pointing forward.

    Ties between incomparable nodes are broken by ascending declaration
    index, so the order is identical across runs and across structurally
    equal graphs.
    """
    if _checked:
        ensure_valid(graph)
    indeg = {n.id: len(graph.predecessors[n.id]) for n in graph.nodes}
    index = {n.id: n.declaration_index for n in graph.nodes}
    heap = [(index[nid], nid) for nid, d in indeg.items() if d == 0]
    heapq.heapify(heap)
    order: list[str] = []
    while heap:
        _, nid = heapq.heappop(heap)
        order.append(nid)
        for succ in graph.successors[nid]:
            indeg[succ] -= 1
            if indeg[succ] == 0:
                heapq.heappush(heap, (index[succ], succ))
    if len(order) != len(graph.nodes):
        raise GraphValidationError([Violation("acyclic", graph.name, "graph contains a cycle")])
    return order


def conv_index(graph: ArchGraph) -> dict[str, int]:
    """1-based ordinal of every Conv2d node, in topological order.

    Border layers are reported as these ordinals, so the numbering must be
    reproducible: it inherits the declaration-order tie-breaking of
    :func:`topological_order`. Every Conv2d counts, including 1x1
    projection convolutions on skip branches.
    """
    ordinals: dict[str, int] = {}
    for nid in topological_order(graph):
        if isinstance(graph.node_map[nid].kind, Conv2d):
            ordinals[nid] = len(ordinals) + 1
    return ordinals
