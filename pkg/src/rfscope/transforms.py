"""Graph-to-graph rewrite passes with before/after analysis deltas.

Both passes return a fresh graph plus a :class:`TransformDelta`; inputs are
never mutated. Tail truncation removes everything past the border and
installs a minimal classifier head; stem-downsampling removal neutralizes
early stride so receptive fields grow more slowly, trading compute for
later borders.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .border_analysis import BorderReport, classify, unproductive_closure
from .graph_ir import (
    HEAD_KINDS,
    MERGE_KINDS,
    ArchGraph,
    Conv2d,
    Dense,
    GlobalAvgPool,
    LayerKind,
    LayerNode,
    Pool,
    Softmax,
    ensure_valid,
    topological_order,
    validate,
)
from .shape_cost_model import CostReport, cost_report


class TransformError(RuntimeError):
    """A rewrite cannot be applied to this graph."""


@dataclass(frozen=True)
class TransformDelta:
    pass_name: str
    before_border: BorderReport
    before_cost: CostReport
    after_border: BorderReport
    after_cost: CostReport
    removed_node_ids: tuple[str, ...]
    modified_node_ids: tuple[str, ...]

    @property
    def changed(self) -> bool:
        return bool(self.removed_node_ids or self.modified_node_ids)

    @property
    def params_delta(self) -> int:
        return self.after_cost.total_params - self.before_cost.total_params

    @property
    def macs_delta(self) -> int:
        return self.after_cost.total_macs - self.before_cost.total_macs


@dataclass(frozen=True)
class ComparisonReport:
    """Side-by-side border and cost analysis of two graphs over the same input."""

    name_a: str
    name_b: str
    border_a: BorderReport
    border_b: BorderReport
    cost_a: CostReport
    cost_b: CostReport

    @property
    def params_delta(self) -> int:
        return self.cost_b.total_params - self.cost_a.total_params

    @property
    def macs_delta(self) -> int:
        return self.cost_b.total_macs - self.cost_a.total_macs

    @property
    def params_rel(self) -> float:
        return self.params_delta / self.cost_a.total_params if self.cost_a.total_params else 0.0

    @property
    def macs_rel(self) -> float:
        return self.macs_delta / self.cost_a.total_macs if self.cost_a.total_macs else 0.0


def _snapshot(graph: ArchGraph) -> tuple[BorderReport, CostReport]:
    return classify(graph), cost_report(graph)


def _rebuild(
    graph: ArchGraph,
    name: str,
    keep: list[str],
    edges: list[tuple[str, str]],
    kinds: dict[str, LayerKind],
    appended: list[tuple[str, LayerKind]] | None = None,
) -> ArchGraph:
    order = {node.id: node.declaration_index for node in graph.nodes}
    kept_sorted = sorted(keep, key=lambda nid: order[nid])
    nodes = [LayerNode(nid, kinds[nid], idx) for idx, nid in enumerate(kept_sorted)]
    for offset, (nid, kind) in enumerate(appended or []):
        nodes.append(LayerNode(nid, kind, len(kept_sorted) + offset))
    rebuilt = ArchGraph(name=name, input=graph.input, nodes=tuple(nodes), edges=tuple(edges))
    violations = validate(rebuilt)
    if violations:
        raise TransformError(
            "rewritten graph failed validation: " + "; ".join(str(v) for v in violations)
        )
    return rebuilt


def _fresh_id(base: str, taken: set[str]) -> str:
    if base not in taken:
        return base
    n = 2
    while f"{base}{n}" in taken:
        n += 1
    return f"{base}{n}"


def _old_head_chain(graph: ArchGraph) -> list[str]:
    """Trailing classifier chain: walk back from the sink over head kinds."""
    chain: list[str] = []
    nid = graph.sink_id
    while isinstance(graph.node_map[nid].kind, HEAD_KINDS):
        chain.append(nid)
        preds = graph.predecessors[nid]
        if len(preds) != 1:
            break
        nid = preds[0]
    return chain


def truncate_at_border(graph: ArchGraph, num_classes: int) -> tuple[ArchGraph, TransformDelta]:
    """Replace everything past the border with a global-pool classifier head.

    Nodes all of whose input paths cross unproductive territory are removed
    together with the old head; a fresh GlobalAvgPool -> Dense -> Softmax
    head is attached to the last remaining node. Merges reduced to a single
    input collapse to pass-throughs, and side branches left without a
    consumer are pruned as dead code. Without a border the pass is a no-op
    and returns the input graph unchanged.
    """
    if num_classes < 2:
        raise ValueError(f"num_classes must be >= 2, got {num_classes}")
    ensure_valid(graph)
    before_border, before_cost = _snapshot(graph)
    if before_border.border_min is None:
        return graph, TransformDelta(
            pass_name="truncate",
            before_border=before_border,
            before_cost=before_cost,
            after_border=before_border,
            after_cost=before_cost,
            removed_node_ids=(),
            modified_node_ids=(),
        )

    removed = set(unproductive_closure(graph, before_border))
    removed.update(_old_head_chain(graph))

    keep = [n.id for n in graph.nodes if n.id not in removed]
    kinds: dict[str, LayerKind] = {nid: graph.node_map[nid].kind for nid in keep}
    edges = [(a, b) for a, b in graph.edges if a not in removed and b not in removed]

    # Merges that lost all but one branch become identity pass-throughs.
    def in_edges(nid: str) -> list[tuple[str, str]]:
        return [e for e in edges if e[1] == nid]

    for nid in list(keep):
        if isinstance(kinds[nid], MERGE_KINDS) and len(in_edges(nid)) == 1:
            ((src, _),) = in_edges(nid)
            rewired = [(src, dst) for a, dst in edges if a == nid]
            edges = [e for e in edges if nid not in e] + rewired
            keep.remove(nid)
            removed.add(nid)
            del kinds[nid]
    edges = list(dict.fromkeys(edges))

    # Pick the truncation point: the latest surviving dead end. Any other
    # dead-end branch no longer reaches the output and is pruned.
    topo_pos = {nid: i for i, nid in enumerate(topological_order(graph))}
    while True:
        out_count = {nid: 0 for nid in keep}
        for a, _ in edges:
            out_count[a] += 1
        dead_ends = sorted((nid for nid, c in out_count.items() if c == 0), key=lambda nid: topo_pos[nid])
        if len(dead_ends) <= 1:
            break
        drop = dead_ends[0]
        keep.remove(drop)
        removed.add(drop)
        del kinds[drop]
        edges = [e for e in edges if drop not in e]
    if not dead_ends:
        raise TransformError("tail removal left no attachment point for the new head")
    tail_end = dead_ends[0]

    taken = set(keep)
    gap_id = _fresh_id("head_gap", taken)
    fc_id = _fresh_id("head_fc", taken)
    softmax_id = _fresh_id("head_softmax", taken)
    appended = [
        (gap_id, GlobalAvgPool()),
        (fc_id, Dense(units=num_classes, bias=True)),
        (softmax_id, Softmax()),
    ]
    for nid, kind in appended:
        kinds[nid] = kind
    edges += [(tail_end, gap_id), (gap_id, fc_id), (fc_id, softmax_id)]

    after = _rebuild(graph, f"{graph.name}-truncated", keep, edges, kinds, appended)
    after_border, after_cost = _snapshot(after)
    return after, TransformDelta(
        pass_name="truncate",
        before_border=before_border,
        before_cost=before_cost,
        after_border=after_border,
        after_cost=after_cost,
        removed_node_ids=tuple(sorted(removed)),
        modified_node_ids=(),
    )


def downsampling_layers(graph: ArchGraph) -> list[str]:
    """Stride-carrying layers (convs and pools with stride > 1) in topological order."""
    out = []
    for nid in topological_order(graph):
        kind = graph.node_map[nid].kind
        if isinstance(kind, (Conv2d, Pool)) and kind.stride > 1:
            out.append(nid)
    return out


def remove_stem_downsampling(graph: ArchGraph, count: int) -> tuple[ArchGraph, TransformDelta]:
    """Neutralize the first `count` downsampling layers in topological order.

    Strided convolutions keep their weights and drop to stride 1; strided
    pools are removed outright and their edges spliced through. Every jump
    downstream of all neutralized layers shrinks by the product of the
    neutralized strides, so receptive fields grow more slowly and feature
    maps (hence MACs) grow larger.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    ensure_valid(graph)
    targets = downsampling_layers(graph)
    if len(targets) < count:
        raise TransformError(
            f"graph has only {len(targets)} downsampling layers, cannot neutralize {count}"
        )
    before_border, before_cost = _snapshot(graph)

    chosen = targets[:count]
    modified: list[str] = []
    removed: list[str] = []
    kinds: dict[str, LayerKind] = {n.id: n.kind for n in graph.nodes}
    for nid in chosen:
        kind = kinds[nid]
        if isinstance(kind, Conv2d):
            kinds[nid] = dataclasses.replace(kind, stride=1)
            modified.append(nid)
        else:
            removed.append(nid)

    removed_set = set(removed)
    pred_of = {nid: graph.predecessors[nid] for nid in removed_set}

    def resolve(src: str) -> str:
        while src in removed_set:
            src = pred_of[src][0]
        return src

    keep = [n.id for n in graph.nodes if n.id not in removed_set]
    edges = [(resolve(a), b) for a, b in graph.edges if b not in removed_set]
    for nid in removed_set:
        del kinds[nid]

    after = _rebuild(graph, f"{graph.name}-nostem", keep, edges, kinds)
    after_border, after_cost = _snapshot(after)
    return after, TransformDelta(
        pass_name=f"remove-stem-downsampling:{count}",
        before_border=before_border,
        before_cost=before_cost,
        after_border=after_border,
        after_cost=after_cost,
        removed_node_ids=tuple(removed),
        modified_node_ids=tuple(modified),
    )


def compare(graph_a: ArchGraph, graph_b: ArchGraph) -> ComparisonReport:
    """Side-by-side analysis of two graphs; both must consume the same input."""
    ensure_valid(graph_a)
    ensure_valid(graph_b)
    if graph_a.input != graph_b.input:
        raise ValueError(
            f"input specs differ: {graph_a.input} vs {graph_b.input}; comparison would be meaningless"
        )
    border_a, cost_a = _snapshot(graph_a)
    border_b, cost_b = _snapshot(graph_b)
    return ComparisonReport(
        name_a=graph_a.name,
        name_b=graph_b.name,
        border_a=border_a,
        border_b=border_b,
        cost_a=cost_a,
        cost_b=cost_b,
    )
