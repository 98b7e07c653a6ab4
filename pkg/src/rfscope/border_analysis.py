"""Productive/unproductive classification of convolutional layers.

A convolution whose input receptive field already exceeds the input
resolution i = max(height, width) cannot integrate novel information into a
single feature-map position. The first conv ordinal where the minimum input
receptive field crosses i is the operative border; the analogous ordinal for
the maximum receptive field is reported for diagnostics.
"""
from __future__ import annotations

from dataclasses import dataclass

from .graph_ir import (
    HEAD_KINDS,
    ArchGraph,
    Input,
    conv_index,
    topological_order,
)
from .rf_analysis import RFAnnotation, propagate_dag

PRODUCTIVE = "productive"
UNPRODUCTIVE = "unproductive"


@dataclass(frozen=True)
class ConvClassification:
    ordinal: int
    node_id: str
    r_in_min: int | float
    r_in_max: int | float
    classification: str


@dataclass(frozen=True)
class BorderReport:
    """Border location and per-conv classification for one graph at one resolution."""

    resolution: int
    per_conv: tuple[ConvClassification, ...]
    border_min: int | None
    border_max: int | None
    border_min_node: str | None
    border_max_node: str | None

    @property
    def unproductive_conv_ids(self) -> tuple[str, ...]:
        return tuple(c.node_id for c in self.per_conv if c.classification == UNPRODUCTIVE)


def classify(graph: ArchGraph, annotations: dict[str, RFAnnotation] | None = None) -> BorderReport:
    """Evaluate the border rule on every convolution's input receptive field.

    Head layers (global pooling, dense, softmax) are exempt: they sit past
    the border by construction, so classifying them would be noise. On a
    sequential graph min and max receptive fields coincide and the two
    border ordinals are equal.
    """
    if annotations is None:
        annotations = propagate_dag(graph)
    resolution = graph.input.resolution
    ordinals = conv_index(graph)

    rows: list[ConvClassification] = []
    border_min: int | None = None
    border_max: int | None = None
    border_min_node: str | None = None
    border_max_node: str | None = None
    for node_id, ordinal in ordinals.items():
        ann = annotations[node_id]
        unproductive = ann.r_in_min > resolution
        rows.append(
            ConvClassification(
                ordinal=ordinal,
                node_id=node_id,
                r_in_min=ann.r_in_min,
                r_in_max=ann.r_in_max,
                classification=UNPRODUCTIVE if unproductive else PRODUCTIVE,
            )
        )
        if unproductive and border_min is None:
            border_min = ordinal
            border_min_node = node_id
        if ann.r_in_max > resolution and border_max is None:
            border_max = ordinal
            border_max_node = node_id
    return BorderReport(
        resolution=resolution,
        per_conv=tuple(rows),
        border_min=border_min,
        border_max=border_max,
        border_min_node=border_min_node,
        border_max_node=border_max_node,
    )


def unproductive_closure(graph: ArchGraph, report: BorderReport | None = None) -> frozenset[str]:
    """Nodes of any kind all of whose input-to-node paths cross unproductive territory.

    A node belongs to the closure when it is an unproductive convolution
    itself or when every path from the input reaches it through one; a node
    fed by any productive path stays out, so removing the closure can never
    sever productive dataflow.
    """
    if report is None:
        report = classify(graph)
    unproductive = set(report.unproductive_conv_ids)
    if not unproductive:
        return frozenset()
    blocked: set[str] = set()
    for nid in topological_order(graph):
        if isinstance(graph.node_map[nid].kind, Input):
            continue
        if nid in unproductive:
            blocked.add(nid)
            continue
        preds = graph.predecessors[nid]
        if preds and all(p in blocked for p in preds):
            blocked.add(nid)
    return frozenset(blocked)


def unproductive_tail(graph: ArchGraph, report: BorderReport | None = None) -> frozenset[str]:
    """The removal set for tail truncation: the closure minus head-exempt kinds."""
    closure = unproductive_closure(graph, report)
    return frozenset(nid for nid in closure if not isinstance(graph.node_map[nid].kind, HEAD_KINDS))
