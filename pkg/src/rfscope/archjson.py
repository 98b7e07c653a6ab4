"""JSON interchange format for architecture graphs.

A document holds the graph name, the input spec, a `layers` array (whose
order defines declaration order), and an `edges` array of [source, target]
pairs. Parsing is strict: unknown keys, wrong types, and non-square numeric
shapes are rejected with path-qualified diagnostics, and the resulting graph
must pass full validation. Serialization writes every field explicitly so
that parse(serialize(g)) reproduces g exactly.
"""
from __future__ import annotations

import json
from typing import Any

from .graph_ir import (
    ArchGraph,
    Activation,
    Add,
    Attention,
    BatchNorm,
    Concat,
    Conv2d,
    Dense,
    GlobalAvgPool,
    Input,
    InputSpec,
    LayerKind,
    Pool,
    Softmax,
    Violation,
    make_graph,
    validate,
)


class DocumentError(ValueError):
    """A document cannot be turned into a graph; `path` locates the problem."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class DocumentSemanticError(DocumentError):
    """The document parses but the graph it describes is invalid."""

    def __init__(self, violations: list[Violation]):
        self.violations = violations
        detail = "; ".join(str(v) for v in violations)
        super().__init__("", f"graph validation failed: {detail}")


_KIND_TAGS: dict[str, type] = {
    "input": Input,
    "conv2d": Conv2d,
    "pool": Pool,
    "global_avg_pool": GlobalAvgPool,
    "dense": Dense,
    "add": Add,
    "concat": Concat,
    "batch_norm": BatchNorm,
    "activation": Activation,
    "attention": Attention,
    "softmax": Softmax,
}
_TAG_BY_TYPE = {cls: tag for tag, cls in _KIND_TAGS.items()}

# Field plans per kind tag: {field: (required, checker, default)}.
_INT = "integer"
_STR = "string"
_BOOL = "boolean"
_PADDING = "padding"

_FIELD_PLANS: dict[str, dict[str, tuple[bool, str, Any]]] = {
    "input": {},
    "conv2d": {
        "kernel": (True, _INT, None),
        "filters": (True, _INT, None),
        "stride": (False, _INT, 1),
        "dilation": (False, _INT, 1),
        "padding": (False, _PADDING, "same"),
        "bias": (False, _BOOL, True),
    },
    "pool": {
        "mode": (True, _STR, None),
        "kernel": (True, _INT, None),
        "stride": (True, _INT, None),
        "padding": (False, _INT, 0),
    },
    "global_avg_pool": {},
    "dense": {"units": (True, _INT, None), "bias": (False, _BOOL, True)},
    "add": {},
    "concat": {},
    "batch_norm": {},
    "activation": {"name": (False, _STR, "relu")},
    "attention": {"variant": (True, _STR, None)},
    "softmax": {},
}


def _check_value(path: str, value: Any, checker: str) -> Any:
    if checker == _INT:
        if isinstance(value, bool) or not isinstance(value, int):
            raise DocumentError(path, f"expected an integer, got {value!r} (square scalars only)")
    elif checker == _STR:
        if not isinstance(value, str):
            raise DocumentError(path, f"expected a string, got {value!r}")
    elif checker == _BOOL:
        if not isinstance(value, bool):
            raise DocumentError(path, f"expected a boolean, got {value!r}")
    elif checker == _PADDING:
        if isinstance(value, bool) or not (isinstance(value, int) or value in ("same", "valid")):
            raise DocumentError(path, f"expected 'same', 'valid', or an integer, got {value!r}")
    return value


def _parse_layer(index: int, raw: Any) -> tuple[str, LayerKind]:
    path = f"layers[{index}]"
    if not isinstance(raw, dict):
        raise DocumentError(path, f"expected an object, got {type(raw).__name__}")
    layer_id = raw.get("id")
    if not isinstance(layer_id, str) or not layer_id:
        raise DocumentError(f"{path}.id", "every layer needs a nonempty string id")
    where = f"{path} (id {layer_id!r})"
    tag = raw.get("kind")
    if tag not in _FIELD_PLANS:
        raise DocumentError(f"{where}.kind", f"unknown kind {tag!r}; known: {', '.join(sorted(_FIELD_PLANS))}")
    plan = _FIELD_PLANS[tag]
    for key in raw:
        if key not in plan and key not in ("id", "kind"):
            raise DocumentError(f"{where}.{key}", f"unknown key for kind {tag!r}")
    kwargs: dict[str, Any] = {}
    for field_name, (required, checker, default) in plan.items():
        if field_name in raw:
            kwargs[field_name] = _check_value(f"{where}.{field_name}", raw[field_name], checker)
        elif required:
            raise DocumentError(f"{where}.{field_name}", f"missing required key for kind {tag!r}")
        else:
            kwargs[field_name] = default
    return layer_id, _KIND_TAGS[tag](**kwargs)


def parse_document(doc: Any) -> ArchGraph:
    """Turn an already-decoded JSON object into a validated graph."""
    if not isinstance(doc, dict):
        raise DocumentError("$", f"expected a JSON object, got {type(doc).__name__}")
    for key in doc:
        if key not in ("name", "input", "layers", "edges"):
            raise DocumentError(f"$.{key}", "unknown top-level key")
    for key in ("name", "input", "layers", "edges"):
        if key not in doc:
            raise DocumentError(f"$.{key}", "missing required top-level key")
    if not isinstance(doc["name"], str):
        raise DocumentError("$.name", f"expected a string, got {doc['name']!r}")

    raw_input = doc["input"]
    if not isinstance(raw_input, dict):
        raise DocumentError("$.input", "expected an object with height, width, channels")
    for key in raw_input:
        if key not in ("height", "width", "channels"):
            raise DocumentError(f"$.input.{key}", "unknown key")
    dims = {}
    for key in ("height", "width", "channels"):
        if key not in raw_input:
            raise DocumentError(f"$.input.{key}", "missing required key")
        dims[key] = _check_value(f"$.input.{key}", raw_input[key], _INT)
    try:
        input_spec = InputSpec(**dims)
    except ValueError as exc:
        raise DocumentError("$.input", str(exc)) from None

    if not isinstance(doc["layers"], list):
        raise DocumentError("$.layers", "expected an array of layer objects")
    layers = [_parse_layer(i, raw) for i, raw in enumerate(doc["layers"])]

    if not isinstance(doc["edges"], list):
        raise DocumentError("$.edges", "expected an array of [source, target] pairs")
    edges: list[tuple[str, str]] = []
    for i, raw in enumerate(doc["edges"]):
        if not (isinstance(raw, list) and len(raw) == 2 and all(isinstance(x, str) for x in raw)):
            raise DocumentError(f"$.edges[{i}]", f"expected a [source, target] string pair, got {raw!r}")
        edges.append((raw[0], raw[1]))

    graph = make_graph(doc["name"], input_spec, layers, edges)
    violations = validate(graph)
    if violations:
        raise DocumentSemanticError(violations)
    return graph


def parse(data: bytes | str) -> ArchGraph:
    """Parse a UTF-8 JSON document into a validated graph."""
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DocumentError("$", f"document is not valid UTF-8: {exc}") from None
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise DocumentError("$", f"JSON syntax error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return parse_document(doc)


def _layer_to_dict(kind: LayerKind, layer_id: str) -> dict[str, Any]:
    tag = _TAG_BY_TYPE[type(kind)]
    out: dict[str, Any] = {"id": layer_id, "kind": tag}
    for field_name in _FIELD_PLANS[tag]:
        out[field_name] = getattr(kind, field_name)
    return out


def serialize_document(graph: ArchGraph) -> dict[str, Any]:
    """Graph as a plain JSON-ready dict; layers appear in declaration order."""
    nodes = sorted(graph.nodes, key=lambda n: n.declaration_index)
    return {
        "name": graph.name,
        "input": {
            "height": graph.input.height,
            "width": graph.input.width,
            "channels": graph.input.channels,
        },
        "layers": [_layer_to_dict(n.kind, n.id) for n in nodes],
        "edges": [[a, b] for a, b in graph.edges],
    }


def serialize(graph: ArchGraph) -> str:
    """Graph as canonical JSON text (stable key order, two-space indent)."""
    return json.dumps(serialize_document(graph), indent=2) + "\n"
