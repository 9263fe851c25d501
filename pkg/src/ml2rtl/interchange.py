"""Parse and write the model interchange JSON (schema version 1.0).

This file format is the single handoff point between training-side exporters
and this tool.  Parsing is strict: every document that would violate a model
invariant is rejected, numbers must be finite, and a parsed model is
guaranteed to pass validation.  Writing is deterministic (sorted keys,
shortest round-trip float form) so identical models produce identical bytes.
"""

from __future__ import annotations

import json
import math
from typing import Any

import numpy as np

from .model_ir import (
    Activation,
    BdtEnsemble,
    DenseLayer,
    FcnnModel,
    Internal,
    Leaf,
    Objective,
    Tree,
    Violation,
    validate_bdt,
    validate_fcnn,
)

SCHEMA_VERSION = "1.0"


class InterchangeError(Exception):
    """Base class for interchange parse/write failures."""


class MalformedJson(InterchangeError):
    pass


class UnknownSchemaVersion(InterchangeError):
    pass


class EmptyModel(InterchangeError):
    pass


class StructuralViolation(InterchangeError):
    def __init__(self, violations: list[Violation]):
        self.violations = violations
        super().__init__("; ".join(str(v) for v in violations))


class DepthCapExceeded(StructuralViolation):
    pass


def _reject_constant(token: str) -> float:
    raise ValueError(f"non-finite number {token} not allowed")


def _expect(obj: Any, key: str, where: str) -> Any:
    if not isinstance(obj, dict) or key not in obj:
        raise StructuralViolation([Violation("missing_field", where, key)])
    return obj[key]


def _as_float(x: Any, where: str) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise StructuralViolation([Violation("bad_type", where, f"expected number, got {x!r}")])
    f = float(x)
    if not math.isfinite(f):
        raise StructuralViolation([Violation("non_finite", where)])
    return f


def _as_int(x: Any, where: str) -> int:
    if isinstance(x, bool) or not isinstance(x, int):
        raise StructuralViolation([Violation("bad_type", where, f"expected integer, got {x!r}")])
    return x


def _parse_tree(obj: Any, where: str) -> Tree:
    raw_nodes = _expect(obj, "nodes", where)
    if not isinstance(raw_nodes, list):
        raise StructuralViolation([Violation("bad_type", where, "nodes must be a list")])
    nodes: list[Leaf | Internal] = []
    for i, n in enumerate(raw_nodes):
        nwhere = f"{where}.nodes[{i}]"
        if not isinstance(n, dict):
            raise StructuralViolation([Violation("bad_type", nwhere, "node must be an object")])
        if "leaf" in n:
            nodes.append(Leaf(_as_float(n["leaf"], nwhere)))
        else:
            nodes.append(
                Internal(
                    _as_int(_expect(n, "feature", nwhere), nwhere),
                    _as_float(_expect(n, "threshold", nwhere), nwhere),
                    _as_int(_expect(n, "left", nwhere), nwhere),
                    _as_int(_expect(n, "right", nwhere), nwhere),
                )
            )
    return Tree(tuple(nodes))


def _parse_bdt(payload: Any) -> BdtEnsemble:
    trees_raw = _expect(payload, "trees", "payload")
    if not isinstance(trees_raw, list):
        raise StructuralViolation([Violation("bad_type", "payload.trees", "must be a list")])
    objective_name = _expect(payload, "objective", "payload")
    try:
        objective = Objective(objective_name)
    except ValueError:
        raise StructuralViolation(
            [Violation("bad_objective", "payload.objective", repr(objective_name))]
        ) from None
    base_raw = _expect(payload, "base_scores", "payload")
    if not isinstance(base_raw, list):
        raise StructuralViolation([Violation("bad_type", "payload.base_scores", "must be a list")])
    trees = tuple(
        (
            _as_int(_expect(t, "class_index", f"payload.trees[{i}]"), f"payload.trees[{i}]"),
            _parse_tree(t, f"payload.trees[{i}]"),
        )
        for i, t in enumerate(trees_raw)
    )
    return BdtEnsemble(
        n_features=_as_int(_expect(payload, "n_features", "payload"), "payload.n_features"),
        n_classes=_as_int(_expect(payload, "n_classes", "payload"), "payload.n_classes"),
        trees=trees,
        base_scores=tuple(
            _as_float(s, f"payload.base_scores[{i}]") for i, s in enumerate(base_raw)
        ),
        objective=objective,
    )


def _parse_fcnn(payload: Any) -> FcnnModel:
    layers_raw = _expect(payload, "layers", "payload")
    if not isinstance(layers_raw, list):
        raise StructuralViolation([Violation("bad_type", "payload.layers", "must be a list")])
    layers = []
    for k, l in enumerate(layers_raw):
        where = f"payload.layers[{k}]"
        w_raw = _expect(l, "weights", where)
        b_raw = _expect(l, "bias", where)
        act_name = _expect(l, "activation", where)
        try:
            act = Activation(act_name)
        except ValueError:
            raise StructuralViolation(
                [Violation("bad_activation", where, repr(act_name))]
            ) from None
        if not isinstance(w_raw, list) or not all(isinstance(r, list) for r in w_raw):
            raise StructuralViolation([Violation("bad_type", where, "weights must be a matrix")])
        widths = {len(r) for r in w_raw}
        if len(widths) > 1:
            raise StructuralViolation([Violation("ragged_matrix", where)])
        weights = np.array(
            [[_as_float(x, where) for x in row] for row in w_raw], dtype=np.float64
        )
        if weights.ndim != 2:
            weights = weights.reshape(len(w_raw), 0)
        if not isinstance(b_raw, list):
            raise StructuralViolation([Violation("bad_type", where, "bias must be a list")])
        bias = np.array([_as_float(x, where) for x in b_raw], dtype=np.float64)
        layers.append(DenseLayer(weights, bias, act))
    return FcnnModel(tuple(layers))


def parse_model(data: bytes | str) -> BdtEnsemble | FcnnModel:
    """Parse interchange JSON into a validated model.

    Raises MalformedJson, UnknownSchemaVersion, StructuralViolation (which
    carries the validator output), or DepthCapExceeded.
    """
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as e:
            raise MalformedJson(f"not valid UTF-8: {e}") from e
    try:
        doc = json.loads(data, parse_constant=_reject_constant)
    except ValueError as e:
        raise MalformedJson(str(e)) from e
    if not isinstance(doc, dict):
        raise MalformedJson("top-level JSON value must be an object")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise UnknownSchemaVersion(f"schema_version {version!r}, expected {SCHEMA_VERSION!r}")
    kind = doc.get("model_kind")
    payload = _expect(doc, "payload", "document")
    if kind == "bdt":
        model: BdtEnsemble | FcnnModel = _parse_bdt(payload)
        violations = validate_bdt(model)
    elif kind == "fcnn":
        model = _parse_fcnn(payload)
        violations = validate_fcnn(model)
    else:
        raise StructuralViolation([Violation("unknown_model_kind", "document", repr(kind))])
    if violations:
        if any(v.code == "depth_cap_exceeded" for v in violations):
            raise DepthCapExceeded(violations)
        raise StructuralViolation(violations)
    return model


def _tree_to_json(tree: Tree) -> dict:
    nodes: list[dict] = []
    for n in tree.nodes:
        if isinstance(n, Leaf):
            nodes.append({"leaf": n.score})
        else:
            nodes.append(
                {
                    "feature": n.feature,
                    "threshold": n.threshold,
                    "left": n.left,
                    "right": n.right,
                }
            )
    return {"nodes": nodes}


def model_to_document(
    m: BdtEnsemble | FcnnModel, metadata: dict | None = None
) -> dict:
    """Build the interchange document for a model (no serialization)."""
    if isinstance(m, BdtEnsemble):
        if len(m.trees) == 0:
            raise EmptyModel("ensemble has no trees")
        payload = {
            "n_features": m.n_features,
            "n_classes": m.n_classes,
            "base_scores": list(m.base_scores),
            "objective": m.objective.value,
            "trees": [
                {"class_index": ci, **_tree_to_json(t)} for ci, t in m.trees
            ],
        }
        kind = "bdt"
    else:
        if len(m.layers) == 0:
            raise EmptyModel("model has no layers")
        payload = {
            "layers": [
                {
                    "weights": [[float(x) for x in row] for row in l.weights],
                    "bias": [float(x) for x in l.bias],
                    "activation": l.activation.value,
                }
                for l in m.layers
            ]
        }
        kind = "fcnn"
    doc = {"schema_version": SCHEMA_VERSION, "model_kind": kind, "payload": payload}
    if metadata is not None:
        doc["metadata"] = metadata
    return doc


def write_model(m: BdtEnsemble | FcnnModel, metadata: dict | None = None) -> bytes:
    """Serialize a model deterministically; parse(write(m)) equals m."""
    doc = model_to_document(m, metadata)
    text = json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return (text + "\n").encode("utf-8")
