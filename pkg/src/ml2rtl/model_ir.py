"""Float-precision in-memory model representation and structural validation.

Trees are stored as flat node arrays addressed by integer id (node 0 is the
root) so that later lowering stages can refer to nodes positionally.  Models
are immutable after construction by convention; nothing here mutates them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

MAX_TREE_DEPTH = 32


class Objective(Enum):
    """How raw class scores are interpreted for reporting."""

    RAW_SCORE = "raw_score"
    SIGMOID = "sigmoid"
    SOFTMAX = "softmax"


class Activation(Enum):
    LINEAR = "linear"
    RELU = "relu"
    SIGMOID = "sigmoid"
    SOFTMAX = "softmax"


@dataclass(frozen=True)
class Leaf:
    score: float


@dataclass(frozen=True)
class Internal:
    feature: int
    threshold: float
    left: int
    right: int


@dataclass(frozen=True)
class Tree:
    """Binary decision tree over a flat node array; node 0 is the root."""

    nodes: tuple[Leaf | Internal, ...]

    def depth(self) -> int:
        """Max root-to-leaf edge count (0 for a single leaf)."""
        best = 0
        stack = [(0, 0)]
        while stack:
            idx, d = stack.pop()
            node = self.nodes[idx]
            if isinstance(node, Leaf):
                best = max(best, d)
            else:
                stack.append((node.left, d + 1))
                stack.append((node.right, d + 1))
        return best

    def leaves(self) -> list[int]:
        return [i for i, n in enumerate(self.nodes) if isinstance(n, Leaf)]


@dataclass(frozen=True)
class BdtEnsemble:
    """Boosted tree ensemble: per-class additive scores plus a base score.

    Binary classification uses n_classes=1 with a sigmoid objective (the
    decision is score > 0); multiclass carries one score per class and
    predicts by argmax.
    """

    n_features: int
    n_classes: int
    trees: tuple[tuple[int, Tree], ...]  # (class_index, tree)
    base_scores: tuple[float, ...]
    objective: Objective = Objective.RAW_SCORE

    def trees_for_class(self, c: int) -> list[Tree]:
        return [t for ci, t in self.trees if ci == c]


@dataclass(frozen=True)
class DenseLayer:
    weights: np.ndarray  # shape (out, in)
    bias: np.ndarray  # shape (out,)
    activation: Activation = Activation.LINEAR

    @property
    def out_size(self) -> int:
        return self.weights.shape[0]

    @property
    def in_size(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class FcnnModel:
    layers: tuple[DenseLayer, ...]

    @property
    def n_features(self) -> int:
        return self.layers[0].in_size if self.layers else 0

    @property
    def n_outputs(self) -> int:
        return self.layers[-1].out_size if self.layers else 0


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray  # shape (n, n_features)
    labels: np.ndarray  # shape (n,), integer class ids

    def __post_init__(self) -> None:
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-D array")
        if self.labels.shape != (self.features.shape[0],):
            raise ValueError("labels length must match feature rows")

    def __len__(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True)
class Violation:
    """A structural problem found by validation; code is machine-readable."""

    code: str
    where: str
    detail: str = ""

    def __str__(self) -> str:
        return f"{self.code} at {self.where}" + (f": {self.detail}" if self.detail else "")


def _check_tree(tree: Tree, t_idx: int, n_features: int, out: list[Violation]) -> None:
    where = f"tree[{t_idx}]"
    n = len(tree.nodes)
    if n == 0:
        out.append(Violation("empty_tree", where))
        return
    bad_structure = False
    for i, node in enumerate(tree.nodes):
        if isinstance(node, Internal):
            if not (0 <= node.left < n) or not (0 <= node.right < n):
                out.append(Violation("bad_child_id", f"{where}.node[{i}]"))
                bad_structure = True
            if node.left == i or node.right == i:
                out.append(Violation("cycle", f"{where}.node[{i}]", "child is its own parent"))
                bad_structure = True
            if not (0 <= node.feature < n_features):
                out.append(
                    Violation(
                        "feature_out_of_range",
                        f"{where}.node[{i}]",
                        f"feature {node.feature} with n_features {n_features}",
                    )
                )
            if not math.isfinite(node.threshold):
                out.append(Violation("non_finite", f"{where}.node[{i}].threshold"))
        else:
            if not math.isfinite(node.score):
                out.append(Violation("non_finite", f"{where}.node[{i}].score"))
    if bad_structure:
        return
    # Walk from the root: every node must be visited exactly once (a shared
    # child or a back-edge shows up as a second visit).
    seen = set()
    max_depth = 0
    stack = [(0, 0)]
    ok = True
    while stack:
        idx, d = stack.pop()
        if idx in seen:
            out.append(Violation("cycle", f"{where}.node[{idx}]", "node reachable twice"))
            ok = False
            break
        seen.add(idx)
        max_depth = max(max_depth, d)
        node = tree.nodes[idx]
        if isinstance(node, Internal):
            stack.append((node.left, d + 1))
            stack.append((node.right, d + 1))
    if ok and len(seen) != n:
        unreachable = sorted(set(range(n)) - seen)
        out.append(
            Violation("unreachable_node", where, f"nodes {unreachable} not reachable from root")
        )
    if ok and max_depth > MAX_TREE_DEPTH:
        out.append(
            Violation("depth_cap_exceeded", where, f"depth {max_depth} > {MAX_TREE_DEPTH}")
        )


def validate_bdt(m: BdtEnsemble) -> list[Violation]:
    """Return the list of structural violations (empty means valid)."""
    out: list[Violation] = []
    if m.n_features < 1:
        out.append(Violation("bad_feature_count", "ensemble", str(m.n_features)))
    if m.n_classes < 1:
        out.append(Violation("bad_class_count", "ensemble", str(m.n_classes)))
    if len(m.trees) == 0:
        out.append(Violation("empty_model", "ensemble", "no trees"))
    if len(m.base_scores) != m.n_classes:
        out.append(
            Violation(
                "base_score_arity",
                "ensemble",
                f"{len(m.base_scores)} base scores for {m.n_classes} classes",
            )
        )
    for s in m.base_scores:
        if not math.isfinite(s):
            out.append(Violation("non_finite", "ensemble.base_scores"))
            break
    for t_idx, (class_index, tree) in enumerate(m.trees):
        if not (0 <= class_index < m.n_classes):
            out.append(
                Violation("class_index_out_of_range", f"tree[{t_idx}]", str(class_index))
            )
        _check_tree(tree, t_idx, m.n_features, out)
    return out


def validate_fcnn(m: FcnnModel) -> list[Violation]:
    """Return the list of structural violations (empty means valid)."""
    out: list[Violation] = []
    if len(m.layers) == 0:
        out.append(Violation("empty_model", "model", "no layers"))
        return out
    for k, layer in enumerate(m.layers):
        where = f"layer[{k}]"
        if layer.weights.ndim != 2:
            out.append(Violation("bad_weight_shape", where, f"ndim {layer.weights.ndim}"))
            continue
        if layer.bias.shape != (layer.out_size,):
            out.append(
                Violation(
                    "shape_mismatch",
                    where,
                    f"bias length {layer.bias.shape} for {layer.out_size} outputs",
                )
            )
        if k > 0 and m.layers[k - 1].out_size != layer.in_size:
            out.append(
                Violation(
                    "shape_mismatch",
                    where,
                    f"input size {layer.in_size} != previous output {m.layers[k - 1].out_size}",
                )
            )
        if layer.activation is Activation.SOFTMAX and k != len(m.layers) - 1:
            out.append(Violation("softmax_placement", where, "softmax only on the final layer"))
        if not (np.isfinite(layer.weights).all() and np.isfinite(layer.bias).all()):
            out.append(Violation("non_finite", where))
    return out


def model_stats(m: BdtEnsemble | FcnnModel) -> dict[str, int]:
    """Size statistics used by reports.

    For trees: n_nodes counts all tree nodes, max_depth is the deepest tree,
    n_params counts thresholds + leaf scores + base scores.  For dense nets:
    n_nodes counts neurons, max_depth counts layers, n_params counts weights
    + biases, and n_nonzero_weights counts weights that are exactly nonzero.
    """
    if isinstance(m, BdtEnsemble):
        n_nodes = sum(len(t.nodes) for _, t in m.trees)
        n_leaves = sum(len(t.leaves()) for _, t in m.trees)
        max_depth = max((t.depth() for _, t in m.trees), default=0)
        return {
            "n_params": n_nodes + len(m.base_scores),
            "n_nodes": n_nodes,
            "max_depth": max_depth,
            "n_nonzero_weights": sum(
                1
                for _, t in m.trees
                for n in t.nodes
                if isinstance(n, Leaf) and n.score != 0.0
            ),
        }
    return {
        "n_params": sum(l.weights.size + l.bias.size for l in m.layers),
        "n_nodes": sum(l.out_size for l in m.layers),
        "max_depth": len(m.layers),
        "n_nonzero_weights": int(sum(np.count_nonzero(l.weights) for l in m.layers)),
    }
