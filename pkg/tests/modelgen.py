"""Random model builders shared across test modules."""

import random

import numpy as np

from ml2rtl.model_ir import (
    Activation,
    BdtEnsemble,
    DenseLayer,
    FcnnModel,
    Internal,
    Leaf,
    Objective,
    Tree,
)


def random_tree(rng: random.Random, n_features: int, depth: int) -> Tree:
    """Full binary tree of the given depth with random splits and leaves."""
    nodes = []

    def build(d: int) -> int:
        idx = len(nodes)
        nodes.append(None)  # reserve slot
        if d == 0:
            nodes[idx] = Leaf(rng.uniform(-1.0, 1.0))
        else:
            left = build(d - 1)
            right = build(d - 1)
            nodes[idx] = Internal(
                rng.randrange(n_features), rng.uniform(-2.0, 2.0), left, right
            )
        return idx

    build(depth)
    return Tree(tuple(nodes))


def random_bdt(
    rng: random.Random,
    n_features: int = 4,
    n_classes: int = 1,
    n_trees: int = 4,
    max_depth: int = 3,
    objective: Objective | None = None,
) -> BdtEnsemble:
    if objective is None:
        objective = Objective.SIGMOID if n_classes == 1 else Objective.SOFTMAX
    trees = tuple(
        (i % n_classes, random_tree(rng, n_features, rng.randint(1, max_depth)))
        for i in range(n_trees)
    )
    return BdtEnsemble(
        n_features=n_features,
        n_classes=n_classes,
        trees=trees,
        base_scores=tuple(rng.uniform(-0.5, 0.5) for _ in range(n_classes)),
        objective=objective,
    )


def random_fcnn(
    rng: random.Random,
    sizes: list[int] | None = None,
    hidden_activation: Activation = Activation.RELU,
    final_activation: Activation = Activation.LINEAR,
    weight_scale: float = 1.0,
) -> FcnnModel:
    if sizes is None:
        n_layers = rng.randint(1, 3)
        sizes = [rng.randint(2, 8) for _ in range(n_layers + 1)]
    npr = np.random.default_rng(rng.getrandbits(32))
    layers = []
    for k in range(len(sizes) - 1):
        w = npr.uniform(-weight_scale, weight_scale, size=(sizes[k + 1], sizes[k]))
        b = npr.uniform(-weight_scale, weight_scale, size=sizes[k + 1])
        act = final_activation if k == len(sizes) - 2 else hidden_activation
        layers.append(DenseLayer(w, b, act))
    return FcnnModel(tuple(layers))


def stump(feature: int = 0, threshold: float = 0.5, left: float = -1.0, right: float = 1.0) -> Tree:
    return Tree((Internal(feature, threshold, 1, 2), Leaf(left), Leaf(right)))


def single_stump_bdt() -> BdtEnsemble:
    return BdtEnsemble(
        n_features=1,
        n_classes=1,
        trees=((0, stump()),),
        base_scores=(0.0,),
        objective=Objective.SIGMOID,
    )
