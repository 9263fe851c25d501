"""Reference inference engines.

Two engines per model kind: a float64 ground-truth engine and a bit-exact
fixed-point engine whose results are pure functions of the quantized raws and
input raws.  The fixed engine mirrors the generated hardware operation for
operation: exact products, accumulation through the declared accumulator
format, and a single cast at each declared cast point.

Accumulation order is part of the semantics because saturating adds are not
associative.  The default "tree" order is a balanced adjacent-pair reduction
over [operands..., bias/base] and matches the netlist adder trees; the
"sequential" order folds left-to-right.  With reuse > 1, products are first
combined in input-index order inside each multiply-accumulate group, exactly
as the time-shared hardware does.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .fixedpoint import (
    FixedPointFormat,
    FixedPointValue,
    Rounding,
    fxp_add,
    fxp_cast,
    fxp_compare,
    fxp_mul,
    product_format,
    quantize_real,
)
from .model_ir import (
    Activation,
    BdtEnsemble,
    Dataset,
    FcnnModel,
    Internal,
    Objective,
)
from .quantize import (
    QInternal,
    QuantizedBdt,
    QuantizedFcnn,
    SigmoidLutSpec,
    reduce_balanced,
)


@dataclass(frozen=True)
class Scores:
    """Per-class scores plus the decided class.

    Single-score models (binary via one output) decide class 1 when the score
    exceeds the decision threshold (0 for raw scores, 0.5 after a sigmoid);
    multi-score models take the argmax with ties toward the lowest index.
    """

    scores: tuple
    predicted_class: int
    margin: float


def _decide(values: list[float], threshold: float) -> tuple[int, float]:
    if len(values) == 1:
        return (1 if values[0] > threshold else 0), abs(values[0] - threshold)
    best = max(values)
    pred = values.index(best)
    runner_up = max(v for i, v in enumerate(values) if i != pred)
    return pred, best - runner_up


def _float_scores(values: list[float], threshold: float = 0.0) -> Scores:
    pred, margin = _decide(values, threshold)
    return Scores(tuple(values), pred, margin)


def _fixed_scores(values: list[FixedPointValue], threshold: float = 0.0) -> Scores:
    floats = [v.value for v in values]
    pred, margin = _decide(floats, threshold)
    return Scores(tuple(values), pred, margin)


def effective_reuse(max_fan_in: int, reuse: int) -> int:
    """Reuse factor clamped to the layer's largest nonzero fan-in."""
    return max(1, min(reuse, max_fan_in))


def mac_groups(n: int, reuse: int) -> list[range]:
    """Partition n product slots into ceil(n/reuse) consecutive groups."""
    return [range(i, min(i + reuse, n)) for i in range(0, n, reuse)]


# ---------------------------------------------------------------------------
# Sigmoid lookup table
# ---------------------------------------------------------------------------

def sigmoid_lut_table(spec: SigmoidLutSpec, out_fmt: FixedPointFormat) -> list[int]:
    """Raw table entries: the true sigmoid at each bin midpoint, rounded to
    nearest even in the output format."""
    rne = out_fmt.with_semantics(rounding=Rounding.NEAREST_EVEN)
    step = (spec.hi - spec.lo) / spec.entries
    table = []
    for i in range(spec.entries):
        x = spec.lo + (i + 0.5) * step
        table.append(quantize_real(1.0 / (1.0 + math.exp(-x)), rne).raw)
    return table


def sigmoid_lut_apply(
    v: FixedPointValue,
    table: list[int],
    spec: SigmoidLutSpec,
    out_fmt: FixedPointFormat,
) -> FixedPointValue:
    """Table lookup with saturation to 0/1 outside [lo, hi)."""
    x = v.exact
    lo, hi = Fraction(spec.lo), Fraction(spec.hi)
    if x < lo:
        return FixedPointValue(0, out_fmt)
    if x >= hi:
        one = quantize_real(1.0, out_fmt.with_semantics(rounding=Rounding.NEAREST_EVEN))
        return FixedPointValue(one.raw, out_fmt)
    idx = int((x - lo) * spec.entries / (hi - lo))
    return FixedPointValue(table[idx], out_fmt)


# ---------------------------------------------------------------------------
# Accumulation
# ---------------------------------------------------------------------------

def accumulate(
    operands: list[FixedPointValue], accum_fmt: FixedPointFormat, order: str
) -> FixedPointValue:
    """Reduce operands into the accumulator format in the requested order."""
    if not operands:
        raise ValueError("nothing to accumulate")
    if len(operands) == 1:
        return fxp_cast(operands[0], accum_fmt)
    if order == "tree":
        return reduce_balanced(list(operands), lambda a, b: fxp_add(a, b, accum_fmt))
    if order == "sequential":
        acc = fxp_cast(operands[0], accum_fmt)
        for v in operands[1:]:
            acc = fxp_add(acc, v, accum_fmt)
        return acc
    raise ValueError(f"unknown accumulation order {order!r}")


# ---------------------------------------------------------------------------
# BDT engines
# ---------------------------------------------------------------------------

def infer_float_bdt(m: BdtEnsemble, x) -> Scores:
    """Ground-truth ensemble walk: route left iff x[feature] < threshold."""
    if len(x) != m.n_features:
        raise ValueError(f"expected {m.n_features} features, got {len(x)}")
    scores = []
    for c in range(m.n_classes):
        total = m.base_scores[c]
        for tree in m.trees_for_class(c):
            node = tree.nodes[0]
            while isinstance(node, Internal):
                node = tree.nodes[node.left if x[node.feature] < node.threshold else node.right]
            total += node.score
        scores.append(total)
    return _float_scores(scores)


def infer_fixed_bdt(
    qm: QuantizedBdt, x_fixed: list[FixedPointValue], order: str = "tree"
) -> Scores:
    """Bit-exact fixed-point ensemble evaluation.

    Comparisons are exact across formats; the selected leaf values and the
    base score accumulate through the configured accumulator format.
    """
    if len(x_fixed) != qm.n_features:
        raise ValueError(f"expected {qm.n_features} features, got {len(x_fixed)}")
    fmts = qm.config.bdt
    scores = []
    for c in range(qm.n_classes):
        operands = []
        for tree in qm.trees_for_class(c):
            node = tree.nodes[0]
            while isinstance(node, QInternal):
                thr = FixedPointValue(node.threshold_raw, fmts.threshold_fmt)
                go_left = fxp_compare(x_fixed[node.feature], thr) < 0
                node = tree.nodes[node.left if go_left else node.right]
            operands.append(FixedPointValue(node.raw, fmts.leaf_fmt))
        operands.append(FixedPointValue(qm.base_raws[c], fmts.leaf_fmt))
        scores.append(accumulate(operands, fmts.accum_fmt, order))
    return _fixed_scores(scores)


# ---------------------------------------------------------------------------
# Dense network engines
# ---------------------------------------------------------------------------

def infer_float_fcnn(m: FcnnModel, x) -> Scores:
    """Float64 forward pass; softmax is reporting-only (argmax unchanged)."""
    v = np.asarray(x, dtype=np.float64)
    if v.shape != (m.n_features,):
        raise ValueError(f"expected {m.n_features} features, got {v.shape}")
    threshold = 0.0
    for layer in m.layers:
        v = layer.weights @ v + layer.bias
        if layer.activation is Activation.RELU:
            v = np.maximum(v, 0.0)
        elif layer.activation is Activation.SIGMOID:
            v = 1.0 / (1.0 + np.exp(-v))
            threshold = 0.5
        else:
            threshold = 0.0
    return _float_scores([float(s) for s in v], threshold)


def infer_fixed_fcnn(
    qm: QuantizedFcnn,
    x_fixed: list[FixedPointValue],
    order: str = "tree",
    reuse: int = 1,
) -> Scores:
    """Bit-exact fixed-point forward pass.

    Per neuron: exact products of nonzero weights, multiply-accumulate groups
    of ``reuse`` consecutive products (reuse > 1), then the bias joins the
    accumulation; the activation applies and a single cast lands in the
    layer's activation format.  Softmax layers pass scores through (argmax
    decides; hardware computes no exponentials).
    """
    if len(x_fixed) != qm.n_features:
        raise ValueError(f"expected {qm.n_features} features, got {len(x_fixed)}")
    values = list(x_fixed)
    threshold = 0.0
    for layer, lf in zip(qm.layers, qm.config.fcnn):
        in_fmt = values[0].fmt
        prod_fmt = product_format(lf.weight_fmt, in_fmt)
        nonzero = [
            [j for j in range(layer.weight_raws.shape[1]) if layer.weight_raws[i, j] != 0]
            for i in range(layer.weight_raws.shape[0])
        ]
        r_eff = effective_reuse(max((len(nz) for nz in nonzero), default=0), reuse)
        out_values = []
        for i, nz in enumerate(nonzero):
            prods = [
                fxp_mul(
                    values[j],
                    FixedPointValue(int(layer.weight_raws[i, j]), lf.weight_fmt),
                    prod_fmt,
                )
                for j in nz
            ]
            if r_eff > 1 and prods:
                grouped = []
                for grp in mac_groups(len(prods), r_eff):
                    acc = fxp_cast(prods[grp[0]], lf.accum_fmt)
                    for g in grp[1:]:
                        acc = fxp_add(acc, prods[g], lf.accum_fmt)
                    grouped.append(acc)
                prods = grouped
            operands = prods + [FixedPointValue(int(layer.bias_raws[i]), lf.bias_fmt)]
            acc = accumulate(operands, lf.accum_fmt, order)
            out_values.append(_apply_activation_fixed(acc, layer.activation, lf, qm.config))
        threshold = 0.5 if layer.activation is Activation.SIGMOID else 0.0
        values = out_values
    return _fixed_scores(values, threshold)


def _apply_activation_fixed(acc, activation, lf, cfg) -> FixedPointValue:
    if activation is Activation.RELU:
        if acc.raw < 0:
            acc = FixedPointValue(0, acc.fmt)
        return fxp_cast(acc, lf.activation_fmt)
    if activation is Activation.SIGMOID:
        table = _lut_cache(cfg.sigmoid_lut, lf.activation_fmt)
        return sigmoid_lut_apply(acc, table, cfg.sigmoid_lut, lf.activation_fmt)
    # linear, and softmax (argmax happens downstream)
    return fxp_cast(acc, lf.activation_fmt)


_LUT_CACHE: dict[tuple, list[int]] = {}


def _lut_cache(spec: SigmoidLutSpec, out_fmt: FixedPointFormat) -> list[int]:
    key = (spec, out_fmt)
    if key not in _LUT_CACHE:
        _LUT_CACHE[key] = sigmoid_lut_table(spec, out_fmt)
    return _LUT_CACHE[key]


# ---------------------------------------------------------------------------
# Batch driver
# ---------------------------------------------------------------------------

def quantize_inputs(row, input_fmt: FixedPointFormat) -> list[FixedPointValue]:
    return [quantize_real(float(x), input_fmt) for x in row]


def batch_infer(
    engine: str,
    model,
    data: Dataset,
    order: str = "tree",
    reuse: int = 1,
) -> tuple[np.ndarray, list[Scores]]:
    """Row-by-row inference over a dataset; order-preserving.

    ``engine`` is "float" (takes a float model) or "fixed" (takes a quantized
    model; rows are quantized into the configured input format first).
    """
    results: list[Scores] = []
    if engine == "float":
        if isinstance(model, BdtEnsemble):
            for row in data.features:
                results.append(infer_float_bdt(model, row))
        elif isinstance(model, FcnnModel):
            for row in data.features:
                results.append(infer_float_fcnn(model, row))
        else:
            raise TypeError(f"float engine cannot run {type(model).__name__}")
    elif engine == "fixed":
        in_fmt = model.config.input_fmt
        if isinstance(model, QuantizedBdt):
            for row in data.features:
                results.append(infer_fixed_bdt(model, quantize_inputs(row, in_fmt), order))
        elif isinstance(model, QuantizedFcnn):
            for row in data.features:
                results.append(
                    infer_fixed_fcnn(model, quantize_inputs(row, in_fmt), order, reuse)
                )
        else:
            raise TypeError(f"fixed engine cannot run {type(model).__name__}")
    else:
        raise ValueError(f"unknown engine {engine!r}")
    preds = np.array([s.predicted_class for s in results], dtype=np.int64)
    return preds, results


def apply_objective(scores: list[float], objective: Objective) -> list[float]:
    """Reporting transform for raw ensemble scores."""
    if objective is Objective.SIGMOID:
        return [1.0 / (1.0 + math.exp(-s)) for s in scores]
    if objective is Objective.SOFTMAX:
        m = max(scores)
        exps = [math.exp(s - m) for s in scores]
        z = sum(exps)
        return [e / z for e in exps]
    return list(scores)
