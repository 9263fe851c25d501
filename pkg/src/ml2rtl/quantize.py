"""Fixed-point calibration, parameter quantization, and magnitude pruning.

Calibration picks integer bits per role from the observed absolute maximum
on a calibration set (exact maxima for stored parameters, forward-pass maxima
for activations and accumulator partials), always reserving a sign bit.
Fractional bits take the remaining width.  Accumulator formats keep at least
the fractional bits of their operands, so accumulation only ever loses
information through overflow, never through rounding, and the declared cast
points are the only places precision drops.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fixedpoint import FixedPointFormat, Overflow, Rounding, quantize_real
from .model_ir import (
    Activation,
    BdtEnsemble,
    Dataset,
    DenseLayer,
    FcnnModel,
    Internal,
    Leaf,
    Objective,
    validate_bdt,
    validate_fcnn,
)


class WidthTooSmall(Exception):
    def __init__(self, role: str, needed_integer_bits: int, width: int):
        self.role = role
        self.needed_integer_bits = needed_integer_bits
        self.width = width
        super().__init__(
            f"role {role!r} needs {needed_integer_bits} integer bits "
            f"but width {width} allows at most {width - 1}"
        )


@dataclass(frozen=True)
class SigmoidLutSpec:
    """Lookup-table geometry for the hardware sigmoid."""

    entries: int = 1024
    lo: float = -8.0
    hi: float = 8.0

    def __post_init__(self) -> None:
        if self.entries < 2 or self.lo >= self.hi:
            raise ValueError("bad sigmoid LUT spec")


@dataclass(frozen=True)
class BdtFormats:
    threshold_fmt: FixedPointFormat
    leaf_fmt: FixedPointFormat
    accum_fmt: FixedPointFormat


@dataclass(frozen=True)
class LayerFormats:
    weight_fmt: FixedPointFormat
    bias_fmt: FixedPointFormat
    accum_fmt: FixedPointFormat
    activation_fmt: FixedPointFormat


@dataclass(frozen=True)
class QuantizationConfig:
    input_fmt: FixedPointFormat
    bdt: BdtFormats | None = None
    fcnn: tuple[LayerFormats, ...] | None = None
    sigmoid_lut: SigmoidLutSpec = field(default_factory=SigmoidLutSpec)

    def validate(self) -> None:
        """Enforce the no-rounding-before-cast accumulator invariant."""
        if self.bdt is not None:
            if self.bdt.accum_fmt.fractional_bits < self.bdt.leaf_fmt.fractional_bits:
                raise ValueError(
                    "bdt accumulator must keep at least the leaf fractional bits"
                )
        if self.fcnn is not None:
            in_fmt = self.input_fmt
            for k, lf in enumerate(self.fcnn):
                product_frac = lf.weight_fmt.fractional_bits + in_fmt.fractional_bits
                need = max(product_frac, lf.bias_fmt.fractional_bits)
                if lf.accum_fmt.fractional_bits < need:
                    raise ValueError(
                        f"layer {k} accumulator has {lf.accum_fmt.fractional_bits} "
                        f"fractional bits, operands need {need}"
                    )
                in_fmt = lf.activation_fmt


@dataclass(frozen=True)
class PruningConfig:
    """Per-layer target sparsity (fraction of weights to zero)."""

    sparsity: tuple[float, ...]

    def __post_init__(self) -> None:
        for s in self.sparsity:
            if not 0.0 <= s <= 1.0:
                raise ValueError(f"sparsity {s} outside [0, 1]")

    @classmethod
    def uniform(cls, s: float, n_layers: int) -> "PruningConfig":
        return cls((s,) * n_layers)

    def for_layer(self, k: int) -> float:
        if len(self.sparsity) == 1:
            return self.sparsity[0]
        return self.sparsity[k]


# ---------------------------------------------------------------------------
# Quantized models: same topology, parameters stored as raw integers.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QLeaf:
    raw: int


@dataclass(frozen=True)
class QInternal:
    feature: int
    threshold_raw: int
    left: int
    right: int


@dataclass(frozen=True)
class QTree:
    nodes: tuple[QLeaf | QInternal, ...]


@dataclass(frozen=True)
class QuantizedBdt:
    n_features: int
    n_classes: int
    trees: tuple[tuple[int, QTree], ...]
    base_raws: tuple[int, ...]
    objective: Objective
    config: QuantizationConfig

    def trees_for_class(self, c: int) -> list[QTree]:
        return [t for ci, t in self.trees if ci == c]


@dataclass(frozen=True)
class QDenseLayer:
    weight_raws: np.ndarray  # int64, shape (out, in)
    bias_raws: np.ndarray  # int64, shape (out,)
    activation: Activation
    prune_mask: np.ndarray  # bool, True where pruned


@dataclass(frozen=True)
class QuantizedFcnn:
    layers: tuple[QDenseLayer, ...]
    config: QuantizationConfig

    @property
    def n_features(self) -> int:
        return self.layers[0].weight_raws.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.layers[-1].weight_raws.shape[0]


# ---------------------------------------------------------------------------
# Calibration
# ---------------------------------------------------------------------------

def _needed_integer_bits(abs_max: float) -> int:
    """Smallest signed integer-bit count whose range covers abs_max.

    Magnitude bits k satisfy 2**k > abs_max (so abs_max saturates by less
    than one ulp at worst), plus one sign bit; at least 1 even for all-zero
    observations.
    """
    k = 0
    while (1 << k) <= abs_max:
        k += 1
    return k + 1


def _format_for(role: str, abs_max: float, width: int, rounding: Rounding) -> FixedPointFormat:
    integer = _needed_integer_bits(abs_max)
    if integer > width - 1:
        raise WidthTooSmall(role, integer, width)
    return FixedPointFormat(width, integer, True, rounding, Overflow.SATURATE)


def reduce_balanced(values: list, add):
    """Balanced adjacent-pair reduction; the accumulation order the netlist
    adder trees implement.  Odd tails pass through to the next level."""
    while len(values) > 1:
        nxt = []
        for i in range(0, len(values) - 1, 2):
            nxt.append(add(values[i], values[i + 1]))
        if len(values) % 2:
            nxt.append(values[-1])
        values = nxt
    return values[0]


class _Peak:
    """Tracks the largest absolute value seen through a reduction."""

    def __init__(self) -> None:
        self.value = 0.0

    def see(self, x: float) -> float:
        a = abs(x)
        if a > self.value:
            self.value = a
        return x

    def add(self, a: float, b: float) -> float:
        return self.see(a + b)


def _bdt_maxima(m: BdtEnsemble, calib: Dataset) -> dict[str, float]:
    thresholds = [n.threshold for _, t in m.trees for n in t.nodes if isinstance(n, Internal)]
    leaves = [n.score for _, t in m.trees for n in t.nodes if isinstance(n, Leaf)]
    leaves.extend(m.base_scores)
    peak = _Peak()
    for row in calib.features:
        for c in range(m.n_classes):
            operands = []
            for tree in m.trees_for_class(c):
                idx = 0
                node = tree.nodes[0]
                while isinstance(node, Internal):
                    idx = node.left if row[node.feature] < node.threshold else node.right
                    node = tree.nodes[idx]
                operands.append(peak.see(node.score))
            operands.append(peak.see(m.base_scores[c]))
            reduce_balanced(operands, peak.add)
    return {
        "threshold": max((abs(t) for t in thresholds), default=0.0),
        "leaf": max((abs(v) for v in leaves), default=0.0),
        "accum": peak.value,
    }


def _fcnn_maxima(m: FcnnModel, calib: Dataset) -> list[dict[str, float]]:
    """Per-layer maxima for weight/bias/accum/activation roles."""
    out = []
    x = calib.features.astype(np.float64)
    for layer in m.layers:
        peak = _Peak()
        pre = np.empty((x.shape[0], layer.out_size))
        for r in range(x.shape[0]):
            for i in range(layer.out_size):
                operands = [
                    peak.see(layer.weights[i, j] * x[r, j])
                    for j in range(layer.in_size)
                    if layer.weights[i, j] != 0.0
                ]
                operands.append(peak.see(float(layer.bias[i])))
                pre[r, i] = reduce_balanced(operands, peak.add)
        act = _apply_activation_float(pre, layer.activation)
        out.append(
            {
                "weight": float(np.max(np.abs(layer.weights), initial=0.0)),
                "bias": float(np.max(np.abs(layer.bias), initial=0.0)),
                "accum": peak.value,
                "activation": float(np.max(np.abs(act), initial=0.0)),
            }
        )
        x = act
    return out


def _apply_activation_float(pre: np.ndarray, act: Activation) -> np.ndarray:
    if act is Activation.RELU:
        return np.maximum(pre, 0.0)
    if act is Activation.SIGMOID:
        return 1.0 / (1.0 + np.exp(-pre))
    # linear and softmax pass scores through (softmax is reporting-only)
    return pre


PARAM_ROUNDING = Rounding.NEAREST_EVEN
DATAPATH_ROUNDING = Rounding.TRUNCATE


def calibrate_formats(
    m: BdtEnsemble | FcnnModel,
    calib: Dataset,
    widths: dict[str, int],
    sigmoid_lut: SigmoidLutSpec | None = None,
) -> QuantizationConfig:
    """Choose fixed-point formats from data ranges.

    ``widths`` maps roles to total bit widths.  Roles: ``input`` plus, for
    trees, ``threshold``/``leaf``/``accum`` and, for dense nets,
    ``weight``/``bias``/``accum``/``activation``.  The ``accum`` width may be
    omitted: it then widens automatically to hold the calibrated integer bits
    alongside the full operand fractional bits.
    """
    if len(calib) == 0:
        raise ValueError("calibration dataset is empty")
    for role, w in widths.items():
        if w is not None and w < 2:
            raise ValueError(f"width for role {role!r} must be >= 2")

    input_max = float(np.max(np.abs(calib.features), initial=0.0))
    input_fmt = _format_for("input", input_max, widths["input"], PARAM_ROUNDING)
    lut = sigmoid_lut if sigmoid_lut is not None else SigmoidLutSpec()

    def accum_format(abs_max: float, operand_frac: int) -> FixedPointFormat:
        integer = _needed_integer_bits(abs_max)
        width = widths.get("accum")
        if width is None:
            width = integer + operand_frac
        if integer > width - 1:
            raise WidthTooSmall("accum", integer, width)
        frac = width - integer
        if frac < operand_frac:
            raise WidthTooSmall("accum", integer + operand_frac - frac, width)
        return FixedPointFormat(width, integer, True, DATAPATH_ROUNDING, Overflow.SATURATE)

    if isinstance(m, BdtEnsemble):
        maxima = _bdt_maxima(m, calib)
        threshold_fmt = _format_for(
            "threshold", maxima["threshold"], widths["threshold"], PARAM_ROUNDING
        )
        leaf_fmt = _format_for("leaf", maxima["leaf"], widths["leaf"], PARAM_ROUNDING)
        cfg = QuantizationConfig(
            input_fmt=input_fmt,
            bdt=BdtFormats(
                threshold_fmt,
                leaf_fmt,
                accum_format(maxima["accum"], leaf_fmt.fractional_bits),
            ),
            sigmoid_lut=lut,
        )
    else:
        per_layer = []
        in_fmt = input_fmt
        for stats in _fcnn_maxima(m, calib):
            weight_fmt = _format_for("weight", stats["weight"], widths["weight"], PARAM_ROUNDING)
            bias_fmt = _format_for("bias", stats["bias"], widths["bias"], PARAM_ROUNDING)
            operand_frac = max(
                weight_fmt.fractional_bits + in_fmt.fractional_bits,
                bias_fmt.fractional_bits,
            )
            act_fmt = _format_for(
                "activation", stats["activation"], widths["activation"], DATAPATH_ROUNDING
            )
            per_layer.append(
                LayerFormats(
                    weight_fmt,
                    bias_fmt,
                    accum_format(stats["accum"], operand_frac),
                    act_fmt,
                )
            )
            in_fmt = act_fmt
        cfg = QuantizationConfig(input_fmt=input_fmt, fcnn=tuple(per_layer), sigmoid_lut=lut)
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# Parameter quantization
# ---------------------------------------------------------------------------

def quantize_bdt(m: BdtEnsemble, cfg: QuantizationConfig) -> QuantizedBdt:
    """Quantize thresholds and leaf/base scores; topology is untouched."""
    if cfg.bdt is None:
        raise ValueError("config carries no BDT formats")
    cfg.validate()
    violations = validate_bdt(m)
    if violations:
        raise ValueError(f"invalid model: {violations[0]}")
    qtrees = []
    for class_index, tree in m.trees:
        qnodes: list[QLeaf | QInternal] = []
        for n in tree.nodes:
            if isinstance(n, Leaf):
                qnodes.append(QLeaf(quantize_real(n.score, cfg.bdt.leaf_fmt).raw))
            else:
                qnodes.append(
                    QInternal(
                        n.feature,
                        quantize_real(n.threshold, cfg.bdt.threshold_fmt).raw,
                        n.left,
                        n.right,
                    )
                )
        qtrees.append((class_index, QTree(tuple(qnodes))))
    base = tuple(quantize_real(s, cfg.bdt.leaf_fmt).raw for s in m.base_scores)
    return QuantizedBdt(
        m.n_features, m.n_classes, tuple(qtrees), base, m.objective, cfg
    )


def quantize_fcnn(
    m: FcnnModel,
    cfg: QuantizationConfig,
    prune_masks: list[np.ndarray] | None = None,
) -> QuantizedFcnn:
    """Quantize weights and biases per layer; zeros stay exactly raw 0."""
    if cfg.fcnn is None:
        raise ValueError("config carries no dense-layer formats")
    if len(cfg.fcnn) != len(m.layers):
        raise ValueError(
            f"config has {len(cfg.fcnn)} layer format sets for {len(m.layers)} layers"
        )
    cfg.validate()
    violations = validate_fcnn(m)
    if violations:
        raise ValueError(f"invalid model: {violations[0]}")
    qlayers = []
    for k, (layer, lf) in enumerate(zip(m.layers, cfg.fcnn)):
        w = np.empty(layer.weights.shape, dtype=np.int64)
        for i in range(layer.out_size):
            for j in range(layer.in_size):
                w[i, j] = quantize_real(float(layer.weights[i, j]), lf.weight_fmt).raw
        b = np.array(
            [quantize_real(float(x), lf.bias_fmt).raw for x in layer.bias], dtype=np.int64
        )
        if prune_masks is not None:
            mask = np.asarray(prune_masks[k], dtype=bool)
            if mask.shape != layer.weights.shape:
                raise ValueError(f"layer {k} mask shape {mask.shape} != weight shape")
        else:
            mask = np.zeros(layer.weights.shape, dtype=bool)
        w[mask] = 0
        qlayers.append(QDenseLayer(w, b, layer.activation, mask))
    return QuantizedFcnn(tuple(qlayers), cfg)


# ---------------------------------------------------------------------------
# Magnitude pruning
# ---------------------------------------------------------------------------

def prune_fcnn(
    m: FcnnModel, p: PruningConfig
) -> tuple[FcnnModel, list[np.ndarray]]:
    """Zero the floor(sparsity * n) smallest-magnitude weights per layer.

    Ties break by (row, col) position; biases are never pruned.  Returns the
    pruned model and per-layer boolean masks of the zeroed positions.
    """
    if len(p.sparsity) not in (1, len(m.layers)):
        raise ValueError(
            f"pruning config has {len(p.sparsity)} entries for {len(m.layers)} layers"
        )
    new_layers = []
    masks = []
    for k, layer in enumerate(m.layers):
        s = p.for_layer(k)
        n = layer.weights.size
        count = math.floor(s * n)
        mask = np.zeros(layer.weights.shape, dtype=bool)
        if count > 0:
            order = sorted(
                ((abs(float(layer.weights[i, j])), i, j)
                 for i in range(layer.weights.shape[0])
                 for j in range(layer.weights.shape[1])),
            )
            for _, i, j in order[:count]:
                mask[i, j] = True
        w = layer.weights.copy()
        w[mask] = 0.0
        new_layers.append(DenseLayer(w, layer.bias.copy(), layer.activation))
        masks.append(mask)
    return FcnnModel(tuple(new_layers)), masks


# ---------------------------------------------------------------------------
# Config and quantized-model JSON
# ---------------------------------------------------------------------------

def config_to_json(cfg: QuantizationConfig, pruning: PruningConfig | None = None) -> dict:
    doc: dict = {"input": cfg.input_fmt.to_string()}
    if cfg.bdt is not None:
        doc["bdt"] = {
            "threshold": cfg.bdt.threshold_fmt.to_string(),
            "leaf": cfg.bdt.leaf_fmt.to_string(),
            "accum": cfg.bdt.accum_fmt.to_string(),
        }
    if cfg.fcnn is not None:
        doc["fcnn"] = [
            {
                "weight": lf.weight_fmt.to_string(),
                "bias": lf.bias_fmt.to_string(),
                "accum": lf.accum_fmt.to_string(),
                "activation": lf.activation_fmt.to_string(),
            }
            for lf in cfg.fcnn
        ]
    doc["sigmoid_lut"] = {
        "entries": cfg.sigmoid_lut.entries,
        "lo": cfg.sigmoid_lut.lo,
        "hi": cfg.sigmoid_lut.hi,
    }
    if pruning is not None:
        doc["pruning"] = {"sparsity": list(pruning.sparsity)}
    return doc


def config_from_json(doc: dict) -> tuple[QuantizationConfig, PruningConfig | None]:
    fmt = FixedPointFormat.from_string
    lut_doc = doc.get("sigmoid_lut", {})
    lut = SigmoidLutSpec(
        entries=int(lut_doc.get("entries", 1024)),
        lo=float(lut_doc.get("lo", -8.0)),
        hi=float(lut_doc.get("hi", 8.0)),
    )
    bdt = None
    if "bdt" in doc:
        b = doc["bdt"]
        bdt = BdtFormats(fmt(b["threshold"]), fmt(b["leaf"]), fmt(b["accum"]))
    fcnn = None
    if "fcnn" in doc:
        fcnn = tuple(
            LayerFormats(fmt(l["weight"]), fmt(l["bias"]), fmt(l["accum"]), fmt(l["activation"]))
            for l in doc["fcnn"]
        )
    cfg = QuantizationConfig(fmt(doc["input"]), bdt, fcnn, lut)
    cfg.validate()
    pruning = None
    if "pruning" in doc:
        pruning = PruningConfig(tuple(float(s) for s in doc["pruning"]["sparsity"]))
    return cfg, pruning


def quantized_to_json(qm: QuantizedBdt | QuantizedFcnn) -> dict:
    """Serializable form of a quantized model (raw integers + config)."""
    if isinstance(qm, QuantizedBdt):
        payload = {
            "n_features": qm.n_features,
            "n_classes": qm.n_classes,
            "base_raws": list(qm.base_raws),
            "objective": qm.objective.value,
            "trees": [
                {
                    "class_index": ci,
                    "nodes": [
                        {"leaf": n.raw}
                        if isinstance(n, QLeaf)
                        else {
                            "feature": n.feature,
                            "threshold": n.threshold_raw,
                            "left": n.left,
                            "right": n.right,
                        }
                        for n in t.nodes
                    ],
                }
                for ci, t in qm.trees
            ],
        }
        kind = "bdt"
    else:
        payload = {
            "layers": [
                {
                    "weights": [[int(x) for x in row] for row in l.weight_raws],
                    "bias": [int(x) for x in l.bias_raws],
                    "activation": l.activation.value,
                    "prune_mask": [[bool(x) for x in row] for row in l.prune_mask],
                }
                for l in qm.layers
            ]
        }
        kind = "fcnn"
    return {
        "schema_version": "1.0",
        "model_kind": kind,
        "quantized": True,
        "config": config_to_json(qm.config),
        "payload": payload,
    }


def quantized_from_json(doc: dict) -> QuantizedBdt | QuantizedFcnn:
    if not doc.get("quantized"):
        raise ValueError("not a quantized model document")
    cfg, _ = config_from_json(doc["config"])
    payload = doc["payload"]
    if doc.get("model_kind") == "bdt":
        trees = []
        for t in payload["trees"]:
            nodes: list[QLeaf | QInternal] = []
            for n in t["nodes"]:
                if "leaf" in n:
                    nodes.append(QLeaf(int(n["leaf"])))
                else:
                    nodes.append(
                        QInternal(int(n["feature"]), int(n["threshold"]), int(n["left"]), int(n["right"]))
                    )
            trees.append((int(t["class_index"]), QTree(tuple(nodes))))
        return QuantizedBdt(
            int(payload["n_features"]),
            int(payload["n_classes"]),
            tuple(trees),
            tuple(int(x) for x in payload["base_raws"]),
            Objective(payload["objective"]),
            cfg,
        )
    if doc.get("model_kind") == "fcnn":
        layers = []
        for l in payload["layers"]:
            layers.append(
                QDenseLayer(
                    np.array(l["weights"], dtype=np.int64),
                    np.array(l["bias"], dtype=np.int64),
                    Activation(l["activation"]),
                    np.array(l["prune_mask"], dtype=bool),
                )
            )
        return QuantizedFcnn(tuple(layers), cfg)
    raise ValueError(f"unknown model_kind {doc.get('model_kind')!r}")
