"""Float and fixed-point inference engine semantics."""

import math
import random
from fractions import Fraction

import numpy as np
import pytest

from modelgen import random_bdt, random_fcnn, single_stump_bdt, stump
from ml2rtl.fixedpoint import FixedPointFormat, FixedPointValue, Rounding, quantize_real
from ml2rtl.model_ir import (
    Activation,
    BdtEnsemble,
    Dataset,
    DenseLayer,
    FcnnModel,
    Internal,
    Leaf,
    Objective,
    Tree,
)
from ml2rtl.quantize import (
    BdtFormats,
    LayerFormats,
    QuantizationConfig,
    SigmoidLutSpec,
    quantize_bdt,
    quantize_fcnn,
)
from ml2rtl.emulate import (
    batch_infer,
    infer_fixed_bdt,
    infer_fixed_fcnn,
    infer_float_bdt,
    infer_float_fcnn,
    quantize_inputs,
    sigmoid_lut_apply,
    sigmoid_lut_table,
)

F = FixedPointFormat


def wide_bdt_cfg() -> QuantizationConfig:
    return QuantizationConfig(input_fmt=F(24, 8), bdt=BdtFormats(F(24, 8), F(24, 8), F(40, 16)))


def wide_fcnn_cfg(n_layers: int) -> QuantizationConfig:
    layers = tuple(
        LayerFormats(F(20, 4), F(20, 6), F(52, 14), F(20, 8)) for _ in range(n_layers)
    )
    return QuantizationConfig(input_fmt=F(20, 6), fcnn=layers)


# ---------------------------------------------------------------------------
# Float BDT engine
# ---------------------------------------------------------------------------

def test_single_leaf_score():
    m = BdtEnsemble(1, 1, ((0, Tree((Leaf(0.7),))),), (0.0,), Objective.SIGMOID)
    assert infer_float_bdt(m, [0.0]).scores == (0.7,)


def test_stump_boundary_goes_right():
    m = single_stump_bdt()  # threshold 0.5, left -1, right +1
    assert infer_float_bdt(m, [0.5]).scores == (1.0,)  # 0.5 < 0.5 is false
    assert infer_float_bdt(m, [0.49]).scores == (-1.0,)


def test_three_stumps_sum_selected_leaves():
    trees = tuple(
        (0, stump(threshold=t, left=-v, right=v)) for t, v in ((0.2, 1.0), (0.5, 2.0), (0.8, 4.0))
    )
    m = BdtEnsemble(1, 1, trees, (0.25,), Objective.SIGMOID)
    # x = 0.6: right of 0.2 and 0.5, left of 0.8 -> +1 +2 -4 + base
    assert infer_float_bdt(m, [0.6]).scores == (0.25 + 1.0 + 2.0 - 4.0,)


def test_path_property_exactly_one_leaf_per_tree():
    rng = random.Random(21)
    for _ in range(30):
        m = random_bdt(rng, n_features=3, n_classes=2, n_trees=5, max_depth=4)
        x = [rng.uniform(-3, 3) for _ in range(3)]

        def enumerate_hit(tree):
            hits = []

            def walk(idx, pred):
                node = tree.nodes[idx]
                if isinstance(node, Leaf):
                    if pred:
                        hits.append(idx)
                else:
                    walk(node.left, pred and x[node.feature] < node.threshold)
                    walk(node.right, pred and not x[node.feature] < node.threshold)

            walk(0, True)
            return hits

        got = infer_float_bdt(m, x)
        expected = list(m.base_scores)
        for ci, tree in m.trees:
            hits = enumerate_hit(tree)
            assert len(hits) == 1
            expected[ci] += tree.nodes[hits[0]].score
        # same accumulation order as the engine -> exact float equality
        assert tuple(expected) == got.scores


def test_argmax_tie_breaks_low():
    t = Tree((Leaf(0.5),))
    m = BdtEnsemble(1, 3, ((0, t), (1, t), (2, t)), (0.0, 0.0, 0.0), Objective.SOFTMAX)
    assert infer_float_bdt(m, [0.0]).predicted_class == 0


# ---------------------------------------------------------------------------
# Fixed BDT engine
# ---------------------------------------------------------------------------

def test_fixed_matches_float_when_exact():
    m = BdtEnsemble(
        2,
        1,
        (
            (0, Tree((Internal(0, 0.5, 1, 2), Leaf(-0.25), Leaf(0.75)))),
            (0, Tree((Internal(1, -1.5, 1, 2), Leaf(0.125), Leaf(-0.5)))),
        ),
        (0.0625,),
        Objective.SIGMOID,
    )
    qm = quantize_bdt(m, wide_bdt_cfg())
    rng = random.Random(22)
    for _ in range(50):
        x = [rng.choice([-2.0, -1.5, -0.5, 0.25, 0.5, 1.0]) for _ in range(2)]
        xs = quantize_inputs(x, qm.config.input_fmt)
        got = infer_fixed_bdt(qm, xs)
        want = infer_float_bdt(m, x)
        assert [v.value for v in got.scores] == list(want.scores)
        assert got.predicted_class == want.predicted_class


def test_fixed_score_equals_rational_oracle_of_quantized_params():
    rng = random.Random(23)
    cfg = QuantizationConfig(input_fmt=F(16, 4), bdt=BdtFormats(F(16, 4), F(4, 1), F(24, 8)))
    for _ in range(30):
        m = random_bdt(rng, n_features=2, n_trees=4, max_depth=3)
        qm = quantize_bdt(m, cfg)
        x = [rng.uniform(-2, 2) for _ in range(2)]
        xs = quantize_inputs(x, cfg.input_fmt)
        got = infer_fixed_bdt(qm, xs)
        # oracle: exact rational walk over the quantized parameters
        leaf_fmt, thr_fmt = cfg.bdt.leaf_fmt, cfg.bdt.threshold_fmt
        total = Fraction(qm.base_raws[0], 1 << leaf_fmt.fractional_bits)
        for _, qt in qm.trees:
            node = qt.nodes[0]
            while not hasattr(node, "raw"):
                t = Fraction(node.threshold_raw, 1 << thr_fmt.fractional_bits)
                node = qt.nodes[node.left if xs[node.feature].exact < t else node.right]
            total += Fraction(node.raw, 1 << leaf_fmt.fractional_bits)
        assert got.scores[0].exact == total  # accum wide enough: no rounding


def test_saturating_accumulation_is_order_sensitive():
    """Narrow saturating accumulators depend on order; wide ones do not."""
    rng = random.Random(24)
    narrow = QuantizationConfig(
        input_fmt=F(8, 2), bdt=BdtFormats(F(8, 2), F(8, 3), F(8, 3, rounding=Rounding.TRUNCATE))
    )
    wide = QuantizationConfig(
        input_fmt=F(8, 2), bdt=BdtFormats(F(8, 2), F(8, 3), F(20, 8, rounding=Rounding.TRUNCATE))
    )
    found_difference = False
    for trial in range(500):
        trees = tuple(
            (0, Tree((Leaf(rng.uniform(-3.9, 3.9)),))) for _ in range(rng.randint(3, 6))
        )
        m = BdtEnsemble(1, 1, trees, (rng.uniform(-3.9, 3.9),), Objective.SIGMOID)
        x = quantize_inputs([0.0], narrow.input_fmt)
        qn = quantize_bdt(m, narrow)
        a = infer_fixed_bdt(qn, x, order="tree").scores[0].raw
        b = infer_fixed_bdt(qn, x, order="sequential").scores[0].raw
        if a != b:
            found_difference = True
        qw = quantize_bdt(m, wide)
        aw = infer_fixed_bdt(qw, x, order="tree").scores[0].raw
        bw = infer_fixed_bdt(qw, x, order="sequential").scores[0].raw
        assert aw == bw  # exact-width accumulation is order-insensitive
    assert found_difference


def test_fixed_engine_is_deterministic():
    rng = random.Random(25)
    m = random_bdt(rng, n_features=3, n_trees=6)
    qm = quantize_bdt(m, wide_bdt_cfg())
    x = quantize_inputs([0.3, -1.2, 0.9], qm.config.input_fmt)
    raws = [v.raw for v in infer_fixed_bdt(qm, x).scores]
    for _ in range(5):
        assert [v.raw for v in infer_fixed_bdt(qm, x).scores] == raws


# ---------------------------------------------------------------------------
# Float dense engine
# ---------------------------------------------------------------------------

def test_identity_layer_passes_input():
    m = FcnnModel((DenseLayer(np.eye(3), np.zeros(3), Activation.LINEAR),))
    out = infer_float_fcnn(m, [1.0, -2.0, 0.5])
    assert out.scores == (1.0, -2.0, 0.5)


def test_relu_clamps_negative_preactivations():
    m = FcnnModel((DenseLayer(-np.eye(2), np.zeros(2), Activation.RELU),))
    assert infer_float_fcnn(m, [1.0, 2.0]).scores == (0.0, 0.0)


def test_dense_forward_matches_nested_loop_oracle():
    rng = random.Random(26)
    for _ in range(20):
        m = random_fcnn(rng, sizes=[3, 2, 2], hidden_activation=Activation.RELU)
        x = [rng.uniform(-2, 2) for _ in range(3)]
        got = infer_float_fcnn(m, x)
        v = list(x)
        for layer in m.layers:
            nxt = []
            for i in range(layer.out_size):
                s = float(layer.bias[i])
                for j in range(layer.in_size):
                    s += float(layer.weights[i, j]) * v[j]
                nxt.append(max(s, 0.0) if layer.activation is Activation.RELU else s)
            v = nxt
        assert max(abs(a - b) for a, b in zip(got.scores, v)) < 1e-12


# ---------------------------------------------------------------------------
# Fixed dense engine
# ---------------------------------------------------------------------------

def test_all_zero_input_and_bias_gives_zero_scores():
    m = FcnnModel((DenseLayer(np.ones((2, 2)), np.zeros(2), Activation.LINEAR),))
    qm = quantize_fcnn(m, wide_fcnn_cfg(1))
    xs = quantize_inputs([0.0, 0.0], qm.config.input_fmt)
    assert [v.raw for v in infer_fixed_fcnn(qm, xs).scores] == [0, 0]


def test_exact_identity_layer_recasts_input():
    m = FcnnModel((DenseLayer(np.eye(2), np.zeros(2), Activation.LINEAR),))
    qm = quantize_fcnn(m, wide_fcnn_cfg(1))
    xs = quantize_inputs([0.75, -1.25], qm.config.input_fmt)
    out = infer_fixed_fcnn(qm, xs)
    assert [v.value for v in out.scores] == [0.75, -1.25]


def test_sigmoid_lut_at_zero():
    spec = SigmoidLutSpec()
    act = F(12, 2)
    table = sigmoid_lut_table(spec, act)
    v = FixedPointValue(0, F(20, 8))
    got = sigmoid_lut_apply(v, table, spec, act)
    # bin containing 0 is [0, 1/64); its midpoint is 1/128
    expected = quantize_real(
        1.0 / (1.0 + math.exp(-1.0 / 128.0)), act.with_semantics(rounding=Rounding.NEAREST_EVEN)
    )
    assert got.raw == expected.raw


def test_sigmoid_lut_saturates_outside_range():
    spec = SigmoidLutSpec()
    act = F(12, 2)
    table = sigmoid_lut_table(spec, act)
    wide = F(24, 10)
    lo = sigmoid_lut_apply(quantize_real(-9.0, wide), table, spec, act)
    hi = sigmoid_lut_apply(quantize_real(9.0, wide), table, spec, act)
    assert lo.raw == 0
    assert hi.raw == quantize_real(1.0, act.with_semantics(rounding=Rounding.NEAREST_EVEN)).raw


def test_linear_engine_matches_rational_oracle_and_scales():
    from oracles import oracle_cast

    rng = random.Random(27)
    cfg = wide_fcnn_cfg(1)
    for _ in range(20):
        m = random_fcnn(rng, sizes=[3, 2], final_activation=Activation.LINEAR)
        qm = quantize_fcnn(m, cfg)
        x = [rng.uniform(-1, 1) for _ in range(3)]
        for scale in (1.0, 2.0):
            xs = quantize_inputs([scale * v for v in x], cfg.input_fmt)
            got = infer_fixed_fcnn(qm, xs)
            lf = cfg.fcnn[0]
            for i, out in enumerate(got.scores):
                acc = Fraction(int(qm.layers[0].bias_raws[i]), 1 << lf.bias_fmt.fractional_bits)
                for j in range(3):
                    w = Fraction(
                        int(qm.layers[0].weight_raws[i, j]),
                        1 << lf.weight_fmt.fractional_bits,
                    )
                    acc += w * xs[j].exact
                # accumulation is exact at these widths; the only rounding is
                # the declared final cast into the activation format
                assert out.raw == oracle_cast(acc, lf.activation_fmt)


def test_reuse_grouping_changes_only_order_not_result_when_wide():
    rng = random.Random(28)
    cfg = wide_fcnn_cfg(2)
    m = random_fcnn(rng, sizes=[6, 5, 3], hidden_activation=Activation.RELU)
    qm = quantize_fcnn(m, cfg)
    xs = quantize_inputs([rng.uniform(-1, 1) for _ in range(6)], cfg.input_fmt)
    base = [v.raw for v in infer_fixed_fcnn(qm, xs, reuse=1).scores]
    for r in (2, 3, 4, 8):
        assert [v.raw for v in infer_fixed_fcnn(qm, xs, reuse=r).scores] == base


def test_softmax_final_layer_is_argmax_only():
    m = FcnnModel(
        (
            DenseLayer(np.array([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]]), np.zeros(3), Activation.SOFTMAX),
        )
    )
    qm = quantize_fcnn(m, wide_fcnn_cfg(1))
    xs = quantize_inputs([2.0, 1.0], qm.config.input_fmt)
    out = infer_fixed_fcnn(qm, xs)
    assert out.predicted_class == 0
    assert out.scores[0].value == 2.0  # scores pass through untransformed


# ---------------------------------------------------------------------------
# batch_infer
# ---------------------------------------------------------------------------

def test_batch_of_one_equals_single_call():
    rng = random.Random(29)
    m = random_bdt(rng, n_features=2, n_trees=3)
    data = Dataset(np.array([[0.1, -0.4]]), np.array([0]))
    preds, scores = batch_infer("float", m, data)
    single = infer_float_bdt(m, [0.1, -0.4])
    assert preds.tolist() == [single.predicted_class]
    assert scores[0].scores == single.scores


def test_permuted_batch_permutes_outputs():
    rng = random.Random(30)
    m = random_bdt(rng, n_features=2, n_trees=3)
    npr = np.random.default_rng(30)
    feats = npr.normal(size=(40, 2))
    data = Dataset(feats, np.zeros(40, dtype=np.int64))
    perm = npr.permutation(40)
    shuffled = Dataset(feats[perm], np.zeros(40, dtype=np.int64))
    preds, _ = batch_infer("float", m, data)
    preds_perm, _ = batch_infer("float", m, shuffled)
    assert preds_perm.tolist() == preds[perm].tolist()


def test_large_batch_matches_row_loop():
    rng = random.Random(31)
    m = random_bdt(rng, n_features=4, n_trees=5)
    npr = np.random.default_rng(31)
    feats = npr.normal(size=(10_000, 4))
    data = Dataset(feats, np.zeros(10_000, dtype=np.int64))
    preds, scores = batch_infer("float", m, data)
    for i in range(0, 10_000, 997):  # spot-check a spread of rows
        single = infer_float_bdt(m, feats[i])
        assert preds[i] == single.predicted_class
        assert scores[i].scores == single.scores
