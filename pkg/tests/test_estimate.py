"""Cost model rules and report comparisons."""

import random

import numpy as np
import pytest

from modelgen import random_bdt, random_fcnn
from ml2rtl.fixedpoint import BIT, FixedPointFormat, Rounding
from ml2rtl.model_ir import Activation, DenseLayer, FcnnModel
from ml2rtl.quantize import (
    BdtFormats,
    LayerFormats,
    PruningConfig,
    QuantizationConfig,
    prune_fcnn,
    quantize_bdt,
    quantize_fcnn,
)
from ml2rtl.netlist import Cell, NetlistIr, Wire, lower_bdt, lower_fcnn
from ml2rtl.estimate import (
    CostModel,
    ResourceReport,
    UncoveredCellKind,
    compare_reports,
    estimate,
)

F = FixedPointFormat


def mul_netlist(w1: int, w2: int) -> NetlistIr:
    fa, fb = F(w1, 4), F(w2, 4)
    from ml2rtl.fixedpoint import product_format

    pf = product_format(fb, fa)
    wires = {
        "a": Wire("a", fa),
        "w": Wire("w", fb),
        "p": Wire("p", pf),
    }
    return NetlistIr(
        "m",
        inputs=["a"],
        outputs=["p"],
        wires=wires,
        cells=[
            Cell("Const", (), "w", None, {"raw": 1}),
            Cell("Mul", ("a", "w"), "p", 1, {"lanes": 1, "phases": 1}),
        ],
        latency_cycles=1,
        initiation_interval=1,
    )


def test_empty_netlist_is_all_zero():
    n = NetlistIr("empty", [], [], {}, [], 0, 1)
    r = estimate(n)
    assert (r.lut, r.ff, r.dsp, r.bram) == (0, 0, 0, 0)


def test_small_mul_is_one_dsp():
    r = estimate(mul_netlist(18, 18))
    assert r.dsp == 1


def test_wide_mul_splits_into_four_dsps():
    r = estimate(mul_netlist(20, 20))
    assert r.dsp == 4


def test_uncovered_kind_raises():
    n = NetlistIr(
        "bad",
        [],
        ["x"],
        {"x": Wire("x", F(4, 2))},
        [Cell("Mystery", (), "x", None, {})],
        0,
        1,
    )
    with pytest.raises(UncoveredCellKind):
        estimate(n)


def test_totals_match_breakdown():
    rng = random.Random(60)
    m = random_bdt(rng, n_features=3, n_trees=6)
    cfg = QuantizationConfig(input_fmt=F(10, 4), bdt=BdtFormats(F(10, 4), F(10, 2), F(18, 6)))
    r = estimate(lower_bdt(quantize_bdt(m, cfg)))
    for axis in ("lut", "ff", "dsp", "bram"):
        assert getattr(r, axis) == sum(slot[axis] for slot in r.breakdown.values())
    assert r.bram == 0 and r.dsp == 0  # trees compare and add, never multiply


def test_compare_reports_verdicts():
    a = ResourceReport(lut=10, ff=5, dsp=1, bram=0, latency_cycles=4, initiation_interval=1)
    same = ResourceReport(lut=10, ff=5, dsp=1, bram=0, latency_cycles=4, initiation_interval=1)
    better = ResourceReport(lut=8, ff=5, dsp=1, bram=0, latency_cycles=4, initiation_interval=1)
    mixed = ResourceReport(lut=8, ff=9, dsp=1, bram=0, latency_cycles=4, initiation_interval=1)
    assert compare_reports(a, same) == "equal"
    assert compare_reports(better, a) == "a_dominates"
    assert compare_reports(a, better) == "b_dominates"
    assert compare_reports(a, mixed) == "incomparable"


def trn(w, i):
    return F(w, i, rounding=Rounding.TRUNCATE)


def fcnn_cfg_for_width(n_layers: int, w: int) -> QuantizationConfig:
    return QuantizationConfig(
        input_fmt=F(w, 3),
        fcnn=tuple(
            LayerFormats(F(w, 2), F(w, 3), trn(2 * w + 5, 9), trn(w, 4))
            for _ in range(n_layers)
        ),
    )


def test_width_monotonicity():
    """Strictly larger widths never shrink any resource count (models
    without sigmoid ROMs; the BRAM promotion rule is inherently a step)."""
    rng = random.Random(61)
    m = random_fcnn(rng, sizes=[5, 4, 2], hidden_activation=Activation.RELU)
    tree = random_bdt(rng, n_features=4, n_trees=5)
    prev = {"fcnn": None, "bdt": None}
    for w in (8, 10, 12, 16, 20):
        qf = quantize_fcnn(m, fcnn_cfg_for_width(2, w))
        rf = estimate(lower_fcnn(qf))
        cfg = QuantizationConfig(
            input_fmt=F(w, 4), bdt=BdtFormats(F(w, 4), F(w, 2), trn(w + 8, 6))
        )
        rb = estimate(lower_bdt(quantize_bdt(tree, cfg)))
        for key, r in (("fcnn", rf), ("bdt", rb)):
            if prev[key] is not None:
                for axis in ("lut", "ff", "dsp", "bram"):
                    assert getattr(r, axis) >= getattr(prev[key], axis), (key, w, axis)
            prev[key] = r


def test_size_monotonicity():
    rng = random.Random(62)
    cfg = QuantizationConfig(input_fmt=F(10, 4), bdt=BdtFormats(F(10, 4), F(10, 2), F(18, 6)))
    m = random_bdt(rng, n_features=3, n_trees=4)
    base = estimate(lower_bdt(quantize_bdt(m, cfg)))
    bigger_model = random_bdt(rng, n_features=3, n_trees=5)
    # rebuild with the same first four trees plus one more
    from ml2rtl.model_ir import BdtEnsemble

    grown = BdtEnsemble(
        m.n_features,
        m.n_classes,
        m.trees + ((0, bigger_model.trees[0][1]),),
        m.base_scores,
        m.objective,
    )
    r2 = estimate(lower_bdt(quantize_bdt(grown, cfg)))
    assert r2.lut + r2.dsp > base.lut + base.dsp

    f = random_fcnn(rng, sizes=[4, 3])
    w = f.layers[0].weights.copy()
    w[0, 0] = 0.0
    from ml2rtl.model_ir import DenseLayer as DL, FcnnModel as FM

    smaller = FM((DL(w, f.layers[0].bias, f.layers[0].activation),))
    qcfg = fcnn_cfg_for_width(1, 10)
    r_small = estimate(lower_fcnn(quantize_fcnn(smaller, qcfg)))
    r_full = estimate(lower_fcnn(quantize_fcnn(f, qcfg)))
    assert r_full.lut + r_full.dsp > r_small.lut + r_small.dsp


def test_pruning_payoff_dsp_equals_nonzero_count():
    rng = random.Random(63)
    m = random_fcnn(rng, sizes=[16, 16, 2], hidden_activation=Activation.RELU)
    qcfg = fcnn_cfg_for_width(2, 12)
    for s in (0.0, 0.25, 0.5, 0.75, 0.9):
        pruned, masks = prune_fcnn(m, PruningConfig.uniform(s, 1))
        qm = quantize_fcnn(pruned, qcfg, masks)
        nonzero = sum(int(np.count_nonzero(l.weight_raws)) for l in qm.layers)
        r = estimate(lower_fcnn(qm, reuse=1))
        assert r.dsp == nonzero


def test_cost_model_json_roundtrip(tmp_path):
    cm = CostModel(dsp_max_width=27, bram_threshold_bits=4096)
    p = tmp_path / "cm.json"
    p.write_text(__import__("json").dumps(cm.to_json()))
    from ml2rtl.estimate import load_cost_model

    assert load_cost_model(str(p)) == cm
