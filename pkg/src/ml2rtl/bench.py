"""Accuracy-versus-resource sweeps and the metrics they report.

A sweep runs the full pipeline (prune, calibrate, quantize, lower, estimate,
emulate) at every grid point and emits one row per configuration,
deterministically ordered by grid iteration (width, then sparsity, then
reuse).  Rows are self-contained: re-running a single configuration
reproduces its row exactly.
"""

from __future__ import annotations

import itertools
import json
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .emulate import batch_infer
from .estimate import CostModel, estimate
from .model_ir import BdtEnsemble, Dataset
from .netlist import lower_bdt, lower_fcnn, verify_netlist
from .quantize import PruningConfig, calibrate_formats, prune_fcnn, quantize_bdt, quantize_fcnn

MARGIN_GUARD = 2.0 ** -8


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def metric_accuracy(preds, labels) -> float:
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if len(preds) == 0:
        raise ValueError("no predictions")
    return float(np.mean(preds == labels))


def metric_auc(scores, labels) -> float:
    """Rank-statistic AUC with midrank tie handling, exact in integers.

    Equals the pairwise count (sum over positive/negative pairs of wins plus
    half-ties) divided by n_pos * n_neg.
    """
    scores = [float(s) for s in scores]
    labels = [int(l) for l in labels]
    if set(labels) - {0, 1}:
        raise ValueError("AUC needs binary 0/1 labels")
    n_pos = sum(labels)
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes present")
    order = sorted(range(len(scores)), key=lambda i: scores[i])
    # doubled midranks keep everything integral
    ranks2 = [0] * len(scores)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        rank2 = (i + 1) + (j + 1)  # 2 * average of 1-based positions
        for k in range(i, j + 1):
            ranks2[order[k]] = rank2
        i = j + 1
    sum_pos_ranks2 = sum(r2 for r2, l in zip(ranks2, labels) if l == 1)
    numerator2 = sum_pos_ranks2 - n_pos * (n_pos + 1)
    return numerator2 / (2 * n_pos * n_neg)


def margin_guarded_agreement(
    float_scores, fixed_preds, guard: float = MARGIN_GUARD
) -> tuple[float, int]:
    """Agreement of fixed predictions with float predictions over samples
    whose float decision margin exceeds the guard.  Returns (fraction,
    number of guarded samples)."""
    agree = 0
    guarded = 0
    for s, fp in zip(float_scores, fixed_preds):
        if s.margin <= guard:
            continue
        guarded += 1
        if s.predicted_class == int(fp):
            agree += 1
    return (agree / guarded if guarded else 1.0), guarded


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------

def make_synthetic(seed: int, n: int, n_features: int, n_classes: int) -> Dataset:
    """Gaussian blobs: class means drawn once from N(0, 2), unit covariance,
    labels uniform; fully reproducible from the seed."""
    rng = np.random.default_rng(seed)
    means = rng.normal(0.0, 2.0, size=(n_classes, n_features))
    labels = rng.integers(0, n_classes, size=n)
    features = means[labels] + rng.normal(0.0, 1.0, size=(n, n_features))
    return Dataset(features, labels.astype(np.int64))


# ---------------------------------------------------------------------------
# Sweep
# ---------------------------------------------------------------------------

SWEEP_COLUMNS = (
    "width",
    "sparsity",
    "reuse",
    "accuracy",
    "auc",
    "mismatch_vs_float",
    "lut",
    "ff",
    "dsp",
    "bram",
    "latency",
    "ii",
)


def _binary_score(scores_obj, n_scores: int) -> float:
    vals = [v.value if hasattr(v, "value") else float(v) for v in scores_obj.scores]
    if n_scores == 1:
        return vals[0]
    return vals[1] - vals[0]


def _auc_applicable(model) -> bool:
    if isinstance(model, BdtEnsemble):
        return model.n_classes in (1, 2)
    return model.n_outputs in (1, 2)


def run_config(
    model,
    data: Dataset,
    width: int,
    sparsity: float,
    reuse: int,
    cost_model: CostModel | None = None,
) -> dict:
    """One grid point: returns the sweep row for this configuration."""
    is_tree = isinstance(model, BdtEnsemble)
    work = model
    masks = None
    if not is_tree and sparsity > 0:
        work, masks = prune_fcnn(model, PruningConfig.uniform(sparsity, 1))
    roles = (
        {"input": width, "threshold": width, "leaf": width}
        if is_tree
        else {"input": width, "weight": width, "bias": width, "activation": width}
    )
    cfg = calibrate_formats(work, data, roles)
    if is_tree:
        qm = quantize_bdt(work, cfg)
        net = lower_bdt(qm)
    else:
        qm = quantize_fcnn(work, cfg, masks)
        net = lower_fcnn(qm, reuse=reuse)
    findings = verify_netlist(net)
    if findings:
        raise RuntimeError(f"lowered netlist failed verification: {findings[0]}")
    report = estimate(net, cost_model)

    float_preds, float_scores = batch_infer("float", work, data)
    fixed_preds, fixed_scores = batch_infer("fixed", qm, data, reuse=reuse)
    row = {
        "width": width,
        "sparsity": sparsity,
        "reuse": reuse,
        "accuracy": metric_accuracy(fixed_preds, data.labels),
        "auc": "",
        "mismatch_vs_float": float(np.mean(fixed_preds != float_preds)),
        "lut": report.lut,
        "ff": report.ff,
        "dsp": report.dsp,
        "bram": report.bram,
        "latency": report.latency_cycles,
        "ii": report.initiation_interval,
    }
    if _auc_applicable(model) and set(np.unique(data.labels)) <= {0, 1}:
        n_scores = len(fixed_scores[0].scores)
        row["auc"] = metric_auc(
            [_binary_score(s, n_scores) for s in fixed_scores], data.labels
        )
    return row


def _run_config_star(args):
    return run_config(*args)


def sweep(
    model,
    data: Dataset,
    width_grid,
    sparsity_grid=(0.0,),
    reuse_grid=(1,),
    cost_model: CostModel | None = None,
    jobs: int = 1,
) -> list[dict]:
    """Grid sweep; one row per (width, sparsity, reuse) in iteration order."""
    widths = list(width_grid)
    sparsities = list(sparsity_grid) or [0.0]
    reuses = list(reuse_grid) or [1]
    if not widths:
        raise ValueError("width grid is empty")
    if isinstance(model, BdtEnsemble):
        sparsities = [0.0]
        reuses = [1]
    points = [
        (model, data, w, s, r, cost_model)
        for w, s, r in itertools.product(widths, sparsities, reuses)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_config_star, points))
    return [run_config(*p) for p in points]


def sweep_to_csv(rows: list[dict]) -> str:
    lines = [",".join(SWEEP_COLUMNS)]
    for row in rows:
        lines.append(",".join(str(row[c]) for c in SWEEP_COLUMNS))
    return "\n".join(lines) + "\n"


def sweep_to_plot_json(rows: list[dict], x: str = "width", y: str = "accuracy") -> str:
    """Plot-data JSON: one series per (sparsity, reuse) pair."""
    series: dict[tuple, list] = {}
    for row in rows:
        key = (row["sparsity"], row["reuse"])
        series.setdefault(key, []).append({"x": row[x], "y": row[y]})
    doc = {
        "x": x,
        "y": y,
        "series": [
            {"label": f"sparsity={s} reuse={r}", "points": pts}
            for (s, r), pts in series.items()
        ],
    }
    return json.dumps(doc, indent=1)


def sweep_to_gnuplot(rows: list[dict]) -> str:
    """Whitespace-separated .dat with a comment header."""
    lines = ["# " + " ".join(SWEEP_COLUMNS)]
    for row in rows:
        lines.append(" ".join(str(row[c]) if row[c] != "" else "nan" for c in SWEEP_COLUMNS))
    return "\n".join(lines) + "\n"
