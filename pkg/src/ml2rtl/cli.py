"""Command-line interface: the whole workflow as a pipeline of subcommands.

Each subcommand is a thin file-I/O wrapper over one module operation, so
chaining commands through files gives exactly the same results as calling
the library in-process.  Exit codes: 0 success, 1 domain error (with a
single machine-readable ``ERROR <code>: message`` line on stderr), 2 usage
error.
"""

from __future__ import annotations

import argparse
import json
import pathlib
import re
import sys

import numpy as np

from . import __version__
from .bench import make_synthetic, sweep, sweep_to_csv, sweep_to_gnuplot, sweep_to_plot_json
from .dataio import load_dataset_csv, save_dataset_csv, save_predictions_csv
from .emulate import batch_infer
from .estimate import CostModel, UncoveredCellKind, estimate, load_cost_model
from .interchange import (
    DepthCapExceeded,
    EmptyModel,
    MalformedJson,
    StructuralViolation,
    UnknownSchemaVersion,
    parse_model,
    write_model,
)
from .model_ir import BdtEnsemble, FcnnModel, model_stats
from .netlist import (
    EmptyEnsemble,
    NetlistInterpreter,
    lower_bdt,
    lower_fcnn,
    netlist_from_json,
    netlist_to_json,
)
from .netlist import EmptyModel as NetlistEmptyModel
from .quantize import (
    PruningConfig,
    WidthTooSmall,
    calibrate_formats,
    config_from_json,
    config_to_json,
    prune_fcnn,
    quantize_bdt,
    quantize_fcnn,
    quantized_from_json,
    quantized_to_json,
)
from .verilog import UnsupportedFeature, UnverifiedNetlist, emit_testbench, emit_verilog

SCHEMA_VERSIONS = "interchange 1.0, quantized-model 1.0"

_ERROR_CODES = [
    (DepthCapExceeded, "depth-cap-exceeded"),
    (StructuralViolation, "structural-violation"),
    (MalformedJson, "malformed-json"),
    (UnknownSchemaVersion, "unknown-schema-version"),
    (EmptyModel, "empty-model"),
    (WidthTooSmall, "width-too-small"),
    (EmptyEnsemble, "empty-model"),
    (NetlistEmptyModel, "empty-model"),
    (UnverifiedNetlist, "unverified-netlist"),
    (UnsupportedFeature, "unsupported-feature"),
    (UncoveredCellKind, "uncovered-cell-kind"),
    (FileNotFoundError, "file-not-found"),
    (json.JSONDecodeError, "malformed-json"),
    (ValueError, "invalid-value"),
    (RuntimeError, "internal-error"),
]


def _fail(exc: Exception) -> int:
    for klass, code in _ERROR_CODES:
        if isinstance(exc, klass):
            print(f"ERROR {code}: {exc}", file=sys.stderr)
            return 1
    print(f"ERROR internal-error: {exc}", file=sys.stderr)
    return 1


def _read_model(path: str):
    return parse_model(pathlib.Path(path).read_bytes())


def _read_quantized(path: str):
    with open(path, "r", encoding="utf-8") as f:
        return quantized_from_json(json.load(f))


def _parse_widths(spec: str, kind: str) -> dict[str, int]:
    roles = (
        ["input", "threshold", "leaf", "accum"]
        if kind == "bdt"
        else ["input", "weight", "bias", "accum", "activation"]
    )
    spec = spec.strip()
    if re.fullmatch(r"\d+", spec):
        w = int(spec)
        return {r: w for r in roles if r != "accum"}  # accumulator auto-widens
    out: dict[str, int] = {}
    for part in spec.split(","):
        if "=" not in part:
            raise ValueError(f"bad width assignment {part!r} (want role=bits)")
        role, _, bits = part.partition("=")
        role = role.strip()
        if role not in roles:
            raise ValueError(f"unknown role {role!r} for a {kind} model (roles: {roles})")
        out[role] = int(bits)
    return out


def _parse_grid(spec: str, cast=float) -> list:
    spec = spec.strip()
    m = re.fullmatch(r"(-?\d+)\.\.(-?\d+)", spec)
    if m:
        lo, hi = int(m.group(1)), int(m.group(2))
        return [cast(v) for v in range(lo, hi + 1)]
    return [cast(v) for v in spec.split(",")]


def _model_name(path: str, override: str | None) -> str:
    if override:
        name = override
    else:
        name = pathlib.Path(path).stem
    name = re.sub(r"[^A-Za-z0-9_]", "_", name)
    if not re.match(r"[A-Za-z_]", name):
        name = "m_" + name
    return name


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_ingest(args) -> int:
    model = _read_model(args.model)
    if args.out:
        pathlib.Path(args.out).write_bytes(write_model(model))
    if args.validate_only:
        return 0
    stats = model_stats(model)
    stats["model_kind"] = "bdt" if isinstance(model, BdtEnsemble) else "fcnn"
    print(json.dumps(stats, sort_keys=True))
    return 0


def cmd_quantize(args) -> int:
    model = _read_model(args.model)
    kind = "bdt" if isinstance(model, BdtEnsemble) else "fcnn"
    pruning = None
    if args.config:
        with open(args.config, "r", encoding="utf-8") as f:
            cfg, pruning = config_from_json(json.load(f))
    else:
        data = load_dataset_csv(args.calibrate)
        widths = _parse_widths(args.widths, kind)
        cfg = calibrate_formats(model, data, widths)
    masks = None
    if isinstance(model, FcnnModel):
        if args.sparsity is not None:
            pruning = PruningConfig(tuple(float(s) for s in args.sparsity.split(",")))
        if pruning is not None:
            model, masks = prune_fcnn(model, pruning)
        qm = quantize_fcnn(model, cfg, masks)
    else:
        qm = quantize_bdt(model, cfg)
    doc = quantized_to_json(qm)
    out = args.out or (pathlib.Path(args.model).stem + ".quantized.json")
    pathlib.Path(out).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")
    print(json.dumps({"out": str(out), "config": config_to_json(qm.config)}, sort_keys=True))
    return 0


def cmd_prune(args) -> int:
    model = _read_model(args.model)
    if not isinstance(model, FcnnModel):
        raise ValueError("prune applies to dense networks only")
    pruning = PruningConfig(tuple(float(s) for s in args.sparsity.split(",")))
    pruned, masks = prune_fcnn(model, pruning)
    out = args.out or (pathlib.Path(args.model).stem + ".pruned.json")
    pathlib.Path(out).write_bytes(write_model(pruned))
    if args.mask_out:
        doc = [[list(map(bool, row)) for row in m] for m in masks]
        pathlib.Path(args.mask_out).write_text(json.dumps(doc) + "\n")
    kept = sum(int(np.count_nonzero(l.weights)) for l in pruned.layers)
    print(json.dumps({"out": str(out), "nonzero_weights": kept}, sort_keys=True))
    return 0


def cmd_emulate(args) -> int:
    data = load_dataset_csv(args.data)
    if args.engine == "float":
        model = _read_model(args.model)
        preds, scores = batch_infer("float", model, data)
    else:
        qm = _read_quantized(args.model)
        preds, scores = batch_infer("fixed", qm, data, order=args.order, reuse=args.reuse)
    if args.out:
        save_predictions_csv(args.out, preds, scores)
    correct = float(np.mean(preds == data.labels))
    print(json.dumps({"rows": len(preds), "accuracy": correct}, sort_keys=True))
    return 0


def cmd_compile(args) -> int:
    qm = _read_quantized(args.model)
    name = _model_name(args.model, args.name)
    from .quantize import QuantizedBdt

    if isinstance(qm, QuantizedBdt):
        net = lower_bdt(qm, name=name)
    else:
        net = lower_fcnn(qm, reuse=args.reuse, name=name)
    out_dir = pathlib.Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    verilog = emit_verilog(net)
    interp = NetlistInterpreter(net)
    rng = np.random.default_rng(args.seed)
    vectors = []
    for _ in range(args.tb_vectors):
        ins = {}
        for w in net.inputs:
            fmt = net.wires[w].fmt
            ins[w] = int(rng.integers(fmt.min_raw, fmt.max_raw + 1)) if w != "in_valid" else 1
        vectors.append((ins, interp.run(ins)))
    tb = emit_testbench(net, vectors)
    cm = load_cost_model(args.cost_model) if args.cost_model else CostModel()
    report = estimate(net, cm)
    (out_dir / f"{name}.v").write_text(verilog)
    (out_dir / f"{name}_tb.v").write_text(tb)
    (out_dir / f"{name}.netlist.json").write_text(netlist_to_json(net) + "\n")
    (out_dir / "report.json").write_text(json.dumps(report.to_json(), indent=1) + "\n")
    print(
        json.dumps(
            {
                "out_dir": str(out_dir),
                "files": [f"{name}.v", f"{name}_tb.v", f"{name}.netlist.json", "report.json"],
                "latency_cycles": net.latency_cycles,
                "initiation_interval": net.initiation_interval,
            },
            sort_keys=True,
        )
    )
    return 0


def cmd_report(args) -> int:
    net = netlist_from_json(pathlib.Path(args.netlist).read_text())
    cm = load_cost_model(args.cost_model) if args.cost_model else CostModel()
    report = estimate(net, cm)
    text = report.to_csv() if args.format == "csv" else json.dumps(report.to_json(), indent=1) + "\n"
    if args.out:
        pathlib.Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_sweep(args) -> int:
    model = _read_model(args.model)
    if args.data:
        data = load_dataset_csv(args.data)
    else:
        n_classes = model.n_classes if isinstance(model, BdtEnsemble) else max(model.n_outputs, 2)
        data = make_synthetic(args.seed, args.synthetic_rows, model_features(model), max(n_classes, 2))
    widths = _parse_grid(args.widths, int)
    sparsity = _parse_grid(args.sparsity, float) if args.sparsity else [0.0]
    reuse = _parse_grid(args.reuse, int) if args.reuse else [1]
    cm = load_cost_model(args.cost_model) if args.cost_model else None
    rows = sweep(model, data, widths, sparsity, reuse, cost_model=cm, jobs=args.jobs)
    pathlib.Path(args.out).write_text(sweep_to_csv(rows))
    if args.plot_json:
        pathlib.Path(args.plot_json).write_text(sweep_to_plot_json(rows) + "\n")
    if args.dat:
        pathlib.Path(args.dat).write_text(sweep_to_gnuplot(rows))
    print(json.dumps({"rows": len(rows), "out": args.out}, sort_keys=True))
    return 0


def model_features(model) -> int:
    return model.n_features


def cmd_synth(args) -> int:
    data = make_synthetic(args.seed, args.rows, args.features, args.classes)
    save_dataset_csv(data, args.out)
    print(json.dumps({"rows": args.rows, "out": args.out}, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="ml2rtl",
        description="Compile tree ensembles and dense networks to fixed-point Verilog.",
    )
    p.add_argument(
        "--version",
        action="version",
        version=f"ml2rtl {__version__} (schemas: {SCHEMA_VERSIONS})",
    )
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="parse and validate an interchange model")
    s.add_argument("model")
    s.add_argument("--validate-only", action="store_true")
    s.add_argument("--out", help="write the normalized model here")
    s.set_defaults(fn=cmd_ingest)

    s = sub.add_parser("quantize", help="calibrate formats and quantize parameters")
    s.add_argument("model")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--config", help="quantization config JSON")
    g.add_argument("--calibrate", help="calibration dataset CSV")
    s.add_argument("--widths", default="12", help="total bits: N or role=N[,role=N...]")
    s.add_argument("--sparsity", help="prune before quantizing: s or s1,s2,...")
    s.add_argument("--out")
    s.set_defaults(fn=cmd_quantize)

    s = sub.add_parser("prune", help="magnitude-prune dense layers")
    s.add_argument("model")
    s.add_argument("--sparsity", required=True, help="fraction(s) to zero: s or s1,s2,...")
    s.add_argument("--out")
    s.add_argument("--mask-out")
    s.set_defaults(fn=cmd_prune)

    s = sub.add_parser("emulate", help="run a model over a dataset")
    s.add_argument("model", help="interchange model (float) or quantized model (fixed)")
    s.add_argument("--data", required=True)
    s.add_argument("--engine", choices=["float", "fixed"], default="fixed")
    s.add_argument("--order", choices=["tree", "sequential"], default="tree")
    s.add_argument("--reuse", type=int, default=1)
    s.add_argument("--out", help="write per-row predictions CSV")
    s.set_defaults(fn=cmd_emulate)

    s = sub.add_parser("compile", help="lower a quantized model and emit Verilog")
    s.add_argument("model", help="quantized model JSON")
    s.add_argument("--reuse", type=int, default=1)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--name", help="module name (default: model file stem)")
    s.add_argument("--tb-vectors", type=int, default=8)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--cost-model", help="cost model JSON")
    s.set_defaults(fn=cmd_compile)

    s = sub.add_parser("report", help="estimate resources for a netlist dump")
    s.add_argument("netlist")
    s.add_argument("--cost-model")
    s.add_argument("--format", choices=["json", "csv"], default="json")
    s.add_argument("--out")
    s.set_defaults(fn=cmd_report)

    s = sub.add_parser("sweep", help="accuracy-vs-resource grid sweep")
    s.add_argument("--model", required=True)
    s.add_argument("--data", help="dataset CSV (default: seeded synthetic)")
    s.add_argument("--widths", required=True, help="grid: lo..hi or w1,w2,...")
    s.add_argument("--sparsity", help="grid: s1,s2,...")
    s.add_argument("--reuse", help="grid: r1,r2,...")
    s.add_argument("--out", required=True)
    s.add_argument("--plot-json", help="write plot-data JSON")
    s.add_argument("--dat", help="write gnuplot-compatible .dat")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--synthetic-rows", type=int, default=2000)
    s.add_argument("--cost-model")
    s.set_defaults(fn=cmd_sweep)

    s = sub.add_parser("synth-data", help="generate a synthetic dataset CSV")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--rows", type=int, default=2000)
    s.add_argument("--features", type=int, default=4)
    s.add_argument("--classes", type=int, default=2)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_synth)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except Exception as exc:  # noqa: BLE001 - single reporting point
        return _fail(exc)


if __name__ == "__main__":
    sys.exit(main())
