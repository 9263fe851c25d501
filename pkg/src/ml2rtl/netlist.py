"""Pipelined dataflow netlist: lowering, structural verification, and an
in-repo interpreter that serves as the RTL oracle.

The netlist is a DAG of typed wires and cells.  Combinational cells evaluate
within a pipeline stage; Register cells move a value across one stage
boundary; Mul cells register internally and take ``phases`` cycles (a
multi-lane Mul is a time-shared multiply-accumulate group, the structural
form of the reuse factor).  Constants are stage-free.  The structural
verifier recomputes every stage from the graph, so balance and the declared
latency are checked independently of how the netlist was built.

Lowered architecture:

* Trees: stage 0 evaluates every node comparator; stage 1 AND-reduces each
  leaf's branch conditions into a one-hot path predicate; stage 2 gates leaf
  constants and OR-reduces them into a per-tree score; the remaining stages
  are a balanced adder tree over per-tree scores plus the base score.
  latency = 3 + ceil(log2(T+1)) with T the largest per-class tree count.
* Dense layers: one multiplier (or MAC group) per nonzero weight group, a
  balanced adder tree per neuron with the bias as the final operand, one
  activation/cast cycle.  Per-layer latency = R + ceil(log2(k+1)) + 1 with k
  the largest logical nonzero fan-in; shallower paths get alignment
  registers.  The pipeline's initiation interval is the largest effective R.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .emulate import (
    _apply_activation_fixed,
    effective_reuse,
    mac_groups,
    sigmoid_lut_apply,
    sigmoid_lut_table,
)
from .fixedpoint import (
    BIT,
    FixedPointFormat,
    FixedPointValue,
    _apply_overflow,
    _round_shift,
    fxp_add,
    fxp_cast,
    fxp_mul,
    product_format,
)
from .model_ir import Activation
from .quantize import (
    QInternal,
    QLeaf,
    QuantizationConfig,
    QuantizedBdt,
    QuantizedFcnn,
    SigmoidLutSpec,
)

CELL_KINDS = (
    "Comparator",
    "Mul",
    "Add",
    "Mux",
    "LutRom",
    "Register",
    "Const",
    "AndReduce",
    "OrReduce",
    "ReluClamp",
    "SatCast",
)


class EmptyEnsemble(Exception):
    pass


class EmptyModel(Exception):
    pass


@dataclass(frozen=True)
class Wire:
    name: str
    fmt: FixedPointFormat


@dataclass
class Cell:
    kind: str
    inputs: tuple[str, ...]
    output: str
    stage: int | None  # stage at which the output is valid; None = constant
    attrs: dict = field(default_factory=dict)


@dataclass
class NetlistIr:
    name: str
    inputs: list[str]
    outputs: list[str]
    wires: dict[str, Wire]
    cells: list[Cell]
    latency_cycles: int
    initiation_interval: int


# ---------------------------------------------------------------------------
# Construction helper
# ---------------------------------------------------------------------------

class _Builder:
    def __init__(self, name: str):
        self.name = name
        self.inputs: list[str] = []
        self.outputs: list[str] = []
        self.wires: dict[str, Wire] = {}
        self.cells: list[Cell] = []
        self._const_cache: dict[tuple[int, FixedPointFormat], str] = {}
        self._stages: dict[str, int | None] = {}
        self._raws: dict[str, int] = {}

    def wire(self, name: str, fmt: FixedPointFormat) -> str:
        if name in self.wires:
            raise ValueError(f"duplicate wire {name}")
        self.wires[name] = Wire(name, fmt)
        return name

    def input_port(self, name: str, fmt: FixedPointFormat) -> str:
        self.inputs.append(self.wire(name, fmt))
        self._stages[name] = 0
        return name

    def cell(self, kind, inputs, out_name, out_fmt, stage, attrs=None) -> str:
        out = self.wire(out_name, out_fmt)
        self.cells.append(Cell(kind, tuple(inputs), out, stage, attrs or {}))
        self._stages[out] = stage
        return out

    def const(self, raw: int, fmt: FixedPointFormat) -> str:
        key = (raw, fmt)
        if key not in self._const_cache:
            name = f"const{len(self._const_cache)}"
            self.cell("Const", (), name, fmt, None, {"raw": raw})
            self._const_cache[key] = name
            self._raws[name] = raw
        return self._const_cache[key]

    def register(self, src: str, name: str, stage_in: int) -> str:
        return self.cell("Register", (src,), name, self.wires[src].fmt, stage_in + 1)

    def stage_of(self, wire: str) -> int | None:
        """Construction-time stage bookkeeping (verified independently later)."""
        return self._stages[wire]

    def const_raw(self, wire: str) -> int:
        return self._raws[wire]

    def expose(self, wire: str, port_name: str) -> None:
        """Make a wire an output port under a friendly name.

        Non-constant wires are renamed in place.  Constant wires get a fresh
        Const cell so two outputs never share one wire (ports are unique).
        """
        if self.stage_of(wire) is None:
            self.cell("Const", (), port_name, self.wires[wire].fmt, None,
                      {"raw": self.const_raw(wire)})
            self.outputs.append(port_name)
            return
        if wire in self.inputs:
            raise ValueError(f"cannot expose input {wire} as an output")
        self.wires[port_name] = Wire(port_name, self.wires[wire].fmt)
        del self.wires[wire]
        self._stages[port_name] = self._stages.pop(wire)
        for c in self.cells:
            if c.output == wire:
                c.output = port_name
            if wire in c.inputs:
                c.inputs = tuple(port_name if w == wire else w for w in c.inputs)
        self.outputs.append(port_name)

    def finish(self, latency: int, ii: int) -> NetlistIr:
        return NetlistIr(self.name, self.inputs, self.outputs, self.wires, self.cells, latency, ii)


def _adder_tree(
    b: _Builder,
    operands: list[str],
    accum_fmt: FixedPointFormat,
    target_depth: int,
    prefix: str,
    start_stage: int,
) -> str:
    """Balanced adjacent-pair reduction; every level adds one register stage.

    Constant operands are folded at build time with the same fixed-point
    semantics the Add cells implement, so emitter and emulator agree.  The
    result is padded with registers up to ``target_depth`` levels.
    """
    level = 0
    while len(operands) > 1:
        nxt = []
        for i in range(0, len(operands) - 1, 2):
            a, bb = operands[i], operands[i + 1]
            sa, sb = b.stage_of(a), b.stage_of(bb)
            if sa is None and sb is None:
                va = FixedPointValue(b.const_raw(a), b.wires[a].fmt)
                vb = FixedPointValue(b.const_raw(bb), b.wires[bb].fmt)
                nxt.append(b.const(fxp_add(va, vb, accum_fmt).raw, accum_fmt))
                continue
            stage = sa if sa is not None else sb
            s = b.cell("Add", (a, bb), f"{prefix}_a{level}_{i // 2}", accum_fmt, stage)
            nxt.append(b.register(s, f"{prefix}_a{level}_{i // 2}_q", stage))
        if len(operands) % 2:
            tail = operands[-1]
            st = b.stage_of(tail)
            if st is None:
                nxt.append(tail)  # constants need no alignment
            else:
                nxt.append(b.register(tail, f"{prefix}_t{level}_q", st))
        operands = nxt
        level += 1
    out = operands[0]
    st = b.stage_of(out)
    if st is None:
        if b.wires[out].fmt != accum_fmt:
            v = FixedPointValue(b.const_raw(out), b.wires[out].fmt)
            out = b.const(fxp_cast(v, accum_fmt).raw, accum_fmt)
        return out
    want = start_stage + target_depth
    pad = 0
    while st < want:
        out = b.register(out, f"{prefix}_pad{pad}_q", st)
        st += 1
        pad += 1
    return out


def _valid_chain(b: _Builder, latency: int) -> str:
    v = b.input_port("in_valid", BIT)
    for i in range(latency):
        name = "out_valid" if i == latency - 1 else f"valid_s{i + 1}_q"
        v = b.register(v, name, i)
    return v


def tree_depth_for(count: int) -> int:
    """Adder-tree depth over count operands (count >= 1)."""
    return max(0, math.ceil(math.log2(count))) if count > 1 else 0


# ---------------------------------------------------------------------------
# BDT lowering
# ---------------------------------------------------------------------------

def lower_bdt(qm: QuantizedBdt, name: str = "bdt") -> NetlistIr:
    """Fully parallel tree evaluation; one comparator per split node."""
    if len(qm.trees) == 0:
        raise EmptyEnsemble("cannot lower an ensemble with no trees")
    fmts = qm.config.bdt
    b = _Builder(name)
    xs = [b.input_port(f"x{i}", qm.config.input_fmt) for i in range(qm.n_features)]

    t_max = max(len(qm.trees_for_class(c)) for c in range(qm.n_classes))
    depth = tree_depth_for(t_max + 1)
    latency = 3 + depth

    valid_out = _valid_chain(b, latency)

    tree_scores: dict[int, list[str]] = {c: [] for c in range(qm.n_classes)}
    for ti, (class_index, tree) in enumerate(qm.trees):
        if isinstance(tree.nodes[0], QLeaf):
            tree_scores[class_index].append(b.const(tree.nodes[0].raw, fmts.leaf_fmt))
            continue
        # stage 0: comparators, registered into stage 1
        cmp_q: dict[int, str] = {}
        for ni, node in enumerate(tree.nodes):
            if isinstance(node, QInternal):
                thr = b.const(node.threshold_raw, fmts.threshold_fmt)
                c = b.cell("Comparator", (xs[node.feature], thr), f"t{ti}_cmp{ni}", BIT, 0)
                cmp_q[ni] = b.register(c, f"t{ti}_cmp{ni}_q", 0)
        # stage 1: per-leaf path predicates, registered into stage 2
        # stage 2: gate leaf constants and OR-reduce per tree, registered into 3
        gated = []
        stack: list[tuple[int, list[tuple[int, bool]]]] = [(0, [])]
        while stack:
            idx, conds = stack.pop()
            node = tree.nodes[idx]
            if isinstance(node, QInternal):
                stack.append((node.right, conds + [(idx, True)]))
                stack.append((node.left, conds + [(idx, False)]))
                continue
            pred = b.cell(
                "AndReduce",
                tuple(cmp_q[ci] for ci, _ in conds),
                f"t{ti}_leaf{idx}_pred",
                BIT,
                1,
                {"invert": tuple(inv for _, inv in conds)},
            )
            pred_q = b.register(pred, f"t{ti}_leaf{idx}_pred_q", 1)
            leaf_c = b.const(node.raw, fmts.leaf_fmt)
            zero_c = b.const(0, fmts.leaf_fmt)
            gated.append(
                b.cell("Mux", (pred_q, leaf_c, zero_c), f"t{ti}_leaf{idx}_sel", fmts.leaf_fmt, 2)
            )
        score = b.cell("OrReduce", tuple(gated), f"t{ti}_score", fmts.leaf_fmt, 2)
        tree_scores[class_index].append(b.register(score, f"t{ti}_score_q", 2))

    for c in range(qm.n_classes):
        operands = tree_scores[c] + [b.const(qm.base_raws[c], fmts.leaf_fmt)]
        out = _adder_tree(b, operands, fmts.accum_fmt, depth, f"c{c}", 3)
        b.expose(out, f"score{c}")
    b.outputs.append(valid_out)
    return b.finish(latency, 1)


# ---------------------------------------------------------------------------
# Dense network lowering
# ---------------------------------------------------------------------------

def lower_fcnn(qm: QuantizedFcnn, reuse: int = 1, name: str = "fcnn") -> NetlistIr:
    """One multiplier per nonzero-weight group; pruned weights emit nothing."""
    if len(qm.layers) == 0:
        raise EmptyModel("cannot lower a network with no layers")
    if reuse < 1:
        raise ValueError("reuse factor must be >= 1")
    b = _Builder(name)
    values = [b.input_port(f"x{i}", qm.config.input_fmt) for i in range(qm.n_features)]

    # precompute per-layer shape numbers for the latency/II metadata
    layer_plans = []
    latency = 0
    ii = 1
    for layer in qm.layers:
        nonzero = [
            [j for j in range(layer.weight_raws.shape[1]) if layer.weight_raws[i, j] != 0]
            for i in range(layer.weight_raws.shape[0])
        ]
        max_k = max((len(nz) for nz in nonzero), default=0)
        r_eff = effective_reuse(max_k, reuse)
        depth = tree_depth_for(max_k + 1)
        layer_plans.append((nonzero, r_eff, depth))
        latency += r_eff + depth + 1
        ii = max(ii, r_eff)

    valid_out = _valid_chain(b, latency)

    stage = 0
    in_fmt = qm.config.input_fmt
    for k, (layer, lf) in enumerate(zip(qm.layers, qm.config.fcnn)):
        nonzero, r_eff, depth = layer_plans[k]
        prod_fmt = product_format(lf.weight_fmt, in_fmt)
        mul_out_fmt = prod_fmt if r_eff == 1 else lf.accum_fmt
        act_stage = stage + r_eff + depth
        out_values = []
        for i, nz in enumerate(nonzero):
            operands = []
            for g, grp in enumerate(mac_groups(len(nz), r_eff)):
                lanes = [nz[j] for j in grp]
                if all(b.stage_of(values[j]) is None for j in lanes):
                    # all operands constant (e.g. a fully pruned previous
                    # layer): fold the group with the same cast semantics
                    prods = [
                        fxp_mul(
                            FixedPointValue(b.const_raw(values[j]), in_fmt),
                            FixedPointValue(int(layer.weight_raws[i, j]), lf.weight_fmt),
                            prod_fmt,
                        )
                        for j in lanes
                    ]
                    if r_eff == 1:
                        operands.append(b.const(prods[0].raw, prod_fmt))
                    else:
                        acc = fxp_cast(prods[0], lf.accum_fmt)
                        for p in prods[1:]:
                            acc = fxp_add(acc, p, lf.accum_fmt)
                        operands.append(b.const(acc.raw, lf.accum_fmt))
                    continue
                ins = [values[j] for j in lanes] + [
                    b.const(int(layer.weight_raws[i, j]), lf.weight_fmt) for j in lanes
                ]
                operands.append(
                    b.cell(
                        "Mul",
                        tuple(ins),
                        f"l{k}_n{i}_m{g}",
                        mul_out_fmt,
                        stage + r_eff,
                        {"lanes": len(lanes), "phases": r_eff},
                    )
                )
            operands.append(b.const(int(layer.bias_raws[i]), lf.bias_fmt))
            acc = _adder_tree(b, operands, lf.accum_fmt, depth, f"l{k}_n{i}", stage + r_eff)
            out_values.append(
                _lower_activation(b, acc, layer.activation, lf, qm.config, f"l{k}_n{i}", act_stage)
            )
        stage += r_eff + depth + 1
        in_fmt = lf.activation_fmt
        values = out_values

    for i, v in enumerate(values):
        b.expose(v, f"y{i}")
    b.outputs.append(valid_out)
    return b.finish(latency, ii)


def _lower_activation(
    b: _Builder,
    acc: str,
    activation: Activation,
    lf,
    cfg: QuantizationConfig,
    prefix: str,
    stage: int,
) -> str:
    """Activation + single cast into the activation format, one cycle."""
    if b.stage_of(acc) is None:
        # constant path: fold at build time with the emulator's own semantics
        v = FixedPointValue(b.const_raw(acc), b.wires[acc].fmt)
        return b.const(_apply_activation_fixed(v, activation, lf, cfg).raw, lf.activation_fmt)
    if activation is Activation.RELU:
        r = b.cell("ReluClamp", (acc,), f"{prefix}_relu", b.wires[acc].fmt, stage)
        s = b.cell("SatCast", (r,), f"{prefix}_act", lf.activation_fmt, stage)
    elif activation is Activation.SIGMOID:
        spec = cfg.sigmoid_lut
        table = sigmoid_lut_table(spec, lf.activation_fmt)
        s = b.cell(
            "LutRom",
            (acc,),
            f"{prefix}_act",
            lf.activation_fmt,
            stage,
            {"table": table, "lo": spec.lo, "hi": spec.hi, "entries": spec.entries},
        )
    else:  # linear, or softmax handled as argmax downstream
        s = b.cell("SatCast", (acc,), f"{prefix}_act", lf.activation_fmt, stage)
    return b.register(s, f"{prefix}_q", stage)


# ---------------------------------------------------------------------------
# Structural verification
# ---------------------------------------------------------------------------

def verify_netlist(n: NetlistIr) -> list[str]:
    """Independent structural checks; empty list means the netlist is sound."""
    findings: list[str] = []
    drivers: dict[str, str] = {}
    for w in n.inputs:
        drivers[w] = "input"
    for c in n.cells:
        if c.kind not in CELL_KINDS:
            findings.append(f"unknown cell kind {c.kind}")
        if c.output in drivers:
            findings.append(f"wire {c.output} has multiple drivers")
        drivers[c.output] = c.kind
        for w in c.inputs:
            if w not in n.wires:
                findings.append(f"cell {c.kind} reads undeclared wire {w}")
    for w in n.wires:
        if w not in drivers:
            findings.append(f"wire {w} has no driver")
    for w in n.outputs:
        if w not in n.wires:
            findings.append(f"output {w} is not a wire")
    if n.initiation_interval < 1:
        findings.append("initiation interval must be >= 1")
    if findings:
        return findings

    # topological order over cells
    by_output = {c.output: c for c in n.cells}
    order: list[Cell] = []
    seen: dict[str, int] = {w: 2 for w in n.inputs}  # 2 = resolved

    def resolve(wire: str, chain: set[str]) -> bool:
        if seen.get(wire) == 2:
            return True
        if wire in chain:
            findings.append(f"combinational cycle through {wire}")
            return False
        cell = by_output.get(wire)
        if cell is None:
            return True
        chain.add(wire)
        for i in cell.inputs:
            if not resolve(i, chain):
                return False
        chain.discard(wire)
        seen[wire] = 2
        order.append(cell)
        return True

    import sys

    old_limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old_limit, 10 * len(n.cells) + 1000))
    try:
        for c in n.cells:
            if not resolve(c.output, set()):
                return findings
    finally:
        sys.setrecursionlimit(old_limit)

    # stage reconstruction: combinational cells inherit a single input stage,
    # Register adds one, Mul adds its phase count, constants are free
    stage: dict[str, int | None] = {w: 0 for w in n.inputs}
    for c in order:
        in_stages = {stage[w] for w in c.inputs if stage[w] is not None}
        if len(in_stages) > 1:
            findings.append(
                f"cell driving {c.output} mixes input stages {sorted(in_stages)}"
            )
            continue
        base = in_stages.pop() if in_stages else None
        if c.kind == "Const":
            out_stage: int | None = None
        elif base is None:
            out_stage = None  # pure-constant logic stays stage-free
        elif c.kind == "Register":
            out_stage = base + 1
        elif c.kind == "Mul":
            out_stage = base + int(c.attrs.get("phases", 1))
        else:
            out_stage = base
        if out_stage != c.stage:
            findings.append(
                f"cell driving {c.output} declares stage {c.stage}, graph says {out_stage}"
            )
        stage[c.output] = out_stage

    for w in n.outputs:
        if stage.get(w) not in (None, n.latency_cycles):
            findings.append(
                f"output {w} valid at stage {stage.get(w)}, latency is {n.latency_cycles}"
            )

    findings.extend(_check_cell_formats(n))
    return findings


def _check_cell_formats(n: NetlistIr) -> list[str]:
    findings = []
    for c in n.cells:
        fmt_of = lambda w: n.wires[w].fmt
        out = fmt_of(c.output)
        if c.kind == "Comparator":
            if out != BIT or len(c.inputs) != 2:
                findings.append(f"comparator {c.output} malformed")
        elif c.kind == "AndReduce":
            if out != BIT or any(fmt_of(w) != BIT for w in c.inputs):
                findings.append(f"and-reduce {c.output} needs 1-bit operands")
            if len(c.attrs.get("invert", ())) != len(c.inputs):
                findings.append(f"and-reduce {c.output} invert mask arity mismatch")
        elif c.kind == "OrReduce":
            if any(fmt_of(w) != out for w in c.inputs) or not c.inputs:
                findings.append(f"or-reduce {c.output} operand formats differ")
        elif c.kind == "Mux":
            if len(c.inputs) != 3 or fmt_of(c.inputs[0]) != BIT:
                findings.append(f"mux {c.output} malformed")
            elif fmt_of(c.inputs[1]) != out or fmt_of(c.inputs[2]) != out:
                findings.append(f"mux {c.output} operand widths differ")
        elif c.kind == "Add":
            if len(c.inputs) != 2:
                findings.append(f"add {c.output} needs two operands")
            elif out.fractional_bits < max(fmt_of(w).fractional_bits for w in c.inputs):
                findings.append(f"add {c.output} would round (not a cast point)")
        elif c.kind == "Mul":
            lanes = int(c.attrs.get("lanes", 1))
            if len(c.inputs) != 2 * lanes:
                findings.append(f"mul {c.output} lane/input mismatch")
                continue
            xf = fmt_of(c.inputs[0])
            wf = fmt_of(c.inputs[lanes])
            pf = product_format(wf, xf)
            if lanes == 1 and int(c.attrs.get("phases", 1)) == 1:
                if out != pf:
                    findings.append(f"mul {c.output} output is not the exact product format")
            elif out.fractional_bits < pf.fractional_bits:
                findings.append(f"mac {c.output} accumulator would round products")
        elif c.kind == "Register":
            if len(c.inputs) != 1 or fmt_of(c.inputs[0]) != out:
                findings.append(f"register {c.output} changes format")
        elif c.kind == "ReluClamp":
            if len(c.inputs) != 1 or fmt_of(c.inputs[0]) != out:
                findings.append(f"relu {c.output} changes format")
        elif c.kind == "SatCast":
            if len(c.inputs) != 1:
                findings.append(f"cast {c.output} needs one operand")
        elif c.kind == "LutRom":
            table = c.attrs.get("table", [])
            if len(table) != int(c.attrs.get("entries", -1)):
                findings.append(f"lut {c.output} table length mismatch")
            elif not all(out.holds_raw(r) for r in table):
                findings.append(f"lut {c.output} table entry outside output format")
        elif c.kind == "Const":
            if not out.holds_raw(int(c.attrs.get("raw", 0))):
                findings.append(f"const {c.output} raw outside format")
    return findings


# ---------------------------------------------------------------------------
# Interpretation
# ---------------------------------------------------------------------------

class NetlistInterpreter:
    """Compiled evaluator; reusable across many input vectors."""

    def __init__(self, n: NetlistIr):
        findings = verify_netlist(n)
        if findings:
            raise ValueError(f"netlist failed verification: {findings[0]}")
        self.netlist = n
        idx = {w: i for i, w in enumerate(n.wires)}
        self._idx = idx
        self._init = [0] * len(idx)
        ops = []
        by_output = {c.output: c for c in n.cells}
        done = set(n.inputs)

        def emit(wire):
            if wire in done:
                return
            cell = by_output[wire]
            for w in cell.inputs:
                emit(w)
            done.add(wire)
            if cell.kind == "Const":
                self._init[idx[wire]] = cell.attrs["raw"]
            else:
                ops.append(self._compile(cell, idx))

        import sys

        old = sys.getrecursionlimit()
        sys.setrecursionlimit(max(old, 10 * len(n.cells) + 1000))
        try:
            for c in sorted(n.cells, key=lambda c: (c.stage if c.stage is not None else -1)):
                emit(c.output)
        finally:
            sys.setrecursionlimit(old)
        self._ops = ops

    def _compile(self, cell: Cell, idx: dict[str, int]):
        wires = self.netlist.wires
        o = idx[cell.output]
        out_fmt = wires[cell.output].fmt
        ins = [idx[w] for w in cell.inputs]
        in_fmts = [wires[w].fmt for w in cell.inputs]

        if cell.kind == "Comparator":
            a, b = ins
            fa, fb = in_fmts[0].fractional_bits, in_fmts[1].fractional_bits
            s = max(fa, fb)
            sa, sb = s - fa, s - fb

            def run(v, a=a, b=b, sa=sa, sb=sb, o=o):
                v[o] = 1 if (v[a] << sa) < (v[b] << sb) else 0

        elif cell.kind == "AndReduce":
            invert = cell.attrs["invert"]

            def run(v, ins=tuple(ins), invert=invert, o=o):
                for i, inv in zip(ins, invert):
                    if (v[i] == 1) == inv:
                        v[o] = 0
                        return
                v[o] = 1

        elif cell.kind == "OrReduce":
            w = out_fmt.total_bits
            mask = (1 << w) - 1
            sign = 1 << (w - 1) if out_fmt.signed else 0

            def run(v, ins=tuple(ins), mask=mask, sign=sign, o=o):
                acc = 0
                for i in ins:
                    acc |= v[i] & mask
                if sign and acc & sign:
                    acc -= mask + 1
                v[o] = acc

        elif cell.kind == "Mux":
            s, a, b = ins

            def run(v, s=s, a=a, b=b, o=o):
                v[o] = v[a] if v[s] else v[b]

        elif cell.kind == "Add":
            a, b = ins
            fo = out_fmt.fractional_bits
            sa = fo - in_fmts[0].fractional_bits
            sb = fo - in_fmts[1].fractional_bits

            def run(v, a=a, b=b, sa=sa, sb=sb, fmt=out_fmt, o=o):
                v[o] = _apply_overflow((v[a] << sa) + (v[b] << sb), fmt)

        elif cell.kind == "Mul":
            lanes = int(cell.attrs.get("lanes", 1))
            xs = ins[:lanes]
            ws = ins[lanes:]
            pf = product_format(in_fmts[lanes], in_fmts[0])
            if lanes == 1 and int(cell.attrs.get("phases", 1)) == 1:

                def run(v, x=xs[0], w=ws[0], o=o):
                    v[o] = v[x] * v[w]

            else:
                shift = out_fmt.fractional_bits - pf.fractional_bits

                def run(v, xs=tuple(xs), ws=tuple(ws), shift=shift, fmt=out_fmt, o=o):
                    acc = _apply_overflow((v[xs[0]] * v[ws[0]]) << shift, fmt)
                    for x, w in zip(xs[1:], ws[1:]):
                        acc = _apply_overflow(acc + ((v[x] * v[w]) << shift), fmt)
                    v[o] = acc

        elif cell.kind == "Register":

            def run(v, i=ins[0], o=o):
                v[o] = v[i]

        elif cell.kind == "ReluClamp":

            def run(v, i=ins[0], o=o):
                v[o] = v[i] if v[i] > 0 else 0

        elif cell.kind == "SatCast":
            fi = in_fmts[0].fractional_bits
            fo = out_fmt.fractional_bits

            def run(v, i=ins[0], fi=fi, fo=fo, fmt=out_fmt, o=o):
                x = v[i]
                n = x << (fo - fi) if fo >= fi else _round_shift(x, fi - fo, fmt.rounding)
                v[o] = _apply_overflow(n, fmt)

        elif cell.kind == "LutRom":
            spec = SigmoidLutSpec(
                int(cell.attrs["entries"]), float(cell.attrs["lo"]), float(cell.attrs["hi"])
            )
            table = list(cell.attrs["table"])
            in_fmt = in_fmts[0]

            def run(v, i=ins[0], o=o, table=table, spec=spec, in_fmt=in_fmt, fmt=out_fmt):
                v[o] = sigmoid_lut_apply(
                    FixedPointValue(v[i], in_fmt), table, spec, fmt
                ).raw

        else:  # pragma: no cover - verify_netlist rejects unknown kinds
            raise ValueError(f"cannot interpret cell kind {cell.kind}")
        return run

    def run(self, inputs: dict[str, int]) -> dict[str, int]:
        n = self.netlist
        missing = set(n.inputs) - set(inputs)
        if missing:
            raise ValueError(f"missing input values for {sorted(missing)}")
        values = list(self._init)
        for w in n.inputs:
            raw = int(inputs[w])
            if not n.wires[w].fmt.holds_raw(raw):
                raise ValueError(f"input {w} raw {raw} outside {n.wires[w].fmt.to_string()}")
            values[self._idx[w]] = raw
        for op in self._ops:
            op(values)
        return {w: values[self._idx[w]] for w in n.outputs}


def interpret_netlist(n: NetlistIr, inputs: dict[str, int]) -> dict[str, int]:
    """Evaluate one input vector; output raws as they stand after
    latency_cycles (stage assignment is verified structurally)."""
    return NetlistInterpreter(n).run(inputs)


# ---------------------------------------------------------------------------
# Serialization (debug dump, stable ordering)
# ---------------------------------------------------------------------------

def netlist_to_json(n: NetlistIr) -> str:
    doc = {
        "name": n.name,
        "latency_cycles": n.latency_cycles,
        "initiation_interval": n.initiation_interval,
        "inputs": list(n.inputs),
        "outputs": list(n.outputs),
        "wires": [
            {"name": w.name, "format": w.fmt.to_string()} for w in n.wires.values()
        ],
        "cells": [
            {
                "kind": c.kind,
                "inputs": list(c.inputs),
                "output": c.output,
                "stage": c.stage,
                "attrs": _attrs_to_json(c.attrs),
            }
            for c in n.cells
        ],
    }
    return json.dumps(doc, indent=1, sort_keys=False)


def _attrs_to_json(attrs: dict) -> dict:
    out = {}
    for k in sorted(attrs):
        v = attrs[k]
        out[k] = list(v) if isinstance(v, tuple) else v
    return out


def netlist_from_json(text: str) -> NetlistIr:
    doc = json.loads(text)
    wires = {
        w["name"]: Wire(w["name"], FixedPointFormat.from_string(w["format"]))
        for w in doc["wires"]
    }
    cells = []
    for c in doc["cells"]:
        attrs = dict(c["attrs"])
        if "invert" in attrs:
            attrs["invert"] = tuple(bool(x) for x in attrs["invert"])
        cells.append(Cell(c["kind"], tuple(c["inputs"]), c["output"], c["stage"], attrs))
    return NetlistIr(
        doc["name"],
        list(doc["inputs"]),
        list(doc["outputs"]),
        wires,
        cells,
        int(doc["latency_cycles"]),
        int(doc["initiation_interval"]),
    )
