"""Resource and latency cost model over netlists.

The cost model is data, not code: a handful of documented parameters with
defaults for a generic 4-input-LUT / 18x18-DSP fabric, loadable from JSON so
users can calibrate against a real device.  The numbers are estimates by
design; they make configurations comparable, they do not promise silicon.

Default rules (logical format widths):

* Mul (one lane) costs 1 DSP when both operands fit 18 bits, otherwise
  ceil(W1/18)*ceil(W2/18); a multi-lane MAC adds an accumulator adder
  (output-width LUTs) on top of its single shared multiplier.
* Add, Mux, SatCast, ReluClamp and Comparator cost their output width in
  LUTs (the comparator uses the wider aligned operand).
* AndReduce/OrReduce over k inputs cost ceil(k/4) LUTs.
* Register costs its width in flip-flops.
* LutRom with E entries of W bits costs 1 BRAM when E*W exceeds the block
  threshold, otherwise ceil(E*W/64) LUTs.
* Const is free.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

from .netlist import Cell, NetlistIr


class UncoveredCellKind(Exception):
    pass


@dataclass(frozen=True)
class CostModel:
    dsp_max_width: int = 18
    lut_arity: int = 4
    bram_threshold_bits: int = 8192
    rom_bits_per_lut: int = 64

    @classmethod
    def from_json(cls, doc: dict) -> "CostModel":
        return cls(**{k: int(v) for k, v in doc.items()})

    def to_json(self) -> dict:
        return {
            "dsp_max_width": self.dsp_max_width,
            "lut_arity": self.lut_arity,
            "bram_threshold_bits": self.bram_threshold_bits,
            "rom_bits_per_lut": self.rom_bits_per_lut,
        }

    def dsp_for_mul(self, w1: int, w2: int) -> int:
        d = self.dsp_max_width
        if w1 <= d and w2 <= d:
            return 1
        return math.ceil(w1 / d) * math.ceil(w2 / d)


AXES = ("lut", "ff", "dsp", "bram")


@dataclass
class ResourceReport:
    lut: int = 0
    ff: int = 0
    dsp: int = 0
    bram: int = 0
    latency_cycles: int = 0
    initiation_interval: int = 1
    breakdown: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "lut": self.lut,
            "ff": self.ff,
            "dsp": self.dsp,
            "bram": self.bram,
            "latency_cycles": self.latency_cycles,
            "initiation_interval": self.initiation_interval,
            "breakdown": self.breakdown,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["lut", "ff", "dsp", "bram", "latency_cycles", "initiation_interval"])
        w.writerow([self.lut, self.ff, self.dsp, self.bram,
                    self.latency_cycles, self.initiation_interval])
        return buf.getvalue()


def _cell_cost(c: Cell, n: NetlistIr, cm: CostModel) -> dict[str, int]:
    fmt = lambda w: n.wires[w].fmt
    out_w = fmt(c.output).total_bits
    zero = {a: 0 for a in AXES}
    if c.kind == "Const":
        return zero
    if c.kind == "Register":
        return {**zero, "ff": out_w}
    if c.kind in ("Add", "Mux", "SatCast", "ReluClamp"):
        return {**zero, "lut": out_w}
    if c.kind == "Comparator":
        fa, fb = fmt(c.inputs[0]), fmt(c.inputs[1])
        s = max(fa.fractional_bits, fb.fractional_bits)
        width = max(
            fa.total_bits + s - fa.fractional_bits,
            fb.total_bits + s - fb.fractional_bits,
        )
        return {**zero, "lut": width}
    if c.kind in ("AndReduce", "OrReduce"):
        return {**zero, "lut": math.ceil(len(c.inputs) / cm.lut_arity)}
    if c.kind == "Mul":
        lanes = int(c.attrs.get("lanes", 1))
        w1 = fmt(c.inputs[0]).total_bits
        w2 = fmt(c.inputs[lanes]).total_bits
        cost = {**zero, "dsp": cm.dsp_for_mul(w1, w2)}
        if lanes > 1 or int(c.attrs.get("phases", 1)) > 1:
            cost["lut"] = out_w  # MAC accumulator adder
        return cost
    if c.kind == "LutRom":
        entries = int(c.attrs.get("entries", len(c.attrs.get("table", []))))
        bits = entries * out_w
        if bits > cm.bram_threshold_bits:
            return {**zero, "bram": 1}
        return {**zero, "lut": math.ceil(bits / cm.rom_bits_per_lut)}
    raise UncoveredCellKind(f"no cost rule for cell kind {c.kind!r}")


def estimate(n: NetlistIr, cm: CostModel | None = None) -> ResourceReport:
    """Sum rule costs over cells; latency and II come from the netlist."""
    cm = cm or CostModel()
    report = ResourceReport(
        latency_cycles=n.latency_cycles, initiation_interval=n.initiation_interval
    )
    for c in n.cells:
        cost = _cell_cost(c, n, cm)
        slot = report.breakdown.setdefault(
            c.kind, {"count": 0, "lut": 0, "ff": 0, "dsp": 0, "bram": 0}
        )
        slot["count"] += 1
        for a in AXES:
            slot[a] += cost[a]
            setattr(report, a, getattr(report, a) + cost[a])
    return report


def compare_reports(a: ResourceReport, b: ResourceReport) -> str:
    """Pareto verdict over (lut, ff, dsp, bram, latency, ii)."""
    axes = AXES + ("latency_cycles", "initiation_interval")
    av = [getattr(a, x) for x in axes]
    bv = [getattr(b, x) for x in axes]
    if av == bv:
        return "equal"
    if all(x <= y for x, y in zip(av, bv)):
        return "a_dominates"
    if all(y <= x for x, y in zip(av, bv)):
        return "b_dominates"
    return "incomparable"


def load_cost_model(path: str) -> CostModel:
    with open(path, "r", encoding="utf-8") as f:
        return CostModel.from_json(json.load(f))
