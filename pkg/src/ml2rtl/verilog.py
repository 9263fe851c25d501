"""Verilog-2001 emission from verified netlists, plus a structural linter.

One synchronous module per netlist: single clock, active-high synchronous
reset, flat parallel data ports with a valid bit.  Everything is declared
signed; unsigned data formats are zero-extended by one bit so Verilog's
signedness rules never bite.  Every cell maps to a fixed idiom (signed
compare, ``*`` on signed vectors, explicit range-check saturation, case-
statement ROMs), and emission is deterministic so golden files are stable.

The linter parses the emitted subset of Verilog and checks identifiers,
drivers, a width calculus, and that every input-to-output path crosses
exactly LATENCY register stages.  It exists to catch emitter regressions and
hand-edited breakage, not to validate arbitrary Verilog.
"""

from __future__ import annotations

import math
import re
from fractions import Fraction

from .fixedpoint import BIT, FixedPointFormat, Rounding
from .netlist import Cell, NetlistIr, verify_netlist


class UnverifiedNetlist(Exception):
    pass


class UnsupportedFeature(Exception):
    pass


def _ewidth(fmt: FixedPointFormat) -> int:
    """Emission width: 1-bit control stays 1 bit; unsigned data grows a zero
    sign bit so all arithmetic runs on signed vectors."""
    if fmt == BIT:
        return 1
    return fmt.total_bits + (0 if fmt.signed else 1)


def _lit(value: int, width: int) -> str:
    """Width-exact signed literal via hex two's complement."""
    mask = (1 << width) - 1
    return f"$signed({width}'h{value & mask:x})"


def _zeros(k: int) -> str:
    return f"{{{k}{{1'b0}}}}"


def _aligned(name: str, width: int, shift: int) -> tuple[str, int]:
    """Left-shift by concatenating zeros; returns (expr, width)."""
    if shift == 0:
        return name, width
    return f"$signed({{{name}, {_zeros(shift)}}})", width + shift


def _sext_aligned(name: str, width: int, shift: int, target: int) -> str:
    """Width-exact sign-extended, zero-padded form of ``name << shift``."""
    ext = target - width - shift
    parts = []
    if ext > 0:
        parts.append(f"{{{ext}{{{name}[{width - 1}]}}}}")
    parts.append(name)
    if shift > 0:
        parts.append(_zeros(shift))
    if len(parts) == 1:
        return name
    return f"$signed({{{', '.join(parts)}}})"


class _Emitter:
    def __init__(self, n: NetlistIr):
        self.n = n
        self.lines: list[str] = []
        self.decl_lines: list[str] = []
        self.ports = set(n.inputs) | set(n.outputs)
        self.regs: set[str] = set()
        for c in n.cells:
            if c.kind == "Register" or c.kind == "Mul":
                self.regs.add(c.output)

    def fmt(self, wire: str) -> FixedPointFormat:
        return self.n.wires[wire].fmt

    def w(self, wire: str) -> int:
        return _ewidth(self.fmt(wire))

    def decl(self, text: str) -> None:
        self.decl_lines.append(text)

    def out(self, text: str) -> None:
        self.lines.append(text)

    # -- per-cell emission ---------------------------------------------------

    def emit(self) -> str:
        n = self.n
        head = [f"module {n.name} ("]
        head.append("  input wire clk,")
        head.append("  input wire rst,")
        for wname in n.inputs:
            head.append(f"  input wire {self._port_decl(wname)},")
        for i, wname in enumerate(n.outputs):
            comma = "," if i + 1 < len(n.outputs) else ""
            head.append(f"  output wire {self._port_decl(wname)}{comma}")
        head.append(");")
        head.append(f"  localparam LATENCY = {n.latency_cycles};")
        head.append(f"  localparam INITIATION_INTERVAL = {n.initiation_interval};")

        for c in n.cells:
            out = c.output
            if out in n.outputs and out in self.regs:
                # registers driving ports get an internal reg + port assign
                self._emit_cell(c, rename={out: f"{out}_w"})
                self.out(f"  assign {out} = {out}_w;")
            else:
                self._emit_cell(c, rename={})

        body = head + [""] + self.decl_lines + [""] + self.lines + ["endmodule", ""]
        return "\n".join(body)

    def _port_decl(self, wire: str) -> str:
        w = self.w(wire)
        if w == 1:
            return wire
        return f"signed [{w - 1}:0] {wire}"

    def _declare(self, name: str, width: int, is_reg: bool, init: str | None = None) -> None:
        if name in self.ports:
            # the port header already declared it; emit any init as an assign
            if init is not None:
                self.out(f"  assign {name} = {init};")
            return
        kw = "reg" if is_reg else "wire"
        dims = "" if width == 1 else f" signed [{width - 1}:0]"
        if init is not None:
            self.decl(f"  {kw}{dims} {name} = {init};")
        else:
            self.decl(f"  {kw}{dims} {name};")

    def _emit_cell(self, c: Cell, rename: dict[str, str]) -> None:
        out = rename.get(c.output, c.output)
        handler = getattr(self, f"_cell_{c.kind.lower()}")
        handler(c, out)

    def _cast_base(self, full: str, full_w: int, out_w: int) -> str:
        """Reinterpret a full-precision value at the output width."""
        if full_w >= out_w:
            return f"$signed({full}[{out_w - 1}:0])"
        return _sext_aligned(full, full_w, 0, out_w)

    def _sat_select(self, full: str, full_w: int, out_fmt: FixedPointFormat, out_w: int) -> str:
        """Range-check saturation; bounds the value cannot reach drop out."""
        full_min, full_max = -(1 << (full_w - 1)), (1 << (full_w - 1)) - 1
        legs = []
        if out_fmt.max_raw < full_max:
            legs.append(
                f"({full} > {_lit(out_fmt.max_raw, full_w)}) ? "
                f"{_lit(out_fmt.max_raw, out_w)} : "
            )
        if out_fmt.min_raw > full_min:
            legs.append(
                f"({full} < {_lit(out_fmt.min_raw, full_w)}) ? "
                f"{_lit(out_fmt.min_raw, out_w)} : "
            )
        return "".join(legs) + self._cast_base(full, full_w, out_w)

    def _cell_const(self, c: Cell, out: str) -> None:
        w = self.w(c.output)
        self._declare(out, w, False)
        raw = c.attrs["raw"]
        self.out(f"  assign {out} = {_lit(raw, w)}; // {raw} in {self.fmt(c.output).to_string()}")

    def _cell_comparator(self, c: Cell, out: str) -> None:
        a, b = c.inputs
        fa, fb = self.fmt(a).fractional_bits, self.fmt(b).fractional_bits
        s = max(fa, fb)
        ka, kb = s - fa, s - fb
        cw = max(self.w(a) + ka, self.w(b) + kb)
        ea = _sext_aligned(a, self.w(a), ka, cw)
        eb = _sext_aligned(b, self.w(b), kb, cw)
        self._declare(out, 1, False)
        self.out(f"  assign {out} = ({ea} < {eb}) ? 1'b1 : 1'b0;")

    def _cell_andreduce(self, c: Cell, out: str) -> None:
        invert = c.attrs["invert"]
        terms = [f"(~{w})" if inv else w for w, inv in zip(c.inputs, invert)]
        self._declare(out, 1, False)
        self.out(f"  assign {out} = {' & '.join(terms)};")

    def _cell_orreduce(self, c: Cell, out: str) -> None:
        w = self.w(c.output)
        self._declare(out, w, False)
        self.out(f"  assign {out} = {' | '.join(c.inputs)};")

    def _cell_mux(self, c: Cell, out: str) -> None:
        sel, a, b = c.inputs
        w = self.w(c.output)
        self._declare(out, w, False)
        self.out(f"  assign {out} = {sel} ? {a} : {b};")

    def _cell_add(self, c: Cell, out: str) -> None:
        a, b = c.inputs
        out_fmt = self.fmt(c.output)
        fo = out_fmt.fractional_bits
        ea, wa = _aligned(a, self.w(a), fo - self.fmt(a).fractional_bits)
        eb, wb = _aligned(b, self.w(b), fo - self.fmt(b).fractional_bits)
        full_w = max(wa, wb) + 1
        out_w = self.w(c.output)
        self._declare(f"{out}__full", full_w, False, f"{ea} + {eb}")
        self._declare(out, out_w, False)
        if out_fmt.overflow.value == "sat":
            self.out(f"  assign {out} = {self._sat_select(f'{out}__full', full_w, out_fmt, out_w)};")
        else:
            self.out(f"  assign {out} = {self._cast_base(f'{out}__full', full_w, out_w)};")

    def _cell_register(self, c: Cell, out: str) -> None:
        d = c.inputs[0]
        w = self.w(c.output)
        self._declare(out, w, True)
        zero = _lit(0, w) if w > 1 else "1'b0"
        self.out(
            f"  always @(posedge clk) begin if (rst) {out} <= {zero}; "
            f"else {out} <= {d}; end"
        )

    def _cell_reluclamp(self, c: Cell, out: str) -> None:
        a = c.inputs[0]
        w = self.w(c.output)
        self._declare(out, w, False)
        self.out(f"  assign {out} = {a}[{w - 1}] ? {_lit(0, w)} : {a};")

    def _cell_satcast(self, c: Cell, out: str) -> None:
        a = c.inputs[0]
        in_fmt, out_fmt = self.fmt(c.inputs[0]), self.fmt(c.output)
        if out_fmt.fractional_bits < in_fmt.fractional_bits and out_fmt.rounding is not Rounding.TRUNCATE:
            raise UnsupportedFeature(
                "emission implements truncating casts only; "
                f"{out} wants {out_fmt.rounding.value}"
            )
        out_w = self.w(c.output)
        shift = out_fmt.fractional_bits - in_fmt.fractional_bits
        if shift >= 0:
            expr, full_w = _aligned(a, self.w(a), shift)
        else:
            # arithmetic shift right truncates toward negative infinity
            expr, full_w = f"({a} >>> {-shift})", self.w(a)
        self._declare(f"{out}__full", full_w, False, expr)
        self._declare(out, out_w, False)
        if out_fmt.overflow.value == "sat":
            self.out(f"  assign {out} = {self._sat_select(f'{out}__full', full_w, out_fmt, out_w)};")
        else:
            self.out(f"  assign {out} = {self._cast_base(f'{out}__full', full_w, out_w)};")

    def _cell_mul(self, c: Cell, out: str) -> None:
        lanes = int(c.attrs.get("lanes", 1))
        phases = int(c.attrs.get("phases", 1))
        xs = c.inputs[:lanes]
        ws = c.inputs[lanes:]
        out_fmt = self.fmt(c.output)
        out_w = self.w(c.output)
        if lanes == 1 and phases == 1:
            pw = self.w(xs[0]) + self.w(ws[0])
            self._declare(f"{out}__full", pw, False, f"{xs[0]} * {ws[0]}")
            comb = f"$signed({out}__full[{out_w - 1}:0])"
        else:
            # multiply-accumulate group: stepwise saturating accumulation,
            # the combinational equivalent of phases sequential MAC cycles
            prev = None
            for li, (x, wv) in enumerate(zip(xs, ws)):
                pw = self.w(x) + self.w(wv)
                self._declare(f"{out}__p{li}", pw, False, f"{x} * {wv}")
                pf = self.fmt(x).fractional_bits + self.fmt(wv).fractional_bits
                shift = out_fmt.fractional_bits - pf
                expr, ew = _aligned(f"{out}__p{li}", pw, shift)
                if prev is None:
                    full_w = ew + 1
                    self._declare(f"{out}__s{li}", full_w, False, f"{expr} + {_lit(0, ew)}")
                else:
                    full_w = max(out_w, ew) + 1
                    self._declare(f"{out}__s{li}", full_w, False, f"{prev} + {expr}")
                acc = f"{out}__a{li}"
                self._declare(acc, out_w, False,
                              self._sat_select(f"{out}__s{li}", full_w, out_fmt, out_w))
                prev = acc
            comb = prev
        # internal pipeline registers (phases cycles)
        zero = _lit(0, out_w)
        src = comb
        for p in range(phases):
            name = out if p == phases - 1 else f"{out}__r{p}"
            self._declare(name, out_w, True)
            self.out(
                f"  always @(posedge clk) begin if (rst) {name} <= {zero}; "
                f"else {name} <= {src}; end"
            )
            src = name

    def _cell_lutrom(self, c: Cell, out: str) -> None:
        v = c.inputs[0]
        in_fmt = self.fmt(c.inputs[0])
        out_fmt = self.fmt(c.output)
        out_w = self.w(c.output)
        entries = int(c.attrs["entries"])
        lo, hi = Fraction(c.attrs["lo"]), Fraction(c.attrs["hi"])
        table = list(c.attrs["table"])
        f = in_fmt.fractional_bits
        scale = Fraction(entries) / (hi - lo)
        if scale.numerator & (scale.numerator - 1) or scale.denominator != 1:
            raise UnsupportedFeature("LUT emission needs a power-of-two entries/range ratio")
        s = scale.numerator.bit_length() - 1  # scale = 2**s
        lo_raw = lo * (1 << f)
        hi_raw = hi * (1 << f)
        lo_scaled = lo * scale
        if lo_raw.denominator != 1 or hi_raw.denominator != 1 or lo_scaled.denominator != 1:
            raise UnsupportedFeature("LUT bounds must be representable in the input format")
        in_w = self.w(v)
        one_raw = table_one(out_fmt)
        if int(lo_raw) > in_fmt.max_raw:  # range entirely below the table
            self._declare(out, out_w, False)
            self.out(f"  assign {out} = {_lit(0, out_w)};")
            return
        if int(hi_raw) <= in_fmt.min_raw:  # range entirely above the table
            self._declare(out, out_w, False)
            self.out(f"  assign {out} = {_lit(one_raw, out_w)};")
            return
        aw = max(1, math.ceil(math.log2(entries)))
        # shifted = floor(value * 2**s); address = shifted - lo*2**s
        if f >= s:
            self._declare(f"{out}__sh", in_w, False, f"({v} >>> {f - s})")
            sh_w = in_w
        else:
            expr, sh_w = _aligned(v, in_w, s - f)
            self._declare(f"{out}__sh", sh_w, False, expr)
        lit_w = max(sh_w, aw)
        sh_expr = _sext_aligned(f"{out}__sh", sh_w, 0, lit_w)
        self._declare(
            f"{out}__addr", lit_w + 1, False, f"{sh_expr} - {_lit(int(lo_scaled), lit_w)}"
        )
        self.decl(f"  reg signed [{out_w - 1}:0] {out}__rom;")
        rom = [f"  always @* begin case ({out}__addr[{aw - 1}:0])"]
        for i, raw in enumerate(table):
            rom.append(f"    {aw}'h{i:x}: {out}__rom = {_lit(raw, out_w)};")
        rom.append(f"    default: {out}__rom = {_lit(0, out_w)};")
        rom.append("  endcase end")
        self.lines.extend(rom)
        self._declare(out, out_w, False)
        # boundary legs drop out when the input format cannot reach them
        legs = []
        if int(lo_raw) > in_fmt.min_raw:
            legs.append(f"({v} < {_lit(int(lo_raw), in_w)}) ? {_lit(0, out_w)} : ")
        if int(hi_raw) <= in_fmt.max_raw:
            legs.append(f"({v} >= {_lit(int(hi_raw), in_w)}) ? {_lit(one_raw, out_w)} : ")
        self.out(f"  assign {out} = {''.join(legs)}{out}__rom;")


def table_one(out_fmt: FixedPointFormat) -> int:
    """Raw for 1.0 saturated into the activation format (upper LUT bound)."""
    from .fixedpoint import quantize_real

    return quantize_real(1.0, out_fmt.with_semantics(rounding=Rounding.NEAREST_EVEN)).raw


def emit_verilog(n: NetlistIr) -> str:
    """Emit one synthesizable module; the netlist must verify cleanly."""
    findings = verify_netlist(n)
    if findings:
        raise UnverifiedNetlist(findings[0])
    return _Emitter(n).emit()


# ---------------------------------------------------------------------------
# Testbench
# ---------------------------------------------------------------------------

def emit_testbench(n: NetlistIr, vectors: list[tuple[dict[str, int], dict[str, int]]]) -> str:
    """Self-checking testbench: drive each vector, wait the pipe latency,
    compare registered outputs, and print a PASS/FAIL tally."""
    findings = verify_netlist(n)
    if findings:
        raise UnverifiedNetlist(findings[0])
    name = n.name
    L: list[str] = []
    L.append("`timescale 1ns/1ps")
    L.append(f"module {name}_tb;")
    L.append("  reg clk;")
    L.append("  reg rst;")
    for w in n.inputs:
        width = _ewidth(n.wires[w].fmt)
        dims = "" if width == 1 else f" signed [{width - 1}:0]"
        L.append(f"  reg{dims} {w};")
    for w in n.outputs:
        width = _ewidth(n.wires[w].fmt)
        dims = "" if width == 1 else f" signed [{width - 1}:0]"
        L.append(f"  wire{dims} {w};")
    L.append("  integer pass_count;")
    L.append("  integer fail_count;")
    conns = ", ".join(f".{w}({w})" for w in ["clk", "rst"] + n.inputs + n.outputs)
    L.append(f"  {name} dut ({conns});")
    L.append("  initial clk = 1'b0;")
    L.append("  always #5 clk = ~clk;")
    L.append("  initial begin")
    L.append("    pass_count = 0;")
    L.append("    fail_count = 0;")
    L.append("    rst = 1'b1;")
    for w in n.inputs:
        width = _ewidth(n.wires[w].fmt)
        zero = _lit(0, width) if width > 1 else "1'b0"
        L.append(f"    {w} = {zero};")
    L.append("    repeat (3) @(negedge clk);")
    L.append("    rst = 1'b0;")
    for vi, (ins, outs) in enumerate(vectors):
        L.append(f"    // vector {vi}")
        for w in n.inputs:
            width = _ewidth(n.wires[w].fmt)
            val = int(ins[w])
            lit = _lit(val, width) if width > 1 else f"1'b{val & 1}"
            L.append(f"    {w} = {lit};")
        L.append(f"    repeat ({n.latency_cycles}) @(negedge clk);")
        for w in n.outputs:
            width = _ewidth(n.wires[w].fmt)
            val = int(outs[w])
            lit = _lit(val, width) if width > 1 else f"1'b{val & 1}"
            L.append(f"    if ({w} === {lit}) pass_count = pass_count + 1;")
            L.append(
                f'    else begin fail_count = fail_count + 1; '
                f'$display("FAIL vector {vi} output {w}: got %0d", {w}); end'
            )
    L.append('    $display("PASS %0d FAIL %0d", pass_count, fail_count);')
    L.append("    $finish;")
    L.append("  end")
    L.append("endmodule")
    L.append("")
    return "\n".join(L)


# ---------------------------------------------------------------------------
# Lint: parses the emitted Verilog subset
# ---------------------------------------------------------------------------

_KEYWORDS = {
    "module", "endmodule", "input", "output", "wire", "reg", "assign", "always",
    "posedge", "negedge", "begin", "end", "if", "else", "case", "endcase",
    "default", "localparam", "signed", "integer", "initial", "repeat", "clk",
    "rst",
}

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_LITERAL = re.compile(r"(\d+)'s?[hbd][0-9a-fA-F_xz]+")


def _strip_comments(text: str) -> str:
    return re.sub(r"//[^\n]*", "", text)


class _Expr:
    """Width calculus over the emitted expression grammar."""

    def __init__(self, text: str, widths: dict[str, int], findings: list[str], where: str):
        self.text = text
        self.widths = widths
        self.findings = findings
        self.where = where
        self.pos = 0

    def error(self, msg: str) -> None:
        self.findings.append(f"{self.where}: {msg}")

    def peek(self) -> str:
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1
        return self.text[self.pos :]

    def take(self, tok: str) -> bool:
        if self.peek().startswith(tok):
            self.pos += len(tok)
            return True
        return False

    def parse(self) -> int | None:
        w = self.ternary()
        if self.peek():
            self.error(f"trailing junk {self.peek()!r}")
        return w

    def ternary(self) -> int | None:
        cond = self.binary()
        if self.take("?"):
            a = self.ternary()
            if not self.take(":"):
                self.error("missing ':'")
                return None
            b = self.ternary()
            if a is not None and b is not None and a != b:
                self.error(f"ternary branch widths differ ({a} vs {b})")
            return a if a is not None else b
        return cond

    def binary(self) -> int | None:
        left = self.unary()
        while True:
            rest = self.peek()
            op = None
            for cand in (">=", "<=", "===", "==", ">>>", "<<", ">", "<", "+", "-", "*", "&", "|"):
                if rest.startswith(cand):
                    op = cand
                    break
            if op is None:
                return left
            self.pos += len(op)
            right = self.unary()
            if op in (">>>", "<<"):
                continue  # width of the left operand; rhs is a shift count
            if left is None or right is None:
                left = None
            elif op in (">", "<", ">=", "<=", "==", "==="):
                if left != right:
                    self.error(f"comparison width mismatch ({left} vs {right})")
                left = 1
            elif op == "*":
                left = left + right
            elif op in ("+", "-"):
                left = max(left, right) + 1
            else:  # & |
                left = max(left, right)

    def unary(self) -> int | None:
        if self.take("~"):
            return self.unary()
        rest = self.peek()
        if rest.startswith("$signed"):
            self.pos += len("$signed")
            if not self.take("("):
                self.error("malformed $signed")
                return None
            w = self.ternary()
            if not self.take(")"):
                self.error("unbalanced $signed(")
            return w
        if self.take("("):
            w = self.ternary()
            if not self.take(")"):
                self.error("unbalanced (")
            return self.postfix(w)
        if rest.startswith("{"):
            return self.concat()
        m = _LITERAL.match(rest)
        if m:
            self.pos += m.end()
            return int(m.group(1))
        m = re.match(r"\d+", rest)
        if m:  # bare integer (shift counts); width is context-dependent
            self.pos += m.end()
            return None
        m = _IDENT.match(rest)
        if m:
            name = m.group(0)
            self.pos += m.end()
            if name not in self.widths:
                self.error(f"undeclared identifier {name}")
                return None
            return self.postfix(self.widths[name])
        self.error(f"cannot parse expression at {rest[:24]!r}")
        return None

    def postfix(self, w: int | None) -> int | None:
        while self.peek().startswith("["):
            self.take("[")
            m = re.match(r"\s*(\d+)\s*(?::\s*(\d+))?\s*\]", self.peek())
            if not m:
                self.error("bad part select")
                return None
            self.pos += m.end()
            if m.group(2) is None:
                w = 1
            else:
                w = int(m.group(1)) - int(m.group(2)) + 1
        return w

    def concat(self) -> int | None:
        assert self.take("{")
        rest = self.peek()
        rep = re.match(r"(\d+)\s*\{", rest)
        if rep:
            self.pos += rep.end()
            inner = self.ternary()
            if not (self.take("}") and self.take("}")):
                self.error("unbalanced replication")
                return None
            return None if inner is None else int(rep.group(1)) * inner
        total = 0
        while True:
            w = self.ternary()
            if w is None:
                return None
            total += w
            if self.take(","):
                continue
            if self.take("}"):
                return total
            self.error("unbalanced concat")
            return None


def lint_verilog(text: str) -> list[str]:
    """Structural lint of the emitted subset; empty list means clean."""
    findings: list[str] = []
    src = _strip_comments(text)

    widths: dict[str, int] = {"clk": 1, "rst": 1}
    inputs: list[str] = []
    outputs: list[str] = []
    regs: set[str] = set()
    localparams: dict[str, int] = {}
    drivers: dict[str, int] = {}
    deps: dict[str, set[str]] = {}
    reg_edges: dict[str, str] = {}

    def declare(name: str, width: int, is_reg: bool) -> None:
        if name in widths and name not in ("clk", "rst"):
            findings.append(f"{name} declared twice")
        widths[name] = width
        if is_reg:
            regs.add(name)

    decl_re = re.compile(
        r"^\s*(input|output)?\s*(wire|reg)\s*(signed\s*\[(\d+):0\])?\s*"
        r"([A-Za-z_][A-Za-z0-9_]*)\s*(=\s*(.*?))?[,;]?\s*$"
    )
    assign_re = re.compile(r"^\s*assign\s+([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.*);\s*$")
    always_re = re.compile(
        r"^\s*always\s*@\(posedge clk\)\s*begin\s*if\s*\(rst\)\s*"
        r"([A-Za-z_][A-Za-z0-9_]*)\s*<=\s*(.*?);\s*else\s*\1\s*<=\s*(.*?);\s*end\s*$"
    )
    lp_re = re.compile(r"^\s*localparam\s+([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(\d+)\s*;")
    case_head_re = re.compile(r"^\s*always\s*@\*\s*begin\s*case\s*\((.*)\)\s*$")
    case_arm_re = re.compile(
        r"^\s*(?:\d+'h[0-9a-f]+|default)\s*:\s*([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.*);\s*$"
    )

    def exprs_idents(expr: str) -> set[str]:
        out = set()
        cleaned = _LITERAL.sub(" ", expr)
        for m in _IDENT.finditer(cleaned):
            if m.group(0) not in _KEYWORDS and not m.group(0).startswith("$"):
                out.add(m.group(0))
        return out

    def check_expr(lhs: str, expr: str, where: str) -> None:
        w = _Expr(expr.strip(), widths, findings, where).parse()
        if w is not None and lhs in widths and w != widths[lhs]:
            findings.append(f"{where}: width mismatch, {lhs} is {widths[lhs]} bits, rhs is {w}")

    def add_driver(name: str, where: str, rhs: str, is_reg_edge: bool) -> None:
        drivers[name] = drivers.get(name, 0) + 1
        if drivers[name] > 1:
            findings.append(f"{where}: {name} has multiple drivers")
        idents = exprs_idents(rhs)
        missing = [i for i in idents if i not in widths]
        for i in missing:
            findings.append(f"{where}: undeclared identifier {i}")
        if is_reg_edge:
            srcs = idents & set(widths)
            reg_edges[name] = next(iter(srcs)) if len(srcs) == 1 else ""
            deps.setdefault(name, set())
        else:
            deps[name] = idents & set(widths)

    lines = src.split("\n")
    case_lhs: str | None = None
    case_sel: str | None = None
    for ln, raw_line in enumerate(lines, 1):
        line = raw_line.strip()
        if not line or line.startswith("module") or line in ("endmodule", ");"):
            continue
        where = f"line {ln}"
        if case_sel is not None:
            if line.startswith("endcase"):
                case_sel = None
                case_lhs = None
                continue
            m = case_arm_re.match(line)
            if m:
                if case_lhs is None:
                    case_lhs = m.group(1)
                    add_driver(case_lhs, where, case_sel, False)
                check_expr(m.group(1), m.group(2), where)
                continue
            findings.append(f"{where}: unparsed case arm {line!r}")
            continue
        m = case_head_re.match(line)
        if m:
            case_sel = m.group(1)
            for i in exprs_idents(case_sel):
                if i not in widths:
                    findings.append(f"{where}: undeclared identifier {i}")
            continue
        m = lp_re.match(line)
        if m:
            localparams[m.group(1)] = int(m.group(2))
            widths[m.group(1)] = 32
            continue
        m = decl_re.match(line)
        if m and m.group(2):
            direction, kind, _, msb, name, _, init = m.groups()
            width = int(msb) + 1 if msb else 1
            declare(name, width, kind == "reg")
            if direction == "input":
                inputs.append(name)
                drivers[name] = 1
                deps[name] = set()
            elif direction == "output":
                outputs.append(name)
            if init:
                add_driver(name, where, init, False)
                check_expr(name, init, where)
            continue
        m = assign_re.match(line)
        if m:
            lhs, rhs = m.groups()
            if lhs not in widths:
                findings.append(f"{where}: assignment to undeclared {lhs}")
                continue
            if lhs in regs:
                findings.append(f"{where}: continuous assign drives reg {lhs}")
            add_driver(lhs, where, rhs, False)
            check_expr(lhs, rhs, where)
            continue
        m = always_re.match(line)
        if m:
            q, reset_val, d = m.groups()
            if q not in regs:
                findings.append(f"{where}: sequential assign to non-reg {q}")
            add_driver(q, where, d, True)
            check_expr(q, d, where)
            check_expr(q, reset_val, where)
            continue
        findings.append(f"{where}: unparsed construct {line!r}")

    for name in widths:
        if name in ("clk", "rst") or name in localparams:
            continue
        if drivers.get(name, 0) == 0:
            findings.append(f"{name} has no driver")

    if findings:
        return findings

    # register-balance: every input-to-output path crosses LATENCY registers
    latency = localparams.get("LATENCY")
    if latency is not None:
        comb_deps = deps
        memo: dict[str, set[int]] = {}

        def depths(name: str, visiting: set[str]) -> set[int]:
            if name in inputs:
                return {0}
            if name in memo:
                return memo[name]
            if name in visiting:
                findings.append(f"combinational loop at {name}")
                return set()
            visiting.add(name)
            out: set[int] = set()
            if name in reg_edges:
                src = reg_edges[name]
                if src:
                    out |= {d + 1 for d in depths(src, visiting)}
            else:
                for dep in comb_deps.get(name, ()):  # constants contribute nothing
                    out |= depths(dep, visiting)
            visiting.discard(name)
            memo[name] = out
            return out

        import sys

        old = sys.getrecursionlimit()
        sys.setrecursionlimit(max(old, 10 * len(widths) + 1000))
        try:
            for out_name in outputs:
                ds = depths(out_name, set())
                bad = ds - {latency}
                if bad:
                    findings.append(
                        f"output {out_name} reachable through {sorted(bad)} registers, "
                        f"LATENCY is {latency}"
                    )
        finally:
            sys.setrecursionlimit(old)

    return findings
