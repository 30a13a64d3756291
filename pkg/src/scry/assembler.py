"""Assembler and whole-program disassembler for Scry assembly text.

Syntax, one statement per line::

    label: mnemonic arg, arg, ...   // comment

A label may stand alone on a line and then binds to the next instruction (or
to the end of the program).  A statement whose last argument is followed by a
trailing comma continues on the next line.  Output references are written
``=>N``, ``=>label`` or as a chain ``=>trigger=>target=>...=>consumer`` that
follows the expected control flow through taken jumps.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from . import encoding
from .isa import (
    DUAL_OUTPUT_ALU,
    SINGLE_OUTPUT_ALU,
    TAGS,
    Instruction,
    InvalidInstruction,
)


class AsmError(Exception):
    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        self.message = message
        self.line = line
        self.col = col
        where = ""
        if line is not None:
            where = f"line {line}" + (f", col {col}" if col is not None else "") + ": "
        super().__init__(where + message)


# -- reference expressions ----------------------------------------------------

@dataclass(frozen=True)
class Numeric:
    n: int


@dataclass(frozen=True)
class Label:
    name: str


@dataclass(frozen=True)
class Chain:
    """Alternating trigger/target labels ending in the consuming label."""

    labels: tuple[str, ...]

    def __post_init__(self):
        if len(self.labels) < 3 or len(self.labels) % 2 == 0:
            raise ValueError("a chain needs trigger/target pairs followed by a consumer")


RefExpr = Numeric | Label | Chain


def resolve_reference(expr: RefExpr, producer_index: int, labels: dict[str, int]) -> int:
    """Temporal distance (instructions skipped) from the producer to the consumer."""

    def at(name):
        try:
            return labels[name]
        except KeyError:
            raise AsmError(f"undefined label {name!r}") from None

    if isinstance(expr, Numeric):
        distance = expr.n
    elif isinstance(expr, Label):
        distance = at(expr.name) - producer_index - 1
    else:
        names = expr.labels
        # the instruction at a trigger label is not executed before the jump
        distance = at(names[0]) - producer_index - 1
        for k in range(1, len(names) - 1, 2):
            distance += at(names[k + 1]) - at(names[k])
    if distance < 0:
        raise AsmError(f"reference resolves to negative distance {distance}")
    return distance


# -- parsing ------------------------------------------------------------------

class PassThrough:
    """A bare ``=>``: extra outputs go to the next instruction."""

    def __repr__(self):
        return "PassThrough"


PASS = PassThrough()

_IDENT = r"[A-Za-z_][A-Za-z0-9_]*"
_LABEL_RE = re.compile(rf"\s*({_IDENT})\s*:")
_NUM_RE = re.compile(r"[+-]?(0[xX][0-9a-fA-F]+|0[bB][01]+|\d+)$")
_IDENT_RE = re.compile(_IDENT + "$")
_MNEMONIC_RE = re.compile(r"\s*(\.?[A-Za-z_][A-Za-z0-9_.]*)")


@dataclass
class Arg:
    value: object   # int, str (identifier/keyword), RefExpr, or PASS
    col: int
    text: str


@dataclass
class Statement:
    mnemonic: str
    args: list[Arg]
    line: int
    col: int
    text: str
    labels: list[str] = field(default_factory=list)


@dataclass
class SourceProgram:
    statements: list[Statement]
    labels: dict[str, int]


def _parse_arg(text: str, line: int, col: int) -> Arg:
    t = text.strip()
    if not t:
        raise AsmError("empty argument", line, col)
    if t.startswith("=>"):
        if t == "=>":
            return Arg(PASS, col, t)
        parts = [p.strip() for p in t[2:].split("=>")]
        if len(parts) == 1:
            p = parts[0]
            if _NUM_RE.match(p):
                n = int(p, 0)
                if n < 0:
                    raise AsmError(f"negative reference {p}", line, col)
                return Arg(Numeric(n), col, t)
            if _IDENT_RE.match(p):
                return Arg(Label(p), col, t)
            raise AsmError(f"bad reference {t!r}", line, col)
        if not all(_IDENT_RE.match(p) for p in parts):
            raise AsmError(f"chain references may only name labels: {t!r}", line, col)
        if len(parts) % 2 == 0:
            raise AsmError(f"chain {t!r} must end in a consumer after trigger/target pairs", line, col)
        return Arg(Chain(tuple(parts)), col, t)
    if _NUM_RE.match(t):
        return Arg(int(t, 0), col, t)
    if _IDENT_RE.match(t):
        return Arg(t, col, t)
    raise AsmError(f"cannot parse argument {t!r}", line, col)


def _logical_lines(source: str):
    """Yield (line number, text) with comments stripped and trailing-comma
    continuations joined onto their first line."""
    pending = None
    for n, raw in enumerate(source.splitlines(), start=1):
        text = raw.split("//", 1)[0].rstrip()
        if pending is not None:
            start, buf = pending
            if not text.strip():
                continue
            buf = buf + " " + text.strip()
            if buf.rstrip().endswith(","):
                pending = (start, buf)
            else:
                pending = None
                yield start, buf
            continue
        if text.rstrip().endswith(","):
            pending = (n, text)
            continue
        yield n, text
    if pending is not None:
        raise AsmError("statement ends with a dangling comma", pending[0])


def parse(source: str) -> SourceProgram:
    statements: list[Statement] = []
    labels: dict[str, int] = {}
    waiting: list[str] = []
    for line, text in _logical_lines(source):
        pos = 0
        while m := _LABEL_RE.match(text, pos):
            name = m.group(1)
            if name in labels or name in waiting:
                raise AsmError(f"duplicate label {name!r}", line, m.start(1) + 1)
            waiting.append(name)
            pos = m.end()
        rest = text[pos:]
        if not rest.strip():
            continue
        m = _MNEMONIC_RE.match(rest)
        if not m:
            raise AsmError(f"expected a mnemonic, got {rest.strip()!r}", line, pos + 1)
        mnemonic = m.group(1)
        mcol = pos + m.start(1) + 1
        argtext = rest[m.end():]
        if argtext and not argtext[0].isspace():
            raise AsmError(f"unexpected {argtext.split()[0]!r} after mnemonic", line, pos + m.end() + 1)
        args = []
        if argtext.strip():
            offset = pos + m.end()
            for piece in argtext.split(","):
                lead = len(piece) - len(piece.lstrip())
                args.append(_parse_arg(piece, line, offset + lead + 1))
                offset += len(piece) + 1
        for name in waiting:
            labels[name] = len(statements)
        statements.append(Statement(mnemonic, args, line, mcol, " ".join(rest.split()), waiting))
        waiting = []
    for name in waiting:
        labels[name] = len(statements)
    return SourceProgram(statements, labels)


# -- building instructions --------------------------------------------------

ALIASES = {
    "trp": "trap",
    "fnc": "fence",
    "ld.s": "ld_s",
    "st.s": "sts",
    "pick.i": "pick_i",
    "echo.l": "echo_l",
}

# argument shapes of the two-output ALU variants, keyed to their mod code
_ALU_SHAPES = {
    ("Low", "High", "ref"): 1,
    ("High", "Low", "ref"): 2,
    ("Low", "ref", "High", "pass"): 3,
    ("High", "ref", "Low", "pass"): 4,
    ("Low", "ref"): 5,
    ("High", "ref"): 6,
}


class _Builder:
    def __init__(self, stmt: Statement, index: int, labels: dict[str, int]):
        self.stmt = stmt
        self.index = index
        self.labels = labels

    def error(self, message, arg: Arg | None = None):
        return AsmError(message, self.stmt.line, arg.col if arg else self.stmt.col)

    def expect(self, n: int):
        if len(self.stmt.args) != n:
            raise self.error(f"{self.stmt.mnemonic} takes {n} argument(s), got {len(self.stmt.args)}")
        return self.stmt.args

    def ref(self, arg: Arg, limit: int = 31) -> int:
        if not isinstance(arg.value, (Numeric, Label, Chain)):
            raise self.error(f"expected an output reference, got {arg.text!r}", arg)
        try:
            d = resolve_reference(arg.value, self.index, self.labels)
        except AsmError as e:
            raise self.error(e.message, arg) from None
        if d > limit:
            hint = " (use echo.l for longer reach)" if limit == 31 else ""
            raise self.error(f"reference distance {d} exceeds {limit}{hint}", arg)
        return d

    def number(self, arg: Arg, lo: int, hi: int) -> int:
        if not isinstance(arg.value, int):
            raise self.error(f"expected a number, got {arg.text!r}", arg)
        if not lo <= arg.value <= hi:
            raise self.error(f"{arg.value} is outside {lo}..{hi}", arg)
        return arg.value

    def type_code(self, arg: Arg) -> int:
        if not isinstance(arg.value, str) or arg.value not in TAGS:
            raise self.error(f"expected a type (u8..i64), got {arg.text!r}", arg)
        return TAGS[arg.value].code

    def label_index(self, arg: Arg) -> int:
        try:
            return self.labels[arg.value]
        except KeyError:
            raise self.error(f"undefined label {arg.value!r}", arg) from None

    def trigger(self, arg: Arg) -> int:
        if isinstance(arg.value, int):
            trig = arg.value
        elif isinstance(arg.value, str):
            trig = self.label_index(arg) - self.index - 1
        else:
            raise self.error(f"expected a trigger label or count, got {arg.text!r}", arg)
        if not 0 <= trig <= 63:
            raise self.error(f"trigger distance {trig} is outside 0..63", arg)
        return trig

    def build(self) -> Instruction | int:
        mn = self.stmt.mnemonic
        args = self.stmt.args
        if mn == ".word":
            (a,) = self.expect(1)
            return self.number(a, 0, 0xFFFF)
        op = ALIASES.get(mn, mn)
        if op in SINGLE_OUTPUT_ALU:
            (a,) = self.expect(1)
            func, mod = SINGLE_OUTPUT_ALU[op]
            return Instruction("alu", ref=self.ref(a), func=func, mod=mod)
        if op in DUAL_OUTPUT_ALU:
            shape = []
            for a in args:
                if a.value is PASS:
                    shape.append("pass")
                elif a.value in ("Low", "High"):
                    shape.append(a.value)
                else:
                    shape.append("ref")
            mod = _ALU_SHAPES.get(tuple(shape))
            if mod is None:
                raise self.error(f"{mn} needs an output variant such as 'Low, =>N' or 'Low, High, =>N'")
            ref_arg = args[shape.index("ref")]
            return Instruction("alu", ref=self.ref(ref_arg), func=DUAL_OUTPUT_ALU[op], mod=mod)
        if op in ("trap", "nop", "st"):
            self.expect(0)
            return Instruction(op)
        if op in ("rsrv", "free"):
            if len(args) == 2:
                nbytes = self.number(args[0], 0, 15)
                if self.number(args[1], 16, 16):
                    return Instruction(op, bytes=nbytes, t=1)
            (a,) = self.expect(1)
            n = self.number(a, 0, 240)
            if 1 <= n <= 15:
                return Instruction(op, bytes=n)
            if n % 16 == 0 and 1 <= n // 16 <= 15:
                return Instruction(op, bytes=n // 16, t=1)
            if op == "free" and n == 0:
                return Instruction(op)
            raise self.error(f"{mn} cannot encode {n} bytes (1..15, or a multiple of 16 up to 240)", a)
        if op == "sts":
            (a,) = self.expect(1)
            return Instruction(op, idx=self.number(a, 0, 31))
        if op in ("call", "ret"):
            (a,) = self.expect(1)
            return Instruction(op, trig=self.trigger(a))
        if op == "saddr":
            a, b = self.expect(2)
            return Instruction(op, idx=self.number(a, 0, 31), siz=self.number(b, 0, 3))
        if op == "grow":
            (a,) = self.expect(1)
            return Instruction(op, imm=self.number(a, -128, 255) & 0xFF)
        if op == "ld_s":
            a, b = self.expect(2)
            return Instruction(op, type=self.type_code(a), idx=self.number(b, 0, 31))
        if op == "const":
            a, b = self.expect(2)
            return Instruction(op, type=self.type_code(a), imm=self.number(b, -128, 255) & 0xFF)
        if op == "fence":
            a, b = self.expect(2)
            return Instruction(op, succ=self.number(a, 0, 15), pred=self.number(b, 0, 15))
        if op == "jmp":
            a, b = self.expect(2)
            if isinstance(a.value, int):
                imm = a.value
            elif isinstance(a.value, str):
                imm = self.label_index(a) - self.index
            else:
                raise self.error(f"expected a jump target, got {a.text!r}", a)
            if not -64 <= imm <= 63:
                raise self.error(f"jump offset {imm} is outside -64..63", a)
            return Instruction(op, imm=imm, trig=self.trigger(b))
        if op == "pick":
            (a,) = self.expect(1)
            return Instruction(op, ref=self.ref(a))
        if op == "pick_i":
            a, b = self.expect(2)
            return Instruction(op, im=self.number(a, 0, 3), ref=self.ref(b))
        if op in ("ld", "cast"):
            a, b = self.expect(2)
            return Instruction(op, type=self.type_code(a), ref=self.ref(b))
        if op == "echo_l":
            (a,) = self.expect(1)
            return Instruction(op, ref=self.ref(a, limit=1023))
        if op in ("echo", "dup"):
            if len(args) == 3 and args[2].value is PASS:
                s = 1
            else:
                self.expect(2)
                s = 0
            return Instruction(op, ref=self.ref(args[0]), ref2=self.ref(args[1]), s=s)
        raise self.error(f"unknown mnemonic {mn!r}")


@dataclass
class AssembledProgram:
    words: list[int]
    instructions: list[Instruction | None]
    labels: dict[str, int]
    lines: list[int]
    source: list[str]
    entry: int = 0

    def __len__(self):
        return len(self.words)

    def to_bytes(self) -> bytes:
        return encoding.words_to_bytes(self.words)

    def container(self) -> bytes:
        return encoding.pack_container(self.words, self.entry)

    def listing(self) -> str:
        by_index: dict[int, list[str]] = {}
        for name, i in self.labels.items():
            by_index.setdefault(i, []).append(name)
        out = []
        for i, w in enumerate(self.words):
            names = "".join(f"{n}: " for n in by_index.get(i, ()))
            out.append(f"{2 * i:04x}  {w:04x}  {self.lines[i]:4d}  {names}{self.source[i]}")
        for n in by_index.get(len(self.words), ()):
            out.append(f"{2 * len(self.words):04x}        {'':4}  {n}:")
        return "\n".join(out) + "\n"


def assemble(source: str) -> AssembledProgram:
    prog = parse(source)
    words, instrs = [], []
    for i, stmt in enumerate(prog.statements):
        try:
            built = _Builder(stmt, i, prog.labels).build()
        except InvalidInstruction as e:
            raise AsmError(str(e), stmt.line, stmt.col) from None
        if isinstance(built, int):
            words.append(built)
            instrs.append(encoding.decode(built))
        else:
            words.append(encoding.encode(built))
            instrs.append(built)
    return AssembledProgram(
        words=words,
        instructions=instrs,
        labels=dict(prog.labels),
        lines=[s.line for s in prog.statements],
        source=[s.text for s in prog.statements],
    )


def assemble_line(text: str) -> int:
    """Assemble one statement with numeric arguments to its word."""
    program = assemble(text)
    if len(program) != 1:
        raise AsmError(f"expected exactly one statement, got {len(program)}")
    return program.words[0]


def disassemble(words) -> str:
    """Render a word sequence as source that re-assembles to the same words.

    Jump targets and jmp/call/ret trigger points inside the program (or just
    past its end) become synthesized ``L<index>`` labels.
    """
    words = list(words)
    n = len(words)
    decoded = [encoding.decode(w) for w in words]
    wanted: set[int] = set()
    for i, ins in enumerate(decoded):
        if ins is None:
            continue
        if ins.op == "jmp" and 0 <= i + ins.imm <= n:
            wanted.add(i + ins.imm)
        if ins.op in ("jmp", "call", "ret") and i + 1 + ins.trig <= n:
            wanted.add(i + 1 + ins.trig)

    def name(i):
        return f"L{i}"

    out = []
    for i, (w, ins) in enumerate(zip(words, decoded)):
        if i in wanted:
            out.append(f"{name(i)}:")
        if ins is None:
            out.append(f"    .word 0x{w:04x}")
            continue
        target = trigger = None
        if ins.op == "jmp" and i + ins.imm in wanted and 0 <= i + ins.imm <= n:
            target = name(i + ins.imm)
        if ins.op in ("jmp", "call", "ret") and i + 1 + ins.trig <= n:
            trigger = name(i + 1 + ins.trig)
        out.append("    " + encoding.format_instruction(ins, target=target, trigger=trigger))
    if n in wanted:
        out.append(f"{name(n)}:")
    return "\n".join(out) + "\n"
