"""Encoding-space accounting: how many code points each instruction occupies."""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass


class DescriptionError(ValueError):
    pass


@dataclass(frozen=True)
class FieldLayout:
    name: str
    fields: tuple[tuple[str, int], ...] = ()
    valid_points: int | None = None

    @property
    def bits(self) -> int:
        return sum(w for _, w in self.fields)


@dataclass(frozen=True)
class IsaDescription:
    name: str
    space_bits: int
    layouts: tuple[FieldLayout, ...]

    def __post_init__(self):
        seen = set()
        for lay in self.layouts:
            if lay.name in seen:
                raise DescriptionError(f"duplicate instruction {lay.name!r} in {self.name}")
            seen.add(lay.name)
            if lay.bits > self.space_bits:
                raise DescriptionError(f"{lay.name} has {lay.bits} field bits in a {self.space_bits}-bit space")
            if lay.valid_points is not None and not 0 <= lay.valid_points <= 2 ** lay.bits:
                raise DescriptionError(f"{lay.name}: valid={lay.valid_points} exceeds 2^{lay.bits}")


def code_points(layout: FieldLayout) -> int:
    if layout.valid_points is not None:
        return layout.valid_points
    return 2 ** layout.bits


@dataclass
class Report:
    isa: str
    space_bits: int
    rows: list[tuple[str, int, int]]   # (instruction, field bits, code points)
    total: int

    @property
    def fraction(self) -> float:
        return self.total / 2 ** self.space_bits


def analyze(desc: IsaDescription) -> Report:
    rows = [(lay.name, lay.bits, code_points(lay)) for lay in desc.layouts]
    return Report(desc.name, desc.space_bits, rows, sum(p for _, _, p in rows))


# -- the built-in Scry description --------------------------------------------

# field widths per instruction in the 16-bit encoding
SCRY_FIELDS = {
    "trap": (),
    "nop": (),
    "st": (),
    "rsrv": (("bytes", 4), ("t", 1)),
    "free": (("bytes", 4), ("t", 1)),
    "sts": (("idx", 5),),
    "call": (("trig", 6),),
    "ret": (("trig", 6),),
    "saddr": (("idx", 5), ("siz", 2)),
    "grow": (("imm", 8),),
    "ld.s": (("idx", 5), ("type", 4)),
    "const": (("imm", 8), ("type", 3)),
    "fence": (("succ", 4), ("pred", 4)),
    "jmp": (("trig", 6), ("imm", 7)),
    "pick": (("ref", 5),),
    "pick.i": (("ref", 5), ("im", 2)),
    "ld": (("ref", 5), ("type", 4)),
    "cast": (("ref", 5), ("type", 4)),
    "echo.l": (("ref", 10),),
    "alu": (("ref", 5), ("mod", 3), ("func", 3)),
    "echo": (("s", 1), ("ref", 5), ("ref2", 5)),
    "dup": (("s", 1), ("ref", 5), ("ref2", 5)),
}

ALU_DEFINED_COMBINATIONS = 45
DEFINED_TYPES = 8

CONVENTIONS = {
    "naive": "every field value counts, including undefined ALU func/mod pairs",
    "valid": "ALU counts only its defined func/mod pairs",
    "decodable": "only words that decode: defined ALU pairs, defined types, no zero rsrv",
}


def scry_description(convention: str = "valid") -> IsaDescription:
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown convention {convention!r}; choose from {', '.join(CONVENTIONS)}")
    layouts = []
    for name, fields in SCRY_FIELDS.items():
        valid = None
        if name == "alu" and convention != "naive":
            valid = ALU_DEFINED_COMBINATIONS * 2 ** 5
        if convention == "decodable":
            if name in ("ld.s", "ld", "cast"):
                valid = DEFINED_TYPES * 2 ** 5
            elif name == "rsrv":
                valid = 2 ** 5 - 1
        layouts.append(FieldLayout(name, fields, valid))
    return IsaDescription(f"scry-{convention}", 16, tuple(layouts))


# -- description files and reports ------------------------------------------

_VALID_RE = re.compile(r"valid=(\d+)$")


def parse_description(text: str) -> IsaDescription:
    """Read ``isa <name> <bits>`` then ``instr <name> <w>... [valid=<n>]`` lines."""
    header = None
    layouts = []
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].split()
        if not line:
            continue
        kind, *rest = line
        try:
            if kind == "isa":
                if header is not None or len(rest) != 2:
                    raise DescriptionError("expected a single 'isa <name> <space_bits>'")
                header = (rest[0], int(rest[1]))
            elif kind == "instr":
                if header is None:
                    raise DescriptionError("'instr' before 'isa'")
                if not rest:
                    raise DescriptionError("instr needs a name")
                name, *widths = rest
                valid = None
                if widths and (m := _VALID_RE.match(widths[-1])):
                    valid = int(m.group(1))
                    widths = widths[:-1]
                fields = tuple((f"f{k}", int(w)) for k, w in enumerate(widths))
                if any(w <= 0 for _, w in fields):
                    raise DescriptionError("field widths must be positive")
                layouts.append(FieldLayout(name, fields, valid))
            else:
                raise DescriptionError(f"unknown directive {kind!r}")
        except ValueError as e:
            raise DescriptionError(f"line {n}: {e}") from None
    if header is None:
        raise DescriptionError("missing 'isa' line")
    return IsaDescription(header[0], header[1], tuple(layouts))


def format_description(desc: IsaDescription) -> str:
    out = [f"isa {desc.name} {desc.space_bits}"]
    for lay in desc.layouts:
        parts = ["instr", lay.name, *(str(w) for _, w in lay.fields)]
        if lay.valid_points is not None:
            parts.append(f"valid={lay.valid_points}")
        out.append(" ".join(parts))
    return "\n".join(out) + "\n"


def format_report(report: Report) -> str:
    width = max([len(name) for name, _, _ in report.rows] + [11])
    lines = [f"{report.isa} ({report.space_bits}-bit encoding space)",
             f"{'instruction':<{width}}  {'bits':>4}  {'code points':>12}"]
    for name, bits, points in report.rows:
        lines.append(f"{name:<{width}}  {bits:>4}  {points:>12}")
    lines.append(f"{'total':<{width}}  {'':>4}  {report.total:>12}")
    lines.append(f"fraction of 2^{report.space_bits}: {100 * report.fraction:.1f}%")
    return "\n".join(lines) + "\n"


def report_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["isa", "instruction", "bits", "code_points"])
    for r in reports:
        for name, bits, points in r.rows:
            w.writerow([r.isa, name, bits, points])
        w.writerow([r.isa, "TOTAL", "", r.total])
        w.writerow([r.isa, "FRACTION", "", f"{r.fraction:.4f}"])
    return buf.getvalue()
