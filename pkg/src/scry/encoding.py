"""Bit-exact 16-bit encoding of Scry instructions and the binary container."""

from __future__ import annotations

import struct

from .isa import (
    INSTRUCTION_FIELDS,
    AluOutputVariant,
    Instruction,
    InvalidInstruction,
    alu_variant,
)


class EncodingError(ValueError):
    pass


class ContainerError(ValueError):
    pass


def _bit(*positions: int) -> int:
    n = 0
    for p in positions:
        n |= 1 << p
    return n


# mnemonic -> (fixed opcode bits, [(field, hi, lo), ...]); bit 15 is the leftmost box
LAYOUT: dict[str, tuple[int, tuple[tuple[str, int, int], ...]]] = {
    "trap": (0x0000, ()),
    "nop": (_bit(14), ()),
    "st": (_bit(15), ()),
    "rsrv": (0, (("bytes", 13, 10), ("t", 9, 9))),
    "free": (_bit(8), (("bytes", 13, 10), ("t", 9, 9))),
    "sts": (_bit(7), (("idx", 14, 10),)),
    "call": (_bit(8, 7), (("trig", 15, 10),)),
    "ret": (_bit(9, 8, 7), (("trig", 15, 10),)),
    "saddr": (_bit(6), (("idx", 14, 10), ("siz", 9, 8))),
    "grow": (_bit(7, 6), (("imm", 15, 8),)),
    "ld_s": (_bit(5), (("idx", 14, 10), ("type", 9, 6))),
    "const": (_bit(4), (("imm", 15, 8), ("type", 7, 5))),
    "fence": (_bit(3), (("succ", 15, 12), ("pred", 11, 8))),
    "jmp": (_bit(2), (("trig", 15, 10), ("imm", 9, 3))),
    "pick": (_bit(1), (("ref", 14, 10),)),
    "pick_i": (_bit(15, 1), (("ref", 14, 10), ("im", 9, 8))),
    "ld": (_bit(5, 1), (("ref", 14, 10), ("type", 9, 6))),
    "cast": (_bit(15, 5, 1), (("ref", 14, 10), ("type", 9, 6))),
    "echo_l": (_bit(4, 1), (("ref", 15, 6),)),
    "alu": (_bit(0), (("ref", 14, 10), ("mod", 9, 7), ("func", 6, 4))),
    "echo": (_bit(3, 0), (("s", 15, 15), ("ref", 14, 10), ("ref2", 9, 5))),
    "dup": (_bit(4, 3, 0), (("s", 15, 15), ("ref", 14, 10), ("ref2", 9, 5))),
}


def _field_mask(hi: int, lo: int) -> int:
    return ((1 << (hi - lo + 1)) - 1) << lo


def fixed_mask(op: str) -> int:
    """Bits of ``op``'s word not covered by a field (opcode and unused bits)."""
    m = 0xFFFF
    for _, hi, lo in LAYOUT[op][1]:
        m &= ~_field_mask(hi, lo)
    return m


def encode(instr: Instruction) -> int:
    fixed, placement = LAYOUT[instr.op]
    widths = {name: w for name, w, _ in INSTRUCTION_FIELDS[instr.op]}
    word = fixed
    for name, hi, lo in placement:
        width = hi - lo + 1
        if widths[name] != width:
            raise EncodingError(f"{instr.op}.{name}: layout width {width} != {widths[name]}")
        v = getattr(instr, name)
        if not -(1 << width) < v < (1 << width):
            raise EncodingError(f"{instr.op}.{name}={v} does not fit {width} bits")
        word |= (v & ((1 << width) - 1)) << lo
    return word


def _extract(op: str, w: int) -> Instruction | None:
    fixed, placement = LAYOUT[op]
    if w & fixed_mask(op) != fixed:
        return None
    values = {}
    signed = {name: s for name, _, s in INSTRUCTION_FIELDS[op]}
    for name, hi, lo in placement:
        width = hi - lo + 1
        v = (w >> lo) & ((1 << width) - 1)
        if signed[name] and v >> (width - 1):
            v -= 1 << width
        values[name] = v
    try:
        return Instruction(op, **values)
    except InvalidInstruction:
        return None


def decode(w: int) -> Instruction | None:
    """Decode one word; None means the word is reserved or malformed."""
    if not 0 <= w <= 0xFFFF:
        raise ValueError(f"not a 16-bit word: {w}")
    group = w & 0b11
    if group == 0b11:
        return None
    if group == 0b01:
        if w & _bit(2):
            return None
        if not w & _bit(3):
            op = "alu"
        else:
            op = "dup" if w & _bit(4) else "echo"
    elif group == 0b10:
        if w & _bit(2):
            return None
        if w & _bit(5):
            op = "cast" if w & _bit(15) else "ld"
        elif w & _bit(4):
            op = "echo_l"
        elif not w & _bit(7, 6, 3):
            op = "pick_i" if w & _bit(15) else "pick"
        else:
            return None
    else:
        if w & _bit(2):
            op = "jmp"
        elif w & _bit(3):
            op = "fence"
        elif w & _bit(4):
            op = "const"
        elif w & _bit(5):
            op = "ld_s"
        elif w & _bit(6):
            op = "grow" if w & _bit(7) else "saddr"
        elif w & _bit(7):
            if not w & _bit(8):
                op = "sts"
            else:
                op = "ret" if w & _bit(9) else "call"
        elif w & _bit(8):
            op = "free"
        elif w == 0x0000:
            op = "trap"
        elif w == 0x4000:
            op = "nop"
        elif w == 0x8000:
            op = "st"
        else:
            op = "rsrv"
    return _extract(op, w)


# -- text --------------------------------------------------------------------

def format_ref(n: int) -> str:
    return f"=>{n}"


def format_instruction(instr: Instruction, target=None, trigger=None) -> str:
    """Render ``instr`` in assembly syntax.

    ``target`` and ``trigger`` optionally replace the numeric jmp target offset
    and trigger count (jmp/call/ret) with label names.
    """
    op = instr.op
    mn = instr.mnemonic
    trig = trigger if trigger is not None else str(instr.trig)
    if op in ("trap", "nop", "st"):
        return mn
    if op in ("rsrv", "free"):
        return f"{mn} {instr.bytes}, 16" if instr.t else f"{mn} {instr.bytes}"
    if op == "sts":
        return f"sts {instr.idx}"
    if op in ("call", "ret"):
        return f"{mn} {trig}"
    if op == "saddr":
        return f"saddr {instr.idx}, {instr.siz}"
    if op == "grow":
        return f"grow {instr.imm}"
    if op == "ld_s":
        return f"ld.s {instr.tag}, {instr.idx}"
    if op == "const":
        tag = instr.tag
        n = instr.imm - 256 if tag.signed and instr.imm >= 128 else instr.imm
        return f"const {tag}, {n}"
    if op == "fence":
        return f"fence {instr.succ}, {instr.pred}"
    if op == "jmp":
        tgt = target if target is not None else str(instr.imm)
        return f"jmp {tgt}, {trig}"
    if op == "pick":
        return f"pick {format_ref(instr.ref)}"
    if op == "pick_i":
        return f"pick.i {instr.im}, {format_ref(instr.ref)}"
    if op in ("ld", "cast"):
        return f"{mn} {instr.tag}, {format_ref(instr.ref)}"
    if op == "echo_l":
        return f"echo.l {format_ref(instr.ref)}"
    if op == "alu":
        r = format_ref(instr.ref)
        variant = alu_variant(instr.mod)
        args = {
            AluOutputVariant.SingleLow: r,
            AluOutputVariant.LowHighSame: f"Low, High, {r}",
            AluOutputVariant.HighLowSame: f"High, Low, {r}",
            AluOutputVariant.LowRefHighNext: f"Low, {r}, High, =>",
            AluOutputVariant.HighRefLowNext: f"High, {r}, Low, =>",
            AluOutputVariant.LowRefHighDrop: f"Low, {r}",
            AluOutputVariant.HighRefLowDrop: f"High, {r}",
        }[variant]
        return f"{mn} {args}"
    if op in ("echo", "dup"):
        text = f"{mn} {format_ref(instr.ref)}, {format_ref(instr.ref2)}"
        return text + ", =>" if instr.s else text
    raise AssertionError(op)


def disassemble_word(w: int) -> str:
    instr = decode(w)
    if instr is None:
        return f".word 0x{w:04x}"
    return format_instruction(instr)


# -- byte streams and the container ----------------------------------------

MAGIC = b"SCRY"
VERSION = 1
_HEADER = struct.Struct("<4sBI")


def words_to_bytes(words) -> bytes:
    return b"".join(struct.pack("<H", w) for w in words)


def bytes_to_words(data: bytes) -> list[int]:
    if len(data) % 2:
        raise ContainerError("code length is not a whole number of 16-bit words")
    return [w for (w,) in struct.iter_unpack("<H", data)]


def pack_container(words, entry: int = 0) -> bytes:
    return _HEADER.pack(MAGIC, VERSION, entry) + words_to_bytes(words)


def unpack_container(data: bytes, raw: bool = False) -> tuple[list[int], int]:
    """Return ``(words, entry)`` from a container, or from raw words if ``raw``."""
    if raw:
        return bytes_to_words(data), 0
    if len(data) < _HEADER.size or data[:4] != MAGIC:
        raise ContainerError("missing SCRY magic")
    _, version, entry = _HEADER.unpack_from(data)
    if version != VERSION:
        raise ContainerError(f"unsupported container version {version}")
    words = bytes_to_words(data[_HEADER.size:])
    if words and entry >= len(words):
        raise ContainerError(f"entry {entry} is outside the {len(words)}-word program")
    return words, entry


