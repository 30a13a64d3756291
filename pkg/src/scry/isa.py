"""Type tags, tagged values, the instruction model and pure ALU semantics."""

from __future__ import annotations

import enum
from dataclasses import dataclass, fields as dc_fields


class InvalidInstruction(ValueError):
    pass


@dataclass(frozen=True, order=True)
class TypeTag:
    signed: bool
    width_log2: int

    def __post_init__(self):
        if not 0 <= self.width_log2 <= 3:
            raise ValueError(f"width_log2 out of range: {self.width_log2}")

    @property
    def nbytes(self) -> int:
        return 1 << self.width_log2

    @property
    def bits(self) -> int:
        return 8 << self.width_log2

    @property
    def mask(self) -> int:
        return (1 << self.bits) - 1

    @property
    def code(self) -> int:
        # bit2 = signedness, bits1-0 = log2 of the byte width
        return (int(self.signed) << 2) | self.width_log2

    @property
    def name(self) -> str:
        return f"{'i' if self.signed else 'u'}{self.bits}"

    @property
    def min(self) -> int:
        return -(1 << (self.bits - 1)) if self.signed else 0

    @property
    def max(self) -> int:
        return (1 << (self.bits - 1)) - 1 if self.signed else self.mask

    @classmethod
    def from_code(cls, code: int) -> TypeTag:
        if not 0 <= code <= 7:
            raise ValueError(f"no type tag with code {code}")
        return cls(bool(code & 4), code & 3)

    @classmethod
    def parse(cls, name: str) -> TypeTag:
        try:
            return TAGS[name]
        except KeyError:
            raise ValueError(f"unknown type {name!r}") from None

    def __str__(self):
        return self.name


TAGS = {t.name: t for t in (TypeTag.from_code(c) for c in range(8))}
U8, U16, U32, U64 = TAGS["u8"], TAGS["u16"], TAGS["u32"], TAGS["u64"]
I8, I16, I32, I64 = TAGS["i8"], TAGS["i16"], TAGS["i32"], TAGS["i64"]


def unsigned_tag(nbits: int) -> TypeTag:
    return TAGS[f"u{nbits}"]


class NaRCode(enum.IntEnum):
    TYPE_MISMATCH = 1
    DIV_BY_ZERO = 2
    BAD_ADDRESS = 3
    MISSING_OPERAND = 4
    PROPAGATED = 5

    @property
    def label(self) -> str:
        return self.name.lower().replace("_", "-")


@dataclass(frozen=True)
class Value:
    """An integer operand. ``bits`` holds the low ``tag.bits`` bits, zero above."""

    bits: int
    tag: TypeTag

    def __post_init__(self):
        if not 0 <= self.bits <= self.tag.mask:
            raise ValueError(f"bits 0x{self.bits:x} do not fit {self.tag}")

    @classmethod
    def of(cls, n: int, tag: TypeTag) -> Value:
        """Wrap an arbitrary integer into ``tag``'s width."""
        return cls(n & tag.mask, tag)

    @property
    def int(self) -> int:
        if self.tag.signed and self.bits >> (self.tag.bits - 1):
            return self.bits - (1 << self.tag.bits)
        return self.bits

    def __str__(self):
        return f"{self.tag}:{self.int}"


@dataclass(frozen=True)
class NaR:
    payload: NaRCode

    def __str__(self):
        return f"NaR({NaRCode(self.payload).label})"


TaggedValue = Value | NaR


def parse_value(text: str) -> TaggedValue:
    """Parse ``tag:value`` (decimal or 0x-hex, sign allowed) or ``NaR(code)``."""
    text = text.strip()
    if text.startswith("NaR(") and text.endswith(")"):
        name = text[4:-1].upper().replace("-", "_")
        return NaR(NaRCode[name])
    tag, sep, num = text.partition(":")
    if not sep:
        raise ValueError(f"expected tag:value, got {text!r}")
    tag = TypeTag.parse(tag)
    n = int(num, 0)
    # signed tags also accept their raw unsigned bit pattern
    if not tag.min <= n <= tag.mask:
        raise ValueError(f"{n} does not fit {tag}")
    return Value.of(n, tag)


# -- instruction model ------------------------------------------------------

# per mnemonic: ordered (field, width, signed) exactly as housed in the encoding
INSTRUCTION_FIELDS: dict[str, tuple[tuple[str, int, bool], ...]] = {
    "trap": (),
    "nop": (),
    "st": (),
    "rsrv": (("bytes", 4, False), ("t", 1, False)),
    "free": (("bytes", 4, False), ("t", 1, False)),
    "sts": (("idx", 5, False),),
    "call": (("trig", 6, False),),
    "ret": (("trig", 6, False),),
    "saddr": (("idx", 5, False), ("siz", 2, False)),
    "grow": (("imm", 8, False),),
    "ld_s": (("idx", 5, False), ("type", 4, False)),
    "const": (("imm", 8, False), ("type", 3, False)),
    "fence": (("succ", 4, False), ("pred", 4, False)),
    "jmp": (("trig", 6, False), ("imm", 7, True)),
    "pick": (("ref", 5, False),),
    "pick_i": (("ref", 5, False), ("im", 2, False)),
    "ld": (("ref", 5, False), ("type", 4, False)),
    "cast": (("ref", 5, False), ("type", 4, False)),
    "echo_l": (("ref", 10, False),),
    "alu": (("ref", 5, False), ("mod", 3, False), ("func", 3, False)),
    "echo": (("s", 1, False), ("ref", 5, False), ("ref2", 5, False)),
    "dup": (("s", 1, False), ("ref", 5, False), ("ref2", 5, False)),
}

MNEMONICS = tuple(INSTRUCTION_FIELDS)


@dataclass(frozen=True)
class Instruction:
    """One decoded instruction. Fields a mnemonic does not house stay 0."""

    op: str
    ref: int = 0
    ref2: int = 0
    trig: int = 0
    imm: int = 0
    type: int = 0
    mod: int = 0
    func: int = 0
    idx: int = 0
    bytes: int = 0
    t: int = 0
    siz: int = 0
    im: int = 0
    s: int = 0
    succ: int = 0
    pred: int = 0

    def __post_init__(self):
        try:
            layout = INSTRUCTION_FIELDS[self.op]
        except KeyError:
            raise InvalidInstruction(f"unknown mnemonic {self.op!r}") from None
        housed = {name for name, _, _ in layout}
        for f in dc_fields(self):
            if f.name != "op" and f.name not in housed and getattr(self, f.name):
                raise InvalidInstruction(f"{self.op} has no field {f.name}")
        for name, width, signed in layout:
            v = getattr(self, name)
            lo, hi = (-(1 << (width - 1)), (1 << (width - 1)) - 1) if signed else (0, (1 << width) - 1)
            if not lo <= v <= hi:
                raise InvalidInstruction(f"{self.op}.{name}={v} does not fit {width} bits")
        if self.op in ("ld_s", "ld", "cast") and self.type > 7:
            raise InvalidInstruction(f"type code {self.type} is reserved")
        if self.op == "alu" and (self.func, self.mod) not in ALU_OPS:
            raise InvalidInstruction(f"undefined alu func={self.func:03b} mod={self.mod:03b}")
        if self.op == "rsrv" and self.bytes == 0 and self.t == 0:
            raise InvalidInstruction("rsrv of zero bytes is not encodable")

    @property
    def fields(self) -> dict[str, int]:
        return {name: getattr(self, name) for name, _, _ in INSTRUCTION_FIELDS[self.op]}

    @property
    def tag(self) -> TypeTag:
        return TypeTag.from_code(self.type)

    @property
    def mnemonic(self) -> str:
        if self.op == "alu":
            return ALU_OPS[self.func, self.mod]
        return MNEMONIC_TEXT.get(self.op, self.op)


MNEMONIC_TEXT = {"ld_s": "ld.s", "pick_i": "pick.i", "echo_l": "echo.l"}


# -- ALU ----------------------------------------------------------------------

class AluOutputVariant(enum.Enum):
    SingleLow = 0
    LowHighSame = 1
    HighLowSame = 2
    LowRefHighNext = 3
    HighRefLowNext = 4
    LowRefHighDrop = 5
    HighRefLowDrop = 6


# (func, mod) -> mnemonic; mod 001-110 select an output variant of a two-output op
_ALU_NAMES = {
    0: ("eq", "add.s", "add"),
    1: ("and", "sub.s", "sub"),
    2: ("lt", "gt", "shl"),
    3: ("or", "xor", "shr"),
    4: ("isnar", None, "mul"),
    5: (None, None, "div"),
}

ALU_OPS: dict[tuple[int, int], str] = {}
for _func, (_m0, _m7, _dual) in _ALU_NAMES.items():
    if _m0:
        ALU_OPS[_func, 0] = _m0
    if _m7:
        ALU_OPS[_func, 7] = _m7
    for _mod in range(1, 7):
        ALU_OPS[_func, _mod] = _dual

SINGLE_OUTPUT_ALU = {name: key for key, name in ALU_OPS.items() if key[1] in (0, 7)}
DUAL_OUTPUT_ALU = {_ALU_NAMES[f][2]: f for f in _ALU_NAMES}


def alu_variant(mod: int) -> AluOutputVariant:
    return AluOutputVariant.SingleLow if mod in (0, 7) else AluOutputVariant(mod)


def implicit_operand(name: str, tag: TypeTag, xlen_bytes: int) -> Value:
    if name in ("eq", "lt", "gt"):
        n = 0
    elif name in ("or", "xor"):
        n = tag.mask
    elif name in ("mul", "div"):
        n = xlen_bytes
    else:
        # add, add.s, sub, sub.s, and, shl, shr
        n = 1
    return Value.of(n, tag)


def _clamp(n: int, tag: TypeTag) -> Value:
    return Value.of(max(tag.min, min(tag.max, n)), tag)


def _bool(flag: bool) -> Value:
    return Value(int(flag), U8)


def alu_apply(func: int, mod: int, a: TaggedValue, b: TaggedValue | None = None,
              xlen_bytes: int = 8) -> tuple[TaggedValue, TaggedValue | None]:
    """Apply the ALU operation selected by ``(func, mod)``.

    Returns ``(low, high)``; ``high`` is None for single-output operations.
    A missing ``b`` is replaced by the operation's implicit operand, carrying
    ``a``'s tag.
    """
    try:
        name = ALU_OPS[func, mod]
    except KeyError:
        raise InvalidInstruction(f"undefined alu func={func:03b} mod={mod:03b}") from None
    if xlen_bytes not in (2, 4, 8):
        raise ValueError(f"xlen_bytes must be 2, 4 or 8, not {xlen_bytes}")

    if name == "isnar":
        return _bool(isinstance(a, NaR) or isinstance(b, NaR)), None

    dual = mod not in (0, 7)
    if isinstance(a, NaR) or isinstance(b, NaR):
        nar = NaR(NaRCode.PROPAGATED)
        return nar, (nar if dual else None)
    if b is None:
        b = implicit_operand(name, a.tag, xlen_bytes)
    if a.tag != b.tag:
        nar = NaR(NaRCode.TYPE_MISMATCH)
        return nar, (nar if dual else None)

    tag = a.tag
    w = tag.bits
    x, y = (a.int, b.int)      # numeric values
    xu, yu = a.bits, b.bits    # raw bit patterns

    if name == "eq":
        return _bool(xu == yu), None
    if name == "lt":
        return _bool(x < y), None
    if name == "gt":
        return _bool(x > y), None
    if name == "and":
        return Value(xu & yu, tag), None
    if name == "or":
        return Value(xu | yu, tag), None
    if name == "xor":
        return Value(xu ^ yu, tag), None
    if name == "add.s":
        return _clamp(x + y, tag), None
    if name == "sub.s":
        return _clamp(x - y, tag), None
    if name == "add":
        total = xu + yu
        return Value.of(total, tag), Value(total >> w, U8)
    if name == "sub":
        return Value.of(xu - yu, tag), Value(int(xu < yu), U8)
    if name == "shl":
        amount = yu % w
        wide = xu << amount
        return Value.of(wide, tag), Value.of(wide >> w, tag)
    if name == "shr":
        amount = yu % w
        out = (x >> amount) if tag.signed else (xu >> amount)
        return Value.of(out, tag), Value(xu & ((1 << amount) - 1), tag)
    if name == "mul":
        product = x * y
        return Value.of(product, tag), Value.of(product >> w, tag)
    if name == "div":
        if y == 0:
            nar = NaR(NaRCode.DIV_BY_ZERO)
            return nar, nar
        if tag.signed:
            q = abs(x) // abs(y)
            if (x < 0) != (y < 0):
                q = -q
            if q > tag.max:
                # MIN / -1 overflows the tag
                nar = NaR(NaRCode.DIV_BY_ZERO)
                return nar, nar
            r = x - q * y
        else:
            q, r = divmod(xu, yu)
        return Value.of(q, tag), Value.of(r, tag)
    raise AssertionError(name)


def cast_value(v: TaggedValue, target: TypeTag) -> TaggedValue:
    if isinstance(v, NaR):
        return v
    if target.bits >= v.tag.bits:
        # widening extends per the source's signedness
        return Value.of(v.int, target)
    return Value(v.bits & target.mask, target)


def normalize_address(v: TaggedValue, anchor: int, xlen_bits: int) -> int | None:
    """Turn an operand into an address, or None when ``v`` is a NaR.

    Unsigned operands are absolute; signed ones are relative to ``anchor``.
    """
    if isinstance(v, NaR):
        return None
    mask = (1 << xlen_bits) - 1
    if v.tag.signed:
        return (anchor + v.int) & mask
    return v.bits & mask
