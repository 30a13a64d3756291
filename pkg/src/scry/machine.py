"""Functional simulator: forward-temporal operands, delayed transfers, tagged memory."""

from __future__ import annotations

from dataclasses import dataclass, field

from . import encoding
from .isa import (
    AluOutputVariant,
    Instruction,
    NaR,
    NaRCode,
    TaggedValue,
    TypeTag,
    Value,
    alu_apply,
    alu_variant,
    cast_value,
    normalize_address,
    unsigned_tag,
)

MAX_OPERANDS = 4

# most operands each instruction consumes; later arrivals are dropped
ARITY = {
    "nop": 4, "alu": 2, "echo": 4, "echo_l": 4, "dup": 4, "pick": 3, "pick_i": 4,
    "const": 0, "grow": 1, "ld": 2, "st": 3, "cast": 1, "jmp": 1, "call": 1,
    "ret": 0, "rsrv": 0, "free": 0, "ld_s": 0, "sts": 1, "saddr": 0, "fence": 0,
    "trap": 0,
}


class Trap(Exception):
    def __init__(self, cause: str, detail: str = ""):
        self.cause = cause
        self.detail = detail
        super().__init__(f"{cause}: {detail}" if detail else cause)


@dataclass
class InFlightOperand:
    value: TaggedValue
    remaining: int
    seq: int


@dataclass
class PendingTransfer:
    kind: str           # "jump", "call" or "return"
    target: int | None  # instruction index for jump and call
    countdown: int


@dataclass
class Activation:
    resume_index: int | None
    frame_base: int
    frame_size: int = 0
    operands: list[InFlightOperand] = field(default_factory=list)
    transfers: list[PendingTransfer] = field(default_factory=list)


@dataclass
class MachineConfig:
    xlen_bits: int = 64
    memory_size: int = 1 << 20
    stack_top: int | None = None    # default: top of the addressable memory
    stack_size: int = 1 << 16
    code_base: int = 0x8000
    step_budget: int = 1_000_000
    trace: bool = False

    def __post_init__(self):
        if self.xlen_bits not in (16, 32, 64):
            raise ValueError(f"xlen must be 16, 32 or 64, not {self.xlen_bits}")
        if self.stack_top is None:
            self.stack_top = min(self.memory_size, 1 << self.xlen_bits)
        if self.stack_top - self.stack_size < 0 or self.stack_top > self.memory_size:
            raise ValueError("stack region does not fit in memory")


@dataclass
class Outcome:
    status: str                       # "returned", "trapped" or "timeout"
    values: list[TaggedValue] = field(default_factory=list)
    cause: str | None = None
    step: int = 0
    index: int | None = None

    def __str__(self):
        if self.status == "returned":
            return " ".join(str(v) for v in self.values)
        if self.status == "trapped":
            return f"trapped({self.cause}) at step {self.step}, index {self.index}"
        return f"timeout after {self.step} steps"


@dataclass
class OperandStats:
    produced: int = 0
    consumed: int = 0
    dropped: int = 0
    discarded: int = 0
    alive: int = 0

    def balanced(self) -> bool:
        return self.produced == self.consumed + self.dropped + self.discarded + self.alive


def _fmt(v: TaggedValue) -> str:
    return str(v)


class Machine:
    """One program's execution state.

    ``program`` is a sequence of words or of already decoded instructions
    (None marks an undecodable word).
    """

    def __init__(self, program, config: MachineConfig | None = None):
        self.config = config or MachineConfig()
        items = list(program)
        if items and isinstance(items[0], int):
            self.words = items
            self.program = [encoding.decode(w) for w in items]
        else:
            self.program = items
            self.words = [0 if ins is None else encoding.encode(ins) for ins in items]
        self.memory = bytearray(self.config.memory_size)
        code = encoding.words_to_bytes(self.words)
        if self.config.code_base + len(code) <= len(self.memory):
            self.memory[self.config.code_base:self.config.code_base + len(code)] = code
        self.stack_top = self.config.stack_top
        self.stack_limit = self.config.stack_top - self.config.stack_size
        self.activations: list[Activation] = []
        self.index = 0
        self.steps = 0
        self.seq = 0
        self.outcome: Outcome | None = None
        self.trace: list[str] = []
        self.stats = OperandStats()

    # -- setup -----------------------------------------------------------

    def load(self, address: int, data: bytes):
        if address < 0 or address + len(data) > len(self.memory):
            raise ValueError(f"{len(data)} bytes at 0x{address:x} do not fit in memory")
        self.memory[address:address + len(data)] = data

    def read(self, address: int, n: int) -> bytes:
        return bytes(self.memory[address:address + n])

    def start(self, entry: int = 0, args=()):
        args = list(args)
        if len(args) > MAX_OPERANDS:
            raise ValueError(f"at most {MAX_OPERANDS} arguments, got {len(args)}")
        root = Activation(resume_index=None, frame_base=self.stack_top)
        for v in args:
            root.operands.append(self._new_operand(v, 0))
        self.activations = [root]
        self.index = entry
        self.steps = 0
        self.outcome = None

    @property
    def current(self) -> Activation:
        return self.activations[-1]

    @property
    def xlen_bytes(self) -> int:
        return self.config.xlen_bits // 8

    def address_of(self, index: int) -> int:
        return self.config.code_base + 2 * index

    def _new_operand(self, value: TaggedValue, remaining: int) -> InFlightOperand:
        self.seq += 1
        self.stats.produced += 1
        return InFlightOperand(value, remaining, self.seq)

    # -- memory ----------------------------------------------------------

    def _in_memory(self, address: int, n: int) -> bool:
        return 0 <= address and address + n <= len(self.memory)

    def _load(self, address: int, tag: TypeTag) -> TaggedValue:
        if not self._in_memory(address, tag.nbytes):
            return NaR(NaRCode.BAD_ADDRESS)
        data = self.memory[address:address + tag.nbytes]
        return Value(int.from_bytes(data, "little"), tag)

    def _store(self, address: int, v: Value):
        if not self._in_memory(address, v.tag.nbytes):
            raise Trap("bad-address", f"store of {v.tag} at 0x{address:x}")
        self.memory[address:address + v.tag.nbytes] = v.bits.to_bytes(v.tag.nbytes, "little")

    def _effective_address(self, base: TaggedValue, disp: TaggedValue | None,
                           scale: int) -> int | None:
        addr = normalize_address(base, self.address_of(self.index), self.config.xlen_bits)
        if addr is None:
            return None
        if disp is not None:
            if isinstance(disp, NaR):
                return None
            # signed displacements are byte offsets, unsigned ones are indices
            addr += disp.int if disp.tag.signed else disp.bits * scale
            addr &= (1 << self.config.xlen_bits) - 1
        return addr

    # -- execution -------------------------------------------------------

    def step(self):
        if self.outcome is not None:
            raise RuntimeError("machine has halted")
        act = self.current
        i = self.index
        arriving = sorted((op for op in act.operands if op.remaining == 0), key=lambda op: op.seq)
        act.operands = [op for op in act.operands if op.remaining != 0]
        ins = self.program[i] if 0 <= i < len(self.program) else None
        arity = ARITY[ins.op] if ins is not None else 0
        taken = arriving[:min(MAX_OPERANDS, arity)]
        dropped = arriving[len(taken):]
        self.stats.consumed += len(taken)
        self.stats.dropped += len(dropped)
        inputs = [op.value for op in taken]
        outputs: list[tuple[TaggedValue, int]] = []
        notes: list[str] = []
        if dropped:
            notes.append("dropped=[" + ",".join(_fmt(op.value) for op in dropped) + "]")

        try:
            if not 0 <= i < len(self.program):
                raise Trap("bad-fetch", f"index {i} outside the {len(self.program)}-instruction program")
            if ins is None:
                raise Trap("invalid-instruction", f"word 0x{self.words[i]:04x}")
            self._execute(ins, inputs, outputs, notes)
        except Trap as trap:
            notes.append(f"trap={trap.cause}")
            self._record(i, ins, inputs, [], notes)
            self.steps += 1
            self._halt(Outcome("trapped", cause=trap.cause, step=self.steps - 1, index=i))
            return

        for op in act.operands:
            op.remaining -= 1
        new = [self._new_operand(v, k) for v, k in outputs]
        act.operands.extend(new)

        firing = [t for t in act.transfers if t.countdown == 0]
        act.transfers = [t for t in act.transfers if t.countdown != 0]
        for t in act.transfers:
            t.countdown -= 1
        for t in firing:
            notes.append(f"fire={t.kind}" + (f"->{t.target}" if t.target is not None else ""))
        self._record(i, ins, inputs, outputs, notes)
        self.steps += 1

        if len(firing) > 1:
            self._halt(Outcome("trapped", cause="machine-check", step=self.steps - 1, index=i))
        elif firing:
            self._transfer(firing[0], i)
        else:
            self.index = i + 1

    def _record(self, i, ins, inputs, outputs, notes):
        if not self.config.trace:
            return
        mn = ins.mnemonic if ins is not None else "?"
        ins_text = ",".join(_fmt(v) for v in inputs)
        outs_text = ",".join(f"({_fmt(v)})->+{k}" for v, k in outputs)
        note = ";".join(notes) if notes else "-"
        self.trace.append(f"step={self.steps} idx={i} {mn} in=[{ins_text}] out=[{outs_text}] note={note}")

    def _halt(self, outcome: Outcome):
        self.outcome = outcome
        self.stats.alive = sum(len(a.operands) for a in self.activations)

    def _take_arrivals(self, act: Activation) -> list[InFlightOperand]:
        """Remove the operands due at the next instruction; keep the first four."""
        due = sorted((op for op in act.operands if op.remaining == 0), key=lambda op: op.seq)
        act.operands = [op for op in act.operands if op.remaining != 0]
        self.stats.dropped += len(due[MAX_OPERANDS:])
        return due[:MAX_OPERANDS]

    def _transfer(self, t: PendingTransfer, i: int):
        act = self.current
        if t.kind == "jump":
            self.index = t.target
        elif t.kind == "call":
            args = self._take_arrivals(act)
            callee = Activation(resume_index=i + 1, frame_base=self.stack_top)
            callee.operands = args
            self.activations.append(callee)
            self.index = t.target
        else:
            values = self._take_arrivals(act)
            self.stats.discarded += len(act.operands)
            self.stack_top += act.frame_size
            self.activations.pop()
            if not self.activations:
                self.stats.consumed += len(values)
                self._halt(Outcome("returned", values=[op.value for op in values],
                                   step=self.steps, index=i))
                return
            caller = self.current
            for op in values:
                caller.operands.append(InFlightOperand(op.value, 0, op.seq))
            self.index = act.resume_index

    def _arm(self, kind: str, target: int | None, countdown: int):
        self.current.transfers.append(PendingTransfer(kind, target, countdown))

    def _execute(self, ins: Instruction, inputs, outputs, notes):
        op = ins.op
        act = self.current

        def first():
            return inputs[0] if inputs else NaR(NaRCode.MISSING_OPERAND)

        if op in ("nop", "fence"):
            if op == "fence":
                notes.append(f"fence={ins.succ:04b}/{ins.pred:04b}")
        elif op == "alu":
            self._alu(ins, inputs, outputs)
        elif op == "echo":
            for v, ref in zip(inputs, (ins.ref, ins.ref2)):
                outputs.append((v, ref))
            if ins.s:
                outputs.extend((v, 0) for v in inputs[2:])
        elif op == "echo_l":
            outputs.extend((v, ins.ref) for v in inputs)
        elif op == "dup":
            outputs.extend((v, ins.ref) for v in inputs)
            outputs.extend((v, ins.ref2) for v in inputs)
            if ins.s:
                outputs.extend((v, 0) for v in inputs)
        elif op == "pick":
            outputs.append((self._pick(inputs), ins.ref))
        elif op == "pick_i":
            chosen = inputs[ins.im] if ins.im < len(inputs) else NaR(NaRCode.MISSING_OPERAND)
            outputs.append((chosen, ins.ref))
        elif op == "const":
            tag = ins.tag
            imm = ins.imm - 256 if tag.signed and ins.imm >= 128 else ins.imm
            outputs.append((Value.of(imm, tag), 0))
        elif op == "grow":
            v = first()
            if isinstance(v, Value):
                v = Value.of((v.bits << 8) | ins.imm, v.tag)
            elif v.payload != NaRCode.MISSING_OPERAND:
                v = NaR(NaRCode.PROPAGATED)
            outputs.append((v, 0))
        elif op == "ld":
            outputs.append((self._ld(ins, inputs), ins.ref))
        elif op == "st":
            self._st(inputs)
        elif op == "cast":
            outputs.append((cast_value(first(), ins.tag), ins.ref))
        elif op == "jmp":
            if inputs:
                cond = inputs[0]
                if isinstance(cond, NaR):
                    raise Trap("nar-control", f"jmp condition {cond}")
                if cond.bits == 0:
                    return
            self._arm("jump", self.index + ins.imm, ins.trig)
        elif op == "call":
            if not inputs:
                raise Trap("missing-operand", "call without a callee address")
            if isinstance(inputs[0], NaR):
                raise Trap("nar-control", f"call target {inputs[0]}")
            addr = normalize_address(inputs[0], self.address_of(self.index), self.config.xlen_bits)
            offset = addr - self.config.code_base
            if offset % 2 or not 0 <= offset // 2 < len(self.program):
                raise Trap("bad-fetch", f"call target 0x{addr:x} is not an instruction")
            self._arm("call", offset // 2, ins.trig)
        elif op == "ret":
            self._arm("return", None, ins.trig)
        elif op == "rsrv":
            n = ins.bytes * (16 if ins.t else 1)
            if self.stack_top - n < self.stack_limit:
                raise Trap("stack-overflow", f"rsrv {n}")
            self.stack_top -= n
            act.frame_size += n
            act.frame_base = self.stack_top
        elif op == "free":
            n = ins.bytes * (16 if ins.t else 1)
            if n > act.frame_size:
                raise Trap("frame-underflow", f"free {n} of a {act.frame_size}-byte frame")
            self.stack_top += n
            act.frame_size -= n
            act.frame_base = self.stack_top
        elif op == "ld_s":
            tag = ins.tag
            addr = act.frame_base + ins.idx * tag.nbytes
            if addr + tag.nbytes > act.frame_base + act.frame_size:
                outputs.append((NaR(NaRCode.BAD_ADDRESS), 0))
            else:
                outputs.append((self._load(addr, tag), 0))
        elif op == "sts":
            if not inputs:
                raise Trap("missing-operand", "sts without a value")
            v = inputs[0]
            if isinstance(v, NaR):
                raise Trap("nar-store", f"sts of {v}")
            addr = act.frame_base + ins.idx * v.tag.nbytes
            if addr + v.tag.nbytes > act.frame_base + act.frame_size:
                raise Trap("bad-address", f"sts slot {ins.idx} outside the {act.frame_size}-byte frame")
            self._store(addr, v)
        elif op == "saddr":
            tag = unsigned_tag(self.config.xlen_bits)
            outputs.append((Value.of(act.frame_base + (ins.idx << ins.siz), tag), 0))
        elif op == "trap":
            raise Trap("software")
        else:
            raise AssertionError(op)

    def _alu(self, ins: Instruction, inputs, outputs):
        if ins.func == 4 and ins.mod == 0:
            flag = any(isinstance(v, NaR) for v in inputs)
            outputs.append((Value(int(flag), unsigned_tag(8)), ins.ref))
            return
        variant = alu_variant(ins.mod)
        if not inputs:
            low = high = NaR(NaRCode.MISSING_OPERAND)
        else:
            b = inputs[1] if len(inputs) > 1 else None
            low, high = alu_apply(ins.func, ins.mod, inputs[0], b, self.xlen_bytes)
        r = ins.ref
        routes = {
            AluOutputVariant.SingleLow: [(low, r)],
            AluOutputVariant.LowHighSame: [(low, r), (high, r)],
            AluOutputVariant.HighLowSame: [(high, r), (low, r)],
            AluOutputVariant.LowRefHighNext: [(low, r), (high, 0)],
            AluOutputVariant.HighRefLowNext: [(high, r), (low, 0)],
            AluOutputVariant.LowRefHighDrop: [(low, r)],
            AluOutputVariant.HighRefLowDrop: [(high, r)],
        }[variant]
        outputs.extend(routes)

    def _pick(self, inputs) -> TaggedValue:
        if not inputs:
            return NaR(NaRCode.MISSING_OPERAND)
        cond = inputs[0]
        if isinstance(cond, NaR):
            return NaR(NaRCode.PROPAGATED)
        k = 1 if cond.bits else 2
        return inputs[k] if k < len(inputs) else NaR(NaRCode.MISSING_OPERAND)

    def _ld(self, ins: Instruction, inputs) -> TaggedValue:
        if not inputs:
            return NaR(NaRCode.MISSING_OPERAND)
        tag = ins.tag
        disp = inputs[1] if len(inputs) > 1 else None
        addr = self._effective_address(inputs[0], disp, tag.nbytes)
        if addr is None:
            return NaR(NaRCode.BAD_ADDRESS)
        return self._load(addr, tag)

    def _st(self, inputs):
        if len(inputs) < 2:
            raise Trap("missing-operand", f"st needs a value and an address, got {len(inputs)} operand(s)")
        v = inputs[0]
        if any(isinstance(x, NaR) for x in inputs):
            raise Trap("nar-store", "NaR among st operands")
        disp = inputs[2] if len(inputs) > 2 else None
        addr = self._effective_address(inputs[1], disp, v.tag.nbytes)
        self._store(addr, v)

    # -- driving ---------------------------------------------------------

    def run(self, entry: int = 0, args=(), budget: int | None = None) -> Outcome:
        self.start(entry, args)
        return self.resume(budget)

    def resume(self, budget: int | None = None) -> Outcome:
        budget = self.config.step_budget if budget is None else budget
        while self.outcome is None:
            if self.steps >= budget:
                self._halt(Outcome("timeout", step=self.steps, index=self.index))
                break
            self.step()
        return self.outcome


def run(program, entry: int = 0, args=(), config: MachineConfig | None = None,
        memory: dict[int, bytes] | None = None) -> tuple[Outcome, Machine]:
    """Run ``program`` to completion; returns the outcome and the final machine."""
    m = Machine(program, config)
    for addr, data in (memory or {}).items():
        m.load(addr, data)
    outcome = m.run(entry, args)
    return outcome, m
