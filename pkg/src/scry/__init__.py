"""Toolchain for the Scry instruction set: assembler, disassembler, simulator
and encoding-density analysis."""

from .assembler import AsmError, assemble, disassemble
from .encoding import decode, disassemble_word, encode
from .isa import Instruction, NaR, NaRCode, TypeTag, Value, alu_apply, cast_value
from .machine import Machine, MachineConfig, Outcome, run

__all__ = [
    "AsmError", "assemble", "disassemble", "decode", "disassemble_word", "encode",
    "Instruction", "NaR", "NaRCode", "TypeTag", "Value", "alu_apply", "cast_value",
    "Machine", "MachineConfig", "Outcome", "run",
]
