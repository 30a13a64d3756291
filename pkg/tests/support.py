"""Oracles and run helpers shared by the test modules."""

import random

from scry.isa import U8, U64, Value
from scry.machine import MachineConfig, run


def is_hex_digit(c: int) -> bool:
    """ASCII-table oracle."""
    return chr(c) in "0123456789abcdefABCDEF"


def random_strings(count, seed=1234, max_len=64):
    rng = random.Random(seed)
    return [bytes(rng.randrange(1, 256) for _ in range(rng.randrange(0, max_len + 1)))
            for _ in range(count)]


def run_strcpy(words, src: bytes, xlen=64, ptr=U64, src_addr=0x100, dst_addr=0x200, trace=False):
    mem = {src_addr: src + b"\0", dst_addr: b"\xee" * (len(src) + 8)}
    return run(words, args=[Value(dst_addr, ptr), Value(src_addr, ptr)],
               config=MachineConfig(xlen_bits=xlen, trace=trace), memory=mem)


def run_memcpy(words, data: bytes, n: int, xlen=64, ptr=U64, src_addr=0x100, dst_addr=0x300,
               trace=False):
    mem = {src_addr: data, dst_addr: b"\xee" * (len(data) + 8)}
    return run(words, args=[Value(src_addr, ptr), Value(dst_addr, ptr), Value(n, ptr)],
               config=MachineConfig(xlen_bits=xlen, trace=trace), memory=mem)


def run_isxdigit(words, c: int, xlen=64, trace=False):
    return run(words, args=[Value(c, U8)], config=MachineConfig(xlen_bits=xlen, trace=trace))
