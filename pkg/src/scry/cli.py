"""Command-line front end: ``scry asm|dis|run|analyze``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import density, encoding
from .assembler import AsmError, assemble, disassemble
from .isa import parse_value
from .machine import MachineConfig, run

EXIT_OK = 0
EXIT_TRAPPED = 2
EXIT_ASM_ERROR = 3
EXIT_BAD_BINARY = 4
EXIT_TIMEOUT = 5
EXIT_USAGE = 64

OUTCOME_EXIT = {"returned": EXIT_OK, "trapped": EXIT_TRAPPED, "timeout": EXIT_TIMEOUT}

ASM_SUFFIXES = (".scry-asm", ".s", ".asm")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _int(text: str) -> int:
    try:
        return int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="scry", description="Scry ISA toolchain")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("asm", help="assemble source to a SCRY container")
    a.add_argument("input")
    a.add_argument("-o", "--output", required=True)
    a.add_argument("--raw", action="store_true", help="write bare little-endian words")
    a.add_argument("--listing", help="also write an address/word/source listing")

    d = sub.add_parser("dis", help="disassemble a binary")
    d.add_argument("input")
    d.add_argument("-o", "--output")
    d.add_argument("--raw", action="store_true", help="input is bare words")

    r = sub.add_parser("run", help="run a binary or assembly source")
    r.add_argument("input")
    r.add_argument("--arg", action="append", default=[], metavar="TAG:VALUE")
    r.add_argument("--xlen", type=int, default=64, choices=(16, 32, 64))
    r.add_argument("--mem", action="append", default=[], metavar="FILE@ADDR")
    r.add_argument("--mem-size", type=_int, default=1 << 20)
    r.add_argument("--stack-top", type=_int)
    r.add_argument("--stack-size", type=_int, default=1 << 16)
    r.add_argument("--entry", type=_int)
    r.add_argument("--trace", metavar="FILE")
    r.add_argument("--steps", type=_int, default=1_000_000)
    r.add_argument("--raw", action="store_true", help="input is bare words")
    r.add_argument("--dump", action="append", default=[], metavar="ADDR:LEN",
                   help="print memory bytes after the run")

    an = sub.add_parser("analyze", help="count encoding-space code points")
    an.add_argument("--isa", metavar="DESCFILE", help="analyze a description file instead of Scry")
    an.add_argument("--convention", choices=tuple(density.CONVENTIONS),
                    help="Scry counting convention (default: all)")
    an.add_argument("--csv", action="store_true")
    return p


def _err(msg: str):
    print(f"scry: {msg}", file=sys.stderr)


def _assemble_file(path: str):
    return assemble(Path(path).read_text(encoding="utf-8"))


def _load_program(path: str, raw: bool) -> tuple[list[int], int]:
    if path.endswith(ASM_SUFFIXES):
        prog = _assemble_file(path)
        return prog.words, prog.entry
    return encoding.unpack_container(Path(path).read_bytes(), raw=raw)


def cmd_asm(args) -> int:
    prog = _assemble_file(args.input)
    data = prog.to_bytes() if args.raw else prog.container()
    Path(args.output).write_bytes(data)
    if args.listing:
        Path(args.listing).write_text(prog.listing())
    return EXIT_OK


def cmd_dis(args) -> int:
    words, _ = _load_program(args.input, args.raw)
    text = disassemble(words)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _split_at(text: str, sep: str, what: str) -> tuple[str, int]:
    head, found, tail = text.rpartition(sep)
    if not found:
        raise UsageError(f"expected {what}, got {text!r}")
    try:
        return head, int(tail, 0)
    except ValueError:
        raise UsageError(f"expected {what}, got {text!r}") from None


def cmd_run(args) -> int:
    words, entry = _load_program(args.input, args.raw)
    bad = [i for i, w in enumerate(words) if encoding.decode(w) is None]
    if bad:
        raise encoding.ContainerError(f"word {bad[0]} (0x{words[bad[0]]:04x}) does not decode")
    if args.entry is not None:
        entry = args.entry
    if not 0 <= entry < max(len(words), 1):
        raise UsageError(f"entry {entry} is outside the program")
    try:
        values = [parse_value(a) for a in args.arg]
    except (ValueError, KeyError) as e:
        raise UsageError(f"bad --arg: {e}") from None
    if len(values) > 4:
        raise UsageError("at most four --arg values")
    preload = {}
    for spec in args.mem:
        path, addr = _split_at(spec, "@", "FILE@ADDR")
        preload[addr] = Path(path).read_bytes()
    try:
        config = MachineConfig(xlen_bits=args.xlen, memory_size=args.mem_size,
                               stack_top=args.stack_top, stack_size=args.stack_size,
                               step_budget=args.steps, trace=bool(args.trace))
        outcome, machine = run(words, entry, values, config, preload)
    except ValueError as e:
        raise UsageError(str(e)) from None
    if args.trace:
        Path(args.trace).write_text("\n".join(machine.trace) + "\n")
    for spec in args.dump:
        addr_text, n = _split_at(spec, ":", "ADDR:LEN")
        addr = int(addr_text, 0)
        print(f"0x{addr:x}: " + " ".join(f"{b:02x}" for b in machine.read(addr, n)))
    if outcome.status == "returned":
        print(" ".join(str(v) for v in outcome.values))
    elif outcome.status == "trapped":
        _err(f"trapped ({outcome.cause}) at step {outcome.step}, index {outcome.index}")
    else:
        _err(f"step budget of {args.steps} exhausted at index {outcome.index}")
    return OUTCOME_EXIT[outcome.status]


def cmd_analyze(args) -> int:
    if args.isa:
        descs = [density.parse_description(Path(args.isa).read_text())]
    elif args.convention:
        descs = [density.scry_description(args.convention)]
    else:
        descs = [density.scry_description(c) for c in density.CONVENTIONS]
    reports = [density.analyze(d) for d in descs]
    if args.csv:
        sys.stdout.write(density.report_csv(reports))
    else:
        sys.stdout.write("\n".join(density.format_report(r) for r in reports))
    return EXIT_OK


COMMANDS = {"asm": cmd_asm, "dis": cmd_dis, "run": cmd_run, "analyze": cmd_analyze}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except AsmError as e:
        _err(f"{args.input}:{e.line or '?'}:{e.col or '?'}: {e.message}")
        return EXIT_ASM_ERROR
    except encoding.ContainerError as e:
        _err(f"{args.input}: invalid binary: {e}")
        return EXIT_BAD_BINARY
    except density.DescriptionError as e:
        _err(f"{args.isa}: {e}")
        return EXIT_USAGE
    except UsageError as e:
        _err(str(e))
        return EXIT_USAGE
    except OSError as e:
        _err(str(e))
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
