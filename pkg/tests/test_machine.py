import pytest
from hypothesis import given
from hypothesis import strategies as st

from scry.assembler import assemble
from scry.isa import I8, I16, I32, U8, U16, U32, NaR, NaRCode, Value
from scry.machine import Machine, MachineConfig, run


def execute(source, *args, **config):
    config.setdefault("trace", True)
    return run(assemble(source).words, args=list(args), config=MachineConfig(**config))


def returned(source, *args, **config):
    outcome, m = execute(source, *args, **config)
    assert outcome.status == "returned", (outcome, m.trace)
    assert m.stats.balanced()
    return outcome.values


def trace_line(m, idx):
    lines = [line for line in m.trace if f" idx={idx} " in line]
    assert len(lines) == 1
    return lines[0]


u8 = lambda n: Value(n, U8)  # noqa: E731
u32 = lambda n: Value(n, U32)  # noqa: E731


# -- operand flow -------------------------------------------------------------

LISTING_1 = """
        echo =>first, =>second
first:  add.s =>3
        nop
second: add.s =>1
        nop
        add.s =>10
        ret 0
"""


def test_listing_1_third_add_receives_both_in_production_order():
    outcome, m = execute(LISTING_1, u8(1), u8(2))
    assert "add.s in=[u8:1] out=[(u8:2)->+3]" in trace_line(m, 1)
    assert "add.s in=[u8:2] out=[(u8:3)->+1]" in trace_line(m, 3)
    assert "add.s in=[u8:2,u8:3] out=[(u8:5)->+10]" in trace_line(m, 5)
    assert outcome.status == "returned" and outcome.values == []
    assert m.stats.discarded == 1 and m.stats.balanced()


def test_ref_zero_reaches_the_next_instruction():
    src = """
        ret end
        const u8, 5
        add.s =>0
    end:
    """
    assert returned(src) == [u8(6)]


def test_four_operand_limit_keeps_earliest():
    body = "".join(f"        const u8, {n}\n        echo.l =>sink\n" for n in range(1, 6))
    src = f"        ret end\n{body}sink:   echo.l =>0\nend:\n"
    outcome, m = execute(src)
    assert outcome.values == [u8(1), u8(2), u8(3), u8(4)]
    assert "dropped=[u8:5]" in trace_line(m, 11)
    assert m.stats.dropped == 1 and m.stats.balanced()


def test_arity_drops_excess_arrivals():
    src = """
        add.s =>1
        ret 0
    """
    outcome, m = execute(src, u8(1), u8(2), u8(3))
    assert outcome.values == [u8(3)]
    assert "dropped=[u8:3]" in trace_line(m, 0)


def test_delivery_is_by_production_order_not_distance():
    src = """
        ret end
        const u8, 7
        echo.l =>sink
        const u8, 2
        echo.l =>sink
        nop
    sink:  sub.s =>0
    end:
    """
    # 7 was produced first, so it is the left operand
    assert returned(src) == [u8(5)]


def test_dup_outputs_are_ordered_ref_then_ref2():
    src = """
        dup =>1, =>1
        ret 0
    """
    assert returned(src, u8(1), u8(2)) == [u8(1), u8(2), u8(1), u8(2)]


@pytest.mark.parametrize("shape, order, diff", [
    ("Low, High", [u8(4), u8(1)], 3),
    ("High, Low", [u8(1), u8(4)], 0),
])
def test_alu_variant_order_at_shared_consumer(shape, order, diff):
    collect = f"""
        add {shape}, =>1
        ret end
        echo.l =>0
    end:
    """
    assert returned(collect, u8(250), u8(10)) == order
    subtract = f"""
        add {shape}, =>1
        ret end
        sub.s =>0
    end:
    """
    assert returned(subtract, u8(250), u8(10)) == [u8(diff)]


def test_alu_pass_through_and_drop_variants():
    src = """
        add Low, =>2, High, =>
        ret end
        echo.l =>0
    end:
    """
    # the carry goes straight to ret and is dropped there
    outcome, m = execute(src, u8(250), u8(10))
    assert outcome.values == [u8(4)]
    assert "dropped=[u8:1]" in trace_line(m, 1)
    src = """
        add High, =>1
        ret 0
    """
    assert returned(src, u8(250), u8(10)) == [u8(1)]


def test_echo_retargets_and_passes_through():
    src = """
        echo =>1, =>1, =>
        ret end
        echo.l =>0
    end:
    """
    outcome, m = execute(src, u8(1), u8(2), u8(3), u8(4))
    assert "dropped=[u8:3,u8:4]" in trace_line(m, 1)
    assert outcome.values == [u8(1), u8(2)]


# -- individual instructions --------------------------------------------------

@pytest.mark.parametrize("cond, picked", [(u8(1), u8(10)), (u8(0), u8(20)),
                                          (NaR(NaRCode.DIV_BY_ZERO), NaR(NaRCode.PROPAGATED))])
def test_pick(cond, picked):
    assert returned("pick =>1\nret 0\n", cond, u8(10), u8(20)) == [picked]


def test_pick_immediate():
    assert returned("pick.i 2, =>1\nret 0\n", u8(1), u8(2), u8(3)) == [u8(3)]
    assert returned("pick.i 3, =>1\nret 0\n", u8(1)) == [NaR(NaRCode.MISSING_OPERAND)]


def test_const_grow_and_cast():
    src = """
        ret end
        const i8, -5
        echo.l =>end
        const u16, 0x12
        grow 0x34
        cast i8, =>0
    end:
    """
    assert returned(src) == [Value.of(-5, I8), Value(0x34, I8)]
    src = """
        ret end
        const u16, 0x12
        grow 0x34
        echo.l =>0
    end:
    """
    assert returned(src) == [Value(0x1234, U16)]


def test_isnar_in_the_machine():
    assert returned("isnar =>1\nret 0\n", u8(1), NaR(NaRCode.BAD_ADDRESS)) == [u8(1)]
    assert returned("isnar =>1\nret 0\n", u8(1), u8(2)) == [u8(0)]


def test_mul_implicit_operand_follows_xlen():
    assert returned("mul Low, =>1\nret 0\n", u32(5), xlen_bits=32) == [u32(20)]
    assert returned("mul Low, =>1\nret 0\n", u32(5), xlen_bits=64) == [u32(40)]


def test_fence_is_recorded():
    outcome, m = execute("fence 3, 5\nret 0\n")
    assert "fence=0011/0101" in trace_line(m, 0)


def test_trap_instruction():
    outcome, _ = execute("nop\ntrap\n")
    assert (outcome.status, outcome.cause, outcome.index) == ("trapped", "software", 1)


def test_running_off_the_end_is_a_bad_fetch():
    outcome, _ = execute("nop\n")
    assert (outcome.status, outcome.cause) == ("trapped", "bad-fetch")


def test_undecodable_word_traps():
    outcome, _ = execute(".word 0x0003\n")
    assert outcome.cause == "invalid-instruction"


# -- memory -------------------------------------------------------------------

def store(*args, memory=None, **config):
    outcome, m = run(assemble("st\nret 0\n").words, args=list(args),
                     config=MachineConfig(**config), memory=memory)
    return outcome, m


def test_store_writes_only_the_tagged_width():
    outcome, m = store(Value(0xBEEF, U16), u32(0x100), memory={0x100: b"\xaa" * 4})
    assert outcome.status == "returned"
    assert m.read(0x100, 4) == b"\xef\xbe\xaa\xaa"


def test_store_displacements():
    _, m = store(Value(0xBEEF, U16), u32(0x100), u32(3))
    assert m.read(0x106, 2) == b"\xef\xbe"          # unsigned index scaled by 2
    _, m = store(u8(0x41), u32(0x100), Value.of(-2, I32))
    assert m.read(0xFE, 1) == b"\x41"               # signed byte offset


def test_signed_base_is_relative_to_the_instruction():
    _, m = store(u8(0x42), Value.of(-0x10, I32))
    # st sits at index 0, i.e. at the code base
    assert m.read(m.config.code_base - 0x10, 1) == b"\x42"


def test_store_traps():
    outcome, _ = store(u8(1), u32(1 << 20))
    assert outcome.cause == "bad-address"
    outcome, _ = store(u8(1))
    assert outcome.cause == "missing-operand"
    outcome, _ = store(u8(1), u32(0x100), NaR(NaRCode.PROPAGATED))
    assert outcome.cause == "nar-store"


def test_load_modes():
    words = assemble("ld u16, =>1\nret 0\n").words
    mem = {0x100: bytes(range(16))}
    outcome, _ = run(words, args=[u32(0x100), u32(2)], memory=mem)
    assert outcome.values == [Value(0x0504, U16)]
    outcome, _ = run(words, args=[u32(0x104), Value.of(-2, I16)], memory=mem)
    assert outcome.values == [Value(0x0302, U16)]
    outcome, _ = run(words, args=[u32(1 << 20)], memory=mem)
    assert outcome.values == [NaR(NaRCode.BAD_ADDRESS)]


# -- NaR discipline ------------------------------------------------------------

nars = st.sampled_from([NaR(c) for c in NaRCode])


@given(nars)
def test_nar_reaching_store_traps(nar):
    assert store(nar, u32(0x100))[0].cause == "nar-store"
    assert store(u8(1), nar)[0].cause == "nar-store"


@given(nars)
def test_nar_reaching_frame_store_traps(nar):
    outcome, _ = execute("echo =>1, =>0\nrsrv 8\nsts 0\n", nar)
    assert outcome.cause == "nar-store"


@given(nars)
def test_nar_reaching_control_transfer_traps(nar):
    assert execute("jmp 0, 0\n", nar)[0].cause == "nar-control"
    assert execute("call 0\n", nar)[0].cause == "nar-control"


@given(nars)
def test_nar_reaching_load_yields_nar(nar):
    for args in ([nar], [u32(0x100), nar]):
        outcome, _ = execute("ld u8, =>1\nret 0\n", *args)
        assert outcome.values == [NaR(NaRCode.BAD_ADDRESS)]


# -- control flow, calls and frames ------------------------------------------

def test_jump_fires_after_trigger():
    src = """
        ret 4               // counts executed instructions, trap is skipped
        const u8, 1
        jmp skip, 1
        const u8, 9
        trap
    skip:
        echo.l =>0
    """
    # jump is taken after the instruction following jmp (trigger 1)
    outcome, m = execute(src)
    assert outcome.status == "returned"
    assert outcome.values == [u8(9)]


def test_jump_not_taken_on_zero():
    src = """
        ret end
        const u8, 0
        jmp away, 0
        const u8, 3
        echo.l =>0
    end:
    away: trap
    """
    assert returned(src) == [u8(3)]


def test_simultaneous_transfers_machine_check():
    outcome, _ = execute("ret 1\njmp 0, 0\n")
    assert outcome.cause == "machine-check"


def test_step_budget_timeout():
    outcome, _ = execute("loop: jmp loop, 0\n", step_budget=100)
    assert (outcome.status, outcome.step) == ("timeout", 100)


CALL = """
        echo =>resume, =>after    // x becomes the argument, y spans the call
        ret done
        const i8, 4
        call 0
resume: echo.l =>0
after:
done:
callee: sub Low, =>1
        ret 0
        nop
"""


def test_call_scopes_caller_operands():
    values = returned(CALL, u32(10), u32(77))
    # y kept its remaining count while the callee ran
    assert values == [u32(77), u32(9)]


NESTED = """
        echo.l =>resume
        ret done
        const i8, 4
        call 0
resume: echo.l =>0
done:
f:      echo.l =>back
        const i8, 8
        call 0
back:   sub Low, =>1
        ret 0
        nop
g:      sub Low, =>1
        ret 0
        nop
"""


def test_nested_calls_suspend_caller_transfers():
    _, m = execute(NESTED, u32(10))
    assert m.outcome.values == [u32(8)]
    assert m.stats.balanced()


def test_call_to_misaligned_or_outside_target_traps():
    assert execute("const i8, 3\ncall 0\n")[0].cause == "bad-fetch"
    assert execute("const i8, 100\ncall 0\n")[0].cause == "bad-fetch"


def test_call_with_absolute_address():
    src = """
        echo.l =>resume
        ret done
        const u16, 0x80
        grow 0x0c
        call 0
resume: echo.l =>0
done:
        add.s =>1
        ret 0
"""
    # code base 0x8000 + 2 * 6 = 0x800c
    assert returned(src, u8(4)) == [u8(5)]


FRAME = """
        echo.l =>slot
        ret done
        rsrv 8
slot:   sts 1
        saddr 1, 2
        ld u32, =>1
        ld.s u32, 1
        echo.l =>0
done:
"""


def test_frame_slots_and_addresses():
    outcome, m = execute(FRAME, u32(0xCAFE))
    assert outcome.values == [u32(0xCAFE), u32(0xCAFE)]
    top = m.config.stack_top
    assert m.read(top - 8 + 4, 4) == (0xCAFE).to_bytes(4, "little")
    assert m.stack_top == top


def test_frame_errors():
    assert execute("free 1\n")[0].cause == "frame-underflow"
    assert execute("rsrv 15, 16\n", stack_size=16)[0].cause == "stack-overflow"
    outcome, _ = execute("echo =>1, =>0\nrsrv 4\nsts 1\n", u32(1))
    assert outcome.cause == "bad-address"


def test_load_slot_outside_frame_is_nar():
    src = """
        ret end
        rsrv 2
        ld.s u32, 0
        echo.l =>0
    end:
    """
    assert returned(src) == [NaR(NaRCode.BAD_ADDRESS)]


def test_step_and_resume_match_run():
    words = assemble(CALL).words
    m = Machine(words, MachineConfig(trace=True))
    m.start(0, [u32(1), u32(2)])
    m.resume(budget=3)
    assert m.outcome.status == "timeout"
    m.outcome = None
    m.resume()
    _, ref = execute(CALL, u32(1), u32(2))
    assert m.trace == ref.trace and m.outcome.values == ref.outcome.values


def test_too_many_arguments():
    with pytest.raises(ValueError):
        Machine([0x4000]).start(0, [u8(1)] * 5)
