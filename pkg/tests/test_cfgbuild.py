import time

import pytest
from hypothesis import given
from hypothesis import strategies as st

from armwcet.cfgbuild import build_cfg, emit_dot, reconstruct
from armwcet.errors import BotBranchTarget, InvalidBranchTarget, UnreachableExit
from armwcet.graphs import END
from armwcet.listing import parse_listing
from armwcet.oracles import Machine, interpret_step
from armwcet.semantics import BETA, initial_state, sentinel

from conftest import analyse


def test_sentinel():
    assert sentinel() == BETA == 3
    assert sentinel() % 4 != 0


def test_fibo0_resolution(fibo0):
    t = time.perf_counter()
    rec = reconstruct(fibo0)
    assert time.perf_counter() - t < 1.0
    assert set(rec.cfg.successors(116)) == {144}
    assert set(rec.cfg.successors(160)) == {END}
    assert rec.cfg.successors(140) == {0: "call"}
    assert rec.cfg.successors(116)[144] == "return"
    assert rec.resolved == {116: [144], 160: [END]}


def test_fibo0_resolution_order(fibo0):
    rec = reconstruct(fibo0)
    # the callee's return is found first; the caller's return needs the first edge
    assert rec.history[0] == [(116, 144)]
    assert rec.history[1] == [(160, END)]
    assert rec.history[-1] == []
    assert rec.iterations <= 2 + 1


def test_fibo_graph(fibo_analysed):
    g = fibo_analysed.cfg
    assert len(g.nodes) == 16
    assert g.successors(56) == {24: "taken", 60: "fallthrough"}
    assert set(g.successors(32)) == {36, END}
    assert set(g.successors(60)) == {END}


def test_straight_line_bx_lr():
    rec = reconstruct(parse_listing("0: mov r0, #1\n4: bx lr\n"))
    assert rec.cfg.successors(4) == {END: "return"} and rec.iterations == 2


def test_lr_copied_through_register():
    rec = reconstruct(parse_listing("0: mov r5, lr\n4: bx r5\n"))
    assert set(rec.cfg.successors(4)) == {END}


def test_bot_target():
    p = parse_listing("0: bx r0\n")
    with pytest.raises(BotBranchTarget):
        reconstruct(p, init=initial_state(0, regs={0: None}))


def test_invalid_target():
    with pytest.raises(InvalidBranchTarget):
        reconstruct(parse_listing("0: mov r0, #64\n4: bx r0\n"))
    with pytest.raises(InvalidBranchTarget):
        reconstruct(parse_listing("0: b 400\n"))


def test_infinite_loop_is_rejected():
    with pytest.raises(UnreachableExit):
        reconstruct(parse_listing("0: mov sp, sp\n4: b 0\n"))


def test_multiple_return_sites():
    p = parse_listing("""0: mov r4, lr
4: bl 24
8: bl 24
12: mov lr, r4
16: bx lr
20: mov r0, #0
24: add r1, r1, #1
28: bx lr
""")
    rec = reconstruct(p)
    assert set(rec.cfg.successors(28)) == {8, 12}
    assert set(rec.cfg.successors(16)) == {END}


def test_edges_grow_monotonically(fibo0):
    rec = reconstruct(fibo0)
    total = []
    for new in rec.history:
        assert not set(new) & set(total)
        total += new
    indirect = sum(1 for i in fibo0 if i.is_indirect)
    assert rec.iterations <= indirect + 1


def test_sp_values_come_with_the_cfg(fibo0):
    rec = reconstruct(fibo0)
    assert rec.spmap[4] == {0x1000 - 48}


def test_dot_output(fibo, fibo_analysed):
    a = fibo_analysed
    text = emit_dot(a.cfg, fibo, in_slice=a.ap.in_slice, simulated=a.ap.simulated)
    assert text == emit_dot(a.cfg, fibo, in_slice=a.ap.in_slice, simulated=a.ap.simulated)
    assert 'n56 -> n24 [kind="taken"' in text
    assert 'n32 -> END [kind="return"' in text and 'n60 -> END [kind="return"' in text
    assert text.count("[label=") == 16


def test_dot_one_instruction():
    p = parse_listing("0: mov r0, #1\n")
    text = emit_dot(build_cfg(p), p)
    assert text.count("[label=") == 1 and "END [shape=doublecircle" in text
    assert "n0 -> END" in text


def test_fibo0_call_and_return_edges(fibo0):
    text = emit_dot(build_cfg(fibo0), fibo0)
    assert 'n140 -> n0 [kind="call"' in text
    assert 'n116 -> n144 [kind="return"' in text


# -- soundness: concrete transitions are graph edges -------------------------

LOOPY = """0: push {r4, lr}
4: mov r4, #0
8: cmp r0, #0
12: ble 32
16: bl 48
20: add r4, r4, r1
24: sub r0, r0, #1
28: b 8
32: mov r0, r4
36: pop {r4, lr}
40: bx lr
44: mov r0, r0
48: add r1, r0, #1
52: bx lr
"""


@given(st.integers(0, 6))
def test_concrete_transitions_are_edges(r0):
    a = analyse(LOOPY, bot=[0])
    g = a.cfg
    m = Machine.start(0, regs={0: r0})
    while True:
        pc = m.regs[15]
        interpret_step(m, a.program[pc])
        nxt = m.regs[15]
        dst = END if nxt == BETA else nxt
        assert dst in g.successors(pc)
        if dst == END:
            break
