import itertools

import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from armwcet.errors import UndefinedMemoryBase
from armwcet.instructions import FLAGS, PC, REG_NAMES, SP
from armwcet.listing import parse_listing
from armwcet.oracles import Machine, interpret_step
from armwcet.semantics import (
    BETA,
    SymState,
    eval_cond,
    execute,
    initial_state,
    ref_def,
    step,
    step_traced,
    trace_triple,
)


def ins(text, addr=0):
    return parse_listing(f"{addr}: {text}\n")[addr]


def state(regs=None, flags=(0, 0, 0, 0), stack=(), pc=0, sp=0x1000):
    s = initial_state(pc, init_sp=sp, flags=flags)
    if regs:
        s = s.set_regs(regs)
    if stack:
        s = s.set_stack(dict(stack))
    return s


# -- ref/def -----------------------------------------------------------------

@pytest.mark.parametrize("text,refs,defs", [
    ("add r2,r1,#1", {"r1"}, {"r2", "pc"}),
    ("push {r0,r1}", {"r0", "r1", "sp"}, {"sp", "stack", "pc"}),
    ("str r2,[r1, r3 lsl #2]", {"r1", "r2", "r3"}, {"pc"}),
    ("ldr r0,[sp,#4]", {"sp", "stack"}, {"r0", "pc"}),
    ("cmp r2,r1", {"r1", "r2"}, {"N", "Z", "C", "V", "pc"}),
    ("addle r1,r1,#1", {"r1", "Z", "N", "V"}, {"r1", "pc"}),
    ("bl 0", set(), {"lr", "pc"}),
    ("bx lr", {"lr"}, {"pc"}),
])
def test_ref_def_examples(text, refs, defs):
    rd = ref_def(ins(text, 0 if "bl" not in text else 4))
    assert rd.refs == refs and rd.defs == defs


def test_pc_always_defined():
    for text in ("mov r0,#1", "cmp r0,#0", "str r0,[sp]", "b 0", "mul r0,r1,r2", "stmdb sp!,{r4,lr}"):
        assert "pc" in ref_def(ins(text)).defs


def test_conditional_has_no_must_defs():
    assert ref_def(ins("movgt r0,#1")).must_defs == frozenset()
    assert ref_def(ins("mov r0,#1")).must_defs == {"r0", "pc"}


# -- step / trace triples ----------------------------------------------------

def test_ldr_from_stack_cell():
    s = state(sp=12, stack={16: 99})
    (out,) = step(s, ins("ldr r0,[sp,#4]"))
    assert out.regs[0] == 99 and out.pc == 4


def test_bot_condition_forks():
    s = state(flags=(None, None, None, None), pc=92)
    outs = step(s, ins("ble 24", 92))
    assert sorted(o.pc for o in outs) == [24, 96]


def test_bot_propagates_through_add():
    (out,) = step(state({1: None}), ins("add r2,r1,#1"))
    assert out.regs[2] is None


def test_cmp_with_bot_makes_all_flags_bot():
    (out,) = step(state({1: None}), ins("cmp r1,#0"))
    assert out.flags == (None, None, None, None)


def test_stm_addresses():
    t = trace_triple(state(sp=12), ins("stm sp,{r0,r1}"))
    assert t.addrs == {12, 8} and t.executed


def test_not_executed_triple():
    s = state(flags=(0, 0, 0, 0), pc=128)  # Z=0, N=V: le is false
    t = trace_triple(s, ins("addle r1,r1,#1", 128))
    assert t.addrs == frozenset() and not t.executed


def test_register_only_triple():
    t = trace_triple(state(), ins("mov r1,#30"))
    assert t.addrs == frozenset() and t.executed


def test_bot_base_raises():
    with pytest.raises(UndefinedMemoryBase):
        step(state({1: None}), ins("ldr r0,[r1]"))


def test_bx_bot_gives_bot_pc():
    (out,) = step(state({14: None}), ins("bx lr"))
    assert out.pc is None


def test_pc_reads_as_address_plus_8():
    (out,) = step(state(pc=12), ins("add r0, pc, #4", 12))
    assert out.regs[0] == 24


def test_bl_sets_lr():
    (out,) = step(state(pc=8), ins("bl 40", 8))
    assert out.regs[14] == 12 and out.pc == 40


def test_push_pop_round_trip():
    s = state({0: 5, 14: BETA})
    (s,) = step(s, ins("push {r0, lr}"))
    assert s.sp == 0x1000 - 8 and s.stack_get(0x1000 - 8) == 5 and s.stack_get(0x1000 - 4) == BETA
    s = s.set_regs({0: 0, 14: 0, PC: 4})
    (s,) = step(s, ins("pop {r0, lr}", 4))
    assert (s.regs[0], s.regs[14], s.sp) == (5, BETA, 0x1000)


# -- conditions --------------------------------------------------------------

def _expected(cond, n, z, c, v):
    return {
        "eq": z == 1, "ne": z == 0, "cs": c == 1, "cc": c == 0, "mi": n == 1, "pl": n == 0,
        "vs": v == 1, "vc": v == 0, "hi": c == 1 and z == 0, "ls": c == 0 or z == 1,
        "ge": n == v, "lt": n != v, "gt": z == 0 and n == v, "le": z == 1 or n != v, "al": True,
    }[cond]


@pytest.mark.parametrize("cond", ["eq", "ne", "cs", "cc", "mi", "pl", "vs", "vc", "hi", "ls",
                                  "ge", "lt", "gt", "le", "al"])
def test_eval_cond_table(cond):
    for flags in itertools.product((0, 1), repeat=4):
        assert eval_cond(flags, cond) is _expected(cond, *flags)


def test_eval_cond_bot():
    assert eval_cond((1, 1, 0, 0), "eq") is True
    assert eval_cond((None, None, None, None), "al") is True
    assert eval_cond((None, 0, 0, 0), "ge") is None
    assert eval_cond((None, 1, 0, 0), "eq") is True


# -- concrete soundness against the independent interpreter ------------------

REGS8 = [f"r{i}" for i in range(8)]
reg = st.sampled_from(REGS8)
cond = st.sampled_from(["", "eq", "ne", "gt", "le", "ge", "lt", "cs", "cc", "mi", "hi"])
op2 = st.one_of(
    st.integers(0, 255).map(lambda v: f"#{v}"),
    st.sampled_from([0xFF00, 0x80000000, 0x3FC]).map(lambda v: f"#{v}"),
    reg,
    st.tuples(reg, st.sampled_from(["lsl", "lsr", "asr", "ror"]), st.integers(1, 31))
    .map(lambda t: f"{t[0]}, {t[1]} #{t[2]}"),
)
flag_s = st.sampled_from(["", "s"])
alu = st.one_of(
    st.tuples(st.sampled_from(["add", "sub", "rsb", "and", "orr", "eor"]), flag_s, cond, reg, reg, op2)
    .map(lambda t: f"{t[0]}{t[1]}{t[2]} {t[3]}, {t[4]}, {t[5]}"),
    st.tuples(st.sampled_from(["mov", "mvn"]), flag_s, cond, reg, op2).map(lambda t: f"{t[0]}{t[1]}{t[2]} {t[3]}, {t[4]}"),
    st.tuples(st.sampled_from(["cmp", "cmn", "tst"]), cond, reg, op2).map(lambda t: f"{t[0]}{t[1]} {t[2]}, {t[3]}"),
    st.tuples(cond, reg, reg, reg).map(lambda t: f"mul{t[0]} {t[1]}, {t[2]}, {t[3]}"),
    st.tuples(reg, reg, reg, reg).map(lambda t: f"mla {t[0]}, {t[1]}, {t[2]}, {t[3]}"),
    st.tuples(st.sampled_from([("r0", "r1"), ("r2", "r3"), ("r4", "r5")]), reg, reg)
    .map(lambda t: f"smull {t[0][0]}, {t[0][1]}, {t[1]}, {t[2]}"),
    st.tuples(st.sampled_from(["ldr", "str"]), cond, reg, st.integers(-8, 8).map(lambda x: 4 * x))
    .map(lambda t: f"{t[0]}{t[1]} {t[2]}, [sp, #{t[3]}]"),
    st.tuples(st.sampled_from(["push", "pop"]), st.lists(reg, min_size=1, max_size=3, unique=True))
    .map(lambda t: f"{t[0]} {{{', '.join(sorted(t[1]))}}}"),
)
word = st.one_of(st.integers(0, 2**32 - 1), st.sampled_from([0, 1, 2**31, 2**31 - 1, 2**32 - 1]))


def _program(lines):
    return parse_listing("\n".join(f"{4 * i}: {ln}" for i, ln in enumerate(lines)) + "\n")


@given(st.lists(alu, min_size=1, max_size=10), st.lists(word, min_size=8, max_size=8),
       st.tuples(*[st.integers(0, 1)] * 4))
def test_concrete_soundness(lines, values, flags):
    p = _program(lines)
    regs = dict(enumerate(values))
    s = initial_state(0, flags=flags).set_regs(regs)
    m = Machine.start(0, regs=regs, flags=flags)
    for addr in p.addresses:
        # memory the symbolic side has never written reads as ⊥; seed both sides
        for a in range(0x1000 - 64, 0x1000 + 40, 4):
            if s.stack_get(a) is None:
                s = s.set_stack({a: 0})
        succ = step(s, p[addr])
        assert len(succ) == 1
        s = succ[0]
        interpret_step(m, p[addr])
        assert s.regs[:15] == tuple(m.regs[:15])
        assert s.pc == m.regs[PC]
        assert s.flags == (m.n, m.z, m.c, m.v)
        for a, v in s.stack:
            assert m.load(a) == v


@given(st.lists(alu, min_size=1, max_size=8), st.lists(word, min_size=8, max_size=8),
       st.sets(st.integers(0, 7), min_size=1))
def test_bot_monotonicity(lines, values, bots):
    """Every concrete successor is matched by an abstract one on the Known entries."""
    p = _program(lines)
    regs = dict(enumerate(values))
    conc = [initial_state(0).set_regs(regs)]
    abst = [initial_state(0).set_regs({**regs, **{b: None for b in bots}})]
    for addr in p.addresses:
        conc = [t for s in conc for t in step(s, p[addr])]
        abst = [t for s in abst for t in step(s, p[addr])]
        for c in conc:
            assert any(_agrees(a, c) for a in abst)


def _agrees(a: SymState, c: SymState) -> bool:
    if any(x is not None and x != y for x, y in zip(a.regs, c.regs)):
        return False
    if any(x is not None and x != y for x, y in zip(a.flags, c.flags)):
        return False
    return all(c.stack_get(k) == v for k, v in a.stack)


REG_VARS = {name: i for i, name in enumerate(REG_NAMES)}


@given(alu, st.lists(word, min_size=8, max_size=8), st.tuples(*[st.integers(0, 1)] * 4),
       st.integers(0, 7), word)
def test_ref_def_covers_effects(line, values, flags, victim, new_value):
    """Changed components lie in DEF; components outside REF cannot influence the result."""
    i = ins(line)
    rd = ref_def(i)
    s = initial_state(0, flags=flags).set_regs(dict(enumerate(values)))
    s = s.set_stack({a: 7 for a in range(0x1000 - 32, 0x1000 + 36, 4)})
    (out,) = step(s, i)
    for k, name in enumerate(REG_NAMES):
        if out.regs[k] != s.regs[k]:
            assert name in rd.defs
    for k, f in enumerate(FLAGS):
        if out.flags[k] != s.flags[k]:
            assert f in rd.defs
    if out.stack != s.stack:
        assert "stack" in rd.defs
    name = REG_NAMES[victim]
    assume(name not in rd.refs)
    (out2,) = step(s.set_regs({victim: new_value}), i)
    for k in range(16):
        if k != victim:
            assert out2.regs[k] == out.regs[k]
    assert out2.flags == out.flags and out2.stack == out.stack


def test_step_traced_pairs_triples_with_states():
    s = state(flags=(None,) * 4, pc=4)
    pairs = step_traced(s, ins("strgt r0, [sp, #-4]", 4))
    assert [(t.executed, sorted(t.addrs)) for t, _ in pairs] == [(True, [0x1000 - 4]), (False, [])]
    assert [o.pc for _, o in pairs] == [8, 8]


def test_muls_sets_n_z_and_makes_c_unknown():
    (out,) = step(state({1: 0x10000, 2: 0x10000}), ins("muls r0, r1, r2"))
    assert out.regs[0] == 0 and out.flags[:3] == (0, 1, None)
