"""Independent reference computations used to cross-check the analyzer.

:func:`interpret` is a direct concrete interpreter over plain integers with
a full memory map.  It shares no evaluation code with the ⊥-domain
semantics, so the two can be compared instruction by instruction.
:func:`brute_force_wcet` times concrete runs; :func:`enumerate_wcet` times
every path and duration assignment of an abstract program one by one.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .graphs import END
from .hw.config import HwConfig
from .hw.model import e_durations, run_trace
from .instructions import LR, PC, SP, Imm, Reg, Shifted
from .listing import Program
from .semantics import BETA, TraceTriple

W = 1 << 32


def _s32(x: int) -> int:
    x %= W
    return x - W if x >= 1 << 31 else x


@dataclass
class Machine:
    """Concrete machine state: 16 registers, NZCV, word-addressed memory."""

    regs: list
    n: int = 0
    z: int = 0
    c: int = 0
    v: int = 0
    mem: dict = field(default_factory=dict)

    @classmethod
    def start(cls, entry: int, *, init_sp: int = 0x1000, regs: Optional[dict] = None,
              mem: Optional[dict] = None, flags=(0, 0, 0, 0)) -> "Machine":
        r = [0] * 16
        r[SP], r[LR], r[PC] = init_sp, BETA, entry
        for k, v in (regs or {}).items():
            r[k] = v % W
        n, z, c, v = flags
        return cls(r, n, z, c, v, dict(mem or {}))

    def load(self, addr: int) -> int:
        return self.mem.get(addr % W, 0)


def _cond_holds(m: Machine, cond: str) -> bool:
    table = {
        "al": True, "eq": m.z == 1, "ne": m.z == 0, "cs": m.c == 1, "hs": m.c == 1,
        "cc": m.c == 0, "lo": m.c == 0, "mi": m.n == 1, "pl": m.n == 0, "vs": m.v == 1,
        "vc": m.v == 0, "hi": m.c == 1 and m.z == 0, "ls": m.c == 0 or m.z == 1,
        "ge": m.n == m.v, "lt": m.n != m.v, "gt": m.z == 0 and m.n == m.v,
        "le": m.z == 1 or m.n != m.v,
    }
    return table[cond]


def _reg(m: Machine, r: int, pc_value: int) -> int:
    return pc_value if r == PC else m.regs[r]


def _asr(x: int, a: int):
    v = _s32(x) >> min(a, 32)
    carry = (_s32(x) >> (min(a, 32) - 1)) & 1
    return v % W, carry


def _op2(m: Machine, op, pc_value: int):
    """(value, carry out or None when the shifter leaves C alone)."""
    if isinstance(op, Imm):
        v = op.value % W
        return v, (v >> 31 if v > 255 else None)
    if isinstance(op, Reg):
        return _reg(m, op.num, pc_value), None
    assert isinstance(op, Shifted)
    x, k, a = _reg(m, op.reg, pc_value), op.kind, op.amount
    if a == 0:
        return x, None
    bits = format(x, "032b")
    if k == "lsl":
        full = bits + "0" * a
        return int(full[-32:], 2), int(full[-33]) if a <= 32 else 0
    if k == "lsr":
        full = "0" * a + bits
        return int(full[:32], 2), int(full[32]) if a <= 32 else 0
    if k == "asr":
        return _asr(x, a)
    a %= 32
    rot = bits[-a:] + bits[:-a] if a else bits
    return int(rot, 2), int(rot[0])


def _arith(a: int, b: int, sub: bool):
    """Result and NZCV of a +/- b computed on unbounded integers."""
    if sub:
        raw = a - b
        c = int(a >= b)
        sv = _s32(a) - _s32(b)
    else:
        raw = a + b
        c = int(raw >= W)
        sv = _s32(a) + _s32(b)
    res = raw % W
    v = int(not -(1 << 31) <= sv < (1 << 31))
    return res, (res >> 31, int(res == 0), c, v)


def _block(base: int, n: int, mode: str):
    lo = {"ia": base, "ib": base + 4, "da": base - 4 * (n - 1), "db": base - 4 * n}[mode]
    after = base + 4 * n if mode in ("ia", "ib") else base - 4 * n
    return [(lo + 4 * i) % W for i in range(n)], after % W


def interpret_step(m: Machine, ins) -> tuple:
    """Execute one instruction in place; returns (executed, addresses)."""
    pc_value = (ins.address + 8) % W
    nxt = (ins.address + 4) % W
    if not _cond_holds(m, ins.cond):
        m.regs[PC] = nxt
        return False, ()
    op, ops = ins.mnemonic, ins.operands
    target = nxt
    addrs: tuple = ()
    if op in ("mov", "mvn", "and", "orr", "eor", "tst", "add", "sub", "rsb", "cmp", "cmn"):
        if op in ("mov", "mvn"):
            rd, a, src = ops[0].num, 0, ops[1]
        elif op in ("tst", "cmp", "cmn"):
            rd, a, src = None, _reg(m, ops[0].num, pc_value), ops[1]
        else:
            rd, a, src = ops[0].num, _reg(m, ops[1].num, pc_value), ops[2]
        b, carry = _op2(m, src, pc_value)
        flags = None
        if op == "mov":
            res = b
        elif op == "mvn":
            res = W - 1 - b
        elif op in ("and", "tst"):
            res = a & b
        elif op == "orr":
            res = a | b
        elif op == "eor":
            res = a ^ b
        elif op in ("add", "cmn"):
            res, flags = _arith(a, b, False)
        elif op in ("sub", "cmp"):
            res, flags = _arith(a, b, True)
        else:
            res, flags = _arith(b, a, True)
        if ins.sets_flags:
            if flags is None:
                m.n, m.z = res >> 31, int(res == 0)
                if carry is not None:
                    m.c = carry
            else:
                m.n, m.z, m.c, m.v = flags
        if rd is not None:
            if rd == PC:
                target = res
            else:
                m.regs[rd] = res
    elif op in ("mul", "mla"):
        res = m.regs[ops[1].num] * m.regs[ops[2].num]
        if op == "mla":
            res += m.regs[ops[3].num]
        res %= W
        m.regs[ops[0].num] = res
        if ins.sets_flags:
            m.n, m.z = res >> 31, int(res == 0)
    elif op == "smull":
        prod = _s32(m.regs[ops[2].num]) * _s32(m.regs[ops[3].num])
        u = prod % (1 << 64)
        m.regs[ops[0].num], m.regs[ops[1].num] = u % W, u >> 32
        if ins.sets_flags:
            m.n, m.z = int(prod < 0), int(prod == 0)
    elif op in ("ldr", "str"):
        mem = ops[1]
        base = _reg(m, mem.base, pc_value)
        off = 0 if mem.offset is None else _op2(m, mem.offset, pc_value)[0]
        moved = (base - off if mem.subtract else base + off) % W
        ea = moved if mem.pre else base
        addrs = (ea,)
        if mem.writeback or not mem.pre:
            m.regs[mem.base] = moved
        if op == "ldr":
            val = m.load(ea)
            if ops[0].num == PC:
                target = val
            else:
                m.regs[ops[0].num] = val
        else:
            m.mem[ea] = _reg(m, ops[0].num, pc_value)
    elif op in ("ldm", "stm"):
        base_reg, regs = ops[0].num, ops[1].regs
        words, after = _block(m.regs[base_reg], len(regs), ins.mode)
        addrs = tuple(words)
        values = [_reg(m, r, pc_value) for r in regs]
        if ins.writeback:
            m.regs[base_reg] = after
        for r, a, v in zip(regs, words, values):
            if op == "ldm":
                if r == PC:
                    target = m.load(a)
                else:
                    m.regs[r] = m.load(a)
            else:
                m.mem[a] = v
    elif op == "b":
        target = ops[0].addr
    elif op == "bl":
        m.regs[LR] = nxt
        target = ops[0].addr
    elif op == "bx":
        target = m.regs[ops[0].num]
    else:  # pragma: no cover
        raise ValueError(op)
    m.regs[PC] = target
    return True, addrs


def interpret(program: Program, machine: Machine, *, max_steps: int = 1_000_000) -> list:
    """Run to the β sentinel or off the end; returns the concrete trace."""
    trace = []
    for _ in range(max_steps):
        pc = machine.regs[PC]
        if pc == BETA or pc not in program:
            return trace
        ins = program[pc]
        executed, addrs = interpret_step(machine, ins)
        trace.append(TraceTriple(ins, frozenset(addrs), executed))
    raise RuntimeError(f"no termination within {max_steps} steps")


def brute_force_wcet(program: Program, hw: HwConfig, inputs: Iterable, *, init_sp: int = 0x1000,
                     duration_choice="max") -> int:
    """Max over concrete inputs of the timed concrete trace.

    Each input is a dict ``{"regs": {...}, "mem": {...}, "flags": (...)}``
    (all keys optional).
    """
    best = 0
    for inp in inputs:
        m = Machine.start(program.entry, init_sp=init_sp, regs=inp.get("regs"), mem=inp.get("mem"),
                          flags=inp.get("flags", (0, 0, 0, 0)))
        best = max(best, run_trace(hw, interpret(program, m), duration_choice))
    return best


# ---------------------------------------------------------------------------
# enumeration over an abstract program

def abstract_traces(stepper, init, *, limit: int = 4096, max_len: int = 100_000) -> list:
    """Every complete trace of the sliced program, one path at a time."""
    out = []
    stack = [(init.pc, stepper.canon(init), ())]
    while stack:
        node, s, trace = stack.pop()
        if node == END:
            out.append(list(trace))
            if len(out) > limit:
                raise ValueError(f"more than {limit} paths")
            continue
        if len(trace) > max_len:
            raise ValueError("path too long to enumerate")
        for triple, dest, s2 in reversed(stepper.advance(node, s)):
            if isinstance(dest, tuple):
                raise ValueError(f"path leaves the graph at {node}")
            stack.append((dest, s2, trace + (triple,)))
    return out


def duration_assignments(hw: HwConfig, trace) -> list:
    """All E-stage duration sequences for ``trace``."""
    ranges = [e_durations(hw, t) for t in trace]
    return [list(c) for c in itertools.product(*ranges)]


def enumerate_wcet(stepper, init, hw: HwConfig, *, limit: int = 4096) -> dict:
    """Brute-force upper and lower bounds over paths × durations."""
    traces = abstract_traces(stepper, init, limit=limit)
    upper = lower = 0
    count = 0
    for trace in traces:
        for durs in duration_assignments(hw, trace):
            count += 1
            if count > limit:
                raise ValueError(f"more than {limit} resolutions")
            upper = max(upper, run_trace(hw, trace, durs))
        lower = max(lower, run_trace(hw, trace, "min"))
    return {"upper": upper, "lower": lower, "resolutions": count, "paths": len(traces)}
