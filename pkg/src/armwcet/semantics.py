"""Instruction semantics over the extended domain (known words plus ⊥).

A value is an ``int`` in ``[0, 2**32)`` or ``None`` for ⊥.  Memory outside
the stack is never tracked: loads through a non-sp base yield ⊥ and stores
through one are dropped (their addresses still reach the trace).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

from .errors import UndefinedMemoryBase
from .instructions import (
    COMPARE_OPS,
    COND_READS,
    DATA_OPS,
    FLAGS,
    LR,
    MEM_OPS,
    MUL_OPS,
    MULTI_OPS,
    PC,
    REG_NAMES,
    SP,
    Imm,
    Instruction,
    Reg,
    Shifted,
)

MASK = 0xFFFFFFFF
BETA = 3
DEFAULT_INIT_SP = 0x1000

Value = Optional[int]
N, Z, C, V = range(4)

LOGICAL_OPS = ("mov", "mvn", "and", "orr", "eor", "tst")


def sentinel() -> int:
    """Return address seeded into lr before entry: never a valid instruction address."""
    return BETA


def _signed(x: int) -> int:
    return x - (1 << 32) if x & 0x80000000 else x


# ---------------------------------------------------------------------------
# state

@dataclass(frozen=True)
class SymState:
    """Registers, NZCV flags and the known stack cells.

    ``stack`` is a sorted tuple of ``(address, value)`` pairs holding only
    known cells; absent addresses read as ⊥.
    """

    regs: tuple
    flags: tuple = (0, 0, 0, 0)
    stack: tuple = ()

    @property
    def pc(self) -> Value:
        return self.regs[PC]

    @property
    def sp(self) -> Value:
        return self.regs[SP]

    def reg(self, r: int) -> Value:
        return self.regs[r]

    def stack_get(self, addr: int) -> Value:
        for a, v in self.stack:
            if a == addr:
                return v
        return None

    def set_regs(self, updates: dict) -> "SymState":
        regs = list(self.regs)
        for r, v in updates.items():
            regs[r] = None if v is None else v & MASK
        return replace(self, regs=tuple(regs))

    def set_stack(self, updates: dict) -> "SymState":
        cells = dict(self.stack)
        for a, v in updates.items():
            if v is None:
                cells.pop(a, None)
            else:
                cells[a] = v & MASK
        return replace(self, stack=tuple(sorted(cells.items())))

    def describe(self) -> dict:
        return {
            "regs": {REG_NAMES[i]: v for i, v in enumerate(self.regs)},
            "flags": dict(zip(FLAGS, self.flags)),
            "stack": dict(self.stack),
        }


def initial_state(entry: int, *, init_sp: int = DEFAULT_INIT_SP, regs: Optional[dict] = None,
                  flags=(0, 0, 0, 0), lr: Value = BETA) -> SymState:
    """The initial state: known registers and flags, empty (⊥) memory.

    ``regs`` overrides individual registers by number; ``None`` marks an
    input as ⊥.
    """
    values = [0] * 16
    values[SP] = init_sp
    values[LR] = lr
    values[PC] = entry
    state = SymState(tuple(values), tuple(flags), ())
    if regs:
        state = state.set_regs(regs)
    return state


@dataclass(frozen=True)
class TraceTriple:
    """What the hardware sees of one instruction: (instr, addresses, executed)."""

    instr: Instruction
    addrs: frozenset
    executed: bool

    def key(self):
        return (self.instr.address, tuple(sorted(self.addrs)), self.executed)


# ---------------------------------------------------------------------------
# conditions

def eval_cond(flags, cond: str) -> Optional[bool]:
    """Decode a condition code; ⊥ (None) when any flag it reads is ⊥."""
    if cond == "al":
        return True
    n, z, c, v = flags
    read = {"N": n, "Z": z, "C": c, "V": v}
    if any(read[f] is None for f in COND_READS[cond]):
        return None
    if cond == "eq":
        return z == 1
    if cond == "ne":
        return z == 0
    if cond in ("cs", "hs"):
        return c == 1
    if cond in ("cc", "lo"):
        return c == 0
    if cond == "mi":
        return n == 1
    if cond == "pl":
        return n == 0
    if cond == "vs":
        return v == 1
    if cond == "vc":
        return v == 0
    if cond == "hi":
        return c == 1 and z == 0
    if cond == "ls":
        return c == 0 or z == 1
    if cond == "ge":
        return n == v
    if cond == "lt":
        return n != v
    if cond == "gt":
        return z == 0 and n == v
    if cond == "le":
        return z == 1 or n != v
    raise ValueError(f"unknown condition {cond!r}")


# ---------------------------------------------------------------------------
# operand evaluation

def read_reg(s: SymState, r: int, ins: Instruction) -> Value:
    # pc reads as the instruction address + 8
    return (ins.address + 8) & MASK if r == PC else s.regs[r]


_KEEP = "keep"  # shifter leaves C unchanged


def _shift(value: Value, kind: str, amount: int):
    """Barrel shifter by immediate; returns (result, carry_out or _KEEP)."""
    if value is None:
        return None, (None if amount else _KEEP)
    if amount == 0:
        return value, _KEEP
    if kind == "lsl":
        if amount >= 32:
            return 0, (value & 1 if amount == 32 else 0)
        return (value << amount) & MASK, (value >> (32 - amount)) & 1
    if kind == "lsr":
        if amount >= 32:
            return 0, ((value >> 31) & 1 if amount == 32 else 0)
        return value >> amount, (value >> (amount - 1)) & 1
    if kind == "asr":
        sv = _signed(value)
        if amount >= 32:
            res = MASK if sv < 0 else 0
            return res, res & 1
        return (sv >> amount) & MASK, (sv >> (amount - 1)) & 1
    if kind == "ror":
        amount %= 32
        if amount == 0:
            return value, (value >> 31) & 1
        res = ((value >> amount) | (value << (32 - amount))) & MASK
        return res, (res >> 31) & 1
    raise ValueError(kind)


def eval_operand2(s: SymState, op, ins: Instruction):
    """Value and shifter carry-out of a flexible second operand."""
    if isinstance(op, Imm):
        value = op.value & MASK
        # rotated immediates (>= 256) set C from bit 31
        return value, ((value >> 31) & 1 if value > 255 else _KEEP)
    if isinstance(op, Reg):
        return read_reg(s, op.num, ins), _KEEP
    if isinstance(op, Shifted):
        return _shift(read_reg(s, op.reg, ins), op.kind, op.amount)
    raise TypeError(f"bad operand {op!r}")


def _nz(result: int):
    return (result >> 31) & 1, int(result == 0)


def _add_flags(a: int, b: int, carry_in: int = 0):
    total = a + b + carry_in
    res = total & MASK
    n, z = _nz(res)
    c = int(total > MASK)
    v = int(((a ^ res) & (b ^ res) & 0x80000000) != 0)
    return res, (n, z, c, v)


def _sub_flags(a: int, b: int):
    # a - b == a + ~b + 1
    return _add_flags(a, (~b) & MASK, 1)


# ---------------------------------------------------------------------------
# memory addressing

def _single_address(s: SymState, ins: Instruction):
    """Effective address and written-back base for ldr/str."""
    mem = ins.operands[1]
    base = read_reg(s, mem.base, ins)
    if mem.offset is None:
        off = 0
    else:
        off, _ = eval_operand2(s, mem.offset, ins)
    if base is None or off is None:
        raise UndefinedMemoryBase(ins.address)
    updated = (base - off if mem.subtract else base + off) & MASK
    ea = updated if mem.pre else base
    wb = updated if (mem.writeback or not mem.pre) else None
    return ea, wb


def _multi_addresses(s: SymState, ins: Instruction):
    """Ascending word addresses and written-back base for ldm/stm."""
    base = read_reg(s, ins.operands[0].num, ins)
    if base is None:
        raise UndefinedMemoryBase(ins.address)
    n = len(ins.operands[1].regs)
    start = {"ia": base, "ib": base + 4, "da": base - 4 * n + 4, "db": base - 4 * n}[ins.mode]
    addrs = [(start + 4 * k) & MASK for k in range(n)]
    wb = (base + 4 * n if ins.mode in ("ia", "ib") else base - 4 * n) & MASK
    return addrs, (wb if ins.writeback else None)


def memory_addresses(s: SymState, ins: Instruction) -> frozenset:
    """Byte addresses of the words ``ins`` would touch in ``s``."""
    if ins.mnemonic in MEM_OPS:
        return frozenset([_single_address(s, ins)[0]])
    if ins.mnemonic in MULTI_OPS:
        return frozenset(_multi_addresses(s, ins)[0])
    return frozenset()


# ---------------------------------------------------------------------------
# execution

def execute(s: SymState, ins: Instruction) -> SymState:
    """Apply ``ins`` as if its condition held."""
    m = ins.mnemonic
    ops = ins.operands
    next_pc = (ins.address + 4) & MASK
    regs: dict = {}
    flags = list(s.flags)
    stack: dict = {}
    new_pc = next_pc

    if m in DATA_OPS or m in COMPARE_OPS:
        if m in ("mov", "mvn"):
            rd, a = ops[0].num, None
            b, carry = eval_operand2(s, ops[1], ins)
        elif m in COMPARE_OPS:
            rd = None
            a = read_reg(s, ops[0].num, ins)
            b, carry = eval_operand2(s, ops[1], ins)
        else:
            rd = ops[0].num
            a = read_reg(s, ops[1].num, ins)
            b, carry = eval_operand2(s, ops[2], ins)
        known = b is not None and (a is not None or m in ("mov", "mvn"))
        res = None
        fl = None
        if known:
            if m == "mov":
                res = b
            elif m == "mvn":
                res = (~b) & MASK
            elif m in ("and", "tst"):
                res = a & b
            elif m == "orr":
                res = a | b
            elif m == "eor":
                res = a ^ b
            elif m in ("add", "cmn"):
                res, fl = _add_flags(a, b)
            elif m in ("sub", "cmp"):
                res, fl = _sub_flags(a, b)
            elif m == "rsb":
                res, fl = _sub_flags(b, a)
        if ins.sets_flags:
            if m in LOGICAL_OPS:
                if res is None:
                    flags[N] = flags[Z] = None
                else:
                    flags[N], flags[Z] = _nz(res)
                if carry is not _KEEP:
                    flags[C] = carry
            elif fl is None:
                flags = [None] * 4
            else:
                flags = list(fl)
        if rd is not None:
            if rd == PC:
                new_pc = res
            else:
                regs[rd] = res

    elif m in MUL_OPS:
        vals = [read_reg(s, op.num, ins) for op in ops]
        if m == "smull":
            lo, hi, rm, rs = ops[0].num, ops[1].num, vals[2], vals[3]
            if rm is None or rs is None:
                regs[lo] = regs[hi] = None
                res64 = None
            else:
                res64 = (_signed(rm) * _signed(rs)) & ((1 << 64) - 1)
                regs[lo] = res64 & MASK
                regs[hi] = res64 >> 32
            if ins.sets_flags:
                if res64 is None:
                    flags[N] = flags[Z] = None
                else:
                    flags[N], flags[Z] = (res64 >> 63) & 1, int(res64 == 0)
                flags[C] = None
        else:
            rd = ops[0].num
            acc = vals[3] if m == "mla" else 0
            if None in (vals[1], vals[2], acc):
                res = None
            else:
                res = (vals[1] * vals[2] + acc) & MASK
            if rd == PC:
                new_pc = res
            else:
                regs[rd] = res
            if ins.sets_flags:
                if res is None:
                    flags[N] = flags[Z] = None
                else:
                    flags[N], flags[Z] = _nz(res)
                flags[C] = None

    elif m in MEM_OPS:
        ea, wb = _single_address(s, ins)
        base = ins.operands[1].base
        rt = ops[0].num
        if wb is not None:
            regs[base] = wb
        if m == "ldr":
            val = s.stack_get(ea) if base == SP else None
            if rt == PC:
                new_pc = val
            else:
                regs[rt] = val
        else:
            if base == SP:
                stack[ea] = read_reg(s, rt, ins)

    elif m in MULTI_OPS:
        addrs, wb = _multi_addresses(s, ins)
        base = ops[0].num
        if wb is not None:
            regs[base] = wb
        for r, a in zip(ops[1].regs, addrs):
            if m == "ldm":
                val = s.stack_get(a) if base == SP else None
                if r == PC:
                    new_pc = val
                else:
                    regs[r] = val
            elif base == SP:
                stack[a] = read_reg(s, r, ins)

    elif m == "b":
        new_pc = ops[0].addr
    elif m == "bl":
        regs[LR] = next_pc
        new_pc = ops[0].addr
    elif m == "bx":
        new_pc = read_reg(s, ops[0].num, ins)
    else:  # pragma: no cover
        raise ValueError(f"no semantics for {m}")

    regs[PC] = new_pc
    out = s.set_regs(regs)
    if stack:
        out = out.set_stack(stack)
    if tuple(flags) != s.flags:
        out = replace(out, flags=tuple(flags))
    return out


def _skip(s: SymState, ins: Instruction) -> SymState:
    return s.set_regs({PC: ins.address + 4})


def trace_triple(s: SymState, ins: Instruction, executed: Optional[bool] = None) -> TraceTriple:
    """The hardware-visible triple of ``ins`` in ``s``.

    ``executed`` resolves a ⊥ condition; left as None it is taken from the
    flags of ``s`` (a ⊥ condition then counts as executed).
    """
    if executed is None:
        executed = eval_cond(s.flags, ins.cond) is not False
    addrs = memory_addresses(s, ins) if executed else frozenset()
    return TraceTriple(ins, addrs, bool(executed))


def step_traced(s: SymState, ins: Instruction):
    """Successors of ``s`` with their trace triples: a list of 1 or 2 pairs."""
    verdict = eval_cond(s.flags, ins.cond)
    out = []
    if verdict is not False:
        out.append((trace_triple(s, ins, True), execute(s, ins)))
    if verdict is not True:
        out.append((TraceTriple(ins, frozenset(), False), _skip(s, ins)))
    return out


def step(s: SymState, ins: Instruction):
    """Successor states (1, or 2 when the condition is ⊥)."""
    return [state for _, state in step_traced(s, ins)]


# ---------------------------------------------------------------------------
# REF / DEF

@dataclass(frozen=True)
class RefDef:
    """Variables read and written by one instruction.

    ``must_defs`` are the definitions that certainly overwrite their
    variable (used as kills in reaching definitions); ``resolved`` lists
    referenced variables whose value is known statically, so the slicer
    does not chase their definitions.
    """

    refs: frozenset
    defs: frozenset
    must_defs: frozenset = frozenset()
    resolved: frozenset = frozenset()

    @property
    def uses(self) -> frozenset:
        return self.refs - self.resolved


def stack_var(addr: int) -> str:
    return f"stack_{addr}"


def is_stack_var(var: str) -> bool:
    return var == "stack" or var.startswith("stack_")


def stack_addr(var: str) -> Optional[int]:
    return int(var[6:]) if var.startswith("stack_") else None


def _reg_refs(op) -> set:
    if isinstance(op, Reg):
        return {op.num}
    if isinstance(op, Shifted):
        return {op.reg}
    return set()


def flags_written(ins: Instruction) -> tuple:
    """Flags an executed ``ins`` can change."""
    if not ins.sets_flags:
        return ()
    m = ins.mnemonic
    if m in LOGICAL_OPS:
        op = ins.operands[-1]
        shifter_carry = (isinstance(op, Shifted) and op.amount != 0) or (
            isinstance(op, Imm) and (op.value & MASK) > 255)
        return ("N", "Z", "C") if shifter_carry else ("N", "Z")
    if m in MUL_OPS:
        return ("N", "Z", "C")
    return FLAGS


def ref_def(ins: Instruction) -> RefDef:
    """Coarse REF/DEF sets; the stack is the single variable ``stack``."""
    m = ins.mnemonic
    ops = ins.operands
    refs: set = set()
    defs: set = {PC}
    var_refs: set = set(COND_READS[ins.cond])
    var_defs: set = set(flags_written(ins))

    if m in ("mov", "mvn"):
        refs |= _reg_refs(ops[1])
        defs.add(ops[0].num)
    elif m in COMPARE_OPS:
        refs |= {ops[0].num} | _reg_refs(ops[1])
    elif m in DATA_OPS:
        refs |= {ops[1].num} | _reg_refs(ops[2])
        defs.add(ops[0].num)
    elif m == "smull":
        refs |= {ops[2].num, ops[3].num}
        defs |= {ops[0].num, ops[1].num}
    elif m in MUL_OPS:
        refs |= {op.num for op in ops[1:]}
        defs.add(ops[0].num)
    elif m in MEM_OPS:
        mem = ops[1]
        refs.add(mem.base)
        if mem.offset is not None:
            refs |= _reg_refs(mem.offset)
        if mem.writeback or not mem.pre:
            defs.add(mem.base)
        if m == "ldr":
            defs.add(ops[0].num)
            if mem.base == SP:
                var_refs.add("stack")
        else:
            refs.add(ops[0].num)
            if mem.base == SP:
                var_defs.add("stack")
    elif m in MULTI_OPS:
        base = ops[0].num
        refs.add(base)
        if ins.writeback:
            defs.add(base)
        if m == "ldm":
            defs |= set(ops[1].regs)
            if base == SP:
                var_refs.add("stack")
        else:
            refs |= set(ops[1].regs)
            if base == SP:
                var_defs.add("stack")
    elif m == "bl":
        defs.add(LR)
    elif m == "bx":
        refs.add(ops[0].num)

    refs.discard(PC)  # pc reads are the constant address + 8
    ref_vars = frozenset({REG_NAMES[r] for r in refs} | var_refs)
    def_vars = frozenset({REG_NAMES[r] for r in defs} | var_defs)
    must = frozenset() if ins.conditional else def_vars - {"stack"}
    return RefDef(ref_vars, def_vars, must)


def address_registers(ins: Instruction) -> frozenset:
    """Register variables that determine the addresses ``ins`` touches."""
    if ins.mnemonic in MEM_OPS:
        mem = ins.operands[1]
        regs = {mem.base}
        if mem.offset is not None:
            regs |= _reg_refs(mem.offset)
    elif ins.mnemonic in MULTI_OPS:
        regs = {ins.operands[0].num}
    else:
        return frozenset()
    regs.discard(PC)
    return frozenset(REG_NAMES[r] for r in regs)


def target_registers(ins: Instruction) -> frozenset:
    """Variables that determine the target of an indirect control transfer."""
    if not ins.is_indirect:
        return frozenset()
    return ref_def(ins).refs - set(COND_READS[ins.cond])
