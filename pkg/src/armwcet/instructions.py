"""Typed representation of the supported ARM v4T instruction subset."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Union

SP, LR, PC = 13, 14, 15

REG_NAMES = tuple([f"r{i}" for i in range(13)] + ["sp", "lr", "pc"])
REG_ALIASES = {name: i for i, name in enumerate(REG_NAMES)}
REG_ALIASES.update({f"r{i}": i for i in range(16)})
REG_ALIASES.update({"sb": 9, "sl": 10, "fp": 11, "ip": 12})

FLAGS = ("N", "Z", "C", "V")

# flags read by each condition code
COND_READS = {
    "al": (),
    "eq": ("Z",), "ne": ("Z",),
    "cs": ("C",), "cc": ("C",), "hs": ("C",), "lo": ("C",),
    "mi": ("N",), "pl": ("N",),
    "vs": ("V",), "vc": ("V",),
    "hi": ("C", "Z"), "ls": ("C", "Z"),
    "ge": ("N", "V"), "lt": ("N", "V"),
    "gt": ("Z", "N", "V"), "le": ("Z", "N", "V"),
}
CONDITIONS = tuple(COND_READS)

DATA_OPS = ("mov", "mvn", "add", "sub", "rsb", "and", "orr", "eor")
COMPARE_OPS = ("cmp", "cmn", "tst")
MUL_OPS = ("mul", "mla", "smull")
MEM_OPS = ("ldr", "str")
MULTI_OPS = ("ldm", "stm")
BRANCH_OPS = ("b", "bl", "bx")
MNEMONICS = DATA_OPS + COMPARE_OPS + MUL_OPS + MEM_OPS + MULTI_OPS + BRANCH_OPS

SHIFT_KINDS = ("lsl", "lsr", "asr", "ror")
LDM_MODES = ("ia", "ib", "da", "db")


def reg_name(r: int) -> str:
    return REG_NAMES[r]


@dataclass(frozen=True)
class Reg:
    num: int

    def render(self) -> str:
        return reg_name(self.num)


@dataclass(frozen=True)
class Imm:
    value: int

    def render(self) -> str:
        return f"#{self.value}"


@dataclass(frozen=True)
class Shifted:
    reg: int
    kind: str
    amount: int

    def render(self) -> str:
        return f"{reg_name(self.reg)}, {self.kind} #{self.amount}"


@dataclass(frozen=True)
class Mem:
    """Single-transfer address expression ``[base, offset]``.

    ``pre`` is False for post-indexed forms ``[base], #off``; those always
    write the updated address back into ``base``.
    """

    base: int
    offset: Union[Imm, Reg, Shifted, None] = None
    subtract: bool = False
    pre: bool = True
    writeback: bool = False

    def render(self) -> str:
        base = reg_name(self.base)
        off = ""
        if self.offset is not None:
            sign = "-" if self.subtract else ""
            if isinstance(self.offset, Imm):
                off = f"#{sign}{self.offset.value}"
            else:
                off = sign + self.offset.render()
        if not self.pre:
            return f"[{base}], {off}" if off else f"[{base}]"
        inner = f"[{base}, {off}]" if off else f"[{base}]"
        return inner + ("!" if self.writeback else "")


@dataclass(frozen=True)
class RegList:
    regs: tuple

    def render(self) -> str:
        return "{" + ", ".join(reg_name(r) for r in self.regs) + "}"


@dataclass(frozen=True)
class Target:
    addr: int

    def render(self) -> str:
        return str(self.addr)


Operand = Union[Reg, Imm, Shifted, Mem, RegList, Target]


@dataclass(frozen=True)
class Instruction:
    """One labelled instruction.

    ``mode``/``writeback`` are only meaningful for ldm/stm.  ``raw_text`` is
    kept for reporting and does not take part in equality.
    """

    address: int
    mnemonic: str
    cond: str = "al"
    sets_flags: bool = False
    operands: tuple = ()
    mode: Optional[str] = None
    writeback: bool = False
    raw_text: str = field(default="", compare=False, repr=False)

    # -- classification -------------------------------------------------

    @property
    def conditional(self) -> bool:
        return self.cond != "al"

    @property
    def is_load(self) -> bool:
        return self.mnemonic in ("ldr", "ldm")

    @property
    def is_store(self) -> bool:
        return self.mnemonic in ("str", "stm")

    @property
    def is_memory(self) -> bool:
        return self.mnemonic in MEM_OPS or self.mnemonic in MULTI_OPS

    @cached_property
    def mem_base(self) -> Optional[int]:
        if self.mnemonic in MEM_OPS:
            return self.operands[1].base
        if self.mnemonic in MULTI_OPS:
            return self.operands[0].num
        return None

    @cached_property
    def writes_pc(self) -> bool:
        m = self.mnemonic
        if m in BRANCH_OPS:
            return True
        if m in DATA_OPS or m in MUL_OPS:
            return self.operands[0] == Reg(PC)
        if m == "ldr":
            return self.operands[0] == Reg(PC)
        if m == "ldm":
            return PC in self.operands[1].regs
        return False

    @property
    def is_direct_branch(self) -> bool:
        return self.mnemonic in ("b", "bl")

    @property
    def is_indirect(self) -> bool:
        """Control transfer whose target is computed at run time."""
        return self.writes_pc and not self.is_direct_branch

    @property
    def branch_target(self) -> Optional[int]:
        if self.is_direct_branch:
            return self.operands[0].addr
        return None

    @cached_property
    def transfer_count(self) -> int:
        """Number of words moved by a memory instruction (0 otherwise)."""
        if self.mnemonic in MEM_OPS:
            return 1
        if self.mnemonic in MULTI_OPS:
            return len(self.operands[1].regs)
        return 0

    @property
    def is_return(self) -> bool:
        if self.mnemonic == "bx":
            return self.operands[0] == Reg(LR)
        if self.mnemonic == "mov":
            return self.operands[0] == Reg(PC) and self.operands[1] == Reg(LR)
        return self.mnemonic == "ldm" and self.mem_base == SP and PC in self.operands[1].regs

    @property
    def duration_class(self) -> str:
        return self.mnemonic if self.mnemonic in MUL_OPS else "default"

    # -- rendering ------------------------------------------------------

    def render_mnemonic(self) -> str:
        text = self.mnemonic
        if self.mode is not None:
            text += self.mode
        if self.sets_flags and self.mnemonic not in COMPARE_OPS:
            text += "s"
        if self.cond != "al":
            text += self.cond
        return text

    def render(self) -> str:
        if self.mnemonic in MULTI_OPS:
            base = reg_name(self.operands[0].num) + ("!" if self.writeback else "")
            ops = f"{base}, {self.operands[1].render()}"
        else:
            ops = ", ".join(op.render() for op in self.operands)
        return f"{self.render_mnemonic()} {ops}".rstrip()

    def __str__(self) -> str:
        return f"{self.address}: {self.render()}"
