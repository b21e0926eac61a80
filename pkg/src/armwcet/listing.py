"""Parse objdump-style (or plain assembly) listings into a :class:`Program`."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

from .errors import (
    DuplicateAddress,
    MalformedLine,
    NonAlignedAddress,
    UnsupportedMnemonic,
)
from .instructions import (
    BRANCH_OPS,
    COMPARE_OPS,
    CONDITIONS,
    DATA_OPS,
    MEM_OPS,
    MNEMONICS,
    MUL_OPS,
    MULTI_OPS,
    REG_ALIASES,
    SHIFT_KINDS,
    SP,
    Imm,
    Instruction,
    Mem,
    Reg,
    RegList,
    Shifted,
    Target,
)


@dataclass
class Program:
    """A finite set of labelled instructions plus its symbol table."""

    instructions: dict = field(default_factory=dict)
    symbols: dict = field(default_factory=dict)
    entry: int = 0

    def __len__(self):
        return len(self.instructions)

    def __getitem__(self, addr) -> Instruction:
        return self.instructions[addr]

    def __contains__(self, addr) -> bool:
        return addr in self.instructions

    def __iter__(self):
        return iter(self.instructions.values())

    @property
    def addresses(self):
        return list(self.instructions)

    def render(self) -> str:
        """Canonical text: hex symbol lines, decimal addresses, no hex column."""
        by_addr = {}
        for name, addr in sorted(self.symbols.items(), key=lambda kv: (kv[1], kv[0])):
            by_addr.setdefault(addr, []).append(name)
        lines = []
        for addr, ins in self.instructions.items():
            for name in by_addr.get(addr, ()):
                lines.append(f"{addr:08x} <{name}>:")
            lines.append(f"{addr}: {ins.render()}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class AssumptionWarning:
    kind: str  # "non-sp-base" or "recursion"
    address: int
    message: str


# ---------------------------------------------------------------------------
# line-level grammar

_SYMBOL_RE = re.compile(r"^\s*(?:0x)?([0-9a-fA-F]+)\s+<([^>]+)>:\s*$")
_LABEL_RE = re.compile(r"^\s*([A-Za-z_.$][\w.$]*):\s*$")
_ADDR_RE = re.compile(r"^\s*(0x[0-9a-fA-F]+|[0-9a-fA-F]+)\s*:?\s+(.*)$")
_HEX_WORD_RE = re.compile(r"^[0-9a-fA-F]{8}$")
_INT_RE = re.compile(r"^[+-]?(0x[0-9a-fA-F]+|\d+)$")
_TARGET_RE = re.compile(r"^(\S+)?\s*(?:<([^>+]+)(?:\+0x([0-9a-fA-F]+))?>)?$")

_LDM_ALIASES = {"ldm": {"fd": "ia", "ed": "ib", "fa": "da", "ea": "db"},
                "stm": {"fd": "db", "ed": "da", "fa": "ib", "ea": "ia"}}
_COND_ALIASES = {"hs": "cs", "lo": "cc"}
_ALL_BASES = sorted(MNEMONICS + ("push", "pop"), key=len, reverse=True)


def _strip_comment(line: str) -> str:
    for marker in (";", "@", "//", "/*"):
        pos = line.find(marker)
        if pos >= 0:
            line = line[:pos]
    return line.rstrip()


def _parse_int(text: str) -> int:
    text = text.strip()
    neg = text.startswith("-")
    text = text.lstrip("+-")
    value = int(text, 16) if text.lower().startswith("0x") else int(text, 10)
    return -value if neg else value


def _split_suffix(base: str, rest: str):
    """Return (mode, cond, s) for a mnemonic suffix or None when invalid."""
    allow_s = base in DATA_OPS or base in MUL_OPS or base in COMPARE_OPS
    modes = ()
    if base in MULTI_OPS:
        modes = ("ia", "ib", "da", "db") + tuple(_LDM_ALIASES[base])

    def take(text, options):
        for opt in options:
            if opt and text.startswith(opt):
                yield opt, text[len(opt):]
        yield None, text

    conds = CONDITIONS + tuple(_COND_ALIASES)
    # both pre-UAL (addeqs, ldmeqia) and UAL (addseq, ldmiaeq) orders
    for first, second in (("mode", "cond"), ("cond", "mode"), ("s", "cond"), ("cond", "s")):
        opts = {"mode": modes, "cond": conds, "s": ("s",) if allow_s else ()}
        for a, tail in take(rest, opts[first]):
            for b, tail2 in take(tail, opts[second]):
                if tail2:
                    continue
                parts = {first: a, second: b}
                mode = parts.get("mode")
                if mode is not None and base in _LDM_ALIASES and mode in _LDM_ALIASES[base]:
                    mode = _LDM_ALIASES[base][mode]
                cond = parts.get("cond") or "al"
                cond = _COND_ALIASES.get(cond, cond)
                return mode, cond, bool(parts.get("s"))
    return None


def split_mnemonic(token: str):
    """Split e.g. ``addeqs`` into ``("add", None, "eq", True)``."""
    token = token.lower()
    for base in _ALL_BASES:
        if token.startswith(base):
            parsed = _split_suffix(base, token[len(base):])
            if parsed is not None:
                return (base,) + parsed
    return None


def _split_operands(text: str):
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch in "[{":
            depth += 1
        elif ch in "]}":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur).strip())
            cur = []
        else:
            cur.append(ch)
    tail = "".join(cur).strip()
    if tail or parts:
        parts.append(tail)
    return parts


class _LineParser:
    def __init__(self, line_no: int):
        self.line_no = line_no

    def fail(self, detail=""):
        raise MalformedLine(self.line_no, detail)

    def reg(self, text: str) -> int:
        num = REG_ALIASES.get(text.strip().lower())
        if num is None:
            self.fail(f"expected register, got {text!r}")
        return num

    def imm(self, text: str) -> int:
        text = text.strip()
        if not text.startswith("#") or not _INT_RE.match(text[1:].strip()):
            self.fail(f"expected immediate, got {text!r}")
        return _parse_int(text[1:])

    def shift(self, text: str):
        bits = text.strip().lower().split(None, 1)
        if len(bits) != 2 or bits[0] not in SHIFT_KINDS:
            self.fail(f"bad shift {text!r}")
        return bits[0], self.imm(bits[1])

    def flexible(self, parts):
        """Operand 2: ``#imm``, ``reg``, ``reg, lsl #n`` or ``reg lsl #n``."""
        if not parts:
            self.fail("missing operand")
        head = parts[0].strip()
        if head.startswith("#"):
            if len(parts) != 1:
                self.fail("trailing operands")
            return Imm(self.imm(head))
        bits = head.split(None, 1)
        if len(bits) == 2:
            if len(parts) != 1:
                self.fail("trailing operands")
            kind, amount = self.shift(bits[1])
            return Shifted(self.reg(bits[0]), kind, amount)
        if len(parts) == 2:
            kind, amount = self.shift(parts[1])
            return Shifted(self.reg(head), kind, amount)
        if len(parts) != 1:
            self.fail("trailing operands")
        return Reg(self.reg(head))

    def offset(self, parts):
        """Offset of an address expression; returns (operand, subtract)."""
        head = parts[0].strip()
        if head.startswith("#"):
            if len(parts) != 1:
                self.fail("trailing operands")
            value = self.imm(head)
            return Imm(abs(value)), value < 0 or head[1:].strip().startswith("-")
        subtract = head.startswith("-")
        parts = [head.lstrip("+-")] + list(parts[1:])
        op = self.flexible(parts)
        return op, subtract

    def mem(self, parts):
        text = parts[0].strip()
        if not text.startswith("["):
            self.fail(f"expected address expression, got {text!r}")
        close = text.find("]")
        if close < 0:
            self.fail("unterminated address expression")
        inner = _split_operands(text[1:close])
        after = text[close + 1:].strip()
        base = self.reg(inner[0])
        if len(parts) > 1:
            # post-indexed: [rn], #off
            if len(inner) != 1 or after:
                self.fail("bad post-indexed form")
            off, sub = self.offset(parts[1:])
            return Mem(base, off, sub, pre=False, writeback=True)
        writeback = after == "!"
        if after and not writeback:
            self.fail(f"unexpected {after!r}")
        if len(inner) == 1:
            return Mem(base, None, False, True, writeback)
        off, sub = self.offset(inner[1:])
        return Mem(base, off, sub, True, writeback)

    def reglist(self, text: str):
        text = text.strip()
        if not (text.startswith("{") and text.endswith("}")):
            self.fail(f"expected register list, got {text!r}")
        regs = set()
        for item in text[1:-1].split(","):
            item = item.strip()
            if not item:
                continue
            if "-" in item:
                lo, hi = (self.reg(x) for x in item.split("-", 1))
                regs.update(range(lo, hi + 1))
            else:
                regs.add(self.reg(item))
        if not regs:
            self.fail("empty register list")
        return RegList(tuple(sorted(regs)))


def _decode(line_no, address, token, operand_text, pending_targets):
    split = split_mnemonic(token)
    if split is None:
        raise UnsupportedMnemonic(line_no, token)
    base, mode, cond, sets_flags = split
    lp = _LineParser(line_no)
    parts = _split_operands(operand_text)
    writeback = False

    if base in ("push", "pop"):
        if len(parts) != 1:
            lp.fail("push/pop take one register list")
        regs = lp.reglist(parts[0])
        mnemonic, mode = ("stm", "db") if base == "push" else ("ldm", "ia")
        operands = (Reg(SP), regs)
        writeback = True
    elif base in MULTI_OPS:
        if len(parts) != 2:
            lp.fail("ldm/stm take a base and a register list")
        b = parts[0].strip()
        writeback = b.endswith("!")
        operands = (Reg(lp.reg(b.rstrip("!"))), lp.reglist(parts[1]))
        mnemonic = base
        if mode is None:
            # bare ldm increments, bare stm decrements after (stm sp,{r0,r1} touches sp and sp-4)
            mode = "ia" if base == "ldm" else "da"
    elif base in ("mov", "mvn"):
        if len(parts) < 2:
            lp.fail("missing operands")
        operands = (Reg(lp.reg(parts[0])), lp.flexible(parts[1:]))
        mnemonic = base
    elif base in DATA_OPS:
        if len(parts) < 2:
            lp.fail("missing operands")
        rd = Reg(lp.reg(parts[0]))
        if len(parts) == 2 or (len(parts) == 3 and parts[2].strip().lower()[:3] in SHIFT_KINDS):
            # two-operand shorthand: add rd, op2
            operands = (rd, rd, lp.flexible(parts[1:]))
        else:
            operands = (rd, Reg(lp.reg(parts[1])), lp.flexible(parts[2:]))
        mnemonic = base
    elif base in COMPARE_OPS:
        if len(parts) < 2:
            lp.fail("missing operands")
        operands = (Reg(lp.reg(parts[0])), lp.flexible(parts[1:]))
        mnemonic = base
        sets_flags = True
    elif base in MUL_OPS:
        want = {"mul": 3, "mla": 4, "smull": 4}[base]
        if len(parts) != want:
            lp.fail(f"{base} takes {want} registers")
        operands = tuple(Reg(lp.reg(p)) for p in parts)
        mnemonic = base
    elif base in MEM_OPS:
        if len(parts) < 2:
            lp.fail("missing operands")
        operands = (Reg(lp.reg(parts[0])), lp.mem(parts[1:]))
        mnemonic = base
    elif base == "bx":
        if len(parts) != 1:
            lp.fail("bx takes one register")
        operands = (Reg(lp.reg(parts[0])),)
        mnemonic = base
    elif base in BRANCH_OPS:
        if len(parts) != 1 or not parts[0]:
            lp.fail("branch takes one target")
        operands = (Target(-1),)
        pending_targets.append((address, line_no, parts[0].strip()))
        mnemonic = base
    else:  # pragma: no cover - table and dispatch agree
        raise UnsupportedMnemonic(line_no, token)
    return Instruction(address, mnemonic, cond, sets_flags, operands, mode, writeback)


def _resolve_target(text, symbols, labels, line_no, hex_addresses=False):
    m = _TARGET_RE.match(text)
    if not m:
        raise MalformedLine(line_no, f"bad branch target {text!r}")
    head, sym, off = m.groups()
    if sym is not None and sym in symbols:
        return symbols[sym] + (int(off, 16) if off else 0)
    if head is None:
        raise MalformedLine(line_no, f"bad branch target {text!r}")
    if hex_addresses and re.match(r"^[0-9a-fA-F]+$", head):
        return int(head, 16)
    if _INT_RE.match(head):
        return _parse_int(head)
    if head in labels:
        return labels[head]
    if head in symbols:
        return symbols[head]
    raise MalformedLine(line_no, f"unknown branch target {text!r}")


def parse_listing(text: str, *, entry=None, hex_addresses: bool = False, base: int = 0) -> Program:
    """Parse a disassembly listing.

    Accepts objdump output (``ADDR: HEX mnemonic operands``), the compact
    short form (``ADDR mnemonic operands``) and unaddressed assembly source
    with ``label:`` lines, which is laid out from ``base`` in steps of 4.
    Addresses are decimal unless ``0x``-prefixed or ``hex_addresses`` is set;
    symbol-line addresses are always hex.

    ``entry`` may be a symbol name or an address; default is ``main`` when
    present, else the first instruction.
    """
    instructions: dict = {}
    symbols: dict = {}
    labels: dict = {}
    pending_targets: list = []
    next_addr = base
    last_addr = None
    last_line = 0

    for line_no, raw in enumerate(text.splitlines(), start=1):
        last_line = line_no
        m = _SYMBOL_RE.match(raw.split(";")[0].split("/*")[0])
        if m:
            addr = int(m.group(1), 16)
            symbols[m.group(2)] = addr
            next_addr = max(next_addr, addr)
            continue
        line = _strip_comment(raw)
        if not line.strip():
            continue
        stripped = line.strip()
        if stripped.startswith("."):
            continue  # assembler directive
        m = _LABEL_RE.match(line)
        if m:
            labels[m.group(1)] = next_addr
            continue

        m = _ADDR_RE.match(line)
        address = None
        body = stripped
        if m and (":" in line.split()[0] or re.match(r"^\s*(0x[0-9a-fA-F]+|\d+)\s", line)):
            atext = m.group(1)
            if atext.lower().startswith("0x") or hex_addresses:
                address = int(atext, 16)
            elif atext.isdigit():
                address = int(atext)
            else:
                raise MalformedLine(line_no, f"bad address {atext!r}")
            body = m.group(2).strip()
        if address is None:
            address = next_addr

        fields = body.split(None, 1)
        if fields and _HEX_WORD_RE.match(fields[0]) and len(fields) == 2 and split_mnemonic(fields[0]) is None:
            fields = fields[1].split(None, 1)
        if not fields:
            raise MalformedLine(line_no, "missing mnemonic")
        token = fields[0]
        operand_text = fields[1] if len(fields) > 1 else ""

        if address % 4:
            raise NonAlignedAddress(address)
        if address in instructions:
            raise DuplicateAddress(address)
        if last_addr is not None and address < last_addr:
            raise MalformedLine(line_no, "addresses must increase")
        ins = _decode(line_no, address, token, operand_text, pending_targets)
        instructions[address] = Instruction(
            ins.address, ins.mnemonic, ins.cond, ins.sets_flags, ins.operands,
            ins.mode, ins.writeback, raw_text=raw.strip(),
        )
        last_addr = address
        next_addr = address + 4

    if not instructions:
        raise MalformedLine(last_line, "listing contains no instructions")

    for address, line_no, ttext in pending_targets:
        target = _resolve_target(ttext, symbols, labels, line_no, hex_addresses)
        ins = instructions[address]
        instructions[address] = Instruction(
            ins.address, ins.mnemonic, ins.cond, ins.sets_flags, (Target(target),),
            ins.mode, ins.writeback, raw_text=ins.raw_text,
        )

    all_syms = dict(labels)
    all_syms.update(symbols)
    if entry is None:
        entry_addr = all_syms.get("main", next(iter(instructions)))
    elif isinstance(entry, str):
        if entry not in all_syms:
            raise MalformedLine(0, f"unknown entry symbol {entry!r}")
        entry_addr = all_syms[entry]
    else:
        entry_addr = entry
    if entry_addr not in instructions:
        raise MalformedLine(0, f"entry {entry_addr} is not an instruction")
    return Program(instructions, all_syms, entry_addr)


def parse_file(path, **kwargs) -> Program:
    with open(path) as fh:
        return parse_listing(fh.read(), **kwargs)


# ---------------------------------------------------------------------------
# static assumption checks

def _function_body(program: Program, start: int):
    """Addresses statically reachable from ``start`` without following calls."""
    seen, work = set(), [start]
    while work:
        addr = work.pop()
        if addr in seen or addr not in program:
            continue
        seen.add(addr)
        ins = program[addr]
        if ins.is_indirect:
            if ins.conditional:
                work.append(addr + 4)
            continue
        if ins.mnemonic == "b":
            work.append(ins.branch_target)
            if ins.conditional:
                work.append(addr + 4)
            continue
        if ins.mnemonic == "bl" and not ins.conditional:
            continue  # control returns through lr, not by fall-through
        work.append(addr + 4)
    return seen


def validate_assumptions(program: Program) -> list:
    """Statically checkable warnings: non-sp memory bases and recursive calls."""
    warnings = []
    for ins in program:
        if ins.is_memory and ins.mem_base not in (SP, 15):
            warnings.append(AssumptionWarning(
                "non-sp-base", ins.address,
                f"{ins}: memory base is not sp; relies on input-independent addresses",
            ))

    calls = {}

    def callees(fn):
        if fn not in calls:
            body = _function_body(program, fn)
            calls[fn] = [(a, program[a].branch_target) for a in sorted(body)
                         if program[a].mnemonic == "bl"]
        return calls[fn]

    reported = set()
    chain = []

    def visit(fn):
        chain.append(fn)
        for site, target in callees(fn):
            if target in chain:
                if site not in reported:
                    reported.add(site)
                    warnings.append(AssumptionWarning(
                        "recursion", site,
                        f"call at {site} to {target} re-enters the current call chain",
                    ))
            else:
                visit(target)
        chain.pop()

    visit(program.entry)
    return warnings
