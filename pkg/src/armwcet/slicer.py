"""Weiser-style slicing, stack-pointer analysis and the WCET-equivalent abstraction."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .errors import BotStackPointer, UndefinedMemoryBase
from .graphs import END, Cfg, control_dependence, post_dominators, reaching_defs
from .instructions import COND_READS, SP
from .listing import Program
from .semantics import (
    RefDef,
    SymState,
    address_registers,
    is_stack_var,
    memory_addresses,
    ref_def,
    stack_var,
    target_registers,
)
from .symexec import DEFAULT_STEP_LIMIT, Canonicalizer, SliceStepper, walk


@dataclass(frozen=True)
class SliceCriterion:
    """Variables of interest at chosen nodes."""

    targets: dict

    @classmethod
    def of(cls, mapping) -> "SliceCriterion":
        return cls({n: frozenset(v) for n, v in mapping.items()})


@dataclass(frozen=True)
class SliceResult:
    in_slice: frozenset
    tracked_vars: frozenset
    needs: dict = field(default_factory=dict, compare=False)

    def __len__(self):
        return len(self.in_slice)


def coarse_attrs(program: Program, nodes=None) -> dict:
    return {n: ref_def(program[n]) for n in (program.instructions if nodes is None else nodes)}


class Slicer:
    """Dependence information for one graph, reusable across criteria."""

    def __init__(self, program: Program, g: Cfg, attrs: dict):
        self.program = program
        self.g = g
        self.attrs = attrs
        self.cd = control_dependence(g, post_dominators(g))
        self.rd = reaching_defs(g, attrs)

    def reaching(self, node, var) -> frozenset:
        """Definitions of ``var`` reaching ``node``, with stack aliasing."""
        inn = self.rd[node]
        if var == "stack":
            out = frozenset()
            for v, s in inn.items():
                if is_stack_var(v):
                    out |= s
            return out
        if var.startswith("stack_"):
            return inn.get(var, frozenset()) | inn.get("stack", frozenset())
        return inn.get(var, frozenset())

    def controller_vars(self, node) -> frozenset:
        """What a controlling node needs: its condition, and its target when it has several."""
        ins = self.program[node]
        need = set(COND_READS[ins.cond])
        jumps = [d for d, k in self.g.successors(node).items() if k != "fallthrough"]
        if ins.is_indirect and len(jumps) > 1:
            need |= target_registers(ins) - self.attrs[node].resolved
        return frozenset(need)

    def slice(self, criterion: SliceCriterion) -> SliceResult:
        needs: dict = {}
        work = []

        def join(node, vars_):
            if node == END:
                return
            if node not in needs:
                needs[node] = set()
                for c in self.cd.get(node, ()):
                    work.append((c, self.controller_vars(c)))
            for v in vars_:
                if v not in needs[node]:
                    needs[node].add(v)
                    for d in self.reaching(node, v):
                        work.append((d, self.attrs[d].uses))

        for node in sorted(criterion.targets):
            if node in self.g.nodes:
                join(node, criterion.targets[node])
        while work:
            join(*work.pop())

        tracked = set()
        for n in needs:
            tracked |= self.attrs[n].uses | self.attrs[n].defs
        return SliceResult(frozenset(needs), frozenset(tracked),
                           {n: frozenset(v) for n, v in needs.items()})


def slice_program(program: Program, g: Cfg, attrs: dict, criterion) -> SliceResult:
    if not isinstance(criterion, SliceCriterion):
        criterion = SliceCriterion.of(criterion)
    return Slicer(program, g, attrs).slice(criterion)


# ---------------------------------------------------------------------------
# step 1: stack pointer values

def sp_nodes(attrs: dict) -> list:
    return sorted(n for n, rd in attrs.items() if "sp" in rd.refs or "sp" in rd.defs)


def sp_analysis(g: Cfg, program: Program, init: SymState, *, attrs: Optional[dict] = None,
                step_limit: int = DEFAULT_STEP_LIMIT) -> dict:
    """Possible sp values just before every node that reads or writes sp.

    Slices for sp at those nodes and simulates the slice from ``init``.
    Nodes never reached get no entry.
    """
    if attrs is None:
        attrs = coarse_attrs(program, g.nodes)
    nodes = sp_nodes(attrs)
    if not nodes:
        return {}
    crit = SliceCriterion.of({n: {"sp"} & attrs[n].refs for n in nodes})
    res = Slicer(program, g, attrs).slice(crit)
    stepper = SliceStepper(program, g, frozenset(res.in_slice) | set(nodes), {},
                           Canonicalizer.for_vars(res.tracked_vars | {"sp"}))
    wanted = set(nodes)
    seen: dict = {}

    def visit(node, s):
        if node in wanted:
            if s.sp is None:
                raise BotStackPointer(node)
            seen.setdefault(node, set()).add(s.sp)

    walk(stepper, init, visit=visit, on_missing=lambda *a: None, step_limit=step_limit)
    return {n: frozenset(v) for n, v in sorted(seen.items())}


def max_stack_depth(spmap: dict, init_sp: int) -> int:
    """Bytes below the initial sp reached by any push (sp after the node included)."""
    return max([0] + [init_sp - v for vals in spmap.values() for v in vals])


def _stack_cells(ins, sp_value: int):
    probe = SymState(tuple([None] * 13 + [sp_value, None, ins.address]))
    try:
        return frozenset(stack_var(a) for a in memory_addresses(probe, ins))
    except UndefinedMemoryBase:
        return None  # register offset: address not static


def refine_refdef(program: Program, attrs: dict, spmap: dict) -> dict:
    """REF*/DEF*: replace ``stack`` by the concrete cells each node can touch."""
    out = {}
    for n, rd in attrs.items():
        values = spmap.get(n)
        if not values:
            out[n] = rd
            continue
        ins = program[n]
        single = len(values) == 1
        refs, defs, must = set(rd.refs), set(rd.defs), set(rd.must_defs)
        if ins.is_memory and ins.mem_base == SP:
            cells = set()
            for v in values:
                c = _stack_cells(ins, v)
                if c is None:
                    cells = None
                    break
                cells |= c
            if cells is not None:
                if "stack" in refs:
                    refs = (refs - {"stack"}) | cells
                if "stack" in defs:
                    defs = (defs - {"stack"}) | cells
                    if single and not ins.conditional:
                        must |= cells
        resolved = frozenset({"sp"}) if single and "sp" in refs else frozenset()
        out[n] = RefDef(frozenset(refs), frozenset(defs), frozenset(must), resolved)
    return out


def static_sp(spmap: dict) -> dict:
    """Nodes whose sp is a single known value."""
    return {n: next(iter(v)) for n, v in spmap.items() if len(v) == 1}


# ---------------------------------------------------------------------------
# step 2: the WCET-equivalent program

@dataclass
class AbstractProgram:
    """α(P): the original program where only ``in_slice`` nodes keep semantics.

    ``simulated`` are the slice nodes that define something besides pc;
    the remaining slice nodes are branches that only steer the walk.
    """

    base: Program
    cfg: Cfg
    attrs: dict
    in_slice: frozenset
    simulated: frozenset
    tracked_vars: frozenset
    sp_static: dict
    spmap: dict
    criterion: SliceCriterion

    @property
    def abs_ratio(self) -> str:
        return f"{len(self.simulated)}/{len(self.base)}"

    def stepper(self) -> SliceStepper:
        return SliceStepper(self.base, self.cfg, self.in_slice, self.sp_static,
                            Canonicalizer.for_vars(self.tracked_vars))

    @property
    def tracked_registers(self) -> frozenset:
        return frozenset(v for v in self.tracked_vars
                         if not is_stack_var(v) and v not in ("N", "Z", "C", "V"))

    @property
    def tracked_cells(self) -> frozenset:
        return frozenset(v for v in self.tracked_vars if is_stack_var(v))


def wcet_criterion(program: Program, g: Cfg, attrs: dict) -> SliceCriterion:
    """C′: what fixes memory addresses, conditions and branching."""
    targets = {}
    for n in sorted(g.nodes):
        ins = program[n]
        need = set()
        if ins.is_memory:
            need |= address_registers(ins) - attrs[n].resolved
        if ins.conditional:
            need |= set(COND_READS[ins.cond])
        if len(g.successors(n)) > 1:
            need |= attrs[n].uses
        if need:
            targets[n] = frozenset(need)
    return SliceCriterion(targets)


def wcet_abstraction(g: Cfg, program: Program, attrs: dict, spmap: Optional[dict] = None) -> AbstractProgram:
    """Slice for C′ and wrap the result as α(P)."""
    spmap = spmap or {}
    crit = wcet_criterion(program, g, attrs)
    res = Slicer(program, g, attrs).slice(crit)
    simulated = frozenset(n for n in res.in_slice if attrs[n].defs - {"pc"})
    return AbstractProgram(program, g, attrs, res.in_slice, simulated, res.tracked_vars,
                           static_sp(spmap), spmap, crit)
