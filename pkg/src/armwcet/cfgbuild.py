"""CFG reconstruction by alternating static expansion and slice-based resolution."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .errors import BotBranchTarget, InvalidBranchTarget, NoProgress
from .graphs import END, Cfg
from .listing import Program
from .semantics import DEFAULT_INIT_SP, SymState, execute, initial_state, sentinel, target_registers
from .slicer import Slicer, SliceCriterion, coarse_attrs, refine_refdef, sp_analysis, static_sp
from .symexec import DEFAULT_STEP_LIMIT, Canonicalizer, SliceStepper, exit_target, walk

__all__ = ["Reconstruction", "build_cfg", "reconstruct", "sentinel", "emit_dot"]


@dataclass
class Reconstruction:
    """Complete CFG plus what was learned while building it."""

    cfg: Cfg
    spmap: dict
    attrs: dict  # refined REF*/DEF*
    iterations: int
    resolved: dict = field(default_factory=dict)  # indirect node -> sorted targets
    history: list = field(default_factory=list)  # per iteration: new resolved edges


def _static_edges(program: Program, node: int):
    """Edges known without simulation: (dst, kind) pairs."""
    ins = program[node]
    nxt = node + 4
    fall = nxt if nxt in program else END
    out = []
    if ins.mnemonic == "b":
        out.append((ins.branch_target, "taken"))
        if ins.conditional:
            out.append((fall, "fallthrough"))
    elif ins.mnemonic == "bl":
        out.append((ins.branch_target, "call"))
        if ins.conditional:
            out.append((fall, "fallthrough"))
    elif ins.is_indirect:
        if ins.conditional:
            out.append((fall, "fallthrough"))
    else:
        out.append((fall, "fallthrough"))
    for dst, _ in out:
        if dst != END and dst not in program:
            raise InvalidBranchTarget(node, dst)
    return out


def _expand(program: Program, g: Cfg, resolved: dict) -> None:
    """Follow static and already-resolved edges from the entry."""
    seen, work = set(), [program.entry]
    while work:
        n = work.pop()
        if n in seen or n == END:
            continue
        seen.add(n)
        g.add_node(n)
        for dst, kind in _static_edges(program, n):
            g.add_edge(n, dst, kind)
            work.append(dst)
        for dst in resolved.get(n, ()):
            g.add_edge(n, dst, "return" if program[n].is_return or dst == END else "indirect")
            work.append(dst)


def _working_graph(program: Program, resolved: dict, *, final: bool = False) -> Cfg:
    g = Cfg(program.entry)
    _expand(program, g, resolved)
    if not final:
        # an indirect node may still have targets nobody has seen; its
        # frontier edge keeps the exit reachable while that is unknown
        for n in list(g.nodes):
            if program[n].is_indirect and END not in resolved.get(n, ()):
                g.add_edge(n, END, "frontier")
    return g


def reconstruct(program: Program, *, init: Optional[SymState] = None, init_sp: int = DEFAULT_INIT_SP,
                step_limit: int = DEFAULT_STEP_LIMIT) -> Reconstruction:
    """Iterate expand/resolve until no new edge appears."""
    if init is None:
        init = initial_state(program.entry, init_sp=init_sp)
    resolved: dict = {}
    history = []
    iteration = 0
    while True:
        iteration += 1
        g = _working_graph(program, resolved)
        coarse = coarse_attrs(program, g.nodes)
        spmap = sp_analysis(g, program, init, attrs=coarse, step_limit=step_limit)
        attrs = refine_refdef(program, coarse, spmap)
        slicer = Slicer(program, g, attrs)
        sp_fixed = static_sp(spmap)
        new_edges = []
        for node in sorted(n for n in g.nodes if program[n].is_indirect):
            uses = target_registers(program[node]) - attrs[node].resolved
            res = slicer.slice(SliceCriterion.of({node: uses}))
            stepper = SliceStepper(program, g, res.in_slice | {node}, sp_fixed,
                                   Canonicalizer.for_vars(res.tracked_vars), strict=frozenset({node}))
            found = set()

            def visit(n, s, node=node, stepper=stepper, found=found):
                # the target register is read whether or not the condition holds,
                # so a conditional return gets its edge even if never taken here
                if n == node:
                    found.add(exit_target(program, n, execute(stepper.with_sp(n, s), program[n]).pc))

            walk(stepper, init, visit=visit, on_missing=lambda *a: None, step_limit=step_limit)
            for t in sorted(found, key=lambda x: (x is None, x)):
                if t is None:
                    raise BotBranchTarget(node)
                if t != END and t not in program:
                    raise InvalidBranchTarget(node, t)
                known = resolved.setdefault(node, [])
                if t not in known:
                    known.append(t)
                    known.sort()
                    new_edges.append((node, t))
        history.append(new_edges)
        if not new_edges:
            break
    unresolved = [n for n in sorted(g.nodes) if program[n].is_indirect and not resolved.get(n)]
    if unresolved:
        raise NoProgress(unresolved)
    final = _working_graph(program, resolved, final=True)
    return Reconstruction(final, spmap, attrs, iteration, {n: list(v) for n, v in sorted(resolved.items())}, history)


def build_cfg(program: Program, **kwargs) -> Cfg:
    return reconstruct(program, **kwargs).cfg


# ---------------------------------------------------------------------------
# DOT output

def _dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


def emit_dot(g: Cfg, program: Program, *, in_slice=frozenset(), simulated=frozenset(), name: str = "cfg") -> str:
    """Deterministic DOT text: nodes sorted by address, END last."""
    lines = [f"digraph {name} {{", '  node [shape=box, fontname="monospace"];']
    for n in sorted(g.nodes):
        attrs = [f'label="{_dot_escape(str(program[n]))}"']
        if n in simulated:
            attrs.append('style=filled, fillcolor="lightblue"')
        elif n in in_slice:
            attrs.append('style=filled, fillcolor="lightgrey"')
        lines.append(f'  n{n} [{", ".join(attrs)}];')
    lines.append('  END [shape=doublecircle, label="END"];')
    for src, dst, kind in g.edges():
        d = "END" if dst == END else f"n{dst}"
        style = {"taken": "solid", "fallthrough": "solid", "call": "bold",
                 "return": "dashed", "indirect": "dashed", "frontier": "dotted"}[kind]
        lines.append(f'  n{src} -> {d} [kind="{kind}", style={style}];')
    lines.append("}")
    return "\n".join(lines) + "\n"
