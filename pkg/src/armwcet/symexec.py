"""Symbolic execution of a slice over an instruction graph.

Slice nodes run with full semantics; every other node only advances pc
along the graph.  Values not tracked by the slice are forced to ⊥ so that
equivalent states compare equal.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

from .errors import BotBranchTarget, InvalidBranchTarget, NonTerminatingSlice
from .graphs import END, Cfg
from .instructions import FLAGS, PC, REG_NAMES, SP
from .listing import Program
from .semantics import BETA, SymState, is_stack_var, stack_addr, step_traced, trace_triple

DEFAULT_STEP_LIMIT = 10_000_000
MISSING = "missing"  # destination not (yet) an edge of the graph


def exit_target(program: Program, node: int, dest):
    """Map a computed pc to a graph node: β and falling off the end mean END."""
    if dest is None:
        return None
    if dest == BETA:
        return END
    if dest == node + 4 and dest not in program:
        return END
    return dest


@dataclass(frozen=True)
class Canonicalizer:
    """Projects states onto the tracked variables."""

    keep_regs: tuple
    keep_flags: tuple
    all_stack: bool
    stack_cells: frozenset

    @classmethod
    def for_vars(cls, tracked) -> "Canonicalizer":
        if tracked is None:
            return cls(tuple(range(16)), (0, 1, 2, 3), True, frozenset())
        regs = tuple(i for i, name in enumerate(REG_NAMES) if name in tracked or i == PC)
        flags = tuple(i for i, f in enumerate(FLAGS) if f in tracked)
        cells = frozenset(stack_addr(v) for v in tracked if is_stack_var(v) and v != "stack")
        return cls(regs, flags, "stack" in tracked, cells)

    def __call__(self, s: SymState) -> SymState:
        regs = tuple(v if i in self.keep_regs else None for i, v in enumerate(s.regs))
        flags = tuple(v if i in self.keep_flags else None for i, v in enumerate(s.flags))
        stack = s.stack if self.all_stack else tuple(c for c in s.stack if c[0] in self.stack_cells)
        if regs == s.regs and flags == s.flags and stack == s.stack:
            return s
        return SymState(regs, flags, stack)


@dataclass
class SliceStepper:
    """Successor function of α(P) on (node, state) cursors."""

    program: Program
    cfg: Cfg
    in_slice: frozenset
    sp_static: dict  # node -> sp value known statically
    canon: Canonicalizer
    strict: frozenset = frozenset()  # nodes where a ⊥ target is an error

    def with_sp(self, node, s: SymState) -> SymState:
        sp = self.sp_static.get(node)
        if sp is None or s.regs[SP] == sp:
            return s
        return s.set_regs({SP: sp})

    def _real_succ(self, node) -> dict:
        return {d: k for d, k in self.cfg.successors(node).items() if k != "frontier"}

    def advance(self, node, s: SymState, *, triples: bool = True):
        """List of (triple or None, destination, next state).

        ``destination`` is a graph node, or the tuple ``(MISSING, pc)`` when
        the computed pc is not an edge of the graph.
        """
        ins = self.program[node]
        real = self._real_succ(node)
        if node in self.in_slice:
            out = []
            for triple, s2 in step_traced(self.with_sp(node, s), ins):
                if triple.executed:
                    dest = exit_target(self.program, node, s2.pc)
                else:
                    dest = exit_target(self.program, node, node + 4)
                if dest is None:
                    dest = self._bot_target(node, real)
                if dest not in real:
                    dest = (MISSING, dest)
                if dest != END and not isinstance(dest, tuple):
                    s2 = s2.set_regs({PC: dest})
                out.append((triple if triples else None, dest, self.canon(s2)))
            return out
        # nop semantics: pc follows the graph
        triple = trace_triple(self.with_sp(node, s), ins, True) if triples else None
        if not real:
            return [(triple, (MISSING, None), s)]
        return [(triple, d, s if d == END else s.set_regs({PC: d})) for d in sorted(real)]

    def _bot_target(self, node, real):
        if node not in self.strict:
            cands = [d for d, k in real.items() if k in ("return", "indirect")]
            if len(cands) == 1:
                return cands[0]
        raise BotBranchTarget(node)


def walk(stepper: SliceStepper, init: SymState, *, visit: Optional[Callable] = None,
         on_missing: Optional[Callable] = None, step_limit: int = DEFAULT_STEP_LIMIT) -> int:
    """Visit every reachable (node, state) of the slice once.

    ``visit(node, state)`` sees each cursor before it is stepped (END
    included).  ``on_missing(node, pc, state)`` is called where a path
    leaves the known graph; that path ends there.  A cursor that comes back
    on the current path without any intervening choice is a loop that no
    input can leave, reported as :class:`NonTerminatingSlice`.  Returns the
    number of cursors expanded.
    """
    start = (init.pc, stepper.canon(init))
    visited = {start}
    on_path = {start: 0}
    path = [start]
    choices = []  # depths on the current path with more than one successor
    frames = []
    steps = 0

    def expand(cursor):
        nonlocal steps
        node, s = cursor
        steps += 1
        if steps > step_limit:
            raise NonTerminatingSlice(node, f"step limit {step_limit} exceeded")
        if visit is not None:
            visit(node, s)
        if node == END:
            return []
        succ = []
        for _, dest, s2 in stepper.advance(node, s, triples=False):
            if isinstance(dest, tuple):
                if on_missing is not None:
                    on_missing(node, dest[1], s2)
                    continue
                raise InvalidBranchTarget(node, dest[1])
            succ.append((dest, s2))
        return succ

    root_children = expand(start)
    if len(root_children) > 1:
        choices.append(0)
    frames.append(iter(root_children))

    while frames:
        child = next(frames[-1], None)
        if child is None:
            frames.pop()
            done = path.pop()
            del on_path[done]
            depth = len(path)
            if choices and choices[-1] >= depth:
                choices.pop()
            continue
        if child in on_path:
            if not choices or choices[-1] < on_path[child]:
                raise NonTerminatingSlice(child[0])
            continue
        if child in visited:
            continue
        visited.add(child)
        children = expand(child)
        on_path[child] = len(path)
        if len(children) > 1:
            choices.append(len(path))
        path.append(child)
        frames.append(iter(children))
    return steps
