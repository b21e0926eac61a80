"""Longest completion time of α(P) on the hardware model.

The product of the sliced program and the pipeline is explored depth
first.  Between forks the run is deterministic, so only fork children are
memoized: each maps to the maximal number of cycles left until completion.
Forks come from ⊥ conditions (at fetch) and from variable E-stage
durations (at E entry).
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

from .errors import CycleDetected, InvalidBranchTarget, StateBudgetExceeded
from .graphs import END, Cfg
from .hw.config import HwConfig
from .hw.model import HwState, hw_init, run_trace, tick
from .semantics import SymState, TraceTriple, initial_state
from .slicer import AbstractProgram


@dataclass
class WcetResult:
    wcet_lower: int
    wcet_upper: int
    witness: list  # [(TraceTriple, duration)] along a longest run
    states_explored: int
    configs_memoized: int
    wall_time_ms: float = 0.0
    extra: dict = field(default_factory=dict)

    def witness_trace(self) -> list:
        return [t for t, _ in self.witness]

    def witness_durations(self) -> list:
        return [d for _, d in self.witness]

    def witness_json(self) -> list:
        return [{"addr": t.instr.address, "executed": t.executed,
                 "addrs": sorted(t.addrs), "duration": d} for t, d in self.witness]


class ProgramSupplier:
    """Supplier of trace triples for the hardware model.

    Cursors are ``(node, state)``; ``(END, None)`` has no successors.
    Results are cached since the same cursor recurs across forks.
    """

    def __init__(self, ap: AbstractProgram):
        self.stepper = ap.stepper()
        self._cache: dict = {}

    def initial_cursor(self, init: SymState):
        return (init.pc, self.stepper.canon(init))

    def __call__(self, cursor):
        got = self._cache.get(cursor)
        if got is not None:
            return got
        node, s = cursor
        if node == END:
            got = []
        else:
            got = []
            for triple, dest, s2 in self.stepper.advance(node, s):
                if isinstance(dest, tuple):
                    raise InvalidBranchTarget(node, dest[1])
                got.append((triple, (END, None) if dest == END else (dest, s2)))
        self._cache[cursor] = got
        return got


class _Search:
    """One longest-path search from a given hardware state."""

    def __init__(self, supplier, *, memo: bool = True, budget: int = 50_000_000):
        self.supplier = supplier
        self.use_memo = memo
        self.budget = budget
        self.table: dict = {}  # digest -> (cycles left, best child index)
        self.ticks = 0
        self.hits = 0

    def _tick(self, h: HwState) -> list:
        self.ticks += 1
        if self.ticks > self.budget:
            raise StateBudgetExceeded(self.budget)
        return tick(h, self.supplier)

    def _segment(self, h: HwState, on_path: set):
        """Tick until completion or a fork: (ticks, children or None)."""
        seen = set()
        d = 0
        while not h.completed:
            before = h.cursor
            nxt = self._tick(h)
            d += 1
            if len(nxt) > 1:
                return d, nxt
            h = nxt[0]
            after = h.cursor
            # every loop of the program jumps back at least once
            if after is not before and after[0] != END and before[0] != END and after[0] <= before[0]:
                dg = h.digest()
                if dg in seen or dg in on_path:
                    raise CycleDetected(after[0])
                seen.add(dg)
        return d, None

    def run(self, root: HwState) -> int:
        """Maximal cycles from ``root`` to completion."""
        root_key = root.digest()
        on_path = {root_key}
        d, children = self._segment(root, on_path)
        if children is None:
            self.table[root_key] = (d, None)
            return d
        # frame: [key, ticks before fork, children, next index, best, best index]
        stack = [[root_key, d, children, 0, -1, None]]
        result = None
        while stack:
            frame = stack[-1]
            key, d0, kids, i, best, best_i = frame
            if result is not None:
                # a child just finished
                if result > best:
                    frame[4], frame[5] = result, i - 1
                result = None
                continue
            if i == len(kids):
                stack.pop()
                on_path.discard(key)
                total = d0 + frame[4]
                self.table[key] = (total, frame[5])
                result = total
                if stack:
                    continue
                return total
            frame[3] = i + 1
            child = kids[i]
            ck = child.digest()
            if self.use_memo and ck in self.table:
                self.hits += 1
                result = self.table[ck][0]
                continue
            if ck in on_path:
                raise CycleDetected(child.cursor[0])
            on_path.add(ck)
            cd, grandkids = self._segment(child, on_path)
            if grandkids is None:
                on_path.discard(ck)
                self.table[ck] = (cd, None)
                result = cd
                continue
            stack.append([ck, cd, grandkids, 0, -1, None])
        raise AssertionError("unreachable")  # pragma: no cover

    def replay(self, root: HwState) -> tuple:
        """Re-run the best path; returns (cycles, recorded events)."""
        h = root
        key = h.digest()
        h.log = None
        while not h.completed:
            nxt = tick(h, self.supplier, record=True)
            if len(nxt) > 1:
                h = nxt[self.table[key][1]]
                key = h.digest()
            else:
                h = nxt[0]
        return h.elapsed, h.events()


def _witness(events) -> list:
    fetched = [e[1] for e in events if e[0] == "fetch"]
    durs = [e[1] for e in events if e[0] == "dur"]
    if len(fetched) != len(durs):
        raise AssertionError("every fetched instruction must enter E exactly once")
    return list(zip(fetched, durs))


def _root_state(ap: AbstractProgram, hw: HwConfig, init: SymState, supplier: ProgramSupplier) -> HwState:
    return hw_init(hw, supplier.initial_cursor(init))


def _search_subtree(args):
    """Worker entry point: full search below one root fork child."""
    ap, hw, state, memo, budget = args
    supplier = ProgramSupplier(ap)
    search = _Search(supplier, memo=memo, budget=budget)
    start = state.elapsed
    rem = search.run(state.copy())
    replay_state = state.copy()
    end, events = search.replay(replay_state)
    assert end - start == rem
    return rem, events, search.ticks, len(search.table)


def _upper(ap, hw, init, *, memo: bool, jobs: int):
    supplier = ProgramSupplier(ap)
    budget = hw.state_budget
    root = _root_state(ap, hw, init, supplier)
    if jobs <= 1:
        search = _Search(supplier, memo=memo, budget=budget)
        total = search.run(root.copy())
        cycles, events = search.replay(root)
        assert cycles == total
        return total, _witness(events), search.ticks, len(search.table)
    # parallel: split at the first fork
    # a dry run of the prefix surfaces cycles and budget overruns
    _Search(supplier, memo=memo, budget=budget)._segment(root.copy(), set())
    h = root.copy()
    h.log = None
    prefix_ticks = 0
    while not h.completed:
        nxt = tick(h, supplier, record=True)
        prefix_ticks += 1
        if len(nxt) > 1:
            break
        h = nxt[0]
    else:
        return h.elapsed, _witness(h.events()), prefix_ticks, 1
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        parts = list(pool.map(_search_subtree, [(ap, hw, c, memo, budget) for c in nxt]))
    best_i = max(range(len(parts)), key=lambda i: (parts[i][0], -i))
    child = nxt[best_i]
    witness = _witness(child.events() + parts[best_i][1])
    total = child.elapsed + parts[best_i][0]
    ticks = prefix_ticks + sum(p[2] for p in parts)
    memoized = sum(p[3] for p in parts)
    return total, witness, ticks, memoized


def explore(ap: AbstractProgram, g: Optional[Cfg] = None, hw: Optional[HwConfig] = None,
            init: Optional[SymState] = None, *, memo: bool = True, jobs: int = 1,
            lower: bool = True) -> WcetResult:
    """WCET bounds of ``ap`` on ``hw`` from ``init``.

    ``wcet_upper`` ranges over every duration; ``wcet_lower`` repeats the
    search with all durations at their minimum.  ``g`` defaults to the
    abstraction's own graph.
    """
    t0 = time.perf_counter()
    hw = HwConfig() if hw is None else hw
    if g is not None and g is not ap.cfg:
        ap = _with_graph(ap, g)
    if init is None:
        init = initial_state(ap.base.entry, init_sp=hw.init_sp)
    upper, witness, ticks, memoized = _upper(ap, hw, init, memo=memo, jobs=jobs)
    if lower:
        lo, _, lticks, lmemo = _upper(ap, hw.pinned("min"), init, memo=memo, jobs=jobs)
        ticks += lticks
        memoized += lmemo
    else:
        lo = upper
    return WcetResult(lo, upper, witness, ticks, memoized, (time.perf_counter() - t0) * 1000.0)


def _with_graph(ap: AbstractProgram, g: Cfg) -> AbstractProgram:
    return replace(ap, cfg=g)


def check_reachability(ap: AbstractProgram, g: Optional[Cfg], hw: Optional[HwConfig], init: Optional[SymState],
                       K: int, **kwargs) -> bool:
    """Is some completion at least ``K`` cycles long?"""
    return explore(ap, g, hw, init, lower=False, **kwargs).wcet_upper >= K


def replay_witness(hw: HwConfig, result: WcetResult) -> int:
    """Cycles of the witness run through the deterministic model."""
    return run_trace(hw, result.witness_trace(), result.witness_durations())


__all__ = ["WcetResult", "ProgramSupplier", "explore", "check_reachability", "replay_witness", "TraceTriple"]
