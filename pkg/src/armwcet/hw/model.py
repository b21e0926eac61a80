"""Cycle-level model of a 5-stage in-order pipeline with caches and a write buffer.

One call to :func:`tick` advances one processor cycle.  Within a cycle the
phases run in this order:

1. fetch: an empty, unblocked F stage asks the program supplier for the
   next trace triple (several answers fork the state);
2. the M stage issues its next data access;
3. main memory, if idle, is granted to a data fill, an instruction fill or
   a write-buffer drain, in that priority;
4. every stage not waiting on memory does one cycle of work;
5. the memory transfer in flight advances;
6. finished instructions move forward, W first; entering E fixes the
   instruction's duration (several possible durations fork the state).
"""

from __future__ import annotations

import hashlib
from typing import Callable, Optional

import numpy as np

from ..errors import InvalidGeometry, ProtocolViolation
from ..instructions import REG_NAMES
from ..semantics import TraceTriple, ref_def
from . import kernels
from .config import HwConfig

STAGES = ("F", "D", "E", "M", "W")
PIPELINE_DEPTH = len(STAGES)

# memory owners
MEM_NONE, MEM_I, MEM_D, MEM_WB = 0, 1, 2, 3

Supplier = Callable  # cursor -> list of (TraceTriple, next cursor)


class Cache:
    """Set-associative cache: tag array, FIFO pointers, half-line dirty bits."""

    __slots__ = ("tags", "fifo", "dirty", "line_shift", "set_mask")

    def __init__(self, cfg: HwConfig, arrays=None):
        self.line_shift = cfg.line_bytes.bit_length() - 1
        self.set_mask = cfg.sets - 1
        if arrays is None:
            arrays = kernels.new_cache(cfg.sets, cfg.ways)
        self.tags, self.fifo, self.dirty = arrays

    def copy(self) -> "Cache":
        new = Cache.__new__(Cache)
        new.line_shift, new.set_mask = self.line_shift, self.set_mask
        new.tags, new.fifo, new.dirty = self.tags.copy(), self.fifo.copy(), self.dirty.copy()
        return new

    def set_of(self, addr: int) -> int:
        return (addr >> self.line_shift) & self.set_mask

    def lookup(self, addr: int) -> bool:
        return kernels.scalar_lookup(self.tags, addr, self.line_shift, self.set_mask) >= 0

    def insert(self, addr: int) -> int:
        return int(kernels.scalar_insert(self.tags, self.fifo, self.dirty, addr, self.line_shift, self.set_mask))

    def mark_dirty(self, addr: int) -> bool:
        return bool(kernels.scalar_mark_dirty(self.tags, self.dirty, addr, self.line_shift, self.set_mask))

    def key(self) -> bytes:
        return self.tags.tobytes() + self.fifo.tobytes() + self.dirty.tobytes()

    def __eq__(self, other):
        return isinstance(other, Cache) and self.key() == other.key()


def cache_lookup(c: Cache, addr: int) -> bool:
    """Hit test; the cache is not modified."""
    return c.lookup(addr)


def cache_insert(c: Cache, addr: int):
    """Functional insert: returns (new cache, transfers needed)."""
    new = c.copy()
    return new, new.insert(addr)


class Slot:
    """An instruction occupying a stage.

    ``left``: cycles of work remaining; ``pmt``: memory transfers still
    pending before that work can proceed; ``accesses``: data accesses the M
    stage has not issued yet; ``busy``: an access is in progress.
    """

    __slots__ = ("triple", "left", "pmt", "accesses", "busy")

    def __init__(self, triple, left, pmt=0, accesses=(), busy=False):
        self.triple = triple
        self.left = left
        self.pmt = pmt
        self.accesses = accesses
        self.busy = busy

    def copy(self) -> "Slot":
        return Slot(self.triple, self.left, self.pmt, self.accesses, self.busy)

    def key(self):
        return (self.triple.key(), self.left, self.pmt, self.accesses, self.busy)

    @property
    def done(self) -> bool:
        return self.left == 0 and self.pmt == 0 and not self.accesses and not self.busy


_INFO: dict = {}


def _info(triple: TraceTriple):
    """(is taken control transfer, registers read, registers a load writes)."""
    ins = triple.instr
    k = (ins, triple.executed)
    got = _INFO.get(k)
    if got is None:
        rd = ref_def(ins)
        reads = frozenset(v for v in rd.refs if v in REG_NAMES)
        loads = frozenset()
        if triple.executed and ins.is_load:
            loads = frozenset(v for v in rd.defs if v in REG_NAMES and v != "pc")
        got = (triple.executed and ins.writes_pc, reads, loads)
        _INFO[k] = got
    return got


class HwState:
    """Complete hardware state plus the supplier cursor.

    ``elapsed`` and ``log`` are bookkeeping and are excluded from
    :meth:`key`.  ``log`` is a persistent list ``(event, previous)`` so that
    forks share their history.
    """

    __slots__ = ("cfg", "F", "D", "E", "M", "W", "icache", "dcache", "wb", "mem_owner",
                 "mem_left", "store_prev", "store_cur", "cursor", "prog_done", "completed",
                 "elapsed", "log")

    def __init__(self, cfg: HwConfig, cursor=None):
        self.cfg = cfg
        self.F = self.D = self.E = self.M = self.W = None
        self.icache = Cache(cfg)
        self.dcache = Cache(cfg)
        self.wb = ()  # tuple of (half-line address, in flight)
        self.mem_owner = MEM_NONE
        self.mem_left = 0
        self.store_prev = -1
        self.store_cur = -1
        self.cursor = cursor
        self.prog_done = False
        self.completed = False
        self.elapsed = 0
        self.log = None

    def copy(self) -> "HwState":
        new = HwState.__new__(HwState)
        new.cfg = self.cfg
        for name in STAGES:
            slot = getattr(self, name)
            setattr(new, name, None if slot is None else slot.copy())
        new.icache = self.icache.copy()
        new.dcache = self.dcache.copy()
        new.wb = self.wb
        new.mem_owner, new.mem_left = self.mem_owner, self.mem_left
        new.store_prev, new.store_cur = self.store_prev, self.store_cur
        new.cursor = self.cursor
        new.prog_done, new.completed = self.prog_done, self.completed
        new.elapsed = self.elapsed
        new.log = self.log
        return new

    def key(self):
        """Hashable identity of the configuration, without ``elapsed``."""
        return (
            tuple(None if getattr(self, n) is None else getattr(self, n).key() for n in STAGES),
            self.icache.key(), self.dcache.key(), self.wb, self.mem_owner, self.mem_left,
            self.store_cur, self.cursor, self.prog_done, self.completed,
        )

    def digest(self) -> bytes:
        """128-bit hash of the serialized :meth:`key`."""
        rest = (
            tuple(None if getattr(self, n) is None else getattr(self, n).key() for n in STAGES),
            self.wb, self.mem_owner, self.mem_left, self.store_cur, self.cursor,
            self.prog_done, self.completed,
        )
        # repr is value-based, unlike pickle which encodes object sharing
        h = hashlib.blake2b(repr(rest).encode(), digest_size=16)
        h.update(self.icache.key())
        h.update(self.dcache.key())
        return h.digest()

    @property
    def pipeline_empty(self) -> bool:
        return self.F is None and self.D is None and self.E is None and self.M is None and self.W is None

    def events(self) -> list:
        out, node = [], self.log
        while node is not None:
            out.append(node[0])
            node = node[1]
        return out[::-1]

    def reset_pipeline(self, cursor=None) -> "HwState":
        """Fresh pipeline and program, keeping cache contents (a warm start)."""
        new = HwState(self.cfg, cursor)
        new.icache = self.icache.copy()
        new.dcache = self.dcache.copy()
        return new


def hw_init(cfg: Optional[HwConfig] = None, cursor=None) -> HwState:
    """Empty pipeline, invalid caches, empty write buffer."""
    cfg = HwConfig() if cfg is None else cfg
    if not isinstance(cfg, HwConfig):
        raise InvalidGeometry("expected a HwConfig")
    return HwState(cfg, cursor)


# ---------------------------------------------------------------------------
# the cycle function

def _fetch_blocked(h: HwState) -> bool:
    d, e = h.D, h.E
    if d is not None and _info(d.triple)[0]:
        return True
    return e is not None and e.left > 0 and _info(e.triple)[0]


def _start_fetch(h: HwState, triple: TraceTriple, cursor, record: bool) -> None:
    addr = triple.instr.address
    pmt = 0 if h.icache.lookup(addr) else h.icache.insert(addr)
    h.F = Slot(triple, h.cfg.cache_speed, pmt)
    h.cursor = cursor
    if record:
        h.log = (("fetch", triple, h.elapsed), h.log)


def _issue_access(h: HwState) -> None:
    m = h.M
    if m is None or m.busy or not m.accesses:
        return
    addr, is_write = m.accesses[0]
    cfg = h.cfg
    dc = h.dcache
    s = dc.set_of(addr)
    penalty = 1 if s == h.store_prev else 0
    if is_write:
        hit = dc.lookup(addr)
        if not (hit and cfg.write_back and dc.mark_dirty(addr)):
            half = addr >> (dc.line_shift - 1)
            merged = False
            wb = list(h.wb)
            for i, (a, flying) in enumerate(wb):
                if a == half and not flying:
                    merged = True
                    break
            if not merged:
                if len(wb) >= cfg.wb_entries:
                    return  # write buffer full: stall and retry next cycle
                wb.append((half, False))
                h.wb = tuple(wb)
        m.pmt = 0
    else:
        m.pmt = 0 if dc.lookup(addr) else dc.insert(addr)
    m.left = cfg.cache_speed + penalty
    m.busy = True


def _arbitrate(h: HwState) -> None:
    if h.mem_owner != MEM_NONE:
        return
    cfg = h.cfg
    m, f = h.M, h.F
    if m is not None and m.busy and m.pmt > 0:
        h.mem_owner, h.mem_left = MEM_D, m.pmt * cfg.mainmem_trans
    elif f is not None and f.pmt > 0:
        h.mem_owner, h.mem_left = MEM_I, f.pmt * cfg.mainmem_trans
    elif h.wb:
        h.mem_owner, h.mem_left = MEM_WB, cfg.drain_cycles
        h.wb = ((h.wb[0][0], True),) + h.wb[1:]


def _work(h: HwState) -> None:
    for name in ("F", "D", "E", "W"):
        slot = getattr(h, name)
        if slot is not None and slot.pmt == 0 and slot.left > 0:
            slot.left -= 1
    m = h.M
    if m is None:
        return
    if m.accesses:
        if m.busy and m.pmt == 0:
            m.left -= 1
            if m.left == 0:
                addr, is_write = m.accesses[0]
                if is_write:
                    h.store_cur = h.dcache.set_of(addr)
                m.accesses = m.accesses[1:]
                m.busy = False
    elif m.left > 0:
        m.left -= 1


def _memory(h: HwState) -> None:
    if h.mem_owner == MEM_NONE:
        return
    h.mem_left -= 1
    if h.mem_left > 0:
        return
    if h.mem_owner == MEM_I:
        h.F.pmt = 0
    elif h.mem_owner == MEM_D:
        h.M.pmt = 0
    else:
        h.wb = h.wb[1:]
    h.mem_owner = MEM_NONE


def _load_use(h: HwState, d: Slot) -> bool:
    m = h.M
    if m is None:
        return False
    loads = _info(m.triple)[2]
    return bool(loads) and not loads.isdisjoint(_info(d.triple)[1])


def _moves(h: HwState) -> bool:
    """Advance finished instructions; True when a new instruction entered E."""
    if h.W is not None and h.W.left == 0:
        h.W = None
    if h.M is not None and h.W is None and h.M.done:
        h.W, h.M = Slot(h.M.triple, 1), None
    if h.E is not None and h.M is None and h.E.left == 0:
        t = h.E.triple
        if t.executed and t.addrs:
            acc = tuple((a, t.instr.is_store) for a in sorted(t.addrs))
            h.M = Slot(t, 0, 0, acc)
        else:
            h.M = Slot(t, 1)
        h.E = None
    entered = False
    if h.D is not None and h.E is None and h.D.left == 0 and not _load_use(h, h.D):
        h.E, h.D = Slot(h.D.triple, 1), None
        entered = True
    if h.F is not None and h.D is None and h.F.left == 0 and h.F.pmt == 0:
        h.D, h.F = Slot(h.F.triple, 1), None
    return entered


def e_durations(cfg: HwConfig, triple: TraceTriple) -> tuple:
    """Possible E-stage cycle counts: one cycle when not executed."""
    if not triple.executed:
        return (1,)
    lo, hi = cfg.durations(triple.instr.duration_class)
    return tuple(range(lo, hi + 1))


def tick(h: HwState, supplier: Supplier, *, record: bool = False, durations=None) -> list:
    """Advance one cycle; returns the successor states (forks copy ``h``).

    ``durations`` optionally pins E-stage durations: a callable
    ``(state, triple) -> int``.
    """
    if h.completed:
        raise ProtocolViolation("tick on a completed state")
    h.store_prev, h.store_cur = h.store_cur, -1
    states = [h]
    if h.F is None and not h.prog_done and not _fetch_blocked(h):
        options = supplier(h.cursor)
        if not options:
            h.prog_done = True
            if h.pipeline_empty:
                h.completed = True
                return [h]
        else:
            states = []
            for i, (triple, cursor) in enumerate(options):
                s = h if i == len(options) - 1 else h.copy()
                _start_fetch(s, triple, cursor, record)
                states.append(s)
    out = []
    for s in states:
        _issue_access(s)
        _arbitrate(s)
        _work(s)
        _memory(s)
        entered = _moves(s)
        s.elapsed += 1
        if s.prog_done and s.pipeline_empty:
            s.completed = True
        if entered:
            triple = s.E.triple
            if durations is not None:
                choices = (durations(s, triple),)
            else:
                choices = e_durations(s.cfg, triple)
            for j, d in enumerate(choices):
                s2 = s if j == len(choices) - 1 else s.copy()
                s2.E.left = d
                if record:
                    s2.log = (("dur", d, s2.elapsed), s2.log)
                out.append(s2)
        else:
            out.append(s)
    return out


def list_supplier(trace):
    """Supplier over a fixed trace; the cursor is the next index."""
    trace = list(trace)

    def supply(i):
        return [(trace[i], i + 1)] if i < len(trace) else []

    return supply


def run_to_completion(h: HwState, supplier: Supplier, *, durations=None, record=False,
                      max_cycles: int = 100_000_000) -> HwState:
    """Tick a deterministic run until completion."""
    while not h.completed:
        nxt = tick(h, supplier, record=record, durations=durations)
        if len(nxt) != 1:
            raise ProtocolViolation("nondeterministic tick in a deterministic run")
        h = nxt[0]
        if h.elapsed > max_cycles:
            raise ProtocolViolation(f"no completion within {max_cycles} cycles")
    return h


def _duration_policy(choice):
    if choice in ("min", "max"):
        idx = 0 if choice == "min" else -1
        return lambda s, t: e_durations(s.cfg, t)[idx]
    seq = list(choice)
    pos = [0]

    def explicit(s, t):
        d = seq[pos[0]]
        pos[0] += 1
        return d

    return explicit


def run_trace(cfg: HwConfig, trace, duration_choice="max", *, state: Optional[HwState] = None,
              return_state: bool = False, record: bool = False):
    """Cycles to run ``trace`` to completion.

    ``duration_choice`` is ``"min"``, ``"max"`` or an explicit sequence of
    E-stage durations in E-entry order.  ``state`` may supply a warm
    starting state (its pipeline must be empty).
    """
    supplier = list_supplier(trace)
    if state is None:
        h = hw_init(cfg, 0)
    else:
        h = state.reset_pipeline(0)
    h = run_to_completion(h, supplier, durations=_duration_policy(duration_choice), record=record)
    return (h.elapsed, h) if return_state else h.elapsed


def run_warm(cfg: HwConfig, trace, duration_choice="max", warmups: int = 1) -> int:
    """Cycles of ``trace`` after ``warmups`` runs have filled the caches."""
    h = None
    for _ in range(warmups):
        _, h = run_trace(cfg, trace, duration_choice, state=h, return_state=True)
    return run_trace(cfg, trace, duration_choice, state=h)


def cache_trace_stats(cfg: HwConfig, accesses) -> dict:
    """Hit/miss counts of a data access stream using the bulk kernel."""
    tags, fifo, dirty = kernels.new_cache(cfg.sets, cfg.ways)
    addrs = np.array([a for a, _ in accesses], dtype=np.int64)
    writes = np.array([w for _, w in accesses], dtype=np.bool_)
    if len(addrs) == 0:
        return {"accesses": 0, "hits": 0, "misses": 0, "transfers": 0}
    hits, transfers = kernels.run_cache_trace(tags, fifo, dirty, addrs, writes,
                                              cfg.line_bytes.bit_length() - 1, cfg.sets - 1, cfg.write_back)
    n_hits = int(hits.sum())
    return {"accesses": len(addrs), "hits": n_hits, "misses": len(addrs) - n_hits,
            "transfers": int(transfers)}
