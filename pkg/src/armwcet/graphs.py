"""Instruction graphs: post-dominators, frontiers, control and data dependence."""

from __future__ import annotations

from typing import Dict, Iterable, Optional

from .errors import UnreachableExit

END = -1
EDGE_KINDS = ("fallthrough", "taken", "call", "return", "indirect", "frontier")


class Cfg:
    """Directed instruction graph with one entry and the synthetic exit ``END``.

    ``succ[src]`` maps each successor to its edge kind.  END never appears as
    a key of ``succ``.
    """

    def __init__(self, entry, nodes: Iterable = ()):
        self.entry = entry
        self.succ: Dict = {}
        self.add_node(entry)
        for n in nodes:
            self.add_node(n)

    @classmethod
    def from_edges(cls, entry, edges, kind="fallthrough"):
        g = cls(entry)
        for e in edges:
            src, dst = e[0], e[1]
            g.add_edge(src, dst, e[2] if len(e) > 2 else kind)
        return g

    def add_node(self, n) -> None:
        if n != END:
            self.succ.setdefault(n, {})

    def add_edge(self, src, dst, kind: str = "fallthrough") -> bool:
        """Add an edge; returns True if it was new."""
        self.add_node(src)
        self.add_node(dst)
        if dst in self.succ[src]:
            return False
        self.succ[src][dst] = kind
        return True

    @property
    def nodes(self):
        return set(self.succ)

    def successors(self, n):
        return self.succ.get(n, {})

    def predecessors(self) -> Dict:
        preds = {n: set() for n in self.succ}
        preds[END] = set()
        for src, outs in self.succ.items():
            for dst in outs:
                preds.setdefault(dst, set()).add(src)
        return preds

    def edges(self):
        """Sorted (src, dst, kind) triples."""
        return sorted((s, d, k) for s, outs in self.succ.items() for d, k in outs.items())

    def edge_set(self):
        return {(s, d) for s, outs in self.succ.items() for d in outs}

    def copy(self) -> "Cfg":
        g = Cfg(self.entry)
        g.succ = {n: dict(outs) for n, outs in self.succ.items()}
        return g

    def __eq__(self, other):
        return isinstance(other, Cfg) and self.entry == other.entry and self.succ == other.succ

    def __repr__(self):
        return f"Cfg(entry={self.entry}, nodes={len(self.succ)}, edges={len(self.edge_set())})"


def _postorder(start, neighbours) -> list:
    """Iterative DFS postorder from ``start``."""
    order, seen = [], {start}
    stack = [(start, iter(sorted(neighbours(start))))]
    while stack:
        node, it = stack[-1]
        for nxt in it:
            if nxt not in seen:
                seen.add(nxt)
                stack.append((nxt, iter(sorted(neighbours(nxt)))))
                break
        else:
            stack.pop()
            order.append(node)
    return order


def reverse_postorder(g: Cfg, start=None) -> list:
    return _postorder(g.entry if start is None else start, lambda n: g.successors(n))[::-1]


def post_dominators(g: Cfg) -> dict:
    """Immediate post-dominator of every node (iterative, on the reverse graph)."""
    preds = g.predecessors()
    post = _postorder(END, lambda n: preds.get(n, ()))
    missing = sorted(g.nodes - set(post))
    if missing:
        raise UnreachableExit(missing[0])
    number = {n: i for i, n in enumerate(post)}
    order = post[::-1]  # reverse postorder of the reverse graph, END first
    ipdom = {END: END}

    def intersect(a, b):
        while a != b:
            while number[a] < number[b]:
                a = ipdom[a]
            while number[b] < number[a]:
                b = ipdom[b]
        return a

    changed = True
    while changed:
        changed = False
        for n in order[1:]:
            new = None
            for s in g.successors(n):
                if s in ipdom:
                    new = s if new is None else intersect(s, new)
            if ipdom.get(n) != new:
                ipdom[n] = new
                changed = True
    del ipdom[END]
    return ipdom


def post_dominance_frontier(g: Cfg, ipdom: Optional[dict] = None) -> dict:
    """PDF(n): branch nodes where n's post-dominance ends."""
    if ipdom is None:
        ipdom = post_dominators(g)
    pdf = {n: set() for n in g.nodes}
    for b in g.nodes:
        succs = g.successors(b)
        if len(succs) < 2:
            continue
        for s in succs:
            runner = s
            while runner != ipdom[b]:
                pdf[runner].add(b)
                runner = ipdom[runner]
    return pdf


def control_dependence(g: Cfg, ipdom: Optional[dict] = None) -> dict:
    """Controllers of each node: n depends on m iff m is in PDF(n)."""
    return {n: frozenset(s) for n, s in post_dominance_frontier(g, ipdom).items()}


def reaching_defs(g: Cfg, attrs: dict) -> dict:
    """Definitions reaching the entry of each node.

    Returns ``node -> {variable: frozenset(defining nodes)}``.  Every
    definition generates; only ``must_defs`` kill, so conditional
    instructions and the coarse ``stack`` variable never kill.
    """
    order = [n for n in reverse_postorder(g) if n != END]
    reach = set(order)
    order += sorted(g.nodes - reach)
    preds = g.predecessors()
    IN: dict = {n: {} for n in g.nodes}
    OUT: dict = {n: {} for n in g.nodes}

    def transfer(n, inn):
        rd = attrs[n]
        out = {v: s for v, s in inn.items() if v not in rd.must_defs}
        for v in rd.defs:
            out[v] = out.get(v, frozenset()) | {n}
        return out

    changed = True
    while changed:
        changed = False
        for n in order:
            inn: dict = {}
            for p in preds.get(n, ()):
                for v, s in OUT[p].items():
                    inn[v] = inn.get(v, frozenset()) | s
            out = transfer(n, inn)
            IN[n] = inn
            if out != OUT[n]:
                OUT[n] = out
                changed = True
    return IN
