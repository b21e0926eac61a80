import pytest
from hypothesis import given
from hypothesis import strategies as st

from armwcet.errors import UnreachableExit
from armwcet.graphs import END, Cfg, control_dependence, post_dominance_frontier, post_dominators, reaching_defs
from armwcet.semantics import RefDef


# -- reference computations (set-based, quadratic) ---------------------------

def naive_pdom(g: Cfg) -> dict:
    nodes = set(g.nodes) | {END}
    pdom = {n: set(nodes) for n in nodes}
    pdom[END] = {END}
    changed = True
    while changed:
        changed = False
        for n in g.nodes:
            succ = list(g.successors(n))
            new = {n} | (set.intersection(*(pdom[s] for s in succ)) if succ else set())
            if new != pdom[n]:
                pdom[n] = new
                changed = True
    return pdom


def naive_ipdom(g: Cfg) -> dict:
    pdom = naive_pdom(g)
    out = {}
    for n in g.nodes:
        strict = pdom[n] - {n}
        # the closest strict post-dominator is post-dominated by all the others
        out[n] = next(d for d in strict if strict - {d} <= pdom[d])
    return out


def naive_pdf(g: Cfg) -> dict:
    pdom = naive_pdom(g)
    pdf = {n: set() for n in g.nodes}
    for m in g.nodes:
        for s in g.successors(m):
            for n in g.nodes:
                if n in pdom[s] and not (n in pdom[m] and n != m):
                    pdf[n].add(m)
    return pdf


def naive_reaching(g: Cfg, attrs: dict) -> dict:
    """Round-robin over def sites (node, var) in reverse node order."""
    preds = {n: [p for p in g.nodes if n in g.successors(p)] for n in g.nodes}
    out = {n: set() for n in g.nodes}
    inn = {n: set() for n in g.nodes}
    changed = True
    while changed:
        changed = False
        for n in sorted(g.nodes, reverse=True):
            i = set().union(*(out[p] for p in preds[n])) if preds[n] else set()
            o = {(d, v) for d, v in i if v not in attrs[n].must_defs} | {(n, v) for v in attrs[n].defs}
            inn[n] = i
            if o != out[n]:
                out[n] = o
                changed = True
    res = {}
    for n in g.nodes:
        per = {}
        for d, v in inn[n]:
            per.setdefault(v, set()).add(d)
        res[n] = {v: frozenset(s) for v, s in per.items()}
    return res


@st.composite
def graphs(draw, max_nodes=12):
    k = draw(st.integers(1, max_nodes))
    g = Cfg(0, range(k))
    for n in range(k):
        targets = draw(st.lists(st.integers(-1, k - 1), min_size=1, max_size=2, unique=True))
        for t in targets:
            g.add_edge(n, END if t == -1 else t)
    # guarantee every node reaches END
    for n in range(k):
        if not _reaches_end(g, n):
            g.add_edge(n, END)
    return g


def _reaches_end(g, n):
    seen, work = set(), [n]
    while work:
        x = work.pop()
        if x == END:
            return True
        if x in seen:
            continue
        seen.add(x)
        work.extend(g.successors(x))
    return False


# -- examples ----------------------------------------------------------------

def test_chain():
    g = Cfg.from_edges("a", [("a", "b"), ("b", "c"), ("c", END)])
    assert post_dominators(g) == {"a": "b", "b": "c", "c": END}
    assert all(not s for s in post_dominance_frontier(g).values())
    assert all(not s for s in control_dependence(g).values())


def test_diamond():
    g = Cfg.from_edges("a", [("a", "b"), ("a", "c"), ("b", "d"), ("c", "d"), ("d", END)])
    assert post_dominators(g)["a"] == "d"
    pdf = post_dominance_frontier(g)
    assert pdf["b"] == {"a"} and pdf["c"] == {"a"}
    cd = control_dependence(g)
    assert cd["b"] == {"a"} and cd["c"] == {"a"} and cd["d"] == frozenset()


def test_unreachable_exit():
    g = Cfg.from_edges(0, [(0, 1), (1, 2), (2, 1), (0, END)])
    with pytest.raises(UnreachableExit):
        post_dominators(g)


def test_fibo_dominance(fibo_analysed):
    g = fibo_analysed.cfg
    assert post_dominators(g)[24] == 28
    assert 32 in post_dominance_frontier(g)[36]
    cd = control_dependence(g)
    for n in range(36, 60, 4):
        assert cd[n] == {32}
    for n in (24, 28, 32):
        assert cd[n] == {56}


def test_fibo_reaching(fibo_analysed):
    g, attrs = fibo_analysed.cfg, fibo_analysed.rec.attrs
    rd = reaching_defs(g, attrs)
    assert 20 in rd[28]["r3"]
    assert rd[48]["r2"] == {40}  # 40 overwrites 36 unconditionally
    assert "r9" not in rd[48]


def test_never_defined_variable():
    g = Cfg.from_edges(0, [(0, 4), (4, END)])
    attrs = {0: RefDef(frozenset(), frozenset({"pc"}), frozenset({"pc"})),
             4: RefDef(frozenset({"r5"}), frozenset({"pc"}), frozenset({"pc"}))}
    assert reaching_defs(g, attrs)[4].get("r5", frozenset()) == frozenset()


# -- oracle equivalence ------------------------------------------------------

@given(graphs())
def test_post_dominators_match_naive(g):
    assert post_dominators(g) == naive_ipdom(g)


@given(graphs())
def test_pdf_matches_definition(g):
    assert post_dominance_frontier(g) == naive_pdf(g)


VARS = ["r0", "r1", "r2"]


@st.composite
def graphs_with_defs(draw):
    g = draw(graphs())
    attrs = {}
    for n in g.nodes:
        defs = frozenset(draw(st.lists(st.sampled_from(VARS), max_size=2))) | {"pc"}
        must = defs if draw(st.booleans()) else frozenset()
        attrs[n] = RefDef(frozenset(), defs, must)
    return g, attrs


@given(graphs_with_defs())
def test_reaching_defs_match_naive(ga):
    g, attrs = ga
    assert reaching_defs(g, attrs) == naive_reaching(g, attrs)


@given(graphs_with_defs())
def test_reaching_defs_is_fixpoint(ga):
    g, attrs = ga
    rd = reaching_defs(g, attrs)
    for n in g.nodes:
        preds = [p for p in g.nodes if n in g.successors(p)]
        again = {}
        for p in preds:
            out = {v: s for v, s in rd[p].items() if v not in attrs[p].must_defs}
            for v in attrs[p].defs:
                out[v] = out.get(v, frozenset()) | {p}
            for v, s in out.items():
                again[v] = again.get(v, frozenset()) | s
        assert again == rd[n]
