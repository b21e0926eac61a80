import os
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from armwcet.cfgbuild import reconstruct
from armwcet.listing import parse_file, parse_listing
from armwcet.semantics import initial_state
from armwcet.slicer import wcet_abstraction

LISTINGS = Path(__file__).resolve().parent.parent / "listings"

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


class Analysed:
    """Program, reconstruction and abstraction of one listing."""

    def __init__(self, program, init=None):
        self.program = program
        self.init = init if init is not None else initial_state(program.entry)
        self.rec = reconstruct(program, init=self.init)
        self.cfg = self.rec.cfg
        self.ap = wcet_abstraction(self.cfg, program, self.rec.attrs, self.rec.spmap)


def analyse(text_or_program, bot=(), regs=None, **kw):
    program = parse_listing(text_or_program, **kw) if isinstance(text_or_program, str) else text_or_program
    values = dict(regs or {})
    values.update({r: None for r in bot})
    return Analysed(program, initial_state(program.entry, regs=values))


@pytest.fixture(scope="session")
def fibo():
    return parse_file(LISTINGS / "fibo.arm")


@pytest.fixture(scope="session")
def fibo0():
    return parse_file(LISTINGS / "fibo0.arm")


@pytest.fixture(scope="session")
def ld_follow_st():
    return parse_file(LISTINGS / "ld_follow_st.s")


@pytest.fixture(scope="session")
def fibo_analysed(fibo):
    return Analysed(fibo)


@pytest.fixture(scope="session")
def fibo0_analysed(fibo0):
    return Analysed(fibo0)


# -- acceptance summary ------------------------------------------------------

ACCEPTANCE_LINES: list = []


@pytest.fixture
def report_criterion(request):
    """Record a criterion's outcome; the summary prints one line per criterion."""
    state = {}

    def record(number, title):
        state["label"] = f"criterion {number}: {title}"

    yield record
    if "label" in state:
        rep = getattr(request.node, "rep_call", None)
        ok = rep is not None and rep.passed
        line = f"{'PASS' if ok else 'FAIL'}  {state['label']}"
        ACCEPTANCE_LINES.append(line)
        print(line)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
