"""Static WCET analysis for ARM v4T-subset disassembly listings."""

from .cfgbuild import build_cfg, reconstruct
from .explorer import WcetResult, check_reachability, explore
from .hw import HwConfig, run_trace
from .listing import Program, parse_file, parse_listing
from .semantics import SymState, TraceTriple, initial_state
from .slicer import wcet_abstraction

__version__ = "0.1.0"

__all__ = [
    "build_cfg", "reconstruct", "WcetResult", "check_reachability", "explore", "HwConfig",
    "run_trace", "Program", "parse_file", "parse_listing", "SymState", "TraceTriple",
    "initial_state", "wcet_abstraction",
]
