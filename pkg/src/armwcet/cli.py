"""Command-line entry point: ``wcet cfg|wcet|stack|simulate <listing>``."""

from __future__ import annotations

import argparse
import json
import sys

from .cfgbuild import emit_dot, reconstruct
from .errors import (
    AssumptionViolation,
    CfgError,
    ConfigError,
    InvalidGeometry,
    ListingError,
    StateBudgetExceeded,
    UnreachableExit,
)
from .explorer import check_reachability, explore
from .hw.config import HwConfig, load_config
from .hw.model import run_trace
from .instructions import REG_ALIASES
from .listing import parse_file, validate_assumptions
from .oracles import Machine, interpret
from .semantics import initial_state
from .slicer import max_stack_depth, wcet_abstraction

EXIT_PARSE, EXIT_CFG, EXIT_IO, EXIT_BUDGET, EXIT_ASSUMPTION = 1, 2, 3, 4, 5


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wcet", description="Static WCET analysis of ARM listings.")
    ap.add_argument("command", choices=("cfg", "wcet", "stack", "simulate"))
    ap.add_argument("listing", help="disassembly listing")
    ap.add_argument("--hw", metavar="CONFIG", help="hardware config file (key = value)")
    ap.add_argument("--slice", action="store_true", help="mark the simulated nodes of the abstraction")
    ap.add_argument("--check", metavar="K", type=int, help="only answer: is some run at least K cycles?")
    ap.add_argument("--jobs", metavar="N", type=int, default=1, help="parallel exploration workers")
    ap.add_argument("--dot", metavar="PATH", help="write the CFG as DOT (cfg: default stdout)")
    ap.add_argument("--json", metavar="PATH", help="write the report as JSON instead of stdout")
    ap.add_argument("--bot", metavar="REG", action="append", default=[],
                    help="treat register REG as an unknown input (repeatable)")
    ap.add_argument("--set", metavar="REG=VALUE", action="append", default=[],
                    help="initial register value (repeatable)")
    ap.add_argument("--no-memo", action="store_true", help="disable memoization (reference mode)")
    return ap


def _register(name: str) -> int:
    key = name.strip().lower()
    if key not in REG_ALIASES:
        raise ConfigError(f"unknown register {name!r}")
    return REG_ALIASES[key]


def _initial_regs(args) -> dict:
    regs = {}
    for item in args.set:
        name, _, value = item.partition("=")
        try:
            regs[_register(name)] = int(value, 0)
        except ValueError:
            raise ConfigError(f"bad --set {item!r}") from None
    for name in args.bot:
        regs[_register(name)] = None
    return regs


def _emit(text: str, path) -> None:
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _analyse(args, hw: HwConfig):
    program = parse_file(args.listing)
    for w in validate_assumptions(program):
        print(f"warning: {w.kind} at {w.address}: {w.message}", file=sys.stderr)
    init = initial_state(program.entry, init_sp=hw.init_sp, regs=_initial_regs(args))
    rec = reconstruct(program, init=init, step_limit=hw.sim_step_limit)
    return program, init, rec


def cmd_cfg(args, hw: HwConfig) -> int:
    program, init, rec = _analyse(args, hw)
    ap = wcet_abstraction(rec.cfg, program, rec.attrs, rec.spmap)
    marks = {"in_slice": ap.in_slice, "simulated": ap.simulated} if args.slice else {}
    _emit(emit_dot(rec.cfg, program, **marks), args.dot)
    print(f"abs {ap.abs_ratio}", file=sys.stderr)
    return 0


def cmd_wcet(args, hw: HwConfig) -> int:
    program, init, rec = _analyse(args, hw)
    ap = wcet_abstraction(rec.cfg, program, rec.attrs, rec.spmap)
    if args.dot:
        _emit(emit_dot(rec.cfg, program, in_slice=ap.in_slice, simulated=ap.simulated), args.dot)
    if args.check is not None:
        ok = check_reachability(ap, rec.cfg, hw, init, args.check, jobs=args.jobs, memo=not args.no_memo)
        print("true" if ok else "false")
        return 0
    res = explore(ap, rec.cfg, hw, init, jobs=args.jobs, memo=not args.no_memo)
    report = {
        "wcet_lower": res.wcet_lower,
        "wcet_upper": res.wcet_upper,
        "witness": res.witness_json(),
        "states_explored": res.states_explored,
        "configs_memoized": res.configs_memoized,
        "abs_ratio": ap.abs_ratio,
        "wall_time_ms": round(res.wall_time_ms, 3),
    }
    _emit(_dumps(report), args.json)
    print(f"wcet [{res.wcet_lower}, {res.wcet_upper}] abs {ap.abs_ratio}", file=sys.stderr)
    return 0


def cmd_stack(args, hw: HwConfig) -> int:
    program, init, rec = _analyse(args, hw)
    depth = max_stack_depth(rec.spmap, hw.init_sp)
    if args.json:
        report = {"max_depth": depth, "init_sp": hw.init_sp,
                  "sp": {str(n): sorted(v) for n, v in rec.spmap.items()}}
        _emit(_dumps(report), args.json)
    else:
        lines = [f"max depth {depth}"]
        for n, vals in rec.spmap.items():
            lines.append(f"{n}: " + " ".join(str(v - hw.init_sp) for v in sorted(vals)))
        _emit("\n".join(lines) + "\n", None)
    return 0


def cmd_simulate(args, hw: HwConfig) -> int:
    program = parse_file(args.listing)
    regs = _initial_regs(args)
    if any(v is None for v in regs.values()):
        raise ConfigError("simulate needs concrete inputs; use --set instead of --bot")
    machine = Machine.start(program.entry, init_sp=hw.init_sp, regs=regs)
    trace = interpret(program, machine, max_steps=hw.sim_step_limit)
    report = {
        "instructions": len(trace),
        "cycles_min": run_trace(hw, trace, "min"),
        "cycles_max": run_trace(hw, trace, "max"),
        "r0": machine.regs[0],
    }
    _emit(_dumps(report), args.json)
    return 0


COMMANDS = {"cfg": cmd_cfg, "wcet": cmd_wcet, "stack": cmd_stack, "simulate": cmd_simulate}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        hw = load_config(args.hw) if args.hw else HwConfig()
        return COMMANDS[args.command](args, hw)
    except (ListingError, ConfigError, InvalidGeometry) as exc:
        code, msg = EXIT_PARSE, exc
    except (CfgError, UnreachableExit) as exc:
        code, msg = EXIT_CFG, exc
    except OSError as exc:
        code, msg = EXIT_IO, exc
    except StateBudgetExceeded as exc:
        code, msg = EXIT_BUDGET, exc
    except AssumptionViolation as exc:
        code, msg = EXIT_ASSUMPTION, exc
    print(f"error: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
