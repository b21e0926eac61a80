"""Compare the compiled cache kernels with the plain-numpy fallback.

Each variant runs in a fresh interpreter because the choice is made at
import time from ``WCET_NO_NUMBA``.

    python3 benchmarks/bench_kernels.py [--accesses N] [--repeat R]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from armwcet.hw import kernels
from armwcet.hw.config import HwConfig
from armwcet.hw.model import run_trace
from armwcet.listing import parse_file
from armwcet.oracles import Machine, interpret

n, repeat, listing = int(sys.argv[1]), int(sys.argv[2]), sys.argv[3]
rng = np.random.default_rng(1234)
addrs = (rng.integers(0, 1 << 16, size=n) * 4).astype(np.int64)
writes = rng.random(n) < 0.3
cfg = HwConfig()
shift, mask = 5, cfg.sets - 1

def bulk():
    tags, fifo, dirty = kernels.new_cache(cfg.sets, cfg.ways)
    return kernels.run_cache_trace(tags, fifo, dirty, addrs, writes, shift, mask, False)

def per_call():
    tags, fifo, dirty = kernels.new_cache(cfg.sets, cfg.ways)
    for a in addrs[: n // 10].tolist():
        if kernels.lookup(tags, a, shift, mask) < 0:
            kernels.insert(tags, fifo, dirty, a, shift, mask)

program = parse_file(listing)
trace = interpret(program, Machine.start(program.entry, regs={0: 2000, 1: 0x8004d94}))

def pipeline():
    run_trace(cfg, trace)

bulk(); per_call()  # warm-up (and compilation)
out = {"numba": kernels.USING_NUMBA}
for name, fn in (("bulk_trace", bulk), ("per_call", per_call), ("pipeline", pipeline)):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    out[name] = best
hits, transfers = bulk()
out["checksum"] = [int(hits.sum()), int(transfers)]
print(json.dumps(out))
"""


def run(flag: str, n: int, repeat: int, listing: str) -> dict:
    env = dict(os.environ, WCET_NO_NUMBA=flag)
    res = subprocess.run([sys.executable, "-c", WORKER, str(n), str(repeat), listing],
                         env=env, capture_output=True, text=True, check=True)
    return json.loads(res.stdout)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--accesses", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    here = os.path.dirname(os.path.abspath(__file__))
    ap.add_argument("--listing", default=os.path.join(here, "..", "listings", "ld_follow_st.s"))
    args = ap.parse_args(argv)
    jit = run("0", args.accesses, args.repeat, args.listing)
    py = run("1", args.accesses, args.repeat, args.listing)
    if jit["checksum"] != py["checksum"]:
        print("kernel variants disagree:", jit["checksum"], py["checksum"])
        return 1
    print(f"{'kernel':<12}{'numba' if jit['numba'] else 'numba (absent)':>16}{'numpy':>12}{'speedup':>10}")
    for name in ("bulk_trace", "per_call", "pipeline"):
        print(f"{name:<12}{jit[name]:>15.4f}s{py[name]:>11.4f}s{py[name] / jit[name]:>9.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
