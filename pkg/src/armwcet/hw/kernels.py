"""Cache kernels over numpy tag arrays.

Compiled with numba's ``@njit`` when numba is importable, unless the
environment variable ``WCET_NO_NUMBA`` is set to a non-empty value other
than ``0``; otherwise the same functions run as plain Python over numpy.

Layout: ``tags[set, way]`` holds the line address (``addr >> line_shift``)
or -1, ``fifo[set]`` the next victim way, ``dirty[set, way, half]`` one bit
per half-line.
"""

from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("WCET_NO_NUMBA", "") not in ("", "0")

try:  # pragma: no cover - depends on the environment
    if _DISABLED:
        raise ImportError
    from numba import njit as _njit

    USING_NUMBA = True
except ImportError:  # pragma: no cover
    _njit = None
    USING_NUMBA = False


def optional_njit(func):
    if USING_NUMBA:
        return _njit(cache=False, nogil=True)(func)
    return func


@optional_njit
def set_index(addr, line_shift, set_mask):
    return (addr >> line_shift) & set_mask


@optional_njit
def lookup(tags, addr, line_shift, set_mask):
    """Way holding ``addr``'s line, or -1."""
    line = addr >> line_shift
    s = line & set_mask
    for w in range(tags.shape[1]):
        if tags[s, w] == line:
            return w
    return -1


@optional_njit
def insert(tags, fifo, dirty, addr, line_shift, set_mask):
    """Allocate ``addr``'s line in the FIFO victim way.

    Returns the number of memory transfers: 2 when the victim has a dirty
    half-line to write back, else 1.
    """
    line = addr >> line_shift
    s = line & set_mask
    w = fifo[s]
    transfers = 1
    if tags[s, w] != -1 and (dirty[s, w, 0] or dirty[s, w, 1]):
        transfers = 2
    tags[s, w] = line
    dirty[s, w, 0] = 0
    dirty[s, w, 1] = 0
    fifo[s] = (w + 1) % tags.shape[1]
    return transfers


@optional_njit
def mark_dirty(tags, dirty, addr, line_shift, set_mask):
    """Set the dirty bit of ``addr``'s half-line; False on a miss."""
    w = lookup(tags, addr, line_shift, set_mask)
    if w < 0:
        return False
    line = addr >> line_shift
    half = (addr >> (line_shift - 1)) & 1
    dirty[line & set_mask, w, half] = 1
    return True


@optional_njit
def run_cache_trace(tags, fifo, dirty, addrs, writes, line_shift, set_mask, write_back):
    """Replay an access stream; returns (hit flags, memory transfers).

    Reads allocate on a miss; writes never allocate.  Under write-back a
    write hit dirties its half-line, otherwise every write costs one
    buffered transfer.
    """
    n = addrs.shape[0]
    hits = np.zeros(n, dtype=np.int8)
    transfers = 0
    for i in range(n):
        a = addrs[i]
        if writes[i]:
            if write_back and mark_dirty(tags, dirty, a, line_shift, set_mask):
                hits[i] = 1
            else:
                if lookup(tags, a, line_shift, set_mask) >= 0:
                    hits[i] = 1
                transfers += 1
        else:
            if lookup(tags, a, line_shift, set_mask) >= 0:
                hits[i] = 1
            else:
                transfers += insert(tags, fifo, dirty, a, line_shift, set_mask)
    return hits, transfers


def new_cache(sets: int, ways: int):
    """Empty (tags, fifo, dirty) arrays."""
    return (np.full((sets, ways), -1, dtype=np.int64),
            np.zeros(sets, dtype=np.int64),
            np.zeros((sets, ways, 2), dtype=np.uint8))


# Per-access calls from the cycle model are dominated by numba's dispatch
# cost, so the model uses the uncompiled bodies; bulk replays stay compiled.
scalar_lookup = getattr(lookup, "py_func", lookup)
scalar_insert = getattr(insert, "py_func", insert)
scalar_mark_dirty = getattr(mark_dirty, "py_func", mark_dirty)
