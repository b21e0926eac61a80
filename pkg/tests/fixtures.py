"""Small programs with enumerable behaviour, shared by the explorer tests."""

import itertools


def lines(*instrs):
    return "".join(f"{4 * i}: {s}\n" for i, s in enumerate(instrs))


SMALL = [-2, -1, 0, 1, 2, 6]

# name -> (listing, ⊥ registers, concrete registers, concrete inputs for the brute-force oracle)
FIXTURES = {
    "cmp_addgt": (lines("cmp r0, #0", "addgt r1, r1, #1", "bx lr"), [0], {}, None),
    "mul_diamond": (lines("cmp r0, #0", "addgt r1, r1, #1", "mul r2, r1, r1", "ble 20",
                          "mul r3, r2, r2", "bx lr"), [0], {}, None),
    "mem_diamond": (lines("cmp r0, #5", "ble 20", "ldr r2, [sp, #-4]", "str r2, [sp, #-8]",
                          "b 24", "add r3, r3, #1", "bx lr"), [0], {}, None),
    "loop_bot_test": (lines("mov r4, #3", "tst r0, #1", "addne r1, r1, #1", "subs r4, r4, #1",
                            "bne 4", "bx lr"), [0], {}, None),
    "mla_single": (lines("mov r1, #2", "mla r0, r1, r1, r1", "bx lr"), [], {}, None),
    "smull_cond": (lines("cmp r0, r1", "smullgt r2, r3, r0, r1", "bx lr"), [0, 1], {}, None),
    "call_return": (lines("push {lr}", "bl 16", "pop {lr}", "bx lr",
                          "cmp r0, #0", "moveq r1, #1", "mulne r1, r0, r0", "bx lr"), [0], {}, None),
    # no concrete input runs both multiplications
    "correlated": (lines("cmp r0, #0", "bne 12", "mul r1, r1, r1", "cmp r0, #0", "beq 24",
                         "mul r2, r2, r2", "bx lr"), [0], {}, None),
    "unknown_load": (lines("str r0, [r1, #0]", "ldr r2, [r1, #16]", "cmp r2, #0", "ble 20",
                           "str r2, [r1, #2048]", "bx lr"), [0], {1: 0x20000},
                     [{"regs": {0: 1, 1: 0x20000}, "mem": {0x20010: v}} for v in SMALL]),
    "nested": (lines("cmp r0, #0", "blt 16", "cmp r1, #0", "mulgt r2, r0, r1", "add r3, r3, #1",
                     "bx lr"), [0, 1], {}, None),
    "mul_loop": (lines("mov r4, #2", "mul r5, r4, r4", "subs r4, r4, #1", "bne 4", "bx lr"), [], {}, None),
    "stack_pair": (lines("stmdb sp!, {r4, r5}", "cmp r0, #1", "ldmia sp!, {r4, r5}",
                         "addeq r0, r0, r0", "bx lr"), [0], {}, None),
}


def concrete_inputs(name):
    """Enumerable concrete inputs covering the fixture's ⊥ registers."""
    _, bot, regs, inputs = FIXTURES[name]
    if inputs is not None:
        return inputs
    out = []
    for values in itertools.product(SMALL, repeat=len(bot)):
        r = dict(regs)
        r.update(zip(bot, values))
        out.append({"regs": r})
    return out
