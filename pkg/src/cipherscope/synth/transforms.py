"""Semantics-preserving program transforms: data obfuscation, randomized
arithmetic injection, and codegen variation (register renaming, in-block
scheduling, loop unrolling).

Every pass re-validates its output; the test suite additionally re-executes
transformed programs and compares functional outputs byte for byte.

Flag discipline: the scalar ALU instructions overwrite all flags, and the
only flag reader is a jcc at a block tail.  A transform may insert or move
flag-writing instructions only where the incoming flag state is provably
dead, which ``flag_live_in`` computes by a backward fixpoint over the static
control-flow graph.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..isa import (
    Cond,
    DataObject,
    FLAG_WRITERS,
    Imm,
    Instruction,
    INVERTED_COND,
    Mem,
    NUM_SCALAR_REGS,
    NUM_WIDE_REGS,
    Opcode,
    Program,
    Reg,
    TAIL_OPCODES,
    used_registers,
    validate,
)

OBFUSCATION_MODES = ("aggregation", "split", "normal")

_BLOCK_ENDERS = TAIL_OPCODES | {Opcode.HALT}


@dataclass(frozen=True)
class Codegen:
    """Codegen variation knobs; ``None`` seeds mean "leave that pass out"."""

    rename_seed: int | None = None
    schedule_seed: int | None = None
    unroll: int = 1


def _rng(seed: int, tag: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed & U64_MASK, tag])))


U64_MASK = (1 << 64) - 1


# ---------------------------------------------------------------------------
# Static block structure and flag liveness
# ---------------------------------------------------------------------------

def static_blocks(p: Program) -> list[tuple[int, int]]:
    """Half-open [start, end) address ranges of static basic blocks."""
    n = len(p.instructions)
    leaders = {0, p.entry}
    for ins in p.instructions:
        if ins.opcode in (Opcode.JMP, Opcode.JCC, Opcode.CALL):
            leaders.add(ins.dst.value)
        if ins.opcode in _BLOCK_ENDERS and ins.addr + 1 < n:
            leaders.add(ins.addr + 1)
    starts = sorted(leaders)
    return [(s, e) for s, e in zip(starts, starts[1:] + [n])]


def _block_successors(p: Program, start: int, end: int) -> list[int] | None:
    """Successor block starts; ``None`` means unknown (ret)."""
    last = p.instructions[end - 1]
    op = last.opcode
    if op is Opcode.JMP:
        return [last.dst.value]
    if op is Opcode.JCC:
        return [last.dst.value, end] if end < len(p.instructions) else [last.dst.value]
    if op is Opcode.CALL:
        out = [last.dst.value]
        if end < len(p.instructions):
            out.append(end)
        return out
    if op is Opcode.RET:
        return None
    if op is Opcode.HALT:
        return []
    return [end] if end < len(p.instructions) else []


def flag_live_in(p: Program) -> dict[int, bool]:
    """For each block start: could the incoming flag state still be read?"""
    blocks = static_blocks(p)
    by_start = {s: (s, e) for s, e in blocks}

    first_event: dict[int, str] = {}
    for s, e in blocks:
        ev = "none"
        for ins in p.instructions[s:e]:
            if ins.opcode in FLAG_WRITERS:
                ev = "write"
                break
            if ins.opcode is Opcode.JCC:
                ev = "read"
                break
        first_event[s] = ev

    live: dict[int, bool] = {s: first_event[s] == "read" for s, _ in blocks}
    changed = True
    while changed:
        changed = False
        for s, e in blocks:
            if first_event[s] != "none":
                continue
            succ = _block_successors(p, s, e)
            if succ is None:
                out = True  # ret: be conservative about the caller
            else:
                out = any(live[t] for t in succ if t in by_start)
            if out and not live[s]:
                live[s] = True
                changed = True
    return live


def _flags_dead_after(p: Program, addr: int, live: dict[int, bool],
                      blocks: list[tuple[int, int]]) -> bool:
    """True when a flag write right after ``addr`` can never be observed."""
    for s, e in blocks:
        if s <= addr < e:
            for ins in p.instructions[addr + 1 : e]:
                if ins.opcode in FLAG_WRITERS:
                    return True
                if ins.opcode is Opcode.JCC:
                    return False
            succ = _block_successors(p, s, e)
            if succ is None:
                return False
            return not any(live.get(t, False) for t in succ)
    raise ValueError(f"address {addr} outside program")


# ---------------------------------------------------------------------------
# Program rewriting with target fixup
# ---------------------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class RelTarget:
    """Branch target pointing ``delta`` instructions into its own expansion."""

    delta: int


def rewrite_program(p: Program, expansions: dict[int, list[Instruction]],
                    data_objects: dict[str, DataObject] | None = None,
                    meta: tuple[str, ...] | None = None) -> Program:
    """Replace instruction ``a`` with ``expansions[a]`` (default: itself),
    remapping branch targets and the entry point.  Old targets land on the
    first instruction of the corresponding expansion; ``RelTarget`` operands
    resolve relative to their own expansion's start."""
    new_pos: dict[int, int] = {}
    out: list[tuple[Instruction, int]] = []  # (proto, expansion start)
    pos = 0
    for a, ins in enumerate(p.instructions):
        group = expansions.get(a, [ins])
        new_pos[a] = pos
        for g in group:
            out.append((g, new_pos[a]))
            pos += 1

    fixed: list[Instruction] = []
    for i, (g, start) in enumerate(out):
        dst = g.dst
        if isinstance(dst, RelTarget):
            dst = Imm(start + dst.delta)
        elif g.opcode in (Opcode.JMP, Opcode.JCC, Opcode.CALL):
            dst = Imm(new_pos[dst.value])
        fixed.append(replace(g, dst=dst, addr=i))

    return Program(
        tuple(fixed),
        dict(data_objects if data_objects is not None else p.data_objects),
        entry=new_pos[p.entry],
        label=p.label,
        meta=p.meta if meta is None else meta,
    )


def _checked(p: Program, what: str) -> Program:
    diags = validate(p)
    if diags:
        raise AssertionError(f"{what} produced invalid program: {diags[:4]}")
    return p


# ---------------------------------------------------------------------------
# Obfuscation (aggregation / split / normal)
# ---------------------------------------------------------------------------

def _fresh_name(taken, stem: str) -> str:
    name = stem
    k = 0
    while name in taken:
        k += 1
        name = f"{stem}{k}"
    return name


def _aggregate(p: Program, rng: np.random.Generator) -> Program:
    pool = [n for n, o in p.data_objects.items() if not o.mutable]
    if len(pool) < 2:
        return replace(p, meta=p.meta + ("obfuscation:aggregation:no-candidate",))
    k = int(rng.integers(2, len(pool) + 1))
    picked = [pool[i] for i in sorted(rng.choice(len(pool), size=k, replace=False))]

    blob_name = _fresh_name(p.data_objects, "blob")
    offsets: dict[str, int] = {}
    blob = bytearray()
    for name in picked:
        offsets[name] = len(blob)
        blob.extend(p.data_objects[name].data)

    new_data: dict[str, DataObject] = {}
    placed = False
    for name, obj in p.data_objects.items():
        if name in offsets:
            if not placed:
                new_data[blob_name] = DataObject(bytes(blob), mutable=False)
                placed = True
            continue
        new_data[name] = obj

    def remap(op):
        if isinstance(op, Mem) and op.obj in offsets:
            if op.width == 0:
                return op
            return Mem(blob_name, op.base + offsets[op.obj], op.index, op.width)
        return op

    fixed = []
    for ins in p.instructions:
        if ins.opcode is Opcode.LEA and isinstance(ins.src, Mem) and ins.src.obj in offsets:
            # lea only computes base+index; renaming the object keeps the value.
            fixed.append(replace(ins, src=replace(ins.src, obj=blob_name)))
        else:
            fixed.append(replace(ins, dst=remap(ins.dst), src=remap(ins.src)))
    return Program(tuple(fixed), new_data, entry=p.entry, label=p.label, meta=p.meta)


def _split(p: Program, rng: np.random.Generator) -> Program:
    live = flag_live_in(p)
    blocks = static_blocks(p)

    loads_by_obj: dict[str, list[int]] = {}
    wide_loaded: set[str] = set()
    for ins in p.instructions:
        if ins.opcode is Opcode.LOAD and isinstance(ins.src, Mem):
            if ins.src.width == 16:
                wide_loaded.add(ins.src.obj)
            else:
                loads_by_obj.setdefault(ins.src.obj, []).append(ins.addr)

    used_scalar, _ = used_registers(p)
    free = sorted(set(range(NUM_SCALAR_REGS)) - used_scalar)
    candidates = []
    if free:
        for name, obj in p.data_objects.items():
            if obj.mutable or name in wide_loaded or name not in loads_by_obj:
                continue
            if all(_flags_dead_after(p, a, live, blocks) for a in loads_by_obj[name]):
                candidates.append(name)
    if not candidates:
        return replace(p, meta=p.meta + ("obfuscation:split:no-candidate",))

    target = candidates[int(rng.integers(len(candidates)))]
    scratch = Reg(free[-1])
    data = p.data_objects[target].data
    share_a = bytes(int(b) for b in rng.integers(0, 256, size=len(data)))
    share_b = bytes(x ^ y for x, y in zip(data, share_a))
    name_a = _fresh_name(p.data_objects, target + "_sa")
    name_b = _fresh_name(p.data_objects, target + "_sb")

    new_data: dict[str, DataObject] = {}
    for name, obj in p.data_objects.items():
        if name == target:
            new_data[name_a] = DataObject(share_a, mutable=False)
            new_data[name_b] = DataObject(share_b, mutable=False)
        else:
            new_data[name] = obj

    expansions: dict[int, list[Instruction]] = {}
    for ins in p.instructions:
        for op_name in ("dst", "src"):
            op = getattr(ins, op_name)
            if isinstance(op, Mem) and op.obj == target:
                if ins.opcode is Opcode.LOAD and op_name == "src":
                    # Share B goes through the scratch register first: the
                    # destination may double as the index register.
                    m_a = replace(op, obj=name_a)
                    m_b = replace(op, obj=name_b)
                    expansions[ins.addr] = [
                        Instruction(Opcode.LOAD, scratch, m_b),
                        replace(ins, src=m_a),
                        Instruction(Opcode.XOR, ins.dst, scratch),
                    ]
                else:
                    # lea or other reference: point at one share (same offsets).
                    expansions.setdefault(ins.addr, [
                        replace(ins, **{op_name: replace(op, obj=name_a)})
                    ])
    return rewrite_program(p, expansions, data_objects=new_data)


def apply_obfuscation(p: Program, mode: str, seed: int) -> Program:
    """Apply one of the data obfuscation modes; functional output unchanged.

    ``aggregation`` concatenates read-only tables into one blob and rebases
    every reference; ``split`` replaces one read-only object with two xor
    shares recombined at each load; ``normal`` is the identity.  When no
    candidate exists the program is returned with a note in its metadata.
    """
    if mode not in OBFUSCATION_MODES:
        raise ValueError(f"unknown obfuscation mode '{mode}'")
    if mode == "normal":
        return p
    rng = _rng(seed, 0xB0F)
    out = _aggregate(p, rng) if mode == "aggregation" else _split(p, rng)
    return _checked(out, f"obfuscation '{mode}'")


# ---------------------------------------------------------------------------
# Randomized arithmetic injection
# ---------------------------------------------------------------------------

_DEAD_OPS = (Opcode.ADD, Opcode.SUB, Opcode.XOR, Opcode.OR, Opcode.AND,
             Opcode.SHL, Opcode.SHR)


def _dead_snippet(rng, free_reg: int) -> list[Instruction]:
    r = Reg(free_reg)
    out = [Instruction(Opcode.MOV, r, Imm(int(rng.integers(0, 1 << 16))))]
    for _ in range(int(rng.integers(1, 5))):
        op = _DEAD_OPS[int(rng.integers(len(_DEAD_OPS)))]
        limit = 64 if op in (Opcode.SHL, Opcode.SHR) else 1 << 16
        out.append(Instruction(op, r, Imm(int(rng.integers(0, limit)))))
    return out


def _neutral_snippet(rng, reg: int) -> list[Instruction]:
    r = Reg(reg)
    c = Imm(int(rng.integers(1, 1 << 16)))
    if rng.integers(2):
        return [Instruction(Opcode.ADD, r, c), Instruction(Opcode.SUB, r, c)]
    return [Instruction(Opcode.XOR, r, c), Instruction(Opcode.XOR, r, c)]


def _loop_snippet(rng, free_reg: int) -> list[Instruction]:
    r = Reg(free_reg)
    iters = int(rng.integers(1, 65))  # compile-time bound keeps traces small
    return [
        Instruction(Opcode.MOV, r, Imm(iters)),
        Instruction(Opcode.DEC, r),
        Instruction(Opcode.JCC, RelTarget(1), cond=Cond.NZ),
    ]


def inject_arithmetic(p: Program, seed: int, count: int | None = None,
                      mean: float = 3.0) -> Program:
    """Insert dead or semantically neutral snippets (and bounded junk loops)
    at flag-dead block boundaries.  ``count=0`` is the identity; otherwise
    the snippet count is drawn from a Poisson with the given mean (min 1)."""
    if count == 0:
        return p
    rng = _rng(seed, 0x17E)
    if count is None:
        count = max(1, int(rng.poisson(mean)))

    live = flag_live_in(p)
    blocks = static_blocks(p)
    sites = [s for s, _ in blocks if not live[s]]
    if not sites:
        return replace(p, meta=p.meta + ("inject:no-safe-site",))
    used_scalar, _ = used_registers(p)
    free = sorted(set(range(NUM_SCALAR_REGS)) - used_scalar)
    used = sorted(used_scalar)

    picks = rng.integers(0, len(sites), size=count)
    expansions: dict[int, list[Instruction]] = {}
    for k in picks:
        site = sites[int(k)]
        kinds = ["neutral"] if used else []
        if free:
            kinds += ["dead", "loop"]
        kind = kinds[int(rng.integers(len(kinds)))]
        if kind == "dead":
            snip = _dead_snippet(rng, free[int(rng.integers(len(free)))])
        elif kind == "loop":
            snip = _loop_snippet(rng, free[int(rng.integers(len(free)))])
        else:
            snip = _neutral_snippet(rng, used[int(rng.integers(len(used)))])
        expansions.setdefault(site, [])
        expansions[site] = snip + expansions[site]
    for site in expansions:
        expansions[site] = expansions[site] + [p.instructions[site]]
    return _checked(rewrite_program(p, expansions), "inject_arithmetic")


# ---------------------------------------------------------------------------
# Codegen variation
# ---------------------------------------------------------------------------

def _rename(p: Program, seed: int) -> Program:
    rng = _rng(seed, 0x4E4)
    perm = [int(x) for x in rng.permutation(NUM_SCALAR_REGS)]
    wperm = [int(x) for x in rng.permutation(NUM_WIDE_REGS)]

    def remap(op):
        if isinstance(op, Reg):
            return Reg(wperm[op.index], True) if op.wide else Reg(perm[op.index])
        if isinstance(op, Mem) and op.index is not None:
            return replace(op, index=Reg(perm[op.index.index]))
        return op

    fixed = tuple(
        replace(ins, dst=remap(ins.dst), src=remap(ins.src)) for ins in p.instructions
    )
    return Program(fixed, dict(p.data_objects), entry=p.entry, label=p.label, meta=p.meta)


def _reads_writes(ins: Instruction):
    """Resource read/write sets for the scheduler.  Registers are ints
    (wide bank offset by 100), memory objects are 'm:<name>' tokens."""
    reads: list = []
    writes: list = []

    def reg_id(r: Reg) -> int:
        return 100 + r.index if r.wide else r.index

    op = ins.opcode
    for operand in (ins.dst, ins.src):
        if isinstance(operand, Mem) and operand.index is not None:
            reads.append(reg_id(operand.index))
    if op in (Opcode.ADD, Opcode.SUB, Opcode.SHR, Opcode.SHL,
              Opcode.AND, Opcode.OR, Opcode.XOR):
        reads.append(reg_id(ins.dst))
        writes.append(reg_id(ins.dst))
        if isinstance(ins.src, Reg):
            reads.append(reg_id(ins.src))
    elif op in (Opcode.INC, Opcode.DEC):
        reads.append(reg_id(ins.dst))
        writes.append(reg_id(ins.dst))
    elif op is Opcode.TEST:
        reads.append(reg_id(ins.dst))
        if isinstance(ins.src, Reg):
            reads.append(reg_id(ins.src))
    elif op is Opcode.MOV:
        writes.append(reg_id(ins.dst))
        if isinstance(ins.src, Reg):
            reads.append(reg_id(ins.src))
    elif op is Opcode.LEA:
        writes.append(reg_id(ins.dst))
    elif op is Opcode.LOAD:
        writes.append(reg_id(ins.dst))
        reads.append(f"m:{ins.src.obj}")
    elif op is Opcode.STORE:
        writes.append(f"m:{ins.dst.obj}")
        if isinstance(ins.src, Reg):
            reads.append(reg_id(ins.src))
    elif op is Opcode.PXOR:
        reads.append(reg_id(ins.dst))
        reads.append(reg_id(ins.src))
        writes.append(reg_id(ins.dst))
    return reads, writes


def _schedule_block(instrs: list[Instruction], rng) -> list[Instruction]:
    n = len(instrs)
    if n < 3:
        return instrs
    pinned_tail = instrs[-1].opcode in _BLOCK_ENDERS
    body = n - 1 if pinned_tail else n

    succ: list[set[int]] = [set() for _ in range(n)]
    indeg = [0] * n

    def edge(a: int, b: int) -> None:
        if a != b and b not in succ[a]:
            succ[a].add(b)
            indeg[b] += 1

    last_write: dict = {}
    readers: dict = {}
    flag_writers = []
    for i in range(body):
        reads, writes = _reads_writes(instrs[i])
        for r in reads:
            if r in last_write:
                edge(last_write[r], i)
            readers.setdefault(r, []).append(i)
        for w in writes:
            if w in last_write:
                edge(last_write[w], i)
            for r in readers.get(w, ()):
                edge(r, i)
            last_write[w] = i
            readers[w] = []
        if instrs[i].opcode in FLAG_WRITERS:
            flag_writers.append(i)
    # Only the final flag state of the block is observable.
    for w in flag_writers[:-1]:
        edge(w, flag_writers[-1])
    if pinned_tail:
        for i in range(body):
            edge(i, n - 1)

    order: list[int] = []
    ready = sorted(i for i in range(n) if indeg[i] == 0)
    while ready:
        pick = ready.pop(int(rng.integers(len(ready))))
        order.append(pick)
        for s in sorted(succ[pick]):
            indeg[s] -= 1
            if indeg[s] == 0:
                ready.append(s)
        ready.sort()
    assert len(order) == n
    return [instrs[i] for i in order]


def _schedule(p: Program, seed: int) -> Program:
    rng = _rng(seed, 0x5C8)
    out: list[Instruction] = []
    for s, e in static_blocks(p):
        out.extend(_schedule_block(list(p.instructions[s:e]), rng))
    fixed = tuple(replace(ins, addr=i) for i, ins in enumerate(out))
    return Program(fixed, dict(p.data_objects), entry=p.entry, label=p.label, meta=p.meta)


class _NewImm(int):
    """Marker for branch targets already expressed in new addresses."""


def _unroll(p: Program, factor: int) -> Program:
    if factor == 1:
        return p
    if factor not in (2, 4):
        raise ValueError("unroll factor must be 1, 2 or 4")
    blocks = static_blocks(p)
    self_loops = {
        s: e
        for s, e in blocks
        if e - s >= 2
        and p.instructions[e - 1].opcode is Opcode.JCC
        and p.instructions[e - 1].dst.value == s
    }

    new: list[Instruction] = []
    addr_map: dict[int, int] = {}
    for s, e in blocks:
        if s not in self_loops:
            for a in range(s, e):
                addr_map[a] = len(new)
                new.append(p.instructions[a])
            continue
        body = p.instructions[s : e - 1]
        tail = p.instructions[e - 1]
        blen = e - s
        start = len(new)
        exit_addr = start + factor * blen
        for a in range(s, e - 1):
            addr_map[a] = start + (a - s)
        addr_map[e - 1] = start + blen - 1
        for copy in range(factor):
            new.extend(body)
            if copy < factor - 1:
                new.append(replace(tail, cond=INVERTED_COND[tail.cond],
                                   dst=_NewImm(exit_addr)))
            else:
                new.append(replace(tail, dst=_NewImm(start)))

    fixed = []
    for i, ins in enumerate(new):
        dst = ins.dst
        if ins.opcode in (Opcode.JMP, Opcode.JCC, Opcode.CALL):
            dst = Imm(int(dst)) if isinstance(dst, _NewImm) else Imm(addr_map[dst.value])
        fixed.append(replace(ins, dst=dst, addr=i))
    return Program(tuple(fixed), dict(p.data_objects), entry=addr_map[p.entry],
                   label=p.label, meta=p.meta)


def codegen_variants(p: Program, cg: Codegen) -> Program:
    """Unroll self-loop blocks, reschedule within blocks, and rename
    registers, in that order; each pass is skipped when its knob is unset."""
    out = _unroll(p, cg.unroll)
    if cg.schedule_seed is not None:
        out = _schedule(out, cg.schedule_seed)
    if cg.rename_seed is not None:
        out = _rename(out, cg.rename_seed)
    return _checked(out, "codegen_variants")
