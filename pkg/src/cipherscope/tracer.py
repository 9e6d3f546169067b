"""Program execution with full tracing: instruction events, memory-write
entropy deltas, basic-block carving and loop collapsing.

A basic block is a maximal instruction run with one entry and one exit; an
instruction is a *tail* when it is a branch, call or return, and the event
after a tail (or the first event of the trace) is a *head*.  A loop is the
immediate re-iteration of the same block, collapsed into one record with an
iteration count.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .isa import (
    Cond,
    Instruction,
    Mem,
    Opcode,
    Program,
    Reg,
    TAIL_OPCODES,
    U64,
    WEIGHTED_OPCODES,
    validate,
)

DEFAULT_STEP_LIMIT = 5_000_000
CALL_STACK_LIMIT = 1024

_LOG2 = math.log(2.0)


class ExecError(RuntimeError):
    """Raised for runtime faults: bad memory access, immutable writes,
    call-stack violations.  Hitting the step limit is not an error."""


@dataclass(slots=True)
class WriteRecord:
    """One memory write: touched byte range plus the entropy of the whole
    enclosing object before and after the write."""

    obj: str
    offset: int
    old: bytes
    new: bytes
    entropy_before: float
    entropy_after: float


@dataclass(slots=True)
class TraceEvent:
    addr: int
    opcode: Opcode
    is_head: bool
    is_tail: bool
    write: WriteRecord | None = None


@dataclass(slots=True)
class BlockRecord:
    """One carved basic block occurrence (possibly a collapsed loop)."""

    head_addr: int
    tail_addr: int
    mnemonic_counts: tuple[int, ...]
    length: int
    entropy_score: float
    loop_iters: int


@dataclass(slots=True)
class Trace:
    events: list[TraceEvent]
    blocks: list[BlockRecord]
    halted: bool
    steps: int
    final_memory: dict[str, bytes]


def shannon_entropy(data: bytes | bytearray) -> float:
    """Shannon entropy (bits per byte) of the byte-value distribution of
    ``data``; in [0, 8], with zero-probability values contributing nothing."""
    n = len(data)
    if n == 0:
        raise ValueError("entropy of empty input is undefined")
    counts: dict[int, int] = {}
    for b in data:
        counts[b] = counts.get(b, 0) + 1
    h = 0.0
    for c in counts.values():
        p = c / n
        h -= p * math.log2(p)
    return h


def _entropy_from_hist(hist: list[int], n: int) -> float:
    h = 0.0
    for c in hist:
        if c:
            p = c / n
            h -= p * math.log(p)
    return h / _LOG2


def execute(p: Program, step_limit: int = DEFAULT_STEP_LIMIT) -> Trace:
    """Run ``p`` deterministically, recording one event per executed
    instruction.  Returns with ``halted=False`` if the step limit is reached;
    raises :class:`ExecError` for memory faults."""
    if step_limit <= 0:
        raise ValueError("step_limit must be positive")
    diags = validate(p)
    if diags:
        raise ValueError("cannot execute invalid program: " + "; ".join(diags))

    code = p.instructions
    regs = [0] * 16
    wregs = [0] * 4
    fz = fs = fc = False
    call_stack: list[int] = []

    mem: dict[str, bytearray] = {}
    immutable: set[str] = set()
    hist: dict[str, list[int]] = {}
    obj_entropy: dict[str, float] = {}
    for name, obj in p.data_objects.items():
        buf = bytearray(obj.data)
        mem[name] = buf
        if not obj.mutable:
            immutable.add(name)
        h = [0] * 256
        for b in buf:
            h[b] += 1
        hist[name] = h
        obj_entropy[name] = _entropy_from_hist(h, len(buf))

    def offset_of(m: Mem) -> int:
        off = m.base
        if m.index is not None:
            off += regs[m.index.index]
        return off

    def do_load(m: Mem, addr: int) -> int:
        buf = mem[m.obj]
        off = offset_of(m)
        if off < 0 or off + m.width > len(buf):
            raise ExecError(
                f"addr {addr}: load [{m.obj}+{off}] width {m.width} out of bounds"
            )
        return int.from_bytes(buf[off:off + m.width], "little")

    def do_store(m: Mem, value: int, addr: int) -> WriteRecord:
        name = m.obj
        if name in immutable:
            raise ExecError(f"addr {addr}: write to immutable object '{name}'")
        buf = mem[name]
        off = offset_of(m)
        w = m.width
        if off < 0 or off + w > len(buf):
            raise ExecError(f"addr {addr}: store [{name}+{off}] width {w} out of bounds")
        old = bytes(buf[off:off + w])
        new = (value & ((1 << (8 * w)) - 1)).to_bytes(w, "little")
        h_before = obj_entropy[name]
        hst = hist[name]
        for b in old:
            hst[b] -= 1
        for b in new:
            hst[b] += 1
        buf[off:off + w] = new
        h_after = _entropy_from_hist(hst, len(buf))
        obj_entropy[name] = h_after
        return WriteRecord(name, off, old, new, h_before, h_after)

    events: list[TraceEvent] = []
    pc = p.entry
    steps = 0
    halted = False
    prev_tail = True  # first event is a head

    while steps < step_limit:
        ins = code[pc]
        op = ins.opcode
        steps += 1
        is_tail = op in TAIL_OPCODES
        write = None
        next_pc = pc + 1

        if op is Opcode.ADD:
            a = regs[ins.dst.index]
            b = regs[ins.src.index] if type(ins.src) is Reg else ins.src.value
            r = a + b
            fc = r > U64
            r &= U64
            regs[ins.dst.index] = r
            fz = r == 0
            fs = r >= 0x8000000000000000
        elif op is Opcode.SUB:
            a = regs[ins.dst.index]
            b = regs[ins.src.index] if type(ins.src) is Reg else ins.src.value
            fc = b > a
            r = (a - b) & U64
            regs[ins.dst.index] = r
            fz = r == 0
            fs = r >= 0x8000000000000000
        elif op is Opcode.XOR:
            b = regs[ins.src.index] if type(ins.src) is Reg else ins.src.value
            r = regs[ins.dst.index] ^ b
            regs[ins.dst.index] = r
            fz, fs, fc = r == 0, r >= 0x8000000000000000, False
        elif op is Opcode.AND:
            b = regs[ins.src.index] if type(ins.src) is Reg else ins.src.value
            r = regs[ins.dst.index] & b
            regs[ins.dst.index] = r
            fz, fs, fc = r == 0, r >= 0x8000000000000000, False
        elif op is Opcode.OR:
            b = regs[ins.src.index] if type(ins.src) is Reg else ins.src.value
            r = regs[ins.dst.index] | b
            regs[ins.dst.index] = r
            fz, fs, fc = r == 0, r >= 0x8000000000000000, False
        elif op is Opcode.TEST:
            b = regs[ins.src.index] if type(ins.src) is Reg else ins.src.value
            r = regs[ins.dst.index] & b
            fz, fs, fc = r == 0, r >= 0x8000000000000000, False
        elif op is Opcode.SHR:
            cnt = (regs[ins.src.index] if type(ins.src) is Reg else ins.src.value) & 63
            if cnt:
                a = regs[ins.dst.index]
                fc = bool((a >> (cnt - 1)) & 1)
                r = a >> cnt
                regs[ins.dst.index] = r
                fz = r == 0
                fs = r >= 0x8000000000000000
        elif op is Opcode.SHL:
            cnt = (regs[ins.src.index] if type(ins.src) is Reg else ins.src.value) & 63
            if cnt:
                a = regs[ins.dst.index]
                fc = bool((a >> (64 - cnt)) & 1)
                r = (a << cnt) & U64
                regs[ins.dst.index] = r
                fz = r == 0
                fs = r >= 0x8000000000000000
        elif op is Opcode.INC:
            r = (regs[ins.dst.index] + 1) & U64
            fc = r == 0
            regs[ins.dst.index] = r
            fz = r == 0
            fs = r >= 0x8000000000000000
        elif op is Opcode.DEC:
            a = regs[ins.dst.index]
            fc = a == 0
            r = (a - 1) & U64
            regs[ins.dst.index] = r
            fz = r == 0
            fs = r >= 0x8000000000000000
        elif op is Opcode.MOV:
            regs[ins.dst.index] = (
                regs[ins.src.index] if type(ins.src) is Reg else ins.src.value
            )
        elif op is Opcode.LOAD:
            if ins.dst.wide:
                wregs[ins.dst.index] = do_load(ins.src, pc)
            else:
                regs[ins.dst.index] = do_load(ins.src, pc)
        elif op is Opcode.STORE:
            src = ins.src
            if type(src) is Reg:
                value = wregs[src.index] if src.wide else regs[src.index]
            else:
                value = src.value
            write = do_store(ins.dst, value, pc)
        elif op is Opcode.LEA:
            m = ins.src
            off = m.base
            if m.index is not None:
                off += regs[m.index.index]
            regs[ins.dst.index] = off & U64
        elif op is Opcode.PXOR:
            wregs[ins.dst.index] ^= wregs[ins.src.index]
        elif op is Opcode.JMP:
            next_pc = ins.dst.value
        elif op is Opcode.JCC:
            c = ins.cond
            if c is Cond.Z:
                taken = fz
            elif c is Cond.NZ:
                taken = not fz
            elif c is Cond.C:
                taken = fc
            elif c is Cond.NC:
                taken = not fc
            elif c is Cond.S:
                taken = fs
            else:
                taken = not fs
            if taken:
                next_pc = ins.dst.value
        elif op is Opcode.CALL:
            if len(call_stack) >= CALL_STACK_LIMIT:
                raise ExecError(f"addr {pc}: call stack overflow")
            call_stack.append(pc + 1)
            next_pc = ins.dst.value
        elif op is Opcode.RET:
            if not call_stack:
                raise ExecError(f"addr {pc}: ret with empty call stack")
            next_pc = call_stack.pop()
        elif op is Opcode.HALT:
            events.append(TraceEvent(pc, op, prev_tail, False, None))
            halted = True
            break

        events.append(TraceEvent(pc, op, prev_tail, is_tail, write))
        prev_tail = is_tail
        pc = next_pc

    blocks = carve_blocks(events)
    final_memory = {name: bytes(buf) for name, buf in mem.items()}
    return Trace(events, blocks, halted, steps, final_memory)


_WEIGHTED_INDEX = {op: i for i, op in enumerate(WEIGHTED_OPCODES)}
_N_WEIGHTED = len(WEIGHTED_OPCODES)


def carve_blocks(events: list[TraceEvent]) -> list[BlockRecord]:
    """Partition a trace into basic-block records, collapsing immediate
    re-iterations of the same block into one record with ``loop_iters``
    incremented and counts/entropy accumulated."""
    blocks: list[BlockRecord] = []
    widx = _WEIGHTED_INDEX

    cur_head = -1
    cur_counts: list[int] | None = None
    cur_len = 0
    cur_entropy = 0.0
    prev_tail = True

    def flush(tail_addr: int) -> None:
        nonlocal cur_counts
        if cur_counts is None:
            return
        last = blocks[-1] if blocks else None
        if (
            last is not None
            and last.head_addr == cur_head
            and last.tail_addr == tail_addr
            and last.length == cur_len
        ):
            blocks[-1] = BlockRecord(
                cur_head,
                tail_addr,
                tuple(a + b for a, b in zip(last.mnemonic_counts, cur_counts)),
                cur_len,
                last.entropy_score + cur_entropy,
                last.loop_iters + 1,
            )
        else:
            blocks.append(
                BlockRecord(cur_head, tail_addr, tuple(cur_counts), cur_len, cur_entropy, 1)
            )
        cur_counts = None

    last_addr = -1
    for ev in events:
        if ev.is_head != prev_tail:
            raise ValueError(
                f"malformed event stream at addr {ev.addr}: head/tail flags inconsistent"
            )
        if ev.is_head:
            cur_head = ev.addr
            cur_counts = [0] * _N_WEIGHTED
            cur_len = 0
            cur_entropy = 0.0
        i = widx.get(ev.opcode)
        if i is not None:
            cur_counts[i] += 1
        cur_len += 1
        if ev.write is not None:
            cur_entropy += abs(ev.write.entropy_after - ev.write.entropy_before)
        if ev.is_tail:
            flush(ev.addr)
        prev_tail = ev.is_tail
        last_addr = ev.addr
    flush(last_addr)
    return blocks


def score_block_entropy(events: list[TraceEvent]) -> float:
    """Summed absolute entropy change of written objects across ``events``."""
    total = 0.0
    for ev in events:
        if ev.write is not None:
            total += abs(ev.write.entropy_after - ev.write.entropy_before)
    return total


def write_trace_dump(trace: Trace, path) -> None:
    """Debugging aid: one JSON record per event."""
    with open(path, "w") as fh:
        for ev in trace.events:
            rec = {
                "addr": ev.addr,
                "opcode": ev.opcode.mnemonic,
                "head": ev.is_head,
                "tail": ev.is_tail,
                "write_len": len(ev.write.new) if ev.write else 0,
                "dH": (
                    abs(ev.write.entropy_after - ev.write.entropy_before)
                    if ev.write
                    else 0.0
                ),
            }
            fh.write(json.dumps(rec) + "\n")
