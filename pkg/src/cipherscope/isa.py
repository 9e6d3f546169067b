"""Virtual instruction set: opcodes, operands, programs, and the assembly text format.

The machine model is deliberately small: 16 scalar 64-bit registers (r0-r15),
4 wide 128-bit registers (w0-w3), object-granular memory (named byte buffers,
no flat address space), and three flags (zero, sign, carry) written by the
scalar ALU instructions.  Programs are immutable after construction.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field, replace

U64 = (1 << 64) - 1
U128 = (1 << 128) - 1

NUM_SCALAR_REGS = 16
NUM_WIDE_REGS = 4


class Opcode(enum.IntEnum):
    ADD = 0
    SUB = 1
    INC = 2
    DEC = 3
    SHR = 4
    SHL = 5
    AND = 6
    OR = 7
    XOR = 8
    PXOR = 9
    TEST = 10
    LEA = 11
    MOV = 12
    LOAD = 13
    STORE = 14
    JMP = 15
    JCC = 16
    CALL = 17
    RET = 18
    HALT = 19

    @property
    def mnemonic(self) -> str:
        return self.name.lower()


#: The twelve weighted mnemonics used as feature channels, in canonical order.
WEIGHTED_MNEMONICS: tuple[str, ...] = (
    "add", "sub", "inc", "dec", "shr", "shl",
    "and", "or", "xor", "pxor", "test", "lea",
)

WEIGHTED_OPCODES: tuple[Opcode, ...] = tuple(Opcode[m.upper()] for m in WEIGHTED_MNEMONICS)

#: Opcodes that terminate a basic block (branch, call or return).
TAIL_OPCODES = frozenset({Opcode.JMP, Opcode.JCC, Opcode.CALL, Opcode.RET})

#: Scalar ALU opcodes that overwrite all three flags.
FLAG_WRITERS = frozenset({
    Opcode.ADD, Opcode.SUB, Opcode.INC, Opcode.DEC, Opcode.SHR,
    Opcode.SHL, Opcode.AND, Opcode.OR, Opcode.XOR, Opcode.TEST,
})


class Cond(enum.IntEnum):
    """Condition codes for jcc, keyed off the three machine flags."""

    Z = 0
    NZ = 1
    C = 2
    NC = 3
    S = 4
    NS = 5

    @property
    def mnemonic(self) -> str:
        return "j" + self.name.lower()


_COND_BY_MNEMONIC = {c.mnemonic: c for c in Cond}

#: Condition negation map, used by loop unrolling.
INVERTED_COND = {
    Cond.Z: Cond.NZ, Cond.NZ: Cond.Z,
    Cond.C: Cond.NC, Cond.NC: Cond.C,
    Cond.S: Cond.NS, Cond.NS: Cond.S,
}

MEM_WIDTH_NAMES = {1: "byte", 2: "word", 4: "dword", 8: "qword", 16: "dqword"}
MEM_WIDTH_BY_NAME = {v: k for k, v in MEM_WIDTH_NAMES.items()}


@dataclass(frozen=True, slots=True)
class Reg:
    """Register operand; ``wide`` selects the 128-bit bank."""

    index: int
    wide: bool = False

    @property
    def text(self) -> str:
        return f"{'w' if self.wide else 'r'}{self.index}"


@dataclass(frozen=True, slots=True)
class Imm:
    """Immediate operand, stored wrapped to 64 bits.  Branch targets are
    immediates holding instruction addresses."""

    value: int

    @property
    def text(self) -> str:
        return str(self.value)


@dataclass(frozen=True, slots=True)
class Mem:
    """Memory operand: a named data object plus a constant byte offset and an
    optional scalar index register.  ``width`` is the access size in bytes."""

    obj: str
    base: int = 0
    index: Reg | None = None
    width: int = 8

    @property
    def text(self) -> str:
        parts = [self.obj]
        if self.base:
            parts.append(str(self.base))
        if self.index is not None:
            parts.append(self.index.text)
        return "[" + "+".join(parts) + "]"


Operand = Reg | Imm | Mem


@dataclass(frozen=True, slots=True)
class Instruction:
    opcode: Opcode
    dst: Operand | None = None
    src: Operand | None = None
    cond: Cond | None = None
    addr: int = 0


@dataclass(frozen=True, slots=True)
class DataObject:
    """Initial contents of one named memory object."""

    data: bytes
    mutable: bool = True

    def __len__(self) -> int:
        return len(self.data)


@dataclass(frozen=True)
class Program:
    """A validated instruction sequence plus its data objects."""

    instructions: tuple[Instruction, ...]
    data_objects: dict[str, DataObject] = field(default_factory=dict)
    entry: int = 0
    label: str | None = None
    meta: tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.instructions)


class AsmError(ValueError):
    """Assembly source that cannot be parsed; carries a 1-based line number."""

    def __init__(self, line_no: int, message: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


# ---------------------------------------------------------------------------
# Operand shape rules
# ---------------------------------------------------------------------------

_SCALAR_WIDTHS = (1, 2, 4, 8)

# (dst kinds, src kinds) accepted per opcode; "sreg" = scalar register,
# "wreg" = wide register, "target" = immediate instruction address.
_ARITY = {
    Opcode.ADD: ("sreg", "sreg|imm"),
    Opcode.SUB: ("sreg", "sreg|imm"),
    Opcode.INC: ("sreg", "none"),
    Opcode.DEC: ("sreg", "none"),
    Opcode.SHR: ("sreg", "sreg|imm"),
    Opcode.SHL: ("sreg", "sreg|imm"),
    Opcode.AND: ("sreg", "sreg|imm"),
    Opcode.OR: ("sreg", "sreg|imm"),
    Opcode.XOR: ("sreg", "sreg|imm"),
    Opcode.PXOR: ("wreg", "wreg"),
    Opcode.TEST: ("sreg", "sreg|imm"),
    Opcode.LEA: ("sreg", "mem"),
    Opcode.MOV: ("sreg", "sreg|imm"),
    Opcode.LOAD: ("sreg|wreg", "mem"),
    Opcode.STORE: ("mem", "sreg|wreg|imm"),
    Opcode.JMP: ("target", "none"),
    Opcode.JCC: ("target", "none"),
    Opcode.CALL: ("target", "none"),
    Opcode.RET: ("none", "none"),
    Opcode.HALT: ("none", "none"),
}


def _operand_kind(op: Operand | None) -> str:
    if op is None:
        return "none"
    if isinstance(op, Reg):
        return "wreg" if op.wide else "sreg"
    if isinstance(op, Imm):
        return "imm"
    return "mem"


def _check_operand_shape(ins: Instruction) -> list[str]:
    """Structural checks that do not need the whole program."""
    faults = []
    dst_spec, src_spec = _ARITY[ins.opcode]
    dk, sk = _operand_kind(ins.dst), _operand_kind(ins.src)
    if dst_spec == "target":
        if dk != "imm":
            faults.append("expects a branch target")
    elif dk not in dst_spec.split("|"):
        faults.append(f"bad destination operand ({dk})")
    if sk not in src_spec.split("|"):
        faults.append(f"bad source operand ({sk})")
    if ins.opcode is Opcode.JCC and ins.cond is None:
        faults.append("jcc without condition code")
    if ins.opcode is not Opcode.JCC and ins.cond is not None:
        faults.append("condition code on non-jcc")

    for op in (ins.dst, ins.src):
        if isinstance(op, Reg):
            limit = NUM_WIDE_REGS if op.wide else NUM_SCALAR_REGS
            if not 0 <= op.index < limit:
                faults.append(f"register {op.text} out of range")
        elif isinstance(op, Mem):
            if op.width not in MEM_WIDTH_NAMES:
                faults.append(f"bad access width {op.width}")
            if op.index is not None and op.index.wide:
                faults.append("wide register used as index")
            if op.base < 0:
                faults.append("negative base offset")

    # Width / register-bank pairing for load and store.
    if ins.opcode is Opcode.LOAD and isinstance(ins.src, Mem) and isinstance(ins.dst, Reg):
        want_wide = ins.src.width == 16
        if ins.dst.wide != want_wide:
            faults.append("load width does not match register bank")
    if ins.opcode is Opcode.STORE and isinstance(ins.dst, Mem):
        if isinstance(ins.src, Reg) and ins.src.wide != (ins.dst.width == 16):
            faults.append("store width does not match register bank")
        if isinstance(ins.src, Imm) and ins.dst.width == 16:
            faults.append("immediate store cannot be dqword")
    return [f"addr {ins.addr}: {ins.opcode.mnemonic} {m}" for m in faults]


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def _successors(ins: Instruction, n: int) -> list[int]:
    op = ins.opcode
    if op is Opcode.JMP:
        return [ins.dst.value]
    if op is Opcode.JCC:
        return [ins.dst.value, ins.addr + 1]
    if op is Opcode.CALL:
        # Assume calls return; both the callee and the fall-through count.
        return [ins.dst.value, ins.addr + 1]
    if op in (Opcode.RET, Opcode.HALT):
        return []
    return [ins.addr + 1]


def validate(p: Program) -> list[str]:
    """Check all program invariants; returns a list of diagnostics (empty = ok).

    Pure: repeated calls on the same program yield identical diagnostics.
    """
    diags: list[str] = []
    n = len(p.instructions)
    if n == 0:
        return ["program has no instructions"]
    if not 0 <= p.entry < n:
        diags.append(f"entry {p.entry} out of range")
    for name, obj in p.data_objects.items():
        if len(obj.data) == 0:
            diags.append(f"data object '{name}' is empty")

    for i, ins in enumerate(p.instructions):
        if ins.addr != i:
            diags.append(f"addr {i}: instruction records addr {ins.addr}")
        diags.extend(_check_operand_shape(ins))
        if ins.opcode in (Opcode.JMP, Opcode.JCC, Opcode.CALL):
            if isinstance(ins.dst, Imm) and not 0 <= ins.dst.value < n:
                diags.append(f"addr {i}: target out of range ({ins.dst.value})")
        for op in (ins.dst, ins.src):
            if isinstance(op, Mem) and op.obj not in p.data_objects:
                diags.append(f"addr {i}: unknown data object '{op.obj}'")

    if diags:
        return diags

    # Reachability: there must be a reachable halt and no reachable
    # fall-through past the end of the program.
    seen = set()
    stack = [p.entry]
    reachable_halt = False
    while stack:
        a = stack.pop()
        if a in seen:
            continue
        seen.add(a)
        ins = p.instructions[a]
        if ins.opcode is Opcode.HALT:
            reachable_halt = True
            continue
        for s in _successors(ins, n):
            if s >= n:
                diags.append(f"addr {a}: control flow falls off program end")
            else:
                stack.append(s)
    if not reachable_halt:
        diags.append("no reachable halt")
    return diags


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_LABEL_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
_REG_RE = re.compile(r"^([rw])(\d{1,2})$")

_JCC_MNEMONICS = frozenset(_COND_BY_MNEMONIC)
_PLAIN_MNEMONICS = {op.mnemonic: op for op in Opcode if op is not Opcode.JCC}


def _parse_int(tok: str) -> int | None:
    try:
        v = int(tok, 0)
    except ValueError:
        return None
    return v & U64


def _parse_reg(tok: str) -> Reg | None:
    m = _REG_RE.match(tok)
    if not m:
        return None
    idx = int(m.group(2))
    wide = m.group(1) == "w"
    if idx >= (NUM_WIDE_REGS if wide else NUM_SCALAR_REGS):
        return None
    return Reg(idx, wide)


def _parse_mem(tok: str, line_no: int, default_width: int | None) -> Mem:
    width = default_width
    body = tok
    for name, w in MEM_WIDTH_BY_NAME.items():
        if body.startswith(name + " "):
            width = w
            body = body[len(name):].strip()
            break
    if not (body.startswith("[") and body.endswith("]")):
        raise AsmError(line_no, f"malformed memory operand '{tok}'")
    if width is None:
        raise AsmError(line_no, f"memory operand '{tok}' needs an access width")
    parts = [s.strip() for s in body[1:-1].split("+")]
    if not parts or not _LABEL_RE.match(parts[0]):
        raise AsmError(line_no, f"malformed memory operand '{tok}'")
    obj = parts[0]
    base = 0
    index = None
    for extra in parts[1:]:
        reg = _parse_reg(extra)
        if reg is not None:
            if index is not None:
                raise AsmError(line_no, "memory operand with two index registers")
            index = reg
            continue
        v = _parse_int(extra)
        if v is None:
            raise AsmError(line_no, f"bad offset '{extra}' in memory operand")
        base += v
    return Mem(obj, base, index, width)


def _split_operands(rest: str) -> list[str]:
    """Split an operand field on commas that are not inside brackets."""
    out, depth, cur = [], 0, []
    for ch in rest:
        if ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
        if ch == "," and depth == 0:
            out.append("".join(cur).strip())
            cur = []
        else:
            cur.append(ch)
    tail = "".join(cur).strip()
    if tail:
        out.append(tail)
    return out


def parse_program(text: str) -> Program:
    """Parse assembly source into a validated :class:`Program`.

    The accepted format (one item per line, ``;`` starts a comment):

    * ``mnemonic dst, src`` with lowercase mnemonics
    * ``name:`` labels, usable as branch targets
    * ``.data name <hex>`` / ``.rodata name <hex>`` / ``.zero name <len>``
    * ``.entry name`` (defaults to address 0), ``.label tag``, ``.meta text``
    """
    labels: dict[str, int] = {}
    data: dict[str, DataObject] = {}
    pending: list[tuple[int, str, list[str]]] = []  # (line_no, mnemonic, operand text)
    entry_ref: tuple[int, str] | None = None
    tag: str | None = None
    meta: list[str] = []
    addr = 0

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split(";", 1)[0].strip()
        if not line:
            continue
        if line.endswith(":"):
            name = line[:-1].strip()
            if not _LABEL_RE.match(name):
                raise AsmError(line_no, f"bad label '{name}'")
            if name in labels:
                raise AsmError(line_no, f"duplicate label '{name}'")
            labels[name] = addr
            continue
        if line.startswith("."):
            fields = line.split(None, 2)
            directive = fields[0]
            if directive in (".data", ".rodata"):
                if len(fields) != 3:
                    raise AsmError(line_no, f"{directive} needs a name and hex bytes")
                name, hexstr = fields[1], fields[2].replace(" ", "")
                try:
                    blob = bytes.fromhex(hexstr)
                except ValueError:
                    raise AsmError(line_no, f"bad hex data for '{name}'") from None
                if not blob:
                    raise AsmError(line_no, f"data object '{name}' is empty")
                if name in data:
                    raise AsmError(line_no, f"duplicate data object '{name}'")
                data[name] = DataObject(blob, mutable=directive == ".data")
            elif directive == ".zero":
                if len(fields) != 3:
                    raise AsmError(line_no, ".zero needs a name and a length")
                name = fields[1]
                length = _parse_int(fields[2])
                if length is None or length == 0:
                    raise AsmError(line_no, f"bad length for '{name}'")
                if name in data:
                    raise AsmError(line_no, f"duplicate data object '{name}'")
                data[name] = DataObject(bytes(length), mutable=True)
            elif directive == ".entry":
                if len(fields) != 2:
                    raise AsmError(line_no, ".entry needs a target")
                entry_ref = (line_no, fields[1])
            elif directive == ".label":
                if len(fields) != 2:
                    raise AsmError(line_no, ".label needs a tag")
                tag = fields[1]
            elif directive == ".meta":
                if len(fields) < 2:
                    raise AsmError(line_no, ".meta needs text")
                meta.append(line.split(None, 1)[1])
            else:
                raise AsmError(line_no, f"unknown directive '{directive}'")
            continue
        parts = line.split(None, 1)
        mnemonic = parts[0]
        ops = _split_operands(parts[1]) if len(parts) > 1 else []
        if mnemonic not in _PLAIN_MNEMONICS and mnemonic not in _JCC_MNEMONICS:
            raise AsmError(line_no, f"unknown mnemonic '{mnemonic}'")
        pending.append((line_no, mnemonic, ops))
        addr += 1

    def resolve_target(line_no: int, tok: str) -> Imm:
        if tok in labels:
            return Imm(labels[tok])
        v = _parse_int(tok)
        if v is not None and _LABEL_RE.match(tok) is None:
            return Imm(v)
        raise AsmError(line_no, f"unresolved label '{tok}'")

    def parse_operand(line_no: int, tok: str) -> Operand:
        reg = _parse_reg(tok)
        if reg is not None:
            return reg
        if "[" in tok:
            return _parse_mem(tok, line_no, None)
        v = _parse_int(tok)
        if v is not None:
            return Imm(v)
        raise AsmError(line_no, f"bad operand '{tok}'")

    instructions: list[Instruction] = []
    for i, (line_no, mnemonic, ops) in enumerate(pending):
        cond = None
        if mnemonic in _JCC_MNEMONICS:
            opcode = Opcode.JCC
            cond = _COND_BY_MNEMONIC[mnemonic]
        else:
            opcode = _PLAIN_MNEMONICS[mnemonic]

        dst: Operand | None = None
        src: Operand | None = None
        if opcode in (Opcode.JMP, Opcode.JCC, Opcode.CALL):
            if len(ops) != 1:
                raise AsmError(line_no, f"{mnemonic} takes exactly one target")
            dst = resolve_target(line_no, ops[0])
        elif opcode in (Opcode.RET, Opcode.HALT):
            if ops:
                raise AsmError(line_no, f"{mnemonic} takes no operands")
        elif opcode in (Opcode.INC, Opcode.DEC):
            if len(ops) != 1:
                raise AsmError(line_no, f"{mnemonic} takes exactly one operand")
            dst = parse_operand(line_no, ops[0])
        else:
            if len(ops) != 2:
                raise AsmError(line_no, f"{mnemonic} takes two operands")
            if opcode is Opcode.LEA:
                dst = parse_operand(line_no, ops[0])
                src = _parse_mem(ops[1], line_no, 8)
            else:
                dst = parse_operand(line_no, ops[0])
                src = parse_operand(line_no, ops[1])
        ins = Instruction(opcode, dst, src, cond, addr=i)
        faults = _check_operand_shape(ins)
        if faults:
            raise AsmError(line_no, "; ".join(faults))
        instructions.append(ins)

    entry = 0
    if entry_ref is not None:
        line_no, tok = entry_ref
        entry = resolve_target(line_no, tok).value
    return Program(tuple(instructions), data, entry=entry, label=tag, meta=tuple(meta))


# ---------------------------------------------------------------------------
# Disassembly
# ---------------------------------------------------------------------------

def disassemble(p: Program) -> str:
    """Render the canonical assembly text for ``p``.

    Byte-identical output for structurally equal programs;
    ``parse_program(disassemble(p)) == p`` for every valid program.
    """
    diags = validate(p)
    if diags:
        raise ValueError("cannot disassemble invalid program: " + "; ".join(diags))

    targets = {p.entry} if p.entry else set()
    for ins in p.instructions:
        if ins.opcode in (Opcode.JMP, Opcode.JCC, Opcode.CALL):
            targets.add(ins.dst.value)
    names = {a: f"L{a}" for a in sorted(targets)}

    lines: list[str] = []
    if p.label is not None:
        lines.append(f".label {p.label}")
    for note in p.meta:
        lines.append(f".meta {note}")
    if p.entry:
        lines.append(f".entry {names[p.entry]}")
    for name, obj in p.data_objects.items():
        if obj.mutable and not any(obj.data):
            lines.append(f".zero {name} {len(obj.data)}")
        else:
            directive = ".data" if obj.mutable else ".rodata"
            lines.append(f"{directive} {name} {obj.data.hex()}")

    def operand_text(op: Operand, width_prefix: bool) -> str:
        if isinstance(op, Mem) and width_prefix:
            return f"{MEM_WIDTH_NAMES[op.width]} {op.text}"
        return op.text

    for ins in p.instructions:
        if ins.addr in names:
            lines.append(f"{names[ins.addr]}:")
        if ins.opcode in (Opcode.JMP, Opcode.CALL):
            lines.append(f"{ins.opcode.mnemonic} {names[ins.dst.value]}")
        elif ins.opcode is Opcode.JCC:
            lines.append(f"{ins.cond.mnemonic} {names[ins.dst.value]}")
        elif ins.opcode in (Opcode.RET, Opcode.HALT):
            lines.append(ins.opcode.mnemonic)
        elif ins.src is None:
            lines.append(f"{ins.opcode.mnemonic} {operand_text(ins.dst, True)}")
        else:
            # lea never carries a width prefix; its width is fixed at parse.
            prefix = ins.opcode is not Opcode.LEA
            d = operand_text(ins.dst, True)
            s = operand_text(ins.src, prefix)
            lines.append(f"{ins.opcode.mnemonic} {d}, {s}")
    return "\n".join(lines) + "\n"


def instruction_digest(p: Program) -> str:
    """Stable hash of the instruction sequence only (data objects excluded)."""
    import hashlib

    h = hashlib.sha256()
    for ins in p.instructions:
        h.update(repr((ins.opcode, ins.dst, ins.src, ins.cond)).encode())
    return h.hexdigest()


def used_registers(p: Program) -> tuple[set[int], set[int]]:
    """Sets of scalar / wide register indices referenced anywhere in ``p``."""
    scalar: set[int] = set()
    wide: set[int] = set()
    for ins in p.instructions:
        for op in (ins.dst, ins.src):
            if isinstance(op, Reg):
                (wide if op.wide else scalar).add(op.index)
            elif isinstance(op, Mem) and op.index is not None:
                scalar.add(op.index.index)
    return scalar, wide
