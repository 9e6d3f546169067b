"""Assembly-text builder used by the crypto templates.

Templates emit source lines and data directives; ``build()`` hands the text
to the ISA parser, so everything the templates produce goes through the same
front end as user-supplied programs.

Register convention: templates allocate from r0-r13 and w0-w1 only, leaving
r14/r15 and w2/w3 free for the obfuscation and injection passes to claim as
scratch.
"""

from __future__ import annotations

from ..isa import Program, parse_program

TEMPLATE_SCALAR_REGS = range(14)  # r14/r15 reserved for transforms
TEMPLATE_WIDE_REGS = range(2)     # w2/w3 reserved for transforms


class Asm:
    def __init__(self) -> None:
        self._data_lines: list[str] = []
        self._code_lines: list[str] = []
        self._counter = 0

    def ins(self, *lines: str) -> None:
        self._code_lines.extend(lines)

    def label(self, name: str) -> None:
        self._code_lines.append(f"{name}:")

    def fresh(self, stem: str) -> str:
        self._counter += 1
        return f"{stem}_{self._counter}"

    def data(self, name: str, payload: bytes, mutable: bool = True) -> None:
        directive = ".data" if mutable else ".rodata"
        self._data_lines.append(f"{directive} {name} {bytes(payload).hex()}")

    def zero(self, name: str, length: int) -> None:
        self._data_lines.append(f".zero {name} {length}")

    def source(self) -> str:
        return "\n".join(self._data_lines + self._code_lines) + "\n"

    def build(self) -> Program:
        return parse_program(self.source())
