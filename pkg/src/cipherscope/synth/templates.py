"""Hand-written ISA builders for the five crypto primitives plus the
sequential RSA+AES composite.

Each emitter writes straight-line or looped assembly into an :class:`Asm`
with a name prefix so that emitters compose (the composite label runs two of
them back to back).  Conditional data paths are mostly branchless (two's
complement masking) which keeps dynamic traces compact: a loop body without
internal branches collapses into a single basic-block record.

All templates compute the genuine primitive; the test suite checks their
traced outputs against published vectors and independent references.
"""

from __future__ import annotations

import sympy

from .builder import Asm
from .constants import (
    MD5_INIT,
    MD5_SHIFTS,
    aes_rcon,
    aes_sbox,
    blowfish_tables,
    md5_sine_table,
    words_le,
)

M32 = 0xFFFFFFFF


def _emit_wrap_to_zero(a: Asm, reg: str, limit: int, t: str, u: str) -> None:
    """reg = 0 if reg == limit else reg, without branching."""
    a.ins(
        f"mov {t}, {reg}",
        f"sub {t}, {limit}",
        f"mov {u}, 0",
        f"sub {u}, {t}",
        f"or {u}, {t}",
        f"shr {u}, 63",       # u = 1 iff reg != limit
        f"mov {t}, 0",
        f"sub {t}, {u}",      # all-ones iff reg != limit
        f"and {reg}, {t}",
    )


# ---------------------------------------------------------------------------
# RC4
# ---------------------------------------------------------------------------

def emit_rc4(a: Asm, pfx: str, key: bytes, pt: bytes) -> None:
    n = len(pt)
    a.data(f"{pfx}key", key, mutable=False)
    a.data(f"{pfx}pt", pt, mutable=False)
    a.zero(f"{pfx}s", 256)
    a.zero(f"{pfx}ks", n)
    a.zero(f"{pfx}ct", n)

    init = a.fresh(f"{pfx}init")
    a.ins("mov r0, 0")
    a.label(init)
    a.ins(
        f"store byte [{pfx}s+r0], r0",
        "inc r0",
        "mov r5, r0",
        "sub r5, 256",
        f"jnz {init}",
    )

    # Key scheduling: j = (j + S[i] + key[i mod klen]) & 255, swap.
    ksa = a.fresh(f"{pfx}ksa")
    a.ins("mov r0, 0", "mov r1, 0", "mov r2, 0")
    a.label(ksa)
    a.ins(
        f"load r3, byte [{pfx}s+r0]",
        "add r1, r3",
        f"load r5, byte [{pfx}key+r2]",
        "add r1, r5",
        "and r1, 255",
        f"load r4, byte [{pfx}s+r1]",
        f"store byte [{pfx}s+r0], r4",
        f"store byte [{pfx}s+r1], r3",
        "inc r2",
    )
    _emit_wrap_to_zero(a, "r2", len(key), "r5", "r6")
    a.ins(
        "inc r0",
        "mov r5, r0",
        "sub r5, 256",
        f"jnz {ksa}",
    )

    # Keystream generation, xoring the plaintext as it goes.
    prga = a.fresh(f"{pfx}prga")
    a.ins("mov r0, 0", "mov r1, 0", "mov r8, 0")
    a.label(prga)
    a.ins(
        "inc r0",
        "and r0, 255",
        f"load r3, byte [{pfx}s+r0]",
        "add r1, r3",
        "and r1, 255",
        f"load r4, byte [{pfx}s+r1]",
        f"store byte [{pfx}s+r0], r4",
        f"store byte [{pfx}s+r1], r3",
        "mov r5, r3",
        "add r5, r4",
        "and r5, 255",
        f"load r6, byte [{pfx}s+r5]",
        f"store byte [{pfx}ks+r8], r6",
        f"load r5, byte [{pfx}pt+r8]",
        "xor r5, r6",
        f"store byte [{pfx}ct+r8], r5",
        "inc r8",
        "mov r5, r8",
        f"sub r5, {n}",
        f"jnz {prga}",
    )


# ---------------------------------------------------------------------------
# MD5
# ---------------------------------------------------------------------------

def md5_pad(message: bytes) -> bytes:
    bitlen = 8 * len(message)
    padded = message + b"\x80"
    padded += bytes((56 - len(padded)) % 64)
    return padded + bitlen.to_bytes(8, "little")


def emit_md5(a: Asm, pfx: str, message: bytes) -> None:
    msg = md5_pad(message)
    a.data(f"{pfx}msg", msg, mutable=False)
    a.data(f"{pfx}tbl", words_le(md5_sine_table()), mutable=False)
    shifts = bytes(s for row in MD5_SHIFTS for s in row * 4)
    a.data(f"{pfx}stab", shifts, mutable=False)
    a.zero(f"{pfx}digest", 16)

    a.ins(
        f"mov r0, {MD5_INIT[0]}",
        f"mov r1, {MD5_INIT[1]}",
        f"mov r2, {MD5_INIT[2]}",
        f"mov r3, {MD5_INIT[3]}",
        "mov r4, 0",
    )
    block = a.fresh(f"{pfx}block")
    a.label(block)
    a.ins("mov r10, r0", "mov r11, r1", "mov r12, r2", "mov r13, r3")

    for rnd in range(4):
        loop = a.fresh(f"{pfx}round{rnd}")
        a.ins("mov r5, 0")
        a.label(loop)
        # f(b, c, d) into r6
        if rnd == 0:
            a.ins(
                "mov r6, r1", "and r6, r2",
                "mov r7, r1", f"xor r7, {M32}", "and r7, r3",
                "or r6, r7",
            )
        elif rnd == 1:
            a.ins(
                "mov r6, r3", "and r6, r1",
                "mov r7, r3", f"xor r7, {M32}", "and r7, r2",
                "or r6, r7",
            )
        elif rnd == 2:
            a.ins("mov r6, r1", "xor r6, r2", "xor r6, r3")
        else:
            a.ins(
                "mov r6, r3", f"xor r6, {M32}", "or r6, r1", "xor r6, r2",
            )
        # message word index g into r7
        if rnd == 0:
            a.ins("mov r7, r5")
        elif rnd == 1:
            a.ins("mov r7, r5", "shl r7, 2", "add r7, r5", "inc r7", "and r7, 15")
        elif rnd == 2:
            a.ins("mov r7, r5", "shl r7, 1", "add r7, r5", "add r7, 5", "and r7, 15")
        else:
            a.ins("mov r7, r5", "shl r7, 3", "sub r7, r5", "and r7, 15")
        a.ins(
            "shl r7, 2",
            "add r7, r4",
            f"load r8, dword [{pfx}msg+r7]",
            "add r6, r8",
            "add r6, r0",
            # sine-table entry for this step
            "mov r7, r5",
            "shl r7, 2",
            f"lea r7, [{pfx}tbl+{64 * rnd}+r7]",
            f"load r8, dword [{pfx}tbl+r7]",
            "add r6, r8",
            f"and r6, {M32}",
            # left-rotate by the per-step amount
            f"load r8, byte [{pfx}stab+{16 * rnd}+r5]",
            "mov r9, r6",
            "shl r9, r8",
            "mov r7, 32",
            "sub r7, r8",
            "shr r6, r7",
            "or r6, r9",
            f"and r6, {M32}",
            "add r6, r1",
            f"and r6, {M32}",
            # (a, b, c, d) <- (d, b + rot, b, c)
            "mov r9, r3",
            "mov r3, r2",
            "mov r2, r1",
            "mov r1, r6",
            "mov r0, r9",
            # step counter
            "inc r5",
            "mov r6, r5",
            "sub r6, 16",
            f"jnz {loop}",
        )

    a.ins(
        "add r0, r10", f"and r0, {M32}",
        "add r1, r11", f"and r1, {M32}",
        "add r2, r12", f"and r2, {M32}",
        "add r3, r13", f"and r3, {M32}",
        "add r4, 64",
        "mov r6, r4",
        f"sub r6, {len(msg)}",
        f"jnz {block}",
        f"store dword [{pfx}digest], r0",
        f"store dword [{pfx}digest+4], r1",
        f"store dword [{pfx}digest+8], r2",
        f"store dword [{pfx}digest+12], r3",
    )


# ---------------------------------------------------------------------------
# AES-128 (CBC over whole blocks)
# ---------------------------------------------------------------------------

_SHIFTROWS_SRC = tuple(4 * ((c + r) & 3) + r for c in range(4) for r in range(4))


def _emit_aes_subbytes(a: Asm, pfx: str) -> None:
    loop = a.fresh(f"{pfx}sub")
    a.ins("mov r1, 0")
    a.label(loop)
    a.ins(
        f"load r2, byte [{pfx}state+r1]",
        f"load r2, byte [{pfx}sbox+r2]",
        f"store byte [{pfx}state+r1], r2",
        "inc r1",
        "mov r2, r1",
        "sub r2, 16",
        f"jnz {loop}",
    )


def _emit_aes_shiftrows(a: Asm, pfx: str) -> None:
    for i, src in enumerate(_SHIFTROWS_SRC):
        a.ins(
            f"load r2, byte [{pfx}state+{src}]" if src else f"load r2, byte [{pfx}state]",
            f"store byte [{pfx}tmp+{i}], r2" if i else f"store byte [{pfx}tmp], r2",
        )
    a.ins(
        f"load w0, dqword [{pfx}tmp]",
        f"store dqword [{pfx}state], w0",
    )


def _emit_xtime(a: Asm, reg: str, t1: str, t2: str) -> None:
    # GF(2^8) doubling: (x << 1) ^ (0x1b when bit 7 was set), branchless.
    a.ins(
        f"mov {t1}, {reg}",
        f"shr {t1}, 7",
        f"mov {t2}, 0",
        f"sub {t2}, {t1}",
        f"and {t2}, 27",
        f"shl {reg}, 1",
        f"xor {reg}, {t2}",
        f"and {reg}, 255",
    )


def _emit_aes_mixcolumns(a: Asm, pfx: str) -> None:
    loop = a.fresh(f"{pfx}mix")
    a.ins("mov r1, 0")
    a.label(loop)
    a.ins(
        f"load r2, byte [{pfx}state+r1]",
        f"load r3, byte [{pfx}state+1+r1]",
        f"load r4, byte [{pfx}state+2+r1]",
        f"load r5, byte [{pfx}state+3+r1]",
        "mov r6, r2",
        "xor r6, r3",
        "xor r6, r4",
        "xor r6, r5",
    )
    pairs = [("r2", "r3", 0), ("r3", "r4", 1), ("r4", "r5", 2), ("r5", "r2", 3)]
    for x, y, off in pairs:
        a.ins(f"mov r9, {x}", f"xor r9, {y}")
        _emit_xtime(a, "r9", "r7", "r8")
        a.ins(
            "xor r9, r6",
            f"xor r9, {x}",
            f"store byte [{pfx}state+{off}+r1], r9"
            if off
            else f"store byte [{pfx}state+r1], r9",
        )
    a.ins(
        "add r1, 4",
        "mov r7, r1",
        "sub r7, 16",
        f"jnz {loop}",
    )


def emit_aes(a: Asm, pfx: str, key: bytes, iv: bytes, pt: bytes) -> None:
    nb = len(pt) // 16
    a.data(f"{pfx}sbox", aes_sbox(), mutable=False)
    a.data(f"{pfx}rcon", aes_rcon(), mutable=False)
    a.data(f"{pfx}key", key, mutable=False)
    a.data(f"{pfx}iv", iv, mutable=False)
    a.data(f"{pfx}pt", pt, mutable=False)
    a.zero(f"{pfx}w", 176)
    a.zero(f"{pfx}state", 16)
    a.zero(f"{pfx}tmp", 16)
    a.zero(f"{pfx}chain", 16)
    a.zero(f"{pfx}ct", 16 * nb)

    # Key expansion: w[0..3] is the key, then 40 derived words.
    a.ins(
        f"load w0, dqword [{pfx}key]",
        f"store dqword [{pfx}w], w0",
        f"load w1, dqword [{pfx}iv]",
        f"store dqword [{pfx}chain], w1",
    )
    kx = a.fresh(f"{pfx}keyexp")
    plain = a.fresh(f"{pfx}kxplain")
    a.ins("mov r0, 4")
    a.label(kx)
    a.ins(
        "mov r1, r0",
        "dec r1",
        "shl r1, 2",
        f"load r2, byte [{pfx}w+r1]",
        f"load r3, byte [{pfx}w+1+r1]",
        f"load r4, byte [{pfx}w+2+r1]",
        f"load r5, byte [{pfx}w+3+r1]",
        "mov r6, r0",
        "and r6, 3",
        f"jnz {plain}",
        # every fourth word: rotate, substitute, fold in the round constant
        "mov r6, r2",
        "mov r2, r3",
        "mov r3, r4",
        "mov r4, r5",
        "mov r5, r6",
        f"load r2, byte [{pfx}sbox+r2]",
        f"load r3, byte [{pfx}sbox+r3]",
        f"load r4, byte [{pfx}sbox+r4]",
        f"load r5, byte [{pfx}sbox+r5]",
        "mov r6, r0",
        "shr r6, 2",
        "dec r6",
        f"load r7, byte [{pfx}rcon+r6]",
        "xor r2, r7",
    )
    a.label(plain)
    a.ins(
        "mov r7, r0",
        "shl r7, 2",
        "sub r7, 16",
        f"lea r9, [{pfx}w+16+r7]",
        f"load r8, byte [{pfx}w+r7]",
        "xor r8, r2",
        f"store byte [{pfx}w+r9], r8",
    )
    # remaining three bytes of the new word
    for j in (1, 2, 3):
        a.ins(
            f"load r8, byte [{pfx}w+{j}+r7]",
            f"xor r8, {('r3', 'r4', 'r5')[j - 1]}",
            f"store byte [{pfx}w+{j}+r9], r8",
        )
    a.ins(
        "inc r0",
        "mov r6, r0",
        "sub r6, 44",
        f"jnz {kx}",
    )

    block = a.fresh(f"{pfx}blk")
    rounds = a.fresh(f"{pfx}rounds")
    a.ins("mov r12, 0")
    a.label(block)
    a.ins(
        f"load w0, dqword [{pfx}pt+r12]",
        f"load w1, dqword [{pfx}chain]",
        "pxor w0, w1",
        f"load w1, dqword [{pfx}w]",
        "pxor w0, w1",
        f"store dqword [{pfx}state], w0",
        "mov r0, 1",
    )
    a.label(rounds)
    _emit_aes_subbytes(a, pfx)
    _emit_aes_shiftrows(a, pfx)
    _emit_aes_mixcolumns(a, pfx)
    a.ins(
        "mov r1, r0",
        "shl r1, 4",
        f"load w0, dqword [{pfx}state]",
        f"load w1, dqword [{pfx}w+r1]",
        "pxor w0, w1",
        f"store dqword [{pfx}state], w0",
        "inc r0",
        "mov r1, r0",
        "sub r1, 10",
        f"jnz {rounds}",
    )
    _emit_aes_subbytes(a, pfx)
    _emit_aes_shiftrows(a, pfx)
    a.ins(
        f"load w0, dqword [{pfx}state]",
        f"load w1, dqword [{pfx}w+160]",
        "pxor w0, w1",
        f"store dqword [{pfx}state], w0",
        f"store dqword [{pfx}ct+r12], w0",
        f"store dqword [{pfx}chain], w0",
        "add r12, 16",
        "mov r1, r12",
        f"sub r1, {16 * nb}",
        f"jnz {block}",
    )


# ---------------------------------------------------------------------------
# Blowfish (ECB over whole 8-byte blocks)
# ---------------------------------------------------------------------------

def emit_blowfish(a: Asm, pfx: str, key: bytes, pt: bytes) -> None:
    nb = len(pt) // 8
    p_init, boxes = blowfish_tables()
    a.data(f"{pfx}p", words_le(p_init), mutable=True)
    for i in range(4):
        a.data(f"{pfx}s{i}", words_le(boxes[i]), mutable=True)
    a.data(f"{pfx}key", key, mutable=False)
    a.data(f"{pfx}pt", pt, mutable=False)
    a.zero(f"{pfx}ct", 8 * nb)

    fenc = a.fresh(f"{pfx}fenc")

    # Fold the key into the P-array, four big-endian bytes per word.
    kx = a.fresh(f"{pfx}keyxor")
    a.ins("mov r8, 0", "mov r9, 0")
    a.label(kx)
    a.ins("mov r2, 0")
    for _ in range(4):
        a.ins(
            "shl r2, 8",
            f"load r3, byte [{pfx}key+r9]",
            "or r2, r3",
            "inc r9",
        )
        _emit_wrap_to_zero(a, "r9", len(key), "r3", "r4")
    a.ins(
        "mov r3, r8",
        "shl r3, 2",
        f"load r4, dword [{pfx}p+r3]",
        "xor r4, r2",
        f"store dword [{pfx}p+r3], r4",
        "inc r8",
        "mov r3, r8",
        "sub r3, 18",
        f"jnz {kx}",
    )

    # Generate the subkeys by repeatedly encrypting the zero block.
    a.ins("mov r0, 0", "mov r1, 0")
    for name, words in ((f"{pfx}p", 18), (f"{pfx}s0", 256), (f"{pfx}s1", 256),
                        (f"{pfx}s2", 256), (f"{pfx}s3", 256)):
        fill = a.fresh(f"{name}fill")
        a.ins("mov r10, 0")
        a.label(fill)
        a.ins(
            f"call {fenc}",
            "mov r2, r10",
            "shl r2, 2",
            f"store dword [{name}+r2], r0",
            f"store dword [{name}+4+r2], r1",
            "add r10, 2",
            "mov r2, r10",
            f"sub r2, {words}",
            f"jnz {fill}",
        )

    # Encrypt the payload block by block (big-endian packing).
    enc = a.fresh(f"{pfx}enc")
    a.ins("mov r11, 0")
    a.label(enc)
    a.ins("mov r0, 0")
    for j in range(4):
        a.ins(
            "shl r0, 8",
            f"load r2, byte [{pfx}pt+{j}+r11]" if j else f"load r2, byte [{pfx}pt+r11]",
            "or r0, r2",
        )
    a.ins("mov r1, 0")
    for j in range(4, 8):
        a.ins("shl r1, 8", f"load r2, byte [{pfx}pt+{j}+r11]", "or r1, r2")
    a.ins(f"call {fenc}")
    for j, (reg, shift) in enumerate(
        [("r0", 24), ("r0", 16), ("r0", 8), ("r0", 0),
         ("r1", 24), ("r1", 16), ("r1", 8), ("r1", 0)]
    ):
        a.ins(
            f"mov r2, {reg}",
            f"shr r2, {shift}" if shift else "and r2, 255",
        )
        if shift:
            a.ins("and r2, 255")
        a.ins(f"store byte [{pfx}ct+{j}+r11], r2" if j else f"store byte [{pfx}ct+r11], r2")
    a.ins(
        "add r11, 8",
        "mov r2, r11",
        f"sub r2, {8 * nb}",
        f"jnz {enc}",
    )
    a.ins("halt")

    # Feistel network: (r0, r1) -> encrypted (r0, r1); clobbers r2-r4.
    a.label(fenc)
    for i in range(16):
        a.ins(
            f"load r2, dword [{pfx}p+{4 * i}]" if i else f"load r2, dword [{pfx}p]",
            "xor r0, r2",
            # F(r0): S-box mash of the four bytes
            "mov r2, r0",
            "shr r2, 24",
            "shl r2, 2",
            f"load r3, dword [{pfx}s0+r2]",
            "mov r2, r0",
            "shr r2, 16",
            "and r2, 255",
            "shl r2, 2",
            f"load r4, dword [{pfx}s1+r2]",
            "add r3, r4",
            f"and r3, {M32}",
            "mov r2, r0",
            "shr r2, 8",
            "and r2, 255",
            "shl r2, 2",
            f"load r4, dword [{pfx}s2+r2]",
            "xor r3, r4",
            "mov r2, r0",
            "and r2, 255",
            "shl r2, 2",
            f"load r4, dword [{pfx}s3+r2]",
            "add r3, r4",
            f"and r3, {M32}",
            "xor r1, r3",
            "mov r2, r0",
            "mov r0, r1",
            "mov r1, r2",
        )
    a.ins(
        "mov r2, r0",
        "mov r0, r1",
        "mov r1, r2",
        f"load r2, dword [{pfx}p+64]",
        "xor r1, r2",
        f"load r2, dword [{pfx}p+68]",
        "xor r0, r2",
        "ret",
    )


# ---------------------------------------------------------------------------
# Modular exponentiation (the RSA core)
# ---------------------------------------------------------------------------

def _emit_mod_reduce(a: Asm, reg: str, n_reg: str, t: str, u: str) -> None:
    # reg in [0, 2n) -> reg mod n; values stay below 2^63 so the sign bit of
    # the wrapped difference tells whether the subtraction underflowed.
    a.ins(
        f"mov {t}, {reg}",
        f"sub {t}, {n_reg}",
        f"mov {u}, {t}",
        f"shr {u}, 63",
        f"dec {u}",
        f"and {u}, {n_reg}",
        f"sub {reg}, {u}",
    )


def emit_modexp(a: Asm, pfx: str, m: int, e: int, n: int) -> None:
    """result = m**e mod n by square-and-multiply; n must stay below 2^62."""
    if not 1 < n < (1 << 62):
        raise ValueError("modulus out of range")
    a.data(f"{pfx}mod", n.to_bytes(8, "little"), mutable=False)
    a.data(f"{pfx}exp", e.to_bytes(8, "little"), mutable=False)
    a.data(f"{pfx}msg", (m % n).to_bytes(8, "little"), mutable=False)
    a.zero(f"{pfx}out", 8)

    modmul = a.fresh(f"{pfx}modmul")
    mxloop = a.fresh(f"{pfx}mx")
    skip = a.fresh(f"{pfx}mxskip")
    a.ins(
        f"load r9, qword [{pfx}mod]",
        f"load r10, qword [{pfx}exp]",
        f"load r0, qword [{pfx}msg]",
        "mov r11, 1",
    )
    a.label(mxloop)
    a.ins(
        "test r10, 1",
        f"jz {skip}",
        "mov r12, r0",
        "mov r0, r11",
        "mov r1, r12",
        "mov r3, r9",
        f"call {modmul}",
        "mov r11, r2",
        "mov r0, r12",
    )
    a.label(skip)
    a.ins(
        "mov r1, r0",
        "mov r3, r9",
        f"call {modmul}",
        "mov r0, r2",
        "shr r10, 1",
        f"jnz {mxloop}",
        f"store qword [{pfx}out], r11",
    )
    a.ins("halt")

    # r2 = (r0 * r1) mod r3 by shift-and-add; clobbers r4-r6.
    loop = a.fresh(f"{pfx}mm")
    a.label(modmul)
    a.ins("mov r2, 0")
    a.label(loop)
    a.ins(
        "mov r4, r1",
        "and r4, 1",
        "mov r5, 0",
        "sub r5, r4",
        "mov r6, r0",
        "and r6, r5",
        "add r2, r6",
    )
    _emit_mod_reduce(a, "r2", "r3", "r4", "r5")
    a.ins("add r0, r0")
    _emit_mod_reduce(a, "r0", "r3", "r4", "r5")
    a.ins(
        "shr r1, 1",
        f"jnz {loop}",
        "ret",
    )


def rsa_params(seed_bytes: bytes) -> tuple[int, int]:
    """Derive a deterministic semiprime modulus (< 2^62) and e=65537."""
    lo = int.from_bytes(seed_bytes[:8], "little")
    hi = int.from_bytes(seed_bytes[8:16], "little")
    p = sympy.nextprime((1 << 30) + lo % ((1 << 30) - 4096))
    q = sympy.nextprime((1 << 30) + hi % ((1 << 30) - 4096))
    if p == q:
        q = sympy.nextprime(q)
    return int(p) * int(q), 65537


# ---------------------------------------------------------------------------
# Top-level builders (one per class label)
# ---------------------------------------------------------------------------

def build_rc4(key: bytes, iv: bytes, pt: bytes) -> Asm:
    a = Asm()
    emit_rc4(a, "", key, pt)
    a.ins("halt")
    return a


def build_md5(key: bytes, iv: bytes, pt: bytes) -> Asm:
    a = Asm()
    emit_md5(a, "", pt)
    a.ins("halt")
    return a


def build_aes(key: bytes, iv: bytes, pt: bytes) -> Asm:
    a = Asm()
    emit_aes(a, "", key, iv, pt)
    a.ins("halt")
    return a


def build_blowfish(key: bytes, iv: bytes, pt: bytes) -> Asm:
    a = Asm()
    emit_blowfish(a, "", key, pt)
    return a  # emit_blowfish places its own halt ahead of the subroutine


def build_rsa(key: bytes, iv: bytes, pt: bytes) -> Asm:
    n, e = rsa_params(key)
    m = int.from_bytes(pt, "little") % n
    a = Asm()
    emit_modexp(a, "", m, e, n)
    return a  # emit_modexp places its own halt ahead of the subroutine


def build_rsa_aes(key: bytes, iv: bytes, pt: bytes) -> Asm:
    # Hybrid shape: bulk-encrypt with AES, then wrap the session key with
    # the modexp core.
    a = Asm()
    emit_aes(a, "a_", key, iv, pt)
    n, e = rsa_params(key)
    m = int.from_bytes(key[:8], "little") % n
    emit_modexp(a, "r_", m, e, n)
    return a


BUILDERS = {
    "aes": build_aes,
    "rc4": build_rc4,
    "blowfish": build_blowfish,
    "md5": build_md5,
    "rsa": build_rsa,
    "rsa+aes": build_rsa_aes,
}

#: Data objects holding each label's functional output, used by the
#: semantic-preservation checks.
OUTPUT_OBJECTS = {
    "aes": ("ct",),
    "rc4": ("ks", "ct"),
    "blowfish": ("ct",),
    "md5": ("digest",),
    "rsa": ("out",),
    "rsa+aes": ("a_ct", "r_out"),
}
