"""Packed linear algebra over F_2 and small prime fields F_q.

Vectors are coordinate sequences; coordinate ``x`` (1-based, as in the matrix
notation used elsewhere in the package) lives at Python index ``x - 1``.
:class:`BitVec` packs 64 coordinates per ``uint64`` word, little-endian
within the word, and keeps the bits past ``len`` cleared.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numba
import numpy as np

from .errors import DimensionError, ParameterError

WORD = 64

__all__ = [
    "BitVec",
    "FqVec",
    "is_prime",
    "xor_add",
    "rank",
    "spans",
    "random_combination",
    "rank_fq",
    "pack_rows",
    "rank_packed",
    "full_rank_probability",
]


def is_prime(q: int) -> bool:
    if q < 2:
        return False
    d = 2
    while d * d <= q:
        if q % d == 0:
            return False
        d += 1
    return True


def _nwords(length: int) -> int:
    return (length + WORD - 1) // WORD


def _tail_mask(length: int) -> np.uint64:
    r = length % WORD
    if r == 0:
        return np.uint64(0xFFFFFFFFFFFFFFFF)
    return np.uint64((1 << r) - 1)


@dataclass(frozen=True, eq=False)
class BitVec:
    """Vector in F_2^len stored as packed 64-bit words."""

    len: int
    words: np.ndarray

    def __post_init__(self):
        w = np.ascontiguousarray(self.words, dtype=np.uint64)
        if w.shape != (_nwords(self.len),):
            raise DimensionError(f"{self.len} coordinates need {_nwords(self.len)} words, got {w.shape}")
        if self.len and w[-1] & ~_tail_mask(self.len):
            w = w.copy()
            w[-1] &= _tail_mask(self.len)
        w.flags.writeable = False
        object.__setattr__(self, "words", w)

    # construction

    @classmethod
    def zeros(cls, length: int) -> "BitVec":
        return cls(length, np.zeros(_nwords(length), dtype=np.uint64))

    @classmethod
    def unit(cls, x: int, length: int) -> "BitVec":
        """The standard basis vector e_x (1-based)."""
        if not 1 <= x <= length:
            raise DimensionError(f"e_{x} outside [1, {length}]")
        return cls.from_int(1 << (x - 1), length)

    @classmethod
    def from_int(cls, value: int, length: int) -> "BitVec":
        if value < 0:
            raise ParameterError("negative bit pattern")
        value &= (1 << length) - 1
        nw = _nwords(length)
        raw = value.to_bytes(nw * 8, "little")
        return cls(length, np.frombuffer(raw, dtype="<u8").astype(np.uint64))

    @classmethod
    def from_bits(cls, bits: Iterable[int]) -> "BitVec":
        arr = np.asarray(list(bits) if not isinstance(bits, np.ndarray) else bits, dtype=np.uint8)
        length = int(arr.size)
        padded = np.zeros(_nwords(length) * WORD, dtype=np.uint8)
        padded[:length] = arr & 1
        packed = np.packbits(padded, bitorder="little")
        return cls(length, packed.view("<u8").astype(np.uint64))

    @classmethod
    def from_string(cls, s: str) -> "BitVec":
        """Parse ``"10110"``; the first character is coordinate 1."""
        return cls.from_bits(int(c) for c in s.strip())

    # conversion

    def to_int(self) -> int:
        return int.from_bytes(self.words.astype("<u8").tobytes(), "little")

    def bits(self) -> np.ndarray:
        if self.len == 0:
            return np.zeros(0, dtype=np.uint8)
        raw = np.unpackbits(self.words.astype("<u8").view(np.uint8), bitorder="little")
        return raw[: self.len].copy()

    def __str__(self) -> str:
        return "".join(str(int(b)) for b in self.bits())

    def __repr__(self) -> str:
        return f"BitVec({self.len}, '{self}')"

    # algebra

    def __len__(self) -> int:
        return self.len

    def __getitem__(self, i: int) -> int:
        if i < 0:
            i += self.len
        if not 0 <= i < self.len:
            raise IndexError(i)
        return int((self.words[i // WORD] >> np.uint64(i % WORD)) & np.uint64(1))

    def __eq__(self, other) -> bool:
        if not isinstance(other, BitVec):
            return NotImplemented
        return self.len == other.len and bool(np.array_equal(self.words, other.words))

    def __hash__(self) -> int:
        return hash((self.len, self.words.tobytes()))

    def __xor__(self, other: "BitVec") -> "BitVec":
        return xor_add(self, other)

    __add__ = __xor__

    def is_zero(self) -> bool:
        return not self.words.any()

    def weight(self) -> int:
        return int(sum(int(w).bit_count() for w in self.words))

    def dot(self, other: "BitVec") -> int:
        """Bilinear form Z^T . Y over F_2."""
        if self.len != other.len:
            raise DimensionError(f"{self.len} != {other.len}")
        return int(sum(int(w).bit_count() for w in self.words & other.words) & 1)

    def restrict(self, a: int, b: int) -> "BitVec":
        """Coordinates a..b (1-based, inclusive) as a vector of length b-a+1."""
        if not 1 <= a <= b <= self.len:
            raise DimensionError(f"[{a}, {b}] not inside [1, {self.len}]")
        return BitVec.from_int(self.to_int() >> (a - 1), b - a + 1)


@dataclass(frozen=True, eq=False)
class FqVec:
    """Vector in F_q^len, q prime below 256, stored as byte residues."""

    len: int
    q: int
    entries: np.ndarray

    def __post_init__(self):
        if not (2 <= self.q <= 251 and is_prime(self.q)):
            raise ParameterError(f"q={self.q} is not a prime in [2, 251]")
        e = np.asarray(self.entries, dtype=np.int64)
        if e.shape != (self.len,):
            raise DimensionError(f"expected {self.len} entries, got {e.shape}")
        e = (e % self.q).astype(np.uint8)
        e.flags.writeable = False
        object.__setattr__(self, "entries", e)

    @classmethod
    def zeros(cls, length: int, q: int) -> "FqVec":
        return cls(length, q, np.zeros(length, dtype=np.uint8))

    @classmethod
    def unit(cls, x: int, length: int, q: int) -> "FqVec":
        if not 1 <= x <= length:
            raise DimensionError(f"e_{x} outside [1, {length}]")
        e = np.zeros(length, dtype=np.uint8)
        e[x - 1] = 1
        return cls(length, q, e)

    def __len__(self) -> int:
        return self.len

    def __getitem__(self, i: int) -> int:
        return int(self.entries[i])

    def __eq__(self, other) -> bool:
        if not isinstance(other, FqVec):
            return NotImplemented
        return self.q == other.q and self.len == other.len and bool(np.array_equal(self.entries, other.entries))

    def __hash__(self) -> int:
        return hash((self.q, self.entries.tobytes()))

    def __repr__(self) -> str:
        return f"FqVec(q={self.q}, {self.entries.tolist()})"

    def _check(self, other: "FqVec"):
        if self.len != other.len:
            raise DimensionError(f"{self.len} != {other.len}")
        if self.q != other.q:
            raise ParameterError(f"field mismatch: F_{self.q} vs F_{other.q}")

    def __add__(self, other: "FqVec") -> "FqVec":
        self._check(other)
        return FqVec(self.len, self.q, self.entries.astype(np.int64) + other.entries)

    def scale(self, c: int) -> "FqVec":
        return FqVec(self.len, self.q, self.entries.astype(np.int64) * (c % self.q))

    def dot(self, other: "FqVec") -> int:
        self._check(other)
        return int(np.dot(self.entries.astype(np.int64), other.entries.astype(np.int64)) % self.q)

    def is_zero(self) -> bool:
        return not self.entries.any()

    def restrict(self, a: int, b: int) -> "FqVec":
        if not 1 <= a <= b <= self.len:
            raise DimensionError(f"[{a}, {b}] not inside [1, {self.len}]")
        return FqVec(b - a + 1, self.q, self.entries[a - 1 : b])


def xor_add(v: BitVec, w: BitVec) -> BitVec:
    """Coordinatewise sum mod 2."""
    if v.len != w.len:
        raise DimensionError(f"cannot add vectors of length {v.len} and {w.len}")
    return BitVec(v.len, v.words ^ w.words)


def pack_rows(vs: Sequence[BitVec], dim: int) -> np.ndarray:
    """Stack vectors into a (len(vs), words) uint64 matrix."""
    nw = _nwords(dim)
    out = np.zeros((len(vs), nw), dtype=np.uint64)
    for r, v in enumerate(vs):
        if v.len != dim:
            raise DimensionError(f"vector {r} has length {v.len}, expected {dim}")
        out[r] = v.words
    return out


@numba.njit(cache=True, nogil=True)
def _lowest_bit(x):
    # index of the lowest set bit of a nonzero uint64
    i = 0
    while (x & np.uint64(1)) == 0:
        x >>= np.uint64(1)
        i += 1
    return i


@numba.njit(cache=True, nogil=True)
def rank_packed(mat):
    """Rank over F_2 of the rows of a packed (m, words) uint64 matrix.

    Each row is reduced against a basis keyed by lowest set bit; the input
    is left untouched.
    """
    m, nw = mat.shape
    basis = np.zeros((nw * 64, nw), dtype=np.uint64)
    have = np.zeros(nw * 64, dtype=np.bool_)
    work = np.empty(nw, dtype=np.uint64)
    r = 0
    for i in range(m):
        for k in range(nw):
            work[k] = mat[i, k]
        while True:
            piv = -1
            for k in range(nw):
                if work[k] != 0:
                    piv = k * 64 + _lowest_bit(work[k])
                    break
            if piv < 0:
                break
            if have[piv]:
                for k in range(nw):
                    work[k] ^= basis[piv, k]
            else:
                for k in range(nw):
                    basis[piv, k] = work[k]
                have[piv] = True
                r += 1
                break
    return r


def rank(vs: Sequence[BitVec], dim: int) -> int:
    """Dimension of span(vs) inside F_2^dim."""
    if not vs:
        return 0
    return int(rank_packed(pack_rows(vs, dim)))


def spans(vs: Sequence[BitVec], dim: int) -> bool:
    return rank(vs, dim) == dim


def random_combination(vs: Sequence[BitVec], marks: Sequence[int]) -> BitVec:
    """Sum of marks[i] * vs[i] over F_2."""
    if len(marks) != len(vs):
        raise DimensionError(f"{len(marks)} marks for {len(vs)} vectors")
    if not vs:
        raise DimensionError("empty combination has no ambient dimension")
    acc = np.zeros_like(vs[0].words)
    for v, m in zip(vs, marks):
        if v.len != vs[0].len:
            raise DimensionError("vectors of different lengths")
        if m & 1:
            acc ^= v.words
    return BitVec(vs[0].len, acc)


def rank_fq(vs: Sequence[FqVec], dim: int) -> int:
    """Rank over F_q by row reduction of a residue matrix."""
    if not vs:
        return 0
    q = vs[0].q
    for v in vs:
        if v.len != dim:
            raise DimensionError(f"vector of length {v.len}, expected {dim}")
        if v.q != q:
            raise ParameterError("mixed fields")
    a = np.stack([v.entries.astype(np.int64) for v in vs])
    r = 0
    for col in range(dim):
        piv = next((i for i in range(r, a.shape[0]) if a[i, col]), None)
        if piv is None:
            continue
        a[[r, piv]] = a[[piv, r]]
        a[r] = (a[r] * pow(int(a[r, col]), q - 2, q)) % q
        nz = np.nonzero(a[:, col])[0]
        for i in nz:
            if i != r:
                a[i] = (a[i] - a[i, col] * a[r]) % q
        r += 1
        if r == a.shape[0]:
            break
    return r


def full_rank_probability(rows: int, cols: int) -> float:
    """P(an i.i.d. fair-bit rows x cols matrix has rank min(rows, cols))."""
    lo, hi = min(rows, cols), max(rows, cols)
    p = 1.0
    for i in range(lo):
        p *= 1.0 - 2.0 ** (i - hi)
    return p
