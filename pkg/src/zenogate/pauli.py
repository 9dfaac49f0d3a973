"""Symplectic n-qubit Pauli algebra.

A Pauli operator is stored as a pair of bit vectors (packed into Python
integers, one bit per qubit) plus a power of i:

    P = i^phase_power * X(x_bits) * Z(z_bits),

where X(x) applies sigma_x on every qubit whose bit is set in ``x`` and
Z(z) likewise for sigma_z.  Qubit 1 is the leftmost character of the
string form and the most significant bit of a computational-basis index,
so ``index ^ x_bits`` is directly the bit-flipped basis index.

The string form is "I/X/Y/Z" per qubit with an optional prefix in
{"", "-", "i", "-i"}, e.g. ``"-XZI"``; parsing and printing round-trip
exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

_PHASES = (1.0 + 0.0j, 1.0j, -1.0 + 0.0j, -1.0j)
_PREFIX_OF_POWER = {0: "", 1: "i", 2: "-", 3: "-i"}
_POWER_OF_PREFIX = {v: k for k, v in _PREFIX_OF_POWER.items()}

DENSE_QUBIT_LIMIT = 12


class DenseLimitError(ValueError):
    """Raised when a dense-matrix operation would exceed the qubit limit."""


def _parity(v: int) -> int:
    return v.bit_count() & 1


@lru_cache(maxsize=32)
def _indices(n: int) -> np.ndarray:
    return np.arange(1 << n, dtype=np.int64)


@dataclass(frozen=True)
class PauliOperator:
    """An n-qubit Pauli operator in symplectic (x|z) representation.

    Attributes
    ----------
    n : int
        Number of qubits.
    x_bits, z_bits : int
        Bit vectors of the X and Z parts; bit ``n - j`` is qubit ``j``.
    phase_power : int
        Power of i in front of the X(x)*Z(z) product, mod 4.
    """

    n: int
    x_bits: int
    z_bits: int
    phase_power: int = 0

    def __post_init__(self):
        if self.n <= 0:
            raise ValueError("qubit count must be positive")
        mask = (1 << self.n) - 1
        if self.x_bits & ~mask or self.z_bits & ~mask:
            raise ValueError("x/z bit vectors exceed the qubit count")
        object.__setattr__(self, "phase_power", self.phase_power % 4)

    # -- constructors ------------------------------------------------

    @classmethod
    def identity(cls, n: int) -> "PauliOperator":
        return cls(n, 0, 0, 0)

    @classmethod
    def single(cls, n: int, qubit: int, kind: str) -> "PauliOperator":
        """Single-qubit Pauli ``kind`` on 1-indexed ``qubit``."""
        if not 1 <= qubit <= n:
            raise ValueError(f"qubit {qubit} out of range 1..{n}")
        bit = 1 << (n - qubit)
        if kind == "X":
            return cls(n, bit, 0, 0)
        if kind == "Z":
            return cls(n, 0, bit, 0)
        if kind == "Y":
            return cls(n, bit, bit, 1)
        if kind == "I":
            return cls.identity(n)
        raise ValueError(f"unknown Pauli kind {kind!r}")

    @classmethod
    def from_string(cls, s: str) -> "PauliOperator":
        """Parse e.g. ``"XIZ"``, ``"-XZI"``, ``"iYY"``, ``"-iZZ"``."""
        body = s
        prefix = ""
        for cand in ("-i", "i", "-"):
            if s.startswith(cand):
                prefix, body = cand, s[len(cand):]
                break
        if not body or any(c not in "IXYZ" for c in body):
            raise ValueError(f"invalid Pauli string {s!r}")
        n = len(body)
        x = z = 0
        y_count = 0
        for c in body:
            x <<= 1
            z <<= 1
            if c in "XY":
                x |= 1
            if c in "ZY":
                z |= 1
            if c == "Y":
                y_count += 1
        return cls(n, x, z, (_POWER_OF_PREFIX[prefix] + y_count) % 4)

    # -- serialization -----------------------------------------------

    def to_string(self) -> str:
        chars = []
        y_count = 0
        for j in range(self.n - 1, -1, -1):
            xb = (self.x_bits >> j) & 1
            zb = (self.z_bits >> j) & 1
            chars.append("IXZY"[xb + 2 * zb])
            y_count += xb & zb
        prefix = _PREFIX_OF_POWER[(self.phase_power - y_count) % 4]
        return prefix + "".join(chars)

    def __str__(self) -> str:
        return self.to_string()

    def __repr__(self) -> str:
        return f"PauliOperator({self.to_string()!r})"

    # -- algebra -----------------------------------------------------

    def multiply(self, other: "PauliOperator") -> "PauliOperator":
        """Product self*other with exact phase tracking."""
        if self.n != other.n:
            raise ValueError("qubit count mismatch")
        # Z(z1) X(x2) = (-1)^{|z1 & x2|} X(x2) Z(z1)
        phase = (self.phase_power + other.phase_power
                 + 2 * _parity(self.z_bits & other.x_bits)) % 4
        return PauliOperator(self.n, self.x_bits ^ other.x_bits,
                             self.z_bits ^ other.z_bits, phase)

    __mul__ = multiply

    def dagger(self) -> "PauliOperator":
        phase = (-self.phase_power + 2 * _parity(self.x_bits & self.z_bits)) % 4
        return PauliOperator(self.n, self.x_bits, self.z_bits, phase)

    def inverse(self) -> "PauliOperator":
        # P^2 = i^{2p + 2|x&z|} I, so the inverse is P times that phase undone
        sq = (2 * self.phase_power + 2 * _parity(self.x_bits & self.z_bits)) % 4
        return PauliOperator(self.n, self.x_bits, self.z_bits,
                             (self.phase_power - sq) % 4)

    def negate(self) -> "PauliOperator":
        return PauliOperator(self.n, self.x_bits, self.z_bits,
                             (self.phase_power + 2) % 4)

    def commutes(self, other: "PauliOperator") -> bool:
        """Symplectic inner product test; phases are irrelevant."""
        if self.n != other.n:
            raise ValueError("qubit count mismatch")
        return (_parity(self.x_bits & other.z_bits)
                ^ _parity(self.z_bits & other.x_bits)) == 0

    def anticommutes(self, other: "PauliOperator") -> bool:
        return not self.commutes(other)

    def weight(self) -> int:
        return (self.x_bits | self.z_bits).bit_count()

    def support(self) -> tuple[int, ...]:
        """1-indexed qubits on which the operator acts nontrivially."""
        bits = self.x_bits | self.z_bits
        return tuple(j for j in range(1, self.n + 1)
                     if (bits >> (self.n - j)) & 1)

    def is_identity(self) -> bool:
        return self.x_bits == 0 and self.z_bits == 0 and self.phase_power == 0

    def is_hermitian(self) -> bool:
        return (self.phase_power - _parity(self.x_bits & self.z_bits)) % 2 == 0

    def hermitian_canonical(self) -> "PauliOperator":
        """Same symplectic content with the +1-sign Hermitian phase."""
        y_count = (self.x_bits & self.z_bits).bit_count()
        return PauliOperator(self.n, self.x_bits, self.z_bits, y_count % 4)

    def symplectic_key(self) -> tuple[int, int]:
        """(x_bits, z_bits) pair, ignoring phase; hashable group label."""
        return (self.x_bits, self.z_bits)

    # -- dense bridge ------------------------------------------------

    def to_dense(self, limit: int = DENSE_QUBIT_LIMIT) -> np.ndarray:
        """Exact 2^n x 2^n matrix including the phase."""
        if self.n > limit:
            raise DenseLimitError(
                f"dense matrix for n={self.n} exceeds limit {limit}")
        # Column b has its only entry at row b ^ x, with value i^p (-1)^{z.b}
        idx = _indices(self.n)
        m = np.zeros((1 << self.n, 1 << self.n), dtype=complex)
        m[idx ^ self.x_bits, idx] = _PHASES[self.phase_power] * self._signs(idx)
        return m

    def _signs(self, idx: np.ndarray) -> np.ndarray:
        par = np.bitwise_count(idx & self.z_bits).astype(np.int64) & 1
        return 1.0 - 2.0 * par

    def action_table(self) -> tuple[np.ndarray, np.ndarray]:
        """(perm, coeff) such that (P psi)[j] = coeff[j] * psi[perm[j]]."""
        return _action_table(self)

    def apply(self, state: np.ndarray) -> np.ndarray:
        """Apply to a state of shape (..., 2^n) without building a matrix."""
        perm, coeff = self.action_table()
        return state[..., perm] * coeff


@lru_cache(maxsize=512)
def _action_table(p: PauliOperator) -> tuple[np.ndarray, np.ndarray]:
    idx = _indices(p.n)
    perm = idx ^ p.x_bits
    coeff = _PHASES[p.phase_power] * p._signs(perm)
    coeff.setflags(write=False)
    perm.setflags(write=False)
    return perm, coeff
