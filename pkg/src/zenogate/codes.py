"""Stabilizer code definitions, syndromes, projectors and code bases.

Ships the three worked [[n,1,3]] codes (bit-flip, Steane, five-qubit
perfect) plus the [[9,1,3]] Shor code, and loads/saves code definitions
as JSON: ``{n, k, d, generators, logical_x, logical_z}`` with Pauli
strings as values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .pauli import DENSE_QUBIT_LIMIT, DenseLimitError, PauliOperator


def _symplectic_rank(paulis: list[PauliOperator]) -> int:
    """Rank over GF(2) of the stacked (x|z) rows."""
    n = paulis[0].n
    rows = [(p.x_bits << n) | p.z_bits for p in paulis]
    rank = 0
    for col in range(2 * n - 1, -1, -1):
        pivot = next((i for i in range(rank, len(rows))
                      if (rows[i] >> col) & 1), None)
        if pivot is None:
            continue
        rows[rank], rows[pivot] = rows[pivot], rows[rank]
        for i in range(len(rows)):
            if i != rank and (rows[i] >> col) & 1:
                rows[i] ^= rows[rank]
        rank += 1
    return rank


@dataclass(frozen=True)
class StabilizerCode:
    """An [[n, k, d]] stabilizer code with explicit logical operators.

    ``generators`` are the n-k stabilizer generators; ``logical_x`` and
    ``logical_z`` hold one anticommuting pair per logical qubit.  All
    stored operators are Hermitian with a +1 leading sign.
    """

    n: int
    k: int
    d: int
    generators: tuple[PauliOperator, ...]
    logical_x: tuple[PauliOperator, ...] = field(default=())
    logical_z: tuple[PauliOperator, ...] = field(default=())

    def __post_init__(self):
        gens = tuple(self.generators)
        object.__setattr__(self, "generators", gens)
        object.__setattr__(self, "logical_x", tuple(self.logical_x))
        object.__setattr__(self, "logical_z", tuple(self.logical_z))
        if len(gens) != self.n - self.k:
            raise ValueError(f"expected {self.n - self.k} generators, "
                             f"got {len(gens)}")
        for p in gens + self.logical_x + self.logical_z:
            if p.n != self.n:
                raise ValueError("operator qubit count mismatch")
            if not p.is_hermitian():
                raise ValueError(f"non-Hermitian operator {p}")
        for i, a in enumerate(gens):
            for b in gens[i + 1:]:
                if not a.commutes(b):
                    raise ValueError(f"generators {a} and {b} anticommute")
        if gens and _symplectic_rank(list(gens)) != len(gens):
            raise ValueError("generators are not independent")
        for log in self.logical_x + self.logical_z:
            for g in gens:
                if not log.commutes(g):
                    raise ValueError(f"logical {log} anticommutes with {g}")
        for i, lx in enumerate(self.logical_x):
            for j, lz in enumerate(self.logical_z):
                want_anti = i == j
                if lx.anticommutes(lz) != want_anti:
                    raise ValueError("logical X/Z pairing broken at "
                                     f"({i}, {j})")

    @property
    def dim(self) -> int:
        return 1 << self.n

    def identity(self) -> PauliOperator:
        return PauliOperator.identity(self.n)

    def pauli(self, s: str) -> PauliOperator:
        """Parse a Pauli string sized for this code."""
        p = PauliOperator.from_string(s)
        if p.n != self.n:
            raise ValueError(f"{s!r} has {p.n} qubits, code has {self.n}")
        return p


def syndrome(code: StabilizerCode, p: PauliOperator) -> tuple[int, ...]:
    """Bit i is 1 iff p anticommutes with generator g_i."""
    if p.n != code.n:
        raise ValueError("operator size does not match the code")
    return tuple(int(p.anticommutes(g)) for g in code.generators)


def apply_code_projector(code: StabilizerCode, state: np.ndarray) -> np.ndarray:
    """Apply prod_j (I + g_j)/2 to states of shape (..., 2^n), unnormalized."""
    out = state
    for g in code.generators:
        out = 0.5 * (out + g.apply(out))
    return out


def code_projector(code: StabilizerCode,
                   limit: int = DENSE_QUBIT_LIMIT) -> np.ndarray:
    """Dense projector onto the code space; Hermitian, rank 2^k."""
    if code.n > limit:
        raise DenseLimitError(f"n={code.n} exceeds dense limit {limit}")
    proj = np.eye(code.dim, dtype=complex)
    for g in code.generators:
        proj = 0.5 * (proj + g.apply(proj.T).T)
    return proj


def code_basis(code: StabilizerCode,
               limit: int = DENSE_QUBIT_LIMIT) -> np.ndarray:
    """Orthonormal code basis L(0) as a dense 2^n x 2^k matrix.

    Columns are simultaneous +1 eigenvectors of the generators, ordered
    by the logical-Z eigenvalue pattern (column index b has Zbar_j
    eigenvalue (-1)^{b_j}), i.e. computational order of the logicals.
    Each column's phase is fixed so its first nonzero amplitude is real
    positive.
    """
    if code.n > limit:
        raise DenseLimitError(f"n={code.n} exceeds dense limit {limit}")
    if len(code.logical_z) != code.k:
        raise ValueError("code basis needs one logical Z per logical qubit")
    cols = []
    for b in range(1 << code.k):
        cols.append(_logical_basis_state(code, b))
    return np.stack(cols, axis=1)


def _logical_basis_state(code: StabilizerCode, b: int) -> np.ndarray:
    def project(vec: np.ndarray) -> np.ndarray:
        out = apply_code_projector(code, vec)
        for j, lz in enumerate(code.logical_z):
            sign = -1.0 if (b >> (code.k - 1 - j)) & 1 else 1.0
            out = 0.5 * (out + sign * lz.apply(out))
        return out

    for i in range(code.dim):
        vec = np.zeros(code.dim, dtype=complex)
        vec[i] = 1.0
        vec = project(vec)
        norm = np.linalg.norm(vec)
        if norm > 1e-6:
            vec /= norm
            first = vec[np.flatnonzero(np.abs(vec) > 1e-12)[0]]
            return vec * (np.abs(first) / first)
    raise ValueError(f"no basis state found for logical pattern {b:b}")


_BUILTIN_CODES = {
    "bitflip3": {
        "n": 3, "k": 1, "d": 3,
        "generators": ["ZZI", "IZZ"],
        "logical_x": ["XXX"],
        "logical_z": ["ZZZ"],
    },
    "shor9": {
        "n": 9, "k": 1, "d": 3,
        "generators": ["ZZIIIIIII", "IZZIIIIII",
                       "IIIZZIIII", "IIIIZZIII",
                       "IIIIIIZZI", "IIIIIIIZZ",
                       "XXXXXXIII", "IIIXXXXXX"],
        "logical_x": ["ZIIZIIZII"],
        "logical_z": ["XXXIIIIII"],
    },
    "steane7": {
        "n": 7, "k": 1, "d": 3,
        "generators": ["IIIXXXX", "IXXIIXX", "XIXIXIX",
                       "IIIZZZZ", "IZZIIZZ", "ZIZIZIZ"],
        "logical_x": ["XXXXXXX"],
        "logical_z": ["ZZZZZZZ"],
    },
    "perfect5": {
        "n": 5, "k": 1, "d": 3,
        "generators": ["XZZXI", "IXZZX", "XIXZZ", "ZXIXZ"],
        "logical_x": ["XXXXX"],
        "logical_z": ["ZZZZZ"],
    },
}

BUILTIN_CODE_NAMES = tuple(_BUILTIN_CODES)


def builtin_code(name: str) -> StabilizerCode:
    """One of bitflip3, shor9, steane7, perfect5."""
    try:
        raw = _BUILTIN_CODES[name]
    except KeyError:
        raise ValueError(f"unknown code {name!r}; "
                         f"choose from {BUILTIN_CODE_NAMES}") from None
    return code_from_dict(raw)


def code_from_dict(raw: dict) -> StabilizerCode:
    def parse(strings):
        return tuple(PauliOperator.from_string(s).hermitian_canonical()
                     for s in strings)

    return StabilizerCode(
        n=int(raw["n"]), k=int(raw["k"]), d=int(raw["d"]),
        generators=parse(raw["generators"]),
        logical_x=parse(raw.get("logical_x", [])),
        logical_z=parse(raw.get("logical_z", [])),
    )


def code_to_dict(code: StabilizerCode) -> dict:
    return {
        "n": code.n, "k": code.k, "d": code.d,
        "generators": [g.to_string() for g in code.generators],
        "logical_x": [p.to_string() for p in code.logical_x],
        "logical_z": [p.to_string() for p in code.logical_z],
    }


def load_code(path) -> StabilizerCode:
    with open(path, encoding="utf-8") as fh:
        return code_from_dict(json.load(fh))


def save_code(code: StabilizerCode, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(code_to_dict(code), fh, indent=2, sort_keys=True)
        fh.write("\n")
