"""Error-correcting conditions for rotated stabilizer codes.

Checks that every code along the rotation loop still corrects a chosen
error set: the Knill-Laflamme condition evaluated densely through the
code basis, the commute/anticommute classification of conjugated
errors, the sufficient conditions on the rotation operator X, a search
for valid X, and the ancilla-augmentation construction for codes whose
syndromes are too crowded to admit any X.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .codes import StabilizerCode, code_basis, syndrome
from .densesim import path_rotation
from .pauli import PauliOperator

KL_RESIDUAL_TOL = 1e-10
ROTATED_KL_TOL = 1e-9


# -- generator presentation -------------------------------------------------

def transform_generators(code: StabilizerCode,
                         x: PauliOperator) -> tuple[PauliOperator, ...]:
    """Equivalent generator set with exactly one generator anticommuting X.

    If generators g_1..g_l anticommute with x (after reordering), the
    returned set is {g_1, g_1 g_2, ..., g_1 g_l, g_{l+1}, ...}: products
    of two anticommuting generators commute with x, so only g_1 rotates
    under the path unitary.
    """
    anti = [g for g in code.generators if g.anticommutes(x)]
    if not anti:
        raise ValueError("x commutes with every generator")
    rest = [g for g in code.generators if g.commutes(x)]
    first = anti[0]
    out = [first] + [first * g for g in anti[1:]] + rest
    return tuple(out)


# -- correctable sets -------------------------------------------------------

@dataclass(frozen=True)
class CorrectableSet:
    """A set of correctable Pauli errors, always containing the identity."""

    errors: tuple[PauliOperator, ...]
    max_weight: int

    def __post_init__(self):
        object.__setattr__(self, "errors", tuple(self.errors))
        if not any(e.x_bits == 0 and e.z_bits == 0 for e in self.errors):
            raise ValueError("correctable set must contain the identity")

    @classmethod
    def weight_one(cls, n: int) -> "CorrectableSet":
        """{I} plus every single-qubit X, Y, Z error."""
        errs = [PauliOperator.identity(n)]
        for q in range(1, n + 1):
            for kind in "XYZ":
                errs.append(PauliOperator.single(n, q, kind))
        return cls(tuple(errs), max_weight=1)

    def pair_products(self) -> tuple[PauliOperator, ...]:
        """Distinct products E_b^dag E_a, deduplicated by symplectic content."""
        seen = {}
        for eb, ea in itertools.product(self.errors, repeat=2):
            d = eb.dagger() * ea
            seen.setdefault(d.symplectic_key(), d.hermitian_canonical())
        return tuple(seen.values())


# -- GF(2) span of the stabilizer group -------------------------------------

class _Gf2Span:
    def __init__(self, code: StabilizerCode):
        self.n = code.n
        rows = [(g.x_bits << code.n) | g.z_bits for g in code.generators]
        basis: list[int] = []
        for r in rows:
            r = self._reduce(basis, r)
            if r:
                basis.append(r)
                basis.sort(reverse=True)
        self.basis = basis

    @staticmethod
    def _reduce(basis: list[int], v: int) -> int:
        for b in basis:
            if v & (1 << (b.bit_length() - 1)):
                v ^= b
        return v

    def contains(self, p: PauliOperator) -> bool:
        v = (p.x_bits << self.n) | p.z_bits
        return self._reduce(self.basis, v) == 0


def is_stabilizer_element(code: StabilizerCode, p: PauliOperator) -> bool:
    """Membership in the stabilizer group up to phase."""
    return _Gf2Span(code).contains(p)


# -- Knill-Laflamme ---------------------------------------------------------

@dataclass
class KLCheckResult:
    passed: bool
    gamma: np.ndarray | None
    violation: tuple[PauliOperator, PauliOperator, float] | None = None

    def __bool__(self) -> bool:
        return self.passed


def _reduced_block(basis: np.ndarray, p: PauliOperator) -> np.ndarray:
    """L^dag P L: the 2^k x 2^k block of P on the code space."""
    return basis.conj().T @ p.apply(basis.T).T


def kl_check(code: StabilizerCode, errors: CorrectableSet,
             tol: float = KL_RESIDUAL_TOL) -> KLCheckResult:
    """Dense Knill-Laflamme check: P0 Eb^dag Ea P0 = gamma_ab P0.

    Works through the code basis L, for which the Frobenius residual of
    P0 Eb^dag Ea P0 - gamma P0 equals that of L^dag Eb^dag Ea L -
    gamma I.  Returns the Hermitian gamma matrix, or the first
    violating pair.
    """
    basis = code_basis(code)
    dim_l = 1 << code.k
    m = len(errors.errors)
    gamma = np.zeros((m, m), dtype=complex)
    for b, eb in enumerate(errors.errors):
        for a, ea in enumerate(errors.errors):
            block = _reduced_block(basis, eb.dagger() * ea)
            g = np.trace(block) / dim_l
            resid = float(np.linalg.norm(block - g * np.eye(dim_l)))
            if resid > tol:
                return KLCheckResult(False, None, (eb, ea, resid))
            gamma[b, a] = g
    if np.abs(gamma - gamma.conj().T).max() > tol:
        return KLCheckResult(False, None, None)
    return KLCheckResult(True, gamma)


def rotated_kl_residual(code: StabilizerCode, h: PauliOperator,
                        x: PauliOperator, theta: float,
                        errors: CorrectableSet,
                        angles=None) -> float:
    """Worst proportionality residual of P(t) Eb^dag Ea P(t) = gamma P(t).

    The rotated basis L(t) = V(t) L(0) reduces each check to a least
    squares proportionality fit of a 2^k block against the identity.
    """
    if angles is None:
        angles = [2.0 * math.pi * j / 7.0 for j in range(8)]
    basis = code_basis(code)
    dim_l = 1 << code.k
    eye = np.eye(dim_l)
    worst = 0.0
    for phi in angles:
        rotated = path_rotation(basis.T, h, x, theta, phi).T
        for eb, ea in itertools.product(errors.errors, repeat=2):
            block = _reduced_block(rotated, eb.dagger() * ea)
            g = np.trace(block) / dim_l
            worst = max(worst, float(np.linalg.norm(block - g * eye)))
    return worst


# -- Table I classification -------------------------------------------------

def classify_table1(d: PauliOperator, h: PauliOperator,
                    x: PauliOperator) -> tuple[int, tuple[PauliOperator, ...]]:
    """Which of {D, HD, XD, HXD} the conjugated error V^dag D V spans.

    Case 1: [H,D]=[X,D]=0 -> {D};         case 2: [H,D]=0,{X,D}=0 ->
    {D, XD, HXD}; case 3: {H,D}=0,[X,D]=0 -> {D, HD, HXD}; case 4:
    both anticommute -> {D, HD, XD}.
    """
    hc = h.commutes(d)
    xc = x.commutes(d)
    hd = (h * d).hermitian_canonical()
    xd = (x * d).hermitian_canonical()
    hxd = (h * x * d).hermitian_canonical()
    if hc and xc:
        return 1, (d,)
    if hc and not xc:
        return 2, (d, xd, hxd)
    if not hc and xc:
        return 3, (d, hd, hxd)
    return 4, (d, hd, xd)


# -- Theorem 4 sufficient conditions ----------------------------------------

CLAUSE_WEIGHT = "weight"
CLAUSE_STABILIZER = "stabilizer-must-anticommute-with-X"
CLAUSE_LOGICAL_X = "logical-must-commute-with-X"
CLAUSE_LOGICAL_H = "logical-must-anticommute-with-H"


@dataclass
class ConditionReport:
    """Outcome of the rotated-code correctability conditions."""

    passed: bool
    violations: list[tuple[PauliOperator, int, str]] = field(
        default_factory=list)

    def __bool__(self) -> bool:
        return self.passed


class _Theorem4Context:
    """Precomputed pair products grouped by syndrome, for repeated checks."""

    def __init__(self, code: StabilizerCode, h: PauliOperator,
                 errors: CorrectableSet):
        self.code = code
        self.h = h
        self.span = _Gf2Span(code)
        self.by_syndrome: dict[tuple[int, ...], list[PauliOperator]] = {}
        for d in errors.pair_products():
            self.by_syndrome.setdefault(syndrome(code, d), []).append(d)

    def check(self, x: PauliOperator) -> ConditionReport:
        violations: list[tuple[PauliOperator, int, str]] = []
        if x.weight() <= self.code.d - 1:
            violations.append((x, 3, CLAUSE_WEIGHT))
        for d in self.by_syndrome.get(syndrome(self.code, x), []):
            if d.symplectic_key() == x.symplectic_key():
                # the X = D scenario of the weight clause
                if (x, 3, CLAUSE_WEIGHT) not in violations:
                    violations.append((x, 3, CLAUSE_WEIGHT))
                continue
            case, _ = classify_table1(d, self.h, x)
            xd = (x * d).hermitian_canonical()
            if self.span.contains(xd):
                if not x.anticommutes(xd):
                    violations.append((d, case, CLAUSE_STABILIZER))
            else:
                if not x.commutes(xd):
                    violations.append((d, case, CLAUSE_LOGICAL_X))
                if not self.h.anticommutes(xd):
                    violations.append((d, case, CLAUSE_LOGICAL_H))
        return ConditionReport(passed=not violations, violations=violations)


def theorem4_check(code: StabilizerCode, h: PauliOperator, x: PauliOperator,
                   errors: CorrectableSet) -> ConditionReport:
    """Sufficient conditions for all rotated codes to correct ``errors``.

    Hamming weight of X must exceed d-1; stabilizer-group elements close
    to X (those reachable as X*D with D a pair product) must anticommute
    with X; logical elements close to X must commute with X and
    anticommute with H.  Enumerates D in E^(2) with syndrome(XD) = 0, as
    in the theorem's proof.
    """
    return _Theorem4Context(code, h, errors).check(x)


# -- Proposition 7 ----------------------------------------------------------

@dataclass
class Prop7Entry:
    d: PauliOperator
    status: str
    residual: float


@dataclass
class Prop7Report:
    passed: bool
    entries: list[Prop7Entry]

    def __bool__(self) -> bool:
        return self.passed


def prop7_check(code: StabilizerCode, h: PauliOperator,
                errors: CorrectableSet,
                x: PauliOperator | None = None,
                tol: float = KL_RESIDUAL_TOL) -> Prop7Report:
    """Verify densely that HD terms are harmless for every D in E^(2).

    For D with nonzero syndrome, P0 H D P0 must vanish.  D equal to the
    identity or a stabilizer element is excluded by the proposition's
    proof scope (those cases never produce an HD term); when ``x`` is
    given, the stabilizer case additionally verifies P0 X D P0 =
    P0 H X D P0 = 0.
    """
    basis = code_basis(code)
    span = _Gf2Span(code)
    entries = []
    passed = True
    for d in CorrectableSet(tuple(errors.errors),
                            errors.max_weight).pair_products():
        if d.x_bits == 0 and d.z_bits == 0:
            entries.append(Prop7Entry(d, "identity-excluded", 0.0))
            continue
        if any(syndrome(code, d)):
            resid = float(np.linalg.norm(_reduced_block(basis, h * d)))
            ok = resid <= tol
            entries.append(Prop7Entry(d, "vanishes" if ok else "violation",
                                      resid))
            passed &= ok
        elif span.contains(d):
            resid = 0.0
            if x is not None:
                resid = max(
                    float(np.linalg.norm(_reduced_block(basis, x * d))),
                    float(np.linalg.norm(_reduced_block(basis, h * x * d))))
                passed &= resid <= tol
            entries.append(Prop7Entry(d, "stabilizer-excluded", resid))
        else:
            entries.append(Prop7Entry(d, "logical-violation", math.inf))
            passed = False
    return Prop7Report(passed, entries)


# -- search for valid X -----------------------------------------------------

def search_X(code: StabilizerCode, h: PauliOperator, errors: CorrectableSet,
             max_weight: int | None = None,
             candidate_cap: int = 10**6) -> list[PauliOperator]:
    """All Hermitian Paulis X satisfying the path and Theorem-4 conditions.

    Candidates are enumerated by increasing weight starting at d (the
    weight clause rules out anything lighter), in deterministic support/
    letter order, up to ``candidate_cap`` enumerated operators.  An
    empty list means no valid X exists within the searched range.
    """
    ctx = _Theorem4Context(code, h, errors)
    top = code.n if max_weight is None else min(max_weight, code.n)
    found = []
    enumerated = 0
    for w in range(code.d, top + 1):
        for support in itertools.combinations(range(1, code.n + 1), w):
            for letters in itertools.product("XYZ", repeat=w):
                if enumerated >= candidate_cap:
                    return found
                enumerated += 1
                x = 0
                z = 0
                for q, c in zip(support, letters):
                    bit = 1 << (code.n - q)
                    if c in "XY":
                        x |= bit
                    if c in "ZY":
                        z |= bit
                cand = PauliOperator(code.n, x, z).hermitian_canonical()
                if not cand.anticommutes(h):
                    continue
                if not any(cand.anticommutes(g) for g in code.generators):
                    continue
                if ctx.check(cand).passed:
                    found.append(cand)
    return found


# -- ancilla augmentation ---------------------------------------------------

@dataclass
class AncillaReport:
    s: int
    distinct_error_syndromes: int
    distinct_pair_syndromes: int
    total_syndromes: int


def ancilla_requirement(code: StabilizerCode,
                        errors: CorrectableSet) -> AncillaReport:
    """How many ancilla qubits the protocol needs for this code and set.

    0 if the pair products leave a free syndrome for X, 1 if only the
    single errors do, else 2.
    """
    d_e = len({syndrome(code, e) for e in errors.errors})
    d_e2 = len({syndrome(code, d) for d in errors.pair_products()})
    total = 1 << (code.n - code.k)
    if d_e2 < total:
        s = 0
    elif d_e < total:
        s = 1
    else:
        s = 2
    return AncillaReport(s, d_e, d_e2, total)


def _pad(p: PauliOperator, tail: str) -> PauliOperator:
    return PauliOperator.from_string(p.to_string() + tail)


def augment_code(code: StabilizerCode, s: int, h: PauliOperator,
                 x: PauliOperator):
    """Append s ancilla qubits pinned to |0> and extend the path operators.

    Each ancilla contributes a Z stabilizer; H is extended by identity
    and X by sigma_x on every ancilla.  Returns (augmented code, H_bar,
    X_bar); the correctable set for the augmented code is weight-one on
    all n+s qubits (no spatially correlated ancilla errors).
    """
    if s not in (1, 2):
        raise ValueError("s must be 1 or 2")
    n2 = code.n + s
    gens = [_pad(g, "I" * s) for g in code.generators]
    for a in range(s):
        gens.append(PauliOperator.single(n2, code.n + 1 + a, "Z"))
    aug = StabilizerCode(
        n=n2, k=code.k, d=code.d,
        generators=tuple(gens),
        logical_x=tuple(_pad(p, "I" * s) for p in code.logical_x),
        logical_z=tuple(_pad(p, "I" * s) for p in code.logical_z),
    )
    return aug, _pad(h, "I" * s), _pad(x, "X" * s)
