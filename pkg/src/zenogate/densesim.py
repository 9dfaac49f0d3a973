"""Dense state-vector engine.

Pauli rotations and projector measurements are applied through Pauli
index/sign action, never by materializing 2^n x 2^n matrices.  All
functions accept a trailing state axis of length 2^n, so a batch of
Monte Carlo trajectories of shape (B, 2^n) goes through the same code
path as a single state vector.

Randomness comes from counter-based Philox streams keyed by
(master_seed, trajectory_index), so ensembles are reproducible and
independent of batching or worker count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codes import StabilizerCode, apply_code_projector, code_basis
from .pauli import PauliOperator

NORM_TOL = 1e-10
_DEGENERATE_TOL = 1e-14


def trajectory_rng(master_seed: int, index: int) -> np.random.Generator:
    """Philox stream for one trajectory; streams never overlap."""
    key = np.array([master_seed & 0xFFFFFFFFFFFFFFFF, index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass
class StateVector:
    """Dense n-qubit pure state; kept normalized to 1e-10."""

    n: int
    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.amplitudes.shape != (1 << self.n,):
            raise ValueError("amplitude length must be 2^n")

    @classmethod
    def basis_state(cls, n: int, index: int) -> "StateVector":
        amps = np.zeros(1 << n, dtype=complex)
        amps[index] = 1.0
        return cls(n, amps)

    @classmethod
    def from_logical(cls, code: StabilizerCode,
                     logical_amplitudes) -> "StateVector":
        """Embed a 2^k logical state through the code basis L(0)."""
        phi = np.asarray(logical_amplitudes, dtype=complex)
        if phi.shape != (1 << code.k,):
            raise ValueError("logical amplitude length must be 2^k")
        phi = phi / np.linalg.norm(phi)
        return cls(code.n, code_basis(code) @ phi)

    def copy(self) -> "StateVector":
        return StateVector(self.n, self.amplitudes.copy())

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def renormalize(self) -> "StateVector":
        self.amplitudes = self.amplitudes / np.linalg.norm(self.amplitudes)
        return self

    def expectation(self, p: PauliOperator) -> float:
        val = np.vdot(self.amplitudes, p.apply(self.amplitudes))
        return float(val.real)


def logical_zero(code: StabilizerCode) -> StateVector:
    amps = np.zeros(1 << code.k, dtype=complex)
    amps[0] = 1.0
    return StateVector.from_logical(code, amps)


# -- unitary actions on raw amplitude arrays ------------------------------

def rotate(state: np.ndarray, p: PauliOperator, angle: float) -> np.ndarray:
    """exp(i*angle*P) applied to (..., 2^n) amplitudes; P must square to +I."""
    if not p.is_hermitian():
        raise ValueError(f"rotation generator {p} is not Hermitian")
    if angle == 0.0:
        return state
    return np.cos(angle) * state + (1j * np.sin(angle)) * p.apply(state)


def path_rotation(state: np.ndarray, h: PauliOperator, x: PauliOperator,
                  theta: float, phi: float, inverse: bool = False) -> np.ndarray:
    """V(phi) = exp(i (theta phi / 2pi) H) exp(i phi X), or its inverse."""
    if inverse:
        out = rotate(state, h, -theta * phi / (2.0 * np.pi))
        return rotate(out, x, -phi)
    out = rotate(state, x, phi)
    return rotate(out, h, theta * phi / (2.0 * np.pi))


def pauli_rotation(p: PauliOperator, angle: float,
                   psi: StateVector) -> StateVector:
    """Apply exp(i*angle*P) in place and return psi."""
    psi.amplitudes = rotate(psi.amplitudes, p, angle)
    return psi


def apply_path_unitary(path, phi: float, psi: StateVector) -> StateVector:
    """Apply V(phi) of the holonomic path: exp(i phi X) then the H factor."""
    if path.h.n != psi.n:
        raise ValueError("path operators do not match the state size")
    psi.amplitudes = path_rotation(psi.amplitudes, path.h, path.x,
                                   path.theta, phi)
    return psi


# -- projectors ------------------------------------------------------------

class CodeSpaceProjector:
    """P0 = prod_j (I + g_j)/2 as a Pauli program."""

    def __init__(self, code: StabilizerCode):
        self.code = code

    def apply(self, state: np.ndarray) -> np.ndarray:
        return apply_code_projector(self.code, state)


class RotatedCodeProjector:
    """P(phi) = V(phi) P0 V(phi)^dag; optionally the X-error mirror of it."""

    def __init__(self, path, phi: float, error_space: bool = False):
        self.path = path
        self.phi = phi
        self.error_space = error_space

    def apply(self, state: np.ndarray) -> np.ndarray:
        p = self.path
        out = path_rotation(state, p.h, p.x, p.theta, self.phi, inverse=True)
        if self.error_space:
            out = p.x.apply(out)
        out = apply_code_projector(p.code, out)
        if self.error_space:
            out = p.x.apply(out)
        return path_rotation(out, p.h, p.x, p.theta, self.phi)


class CorrectionSpaceProjector:
    """W(phi) P_err(zeta) W(phi)^dag along a correction path.

    The inner V(zeta) V(zeta)^dag pair cancels, leaving a six-rotation
    program around the code projector conjugated by X.
    """

    def __init__(self, cpath, phi: float):
        self.cpath = cpath
        self.phi = phi

    def apply(self, state: np.ndarray) -> np.ndarray:
        base = self.cpath.base
        a = self.cpath.theta_tilde * self.phi / (2.0 * np.pi)
        total = self.phi + self.cpath.zeta
        out = rotate(state, base.h, a)
        out = path_rotation(out, base.h, base.x, base.theta, total,
                            inverse=True)
        out = base.x.apply(out)
        out = apply_code_projector(base.code, out)
        out = base.x.apply(out)
        out = path_rotation(out, base.h, base.x, base.theta, total)
        return rotate(out, base.h, -a)


class MatrixProjector:
    """Dense projector wrapper for oracle-style tests."""

    def __init__(self, matrix: np.ndarray):
        self.matrix = np.asarray(matrix, dtype=complex)

    def apply(self, state: np.ndarray) -> np.ndarray:
        return state @ self.matrix.T


def measure_projector(projector, psi: StateVector,
                      rng: np.random.Generator):
    """Born-rule projective measurement of a Hermitian idempotent P.

    Returns (outcome, post_state, prob) where outcome 1 collapses onto
    range(P) with probability <psi|P|psi> and outcome 0 onto its
    complement; prob is the probability of the sampled branch.
    """
    amps = psi.amplitudes
    v1 = projector.apply(amps)
    p1 = float(np.linalg.norm(v1) ** 2)
    v0 = amps - v1
    p0 = float(np.linalg.norm(v0) ** 2)
    if p1 < _DEGENERATE_TOL and p0 < _DEGENERATE_TOL:
        raise ValueError("projector annihilated both branches")
    if rng.random() < p1:
        post = StateVector(psi.n, v1 / np.sqrt(p1))
        return 1, post, p1
    post = StateVector(psi.n, v0 / np.sqrt(p0))
    return 0, post, p0


def fidelity(a: StateVector, b: StateVector) -> float:
    """|<a|b>|^2, invariant under global phases."""
    if a.n != b.n:
        raise ValueError("state sizes differ")
    return float(np.abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2)


def fidelity_amps(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Batched |<a|b>|^2 over the last axis."""
    ov = np.sum(np.conj(a) * b, axis=-1)
    return np.abs(ov) ** 2
