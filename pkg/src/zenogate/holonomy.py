"""Closed-form machinery for measurement-driven holonomic paths.

The rotation family is V(phi) = exp(i theta phi/2pi H) exp(i phi X) with
H a logical Pauli and X a Pauli that anticommutes with H and with at
least one stabilizer generator.  This module provides:

* the exact small-rotation overlap P0 V(phi)^dag V(phi-dphi) P0
  = c exp(-i xi H) P0,
* the no-jump probability for a discrete loop,
* the instantaneous code state and the jump error operator,
* the jump-correcting path (W, 7pi/2 - zeta) / (W, 4pi - zeta) with the
  modified rotation angle that restores the intended logical gate.

Angles are radians throughout; theta is taken in (-pi, pi] so that the
arctan-based phases stay on the principal branch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .codes import StabilizerCode
from .densesim import StateVector, path_rotation, rotate
from .pauli import PauliOperator

CODE_SPACE = "code-space"
ERROR_SPACE = "error-space"

_CODE_SPACE_TOL = 1e-8


@dataclass(frozen=True)
class HolonomicPath:
    """The data (H, X, theta) of a rotation family V(phi) over a code.

    Validates the structural conditions at construction: X anticommutes
    with H and with at least one generator, H commutes with the whole
    stabilizer group, and both operators are Hermitian (so the 2pi
    periodicity exp(2pi i X) = I holds automatically).
    """

    code: StabilizerCode
    h: PauliOperator
    x: PauliOperator
    theta: float

    def __post_init__(self):
        if self.h.n != self.code.n or self.x.n != self.code.n:
            raise ValueError("operator size does not match the code")
        if not (self.h.is_hermitian() and self.x.is_hermitian()):
            raise ValueError("H and X must be Hermitian Paulis")
        if not self.x.anticommutes(self.h):
            raise ValueError("X must anticommute with H")
        if not any(self.x.anticommutes(g) for g in self.code.generators):
            raise ValueError("X must anticommute with some generator")
        for g in self.code.generators:
            if not self.h.commutes(g):
                raise ValueError("H must commute with every generator "
                                 "(be a logical operator)")
        if not -math.pi < self.theta <= math.pi:
            raise ValueError("theta must lie in (-pi, pi]")

    def anticommuting_generators(self) -> tuple[int, ...]:
        return tuple(i for i, g in enumerate(self.code.generators)
                     if self.x.anticommutes(g))


@dataclass(frozen=True)
class CorrectionPath:
    """Path W(phi) = exp(-i theta~ phi/2pi H) V(phi+zeta) V(zeta)^dag.

    Running from phi = 0 to ``final_angle`` returns a state that jumped
    at ``zeta`` to the code space (target "code-space", final angle
    7pi/2 - zeta) or to the X-error space (target "error-space", final
    angle 4pi - zeta), both with the intended logical rotation.
    """

    base: HolonomicPath
    zeta: float
    theta_tilde: float
    target: Literal["code-space", "error-space"]
    final_angle: float = field(init=False)

    def __post_init__(self):
        if self.target not in (CODE_SPACE, ERROR_SPACE):
            raise ValueError(f"unknown target {self.target!r}")
        angle = ((3.5 * math.pi if self.target == CODE_SPACE else 4.0 * math.pi)
                 - self.zeta)
        object.__setattr__(self, "final_angle", angle)

    def apply(self, state: np.ndarray, phi: float,
              inverse: bool = False) -> np.ndarray:
        """Apply W(phi) (or its inverse) to (..., 2^n) amplitudes."""
        p = self.base
        a = self.theta_tilde * phi / (2.0 * math.pi)
        if inverse:
            out = rotate(state, p.h, a)
            out = path_rotation(out, p.h, p.x, p.theta, phi + self.zeta,
                                inverse=True)
            return path_rotation(out, p.h, p.x, p.theta, self.zeta)
        out = path_rotation(state, p.h, p.x, p.theta, self.zeta, inverse=True)
        out = path_rotation(out, p.h, p.x, p.theta, phi + self.zeta)
        return rotate(out, p.h, -a)


def small_rotation_overlap(path: HolonomicPath, phi: float,
                           dphi: float) -> tuple[float, float]:
    """Exact (c, xi) with P0 V(phi)^dag V(phi-dphi) P0 = c exp(-i xi H) P0.

    c = sqrt(cos^2(theta dphi/2pi) cos^2(dphi)
             + sin^2(theta dphi/2pi) cos^2(2phi - dphi))
    xi = arctan of the matching ratio (principal branch).
    """
    a = path.theta * dphi / (2.0 * math.pi)
    cos_part = math.cos(a) * math.cos(dphi)
    sin_part = math.sin(a) * math.cos(2.0 * phi - dphi)
    c = math.hypot(cos_part, sin_part)
    xi = math.atan2(sin_part, cos_part)
    return c, xi


def discrete_no_jump_probability(theta: float, dphi: float) -> float:
    """exp[-(dphi/2pi)(theta^2/2 + 4 pi^2)], the full-loop no-jump odds."""
    if dphi <= 0:
        raise ValueError("dphi must be positive")
    return math.exp(-(dphi / (2.0 * math.pi))
                    * (theta**2 / 2.0 + 4.0 * math.pi**2))


def loop_phase_sum(theta: float, dphi: float,
                   upto: float = 2.0 * math.pi) -> float:
    """Sum of the per-step phases xi over the measurement grid.

    Over a full loop the sum vanishes, which is why the no-jump chain
    of projections reproduces exp(i theta H) exactly.
    """
    steps = math.ceil(upto / dphi - 1e-12)
    a = theta * dphi / (2.0 * math.pi)
    num = math.sin(a)
    den = math.cos(a) * math.cos(dphi)
    total = 0.0
    for l in range(1, steps + 1):
        total += math.atan2(num * math.cos(2.0 * l * dphi - dphi), den)
    return total


def instantaneous_code_state(path: HolonomicPath, phi: float,
                             psi_bar: StateVector) -> StateVector:
    """V(phi) exp(-i (theta/4pi) sin(2phi) H) applied to a code state."""
    amps = psi_bar.amplitudes
    from .codes import apply_code_projector
    inside = np.linalg.norm(apply_code_projector(path.code, amps)) ** 2
    if inside < 1.0 - _CODE_SPACE_TOL:
        raise ValueError("input state is not in the code space "
                         f"(projector expectation {inside:.6f})")
    out = rotate(amps, path.h, -path.theta * math.sin(2.0 * phi)
                 / (4.0 * math.pi))
    out = path_rotation(out, path.h, path.x, path.theta, phi)
    return StateVector(psi_bar.n, out)


@dataclass(frozen=True)
class ErrorOperator:
    """E(zeta) = V(zeta) exp(i chi H) X V(zeta)^dag and its angles."""

    path: HolonomicPath
    zeta: float
    chi: float
    theta_err: float

    def apply(self, state: np.ndarray) -> np.ndarray:
        p = self.path
        out = path_rotation(state, p.h, p.x, p.theta, self.zeta, inverse=True)
        out = p.x.apply(out)
        out = rotate(out, p.h, self.chi)
        return path_rotation(out, p.h, p.x, p.theta, self.zeta)


def error_operator(path: HolonomicPath, zeta: float) -> ErrorOperator:
    """Jump error at angle zeta: unitary program plus (chi, theta_err).

    chi = arctan((theta/2pi) sin 2 zeta) and theta_err =
    (theta/4pi) sin 2 zeta + chi; applying E(zeta) to the instantaneous
    code state at zeta gives V(zeta) exp(i theta_err H) X |psi_bar>.
    """
    if not 0.0 <= zeta <= 2.0 * math.pi:
        raise ValueError("zeta must lie in [0, 2pi]")
    s = math.sin(2.0 * zeta)
    chi = math.atan(path.theta * s / (2.0 * math.pi))
    theta_err = path.theta * s / (4.0 * math.pi) + chi
    return ErrorOperator(path, zeta, chi, theta_err)


def correction_path(path: HolonomicPath, zeta: float,
                    target: str = CODE_SPACE) -> CorrectionPath:
    """Jump-correcting path after a jump at zeta.

    The modified angle theta~ is chosen so that transporting the jumped
    state along W up to the final angle lands on exp(i theta H)|psi_bar>
    (code space) or X exp(i theta H)|psi_bar> (error space).
    """
    if not 0.0 <= zeta <= 2.0 * math.pi:
        raise ValueError("zeta must lie in [0, 2pi]")
    theta = path.theta
    terr = error_operator(path, zeta).theta_err
    s = math.sin(2.0 * zeta)
    pi = math.pi
    if target == CODE_SPACE:
        theta_tilde = ((3.0 * pi * theta - 4.0 * pi * terr - theta * s)
                       / (7.0 * pi - 2.0 * zeta - s))
    elif target == ERROR_SPACE:
        theta_tilde = ((12.0 * pi * theta + 4.0 * pi * terr + theta * s)
                       / (8.0 * pi - 2.0 * zeta + s))
    else:
        raise ValueError(f"unknown target {target!r}")
    return CorrectionPath(base=path, zeta=zeta, theta_tilde=theta_tilde,
                          target=target)


# -- dense oracle helpers ---------------------------------------------------

def dense_path_unitary(path: HolonomicPath, phi: float) -> np.ndarray:
    """Dense V(phi); exponentials of Paulis are exact cos/sin splits."""
    dim = 1 << path.code.n
    eye = np.eye(dim, dtype=complex)
    vx = (math.cos(phi) * eye
          + 1j * math.sin(phi) * path.x.to_dense())
    a = path.theta * phi / (2.0 * math.pi)
    vh = math.cos(a) * eye + 1j * math.sin(a) * path.h.to_dense()
    return vh @ vx


def dense_correction_unitary(cpath: CorrectionPath, phi: float) -> np.ndarray:
    base = cpath.base
    dim = 1 << base.code.n
    eye = np.eye(dim, dtype=complex)
    a = cpath.theta_tilde * phi / (2.0 * math.pi)
    wh = math.cos(a) * eye - 1j * math.sin(a) * base.h.to_dense()
    v1 = dense_path_unitary(base, phi + cpath.zeta)
    v0 = dense_path_unitary(base, cpath.zeta)
    return wh @ v1 @ v0.conj().T
