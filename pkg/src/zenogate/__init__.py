"""Measurement-based holonomic gates on stabilizer codes.

Logical rotations exp(i theta H) are produced purely by measuring
rotated stabilizers, either as a discrete chain of projective
measurements or as continuous weak measurements, with jump-correcting
path modulation and checks that the rotated codes keep correcting a
chosen error set.
"""

from .codes import (
    BUILTIN_CODE_NAMES,
    StabilizerCode,
    builtin_code,
    code_basis,
    code_projector,
    load_code,
    save_code,
    syndrome,
)
from .densesim import (
    StateVector,
    apply_path_unitary,
    fidelity,
    logical_zero,
    measure_projector,
    pauli_rotation,
    trajectory_rng,
)
from .holonomy import (
    CODE_SPACE,
    ERROR_SPACE,
    CorrectionPath,
    HolonomicPath,
    correction_path,
    discrete_no_jump_probability,
    error_operator,
    instantaneous_code_state,
    loop_phase_sum,
    small_rotation_overlap,
)
from .pauli import DenseLimitError, PauliOperator

__all__ = [
    "BUILTIN_CODE_NAMES",
    "CODE_SPACE",
    "CorrectionPath",
    "DenseLimitError",
    "ERROR_SPACE",
    "HolonomicPath",
    "PauliOperator",
    "StabilizerCode",
    "StateVector",
    "apply_path_unitary",
    "builtin_code",
    "code_basis",
    "code_projector",
    "correction_path",
    "discrete_no_jump_probability",
    "error_operator",
    "fidelity",
    "instantaneous_code_state",
    "load_code",
    "logical_zero",
    "loop_phase_sum",
    "measure_projector",
    "pauli_rotation",
    "save_code",
    "small_rotation_overlap",
    "syndrome",
    "trajectory_rng",
]

__version__ = "0.1.0"
