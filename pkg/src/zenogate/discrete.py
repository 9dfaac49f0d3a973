"""Discrete-path protocol: rotated-projector measurement trajectories.

One trajectory walks phi from dphi to 2pi, measuring the rotated code
projector P(phi) = V(phi) P0 V(phi)^dag at each step.  Outcome 0 is a
jump into the rotated error space; depending on the correction policy
the trajectory either keeps measuring the same family or switches to
the jump-correcting path of the holonomy module and runs it to its
final angle.  The Monte Carlo harness batches trajectories into
vectorized ensembles while preserving one Philox stream per trajectory,
so results are independent of batch size and worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .codes import StabilizerCode, apply_code_projector
from .densesim import (StateVector, fidelity_amps, path_rotation, rotate,
                       trajectory_rng)
from .holonomy import (CODE_SPACE, ERROR_SPACE, CorrectionPath, HolonomicPath,
                       correction_path)
from .pauli import PauliOperator
from .qecc import transform_generators

POLICY_NONE = "none"
POLICY_CORRECT_CODE = "correct-to-code"
POLICY_CORRECT_ERROR = "correct-to-error"
POLICIES = (POLICY_NONE, POLICY_CORRECT_CODE, POLICY_CORRECT_ERROR)

_TINY = 1e-300
_DEGENERATE_TOL = 1e-14


@dataclass(frozen=True)
class DiscreteRunConfig:
    """Parameters of one discrete-protocol ensemble."""

    code: StabilizerCode
    h: PauliOperator
    x: PauliOperator
    theta: float
    dphi: float
    policy: str = POLICY_NONE
    trajectories: int = 2000
    master_seed: int = 0
    success_threshold: float = 0.99
    initial_logical: tuple = ()
    force_jump_at: float | None = None
    single_generator_mode: bool = False
    batch_size: int = 8192

    def __post_init__(self):
        if not 0.0 < self.dphi < math.pi / 4.0:
            raise ValueError("dphi must lie in (0, pi/4)")
        if self.trajectories < 1:
            raise ValueError("need at least one trajectory")
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}")
        object.__setattr__(self, "initial_logical",
                           tuple(self.initial_logical))

    def path(self) -> HolonomicPath:
        return HolonomicPath(self.code, self.h, self.x, self.theta)

    def initial_state(self) -> StateVector:
        if self.initial_logical:
            return StateVector.from_logical(self.code, self.initial_logical)
        amps = np.zeros(1 << self.code.k, dtype=complex)
        amps[0] = 1.0
        return StateVector.from_logical(self.code, amps)


@dataclass
class TrajectoryRecord:
    """Per-trajectory log; fault_free means the fidelity threshold was met."""

    jump_events: list[tuple[int, float]]
    final_fidelity: float
    fault_free: bool
    steps: int


@dataclass
class EnsembleResult:
    """Columnar trajectory logs for a whole ensemble."""

    dphi: float
    policy: str
    final_fidelity: np.ndarray
    fault_free: np.ndarray
    flip_count: np.ndarray
    first_jump_step: np.ndarray   # -1 when the trajectory never jumped
    first_jump_angle: np.ndarray  # nan when the trajectory never jumped
    steps: np.ndarray

    @property
    def trajectories(self) -> int:
        return self.final_fidelity.size

    @property
    def no_jump_fraction(self) -> float:
        return float(np.mean(self.flip_count == 0))


@dataclass
class MonteCarloResult:
    """No-fault fraction with a Wald 95% confidence interval."""

    p_no_fault: float
    ci95: float
    p_no_jump: float
    mean_final_fidelity: float
    trajectories: int
    dphi: float
    policy: str


def measurement_angles(dphi: float, upto: float = 2.0 * math.pi) -> np.ndarray:
    """Grid dphi, 2 dphi, ..., clamped so the last angle is exactly upto."""
    steps = math.ceil(upto / dphi - 1e-9)
    angles = np.minimum(np.arange(1, steps + 1) * dphi, upto)
    angles[-1] = upto
    return angles


# -- projector programs ----------------------------------------------------

def _project_rotated(amps: np.ndarray, path: HolonomicPath,
                     phi: float) -> np.ndarray:
    """P(phi) psi through the rotated frame."""
    out = path_rotation(amps, path.h, path.x, path.theta, phi, inverse=True)
    out = apply_code_projector(path.code, out)
    return path_rotation(out, path.h, path.x, path.theta, phi)


class _SingleGeneratorProgram:
    """Prop-2 measurement target: only one transformed generator rotates."""

    def __init__(self, path: HolonomicPath):
        gens = transform_generators(path.code, path.x)
        self.rotating = gens[0]
        self.static = gens[1:]
        self.path = path

    def apply(self, amps: np.ndarray, phi: float) -> np.ndarray:
        out = amps
        for g in self.static:
            out = 0.5 * (out + g.apply(out))
        p = self.path
        t = path_rotation(out, p.h, p.x, p.theta, phi, inverse=True)
        t = self.rotating.apply(t)
        t = path_rotation(t, p.h, p.x, p.theta, phi)
        return 0.5 * (out + t)


def single_generator_projector(path: HolonomicPath, phi: float):
    """Projector measuring one rotated generator plus the static rest.

    Equal, as an operator, to the fully rotated projector
    V(phi) P0 V(phi)^dag.
    """
    program = _SingleGeneratorProgram(path)

    class _Bound:
        def apply(self, amps):
            return program.apply(amps, phi)

        def dense(self):
            eye = np.eye(1 << path.code.n, dtype=complex)
            return program.apply(eye, phi).T

    return _Bound()


def _project_correction(amps: np.ndarray, cpath: CorrectionPath,
                        phi: float) -> np.ndarray:
    """W(phi) P_err(zeta) W(phi)^dag psi; the V(zeta) pair cancels."""
    base = cpath.base
    a = cpath.theta_tilde * phi / (2.0 * math.pi)
    total = phi + cpath.zeta
    out = rotate(amps, base.h, a)
    out = path_rotation(out, base.h, base.x, base.theta, total, inverse=True)
    out = base.x.apply(out)
    out = apply_code_projector(base.code, out)
    out = base.x.apply(out)
    out = path_rotation(out, base.h, base.x, base.theta, total)
    return rotate(out, base.h, -a)


# -- batched measurement step ------------------------------------------------

def _measure_batch(amps, v1, u, forced):
    """Collapse a batch given projected amplitudes v1 and uniforms u."""
    p1 = np.minimum(np.einsum("bi,bi->b", np.conj(v1), v1).real, 1.0)
    outcome = np.zeros(p1.shape, dtype=bool) if forced else (u < p1)
    p0 = 1.0 - p1
    pick = np.where(outcome, np.maximum(p1, _TINY), np.maximum(p0, _TINY))
    if np.any(pick < _DEGENERATE_TOL):
        raise ValueError("degenerate projector branch encountered")
    v0 = amps - v1
    post = np.where(outcome[:, None], v1, v0) / np.sqrt(pick)[:, None]
    return outcome, post


def _simulate_batch(config: DiscreteRunConfig, gens: list,
                    collect_events: bool = False):
    """Run one batch of trajectories, one rng stream per row."""
    path = config.path()
    code, h, x, theta = config.code, config.h, config.x, config.theta
    psi0 = config.initial_state().amplitudes
    target = rotate(psi0, h, theta)
    target_err = x.apply(target)

    angles = measurement_angles(config.dphi)
    n_steps = angles.size
    b = len(gens)
    uniforms = np.empty((b, n_steps))
    for i, g in enumerate(gens):
        uniforms[i] = g.random(n_steps)

    forced_step = None
    if config.force_jump_at is not None:
        forced_step = int(np.argmin(np.abs(angles - config.force_jump_at)))

    single = _SingleGeneratorProgram(path) if config.single_generator_mode \
        else None

    amps = np.tile(psi0, (b, 1))
    prev = np.ones(b, dtype=bool)
    flip_count = np.zeros(b, dtype=np.int64)
    first_jump_step = np.full(b, -1, dtype=np.int64)
    first_jump_angle = np.full(b, np.nan)
    steps_total = np.full(b, n_steps, dtype=np.int64)
    events = [[] for _ in range(b)] if collect_events else None

    correcting = config.policy != POLICY_NONE
    captured: dict[int, tuple[float, np.ndarray, int]] = {}

    for l in range(n_steps):
        phi = float(angles[l])
        if single is not None:
            v1 = single.apply(amps, phi)
        else:
            v1 = _project_rotated(amps, path, phi)
        outcome, amps = _measure_batch(amps, v1, uniforms[:, l],
                                       forced=l == forced_step)
        flips = outcome != prev
        if np.any(flips):
            for i in np.flatnonzero(flips):
                flip_count[i] += 1
                if first_jump_step[i] < 0:
                    first_jump_step[i] = l + 1
                    first_jump_angle[i] = phi
                if events is not None:
                    events[i].append((l + 1, phi))
                if correcting and i not in captured and not outcome[i]:
                    captured[i] = (phi, amps[i].copy(), l + 1)
        prev = outcome

    final_fidelity = fidelity_amps(np.broadcast_to(target, amps.shape), amps)

    if correcting and captured:
        tgt = target if config.policy == POLICY_CORRECT_CODE else target_err
        by_zeta: dict[float, list[int]] = {}
        for i, (zeta, _, _) in captured.items():
            by_zeta.setdefault(zeta, []).append(i)
        for zeta, rows in by_zeta.items():
            cpath = correction_path(
                path, zeta,
                CODE_SPACE if config.policy == POLICY_CORRECT_CODE
                else ERROR_SPACE)
            w_angles = measurement_angles(config.dphi, cpath.final_angle)
            nw = w_angles.size
            uw = np.stack([gens[i].random(nw) for i in rows])
            st = np.stack([captured[i][1] for i in rows])
            prev_w = np.ones(len(rows), dtype=bool)
            for l in range(nw):
                phi = float(w_angles[l])
                v1 = _project_correction(st, cpath, phi)
                outcome, st = _measure_batch(st, v1, uw[:, l], forced=False)
                flips = outcome != prev_w
                for j in np.flatnonzero(flips):
                    i = rows[j]
                    flip_count[i] += 1
                    if events is not None:
                        events[i].append((captured[i][2] + l + 1, phi))
                prev_w = outcome
            fid = fidelity_amps(np.broadcast_to(tgt, st.shape), st)
            for j, i in enumerate(rows):
                final_fidelity[i] = fid[j]
                steps_total[i] = captured[i][2] + nw

    fault_free = final_fidelity >= config.success_threshold
    result = EnsembleResult(
        dphi=config.dphi, policy=config.policy,
        final_fidelity=final_fidelity, fault_free=fault_free,
        flip_count=flip_count, first_jump_step=first_jump_step,
        first_jump_angle=first_jump_angle, steps=steps_total)
    return result, events


def run_discrete_trajectory(config: DiscreteRunConfig,
                            rng: np.random.Generator) -> TrajectoryRecord:
    """Simulate a single trajectory with the supplied random stream."""
    result, events = _simulate_batch(config, [rng], collect_events=True)
    return TrajectoryRecord(
        jump_events=events[0],
        final_fidelity=float(result.final_fidelity[0]),
        fault_free=bool(result.fault_free[0]),
        steps=int(result.steps[0]))


def _batch_worker(args):
    config, start, stop = args
    gens = [trajectory_rng(config.master_seed, i) for i in range(start, stop)]
    result, _ = _simulate_batch(config, gens)
    return result


def run_ensemble(config: DiscreteRunConfig, threads: int = 1) -> EnsembleResult:
    """Run the configured ensemble; identical output for any thread count."""
    spans = []
    start = 0
    while start < config.trajectories:
        stop = min(start + config.batch_size, config.trajectories)
        spans.append((config, start, stop))
        start = stop
    if threads > 1 and len(spans) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(_batch_worker, spans))
    else:
        parts = [_batch_worker(s) for s in spans]
    return EnsembleResult(
        dphi=config.dphi, policy=config.policy,
        final_fidelity=np.concatenate([p.final_fidelity for p in parts]),
        fault_free=np.concatenate([p.fault_free for p in parts]),
        flip_count=np.concatenate([p.flip_count for p in parts]),
        first_jump_step=np.concatenate([p.first_jump_step for p in parts]),
        first_jump_angle=np.concatenate([p.first_jump_angle for p in parts]),
        steps=np.concatenate([p.steps for p in parts]))


def monte_carlo_no_fault(config: DiscreteRunConfig,
                         threads: int = 1) -> MonteCarloResult:
    """Fraction of fault-free trajectories with a Wald 95% interval."""
    if config.trajectories < 100:
        raise ValueError("Monte Carlo estimates need at least 100 trajectories")
    res = run_ensemble(config, threads=threads)
    p = float(np.mean(res.fault_free))
    ci = 1.959963984540054 * math.sqrt(max(p * (1.0 - p), 0.0)
                                       / res.trajectories)
    return MonteCarloResult(
        p_no_fault=p, ci95=ci, p_no_jump=res.no_jump_fraction,
        mean_final_fidelity=float(np.mean(res.final_fidelity)),
        trajectories=res.trajectories, dphi=config.dphi, policy=config.policy)


# -- deterministic runners for closed-form oracles ---------------------------

def no_jump_state(path: HolonomicPath, dphi: float,
                  upto: float = 2.0 * math.pi,
                  psi0: StateVector | None = None):
    """Chain of all-+1 projections; returns (state, survival probability)."""
    if psi0 is None:
        amps = np.zeros(1 << path.code.k, dtype=complex)
        amps[0] = 1.0
        psi0 = StateVector.from_logical(path.code, amps)
    amps = psi0.amplitudes.copy()
    survival = 1.0
    for phi in measurement_angles(dphi, upto):
        v1 = _project_rotated(amps[None, :], path, float(phi))[0]
        p1 = float(np.linalg.norm(v1) ** 2)
        survival *= p1
        amps = v1 / math.sqrt(p1)
    return StateVector(path.code.n, amps), survival


def forced_jump_state(path: HolonomicPath, dphi: float, zeta: float,
                      psi0: StateVector | None = None) -> StateVector:
    """All-+1 projections until zeta, then the complement branch at zeta."""
    if psi0 is None:
        amps = np.zeros(1 << path.code.k, dtype=complex)
        amps[0] = 1.0
        psi0 = StateVector.from_logical(path.code, amps)
    angles = measurement_angles(dphi, zeta)
    amps = psi0.amplitudes.copy()
    for phi in angles[:-1]:
        v1 = _project_rotated(amps[None, :], path, float(phi))[0]
        amps = v1 / np.linalg.norm(v1)
    v1 = _project_rotated(amps[None, :], path, float(angles[-1]))[0]
    v0 = amps - v1
    norm = np.linalg.norm(v0)
    if norm < 1e-12:
        raise ValueError("no jump amplitude at the requested angle")
    return StateVector(path.code.n, v0 / norm)


def corrected_final_state(path: HolonomicPath, dphi: float, zeta: float,
                          target: str = CODE_SPACE,
                          psi0: StateVector | None = None) -> StateVector:
    """Forced jump at zeta, then the no-jump correction chain under W."""
    jumped = forced_jump_state(path, dphi, zeta, psi0)
    cpath = correction_path(path, zeta, target)
    amps = jumped.amplitudes
    for phi in measurement_angles(dphi, cpath.final_angle):
        v1 = _project_correction(amps[None, :], cpath, float(phi))[0]
        amps = v1 / np.linalg.norm(v1)
    return StateVector(path.code.n, amps)


# -- CSV output ---------------------------------------------------------------

SWEEP_CSV_HEADER = ("# dphi,policy,trajectories,p_no_fault,ci95,"
                    "mean_final_fidelity")


def write_sweep_csv(rows: list[MonteCarloResult], path) -> None:
    """One row per (dphi, policy) point, deterministic byte-for-byte."""
    lines = [SWEEP_CSV_HEADER]
    for r in rows:
        lines.append(f"{r.dphi!r},{r.policy},{r.trajectories},"
                     f"{r.p_no_fault!r},{r.ci95!r},{r.mean_final_fidelity!r}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
