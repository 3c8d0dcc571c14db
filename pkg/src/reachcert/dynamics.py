"""Propagation of controlled generators, control schedules, Choi matrices and channel distances."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy.linalg import expm as _scipy_expm
from scipy.spatial.transform import Rotation as _SciRotation

from reachcert.bloch import SuperOpMatrix, from_liouville, make_basis, to_liouville
from reachcert.errors import DivergedError, GridError, ScheduleError, ValidationError
from reachcert.models import GeneratorSpec, hamiltonian_generator

GRID_TOL = 1e-9


def expm(A: np.ndarray) -> np.ndarray:
    """Dense matrix exponential (Pade scaling-and-squaring)."""
    with np.errstate(over="ignore", invalid="ignore"):
        out = _scipy_expm(A)
    if not np.all(np.isfinite(out)):
        raise DivergedError("matrix exponential overflowed", {"norm": float(np.linalg.norm(A))})
    return out


# -- controls -------------------------------------------------------------------


def _as_control_generator(H, d: int) -> SuperOpMatrix:
    if isinstance(H, SuperOpMatrix):
        if H.kind != "generator" or H.d != d:
            raise ValidationError("control must be a generator of matching dimension")
        return H
    H = np.asarray(H, dtype=complex)
    if H.shape != (d, d):
        raise ValidationError(f"control Hamiltonian shape {H.shape} does not match d={d}")
    return hamiltonian_generator(H)


def _merge_grids(spec: GeneratorSpec, controls):
    """Common refinement of drift segments and control pieces: (duration, G, C)."""
    d = spec.d
    ctrl = [(float(tau), _as_control_generator(H, d)) for tau, H in controls]
    if any(tau < 0 for tau, _ in ctrl):
        raise GridError("control durations must be nonnegative")
    total_ctrl = sum(tau for tau, _ in ctrl)
    if abs(total_ctrl - spec.total_time) > GRID_TOL * max(1.0, spec.total_time):
        raise GridError(
            f"control sequence spans {total_ctrl:.12g} but the drift spans {spec.total_time:.12g}"
        )
    cuts = np.union1d(spec.breakpoints(), np.concatenate([[0.0], np.cumsum([t for t, _ in ctrl])]))
    # only merge cuts that coincide up to rounding; short strong pulses must survive
    cuts = cuts[np.concatenate([[True], np.diff(cuts) > 1e-12 * max(1.0, spec.total_time)])]
    cuts[-1] = spec.total_time
    ctrl_edges = np.cumsum([t for t, _ in ctrl])
    pieces = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        mid = 0.5 * (a + b)
        G = spec.generator_at(mid)
        k = min(int(np.searchsorted(ctrl_edges, mid)), len(ctrl) - 1)
        pieces.append((b - a, G, ctrl[k][1]))
    return pieces


def propagate(
    spec: GeneratorSpec,
    controls: Sequence | None = None,
    dt_max: float = 1e-2,
) -> SuperOpMatrix:
    """Dynamical map of a piecewise-constant drift plus piecewise-constant controls.

    ``controls`` is a sequence of ``(duration, H)`` where ``H`` is a Hermitian
    ``d x d`` matrix or a generator-kind :class:`SuperOpMatrix`; the durations
    must add up to ``spec.total_time``.  Each piece is sub-stepped at most
    ``dt_max`` with the symmetric split ``e^{C h/2} e^{G h} e^{C h/2}``, so the
    result is second-order accurate.  Without controls the segments are
    exponentiated exactly.
    """
    if not dt_max > 0:
        raise ValidationError("dt_max must be positive")
    d = spec.d
    mat = np.eye(d * d)
    if controls is None:
        for tau, G in spec.segments:
            mat = expm(G.mat * tau) @ mat
        return SuperOpMatrix(d, mat, "channel")

    for tau, G, C in _merge_grids(spec, controls):
        n = max(1, math.ceil(tau / dt_max - 1e-12))
        h = tau / n
        half = expm(C.mat * (h / 2))
        step = half @ expm(G.mat * h) @ half
        mat = np.linalg.matrix_power(step, n) @ mat
    if not np.all(np.isfinite(mat)):
        raise DivergedError("propagation produced non-finite entries")
    return SuperOpMatrix(d, mat, "channel")


def random_controls(d: int, total_time: float, n_pieces: int, rng, amplitude: float = 3.0):
    """Piecewise-constant random Hamiltonians (Gaussian Hermitian, scaled by ``amplitude``)."""
    rng = np.random.default_rng(rng)
    taus = np.full(n_pieces, total_time / n_pieces)
    out = []
    for tau in taus:
        X = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        out.append((float(tau), amplitude * (X + X.conj().T) / 2.0))
    return out


# -- schedules --------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Rotation:
    """Instantaneous rotation ``1 (+) R`` acting on the Bloch vector."""

    R: SuperOpMatrix


@dataclass(frozen=True)
class Free:
    duration: float


Step = Union[Rotation, Free]


def _check_rotation(R: SuperOpMatrix, tol: float = 1e-10):
    M = R.mat
    e0 = np.zeros(R.n)
    e0[0] = 1.0
    if R.kind != "channel" or not (np.allclose(M[0], e0, atol=tol) and np.allclose(M[:, 0], e0, atol=tol)):
        raise ScheduleError("rotation does not fix the identity component")
    block = M[1:, 1:]
    if not np.allclose(block @ block.T, np.eye(R.n - 1), atol=tol):
        raise ScheduleError("rotation block is not orthogonal")
    if abs(np.linalg.det(block) - 1.0) > tol:
        raise ScheduleError("rotation block does not have determinant +1")


def rotation_from_block(block: np.ndarray) -> SuperOpMatrix:
    n = block.shape[0] + 1
    mat = np.eye(n)
    mat[1:, 1:] = block
    return SuperOpMatrix(int(round(math.sqrt(n))), mat, "channel")


@dataclass(frozen=True, eq=False)
class ControlSchedule:
    """Alternating instantaneous rotations and free-evolution intervals.

    Steps are listed in time order (the first step acts first).
    """

    steps: tuple = ()

    def __post_init__(self):
        steps = tuple(self.steps)
        for s in steps:
            if isinstance(s, Rotation):
                _check_rotation(s.R)
            elif isinstance(s, Free):
                if not (np.isfinite(s.duration) and s.duration >= 0):
                    raise ScheduleError(f"free duration {s.duration} must be >= 0")
            else:
                raise ScheduleError(f"unknown schedule step {s!r}")
        object.__setattr__(self, "steps", steps)

    @property
    def total_time(self) -> float:
        return float(sum(s.duration for s in self.steps if isinstance(s, Free)))

    def rotations(self) -> list[SuperOpMatrix]:
        return [s.R for s in self.steps if isinstance(s, Rotation)]

    def to_records(self) -> list[dict]:
        """Export for qubits: axis-angle rotations and free times."""
        out = []
        for s in self.steps:
            if isinstance(s, Free):
                out.append({"free_time": s.duration})
            else:
                if s.R.d != 2:
                    raise ScheduleError("axis-angle export is only defined for qubits")
                axis, angle = rotation_axis_angle(s.R.mat[1:, 1:])
                out.append({"rotation_axis": axis.tolist(), "angle": angle})
        return out

    def as_controls(self, pulse_time: float):
        """Realize the schedule as piecewise-constant Hamiltonians (qubits only).

        Each rotation becomes a constant pulse of length ``pulse_time`` during
        which the drift also acts; the returned total time therefore exceeds
        :attr:`total_time` by ``pulse_time`` per rotation.
        """
        out = []
        for s in self.steps:
            if isinstance(s, Free):
                if s.duration > 0:
                    out.append((s.duration, np.zeros((2, 2), complex)))
            else:
                out.append((pulse_time, rotation_hamiltonian(s.R.mat[1:, 1:], pulse_time)))
        return out


def rotation_axis_angle(block: np.ndarray) -> tuple[np.ndarray, float]:
    rotvec = _SciRotation.from_matrix(block).as_rotvec()
    angle = float(np.linalg.norm(rotvec))
    axis = rotvec / angle if angle > 0 else np.array([0.0, 0.0, 1.0])
    return axis, angle


_PAULI = np.array([[[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]], dtype=complex)


def rotation_hamiltonian(block: np.ndarray, duration: float) -> np.ndarray:
    """Qubit Hamiltonian whose evolution for ``duration`` rotates the Bloch vector by ``block``."""
    rotvec = _SciRotation.from_matrix(block).as_rotvec()
    return np.einsum("k,kab->ab", rotvec, _PAULI) / (2.0 * duration)


def execute_schedule(drift: SuperOpMatrix, schedule: ControlSchedule) -> SuperOpMatrix:
    """Exact product of rotations and drift exponentials."""
    if drift.kind != "generator":
        raise ValidationError("drift must be a generator")
    mat = np.eye(drift.n)
    for s in schedule.steps:
        if isinstance(s, Free):
            mat = expm(drift.mat * s.duration) @ mat
        else:
            if s.R.d != drift.d:
                raise ScheduleError("rotation dimension does not match the drift")
            mat = s.R.mat @ mat
    return SuperOpMatrix(drift.d, mat, "channel")


# -- Choi matrices & validity ------------------------------------------------------


def choi(S: SuperOpMatrix) -> np.ndarray:
    """Unnormalized Choi matrix ``sum_ij |i><j| (x) S(|i><j|)`` (trace ``d`` for TP maps)."""
    d = S.d
    liou = to_liouville(S).reshape(d, d, d, d)  # [a, b, i, j]
    J = liou.transpose(2, 0, 3, 1).reshape(d * d, d * d)
    return 0.5 * (J + J.conj().T)


def choi_partial_trace_output(J: np.ndarray, d: int) -> np.ndarray:
    return np.einsum("iaja->ij", J.reshape(d, d, d, d))


def is_completely_positive(S: SuperOpMatrix, tol: float = 1e-9) -> bool:
    return bool(np.min(np.linalg.eigvalsh(choi(S))) >= -tol)


def is_trace_preserving(S: SuperOpMatrix, tol: float = 1e-9) -> bool:
    J = choi(S)
    return bool(np.max(np.abs(choi_partial_trace_output(J, S.d) - np.eye(S.d))) <= tol)


def channel_distance(A: SuperOpMatrix, B: SuperOpMatrix) -> tuple[float, float]:
    """Two-sided diamond-norm bounds ``(||J_A - J_B||_1 / d, d ||J_A - J_B||_1)``."""
    if A.d != B.d:
        raise ValidationError(f"dimension mismatch: {A.d} vs {B.d}")
    diff = choi(A) - choi(B)
    tn = float(np.sum(np.abs(np.linalg.eigvalsh(diff))))
    return tn / A.d, tn * A.d


def distance_lower(A: SuperOpMatrix, B: SuperOpMatrix) -> float:
    return channel_distance(A, B)[0]


def depolarizing_channel(d: int) -> SuperOpMatrix:
    """Completely depolarizing channel ``rho -> Tr[rho] 1/d``."""
    mat = np.zeros((d * d, d * d))
    mat[0, 0] = 1.0
    return SuperOpMatrix(d, mat, "channel")


def unitary_channel(U) -> SuperOpMatrix:
    U = np.asarray(U, dtype=complex)
    d = U.shape[0]
    return from_liouville(np.kron(U, U.conj()), make_basis(d), "channel")
