"""Constructive control synthesis for unital qubit Lindbladians.

For a unital qubit drift the Bloch block is symmetric, ``L0~ = W diag(a) W^T``.
A target ``M~ = U diag(sigma) V`` is built from free-evolution intervals
sandwiched between rotations: each interval conjugated by a signed permutation
``Q_k`` contributes ``diag(exp(w_k P_k a))``, so it suffices to write
``log sigma = sum_k w_k P_k a`` with ``w_k >= 0``.  Such weights exist exactly
when ``log sigma`` is majorized by ``T a`` (Birkhoff's theorem).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from reachcert.bloch import SuperOpMatrix
from reachcert.criteria import DEFAULT_TOL, check_generator_simulation
from reachcert.dynamics import (
    ControlSchedule,
    Free,
    Rotation,
    distance_lower,
    execute_schedule,
    expm,
    rotation_from_block,
)
from reachcert.errors import InvalidInputError, NotReachableError

PERMUTATIONS = tuple(itertools.permutations(range(3)))  # identity first


@dataclass(frozen=True, eq=False)
class SynthesisResult:
    schedule: ControlSchedule
    weights: np.ndarray  # one free time per entry of PERMUTATIONS
    residual: float
    T: float

    def to_dict(self) -> dict:
        return {
            "schema": 1,
            "weights": [float(w) for w in self.weights],
            "total_time": self.T,
            "residual": self.residual,
            "schedule": self.schedule.to_records(),
        }


def signed_permutation(perm) -> np.ndarray:
    """``Q`` in SO(3) with ``Q diag(x) Q^T = diag(x[perm])``."""
    Q = np.zeros((3, 3))
    Q[np.arange(3), perm] = 1.0
    if np.linalg.det(Q) < 0:
        Q[0] *= -1.0
    return Q


def _check_generator(G: SuperOpMatrix, name: str):
    if not isinstance(G, SuperOpMatrix) or G.kind != "generator":
        raise InvalidInputError(f"{name} must be a generator")
    if G.d != 2:
        raise InvalidInputError(f"{name}: synthesis is only available for qubits (d={G.d})")
    if not G.is_trace_preserving() or not G.is_unital():
        raise InvalidInputError(f"{name} must be unital and trace-preserving")


def solve_weights(target_log: np.ndarray, rates: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Nonnegative ``w`` over :data:`PERMUTATIONS` with ``sum_k w_k rates[perm_k] = target_log``.

    Basic feasible solutions are enumerated over subsets of distinct columns,
    smallest subsets first, so the answer uses as few permutations as possible.
    Returns ``None`` when no nonnegative solution exists.
    """
    target_log = np.asarray(target_log, dtype=float)
    scale = max(1.0, float(np.max(np.abs(target_log))), float(np.max(np.abs(rates))))
    weights = np.zeros(len(PERMUTATIONS))
    if np.max(np.abs(target_log)) <= tol * scale:
        return weights
    columns, owners = [], []
    for k, perm in enumerate(PERMUTATIONS):
        col = rates[list(perm)]
        if not any(np.allclose(col, c, atol=tol * scale, rtol=0) for c in columns):
            columns.append(col)
            owners.append(k)
    columns = np.array(columns).T
    for size in range(1, min(3, columns.shape[1]) + 1):
        for subset in itertools.combinations(range(columns.shape[1]), size):
            A = columns[:, subset]
            if np.linalg.matrix_rank(A, tol=tol * scale) < size:
                continue
            w, *_ = np.linalg.lstsq(A, target_log, rcond=None)
            if np.max(np.abs(A @ w - target_log)) > 1e3 * tol * scale:
                continue
            if np.min(w) < -tol * scale:
                continue
            for j, wj in zip(subset, w):
                weights[owners[j]] = max(float(wj), 0.0)
            return weights
    return None


def synthesize_unital_qubit(
    L0: SuperOpMatrix, Lprime: SuperOpMatrix, t: float, tol: float = DEFAULT_TOL
) -> SynthesisResult:
    """Rotation / free-evolution schedule for ``L0`` whose product equals ``exp(L' t)``.

    The drift total time is fixed by the determinant, ``T = t Tr[L'~] / Tr[L0~]``.
    Raises :class:`NotReachableError` when the rescaled decay rates of ``L'``
    are not majorized by those of ``L0``.
    """
    _check_generator(L0, "drift")
    _check_generator(Lprime, "target generator")
    if not (np.isfinite(t) and t >= 0):
        raise InvalidInputError(f"time must be nonnegative, got {t}")
    A0 = L0.tilde
    if not np.allclose(A0, A0.T, atol=1e-10, rtol=0):
        raise InvalidInputError("drift has a Hamiltonian part; free intervals would not be diagonalizable")
    verdict = check_generator_simulation(Lprime, L0, mode="rescaled", unital=True, tol=tol)
    if not verdict.passed:
        raise NotReachableError(f"decay rates not majorized (slacks {verdict.slacks})")
    T = t * float(np.trace(Lprime.tilde)) / float(np.trace(A0))

    a, W = np.linalg.eigh(A0)
    a, W = a[::-1], W[:, ::-1].copy()
    if np.linalg.det(W) < 0:
        W[:, -1] *= -1.0
    target = expm(Lprime.tilde * t)
    U, sigma, Vh = np.linalg.svd(target)
    if np.linalg.det(U) < 0:  # det(U) det(Vh) = det(target) > 0, flip both
        U[:, -1] *= -1.0
        Vh[-1] *= -1.0
    weights = solve_weights(np.log(sigma), a)
    if weights is None:
        raise NotReachableError("no nonnegative permutation weights solve the spectrum equation")

    active = [k for k, w in enumerate(weights) if w > 0]
    steps = []
    prev = Vh  # basis change applied before the first interval
    for k in active:
        Q = signed_permutation(PERMUTATIONS[k])
        steps.append(Rotation(rotation_from_block(W @ Q.T @ prev)))
        steps.append(Free(float(weights[k])))
        prev = Q @ W.T
    steps.append(Rotation(rotation_from_block(U @ prev)))
    schedule = ControlSchedule(tuple(steps))
    result = SynthesisResult(schedule, weights, math.nan, T)
    residual = verify_schedule(result, L0, Lprime, t)
    return SynthesisResult(schedule, weights, residual, T)


def verify_schedule(result: SynthesisResult, L0: SuperOpMatrix, Lprime: SuperOpMatrix, t: float) -> float:
    """Distance (Choi lower bound) between the executed schedule and ``exp(L' t)``."""
    achieved = execute_schedule(L0, result.schedule)
    target = SuperOpMatrix(Lprime.d, expm(Lprime.mat * t), "channel")
    return distance_lower(achieved, target)


def with_weights(result: SynthesisResult, weights) -> SynthesisResult:
    """Same rotations, new free times (for perturbation studies)."""
    weights = np.asarray(weights, dtype=float)
    active = [k for k, w in enumerate(result.weights) if w > 0]
    steps, j = [], 0
    for s in result.schedule.steps:
        if isinstance(s, Free):
            steps.append(Free(float(weights[active[j]])))
            j += 1
        else:
            steps.append(s)
    return SynthesisResult(ControlSchedule(tuple(steps)), weights, math.nan, float(np.sum(weights)))
