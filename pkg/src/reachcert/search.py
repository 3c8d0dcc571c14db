"""Piecewise-constant pulse optimization and ensemble reachability experiments."""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm as _scipy_expm
from scipy.optimize import minimize

from reachcert.bloch import SuperOpMatrix
from reachcert.criteria import (
    check_anisotropy,
    check_unital_anisotropy,
    compute_bounds,
    full_report,
    required_time,
)
from reachcert.dynamics import distance_lower, expm
from reachcert.errors import DivergedError, ValidationError
from reachcert.models import (
    GeneratorSpec,
    control_basis as default_control_basis,
    lambda_skew,
    lindbladian,
    random_markovian_channel,
)

log = logging.getLogger(__name__)

SUCCESS_THRESHOLD = 1e-3
N_RESTARTS = 4


# -- problem definition -------------------------------------------------------------


@dataclass(eq=False)
class PulseProblem:
    """Steer ``drift`` plus ``sum_c u_c(t) C_c`` to ``target`` in time ``T``.

    Amplitudes are constant on ``n_slices`` equal slices.  Controls default to
    the Hamiltonian generators of the traceless Gell-Mann elements.
    """

    drift: GeneratorSpec
    target: SuperOpMatrix
    T: float
    n_slices: int = 64
    control_basis: list | None = None
    amplitude_bound: float | None = None

    def __post_init__(self):
        d = self.drift.d
        if self.target.d != d:
            raise ValidationError("target and drift dimensions differ")
        if not (np.isfinite(self.T) and self.T > 0):
            raise ValidationError(f"T must be positive, got {self.T}")
        if int(self.n_slices) < 1:
            raise ValidationError("n_slices must be a positive integer")
        self.n_slices = int(self.n_slices)
        if self.control_basis is None:
            self.control_basis = default_control_basis(d)
        for C in self.control_basis:
            M = C.mat
            if C.d != d or not np.allclose(M, -M.T, atol=1e-10):
                raise ValidationError("control generators must be antisymmetric")
            if np.max(np.abs(M[0])) > 1e-10 or np.max(np.abs(M[:, 0])) > 1e-10:
                raise ValidationError("control generators must have zero first row and column")
        if self.amplitude_bound is not None and not self.amplitude_bound > 0:
            raise ValidationError("amplitude_bound must be positive")
        times = required_time(self.target, self.drift)
        if self.drift.is_trace_preserving() and times and min(abs(t - self.T) for t in times) > 1e-6 * max(1.0, self.T):
            warnings.warn(f"T={self.T} differs from the determinant-implied times {times}", stacklevel=2)
        self._controls = np.array([C.mat for C in self.control_basis])
        self._pieces = self._slice_pieces()

    @property
    def n_controls(self) -> int:
        return len(self.control_basis)

    def _slice_pieces(self):
        """For each slice, a list of ``(tau, G)`` drift sub-intervals."""
        edges = np.linspace(0.0, self.T, self.n_slices + 1)
        cuts = np.array([b for b in self.drift.breakpoints() if 0 < b < self.T])
        out = []
        for a, b in zip(edges[:-1], edges[1:]):
            inner = cuts[(cuts > a + 1e-12) & (cuts < b - 1e-12)]
            pts = np.concatenate([[a], inner, [b]])
            out.append([(q - p, self.drift.generator_at(0.5 * (p + q)).mat) for p, q in zip(pts[:-1], pts[1:])])
        return out

    # -- forward model & exact gradient --

    def _substeps(self, u):
        mats = []
        for k, pieces in enumerate(self._pieces):
            C = np.tensordot(u[k], self._controls, axes=1)
            for tau, G in pieces:
                mats.append(((G + C) * tau, k, tau))
        return mats

    def propagate(self, amplitudes) -> SuperOpMatrix:
        u = self._check_amplitudes(amplitudes)
        mat = np.eye(self.target.n)
        for A, _, _ in self._substeps(u):
            mat = expm(A) @ mat
        return SuperOpMatrix(self.target.d, mat, "channel")

    def _check_amplitudes(self, amplitudes) -> np.ndarray:
        u = np.asarray(amplitudes, dtype=float).reshape(self.n_slices, self.n_controls)
        return u

    def loss_and_grad(self, amplitudes):
        """``||M(u) - X||_F^2`` and its exact gradient.

        The gradient uses the adjoint Frechet derivative of the exponential,
        ``<Gamma, L(A, E)> = <L(A^T, Gamma), E>``, read off the upper-right
        block of ``expm([[A^T, Gamma], [0, A^T]])``.
        """
        u = self._check_amplitudes(amplitudes)
        steps = self._substeps(u)
        n = self.target.n
        with np.errstate(over="ignore", invalid="ignore"):
            props = _scipy_expm(np.array([A for A, _, _ in steps]))
            if not np.all(np.isfinite(props)):
                raise DivergedError("propagator overflowed", {"max_amplitude": float(np.max(np.abs(u)))})
            # prefix[j] = P_{j-1} ... P_0
            prefix = [np.eye(n)]
            for P in props:
                prefix.append(P @ prefix[-1])
            resid = prefix[-1] - self.target.mat
            loss = float(np.sum(resid**2))
        if not math.isfinite(loss):
            raise DivergedError("non-finite loss", {"max_amplitude": float(np.max(np.abs(u)))})
        # Gamma_j = suffix_j^T (2 resid) prefix_j^T, suffix_j = P_last ... P_{j+1}
        gammas = np.empty((len(steps), n, n))
        back = 2.0 * resid
        for j in range(len(steps) - 1, -1, -1):
            gammas[j] = back @ prefix[j].T
            back = props[j].T @ back
        aug = np.zeros((len(steps), 2 * n, 2 * n))
        At = np.array([A.T for A, _, _ in steps])
        aug[:, :n, :n] = At
        aug[:, n:, n:] = At
        aug[:, :n, n:] = gammas
        K = _scipy_expm(aug)[:, :n, n:]
        grad = np.zeros_like(u)
        taus = np.array([tau for _, _, tau in steps])
        per_step = np.einsum("jab,cab->jc", K, self._controls) * taus[:, None]
        np.add.at(grad, [k for _, k, _ in steps], per_step)
        return loss, grad.ravel()


@dataclass
class PulseSolution:
    amplitudes: np.ndarray
    achieved_distance: float
    iterations: int
    converged: bool
    loss: float = math.nan
    loss_history: list = field(default_factory=list)

    @property
    def reached(self) -> bool:
        return self.achieved_distance <= SUCCESS_THRESHOLD


# -- optimizer ---------------------------------------------------------------------


def _descent(problem: PulseProblem, x0, max_iters: int, gtol: float, ftol: float):
    """Momentum gradient descent with Armijo backtracking; the loss never increases."""
    bound = problem.amplitude_bound
    project = (lambda z: np.clip(z, -bound, bound)) if bound else (lambda z: z)
    x = project(np.array(x0, dtype=float))
    f, g = problem.loss_and_grad(x)
    history = [f]
    velocity = np.zeros_like(x)
    step = 1.0 / max(1.0, float(np.linalg.norm(g)))
    it = 0
    for it in range(1, max_iters + 1):
        if f <= ftol or np.linalg.norm(g) <= gtol:
            return x, f, history, it - 1, True
        direction = 0.9 * velocity - g
        if direction @ g >= 0:
            direction = -g
        accepted = False
        for _ in range(40):
            x_new = project(x + step * direction)
            f_new, g_new = problem.loss_and_grad(x_new)
            if f_new <= f + 1e-4 * (g @ (x_new - x)) and f_new <= f:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            velocity[:] = 0.0
            if direction @ (-g) == g @ g:  # already plain gradient: stuck
                return x, f, history, it, False
            continue
        velocity = (x_new - x) / step
        x, f, g = x_new, f_new, g_new
        history.append(f)
        step *= 2.0
    return x, f, history, it, False


def _refine(problem: PulseProblem, x0, max_iters: int, ftol: float):
    bound = problem.amplitude_bound
    bounds = [(-bound, bound)] * x0.size if bound else None
    res = minimize(
        problem.loss_and_grad, x0, jac=True, method="L-BFGS-B", bounds=bounds,
        options={"maxiter": max_iters, "ftol": ftol * 1e-3, "gtol": 1e-12},
    )
    return res.x, float(res.fun), int(res.nit), bool(res.fun <= ftol or res.success)


def optimize(
    problem: PulseProblem,
    rng_seed=0,
    max_iters: int = 500,
    restarts: int = N_RESTARTS,
    ftol: float = 1e-14,
    refine: bool = True,
) -> PulseSolution:
    """Best of ``restarts`` runs (at least 4): zero start first, then random amplitudes.

    Each run does momentum gradient descent for a quarter of ``max_iters``,
    then an L-BFGS-B refinement for the remainder.  Deterministic for a fixed
    ``rng_seed``.
    """
    rng = np.random.default_rng(rng_seed)
    restarts = max(int(restarts), N_RESTARTS)
    shape = (problem.n_slices, problem.n_controls)
    scale = 1.0 / problem.T
    if problem.amplitude_bound:
        scale = min(scale, problem.amplitude_bound)
    best = None
    n_gd = max_iters if not refine else max(1, max_iters // 4)
    for r in range(restarts):
        x0 = np.zeros(shape) if r == 0 else scale * rng.standard_normal(shape)
        x, f, history, iters, conv = _descent(problem, x0.ravel(), n_gd, 1e-12, ftol)
        if refine and not conv and max_iters - n_gd > 0:
            xr, fr, it_r, conv = _refine(problem, x, max_iters - n_gd, ftol)
            iters += it_r
            if fr < f:
                x, f = xr, fr
                history.append(f)
        log.debug("restart %d: loss %.3e after %d iterations", r, f, iters)
        if best is None or f < best[1]:
            best = (x, f, history, iters, conv)
        if f <= ftol:
            break
    x, f, history, iters, conv = best
    amplitudes = x.reshape(shape)
    dist = distance_lower(problem.propagate(amplitudes), problem.target)
    return PulseSolution(amplitudes, dist, iters, conv, f, history)


# -- ensemble experiments -----------------------------------------------------------


def sample_seeds(rng_seed: int, count: int) -> list[int]:
    """Independent per-sample integer seeds split from one top-level seed."""
    children = np.random.SeedSequence(rng_seed).spawn(count)
    return [int(c.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1)) for c in children]


@dataclass
class SampleRecord:
    index: int
    seed: int
    det_verdict: str
    eq5_verdict: str
    eq6_verdict: str
    eq7_verdicts: list
    excluded: bool
    optimized_distance: float = math.nan

    def row(self) -> list:
        dist = "" if math.isnan(self.optimized_distance) else repr(float(self.optimized_distance))
        return [self.index, self.seed, self.det_verdict, self.eq5_verdict, self.eq6_verdict,
                *self.eq7_verdicts, int(self.excluded), dist]


@dataclass
class EnsembleRecord:
    family: dict
    samples: list

    def fraction_excluded(self) -> float:
        return float(np.mean([s.excluded for s in self.samples])) if self.samples else math.nan

    def fraction_by_criterion(self) -> dict:
        """Fraction ruled out by each condition on its own."""
        n = len(self.samples)
        out = {
            "det": sum(s.det_verdict == "fail" for s in self.samples) / n,
            "eq5": sum(s.eq5_verdict == "fail" for s in self.samples) / n,
            "eq6": sum(s.eq6_verdict == "fail" for s in self.samples) / n,
            "eq7": sum(any(v == "fail" for v in s.eq7_verdicts) for s in self.samples) / n,
        }
        return out

    def reach_fraction(self, threshold: float = SUCCESS_THRESHOLD) -> float:
        tried = [s for s in self.samples if not math.isnan(s.optimized_distance)]
        if not tried:
            return math.nan
        return float(np.mean([s.optimized_distance <= threshold for s in tried]))


ENSEMBLE_DEFAULTS = {"n_segments": 2, "n_jumps": 1, "duration_range": (0.1, 1.0)}


def _classify(report, d: int) -> tuple:
    det = "pass" if report.det_time.passed else "fail"
    if not report.det_time.passed:
        return det, "not-applicable", "not-applicable", ["not-applicable"] * (d - 1)
    aniso = report.anisotropy.status
    unital = report.unital_anisotropy.status
    moments = [m.status for m in report.non_unitality] or ["not-applicable"] * (d - 1)
    return det, aniso, unital, moments


def run_sample(drift_G: SuperOpMatrix, bounds, index: int, seed: int, ensemble: dict, optimizer: dict | None):
    """One ensemble member: draw a channel, run the criteria, optionally optimize."""
    d = drift_G.d
    rng = np.random.default_rng(seed)
    unital = bool(rng.random() < ensemble.get("unital_fraction", 0.0))
    _, target = random_markovian_channel(
        d, ensemble["n_segments"], int(rng.integers(2**62)),
        duration_range=tuple(ensemble["duration_range"]), unital=unital, n_jumps=ensemble["n_jumps"],
    )
    drift = GeneratorSpec.constant(drift_G, 1.0)
    report = full_report(target, drift, bounds=bounds)
    det, aniso, unital, moments = _classify(report, d)
    record = SampleRecord(index, seed, det, aniso, unital, moments, not report.overall)
    if optimizer is not None and report.overall and report.T and report.T > 0:
        problem = PulseProblem(GeneratorSpec.constant(drift_G, report.T), target, report.T,
                               n_slices=optimizer.get("n_slices", 64))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            sol = optimize(problem, rng_seed=seed, max_iters=optimizer.get("max_iters", 300))
        record.optimized_distance = sol.achieved_distance
    return record


def _run_sample_args(args):
    return run_sample(*args)


def reachability_experiment(
    drift_family,
    sample_count: int,
    rng_seed: int = 0,
    optimize_count: int = 0,
    jobs: int = 1,
    start: int = 0,
    bounds: dict | None = None,
    **ensemble,
) -> EnsembleRecord:
    """Random Markovian targets against a fixed drift.

    ``drift_family`` is Lindblad data or a generator.  Each target is a
    time-dependent channel of ``n_segments`` random Lindbladians (one Ginibre
    jump each by default; ``unital_fraction`` mixes in unital segments).  The
    first ``optimize_count`` non-excluded samples are passed to
    :func:`optimize`.  Samples ``start .. sample_count-1`` are computed, so an
    interrupted run can be resumed.
    """
    G = drift_family if isinstance(drift_family, SuperOpMatrix) else lindbladian(drift_family)
    config = {**ENSEMBLE_DEFAULTS, "unital_fraction": 0.0, **ensemble}
    if bounds is None and G.is_trace_preserving():
        bounds = compute_bounds(GeneratorSpec.constant(G, 1.0))
    seeds = sample_seeds(rng_seed, sample_count)
    indices = list(range(start, sample_count))
    samples = []
    if jobs > 1:
        args = [(G, bounds, i, seeds[i], config, None) for i in indices]
        with ProcessPoolExecutor(jobs) as pool:
            samples = list(pool.map(_run_sample_args, args, chunksize=8))
    else:
        samples = [run_sample(G, bounds, i, seeds[i], config, None) for i in indices]
    opt = {"n_slices": config.pop("n_slices", 64), "max_iters": config.pop("max_iters", 300)}
    budget = optimize_count
    for k, s in enumerate(samples):
        if budget <= 0:
            break
        if not s.excluded:
            samples[k] = run_sample(G, bounds, s.index, s.seed, config, opt)
            budget -= 1
    return EnsembleRecord({"generator": G.to_dict()}, samples)


# -- Lambda-system skew sweep --------------------------------------------------------


LAMBDA_T = 1.0 / 3.0


def lambda_target(skew: float, T: float = LAMBDA_T, total_rate: float = 1.0) -> SuperOpMatrix:
    G = lindbladian(lambda_skew(skew, total_rate))
    return SuperOpMatrix(3, expm(G.mat * T), "channel")


def _passes_majorization(target: SuperOpMatrix, drift: GeneratorSpec, T: float, tol: float) -> bool:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return check_anisotropy(target, drift, T, tol).passed and check_unital_anisotropy(target, drift, T, tol).passed


def majorization_boundary(
    drift_skew: float = 10.0, T: float = LAMBDA_T, total_rate: float = 1.0, tol: float = 1e-10, hi: float = 1e3
) -> float:
    """Largest target skew still allowed by the anisotropy conditions (bisection)."""
    drift = GeneratorSpec.constant(lindbladian(lambda_skew(drift_skew, total_rate)), T)
    lo = drift_skew
    if not _passes_majorization(lambda_target(lo, T, total_rate), drift, T, tol):
        raise ValidationError("the drift's own free evolution fails the anisotropy check")
    if _passes_majorization(lambda_target(hi, T, total_rate), drift, T, tol):
        return math.inf
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if _passes_majorization(lambda_target(mid, T, total_rate), drift, T, tol):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass
class SkewRecord:
    skew: float
    eq5_verdict: str
    eq6_verdict: str
    optimized_distance: float


def lambda_skew_point(skew, drift_skew=10.0, T=LAMBDA_T, n_slices=64, max_iters=300, rng_seed=0, restarts=N_RESTARTS):
    drift_G = lindbladian(lambda_skew(drift_skew))
    drift = GeneratorSpec.constant(drift_G, T)
    target = lambda_target(skew, T)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        aniso = check_anisotropy(target, drift, T).status
        unital = check_unital_anisotropy(target, drift, T).status
        sol = optimize(PulseProblem(drift, target, T, n_slices), rng_seed=rng_seed,
                       max_iters=max_iters, restarts=restarts)
    return SkewRecord(float(skew), aniso, unital, sol.achieved_distance)
