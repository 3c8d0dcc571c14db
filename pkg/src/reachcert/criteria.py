"""Majorization machinery and the necessary conditions for reachability.

Given a drift (piecewise-constant :class:`~reachcert.models.GeneratorSpec`)
and a target channel, the checks below can only *exclude* a target: a
channel reachable with some Hamiltonian control always passes all of them.

* determinant / evolution time: ``det M = exp(int Tr G dt)`` fixes the times
  at which a target can be reached;
* anisotropy: ``log sigma(M)`` is majorized by the time-integrated decay rates
  (eigenvalues of the Hermitian part of the drift);
* unital anisotropy: the same on the unital blocks;
* non-unitality: ``Tr[M(1/d)^n]`` is bounded by the largest ``Tr[rho^n]`` over
  states where the drift cannot change ``Tr[rho^n]``.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import asdict, dataclass, field
from typing import Literal

import numpy as np
from scipy.optimize import minimize

from reachcert.bloch import SuperOpMatrix, from_bloch, to_liouville
from reachcert.errors import InvalidInputError, ValidationError
from reachcert.models import GeneratorSpec, fixed_points

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-8


# -- majorization -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RealSpectrum:
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float).ravel()
        object.__setattr__(self, "values", vals)

    @property
    def sorted_desc(self) -> np.ndarray:
        return np.sort(self.values)[::-1]

    def __len__(self) -> int:
        return self.values.size

    def total(self) -> float:
        return float(np.sum(self.values))


def _as_spectrum(x) -> RealSpectrum:
    return x if isinstance(x, RealSpectrum) else RealSpectrum(x)


def majorizes(b, a, tol=DEFAULT_TOL) -> tuple[bool, np.ndarray]:
    """Does ``b`` majorize ``a`` (``a`` is more uniform than ``b``)?

    Returns the verdict and the partial-sum slacks
    ``slacks[k] = sum(b_desc[:k+1]) - sum(a_desc[:k+1])``.  All slacks but the
    last must be ``>= -tol``; the last one (the sum rule) must be within ``tol``
    of zero.  ``tol`` may also be an array with one entry per partial sum.
    """
    a, b = _as_spectrum(a), _as_spectrum(b)
    if len(a) != len(b):
        raise ValidationError(f"size mismatch: {len(b)} vs {len(a)}")
    tol = np.broadcast_to(np.asarray(tol, dtype=float), (len(a),))
    with np.errstate(invalid="ignore"):
        slacks = np.cumsum(b.sorted_desc) - np.cumsum(a.sorted_desc)
    slacks = np.where(np.isnan(slacks), -np.inf, slacks)
    ok = bool(np.all(slacks[:-1] >= -tol[:-1]) and abs(slacks[-1]) <= tol[-1])
    return ok, slacks


def hermitian_part(mat: np.ndarray) -> np.ndarray:
    return 0.5 * (mat + mat.T)


def decay_rates(G: SuperOpMatrix) -> RealSpectrum:
    """Eigenvalues of the Hermitian part ``(G + G^T)/2`` of a generator."""
    return RealSpectrum(np.linalg.eigvalsh(hermitian_part(G.mat)))


def unital_decay_rates(G: SuperOpMatrix) -> RealSpectrum:
    return RealSpectrum(np.linalg.eigvalsh(hermitian_part(G.tilde)))


def integrated_rates(drift: GeneratorSpec, T: float, unital: bool = False) -> np.ndarray:
    """``int_0^T lambda((G_t + G_t^T)/2) dt``, each segment's spectrum sorted descending."""
    rates = unital_decay_rates if unital else decay_rates
    n = drift.d**2 - (1 if unital else 0)
    total = np.zeros(n)
    for tau, G in drift.pieces(T):
        total += tau * rates(G).sorted_desc
    return total


def log_singular_values(mat: np.ndarray) -> np.ndarray:
    s = np.linalg.svd(mat, compute_uv=False)
    with np.errstate(divide="ignore"):
        return np.log(s)


def _log_sigma_error(mat: np.ndarray) -> np.ndarray:
    """Backward-stable SVD error on ``log sigma_i`` (descending order), ~ eps * sigma_1 / sigma_i."""
    s = np.linalg.svd(mat, compute_uv=False)
    n = mat.shape[0]
    with np.errstate(divide="ignore"):
        return 8.0 * n * np.finfo(float).eps * s[0] / s


# -- evolution time -------------------------------------------------------------


def trace_integral(drift: GeneratorSpec, T: float) -> float:
    return float(sum(tau * G.trace() for tau, G in drift.pieces(T)))


def required_time(target: SuperOpMatrix, drift: GeneratorSpec, tol: float = 1e-12) -> list[float]:
    """All ``T >= 0`` with ``int_0^T Tr G dt = log det(target)``.

    The last drift segment is continued indefinitely.  A non-positive
    determinant gives an empty list: no such channel is reachable.
    """
    det = np.linalg.det(target.mat)
    if not det > 0:
        return []
    goal = float(np.log(det))
    scale = tol * max(1.0, abs(goal))
    times: list[float] = []
    t0, c0 = 0.0, 0.0
    for k, (tau, G) in enumerate(drift.segments):
        last = k == len(drift.segments) - 1
        rate = G.trace()
        t1 = np.inf if last else t0 + tau
        if abs(rate) < 1e-14:
            if abs(c0 - goal) <= scale:
                times.append(t0)
        else:
            t = t0 + (goal - c0) / rate
            if t0 - scale <= t <= t1 + scale:
                times.append(max(t, t0))
        if not last:
            c0 += rate * tau
            t0 = t1
    out: list[float] = []
    for t in sorted(times):
        if not out or t - out[-1] > 1e-12 * max(1.0, t):
            out.append(float(t))
    return out


# -- verdict records ------------------------------------------------------------

Status = Literal["pass", "fail", "boundary", "inconclusive", "not-applicable"]


@dataclass
class MajorizationVerdict:
    passed: bool
    status: str
    slacks: list

    @classmethod
    def from_slacks(cls, ok: bool, slacks: np.ndarray, status: str | None = None):
        return cls(ok, status or ("pass" if ok else "fail"), [float(s) for s in slacks])


@dataclass
class MomentVerdict:
    n: int
    moment: float
    bound: float
    passed: bool
    status: str


@dataclass
class DetTimeVerdict:
    required_T: list
    det_target: float
    det_predicted: float | None
    passed: bool


@dataclass
class CriterionReport:
    det_time: DetTimeVerdict
    anisotropy: MajorizationVerdict | None = None
    unital_anisotropy: MajorizationVerdict | None = None
    non_unitality: list = field(default_factory=list)
    T: float | None = None
    overall: bool = False

    def failed_stages(self) -> list[str]:
        out = []
        if not self.det_time.passed:
            out.append("det_time")
        if self.anisotropy is not None and not self.anisotropy.passed:
            out.append("anisotropy")
        if self.unital_anisotropy is not None and not self.unital_anisotropy.passed:
            out.append("unital_anisotropy")
        out.extend(f"non_unitality_{m.n}" for m in self.non_unitality if not m.passed)
        return out

    def to_dict(self) -> dict:
        data = asdict(self)
        data["schema"] = 1
        data["failed"] = self.failed_stages()
        return data

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), default=_json_default, **kwargs)


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"{type(obj).__name__} is not JSON serializable")


# -- anisotropy -------------------------------------------------------------------


def _check_time(target: SuperOpMatrix, drift: GeneratorSpec, T: float):
    det = np.linalg.det(target.mat)
    if det > 0 and abs(np.log(det) - trace_integral(drift, T)) > 1e-6 * max(1.0, abs(np.log(det))):
        warnings.warn(
            f"T={T} does not satisfy the determinant condition for this target", stacklevel=3
        )


def _anisotropy(mat: np.ndarray, rates: np.ndarray, tol: float) -> MajorizationVerdict:
    log_sigma = log_singular_values(mat)
    if np.any(np.isneginf(log_sigma)):
        if np.any(np.isneginf(rates)):
            return MajorizationVerdict(True, "boundary", [])
        _, slacks = majorizes(rates, np.where(np.isneginf(log_sigma), -1e300, log_sigma), tol)
        return MajorizationVerdict.from_slacks(False, slacks)
    # partial sums of log sigma inherit the SVD's rounding error
    allowance = tol + np.cumsum(_log_sigma_error(mat))
    allowance[-1] = tol + float(np.sum(_log_sigma_error(mat)))
    ok, slacks = majorizes(rates, log_sigma, allowance)
    return MajorizationVerdict.from_slacks(ok, slacks)


def check_anisotropy(
    target: SuperOpMatrix, drift: GeneratorSpec, T: float, tol: float = DEFAULT_TOL
) -> MajorizationVerdict:
    """``log sigma(M)`` must be majorized by the integrated decay rates."""
    _check_time(target, drift, T)
    return _anisotropy(target.mat, integrated_rates(drift, T), tol)


def check_unital_anisotropy(
    target: SuperOpMatrix, drift: GeneratorSpec, T: float, tol: float = DEFAULT_TOL
) -> MajorizationVerdict:
    """Unital-block version; needs trace-preserving target and drift."""
    if not (target.is_trace_preserving() and drift.is_trace_preserving()):
        raise ValidationError("unital anisotropy needs trace-preserving target and drift")
    _check_time(target, drift, T)
    return _anisotropy(target.tilde, integrated_rates(drift, T, unital=True), tol)


# -- non-unitality ----------------------------------------------------------------


@dataclass
class NonunitalityBound:
    n: int
    value: float
    converged: bool
    rho: np.ndarray | None = None
    method: str = "multistart"


def _mpow(rho: np.ndarray, k: int) -> np.ndarray:
    return np.linalg.matrix_power(rho, k) if k > 0 else np.eye(rho.shape[0], dtype=complex)


class _MomentProblem:
    """``max Tr[rho^n]`` s.t. ``Tr[rho^(n-1) G(rho)] = 0`` with ``rho = AA^+/Tr AA^+``."""

    def __init__(self, G: SuperOpMatrix, n: int):
        self.d = G.d
        self.n = n
        liou = to_liouville(G)
        norm = np.linalg.norm(liou, 2) or 1.0
        self.S = liou / norm
        self.Sdag = self.S.conj().T

    def unpack(self, z):
        d = self.d
        A = z[: d * d].reshape(d, d) + 1j * z[d * d :].reshape(d, d)
        P = A @ A.conj().T
        t = float(np.real(np.trace(P)))
        return A, P / t, t

    def _apply(self, S, X):
        d = self.d
        return (S @ X.reshape(-1)).reshape(d, d)

    def _pullback(self, A, rho, t, Gamma):
        M = (Gamma @ A - np.real(np.trace(Gamma @ rho)) * A) / t
        return 2.0 * np.concatenate([M.real.ravel(), M.imag.ravel()])

    def objective(self, z):
        A, rho, t = self.unpack(z)
        val = np.real(np.trace(_mpow(rho, self.n)))
        grad = self._pullback(A, rho, t, self.n * _mpow(rho, self.n - 1))
        return -val, -grad

    def constraint(self, z):
        _, rho, _ = self.unpack(z)
        return float(np.real(np.trace(_mpow(rho, self.n - 1) @ self._apply(self.S, rho))))

    def constraint_jac(self, z):
        A, rho, t = self.unpack(z)
        n = self.n
        Grho = self._apply(self.S, rho)
        Gamma = self._apply(self.Sdag, _mpow(rho, n - 1))
        for k in range(n - 1):
            Gamma = Gamma + _mpow(rho, n - 2 - k) @ Grho @ _mpow(rho, k)
        Gamma = 0.5 * (Gamma + Gamma.conj().T)
        return self._pullback(A, rho, t, Gamma)

    def pack(self, rho: np.ndarray, rng) -> np.ndarray:
        w, U = np.linalg.eigh(0.5 * (rho + rho.conj().T))
        A = U @ np.diag(np.sqrt(np.clip(w, 0, None))) + 1e-3 * (
            rng.standard_normal((self.d, self.d)) + 1j * rng.standard_normal((self.d, self.d))
        )
        return np.concatenate([A.real.ravel(), A.imag.ravel()])


def _starting_points(problem: _MomentProblem, G: SuperOpMatrix, n_starts: int, rng):
    d = G.d
    starts = []
    for x in fixed_points(G):
        rho = from_bloch(x)
        if np.min(np.linalg.eigvalsh(rho)) > -1e-9:
            starts.append(problem.pack(rho, rng))
    for k in range(d):
        e = np.zeros((d, d), complex)
        e[k, k] = 1.0
        starts.append(problem.pack(0.9 * e + 0.1 * np.eye(d) / d, rng))
    while len(starts) < n_starts:
        starts.append(rng.standard_normal(2 * d * d))
    return starts[:max(n_starts, 1)]


def _solve_segment(G: SuperOpMatrix, n: int, n_starts: int, rng, feas_tol: float):
    problem = _MomentProblem(G, n)
    best_val, best_rho, any_converged = float(G.d) ** (1 - n), np.eye(G.d) / G.d, False
    cons = {"type": "eq", "fun": problem.constraint, "jac": problem.constraint_jac}
    for z0 in _starting_points(problem, G, n_starts, rng):
        try:
            res = minimize(
                problem.objective, z0, jac=True, method="SLSQP", constraints=[cons],
                options={"maxiter": 500, "ftol": 1e-14},
            )
        except (ValueError, np.linalg.LinAlgError):
            continue
        _, rho, _ = problem.unpack(res.x)
        viol = abs(problem.constraint(res.x))
        val = float(np.real(np.trace(_mpow(rho, n))))
        if viol <= feas_tol and res.success:
            any_converged = True
        if viol <= feas_tol and val > best_val:
            best_val, best_rho = val, rho
    return min(best_val, 1.0), best_rho, any_converged


def nonunitality_bound(
    drift: GeneratorSpec,
    n: int,
    n_starts: int = 32,
    rng_seed=0,
    feas_tol: float = 1e-10,
) -> NonunitalityBound:
    """Largest ``Tr[rho^n]`` over states with ``Tr[rho^(n-1) G_t(rho)] = 0`` for some segment.

    Solved by multi-start SLSQP on a Cholesky-like parametrization; the
    segment maxima are combined with ``max``.  If no start converges the best
    feasible value is still returned (a lower estimate of the supremum) with
    ``converged=False``; for qubits the ray oracle :func:`qubit_ray_bound` is
    used as a fallback in that case.
    """
    d = drift.d
    if not 2 <= n <= d:
        raise ValidationError(f"moment order {n} outside [2, {d}]")
    if not drift.is_trace_preserving():
        raise ValidationError("non-unitality bound needs a trace-preserving drift")
    rng = np.random.default_rng(rng_seed)
    best = NonunitalityBound(n, float(d) ** (1 - n), True, np.eye(d) / d)
    converged = True
    seen = []
    for G in drift.generators:
        if any(G is g or np.array_equal(G.mat, g.mat) for g in seen):
            continue
        seen.append(G)
        val, rho, ok = _solve_segment(G, n, n_starts, rng, feas_tol)
        converged &= ok
        if val > best.value:
            best = NonunitalityBound(n, val, True, rho)
    best.converged = converged
    if not converged and d == 2:
        log.warning("moment solver did not converge; using the qubit ray oracle")
        best = NonunitalityBound(n, qubit_ray_bound(drift), True, None, method="qubit-ray")
    return best


def _sphere_directions(n_dirs: int) -> np.ndarray:
    k = np.arange(n_dirs) + 0.5
    phi = np.arccos(1 - 2 * k / n_dirs)
    theta = np.pi * (1 + 5**0.5) * k
    dirs = np.stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)], axis=1)
    axes = np.vstack([np.eye(3), -np.eye(3)])
    return np.vstack([dirs, axes])


def qubit_ray_bound(drift: GeneratorSpec, n_dirs: int = 200_000) -> float:
    """Qubit purity bound by scanning rays of the Bloch ball.

    Along a ray ``r = s u`` the constraint ``x.G x = 0`` is quadratic in ``s``
    with roots ``0`` and ``s* = -x0 (v.u) / (u.G~ u)``; the largest admissible
    ``s`` over a dense direction grid gives the supremum of the purity.
    """
    if drift.d != 2:
        raise ValidationError("the ray oracle is only defined for qubits")
    dirs = _sphere_directions(n_dirs)
    x0 = 1.0 / np.sqrt(2.0)
    rmax = 1.0 / np.sqrt(2.0)
    best = 0.0
    for G in drift.generators:
        lin = x0 * dirs @ G.v
        quad = np.einsum("ki,ij,kj->k", dirs, G.tilde, dirs)
        flat = (np.abs(quad) < 1e-13) & (np.abs(lin) < 1e-13)
        with np.errstate(divide="ignore", invalid="ignore"):
            root = np.where(np.abs(quad) > 1e-13, -lin / quad, np.inf)
        ok = (root > 0) & (root <= rmax * (1 + 1e-12))
        r = np.max(np.concatenate([root[ok], [0.0]]))
        if np.any(flat):
            r = rmax
        best = max(best, min(r, rmax))
    return 0.5 + best**2


def image_of_maximally_mixed(target: SuperOpMatrix) -> np.ndarray:
    d = target.d
    return target.apply_state(np.eye(d) / d)


def moments(target: SuperOpMatrix) -> dict[int, float]:
    rho = image_of_maximally_mixed(target)
    return {n: float(np.real(np.trace(_mpow(rho, n)))) for n in range(2, target.d + 1)}


def compute_bounds(drift: GeneratorSpec, n_starts: int = 32, rng_seed=0) -> dict[int, NonunitalityBound]:
    return {n: nonunitality_bound(drift, n, n_starts, rng_seed) for n in range(2, drift.d + 1)}


def check_nonunitality(
    target: SuperOpMatrix,
    drift: GeneratorSpec,
    bounds: dict | None = None,
    tol: float = DEFAULT_TOL,
) -> list[MomentVerdict]:
    """Compare ``Tr[M(1/d)^n]`` with the drift's non-unitality bound, n = 2..d."""
    bounds = bounds if bounds is not None else compute_bounds(drift)
    out = []
    for n, moment in moments(target).items():
        b = bounds[n]
        if moment <= b.value + tol:
            out.append(MomentVerdict(n, moment, b.value, True, "pass"))
        elif not b.converged:
            out.append(MomentVerdict(n, moment, b.value, True, "inconclusive"))
        else:
            out.append(MomentVerdict(n, moment, b.value, False, "fail"))
    return out


# -- generator simulation ----------------------------------------------------------


def check_generator_simulation(
    Gprime: SuperOpMatrix,
    G0: SuperOpMatrix,
    mode: Literal["exact-time", "rescaled"] = "exact-time",
    unital: bool = False,
    tol: float = DEFAULT_TOL,
) -> MajorizationVerdict:
    """Can ``G0`` plus control effectively simulate ``Gprime``?

    ``exact-time`` requires ``lambda(G'+G'^T) < lambda(G0+G0^T)`` (so equal
    traces); ``rescaled`` first divides each spectrum by ``|Tr|``.  With
    ``unital=True`` the unital blocks are compared.
    """
    if Gprime.d != G0.d:
        raise ValidationError("dimension mismatch")
    if unital and not (Gprime.is_trace_preserving() and G0.is_trace_preserving()):
        raise ValidationError("the unital comparison needs trace-preserving generators")
    mp = Gprime.tilde if unital else Gprime.mat
    m0 = G0.tilde if unital else G0.mat
    lp = np.linalg.eigvalsh(mp + mp.T)
    l0 = np.linalg.eigvalsh(m0 + m0.T)
    if mode == "rescaled":
        tp, t0 = np.trace(mp), np.trace(m0)
        if abs(tp) < 1e-14 or abs(t0) < 1e-14:
            raise InvalidInputError("rescaled comparison undefined for a traceless generator")
        lp, l0 = lp / abs(tp), l0 / abs(t0)
    elif mode != "exact-time":
        raise ValidationError(f"unknown mode {mode!r}")
    ok, slacks = majorizes(l0, lp, tol)
    return MajorizationVerdict.from_slacks(ok, slacks)


# -- entropy production ------------------------------------------------------------


def entropy_rate_bound(L: SuperOpMatrix, rho) -> float:
    """Control-independent lower bound on ``dS/dt`` for a unital Lindbladian.

    ``(lambda_1 / 2) ||rho - 1/d||_2^2`` where ``lambda_1`` is the smallest
    decay-rate magnitude of the unital block's Hermitian part.
    """
    if L.kind != "generator" or not L.is_trace_preserving():
        raise InvalidInputError("entropy bound needs a trace-preserving generator")
    if not L.is_unital():
        raise InvalidInputError("entropy bound needs a unital generator")
    rho = np.asarray(rho, dtype=complex)
    lam1 = float(np.min(np.abs(unital_decay_rates(L).values)))
    dev = rho - np.eye(L.d) / L.d
    return 0.5 * lam1 * float(np.real(np.sum(np.abs(dev) ** 2)))


def von_neumann_entropy(rho) -> float:
    w = np.linalg.eigvalsh(np.asarray(rho, dtype=complex))
    w = w[w > 1e-300]
    return float(-np.sum(w * np.log(w)))


# -- aggregate ----------------------------------------------------------------------


def full_report(
    target: SuperOpMatrix,
    drift: GeneratorSpec,
    tol: float = DEFAULT_TOL,
    bounds: dict | None = None,
) -> CriterionReport:
    """Run every map-level criterion; ``overall`` is true when nothing excludes the target."""
    if target.kind != "channel" or target.d != drift.d:
        raise ValidationError("target must be a channel of the drift's dimension")
    det = float(np.linalg.det(target.mat))
    times = required_time(target, drift)
    if not times:
        return CriterionReport(DetTimeVerdict([], det, None, False))
    tp = target.is_trace_preserving() and drift.is_trace_preserving()
    if tp and bounds is None:
        bounds = compute_bounds(drift)
    report = None
    for T in times:
        det_pred = float(np.exp(trace_integral(drift, T)))
        dv = DetTimeVerdict(times, det, det_pred, True)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            aniso = check_anisotropy(target, drift, T, tol)
            unital = (
                check_unital_anisotropy(target, drift, T, tol)
                if tp
                else MajorizationVerdict(True, "not-applicable", [])
            )
        nonu = check_nonunitality(target, drift, bounds, tol) if tp else []
        overall = aniso.passed and unital.passed and all(m.passed for m in nonu)
        candidate = CriterionReport(dv, aniso, unital, nonu, float(T), overall)
        if report is None or overall:
            report = candidate
        if overall:
            break
    return report
