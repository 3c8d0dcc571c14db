"""Lindbladians and drift families: GAD, dephasing, depolarizing, Lambda system, random."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import expm, null_space

from reachcert.bloch import HermitianBasis, SuperOpMatrix, from_liouville, make_basis
from reachcert.errors import InvalidInputError, ValidationError

SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)  # |0><1|, |0> is the ground state
SIGMA_PLUS = SIGMA_MINUS.T.copy()
SIGMA_Z = np.diag([1.0, -1.0]).astype(complex)


@dataclass(frozen=True, eq=False)
class LindbladData:
    """Drift Hamiltonian plus jump operators with their rates."""

    H: np.ndarray
    jumps: tuple = ()  # of (L, gamma)

    def __post_init__(self):
        H = np.asarray(self.H, dtype=complex)
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise ValidationError(f"Hamiltonian must be square, got {H.shape}")
        if np.max(np.abs(H - H.conj().T)) > 1e-10:
            raise ValidationError("Hamiltonian is not Hermitian")
        jumps = []
        for L, gamma in self.jumps:
            L = np.asarray(L, dtype=complex)
            if L.shape != H.shape:
                raise ValidationError(f"jump operator shape {L.shape} does not match {H.shape}")
            if not np.isfinite(gamma) or gamma < 0:
                raise InvalidInputError(f"invalid rate {gamma}: rates must be nonnegative")
            jumps.append((L, float(gamma)))
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "jumps", tuple(jumps))

    @property
    def d(self) -> int:
        return self.H.shape[0]

    def scaled(self, factor: float) -> "LindbladData":
        return LindbladData(factor * self.H, tuple((L, factor * g) for L, g in self.jumps))


def hamiltonian_liouville(H) -> np.ndarray:
    H = np.asarray(H, dtype=complex)
    eye = np.eye(H.shape[0])
    return -1j * (np.kron(H, eye) - np.kron(eye, H.T))


def dissipator_liouville(L, gamma: float) -> np.ndarray:
    L = np.asarray(L, dtype=complex)
    eye = np.eye(L.shape[0])
    LdL = L.conj().T @ L
    return gamma * (np.kron(L, L.conj()) - 0.5 * np.kron(LdL, eye) - 0.5 * np.kron(eye, LdL.T))


def hamiltonian_generator(H, basis: HermitianBasis | None = None) -> SuperOpMatrix:
    """Bloch matrix of ``rho -> -i[H, rho]`` (real antisymmetric)."""
    H = np.asarray(H, dtype=complex)
    basis = basis or make_basis(H.shape[0])
    return from_liouville(hamiltonian_liouville(H), basis, "generator")


def lindbladian(data: LindbladData, basis: HermitianBasis | None = None) -> SuperOpMatrix:
    basis = basis or make_basis(data.d)
    liou = hamiltonian_liouville(data.H)
    for L, gamma in data.jumps:
        if gamma < 0:
            raise InvalidInputError(f"negative rate {gamma}")
        liou = liou + dissipator_liouville(L, gamma)
    return from_liouville(liou, basis, "generator")


def control_basis(d: int, basis: HermitianBasis | None = None) -> list[SuperOpMatrix]:
    """Hamiltonian generators of every traceless basis element (spans su(d))."""
    basis = basis or make_basis(d)
    return [hamiltonian_generator(s, basis) for s in basis.elements[1:]]


@dataclass(frozen=True, eq=False)
class GeneratorSpec:
    """Piecewise-constant drift: ordered ``(duration, generator)`` segments.

    The last segment is taken to continue past ``total_time`` when a query
    (e.g. a required evolution time) needs it; a time-independent drift is a
    single segment.
    """

    segments: tuple = field(default_factory=tuple)

    def __post_init__(self):
        segs = []
        for tau, G in self.segments:
            tau = float(tau)
            if not np.isfinite(tau) or tau <= 0:
                raise ValidationError(f"segment durations must be positive, got {tau}")
            if not isinstance(G, SuperOpMatrix) or G.kind != "generator":
                raise ValidationError("segments must hold generator-kind SuperOpMatrix values")
            segs.append((tau, G))
        if not segs:
            raise ValidationError("a GeneratorSpec needs at least one segment")
        if len({G.d for _, G in segs}) != 1:
            raise ValidationError("all segments must share one dimension")
        object.__setattr__(self, "segments", tuple(segs))

    @classmethod
    def constant(cls, G: SuperOpMatrix, total_time: float = 1.0) -> "GeneratorSpec":
        return cls(((total_time, G),))

    @property
    def d(self) -> int:
        return self.segments[0][1].d

    @property
    def total_time(self) -> float:
        return float(sum(tau for tau, _ in self.segments))

    @property
    def generators(self) -> list[SuperOpMatrix]:
        return [G for _, G in self.segments]

    @property
    def durations(self) -> list[float]:
        return [tau for tau, _ in self.segments]

    def breakpoints(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.durations)])

    def pieces(self, T: float | None = None):
        """Yield ``(duration, generator)`` covering ``[0, T]``, extending the last segment."""
        T = self.total_time if T is None else float(T)
        t = 0.0
        for k, (tau, G) in enumerate(self.segments):
            last = k == len(self.segments) - 1
            step = T - t if last else min(tau, T - t)
            if step <= 0:
                break
            yield step, G
            t += step

    def generator_at(self, t: float) -> SuperOpMatrix:
        idx = np.searchsorted(self.breakpoints()[1:], t, side="right")
        return self.segments[min(idx, len(self.segments) - 1)][1]

    def is_trace_preserving(self, tol: float = 1e-9) -> bool:
        return all(G.is_trace_preserving(tol) for G in self.generators)

    def channel(self, T: float | None = None) -> SuperOpMatrix:
        """Uncontrolled dynamical map over ``[0, T]``."""
        mat = np.eye(self.d**2)
        for tau, G in self.pieces(T):
            mat = expm(G.mat * tau) @ mat
        return SuperOpMatrix(self.d, mat, "channel")


# -- drift families -------------------------------------------------------------


def gad(gamma: float, p: float) -> LindbladData:
    """Generalized amplitude damping with total rate ``gamma`` and fixed-point purity ``p``."""
    if not 0.5 <= p <= 1.0:
        raise InvalidInputError(f"steady-state purity {p} outside [1/2, 1]")
    if gamma <= 0:
        raise InvalidInputError(f"rate {gamma} must be positive")
    z = np.sqrt(2.0 * p - 1.0)
    down = gamma * (1.0 + z) / 2.0
    up = gamma * (1.0 - z) / 2.0
    return LindbladData(np.zeros((2, 2)), ((SIGMA_MINUS, down), (SIGMA_PLUS, up)))


def amplitude_damping(gamma: float) -> LindbladData:
    return gad(gamma, 1.0)


def dephasing(gamma: float) -> LindbladData:
    """Qubit dephasing ``gamma (Z rho Z - rho)``."""
    if gamma < 0:
        raise InvalidInputError(f"invalid rate {gamma}")
    return LindbladData(np.zeros((2, 2)), ((SIGMA_Z, gamma),))


def depolarizing(gamma: float, d: int = 2) -> LindbladData:
    """``gamma (Tr[rho] 1/d - rho)``; the unital block is ``-gamma * identity``."""
    if gamma < 0:
        raise InvalidInputError(f"invalid rate {gamma}")
    jumps = []
    for i in range(d):
        for j in range(d):
            E = np.zeros((d, d), complex)
            E[i, j] = 1.0
            jumps.append((E, gamma / d))
    return LindbladData(np.zeros((d, d)), tuple(jumps))


def lambda_system(gamma1: float, gamma2: float) -> LindbladData:
    """Qutrit whose top level ``|3>`` decays to ``|1>`` and ``|2>``; skew is gamma1/gamma2."""
    if gamma1 <= 0 or gamma2 <= 0:
        raise InvalidInputError("Lambda-system rates must be positive")
    L1 = np.zeros((3, 3), complex)
    L1[0, 2] = 1.0
    L2 = np.zeros((3, 3), complex)
    L2[1, 2] = 1.0
    return LindbladData(np.zeros((3, 3)), ((L1, gamma1), (L2, gamma2)))


def lambda_skew(skew: float, total_rate: float = 1.0) -> LindbladData:
    """Lambda system with ``gamma1/gamma2 = skew`` and ``gamma1 + gamma2 = total_rate``."""
    gamma2 = total_rate / (1.0 + skew)
    return lambda_system(total_rate - gamma2, gamma2)


def fixed_points(G: SuperOpMatrix) -> np.ndarray:
    """Unit-trace Bloch vectors spanning the kernel of a trace-preserving generator."""
    ker = null_space(G.mat, rcond=1e-10)
    out = []
    for col in ker.T:
        if abs(col[0]) > 1e-12:
            out.append(col / (col[0] * np.sqrt(G.d)))
    return np.array(out)


# -- random sampling ------------------------------------------------------------


def _ginibre(rng: np.random.Generator, d: int) -> np.ndarray:
    return (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2.0)


def _rescale_to_radius(data: LindbladData, scale: float) -> LindbladData:
    G = lindbladian(data).mat
    radius = np.max(np.abs(np.linalg.eigvalsh(0.5 * (G + G.T))))
    if radius == 0:
        return data
    return data.scaled(scale / radius)


def random_lindbladian(
    d: int,
    scale: float = 1.0,
    rng_seed=None,
    n_jumps: int | None = None,
    hamiltonian_weight: float = 1.0,
) -> LindbladData:
    """Random GKS Lindbladian: Gaussian Hamiltonian plus Ginibre jump operators.

    Everything is rescaled so that the Hermitian part of the Bloch generator
    has spectral radius ``scale``.
    """
    if d < 2:
        raise ValidationError(f"invalid dimension {d}")
    rng = np.random.default_rng(rng_seed)
    n_jumps = d * d - 1 if n_jumps is None else n_jumps
    X = _ginibre(rng, d)
    H = hamiltonian_weight * (X + X.conj().T) / 2.0
    jumps = tuple((_ginibre(rng, d), 1.0) for _ in range(n_jumps))
    return _rescale_to_radius(LindbladData(H, jumps), scale)


def random_unital_lindbladian(
    d: int,
    scale: float = 1.0,
    rng_seed=None,
    n_jumps: int | None = None,
    hamiltonian_weight: float = 1.0,
) -> LindbladData:
    """As :func:`random_lindbladian` but with Hermitian jumps, hence unital."""
    rng = np.random.default_rng(rng_seed)
    n_jumps = d * d - 1 if n_jumps is None else n_jumps
    X = _ginibre(rng, d)
    H = hamiltonian_weight * (X + X.conj().T) / 2.0
    jumps = []
    for _ in range(n_jumps):
        Y = _ginibre(rng, d)
        jumps.append(((Y + Y.conj().T) / 2.0, 1.0))
    return _rescale_to_radius(LindbladData(H, tuple(jumps)), scale)


def random_markovian_channel(
    d: int,
    n_segments: int = 1,
    rng_seed=None,
    scale: float = 1.0,
    duration_range: tuple[float, float] = (0.1, 1.0),
    unital: bool = False,
    **lindblad_kwargs,
) -> tuple[GeneratorSpec, SuperOpMatrix]:
    """Time-dependent Markovian channel from ``n_segments`` random Lindbladians.

    Segment durations are uniform on ``duration_range``; ``unital=True`` draws
    Hermitian jump operators instead of Ginibre ones.
    """
    if n_segments < 1:
        raise ValidationError("n_segments must be >= 1")
    rng = np.random.default_rng(rng_seed)
    basis = make_basis(d)
    segments = []
    mat = np.eye(d * d)
    for _ in range(n_segments):
        seed = int(rng.integers(2**63 - 1))
        sampler = random_unital_lindbladian if unital else random_lindbladian
        G = lindbladian(sampler(d, scale, seed, **lindblad_kwargs), basis)
        tau = float(rng.uniform(*duration_range))
        segments.append((tau, G))
        mat = expm(G.mat * tau) @ mat
    return GeneratorSpec(tuple(segments)), SuperOpMatrix(d, mat, "channel")


# -- descriptors ----------------------------------------------------------------

FAMILIES = ("gad", "lambda", "dephasing", "depolarizing", "amplitude_damping", "random", "random_unital")


def from_descriptor(desc: dict) -> LindbladData:
    """Build Lindblad data from ``{"family": ..., params...}``."""
    if not isinstance(desc, dict) or "family" not in desc:
        raise ValidationError("model descriptor needs a 'family' field")
    params = {k: v for k, v in desc.items() if k not in ("family", "t", "time")}
    family = desc["family"]
    try:
        if family == "gad":
            return gad(float(params.get("gamma", 1.0)), float(params.get("p", 1.0)))
        if family == "amplitude_damping":
            return amplitude_damping(float(params.get("gamma", 1.0)))
        if family == "dephasing":
            return dephasing(float(params.get("gamma", 1.0)))
        if family == "depolarizing":
            return depolarizing(float(params.get("gamma", 1.0)), int(params.get("d", 2)))
        if family == "lambda":
            if "skew" in params:
                return lambda_skew(float(params["skew"]), float(params.get("total_rate", 1.0)))
            return lambda_system(float(params.get("gamma1", 1.0)), float(params.get("gamma2", 1.0)))
        if family in ("random", "random_unital"):
            fn = random_lindbladian if family == "random" else random_unital_lindbladian
            return fn(int(params.get("d", 2)), float(params.get("scale", 1.0)), int(params.get("seed", 0)))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"bad parameters for family {family!r}: {exc}") from exc
    raise ValidationError(f"unknown model family {family!r}; expected one of {FAMILIES}")


def parse_descriptor(text: str) -> dict:
    """Parse ``family:key=val,key=val`` or a JSON object into a descriptor dict."""
    text = text.strip()
    if text.startswith("{"):
        try:
            desc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"invalid JSON descriptor: {exc}") from exc
        if not isinstance(desc, dict):
            raise ValidationError("descriptor JSON must be an object")
        return desc
    family, _, rest = text.partition(":")
    desc: dict = {"family": family.strip()}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, sep, value = item.partition("=")
        if not sep:
            raise ValidationError(f"expected key=value in descriptor, got {item!r}")
        try:
            desc[key.strip()] = float(value) if any(c in value for c in ".eE") else int(value)
        except ValueError:
            desc[key.strip()] = value.strip()
    return desc


def drift_from_descriptor(desc: dict, total_time: float = 1.0) -> GeneratorSpec:
    return GeneratorSpec.constant(lindbladian(from_descriptor(desc)), total_time)


def stack_segments(pairs: Sequence[tuple[float, LindbladData]]) -> GeneratorSpec:
    return GeneratorSpec(tuple((tau, lindbladian(data)) for tau, data in pairs))
