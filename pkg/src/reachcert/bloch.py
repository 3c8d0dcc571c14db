"""Generalized Bloch representation of states, channels and generators.

Operators on ``C^d`` are expanded in an orthonormal Hermitian basis
``sigma_0 = 1/sqrt(d), sigma_1, ..., sigma_{d^2-1}`` so that states become real
vectors of length ``d**2`` and Hermiticity-preserving maps become real
``d**2 x d**2`` matrices.  The basis used throughout is the generalized
Gell-Mann family (symmetric, antisymmetric, then diagonal elements).

Vectorization convention: row-major, ``vec(A)[i*d + j] = A[i, j]``, hence
``vec(A X B) = kron(A, B.T) @ vec(X)``.
"""

from __future__ import annotations

import functools
import json
from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np

from reachcert.errors import NotTracePreservingError, ValidationError

HERMITICITY_TOL = 1e-10
TP_TOL = 1e-9

Kind = Literal["channel", "generator"]


@dataclass(frozen=True, eq=False)
class HermitianBasis:
    """Orthonormal Hermitian operator basis, identity element first."""

    d: int
    elements: np.ndarray  # shape (d**2, d, d), complex

    def __len__(self) -> int:
        return self.elements.shape[0]

    def __getitem__(self, i):
        return self.elements[i]

    @functools.cached_property
    def vec_matrix(self) -> np.ndarray:
        """Unitary ``d**2 x d**2`` matrix whose columns are ``vec(sigma_j)``."""
        return self.elements.reshape(len(self), -1).T.copy()

    def gram(self) -> np.ndarray:
        return np.einsum("iab,jba->ij", self.elements, self.elements)


def _gell_mann(d: int) -> np.ndarray:
    sym, asym, diag = [], [], []
    for j in range(d):
        for k in range(j + 1, d):
            s = np.zeros((d, d), complex)
            s[j, k] = s[k, j] = 1.0
            sym.append(s)
            a = np.zeros((d, d), complex)
            a[j, k] = -1j
            a[k, j] = 1j
            asym.append(a)
    for l in range(1, d):
        entries = np.zeros(d)
        entries[:l] = 1.0
        entries[l] = -l
        diag.append(np.sqrt(2.0 / (l * (l + 1))) * np.diag(entries).astype(complex))
    traceless = np.array(sym + asym + diag) / np.sqrt(2.0)
    identity = np.eye(d, dtype=complex)[None] / np.sqrt(d)
    return np.concatenate([identity, traceless])


@functools.lru_cache(maxsize=None)
def make_basis(d: int) -> HermitianBasis:
    """Normalized generalized Gell-Mann basis for dimension ``d``.

    For ``d = 2`` this is ``(1, X, Y, Z) / sqrt(2)``.
    """
    if not isinstance(d, (int, np.integer)) or d < 2:
        raise ValidationError(f"invalid dimension {d!r}: need an integer d >= 2")
    elements = _gell_mann(int(d))
    elements.setflags(write=False)
    return HermitianBasis(int(d), elements)


def _basis_for(d: int, basis: HermitianBasis | None) -> HermitianBasis:
    if basis is None:
        return make_basis(d)
    if basis.d != d:
        raise ValidationError(f"basis dimension {basis.d} does not match operator dimension {d}")
    return basis


def to_bloch(rho, basis: HermitianBasis | None = None) -> np.ndarray:
    """Real coordinates ``x_i = Tr[sigma_i rho]`` of a Hermitian operator."""
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {rho.shape}")
    if np.max(np.abs(rho - rho.conj().T), initial=0.0) > HERMITICITY_TOL:
        raise ValidationError("operator is not Hermitian")
    basis = _basis_for(rho.shape[0], basis)
    x = np.einsum("iab,ba->i", basis.elements, rho)
    return x.real.copy()


def from_bloch(x, basis: HermitianBasis | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    d = int(round(np.sqrt(x.shape[0])))
    if d * d != x.shape[0]:
        raise ValidationError(f"Bloch vector length {x.shape[0]} is not a perfect square")
    basis = _basis_for(d, basis)
    return np.einsum("i,iab->ab", x, basis.elements)


@dataclass(frozen=True, eq=False)
class UnitalDecomposition:
    tilde: np.ndarray
    v: np.ndarray

    def reassemble(self, kind: Kind = "channel") -> "SuperOpMatrix":
        n = self.tilde.shape[0] + 1
        d = int(round(np.sqrt(n)))
        mat = np.zeros((n, n))
        mat[0, 0] = 1.0 if kind == "channel" else 0.0
        mat[1:, 0] = self.v
        mat[1:, 1:] = self.tilde
        return SuperOpMatrix(d, mat, kind)


@dataclass(frozen=True, eq=False)
class SuperOpMatrix:
    """Real Bloch-picture matrix of a channel or a generator.

    Composition follows the operator order: ``(B @ A)`` applies ``A`` first.
    """

    d: int
    mat: np.ndarray
    kind: Kind = "channel"

    def __post_init__(self):
        mat = np.asarray(self.mat)
        if np.iscomplexobj(mat):
            scale = max(1.0, np.max(np.abs(mat.real), initial=0.0))
            if np.max(np.abs(mat.imag), initial=0.0) > HERMITICITY_TOL * scale:
                raise ValidationError("superoperator matrix has complex entries")
            mat = mat.real
        mat = np.array(mat, dtype=float)
        n = self.d * self.d
        if mat.shape != (n, n):
            raise ValidationError(f"expected a {n}x{n} matrix for d={self.d}, got {mat.shape}")
        if self.kind not in ("channel", "generator"):
            raise ValidationError(f"unknown kind {self.kind!r}")
        mat.setflags(write=False)
        object.__setattr__(self, "mat", mat)

    @property
    def n(self) -> int:
        return self.d * self.d

    @property
    def tilde(self) -> np.ndarray:
        return self.mat[1:, 1:]

    @property
    def v(self) -> np.ndarray:
        return self.mat[1:, 0]

    def is_trace_preserving(self, tol: float = TP_TOL) -> bool:
        top = np.zeros(self.n)
        if self.kind == "channel":
            top[0] = 1.0
        return bool(np.max(np.abs(self.mat[0] - top)) <= tol)

    def is_unital(self, tol: float = TP_TOL) -> bool:
        return bool(np.max(np.abs(self.v), initial=0.0) <= tol)

    def apply(self, x) -> np.ndarray:
        """Act on a Bloch vector."""
        return self.mat @ np.asarray(x, dtype=float)

    def apply_state(self, rho, basis: HermitianBasis | None = None) -> np.ndarray:
        basis = _basis_for(self.d, basis)
        return from_bloch(self.apply(to_bloch(rho, basis)), basis)

    def det(self) -> float:
        return float(np.linalg.det(self.mat))

    def trace(self) -> float:
        return float(np.trace(self.mat))

    def __matmul__(self, other: "SuperOpMatrix") -> "SuperOpMatrix":
        if not isinstance(other, SuperOpMatrix):
            return NotImplemented
        if other.d != self.d:
            raise ValidationError("dimension mismatch in composition")
        kind = "channel" if self.kind == other.kind == "channel" else "generator"
        return SuperOpMatrix(self.d, self.mat @ other.mat, kind)

    def scaled(self, factor: float) -> "SuperOpMatrix":
        return SuperOpMatrix(self.d, factor * self.mat, self.kind)

    def __add__(self, other: "SuperOpMatrix") -> "SuperOpMatrix":
        if self.kind != "generator" or other.kind != "generator":
            raise ValidationError("only generators can be added")
        return SuperOpMatrix(self.d, self.mat + other.mat, "generator")

    def allclose(self, other: "SuperOpMatrix", atol: float = 1e-10) -> bool:
        return self.d == other.d and bool(np.allclose(self.mat, other.mat, atol=atol, rtol=0))

    def to_dict(self) -> dict:
        return {"d": self.d, "kind": self.kind, "mat": self.mat.ravel().tolist()}

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data: dict) -> "SuperOpMatrix":
        try:
            d = int(data["d"])
            kind = data.get("kind", "channel")
            flat = np.asarray(data["mat"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed superoperator record: {exc}") from exc
        if flat.size != d**4:
            raise ValidationError(f"expected {d**4} matrix entries for d={d}, got {flat.size}")
        return cls(d, flat.reshape(d * d, d * d), kind)

    @classmethod
    def from_json(cls, text: str) -> "SuperOpMatrix":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"invalid JSON: {exc}") from exc
        return cls.from_dict(data)

    @classmethod
    def identity(cls, d: int) -> "SuperOpMatrix":
        return cls(d, np.eye(d * d), "channel")

    @classmethod
    def zero_generator(cls, d: int) -> "SuperOpMatrix":
        return cls(d, np.zeros((d * d, d * d)), "generator")


def superop_of_map(
    action: Callable[[np.ndarray], np.ndarray],
    basis: HermitianBasis,
    kind: Kind = "channel",
) -> SuperOpMatrix:
    """Matrix ``mat[i, j] = Tr[sigma_i action(sigma_j)]`` of a linear map."""
    images = np.array([np.asarray(action(s), dtype=complex) for s in basis.elements])
    mat = np.einsum("iab,jba->ij", basis.elements, images)
    if np.max(np.abs(mat.imag)) > HERMITICITY_TOL * max(1.0, np.max(np.abs(mat.real))):
        raise ValidationError("map is not Hermiticity-preserving")
    return SuperOpMatrix(basis.d, mat.real, kind)


def from_liouville(liouville, basis: HermitianBasis, kind: Kind = "channel") -> SuperOpMatrix:
    """Convert a row-major Liouville matrix ``vec(X) -> vec(Phi(X))``."""
    B = basis.vec_matrix
    mat = B.conj().T @ np.asarray(liouville) @ B
    # relative threshold: rounding in the basis change scales with the entries
    if np.max(np.abs(mat.imag)) > HERMITICITY_TOL * max(1.0, np.max(np.abs(mat.real))):
        raise ValidationError("map is not Hermiticity-preserving")
    return SuperOpMatrix(basis.d, mat.real, kind)


def to_liouville(S: SuperOpMatrix, basis: HermitianBasis | None = None) -> np.ndarray:
    B = _basis_for(S.d, basis).vec_matrix
    return B @ S.mat @ B.conj().T


def unital_decompose(S: SuperOpMatrix, tol: float = TP_TOL) -> UnitalDecomposition:
    """Split a trace-preserving matrix into its unital block and translation."""
    if not S.is_trace_preserving(tol):
        raise NotTracePreservingError("first row is not that of a trace-preserving map")
    return UnitalDecomposition(S.tilde.copy(), S.v.copy())


def dual(S: SuperOpMatrix) -> SuperOpMatrix:
    return SuperOpMatrix(S.d, S.mat.T, S.kind)
