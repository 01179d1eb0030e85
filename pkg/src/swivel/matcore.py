"""Dense functional calculus for positive semi-definite operators.

Matrices are plain ``numpy`` complex arrays. A :class:`PsdOperator` caches the
spectral decomposition so that real, complex and logarithmic powers can be
taken on the support without repeating the eigensolve.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .config import TOL
from .errors import (
    EigensolverFailure,
    InvalidExponent,
    NegativeSpectrum,
    NonHermitian,
    ShapeMismatch,
    SvdFailure,
)

#: The operator-norm exponent. IEEE infinity is exact, so it can be compared with ``==``.
INF = math.inf


def as_matrix(M) -> np.ndarray:
    A = np.asarray(M, dtype=np.complex128)
    if A.ndim != 2:
        raise ShapeMismatch(f"expected a 2-d matrix, got shape {A.shape}")
    if A.size == 0:
        raise ShapeMismatch("empty matrix")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    return A


def hermitize(M) -> np.ndarray:
    """Check approximate Hermiticity and return the symmetrized ``(M + M^H)/2``."""
    A = as_matrix(M)
    if A.shape[0] != A.shape[1]:
        raise ShapeMismatch(f"expected a square matrix, got shape {A.shape}")
    scale = max(1.0, float(np.max(np.abs(A))))
    asym = float(np.max(np.abs(A - A.conj().T)))
    if asym > TOL.symmetry_tol * scale:
        raise NonHermitian(f"max |M - M^H| = {asym:.3e} exceeds {TOL.symmetry_tol:.1e} * {scale:.3e}")
    return 0.5 * (A + A.conj().T)


def _eigh(H: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    try:
        w, U = np.linalg.eigh(H)
    except np.linalg.LinAlgError as exc:
        raise EigensolverFailure(str(exc)) from exc
    return w, U


@dataclass(frozen=True, eq=False)
class PsdOperator:
    """Positive semi-definite operator held as ``U diag(eigenvalues) U^H``.

    Eigenvalues are sorted in descending order; ``support_cutoff`` is the
    absolute threshold at or below which an eigenvalue is treated as zero.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    support_cutoff: float
    source: np.ndarray | None = None  # the symmetrized input, kept for exact serialization

    def __post_init__(self):
        for arr in (self.eigenvalues, self.eigenvectors, self.source):
            if arr is not None:
                arr.setflags(write=False)

    @classmethod
    def from_matrix(cls, M, support_cutoff_rel: float | None = None) -> "PsdOperator":
        return spectral_decompose(M, support_cutoff_rel)

    @property
    def dim(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def support_mask(self) -> np.ndarray:
        return self.eigenvalues > self.support_cutoff

    @property
    def rank(self) -> int:
        return int(np.count_nonzero(self.support_mask))

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def lambda_min_support(self) -> float:
        """Smallest eigenvalue on the support (0.0 for the zero operator)."""
        ev = self.eigenvalues[self.support_mask]
        return float(ev[-1]) if ev.size else 0.0

    def matrix(self) -> np.ndarray:
        """The operator as a dense matrix (the original input when available)."""
        if self.source is not None:
            return self.source.copy()
        return self.reconstruct()

    def reconstruct(self) -> np.ndarray:
        U = self.eigenvectors
        return (U * self.eigenvalues) @ U.conj().T

    def apply(self, f_values: np.ndarray) -> np.ndarray:
        """``U diag(f_values) U^H`` for per-eigenvalue function values."""
        U = self.eigenvectors
        return (U * f_values) @ U.conj().T

    def trace(self) -> float:
        return float(np.sum(self.eigenvalues))


def spectral_decompose(M, support_cutoff_rel: float | None = None) -> PsdOperator:
    """Decompose a Hermitian PSD matrix.

    Eigenvalues within ``hermitian_eps * max(1, lambda_max)`` below zero are
    clamped to zero; anything more negative raises :class:`NegativeSpectrum`.
    """
    if support_cutoff_rel is None:
        support_cutoff_rel = TOL.support_cutoff_rel
    H = hermitize(M)
    w, U = _eigh(H)
    w = w[::-1].copy()
    U = U[:, ::-1].copy()
    lam_max = float(w[0])
    floor = TOL.hermitian_eps * max(1.0, lam_max)
    if w[-1] < -floor:
        raise NegativeSpectrum(f"eigenvalue {w[-1]:.3e} below -{floor:.1e}")
    w = np.clip(w, 0.0, None)
    cutoff = support_cutoff_rel * max(float(w[0]), 0.0)
    return PsdOperator(w, U, cutoff, H)


def real_power(C: PsdOperator, a: float) -> np.ndarray:
    """``C^a`` with the power taken on the support only (zero on the kernel)."""
    lam = C.eigenvalues
    f = np.zeros_like(lam)
    mask = C.support_mask
    f[mask] = lam[mask] ** a
    return C.apply(f)


def complex_power(C: PsdOperator, a: float, t: float, q: float) -> np.ndarray:
    """``C^{(a + i t)/q}`` on the support."""
    return complex_power_batch(C, a, np.array([t], dtype=float), q)[0]


def complex_power_batch(C: PsdOperator, a: float, ts: np.ndarray, q: float) -> np.ndarray:
    """Stack of ``C^{(a + i t)/q}`` for every ``t`` in ``ts``; shape ``(len(ts), n, n)``."""
    if q < 1:
        raise InvalidExponent(f"q must be >= 1, got {q}")
    ts = np.asarray(ts, dtype=float)
    mask = C.support_mask
    lam = C.eigenvalues[mask]
    U = C.eigenvectors[:, mask]
    loglam = np.log(lam)
    mod = np.exp(loglam * (a / q))
    phase = np.exp(1j * np.outer(ts, loglam) / q)
    diag = phase * mod
    return np.einsum("ik,tk,jk->tij", U, diag, U.conj(), optimize=True)


@dataclass(frozen=True)
class SupportLog:
    matrix: np.ndarray
    rank_deficient: bool


def log_on_support(C: PsdOperator) -> SupportLog:
    """Matrix logarithm on the support; flags (does not raise on) rank deficiency."""
    mask = C.support_mask
    f = np.zeros_like(C.eigenvalues)
    f[mask] = np.log(C.eigenvalues[mask])
    return SupportLog(C.apply(f), rank_deficient=not bool(np.all(mask)))


def matrix_exp(H) -> np.ndarray:
    """Exponential of a Hermitian matrix via its eigendecomposition."""
    A = hermitize(H)
    w, U = _eigh(A)
    return (U * np.exp(w)) @ U.conj().T


def singular_values(X) -> np.ndarray:
    A = as_matrix(X)
    try:
        return np.linalg.svd(A, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise SvdFailure(str(exc)) from exc


def _check_exponent(p: float) -> None:
    if not (p >= 1):
        raise InvalidExponent(f"Schatten exponent must be >= 1 or inf, got {p}")


def schatten_from_sv(s: np.ndarray, p: float) -> np.ndarray:
    """Schatten p-norm(s) from singular values along the last axis."""
    if p == INF:
        return np.max(s, axis=-1) if s.shape[-1] else np.zeros(s.shape[:-1])
    top = np.max(s, axis=-1, keepdims=True)
    safe = np.where(top > 0, top, 1.0)
    # scale by the largest singular value so huge/tiny entries don't overflow under ** p
    return safe[..., 0] * np.sum((s / safe) ** p, axis=-1) ** (1.0 / p) * (top[..., 0] > 0)


def schatten_norm(X, p: float) -> float:
    """``(sum_i sigma_i^p)^(1/p)``; ``p = INF`` gives the largest singular value."""
    _check_exponent(p)
    return float(schatten_from_sv(singular_values(X), p))


def schatten_power(X, p: float) -> float:
    """``||X||_p^p = sum_i sigma_i^p`` for finite ``p``."""
    _check_exponent(p)
    if p == INF:
        raise InvalidExponent("||X||_p^p is undefined for p = inf")
    return float(np.sum(singular_values(X) ** p))


@dataclass(frozen=True)
class TensorShape:
    """Factor dimensions, first factor = slowest-varying index."""

    factor_dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.factor_dims)
        if not dims or any(d < 1 for d in dims):
            raise ShapeMismatch(f"factor dimensions must be positive, got {self.factor_dims}")
        object.__setattr__(self, "factor_dims", dims)

    @property
    def dim(self) -> int:
        return math.prod(self.factor_dims)

    def check(self, M: np.ndarray) -> None:
        if M.shape != (self.dim, self.dim):
            raise ShapeMismatch(f"matrix shape {M.shape} does not match tensor shape {self.factor_dims}")


def partial_trace(M, shape: TensorShape, traced: Iterable[int]) -> np.ndarray:
    """Trace out the factors with indices in ``traced``.

    Tracing every factor returns a 1x1 matrix holding ``Tr M``.
    """
    A = as_matrix(M)
    shape.check(A)
    dims = shape.factor_dims
    k = len(dims)
    traced = sorted(set(traced))
    if any(i < 0 or i >= k for i in traced):
        raise ShapeMismatch(f"factor index out of range for {k} factors: {traced}")
    kept = [i for i in range(k) if i not in traced]
    T = A.reshape(dims + dims)
    # einsum labels: row index i -> letter i, column index -> same letter if traced
    letters = "abcdefghijklmnopqrstuvwxyz"
    row = [letters[i] for i in range(k)]
    col = [letters[i] if i in traced else letters[k + i].upper() for i in range(k)]
    out = [row[i] for i in kept] + [col[i] for i in kept]
    R = np.einsum("".join(row) + "".join(col) + "->" + "".join(out), T)
    d = math.prod(dims[i] for i in kept)
    return R.reshape(d, d)


def embed(op, shape: TensorShape, factors: Sequence[int]) -> np.ndarray:
    """Lift an operator on the listed factors to the full space (identity elsewhere).

    ``factors`` must be increasing; ``op`` is indexed with the same factor order.
    """
    A = as_matrix(op)
    dims = shape.factor_dims
    factors = list(factors)
    if factors != sorted(set(factors)):
        raise ShapeMismatch(f"factor list must be strictly increasing, got {factors}")
    sub = [dims[i] for i in factors]
    if A.shape != (math.prod(sub), math.prod(sub)):
        raise ShapeMismatch(f"operator shape {A.shape} does not match factors {factors} of {dims}")
    rest = [i for i in range(len(dims)) if i not in factors]
    eye = np.eye(math.prod(dims[i] for i in rest), dtype=np.complex128)
    # op (x) I in the order (factors, rest), then permute axes back to natural order
    full = np.kron(A, eye).reshape([dims[i] for i in factors + rest] * 2)
    order = factors + rest
    inv = [order.index(i) for i in range(len(dims))]
    k = len(dims)
    full = full.transpose(inv + [k + j for j in inv])
    return full.reshape(shape.dim, shape.dim)


def random_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed unitary: QR of a complex Gaussian with the R-diagonal phase fix."""
    Z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / math.sqrt(2.0)
    Q, R = np.linalg.qr(Z)
    d = np.diagonal(R)
    ph = np.where(np.abs(d) > 0, d / np.abs(d), 1.0)
    return Q * ph
