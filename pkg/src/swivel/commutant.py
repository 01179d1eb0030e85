"""Unitaries commuting with a PSD operator.

A unitary commutes with ``C`` exactly when it is block diagonal over the
eigenspaces of ``C``, so a swivel is parametrized by one small unitary per
eigenvalue cluster: ``V = sum_k B_k U_k B_k^H`` with ``B_k`` the eigenvector
columns of cluster ``k``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .config import TOL
from .errors import NonUnitaryBlock, ShapeMismatch
from .matcore import PsdOperator, as_matrix, random_unitary


@dataclass(frozen=True)
class EigenvalueClustering:
    clusters: tuple[tuple[int, int], ...]  # half-open [start, stop) ranges into the descending spectrum
    representatives: tuple[float, ...]
    tolerance: float

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(stop - start for start, stop in self.clusters)


def cluster_eigenvalues(C: PsdOperator, rel_tol: float | None = None) -> EigenvalueClustering:
    """Greedy sweep: start a new cluster when the gap to the previous eigenvalue exceeds tau."""
    if rel_tol is None:
        rel_tol = TOL.cluster_rel_tol
    if rel_tol <= 0:
        raise ValueError("rel_tol must be positive")
    lam = C.eigenvalues
    tau = rel_tol * max(1.0, float(lam[0]))
    return _sweep(lam, tau)


def _sweep(lam: np.ndarray, tau: float) -> EigenvalueClustering:
    bounds = [0]
    for i in range(1, len(lam)):
        if abs(lam[i - 1] - lam[i]) > tau:
            bounds.append(i)
    bounds.append(len(lam))
    clusters = tuple((bounds[k], bounds[k + 1]) for k in range(len(bounds) - 1))
    reps = tuple(float(np.mean(lam[a:b])) for a, b in clusters)
    return EigenvalueClustering(clusters, reps, tau)


@dataclass(frozen=True, eq=False)
class CommutantStructure:
    source: PsdOperator
    clustering: EigenvalueClustering
    block_bases: tuple[np.ndarray, ...]

    @property
    def dim(self) -> int:
        return self.source.dim

    @property
    def block_sizes(self) -> tuple[int, ...]:
        return self.clustering.sizes

    @property
    def real_dimension(self) -> int:
        """Real dimension of the commuting unitary group, ``sum_k m_k^2``."""
        return sum(m * m for m in self.block_sizes)

    @property
    def is_scalar(self) -> bool:
        """True when every block is 1x1, i.e. the commutant is a torus of phases."""
        return all(m == 1 for m in self.block_sizes)


def commutant_structure(C: PsdOperator, rel_tol: float | None = None) -> CommutantStructure:
    clustering = cluster_eigenvalues(C, rel_tol)
    U = C.eigenvectors
    bases = tuple(U[:, a:b].copy() for a, b in clustering.clusters)
    return CommutantStructure(C, clustering, bases)


def identity_blocks(S: CommutantStructure) -> list[np.ndarray]:
    return [np.eye(m, dtype=np.complex128) for m in S.block_sizes]


def assemble_swivel(S: CommutantStructure, blocks: Sequence[np.ndarray]) -> np.ndarray:
    """Build ``V = sum_k B_k U_k B_k^H`` from per-cluster unitaries ``U_k``."""
    if len(blocks) != len(S.block_bases):
        raise ShapeMismatch(f"expected {len(S.block_bases)} blocks, got {len(blocks)}")
    V = np.zeros((S.dim, S.dim), dtype=np.complex128)
    for B, Uk in zip(S.block_bases, blocks):
        Uk = as_matrix(Uk)
        m = B.shape[1]
        if Uk.shape != (m, m):
            raise ShapeMismatch(f"block of shape {Uk.shape} for a cluster of size {m}")
        if np.max(np.abs(Uk.conj().T @ Uk - np.eye(m))) > TOL.unitary_tol:
            raise NonUnitaryBlock(f"block of size {m} is not unitary within {TOL.unitary_tol:.0e}")
        V += B @ Uk @ B.conj().T
    return V


def assemble_unchecked(S: CommutantStructure, blocks: Sequence[np.ndarray]) -> np.ndarray:
    """Like :func:`assemble_swivel` without validation; for optimizer inner loops."""
    V = np.zeros((S.dim, S.dim), dtype=np.complex128)
    for B, Uk in zip(S.block_bases, blocks):
        V += B @ Uk @ B.conj().T
    return V


def random_swivel(S: CommutantStructure, seed: int | np.random.Generator) -> list[np.ndarray]:
    """One Haar-random unitary per cluster; reproducible for an integer seed."""
    rng = np.random.default_rng(seed)
    return [random_unitary(m, rng) for m in S.block_sizes]


def verify_commutation(V, C: PsdOperator) -> float:
    """Relative commutator residual ``||VC - CV||_F / max(1, ||C||_F)``."""
    A = as_matrix(V)
    if A.shape != (C.dim, C.dim):
        raise ShapeMismatch(f"swivel shape {A.shape} vs operator dimension {C.dim}")
    M = C.matrix()
    return float(np.linalg.norm(A @ M - M @ A) / max(1.0, np.linalg.norm(M)))


def skew_basis(m: int) -> list[np.ndarray]:
    """Orthonormal (Frobenius) basis of the ``m^2``-dimensional Hermitian matrices.

    The optimizer moves along ``exp(i H)`` for ``H`` in this basis.
    """
    basis = []
    for j in range(m):
        E = np.zeros((m, m), dtype=np.complex128)
        E[j, j] = 1.0
        basis.append(E)
    s = 1.0 / np.sqrt(2.0)
    for j in range(m):
        for k in range(j + 1, m):
            E = np.zeros((m, m), dtype=np.complex128)
            E[j, k] = E[k, j] = s
            basis.append(E)
            F = np.zeros((m, m), dtype=np.complex128)
            F[j, k] = -1j * s
            F[k, j] = 1j * s
            basis.append(F)
    return basis


def unitary_exp(H: np.ndarray) -> np.ndarray:
    """``exp(i H)`` for Hermitian ``H``."""
    if H.shape == (1, 1):
        return np.exp(1j * H.real)
    w, U = np.linalg.eigh(0.5 * (H + H.conj().T))
    return (U * np.exp(1j * w)) @ U.conj().T
