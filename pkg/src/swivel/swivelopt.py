"""Chained Schatten norms with unitary swivels and their maximization.

The central quantity is ``||C_1^{1/p} V_1 C_2^{1/p} V_2 ... C_L^{1/p} V_L||_p^p``
where each ``V_i`` commutes with ``C_i``. Two of the swivels never affect the
value: ``V_1`` commutes with ``C_1^{1/p}`` and can be pulled to the far left,
and ``V_L`` sits on the far right; both are unitary factors the norm ignores.
Optimization and grid search therefore only move ``V_2 .. V_{L-1}``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .commutant import (
    CommutantStructure,
    assemble_swivel,
    assemble_unchecked,
    commutant_structure,
    identity_blocks,
    random_swivel,
    skew_basis,
    unitary_exp,
    verify_commutation,
)
from .config import TOL
from .errors import (
    CommutationViolation,
    GridTooLarge,
    InvalidExponent,
    NonScalarCommutant,
    ShapeMismatch,
    StructureMismatch,
)
from .matcore import (
    PsdOperator,
    TensorShape,
    embed,
    partial_trace,
    real_power,
    schatten_power,
    spectral_decompose,
)

DEFAULT_P_GRID = (1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0)


@dataclass(eq=False)
class ChainInstance:
    operators: list[PsdOperator]
    label: str = ""
    seed: int = 0
    spec: Any = None  # generator spec when the instance came from instgen

    def __post_init__(self):
        if not self.operators:
            raise StructureMismatch("a chain needs at least one operator")
        dims = {C.dim for C in self.operators}
        if len(dims) != 1:
            raise StructureMismatch(f"operators have differing dimensions {sorted(dims)}")

    @property
    def length(self) -> int:
        return len(self.operators)

    @property
    def dim(self) -> int:
        return self.operators[0].dim

    @classmethod
    def from_matrices(cls, matrices, label: str = "", seed: int = 0) -> "ChainInstance":
        return cls([spectral_decompose(M) for M in matrices], label, seed)


@dataclass(eq=False)
class SwivelAssignment:
    """Per chain position, one unitary block per eigenvalue cluster of that operator."""

    blocks: list[list[np.ndarray]]

    @classmethod
    def identity(cls, structures: Sequence[CommutantStructure]) -> "SwivelAssignment":
        return cls([identity_blocks(S) for S in structures])

    def matrices(self, structures: Sequence[CommutantStructure]) -> list[np.ndarray]:
        if len(structures) != len(self.blocks):
            raise StructureMismatch(f"{len(self.blocks)} swivels for {len(structures)} operators")
        return [assemble_swivel(S, b) for S, b in zip(structures, self.blocks)]

    def copy(self) -> "SwivelAssignment":
        return SwivelAssignment([[b.copy() for b in pos] for pos in self.blocks])


@dataclass
class OptimizerConfig:
    restarts: int = 8
    max_iters: int = 500
    step_init: float = 0.1
    conv_tol_rel: float = 1e-9
    seed: int = 0
    fd_step: float = 1e-5

    def __post_init__(self):
        if self.restarts < 1 or self.max_iters < 1:
            raise ValueError("restarts and max_iters must be positive")
        if self.step_init <= 0 or self.conv_tol_rel <= 0 or self.fd_step <= 0:
            raise ValueError("step_init, conv_tol_rel and fd_step must be positive")


@dataclass(eq=False)
class OptResult:
    value: float
    best_swivels: SwivelAssignment
    per_restart_values: np.ndarray
    converged: bool
    iterations: int
    history: list[float] = field(default_factory=list, repr=False)

    @property
    def restart_spread(self) -> float:
        v = self.per_restart_values
        return float(np.max(v) - np.min(v)) if v.size else 0.0


def structures_of(inst: ChainInstance, rel_tol: float | None = None) -> list[CommutantStructure]:
    return [commutant_structure(C, rel_tol) for C in inst.operators]


def _check_p(p: float) -> None:
    if not (p >= 1) or math.isinf(p):
        raise InvalidExponent(f"chain exponent must be a finite real >= 1, got {p}")


def chain_product(powers: Sequence[np.ndarray], swivels: Sequence[np.ndarray]) -> np.ndarray:
    X = powers[0] @ swivels[0]
    for P, V in zip(powers[1:], swivels[1:]):
        X = X @ P @ V
    return X


def chain_norm(
    inst: ChainInstance,
    swivels: SwivelAssignment | None,
    p: float,
    structures: Sequence[CommutantStructure] | None = None,
) -> float:
    """``||C_1^{1/p} V_1 ... C_L^{1/p} V_L||_p^p``; ``swivels=None`` means all identities."""
    _check_p(p)
    powers = [real_power(C, 1.0 / p) for C in inst.operators]
    if swivels is None:
        Vs = [np.eye(inst.dim, dtype=np.complex128)] * inst.length
    else:
        if structures is None:
            structures = structures_of(inst)
        if len(swivels.blocks) != inst.length:
            raise StructureMismatch(f"{len(swivels.blocks)} swivels for a chain of length {inst.length}")
        try:
            Vs = swivels.matrices(structures)
        except ShapeMismatch as exc:
            raise StructureMismatch(str(exc)) from exc
    return schatten_power(chain_product(powers, Vs), p)


# --------------------------------------------------------------------------
# generic blockwise ascent over products of matrices with swivel slots


class _SlotProblem:
    """Objective ``||build(V_1, ..., V_k)||_p^p`` over commutant-constrained slots."""

    def __init__(
        self,
        structures: Sequence[CommutantStructure],
        build: Callable[[list[np.ndarray]], np.ndarray],
        p: float,
        active: Sequence[int],
    ):
        self.structures = list(structures)
        self.build = build
        self.p = p
        self.active = list(active)
        self.evaluations = 0

    def value(self, blocks: list[list[np.ndarray]]) -> float:
        self.evaluations += 1
        Vs = [assemble_unchecked(S, b) for S, b in zip(self.structures, blocks)]
        s = np.linalg.svd(self.build(Vs), compute_uv=False)
        return float(np.sum(s**self.p))


def _ascend(problem: _SlotProblem, start: list[list[np.ndarray]], cfg: OptimizerConfig):
    blocks = [[b.copy() for b in pos] for pos in start]
    f = problem.value(blocks)
    history = [f]
    coords = [(i, k) for i in problem.active for k in range(len(problem.structures[i].block_sizes))]
    if not coords:
        return blocks, f, True, 0, history
    bases = {m: skew_basis(m) for m in {problem.structures[i].block_sizes[k] for i, k in coords}}
    steps = {c: cfg.step_init for c in coords}
    h = cfg.fd_step
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        f_cycle = f
        for i, k in coords:
            U = blocks[i][k]
            basis = bases[U.shape[0]]
            grad = np.empty(len(basis))
            for j, E in enumerate(basis):
                blocks[i][k] = U @ unitary_exp(h * E)
                fp = problem.value(blocks)
                blocks[i][k] = U @ unitary_exp(-h * E)
                fm = problem.value(blocks)
                grad[j] = (fp - fm) / (2 * h)
            blocks[i][k] = U
            if not np.any(grad):
                continue
            direction = sum(g * E for g, E in zip(grad, basis))
            eta = steps[(i, k)]
            while eta > 1e-14:
                trial = U @ unitary_exp(eta * direction)
                blocks[i][k] = trial
                f_new = problem.value(blocks)
                if f_new > f:
                    f = f_new
                    history.append(f)
                    steps[(i, k)] = min(eta * 2.0, 1e6)
                    break
                eta *= 0.5
            else:
                blocks[i][k] = U
                steps[(i, k)] = cfg.step_init
        if f - f_cycle <= cfg.conv_tol_rel * max(abs(f), 1e-300):
            converged = True
            break
    return blocks, f, converged, it, history


def _run_restarts(
    problem: _SlotProblem,
    cfg: OptimizerConfig,
    extra_starts: Sequence[list[list[np.ndarray]]] = (),
) -> tuple[list[list[np.ndarray]], np.ndarray, bool, int, list[float]]:
    starts = [[identity_blocks(S) for S in problem.structures]]
    for r in range(1, cfg.restarts):
        seed = cfg.seed + r
        starts.append(
            [
                random_swivel(S, np.random.default_rng([seed, i])) if i in problem.active else identity_blocks(S)
                for i, S in enumerate(problem.structures)
            ]
        )
    starts.extend(extra_starts)
    best = None
    values = []
    all_converged = True
    total_iters = 0
    for start in starts:
        blocks, f, conv, iters, hist = _ascend(problem, start, cfg)
        values.append(f)
        all_converged &= conv
        total_iters += iters
        # strict > keeps the lowest restart index on ties
        if best is None or f > best[1]:
            best = (blocks, f, hist)
    return best[0], np.array(values), all_converged, total_iters, best[2]


def active_positions(length: int) -> list[int]:
    """Chain positions whose swivel can change the norm (all but the first and last)."""
    return list(range(1, length - 1))


def maximize_over_swivels(inst: ChainInstance, p: float, cfg: OptimizerConfig | None = None) -> OptResult:
    """Blockwise Riemannian ascent with finite-difference tangent gradients.

    Restart 0 starts from identity swivels, the rest from Haar-random blocks
    seeded by ``cfg.seed + r``. The returned value is attained by the returned
    swivels, so it is a certified lower bound on the maximum.
    """
    cfg = cfg or OptimizerConfig()
    _check_p(p)
    structures = structures_of(inst)
    powers = [real_power(C, 1.0 / p) for C in inst.operators]

    def build(Vs):
        return chain_product(powers, Vs)

    problem = _SlotProblem(structures, build, p, active_positions(inst.length))
    blocks, values, converged, iters, hist = _run_restarts(problem, cfg)
    best = SwivelAssignment(blocks)
    value = chain_norm(inst, best, p, structures)
    return OptResult(value, best, values, converged, iters, hist)


def _phase_grid_search(
    evaluate_batch: Callable[[np.ndarray], np.ndarray],
    n_free: int,
    grid_points: int,
    budget: int,
    refine: bool,
    chunk: int = 65536,
) -> float:
    total = grid_points**n_free
    if total > budget:
        raise GridTooLarge(f"{grid_points}^{n_free} = {total} grid points exceeds budget {budget}")
    if n_free == 0:
        return float(evaluate_batch(np.zeros((1, 0)))[0])
    axis = 2 * np.pi * np.arange(grid_points) / grid_points
    best_val = -np.inf
    best_phi = None
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk))
        digits = np.stack(np.unravel_index(idx, (grid_points,) * n_free), axis=1)
        phis = axis[digits]
        vals = evaluate_batch(phis)
        j = int(np.argmax(vals))
        if vals[j] > best_val:
            best_val, best_phi = float(vals[j]), phis[j]
    if not refine:
        return best_val
    # zoom: repeatedly re-grid a box of +-1 current cell around the incumbent
    width = 2 * np.pi / grid_points
    sub = 9 if n_free <= 2 else 5
    offsets = np.array(list(itertools.product(np.linspace(-1.0, 1.0, sub), repeat=n_free)))
    while width > 1e-9:
        phis = best_phi + width * offsets
        vals = evaluate_batch(phis)
        j = int(np.argmax(vals))
        if vals[j] > best_val:
            best_val, best_phi = float(vals[j]), phis[j]
        width *= 0.5
    return best_val


def brute_force_phase_grid(
    inst: ChainInstance,
    p: float,
    grid_points: int = 720,
    *,
    refine: bool = False,
    budget: int = 2_000_000,
) -> float:
    """Exhaustive grid over per-eigenvector swivel phases (scalar commutants only).

    Per operator the phase of the first eigenvector is fixed to 0, and the
    first and last swivels are fixed to the identity since they cannot change
    the norm. With ``refine=True`` the best grid cell is further searched by
    successively finer local grids.
    """
    _check_p(p)
    structures = structures_of(inst)
    for i, S in enumerate(structures):
        if not S.is_scalar:
            raise NonScalarCommutant(f"operator {i} has eigenvalue clusters of sizes {S.block_sizes}")
    powers = [real_power(C, 1.0 / p) for C in inst.operators]
    active = active_positions(inst.length)
    n = inst.dim
    n_free = len(active) * (n - 1)
    U = [C.eigenvectors for C in inst.operators]

    def evaluate_batch(phis: np.ndarray) -> np.ndarray:
        G = phis.shape[0]
        X = np.broadcast_to(powers[0], (G, n, n))
        col = 0
        for i in range(1, inst.length):
            if i - 1 in active:
                ph = np.concatenate([np.zeros((G, 1)), phis[:, col : col + n - 1]], axis=1)
                col += n - 1
                Ui = U[i - 1]
                V = np.einsum("ik,gk,jk->gij", Ui, np.exp(1j * ph), Ui.conj())
                X = X @ V
            X = X @ powers[i]
        s = np.linalg.svd(X, compute_uv=False)
        return np.sum(s**p, axis=-1)

    return _phase_grid_search(evaluate_batch, n_free, grid_points, budget, refine)


def sweep_p(
    inst: ChainInstance, p_grid: Sequence[float], cfg: OptimizerConfig | None = None
) -> list[tuple[float, OptResult]]:
    """Maximize at each ``p``, then cross-seed: every ``p`` also tries the other maximizers."""
    cfg = cfg or OptimizerConfig()
    p_grid = [float(p) for p in p_grid]
    if any(b < a for a, b in zip(p_grid, p_grid[1:])):
        raise ValueError("p grid must be ascending")
    structures = structures_of(inst)
    results = [maximize_over_swivels(inst, p, cfg) for p in p_grid]
    out = []
    for p, res in zip(p_grid, results):
        best_val, best_sw = res.value, res.best_swivels
        for other in results:
            if other is res:
                continue
            v = chain_norm(inst, other.best_swivels, p, structures)
            if v > best_val:
                best_val, best_sw = v, other.best_swivels
        out.append(
            (p, OptResult(best_val, best_sw, res.per_restart_values, res.converged, res.iterations, res.history))
        )
    return out


def oracle_sweep(inst: ChainInstance, p_grid: Sequence[float], grid_points: int = 720, refine: bool = True) -> list[float]:
    return [brute_force_phase_grid(inst, p, grid_points, refine=refine) for p in p_grid]


# --------------------------------------------------------------------------
# tripartite marginal chain  rho_AC^{1/p} V rho_C^{-1/p} rho_BC^{1/p}


@dataclass(frozen=True, eq=False)
class Marginals:
    shape: TensorShape
    rho_ac: PsdOperator
    rho_bc: PsdOperator
    rho_c: PsdOperator


def marginals(rho: PsdOperator, shape: TensorShape) -> Marginals:
    if len(shape.factor_dims) != 3:
        raise ShapeMismatch(f"expected three factors (A, B, C), got {shape.factor_dims}")
    M = rho.matrix()
    shape.check(M)
    return Marginals(
        shape,
        spectral_decompose(partial_trace(M, shape, [1])),
        spectral_decompose(partial_trace(M, shape, [0])),
        spectral_decompose(partial_trace(M, shape, [0, 1])),
    )


def _marginal_factors(m: Marginals, p: float) -> tuple[np.ndarray, np.ndarray, int]:
    """Return (left, right, dim_AB) with the chain equal to ``left (I_AB (x) V) right``."""
    shape = m.shape
    left = embed(real_power(m.rho_ac, 1.0 / p), shape, [0, 2])
    right = embed(real_power(m.rho_c, -1.0 / p), shape, [2]) @ embed(real_power(m.rho_bc, 1.0 / p), shape, [1, 2])
    a, b, _ = shape.factor_dims
    return left, right, a * b


def marginal_chain_value(rho: PsdOperator, shape: TensorShape, V_C, p: float) -> float:
    """``||rho_AC^{1/p} V_C rho_C^{-1/p} rho_BC^{1/p}||_p^p`` with every factor embedded in A(x)B(x)C."""
    _check_p(p)
    m = marginals(rho, shape)
    V = np.asarray(V_C, dtype=np.complex128)
    c = shape.factor_dims[2]
    if V.shape != (c, c):
        raise ShapeMismatch(f"V_C has shape {V.shape}, factor C has dimension {c}")
    residual = verify_commutation(V, m.rho_c)
    if residual > TOL.commutation_tol:
        raise CommutationViolation(f"V_C commutator residual {residual:.2e} exceeds {TOL.commutation_tol:.0e}")
    left, right, dab = _marginal_factors(m, p)
    return schatten_power(left @ np.kron(np.eye(dab), V) @ right, p)


def marginal_chain_maximize(
    rho: PsdOperator, shape: TensorShape, p: float, cfg: OptimizerConfig | None = None
) -> OptResult:
    cfg = cfg or OptimizerConfig()
    _check_p(p)
    m = marginals(rho, shape)
    S = commutant_structure(m.rho_c)
    left, right, dab = _marginal_factors(m, p)
    eye = np.eye(dab)

    def build(Vs):
        return left @ np.kron(eye, Vs[0]) @ right

    problem = _SlotProblem([S], build, p, [0])
    blocks, values, converged, iters, hist = _run_restarts(problem, cfg)
    best = SwivelAssignment(blocks)
    V = assemble_swivel(S, blocks[0])
    value = marginal_chain_value(rho, shape, V, p)
    return OptResult(value, best, values, converged, iters, hist)


def marginal_phase_grid(
    rho: PsdOperator, shape: TensorShape, p: float, grid_points: int = 720, *, refine: bool = False
) -> float:
    """Grid oracle over the swivel phases on factor C (distinct spectrum of rho_C only)."""
    _check_p(p)
    m = marginals(rho, shape)
    S = commutant_structure(m.rho_c)
    if not S.is_scalar:
        raise NonScalarCommutant(f"rho_C has eigenvalue clusters of sizes {S.block_sizes}")
    left, right, dab = _marginal_factors(m, p)
    Uc = m.rho_c.eigenvectors
    c = Uc.shape[0]
    eye = np.eye(dab)

    def evaluate_batch(phis):
        ph = np.concatenate([np.zeros((phis.shape[0], 1)), phis], axis=1)
        V = np.einsum("ik,gk,jk->gij", Uc, np.exp(1j * ph), Uc.conj())
        big = np.stack([np.kron(eye, v) for v in V])
        s = np.linalg.svd(left @ big @ right, compute_uv=False)
        return np.sum(s**p, axis=-1)

    return _phase_grid_search(evaluate_batch, c - 1, grid_points, 10**6, refine)
