import math

import numpy as np
import pytest
import scipy.linalg as sla

from swivel import swivelopt as so
from swivel.commutant import assemble_swivel, commutant_structure, random_swivel
from swivel.errors import CommutationViolation, GridTooLarge, NonScalarCommutant, ShapeMismatch, StructureMismatch
from swivel.instgen import GenSpec, generate
from swivel.matcore import TensorShape, spectral_decompose

from conftest import haar, random_pd, random_psd

FAST = so.OptimizerConfig(restarts=4, max_iters=300)


def _random_assignment(inst, seed):
    structs = so.structures_of(inst)
    r = np.random.default_rng(seed)
    return so.SwivelAssignment([random_swivel(S, r) for S in structs]), structs


def test_chain_norm_single_operator_is_trace(rng):
    inst = so.ChainInstance.from_matrices([random_psd(rng, 3)])
    sw, _ = _random_assignment(inst, 1)
    for p in (1.0, 2.5, 7.0):
        assert math.isclose(so.chain_norm(inst, sw, p), inst.operators[0].trace(), rel_tol=1e-12)


@pytest.mark.parametrize("p", [1.0, 2.0, 3.7])
def test_chain_norm_diagonal_pair(p):
    inst = so.ChainInstance.from_matrices([np.diag([1.0, 2.0]), np.diag([3.0, 4.0])])
    assert math.isclose(so.chain_norm(inst, None, p), 11.0, rel_tol=1e-12)


def test_chain_norm_frobenius_oracle(rng):
    mats = [random_psd(rng, 3), random_psd(rng, 3)]
    inst = so.ChainInstance.from_matrices(mats)
    sw, structs = _random_assignment(inst, 3)
    Vs = sw.matrices(structs)
    M = sla.sqrtm(mats[0]) @ Vs[0] @ sla.sqrtm(mats[1]) @ Vs[1]
    assert math.isclose(so.chain_norm(inst, sw, 2.0), np.trace(M.conj().T @ M).real, rel_tol=1e-9)


def test_first_and_last_swivels_do_not_matter(rng):
    inst = so.ChainInstance.from_matrices([random_pd(rng, 3) for _ in range(3)])
    structs = so.structures_of(inst)
    sw, _ = _random_assignment(inst, 5)
    moved = sw.copy()
    moved.blocks[0] = random_swivel(structs[0], 99)
    moved.blocks[2] = random_swivel(structs[2], 98)
    for p in (1.0, 3.0):
        assert math.isclose(so.chain_norm(inst, sw, p), so.chain_norm(inst, moved, p), rel_tol=1e-12)


def test_chain_norm_structure_mismatch(rng):
    inst = so.ChainInstance.from_matrices([random_pd(rng, 2), random_pd(rng, 2)])
    bad = so.SwivelAssignment([[np.eye(1)], [np.eye(1), np.eye(1)]])
    with pytest.raises(StructureMismatch):
        so.chain_norm(inst, bad, 2.0)
    with pytest.raises(StructureMismatch):
        so.ChainInstance.from_matrices([np.eye(2), np.eye(3)])


def test_maximize_single_operator(rng):
    inst = so.ChainInstance.from_matrices([random_psd(rng, 3)])
    res = so.maximize_over_swivels(inst, 2.0, FAST)
    assert res.value == pytest.approx(inst.operators[0].trace(), rel=1e-12)
    assert res.converged and res.iterations <= 1


def test_maximize_scalar_operators():
    cs = [0.5, 2.0, 3.0]
    inst = so.ChainInstance.from_matrices([c * np.eye(3) for c in cs])
    res = so.maximize_over_swivels(inst, 2.0, FAST)
    assert res.value == pytest.approx(np.prod(cs) * 3, rel=1e-10)


def test_maximize_diagonal_distinct_matches_grid():
    # diagonal operators all commute: every swivel is diagonal and the value is fixed
    inst = so.ChainInstance.from_matrices([np.diag([1.0, 2.0, 3.0]), np.diag([2.0, 0.5, 1.5]), np.diag([1.0, 4.0, 0.2])])
    for p in (1.0, 2.0, 4.0):
        grid = so.brute_force_phase_grid(inst, p, 60)
        assert so.maximize_over_swivels(inst, p, FAST).value == pytest.approx(grid, rel=1e-6)


def test_maximize_matches_refined_grid_generic():
    inst = generate(GenSpec("pd", dim=3, length=3, seed=8))
    for p in (1.5, 4.0):
        grid = so.brute_force_phase_grid(inst, p, 120, refine=True)
        assert so.maximize_over_swivels(inst, p).value == pytest.approx(grid, rel=1e-6)


def test_lower_bound_soundness_and_monotone_history():
    inst = generate(GenSpec("pd", dim=3, length=4, seed=3))
    res = so.maximize_over_swivels(inst, 2.0, FAST)
    assert so.chain_norm(inst, res.best_swivels, 2.0) == pytest.approx(res.value, rel=1e-10)
    assert res.value == pytest.approx(np.max(res.per_restart_values), rel=1e-10)
    assert all(b >= a for a, b in zip(res.history, res.history[1:]))
    assert res.value >= so.chain_norm(inst, None, 2.0)


def test_maximize_with_degenerate_blocks(rng):
    U = haar(rng, 3)
    degenerate = (U * np.array([2.0, 2.0, 0.5])) @ U.conj().T
    inst = so.ChainInstance.from_matrices([random_pd(rng, 3), degenerate, random_pd(rng, 3)])
    assert so.structures_of(inst)[1].block_sizes == (2, 1)
    res = so.maximize_over_swivels(inst, 3.0, FAST)
    V = res.best_swivels.matrices(so.structures_of(inst))[1]
    assert np.max(np.abs(V.conj().T @ V - np.eye(3))) <= 1e-9
    assert res.value >= so.chain_norm(inst, None, 3.0)
    # a crude random search never beats the optimizer
    structs = so.structures_of(inst)
    best_random = max(
        so.chain_norm(inst, so.SwivelAssignment([random_swivel(S, np.random.default_rng([s, i])) for i, S in enumerate(structs)]), 3.0)
        for s in range(200)
    )
    assert res.value >= best_random - 1e-9


def test_unitary_conjugation_invariance(rng):
    inst = generate(GenSpec("pd", dim=2, length=3, seed=21))
    W = haar(rng, 2)
    conj = so.ChainInstance.from_matrices([W @ C.matrix() @ W.conj().T for C in inst.operators])
    a = so.maximize_over_swivels(inst, 2.0).value
    b = so.maximize_over_swivels(conj, 2.0).value
    assert b == pytest.approx(a, rel=1e-7)


# ---------------------------------------------------------------- grid oracle


def test_grid_single_and_commuting(rng):
    single = so.ChainInstance.from_matrices([random_pd(rng, 2)])
    assert so.brute_force_phase_grid(single, 2.0, 7) == pytest.approx(single.operators[0].trace(), rel=1e-12)
    diag = so.ChainInstance.from_matrices([np.diag([1.0, 2.0]), np.diag([3.0, 0.5]), np.diag([2.0, 1.0])])
    assert so.brute_force_phase_grid(diag, 3.0, 50) == pytest.approx(so.chain_norm(diag, None, 3.0), rel=1e-12)


# reference values from the 720- and 1440-point grids and the refined grid (seed 42, L=3, n=2)
GRID_REFERENCE = {
    2.0: (4.883011476044077, 4.883017639589045, 4.883018149903734),
    4.0: (4.534098114253932, 4.534105829447261, 4.534106468231943),
}


@pytest.mark.parametrize("p", sorted(GRID_REFERENCE))
def test_grid_reference_values(p):
    inst = generate(GenSpec("pd", dim=2, length=3, seed=42))
    coarse, fine, refined = GRID_REFERENCE[p]
    assert so.brute_force_phase_grid(inst, p, 720) == pytest.approx(coarse, rel=1e-12)
    assert so.brute_force_phase_grid(inst, p, 1440) == pytest.approx(fine, rel=1e-12)
    assert abs(fine - coarse) / fine <= 1e-5
    assert so.brute_force_phase_grid(inst, p, 720, refine=True) == pytest.approx(refined, rel=1e-10)
    opt = so.maximize_over_swivels(inst, p).value
    assert opt >= coarse * (1 - 1e-6)
    assert opt <= fine * (1 + 1e-5)
    assert opt == pytest.approx(refined, rel=1e-6)


def test_grid_guards(rng):
    U = haar(rng, 2)
    inst = so.ChainInstance.from_matrices([random_pd(rng, 2), np.eye(2), random_pd(rng, 2)])
    with pytest.raises(NonScalarCommutant):
        so.brute_force_phase_grid(inst, 2.0, 10)
    big = generate(GenSpec("pd", dim=3, length=3, seed=1))
    with pytest.raises(GridTooLarge):
        so.brute_force_phase_grid(big, 2.0, 2000)


# ---------------------------------------------------------------- sweeps


def test_sweep_flat_cases(rng):
    single = so.ChainInstance.from_matrices([random_pd(rng, 3)])
    ps = [1.0, 2.0, 4.0, 8.0]
    vals = [r.value for _, r in so.sweep_p(single, ps, FAST)]
    assert np.allclose(vals, single.operators[0].trace(), rtol=1e-12)
    fam = generate(GenSpec("commutingFamily", dim=3, length=3, seed=4))
    vals = [r.value for _, r in so.sweep_p(fam, ps, FAST)]
    assert np.allclose(vals, vals[0], rtol=1e-9)


def test_sweep_matches_oracle_curve():
    inst = generate(GenSpec("pd", dim=2, length=3, seed=17))
    ps = [2.0, 3.0, 4.0, 6.0, 8.0]
    sweep = so.sweep_p(inst, ps)
    vals = [r.value for _, r in sweep]
    oracle = so.oracle_sweep(inst, ps)
    assert np.allclose(vals, oracle, rtol=1e-6)
    assert all(b <= a * (1 + 1e-6) for a, b in zip(oracle, oracle[1:]))
    with pytest.raises(ValueError):
        so.sweep_p(inst, [3.0, 2.0])


# ---------------------------------------------------------------- marginal chain


def _ptrace_loops(rho, dims, traced):
    k = len(dims)
    kept = [i for i in range(k) if i not in traced]
    dk = int(np.prod([dims[i] for i in kept]))
    out = np.zeros((dk, dk), dtype=complex)
    for r in np.ndindex(*dims):
        for c in np.ndindex(*dims):
            if all(r[i] == c[i] for i in traced):
                ri = np.ravel_multi_index([r[i] for i in kept], [dims[i] for i in kept])
                ci = np.ravel_multi_index([c[i] for i in kept], [dims[i] for i in kept])
                out[ri, ci] += rho[np.ravel_multi_index(r, dims), np.ravel_multi_index(c, dims)]
    return out


def _swap_bc(a, b, c):
    """Permutation taking A(x)C(x)B ordering to A(x)B(x)C."""
    n = a * b * c
    P = np.zeros((n, n))
    for i, j, k in np.ndindex(a, b, c):
        P[np.ravel_multi_index((i, j, k), (a, b, c)), np.ravel_multi_index((i, k, j), (a, c, b))] = 1
    return P


def _pinv_power(M, a):
    w, U = np.linalg.eigh(M)
    f = np.where(w > 1e-12 * w.max(), np.abs(w) ** a, 0.0)
    return (U * f) @ U.conj().T


def dense_marginal_value(rho, dims, V, p):
    a, b, c = dims
    rac = _ptrace_loops(rho, dims, [1])
    rbc = _ptrace_loops(rho, dims, [0])
    rc = _ptrace_loops(rho, dims, [0, 1])
    P = _swap_bc(a, b, c)
    left = P @ np.kron(_pinv_power(rac, 1 / p), np.eye(b)) @ P.T
    mid = np.kron(np.eye(a * b), V @ _pinv_power(rc, -1 / p))
    right = np.kron(np.eye(a), _pinv_power(rbc, 1 / p))
    s = np.linalg.svd(left @ mid @ right, compute_uv=False)
    return float(np.sum(s**p))


def test_marginal_random_state_matches_dense_oracle():
    tri = generate(GenSpec("tripartiteDensity", factor_dims=(2, 2, 2), seed=3))
    rho = tri.rho.matrix()
    for p in (2.0, 3.0):
        assert so.marginal_chain_value(tri.rho, tri.shape, np.eye(2), p) == pytest.approx(
            dense_marginal_value(rho, (2, 2, 2), np.eye(2), p), rel=1e-10
        )
    m = so.marginals(tri.rho, tri.shape)
    U = m.rho_c.eigenvectors
    V = (U * np.exp(1j * np.array([0.0, 1.3]))) @ U.conj().T
    assert so.marginal_chain_value(tri.rho, tri.shape, V, 4.0) == pytest.approx(
        dense_marginal_value(rho, (2, 2, 2), V, 4.0), rel=1e-10
    )


def test_marginal_product_state(rng):
    ra, rb, rc = (random_psd(rng, 2) for _ in range(3))
    ra, rb, rc = ra / np.trace(ra), rb / np.trace(rb), rc / np.trace(rc)
    rho = spectral_decompose(np.kron(np.kron(ra, rb), rc))
    shape = TensorShape((2, 2, 2))
    for p in (2.0, 4.0):
        v = so.marginal_chain_value(rho, shape, np.eye(2), p)
        assert v == pytest.approx(dense_marginal_value(rho.matrix(), (2, 2, 2), np.eye(2), p), rel=1e-10)
        # factorized: (ra^{1/p} (x) rb^{1/p} (x) rc^{1/p}) has p-norm^p equal to 1
        assert v == pytest.approx(1.0, rel=1e-10)


def test_marginal_maximally_mixed_c(rng):
    ra, rb = random_psd(rng, 2), random_psd(rng, 3)
    ra, rb = ra / np.trace(ra), rb / np.trace(rb)
    rho = spectral_decompose(np.kron(np.kron(ra, rb), np.eye(2) / 2))
    shape = TensorShape((2, 3, 2))
    m = so.marginals(rho, shape)
    assert np.allclose(m.rho_c.matrix(), np.eye(2) / 2)
    p = 3.0
    expected = np.sum(np.linalg.eigvalsh(ra)) * np.sum(np.linalg.eigvalsh(rb)) * 2 * (0.5 ** (1 / p) * 2 ** (1 / p) * 0.5 ** (1 / p)) ** p
    assert so.marginal_chain_value(rho, shape, haar(rng, 2), p) == pytest.approx(expected, rel=1e-10)


def test_marginal_errors(rng):
    tri = generate(GenSpec("tripartiteDensity", factor_dims=(2, 2, 2), seed=5))
    with pytest.raises(CommutationViolation):
        so.marginal_chain_value(tri.rho, tri.shape, haar(rng, 2), 2.0)
    with pytest.raises(ShapeMismatch):
        so.marginal_chain_value(tri.rho, tri.shape, np.eye(3), 2.0)
    with pytest.raises(ShapeMismatch):
        so.marginals(tri.rho, TensorShape((2, 4)))


def test_marginal_maximize_matches_phase_grid():
    tri = generate(GenSpec("tripartiteDensity", factor_dims=(2, 2, 2), seed=11))
    for p in (2.0, 4.0):
        res = so.marginal_chain_maximize(tri.rho, tri.shape, p)
        grid = so.marginal_phase_grid(tri.rho, tri.shape, p, 720, refine=True)
        assert res.value == pytest.approx(grid, rel=1e-7)
        assert res.value >= so.marginal_chain_value(tri.rho, tri.shape, np.eye(2), p) - 1e-12


def test_marginal_product_state_swivel_cancels(rng):
    parts = [random_psd(rng, 2) for _ in range(3)]
    parts = [x / np.trace(x) for x in parts]
    rho = spectral_decompose(np.kron(np.kron(parts[0], parts[1]), parts[2]))
    shape = TensorShape((2, 2, 2))
    S = commutant_structure(so.marginals(rho, shape).rho_c)
    vals = [so.marginal_chain_value(rho, shape, assemble_swivel(S, random_swivel(S, s)), 3.0) for s in range(20)]
    assert max(vals) - min(vals) <= 1e-9
    res = so.marginal_chain_maximize(rho, shape, 3.0, FAST)
    assert res.restart_spread <= 1e-9
