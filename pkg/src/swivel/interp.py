"""Interpolation densities and the integral bounds built on them.

The densities on the real line are

* ``beta_theta(t)  = sin(pi theta) / (2 theta (cosh(pi t) + cos(pi theta)))``
* ``alpha_theta(t) = sin(pi theta) / (2 (1 - theta) (cosh(pi t) - cos(pi theta)))``
* ``beta_0(t)      = pi / (2 (cosh(pi t) + 1))``  (the theta -> 0 limit of beta_theta)

Integrals against them are computed by composite Gauss-Legendre quadrature on
``[-T, T]`` with panels graded towards ``t = 0``; the neglected tails are
bounded in closed form using ``cosh(pi t) >= e^{pi t} / 2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .config import TOL
from .errors import DomainError, IntegrandUnderflow, InvalidExponent, RankDeficient
from .matcore import PsdOperator, complex_power_batch, log_on_support, matrix_exp, real_power
from .swivelopt import ChainInstance, chain_norm

HOLDS = "HOLDS"
VIOLATED = "VIOLATED_BEYOND_TOL"
INCONCLUSIVE = "INCONCLUSIVE_OPTIMIZER_GAP"


# --------------------------------------------------------------------------
# densities


def _check_theta(theta: float) -> None:
    if not (0.0 < theta < 1.0):
        raise DomainError(f"theta must lie in (0, 1), got {theta}; use beta_zero_density for theta = 0")


def beta_density(theta: float, t):
    _check_theta(theta)
    t = np.asarray(t, dtype=float)
    with np.errstate(over="ignore"):
        return math.sin(math.pi * theta) / (2.0 * theta * (np.cosh(math.pi * t) + math.cos(math.pi * theta)))


def alpha_density(theta: float, t):
    _check_theta(theta)
    t = np.asarray(t, dtype=float)
    with np.errstate(over="ignore"):
        return math.sin(math.pi * theta) / (2.0 * (1.0 - theta) * (np.cosh(math.pi * t) - math.cos(math.pi * theta)))


def beta_zero_density(t):
    t = np.asarray(t, dtype=float)
    with np.errstate(over="ignore"):
        return math.pi / (2.0 * (np.cosh(math.pi * t) + 1.0))


@dataclass(frozen=True)
class DensityParams:
    """Weight selector: ``theta = 0`` means ``beta_0``, otherwise ``beta_theta``."""

    theta: float
    derived_from: tuple[float, float] | None = None

    def __post_init__(self):
        if not (0.0 <= self.theta < 1.0):
            raise DomainError(f"theta must lie in [0, 1), got {self.theta}")
        if self.derived_from is not None:
            p, q = self.derived_from
            if not (1.0 <= q < p):
                raise InvalidExponent(f"need 1 <= q < p, got p={p}, q={q}")
            if self.theta != q / p:
                raise DomainError("theta does not equal q/p")

    @classmethod
    def from_pq(cls, p: float, q: float) -> "DensityParams":
        if not (1.0 <= q < p):
            raise InvalidExponent(f"need 1 <= q < p, got p={p}, q={q}")
        return cls(q / p, (float(p), float(q)))

    def density(self, t):
        return beta_zero_density(t) if self.theta == 0.0 else beta_density(self.theta, t)


def _kernel_shift(kind: str, theta: float) -> tuple[float, float]:
    """Return ``(prefactor, c)`` with density ``prefactor / (cosh(pi t) + c)``."""
    if kind == "beta0":
        return math.pi / 2.0, 1.0
    _check_theta(theta)
    s, c = math.sin(math.pi * theta), math.cos(math.pi * theta)
    if kind == "beta":
        return s / (2.0 * theta), c
    if kind == "alpha":
        return s / (2.0 * (1.0 - theta)), -c
    raise ValueError(f"unknown density kind {kind!r}")


_MIN_T = math.log(2.0) / math.pi


def tail_mass_bound(kind: str, theta: float, T: float) -> float:
    """Upper bound on the density mass in ``|t| > T`` (both tails), valid for ``T >= ln 2 / pi``.

    For ``c >= 0``: ``cosh(pi t) + c >= e^{pi t}/2``. For ``c < 0`` and ``e^{pi t} >= 2``:
    ``cosh(pi t) + c >= (1 + c) e^{pi t}/2``. Either way the one-sided tail is at most
    ``prefactor / min(1, 1 + c) * (2/pi) e^{-pi T}``.
    """
    return _tail_coefficient(kind, theta) * math.exp(-math.pi * max(T, _MIN_T))


def _tail_coefficient(kind: str, theta: float) -> float:
    pref, c = _kernel_shift(kind, theta)
    return 2.0 * pref / min(1.0, 1.0 + c) * (2.0 / math.pi)


def half_width_for(kind: str, theta: float, bound: float, tail_eps: float) -> float:
    """Smallest ``T >= ln 2 / pi`` with ``bound * tail_mass_bound(T) <= tail_eps``."""
    need = max(bound, 1e-300) * _tail_coefficient(kind, theta) / tail_eps
    return max(_MIN_T, math.log(need) / math.pi if need > 1 else 0.0)


def _density_scale(kind: str, theta: float) -> float:
    """Width of the peak at ``t = 0``; the kernel has a near-pole when ``1 + c`` is small."""
    _, c = _kernel_shift(kind, theta)
    return min(1.0, max(1e-4, math.sqrt(2.0 * (1.0 + c)) / math.pi))


# --------------------------------------------------------------------------
# quadrature


@dataclass(frozen=True)
class QuadratureConfig:
    half_width: float | None = None  # None: choose from tail_eps
    panel_split: int = 1  # subdivide every panel this many times
    nodes_per_panel: int = 32
    tail_eps: float = 1e-10
    far_panel_width: float = 0.5

    def __post_init__(self):
        if self.panel_split < 1 or self.nodes_per_panel < 2:
            raise ValueError("panel_split must be >= 1 and nodes_per_panel >= 2")
        if self.half_width is not None and self.half_width <= 0:
            raise ValueError("half_width must be positive")
        if self.tail_eps <= 0 or self.far_panel_width <= 0:
            raise ValueError("tail_eps and far_panel_width must be positive")

    def doubled(self) -> "QuadratureConfig":
        return QuadratureConfig(self.half_width, 2 * self.panel_split, self.nodes_per_panel, self.tail_eps, self.far_panel_width)


@lru_cache(maxsize=None)
def _gauss_legendre(k: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(k)


def panel_breakpoints(T: float, scale: float, far_width: float, split: int = 1) -> np.ndarray:
    """Symmetric breakpoints on ``[-T, T]``: geometric from ``scale/4`` near 0, then uniform."""
    pos = [0.0]
    x = scale / 4.0
    while x < min(1.0, T):
        pos.append(x)
        x *= 2.0
    start = pos[-1]
    if T > start:
        k = max(1, math.ceil((T - start) / far_width))
        pos.extend(np.linspace(start, T, k + 1)[1:])
    pos = np.array(pos)
    pos = pos[pos <= T]
    if pos[-1] < T:
        pos = np.append(pos, T)
    full = np.concatenate([-pos[:0:-1], pos])
    if split > 1:
        fine = [np.linspace(a, b, split + 1)[:-1] for a, b in zip(full[:-1], full[1:])]
        full = np.append(np.concatenate(fine), full[-1])
    return full


def composite_rule(breaks: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = _gauss_legendre(k)
    a, b = breaks[:-1, None], breaks[1:, None]
    nodes = 0.5 * (b - a) * x[None, :] + 0.5 * (a + b)
    weights = 0.5 * (b - a) * w[None, :]
    return nodes.ravel(), weights.ravel()


@dataclass
class QuadResult:
    value: float
    error: float
    half_width: float
    tail_bound: float
    nodes: int


def integrate_weighted(
    f: Callable[[np.ndarray], np.ndarray],
    kind: str,
    theta: float,
    bound: float,
    quad: QuadratureConfig,
) -> QuadResult:
    """``int weight(t) f(t) dt`` for ``|f| <= bound``, with a certified tail term in the error."""
    T = quad.half_width if quad.half_width is not None else half_width_for(kind, theta, bound, quad.tail_eps)
    scale = _density_scale(kind, theta)
    breaks = panel_breakpoints(T, scale, quad.far_panel_width, quad.panel_split)
    weight = _weight_fn(kind, theta)
    x, w = composite_rule(breaks, quad.nodes_per_panel)
    xh, wh = composite_rule(breaks, max(2, quad.nodes_per_panel // 2))
    # one batched integrand call, fixed node order for reproducible sums
    vals = f(np.concatenate([x, xh]))
    g, gh = weight(x) * vals[: x.size], weight(xh) * vals[x.size :]
    value = float(np.dot(w, g))
    coarse = float(np.dot(wh, gh))
    tail = bound * tail_mass_bound(kind, theta, T)
    roundoff = 100.0 * np.finfo(float).eps * float(np.dot(w, np.abs(g)))
    return QuadResult(value, abs(value - coarse) + tail + roundoff, T, tail, x.size + xh.size)


def _weight_fn(kind: str, theta: float) -> Callable[[np.ndarray], np.ndarray]:
    if kind == "beta0":
        return beta_zero_density
    if kind == "beta":
        return lambda t: beta_density(theta, t)
    if kind == "alpha":
        return lambda t: alpha_density(theta, t)
    raise ValueError(f"unknown density kind {kind!r}")


def density_integral(kind: str, theta: float = 0.0, quad: QuadratureConfig | None = None) -> QuadResult:
    """Total mass of a density over the real line (should be 1)."""
    return integrate_weighted(np.ones_like, kind, theta, 1.0, quad or QuadratureConfig())


# --------------------------------------------------------------------------
# chained norms with complex powers


def log_norm_bound(inst: ChainInstance, q: float) -> float:
    """Bound ``B`` on ``|log ||prod_i C_i^{(1+it)/q}||_q^q|`` uniform in ``t``.

    Upper: ``n * prod lambda_max``. Lower: the largest singular value of the
    product is at least ``prod lambda_min^{1/q}`` on full-rank operators; for
    rank-deficient ones the smallest nonzero eigenvalue stands in.
    """
    n = inst.dim
    hi = math.log(n) + sum(math.log(C.lambda_max) for C in inst.operators if C.lambda_max > 0)
    lo = sum(math.log(C.lambda_min_support) for C in inst.operators if C.lambda_min_support > 0)
    return max(abs(hi), abs(lo), 1e-300)


def complex_chain_log_norm(inst: ChainInstance, ts: np.ndarray, q: float) -> np.ndarray:
    """``log ||C_1^{(1+it)/q} ... C_L^{(1+it)/q}||_q^q`` for every ``t`` in ``ts``."""
    ts = np.asarray(ts, dtype=float)
    X = None
    for C in inst.operators:
        P = complex_power_batch(C, 1.0, ts, q)
        X = P if X is None else X @ P
    s = np.linalg.svd(X, compute_uv=False)
    norms = np.sum(s**q, axis=-1)
    if np.any(norms < TOL.norm_floor):
        bad = ts[np.argmin(norms)]
        raise IntegrandUnderflow(f"q-norm below {TOL.norm_floor:.0e} at t = {bad:.6g}")
    return np.log(norms)


def unitary_factor_singular_values(C: PsdOperator, t: float, q: float) -> np.ndarray:
    """Singular values of ``C^{it/q}`` restricted to the support of ``C``."""
    mask = C.support_mask
    U = C.eigenvectors[:, mask]
    M = complex_power_batch(C, 0.0, np.array([t]), q)[0]
    return np.linalg.svd(U.conj().T @ M @ U, compute_uv=False)


# --------------------------------------------------------------------------
# reports


@dataclass
class VerificationReport:
    inequality: str
    parameters: dict
    lhs: float
    rhs: float
    slack: float
    status: str
    diagnostics: dict = field(default_factory=dict)
    tool_version: str = __version__

    @property
    def holds(self) -> bool:
        return self.status == HOLDS


def classify(slack: float, tol: float, error_estimate: float, inconclusive: bool = False) -> str:
    if slack >= -(tol + error_estimate):
        return HOLDS
    return INCONCLUSIVE if inconclusive else VIOLATED


def _check_pq(p: float, q: float) -> None:
    if not (1.0 <= q < p) or math.isinf(p):
        raise InvalidExponent(f"need 1 <= q < p < inf, got p={p}, q={q}")


def hirschman_lhs(inst: ChainInstance, p: float) -> float:
    """``log ||C_1^{1/p} ... C_L^{1/p}||_p^p``; ``-inf`` when the product vanishes."""
    v = chain_norm(inst, None, p)
    return math.log(v) if v > 0 else -math.inf


def hirschman_rhs(inst: ChainInstance, p: float, q: float, quad: QuadratureConfig | None = None) -> QuadResult:
    """``int beta_{q/p}(t) log ||prod_i C_i^{(1+it)/q}||_q^q dt``."""
    _check_pq(p, q)
    quad = quad or QuadratureConfig()
    params = DensityParams.from_pq(p, q)
    B = log_norm_bound(inst, q)
    return integrate_weighted(lambda t: complex_chain_log_norm(inst, t, q), "beta", params.theta, B, quad)


def _report(name, params, lhs, rhs_result, tol, extra=None, inconclusive=False):
    rhs = rhs_result.value if rhs_result is not None else math.nan
    slack = rhs - lhs if rhs_result is not None else math.nan
    diag = {"precision": "float64"}
    if rhs_result is not None:
        diag.update(
            quadrature_error=rhs_result.error,
            tail_bound=rhs_result.tail_bound,
            half_width=rhs_result.half_width,
            nodes=rhs_result.nodes,
        )
        status = classify(slack, tol, rhs_result.error)
    else:
        status = INCONCLUSIVE
    if extra:
        diag.update(extra)
    if inconclusive:
        status = INCONCLUSIVE
    params = dict(params, tol=tol)
    return VerificationReport(name, params, lhs, rhs, slack, status, diag)


def verify_hirschman(
    inst: ChainInstance, p: float, q: float, quad: QuadratureConfig | None = None, tol: float | None = None
) -> VerificationReport:
    tol = TOL.verify_tol if tol is None else tol
    quad = quad or QuadratureConfig()
    params = {"p": p, "q": q, "theta": q / p}
    lhs = hirschman_lhs(inst, p)
    try:
        rhs = hirschman_rhs(inst, p, q, quad)
    except IntegrandUnderflow as exc:
        return _report("hirschman", params, lhs, None, tol, {"underflow": str(exc)})
    return _report("hirschman", params, lhs, rhs, tol)


def gt_lhs(inst: ChainInstance) -> float:
    """``log Tr exp(log C_1 + ... + log C_L)``; positive definite operators only."""
    total = None
    for i, C in enumerate(inst.operators):
        lg = log_on_support(C)
        if lg.rank_deficient:
            raise RankDeficient(f"operator {i} is not positive definite (rank {C.rank} < {C.dim})")
        total = lg.matrix if total is None else total + lg.matrix
    return math.log(float(np.trace(matrix_exp(total)).real))


def gt_rhs(inst: ChainInstance, q: float, quad: QuadratureConfig | None = None) -> QuadResult:
    if not (q >= 1) or math.isinf(q):
        raise InvalidExponent(f"need finite q >= 1, got {q}")
    quad = quad or QuadratureConfig()
    B = log_norm_bound(inst, q)
    return integrate_weighted(lambda t: complex_chain_log_norm(inst, t, q), "beta0", 0.0, B, quad)


def verify_gt(
    inst: ChainInstance, q: float, quad: QuadratureConfig | None = None, tol: float | None = None
) -> VerificationReport:
    tol = TOL.verify_tol if tol is None else tol
    lhs = gt_lhs(inst)
    try:
        rhs = gt_rhs(inst, q, quad)
    except IntegrandUnderflow as exc:
        return _report("gt", {"q": q}, lhs, None, tol, {"underflow": str(exc)})
    return _report("gt", {"q": q}, lhs, rhs, tol)


# --------------------------------------------------------------------------
# Lie-Trotter


def lie_trotter_value(inst: ChainInstance, p: float) -> float:
    """``Tr[(C_L^{1/2p} ... C_2^{1/2p} C_1^{1/p} C_2^{1/2p} ... C_L^{1/2p})^p]``."""
    if not (p >= 1) or math.isinf(p):
        raise InvalidExponent(f"need finite p >= 1, got {p}")
    ops = inst.operators
    Y = real_power(ops[0], 1.0 / p)
    for C in ops[1:]:
        H = real_power(C, 0.5 / p)
        Y = H @ Y @ H
    w = np.linalg.eigvalsh(0.5 * (Y + Y.conj().T))
    return float(np.sum(np.clip(w, 0.0, None) ** p))


def exp_sum_log_trace(inst: ChainInstance) -> float:
    return math.exp(gt_lhs(inst))


def lie_trotter_convergence(inst: ChainInstance, p_list: Sequence[float]) -> list[tuple[float, float, float]]:
    """Rows ``(p, value, |value - Tr exp(sum_i log C_i)|)``."""
    ref = exp_sum_log_trace(inst)
    rows = []
    for p in p_list:
        v = lie_trotter_value(inst, p)
        rows.append((float(p), v, abs(v - ref)))
    return rows
