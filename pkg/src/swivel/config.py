"""Global numerical tolerances.

Every tolerance used by the library is read from :data:`TOL` at call time, so
overriding a field (directly or through :func:`override`) changes behaviour
everywhere.
"""
from __future__ import annotations

import contextlib
from dataclasses import dataclass, fields
from typing import Iterator


@dataclass
class Tolerances:
    # clamp threshold for slightly negative eigenvalues, relative to max(1, lambda_max)
    hermitian_eps: float = 1e-10
    # symmetry check before decomposition, relative to max(1, max|M_ij|)
    symmetry_tol: float = 1e-9
    # eigenvalues <= support_cutoff_rel * lambda_max count as zero
    support_cutoff_rel: float = 1e-12
    # eigenvalue clustering for commutant detection, relative to max(1, lambda_max)
    cluster_rel_tol: float = 1e-8
    unitary_tol: float = 1e-9
    commutation_tol: float = 1e-8
    # HOLDS iff slack >= -(verify_tol + error estimate)
    verify_tol: float = 1e-7
    norm_floor: float = 1e-300


TOL = Tolerances()


def set_tolerances(**overrides: float) -> None:
    names = {f.name for f in fields(Tolerances)}
    for key, value in overrides.items():
        if key not in names:
            raise KeyError(f"unknown tolerance {key!r}")
        setattr(TOL, key, float(value))


@contextlib.contextmanager
def override(**overrides: float) -> Iterator[Tolerances]:
    """Temporarily replace tolerances inside a ``with`` block."""
    saved = {f.name: getattr(TOL, f.name) for f in fields(Tolerances)}
    try:
        set_tolerances(**overrides)
        yield TOL
    finally:
        for key, value in saved.items():
            setattr(TOL, key, value)
