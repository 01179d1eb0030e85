"""Seeded random instances and their on-disk format.

Instance and report files are JSON. Every float is stored as a C99 hex-float
string (``float.hex``) so that a load reproduces the saved bits; a decimal
shadow copy sits next to each matrix for human readers and is ignored on load.
Complex entries are ``[re, im]`` pairs, matrices are row-major, and for
tensor-product spaces the first factor is the slowest-varying index.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from . import __version__
from .errors import InvalidSpec, NegativeSpectrum, NonHermitian, ParseError, SchemaVersionMismatch, ShapeMismatch
from .matcore import PsdOperator, TensorShape, random_unitary, spectral_decompose
from .swivelopt import ChainInstance

SCHEMA_VERSION = 1
TENSOR_LAYOUT = "row-major; first tensor factor is the slowest-varying index"
KINDS = ("psd", "pd", "density", "rankDeficient", "commutingFamily", "tripartiteDensity")


@dataclass(frozen=True)
class GenSpec:
    kind: str
    dim: int | None = None
    factor_dims: tuple[int, ...] | None = None
    length: int = 2
    rank: int | None = None
    seed: int = 0
    condition_cap: float = 1e4

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidSpec(f"unknown kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "tripartiteDensity":
            if self.factor_dims is None or len(self.factor_dims) != 3 or any(int(d) < 1 for d in self.factor_dims):
                raise InvalidSpec("tripartiteDensity needs three positive factor dimensions")
            object.__setattr__(self, "factor_dims", tuple(int(d) for d in self.factor_dims))
        else:
            if self.dim is None or self.dim < 1:
                raise InvalidSpec(f"kind {self.kind!r} needs a positive dim")
            if self.length < 1:
                raise InvalidSpec("chain length must be >= 1")
        if self.kind == "rankDeficient":
            if self.rank is None or not (1 <= self.rank <= self.dim):
                raise InvalidSpec(f"rank must be in [1, dim], got {self.rank}")
        if not self.condition_cap > 1:
            raise InvalidSpec("condition_cap must exceed 1")

    def to_json(self) -> dict:
        d = asdict(self)
        if d["factor_dims"] is not None:
            d["factor_dims"] = list(d["factor_dims"])
        return d

    @classmethod
    def from_json(cls, d: dict) -> "GenSpec":
        d = dict(d)
        if d.get("factor_dims") is not None:
            d["factor_dims"] = tuple(d["factor_dims"])
        return cls(**d)


@dataclass(eq=False)
class TripartiteInstance:
    rho: PsdOperator
    shape: TensorShape
    label: str = ""
    seed: int = 0
    spec: GenSpec | None = None


# --------------------------------------------------------------------------
# generation


def _ginibre(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    return (rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))) / math.sqrt(2.0)


def _herm(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.conj().T)


def _psd(rng, n, r=None) -> np.ndarray:
    G = _ginibre(rng, n, n if r is None else r)
    return _herm(G @ G.conj().T)


def _pd(rng, n, cap) -> np.ndarray:
    M = _psd(rng, n)
    w = np.linalg.eigvalsh(M)
    lo, hi = max(float(w[0]), 0.0), float(w[-1])
    # shift s so that (hi + s) / (lo + s) <= cap
    s = max(0.0, (hi - cap * lo) / (cap - 1.0))
    s = max(s, 1e-12 * max(hi, 1.0))
    return _herm(M + s * np.eye(n))


def _density(rng, n) -> np.ndarray:
    M = _psd(rng, n)
    return _herm(M / np.trace(M).real)


def generate(spec: GenSpec) -> ChainInstance | TripartiteInstance:
    """Deterministic instance for ``spec`` (the same spec always yields the same bits)."""
    rng = np.random.default_rng(spec.seed)
    label = f"{spec.kind}-seed{spec.seed}"
    if spec.kind == "tripartiteDensity":
        shape = TensorShape(spec.factor_dims)
        rho = spectral_decompose(_density(rng, shape.dim))
        return TripartiteInstance(rho, shape, label, spec.seed, spec)
    n, L = spec.dim, spec.length
    if spec.kind == "psd":
        mats = [_psd(rng, n) for _ in range(L)]
    elif spec.kind == "pd":
        mats = [_pd(rng, n, spec.condition_cap) for _ in range(L)]
    elif spec.kind == "density":
        mats = [_density(rng, n) for _ in range(L)]
    elif spec.kind == "rankDeficient":
        mats = [_psd(rng, n, spec.rank) for _ in range(L)]
    else:  # commutingFamily
        U = random_unitary(n, rng)
        mats = [_herm((U * rng.uniform(0.1, 2.0, n)) @ U.conj().T) for _ in range(L)]
    inst = ChainInstance([spectral_decompose(M) for M in mats], label, spec.seed)
    inst.spec = spec
    return inst


# --------------------------------------------------------------------------
# number and matrix encoding


def encode_float(x: float) -> str:
    return float(x).hex()


def decode_float(s, field_name: str) -> float:
    if isinstance(s, (int, float)) and not isinstance(s, bool):
        return float(s)
    try:
        return float.fromhex(s)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"not a hex float: {s!r}", field=field_name) from exc


def encode_matrix(M: np.ndarray) -> dict:
    M = np.asarray(M, dtype=np.complex128)
    return {
        "rows": M.shape[0],
        "cols": M.shape[1],
        "entries": [[[z.real.hex(), z.imag.hex()] for z in row] for row in M.tolist()],
        "decimal": [[[repr(z.real), repr(z.imag)] for z in row] for row in M.tolist()],
    }


def decode_matrix(d: dict, field_name: str) -> np.ndarray:
    try:
        rows, cols, entries = int(d["rows"]), int(d["cols"]), d["entries"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"matrix needs rows, cols and entries ({exc})", field=field_name) from exc
    if len(entries) != rows or any(len(r) != cols for r in entries):
        raise ParseError(f"entries do not form a {rows}x{cols} matrix", field=field_name)
    M = np.empty((rows, cols), dtype=np.complex128)
    for i, row in enumerate(entries):
        for j, pair in enumerate(row):
            if not isinstance(pair, list) or len(pair) != 2:
                raise ParseError("complex entries must be [re, im] pairs", field=f"{field_name}[{i}][{j}]")
            M[i, j] = complex(decode_float(pair[0], field_name), decode_float(pair[1], field_name))
    if not np.all(np.isfinite(M)):
        raise ParseError("matrix has non-finite entries", field=field_name)
    return M


# --------------------------------------------------------------------------
# files


def atomic_write(path: str | os.PathLike, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def instance_to_json(inst: ChainInstance | TripartiteInstance) -> dict:
    spec = getattr(inst, "spec", None)
    doc: dict[str, Any] = {
        "schemaVersion": SCHEMA_VERSION,
        "document": "instance",
        "tensorLayout": TENSOR_LAYOUT,
        "label": inst.label,
        "seed": int(inst.seed),
        "spec": spec.to_json() if spec is not None else None,
    }
    if isinstance(inst, TripartiteInstance):
        doc["tensorShape"] = list(inst.shape.factor_dims)
        doc["operators"] = [encode_matrix(inst.rho.matrix())]
    else:
        doc["tensorShape"] = None
        doc["operators"] = [encode_matrix(C.matrix()) for C in inst.operators]
    return doc


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=1, sort_keys=False) + "\n"


def save_instance(path, inst: ChainInstance | TripartiteInstance) -> Path:
    return atomic_write(path, dumps(instance_to_json(inst)))


def _require(doc: dict, key: str):
    if key not in doc:
        raise ParseError("missing required field", field=key)
    return doc[key]


def _check_schema(doc) -> None:
    if not isinstance(doc, dict):
        raise ParseError("top-level value must be an object")
    version = _require(doc, "schemaVersion")
    if version != SCHEMA_VERSION:
        raise SchemaVersionMismatch(f"schema version {version!r}, this tool reads {SCHEMA_VERSION}", field="schemaVersion")


def instance_from_json(doc: dict) -> ChainInstance | TripartiteInstance:
    _check_schema(doc)
    spec_doc = doc.get("spec")
    try:
        spec = GenSpec.from_json(spec_doc) if spec_doc is not None else None
    except (InvalidSpec, TypeError) as exc:
        raise ParseError(str(exc), field="spec") from exc
    raw = _require(doc, "operators")
    if not isinstance(raw, list) or not raw:
        raise ParseError("operators must be a non-empty list", field="operators")
    ops = []
    for i, m in enumerate(raw):
        name = f"operators[{i}]"
        M = decode_matrix(m, name)
        if M.shape[0] != M.shape[1]:
            raise ParseError(f"operator is {M.shape[0]}x{M.shape[1]}, not square", field=name)
        try:
            C = spectral_decompose(M)
        except (NonHermitian, NegativeSpectrum) as exc:
            raise ParseError(f"invariant violated: {exc}", field=name) from exc
        ops.append((M, C))
    kind = spec.kind if spec is not None else None
    if kind in ("density", "tripartiteDensity"):
        for i, (M, _) in enumerate(ops):
            tr = float(np.trace(M).real)
            if abs(tr - 1.0) > 1e-10:
                raise ParseError(f"invariant violated: density operator has trace {tr!r}, expected 1", field=f"operators[{i}]")
    label = str(doc.get("label", ""))
    seed = int(doc.get("seed", 0))
    shape = doc.get("tensorShape")
    if shape is not None:
        if len(ops) != 1:
            raise ParseError("a tensor-shaped instance holds exactly one operator", field="operators")
        try:
            ts = TensorShape(tuple(shape))
            ts.check(ops[0][0])
        except ShapeMismatch as exc:
            raise ParseError(str(exc), field="tensorShape") from exc
        return TripartiteInstance(ops[0][1], ts, label, seed, spec)
    try:
        inst = ChainInstance([C for _, C in ops], label, seed)
    except Exception as exc:
        raise ParseError(str(exc), field="operators") from exc
    inst.spec = spec
    return inst


def parse_json(text: str) -> dict:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from exc


def load_instance(path) -> ChainInstance | TripartiteInstance:
    return instance_from_json(parse_json(Path(path).read_text(encoding="utf-8")))


def same_instance(a, b) -> bool:
    """Bit-for-bit equality of the stored matrices (and tensor shape)."""
    ma = [a.rho.matrix()] if isinstance(a, TripartiteInstance) else [C.matrix() for C in a.operators]
    mb = [b.rho.matrix()] if isinstance(b, TripartiteInstance) else [C.matrix() for C in b.operators]
    if type(a) is not type(b) or len(ma) != len(mb):
        return False
    if isinstance(a, TripartiteInstance) and a.shape != b.shape:
        return False
    return all(x.shape == y.shape and x.tobytes() == y.tobytes() for x, y in zip(ma, mb))


# --------------------------------------------------------------------------
# reports and curves


def report_to_json(report, instance_doc: dict | None, config: dict) -> dict:
    return {
        "schemaVersion": SCHEMA_VERSION,
        "document": "report",
        "inequality": report.inequality,
        "parameters": report.parameters,
        "lhs": encode_float(report.lhs),
        "rhs": encode_float(report.rhs),
        "slack": encode_float(report.slack),
        "decimal": {"lhs": repr(report.lhs), "rhs": repr(report.rhs), "slack": repr(report.slack)},
        "status": report.status,
        "diagnostics": _jsonable(report.diagnostics),
        "toolVersion": report.tool_version,
        "config": _jsonable(config),
        "instance": instance_doc,
    }


def save_report(path, report, instance_doc: dict | None, config: dict) -> Path:
    return atomic_write(path, dumps(report_to_json(report, instance_doc, config)))


def load_report(path) -> dict:
    doc = parse_json(Path(path).read_text(encoding="utf-8"))
    _check_schema(doc)
    for key in ("inequality", "lhs", "rhs", "status", "config"):
        _require(doc, key)
    doc["lhs_value"] = decode_float(doc["lhs"], "lhs")
    doc["rhs_value"] = decode_float(doc["rhs"], "rhs")
    return doc


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    return x


CURVE_COLUMNS = ("p", "value", "oracleValue", "restartSpread")


def curve_csv(rows: Iterable[Sequence]) -> str:
    """CSV text with columns ``p, value, oracleValue, restartSpread`` (blank oracle when absent)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CURVE_COLUMNS)
    for p, value, oracle, spread in rows:
        w.writerow([repr(float(p)), repr(float(value)), "" if oracle is None else repr(float(oracle)), repr(float(spread))])
    return buf.getvalue()
