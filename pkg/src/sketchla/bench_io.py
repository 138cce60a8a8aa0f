"""Dataset ingestion, residual estimation, and result persistence.

Readers are strict: malformed input fails with a line-numbered ParseError,
never a partial silent load. libsvm features map samples to COLUMNS (the
data matrix is d x n). Matrix Market support covers coordinate and array
format, real, general; writes use 17 significant digits so a write/read
round trip is bit-identical.

Results go to a fixed-header CSV; emit_plotdata aggregates (median, q25,
q75) grouped by an x-field, which is exactly what the benchmark figures
plot. File-system failures surface as the usual OSError.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatch, IndexOutOfRange, InvalidSpec, ParseError, UnsupportedField
from .matrix import MatrixHandle, as_handle, thin_qr
from .rng import derive_seed, substream
from .sketch import SketchSpec, apply_left, apply_right, identity_validation_spec, realize

RESULT_HEADER = (
    "experiment", "dataset", "m", "n", "c", "r", "s_c", "s_r",
    "a", "k", "epsilon", "sigma", "seed", "metric", "value", "wall_ms",
)


@dataclass(frozen=True)
class DatasetRecord:
    """Metadata of an ingested dataset."""

    name: str
    rows: int
    cols: int
    kind: str  # dense | sparse
    path: str
    nnz: int

    @property
    def density(self) -> float:
        if self.rows == 0 or self.cols == 0:
            return 0.0
        return self.nnz / (self.rows * self.cols)


@dataclass(frozen=True)
class ResultRow:
    """One measurement with its full parameter tuple (self-describing)."""

    experiment: str
    dataset: str
    m: int
    n: int
    metric: str
    value: float
    wall_ms: float
    c: int | None = None
    r: int | None = None
    s_c: int | None = None
    s_r: int | None = None
    a: float | None = None
    k: int | None = None
    epsilon: float | None = None
    sigma: float | None = None
    seed: int | None = None


def read_libsvm(path):
    """Parse libsvm sparse text; returns (features d x n sparse, labels).

    Sample j becomes column j. Indices are 1-based in the file; nonpositive
    indices raise IndexOutOfRange with the offending line number.
    """
    labels = []
    data, row_idx, col_idx = [], [], []
    max_feature = 0
    n_samples = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            tokens = line.split()
            try:
                labels.append(float(tokens[0]))
            except ValueError:
                raise ParseError(f"bad label {tokens[0]!r}", line=lineno) from None
            col = n_samples
            n_samples += 1
            for token in tokens[1:]:
                idx_str, _, val_str = token.partition(":")
                if not _:
                    raise ParseError(f"expected idx:val, got {token!r}", line=lineno)
                try:
                    idx = int(idx_str)
                except ValueError:
                    raise ParseError(f"bad feature index {idx_str!r}", line=lineno) from None
                if idx <= 0:
                    raise IndexOutOfRange(
                        f"line {lineno}: feature index {idx} must be positive"
                    )
                try:
                    val = float(val_str)
                except ValueError:
                    raise ParseError(f"bad feature value {val_str!r}", line=lineno) from None
                row_idx.append(idx - 1)
                col_idx.append(col)
                data.append(val)
                max_feature = max(max_feature, idx)
    mat = sp.csc_array(
        (data, (row_idx, col_idx)), shape=(max_feature, n_samples), dtype=np.float64
    )
    return MatrixHandle(mat), np.asarray(labels)


def _mm_header(line: str, lineno: int):
    parts = line.split()
    if len(parts) != 5 or parts[0] != "%%MatrixMarket":
        raise ParseError("expected '%%MatrixMarket matrix <format> <field> <symmetry>'", line=lineno)
    obj, fmt, field, symmetry = (p.lower() for p in parts[1:])
    if obj != "matrix":
        raise UnsupportedField(f"object {obj!r} not supported", line=lineno)
    if fmt not in ("coordinate", "array"):
        raise ParseError(f"format must be coordinate or array, got {fmt!r}", line=lineno)
    if field in ("complex", "pattern"):
        raise UnsupportedField(f"field {field!r} not supported", line=lineno)
    if field not in ("real", "integer"):
        raise ParseError(f"unknown field {field!r}", line=lineno)
    if symmetry != "general":
        raise UnsupportedField(f"symmetry {symmetry!r} not supported", line=lineno)
    return fmt


def read_matrix_market(path) -> MatrixHandle:
    """Read coordinate or array Matrix Market (real, general); duplicates sum."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.readlines()
    if not lines:
        raise ParseError("empty file", line=1)
    fmt = _mm_header(lines[0].strip(), 1)

    lineno = 1
    cursor = 1
    while cursor < len(lines) and lines[cursor].lstrip().startswith("%"):
        cursor += 1
    if cursor >= len(lines):
        raise ParseError("missing size line", line=len(lines))
    lineno = cursor + 1
    size_parts = lines[cursor].split()
    expected = 3 if fmt == "coordinate" else 2
    if len(size_parts) != expected:
        raise ParseError(f"size line needs {expected} fields", line=lineno)
    try:
        dims = [int(p) for p in size_parts]
    except ValueError:
        raise ParseError("size line must be integers", line=lineno) from None
    if any(d < 0 for d in dims):
        raise ParseError("dimensions must be nonnegative", line=lineno)
    cursor += 1

    if fmt == "coordinate":
        m, n, nnz = dims
        rows, cols, vals = [], [], []
        for off in range(nnz):
            if cursor + off >= len(lines):
                raise ParseError(
                    f"expected {nnz} entries, file ends after {off}", line=len(lines)
                )
            lineno = cursor + off + 1
            parts = lines[cursor + off].split()
            if len(parts) != 3:
                raise ParseError("coordinate entry needs 'i j value'", line=lineno)
            try:
                i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError:
                raise ParseError(f"bad coordinate entry {parts!r}", line=lineno) from None
            if not (1 <= i <= m and 1 <= j <= n):
                raise ParseError(f"entry ({i},{j}) outside {m}x{n}", line=lineno)
            rows.append(i - 1)
            cols.append(j - 1)
            vals.append(v)
        mat = sp.csc_array((vals, (rows, cols)), shape=(m, n), dtype=np.float64)
        return MatrixHandle(mat)

    m, n = dims
    values = []
    for off, raw in enumerate(lines[cursor:]):
        lineno = cursor + off + 1
        for token in raw.split():
            try:
                values.append(float(token))
            except ValueError:
                raise ParseError(f"bad array value {token!r}", line=lineno) from None
    if len(values) != m * n:
        raise ParseError(
            f"array format needs {m * n} values, found {len(values)}", line=len(lines)
        )
    dense = np.asarray(values).reshape((n, m)).T  # file is column-major
    return MatrixHandle(dense)


def write_matrix_market(a, path, comment: str = ""):
    """Write a handle as Matrix Market; sparse -> coordinate, dense -> array.

    Values use 17 significant digits so reading the file back is bit-exact.
    """
    a = as_handle(a)
    with open(path, "w", encoding="utf-8") as fh:
        if a.is_sparse:
            fh.write("%%MatrixMarket matrix coordinate real general\n")
            if comment:
                fh.write(f"%{comment}\n")
            mat = a.data
            fh.write(f"{a.rows} {a.cols} {mat.nnz}\n")
            indptr, indices, data = mat.indptr, mat.indices, mat.data
            for j in range(a.cols):
                for ptr in range(indptr[j], indptr[j + 1]):
                    fh.write(f"{indices[ptr] + 1} {j + 1} {data[ptr]:.17g}\n")
        else:
            fh.write("%%MatrixMarket matrix array real general\n")
            if comment:
                fh.write(f"%{comment}\n")
            fh.write(f"{a.rows} {a.cols}\n")
            dense = a.data
            for j in range(a.cols):
                for i in range(a.rows):
                    fh.write(f"{dense[i, j]:.17g}\n")


def default_estimator_rows(eps: float = 0.125) -> int:
    """Count-sketch rows for the residual estimator, 25/eps^2."""
    if eps <= 0:
        raise InvalidSpec(f"eps must be positive, got {eps}")
    return math.ceil(25.0 / eps ** 2)


def estimate_fro_residual(
    a, c, x, r,
    s1: int | None = None,
    s2: int | None = None,
    seed: int = 0,
    validation: bool = False,
) -> float:
    """Sketched estimate of ||A - C X R||_F without materializing the residual.

    Two independent count sketches compress rows and columns; the sketched
    residual is assembled as S1 A S2^T - (S1 C) X (R S2^T). validation=True
    swaps both sketches for exact identities (the estimate becomes exact).
    """
    a, c, r = as_handle(a), as_handle(c), as_handle(r)
    x = np.asarray(x, dtype=np.float64)
    if c.rows != a.rows:
        raise DimensionMismatch(f"C has {c.rows} rows, A has {a.rows}")
    if r.cols != a.cols:
        raise DimensionMismatch(f"R has {r.cols} cols, A has {a.cols}")
    if x.shape != (c.cols, r.rows):
        raise DimensionMismatch(f"X is {x.shape}, expected ({c.cols}, {r.rows})")
    if validation:
        left = realize(identity_validation_spec(a.rows, seed=derive_seed(seed, "left")))
        right = realize(identity_validation_spec(a.cols, seed=derive_seed(seed, "right")))
    else:
        s1 = default_estimator_rows() if s1 is None else s1
        s2 = default_estimator_rows() if s2 is None else s2
        left = realize(SketchSpec("countsketch", s1, a.rows, derive_seed(seed, "left")))
        right = realize(SketchSpec("countsketch", s2, a.cols, derive_seed(seed, "right")))
    sketched_a = apply_right(apply_left(left, a), right).dense()
    sc = apply_left(left, c).dense()
    rs = apply_right(r, right).dense()
    return float(np.linalg.norm(sketched_a - sc @ x @ rs))


def synth_lowrank_noise(
    m: int, n: int, k: int, noise: float, decay: str = "none", seed: int = 0
) -> MatrixHandle:
    """A = U_k diag(sigma) V_k^T + noise * G / sqrt(mn), bit-deterministic per seed."""
    if not 0 <= k <= min(m, n):
        raise InvalidSpec(f"k={k} outside [0, {min(m, n)}]")
    if decay not in ("none", "poly"):
        raise InvalidSpec(f"decay must be 'none' or 'poly', got {decay!r}")
    rng = substream(seed, "synth")
    u, _ = thin_qr(rng.normal(size=(m, k)))
    v, _ = thin_qr(rng.normal(size=(n, k)))
    sigma = np.ones(k) if decay == "none" else 1.0 / (np.arange(1, k + 1) ** 2)
    a = (u * sigma) @ v.T
    if noise:
        a = a + noise * rng.normal(size=(m, n)) / math.sqrt(m * n)
    return MatrixHandle(a)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_results(rows, path):
    """Append-free write of result rows to CSV with the fixed header order."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_HEADER)
        for row in rows:
            writer.writerow([_fmt(getattr(row, field)) for field in RESULT_HEADER])


def read_results(path):
    """Load result rows back from CSV (plotting and summaries)."""
    out = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        field_types = {f.name: f.type for f in fields(ResultRow)}
        for record in reader:
            kwargs = {}
            for name in RESULT_HEADER:
                raw = record.get(name, "")
                if raw == "" or raw is None:
                    kwargs[name] = None
                elif name in ("experiment", "dataset", "metric"):
                    kwargs[name] = raw
                elif "float" in str(field_types[name]) or name in ("value", "wall_ms", "a", "epsilon", "sigma"):
                    kwargs[name] = float(raw)
                else:
                    kwargs[name] = int(raw)
            out.append(ResultRow(**kwargs))
    return out


def aggregate_plotdata(rows, x_field: str, y_field: str):
    """(x, median, q25, q75) tuples grouped by the x field, x ascending."""
    groups: dict = {}
    for row in rows:
        x = getattr(row, x_field)
        y = getattr(row, y_field)
        if x is None or y is None:
            continue
        groups.setdefault(x, []).append(y)
    out = []
    for x in sorted(groups):
        vals = np.asarray(groups[x], dtype=np.float64)
        q25, med, q75 = np.percentile(vals, [25.0, 50.0, 75.0])
        out.append((x, float(med), float(q25), float(q75)))
    return out


def emit_plotdata(rows, x_field: str, y_field: str, path):
    """Write the grouped aggregates as a small CSV ready for plotting."""
    agg = aggregate_plotdata(rows, x_field, y_field)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([x_field, "median", "q25", "q75"])
        for x, med, q25, q75 in agg:
            writer.writerow([_fmt(x), _fmt(med), _fmt(q25), _fmt(q75)])
    return agg


def dataset_record(name: str, handle: MatrixHandle, path: str) -> DatasetRecord:
    return DatasetRecord(
        name=name,
        rows=handle.rows,
        cols=handle.cols,
        kind="sparse" if handle.is_sparse else "dense",
        path=str(path),
        nnz=handle.nnz,
    )


def load_dataset(path):
    """Dispatch on extension: .mtx / .mm are Matrix Market, anything else libsvm.

    Returns (handle, record, labels) with labels None for Matrix Market files.
    """
    from pathlib import Path

    p = Path(path)
    name = p.stem
    if p.suffix.lower() in (".mtx", ".mm"):
        handle = read_matrix_market(path)
        labels = None
    else:
        handle, labels = read_libsvm(path)
    return handle, dataset_record(name, handle, str(path)), labels
