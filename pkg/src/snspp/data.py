"""Dataset ingestion, train/validation split, and the synthetic
heavy-tailed regression generator.

Two text formats are supported: a sparse `<label> <idx>:<val> ...` layout
with 1-based ascending indices, and plain delimited numeric tables. The
sparse writer prints with %.17g so a write/read roundtrip reproduces every
float bit-exactly.
"""

import re

import numpy as np
import scipy.sparse as sp

__all__ = [
    "Dataset",
    "load_sparse_text",
    "write_sparse_text",
    "load_delimited",
    "split",
    "synth_student_t",
]


class Dataset:
    """Feature matrix plus targets; immutable after construction."""

    def __init__(self, features, targets, source="memory", split_seed=None):
        targets = np.asarray(targets, dtype=float).ravel()
        if features.shape[0] != targets.size:
            raise ValueError(
                f"row count {features.shape[0]} does not match target count {targets.size}"
            )
        if np.any(~np.isfinite(targets)):
            raise ValueError("targets contain NaN or inf")
        data = features.data if sp.issparse(features) else np.asarray(features)
        if np.any(~np.isfinite(data)):
            raise ValueError("features contain NaN or inf")
        self.features = features
        self.targets = targets
        self.source = source
        self.split_seed = split_seed

    @property
    def N(self):
        return self.features.shape[0]

    @property
    def n(self):
        return self.features.shape[1]

    def __repr__(self):
        kind = "sparse" if sp.issparse(self.features) else "dense"
        return f"Dataset({self.source!r}, N={self.N}, n={self.n}, {kind})"


_PAIR = re.compile(r"^(\d+):([^\s]+)$")


def _normalize_labels(labels):
    """Map {0,1} to {-1,+1}; anything outside {-1,0,+1} passes through as-is
    (regression targets use the same format)."""
    vals = set(np.unique(labels).tolist())
    if vals <= {-1.0, 1.0}:
        return labels
    if vals <= {0.0, 1.0}:
        out = labels.copy()
        out[out == 0.0] = -1.0
        return out
    return labels


def load_sparse_text(path):
    """Read `<label> <idx>:<val> ...` lines into a CSR matrix.

    Indices are 1-based and must be strictly ascending within a line;
    violations and malformed tokens report the offending line number.
    """
    labels = []
    indptr = [0]
    indices = []
    values = []
    n_cols = 0
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split()
            try:
                labels.append(float(parts[0]))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: bad label {parts[0]!r}")
            prev = 0
            for tok in parts[1:]:
                m = _PAIR.match(tok)
                if m is None:
                    raise ValueError(f"{path}:{lineno}: bad feature token {tok!r}")
                idx = int(m.group(1))
                if idx < 1:
                    raise ValueError(f"{path}:{lineno}: index {idx} is not 1-based")
                if idx <= prev:
                    raise ValueError(
                        f"{path}:{lineno}: index {idx} not ascending (previous {prev})"
                    )
                try:
                    val = float(m.group(2))
                except ValueError:
                    raise ValueError(f"{path}:{lineno}: bad value {m.group(2)!r}")
                indices.append(idx - 1)
                values.append(val)
                prev = idx
            n_cols = max(n_cols, prev)
            indptr.append(len(indices))
    if not labels:
        raise ValueError(f"{path}: empty file")
    A = sp.csr_matrix(
        (np.array(values), np.array(indices, dtype=np.int32), np.array(indptr)),
        shape=(len(labels), n_cols),
    )
    y = _normalize_labels(np.array(labels))
    return Dataset(A, y, source=str(path))


def write_sparse_text(path, ds):
    """Inverse of load_sparse_text; %.17g keeps the roundtrip bit-exact."""
    A = sp.csr_matrix(ds.features)
    with open(path, "w") as fh:
        for i in range(ds.N):
            lo, hi = A.indptr[i], A.indptr[i + 1]
            pairs = " ".join(
                f"{A.indices[j] + 1}:{A.data[j]:.17g}" for j in range(lo, hi)
            )
            label = ds.targets[i]
            head = f"{int(label)}" if label == int(label) else f"{label:.17g}"
            fh.write(f"{head} {pairs}".rstrip() + "\n")


def load_delimited(path, target_column=0):
    """Read a rectangular numeric table (comma or tab separated, optional
    header) into dense features plus one target column."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty file")
    delim = "\t" if "\t" in lines[0] else ","
    first = lines[0].split(delim)

    def numeric(cells):
        try:
            return [float(c) for c in cells]
        except ValueError:
            return None

    start = 0
    if numeric(first) is None:
        start = 1
        if len(lines) == 1:
            raise ValueError(f"{path}: header only, no data rows")
    rows = []
    width = None
    for lineno in range(start, len(lines)):
        cells = lines[lineno].split(delim)
        row = numeric(cells)
        if row is None:
            raise ValueError(f"{path}:{lineno + 1}: non-numeric cell")
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise ValueError(
                f"{path}:{lineno + 1}: ragged row ({len(row)} cells, expected {width})"
            )
        rows.append(row)
    table = np.array(rows)
    if not -table.shape[1] <= target_column < table.shape[1]:
        raise ValueError(f"target column {target_column} out of range")
    y = table[:, target_column]
    X = np.delete(table, target_column % table.shape[1], axis=1)
    return Dataset(X, _normalize_labels(y), source=str(path))


def split(ds, fraction, seed):
    """Seeded shuffle split into (train, validation); disjoint and exhaustive."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie strictly between 0 and 1")
    rng = np.random.Generator(np.random.Philox(seed))
    perm = rng.permutation(ds.N)
    cut = int(round(fraction * ds.N))
    tr, va = np.sort(perm[:cut]), np.sort(perm[cut:])
    train = Dataset(ds.features[tr], ds.targets[tr], source=ds.source, split_seed=seed)
    val = Dataset(ds.features[va], ds.targets[va], source=ds.source, split_seed=seed)
    return train, val


def _student_t_noise(rng, nu, size):
    # inverse-CDF Cauchy for nu=1; normal over sqrt(chi2/nu) otherwise
    if nu == 1.0:
        u = rng.random(size)
        return np.tan(np.pi * (u - 0.5))
    z = rng.standard_normal(size)
    w = rng.chisquare(nu, size)
    return z / np.sqrt(w / nu)


def synth_student_t(
    n=5000,
    N=4000,
    nnz=20,
    noise_scale=0.1,
    nu=1.0,
    sv_range=(1.0, 15.0),
    seed=0,
):
    """Sparse ground truth, conditioned design, heavy-tailed noise.

    A starts uniform on [-1, 1], then its nonzero singular values are
    rescaled affinely into sv_range; x_hat has exactly nnz standard-normal
    entries on a uniform support; b = A x_hat + noise_scale * Student-t(nu)
    noise. Returns (Dataset, x_hat).
    """
    if nnz > n:
        raise ValueError("nnz exceeds dimension n")
    lo, hi = float(sv_range[0]), float(sv_range[1])
    if not 0.0 < lo <= hi:
        raise ValueError("sv_range must satisfy 0 < lo <= hi")
    rng = np.random.Generator(np.random.Philox(seed))
    A0 = rng.uniform(-1.0, 1.0, size=(N, n))
    U, s, Vt = np.linalg.svd(A0, full_matrices=False)
    smin, smax = s.min(), s.max()
    if smax - smin < 1e-12 * max(1.0, smax):
        s_new = np.full_like(s, lo)
    else:
        s_new = lo + (s - smin) * (hi - lo) / (smax - smin)
    A = (U * s_new) @ Vt
    x_hat = np.zeros(n)
    support = rng.choice(n, size=nnz, replace=False)
    x_hat[support] = rng.standard_normal(nnz)
    eps = _student_t_noise(rng, float(nu), N)
    b = A @ x_hat + noise_scale * eps
    ds = Dataset(A, b, source=f"synth-student-t-seed{seed}")
    return ds, x_hat
