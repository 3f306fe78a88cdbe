"""File formats: dataset and label CSVs, JSON records, run manifests, binary matrices.

CSV floats are written with 17 significant digits so they read back
bit for bit. The binary matrix format is little-endian: the magic bytes
``DPKM``, a u64 order and a u8 kind, followed by the payload of that kind.
"""

import csv
import json
import os
import platform
import struct
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp

from .datagen import Dataset
from .kernel import SparseSym, SymmetricDense
from .nngp import NNGPFactor

__all__ = [
    "DataError",
    "fmt_float",
    "write_dataset_csv",
    "read_dataset_csv",
    "write_labels_csv",
    "read_labels_csv",
    "write_json",
    "read_json",
    "RunManifest",
    "write_matrix",
    "read_matrix",
    "KIND_PACKED",
    "KIND_SPARSE",
    "KIND_FACTOR",
]

MAGIC = b"DPKM"
KIND_PACKED, KIND_SPARSE, KIND_FACTOR = 0, 1, 2
_HEADER = struct.Struct("<4sQB")


class DataError(ValueError):
    """Malformed or inconsistent input file."""


def fmt_float(x):
    return format(float(x), ".17g")


def write_dataset_csv(path, dataset):
    """One row per point: ``x0..x{p-1}`` and a trailing ``label`` when known."""
    X = dataset.points
    header = [f"x{j}" for j in range(X.shape[1])]
    with_labels = dataset.labels is not None
    if with_labels:
        header.append("label")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, row in enumerate(X):
            cells = [fmt_float(v) for v in row]
            if with_labels:
                cells.append(str(int(dataset.labels[i])))
            w.writerow(cells)


def read_dataset_csv(path, label_column="label", reciprocal=False):
    """Read a numeric CSV with a header row.

    A column named ``label_column`` becomes the labels. With ``reciprocal``
    every value is replaced by its multiplicative inverse (zeros rejected).
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if len(rows) < 2:
        raise DataError(f"{path}: need a header and at least one data row")
    header, body = rows[0], [r for r in rows[1:] if r]
    width = len(header)
    if any(len(r) != width for r in body):
        raise DataError(f"{path}: ragged rows")
    lab_at = header.index(label_column) if label_column in header else None
    feat = [j for j in range(width) if j != lab_at]
    if not feat:
        raise DataError(f"{path}: no feature columns")
    try:
        X = np.array([[float(r[j]) for j in feat] for r in body], dtype=np.float64)
        labels = None if lab_at is None else np.array([int(r[lab_at]) for r in body], dtype=np.int64)
    except ValueError as exc:
        raise DataError(f"{path}: non-numeric entry ({exc})") from exc
    if reciprocal:
        if np.any(X == 0):
            raise DataError(f"{path}: reciprocal transform of a zero entry")
        X = 1.0 / X
    if not np.all(np.isfinite(X)):
        raise DataError(f"{path}: NaN or Inf entries")
    return Dataset(X, labels, {"source": os.fspath(path), "reciprocal": bool(reciprocal)})


def write_labels_csv(path, labels):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["point_index", "cluster_id"])
        for i, c in enumerate(np.asarray(labels)):
            w.writerow([i, int(c)])


def read_labels_csv(path):
    """Return labels ordered by ``point_index`` (which must be ``0..n-1``).

    Also accepts a dataset CSV, taking its ``label`` column.
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh) if r]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DataError(f"{path}: empty file")
    header = rows[0]
    try:
        if "point_index" in header and "cluster_id" in header:
            a, b = header.index("point_index"), header.index("cluster_id")
            idx = np.array([int(r[a]) for r in rows[1:]], dtype=np.int64)
            lab = np.array([int(r[b]) for r in rows[1:]], dtype=np.int64)
        elif "label" in header:
            b = header.index("label")
            lab = np.array([int(r[b]) for r in rows[1:]], dtype=np.int64)
            idx = np.arange(lab.size)
        else:
            raise DataError(f"{path}: expected point_index,cluster_id or a label column")
    except (ValueError, IndexError) as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(f"{path}: malformed row ({exc})") from exc
    order = np.argsort(idx, kind="stable")
    if not np.array_equal(idx[order], np.arange(idx.size)):
        raise DataError(f"{path}: point indices are not 0..n-1")
    return lab[order]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if np.isfinite(x) else None
    return obj


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read JSON {path}: {exc}") from exc


def _versions():
    import scipy
    import sklearn

    from . import __version__

    return {
        "dppcluster": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "scikit-learn": sklearn.__version__,
    }


@dataclass
class RunManifest:
    """What was run, with which settings, on which inputs."""

    command: str
    config: dict
    seed: int
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    versions: dict = field(default_factory=_versions)

    def to_dict(self):
        return asdict(self)

    def write(self, path):
        write_json(path, self.to_dict())

    @classmethod
    def read(cls, path):
        return cls(**read_json(path))


def write_matrix(path, M):
    """Dump a SymmetricDense, SparseSym or NNGPFactor to the binary format."""
    if isinstance(M, SymmetricDense):
        kind, n = KIND_PACKED, M.order
        payload = [np.asarray(M.packed, "<f8")]
    elif isinstance(M, SparseSym):
        kind, n = KIND_SPARSE, M.order
        A = M.matrix.tocsr()
        payload = [
            np.array([A.nnz], "<u8"),
            A.indptr.astype("<i8"),
            A.indices.astype("<i8"),
            A.data.astype("<f8"),
        ]
    elif isinstance(M, NNGPFactor):
        kind, n = KIND_FACTOR, M.order
        A = M.strictly_lower()
        payload = [
            np.array([M.m, A.nnz], "<u8"),
            np.array([M.ridge], "<f8"),
            np.asarray(M.D, "<f8"),
            A.indptr.astype("<i8"),
            A.indices.astype("<i8"),
            A.data.astype("<f8"),
        ]
    else:
        raise TypeError(f"cannot serialize {type(M).__name__}")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, n, kind))
        for arr in payload:
            fh.write(arr.tobytes())


def read_matrix(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < _HEADER.size:
        raise DataError(f"{path}: truncated header")
    magic, n, kind = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}")
    pos = _HEADER.size

    def take(dtype, count):
        nonlocal pos
        size = np.dtype(dtype).itemsize * count
        if pos + size > len(buf):
            raise DataError(f"{path}: truncated payload")
        out = np.frombuffer(buf, dtype=dtype, count=count, offset=pos).copy()
        pos += size
        return out

    if kind == KIND_PACKED:
        return SymmetricDense(n, take("<f8", n * (n + 1) // 2).astype(np.float64))
    if kind == KIND_SPARSE:
        nnz = int(take("<u8", 1)[0])
        indptr, indices, data = take("<i8", n + 1), take("<i8", nnz), take("<f8", nnz)
        return SparseSym(sp.csr_matrix((data, indices, indptr), shape=(n, n)))
    if kind == KIND_FACTOR:
        m, nnz = (int(v) for v in take("<u8", 2))
        ridge = float(take("<f8", 1)[0])
        D = take("<f8", n).astype(np.float64)
        indptr, indices, data = take("<i8", n + 1), take("<i8", nnz), take("<f8", nnz)
        nbrs = [indices[indptr[i]:indptr[i + 1]].astype(np.int64) for i in range(n)]
        vals = [data[indptr[i]:indptr[i + 1]].astype(np.float64) for i in range(n)]
        return NNGPFactor(n, nbrs, vals, D, m, ridge)
    raise DataError(f"{path}: unknown matrix kind {kind}")
