"""Dense-matrix file formats and dataset-bundle ingestion.

Matrices travel as plain 2-D float64 ``numpy`` arrays.  Two on-disk formats
are supported:

* binary: magic ``SNPM``, two little-endian uint32 dims (rows, cols), then
  rows*cols little-endian float32 values, row-major;
* csv: header-less numeric rows.

A dataset bundle groups node features (N x d), predicted probabilities
(N x K), integer labels in [0, K) and an undirected edge list, wired
together by a small ``key = value`` manifest file.
"""

from __future__ import annotations

import hashlib
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError

# numpy arrays are the universal carriers; the aliases document intent.
DenseMatrix = np.ndarray
LabelVector = np.ndarray

_MAGIC = b"SNPM"
PROB_ROW_SUM_TOL = 1e-4

_MANIFEST_KEYS = ("features", "probabilities", "labels", "edges", "classes")


@dataclass(frozen=True)
class DatasetBundle:
    """Validated, immutable view of one dataset.

    ``edges`` holds deduplicated directed arcs (both directions of every
    undirected edge, self-loops removed) sorted lexicographically.
    """

    name: str
    features: np.ndarray
    probabilities: np.ndarray
    labels: np.ndarray
    num_classes: int
    edges: np.ndarray
    self_loops_dropped: int = 0

    @property
    def n(self) -> int:
        return self.features.shape[0]


def validate_matrix(mat: np.ndarray, what: str = "matrix") -> np.ndarray:
    """Coerce to 2-D float64 and reject non-finite entries."""
    mat = np.asarray(mat, dtype=np.float64)
    if mat.ndim != 2:
        raise ValidationError(f"{what}: expected 2-D array, got ndim={mat.ndim}")
    bad = ~np.isfinite(mat)
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise ValidationError(f"{what}: non-finite value at row {r}, col {c}")
    return mat


def _infer_format(path: Path) -> str:
    if path.suffix == ".csv":
        return "csv"
    return "binary"


def load_matrix(path, format: str | None = None) -> np.ndarray:
    """Load a dense matrix from ``path`` in the given (or inferred) format."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"no such file: {path}")
    fmt = format or _infer_format(path)
    if fmt == "binary":
        return _load_binary(path)
    if fmt == "csv":
        return _load_csv(path)
    raise ValidationError(f"unknown matrix format: {fmt!r}")


def _load_binary(path: Path) -> np.ndarray:
    raw = path.read_bytes()
    if len(raw) < 12 or raw[:4] != _MAGIC:
        raise ValidationError(f"{path}: missing {_MAGIC.decode()} header")
    rows, cols = struct.unpack("<II", raw[4:12])
    payload = raw[12:]
    expected = rows * cols * 4
    if len(payload) != expected:
        raise ValidationError(
            f"{path}: header says {rows}x{cols} ({expected} payload bytes), "
            f"found {len(payload)}"
        )
    data = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    return validate_matrix(data.reshape(rows, cols), str(path))


def _load_csv(path: Path) -> np.ndarray:
    rows: list[list[float]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            parsed = []
            for colno, cell in enumerate(cells):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise ValidationError(
                        f"{path}: malformed cell at row {lineno}, col {colno}: {cell!r}"
                    ) from None
            rows.append(parsed)
    if not rows:
        raise ValidationError(f"{path}: empty CSV matrix")
    width = len(rows[0])
    for lineno, row in enumerate(rows, start=1):
        if len(row) != width:
            raise ValidationError(
                f"{path}: ragged CSV, row {lineno} has {len(row)} cells, expected {width}"
            )
    return validate_matrix(np.array(rows, dtype=np.float64), str(path))


def write_matrix(mat: np.ndarray, path, format: str | None = None) -> None:
    """Write a matrix; binary payload is float32 little-endian, row-major."""
    path = Path(path)
    mat = validate_matrix(mat, "matrix to write")
    fmt = format or _infer_format(path)
    if fmt == "binary":
        rows, cols = mat.shape
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<II", rows, cols))
            fh.write(np.ascontiguousarray(mat, dtype="<f4").tobytes())
    elif fmt == "csv":
        with open(path, "w", encoding="utf-8") as fh:
            for row in mat:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
    else:
        raise ValidationError(f"unknown matrix format: {fmt!r}")


def load_labels(path, num_classes: int | None = None) -> np.ndarray:
    """One integer label per line."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"no such file: {path}")
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(int(line))
            except ValueError:
                raise ValidationError(
                    f"{path}: bad label at line {lineno}: {line!r}"
                ) from None
    labels = np.asarray(out, dtype=np.int64)
    if labels.size and labels.min() < 0:
        raise ValidationError(f"{path}: negative label")
    if num_classes is not None and labels.size and labels.max() >= num_classes:
        raise ValidationError(
            f"{path}: label {labels.max()} out of range for {num_classes} classes"
        )
    return labels


def load_edges(path) -> np.ndarray:
    """Whitespace-separated node-index pairs, one edge per line."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"no such file: {path}")
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValidationError(f"{path}: expected 'u v' at line {lineno}")
            try:
                pairs.append((int(parts[0]), int(parts[1])))
            except ValueError:
                raise ValidationError(
                    f"{path}: bad edge endpoints at line {lineno}"
                ) from None
    return np.asarray(pairs, dtype=np.int64).reshape(-1, 2)


def _parse_manifest(path: Path) -> dict[str, str]:
    entries: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValidationError(f"{path}: expected 'key = value' at line {lineno}")
            key, _, value = line.partition("=")
            entries[key.strip()] = value.strip()
    missing = [k for k in _MANIFEST_KEYS if k not in entries]
    if missing:
        raise ValidationError(f"{path}: manifest missing keys {missing}")
    return entries


def symmetrize_edges(edges: np.ndarray, n: int) -> tuple[np.ndarray, int]:
    """Drop self-loops, mirror every edge and deduplicate.

    Returns (directed arcs sorted lexicographically, self-loops dropped).
    """
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.size:
        if edges.min() < 0 or edges.max() >= n:
            bad = edges[(edges < 0).any(axis=1) | (edges >= n).any(axis=1)][0]
            raise ValidationError(f"edge endpoint out of range: {tuple(bad)} (n={n})")
    loops = edges[:, 0] == edges[:, 1]
    dropped = int(loops.sum())
    edges = edges[~loops]
    if edges.size == 0:
        return np.empty((0, 2), dtype=np.int64), dropped
    arcs = np.concatenate([edges, edges[:, ::-1]], axis=0)
    arcs = np.unique(arcs, axis=0)
    return arcs, dropped


def make_bundle(
    name: str,
    features: np.ndarray,
    probabilities: np.ndarray,
    labels: np.ndarray,
    num_classes: int,
    edges: np.ndarray,
    renormalize: bool = False,
) -> DatasetBundle:
    """Cross-validate the pieces of a dataset and assemble a bundle.

    Probability rows are validated against a unit sum, never silently fixed;
    pass ``renormalize=True`` to rescale rows explicitly.
    """
    features = validate_matrix(features, "features")
    probabilities = validate_matrix(probabilities, "probabilities")
    labels = np.asarray(labels, dtype=np.int64)
    n = features.shape[0]
    if probabilities.shape[0] != n or labels.shape[0] != n:
        raise ValidationError(
            f"row-count mismatch: features {n}, probabilities "
            f"{probabilities.shape[0]}, labels {labels.shape[0]}"
        )
    if num_classes < 1:
        raise ValidationError("num_classes must be >= 1")
    if probabilities.shape[1] != num_classes:
        raise ValidationError(
            f"probabilities have {probabilities.shape[1]} columns, expected {num_classes}"
        )
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        bad = int(np.argmax((labels < 0) | (labels >= num_classes)))
        raise ValidationError(
            f"label {labels[bad]} at row {bad} out of range [0, {num_classes})"
        )
    sums = probabilities.sum(axis=1)
    if renormalize:
        if (sums <= 0).any():
            raise ValidationError("cannot renormalize: nonpositive probability row sum")
        probabilities = probabilities / sums[:, None]
    else:
        off = np.abs(sums - 1.0) > PROB_ROW_SUM_TOL
        if off.any():
            r = int(np.argmax(off))
            raise ValidationError(
                f"probability row {r} sums to {sums[r]:.6f}, expected 1 "
                f"+/- {PROB_ROW_SUM_TOL:g}"
            )
    arcs, dropped = symmetrize_edges(edges, n)
    if dropped:
        warnings.warn(f"{name}: dropped {dropped} self-loop edge(s)", stacklevel=2)
    features.setflags(write=False)
    probabilities.setflags(write=False)
    labels.setflags(write=False)
    arcs.setflags(write=False)
    return DatasetBundle(
        name=name,
        features=features,
        probabilities=probabilities,
        labels=labels,
        num_classes=num_classes,
        edges=arcs,
        self_loops_dropped=dropped,
    )


def load_bundle(manifest, renormalize: bool = False) -> DatasetBundle:
    """Load and cross-validate the dataset named by a manifest file."""
    manifest = Path(manifest)
    if not manifest.exists():
        raise ValidationError(f"no such manifest: {manifest}")
    entries = _parse_manifest(manifest)
    base = manifest.parent
    try:
        num_classes = int(entries["classes"])
    except ValueError:
        raise ValidationError(f"{manifest}: classes must be an integer") from None
    name = entries.get("name", manifest.stem)
    features = load_matrix(base / entries["features"])
    probabilities = load_matrix(base / entries["probabilities"])
    labels = load_labels(base / entries["labels"], num_classes)
    edges = load_edges(base / entries["edges"])
    return make_bundle(
        name, features, probabilities, labels, num_classes, edges,
        renormalize=renormalize,
    )


def save_bundle(bundle: DatasetBundle, out_dir) -> Path:
    """Write a bundle's files plus a manifest; returns the manifest path.

    Edges are stored once per undirected pair (u < v).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_matrix(bundle.features, out_dir / "features.snpm")
    write_matrix(bundle.probabilities, out_dir / "probabilities.snpm")
    with open(out_dir / "labels.txt", "w", encoding="utf-8") as fh:
        for lab in bundle.labels:
            fh.write(f"{int(lab)}\n")
    upper = bundle.edges[bundle.edges[:, 0] < bundle.edges[:, 1]]
    with open(out_dir / "edges.txt", "w", encoding="utf-8") as fh:
        for u, v in upper:
            fh.write(f"{int(u)} {int(v)}\n")
    manifest = out_dir / "manifest.txt"
    with open(manifest, "w", encoding="utf-8") as fh:
        fh.write(f"name = {bundle.name}\n")
        fh.write("features = features.snpm\n")
        fh.write("probabilities = probabilities.snpm\n")
        fh.write("labels = labels.txt\n")
        fh.write("edges = edges.txt\n")
        fh.write(f"classes = {bundle.num_classes}\n")
    return manifest


def file_sha256(path) -> bytes:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.digest()


# report serialization lives in report.py but belongs to the same file-format
# surface, so it is re-exported here
from .report import read_report, write_report  # noqa: E402,F401
