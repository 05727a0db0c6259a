"""Sparse adjacency and cosine-similarity k-NN graph construction.

Graphs are stored in compressed-row form with per-arc weights (1.0 for
structural adjacency, cosine similarity for k-NN arcs).  Column indices are
kept sorted within each row, which makes duplicate detection and deterministic
iteration trivial.  Built graphs are immutable and safe to share across
threads.

The k-NN builder has two modes:

* exact: every other node is a candidate; O(n^2 d) via row-chunked matrix
  products (default for n <= 50,000);
* sampled: each node scores a seed-keyed uniform sample of M candidates,
  O(n M d).  With M = n - 1 the sampled candidate set is all other nodes and
  the result equals exact mode.
"""

from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError

EXACT_MODE_MAX_N = 50_000
_CHUNK_TARGET = 1 << 22  # elements per similarity block
_CACHE_MAGIC = b"SNPG"


@dataclass(frozen=True)
class SparseGraph:
    """Compressed-row adjacency with weighted arcs.

    ``degrees[i]`` is the sum of row i's weights (exact, via ``math.fsum``).
    """

    n: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    weights: np.ndarray
    degrees: np.ndarray

    def __post_init__(self):
        ro = np.asarray(self.row_offsets, dtype=np.int64)
        ci = np.asarray(self.col_indices, dtype=np.int64)
        w = np.asarray(self.weights, dtype=np.float64)
        if ro.shape != (self.n + 1,) or ro[0] != 0 or ro[-1] != ci.shape[0]:
            raise ValidationError("inconsistent row offsets")
        if (np.diff(ro) < 0).any():
            raise ValidationError("row offsets must be nondecreasing")
        if w.shape != ci.shape:
            raise ValidationError("weights/col_indices length mismatch")
        if ci.size:
            if ci.min() < 0 or ci.max() >= self.n:
                raise ValidationError("column index out of range")
            # rows sorted by column index; duplicates show up as non-increase
            interior = np.ones(ci.size, dtype=bool)
            starts = ro[1:-1]
            interior[starts[starts < ci.size]] = False  # row starts may break monotonicity
            if not (ci[1:][interior[1:]] > ci[:-1][interior[1:]]).all():
                raise ValidationError("rows must hold strictly increasing column indices")

    @property
    def nnz(self) -> int:
        return int(self.col_indices.shape[0])

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.row_offsets[i], self.row_offsets[i + 1]
        return self.col_indices[lo:hi], self.weights[lo:hi]


@dataclass(frozen=True)
class KnnConfig:
    """k-NN build parameters.

    ``sample_size`` enables sampled mode; it must dominate ``k`` (at least
    10x) to keep the candidate pools meaningful.
    """

    k: int
    sample_size: int | None = None
    seed: int = 0
    min_similarity: float = 0.0
    force_exact: bool = False

    def __post_init__(self):
        if self.k < 0:
            raise ValidationError("k must be >= 0")
        if self.sample_size is not None and self.sample_size < 10 * self.k:
            raise ValidationError(
                f"sample_size={self.sample_size} too small: need >= 10*k = {10 * self.k}"
            )


def _freeze(*arrays: np.ndarray) -> None:
    for a in arrays:
        a.setflags(write=False)


def _make_graph(n: int, row_cols: list[np.ndarray], row_weights: list[np.ndarray]) -> SparseGraph:
    counts = np.fromiter((len(c) for c in row_cols), count=n, dtype=np.int64)
    row_offsets = np.concatenate([[0], np.cumsum(counts)])
    if counts.sum():
        col_indices = np.concatenate(row_cols)
        weights = np.concatenate(row_weights)
    else:
        col_indices = np.empty(0, dtype=np.int64)
        weights = np.empty(0, dtype=np.float64)
    degrees = np.array(
        [math.fsum(w) for w in row_weights], dtype=np.float64
    ) if n else np.empty(0)
    col_indices = col_indices.astype(np.int64)
    weights = weights.astype(np.float64)
    _freeze(row_offsets, col_indices, weights, degrees)
    return SparseGraph(n, row_offsets, col_indices, weights, degrees)


def empty_graph(n: int) -> SparseGraph:
    return _make_graph(n, [np.empty(0, dtype=np.int64)] * n, [np.empty(0)] * n)


def from_arcs(n: int, arcs: np.ndarray, weights: np.ndarray | None = None) -> SparseGraph:
    """Build a graph from a directed arc list; duplicate arcs are rejected."""
    arcs = np.asarray(arcs, dtype=np.int64).reshape(-1, 2)
    if arcs.size and (arcs.min() < 0 or arcs.max() >= n):
        raise ValidationError(f"arc endpoint out of range (n={n})")
    if weights is None:
        weights = np.ones(arcs.shape[0], dtype=np.float64)
    else:
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape[0] != arcs.shape[0]:
            raise ValidationError("weights length must match arc count")
    order = np.lexsort((arcs[:, 1], arcs[:, 0]))
    arcs, weights = arcs[order], weights[order]
    if arcs.shape[0] > 1:
        dup = (np.diff(arcs[:, 0]) == 0) & (np.diff(arcs[:, 1]) == 0)
        if dup.any():
            u, v = arcs[1:][dup][0]
            raise ValidationError(f"duplicate arc ({u}, {v})")
    counts = np.bincount(arcs[:, 0], minlength=n)
    row_offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    col_indices = arcs[:, 1].copy()
    degrees = np.zeros(n, dtype=np.float64)
    for i in range(n):
        lo, hi = row_offsets[i], row_offsets[i + 1]
        if hi > lo:
            degrees[i] = math.fsum(weights[lo:hi])
    weights = weights.copy()
    _freeze(row_offsets, col_indices, weights, degrees)
    return SparseGraph(n, row_offsets, col_indices, weights, degrees)


def adjacency_graph(n: int, arcs: np.ndarray) -> SparseGraph:
    """Structural adjacency (unit weights) from symmetrized arcs."""
    return from_arcs(n, arcs)


def cosine_similarity(x: np.ndarray, y: np.ndarray) -> float:
    """x.y / (|x||y|); 0 when either vector has zero norm."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ValidationError(f"dimension mismatch: {x.shape[0]} vs {y.shape[0]}")
    nx = math.sqrt(float(np.dot(x, x)))
    ny = math.sqrt(float(np.dot(y, y)))
    if nx == 0.0 or ny == 0.0:
        return 0.0
    return float(np.dot(x, y) / (nx * ny))


def _normalized_rows(features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.sqrt(np.einsum("nd,nd->n", features, features))
    zero = norms == 0.0
    safe = np.where(zero, 1.0, norms)
    return features / safe[:, None], zero


def _pairwise_sims(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # einsum (no BLAS dispatch) keeps each dot product bit-identical no matter
    # where the row sits, so relabeling nodes cannot perturb similarities
    return np.einsum("id,jd->ij", a, b, optimize=False)


def _select_top(sims: np.ndarray, k: int, min_similarity: float,
                cand_idx: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Top-k by similarity, ties to the smaller node index, threshold applied.

    ``sims`` must already carry -inf at excluded positions.  When ``cand_idx``
    is given, similarities are positional into it and it must be sorted
    ascending so the stable sort's tie order matches global node order.
    """
    order = np.argsort(-sims, kind="stable")[:k]
    chosen = sims[order] > min_similarity
    order = order[chosen]
    vals = sims[order]
    cols = order if cand_idx is None else cand_idx[order]
    srt = np.argsort(cols)
    return cols[srt], vals[srt]


def build_knn_graph(features: np.ndarray, cfg: KnnConfig) -> SparseGraph:
    """Directed graph of each node's k most cosine-similar peers.

    Arc weights are the similarities; arcs at or below ``min_similarity`` are
    dropped, so zero-norm feature rows end up with no arcs (a warning reports
    how many).  Deterministic given (features, cfg.seed).
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise ValidationError("features must be 2-D")
    n = features.shape[0]
    if cfg.k >= n:
        raise ValidationError(f"k={cfg.k} must be < n={n}")
    if cfg.sample_size is None and n > EXACT_MODE_MAX_N and not cfg.force_exact:
        raise ValidationError(
            f"n={n} exceeds exact-mode limit {EXACT_MODE_MAX_N}; "
            "set sample_size (or force_exact)"
        )
    if cfg.sample_size is not None and cfg.sample_size > n:
        raise ValidationError(f"sample_size={cfg.sample_size} exceeds n={n}")

    row_cols: list[np.ndarray] = [np.empty(0, dtype=np.int64)] * n
    row_weights: list[np.ndarray] = [np.empty(0)] * n
    if cfg.k == 0 or n == 0:
        return _make_graph(n, row_cols, row_weights)

    normed, zero_rows = _normalized_rows(features)
    if zero_rows.any():
        warnings.warn(
            f"{int(zero_rows.sum())} zero-norm feature row(s) get no neighbors",
            stacklevel=2,
        )

    if cfg.sample_size is None:
        chunk = max(1, _CHUNK_TARGET // max(n, 1))
        for start in range(0, n, chunk):
            stop = min(start + chunk, n)
            sims = _pairwise_sims(normed[start:stop], normed)
            sims[np.arange(start, stop) - start, np.arange(start, stop)] = -np.inf
            for i in range(start, stop):
                cols, vals = _select_top(sims[i - start], cfg.k, cfg.min_similarity)
                row_cols[i], row_weights[i] = cols.astype(np.int64), vals
    else:
        m = min(cfg.sample_size, n - 1)
        for i in range(n):
            rng = np.random.default_rng([cfg.seed & 0xFFFFFFFF, i])
            # uniform M-subset of the other n-1 nodes, keyed by (seed, row)
            pool = rng.choice(n - 1, size=m, replace=False)
            pool = np.sort(pool)
            pool[pool >= i] += 1
            sims = _pairwise_sims(normed[pool], normed[i:i + 1])[:, 0]
            cols, vals = _select_top(sims, cfg.k, cfg.min_similarity, cand_idx=pool)
            row_cols[i], row_weights[i] = cols.astype(np.int64), vals

    return _make_graph(n, row_cols, row_weights)


def row_normalize(g: SparseGraph) -> SparseGraph:
    """Rescale each nonempty row to sum to 1; empty rows stay empty."""
    new_weights = g.weights.copy()
    degrees = np.zeros(g.n, dtype=np.float64)
    for i in range(g.n):
        lo, hi = g.row_offsets[i], g.row_offsets[i + 1]
        if hi == lo:
            continue
        deg = math.fsum(g.weights[lo:hi])
        if deg <= 0.0:
            raise ValidationError(
                f"row {i} has nonpositive degree {deg}; row normalization needs "
                "nonnegative weights (min_similarity >= 0)"
            )
        new_weights[lo:hi] = g.weights[lo:hi] / deg
        degrees[i] = math.fsum(new_weights[lo:hi])
    _freeze(new_weights, degrees)
    return SparseGraph(g.n, g.row_offsets, g.col_indices, new_weights, degrees)


def save_knn_cache(g: SparseGraph, path, feature_hash: bytes, cfg: KnnConfig) -> None:
    """Sidecar cache keyed by feature-file hash and build parameters."""
    if len(feature_hash) != 32:
        raise ValidationError("feature_hash must be a 32-byte sha256 digest")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_CACHE_MAGIC)
        fh.write(struct.pack(
            "<IQIIqd", g.n, g.nnz, cfg.k, cfg.sample_size or 0,
            cfg.seed, cfg.min_similarity,
        ))
        fh.write(feature_hash)
        fh.write(g.row_offsets.astype("<u8").tobytes())
        fh.write(g.col_indices.astype("<u4").tobytes())
        fh.write(g.weights.astype("<f8").tobytes())


def load_knn_cache(path, feature_hash: bytes, cfg: KnnConfig) -> SparseGraph:
    """Load a cached graph; rejects caches built with a different key."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"no such cache file: {path}")
    raw = path.read_bytes()
    header = struct.calcsize("<IQIIqd")
    if len(raw) < 4 + header + 32 or raw[:4] != _CACHE_MAGIC:
        raise ValidationError(f"{path}: not a k-NN cache file")
    n, nnz, k, m, seed, min_sim = struct.unpack("<IQIIqd", raw[4:4 + header])
    stored_hash = raw[4 + header:4 + header + 32]
    key = (k, m or 0, seed, min_sim)
    want = (cfg.k, cfg.sample_size or 0, cfg.seed, cfg.min_similarity)
    if stored_hash != feature_hash or key != want:
        raise ValidationError(f"{path}: cache key mismatch (stale cache?)")
    off = 4 + header + 32
    ro = np.frombuffer(raw, dtype="<u8", count=n + 1, offset=off).astype(np.int64)
    off += (n + 1) * 8
    ci = np.frombuffer(raw, dtype="<u4", count=nnz, offset=off).astype(np.int64)
    off += nnz * 4
    w = np.frombuffer(raw, dtype="<f8", count=nnz, offset=off).astype(np.float64)
    degrees = np.zeros(n, dtype=np.float64)
    for i in range(n):
        lo, hi = ro[i], ro[i + 1]
        if hi > lo:
            degrees[i] = math.fsum(w[lo:hi])
    _freeze(ro, ci, w, degrees)
    return SparseGraph(int(n), ro, ci, w, degrees)
