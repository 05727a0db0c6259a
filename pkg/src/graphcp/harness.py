"""Experiment orchestration: repeated conformal trials over random splits,
hyperparameter tuning, the same-label oracle sweep, the graph-free image
mode, and a synthetic planted-partition generator for desk-scale checks.

Protocol per trial: sample 20 train + 20 valid nodes per class, pool the
rest, split the pool into calibration and test (calibration size
min(1000, pool/2) by default).  Methods with hyperparameters split their
calibration set in half - one half tunes on a grid (calibrate on half of it,
measure Size on the rest, ties broken by higher singleton-hit then smaller
total weight), the other half feeds the final conformal calibration.
Tuning therefore never sees the final calibration half or the test set.

Everything is driven by integer seeds: per-trial generators are derived from
(seed, stage, model split, conformal split), so serial and threaded runs
(env var ``GRAPHCP_THREADS``) produce identical reports.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .conformal import calibrate, conformal_rank, predict_sets
from .errors import ValidationError
from .graph import KnnConfig, adjacency_graph, build_knn_graph, empty_graph
from .matrixio import DatasetBundle, make_bundle
from .metrics import evaluate, sscv
from .propagate import (
    NeighborMeans,
    SnapsParams,
    combine_scores,
    image_snaps,
    neighbor_means,
    oracle_aggregate,
)
from .report import TrialReport, TrialResult, make_report
from .scores import (
    RapsParams,
    ScoreMatrix,
    XiPolicy,
    aps_scores,
    probability_ranks,
    raps_penalty,
)

_MASK32 = 0xFFFFFFFF
METHODS = ("aps", "raps", "daps", "snaps")
BASES = ("aps", "raps")
RAPS_LAMBDA_GRID = (0.001, 0.01, 0.05, 0.1, 0.2, 0.5, 1.0)
RAPS_MAX_KREG = 8
THREADS_ENV = "GRAPHCP_THREADS"
TRAIN_PER_CLASS = 20
VALID_PER_CLASS = 20


@dataclass(frozen=True)
class SplitIndices:
    """Disjoint train/valid/calib/test node-index sets (sorted arrays)."""

    train: np.ndarray
    valid: np.ndarray
    calib: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        parts = [np.asarray(p, dtype=np.int64) for p in
                 (self.train, self.valid, self.calib, self.test)]
        merged = np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)
        if np.unique(merged).shape[0] != merged.shape[0]:
            raise ValidationError("split index sets must be pairwise disjoint")


@dataclass(frozen=True)
class ExperimentConfig:
    alpha: float = 0.05
    method: str = "snaps"
    base: str = "aps"
    knn: KnnConfig = field(default_factory=lambda: KnnConfig(k=20))
    grid_step: float = 0.05
    n_model_splits: int = 10
    n_conformal_splits: int = 100
    calib_rule: str = "min_1000_half"  # calib = min(1000, pool // 2)
    calib_size: int = 1000
    seed: int = 0
    params: SnapsParams | None = None      # forced aggregation weights, skips tuning
    raps_params: RapsParams | None = None  # forced regularization, skips tuning

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValidationError("alpha must lie in (0, 1)")
        if self.method not in METHODS:
            raise ValidationError(f"unknown method {self.method!r}")
        if self.base not in BASES:
            raise ValidationError(f"unknown base score {self.base!r}")
        _grid_steps(self.grid_step)
        if self.n_model_splits < 1 or self.n_conformal_splits < 1:
            raise ValidationError("split/trial counts must be >= 1")
        if self.calib_rule not in ("min_1000_half", "fixed"):
            raise ValidationError(f"unknown calib_rule {self.calib_rule!r}")
        if self.calib_rule == "fixed" and self.calib_size < 1:
            raise ValidationError("fixed calibration size must be >= 1")
        if self.method == "daps" and self.params is not None and self.params.lam != 0.0:
            raise ValidationError("daps admits only the mu weight (lam must be 0)")


def _grid_steps(grid_step: float) -> int:
    if grid_step <= 0 or grid_step > 1:
        raise ValidationError("grid_step must lie in (0, 1]")
    steps = round(1.0 / grid_step)
    if abs(steps * grid_step - 1.0) > 1e-9:
        raise ValidationError(f"grid_step={grid_step} must divide 1 evenly")
    return steps


def snaps_param_grid(grid_step: float, mu_only: bool = False) -> list[SnapsParams]:
    """All (lam, mu) grid points with lam + mu <= 1 (231 for step 0.05)."""
    steps = _grid_steps(grid_step)
    vals = [round(i * grid_step, 12) for i in range(steps + 1)]
    if mu_only:
        return [SnapsParams(0.0, v) for v in vals]
    return [SnapsParams(vals[i], vals[j])
            for i in range(steps + 1) for j in range(steps + 1 - i)]


def _derive_seed(*keys: int) -> int:
    state = np.random.SeedSequence([k & _MASK32 for k in keys]).generate_state(2)
    return (int(state[0]) << 32) | int(state[1])


def _sample_train_valid(labels: np.ndarray, num_classes: int, rng) -> tuple:
    train_parts, valid_parts = [], []
    for c in range(num_classes):
        members = np.flatnonzero(labels == c)
        need = TRAIN_PER_CLASS + VALID_PER_CLASS
        if members.shape[0] < need:
            raise ValidationError(
                f"class {c} has {members.shape[0]} nodes; the per-class split "
                f"rule needs >= {need}"
            )
        perm = rng.permutation(members)
        train_parts.append(perm[:TRAIN_PER_CLASS])
        valid_parts.append(perm[TRAIN_PER_CLASS:need])
    train = np.sort(np.concatenate(train_parts))
    valid = np.sort(np.concatenate(valid_parts))
    held = np.concatenate([train, valid])
    pool = np.setdiff1d(np.arange(labels.shape[0]), held)
    return train, valid, pool


def _split_pool(pool: np.ndarray, calib_rule: str, calib_size: int, rng) -> tuple:
    if pool.shape[0] < 2:
        raise ValidationError("pool exhausted: need at least one calibration "
                              "and one test node")
    if calib_rule == "min_1000_half":
        c = min(1000, pool.shape[0] // 2)
    else:
        c = calib_size
    if c < 1 or c >= pool.shape[0]:
        raise ValidationError(
            f"calibration size {c} leaves no test nodes (pool {pool.shape[0]})"
        )
    perm = rng.permutation(pool)
    return np.sort(perm[:c]), np.sort(perm[c:])


def sample_splits(labels: np.ndarray, num_classes: int, cfg: ExperimentConfig,
                  seed: int) -> SplitIndices:
    """One full train/valid/calib/test draw under the configured rule."""
    rng = np.random.default_rng([seed & _MASK32, 0x5B])
    train, valid, pool = _sample_train_valid(labels, num_classes, rng)
    calib, test = _split_pool(pool, cfg.calib_rule, cfg.calib_size, rng)
    return SplitIndices(train=train, valid=valid, calib=calib, test=test)


# ---------------------------------------------------------------------------
# hyperparameter tuning

def _half_split(idx: np.ndarray, rng) -> tuple[np.ndarray, np.ndarray]:
    if idx.shape[0] < 2:
        raise ValidationError("cannot split fewer than 2 nodes in half")
    perm = rng.permutation(idx)
    half = idx.shape[0] // 2
    return np.sort(perm[:half]), np.sort(perm[half:])


def _size_sh(values_cal, labels_cal, values_eval, labels_eval, alpha):
    n = labels_cal.shape[0]
    rank = conformal_rank(n, alpha)
    if rank > n:
        q = math.inf
    else:
        true_scores = values_cal[np.arange(n), labels_cal]
        q = float(np.partition(true_scores, rank - 1)[rank - 1])
    mask = values_eval <= q
    sizes = mask.sum(axis=1)
    covered = mask[np.arange(labels_eval.shape[0]), labels_eval]
    return float(sizes.mean()), float((covered & (sizes == 1)).mean())


def _combine_rows(values, nm: NeighborMeans, lam, mu, rows):
    ego = 1.0 - lam * nm.has_knn[rows] - mu * nm.has_adj[rows]
    return (ego[:, None] * values[rows]
            + lam * nm.knn_mean[rows] + mu * nm.adj_mean[rows])


def _tune_snaps(values, nm, labels, tune_idx, alpha, grid_step, rng,
                mu_only=False) -> SnapsParams:
    a, b = _half_split(tune_idx, rng)
    la, lb = labels[a], labels[b]
    best, best_key = None, None
    for p in snaps_param_grid(grid_step, mu_only=mu_only):
        va = _combine_rows(values, nm, p.lam, p.mu, a)
        vb = _combine_rows(values, nm, p.lam, p.mu, b)
        size, sh_val = _size_sh(va, la, vb, lb, alpha)
        key = (size, -sh_val, p.lam + p.mu, p.lam, p.mu)
        if best_key is None or key < best_key:
            best, best_key = p, key
    return best


def _tune_raps(aps_values, ranks, labels, tune_idx, alpha, rng,
               num_classes) -> RapsParams:
    a, b = _half_split(tune_idx, rng)
    la, lb = labels[a], labels[b]
    ra, rb = ranks[a], ranks[b]
    va_base, vb_base = aps_values[a], aps_values[b]
    best, best_key = None, None
    for k_reg in range(1, min(num_classes, RAPS_MAX_KREG) + 1):
        pa = np.maximum(0, ra - k_reg)
        pb = np.maximum(0, rb - k_reg)
        for lam in RAPS_LAMBDA_GRID:
            size, sh_val = _size_sh(va_base + lam * pa, la,
                                    vb_base + lam * pb, lb, alpha)
            key = (size, -sh_val, lam, k_reg)
            if best_key is None or key < best_key:
                best, best_key = RapsParams(k_reg, lam), key
    return best


def tune_hyperparams(scores: ScoreMatrix, knn, adj, labels, calib_idx, *,
                     alpha: float, method: str = "snaps", grid_step: float = 0.05,
                     seed: int = 0, probabilities=None):
    """Grid-search hyperparameters on the tuning subset ``calib_idx``.

    The subset is split in half internally: one half calibrates each grid
    candidate, the other measures Size (higher singleton-hit breaks ties,
    then smaller total weight).  Returns SnapsParams for ``snaps``, the mu
    weight (float) for ``daps``, and RapsParams for ``raps`` (which needs
    ``probabilities`` for the rank matrix).
    """
    rng = np.random.default_rng([seed & _MASK32, 0xA11])
    labels = np.asarray(labels, dtype=np.int64)
    calib_idx = np.asarray(calib_idx, dtype=np.int64)
    if method == "snaps":
        nm = neighbor_means(scores.values, knn, adj)
        return _tune_snaps(scores.values, nm, labels, calib_idx, alpha,
                           grid_step, rng)
    if method == "daps":
        nm = neighbor_means(scores.values, empty_graph(scores.n), adj)
        return _tune_snaps(scores.values, nm, labels, calib_idx, alpha,
                           grid_step, rng, mu_only=True).mu
    if method == "raps":
        if probabilities is None:
            raise ValidationError("raps tuning needs the probability matrix")
        ranks = probability_ranks(np.asarray(probabilities, dtype=np.float64))
        return _tune_raps(scores.values, ranks, labels, calib_idx, alpha, rng,
                          ranks.shape[1])
    raise ValidationError(f"method {method!r} has no hyperparameters to tune")


# ---------------------------------------------------------------------------
# experiment runners

def _linear_nm(nm_a: NeighborMeans, nm_b: NeighborMeans, coeff: float) -> NeighborMeans:
    return NeighborMeans(
        knn_mean=nm_a.knn_mean + coeff * nm_b.knn_mean,
        adj_mean=nm_a.adj_mean + coeff * nm_b.adj_mean,
        has_knn=nm_a.has_knn, has_adj=nm_a.has_adj,
    )


def _config_dict(cfg: ExperimentConfig, bundle: DatasetBundle) -> dict:
    return {
        "dataset": {"name": bundle.name, "n": bundle.n,
                    "num_classes": bundle.num_classes},
        "alpha": cfg.alpha,
        "method": cfg.method,
        "base": cfg.base,
        "knn": {"k": cfg.knn.k, "sample_size": cfg.knn.sample_size,
                "seed": cfg.knn.seed, "min_similarity": cfg.knn.min_similarity},
        "grid_step": cfg.grid_step,
        "n_model_splits": cfg.n_model_splits,
        "n_conformal_splits": cfg.n_conformal_splits,
        "calib_rule": cfg.calib_rule,
        "calib_size": cfg.calib_size,
        "seed": cfg.seed,
        "params": cfg.params.as_dict() if cfg.params is not None else None,
        "raps_params": ({"k_reg": cfg.raps_params.k_reg,
                         "lambda_reg": cfg.raps_params.lambda_reg}
                        if cfg.raps_params is not None else None),
    }


def _thread_count() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def run_experiment(bundle: DatasetBundle, cfg: ExperimentConfig) -> TrialReport:
    """Repeated-split conformal evaluation of one method on one bundle.

    Deterministic given (bundle, cfg): all randomness flows from cfg.seed and
    cfg.knn.seed.  Trials run in parallel when ``GRAPHCP_THREADS`` > 1 and
    merge in trial order, so threading never changes the report.
    """
    labels = bundle.labels
    num_classes = bundle.num_classes
    adj = adjacency_graph(bundle.n, bundle.edges)
    knn = (build_knn_graph(bundle.features, cfg.knn)
           if cfg.method == "snaps" else empty_graph(bundle.n))
    aggregated = cfg.method in ("daps", "snaps")
    base_is_raps = cfg.method == "raps" or (aggregated and cfg.base == "raps")
    trials: list[TrialResult] = []

    for ms in range(cfg.n_model_splits):
        xi = XiPolicy("uniform", seed=_derive_seed(cfg.seed, 0xA1, ms))
        base_aps = aps_scores(bundle.probabilities, xi)
        ranks = probability_ranks(bundle.probabilities) if base_is_raps else None
        split_rng = np.random.default_rng([cfg.seed & _MASK32, 0xB2, ms])
        train, valid, pool = _sample_train_valid(labels, num_classes, split_rng)
        nm_aps = neighbor_means(base_aps.values, knn, adj) if aggregated else None
        nm_relu: dict[int, NeighborMeans] = {}
        if aggregated and base_is_raps:
            for k_reg in range(1, min(num_classes, RAPS_MAX_KREG) + 1):
                pen = np.maximum(0, ranks - k_reg).astype(np.float64)
                nm_relu[k_reg] = neighbor_means(pen, knn, adj)

        def one_trial(cs: int) -> TrialResult:
            rng_split = np.random.default_rng([cfg.seed & _MASK32, 0xC3, ms, cs])
            calib, test = _split_pool(pool, cfg.calib_rule, cfg.calib_size, rng_split)
            rng_tune = np.random.default_rng([cfg.seed & _MASK32, 0xD4, ms, cs])
            need_raps_tune = base_is_raps and cfg.raps_params is None
            need_agg_tune = aggregated and cfg.params is None
            cal_idx = calib
            tune_idx = None
            if need_raps_tune or need_agg_tune:
                tune_idx, cal_idx = _half_split(calib, rng_tune)
            params: dict = {}
            rp = cfg.raps_params
            if base_is_raps:
                if need_raps_tune:
                    rp = _tune_raps(base_aps.values, ranks, labels, tune_idx,
                                    cfg.alpha, rng_tune, num_classes)
                params["k_reg"] = rp.k_reg
                params["lambda_reg"] = rp.lambda_reg
                base_values = base_aps.values + raps_penalty(ranks, rp)
            else:
                base_values = base_aps.values
            if aggregated:
                nm = nm_aps
                if base_is_raps:
                    nm = _linear_nm(nm_aps, nm_relu[rp.k_reg], rp.lambda_reg)
                if need_agg_tune:
                    p = _tune_snaps(base_values, nm, labels, tune_idx, cfg.alpha,
                                    cfg.grid_step, rng_tune,
                                    mu_only=(cfg.method == "daps"))
                else:
                    p = cfg.params
                params.update(p.as_dict())
                final_values = combine_scores(base_values, nm, p.lam, p.mu)
            else:
                final_values = base_values
            threshold = calibrate(final_values, labels, cal_idx, cfg.alpha)
            sets = predict_sets(final_values, threshold, test)
            summary = evaluate(sets, labels)
            summary = replace(summary, sscv=sscv(sets, labels, alpha=cfg.alpha))
            return TrialResult(ms, cs, summary, params)

        n_threads = _thread_count()
        if n_threads > 1:
            with ThreadPoolExecutor(max_workers=n_threads) as pool_ex:
                trials.extend(pool_ex.map(one_trial, range(cfg.n_conformal_splits)))
        else:
            trials.extend(one_trial(cs) for cs in range(cfg.n_conformal_splits))

    return make_report(_config_dict(cfg, bundle), trials)


def run_oracle_experiment(bundle: DatasetBundle, alpha: float = 0.05,
                          m_sweep=(0, 1, 2, 4, 8, 16, 32), w: float = 0.5,
                          n_trials: int = 20,
                          calib_rule: str = "min_1000_half",
                          calib_size: int = 1000,
                          seed: int = 0) -> list[TrialReport]:
    """Same-label aggregation sweep: one report per m, trials aligned across
    the sweep (same split and xi per trial index) for paired comparisons."""
    if not 0.0 <= w <= 1.0:
        raise ValidationError("w must lie in [0, 1]")
    labels = bundle.labels
    all_nodes = np.arange(bundle.n)
    by_m: dict[int, list[TrialResult]] = {int(m): [] for m in m_sweep}
    for t in range(n_trials):
        xi = XiPolicy("uniform", seed=_derive_seed(seed, 0x11, t))
        base = aps_scores(bundle.probabilities, xi)
        rng = np.random.default_rng([seed & _MASK32, 0x22, t])
        calib, test = _split_pool(all_nodes, calib_rule, calib_size, rng)
        agg_seed = _derive_seed(seed, 0x33, t)
        for m in m_sweep:
            corrected = oracle_aggregate(base, labels, int(m), w, agg_seed)
            threshold = calibrate(corrected, labels, calib, alpha)
            sets = predict_sets(corrected, threshold, test)
            summary = evaluate(sets, labels)
            summary = replace(summary, sscv=sscv(sets, labels, alpha=alpha))
            by_m[int(m)].append(TrialResult(0, t, summary, {"m": int(m), "w": w}))
    reports = []
    for m in m_sweep:
        config = {
            "mode": "oracle",
            "dataset": {"name": bundle.name, "n": bundle.n,
                        "num_classes": bundle.num_classes},
            "alpha": alpha, "m": int(m), "w": w, "n_trials": n_trials,
            "calib_rule": calib_rule, "calib_size": calib_size, "seed": seed,
        }
        reports.append(make_report(config, by_m[int(m)]))
    return reports


def run_image_experiment(probabilities, features, labels, *, alpha: float = 0.1,
                         k: int = 5, eta: float = 0.5, n_trials: int = 10,
                         calib_size: int | None = None,
                         seed: int = 0, name: str = "image") -> TrialReport:
    """Graph-free mode: per trial, split the pool into calibration/test,
    correct both sides with calibration-set neighbor means (calibration rows
    exclude themselves), then calibrate and evaluate.  ``eta=0`` reduces to
    the plain adaptive score."""
    P = np.asarray(probabilities, dtype=np.float64)
    feats = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n = P.shape[0]
    if feats.shape[0] != n or labels.shape[0] != n:
        raise ValidationError("probabilities/features/labels row counts disagree")
    c = n // 2 if calib_size is None else calib_size
    if not 1 <= c < n:
        raise ValidationError(f"calibration size {c} out of range")
    if k > c:
        raise ValidationError(f"k={k} exceeds calibration size {c}")
    trials = []
    for t in range(n_trials):
        rng = np.random.default_rng([seed & _MASK32, 0xE5, t])
        perm = rng.permutation(n)
        calib = np.sort(perm[:c])
        test = np.sort(perm[c:])
        xi = XiPolicy("uniform", seed=_derive_seed(seed, 0xF6, t))
        base = aps_scores(P, xi)
        s_cal = ScoreMatrix(base.values[calib], "aps", xi)
        s_test = ScoreMatrix(base.values[test], "aps", xi)
        corr_cal = image_snaps(s_cal, s_cal, feats[calib], feats[calib],
                               k=k, eta=eta, exclude_self=True)
        corr_test = image_snaps(s_test, s_cal, feats[test], feats[calib],
                                k=k, eta=eta)
        full = np.empty_like(base.values)
        full[calib] = corr_cal.values
        full[test] = corr_test.values
        threshold = calibrate(full, labels, calib, alpha)
        sets = predict_sets(full, threshold, test)
        summary = evaluate(sets, labels)
        summary = replace(summary, sscv=sscv(sets, labels, alpha=alpha))
        trials.append(TrialResult(0, t, summary, {"k": k, "eta": eta}))
    config = {
        "mode": "image", "dataset": {"name": name, "n": n,
                                     "num_classes": int(P.shape[1])},
        "alpha": alpha, "k": k, "eta": eta, "n_trials": n_trials,
        "calib_size": c, "seed": seed,
    }
    return make_report(config, trials)


# ---------------------------------------------------------------------------
# synthetic data

def generate_synthetic(n: int, num_classes: int, dim: int, homophily: float,
                       class_sep: float, noise: float, seed: int,
                       avg_degree: float = 10.0) -> DatasetBundle:
    """Planted-partition bundle with class-informative features and softmax
    probabilities.

    Labels are balanced (counts differ by at most 1).  Features sit at class
    means of radius 2*class_sep plus unit Gaussian noise.  Probabilities are
    softmax(class margin + Gaussian) with the margin class_sep/noise, so
    noise -> 0 sharpens to exact one-hot rows.  The graph draws intra-class
    pairs so that the expected fraction of same-label edges is ``homophily``
    at expected average degree ``avg_degree``.
    """
    if num_classes < 2:
        raise ValidationError("need at least 2 classes")
    if n < num_classes * (TRAIN_PER_CLASS + VALID_PER_CLASS):
        raise ValidationError(
            f"n={n} too small: need >= {num_classes * 40} for per-class splits"
        )
    if not 0.0 <= homophily <= 1.0:
        raise ValidationError("homophily must lie in [0, 1]")
    if class_sep < 0 or noise < 0 or avg_degree < 0:
        raise ValidationError("class_sep, noise and avg_degree must be >= 0")
    if dim < 1:
        raise ValidationError("dim must be >= 1")
    rng = np.random.default_rng([seed & _MASK32, 0x5EED])

    labels = rng.permutation(np.arange(n) % num_classes).astype(np.int64)

    dirs = rng.normal(size=(num_classes, dim))
    norms = np.sqrt((dirs ** 2).sum(axis=1))
    dirs /= np.where(norms == 0.0, 1.0, norms)[:, None]
    features = 2.0 * class_sep * dirs[labels] + rng.normal(size=(n, dim))

    onehot = np.zeros((n, num_classes))
    onehot[np.arange(n), labels] = 1.0
    if noise == 0.0:
        probs = onehot.copy()  # zero-temperature softmax limit
    else:
        logits = (class_sep / noise) * onehot + rng.normal(size=(n, num_classes))
        logits -= logits.max(axis=1, keepdims=True)
        probs = np.exp(logits)
        probs /= probs.sum(axis=1, keepdims=True)

    edges = _planted_partition_edges(labels, num_classes, homophily, avg_degree, rng)
    return make_bundle(
        name=f"synthetic-n{n}-k{num_classes}-h{homophily:g}-s{seed}",
        features=features, probabilities=probs, labels=labels,
        num_classes=num_classes, edges=edges,
    )


def _pair_count(t: int) -> int:
    return t * (t - 1) // 2


def _decode_triangle(flat: np.ndarray, t: int) -> tuple[np.ndarray, np.ndarray]:
    # pair index within an upper triangle (i < j) of t elements
    starts = np.cumsum(np.concatenate([[0], t - 1 - np.arange(t - 1)]))
    i = np.searchsorted(starts, flat, side="right") - 1
    j = flat - starts[i] + i + 1
    return i, j


def _planted_partition_edges(labels, num_classes, homophily, avg_degree, rng):
    n = labels.shape[0]
    members = [np.flatnonzero(labels == c) for c in range(num_classes)]
    intra_pairs = sum(_pair_count(m.shape[0]) for m in members)
    inter_pairs = _pair_count(n) - intra_pairs
    target = avg_degree * n / 2.0
    p_in = homophily * target / intra_pairs if intra_pairs else 0.0
    p_out = (1.0 - homophily) * target / inter_pairs if inter_pairs else 0.0
    if p_in > 1.0 or p_out > 1.0:
        raise ValidationError(
            f"infeasible edge probabilities (p_in={p_in:.3g}, p_out={p_out:.3g}); "
            "lower avg_degree or rebalance homophily"
        )
    chunks = []
    for a in range(num_classes):
        ma = members[a]
        npairs = _pair_count(ma.shape[0])
        if npairs and p_in > 0:
            count = rng.binomial(npairs, p_in)
            if count:
                flat = rng.choice(npairs, size=count, replace=False)
                i, j = _decode_triangle(np.sort(flat), ma.shape[0])
                chunks.append(np.column_stack([ma[i], ma[j]]))
        for b in range(a + 1, num_classes):
            mb = members[b]
            npairs = ma.shape[0] * mb.shape[0]
            if npairs and p_out > 0:
                count = rng.binomial(npairs, p_out)
                if count:
                    flat = rng.choice(npairs, size=count, replace=False)
                    u = ma[flat // mb.shape[0]]
                    v = mb[flat % mb.shape[0]]
                    chunks.append(np.column_stack([u, v]))
    if not chunks:
        return np.empty((0, 2), dtype=np.int64)
    return np.concatenate(chunks, axis=0).astype(np.int64)


def edge_homophily(bundle: DatasetBundle) -> float:
    """Fraction of arcs joining same-label endpoints (NaN when edgeless)."""
    if bundle.edges.shape[0] == 0:
        return math.nan
    same = bundle.labels[bundle.edges[:, 0]] == bundle.labels[bundle.edges[:, 1]]
    return float(same.mean())
