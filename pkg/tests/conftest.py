import numpy as np
import pytest

import graphcp as g


@pytest.fixture(scope="session")
def small_bundle():
    return g.generate_synthetic(n=400, num_classes=4, dim=6, homophily=0.8,
                                class_sep=2.0, noise=1.0, seed=3)


def make_sets(mask, alpha=0.05, q_hat=0.5, n_graph=None):
    """PredictionSets built by hand (bypasses calibrate/predict)."""
    mask = np.asarray(mask, dtype=bool)
    n_eval = mask.shape[0]
    n_graph = n_graph or (n_eval + 1)
    calib_idx = np.array([n_graph - 1], dtype=np.int64)
    threshold = g.CalibratedThreshold(q_hat=q_hat, alpha=alpha, n_calib=1,
                                      calib_idx=calib_idx)
    return g.PredictionSets(mask=mask, eval_idx=np.arange(n_eval, dtype=np.int64),
                            threshold=threshold)
