"""Cross-sample calibration and post-hoc label alignment.

Calibration shifts every observation by the posterior-mean difference
between its sample-specific cluster location and the grand cluster
location, averaging over stored sweeps (and thus integrating out the
assignment uncertainty). Because the assignment and the locations come
from the same sweep, the shift is invariant to cluster relabeling.

Classification, by contrast, needs coherent labels across sweeps; the
last sweep serves as the reference, and every other sweep's labels are
permuted by a minimum-cost assignment (Hungarian algorithm) on the
classification-disagreement cost matrix.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment


@dataclass
class CalibratedDataset:
    """Shifted observations plus final labels; y_tilde = y - shift."""

    y_tilde: np.ndarray  # (n, p)
    labels: np.ndarray  # (n,) 0-based cluster labels
    shift: np.ndarray  # (n, p)


def calibrate(chain, data, labels=None):
    """Shift each observation by the chain-averaged location offset
    xi_{j, T} - xi_{0, T} of its per-sweep cluster.

    ``labels`` (the final classification) is carried through into the
    result; it defaults to the reference (last) sweep's assignments.
    """
    if not chain:
        raise ValueError("calibrate requires a non-empty chain")
    n, p = data.y.shape
    for snap in chain:
        if snap.xi_j.shape[0] != data.J or snap.xi_j.shape[2] != p or len(snap.T) != n:
            raise ValueError("chain snapshot dimensions do not match the data")
    shift = np.zeros((n, p))
    j = data.sample_of
    for snap in chain:
        shift += snap.xi_j[j, snap.T] - snap.xi_0[snap.T]
    shift /= len(chain)
    if labels is None:
        labels = chain[-1].T.copy()
    return CalibratedDataset(data.y - shift, np.asarray(labels), shift)


def disagreement_cost(reference, candidate, K):
    """Cost matrix for label matching: cost[a, b] counts observations with
    reference label a whose candidate label differs from b under the
    pairing (a <- b)."""
    conf = np.bincount(reference * K + candidate, minlength=K * K).reshape(K, K)
    n_ref = conf.sum(axis=1, keepdims=True)
    return n_ref - conf


def _permute_snapshot(snap, col_ind):
    """Apply the matching: new cluster a takes old cluster col_ind[a]."""
    out = snap.copy()
    K = snap.K
    perm_old_to_new = np.empty(K, dtype=np.int64)
    perm_old_to_new[col_ind] = np.arange(K)
    out.T = perm_old_to_new[snap.T]
    out.weights = snap.weights[:, col_ind]
    out.log_weights = snap.log_weights[:, col_ind]
    out.xi_j = snap.xi_j[:, col_ind, :]
    out.xi_0 = snap.xi_0[col_ind]
    out.G = snap.G[col_ind]
    out.psi = snap.psi[col_ind]
    out.E = snap.E[col_ind]
    return out


def relabel(chain):
    """Align every sweep's labels to the last sweep's classification.

    Each snapshot's cost matrix is minimized over column permutations by
    the Hungarian algorithm and the minimizing permutation applied to the
    labels and all cluster-indexed parameters. Returns a new chain.
    """
    if not chain:
        return []
    reference = chain[-1].T
    K = chain[-1].K
    out = []
    for snap in chain:
        cost = disagreement_cost(reference, snap.T, K).astype(float)
        # sub-integer diagonal discount: never changes which integer-cost
        # assignments are optimal, but breaks ties toward the identity
        cost[np.diag_indices(K)] -= 0.5 / K
        _, col_ind = linear_sum_assignment(cost)
        out.append(_permute_snapshot(snap, col_ind))
    return out


def classify(chain):
    """Per-observation majority vote over the stored sweeps; ties break
    toward the smaller label index."""
    if not chain:
        raise ValueError("classify requires a non-empty chain")
    K = chain[0].K
    n = len(chain[0].T)
    votes = np.zeros((n, K), dtype=np.int64)
    rows = np.arange(n)
    for snap in chain:
        votes[rows, snap.T] += 1
    return votes.argmax(axis=1)
