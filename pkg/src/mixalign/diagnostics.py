"""Post-run summaries: active-cluster counts, alignment quality, marginal
histogram exports, partition agreement, and the coarsening-level sweep."""

import logging
from dataclasses import dataclass, replace

import numpy as np

from . import calibrate as _calibrate
from . import sampler as _sampler

logger = logging.getLogger(__name__)


def active_clusters(labels, data, min_weight=0.0):
    """Per-sample count of labels whose relative frequency among that
    sample's observations exceeds ``min_weight``.

    With the default cutoff of zero this is the number of distinct labels
    occurring in each sample's final classification.
    """
    if not 0.0 <= min_weight < 1.0:
        raise ValueError("min_weight must lie in [0, 1)")
    labels = np.asarray(labels)
    out = np.zeros(data.J, dtype=np.int64)
    for j in range(data.J):
        sel = labels[data.sample_of == j]
        if len(sel) == 0:
            continue
        freq = np.bincount(sel) / len(sel)
        out[j] = int((freq > min_weight).sum())
    return out


def _mean_dispersion(y, labels, sample_of, J):
    """Mean over clusters of the mean over samples of the distance between
    the sample-cluster mean and the grand cluster mean; absent (sample,
    cluster) pairs are skipped."""
    per_cluster = []
    for k in np.unique(labels):
        members = labels == k
        grand = y[members].mean(axis=0)
        dists = []
        for j in range(J):
            sel = members & (sample_of == j)
            if not sel.any():
                continue
            dists.append(np.linalg.norm(y[sel].mean(axis=0) - grand))
        if dists:
            per_cluster.append(np.mean(dists))
    return float(np.mean(per_cluster)) if per_cluster else 0.0


def alignment_score(data, calibrated, labels=None):
    """Cross-sample dispersion of cluster means after calibration divided
    by the same quantity before; below 1 means the samples got closer."""
    labels = calibrated.labels if labels is None else np.asarray(labels)
    raw = _mean_dispersion(data.y, labels, data.sample_of, data.J)
    cal = _mean_dispersion(calibrated.y_tilde, labels, data.sample_of, data.J)
    if raw == 0.0:
        return 1.0 if cal == 0.0 else np.inf
    return cal / raw


def adjusted_rand_index(a, b):
    """Chance-corrected agreement between two partitions."""
    a = np.asarray(a)
    b = np.asarray(b)
    n = len(a)
    ua, ia = np.unique(a, return_inverse=True)
    ub, ib = np.unique(b, return_inverse=True)
    conf = np.bincount(ia * len(ub) + ib, minlength=len(ua) * len(ub)).reshape(
        len(ua), len(ub)
    )

    def comb2(x):
        return x * (x - 1) / 2.0

    sum_ij = comb2(conf).sum()
    sum_a = comb2(conf.sum(axis=1)).sum()
    sum_b = comb2(conf.sum(axis=0)).sum()
    total = comb2(n)
    expected = sum_a * sum_b / total
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        return 1.0
    return float((sum_ij - expected) / (max_index - expected))


def marginal_export(y, sample_of, J, bins):
    """Per-marker per-sample histogram densities on shared bin edges.

    Edges span the pooled range of each marker; rows are a list (one per
    marker) of dicts with ``edges`` (bins+1,) and ``density`` (J, bins).
    """
    if bins < 2:
        raise ValueError("bins must be >= 2")
    y = np.asarray(y, dtype=float)
    out = []
    for d in range(y.shape[1]):
        lo, hi = y[:, d].min(), y[:, d].max()
        if hi <= lo:
            hi = lo + 1.0
        edges = np.linspace(lo, hi, bins + 1)
        density = np.empty((J, bins))
        for j in range(J):
            density[j], _ = np.histogram(y[sample_of == j, d], bins=edges, density=True)
        out.append({"edges": edges, "density": density})
    return out


@dataclass
class SweepRow:
    zeta: float
    counts: np.ndarray  # (J,) active clusters, or None on error
    alignment: float
    constant_count: bool
    error: str = None


def run_pipeline_arrays(data, hyper, config, min_weight=0.01):
    """Fit, relabel, classify, calibrate, and summarize in memory.

    Returns (chain, labels, calibrated, counts, alignment).
    """
    chain = _sampler.run(data, hyper, config)
    aligned = _calibrate.relabel(chain)
    labels = _calibrate.classify(aligned)
    calibrated = _calibrate.calibrate(chain, data, labels)
    counts = active_clusters(labels, data, min_weight)
    score = alignment_score(data, calibrated)
    return chain, labels, calibrated, counts, score


def zeta_sweep(data, hyper_template, zetas, config, min_weight=0.01):
    """Run the full pipeline once per coarsening level.

    Each run reuses the template's hyperparameters with only zeta
    replaced, and the same seed, so a one-element sweep coincides with a
    direct pipeline run. Rows whose run fails carry the error message and
    the sweep continues. Rows with equal counts in every sample are
    flagged ``constant_count``.
    """
    rows = []
    for zeta in zetas:
        if not 0.0 < zeta <= 1.0:
            rows.append(SweepRow(zeta, None, np.nan, False, "zeta outside (0, 1]"))
            continue
        try:
            hyper = replace(hyper_template, zeta=float(zeta))
            _, _, _, counts, score = run_pipeline_arrays(
                data, hyper, config, min_weight
            )
            rows.append(
                SweepRow(zeta, counts, score, bool(np.all(counts == counts[0])))
            )
        except Exception as exc:
            logger.warning("zeta sweep run failed for zeta=%s: %s", zeta, exc)
            rows.append(SweepRow(zeta, None, np.nan, False, str(exc)))
    return rows
