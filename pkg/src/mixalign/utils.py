"""Shared numerical helpers: PD-safe factorizations and batched samplers."""

import numpy as np
from scipy.special import gammaln, log_ndtr, logsumexp, multigammaln

# A matrix that fails Cholesky but whose smallest eigenvalue is within
# PD_SLACK_REL * trace/p of zero gets one retry with JITTER_REL * trace/p
# added to the diagonal; anything further from PD is rejected.
JITTER_REL = 1e-9
PD_SLACK_REL = 1e-10

LOG_2PI = np.log(2.0 * np.pi)


class InvalidParameterError(ValueError):
    """Raised when distribution parameters violate their constraints."""


def chol_pd(a, repair=True):
    """Lower Cholesky factor of a symmetric PD matrix.

    Near-PD inputs (indefiniteness within ``PD_SLACK_REL`` of zero relative
    to the mean diagonal) are repaired with a small diagonal jitter;
    anything else raises :class:`InvalidParameterError`.

    Returns
    -------
    (L, a) : the factor and the (possibly jittered) matrix actually factored.
    """
    a = np.asarray(a, dtype=float)
    try:
        return np.linalg.cholesky(a), a
    except np.linalg.LinAlgError:
        if not repair:
            raise InvalidParameterError("matrix is not positive-definite") from None
    p = a.shape[-1]
    scale = float(np.trace(a)) / p
    if scale <= 0 or np.linalg.eigvalsh(a).min() < -PD_SLACK_REL * scale:
        raise InvalidParameterError("matrix is not positive-definite")
    a = a + (JITTER_REL * scale) * np.eye(p)
    try:
        return np.linalg.cholesky(a), a
    except np.linalg.LinAlgError:
        raise InvalidParameterError("matrix is not positive-definite") from None


def chol_pd_batch(a):
    """Batched lower Cholesky of (..., p, p) with per-matrix jitter repair."""
    a = np.asarray(a, dtype=float)
    try:
        return np.linalg.cholesky(a), a
    except np.linalg.LinAlgError:
        pass
    flat = a.reshape(-1, a.shape[-2], a.shape[-1]).copy()
    out = np.empty_like(flat)
    for i in range(flat.shape[0]):
        out[i], flat[i] = chol_pd(flat[i])
    return out.reshape(a.shape), flat.reshape(a.shape)


def cov2corr(sigma):
    """Split a covariance into (correlation matrix, marginal scale vector)."""
    sigma = np.asarray(sigma, dtype=float)
    omega = np.sqrt(np.diagonal(sigma, axis1=-2, axis2=-1))
    corr = sigma / (omega[..., :, None] * omega[..., None, :])
    return corr, omega


def logdet_from_chol(chol):
    """log|A| from the lower Cholesky factor of A; batched."""
    return 2.0 * np.log(np.diagonal(chol, axis1=-2, axis2=-1)).sum(axis=-1)


def mvn_logpdf(x, mean, cov):
    """Multivariate normal log-density; ``x``/``mean``/``cov`` broadcast on
    leading axes, with the trailing axes being (p,) and (p, p)."""
    x = np.asarray(x, dtype=float)
    dev = x - mean
    chol, _ = chol_pd_batch(cov)
    u = np.linalg.solve(chol, dev[..., None])[..., 0]
    p = x.shape[-1]
    return -0.5 * (p * LOG_2PI + (u**2).sum(axis=-1)) - 0.5 * logdet_from_chol(chol)


def mvn_rvs(rng, mean, cov, size=None):
    """Draw from N(mean, cov); ``cov`` may carry batch dimensions matching
    ``mean``'s leading axes, in which case one draw per batch row is made."""
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    chol, _ = chol_pd_batch(cov)
    if size is None:
        shape = np.broadcast_shapes(mean.shape[:-1], cov.shape[:-2]) + mean.shape[-1:]
    else:
        shape = (size,) + mean.shape[-1:]
    eps = rng.standard_normal(shape)
    return mean + (chol @ eps[..., None])[..., 0]


def _bartlett_factors(rng, df, p, size):
    """Lower-triangular Bartlett factors A with A A' ~ Wishart(df, I)."""
    a = np.zeros((size, p, p))
    r, c = np.tril_indices(p, -1)
    if len(r):
        a[:, r, c] = rng.standard_normal((size, len(r)))
    dfs = np.broadcast_to(np.asarray(df, dtype=float).reshape(-1, 1), (size, 1))
    ii = np.arange(p)
    a[:, ii, ii] = np.sqrt(rng.chisquare(np.broadcast_to(dfs - ii, (size, p))))
    return a


def inv_wishart_rvs(rng, df, scale, size):
    """``size`` draws from the inverse Wishart.

    ``scale`` is the trace-convention scale matrix (mean = scale/(df-p-1));
    it may be a single (p, p) matrix or a (size, p, p) batch, and ``df`` a
    scalar or (size,) vector. Non-integer df is supported.
    """
    scale = np.asarray(scale, dtype=float)
    p = scale.shape[-1]
    chol_s, _ = chol_pd_batch(scale)
    a = _bartlett_factors(rng, df, p, size)
    # X = L_S A^{-T} A^{-1} L_S' is IW(df, L_S L_S')
    f = chol_s @ np.swapaxes(np.linalg.inv(a), -1, -2)
    return f @ np.swapaxes(f, -1, -2)


def inv_wishart_logpdf(x, df, scale):
    """Inverse-Wishart log-density, batched over leading axes of ``x``/``scale``."""
    x = np.asarray(x, dtype=float)
    scale = np.asarray(scale, dtype=float)
    p = x.shape[-1]
    _, lds = np.linalg.slogdet(scale)
    _, ldx = np.linalg.slogdet(x)
    tr = np.einsum("...ij,...ji->...", scale, np.linalg.inv(x))
    return (
        0.5 * df * lds
        - 0.5 * df * p * np.log(2.0)
        - multigammaln(df / 2.0, p)
        - 0.5 * (df + p + 1) * ldx
        - 0.5 * tr
    )


def gamma_logpdf(x, shape, rate):
    return shape * np.log(rate) - gammaln(shape) + (shape - 1.0) * np.log(x) - rate * x


def truncnorm_pos_logpdf(x, mean, sd):
    """Log-density of N(mean, sd^2) truncated to [0, inf); broadcasts."""
    z = (x - mean) / sd
    return -0.5 * (LOG_2PI + z**2) - np.log(sd) - log_ndtr(mean / sd)


def uniform_ball_rvs(rng, size, p):
    """Uniform draws from the p-dimensional unit ball, shape (size, p)."""
    g = rng.standard_normal((size, p))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g * rng.random((size, 1)) ** (1.0 / p)


def dirichlet_log_rvs(rng, alpha):
    """Sample Dirichlet rows in log space.

    Uses the shape-boost identity Gamma(a) = Gamma(a+1) * U^(1/a), which
    keeps log-weights finite even for very small concentrations where
    direct Gamma draws underflow to zero.

    Returns (log_weights, weights) with rows normalized on the simplex.
    """
    alpha = np.asarray(alpha, dtype=float)
    g = rng.standard_gamma(alpha + 1.0)
    u = rng.random(alpha.shape)
    logg = np.log(g) + np.log(u) / alpha
    lw = logg - logsumexp(logg, axis=-1, keepdims=True)
    return lw, np.exp(lw)
