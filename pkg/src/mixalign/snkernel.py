"""Multivariate skew-normal distribution.

Three interchangeable parametrizations of SN_p are supported:

* direct ``(xi, Sigma, alpha)`` -- location, scale matrix, skewness vector;
  density 2 phi_p(y; xi, Sigma) Phi(alpha' omega^{-1} (y - xi)) with
  omega = diag(sqrt(Sigma_ii)).
* delta form ``(xi, Sigma, delta)`` with delta = Omega alpha / sqrt(1 +
  alpha' Omega alpha), Omega the correlation matrix of Sigma.  This form
  carries the latent-scalar construction: (Z, W) jointly normal with
  covariance [[1, delta'], [delta, Omega]], Y = xi + omega * sign(Z) * W.
* augmented ``(xi, G, psi)`` with psi = omega * delta and
  G = Sigma - psi psi'.  Given the latent |z| the likelihood is Gaussian:
  y | z ~ N(xi + psi |z|, G), z ~ N(0, 1).

Conversions are exact; the augmented form is the representation of record
in sampler state, with conversions at the API boundary.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, log_ndtr

from .utils import InvalidParameterError, chol_pd, cov2corr, LOG_2PI

SQRT_2_OVER_PI = np.sqrt(2.0 / np.pi)


def _as_vector(v, name):
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise InvalidParameterError(f"{name} must be a vector, got shape {v.shape}")
    return v


def _as_spd(m, name, repair=True):
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InvalidParameterError(f"{name} must be square, got shape {m.shape}")
    if not np.allclose(m, m.T, rtol=0, atol=1e-8 * (1 + np.abs(m).max())):
        raise InvalidParameterError(f"{name} must be symmetric")
    m = 0.5 * (m + m.T)
    try:
        _, m = chol_pd(m, repair=repair)
    except InvalidParameterError:
        raise InvalidParameterError(f"{name} is not positive-definite") from None
    return m


@dataclass
class SnParamsDirect:
    """SN parameters in the (xi, Sigma, alpha) form."""

    xi: np.ndarray
    Sigma: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        self.xi = _as_vector(self.xi, "xi")
        self.alpha = _as_vector(self.alpha, "alpha")
        self.Sigma = _as_spd(self.Sigma, "Sigma")
        if not (len(self.xi) == len(self.alpha) == self.Sigma.shape[0]):
            raise InvalidParameterError("xi, Sigma, alpha dimensions disagree")

    @property
    def p(self):
        return len(self.xi)

    @property
    def omega(self):
        """Marginal scale vector sqrt(diag Sigma)."""
        return np.sqrt(np.diag(self.Sigma))

    @property
    def Omega(self):
        """Correlation matrix omega^{-1} Sigma omega^{-1}."""
        return cov2corr(self.Sigma)[0]


@dataclass
class SnParamsDelta:
    """SN parameters in the (xi, Sigma, delta) form.

    Valid only where Omega - delta delta' is positive-definite, i.e.
    delta' Omega^{-1} delta < 1.
    """

    xi: np.ndarray
    Sigma: np.ndarray
    delta: np.ndarray

    def __post_init__(self):
        self.xi = _as_vector(self.xi, "xi")
        self.delta = _as_vector(self.delta, "delta")
        self.Sigma = _as_spd(self.Sigma, "Sigma")
        if not (len(self.xi) == len(self.delta) == self.Sigma.shape[0]):
            raise InvalidParameterError("xi, Sigma, delta dimensions disagree")
        omega = np.sqrt(np.diag(self.Sigma))
        corr = self.Sigma / np.outer(omega, omega)
        q = self.delta @ np.linalg.solve(corr, self.delta)
        if q >= 1.0:
            raise InvalidParameterError(
                "delta is outside the unit ellipsoid of Omega (Omega - dd' not PD)"
            )

    @property
    def p(self):
        return len(self.xi)

    @property
    def omega(self):
        return np.sqrt(np.diag(self.Sigma))

    @property
    def Omega(self):
        return cov2corr(self.Sigma)[0]


@dataclass
class SnParamsAugmented:
    """SN parameters in the (xi, G, psi) form: G = Sigma - psi psi'."""

    xi: np.ndarray
    G: np.ndarray
    psi: np.ndarray

    def __post_init__(self):
        self.xi = _as_vector(self.xi, "xi")
        self.psi = _as_vector(self.psi, "psi")
        self.G = _as_spd(self.G, "G")
        if not (len(self.xi) == len(self.psi) == self.G.shape[0]):
            raise InvalidParameterError("xi, G, psi dimensions disagree")

    @property
    def p(self):
        return len(self.xi)


def to_delta(params):
    """Convert direct or augmented parameters to the delta form."""
    if isinstance(params, SnParamsDelta):
        return params
    if isinstance(params, SnParamsDirect):
        corr, omega = cov2corr(params.Sigma)
        ca = corr @ params.alpha
        delta = ca / np.sqrt(1.0 + params.alpha @ ca)
        return SnParamsDelta(params.xi, params.Sigma, delta)
    if isinstance(params, SnParamsAugmented):
        sigma = params.G + np.outer(params.psi, params.psi)
        omega = np.sqrt(np.diag(sigma))
        return SnParamsDelta(params.xi, sigma, params.psi / omega)
    raise TypeError(f"unsupported parameter type {type(params)!r}")


def to_direct(params):
    """Convert delta or augmented parameters to the direct form."""
    if isinstance(params, SnParamsDirect):
        return params
    d = to_delta(params)
    corr = d.Omega
    oinv_d = np.linalg.solve(corr, d.delta)
    q = d.delta @ oinv_d
    if q >= 1.0:
        raise InvalidParameterError("delta outside its support, cannot recover alpha")
    alpha = oinv_d / np.sqrt(1.0 - q)
    return SnParamsDirect(d.xi, d.Sigma, alpha)


def to_augmented(params):
    """Convert direct or delta parameters to the augmented form."""
    if isinstance(params, SnParamsAugmented):
        return params
    d = to_delta(params)
    psi = d.omega * d.delta
    g = d.Sigma - np.outer(psi, psi)
    try:
        g = _as_spd(g, "G")
    except InvalidParameterError:
        raise InvalidParameterError("conversion produced a non-PD G") from None
    return SnParamsAugmented(d.xi, g, psi)


def logpdf(params, y):
    """Log-density of SN_p at ``y`` (a p-vector or an (n, p) array).

    Evaluated in log space throughout; the normal-CDF factor uses
    ``log_ndtr`` so extreme skew arguments do not underflow.
    """
    d = to_direct(params)
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    dev = np.atleast_2d(y) - d.xi
    chol, _ = chol_pd(d.Sigma)
    u = np.linalg.solve(chol, dev.T).T
    logdet = 2.0 * np.log(np.diag(chol)).sum()
    log_phi = -0.5 * (d.p * LOG_2PI + (u**2).sum(axis=1)) - 0.5 * logdet
    skew_arg = dev @ (d.alpha / d.omega)
    out = np.log(2.0) + log_phi + log_ndtr(skew_arg)
    return out[0] if single else out


def pdf(params, y):
    """Density of SN_p at ``y``; see :func:`logpdf`."""
    return np.exp(logpdf(params, y))


def sample(params, rng, size):
    """Draw ``size`` variates via the latent (Z, W) construction.

    (Z, W) is jointly normal with the (p+1)-dimensional covariance
    [[1, delta'], [delta, Omega]]; W is sign-flipped by Z and mapped
    through xi + omega * U.
    """
    d = to_delta(params)
    p = d.p
    cov = np.empty((p + 1, p + 1))
    cov[0, 0] = 1.0
    cov[0, 1:] = d.delta
    cov[1:, 0] = d.delta
    cov[1:, 1:] = d.Omega
    chol, _ = chol_pd(cov)
    zw = rng.standard_normal((size, p + 1)) @ chol.T
    z, w = zw[:, 0], zw[:, 1:]
    u = np.where(z[:, None] >= 0, w, -w)
    return d.xi + u * d.omega


def mean(params):
    """E(Y) = xi + omega * delta * sqrt(2/pi)."""
    d = to_delta(params)
    return d.xi + d.omega * d.delta * SQRT_2_OVER_PI


def cov(params):
    """Cov(Y) = Sigma - (2/pi) psi psi' with psi = omega * delta."""
    d = to_delta(params)
    psi = d.omega * d.delta
    return d.Sigma - (2.0 / np.pi) * np.outer(psi, psi)


def jacobian_log(params):
    """Log change-of-variables factor from (Sigma, delta) to (G, psi) space:
    -1/2 sum_j log(G_jj + psi_j^2)."""
    a = to_augmented(params) if not isinstance(params, SnParamsAugmented) else params
    return -0.5 * np.log(np.diag(a.G) + a.psi**2).sum()


def skew_prior_logdensity(params):
    """Log-density of the uniform-on-ellipsoid prior for delta given Sigma.

    The prior is constant, equal to the reciprocal volume
    Gamma(p/2 + 1) / (pi^(p/2) sqrt(|Omega|)), on the support where
    Omega - delta delta' is positive-definite, and -inf outside it.
    """
    if isinstance(params, SnParamsDelta):
        d = params
    else:
        d = to_delta(params)
    corr = d.Omega
    q = d.delta @ np.linalg.solve(corr, d.delta)
    if q >= 1.0:
        return -np.inf
    _, logdet = np.linalg.slogdet(corr)
    p = d.p
    return gammaln(p / 2.0 + 1.0) - 0.5 * p * np.log(np.pi) - 0.5 * logdet


def skew_prior_logdensity_aug(g, psi):
    """Batched skew prior in augmented coordinates; (..., p, p) and (..., p).

    G positive-definite puts psi automatically inside the support.
    """
    g = np.asarray(g, dtype=float)
    psi = np.asarray(psi, dtype=float)
    p = psi.shape[-1]
    sigma = g + psi[..., :, None] * psi[..., None, :]
    _, logdet_sigma = np.linalg.slogdet(sigma)
    # log|Omega| = log|Sigma| - sum log Sigma_jj
    logdet_corr = logdet_sigma - np.log(
        np.diagonal(sigma, axis1=-2, axis2=-1)
    ).sum(axis=-1)
    return gammaln(p / 2.0 + 1.0) - 0.5 * p * np.log(np.pi) - 0.5 * logdet_corr
