"""Observations, hyperparameters, and the full latent state of one sweep.

Cluster labels and sample indices are 0-based throughout the in-memory
representation; file writers emit 1-based labels.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_ndtr, logsumexp

from . import snkernel
from .utils import InvalidParameterError, chol_pd, uniform_ball_rvs, inv_wishart_rvs


@dataclass
class Dataset:
    """n observations in p dimensions, each tagged with a sample index.

    ``sample_of`` holds 0-based sample indices; every index in 0..J-1 must
    occur at least once (except in the degenerate n = 0 case, where J is
    taken from the explicit ``J`` argument). ``sample_ids`` and
    ``marker_names`` are optional presentation metadata used by file
    writers.
    """

    y: np.ndarray
    sample_of: np.ndarray
    J: int = None
    sample_ids: list = None
    marker_names: list = None

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        self.sample_of = np.asarray(self.sample_of, dtype=np.int64)
        if self.y.ndim != 2:
            raise ValueError(f"y must be (n, p), got shape {self.y.shape}")
        if self.sample_of.shape != (self.y.shape[0],):
            raise ValueError("sample_of length does not match y")
        if not np.isfinite(self.y).all():
            raise ValueError("y contains non-finite entries")
        if self.n > 0:
            j_max = int(self.sample_of.max())
            if self.sample_of.min() < 0:
                raise ValueError("sample indices must be nonnegative")
            if self.J is None:
                self.J = j_max + 1
            counts = np.bincount(self.sample_of, minlength=self.J)
            if len(counts) > self.J or (counts == 0).any():
                raise ValueError("every sample index in 0..J-1 must occur")
        elif self.J is None:
            raise ValueError("empty dataset requires an explicit J")

    @property
    def n(self):
        return self.y.shape[0]

    @property
    def p(self):
        return self.y.shape[1]

    @property
    def n_j(self):
        return np.bincount(self.sample_of, minlength=self.J)


@dataclass
class Hyper:
    """Fixed hyperparameters, including the coarsening level ``zeta``.

    Matrix hyperparameters use the trace-convention inverse Wishart:
    E[IW(df, S)] = S / (df - p - 1).
    """

    b0: np.ndarray
    B0: np.ndarray
    m: float
    Lambda: np.ndarray
    nu0: float
    E0: np.ndarray
    K: int = 150
    zeta: float = 0.2
    a_eta: float = 1.0
    b_eta: float = 1.0
    merge_threshold: float = 0.25
    M: int = 20

    def __post_init__(self):
        self.b0 = np.asarray(self.b0, dtype=float)
        p = len(self.b0)
        for name in ("B0", "Lambda", "E0"):
            mat = np.asarray(getattr(self, name), dtype=float)
            if mat.shape != (p, p):
                raise InvalidParameterError(f"{name} must be ({p}, {p})")
            _, mat = chol_pd(mat)
            setattr(self, name, mat)
        if not 0.0 < self.zeta <= 1.0:
            raise InvalidParameterError("zeta must be in (0, 1]")
        if self.K < 1:
            raise InvalidParameterError("K must be >= 1")
        if self.m <= p - 1 or self.nu0 <= p - 1:
            raise InvalidParameterError("inverse-Wishart dof must exceed p - 1")
        if self.M < 2:
            raise InvalidParameterError("M must be >= 2")
        if self.a_eta <= 0 or self.b_eta <= 0:
            raise InvalidParameterError("a_eta, b_eta must be positive")

    @property
    def p(self):
        return len(self.b0)

    @classmethod
    def from_data(cls, data, **overrides):
        """Data-driven defaults: locations anchored at the pooled mean,
        scale priors at fractions of the pooled covariance."""
        p = data.p
        pooled_mean = data.y.mean(axis=0) if data.n else np.zeros(p)
        if data.n > 1:
            pooled_cov = np.cov(data.y.T).reshape(p, p)
        else:
            pooled_cov = np.eye(p)
        m = overrides.pop("m", p + 4.0)
        nu0 = overrides.pop("nu0", p + 4.0)
        defaults = dict(
            b0=pooled_mean,
            B0=pooled_cov,
            m=m,
            Lambda=pooled_cov / 4.0 * (m - p - 1.0),
            nu0=nu0,
            E0=pooled_cov / 8.0 * (nu0 - p - 1.0),
        )
        defaults.update(overrides)
        return cls(**defaults)


@dataclass
class ChainState:
    """Complete latent state of one sweep.

    Kernel parameters are stored in the augmented (xi, G, psi) form.
    ``log_weights`` mirrors ``weights`` exactly and keeps tiny mixture
    weights representable for the log-space updates.
    """

    weights: np.ndarray  # (J, K) rows on the simplex
    log_weights: np.ndarray  # (J, K)
    T: np.ndarray  # (n,) labels in 0..K-1
    xi_j: np.ndarray  # (J, K, p) sample-specific locations
    xi_0: np.ndarray  # (K, p) grand locations
    G: np.ndarray  # (K, p, p)
    psi: np.ndarray  # (K, p)
    E: np.ndarray  # (K, p, p)
    eta: float
    z: np.ndarray  # (n,) latent augmentation scalars

    def copy(self):
        return ChainState(
            self.weights.copy(),
            self.log_weights.copy(),
            self.T.copy(),
            self.xi_j.copy(),
            self.xi_0.copy(),
            self.G.copy(),
            self.psi.copy(),
            self.E.copy(),
            float(self.eta),
            self.z.copy(),
        )

    @property
    def K(self):
        return self.weights.shape[1]

    def validate(self):
        """Assert the structural invariants; raises AssertionError."""
        assert np.all(np.abs(self.weights.sum(axis=1) - 1.0) <= 1e-12)
        assert self.T.min() >= 0 and self.T.max() < self.K if len(self.T) else True
        assert self.eta > 0
        for mats in (self.G, self.E):
            assert np.allclose(mats, np.swapaxes(mats, -1, -2))
            assert np.all(np.linalg.eigvalsh(mats)[..., 0] > 0)


@dataclass
class ParticleCloud:
    """PMC particles for one cluster's skew-normal block.

    ``z`` rows are aligned with the cluster's current member observations;
    ``varrho`` holds the latest normalized importance weights.
    """

    xi_j: np.ndarray  # (M, J, p)
    xi_0: np.ndarray  # (M, p)
    G: np.ndarray  # (M, p, p)
    psi: np.ndarray  # (M, p)
    E: np.ndarray  # (M, p, p)
    z: np.ndarray  # (M, n_k)
    varrho: np.ndarray  # (M,) normalized

    @property
    def M(self):
        return self.xi_0.shape[0]

    def reindex(self, idx):
        return ParticleCloud(
            self.xi_j[idx],
            self.xi_0[idx],
            self.G[idx],
            self.psi[idx],
            self.E[idx],
            self.z[idx],
            np.full(len(idx), 1.0 / len(idx)),
        )


def _kmeanspp_centers(y, k, rng):
    """k-means++ style seeding; deterministic given the generator."""
    n = y.shape[0]
    centers = np.empty((k, y.shape[1]))
    n_seed = min(k, n)
    first = int(rng.integers(n))
    centers[0] = y[first]
    d2 = ((y - centers[0]) ** 2).sum(axis=1)
    for i in range(1, n_seed):
        total = d2.sum()
        if total <= 0:
            centers[i] = y[int(rng.integers(n))]
        else:
            centers[i] = y[int(rng.choice(n, p=d2 / total))]
        d2 = np.minimum(d2, ((y - centers[i]) ** 2).sum(axis=1))
    if n_seed < k:
        # more centers than observations: scatter the rest around the pool
        mu = y.mean(axis=0)
        cov = np.cov(y.T).reshape(y.shape[1], y.shape[1]) if n > 1 else np.eye(y.shape[1])
        chol, _ = chol_pd(cov + 1e-12 * np.eye(y.shape[1]))
        centers[n_seed:] = mu + rng.standard_normal((k - n_seed, y.shape[1])) @ chol.T
    return centers


def init_state(data, hyper, rng):
    """Deterministic-by-seed initialization of state and particle clouds.

    Locations come from k-means++ seeding of K centers on the pooled data,
    scale matrices start at the pooled covariance, skews at zero, and
    dispersions at the prior mean of E (E0 itself when that mean is
    undefined). All M particles of a cluster start identical; the first
    sweep diversifies them.
    """
    n, p, J, K = data.n, data.p, data.J, hyper.K
    if 0 < n < K:
        warnings.warn(f"fewer observations ({n}) than clusters ({K}); "
                      "empty clusters will be refreshed from priors")
    if n > 0:
        centers = _kmeanspp_centers(data.y, K, rng)
        pooled_cov = np.cov(data.y.T).reshape(p, p) if n > 1 else np.eye(p)
        _, pooled_cov = chol_pd(pooled_cov + 1e-10 * np.eye(p))
    else:
        centers = np.tile(hyper.b0, (K, 1))
        pooled_cov = hyper.B0.copy()
    if hyper.nu0 > p + 1:
        e_init = hyper.E0 / (hyper.nu0 - p - 1.0)
    else:
        e_init = hyper.E0.copy()

    weights = np.full((J, K), 1.0 / K)
    log_weights = np.full((J, K), -np.log(K))
    xi_0 = centers
    xi_j = np.broadcast_to(centers, (J, K, p)).copy()
    G = np.broadcast_to(pooled_cov, (K, p, p)).copy()
    psi = np.zeros((K, p))
    E = np.broadcast_to(e_init, (K, p, p)).copy()
    eta = hyper.a_eta / hyper.b_eta
    z = np.abs(rng.standard_normal(n))
    T = np.zeros(n, dtype=np.int64)
    if n > 0:
        # draw initial labels from the initial mixture itself: with zero
        # skew, uniform weights, and the shared broad pooled covariance the
        # assignment conditional is a Gaussian categorical. The broad scale
        # matters: it lets initial clusters claim observations from every
        # sample, so cross-sample cluster identity is present from the
        # start rather than having to be discovered by label moves.
        chol_pool, _ = chol_pd(pooled_cov)
        chol_inv = np.linalg.inv(chol_pool)
        for lo in range(0, n, 8192):
            hi = min(lo + 8192, n)
            dev = data.y[lo:hi, None, :] - centers[None, :, :]
            u = np.einsum("pq,nkq->nkp", chol_inv, dev)
            logits = -0.5 * (u**2).sum(axis=2)
            gumbel = -np.log(-np.log(rng.random(logits.shape)))
            T[lo:hi] = (logits + gumbel).argmax(axis=1)
    state = ChainState(weights, log_weights, T, xi_j, xi_0, G, psi, E, eta, z)

    clouds = []
    M = hyper.M
    for k in range(K):
        members = np.flatnonzero(T == k)
        clouds.append(
            ParticleCloud(
                np.broadcast_to(xi_j[:, k, :], (M, J, p)).copy(),
                np.broadcast_to(xi_0[k], (M, p)).copy(),
                np.broadcast_to(G[k], (M, p, p)).copy(),
                np.zeros((M, p)),
                np.broadcast_to(E[k], (M, p, p)).copy(),
                np.broadcast_to(z[members], (M, len(members))).copy(),
                np.full(M, 1.0 / M),
            )
        )
    return state, clouds


def draw_block_prior(hyper, J, rng, size):
    """Draw ``size`` independent skew-normal blocks from their priors.

    Returns arrays (xi_0, G, psi, E, xi_j) with leading dimension ``size``;
    psi and G come from the (Sigma, delta) priors through the uniform-
    ellipsoid draw, so every G is positive-definite by construction.
    """
    p = hyper.p
    chol_b0, _ = chol_pd(hyper.B0)
    xi_0 = hyper.b0 + rng.standard_normal((size, p)) @ chol_b0.T
    sigma = inv_wishart_rvs(rng, hyper.m, hyper.Lambda, size)
    omega = np.sqrt(np.diagonal(sigma, axis1=-2, axis2=-1))
    corr = sigma / (omega[:, :, None] * omega[:, None, :])
    chol_corr = np.linalg.cholesky(corr)
    delta = (chol_corr @ uniform_ball_rvs(rng, size, p)[:, :, None])[:, :, 0]
    psi = omega * delta
    G = sigma - psi[:, :, None] * psi[:, None, :]
    E = inv_wishart_rvs(rng, hyper.nu0, hyper.E0, size)
    chol_e = np.linalg.cholesky(E)
    eps = rng.standard_normal((size, J, p))
    xi_j = xi_0[:, None, :] + (chol_e[:, None] @ eps[..., None])[..., 0]
    return xi_0, G, psi, E, xi_j


def mixture_loglik(state, data):
    """Uncoarsened mixture log-likelihood, marginal over assignments."""
    if data.n == 0:
        return 0.0
    K = state.K
    parts = np.empty((data.n, K))
    for k in range(K):
        params = snkernel.SnParamsAugmented(
            np.zeros(data.p), state.G[k], state.psi[k]
        )
        d = snkernel.to_direct(params)
        dev = data.y - state.xi_j[data.sample_of, k, :]
        chol, _ = chol_pd(d.Sigma)
        u = np.linalg.solve(chol, dev.T).T
        logdet = 2.0 * np.log(np.diag(chol)).sum()
        parts[:, k] = (
            np.log(2.0)
            - 0.5 * (data.p * np.log(2 * np.pi) + (u**2).sum(axis=1))
            - 0.5 * logdet
            + log_ndtr(dev @ (d.alpha / d.omega))
        )
    return float(logsumexp(state.log_weights[data.sample_of] + parts, axis=1).sum())


def power_loglik(state, data, hyper):
    """Coarsened (power) mixture log-likelihood: zeta times the marginal
    mixture log-likelihood of the data under the current state."""
    return hyper.zeta * mixture_loglik(state, data)
