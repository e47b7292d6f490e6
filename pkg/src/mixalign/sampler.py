"""Hybrid Gibbs-PMC sampler.

Each sweep runs, in order: Metropolis-Hastings on the concentration eta,
a Dirichlet draw of the per-sample mixture weights (finite symmetric-
Dirichlet truncation of the stick-breaking prior, with counts discounted
by the coarsening level zeta), per-cluster population-Monte-Carlo moves
for the skew-normal block parameters, a categorical redraw of the cluster
assignments against the particle means, snapshot storage, and (post
burn-in, at a configurable cadence) KL-based cluster merging.

The PMC move for a non-empty cluster draws the latent half-normal scalars
and then the five parameter blocks (sample locations, residual scale G,
scaled skew psi, grand location, dispersion E) from their conditional-
style proposals in a uniformly random order, weights each particle by
coarsened-target / proposal, and resamples.

Reproducibility contract: every (iteration, cluster) unit and every
serial step derives its own generator from the seed through a
SeedSequence key, so results are bitwise identical for any worker count.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, log_ndtr, logsumexp
from scipy.stats import truncnorm

from .state import ParticleCloud, draw_block_prior, init_state, power_loglik
from .snkernel import skew_prior_logdensity_aug
from .utils import (
    LOG_2PI,
    chol_pd_batch,
    dirichlet_log_rvs,
    gamma_logpdf,
    inv_wishart_logpdf,
    inv_wishart_rvs,
    logdet_from_chol,
    mvn_rvs,
    truncnorm_pos_logpdf,
)

logger = logging.getLogger(__name__)

# SeedSequence stream tags; each serial step and each (iteration, cluster)
# parallel unit gets an independent generator.
_S_INIT, _S_ETA, _S_WEIGHTS, _S_REFRESH, _S_CLUSTER, _S_ASSIGN = range(6)


class SamplerError(RuntimeError):
    """A sweep failed; the message carries the iteration index."""


class NumericalFailureError(RuntimeError):
    """All assignment probabilities vanished for some observation."""


class DegenerateCloudError(RuntimeError):
    """Every particle of a cluster received zero importance weight."""


@dataclass
class SamplerConfig:
    n_iter: int
    n_burn: int
    thin: int = 1
    seed: int = 0
    mh_adapt_target: float = 0.35
    merge_check_every: int = 1
    workers: int = 1
    check_invariants: bool = False

    def __post_init__(self):
        if self.n_iter <= 0 or self.n_burn < 0 or self.thin < 1:
            raise ValueError("n_iter, n_burn, thin must be positive")
        if not self.n_burn < self.n_iter:
            raise ValueError("n_burn must be smaller than n_iter")
        if self.seed < 0:
            raise ValueError("seed must be a nonnegative integer")
        if self.merge_check_every < 1 or self.workers < 1:
            raise ValueError("merge_check_every and workers must be >= 1")


def _stream(seed, tag, *key):
    return np.random.default_rng(np.random.SeedSequence([int(seed), tag, *map(int, key)]))


def counts_from_T(T, sample_of, J, K):
    """Per-sample per-cluster occupancy (J, K)."""
    return np.bincount(sample_of * K + T, minlength=J * K).reshape(J, K)


# ---------------------------------------------------------------------------
# weights and concentration


def dirichlet_alpha(counts, eta, zeta):
    """Dirichlet parameters of the coarsened weights conditional:
    zeta * n_{j,k} + eta / K."""
    counts = np.asarray(counts, dtype=float)
    return zeta * counts + eta / counts.shape[-1]


def update_weights(counts, eta, hyper, rng):
    """Draw each sample's weight row from its Dirichlet conditional."""
    alpha = dirichlet_alpha(counts, eta, hyper.zeta)
    return dirichlet_log_rvs(rng, alpha)


def eta_log_target(eta, log_weights, hyper):
    """Gamma prior times the symmetric-Dirichlet likelihood of the rows."""
    if eta <= 0:
        return -np.inf
    lp = gamma_logpdf(eta, hyper.a_eta, hyper.b_eta)
    J, K = log_weights.shape
    if J:
        lp += J * (gammaln(eta) - K * gammaln(eta / K))
        lp += (eta / K - 1.0) * log_weights.sum()
    return lp


def _eta_log_accept(eta_new, eta_old, log_weights, hyper, a0):
    num = eta_log_target(eta_new, log_weights, hyper) + gamma_logpdf(
        eta_old, eta_new**2 * a0, eta_new * a0
    )
    den = eta_log_target(eta_old, log_weights, hyper) + gamma_logpdf(
        eta_new, eta_old**2 * a0, eta_old * a0
    )
    return num - den


def update_eta(eta, log_weights, hyper, rng, a0):
    """One Metropolis-Hastings move on eta.

    The proposal Gamma(eta^2 a0, eta a0) is centered at the current value
    with variance 1/a0; a0 is calibrated by the caller during burn-in.
    Returns (new_eta, acceptance_probability).
    """
    proposed = rng.gamma(eta**2 * a0, 1.0 / (eta * a0))
    if not (np.isfinite(proposed) and proposed > 1e-12):
        return eta, 0.0
    with np.errstate(all="ignore"):
        log_r = _eta_log_accept(proposed, eta, log_weights, hyper, a0)
    if not np.isfinite(log_r):
        log_r = -np.inf
    acc = min(1.0, float(np.exp(min(log_r, 0.0))))
    if rng.random() < acc:
        return float(proposed), acc
    return eta, acc


# ---------------------------------------------------------------------------
# cluster assignments


def t_log_probabilities(y, sample_of, log_weights, xi_j, G, psi, chunk=8192):
    """Normalized log-probabilities of the assignment conditional, (n, K).

    P(T_i = k) is proportional to pi_{j,k} times the skew-normal density
    of y_i under cluster k's parameters (in augmented form).
    """
    n, p = y.shape
    K = psi.shape[0]
    sigma = G + psi[:, :, None] * psi[:, None, :]
    chol, sigma = chol_pd_batch(sigma)
    chol_inv = np.linalg.inv(chol)
    logdet = logdet_from_chol(chol)
    # s_k = Sigma^{-1} psi / sqrt(1 - psi' Sigma^{-1} psi) gives the CDF
    # argument s_k'(y - xi) without forming alpha explicitly
    u = (chol_inv @ psi[:, :, None])[:, :, 0]
    q = (u**2).sum(axis=1)
    s = np.einsum("kqp,kq->kp", chol_inv, u) / np.sqrt(
        np.maximum(1.0 - q, 1e-300)
    )[:, None]
    const = np.log(2.0) - 0.5 * (p * LOG_2PI + logdet)
    out = np.empty((n, K))
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        dev = y[lo:hi, None, :] - xi_j[sample_of[lo:hi], :, :]
        w = np.einsum("kpq,nkq->nkp", chol_inv, dev)
        maha = (w**2).sum(axis=2)
        skew = np.einsum("kp,nkp->nk", s, dev)
        out[lo:hi] = const + log_ndtr(skew) - 0.5 * maha
    out += log_weights[sample_of]
    norm = logsumexp(out, axis=1, keepdims=True)
    bad = ~np.isfinite(norm[:, 0])
    if bad.any():
        raise NumericalFailureError(
            f"all {K} assignment probabilities vanished for observation "
            f"{int(np.flatnonzero(bad)[0])}"
        )
    return out - norm


def update_T(y, sample_of, log_weights, xi_j, G, psi, rng):
    """Draw assignments from the categorical conditional (Gumbel-max in
    log space) and return (T, counts)."""
    logp = t_log_probabilities(y, sample_of, log_weights, xi_j, G, psi)
    gumbel = -np.log(-np.log(rng.random(logp.shape)))
    T = (logp + gumbel).argmax(axis=1)
    return T, counts_from_T(T, sample_of, log_weights.shape[0], psi.shape[0])


# ---------------------------------------------------------------------------
# PMC proposal-parameter computations (batched over particles)


def z_conditional_params(y_k, j_k, xi_j, G, psi, zeta):
    """Mean vector and variance of the latent-scalar conditional.

    v = (1 + zeta psi' G^{-1} psi)^{-1};
    m_i = v * zeta * (y_i - xi_{j_i})' G^{-1} psi.
    Returns (m of shape (M, n_k), v of shape (M,)).
    """
    w = np.linalg.solve(G, psi[:, :, None])[:, :, 0]  # (M, p) = G^{-1} psi
    v = 1.0 / (1.0 + zeta * (psi * w).sum(axis=1))
    dev = y_k[None, :, :] - xi_j[:, j_k, :]
    m = v[:, None] * zeta * np.einsum("mip,mp->mi", dev, w)
    return m, v


def update_z_particles(cloud, y_k, j_k, zeta, rng):
    """Redraw each particle's latent scalars from the truncated normal on
    [0, inf) implied by the folded two-branch conditional."""
    m, v = z_conditional_params(y_k, j_k, cloud.xi_j, cloud.G, cloud.psi, zeta)
    sd = np.sqrt(v)[:, None]
    sd = np.broadcast_to(sd, m.shape)
    z = truncnorm.rvs(-m / sd, np.inf, loc=m, scale=sd, random_state=rng)
    z = np.atleast_2d(np.asarray(z, dtype=float)).reshape(m.shape)
    logq = truncnorm_pos_logpdf(z, m, sd).sum(axis=1)
    return z, logq


def g_proposal_params(y_k, j_k, xi_j, psi, z, hyper):
    """Inverse-Wishart proposal for G: df = zeta n_k + m and scale
    Lambda + zeta * coarsened residual scatter."""
    r = y_k[None, :, :] - xi_j[:, j_k, :] - psi[:, None, :] * z[:, :, None]
    scatter = np.einsum("mip,miq->mpq", r, r)
    df = hyper.zeta * y_k.shape[0] + hyper.m
    scale = hyper.Lambda + hyper.zeta * scatter
    return df, scale


def psi_proposal_params(y_k, j_k, xi_j, G, z, hyper):
    """Normal proposal for psi: mean sum(|z| (y - xi)) / sum(z^2),
    covariance G / (zeta sum(z^2))."""
    dev = y_k[None, :, :] - xi_j[:, j_k, :]
    sz2 = (z**2).sum(axis=1)
    mean = np.einsum("mi,mip->mp", z, dev) / sz2[:, None]
    cov = G / (hyper.zeta * sz2)[:, None, None]
    return mean, cov


def xi_j_proposal_params(y_k, j_k, G, psi, z, xi_0, E, hyper, J):
    """Per-sample location conditional
    N(E* (E^{-1} xi_0 + zeta n_jk G^{-1} (ybar - psi zbar)), E*) with
    E* = (E^{-1} + zeta n_jk G^{-1})^{-1}; samples with no members in the
    cluster collapse to the N(xi_0, E) prior.

    Returns (means (M, J, p), covs (M, J, p, p)).
    """
    M, p = psi.shape
    e_inv = np.linalg.inv(E)
    g_inv = np.linalg.inv(G)
    means = np.empty((M, J, p))
    covs = np.empty((M, J, p, p))
    rhs0 = (e_inv @ xi_0[:, :, None])[:, :, 0]
    for j in range(J):
        sel = j_k == j
        n_jk = int(sel.sum())
        if n_jk:
            ybar = y_k[sel].mean(axis=0)
            zbar = z[:, sel].mean(axis=1)
            resid = ybar[None, :] - psi * zbar[:, None]
            rhs = rhs0 + hyper.zeta * n_jk * (g_inv @ resid[:, :, None])[:, :, 0]
            prec = e_inv + hyper.zeta * n_jk * g_inv
        else:
            rhs = rhs0
            prec = e_inv
        cov = np.linalg.inv(prec)
        cov = 0.5 * (cov + np.swapaxes(cov, -1, -2))
        covs[:, j] = cov
        means[:, j] = (cov @ rhs[:, :, None])[:, :, 0]
    return means, covs


def xi0_proposal_params(xi_j, E, hyper, J):
    """Grand-location conditional
    N(B* (B0^{-1} b0 + zeta J E^{-1} xibar), B*),
    B* = (B0^{-1} + zeta J E^{-1})^{-1}."""
    b0_inv = np.linalg.inv(hyper.B0)
    e_inv = np.linalg.inv(E)
    xibar = xi_j.mean(axis=1)
    prec = b0_inv[None] + hyper.zeta * J * e_inv
    cov = np.linalg.inv(prec)
    cov = 0.5 * (cov + np.swapaxes(cov, -1, -2))
    rhs = (b0_inv @ hyper.b0)[None, :] + hyper.zeta * J * (
        e_inv @ xibar[:, :, None]
    )[:, :, 0]
    mean = (cov @ rhs[:, :, None])[:, :, 0]
    return mean, cov


def e_proposal_params(xi_j, xi_0, hyper):
    """Dispersion conditional: IW(nu0 + J, E0 + sum_j S_jk) with
    S_jk the grand-location scatter of the sample locations."""
    dev = xi_j - xi_0[:, None, :]
    s = np.einsum("mjp,mjq->mpq", dev, dev)
    return hyper.nu0 + xi_j.shape[1], hyper.E0 + s


# ---------------------------------------------------------------------------
# PMC target


def cluster_log_target(y_k, j_k, xi_j, xi_0, G, psi, E, z, hyper):
    """Log coarsened target of one cluster's block, batched over particles.

    power likelihood of the member data (exponent zeta)
    x half-normal density of the latent scalars
    x N(xi_j; xi_0, E) for every sample
    x N(xi_0; b0, B0) x IW(E; nu0, E0)
    x IW(Sigma = G + psi psi'; m, Lambda) x uniform-ellipsoid skew prior
    x Jacobian of the (Sigma, delta) -> (G, psi) reparametrization.
    """
    M, p = psi.shape
    chol_g, _ = chol_pd_batch(G)
    logdet_g = logdet_from_chol(chol_g)
    n_k = y_k.shape[0]
    if n_k:
        r = y_k[None, :, :] - xi_j[:, j_k, :] - psi[:, None, :] * z[:, :, None]
        u = np.linalg.solve(chol_g[:, None], r[..., None])[..., 0]
        quad = (u**2).sum(axis=(1, 2))
        loglik = -0.5 * (n_k * (p * LOG_2PI + logdet_g) + quad)
        log_z = n_k * (np.log(2.0) - 0.5 * LOG_2PI) - 0.5 * (z**2).sum(axis=1)
    else:
        loglik = np.zeros(M)
        log_z = np.zeros(M)
    dev_j = xi_j - xi_0[:, None, :]
    chol_e, _ = chol_pd_batch(E)
    u_j = np.linalg.solve(chol_e[:, None], dev_j[..., None])[..., 0]
    J = xi_j.shape[1]
    log_hier = -0.5 * (
        J * (p * LOG_2PI + logdet_from_chol(chol_e)) + (u_j**2).sum(axis=(1, 2))
    )
    chol_b, _ = chol_pd_batch(hyper.B0)
    u0 = np.linalg.solve(chol_b, (xi_0 - hyper.b0)[..., None])[..., 0]
    log_xi0 = -0.5 * (p * LOG_2PI + logdet_from_chol(chol_b) + (u0**2).sum(axis=-1))
    log_e = inv_wishart_logpdf(E, hyper.nu0, hyper.E0)
    sigma = G + psi[:, :, None] * psi[:, None, :]
    log_sigma = inv_wishart_logpdf(sigma, hyper.m, hyper.Lambda)
    log_skew = skew_prior_logdensity_aug(G, psi)
    log_jac = -0.5 * np.log(
        np.diagonal(G, axis1=-2, axis2=-1) + psi**2
    ).sum(axis=-1)
    return (
        hyper.zeta * loglik
        + log_z
        + log_hier
        + log_xi0
        + log_e
        + log_sigma
        + log_skew
        + log_jac
    )


def _mvn_logpdf_batch(x, mean, cov):
    chol, _ = chol_pd_batch(cov)
    u = np.linalg.solve(chol, (x - mean)[..., None])[..., 0]
    p = x.shape[-1]
    return -0.5 * (p * LOG_2PI + logdet_from_chol(chol) + (u**2).sum(axis=-1))


def pmc_sweep_cluster(cloud, y_k, j_k, hyper, J, rng, cluster_id=0):
    """One PMC move for a non-empty cluster.

    Draws latent scalars, then the five parameter blocks in a uniformly
    random order, weights particles by target/proposal, resamples M
    particles multinomially, and returns (cloud, means dict).
    """
    zeta = hyper.zeta
    z, logq = update_z_particles(cloud, y_k, j_k, zeta, rng)
    xi_j, xi_0 = cloud.xi_j.copy(), cloud.xi_0.copy()
    G, psi, E = cloud.G.copy(), cloud.psi.copy(), cloud.E.copy()

    order = rng.permutation(5)
    for step in order:
        if step == 0:  # sample locations
            means, covs = xi_j_proposal_params(y_k, j_k, G, psi, z, xi_0, E, hyper, J)
            xi_j = mvn_rvs(rng, means, covs)
            logq += _mvn_logpdf_batch(xi_j, means, covs).sum(axis=1)
        elif step == 1:  # residual scale
            df, scale = g_proposal_params(y_k, j_k, xi_j, psi, z, hyper)
            G = inv_wishart_rvs(rng, df, scale, cloud.M)
            logq += inv_wishart_logpdf(G, df, scale)
        elif step == 2:  # scaled skewness
            mean, cov = psi_proposal_params(y_k, j_k, xi_j, G, z, hyper)
            psi = mvn_rvs(rng, mean, cov)
            logq += _mvn_logpdf_batch(psi, mean, cov)
        elif step == 3:  # grand location
            mean, cov = xi0_proposal_params(xi_j, E, hyper, J)
            xi_0 = mvn_rvs(rng, mean, cov)
            logq += _mvn_logpdf_batch(xi_0, mean, cov)
        else:  # dispersion
            df, scale = e_proposal_params(xi_j, xi_0, hyper)
            E = inv_wishart_rvs(rng, df, scale, cloud.M)
            logq += inv_wishart_logpdf(E, df, scale)

    log_target = cluster_log_target(y_k, j_k, xi_j, xi_0, G, psi, E, z, hyper)
    log_rho = log_target - logq
    finite = np.isfinite(log_rho)
    if not finite.any():
        raise DegenerateCloudError(
            f"all particle weights vanished for cluster {cluster_id}"
        )
    if finite.sum() == 1:
        logger.warning(
            "cluster %d particle cloud collapsed to a single valid particle",
            cluster_id,
        )
    log_rho = np.where(finite, log_rho, -np.inf)
    varrho = np.exp(log_rho - logsumexp(log_rho))
    varrho /= varrho.sum()
    idx = rng.choice(cloud.M, size=cloud.M, p=varrho)
    new = ParticleCloud(xi_j, xi_0, G, psi, E, z, varrho).reindex(idx)
    new.varrho = varrho
    means = {
        "xi_j": new.xi_j.mean(axis=0),
        "xi_0": new.xi_0.mean(axis=0),
        "G": new.G.mean(axis=0),
        "psi": new.psi.mean(axis=0),
        "E": new.E.mean(axis=0),
        "z": new.z.mean(axis=0),
    }
    return new, means


def update_empty_clusters(clouds, counts_k, hyper, J, rng, state=None):
    """Refresh every empty cluster's particles from the priors, leaving
    non-empty clusters untouched. When ``state`` is given, its per-cluster
    means for the refreshed clusters are updated in place. Returns the
    refreshed cluster indices."""
    empty = np.flatnonzero(counts_k == 0)
    if len(empty) == 0:
        return empty
    M = hyper.M
    n_e = len(empty)
    xi_0, G, psi, E, xi_j = draw_block_prior(hyper, J, rng, n_e * M)
    for pos, k in enumerate(empty):
        sl = slice(pos * M, (pos + 1) * M)
        clouds[k].xi_0 = xi_0[sl]
        clouds[k].G = G[sl]
        clouds[k].psi = psi[sl]
        clouds[k].E = E[sl]
        clouds[k].xi_j = xi_j[sl]
        clouds[k].z = np.zeros((M, 0))
        clouds[k].varrho = np.full(M, 1.0 / M)
    if state is not None:
        p = hyper.p
        state.xi_0[empty] = xi_0.reshape(n_e, M, p).mean(axis=1)
        state.G[empty] = G.reshape(n_e, M, p, p).mean(axis=1)
        state.psi[empty] = psi.reshape(n_e, M, p).mean(axis=1)
        state.E[empty] = E.reshape(n_e, M, p, p).mean(axis=1)
        state.xi_j[:, empty, :] = np.swapaxes(
            xi_j.reshape(n_e, M, J, p).mean(axis=1), 0, 1
        )
    return empty


# ---------------------------------------------------------------------------
# merging


def moment_matched_gaussian(xi_0, G, psi):
    """Mean and covariance of the Gaussian matching each cluster's grand
    skew-normal: mean xi_0 + psi sqrt(2/pi), cov Sigma - (2/pi) psi psi'."""
    mu = xi_0 + psi * np.sqrt(2.0 / np.pi)
    cov = G + (1.0 - 2.0 / np.pi) * psi[..., :, None] * psi[..., None, :]
    return mu, cov


def symmetrized_kl_gaussians(mu, cov):
    """Pairwise symmetrized KL (sum of both directions) between Gaussian
    approximations; ``mu`` (K, p), ``cov`` (K, p, p) -> (K, K)."""
    K, p = mu.shape
    cov_inv = np.linalg.inv(cov)
    _, logdet = np.linalg.slogdet(cov)
    # tr[a, b] = tr(cov_b^{-1} cov_a)
    tr = np.einsum("bij,aji->ab", cov_inv, cov)
    d = mu[None, :, :] - mu[:, None, :]  # d[a, b] = mu_b - mu_a
    quad = np.einsum("abi,bij,abj->ab", d, cov_inv, d)
    kl = 0.5 * (tr + quad - p + logdet[None, :] - logdet[:, None])
    return kl + kl.T


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, i):
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, i, j):
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            self.parent[max(ri, rj)] = min(ri, rj)


def merge_clusters(state, hyper):
    """Merge clusters whose moment-matched Gaussians are within the
    symmetrized-KL threshold (transitively, via union-find).

    The surviving cluster of each merged group is the member with the
    largest occupancy (ties broken toward the smaller index); it keeps its
    parameters, absorbs the group's weight, and inherits the labels.
    Never modifies the input: returns it unchanged when nothing is below
    threshold, otherwise returns a fresh state.
    """
    K = state.K
    mu, cov = moment_matched_gaussian(state.xi_0, state.G, state.psi)
    skl = symmetrized_kl_gaussians(mu, cov)
    np.fill_diagonal(skl, np.inf)
    a_idx, b_idx = np.nonzero(skl <= hyper.merge_threshold)
    if len(a_idx) == 0:
        return state
    new = state.copy()
    uf = _UnionFind(K)
    for a, b in zip(a_idx, b_idx):
        if a < b:
            uf.union(int(a), int(b))
    roots = np.array([uf.find(k) for k in range(K)])
    n_k = np.bincount(state.T, minlength=K) if len(state.T) else np.zeros(K, int)
    remap = np.arange(K)
    for root in np.unique(roots):
        group = np.flatnonzero(roots == root)
        if len(group) < 2:
            continue
        winner = group[np.argmax(n_k[group])]
        losers = group[group != winner]
        remap[losers] = winner
        new.weights[:, winner] = state.weights[:, group].sum(axis=1)
        new.weights[:, losers] = 0.0
        with np.errstate(divide="ignore"):
            new.log_weights[:, winner] = logsumexp(state.log_weights[:, group], axis=1)
            new.log_weights[:, losers] = -np.inf
    if len(new.T):
        new.T = remap[new.T]
    return new


# ---------------------------------------------------------------------------
# driver


def _sweep_cluster_task(args):
    (k, cloud, y_k, j_k, hyper, J, seed, t) = args
    rng = _stream(seed, _S_CLUSTER, t, k)
    return k, pmc_sweep_cluster(cloud, y_k, j_k, hyper, J, rng, cluster_id=k)


def run(data, hyper, config):
    """Run the full sampler and return the stored chain (a list of
    ChainState snapshots, one per stored post-burn-in sweep)."""
    seed = config.seed
    state, clouds = init_state(data, hyper, _stream(seed, _S_INIT))
    J, K, n = data.J, hyper.K, data.n
    a0 = 1.0
    log_a0 = 0.0
    acc_sum, acc_n = 0.0, 0
    chain = []
    pool = ThreadPoolExecutor(config.workers) if config.workers > 1 else None
    try:
        for t in range(config.n_iter):
            try:
                counts = counts_from_T(state.T, data.sample_of, J, K)

                eta, acc = update_eta(
                    state.eta, state.log_weights, hyper, _stream(seed, _S_ETA, t), a0
                )
                state.eta = eta
                acc_sum += acc
                acc_n += 1
                if t < config.n_burn:
                    # Robbins-Monro on log a0: larger a0 tightens the proposal
                    log_a0 += 2.0 * (t + 1) ** -0.6 * (config.mh_adapt_target - acc)
                    a0 = float(np.exp(np.clip(log_a0, -20.0, 20.0)))

                state.log_weights, state.weights = update_weights(
                    counts, state.eta, hyper, _stream(seed, _S_WEIGHTS, t)
                )

                update_empty_clusters(
                    clouds,
                    counts.sum(axis=0),
                    hyper,
                    J,
                    _stream(seed, _S_REFRESH, t),
                    state=state,
                )

                active = np.flatnonzero(counts.sum(axis=0) > 0)
                member_lists = {k: np.flatnonzero(state.T == k) for k in active}
                tasks = [
                    (
                        int(k),
                        clouds[k],
                        data.y[member_lists[k]],
                        data.sample_of[member_lists[k]],
                        hyper,
                        J,
                        seed,
                        t,
                    )
                    for k in active
                ]
                results = pool.map(_sweep_cluster_task, tasks) if pool else map(
                    _sweep_cluster_task, tasks
                )
                for k, (cloud, means) in results:
                    clouds[k] = cloud
                    state.xi_j[:, k, :] = means["xi_j"]
                    state.xi_0[k] = means["xi_0"]
                    state.G[k] = means["G"]
                    state.psi[k] = means["psi"]
                    state.E[k] = means["E"]
                    state.z[member_lists[k]] = means["z"]

                if n > 0:
                    state.T, counts = update_T(
                        data.y,
                        data.sample_of,
                        state.log_weights,
                        state.xi_j,
                        state.G,
                        state.psi,
                        _stream(seed, _S_ASSIGN, t),
                    )

                if config.check_invariants:
                    state.validate()

                if t >= config.n_burn and (t - config.n_burn) % config.thin == 0:
                    chain.append(state.copy())

                # merging runs throughout, burn-in included: duplicate
                # clusters sitting on one population must be consolidated
                # before per-sample weight extinction turns them into
                # sample-specific specialists that can never re-merge
                if t % config.merge_check_every == 0:
                    state = merge_clusters(state, hyper)

                if (t + 1) % 100 == 0:
                    n_active = int((np.bincount(state.T, minlength=K) > 0).sum()) if n else 0
                    logger.info(
                        "iter %d power-loglik %.2f active-clusters %d mh-accept %.3f",
                        t + 1,
                        power_loglik(state, data, hyper),
                        n_active,
                        acc_sum / max(acc_n, 1),
                    )
            except (NumericalFailureError, DegenerateCloudError) as exc:
                raise type(exc)(f"iteration {t}: {exc}") from None
            except Exception as exc:
                raise SamplerError(f"iteration {t}: {exc}") from exc
    finally:
        if pool:
            pool.shutdown()
    return chain
