"""Coordinate-ascent variational inference for the GP and DM families.

Each document gets a factored surrogate posterior: independent gammas
Gamma(a_k, b_k) over the scores (GP; b_k is pinned to 1+beta_k by the
update) or a Dirichlet(a) over the proportions (DM), together with one
responsibility row per observed word.  Responsibilities are transient:
they are recomputed from `a` whenever needed and never stored.

A full cycle runs the per-document updates, accumulates the loading
sufficient statistics, then renormalises the loading matrix against its
Dirichlet prior.  The reported per-document quantity is a lower bound on
the document log probability, evaluated at the freshly updated `a`; the
per-cycle total is nondecreasing.

The multiplicative Poisson factoriser (`fit_nmf`) is the maximum-likelihood
limit of the GP family with flat improper score priors; after its updates
the loadings are returned column-normalised with the scores absorbing the
scale factor.
"""

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DataError, DegenerateDocumentError, NumericError
from .mathfn import digamma, log_gamma
from .model import DM, GP, ModelParams
from .report import FitReport

# Documents are processed in fixed-size blocks so that the reduction order
# (and therefore the floating-point result) does not depend on --threads.
_BLOCK_DOCS = 4096


@dataclass
class VariationalState:
    """Per-document surrogate parameters: gamma shapes/rates (GP) or
    Dirichlet parameters (DM, b is None)."""

    a: np.ndarray
    b: np.ndarray = None


@dataclass
class FitConfig:
    max_cycles: int = 200
    tol: float = 1e-6
    threads: int = 1
    state_path: str = None  # optional on-disk store for the per-document a


@dataclass
class VariationalFit:
    params: ModelParams
    doc_states: np.ndarray  # (I, K) matrix of per-document a vectors
    report: FitReport
    converged: bool

    def doc_scores(self):
        """Posterior-mean scores per document: a/b (GP) or a/sum(a) (DM)."""
        if self.params.family == GP:
            return self.doc_states / (1.0 + self.params.beta)[None, :]
        return self.doc_states / self.doc_states.sum(axis=1, keepdims=True)


def init_state(doc, params):
    """Starting surrogate for one document: uniform (sum alpha + L)/K shapes
    for GP, Jeffreys 0.5 for DM."""
    _ids, counts = doc
    k = params.num_components
    if params.family == GP:
        a0 = (params.alpha.sum() + float(np.sum(counts))) / k
        return VariationalState(np.full(k, a0), 1.0 + params.beta)
    return VariationalState(np.full(k, 0.5), None)


def _log_theta(theta):
    with np.errstate(divide="ignore"):
        return np.log(theta)


def _expected_log_scores(a, b):
    """E[ln l_k] under Gamma(a,b), or E[ln m_k] under Dirichlet(a) if b is None."""
    if b is not None:
        return digamma(a) - np.log(b)
    return digamma(a) - digamma(a.sum())


def _responsibilities(word_ids, log_theta_rows, elog):
    s = log_theta_rows + elog[None, :]
    peak = s.max(axis=1)
    bad = np.isneginf(peak)
    if np.any(bad):
        raise DegenerateDocumentError(word_ids[np.argmax(bad)])
    p = np.exp(s - peak[:, None])
    z = p.sum(axis=1)
    return p / z[:, None], peak + np.log(z)


def _doc_bound(counts, params, a, b, log_z):
    counts = np.asarray(counts, dtype=np.float64)
    elog = _expected_log_scores(a, b)
    alpha = params.alpha
    value = float(np.dot(counts, log_z)) - float(log_gamma(counts + 1.0).sum())
    value += float(((alpha - a) * elog).sum())
    if params.family == GP:
        value -= float(
            (
                log_gamma(alpha)
                + a * np.log(b)
                - log_gamma(a)
                - alpha * np.log(params.beta)
            ).sum()
        )
    else:
        value += float(log_gamma(counts.sum() + 1.0))
        value -= float(
            log_gamma(a.sum())
            - log_gamma(alpha.sum())
            + (log_gamma(alpha) - log_gamma(a)).sum()
        )
    return value


def _e_step(doc, params, state):
    word_ids, counts = doc
    if np.any(state.a <= 0.0):
        raise NumericError("surrogate shape parameters must stay positive")
    log_theta_rows = _log_theta(params.theta[word_ids, :])
    elog = _expected_log_scores(state.a, state.b)
    resp, _ = _responsibilities(word_ids, log_theta_rows, elog)
    contrib = np.asarray(counts, dtype=np.float64)[:, None] * resp
    a_new = params.alpha + contrib.sum(axis=0)
    new_state = VariationalState(a_new, state.b)
    # The reported bound is evaluated at the post-update surrogate.
    _, log_z = _responsibilities(
        word_ids, log_theta_rows, _expected_log_scores(a_new, state.b)
    )
    bound = _doc_bound(counts, params, a_new, state.b, log_z)
    return new_state, (word_ids, contrib), bound


def e_step_gp(doc, params, state):
    """One document update for the GP family.

    Responsibilities are proportional to theta_{j,k} exp(E[ln l_k]); the new
    shape is alpha_k plus the responsibility-weighted counts, the rate is
    pinned at 1+beta_k.  Returns the updated state, the per-word loading
    contributions w_j n_{j,k}, and the document's log-probability bound.
    """
    if params.family != GP:
        raise DataError("e_step_gp needs a gp model")
    return _e_step(doc, params, state)


def e_step_dm(doc, params, state):
    """One document update for the DM family (see e_step_gp)."""
    if params.family != DM:
        raise DataError("e_step_dm needs a dm model")
    return _e_step(doc, params, state)


def bound_gp(doc, params, state):
    """Lower bound on log p(counts | model) at the given surrogate state."""
    word_ids, counts = doc
    elog = _expected_log_scores(state.a, state.b)
    _, log_z = _responsibilities(word_ids, _log_theta(params.theta[word_ids, :]), elog)
    return _doc_bound(counts, params, state.a, state.b, log_z)


def bound_dm(doc, params, state):
    """DM counterpart of bound_gp."""
    return bound_gp(doc, params, state)


def m_step(suffstats, gamma, group_of_word=None, num_groups=0):
    """Re-estimate the loading matrix from accumulated statistics.

    theta_{j,k} is proportional to the total responsibility-weighted count
    plus the prior weight gamma_j, normalised per column (per group block
    for grouped models).
    """
    suffstats = np.asarray(suffstats, dtype=np.float64)
    if np.any(suffstats < 0):
        raise DataError("sufficient statistics must be nonnegative")
    totals = suffstats + np.asarray(gamma, dtype=np.float64)[:, None]
    theta = np.zeros_like(totals)
    if group_of_word is None:
        colsum = totals.sum(axis=0)
        if np.any(colsum <= 0.0):
            raise NumericError("a loading column has no mass and no prior weight")
        theta = totals / colsum[None, :]
    else:
        for g in range(num_groups):
            rows = np.flatnonzero(group_of_word == g)
            block = totals[rows, :]
            colsum = block.sum(axis=0)
            if np.any(colsum <= 0.0):
                raise NumericError(f"group {g + 1} has no mass and no prior weight")
            theta[rows, :] = block / colsum[None, :]
    return theta


def _cycle_block(args):
    (lo, hi, family, a_block, log_theta, alpha, beta, b, log_b, jj, cc,
     ii_local, num_words, doc_logfact) = args
    elog = digamma(a_block)
    if family == GP:
        elog -= log_b[None, :]
    else:
        elog -= digamma(a_block.sum(axis=1))[:, None]
    s = log_theta[jj, :] + elog[ii_local, :]
    peak = s.max(axis=1)
    bad = np.isneginf(peak)
    if np.any(bad):
        raise DegenerateDocumentError(jj[np.argmax(bad)])
    p = np.exp(s - peak[:, None])
    z = p.sum(axis=1)
    contrib = cc[:, None] * (p / z[:, None])
    k = alpha.size
    ndocs = hi - lo
    a_new = np.empty((ndocs, k))
    suffstat = np.empty((num_words, k))
    for kk in range(k):
        a_new[:, kk] = alpha[kk] + np.bincount(
            ii_local, weights=contrib[:, kk], minlength=ndocs
        )
        suffstat[:, kk] = np.bincount(jj, weights=contrib[:, kk], minlength=num_words)
    # Second pass: the reported bound belongs to the updated surrogate.
    elog2 = digamma(a_new)
    if family == GP:
        elog2 -= log_b[None, :]
    else:
        elog2 -= digamma(a_new.sum(axis=1))[:, None]
    s2 = log_theta[jj, :] + elog2[ii_local, :]
    peak2 = s2.max(axis=1)
    log_z2 = peak2 + np.log(np.exp(s2 - peak2[:, None]).sum(axis=1))
    bound = float(np.dot(cc, log_z2)) - float(doc_logfact.sum())
    bound += float(((alpha[None, :] - a_new) * elog2).sum())
    if family == GP:
        bound -= float(
            ndocs * (log_gamma(alpha) - alpha * np.log(beta)).sum()
            + (a_new * log_b[None, :] - log_gamma(a_new)).sum()
        )
    else:
        bound += float(log_gamma(np.bincount(ii_local, weights=cc, minlength=ndocs) + 1.0).sum())
        bound -= float(
            log_gamma(a_new.sum(axis=1)).sum()
            - ndocs * log_gamma(alpha.sum())
            + ndocs * log_gamma(alpha).sum()
            - log_gamma(a_new).sum()
        )
    return a_new, suffstat, bound


def fit_variational(corpus, params_init, config=None):
    """Fit a GP or DM model by full-corpus coordinate ascent.

    Runs per-document updates over the whole collection, re-estimates the
    loading matrix, and repeats until the total bound changes by less than
    `tol` (relative) or `max_cycles` is reached.  Deterministic for a given
    initial model regardless of thread count.
    """
    config = config or FitConfig()
    params_init.validate()
    if params_init.family not in (GP, DM):
        raise DataError("variational fitting supports the gp and dm families only")
    if params_init.group_of_word is not None:
        raise DataError("variational fitting does not support grouped models")
    num_docs, num_words = corpus.num_docs, corpus.num_words
    k = params_init.num_components
    alpha = params_init.alpha
    if params_init.family == GP:
        b = 1.0 + params_init.beta
        log_b = np.log(b)
        a_init = (alpha.sum() + corpus.doc_lengths.astype(np.float64)) / k
        a_matrix = np.repeat(a_init[:, None], k, axis=1)
    else:
        b = log_b = None
        a_matrix = np.full((num_docs, k), 0.5)
    if config.state_path is not None:
        store = np.lib.format.open_memmap(
            config.state_path, mode="w+", dtype=np.float64, shape=(num_docs, k)
        )
        store[:] = a_matrix
        a_matrix = store
    ii = corpus.doc_index_of_entry()
    jj = corpus.word_ids.astype(np.int64)
    cc = corpus.counts.astype(np.float64)
    doc_logfact = np.zeros(num_docs)
    if len(cc):
        np.add.at(doc_logfact, ii, log_gamma(cc + 1.0))
    blocks = [
        (lo, min(lo + _BLOCK_DOCS, num_docs)) for lo in range(0, num_docs, _BLOCK_DOCS)
    ] or [(0, 0)]
    theta = params_init.theta.copy()
    params = ModelParams(
        family=params_init.family, theta=theta, alpha=alpha, beta=params_init.beta,
        rho=None, gamma=params_init.gamma, seed=params_init.seed,
    )
    report = FitReport()
    started = time.perf_counter()
    previous = None
    converged = False
    pool = ThreadPoolExecutor(max_workers=config.threads) if config.threads > 1 else None
    try:
        for cycle in range(1, config.max_cycles + 1):
            log_theta = _log_theta(params.theta)
            tasks = []
            for lo, hi in blocks:
                s0, s1 = corpus.doc_ptr[lo], corpus.doc_ptr[hi]
                tasks.append((
                    lo, hi, params.family, a_matrix[lo:hi].copy(), log_theta,
                    alpha, params_init.beta, b, log_b, jj[s0:s1], cc[s0:s1],
                    ii[s0:s1] - lo, num_words, doc_logfact[lo:hi],
                ))
            results = list(pool.map(_cycle_block, tasks)) if pool else [
                _cycle_block(t) for t in tasks
            ]
            suffstats = np.zeros((num_words, k))
            total_bound = 0.0
            for (lo, hi), (a_new, part, bound) in zip(blocks, results):
                a_matrix[lo:hi] = a_new
                suffstats += part
                total_bound += bound
            params.theta = m_step(suffstats, params_init.gamma)
            report.add(cycle, total_bound, time.perf_counter() - started)
            if previous is not None and abs(total_bound - previous) <= config.tol * abs(previous):
                converged = True
                break
            previous = total_bound
    finally:
        if pool:
            pool.shutdown()
    if config.state_path is not None:
        a_matrix.flush()
    return VariationalFit(params, np.asarray(a_matrix), report, converged)


@dataclass
class NmfConfig:
    num_components: int
    iterations: int = 200
    seed: int = 0
    eps: float = 1e-12  # floor on the reconstruction to guard divisions


def fit_nmf(corpus, config):
    """Multiplicative Poisson factorisation of the count matrix.

    Runs the two multiplicative updates as usually printed, then returns the
    loadings column-normalised with each scale factor psi_k = sum_j theta_jk
    moved onto the scores.  The monitored Poisson log likelihood (flat
    improper score prior limit) is nondecreasing over iterations.
    """
    counts = corpus.to_dense().astype(np.float64)
    num_docs, num_words = counts.shape
    k = config.num_components
    rng = np.random.default_rng(config.seed)
    theta = rng.uniform(0.5, 1.5, size=(num_words, k))
    scores = rng.uniform(0.5, 1.5, size=(num_docs, k))
    report = FitReport(value_label="poisson_loglik")
    started = time.perf_counter()
    for iteration in range(1, config.iterations + 1):
        recon = np.maximum(scores @ theta.T, config.eps)
        scores *= ((counts / recon) @ theta) / theta.sum(axis=0)[None, :]
        recon = np.maximum(scores @ theta.T, config.eps)
        theta *= ((counts / recon).T @ scores) / scores.sum(axis=0)[None, :]
        recon = np.maximum(scores @ theta.T, config.eps)
        loglik = float((counts * np.log(recon)).sum() - recon.sum())
        report.add(iteration, loglik, time.perf_counter() - started)
    psi = theta.sum(axis=0)
    return theta / psi[None, :], scores * psi[None, :], report


def nmf_residuals(counts, theta, scores, eps=1e-12):
    """Fixed-point residuals of the normalised factorisation.

    At a stationary point the normalised loadings and rescaled scores are
    invariant under
        l_k      <- l_k * sum_j theta_jk w_j / recon_j
        theta_jk <- normalise_j( theta_jk * sum_i l_ki w_ji / recon_ji ).
    Returns the largest relative score residual and the largest absolute
    loading residual.
    """
    counts = np.asarray(counts, dtype=np.float64)
    recon = np.maximum(scores @ theta.T, eps)
    scores_next = scores * ((counts / recon) @ theta)
    res_scores = np.max(np.abs(scores_next - scores) / (np.abs(scores) + 1.0))
    raw = theta * ((counts / recon).T @ scores)
    theta_next = raw / raw.sum(axis=0)[None, :]
    res_theta = np.max(np.abs(theta_next - theta))
    return float(res_scores), float(res_theta)
