"""Gibbs samplers: direct (scores and assignment tables alternately) and
collapsed (token assignments only, scores and loadings integrated out).

A chain is strictly sequential; run several chains with different seeds for
parallelism.  Three independent substreams are derived from the seed: one
for initialisation, one for the chain's own transitions, and one for
reporting draws (per-cycle loading samples used by the log-likelihood
trace), so toggling the trace never changes the chain.

The recorded per-cycle log probability is the conditional likelihood of the
data given the currently sampled latents; it is an estimate, not a bound.

The collapsed sampler keeps one global J x K table of word/component totals
(its loading-matrix sufficient statistics) plus per-document component
counts, and resamples one token at a time through the kernel in dca._kernel.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernel
from .errors import DataError, DegenerateDocumentError, InvariantError, NumericError
from .mathfn import log_gamma, sample_dirichlet, sample_gamma, worker_rng
from .model import CGP, DM, GP, ModelParams, posterior_mean_scores
from .report import FitReport


@dataclass
class ChainConfig:
    burn_in: int = 200
    samples: int = 800
    thin: int = 1
    seed: int = 0
    algorithm: str = "collapsed"  # "direct" or "collapsed"
    audit_every: int = 100  # full recount interval for the collapsed counts
    record_loglik: bool = True
    batches: int = 20  # batch-means slices for Monte Carlo errors

    def validate(self):
        if self.burn_in < 0:
            raise DataError("burn_in must be >= 0")
        if self.samples < 1:
            raise DataError("samples must be >= 1")
        if self.thin < 1:
            raise DataError("thin must be >= 1")
        if self.algorithm not in ("direct", "collapsed"):
            raise DataError(f"unknown algorithm {self.algorithm!r}")
        if self.batches < 2:
            raise DataError("batches must be >= 2")
        return self


def direct_sample_scores(c, params, rng):
    """Draw scores given component counts.

    GP: l_k ~ Gamma(c_k+alpha_k, 1+beta_k).  DM: m ~ Dirichlet(c+alpha).
    CGP: components with c_k>0 follow the GP case; at c_k=0 the score is the
    exact zero with probability
        rho_k (1+beta_k)^alpha_k
        / ((1-rho_k) beta_k^alpha_k + rho_k (1+beta_k)^alpha_k)
    and otherwise Gamma(alpha_k, 1+beta_k).  Returns (scores, zero_mask);
    the mask marks exact spikes so densities stay well defined.
    """
    c = np.asarray(c, dtype=np.int64)
    k = params.num_components
    if params.family == DM:
        return sample_dirichlet(c + params.alpha, rng), np.zeros(k, dtype=bool)
    scores = np.empty(k)
    zero_mask = np.zeros(k, dtype=bool)
    for kk in range(k):
        alpha_k, beta_k = params.alpha[kk], params.beta[kk]
        if params.family == CGP and c[kk] == 0:
            rho_k = params.rho[kk]
            if rho_k > 0.0:
                slab = (1.0 - rho_k) * beta_k**alpha_k
                spike = rho_k * (1.0 + beta_k) ** alpha_k
                if rng.random() < spike / (slab + spike):
                    scores[kk] = 0.0
                    zero_mask[kk] = True
                    continue
            scores[kk] = sample_gamma(alpha_k, 1.0 + beta_k, rng)
        else:
            scores[kk] = sample_gamma(c[kk] + alpha_k, 1.0 + beta_k, rng)
    return scores, zero_mask


def direct_sample_assignments(doc, scores, params, rng):
    """Draw the assignment table V row by row: each observed word's count is
    split multinomially with weights proportional to score_k * theta_jk."""
    word_ids, counts = doc
    if len(word_ids) == 0:
        return np.zeros((0, params.num_components), dtype=np.int64)
    weights = params.theta[word_ids, :] * np.asarray(scores)[None, :]
    row_sums = weights.sum(axis=1)
    dead = row_sums <= 0.0
    if np.any(dead):
        raise DegenerateDocumentError(word_ids[np.argmax(dead)])
    return rng.multinomial(
        np.asarray(counts, dtype=np.int64), weights / row_sums[:, None]
    ).astype(np.int64)


def direct_sample_theta(totals, gamma, rng, group_of_word=None, num_groups=0):
    """Draw a loading matrix from its Dirichlet posterior given accumulated
    assignment totals, per column (per group block for grouped models)."""
    totals = np.asarray(totals, dtype=np.float64)
    if np.any(totals < 0):
        raise DataError("totals must be nonnegative")
    num_words, k = totals.shape
    gamma = np.asarray(gamma, dtype=np.float64)
    theta = np.zeros((num_words, k))
    if group_of_word is None:
        for kk in range(k):
            theta[:, kk] = sample_dirichlet(gamma + totals[:, kk], rng)
    else:
        for g in range(num_groups):
            rows = np.flatnonzero(group_of_word == g)
            for kk in range(k):
                theta[rows, kk] = sample_dirichlet(gamma[rows] + totals[rows, kk], rng)
    return theta


def expected_theta(totals, gamma, group_of_word=None, num_groups=0):
    """Posterior-mean loadings given totals: (gamma_j + total_jk) normalised
    per column or per group block."""
    totals = np.asarray(totals, dtype=np.float64)
    gamma = np.asarray(gamma, dtype=np.float64)
    raw = totals + gamma[:, None]
    theta = np.zeros_like(raw)
    if group_of_word is None:
        theta = raw / raw.sum(axis=0)[None, :]
    else:
        for g in range(num_groups):
            rows = np.flatnonzero(group_of_word == g)
            block = raw[rows, :]
            theta[rows, :] = block / block.sum(axis=0)[None, :]
    return theta


def conditional_loglik(doc, scores, params, theta=None):
    """Log likelihood of one document's counts given sampled scores and a
    concrete loading matrix (defaults to params.theta)."""
    word_ids, counts = doc
    theta = params.theta if theta is None else theta
    counts = np.asarray(counts, dtype=np.float64)
    rates = theta[word_ids, :] @ np.asarray(scores)
    with np.errstate(divide="ignore"):
        word = counts * np.log(rates)
    if np.any(np.isnan(word)):
        return float("-inf")
    if params.family in (GP, CGP):
        return float(word.sum() - log_gamma(counts + 1.0).sum() - np.sum(scores))
    if params.group_of_word is not None:
        groups = params.group_of_word[word_ids]
        group_len = np.zeros(params.num_groups)
        np.add.at(group_len, groups, counts)
        coeff = log_gamma(group_len + 1.0).sum() - log_gamma(counts + 1.0).sum()
    else:
        coeff = log_gamma(counts.sum() + 1.0) - log_gamma(counts + 1.0).sum()
    return float(word.sum() + coeff)


@dataclass
class CollapsedState:
    """Token-level sampler state with its global and per-document totals.

    Incremental updates are audited against a full recount every
    `audit_every` cycles of the driving chain.
    """

    token_word: np.ndarray  # (T,) int32
    token_doc: np.ndarray  # (T,) int32
    token_ptr: np.ndarray  # (I+1,) int64, tokens of doc i
    assign: np.ndarray  # (T,) int32
    doc_c: np.ndarray  # (I, K) int64
    word_totals: np.ndarray  # (J, K) int64, summed over documents
    group_totals: np.ndarray  # (G, K) int64 (G=1 when ungrouped)
    group_of_word: np.ndarray  # (J,) int32 (zeros when ungrouped)

    def audit(self):
        """Recount all totals from the assignments and compare."""
        num_docs, k = self.doc_c.shape
        doc_c = np.zeros_like(self.doc_c)
        np.add.at(doc_c, (self.token_doc, self.assign), 1)
        word_totals = np.zeros_like(self.word_totals)
        np.add.at(word_totals, (self.token_word, self.assign), 1)
        group_totals = np.zeros_like(self.group_totals)
        np.add.at(group_totals, (self.group_of_word[self.token_word], self.assign), 1)
        if not (
            np.array_equal(doc_c, self.doc_c)
            and np.array_equal(word_totals, self.word_totals)
            and np.array_equal(group_totals, self.group_totals)
        ):
            raise InvariantError("incremental counts diverged from a full recount")
        if np.any(self.doc_c < 0) or np.any(self.word_totals < 0):
            raise InvariantError("negative counts after token moves")


def init_collapsed_state(corpus, params, rng):
    """Expand the corpus to token level and assign components uniformly."""
    k = params.num_components
    token_word = np.repeat(corpus.word_ids, corpus.counts).astype(np.int32)
    token_doc = np.repeat(corpus.doc_index_of_entry(), corpus.counts).astype(np.int32)
    token_ptr = np.zeros(corpus.num_docs + 1, dtype=np.int64)
    np.cumsum(corpus.doc_lengths, out=token_ptr[1:])
    assign = rng.integers(0, k, size=token_word.size).astype(np.int32)
    if params.group_of_word is not None:
        group_of_word = params.group_of_word.astype(np.int32)
        num_groups = params.num_groups
    else:
        group_of_word = np.zeros(corpus.num_words, dtype=np.int32)
        num_groups = 1
    doc_c = np.zeros((corpus.num_docs, k), dtype=np.int64)
    np.add.at(doc_c, (token_doc, assign), 1)
    word_totals = np.zeros((corpus.num_words, k), dtype=np.int64)
    np.add.at(word_totals, (token_word, assign), 1)
    group_totals = np.zeros((num_groups, k), dtype=np.int64)
    np.add.at(group_totals, (group_of_word[token_word], assign), 1)
    return CollapsedState(
        token_word, token_doc, token_ptr, assign, doc_c, word_totals,
        group_totals, group_of_word,
    )


def _collapsed_consts(params):
    """Per-component constants for the token kernel.

    inv_b scales the (c+alpha) factor (1 for DM); zero_factor is the score
    factor at c=0, which for CGP carries the slab probability
    (1-rho) beta^alpha / ((1-rho) beta^alpha + rho (1+beta)^alpha).
    """
    alpha = params.alpha.astype(np.float64)
    if params.family == DM:
        inv_b = np.ones_like(alpha)
    else:
        inv_b = 1.0 / (1.0 + params.beta)
    zero_factor = alpha * inv_b
    if params.family == CGP:
        slab = (1.0 - params.rho) * params.beta**params.alpha
        spike = params.rho * (1.0 + params.beta) ** params.alpha
        zero_factor = zero_factor * (slab / (slab + spike))
    return alpha, inv_b, zero_factor


def collapsed_token_weights(state, params, doc_index, token_index):
    """Unnormalised resampling weights for one (already decremented) token.

    Scalar arithmetic mirrors the kernel so values match it bitwise.
    """
    alpha, inv_b, zero_factor = _collapsed_consts(params)
    gamma = params.gamma.astype(np.float64)
    t = state.token_ptr[doc_index] + token_index
    j = state.token_word[t]
    i = state.token_doc[t]
    g = state.group_of_word[j]
    gamma_sum = _group_gamma_sums(params, state)
    k = alpha.size
    weights = np.empty(k)
    for kk in range(k):
        ck = state.doc_c[i, kk]
        s = zero_factor[kk] if ck == 0 else (ck + alpha[kk]) * inv_b[kk]
        weights[kk] = (
            (gamma[j] + state.word_totals[j, kk])
            / (gamma_sum[g] + state.group_totals[g, kk])
            * s
        )
    return weights


def _group_gamma_sums(params, state):
    gamma = params.gamma.astype(np.float64)
    num_groups = state.group_totals.shape[0]
    sums = np.zeros(num_groups)
    np.add.at(sums, state.group_of_word, gamma)
    return sums


def collapsed_resample_token(state, doc_index, token_index, params, rng):
    """Resample a single token's component: decrement its counts, draw a new
    component proportionally to the collapsed weights, increment.  Returns
    the drawn component."""
    t = state.token_ptr[doc_index] + token_index
    if not state.token_ptr[doc_index] <= t < state.token_ptr[doc_index + 1]:
        raise DataError("token index outside the document")
    j = state.token_word[t]
    i = state.token_doc[t]
    g = state.group_of_word[j]
    k_old = state.assign[t]
    state.doc_c[i, k_old] -= 1
    state.word_totals[j, k_old] -= 1
    state.group_totals[g, k_old] -= 1
    if state.doc_c[i, k_old] < 0 or state.word_totals[j, k_old] < 0:
        raise InvariantError("counts went negative on decrement")
    weights = collapsed_token_weights(state, params, doc_index, token_index)
    total = weights.sum()
    if not total > 0.0:
        raise NumericError("no component has positive weight for this token")
    u = rng.random() * total
    acc = 0.0
    chosen = -1
    fallback = 0
    for kk in range(weights.size):
        w = weights[kk]
        if w > 0.0:
            fallback = kk
            acc += w
            if u < acc:
                chosen = kk
                break
    if chosen < 0:
        chosen = fallback
    state.doc_c[i, chosen] += 1
    state.word_totals[j, chosen] += 1
    state.group_totals[g, chosen] += 1
    state.assign[t] = chosen
    return int(chosen)


def _mean_scores_matrix(doc_c, params):
    c = doc_c.astype(np.float64)
    if params.family == GP:
        return (c + params.alpha[None, :]) / (1.0 + params.beta)[None, :]
    if params.family == CGP:
        return (
            (1.0 - params.rho)[None, :]
            * (c + params.alpha[None, :])
            / (1.0 + params.beta)[None, :]
        )
    return (c + params.alpha[None, :]) / (
        c.sum(axis=1, keepdims=True) + params.alpha.sum()
    )


@dataclass
class ChainSummary:
    """Posterior summaries accumulated over the kept cycles."""

    params: ModelParams  # theta replaced by its posterior-mean estimate
    mean_theta: np.ndarray
    theta_se: np.ndarray  # batch-means standard error of mean_theta
    mean_scores: np.ndarray  # (I, K) posterior-mean scores
    mean_counts: np.ndarray  # (I, K) posterior-mean component counts
    report: FitReport
    kept: int
    algorithm: str = ""
    doc_states: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.doc_states is None:
            self.doc_states = self.mean_counts


def run_chain(corpus, params_init, config):
    """Run one Gibbs chain and accumulate posterior summaries.

    Both algorithms estimate the posterior-mean loading matrix through its
    sufficient statistics plus prior; per-document scores use the
    closed-form posterior means given the sampled component counts.
    """
    config.validate()
    params = params_init.validate()
    if params.group_of_word is not None and params.family != DM:
        raise DataError("grouped chains require the dm family")
    rng_init = worker_rng(config.seed, 0)
    rng_chain = worker_rng(config.seed, 1)
    rng_report = worker_rng(config.seed, 2)
    if config.algorithm == "collapsed":
        return _run_collapsed(corpus, params, config, rng_init, rng_chain, rng_report)
    return _run_direct(corpus, params, config, rng_init, rng_chain, rng_report)


def _keep_cycles(config):
    total = config.burn_in + config.samples * config.thin
    kept = [
        config.burn_in + config.thin * (s + 1) - 1 for s in range(config.samples)
    ]
    return total, set(kept)


class _Accumulator:
    def __init__(self, corpus, params, config):
        shape_theta = params.theta.shape
        k = params.num_components
        self.theta_sum = np.zeros(shape_theta)
        self.batch_sums = np.zeros((config.batches,) + shape_theta)
        self.batch_counts = np.zeros(config.batches, dtype=np.int64)
        self.scores_sum = np.zeros((corpus.num_docs, k))
        self.counts_sum = np.zeros((corpus.num_docs, k))
        self.kept = 0
        self.total_keep = config.samples
        self.batches = config.batches

    def add(self, theta_hat, scores, counts):
        batch = min(self.kept * self.batches // self.total_keep, self.batches - 1)
        self.theta_sum += theta_hat
        self.batch_sums[batch] += theta_hat
        self.batch_counts[batch] += 1
        self.scores_sum += scores
        self.counts_sum += counts
        self.kept += 1

    def summary(self, params, report, algorithm):
        mean_theta = self.theta_sum / self.kept
        used = self.batch_counts > 0
        batch_means = self.batch_sums[used] / self.batch_counts[used, None, None]
        nb = int(used.sum())
        if nb > 1:
            se = batch_means.std(axis=0, ddof=1) / np.sqrt(nb)
        else:
            se = np.full_like(mean_theta, np.nan)
        out_params = ModelParams(
            family=params.family, theta=mean_theta, alpha=params.alpha,
            beta=params.beta, rho=params.rho, gamma=params.gamma,
            group_of_word=params.group_of_word, num_groups=params.num_groups,
            seed=params.seed,
        )
        return ChainSummary(
            params=out_params, mean_theta=mean_theta, theta_se=se,
            mean_scores=self.scores_sum / self.kept,
            mean_counts=self.counts_sum / self.kept,
            report=report, kept=self.kept, algorithm=algorithm,
        )


def _run_direct(corpus, params, config, rng_init, rng_chain, rng_report):
    num_docs = corpus.num_docs
    k = params.num_components
    group = params.group_of_word
    num_groups = params.num_groups
    # Only the per-document component counts persist between cycles; the
    # assignment tables are regenerated and discarded each cycle.
    doc_c = np.zeros((num_docs, k), dtype=np.int64)
    for i in range(num_docs):
        length = int(corpus.doc_lengths[i])
        if length:
            doc_c[i] = np.bincount(
                rng_init.integers(0, k, size=length), minlength=k
            )
    theta = params.theta.copy()
    cur = ModelParams(
        family=params.family, theta=theta, alpha=params.alpha, beta=params.beta,
        rho=params.rho, gamma=params.gamma, group_of_word=group,
        num_groups=num_groups, seed=params.seed,
    )
    report = FitReport(value_label="loglik_estimate")
    acc = _Accumulator(corpus, params, config)
    total_cycles, kept_cycles = _keep_cycles(config)
    started = time.perf_counter()
    for cycle in range(1, total_cycles + 1):
        totals = np.zeros((corpus.num_words, k), dtype=np.int64)
        loglik = 0.0
        for i in range(num_docs):
            doc = corpus.doc(i)
            scores, _mask = direct_sample_scores(doc_c[i], cur, rng_chain)
            table = direct_sample_assignments(doc, scores, cur, rng_chain)
            doc_c[i] = table.sum(axis=0)
            np.add.at(totals, doc[0], table)
            if config.record_loglik:
                loglik += conditional_loglik(doc, scores, cur)
        cur.theta = direct_sample_theta(
            totals, params.gamma, rng_chain, group, num_groups
        )
        report.add(cycle, loglik, time.perf_counter() - started)
        if (cycle - 1) in kept_cycles:
            acc.add(
                expected_theta(totals, params.gamma, group, num_groups),
                _mean_scores_matrix(doc_c, params),
                doc_c.astype(np.float64),
            )
    return acc.summary(params, report, "direct")


def _run_collapsed(corpus, params, config, rng_init, rng_chain, rng_report):
    state = init_collapsed_state(corpus, params, rng_init)
    alpha, inv_b, zero_factor = _collapsed_consts(params)
    gamma = params.gamma.astype(np.float64)
    gamma_sum = _group_gamma_sums(params, state)
    weight_buf = np.empty(params.num_components)
    group = params.group_of_word
    num_groups = params.num_groups
    report = FitReport(value_label="loglik_estimate")
    acc = _Accumulator(corpus, params, config)
    total_cycles, kept_cycles = _keep_cycles(config)
    started = time.perf_counter()
    doc_list = [corpus.doc(i) for i in range(corpus.num_docs)]
    for cycle in range(1, total_cycles + 1):
        uniforms = rng_chain.random(state.assign.size)
        status = _kernel.resample_cycle(
            state.assign, state.token_word, state.token_doc, state.doc_c,
            state.word_totals, state.group_totals, gamma, gamma_sum,
            state.group_of_word, alpha, inv_b, zero_factor, uniforms, weight_buf,
        )
        if status:
            raise NumericError(
                f"no component has positive weight for token {status - 1}"
            )
        if config.audit_every and cycle % config.audit_every == 0:
            state.audit()
        loglik = float("nan")
        if config.record_loglik:
            # Loadings are not chain state here; one sample per major cycle
            # (from the reporting stream) anchors the likelihood trace.
            theta_sample = direct_sample_theta(
                state.word_totals, params.gamma, rng_report, group, num_groups
            )
            loglik = 0.0
            for i, doc in enumerate(doc_list):
                scores, _mask = direct_sample_scores(state.doc_c[i], params, rng_report)
                loglik += conditional_loglik(doc, scores, params, theta=theta_sample)
        report.add(cycle, loglik, time.perf_counter() - started)
        if (cycle - 1) in kept_cycles:
            acc.add(
                expected_theta(state.word_totals, params.gamma, group, num_groups),
                _mean_scores_matrix(state.doc_c, params),
                state.doc_c.astype(np.float64),
            )
    return acc.summary(params, report, "collapsed")
