"""Model families and exact likelihood evaluation.

Three families share the linear structure E[w] = Theta l:

* GP  - scores gamma distributed, counts Poisson with mean Theta l;
* CGP - GP with a spike at zero: score k is exactly 0 with probability rho_k,
        otherwise gamma distributed;
* DM  - normalised scores m Dirichlet distributed, the bag multinomial with
        probabilities Theta m.  The grouped variant partitions words into
        groups, each with its own multinomial (Theta normalised per group).

Every evaluator returns a natural-log value and never mutates its inputs.
Impossible configurations yield -inf, which propagates through sums.
Documents are (word_ids, counts) pairs of aligned arrays; the per-document
assignment table V is an (n_observed_words, K) integer array aligned with
word_ids, with row sums equal to the observed counts and column sums c.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DomainError
from .mathfn import log_gamma, sample_gamma

GP, CGP, DM = "gp", "cgp", "dm"
FAMILIES = (GP, CGP, DM)

_NEG_INF = float("-inf")
MODEL_FORMAT = "dca-model"
MODEL_VERSION = 1


@dataclass
class ModelParams:
    """Parameters of a fitted or initial model; treat as read-only."""

    family: str
    theta: np.ndarray  # (J, K), columns (or per-group column blocks) sum to 1
    alpha: np.ndarray  # (K,) score prior shapes
    beta: np.ndarray = None  # (K,) score prior rates (GP/CGP)
    rho: np.ndarray = None  # (K,) zero-spike probabilities (CGP)
    gamma: np.ndarray = None  # (J,) Dirichlet prior on loading columns
    group_of_word: np.ndarray = None  # (J,) int32, -1 = ungrouped word
    num_groups: int = 0
    seed: int = None  # provenance only, recorded in serialised models

    @property
    def num_words(self):
        return self.theta.shape[0]

    @property
    def num_components(self):
        return self.theta.shape[1]

    def validate(self, strict=True):
        """Check structural invariants; strict additionally requires the
        positive priors that the inference engines rely on (alpha=beta=0
        maximum-likelihood loadings are storable but not fittable)."""
        if self.family not in FAMILIES:
            raise DataError(f"unknown family {self.family!r}")
        theta = np.asarray(self.theta, dtype=np.float64)
        if theta.ndim != 2:
            raise DataError("theta must be a J x K matrix")
        num_words, num_components = theta.shape
        if np.any(theta < 0) or not np.all(np.isfinite(theta)):
            raise DataError("theta entries must be finite and nonnegative")
        alpha = np.asarray(self.alpha, dtype=np.float64)
        if alpha.shape != (num_components,):
            raise DataError("alpha must be a K-vector")
        if strict and not np.all(alpha > 0):
            raise DomainError("alpha entries must be positive")
        if np.any(alpha < 0):
            raise DomainError("alpha entries must be nonnegative")
        if self.family in (GP, CGP):
            beta = np.asarray(self.beta, dtype=np.float64)
            if beta.shape != (num_components,):
                raise DataError("beta must be a K-vector for gamma-score families")
            if strict and not np.all(beta > 0):
                raise DomainError("beta entries must be positive")
            if np.any(beta < 0):
                raise DomainError("beta entries must be nonnegative")
        if self.family == CGP:
            rho = np.asarray(self.rho, dtype=np.float64)
            if rho.shape != (num_components,):
                raise DataError("rho must be a K-vector")
            if np.any((rho < 0) | (rho > 1)):
                raise DomainError("rho entries must lie in [0, 1]")
        if self.gamma is not None:
            gamma = np.asarray(self.gamma, dtype=np.float64)
            if gamma.shape != (num_words,):
                raise DataError("gamma must be a J-vector")
            if not np.all(gamma > 0):
                raise DomainError("gamma entries must be positive")
        if self.group_of_word is not None:
            if self.family != DM:
                raise DataError("word groups are only defined for the dm family")
            groups = np.asarray(self.group_of_word)
            if groups.shape != (num_words,):
                raise DataError("group map must cover every word id")
            for g in range(self.num_groups):
                block = theta[groups == g, :]
                if block.size == 0:
                    raise DataError(f"group {g + 1} has no words")
                if np.max(np.abs(block.sum(axis=0) - 1.0)) > 1e-9:
                    raise DataError(f"theta block for group {g + 1} is not normalised")
            stray = theta[groups < 0, :]
            if stray.size and np.any(stray != 0.0):
                raise DataError("theta rows for ungrouped words must be zero")
        else:
            if np.max(np.abs(theta.sum(axis=0) - 1.0)) > 1e-9:
                raise DataError("theta columns must sum to 1")
        return self


@dataclass
class DocLatent:
    """Per-document latent state: assignment table V, its column sums c,
    and (when sampled) the component scores."""

    word_ids: np.ndarray
    V: np.ndarray  # (n_obs, K) nonnegative ints, rows sum to the word counts
    c: np.ndarray = field(default=None)
    scores: np.ndarray = None  # l (GP/CGP) or m (DM)
    zero_mask: np.ndarray = None  # CGP: True where the score is the exact zero spike
    assignments: np.ndarray = None  # per-token components, collapsed sampler only

    def __post_init__(self):
        if self.c is None:
            self.c = component_counts(self.V)

    def validate(self, counts):
        if not np.array_equal(self.V.sum(axis=1), counts):
            raise DataError("V row sums must equal the observed word counts")
        if not np.array_equal(component_counts(self.V), self.c):
            raise DataError("c must hold the column sums of V")
        return self


def component_counts(V):
    """Column sums c of an assignment table."""
    return np.asarray(V).sum(axis=0).astype(np.int64)


def _xlogy(x, y):
    """x * log(y) with the 0 * log(0) = 0 convention; x>0, y=0 gives -inf."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    out = np.zeros(np.broadcast(x, y).shape)
    pos = x != 0
    with np.errstate(divide="ignore"):
        out[pos] = (x * np.where(pos, np.log(np.where(y > 0, y, 1e-300)), 0.0))[pos]
        out[pos & np.broadcast_to(y == 0, out.shape)] = _NEG_INF
    return out


def _word_table_term(V, theta_rows):
    """sum_{j,k} [v ln theta - ln v!] over an assignment table."""
    term = _xlogy(V, theta_rows)
    if np.any(np.isneginf(term)):
        return _NEG_INF
    return float(term.sum() - log_gamma(np.asarray(V, dtype=np.float64) + 1.0).sum())


def _require(condition, message):
    if not condition:
        raise DataError(message)


def loglik_gp_joint(doc, scores, params):
    """Log joint density of (scores, counts) under the GP family.

    Product of K gamma densities for the scores and J Poisson masses with
    means (Theta scores)_j; includes all normalising constants.
    """
    word_ids, counts = doc
    scores = np.asarray(scores, dtype=np.float64)
    _require(params.family == GP, "loglik_gp_joint needs a gp model")
    _require(scores.shape == (params.num_components,), "scores must be a K-vector")
    alpha, beta = params.alpha, params.beta
    with np.errstate(divide="ignore", invalid="ignore"):
        log_l = np.log(scores)
        shape_term = np.where(alpha == 1.0, 0.0, (alpha - 1.0) * log_l)
    gamma_part = float(
        np.sum(alpha * np.log(beta) - log_gamma(alpha) + shape_term - beta * scores)
    )
    rates = params.theta[word_ids, :] @ scores
    pois = _xlogy(counts, rates)
    if np.any(np.isneginf(pois)):
        return _NEG_INF
    poisson_part = float(
        pois.sum() - log_gamma(np.asarray(counts, float) + 1.0).sum() - scores.sum()
    )
    return gamma_part + poisson_part


def loglik_gp_latent(doc, V, scores, params):
    """Log joint density of (scores, V) under the GP family."""
    word_ids, counts = doc
    scores = np.asarray(scores, dtype=np.float64)
    _require(params.family == GP, "loglik_gp_latent needs a gp model")
    _require(V.shape == (len(word_ids), params.num_components), "V shape mismatch")
    alpha, beta = params.alpha, params.beta
    c = component_counts(V)
    exponent = c + alpha - 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        log_l = np.log(scores)
        shape_term = np.where(exponent == 0.0, 0.0, exponent * log_l)
    gamma_part = float(
        np.sum(alpha * np.log(beta) - log_gamma(alpha) + shape_term - (beta + 1.0) * scores)
    )
    word_part = _word_table_term(V, params.theta[word_ids, :])
    return gamma_part + word_part


def _gp_component_terms(c, alpha, beta):
    return (
        log_gamma(c + alpha)
        - log_gamma(alpha)
        + alpha * np.log(beta)
        - (c + alpha) * np.log1p(beta)
    )


def loglik_gp_marginal(doc, V, params):
    """Log probability of an assignment table V with the scores integrated out."""
    word_ids, _counts = doc
    _require(params.family == GP, "loglik_gp_marginal needs a gp model")
    _require(V.shape == (len(word_ids), params.num_components), "V shape mismatch")
    c = component_counts(V).astype(np.float64)
    comp = float(_gp_component_terms(c, params.alpha, params.beta).sum())
    return comp + _word_table_term(V, params.theta[word_ids, :])


def loglik_cgp_marginal(doc, V, params):
    """As loglik_gp_marginal but with the zero spike mixed in per component."""
    word_ids, _counts = doc
    _require(params.family == CGP, "loglik_cgp_marginal needs a cgp model")
    _require(V.shape == (len(word_ids), params.num_components), "V shape mismatch")
    c = component_counts(V).astype(np.float64)
    gp_terms = _gp_component_terms(c, params.alpha, params.beta)
    with np.errstate(divide="ignore"):
        slab = np.log(1.0 - params.rho) + gp_terms
        spike = np.where(c == 0, np.log(params.rho), _NEG_INF)
    comp = float(np.logaddexp(slab, spike).sum())
    word = _word_table_term(V, params.theta[word_ids, :])
    return comp + word


def _dirichlet_logpdf(m, alpha):
    with np.errstate(divide="ignore", invalid="ignore"):
        log_m = np.log(m)
        shape_term = np.where(alpha == 1.0, 0.0, (alpha - 1.0) * log_m)
    return float(log_gamma(alpha.sum()) - log_gamma(alpha).sum() + shape_term.sum())


def loglik_dm_full(doc, probs, params, sequence=False):
    """Log density of (probs, counts) under the DM family.

    Includes the Dirichlet density of the proportions and the multinomial
    mass of the bag.  With sequence=True the bag/sequence combinatoric term
    ln(L!/prod w_j!) is dropped, giving the ordered-sequence likelihood.
    """
    word_ids, counts = doc
    probs = np.asarray(probs, dtype=np.float64)
    _require(params.family == DM, "loglik_dm_full needs a dm model")
    _require(probs.shape == (params.num_components,), "probs must be a K-vector")
    if abs(probs.sum() - 1.0) > 1e-9:
        raise DomainError("probs must lie on the simplex")
    rates = params.theta[word_ids, :] @ probs
    word = _xlogy(counts, rates)
    if np.any(np.isneginf(word)):
        return _NEG_INF
    value = _dirichlet_logpdf(probs, params.alpha) + float(word.sum())
    if not sequence:
        counts = np.asarray(counts, dtype=np.float64)
        value += float(log_gamma(counts.sum() + 1.0) - log_gamma(counts + 1.0).sum())
    return value


def loglik_dm_marginal(doc, V, params):
    """Log probability of an assignment table V with proportions integrated out."""
    word_ids, counts = doc
    _require(params.family == DM, "loglik_dm_marginal needs a dm model")
    _require(V.shape == (len(word_ids), params.num_components), "V shape mismatch")
    alpha = params.alpha
    c = component_counts(V).astype(np.float64)
    total = float(c.sum())
    comp = float(
        log_gamma(total + 1.0)
        + log_gamma(alpha.sum())
        - log_gamma(total + alpha.sum())
        + (log_gamma(c + alpha) - log_gamma(alpha)).sum()
    )
    return comp + _word_table_term(V, params.theta[word_ids, :])


def loglik_grouped(doc, probs, params, sequence=False):
    """Log density for the grouped (multivariate) DM variant.

    Dirichlet density of the proportions plus one multinomial log mass per
    word group, with Theta normalised within each group.
    """
    word_ids, counts = doc
    probs = np.asarray(probs, dtype=np.float64)
    _require(params.family == DM, "loglik_grouped needs a dm model")
    if params.group_of_word is None:
        raise DataError("loglik_grouped needs a model with word groups")
    if abs(probs.sum() - 1.0) > 1e-9:
        raise DomainError("probs must lie on the simplex")
    groups = params.group_of_word[word_ids]
    if np.any(groups < 0):
        raise DataError("document references ungrouped word ids")
    rates = params.theta[word_ids, :] @ probs
    word = _xlogy(counts, rates)
    if np.any(np.isneginf(word)):
        return _NEG_INF
    value = _dirichlet_logpdf(probs, params.alpha) + float(word.sum())
    if not sequence:
        counts_f = np.asarray(counts, dtype=np.float64)
        group_len = np.zeros(params.num_groups)
        np.add.at(group_len, groups, counts_f)
        value += float(
            log_gamma(group_len + 1.0).sum() - log_gamma(counts_f + 1.0).sum()
        )
    return value


def posterior_mean_scores(c, params):
    """Posterior mean scores given component counts c.

    GP: (c_k+alpha_k)/(1+beta_k); CGP: the same damped by (1-rho_k), the
    zero-spike weight folded in; DM: Dirichlet mean (c_k+alpha_k)/(L+sum alpha).
    """
    c = np.asarray(c, dtype=np.float64)
    if params.family == GP:
        return (c + params.alpha) / (1.0 + params.beta)
    if params.family == CGP:
        return (1.0 - params.rho) * (c + params.alpha) / (1.0 + params.beta)
    return (c + params.alpha) / (c.sum() + params.alpha.sum())


def _resolve_prior(value, size, name):
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = np.full(size, float(arr))
    if arr.shape != (size,):
        raise DataError(f"{name} must be a scalar or length-{size} vector")
    return arr


def init_params(
    family,
    num_components,
    num_words,
    alpha,
    beta=None,
    rho=None,
    gamma=0.5,
    rng=None,
    group_of_word=None,
    num_groups=0,
    seed=None,
):
    """Build starting parameters with randomly initialised loadings.

    Loading columns are drawn from a flat Dirichlet (per group block for
    grouped models) using the supplied generator, so runs are reproducible.
    """
    if family not in FAMILIES:
        raise DataError(f"unknown family {family!r}")
    alpha = _resolve_prior(alpha, num_components, "alpha")
    gamma = _resolve_prior(gamma, num_words, "gamma")
    if family in (GP, CGP):
        if beta is None:
            raise DataError(f"{family} requires beta")
        beta = _resolve_prior(beta, num_components, "beta")
    else:
        beta = None
    if family == CGP:
        if rho is None:
            raise DataError("cgp requires rho")
        rho = _resolve_prior(rho, num_components, "rho")
    else:
        rho = None
    if rng is None:
        raise DataError("init_params requires a random generator")
    theta = np.zeros((num_words, num_components))
    if group_of_word is not None:
        group_of_word = np.asarray(group_of_word, dtype=np.int32)
        for g in range(num_groups):
            rows = np.flatnonzero(group_of_word == g)
            for k in range(num_components):
                theta[rows, k] = _flat_dirichlet(len(rows), rng)
    else:
        for k in range(num_components):
            theta[:, k] = _flat_dirichlet(num_words, rng)
    return ModelParams(
        family=family,
        theta=theta,
        alpha=alpha,
        beta=beta,
        rho=rho,
        gamma=gamma,
        group_of_word=group_of_word,
        num_groups=num_groups,
        seed=seed,
    ).validate()


def _flat_dirichlet(size, rng):
    while True:
        draws = np.array([sample_gamma(1.0, 1.0, rng) for _ in range(size)])
        total = draws.sum()
        if total > 0.0:
            return draws / total


def sample_corpus(params, num_docs, rng, doc_lengths=None, mean_length=None,
                  group_lengths=None):
    """Draw a synthetic corpus from a model (generative direction).

    GP/CGP corpora determine their own document lengths; DM needs either
    explicit doc_lengths or a Poisson mean_length, and grouped models need a
    (num_docs, num_groups) table of per-group totals.
    """
    from .corpus import make_corpus  # local import to avoid a cycle

    params.validate()
    docs = []
    theta = params.theta
    for i in range(num_docs):
        if params.family in (GP, CGP):
            scores = np.empty(params.num_components)
            for k in range(params.num_components):
                if params.family == CGP and rng.random() < params.rho[k]:
                    scores[k] = 0.0
                else:
                    scores[k] = sample_gamma(params.alpha[k], params.beta[k], rng)
            dense = rng.poisson(theta @ scores)
        elif params.group_of_word is not None:
            if group_lengths is None:
                raise DataError("grouped sampling needs group_lengths")
            probs = _sample_dirichlet_vec(params.alpha, rng)
            rates = theta @ probs
            dense = np.zeros(params.num_words, dtype=np.int64)
            for g in range(params.num_groups):
                rows = np.flatnonzero(params.group_of_word == g)
                p = rates[rows]
                dense[rows] = rng.multinomial(int(group_lengths[i][g]), p / p.sum())
        else:
            if doc_lengths is not None:
                length = int(doc_lengths[i])
            elif mean_length is not None:
                length = int(rng.poisson(mean_length))
            else:
                raise DataError("dm sampling needs doc_lengths or mean_length")
            probs = _sample_dirichlet_vec(params.alpha, rng)
            rates = theta @ probs
            dense = rng.multinomial(length, rates / rates.sum())
        ids = np.flatnonzero(dense)
        docs.append((ids, dense[ids]))
    return make_corpus(docs, params.num_words)


def _sample_dirichlet_vec(alpha, rng):
    while True:
        draws = np.array([sample_gamma(a, 1.0, rng) for a in alpha])
        total = draws.sum()
        if total > 0.0:
            return draws / total


def save_model(params, path):
    """Serialise a model to versioned JSON, round-trip stable bit for bit."""
    payload = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "family": params.family,
        "num_components": params.num_components,
        "num_words": params.num_words,
        "seed": params.seed,
        "alpha": params.alpha.tolist(),
        "beta": None if params.beta is None else params.beta.tolist(),
        "rho": None if params.rho is None else params.rho.tolist(),
        "gamma": None if params.gamma is None else params.gamma.tolist(),
        "num_groups": params.num_groups,
        "group_of_word": (
            None if params.group_of_word is None else params.group_of_word.tolist()
        ),
        "theta": params.theta.tolist(),
    }
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=1)
        handle.write("\n")


def load_model(path):
    """Load a model written by save_model."""
    with open(path, "r", encoding="utf-8") as handle:
        payload = json.load(handle)
    if payload.get("format") != MODEL_FORMAT:
        raise DataError(f"not a {MODEL_FORMAT} file: {path}")
    if payload.get("version") != MODEL_VERSION:
        raise DataError(f"unsupported model version {payload.get('version')!r}")
    group = payload.get("group_of_word")
    params = ModelParams(
        family=payload["family"],
        theta=np.asarray(payload["theta"], dtype=np.float64),
        alpha=np.asarray(payload["alpha"], dtype=np.float64),
        beta=None if payload["beta"] is None else np.asarray(payload["beta"]),
        rho=None if payload["rho"] is None else np.asarray(payload["rho"]),
        gamma=None if payload["gamma"] is None else np.asarray(payload["gamma"]),
        group_of_word=None if group is None else np.asarray(group, dtype=np.int32),
        num_groups=payload.get("num_groups", 0),
        seed=payload.get("seed"),
    )
    return params.validate(strict=False)
