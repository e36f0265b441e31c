"""Discrete component analysis for sparse count data.

Fits Gamma-Poisson (gp), conditional Gamma-Poisson (cgp, sparse scores) and
Dirichlet-multinomial (dm, including grouped counts) latent component
models with variational and Gibbs engines, scores held-out documents, and
compares component counts.
"""

from ._kernel import KERNEL
from .corpus import (Corpus, bag, load_docword, load_groups, load_vocab,
                     log_multinomial_coeff, make_corpus, save_docword,
                     split_groups)
from .errors import (DataError, DcaError, DegenerateDocumentError, DomainError,
                     InvariantError, NumericError, OutOfVocabularyError,
                     ParseError)
from .evaluate import (CompareConfig, InferConfig, brute_force_marginal,
                       compare_k, export_features, holdout_split,
                       infer_document)
from .gibbs import (ChainConfig, ChainSummary, CollapsedState,
                    collapsed_resample_token, direct_sample_assignments,
                    direct_sample_scores, direct_sample_theta, expected_theta,
                    init_collapsed_state, run_chain)
from .mathfn import (digamma, log_factorial, log_gamma, make_rng,
                     poisson_gamma_logpmf, sample_categorical,
                     sample_dirichlet, sample_gamma, sample_multinomial,
                     worker_rng)
from .model import (CGP, DM, GP, DocLatent, ModelParams, init_params,
                    load_model, loglik_cgp_marginal, loglik_dm_full,
                    loglik_dm_marginal, loglik_gp_joint, loglik_gp_latent,
                    loglik_gp_marginal, loglik_grouped, posterior_mean_scores,
                    sample_corpus, save_model)
from .report import FitReport
from .variational import (FitConfig, NmfConfig, VariationalFit,
                          VariationalState, bound_dm, bound_gp, e_step_dm,
                          e_step_gp, fit_nmf, fit_variational, init_state,
                          m_step, nmf_residuals)

__version__ = "0.1.0"
