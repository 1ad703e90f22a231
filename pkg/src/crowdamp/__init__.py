"""Bayes-optimal label aggregation for dense crowdsourcing.

An approximate message passing solver for the dense Dawid-Skene model, the
state-evolution analysis of its asymptotic error, Bethe free-energy phase
classification, a sparse-regime belief-propagation baseline, and a rank-2
"two-coin" extension.
"""

from .amp import (AmpConfig, AmpResult, FisherScore, amp_run, effective_noise,
                  fisher_score, majority_vote, oracle_error)
from .bp import (BpConfig, BpResult, CoexistenceReport, FactorGraph,
                 bp_run, bp_two_init_compare, enumerate_posterior, reliability_atoms)
from .denoise import (DenoiseResult, denoise, denoise_label, denoise_tabulated,
                      denoise_worker_gm, denoise_worker_rb)
from .errors import (BracketTooNarrow, ChannelOverflow, CrowdAmpError,
                     DegenerateChannel, DegreeTooLarge, DomainError,
                     NonFiniteIterate, NonZeroMeanPrior, UnsupportedBias)
from .estimators import (AmpAggregator, BpAggregator, MajorityVoteAggregator,
                         TwoCoinAmpAggregator)
from .model import (AnswerMatrix, GroundTruth, ModelParams, SparseRegimeConfig,
                    aligned_error_rate, channel_log_likelihood, error_rate,
                    mse_theta, read_ground_truth, sample_answers_dense,
                    sample_answers_sparse, sample_ground_truth, write_ground_truth)
from .phase import (PhaseLabel, PhaseThresholds, bethe_free_energy,
                    bethe_gradient_norm, classify_phase, critical_noise,
                    detect_critical_noise, find_thresholds, sweep_grid,
                    uninformative_growth_factor, write_sweep_csv)
from .priors import (GaussianMixture, LabelPrior, RademacherBernoulli, Tabulated,
                     WorkerPrior, beta_reliability_prior)
from .rank2 import (Rank2Config, Rank2Result, Rank2Truth, amp_rank2_run,
                    channel_two_coin, sample_two_coin)
from .rng import fresh_seed, stream_rng
from .state_evolution import (QuadratureRule, SEFixedPoint, SEState,
                              gauss_hermite_rule, initial_state, overlap_to_errors,
                              se_fixed_point, se_fixed_points_batch, se_step,
                              se_step_gaussian_mixture, sign_overlap)

__version__ = "0.1.0"
