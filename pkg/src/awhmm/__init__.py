"""Optimal-transport distances between hidden Markov models with Gaussian emissions."""

__version__ = "0.1.0"

from ._rng import DEFAULT_SEED, derive_seed, make_rng
from .distance import (DistanceReport, iaw, kl_hmm_mc, maw, register_transition,
                       transition_discrepancy)
from .evaluation import (DistanceMatrix, PrCurve, knn1_accuracy, mean_average_precision,
                         pairwise_distance_matrix, precision_recall, select_alpha)
from .experiments import (PerturbationConfig, run_perturbation_experiment, synth_models,
                          toy_gaussian_experiment)
from .gaussian import (Gaussian, fit_gaussian, kl_gaussian, log_pdf, pairwise_w2,
                       sample_gaussian, sqrtm_psd, sym_expm, w2_gaussian)
from .hmm import (GmmHmm, Sequence, baum_welch, conditional_gmm, forward_log_likelihood,
                  marginal_gmm, permute_states, sample_hmm, stationary_distribution)
from .mixture import (GaussianMixture, RegistrationMatrix, posterior, registered_distance,
                      registration_iaw, registration_maw, sample_mixture)
from .transport import SinkhornParams, TransportPlan, sinkhorn, solve_exact_transport
