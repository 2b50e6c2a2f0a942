"""Maximum-likelihood single-cycle Markov transition matrices from panel
data observed every T cycles, when the interval MLE has no stochastic
T-th root."""

from .core import (ConstraintMask, CountMatrix, StochasticMatrix, ThetaParam, UnidentifiableRowError,
                   ValidationError, complete_rows, frobenius_rel_error, interval_mle, linf_distance,
                   matrix_power, matrix_to_theta, theta_to_matrix)
from .likelihood import LikelihoodContext, gradient, log_likelihood
from .optimizer import PRESETS, ConvergenceRecord, OptimizerSettings, Status, maximize
from .spectral import EigenStructure, RootCandidate, eigen_decompose, enumerate_real_roots, principal_root
from .gridsearch import GridSpec, SearchReport, load_report, resume_search, run_search
from .analysis import detect_plateaus, emit_plot_data, maximizer_uniqueness, rank_curve
from .fixtures import StudyFixture, fixture_names, load_fixture

__version__ = "0.1.0"
