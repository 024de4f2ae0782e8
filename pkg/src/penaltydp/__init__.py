"""Differentially private Bayesian sampling with the penalty MCMC kernel."""

from ._accel import NUMBA_ENABLED
from .accept_math import (
    expected_penalty_acceptance,
    kappa_lower_bound,
    mh_acceptance,
    penalty_acceptance_realized,
)
from .models import Dataset, TargetModel, analytic_posterior, bernoulli_model, gaussian_mean_model
from .privacy import PrivacyParams, advanced_composition, gaussian_sigma, make_expfam_plan, make_plan
from .samplers import PenaltyConfig, ProposalKernel, run_chain

__version__ = "0.1.0"
