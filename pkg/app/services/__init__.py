"""
Core services: distributions, estimators, exact risk, bounds and simulation.
"""
from app.services.dist import Distribution, Sample, make_pc, make_uniform, make_zipf, sample_iid
from app.services.estimators import dirichlet_bayes, good_turing, profile
from app.services.risk import asymptotic_risk_gt, exact_risk_gt, exact_risk_gt_uniform
from app.services.bounds import dirichlet_bayes_risk, minimax_bracket
from app.services.montecarlo import RunningStats, mc_bias, mc_risk, mc_sweep

__all__ = [
    "Distribution",
    "Sample",
    "make_uniform",
    "make_pc",
    "make_zipf",
    "sample_iid",
    "good_turing",
    "dirichlet_bayes",
    "profile",
    "exact_risk_gt",
    "exact_risk_gt_uniform",
    "asymptotic_risk_gt",
    "dirichlet_bayes_risk",
    "minimax_bracket",
    "RunningStats",
    "mc_risk",
    "mc_bias",
    "mc_sweep",
]
