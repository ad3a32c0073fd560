"""
Penalized precision matrix estimation: penalties, the ADMM solver, the LLA
outer loop and BIC model selection.
"""

from magm.estimation.admm_solver import AdmmConfig, SolverResult, solve
from magm.estimation.estimator import GraphEstimate, extract_edges, fit, sample_covariance
from magm.estimation.model_select import SelectionResult, bic, lambda_grid, select
from magm.estimation.penalty import LlaWeights, PenaltyKind, PenaltySpec
