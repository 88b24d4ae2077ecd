"""Estimation of unrestricted spatial weights matrices from short panels.

A two-stage variational-Bayes pipeline with Dirichlet-Laplace shrinkage:
stage 1 projects each unit's outcome on the pooled exogenous regressors,
stage 2 reads the weights-matrix rows off per-unit regressions on the
other units' predictions. Includes the matching Gibbs-sampler oracle, a
synthetic-panel generator, similarity metrics (corr2, SSIM, effects
matrices), and a CLI.
"""

__version__ = "0.1.0"

from .core import (
    CoefficientSet,
    PanelDataset,
    WeightsMatrix,
    infinity_norm,
    row_standardize,
    solve_reduced_form,
)
from .dlreg import (
    DLPrior,
    GibbsDraws,
    RegressionProblem,
    VariationalState,
    default_prior,
    elbo,
    gibbs_fit,
    gibbs_mcse,
    predict,
    vb_fit,
    vb_fit_batch,
)
from .exceptions import EquationFitError, NumericalError, PanelSarError, ValidationError
from .metrics import (
    EffectsMatrix,
    SimilarityReport,
    SsimParams,
    corr2,
    effects_matrix,
    effects_similarity,
    element_category_stats,
    ssim,
    weights_similarity,
)
from .simulator import (
    MonteCarloReport,
    SimulationConfig,
    SimulatedDataset,
    ThetaSpec,
    run_monte_carlo,
    simulate,
    simulate_coefficients,
    simulate_panel,
    simulate_weights,
)
from .twostage import (
    EstimateOptions,
    EstimationResult,
    Stage1Output,
    estimate,
    stage1_predict,
    stage2_estimate,
)
