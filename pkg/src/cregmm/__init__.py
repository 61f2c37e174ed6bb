"""Dynamic panel estimation with pre-sample Mundlak averages."""

from .dgp import CalibratedSigmas, DgpConfig, calibrate_variances, ols_bias_oracle, simulate_panel
from .estimators import EstimationResult, cre, fe_within, pols, re_fgls
from .gmm import GmmOptions, GmmVariant, VARIANTS, estimate_variant
from .mc import (
    McConfig,
    McSummary,
    compare_to_reference,
    export_boxplot,
    export_nestedloop,
    run_grid,
)
from .model import ModelSpec, VariableRole
from .panel import (
    DecompositionReport,
    PanelDataset,
    build_panel,
    first_difference,
    full_sample_means,
    lag,
    mundlak_averages,
    split_presample,
    variance_decomposition,
)

__all__ = [
    "CalibratedSigmas",
    "DgpConfig",
    "DecompositionReport",
    "EstimationResult",
    "GmmOptions",
    "GmmVariant",
    "McConfig",
    "McSummary",
    "ModelSpec",
    "PanelDataset",
    "VARIANTS",
    "VariableRole",
    "build_panel",
    "calibrate_variances",
    "compare_to_reference",
    "cre",
    "estimate_variant",
    "export_boxplot",
    "export_nestedloop",
    "fe_within",
    "first_difference",
    "full_sample_means",
    "lag",
    "mundlak_averages",
    "ols_bias_oracle",
    "pols",
    "re_fgls",
    "run_grid",
    "simulate_panel",
    "split_presample",
    "variance_decomposition",
]

__version__ = "0.1.0"
