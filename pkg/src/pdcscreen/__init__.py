"""Partial distance correlation screening for lagged time-series designs."""
from .dcor import EstimatorKind, dcor_v, dcov2_v, pairwise_distances, pdcor, rstar, u_inner
from .estimators import DCSIS, PDCSIS, SIS, GroupDCSIS, GroupPDCSIS, LagTransformer, PDCSISPlus
from .harness import ExperimentConfig, SummaryTable, derive_seed, run_experiment, screen_csv
from .lagged import LaggedDataset, Panel, build_lagged, read_panel_csv
from .screening import GroupPartition, Method, ScreenConfig, ScreenResult, mms, screen
from .simulate import InnovationDist, ModelSpec, simulate

__version__ = "0.1.0"

__all__ = [
    "EstimatorKind", "dcor_v", "dcov2_v", "pairwise_distances", "pdcor", "rstar", "u_inner",
    "DCSIS", "PDCSIS", "SIS", "GroupDCSIS", "GroupPDCSIS", "LagTransformer", "PDCSISPlus",
    "ExperimentConfig", "SummaryTable", "derive_seed", "run_experiment", "screen_csv",
    "LaggedDataset", "Panel", "build_lagged", "read_panel_csv",
    "GroupPartition", "Method", "ScreenConfig", "ScreenResult", "mms", "screen",
    "InnovationDist", "ModelSpec", "simulate",
]
