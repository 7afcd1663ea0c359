"""Exact asymptotics for a correlated drifted Brownian motion entering a shifted orthant."""
from .asymptotics import AsymptoticResult, PassageTimeLaw, assemble, compute_CI, passage_time_law
from .g_analysis import GAnalysis, ProblemSpec, analyze
from .path_sim import SimConfig, SimEstimate, simulate_P
from .pickands_mc import PickandsEstimate, PickandsInput, estimate_H, estimate_HT
from .qp_core import PDMatrix, QpSolution, solve_qp

__version__ = "0.1.0"

__all__ = [
    "AsymptoticResult", "GAnalysis", "PDMatrix", "PassageTimeLaw", "PickandsEstimate",
    "PickandsInput", "ProblemSpec", "QpSolution", "SimConfig", "SimEstimate", "analyze",
    "assemble", "compute_CI", "estimate_H", "estimate_HT", "passage_time_law",
    "simulate_P", "solve_qp",
]
