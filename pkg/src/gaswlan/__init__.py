"""Throughput-equalising contention-window adaptation for 802.11e WLANs, with a slot engine and checkers."""

__version__ = "0.1.0"

from .analytic import (
    OptimalPoint,
    cw_opt_approx,
    gamma_max,
    mixed_optimal_point,
    optimal_point,
    slot_duration,
    solve_tau_opt,
    station_throughput,
    station_throughputs,
    throughput_gap,
)
from .engine import EdcaEngine, EdcaParams, StageReport, run_stage, run_stage_meanfield
from .gas import GasState, step, to_edca_params
from .phy import DEFAULT_PHY, PhyProfile

__all__ = [
    "DEFAULT_PHY",
    "EdcaEngine",
    "EdcaParams",
    "GasState",
    "OptimalPoint",
    "PhyProfile",
    "StageReport",
    "cw_opt_approx",
    "gamma_max",
    "mixed_optimal_point",
    "optimal_point",
    "run_stage",
    "run_stage_meanfield",
    "slot_duration",
    "solve_tau_opt",
    "station_throughput",
    "station_throughputs",
    "step",
    "throughput_gap",
    "to_edca_params",
]
