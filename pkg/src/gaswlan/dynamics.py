"""Deterministic stage dynamics with model throughputs as measurements.

Everything here is batched: state arrays have shape (..., n), so a sweep
over candidate selfish configurations or random starts advances as one
array operation per stage.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analytic import OptimalPoint, solve_nonsaturated, station_throughputs
from .gas import clamp, update_taus
from .phy import PhyProfile


@dataclass
class Trajectory:
    tau: np.ndarray  # (stages, ..., n) unclamped, before each stage's update
    tau_hat: np.ndarray
    r: np.ndarray
    final_tau: np.ndarray


def stage_taus(tau, opt: OptimalPoint, active, fixed, loads=None, caps=None, phy: PhyProfile | None = None):
    """Transmission probabilities used during a stage.

    Active (GAS) stations use the clamped control variable, the rest use
    ``fixed``; stations with a finite entry in ``loads`` are then replaced
    by their fluid attempt rate.
    """
    th = np.where(active, clamp(tau, opt.tau_opt / 2.0), fixed)
    if loads is not None:
        th = solve_nonsaturated(th, loads, caps, phy)
    return th


def run_meanfield(
    tau0,
    opt: OptimalPoint,
    phy: PhyProfile,
    gamma: float,
    stages: int,
    active=None,
    fixed=None,
    peers=None,
    exclude_lower: bool = False,
    loads=None,
    caps=None,
    record: bool = True,
    average_from: int | None = None,
) -> Trajectory | tuple[np.ndarray, np.ndarray]:
    """Iterate the update law with exact model throughputs.

    With ``record`` the full trajectory is kept; otherwise the function
    returns ``(final_tau, mean_r)`` where the mean covers stages from
    ``average_from`` (default 0) onwards.
    """
    tau = np.array(tau0, dtype=float)
    active = np.ones(tau.shape, bool) if active is None else np.broadcast_to(np.asarray(active, bool), tau.shape)
    fixed = np.zeros(tau.shape) if fixed is None else np.broadcast_to(np.asarray(fixed, float), tau.shape)
    taus, hats, rs = [], [], []
    start = 0 if average_from is None else average_from
    acc = np.zeros(tau.shape)
    for t in range(stages):
        th = stage_taus(tau, opt, active, fixed, loads, caps, phy)
        r = station_throughputs(th, phy)
        if record:
            taus.append(tau)
            hats.append(th)
            rs.append(r)
        elif t >= start:
            acc += r
        tau = update_taus(tau, r, opt, gamma, active=active, peers=peers, exclude_lower=exclude_lower)
    if record:
        empty = np.zeros((0,) + tau.shape)
        stack = (lambda xs: np.stack(xs) if xs else empty)
        return Trajectory(stack(taus), stack(hats), stack(rs), tau)
    return tau, acc / max(stages - start, 1)
