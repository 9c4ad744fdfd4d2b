"""The GAS update law.

Each honest station keeps an unclamped control variable ``tau`` and, once
per stage, moves it by ``gamma * g_i`` where ``g_i`` is the sum of
throughput differences to its peers (punishment) minus a fairness term that
pulls the WLAN towards the optimal point. The station then transmits with
``tau`` clamped to ``[tau_opt/2, 1]``.

Two routes compute the same thing: the per-station :func:`step` working on
a :class:`GasState`, and :func:`update_taus`, which advances every station
(and any number of independent WLANs stacked along leading axes) at once.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .analytic import OptimalPoint, tau_from_cw
from .engine import EdcaParams, StageReport


@dataclass(frozen=True)
class GasState:
    """Control state of one honest station.

    ``saturated_peers`` lists the stations counted in the fairness term
    (all of them, unless some are non-saturated). When ``exclude_lower`` is
    set, the punishment sum only counts stations receiving more throughput
    than this one.
    """

    station_id: int
    tau: float
    gamma: float
    tau_floor: float
    saturated_peers: frozenset = frozenset()
    exclude_lower: bool = False
    stage: int = 0

    @property
    def tau_hat(self) -> float:
        return clamp(self.tau, self.tau_floor)

    @classmethod
    def initial(cls, station_id: int, opt: OptimalPoint, gamma: float, n: int, tau: float | None = None, **kw) -> "GasState":
        peers = kw.pop("saturated_peers", None)
        return cls(
            station_id=station_id,
            tau=opt.tau_opt if tau is None else float(tau),
            gamma=gamma,
            tau_floor=opt.tau_opt / 2.0,
            saturated_peers=frozenset(range(n)) if peers is None else frozenset(peers),
            **kw,
        )


def clamp(tau, floor):
    """Transmission probability actually used: min(1, max(tau, floor))."""
    if np.ndim(tau):
        return np.minimum(1.0, np.maximum(tau, floor))
    return min(1.0, max(tau, floor))


def _peers(state: GasState, n: int) -> list[int]:
    return sorted(state.saturated_peers) if state.saturated_peers else list(range(n))


def penalty_term(state: GasState, report: StageReport, opt: OptimalPoint) -> float:
    r = report.throughputs
    i = state.station_id
    diffs = np.delete(r, i) - r[i]
    if state.exclude_lower:
        diffs = diffs[diffs > 0.0]
    return float(diffs.sum())


def gap_from_report(state: GasState, report: StageReport, opt: OptimalPoint) -> float:
    peers = _peers(state, report.n)
    return len(peers) * opt.r_opt - float(report.throughputs[peers].sum())


def fairness_term(state: GasState, report: StageReport, opt: OptimalPoint) -> float:
    n = len(_peers(state, report.n))
    if n < 2:
        raise ValueError(f"fairness term needs at least 2 saturated stations, got {n}")
    d = gap_from_report(state, report, opt)
    if d < 0.0:
        return d / (n - 1)
    if state.tau > opt.tau_opt:
        return d / n
    return -d / n


def step(state: GasState, report: StageReport, opt: OptimalPoint) -> GasState:
    g = penalty_term(state, report, opt) - fairness_term(state, report, opt)
    return replace(state, tau=state.tau + state.gamma * g, stage=state.stage + 1)


def to_edca_params(state: GasState, opt: OptimalPoint) -> EdcaParams:
    tau_hat = state.tau_hat
    if not tau_hat > 0.0:
        raise ValueError("tau_hat must be positive to map to a contention window")
    cw = 2.0 / tau_hat - 1.0
    return EdcaParams(cw_min=cw, m=0, aifs_slots=0, txop_packets=1, persistent=True)


# --- vectorised route ---------------------------------------------------------


def update_taus(tau, r, opt: OptimalPoint, gamma, active=None, peers=None, exclude_lower: bool = False) -> np.ndarray:
    """Advance the control variable of every active station by one stage.

    ``tau`` and ``r`` have shape (..., n). ``active`` marks the stations
    running GAS (the others are returned unchanged); ``peers`` marks the
    saturated stations counted in the fairness term. Both default to all
    stations.
    """
    tau = np.asarray(tau, dtype=float)
    r = np.asarray(r, dtype=float)
    n = r.shape[-1]
    if exclude_lower:
        diff = r[..., None, :] - r[..., :, None]  # [..., i, j] = r_j - r_i
        pen = np.where(diff > 0.0, diff, 0.0).sum(axis=-1)
    else:
        pen = r.sum(axis=-1, keepdims=True) - n * r
    if peers is None:
        k = n
        d = k * opt.r_opt - r.sum(axis=-1, keepdims=True)
    else:
        peers = np.asarray(peers, dtype=bool)
        k = int(peers.sum())
        d = k * opt.r_opt - np.where(peers, r, 0.0).sum(axis=-1, keepdims=True)
    if k < 2:
        raise ValueError(f"fairness term needs at least 2 saturated stations, got {k}")
    f = np.where(d < 0.0, d / (k - 1), np.where(tau > opt.tau_opt, d / k, -d / k))
    new = tau + gamma * (pen - f)
    if active is not None:
        new = np.where(np.asarray(active, dtype=bool), new, tau)
    return new


def tau_hat_of(tau, opt: OptimalPoint):
    return clamp(tau, opt.tau_opt / 2.0)


def cw_of(tau_hat):
    return 2.0 / np.asarray(tau_hat, dtype=float) - 1.0


__all__ = [
    "GasState",
    "StageReport",
    "clamp",
    "penalty_term",
    "fairness_term",
    "gap_from_report",
    "step",
    "to_edca_params",
    "update_taus",
    "tau_hat_of",
    "cw_of",
    "tau_from_cw",
]
