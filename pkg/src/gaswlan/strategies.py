"""Station behaviours: honest GAS and the selfish strategies it is tested against.

A strategy is bound to a station with :meth:`Strategy.reset`, reports the
configuration for the coming stage with :meth:`Strategy.params`, and moves
to the next stage with :meth:`Strategy.decide` once the stage's
throughputs are known.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import gas
from .analytic import OptimalPoint, mixed_optimal_point, optimal_point
from .dynamics import run_meanfield
from .engine import EdcaParams, StageReport
from .phy import DEFAULT_PHY, PhyProfile

DISCIPLINES = ("backoff", "persistent")


class Strategy:
    kind = "strategy"
    saturated = True

    def __init__(self):
        self.index = 0
        self.opt: OptimalPoint | None = None

    def reset(self, index: int, opt: OptimalPoint, gamma: float = 0.0, n: int = 0, peers=None) -> None:
        self.index = index
        self.opt = opt

    def plays_gas(self, time_s: float) -> bool:
        return False

    def params(self) -> EdcaParams:
        raise NotImplementedError

    def decide(self, report: StageReport, opt: OptimalPoint) -> EdcaParams:
        raise NotImplementedError

    def own(self, report: StageReport) -> float:
        return float(report.throughputs[self.index])

    def to_spec(self) -> dict:
        return {"kind": self.kind}


class Gas(Strategy):
    kind = "gas"

    def __init__(self, tau_init: float | None = None):
        super().__init__()
        self.tau_init = tau_init
        self.state: gas.GasState | None = None

    def reset(self, index, opt, gamma=0.0, n=0, peers=None):
        super().reset(index, opt)
        self.state = gas.GasState.initial(
            index, opt, gamma, n or opt.n, tau=self.tau_init,
            saturated_peers=peers, exclude_lower=peers is not None and len(peers) < (n or opt.n),
        )

    def plays_gas(self, time_s):
        return True

    def params(self):
        return gas.to_edca_params(self.state, self.opt)

    def decide(self, report, opt):
        self.state = gas.step(self.state, report, opt)
        return self.params()

    def to_spec(self):
        out = {"kind": self.kind}
        if self.tau_init is not None:
            out["tau_init"] = self.tau_init
        return out


class _Selfish(Strategy):
    """Common plumbing for strategies that may play GAS before deviating."""

    def __init__(self, switch_time_s: float = 0.0, discipline: str = "backoff"):
        super().__init__()
        if discipline not in DISCIPLINES:
            raise ValueError(f"discipline must be one of {DISCIPLINES}, got {discipline!r}")
        self.switch_time_s = float(switch_time_s)
        self.discipline = discipline

    def plays_gas(self, time_s):
        return time_s < self.switch_time_s - 1e-12

    def _edca(self, cw: float, **kw) -> EdcaParams:
        return EdcaParams(cw_min=max(1.0, float(cw)), persistent=self.discipline == "persistent", **kw)

    def _base_spec(self) -> dict:
        out = {"kind": self.kind}
        if self.switch_time_s:
            out["switch_time_s"] = self.switch_time_s
        if self.discipline != "backoff":
            out["discipline"] = self.discipline
        return out


class StaticCW(_Selfish):
    kind = "static"

    def __init__(self, cw_min: float, m: int = 0, aifs_slots: int = 0, txop_packets: int = 1, retry_limit: int = 7, **kw):
        super().__init__(**kw)
        self.config = EdcaParams(cw_min, m, aifs_slots, txop_packets, retry_limit, persistent=self.discipline == "persistent")

    def params(self):
        return self.config

    def decide(self, report, opt):
        return self.config

    def to_spec(self):
        c = self.config
        return {**self._base_spec(), "cw_min": c.cw_min, "m": c.m, "aifs_slots": c.aifs_slots,
                "txop_packets": c.txop_packets, "retry_limit": c.retry_limit}


class Adaptive1(_Selfish):
    """Probes CW=2 every ``period`` stages; backs off to CW_opt once it earns less than r_opt."""

    kind = "adaptive1"
    PROBE_CW = 2.0

    def __init__(self, period: int = 50, **kw):
        super().__init__(**kw)
        if period < 1:
            raise ValueError(f"probe period must be >= 1, got {period!r}")
        self.period = int(period)
        self.stage = 0
        self.cw = self.PROBE_CW

    def reset(self, index, opt, gamma=0.0, n=0, peers=None):
        super().reset(index, opt)
        self.stage = 0
        self.cw = self.PROBE_CW

    def params(self):
        return self._edca(self.cw)

    def _detected(self, report, opt):
        return self.own(report) < opt.r_opt

    def _back_off(self, opt):
        return opt.cw_opt

    def decide(self, report, opt):
        probing = self.cw == self.PROBE_CW
        if probing and self._detected(report, opt):
            self.cw = self._back_off(opt)
        self.stage += 1
        if self.stage % self.period == 0:
            self.cw = self.PROBE_CW
        return self.params()

    def to_spec(self):
        return {**self._base_spec(), "period": self.period}


class Adaptive2(Adaptive1):
    """Like Adaptive1, but retreats in steps of 5 above CW_opt for as long as it stays below r_opt."""

    kind = "adaptive2"
    STEP = 5.0

    def decide(self, report, opt):
        below = self._detected(report, opt)
        if self.cw == self.PROBE_CW:
            if below:
                self.cw = opt.cw_opt + self.STEP
        elif below:
            self.cw += self.STEP
        self.stage += 1
        if self.stage % self.period == 0:
            self.cw = self.PROBE_CW
        return self.params()


class Adaptive3(_Selfish):
    """Hill climbing on its own throughput: -5 after a better stage, +5 otherwise."""

    kind = "adaptive3"
    STEP = 5.0

    def __init__(self, cw_init: float | None = None, **kw):
        super().__init__(**kw)
        self.cw_init = cw_init
        self.cw = 1.0
        self.last = -math.inf

    def reset(self, index, opt, gamma=0.0, n=0, peers=None):
        super().reset(index, opt)
        self.cw = opt.cw_opt if self.cw_init is None else float(self.cw_init)
        self.last = -math.inf

    def params(self):
        return self._edca(self.cw)

    def decide(self, report, opt):
        r = self.own(report)
        if r > self.last:
            self.cw = max(1.0, self.cw - self.STEP)
        else:
            self.cw += self.STEP
        self.last = r
        return self.params()

    def to_spec(self):
        out = self._base_spec()
        if self.cw_init is not None:
            out["cw_init"] = self.cw_init
        return out


class NonSaturated(Strategy):
    """Fixed offered load at the target configuration; never adapts."""

    kind = "nonsaturated"
    saturated = False

    def __init__(self, offered_rate: float | None = None, load_fraction: float | None = None, cw: float | None = None):
        super().__init__()
        if (offered_rate is None) == (load_fraction is None):
            raise ValueError("give exactly one of offered_rate (bits/s) or load_fraction (of r_opt)")
        if (offered_rate is not None and offered_rate <= 0) or (load_fraction is not None and load_fraction <= 0):
            raise ValueError("offered load must be positive")
        self.offered_rate = offered_rate
        self.load_fraction = load_fraction
        self.cw = cw
        self._cw = 1.0

    def rate(self, reference_r_opt: float) -> float:
        return self.offered_rate if self.offered_rate is not None else self.load_fraction * reference_r_opt

    def reset(self, index, opt, gamma=0.0, n=0, peers=None):
        super().reset(index, opt)
        self._cw = opt.cw_opt if self.cw is None else float(self.cw)

    def params(self):
        return EdcaParams(cw_min=self._cw, persistent=True)

    def decide(self, report, opt):
        return self.params()

    def to_spec(self):
        out = {"kind": self.kind}
        for k in ("offered_rate", "load_fraction", "cw"):
            if getattr(self, k) is not None:
                out[k] = getattr(self, k)
        return out


KINDS = {c.kind: c for c in (Gas, StaticCW, Adaptive1, Adaptive2, Adaptive3, NonSaturated)}


def from_spec(spec: dict) -> Strategy:
    spec = dict(spec)
    kind = spec.pop("kind")
    if kind not in KINDS:
        raise ValueError(f"unknown strategy kind {kind!r}; expected one of {sorted(KINDS)}")
    return KINDS[kind](**spec)


def decide(strategy: Strategy, report: StageReport, opt: OptimalPoint) -> EdcaParams:
    return strategy.decide(report, opt)


# --- operating points ---------------------------------------------------------


def reference_loads(strategies, phy: PhyProfile) -> list[float]:
    """Offered rates of the non-saturated stations, in station order.

    Load fractions refer to r_opt of the WLAN with every station saturated.
    """
    n = len(strategies)
    ref = None
    out = []
    for s in strategies:
        if not s.saturated:
            if s.load_fraction is not None and ref is None:
                ref = optimal_point(n, phy).r_opt
            out.append(s.rate(ref or 0.0))
    return out


def operating_point(strategies, phy: PhyProfile) -> OptimalPoint:
    if len(strategies) == 1:
        # a lone station transmits every slot; there is nothing to share
        return OptimalPoint(1, 1.0, 1.0, phy.capacity, math.inf, phy.T_t, phy.T_t, 0.0, 0.0, phy.capacity, 1)
    loads = reference_loads(strategies, phy)
    n_sat = len(strategies) - len(loads)
    if not loads:
        return optimal_point(len(strategies), phy)
    return mixed_optimal_point(n_sat, loads, phy)


# --- best static response -------------------------------------------------------


@dataclass
class SweepResult:
    cw: float
    throughput: float
    curve: list = field(default_factory=list)  # (cw, selfish_bps, honest_bps[, selfish_ci, honest_ci])
    m: int = 0
    aifs_slots: int = 0
    txop_packets: int = 1
    extra: dict = field(default_factory=dict)

    def rows(self):
        for row in self.curve:
            yield {"cw": row[0], "role": "selfish", "throughput_bps": row[1]}
            yield {"cw": row[0], "role": "honest", "throughput_bps": row[2]}


def _argmax_larger_cw(cws, values):
    best = None
    for cw, v in zip(cws, values):
        if best is None or v > best[1] or (v == best[1] and cw > best[0]):
            best = (cw, v)
    return best


def _honest_list(n, honest):
    if honest is None:
        return [Gas() for _ in range(n - 1)]
    honest = list(honest)
    if len(honest) != n - 1:
        raise ValueError(f"need {n - 1} honest strategies for n={n}, got {len(honest)}")
    for h in honest:
        if not isinstance(h, (Gas, NonSaturated)):
            raise ValueError(f"honest stations must play GAS (or be non-saturated), got {h.kind!r}")
    return honest


def best_static_cw(
    n: int,
    honest=None,
    search_space=range(1, 1024),
    phy: PhyProfile = DEFAULT_PHY,
    fidelity: str = "meanfield",
    m: int = 0,
    aifs_slots: int = 0,
    txop_packets: int = 1,
    warmup: int = 200,
    measure: int = 1000,
    gamma_multiplier: float = 1.0,
    seed: int = 0,
    replications: int = 1,
    discipline: str = "backoff",
) -> SweepResult:
    """Exhaustive search for the fixed CW that maximises a lone deviator's throughput.

    Station 0 is the deviator; the others are ``honest`` (GAS by default,
    non-saturated stations allowed). Each candidate runs ``warmup`` stages
    that are discarded, then ``measure`` stages that are averaged. Ties go
    to the larger window.
    """
    cws = [float(c) for c in search_space]
    if not cws:
        raise ValueError("search space is empty")
    honest = _honest_list(n, honest)
    strategies = [StaticCW(cws[0], m, aifs_slots, txop_packets, discipline=discipline)] + honest
    opt = operating_point(strategies, phy)

    if fidelity == "meanfield":
        if (m, aifs_slots, txop_packets) != (0, 0, 1):
            raise ValueError("mean-field mode models only m=0, no extra AIFS, TXOP=1; use slot fidelity")
        selfish, hon = _meanfield_sweep(cws, strategies, opt, phy, gamma_multiplier * opt.gamma_default, warmup, measure)
        curve = [(c, float(s), float(h)) for c, s, h in zip(cws, selfish, hon)]
        best_cw, best_r = _argmax_larger_cw(cws, selfish)
        return SweepResult(best_cw, float(best_r), curve, m, aifs_slots, txop_packets, {"opt": opt.to_dict()})
    if fidelity != "slot":
        raise ValueError(f"fidelity must be 'meanfield' or 'slot', got {fidelity!r}")

    from .harness import replicate_stations  # the slot loop lives in the harness

    curve = []
    for c in cws:
        strategies[0] = StaticCW(c, m, aifs_slots, txop_packets, discipline=discipline)
        agg = replicate_stations(strategies, phy, warmup + measure, "slot", seed, replications,
                                 gamma_multiplier=gamma_multiplier, average_from=warmup)
        s = agg["mean"][0]
        h = float(np.mean(agg["mean"][1:][[isinstance(x, Gas) for x in honest]])) if any(isinstance(x, Gas) for x in honest) else 0.0
        curve.append((c, float(s), h, float(agg["ci95"][0])))
    best_cw, best_r = _argmax_larger_cw(cws, [row[1] for row in curve])
    return SweepResult(best_cw, float(best_r), curve, m, aifs_slots, txop_packets, {"opt": opt.to_dict()})


def _meanfield_sweep(cws, strategies, opt, phy, gamma, warmup, measure):
    n = len(strategies)
    k = len(cws)
    loads = np.array([np.nan if s.saturated else s.rate(0.0) for s in strategies])
    if not np.all(np.isnan(loads)):
        ref = reference_loads(strategies, phy)
        loads[~np.isnan(loads)] = ref
    gas_mask = np.array([isinstance(s, Gas) for s in strategies])
    tau0 = np.full((k, n), opt.tau_opt)
    fixed = np.zeros((k, n))
    fixed[:, 0] = 2.0 / (np.asarray(cws) + 1.0)
    kw = {}
    if not np.all(np.isnan(loads)):
        caps = np.full(n, opt.tau_opt)
        kw = dict(loads=np.broadcast_to(loads, (k, n)), caps=np.broadcast_to(caps, (k, n)),
                  peers=np.isnan(loads), exclude_lower=True)
        fixed[:, ~np.isnan(loads)] = opt.tau_opt
    _, mean_r = run_meanfield(tau0, opt, phy, gamma, warmup + measure, active=np.broadcast_to(gas_mask, (k, n)),
                              fixed=fixed, record=False, average_from=warmup, **kw)
    honest_gas = gas_mask.copy()
    honest_gas[0] = False
    hon = mean_r[:, honest_gas].mean(axis=1) if honest_gas.any() else np.zeros(k)
    return mean_r[:, 0], hon
