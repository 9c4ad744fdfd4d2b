"""Saturation throughput model and the optimal operating point.

Everything here is a pure function of a transmission-probability vector and
a :class:`~gaswlan.phy.PhyProfile`. Functions accept arrays with arbitrary
leading batch dimensions; the last axis always indexes stations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .phy import PhyProfile

BISECTION_ITERATIONS = 200
BRACKET_EPS = 1e-15


def _as_tau(tau_hat) -> np.ndarray:
    tau = np.asarray(tau_hat, dtype=float)
    if tau.ndim == 0:
        tau = tau[None]
    return tau


def idle_probability(tau_hat) -> np.ndarray:
    """Probability that nobody transmits in a slot, prod_j (1 - tau_j)."""
    return np.prod(1.0 - _as_tau(tau_hat), axis=-1)


def slot_duration(tau_hat, phy: PhyProfile):
    """Mean slot length T_s = T_t + (T_e - T_t) * prod_j (1 - tau_j)."""
    out = phy.T_t + (phy.T_e - phy.T_t) * idle_probability(tau_hat)
    return float(out) if np.ndim(out) == 0 else out


def _others_idle(tau: np.ndarray) -> np.ndarray:
    # prod_{j != i} (1 - tau_j) without dividing by (1 - tau_i)
    q = 1.0 - tau
    ones = np.ones(tau.shape[:-1] + (1,))
    left = np.cumprod(np.concatenate([ones, q[..., :-1]], axis=-1), axis=-1)
    right = np.cumprod(np.concatenate([ones, q[..., :0:-1]], axis=-1), axis=-1)[..., ::-1]
    return left * right


def station_throughputs(tau_hat, phy: PhyProfile) -> np.ndarray:
    """Per-station saturation throughput r_i in bits/s for every station."""
    tau = _as_tau(tau_hat)
    ts = phy.T_t + (phy.T_e - phy.T_t) * np.prod(1.0 - tau, axis=-1, keepdims=True)
    return phy.l / ts * tau * _others_idle(tau)


def station_throughput(i: int, tau_hat, phy: PhyProfile) -> float:
    tau = _as_tau(tau_hat)
    if tau.ndim != 1:
        raise ValueError("station_throughput expects a single tau vector")
    n = tau.shape[0]
    if not 0 <= i < n:
        raise IndexError(f"station index {i} out of range for n={n}")
    return float(station_throughputs(tau, phy)[i])


def station_throughputs_odds_form(tau_hat, phy: PhyProfile) -> np.ndarray:
    """Same model written as tau_i/(1-tau_i) * l/T_s * prod_j(1-tau_j).

    Undefined when some tau_i = 1; kept as an independent route for tests.
    """
    tau = _as_tau(tau_hat)
    p = np.prod(1.0 - tau, axis=-1, keepdims=True)
    ts = phy.T_t + (phy.T_e - phy.T_t) * p
    return tau / (1.0 - tau) * phy.l / ts * p


def symmetric_throughput(tau, n: int, phy: PhyProfile):
    """Throughput of one station when all n stations transmit with tau."""
    tau = np.asarray(tau, dtype=float)
    ts = phy.T_t + (phy.T_e - phy.T_t) * (1.0 - tau) ** n
    out = phy.l * tau * (1.0 - tau) ** (n - 1) / ts
    return float(out) if out.ndim == 0 else out


def airtime(tau_hat, phy: PhyProfile) -> np.ndarray:
    """Fraction of channel time each station occupies, tau_i * T_t / T_s."""
    tau = _as_tau(tau_hat)
    ts = phy.T_t + (phy.T_e - phy.T_t) * np.prod(1.0 - tau, axis=-1, keepdims=True)
    return tau * phy.T_t / ts


def fixed_point_residual(tau, n: int, ratio: float):
    """(1 - n tau)/(1 - tau)^n - (1 - ratio), with ratio = T_e/T_t."""
    tau = np.asarray(tau, dtype=float)
    return (1.0 - n * tau) / (1.0 - tau) ** n - (1.0 - ratio)


def fixed_point_root(n: int, ratio: float) -> float:
    """Root of the optimality condition in (0, 1/n) by plain bisection.

    ``ratio`` is T_e/T_t and may equal 1, in which case the root is 1/n.
    """
    if n < 2:
        raise ValueError(f"optimum needs n >= 2 stations, got n={n}")
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"need 0 < T_e/T_t <= 1, got {ratio!r}")
    if ratio == 1.0:
        return 1.0 / n
    lo, hi = BRACKET_EPS, 1.0 / n - BRACKET_EPS
    # LHS falls from 1 to 0 on the bracket, so the residual changes sign once
    for _ in range(BISECTION_ITERATIONS):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if fixed_point_residual(mid, n, ratio) > 0.0:
            lo = mid
        else:
            hi = mid
    return lo if abs(fixed_point_residual(lo, n, ratio)) <= abs(fixed_point_residual(hi, n, ratio)) else hi


def solve_tau_opt(n: int, phy: PhyProfile) -> float:
    return fixed_point_root(n, phy.T_e / phy.T_t)


def cw_from_tau(tau):
    return 2.0 / np.asarray(tau, dtype=float) - 1.0 if np.ndim(tau) else 2.0 / tau - 1.0


def tau_from_cw(cw):
    return 2.0 / (np.asarray(cw, dtype=float) + 1.0) if np.ndim(cw) else 2.0 / (cw + 1.0)


def cw_opt_approx(n: int, phy: PhyProfile) -> float:
    """Small-T_e/T_t approximation n*sqrt(2 T_t/T_e) - 1."""
    if n < 2:
        raise ValueError(f"need n >= 2, got n={n}")
    return n * float(np.sqrt(2.0 * phy.T_t / phy.T_e)) - 1.0


@dataclass(frozen=True)
class OptimalPoint:
    n: int
    tau_opt: float
    cw_opt: float
    r_opt: float
    rho: float
    T_opt: float
    T_m: float
    gamma_max: float
    gamma_max_theorem: float
    capacity: float
    n_total: int = 0
    extra: dict = field(default_factory=dict, compare=False)

    @property
    def gamma_default(self) -> float:
        return 0.5 * self.gamma_max

    def tau_max(self, gamma: float) -> float:
        """Ceiling on the unclamped control variable for a given gain."""
        n = self.n
        c = self.capacity
        step = max(c + self.r_opt, n * (c - self.r_opt) / (n - 1))
        return 1.0 + gamma * step

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "n_total": self.n_total or self.n,
            "tau_opt": self.tau_opt,
            "cw_opt": self.cw_opt,
            "r_opt": self.r_opt,
            "rho": self.rho,
            "T_opt": self.T_opt,
            "T_m": self.T_m,
            "gamma_max": self.gamma_max,
            "gamma_max_theorem": self.gamma_max_theorem,
            "capacity": self.capacity,
        }


def throughput_gap(tau_hat, opt: OptimalPoint, phy: PhyProfile):
    """D = n r_opt - sum_j r_j. Negative when the sum-rate beats the symmetric optimum."""
    r = station_throughputs(tau_hat, phy)
    out = opt.n * opt.r_opt - r.sum(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def floor_slot_duration(n: int, tau_opt: float, phy: PhyProfile) -> float:
    """T_m: the shortest mean slot once every station is floored at tau_opt/2."""
    return phy.T_t + (phy.T_e - phy.T_t) * (1.0 - tau_opt / 2.0) ** n


def gamma_bounds(n: int, tau_opt: float, r_opt: float, T_opt: float, phy: PhyProfile, n_floor: int | None = None) -> dict:
    """Gain ceilings. ``n_floor`` counts the stations known to respect the
    tau_opt/2 floor (all of them unless some stations do not run the update);
    the others are bounded by an idle factor of 1."""
    if n < 2:
        raise ValueError(f"gain ceiling needs n >= 2, got n={n}")
    k = n if n_floor is None else n_floor
    t_m = floor_slot_duration(k, tau_opt, phy)
    power = (1.0 - tau_opt / 2.0) ** max(k - 2, 0)
    rho = r_opt / (tau_opt * (1.0 - tau_opt))
    floor_form = 1.0 / (n * phy.l / t_m * power)
    rho_form = 1.0 / ((n - 1) * phy.l / t_m * power + rho)
    theorem_form = 1.0 / (n * phy.l / T_opt * power)
    return {
        "T_m": t_m,
        "floor_form": floor_form,
        "rho_form": rho_form,
        "theorem_form": theorem_form,
        "gamma_max": min(floor_form, rho_form),
    }


def gamma_max(n: int, opt: OptimalPoint, phy: PhyProfile) -> float:
    """Operative gain ceiling: the smaller of the two floor-slot (T_m) bounds."""
    return gamma_bounds(n, opt.tau_opt, opt.r_opt, opt.T_opt, phy)["gamma_max"]


def _assemble(n_counted: int, n_total: int, tau_opt: float, r_opt: float, T_opt: float, phy: PhyProfile, **extra) -> OptimalPoint:
    gb = gamma_bounds(n_total, tau_opt, r_opt, T_opt, phy, n_floor=n_counted)
    return OptimalPoint(
        n=n_counted,
        tau_opt=tau_opt,
        cw_opt=2.0 / tau_opt - 1.0,
        r_opt=r_opt,
        rho=r_opt / (tau_opt * (1.0 - tau_opt)),
        T_opt=T_opt,
        T_m=gb["T_m"],
        gamma_max=gb["gamma_max"],
        gamma_max_theorem=gb["theorem_form"],
        capacity=phy.capacity,
        n_total=n_total,
        extra=extra,
    )


def optimal_point(n: int, phy: PhyProfile) -> OptimalPoint:
    tau = solve_tau_opt(n, phy)
    r_opt = symmetric_throughput(tau, n, phy)
    t_opt = phy.T_t + (phy.T_e - phy.T_t) * (1.0 - tau) ** n
    return _assemble(n, n, tau, r_opt, t_opt, phy)


# --- non-saturated stations -------------------------------------------------


def solve_nonsaturated(tau_hat, loads, caps, phy: PhyProfile, iterations: int = 500, tol: float = 1e-15) -> np.ndarray:
    """Replace the entries of non-saturated stations by their fluid attempt rate.

    ``loads`` holds the offered rate (bits/s) per station, NaN for saturated
    ones; ``caps`` the attempt probability each station would use when
    backlogged. A non-saturated station transmits just often enough to carry
    its load, or at its cap when the load is infeasible. Solved by Jacobi
    iteration on the closed form for a single station's attempt rate.
    """
    tau = np.array(np.broadcast_to(_as_tau(tau_hat), np.broadcast_shapes(np.shape(tau_hat), np.shape(loads))), dtype=float)
    loads = np.broadcast_to(np.asarray(loads, dtype=float), tau.shape)
    caps = np.broadcast_to(np.asarray(caps, dtype=float), tau.shape)
    ns = ~np.isnan(loads)
    if not ns.any():
        return tau
    lam = np.where(ns, loads, 0.0)
    tau = np.where(ns, np.minimum(caps, 1e-3), tau)
    a = phy.T_t - phy.T_e
    for _ in range(iterations):
        q = _others_idle(tau)
        # r_i = l q tau_i / (T_t - a q + a q tau_i)  solved for tau_i
        denom = phy.l * q - lam * a * q
        with np.errstate(divide="ignore", invalid="ignore"):
            want = np.where(denom > 0, lam * (phy.T_t - a * q) / denom, np.inf)
        new = np.where(ns, np.minimum(want, caps), tau)
        if np.max(np.abs(new - tau)) <= tol:
            tau = new
            break
        tau = new
    return tau


def mixed_optimal_point(n_sat: int, loads, phy: PhyProfile) -> OptimalPoint:
    """Target point with ``n_sat`` saturated stations plus fixed offered loads.

    Start from the all-saturated optimum for ``n_sat`` stations and lower the
    common saturated attempt probability until the total airtime, counting
    the non-saturated stations at the rate that carries their load, is 1.
    Non-saturated stations are capped at the same attempt probability.
    """
    loads = np.asarray(list(loads), dtype=float)
    if loads.size == 0:
        return optimal_point(n_sat, phy)
    n_total = n_sat + loads.size
    full_loads = np.concatenate([np.full(n_sat, np.nan), loads])

    def state(tau_s):
        base = np.full(n_total, tau_s)
        return solve_nonsaturated(base, full_loads, np.full(n_total, tau_s), phy)

    def excess_airtime(tau_s):
        return float(airtime(state(tau_s), phy).sum() - 1.0)

    hi = solve_tau_opt(n_sat, phy) if n_sat >= 2 else 1.0 - BRACKET_EPS
    lo = BRACKET_EPS
    if excess_airtime(hi) <= 0.0:
        tau = hi
    else:
        if excess_airtime(lo) > 0.0:
            raise ValueError("offered loads exceed channel capacity")
        for _ in range(BISECTION_ITERATIONS):
            mid = 0.5 * (lo + hi)
            if mid in (lo, hi):
                break
            if excess_airtime(mid) > 0.0:
                hi = mid
            else:
                lo = mid
        tau = lo
    full = state(tau)
    r = station_throughputs(full, phy)
    t_opt = slot_duration(full, phy)
    return _assemble(
        n_sat,
        n_total,
        tau,
        float(r[:n_sat].mean()),
        t_opt,
        phy,
        nonsat_tau=full[n_sat:].tolist(),
        nonsat_throughput=r[n_sat:].tolist(),
    )
