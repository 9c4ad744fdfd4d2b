"""Brute-force checkers for the bounds, lemmas and no-gain claims.

Every checker returns a :class:`CheckResult`. Margins are signed slack,
``bound - value`` for upper bounds, so the worst margin is the minimum and
a negative value is a violation.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .analytic import OptimalPoint, optimal_point, station_throughputs, symmetric_throughput, throughput_gap
from .dynamics import run_meanfield
from .gas import clamp, update_taus
from .phy import DEFAULT_PHY, PhyProfile
from .strategies import Adaptive1, Adaptive2, Adaptive3, Gas, StaticCW


@dataclass
class CheckResult:
    name: str
    samples: int
    violations: int
    worst_margin: float
    params: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = self.passed
        return d

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.violations}/{self.samples} violations, worst margin {self.worst_margin:.3g}"


def _merge(name, parts, params, extra=None) -> CheckResult:
    samples = sum(p[0] for p in parts)
    violations = sum(p[1] for p in parts)
    worst = min((p[2] for p in parts), default=math.inf)
    return CheckResult(name, samples, violations, float(worst), params, extra or {})


# --- bound on the throughput gap ----------------------------------------------------


def check_theorem1_bound(n: int, deltas, samples: int = 100_000, phy: PhyProfile = DEFAULT_PHY, seed: int = 0,
                         tol: float = 1e-9, chunk: int = 20_000) -> CheckResult:
    """D(tau_hat) <= n rho Delta over the box [tau_opt - Delta, tau_opt + Delta]^n.

    Samples are uniform in the box (clipped to [0, 1]); the corners, where
    the extremes sit, are added explicitly. ``tol`` is relative to n r_opt:
    D itself carries rounding of that order, so an absolute slack in bit/s
    could not pass even at Delta = 0.
    """
    opt = optimal_point(n, phy)
    rng = np.random.default_rng([seed, n])
    parts = []
    per_delta = {}
    for delta in deltas:
        delta = float(delta)
        lo, hi = max(0.0, opt.tau_opt - delta), min(1.0, opt.tau_opt + delta)
        bound = n * opt.rho * delta + tol * n * opt.r_opt
        worst, viol, count = math.inf, 0, 0
        left = samples
        while left > 0:
            k = min(chunk, left)
            x = rng.uniform(lo, hi, size=(k, n))
            d = throughput_gap(x, opt, phy)
            margin = bound - d
            worst = min(worst, float(margin.min()))
            viol += int((margin < 0).sum())
            count += k
            left -= k
        if n <= 12:
            corners = np.array(list(itertools.product((lo, hi), repeat=n)))
        else:
            corners = np.where(rng.random((4096, n)) < 0.5, lo, hi)
        margin = bound - throughput_gap(corners, opt, phy)
        worst = min(worst, float(margin.min()))
        viol += int((margin < 0).sum())
        count += len(corners)
        parts.append((count, viol, worst))
        per_delta[repr(delta)] = {"worst_margin": worst, "violations": viol, "bound": n * opt.rho * delta}
    return _merge("theorem1_bound", parts, {"n": n, "deltas": [float(d) for d in deltas], "samples": samples, "seed": seed, "tol": tol},
                  {"per_delta": per_delta, "tau_opt": opt.tau_opt, "rho": opt.rho})


# --- sum-rate minimisers ----------------------------------------------------------------


def _sum_rate(x, phy):
    return station_throughputs(x, phy).sum(axis=-1)


def check_lemma_equal_elements(n: int, p_e: float, box, resolution: float = 1e-3, phy: PhyProfile = DEFAULT_PHY,
                               rtol: float = 1e-12, chunk: int = 200_000) -> CheckResult:
    """On {prod(1 - tau_j) = p_e} within the box, no point has a lower sum-rate than the symmetric one.

    The first n-1 coordinates run over a grid; the last is solved from the
    constraint, so every tested point lies exactly on the surface.
    """
    lo, hi = map(float, box)
    if not (0.0 <= lo <= hi <= 1.0):
        raise ValueError(f"box must satisfy 0 <= lo <= hi <= 1, got {box!r}")
    p_lo, p_hi = (1.0 - hi) ** n, (1.0 - lo) ** n
    if not (p_lo - 1e-15 <= p_e <= p_hi + 1e-15):
        raise ValueError(f"p_e={p_e!r} infeasible for box [{lo}, {hi}]^{n}: need {p_lo:.6g} <= p_e <= {p_hi:.6g}")
    sym = 1.0 - p_e ** (1.0 / n)
    ref = float(_sum_rate(np.full(n, sym), phy))
    params = {"n": n, "p_e": p_e, "box": [lo, hi], "resolution": resolution}
    if hi - lo < resolution or n == 1:
        return CheckResult("lemma_equal_elements", 1, 0, 0.0, params, {"symmetric_tau": sym, "symmetric_sum_rate": ref})
    axis = np.arange(lo, hi + 0.5 * resolution, resolution)
    axis = axis[axis <= hi]
    tol = rtol * ref
    worst, viol, count = math.inf, 0, 0
    grids = itertools.product(axis, repeat=n - 2) if n > 2 else [()]
    # the innermost grid axis is vectorised, outer ones iterate
    for outer in grids:
        outer = np.asarray(outer, dtype=float)
        prefix = np.prod(1.0 - outer) if outer.size else 1.0
        x1 = axis
        last = 1.0 - p_e / (prefix * (1.0 - x1))
        ok = (last >= lo - 1e-15) & (last <= hi + 1e-15)
        if not ok.any():
            continue
        pts = np.empty((int(ok.sum()), n))
        pts[:, : n - 2] = outer
        pts[:, n - 2] = x1[ok]
        pts[:, n - 1] = np.clip(last[ok], lo, hi)
        margin = _sum_rate(pts, phy) - ref + tol
        worst = min(worst, float(margin.min()))
        viol += int((margin < 0).sum())
        count += len(pts)
    if count == 0:
        worst = 0.0
    return CheckResult("lemma_equal_elements", count, viol, worst, params, {"symmetric_tau": sym, "symmetric_sum_rate": ref})


def check_boundary_minimizer(n: int, box, resolution: float = 1e-3, phy: PhyProfile = DEFAULT_PHY,
                             random_samples: int = 20_000, seed: int = 0, rtol: float = 1e-12) -> CheckResult:
    """Over the box, the sum-rate minimum sits at one of the two diagonal endpoints.

    The diagonal is scanned on a grid; random interior points of the full
    box are checked against the same endpoint minimum.
    """
    lo, hi = map(float, box)
    if not (0.0 <= lo <= hi <= 1.0):
        raise ValueError(f"box must satisfy 0 <= lo <= hi <= 1, got {box!r}")
    ends = np.array([np.full(n, lo), np.full(n, hi)])
    end_min = float(_sum_rate(ends, phy).min())
    tol = rtol * max(end_min, 1.0)
    params = {"n": n, "box": [lo, hi], "resolution": resolution, "random_samples": random_samples, "seed": seed}
    if hi == lo:
        return CheckResult("boundary_minimizer", 1, 0, 0.0, params, {"endpoint_min": end_min})
    diag = np.arange(lo, hi + 0.5 * resolution, resolution)
    diag = diag[diag <= hi]
    vals = n * symmetric_throughput(diag, n, phy)
    margin = vals - end_min + tol
    parts = [(len(diag), int((margin < 0).sum()), float(margin.min()))]
    if random_samples:
        rng = np.random.default_rng([seed, n])
        x = rng.uniform(lo, hi, size=(random_samples, n))
        m2 = _sum_rate(x, phy) - end_min + tol
        parts.append((random_samples, int((m2 < 0).sum()), float(m2.min())))
    res = _merge("boundary_minimizer", parts, params, {"endpoint_min": end_min, "argmin_diagonal": float(diag[np.argmin(vals)])})
    return res


# --- descent of the sup-norm Lyapunov function ---------------------------------------


def random_starts(n: int, opt: OptimalPoint, count: int, seed: int = 0, below_floor: int = 0) -> np.ndarray:
    """Uniform starts in [tau_opt/2, 1]^n, plus ``below_floor`` starts with some entries under the floor."""
    rng = np.random.default_rng([seed, n, 7])
    x = rng.uniform(opt.tau_opt / 2.0, 1.0, size=(count, n))
    if below_floor:
        y = rng.uniform(opt.tau_opt / 2.0, 1.0, size=(below_floor, n))
        mask = rng.random((below_floor, n)) < 0.5
        y[mask] = rng.uniform(0.0, opt.tau_opt / 2.0, size=int(mask.sum()))
        x = np.concatenate([x, y])
    return x


def check_lyapunov_descent(n: int, starts=100, gamma: float | None = None, stages: int = 10_000, phy: PhyProfile = DEFAULT_PHY,
                           seed: int = 0, threshold: float = 1e-10, below_floor: int = 0, gamma_multiplier: float | None = None) -> CheckResult:
    """Strict decrease of ||tau - tau_opt||_inf at every stage until below ``threshold``.

    Also counts order-preservation failures (station below the maximum
    overtaking it) and increases of the maximum on stages where the sum-rate
    exceeds n r_opt. Trajectories that never reach the threshold are
    reported in ``extra['unconverged']``; they are not descent violations.
    """
    opt = optimal_point(n, phy)
    if gamma is None:
        gamma = (gamma_multiplier if gamma_multiplier is not None else 0.5) * opt.gamma_max
    x = random_starts(n, opt, starts, seed, below_floor) if np.isscalar(starts) else np.atleast_2d(np.asarray(starts, float))
    tau = x.copy()
    v = np.abs(tau - opt.tau_opt).max(axis=1)
    alive = v > threshold
    viol = 0
    order_viol = 0
    max_viol = 0
    worst = math.inf
    samples = 0
    first_violation = None
    floor = opt.tau_opt / 2.0
    for t in range(stages):
        if not alive.any():
            break
        th = clamp(tau, floor)
        r = station_throughputs(th, phy)
        new = update_taus(tau, r, opt, gamma)
        v_new = np.abs(new - opt.tau_opt).max(axis=1)
        margin = (v - v_new)[alive]
        samples += int(alive.sum())
        bad = margin <= 0.0
        if bad.any() and first_violation is None:
            first_violation = t
        viol += int(bad.sum())
        worst = min(worst, float(margin.min()))
        # order preservation and non-increasing maximum, on D < 0 stages
        d = n * opt.r_opt - r.sum(axis=1)
        neg = alive & (d < 0)
        if neg.any():
            im = np.argmax(tau[neg], axis=1)
            rows = np.arange(int(neg.sum()))
            tm_new = new[neg][rows, im]
            below = tau[neg] < tau[neg][rows, im][:, None]
            order_viol += int((below & (new[neg] >= tm_new[:, None])).sum())
            max_viol += int((tm_new > tau[neg][rows, im]).sum())
        tau = new
        v = v_new
        alive = alive & (v > threshold)
    unconverged = int(alive.sum())
    total = viol + order_viol + max_viol
    return CheckResult(
        "lyapunov_descent", samples, total, worst if samples else 0.0,
        {"n": n, "starts": len(x), "gamma": gamma, "gamma_over_max": gamma / opt.gamma_max, "stages": stages, "seed": seed,
         "threshold": threshold, "below_floor": below_floor},
        {"descent_violations": viol, "order_violations": order_viol, "max_increase_violations": max_viol,
         "unconverged": unconverged, "final_sup_norm_max": float(v.max()), "final_relative_sup_norm_max": float(v.max() / opt.tau_opt),
         "first_violation_stage": first_violation},
    )


# --- repeated game: no gain for a deviator ---------------------------------------------


def finite_horizon_slack(opt: OptimalPoint, gamma: float, stages: int, tau_init: float | None = None) -> float:
    """(tau_max - tau_init) / (gamma * stages), in bits/s: the transient term of the time-average bound."""
    t0 = opt.tau_opt if tau_init is None else tau_init
    return (opt.tau_max(gamma) - t0) / (gamma * stages)


def _time_varying(opt, phy, gamma, stages, tau0, policy):
    """Station 0 plays ``policy(t, tau_hat, r_prev) -> tau_s`` (batched); the rest run GAS."""
    tau = np.array(tau0, dtype=float)
    b, n = tau.shape
    active = np.ones(n, bool)
    active[0] = False
    acc = np.zeros(b)
    r_prev = None
    floor = opt.tau_opt / 2.0
    for t in range(stages):
        th = clamp(tau, floor)
        th[:, 0] = policy(t, th, r_prev)
        r = station_throughputs(th, phy)
        acc += r[:, 0]
        tau = update_taus(tau, r, opt, gamma, active=active)
        r_prev = r
    return acc / stages


def greedy_policy(opt, phy, grid=1e-3, lookahead: bool = False, gamma: float = 0.0):
    """Per-stage argmax of the deviator's own throughput over a tau grid.

    With ``lookahead`` the score adds the next stage's throughput after the
    honest stations respond, assuming the same tau is held.
    """
    cand = np.arange(grid, 1.0 + 0.5 * grid, grid)
    floor = opt.tau_opt / 2.0

    def policy(t, th, r_prev):
        b, n = th.shape
        if not lookahead:
            # own throughput given the others' idle product, for every candidate at once
            p_idle = np.prod(1.0 - th[:, 1:], axis=1)[:, None]
            own = phy.l * cand * p_idle / (phy.T_t + (phy.T_e - phy.T_t) * (1.0 - cand) * p_idle)
            return cand[::-1][np.argmax(own[:, ::-1], axis=1)]
        x = np.repeat(th[:, None, :], len(cand), axis=1)
        x[:, :, 0] = cand
        r = station_throughputs(x, phy)
        score = r[:, :, 0].copy()
        # honest stations respond from their clamped values, a close proxy for the hidden unclamped ones
        active = np.ones(n, bool)
        active[0] = False
        nxt = update_taus(x, r, opt, gamma, active=active)
        y = clamp(nxt, floor)
        y[:, :, 0] = cand
        score += station_throughputs(y, phy)[:, :, 0]
        best = np.argmax(score[:, ::-1], axis=1)
        return cand[::-1][best]

    return policy


def random_policy(seed: int, switch_every: int = 100):
    """Piecewise-constant random tau levels, redrawn every ``switch_every`` stages."""
    rng = np.random.default_rng([seed, 99])
    state = {}

    def policy(t, th, r_prev):
        if t % switch_every == 0 or "level" not in state:
            state["level"] = rng.uniform(0.0, 1.0, size=th.shape[0])
        return state["level"]

    return policy


FAMILIES = ("gas", "static", "adaptive", "random", "greedy")


def _adaptive_runs(n, opt, phy, stages, gamma_multiplier):
    from .harness import simulate

    out = {}
    for cls in (Adaptive1, Adaptive2, Adaptive3):
        strategies = [cls()] + [Gas() for _ in range(n - 1)]
        res = simulate(strategies, phy, stages, "meanfield", gamma_multiplier=gamma_multiplier, record=False)
        out[cls.kind] = res.summary["mean_throughput_bps"][0]
    return out


def check_no_selfish_gain(n: int, families=FAMILIES, horizon: int = 10_000, phy: PhyProfile = DEFAULT_PHY, eps: float = 0.01,
                          seed: int = 0, cw_space=range(1, 1024), random_sequences: int = 20, subgame_histories: int = 0,
                          greedy_grid: float = 1e-3, subgame_greedy_grid: float = 1e-3, gamma_multiplier: float = 1.0) -> CheckResult:
    """Long-run average deviator throughput <= r_opt (1 + eps), averaged from stage 0.

    Families: GAS itself, every static CW in ``cw_space``, Adaptive 1-3,
    random piecewise-constant tau sequences and greedy best responses (one
    stage, and one stage of lookahead). With ``subgame_histories``, static
    and greedy deviations are replayed from random honest states.
    """
    opt = optimal_point(n, phy)
    gamma = gamma_multiplier * opt.gamma_default
    bound = opt.r_opt * (1.0 + eps)
    results = {}
    tau0 = np.full(n, opt.tau_opt)

    def stat_batch(cws, start):
        cws = np.asarray(list(cws), dtype=float)
        k = len(cws)
        init = np.broadcast_to(start, (k, n)).copy()
        fixed = np.zeros((k, n))
        fixed[:, 0] = 2.0 / (cws + 1.0)
        active = np.ones((k, n), bool)
        active[:, 0] = False
        _, mean_r = run_meanfield(init, opt, phy, gamma, horizon, active=active, fixed=fixed, record=False)
        return mean_r[:, 0]

    if "gas" in families:
        _, mean_r = run_meanfield(tau0[None, :], opt, phy, gamma, horizon, record=False)
        results["gas"] = [float(mean_r[0, 0])]
    if "static" in families:
        results["static"] = stat_batch(cw_space, tau0).tolist()
    if "adaptive" in families:
        results["adaptive"] = list(_adaptive_runs(n, opt, phy, horizon, gamma_multiplier).values())
    if "random" in families:
        start = np.broadcast_to(tau0, (random_sequences, n))
        results["random"] = _time_varying(opt, phy, gamma, horizon, start, random_policy(seed)).tolist()
    if "greedy" in families:
        g1 = _time_varying(opt, phy, gamma, horizon, tau0[None, :], greedy_policy(opt, phy, greedy_grid))
        g2 = _time_varying(opt, phy, gamma, horizon, tau0[None, :], greedy_policy(opt, phy, greedy_grid, True, gamma))
        results["greedy"] = [float(g1[0]), float(g2[0])]
    subgame = {}
    if subgame_histories:
        rng = np.random.default_rng([seed, n, 3])
        starts = rng.uniform(opt.tau_opt / 2.0, 1.0, size=(subgame_histories, n))
        coarse = sorted({1, 2, 3, 4, 6, 8, 12, 16, 24, 32, 48, 64, 96, 128, 256, 512, 1023, int(round(opt.cw_opt))})
        k = len(coarse)
        init = np.repeat(starts, k, axis=0)
        fixed = np.zeros_like(init)
        fixed[:, 0] = np.tile(2.0 / (np.asarray(coarse, float) + 1.0), subgame_histories)
        active = np.ones(init.shape, bool)
        active[:, 0] = False
        _, mean_r = run_meanfield(init, opt, phy, gamma, horizon, active=active, fixed=fixed, record=False)
        worst_static = mean_r[:, 0].reshape(subgame_histories, k).max(axis=1)
        g = _time_varying(opt, phy, gamma, horizon, starts, greedy_policy(opt, phy, subgame_greedy_grid))
        subgame = {"static_max": worst_static.tolist(), "greedy": g.tolist()}
        results["subgame"] = worst_static.tolist() + g.tolist()
    parts = []
    per_family = {}
    for fam, vals in results.items():
        vals = np.asarray(vals, dtype=float)
        margin = bound - vals
        parts.append((len(vals), int((margin < 0).sum()), float(margin.min())))
        per_family[fam] = {"max_ratio": float(vals.max() / opt.r_opt), "violations": int((margin < 0).sum()), "samples": len(vals)}
    slack = finite_horizon_slack(opt, gamma, horizon)
    return _merge("no_selfish_gain", parts,
                  {"n": n, "families": list(families), "horizon": horizon, "eps": eps, "seed": seed,
                   "subgame_histories": subgame_histories, "gamma": gamma},
                  {"per_family": per_family, "r_opt": opt.r_opt, "finite_horizon_slack_bps": slack,
                   "finite_horizon_slack_ratio": slack / opt.r_opt, "eps_bps": eps * opt.r_opt, "subgame": subgame})


# --- empirical ceiling on the gain --------------------------------------------------------


def stability_boundary(n: int, multipliers=(0.5, 1, 2, 4, 8, 16, 32), starts: int = 20, stages: int = 2000,
                       phy: PhyProfile = DEFAULT_PHY, seed: int = 0) -> dict:
    """Descent violation counts against gamma / gamma_max, for locating where stability is lost."""
    opt = optimal_point(n, phy)
    rows = []
    for k in multipliers:
        res = check_lyapunov_descent(n, starts, k * opt.gamma_max, stages, phy, seed)
        rows.append({"gamma_over_max": k, "violations": res.violations, "first_violation_stage": res.extra["first_violation_stage"]})
    return {"n": n, "gamma_max": opt.gamma_max, "gamma_max_theorem": opt.gamma_max_theorem, "rows": rows}


def default_suite(quick: bool = False, phy: PhyProfile = DEFAULT_PHY) -> list[CheckResult]:
    """The checks run by ``verify``; ``quick`` shrinks sample counts."""
    s = 10_000 if quick else 100_000
    out = []
    for n in (2, 3, 5, 10):
        opt = optimal_point(n, phy)
        out.append(check_theorem1_bound(n, [0.1 * opt.tau_opt, 0.5 * opt.tau_opt], s, phy))
    out.append(check_lemma_equal_elements(3, (1.0 - 0.15) ** 3, (0.1, 0.4), 1e-3, phy))
    out.append(check_lemma_equal_elements(2, (1.0 - 0.2) ** 2, (0.1, 0.4), 1e-4 if quick else 1e-5, phy))
    opt10 = optimal_point(10, phy)
    out.append(check_boundary_minimizer(10, (opt10.tau_opt / 2, 2 * opt10.tau_opt), 1e-5, phy))
    out.append(check_boundary_minimizer(2, (0.01, 0.99), 1e-5, phy))
    for n in (2, 5, 10, 20):
        out.append(check_lyapunov_descent(n, 20 if quick else 100, None, 2000 if quick else 10_000, phy, below_floor=10))
    out.append(check_no_selfish_gain(10, ("gas", "static", "adaptive", "greedy"), 2000 if quick else 10_000, phy,
                                     cw_space=range(1, 1024, 8 if quick else 1)))
    return out
