"""Stage loop, replication and output writers."""

from __future__ import annotations

import copy
import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from . import __version__
from .analytic import OptimalPoint, solve_nonsaturated, station_throughputs
from .engine import EdcaEngine, EdcaParams, StageReport
from .gas import clamp, update_taus
from .phy import PhyProfile, stage_count
from .scenario import ScenarioSpec, parse_scenario
from .strategies import Gas, Strategy, SweepResult, best_static_cw, operating_point, reference_loads

CSV_COLUMNS = ("stage", "time_s", "station", "tau", "tau_hat", "cw", "throughput_bps")


@dataclass
class RunOutput:
    name: str
    seed: int
    fidelity: str
    opt: OptimalPoint
    gamma: float
    time_s: np.ndarray  # (stages,) start of each stage
    tau: np.ndarray  # (stages, n)
    tau_hat: np.ndarray
    cw: np.ndarray
    throughput: np.ndarray
    summary: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    @property
    def stages(self) -> int:
        return self.time_s.shape[0]

    @property
    def n(self) -> int:
        return self.tau.shape[1]


@dataclass
class Aggregate:
    runs: list
    summary: dict
    metadata: dict = field(default_factory=dict)


def _failure_fraction(bursts, n, t0, t1):
    frac = np.zeros(n)
    for station, start, duration in bursts:
        overlap = min(t1, start + duration) - max(t0, start)
        if overlap > 0:
            frac[station] = min(1.0, frac[station] + overlap / (t1 - t0))
    return frac


def simulate(
    strategies: list[Strategy],
    phy: PhyProfile,
    stages: int,
    fidelity: str = "meanfield",
    seed: int = 0,
    gamma_multiplier: float = 1.0,
    perturbations=(),
    average_from: int = 0,
    record: bool = True,
    name: str = "run",
) -> RunOutput:
    """Drive the stations through ``stages`` beacon intervals.

    GAS stations are advanced together with the vectorised update law;
    every other strategy decides from the same stage report.
    """
    if fidelity not in ("meanfield", "slot"):
        raise ValueError(f"fidelity must be 'meanfield' or 'slot', got {fidelity!r}")
    n = len(strategies)
    if n < 2 and any(s.plays_gas(0.0) or getattr(s, "switch_time_s", 0.0) > 0 for s in strategies):
        raise ValueError("GAS stations need n >= 2 (gain ceiling undefined)")
    opt = operating_point(strategies, phy)
    gamma = gamma_multiplier * opt.gamma_default
    saturated = np.array([s.saturated for s in strategies])
    mixed = not saturated.all()
    peers = saturated if mixed else None
    peer_set = {i for i in range(n) if saturated[i]} if mixed else None
    loads = np.full(n, np.nan)
    if mixed:
        loads[~saturated] = reference_loads(strategies, phy)
    for i, s in enumerate(strategies):
        s.reset(i, opt, gamma, n, peer_set)
    tau = np.array([s.tau_init if isinstance(s, Gas) and s.tau_init is not None else opt.tau_opt for s in strategies])
    floor = opt.tau_opt / 2.0

    rec_tau = np.zeros((stages, n)) if record else None
    rec_hat = np.zeros((stages, n)) if record else None
    rec_r = np.zeros((stages, n)) if record else None
    times = np.zeros(stages)
    acc = np.zeros(n)

    def params_for(gas_now, th):
        return [EdcaParams(cw_min=2.0 / th[i] - 1.0, persistent=True) if gas_now[i] else s.params()
                for i, s in enumerate(strategies)]

    engine = None
    bursts = [(p[0], p[1], p[2]) for p in perturbations]
    now = 0.0
    for t in range(stages):
        gas_now = np.array([s.plays_gas(now) for s in strategies])
        th_gas = clamp(tau, floor)
        if fidelity == "meanfield":
            params = params_for(gas_now, th_gas)
            th = np.empty(n)
            for i, p in enumerate(params):
                if not gas_now[i] and not p.is_target:
                    raise ValueError(f"station {i}: mean-field mode models only m=0, no extra AIFS, TXOP=1; use slot fidelity")
                th[i] = th_gas[i] if gas_now[i] else p.tau
            if mixed:
                th = solve_nonsaturated(th, loads, np.where(saturated, 1.0, th), phy)
            r = station_throughputs(th, phy)
            if bursts:
                r = r * (1.0 - _failure_fraction(bursts, n, now, now + phy.T_beacon))
            report = StageReport(r, t, phy.T_beacon, 0)
        else:
            if engine is None:
                engine = EdcaEngine(phy, params_for(gas_now, th_gas), seed=seed,
                                    offered_rates=[None if not mixed or saturated[i] else loads[i] for i in range(n)])
                for b in bursts:
                    engine.inject_error_burst(*b)
            else:
                gas_idx = np.flatnonzero(gas_now)
                engine.set_persistent_taus(gas_idx, th_gas[gas_idx])
                for i in np.flatnonzero(~gas_now):
                    engine.apply(i, strategies[i].params())
            report = engine.run_stage()
            th = engine.tau.copy()
            r = report.throughputs
        times[t] = now
        if record:
            rec_tau[t] = np.where(gas_now, tau, th)
            rec_hat[t] = th
            rec_r[t] = r
        if t >= average_from:
            acc += r
        for i, s in enumerate(strategies):
            if not gas_now[i]:
                s.decide(report, opt)
        if gas_now.any():
            tau = update_taus(tau, r, opt, gamma, active=gas_now, peers=peers, exclude_lower=mixed)
        now = now + report.duration if fidelity == "slot" else (t + 1) * phy.T_beacon

    mean_r = acc / max(stages - average_from, 1)
    summary = {
        "mean_throughput_bps": mean_r.tolist(),
        "average_from_stage": average_from,
        "r_opt": opt.r_opt,
        "final_tau": tau.tolist(),
    }
    if engine is not None:
        summary["slots"] = int(engine.stats[0])
    empty = np.zeros((0, n))
    return RunOutput(
        name, seed, fidelity, opt, gamma, times,
        rec_tau if record else empty, rec_hat if record else empty,
        (2.0 / rec_hat - 1.0) if record else empty, rec_r if record else empty,
        summary,
    )


def run(spec: ScenarioSpec, seed: int | None = None, fidelity: str | None = None, record: bool = True) -> RunOutput:
    """Execute one scenario. ``seed``/``fidelity`` override the file without mutating it."""
    seed = spec.seed if seed is None else seed
    fidelity = fidelity or spec.fidelity
    phy = spec.build_phy()
    stages = stage_count(spec.duration, phy)
    avg = min(int(round(spec.summary_from_s / phy.T_beacon)), stages - 1)
    out = simulate(
        spec.build_strategies(), phy, stages, fidelity, seed, spec.gamma_multiplier,
        [(p.station, p.start, p.duration) for p in spec.perturbations], avg, record, spec.name,
    )
    out.metadata = {
        "scenario": spec.to_dict(),
        "seed": seed,
        "fidelity": fidelity,
        "version": __version__,
        "stages": stages,
    }
    return out


def _ci95(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    k = values.shape[0]
    if k < 2:
        z = np.zeros(values.shape[1:])
        return z, z
    sd = values.std(axis=0, ddof=1)
    return sd, stats.t.ppf(0.975, k - 1) * sd / math.sqrt(k)


def _aggregate(means: np.ndarray) -> dict:
    sd, ci = _ci95(means)
    return {"mean": means.mean(axis=0), "stddev": sd, "ci95": ci, "replications": means.shape[0]}


def replicate(spec: ScenarioSpec, replications: int, seed: int | None = None, fidelity: str | None = None, record: bool = True) -> Aggregate:
    """Runs with seeds seed, seed+1, ...; summary holds mean, stddev and 95% CI half-width per station."""
    if replications < 1:
        raise ValueError(f"replications must be >= 1, got {replications}")
    base = spec.seed if seed is None else seed
    runs = [run(spec, base + k, fidelity, record) for k in range(replications)]
    means = np.array([r.summary["mean_throughput_bps"] for r in runs])
    agg = _aggregate(means)
    summary = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in agg.items()}
    summary["r_opt"] = runs[0].opt.r_opt
    meta = dict(runs[0].metadata)
    meta["replications"] = replications
    return Aggregate(runs, summary, meta)


def replicate_stations(strategies, phy, stages, fidelity, seed, replications, gamma_multiplier=1.0, average_from=0, perturbations=()) -> dict:
    """Replication over a prepared strategy list; copies are used so the list is never consumed."""
    means = []
    for k in range(replications):
        out = simulate(copy.deepcopy(strategies), phy, stages, fidelity, seed + k, gamma_multiplier,
                       perturbations, average_from, record=False)
        means.append(out.summary["mean_throughput_bps"])
    return _aggregate(np.array(means))


# --- writers ----------------------------------------------------------------------


def _rows(output: RunOutput):
    # unrecorded runs keep stage times but no series
    for t in range(output.tau.shape[0]):
        for i in range(output.n):
            yield (t, output.time_s[t], i, output.tau[t, i], output.tau_hat[t, i], output.cw[t, i], output.throughput[t, i])


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def to_csv(output: RunOutput) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in _rows(output):
        w.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, np.generic):
        return x.item()
    return x


def to_json_dict(output) -> dict:
    if isinstance(output, Aggregate):
        return _jsonable({
            "metadata": output.metadata,
            "summary": output.summary,
            "runs": [to_json_dict(r) for r in output.runs],
        })
    series = [dict(zip(CSV_COLUMNS, (int(a), float(b), int(c), float(d), float(e), float(f), float(g))))
              for a, b, c, d, e, f, g in _rows(output)]
    return _jsonable({
        "metadata": output.metadata,
        "optimal_point": output.opt.to_dict(),
        "gamma": output.gamma,
        "summary": output.summary,
        "series": series,
    })


def to_json(output) -> str:
    return json.dumps(to_json_dict(output), indent=1, sort_keys=True) + "\n"


def summary_csv(agg: Aggregate) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("station", "mean_bps", "stddev_bps", "ci95_bps", "replications"))
    for i, (m, s, c) in enumerate(zip(agg.summary["mean"], agg.summary["stddev"], agg.summary["ci95"])):
        w.writerow((i, _fmt(m), _fmt(s), _fmt(c), agg.summary["replications"]))
    return buf.getvalue()


def emit(output, fmt: str, path=None) -> str:
    """Render as csv|json; write to ``path`` when given. Returns the text."""
    if fmt == "csv":
        text = summary_csv(output) if isinstance(output, Aggregate) else to_csv(output)
    elif fmt == "json":
        text = to_json(output)
    else:
        raise ValueError(f"format must be 'csv' or 'json', got {fmt!r}")
    if path is not None and str(path) != "-":
        p = Path(path)
        try:
            if p.parent and not p.parent.exists():
                p.parent.mkdir(parents=True, exist_ok=True)
            p.write_text(text)
        except OSError as e:
            raise OSError(f"cannot write output {p}: {e.strerror or e}") from e
    return text


def replay(metadata: dict, record: bool = True) -> RunOutput:
    """Re-run the scenario echoed in an emitted JSON metadata block."""
    spec = parse_scenario(metadata["scenario"], "metadata")
    return run(spec, seed=metadata["seed"], fidelity=metadata["fidelity"], record=record)


# --- sweeps -----------------------------------------------------------------------


def sweep_rows(results: list[SweepResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("n", "m", "aifs_slots", "txop_packets", "cw", "role", "throughput_bps"))
    for res in results:
        n = res.extra.get("n", "")
        for row in res.rows():
            w.writerow((n, res.m, res.aifs_slots, res.txop_packets, _fmt(row["cw"]), row["role"], _fmt(row["throughput_bps"])))
    return buf.getvalue()


def refined_best_cw(strategies, phy, fidelity, m, aifs_slots, txop_packets, coarse, warmup, measure, seed, replications,
                    gamma_multiplier=1.0, coarse_measure=None):
    """Coarse pass, local integer refinement, then a fresh-seed confirmation of the winner.

    The confirmation uses new seeds so the reported value is not biased
    upwards by having picked the luckiest candidate.
    """
    n = len(strategies)
    honest = strategies[1:]
    kw = dict(phy=phy, fidelity=fidelity, m=m, aifs_slots=aifs_slots, txop_packets=txop_packets,
              warmup=warmup, measure=measure, seed=seed, gamma_multiplier=gamma_multiplier)
    first = best_static_cw(n, honest, coarse, **{**kw, "measure": coarse_measure or measure})
    c = first.cw
    lo, hi = max(1, int(c / 1.4)), int(math.ceil(c * 1.4))
    step = max(1, (hi - lo) // 4)
    short = coarse_measure is not None and coarse_measure < measure
    fine = set(range(lo, hi + 1, step))
    # a shortened coarse pass is only used to place the window; the winner is re-measured at full length
    fine = sorted(fine | {c} if short else fine - {int(x) for x in coarse})
    curve = [row for row in first.curve if not (short and row[0] == c)]
    pool = [] if short else list(first.curve)
    if fine:
        second = best_static_cw(n, honest, fine, **kw)
        curve += second.curve
        pool += second.curve
    curve.sort(key=lambda row: row[0])
    best = max(pool, key=lambda row: (row[1], row[0]))
    confirm_seed = seed + 10_000
    agg = best_static_cw(n, honest, [best[0]], **{**kw, "seed": confirm_seed}, replications=replications)
    res = SweepResult(best[0], agg.throughput, curve, m, aifs_slots, txop_packets,
                      {"search_throughput": best[1], "ci95": agg.curve[0][3], "replications": replications,
                       "confirm_seed": confirm_seed, "n": n, **agg.extra})
    return res


def run_sweep(spec: ScenarioSpec, seed: int | None = None, fidelity: str | None = None, replications: int | None = None) -> list[SweepResult]:
    if spec.sweep is None:
        raise ValueError(f"scenario {spec.name!r} has no sweep block")
    sw = spec.sweep
    seed = spec.seed if seed is None else seed
    fidelity = fidelity or spec.fidelity
    reps = replications or sw.replications
    phy = spec.build_phy()
    strategies = spec.build_strategies()
    out = []
    for m in sw.m:
        for a in sw.aifs_slots:
            for k in sw.txop_packets:
                if sw.refine and fidelity == "slot":
                    res = refined_best_cw(strategies, phy, fidelity, m, a, k, sw.search, sw.warmup, sw.measure, seed, reps,
                                          spec.gamma_multiplier, sw.coarse_measure)
                else:
                    res = best_static_cw(spec.n, strategies[1:], sw.search, phy, fidelity, m, a, k, sw.warmup, sw.measure,
                                         spec.gamma_multiplier, seed, reps)
                    res.extra["n"] = spec.n
                out.append(res)
    return out
