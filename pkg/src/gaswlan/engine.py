"""Slot-synchronous EDCA contention among n stations.

The channel is a sequence of virtual slots: an idle slot lasts ``T_e``, a
success or collision lasts ``T_t`` (``k * T_t`` for a TXOP burst of k
frames). Two access disciplines coexist:

* persistent: the station transmits in every slot with probability
  ``2 / (CW + 1)``, independently of the past. GAS stations use this, since
  their window is real-valued and their analysis is written in terms of the
  attempt probability.
* backoff: the 802.11e procedure with an integer counter drawn uniformly
  from ``{0, ..., ceil(CW) - 1}``, decremented on idle slots only and
  frozen while the medium is busy, window doubling up to ``2**m * CW_min``
  on failure, reset on success or when the retry limit drops the frame,
  and ``aifs_slots`` extra idle slots to sit out after every busy slot.

The inner loop is compiled with numba; all randomness comes from numba's
generator, reseeded at the start of each stage from ``(seed, stage)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .analytic import station_throughputs
from .phy import PhyProfile

IDLE, SUCCESS, COLLISION = 0, 1, 2
TRACE_COLUMNS = 5  # kind, transmitter count, duration, first transmitter, slots in row


@dataclass(frozen=True)
class EdcaParams:
    cw_min: float
    m: int = 0
    aifs_slots: int = 0
    txop_packets: int = 1
    retry_limit: int = 7
    persistent: bool = False

    def __post_init__(self):
        if not self.cw_min >= 1.0:
            raise ValueError(f"cw_min must be >= 1, got {self.cw_min!r}")
        if self.m < 0:
            raise ValueError(f"backoff stage count m must be >= 0, got {self.m!r}")
        if self.aifs_slots < 0:
            raise ValueError(f"aifs_slots must be >= 0, got {self.aifs_slots!r}")
        if self.txop_packets < 1:
            raise ValueError(f"txop_packets must be >= 1, got {self.txop_packets!r}")
        if self.retry_limit < 1:
            raise ValueError(f"retry_limit must be >= 1, got {self.retry_limit!r}")

    @property
    def cw_max(self) -> float:
        return self.cw_min * 2**self.m

    @property
    def tau(self) -> float:
        """Attempt probability of the persistent equivalent, 2/(CW+1)."""
        return 2.0 / (self.cw_min + 1.0)

    @property
    def is_target(self) -> bool:
        return self.m == 0 and self.aifs_slots == 0 and self.txop_packets == 1


@dataclass
class StationRuntime:
    backoff_counter: int = 0
    backoff_stage: int = 0
    aifs_wait: int = 0
    retries: int = 0
    delivered_bits: float = 0.0
    saturated: bool = True
    offered_rate: float = 0.0
    queue: float = 0.0
    error_burst: tuple[float, float] | None = None


@dataclass(frozen=True)
class SlotOutcome:
    kind: str  # "idle" | "success" | "collision"
    duration: float
    stations: tuple[int, ...] = ()
    packets: int = 0


@dataclass(frozen=True)
class StageReport:
    throughputs: np.ndarray  # bits/s per station
    stage_index: int = 0
    duration: float = 0.1
    slots: int = 0
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "throughputs", np.asarray(self.throughputs, dtype=float))

    @property
    def n(self) -> int:
        return self.throughputs.shape[-1]


# --- compiled core -------------------------------------------------------------


@numba.njit(cache=True)
def _draw(cw):
    return int(np.random.random() * math.ceil(cw))


@numba.njit(cache=True)
def _seed(seed):
    np.random.seed(seed)


@numba.njit(cache=True)
def _sample_draws(seed, cw, count):
    np.random.seed(seed)
    out = np.empty(count, np.int64)
    for k in range(count):
        out[k] = _draw(cw)
    return out


@numba.njit(cache=True)
def _fail(i, cw_min, m, retry_limit, saturated, counter, bstage, retries, queue, stats):
    retries[i] += 1
    if retries[i] >= retry_limit[i]:
        retries[i] = 0
        bstage[i] = 0
        stats[5] += 1
        if not saturated[i]:
            queue[i] -= 1.0
    elif bstage[i] < m[i]:
        bstage[i] += 1
    counter[i] = _draw(cw_min[i] * 2.0 ** bstage[i])


@numba.njit(cache=True)
def _slot_kernel(
    seed, budget, t0, T_e, T_t, l,
    persistent, tau, cw_min, m, aifs, txop, retry_limit, saturated, offered,
    counter, bstage, aifs_wait, retries, queue,
    b_station, b_start, b_end,
    delivered, stats, trace,
):
    np.random.seed(seed)
    n = tau.shape[0]
    tx = np.zeros(n, np.bool_)
    elapsed = 0.0
    slots = 0
    nb = b_station.shape[0]
    max_trace = trace.shape[0]
    while elapsed < budget:
        now = t0 + elapsed
        ntx = 0
        who = -1
        for i in range(n):
            tx[i] = False
            if not saturated[i] and queue[i] < 1.0:
                continue
            if aifs_wait[i] > 0:
                continue
            if persistent[i]:
                if np.random.random() < tau[i]:
                    tx[i] = True
            elif counter[i] == 0:
                tx[i] = True
            if tx[i]:
                ntx += 1
                if who < 0:
                    who = i
        if ntx == 0:
            dur = T_e
            stats[1] += 1
            for i in range(n):
                if aifs_wait[i] > 0:
                    aifs_wait[i] -= 1
                elif not persistent[i] and (saturated[i] or queue[i] >= 1.0) and counter[i] > 0:
                    counter[i] -= 1
        else:
            dur = T_t
            if ntx == 1:
                failed = False
                for b in range(nb):
                    if b_station[b] == who and b_start[b] <= now and now < b_end[b]:
                        failed = True
                if failed:
                    stats[4] += 1
                    _fail(who, cw_min, m, retry_limit, saturated, counter, bstage, retries, queue, stats)
                else:
                    k = txop[who]
                    if not saturated[who]:
                        k = min(k, int(queue[who]))
                        queue[who] -= k
                    dur = k * T_t
                    delivered[who] += k * l
                    stats[2] += 1
                    retries[who] = 0
                    bstage[who] = 0
                    counter[who] = _draw(cw_min[who])
            else:
                stats[3] += 1
                for i in range(n):
                    if tx[i]:
                        _fail(i, cw_min, m, retry_limit, saturated, counter, bstage, retries, queue, stats)
            for i in range(n):
                aifs_wait[i] = aifs[i]
        for i in range(n):
            if not saturated[i]:
                queue[i] += offered[i] * dur / l
        if slots < max_trace:
            trace[slots, 0] = 0 if ntx == 0 else (1 if ntx == 1 else 2)
            trace[slots, 1] = ntx
            trace[slots, 2] = dur
            trace[slots, 3] = who
            trace[slots, 4] = 1
            for i in range(n):
                trace[slots, TRACE_COLUMNS + i] = counter[i]
        elapsed += dur
        slots += 1
    stats[0] += slots
    stats[6] += slots
    return elapsed


@numba.njit(cache=True)
def _busy_slot(
    tx, ntx, who, now, T_t, l, cw_min, m, aifs, txop, retry_limit, saturated,
    counter, bstage, aifs_wait, retries, queue, b_station, b_start, b_end, delivered, stats,
):
    n = tx.shape[0]
    dur = T_t
    if ntx == 1:
        failed = False
        for b in range(b_station.shape[0]):
            if b_station[b] == who and b_start[b] <= now and now < b_end[b]:
                failed = True
        if failed:
            stats[4] += 1
            _fail(who, cw_min, m, retry_limit, saturated, counter, bstage, retries, queue, stats)
        else:
            k = txop[who]
            if not saturated[who]:
                k = min(k, int(queue[who]))
                queue[who] -= k
            dur = k * T_t
            delivered[who] += k * l
            stats[2] += 1
            retries[who] = 0
            bstage[who] = 0
            counter[who] = _draw(cw_min[who])
    else:
        stats[3] += 1
        for i in range(n):
            if tx[i]:
                _fail(i, cw_min, m, retry_limit, saturated, counter, bstage, retries, queue, stats)
    for i in range(n):
        aifs_wait[i] = aifs[i]
    return dur


@numba.njit(cache=True)
def _stage_kernel(
    seed, budget, t0, T_e, T_t, l,
    persistent, tau, cw_min, m, aifs, txop, retry_limit, saturated, offered,
    counter, bstage, aifs_wait, retries, queue,
    b_station, b_start, b_end,
    delivered, stats, trace,
):
    """Event-driven equivalent of :func:`_slot_kernel`.

    Runs of idle slots are skipped in one step: the persistent stations'
    silence is geometric, cut short by the next backoff expiry, AIFS expiry,
    queue refill or stage deadline. When the run ends in a persistent
    transmission, the transmitter set is drawn conditioned on being
    non-empty. Memorylessness makes this exact.
    """
    np.random.seed(seed)
    n = tau.shape[0]
    tx = np.zeros(n, np.bool_)
    elapsed = 0.0
    slots = 0
    rows = 0
    events = 0
    max_trace = trace.shape[0]
    big = 1 << 62
    while elapsed < budget:
        q = 1.0
        kb = big
        ka = big
        kq = big
        for i in range(n):
            active = saturated[i] or queue[i] >= 1.0
            if not active:
                if offered[i] > 0.0:
                    need = int(math.ceil((1.0 - queue[i]) * l / (offered[i] * T_e) - 1e-9))
                    kq = min(kq, max(need, 1))
                if aifs_wait[i] > 0:
                    ka = min(ka, aifs_wait[i])
                continue
            if aifs_wait[i] > 0:
                ka = min(ka, aifs_wait[i])
            elif persistent[i]:
                q *= 1.0 - tau[i]
            else:
                kb = min(kb, counter[i])
        left = int(math.ceil((budget - elapsed) / T_e - 1e-12))
        if left < 1:
            left = 1
        if kb == 0:
            g = 0
            conditional = False
        else:
            if q >= 1.0:
                g = big
            elif q <= 0.0:
                g = 0
            else:
                u = 1.0 - np.random.random()
                g = int(math.log(u) / math.log(q))
            lim = min(kb, ka, kq, left)
            if g >= lim:
                run = lim
                # idle run with no transmission at its end
                for i in range(n):
                    if aifs_wait[i] > 0:
                        aifs_wait[i] -= run
                    elif not persistent[i] and (saturated[i] or queue[i] >= 1.0):
                        counter[i] -= run
                    if not saturated[i]:
                        queue[i] += offered[i] * run * T_e / l
                elapsed += run * T_e
                slots += run
                stats[1] += run
                events += 1
                if rows < max_trace:
                    trace[rows, 0] = 0
                    trace[rows, 1] = 0
                    trace[rows, 2] = run * T_e
                    trace[rows, 3] = -1
                    trace[rows, 4] = run
                    for i in range(n):
                        trace[rows, TRACE_COLUMNS + i] = counter[i]
                    rows += 1
                continue
            conditional = True
        if g > 0:
            for i in range(n):
                if aifs_wait[i] > 0:
                    aifs_wait[i] -= g
                elif not persistent[i] and (saturated[i] or queue[i] >= 1.0):
                    counter[i] -= g
                if not saturated[i]:
                    queue[i] += offered[i] * g * T_e / l
            elapsed += g * T_e
            slots += g
            stats[1] += g
            if rows < max_trace:
                trace[rows, 0] = 0
                trace[rows, 1] = 0
                trace[rows, 2] = g * T_e
                trace[rows, 3] = -1
                trace[rows, 4] = g
                for i in range(n):
                    trace[rows, TRACE_COLUMNS + i] = counter[i]
                rows += 1
        # transmission slot
        now = t0 + elapsed
        ntx = 0
        who = -1
        rest = q  # silence probability of the persistent stations not yet visited
        for i in range(n):
            tx[i] = False
            if not (saturated[i] or queue[i] >= 1.0) or aifs_wait[i] > 0:
                continue
            if persistent[i]:
                p = tau[i]
                if conditional and ntx == 0:
                    rest_after = rest / (1.0 - tau[i]) if tau[i] < 1.0 else 0.0
                    p = tau[i] / (1.0 - rest) if rest < 1.0 else 1.0
                    rest = rest_after
                if np.random.random() < p:
                    tx[i] = True
            elif counter[i] == 0:
                tx[i] = True
            if tx[i]:
                ntx += 1
                if who < 0:
                    who = i
        if ntx == 0:
            # only reachable without conditioning: every candidate stayed silent
            for i in range(n):
                if aifs_wait[i] > 0:
                    aifs_wait[i] -= 1
                elif not persistent[i] and (saturated[i] or queue[i] >= 1.0) and counter[i] > 0:
                    counter[i] -= 1
                if not saturated[i]:
                    queue[i] += offered[i] * T_e / l
            dur = T_e
            stats[1] += 1
        else:
            dur = _busy_slot(tx, ntx, who, now, T_t, l, cw_min, m, aifs, txop, retry_limit, saturated,
                             counter, bstage, aifs_wait, retries, queue, b_station, b_start, b_end, delivered, stats)
            for i in range(n):
                if not saturated[i]:
                    queue[i] += offered[i] * dur / l
        if rows < max_trace:
            trace[rows, 0] = 0 if ntx == 0 else (1 if ntx == 1 else 2)
            trace[rows, 1] = ntx
            trace[rows, 2] = dur
            trace[rows, 3] = who
            trace[rows, 4] = 1
            for i in range(n):
                trace[rows, TRACE_COLUMNS + i] = counter[i]
            rows += 1
        elapsed += dur
        slots += 1
        events += 1
    stats[0] += slots
    stats[6] += rows
    return elapsed


KERNELS = {"event": _stage_kernel, "slot": _slot_kernel}


def sample_backoff_draws(cw: float, count: int, seed: int = 0) -> np.ndarray:
    """Backoff draws from the same routine the engine uses."""
    return _sample_draws(np.uint32(seed), float(cw), int(count))


_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def stage_seed(seed: int, stage: int) -> int:
    """32-bit generator seed for one stage, decorrelated across (seed, stage)."""
    return _splitmix64(_splitmix64(int(seed) & _MASK64) ^ int(stage)) & 0xFFFFFFFF


class EdcaEngine:
    """Owns the runtime of every station and advances the channel one stage at a time."""

    def __init__(self, phy: PhyProfile, params: list[EdcaParams], seed: int = 0, offered_rates=None, kernel: str = "event"):
        if kernel not in KERNELS:
            raise ValueError(f"kernel must be one of {sorted(KERNELS)}, got {kernel!r}")
        self.kernel = kernel
        self.phy = phy
        self.seed = int(seed)
        n = len(params)
        if n < 1:
            raise ValueError("engine needs at least one station")
        self.n = n
        self._rng = np.random.default_rng([self.seed, 0xED])
        self.persistent = np.zeros(n, np.bool_)
        self.tau = np.zeros(n)
        self.cw_min = np.ones(n)
        self.m = np.zeros(n, np.int64)
        self.aifs = np.zeros(n, np.int64)
        self.txop = np.ones(n, np.int64)
        self.retry_limit = np.full(n, 7, np.int64)
        self.saturated = np.ones(n, np.bool_)
        self.offered = np.zeros(n)
        if offered_rates is not None:
            for i, rate in enumerate(offered_rates):
                if rate is not None:
                    self.saturated[i] = False
                    self.offered[i] = float(rate)
        self.counter = np.zeros(n, np.int64)
        self.bstage = np.zeros(n, np.int64)
        self.aifs_wait = np.zeros(n, np.int64)
        self.retries = np.zeros(n, np.int64)
        self.queue = np.zeros(n)
        self.params: list[EdcaParams | None] = [None] * n
        self._direct = np.zeros(n, bool)
        self._no_trace = np.zeros((0, TRACE_COLUMNS + n))
        self._burst_key = -1
        self.bursts: list[tuple[int, float, float]] = []
        self.now = 0.0
        self.stage_index = 0
        self.stats = np.zeros(7, np.int64)
        for i, p in enumerate(params):
            self.set_params(i, p)
        self.aifs_wait[:] = self.aifs

    def set_params(self, i: int, p: EdcaParams) -> None:
        old = self.params[i]
        self.params[i] = p
        self._direct[i] = False
        self.persistent[i] = p.persistent
        self.tau[i] = p.tau
        self.cw_min[i] = p.cw_min
        self.m[i] = p.m
        self.aifs[i] = p.aifs_slots
        self.txop[i] = p.txop_packets
        self.retry_limit[i] = p.retry_limit
        entering_backoff = not p.persistent and (old is None or old.persistent)
        if entering_backoff:
            self.bstage[i] = 0
            self.retries[i] = 0
            self.counter[i] = int(self._rng.integers(0, math.ceil(p.cw_min)))
        elif p.persistent:
            self.counter[i] = 0
            self.bstage[i] = 0
        else:
            self.bstage[i] = min(self.bstage[i], p.m)

    def set_persistent_taus(self, idx, tau_hat) -> None:
        """Fast path for GAS stations: write attempt probabilities straight into the arrays."""
        idx = np.asarray(idx, np.int64)
        tau_hat = np.asarray(tau_hat, dtype=float)
        for i, t in zip(idx[~self.persistent[idx]], tau_hat[~self.persistent[idx]]):
            self.set_params(int(i), EdcaParams(cw_min=2.0 / t - 1.0, persistent=True))
        self.tau[idx] = tau_hat
        self.cw_min[idx] = 2.0 / tau_hat - 1.0
        self._direct[idx] = True

    def apply(self, i: int, p: EdcaParams) -> None:
        """Install ``p`` unless it is already in force."""
        if self._direct[i] or self.params[i] != p:
            self.set_params(i, p)

    def inject_error_burst(self, station: int, start: float, duration: float) -> None:
        if not 0 <= station < self.n:
            raise IndexError(f"station index {station} out of range for n={self.n}")
        if start < 0 or duration < 0:
            raise ValueError("burst start and duration must be non-negative")
        if duration > 0:
            self.bursts.append((int(station), float(start), float(start + duration)))

    def runtime(self, i: int) -> StationRuntime:
        burst = next(((s, e) for b, s, e in self.bursts if b == i), None)
        return StationRuntime(
            backoff_counter=int(self.counter[i]),
            backoff_stage=int(self.bstage[i]),
            aifs_wait=int(self.aifs_wait[i]),
            retries=int(self.retries[i]),
            saturated=bool(self.saturated[i]),
            offered_rate=float(self.offered[i]),
            queue=float(self.queue[i]),
            error_burst=burst,
        )

    def run_stage(self, trace_slots: int = 0) -> StageReport:
        """Simulate one beacon interval; the slot in progress at the deadline completes."""
        phy = self.phy
        delivered = np.zeros(self.n)
        stats = np.zeros(7, np.int64)
        trace = np.zeros((trace_slots, TRACE_COLUMNS + self.n)) if trace_slots else self._no_trace
        if self._burst_key != len(self.bursts):
            self._burst_arrays = (np.array([b[0] for b in self.bursts], np.int64),
                                  np.array([b[1] for b in self.bursts], float),
                                  np.array([b[2] for b in self.bursts], float))
            self._burst_key = len(self.bursts)
        bs, b0, b1 = self._burst_arrays
        elapsed = KERNELS[self.kernel](
            np.uint32(stage_seed(self.seed, self.stage_index)), phy.T_beacon, self.now, phy.T_e, phy.T_t, phy.l,
            self.persistent, self.tau, self.cw_min, self.m, self.aifs, self.txop, self.retry_limit,
            self.saturated, self.offered,
            self.counter, self.bstage, self.aifs_wait, self.retries, self.queue,
            bs, b0, b1, delivered, stats, trace,
        )
        self.stats += stats
        extra = {
            "start": self.now,
            "idle": int(stats[1]),
            "successes": int(stats[2]),
            "collisions": int(stats[3]),
            "burst_failures": int(stats[4]),
            "drops": int(stats[5]),
            "delivered_bits": delivered,
        }
        if trace_slots:
            extra["trace"] = trace[: min(trace_slots, int(stats[6]))]
        report = StageReport(delivered / elapsed, self.stage_index, elapsed, int(stats[0]), extra)
        self.now += elapsed
        self.stage_index += 1
        return report


def run_stage(stations, phy: PhyProfile, rng_seed: int) -> StageReport:
    """Functional form: one stage over ``(EdcaParams, StationRuntime)`` pairs.

    Runtimes are updated in place; ``rng_seed`` fully determines the stage.
    """
    params = [p for p, _ in stations]
    rts = [rt for _, rt in stations]
    eng = EdcaEngine(phy, params, seed=rng_seed, offered_rates=[None if rt.saturated else rt.offered_rate for rt in rts])
    for i, rt in enumerate(rts):
        eng.counter[i] = rt.backoff_counter
        eng.bstage[i] = rt.backoff_stage
        eng.aifs_wait[i] = rt.aifs_wait
        eng.retries[i] = rt.retries
        eng.queue[i] = rt.queue
        if rt.error_burst is not None:
            s, e = rt.error_burst
            eng.inject_error_burst(i, s, e - s)
    report = eng.run_stage()
    for i, rt in enumerate(rts):
        rt.backoff_counter = int(eng.counter[i])
        rt.backoff_stage = int(eng.bstage[i])
        rt.aifs_wait = int(eng.aifs_wait[i])
        rt.retries = int(eng.retries[i])
        rt.queue = float(eng.queue[i])
        rt.delivered_bits = float(report.extra["delivered_bits"][i])
    return report


def run_stage_meanfield(tau_hat, phy: PhyProfile, stage_index: int = 0, failing=None) -> StageReport:
    """Model throughputs used directly as the stage measurement.

    ``failing`` marks stations whose transmissions all fail this stage: they
    still occupy the channel but deliver nothing.
    """
    r = station_throughputs(tau_hat, phy)
    if failing is not None:
        r = np.where(np.asarray(failing, dtype=bool), 0.0, r)
    return StageReport(r, stage_index, phy.T_beacon, 0)


def decode_trace(trace: np.ndarray, phy: PhyProfile) -> list[SlotOutcome]:
    kinds = {IDLE: "idle", SUCCESS: "success", COLLISION: "collision"}
    out = []
    for row in trace:
        kind = int(row[0])
        who = int(row[3])
        if kind == IDLE:
            out.extend([SlotOutcome("idle", phy.T_e)] * int(row[4]))
            continue
        packets = int(round(row[2] / phy.T_t)) if kind == SUCCESS else 0
        out.append(SlotOutcome(kinds[kind], float(row[2]), (who,) if kind == SUCCESS else (), packets))
    return out
