"""Scenario files: YAML documents validated into :class:`ScenarioSpec`.

A file holds either one scenario, or ``defaults`` plus a ``scenarios``
list. Any scenario may carry a ``grid`` mapping top-level fields to value
lists; it expands into the cartesian product, with the values appended to
the name. Within ``stations``, ``count`` repeats an entry and
``count: rest`` fills up to ``n``. A ``cw_min`` of ``opt`` means CW_opt for
the scenario's station count.
"""

from __future__ import annotations

import itertools
from importlib import resources
from pathlib import Path
from typing import Annotated, Literal, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import strategies as st
from .analytic import optimal_point
from .phy import PhyProfile


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class PhySpec(_Model):
    """Either explicit timing constants or 802.11g construction parameters."""

    T_e: float | None = None
    T_t: float | None = None
    l: float | None = None
    T_beacon: float | None = None
    payload_bytes: int | None = None
    data_rate: float | None = None
    ack_rate: float | None = None

    def build(self) -> PhyProfile:
        g = {k: v for k, v in (("payload_bytes", self.payload_bytes), ("data_rate", self.data_rate), ("ack_rate", self.ack_rate)) if v is not None}
        base = PhyProfile.ieee80211g(**g)
        return base.with_overrides(T_e=self.T_e, T_t=self.T_t, l=self.l, T_beacon=self.T_beacon)


Count = Union[Annotated[int, Field(ge=1)], Literal["rest"]]


class GasSpec(_Model):
    kind: Literal["gas"]
    count: Count = 1
    tau_init: float | None = Field(default=None, gt=0)


class StaticSpec(_Model):
    kind: Literal["static"]
    count: Count = 1
    cw_min: Union[Annotated[float, Field(ge=1)], Literal["opt"]]
    m: int = Field(default=0, ge=0)
    aifs_slots: int = Field(default=0, ge=0)
    txop_packets: int = Field(default=1, ge=1)
    retry_limit: int = Field(default=7, ge=1)
    switch_time_s: float = Field(default=0.0, ge=0)
    discipline: Literal["backoff", "persistent"] = "backoff"


class AdaptiveSpec(_Model):
    kind: Literal["adaptive1", "adaptive2"]
    count: Count = 1
    period: int = Field(default=50, ge=1)
    switch_time_s: float = Field(default=0.0, ge=0)
    discipline: Literal["backoff", "persistent"] = "backoff"


class Adaptive3Spec(_Model):
    kind: Literal["adaptive3"]
    count: Count = 1
    cw_init: float | None = Field(default=None, ge=1)
    switch_time_s: float = Field(default=0.0, ge=0)
    discipline: Literal["backoff", "persistent"] = "backoff"


class NonSaturatedSpec(_Model):
    kind: Literal["nonsaturated"]
    count: Count = 1
    offered_rate: float | None = Field(default=None, gt=0)
    load_fraction: float | None = Field(default=None, gt=0)

    @model_validator(mode="after")
    def _one_load(self):
        if (self.offered_rate is None) == (self.load_fraction is None):
            raise ValueError("give exactly one of offered_rate or load_fraction")
        return self


StationSpec = Annotated[Union[GasSpec, StaticSpec, AdaptiveSpec, Adaptive3Spec, NonSaturatedSpec], Field(discriminator="kind")]


class Perturbation(_Model):
    station: int = Field(ge=0)
    start: float = Field(ge=0)
    duration: float = Field(ge=0)


class SweepSpec(_Model):
    """Best-static-response search; stations[1:] are the honest peers."""

    search: list[float] = Field(default_factory=lambda: [float(c) for c in range(1, 1024)])
    m: list[int] = [0]
    aifs_slots: list[int] = [0]
    txop_packets: list[int] = [1]
    warmup: int = Field(default=200, ge=0)
    measure: int = Field(default=1000, ge=1)
    replications: int = Field(default=1, ge=1)
    refine: bool = False
    coarse_measure: int | None = Field(default=None, ge=1)  # measure stages for the coarse pass of a refined search

    @field_validator("search", mode="before")
    @classmethod
    def _range(cls, v):
        if isinstance(v, dict):
            return [float(c) for c in range(int(v["start"]), int(v["stop"]) + 1, int(v.get("step", 1)))]
        return v

    @field_validator("search")
    @classmethod
    def _nonempty(cls, v):
        if not v:
            raise ValueError("search space is empty")
        if min(v) < 1:
            raise ValueError("contention windows must be >= 1")
        return v


SERIES = ("tau", "tau_hat", "cw", "throughput")


class ScenarioSpec(_Model):
    name: str
    n: int = Field(ge=1)
    phy: PhySpec = PhySpec()
    stations: list[StationSpec]
    duration: float = Field(gt=0)
    fidelity: Literal["meanfield", "slot"] = "meanfield"
    seed: int = 0
    gamma_multiplier: float = Field(default=1.0, gt=0)
    perturbations: list[Perturbation] = []
    outputs: list[Literal["tau", "tau_hat", "cw", "throughput"]] = list(SERIES)
    summary_from_s: float = Field(default=0.0, ge=0)
    sweep: SweepSpec | None = None

    @model_validator(mode="after")
    def _check(self):
        total = sum(s.count for s in self.stations if s.count != "rest")
        rests = sum(1 for s in self.stations if s.count == "rest")
        if rests > 1:
            raise ValueError("at most one station entry may use count: rest")
        if total + rests > self.n or (rests == 0 and total != self.n):
            raise ValueError(f"stations list expands to {total}{' + rest' if rests else ''} entries but n={self.n}")
        for p in self.perturbations:
            if p.station >= self.n:
                raise ValueError(f"perturbation targets station {p.station} but n={self.n}")
        if self.n < 2 and any(s.kind == "gas" for s in self.stations):
            raise ValueError("GAS stations need n >= 2 (gain ceiling undefined)")
        return self

    def build_phy(self) -> PhyProfile:
        return self.phy.build()

    def expanded_stations(self) -> list:
        total = sum(s.count for s in self.stations if s.count != "rest")
        out = []
        for s in self.stations:
            k = self.n - total if s.count == "rest" else s.count
            out.extend([s] * k)
        return out

    def build_strategies(self) -> list[st.Strategy]:
        phy = self.build_phy()
        cw_opt = None
        out = []
        for s in self.expanded_stations():
            d = s.model_dump(exclude={"count"}, exclude_none=True)
            if d.get("cw_min") == "opt":
                if cw_opt is None:
                    cw_opt = optimal_point(self.n, phy).cw_opt if self.n >= 2 else 1.0
                d["cw_min"] = cw_opt
            out.append(st.from_spec(d))
        return out

    def to_dict(self) -> dict:
        return self.model_dump(mode="json", exclude_defaults=False)


class ScenarioError(ValueError):
    """Schema violation; ``errors`` lists (field path, message) pairs."""

    def __init__(self, errors: list[tuple[str, str]], source: str = ""):
        self.errors = errors
        self.source = source
        where = f"{source}: " if source else ""
        super().__init__(where + "; ".join(f"{p}: {m}" for p, m in errors))

    def to_dict(self) -> dict:
        return {"error": "invalid scenario", "source": self.source, "fields": [{"path": p, "message": m} for p, m in self.errors]}


def _path(loc) -> str:
    out = ""
    for part in loc:
        if isinstance(part, int):
            out += f"[{part}]"
        else:
            out += ("." if out else "") + str(part)
    return out or "<root>"


def parse_scenario(data: dict, source: str = "", prefix: str = "") -> ScenarioSpec:
    try:
        return ScenarioSpec.model_validate(data)
    except ValidationError as e:
        errs = []
        for err in e.errors():
            loc = [x for x in err["loc"] if not (isinstance(x, str) and x in {"gas", "static", "adaptive1", "adaptive2", "adaptive3", "nonsaturated"})]
            errs.append((prefix + _path(loc), err["msg"]))
        raise ScenarioError(errs, source) from None


def _expand_grid(entry: dict) -> list[dict]:
    grid = entry.pop("grid", None)
    if not grid:
        return [entry]
    keys = list(grid)
    out = []
    for values in itertools.product(*(grid[k] for k in keys)):
        e = dict(entry)
        e.update(dict(zip(keys, values)))
        e["name"] = entry.get("name", "scenario") + "".join(f"_{k}{v}" for k, v in zip(keys, values))
        out.append(e)
    return out


def scenarios_from_document(doc, source: str = "") -> list[ScenarioSpec]:
    if not isinstance(doc, dict):
        raise ScenarioError([("<root>", "scenario document must be a mapping")], source)
    if "scenarios" in doc:
        defaults = doc.get("defaults") or {}
        extra = set(doc) - {"scenarios", "defaults"}
        if extra:
            raise ScenarioError([(k, "unexpected top-level key") for k in sorted(extra)], source)
        entries = []
        for i, e in enumerate(doc["scenarios"]):
            if not isinstance(e, dict):
                raise ScenarioError([(f"scenarios[{i}]", "entry must be a mapping")], source)
            entries.append((f"scenarios[{i}].", {**defaults, **e}))
    else:
        entries = [("", dict(doc))]
    out = []
    for prefix, e in entries:
        for x in _expand_grid(e):
            out.append(parse_scenario(x, source, prefix))
    return out


def load_scenarios(path) -> list[ScenarioSpec]:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise OSError(f"cannot read scenario file {p}: {e.strerror}") from e
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ScenarioError([("<root>", f"YAML parse error: {e}")], str(p)) from None
    return scenarios_from_document(doc, str(p))


def load_scenario(path) -> ScenarioSpec:
    specs = load_scenarios(path)
    if len(specs) != 1:
        raise ScenarioError([("scenarios", f"expected one scenario, file defines {len(specs)}")], str(path))
    return specs[0]


def bundled(name: str) -> Path:
    """Path of a scenario file shipped with the package (name without .yaml)."""
    p = resources.files("gaswlan") / "scenarios" / f"{name}.yaml"
    return Path(str(p))


def bundled_names() -> list[str]:
    d = resources.files("gaswlan") / "scenarios"
    return sorted(Path(str(f)).stem for f in d.iterdir() if str(f).endswith(".yaml"))


def json_schema() -> dict:
    return ScenarioSpec.model_json_schema()
