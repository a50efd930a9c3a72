"""Declarative KPI specs: weighted-index selection, metric computation over
telemetry datasets, and threshold decision rules."""

from __future__ import annotations

import math
import operator
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import yaml

from .telemetry import ALL, Dataset, UnknownMachineError, Window, count_events, format_timestamp, window_energy

LEVELS = ("unit", "process", "line", "plant")
DIMENSIONS = ("economic", "environmental", "social")
BINDING_TYPES = ("energy_per_part", "machine_share", "window_energy", "event_count", "manual_flow")
COMPARATORS: dict[str, Callable[[float, float], bool]] = {
    ">": operator.gt,
    ">=": operator.ge,
    "<": operator.lt,
    "<=": operator.le,
}
OUT_OF_SCOPE_SECTIONS = {
    "simulation": "simulation models",
    "control": "control actuation",
}
WEIGHT_TOLERANCE = 1e-9


class KpiError(Exception):
    pass


class SpecError(KpiError):
    pass


class WeightError(KpiError):
    pass


class MissingScoreError(KpiError):
    pass


class ZeroPartsError(KpiError):
    pass


class ZeroTotalError(KpiError):
    pass


class UnknownMetricError(KpiError):
    pass


class MissingDataError(KpiError):
    pass


# -- selection ------------------------------------------------------------------


@dataclass(frozen=True)
class KpiCandidateScore:
    candidate: str
    criteria: tuple[tuple[str, float, float], ...]
    index: float
    rank: int = 0


def rank_kpis(candidates: dict[str, dict[str, float]], weights: dict[str, float]) -> list[KpiCandidateScore]:
    """Weighted Index Method: index = sum(weight * score); highest first, ties by name."""
    if any(not 0.0 <= w <= 1.0 for w in weights.values()):
        raise WeightError("weights must lie in [0, 1]")
    if abs(math.fsum(weights.values()) - 1.0) > WEIGHT_TOLERANCE:
        raise WeightError(f"weights sum to {math.fsum(weights.values())!r}, not 1")
    scored = []
    for name, scores in candidates.items():
        missing = sorted(set(weights) - set(scores))
        if missing:
            raise MissingScoreError(f"{name!r} has no score for {', '.join(missing)}")
        criteria = tuple((c, weights[c], float(scores[c])) for c in sorted(weights))
        scored.append((name, criteria, math.fsum(w * s for _, w, s in criteria)))
    scored.sort(key=lambda x: (-x[2], x[0]))
    return [KpiCandidateScore(n, c, i, rank) for rank, (n, c, i) in enumerate(scored, start=1)]


# -- spec ------------------------------------------------------------------------


@dataclass(frozen=True)
class KpiDef:
    name: str
    objective: str = ""
    level: str = "line"
    dimension: str = "environmental"
    metrics: tuple[str, ...] = ()
    description: str = ""

    def __post_init__(self):
        if self.level not in LEVELS:
            raise SpecError(f"KPI {self.name!r}: level must be one of {LEVELS}")
        if self.dimension not in DIMENSIONS:
            raise SpecError(f"KPI {self.name!r}: dimension must be one of {DIMENSIONS}")


@dataclass(frozen=True)
class PartCount:
    machine: str
    event: str
    rule: str = "transitions"


@dataclass(frozen=True)
class Binding:
    metric: str
    type: str
    machines: tuple[str, ...] | None = None
    machine: str | None = None
    event: str | None = None
    rule: str = "transitions"
    parts: PartCount | None = None
    flow: str | None = None
    direction: str | None = None
    window: Window = ALL


@dataclass(frozen=True)
class DecisionRule:
    name: str
    metric: str
    comparator: str
    threshold: float

    def __post_init__(self):
        if self.comparator not in COMPARATORS:
            raise SpecError(f"rule {self.name!r}: comparator must be one of {sorted(COMPARATORS)}")


@dataclass(frozen=True)
class KpiSpec:
    goal: str = ""
    kpis: tuple[KpiDef, ...] = ()
    bindings: dict[str, Binding] = field(default_factory=dict)
    rules: tuple[DecisionRule, ...] = ()
    selection: dict | None = None
    requirements: tuple[tuple[str, str], ...] = ()
    out_of_scope: tuple[str, ...] = ()


def _binding(metric: str, data: dict) -> Binding:
    kind = data.get("type")
    if kind not in BINDING_TYPES:
        raise SpecError(f"binding {metric!r}: type must be one of {BINDING_TYPES}")
    parts = data.get("parts")
    machines = data.get("machines")
    b = Binding(
        metric=metric,
        type=kind,
        machines=tuple(machines) if machines else None,
        machine=data.get("machine"),
        event=data.get("event"),
        rule=data.get("rule", "transitions"),
        parts=PartCount(parts["machine"], parts["event"], parts.get("rule", "transitions")) if parts else None,
        flow=data.get("flow"),
        direction=data.get("direction"),
        window=Window.parse(data.get("window")),
    )
    needs = {
        "energy_per_part": ("parts",),
        "machine_share": ("machine",),
        "event_count": ("machine", "event"),
        "manual_flow": ("flow",),
        "window_energy": (),
    }[kind]
    for attr in needs:
        if getattr(b, attr) is None:
            raise SpecError(f"binding {metric!r} of type {kind} needs {attr!r}")
    return b


def parse_spec(data: dict | None) -> KpiSpec:
    data = data or {}
    kpis = []
    for k in data.get("kpis") or []:
        kpis.append(KpiDef(
            name=k["name"],
            objective=k.get("objective", ""),
            level=k.get("level", "line"),
            dimension=k.get("dimension", "environmental"),
            metrics=tuple(k.get("metrics") or ()),
            description=k.get("description", ""),
        ))
    bindings = {m: _binding(m, b) for m, b in (data.get("bindings") or {}).items()}
    for k in kpis:
        for m in k.metrics:
            if m not in bindings:
                raise SpecError(f"KPI {k.name!r} metric {m!r} has no binding")
    rules = tuple(
        DecisionRule(r["name"], r["metric"], r["comparator"], float(r["threshold"])) for r in data.get("rules") or []
    )
    defined = {m for k in kpis for m in k.metrics}
    for r in rules:
        if r.metric not in defined:
            raise UnknownMetricError(f"rule {r.name!r} refers to unknown metric {r.metric!r}")
    reqs = tuple((r["role"], r["attribute"]) for r in data.get("requirements") or [])
    return KpiSpec(
        goal=str(data.get("goal", "")),
        kpis=tuple(kpis),
        bindings=bindings,
        rules=rules,
        selection=data.get("selection"),
        requirements=reqs,
        out_of_scope=tuple(s for s in OUT_OF_SCOPE_SECTIONS if s in data),
    )


def load_spec(path: str | Path) -> KpiSpec:
    return parse_spec(yaml.safe_load(Path(path).read_text(encoding="utf-8")))


# -- metrics --------------------------------------------------------------------


@dataclass(frozen=True)
class EnergyPerPart:
    value: float
    rounded: float
    energy_kwh: float
    parts: int


def energy_per_part(dataset: Dataset, binding: Binding, window: Window | None = None) -> EnergyPerPart:
    """Window energy over the bound machines divided by the part count."""
    window = window or binding.window
    if binding.parts is None:
        raise SpecError(f"binding {binding.metric!r} has no part-count rule")
    parts = count_events(dataset, binding.parts.machine, binding.parts.event, binding.parts.rule, window)
    energy = window_energy(dataset, binding.machines, window).total
    if parts == 0:
        raise ZeroPartsError(f"no parts counted in window for {binding.metric!r}")
    value = energy / parts
    return EnergyPerPart(value, round(value, 4), energy, parts)


def machine_share(dataset: Dataset, window: Window = ALL, machines=None) -> dict[str, float]:
    w = window_energy(dataset, machines, window)
    if w.total <= 0:
        raise ZeroTotalError("total energy in window is zero")
    return {m: e / w.total for m, e in w.per_machine.items()}


@dataclass(frozen=True)
class Flag:
    rule: str
    metric: str
    value: float
    comparator: str
    threshold: float
    triggered: bool


def evaluate_flags(values: dict[str, float], rules: tuple[DecisionRule, ...] | list[DecisionRule]) -> list[Flag]:
    flags = []
    for r in rules:
        if r.metric not in values:
            raise UnknownMetricError(f"rule {r.name!r} refers to unknown metric {r.metric!r}")
        v = values[r.metric]
        flags.append(Flag(r.name, r.metric, v, r.comparator, r.threshold, COMPARATORS[r.comparator](v, r.threshold)))
    return flags


# -- pipeline ---------------------------------------------------------------------


@dataclass(frozen=True)
class MetricValue:
    value: float
    unit: str
    rounded: float | None = None
    details: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Finding:
    code: str
    metric: str
    message: str
    severity: str = "error"


@dataclass
class KpiResult:
    kpi: str
    metrics: dict[str, MetricValue | None]
    flags: list[Flag]
    window: tuple[str | None, str | None]
    findings: list[Finding]


@dataclass
class PipelineReport:
    goal: str
    results: list[KpiResult]
    selection: list[KpiCandidateScore]
    not_executed: list[str]
    findings: list[Finding]

    @property
    def triggered(self) -> list[Flag]:
        return [f for r in self.results for f in r.flags if f.triggered]

    @property
    def errors(self) -> list[Finding]:
        return [f for f in self.findings if f.severity == "error"]

    def values(self) -> dict[str, float]:
        return {m: v.value for r in self.results for m, v in r.metrics.items() if v is not None}

    def to_dict(self) -> dict:
        return {
            "goal": self.goal,
            "selection": [
                {"candidate": c.candidate, "rank": c.rank, "index": c.index,
                 "criteria": [{"criterion": n, "weight": w, "score": s} for n, w, s in c.criteria]}
                for c in self.selection
            ],
            "results": [
                {
                    "kpi": r.kpi,
                    "window": list(r.window),
                    "metrics": {
                        m: None if v is None else {"value": v.value, "unit": v.unit, "rounded": v.rounded, "details": v.details}
                        for m, v in sorted(r.metrics.items())
                    },
                    "flags": [f.__dict__ for f in r.flags],
                    "findings": [f.__dict__ for f in r.findings],
                }
                for r in self.results
            ],
            "not_executed": self.not_executed,
            "findings": [f.__dict__ for f in self.findings],
        }


def _effective(binding: Binding, override: Window | None) -> Window:
    return override if override is not None and (override.start or override.end) else binding.window


def compute_metric(dataset: Dataset, b: Binding, window: Window | None = None) -> MetricValue:
    """Evaluate one binding; raises MissingDataError when its data is absent."""
    w = _effective(b, window)
    present = set(dataset.machines())
    wanted = set(b.machines or ())
    for m in (b.machine, b.parts.machine if b.parts else None):
        if m:
            wanted.add(m)
    absent = sorted(wanted - present)
    if absent:
        raise MissingDataError(f"no telemetry for machine(s) {', '.join(absent)}")
    if b.type in ("energy_per_part", "window_energy", "machine_share", "event_count") and not dataset.telemetry:
        raise MissingDataError("dataset has no telemetry")
    if b.type == "energy_per_part":
        e = energy_per_part(dataset, b, w)
        return MetricValue(e.value, "kWh/part", e.rounded, {"energy_kwh": e.energy_kwh, "parts": e.parts})
    if b.type == "window_energy":
        we = window_energy(dataset, b.machines, w)
        return MetricValue(we.total, "kWh", round(we.total, 4), {"per_machine": we.per_machine})
    if b.type == "machine_share":
        shares = machine_share(dataset, w, b.machines)
        value = shares[b.machine]
        return MetricValue(value, "fraction", round(value, 4), {"shares": shares})
    if b.type == "event_count":
        n = count_events(dataset, b.machine, b.event, b.rule, w)
        return MetricValue(float(n), "count", float(n), {"rule": b.rule})
    # manual_flow
    recs = [
        r for r in dataset.manual
        if r.flow_name == b.flow and (b.direction is None or r.direction == b.direction)
    ]
    if not recs:
        raise MissingDataError(f"no manual records for flow {b.flow!r}")
    units = sorted({r.unit for r in recs})
    if len(units) > 1:
        raise KpiError(f"flow {b.flow!r} recorded in several units: {units}")
    total = math.fsum(r.amount for r in recs)
    return MetricValue(total, units[0], round(total, 4), {"records": len(recs)})


def run_pipeline(spec: KpiSpec, dataset: Dataset, window: Window | None = None) -> PipelineReport:
    """Analyse every KPI, then apply decision rules.

    Unresolvable bindings become MISSING_DATA findings; other KPIs still run.
    """
    selection: list[KpiCandidateScore] = []
    if spec.selection:
        selection = rank_kpis(spec.selection.get("candidates") or {}, spec.selection.get("weights") or {})

    computed: dict[str, MetricValue | None] = {}
    failures: dict[str, Finding] = {}
    for metric in sorted({m for k in spec.kpis for m in k.metrics}):
        b = spec.bindings[metric]
        try:
            computed[metric] = compute_metric(dataset, b, window)
        except (MissingDataError, UnknownMachineError) as exc:
            computed[metric] = None
            failures[metric] = Finding("MISSING_DATA", metric, str(exc).strip("'\""))
        except (ZeroPartsError, ZeroTotalError) as exc:
            computed[metric] = None
            failures[metric] = Finding("NO_VALUE", metric, str(exc))

    values = {m: v.value for m, v in computed.items() if v is not None}
    flags_by_metric: dict[str, list[Flag]] = {}
    findings = list(failures.values())
    for rule in spec.rules:
        if rule.metric not in values:
            findings.append(Finding("RULE_SKIPPED", rule.metric, f"rule {rule.name!r} has no value to test", "warning"))
            continue
        for flag in evaluate_flags(values, [rule]):
            flags_by_metric.setdefault(flag.metric, []).append(flag)

    results = []
    for k in sorted(spec.kpis, key=lambda k: k.name):
        bound = [spec.bindings[m] for m in k.metrics]
        windows = {_effective(b, window).as_tuple() for b in bound}
        win = windows.pop() if len(windows) == 1 else (None, None)
        if win == (None, None) and dataset.telemetry:
            start, end = dataset.span()
            win = (format_timestamp(start), format_timestamp(end))
        results.append(KpiResult(
            kpi=k.name,
            metrics={m: computed[m] for m in k.metrics},
            flags=[f for m in k.metrics for f in flags_by_metric.get(m, [])],
            window=win,
            findings=[failures[m] for m in k.metrics if m in failures],
        ))
    not_executed = [f"{OUT_OF_SCOPE_SECTIONS[s]}: not executed (out of scope)" for s in spec.out_of_scope]
    return PipelineReport(spec.goal, results, selection, not_executed, sorted(findings, key=lambda f: (f.metric, f.code)))
