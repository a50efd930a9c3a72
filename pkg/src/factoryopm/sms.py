"""Manufacturing taxonomy, classification and conformance grading of models."""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass, field, replace
from functools import lru_cache
from importlib import resources
from pathlib import Path

import yaml

from .core import Kind, LinkKind, Model, validate_graph

PROFILE_DIR_ENV = "FACTORYOPM_PROFILE_DIR"
SEVERITIES = ("error", "warning", "off")

SYSTEM_FIELDS = (
    "product_type",
    "complexity",
    "system_classification",
    "automation_level",
    "production_control",
    "quality_control",
    "waste_disposal",
)


class SchemaError(Exception):
    pass


class UnknownCategoryError(SchemaError):
    pass


class NotAProcessError(SchemaError):
    pass


class UnknownProfileError(SchemaError):
    pass


class ReclassificationWarning(UserWarning):
    pass


def _data(name: str) -> str:
    return resources.files("factoryopm").joinpath("data", name).read_text(encoding="utf-8")


@lru_cache(maxsize=None)
def load_catalog(path: str | None = None) -> dict:
    text = Path(path).read_text(encoding="utf-8") if path else _data("catalog.yaml")
    catalog = yaml.safe_load(text)
    if len(catalog["process_categories"]) != len(set(catalog["process_categories"])):
        raise SchemaError("duplicate process category")
    return catalog


def process_categories() -> list[str]:
    return list(load_catalog()["process_categories"])


def object_roles() -> dict[str, dict[str, list[str]]]:
    return {role: dict(subs) for role, subs in load_catalog()["object_categories"].items()}


@dataclass(frozen=True)
class ObjectCategory:
    role: str
    subcategory: str | None = None

    @property
    def attribute_catalog(self) -> list[str]:
        subs = object_roles()[self.role]
        if self.subcategory is None:
            seen: dict[str, None] = {}
            for attrs in subs.values():
                seen.update(dict.fromkeys(attrs))
            return list(seen)
        return list(subs[self.subcategory])


@dataclass(frozen=True)
class Classification:
    """Process categories and object roles, keyed by thing id."""

    processes: dict[str, str] = field(default_factory=dict)
    objects: dict[str, ObjectCategory] = field(default_factory=dict)


def classify_process(model: Model, classification: Classification, process_id: str, category: str) -> Classification:
    thing = model.thing(process_id)
    if thing.kind is not Kind.PROCESS:
        raise NotAProcessError(f"{thing.name!r} is not a process")
    if category not in process_categories():
        raise UnknownCategoryError(f"unknown process category {category!r}")
    previous = classification.processes.get(process_id)
    if previous is not None and previous != category:
        warnings.warn(
            f"{thing.name!r} reclassified from {previous!r} to {category!r}",
            ReclassificationWarning,
            stacklevel=2,
        )
    return replace(classification, processes={**classification.processes, process_id: category})


def classify_object(
    model: Model, classification: Classification, object_id: str, role: str, subcategory: str | None = None
) -> Classification:
    thing = model.thing(object_id)
    if thing.kind is not Kind.OBJECT:
        raise SchemaError(f"{thing.name!r} is not an object")
    roles = object_roles()
    if role not in roles:
        raise UnknownCategoryError(f"unknown object role {role!r}")
    if subcategory is not None and subcategory not in roles[role]:
        raise UnknownCategoryError(f"unknown {role} subcategory {subcategory!r}")
    return replace(
        classification,
        objects={**classification.objects, object_id: ObjectCategory(role, subcategory)},
    )


def _lookup(model: Model, name: str) -> str:
    """Resolve a top-level name or an exhibitor path like 'Loading/Event'."""
    scope = None
    for part in name.split("/") if model.find(name) is None else [name]:
        t = model.find(part, scope)
        if t is None:
            raise SchemaError(f"classification refers to unknown thing {name!r}")
        scope = t.id
    assert scope is not None
    return scope


def load_classification(model: Model, path: str | Path) -> Classification:
    """Read a YAML classification file keyed by thing names."""
    data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    c = Classification()
    for name, category in (data.get("processes") or {}).items():
        c = classify_process(model, c, _lookup(model, name), category)
    for name, spec in (data.get("objects") or {}).items():
        if isinstance(spec, str):
            spec = {"role": spec}
        c = classify_object(model, c, _lookup(model, name), spec["role"], spec.get("subcategory"))
    return c


@dataclass(frozen=True)
class SystemRecord:
    product_type: str
    complexity: str
    system_classification: str
    automation_level: str
    production_control: str
    quality_control: str
    waste_disposal: str

    @classmethod
    def from_mapping(cls, data: dict) -> SystemRecord:
        missing = [f for f in SYSTEM_FIELDS if not str(data.get(f) or "").strip()]
        if missing:
            raise SchemaError(f"system record lacks {', '.join(missing)}")
        return cls(**{f: str(data[f]) for f in SYSTEM_FIELDS})

    def to_dict(self) -> dict[str, str]:
        return {f: getattr(self, f) for f in SYSTEM_FIELDS}


def load_system_record(path: str | Path) -> SystemRecord:
    return SystemRecord.from_mapping(yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {})


# -- conformance --------------------------------------------------------------


@dataclass(frozen=True)
class ConformanceRule:
    code: str
    severity: str
    predicate: str
    kinds: tuple[LinkKind, ...] = ()
    attributes: tuple[str, ...] = ()
    template: str = ""


@dataclass(frozen=True)
class Profile:
    name: str
    rules: tuple[ConformanceRule, ...]


def _rule(code: str, spec: dict) -> ConformanceRule:
    severity = str(spec.get("severity", "error"))
    if severity not in SEVERITIES:
        raise SchemaError(f"rule {code}: bad severity {severity!r}")
    predicate = spec.get("predicate")
    if predicate not in ("has_link", "exhibits", "agents_human"):
        raise SchemaError(f"rule {code}: unknown predicate {predicate!r}")
    return ConformanceRule(
        code=code,
        severity=severity,
        predicate=predicate,
        kinds=tuple(LinkKind(k) for k in spec.get("kinds", ())),
        attributes=tuple(spec.get("attributes", ())),
        template=str(spec.get("template", "")),
    )


def base_rules() -> dict[str, ConformanceRule]:
    data = yaml.safe_load(_data("rules.yaml"))
    return {code: _rule(code, spec) for code, spec in data["rules"].items()}


def _profile_file(name: str) -> tuple[str, str]:
    candidate = Path(name)
    if candidate.suffix in (".yaml", ".yml") and candidate.is_file():
        return str(candidate), candidate.read_text(encoding="utf-8")
    env_dir = os.environ.get(PROFILE_DIR_ENV)
    if env_dir:
        for suffix in (".yaml", ".yml"):
            p = Path(env_dir) / f"{name}{suffix}"
            if p.is_file():
                return str(p), p.read_text(encoding="utf-8")
    builtin = resources.files("factoryopm").joinpath("data", "profiles", f"{name}.yaml")
    if builtin.is_file():
        return f"builtin:{name}", builtin.read_text(encoding="utf-8")
    raise UnknownProfileError(f"unknown conformance profile {name!r}")


def load_profile(name: str = "default") -> Profile:
    """Load a profile by builtin name, by name under $FACTORYOPM_PROFILE_DIR, or by path."""
    _, text = _profile_file(name)
    data = yaml.safe_load(text) or {}
    rules = base_rules()
    for code, spec in (data.get("rules") or {}).items():
        rules[code] = _rule(code, spec)
    for code, severity in (data.get("severities") or {}).items():
        if code not in rules:
            raise SchemaError(f"profile sets severity for unknown rule {code!r}")
        if severity not in SEVERITIES:
            raise SchemaError(f"profile: bad severity {severity!r} for {code}")
        rules[code] = replace(rules[code], severity=severity)
    return Profile(str(data.get("name", name)), tuple(rules[c] for c in sorted(rules)))


@dataclass(frozen=True, order=True)
class Finding:
    process: str
    code: str
    detail: str
    severity: str
    process_id: str


@dataclass(frozen=True)
class ConformanceReport:
    model: str
    profile: str
    findings: tuple[Finding, ...]

    @property
    def errors(self) -> int:
        return sum(f.severity == "error" for f in self.findings)

    @property
    def warnings(self) -> int:
        return sum(f.severity == "warning" for f in self.findings)

    @property
    def ok(self) -> bool:
        return self.errors == 0

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "profile": self.profile,
            "summary": {"errors": self.errors, "warnings": self.warnings},
            "findings": [
                {
                    "process": f.process,
                    "process_id": f.process_id,
                    "code": f.code,
                    "severity": f.severity,
                    "detail": f.detail,
                }
                for f in self.findings
            ],
        }


def _exhibited(model: Model, thing_id: str) -> set[str]:
    return {
        model.thing(l.target).name
        for l in model.links
        if l.kind is LinkKind.EXHIBITION and l.source == thing_id
    }


def _failures(
    model: Model, rule: ConformanceRule, process_id: str, classification: Classification
) -> list[str]:
    incident = model.links_of(process_id)
    if rule.predicate == "has_link":
        return [] if any(l.kind in rule.kinds for l in incident) else [""]
    if rule.predicate == "exhibits":
        have = _exhibited(model, process_id)
        return [a for a in rule.attributes if a not in have]
    # agents_human
    bad = []
    for l in incident:
        if l.kind is LinkKind.AGENT and l.target == process_id:
            cat = classification.objects.get(l.source)
            if cat is None or cat.role != "human":
                bad.append(model.thing(l.source).name)
    return bad


def check_conformance(
    model: Model, profile: Profile | str = "default", classification: Classification | None = None
) -> ConformanceReport:
    if isinstance(profile, str):
        profile = load_profile(profile)
    violations = validate_graph(model)
    if violations:
        raise SchemaError(f"model fails graph validation: {violations[0].code} on {violations[0].subject}")
    classification = classification or Classification()
    findings = []
    for p in model.processes():
        for rule in profile.rules:
            if rule.severity == "off":
                continue
            for detail in _failures(model, rule, p.id, classification):
                findings.append(Finding(p.name, rule.code, detail, rule.severity, p.id))
    return ConformanceReport(model.name, profile.name, tuple(sorted(findings)))


# -- attribute coverage -------------------------------------------------------


@dataclass(frozen=True)
class Requirement:
    role: str
    attribute: str


@dataclass(frozen=True, order=True)
class Coverage:
    thing: str
    role: str
    attribute: str
    covered: bool
    via: str = ""


def attribute_coverage(
    model: Model, requirements: list[Requirement], classification: Classification | None = None
) -> list[Coverage]:
    """Check which required (role, attribute) pairs the model can supply.

    Roles: ``process`` (the process exhibits it), ``equipment`` (one of the
    process's instruments exhibits it), or any object role from the catalog
    (every object classified with that role exhibits it).
    """
    classification = classification or Classification()
    out: list[Coverage] = []
    for req in requirements:
        if req.role == "process":
            for p in model.processes():
                out.append(Coverage(p.name, req.role, req.attribute, req.attribute in _exhibited(model, p.id), p.name))
        elif req.role == "equipment":
            for p in model.processes():
                via = [
                    model.thing(l.target).name
                    for l in model.links
                    if l.kind is LinkKind.INSTRUMENT
                    and l.source == p.id
                    and req.attribute in _exhibited(model, l.target)
                ]
                out.append(Coverage(p.name, req.role, req.attribute, bool(via), ", ".join(via)))
        else:
            for tid, cat in classification.objects.items():
                if cat.role == req.role:
                    name = model.display_name(tid)
                    out.append(Coverage(name, req.role, req.attribute, req.attribute in _exhibited(model, tid), name))
    return sorted(out)


def missing_attributes(coverage: list[Coverage]) -> dict[str, list[str]]:
    missing: dict[str, list[str]] = {}
    for c in coverage:
        if not c.covered:
            missing.setdefault(c.thing, []).append(c.attribute)
    return missing
