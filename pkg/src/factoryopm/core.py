"""Typed object-process graph: things, states, links and link legality."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from enum import Enum


class Kind(str, Enum):
    OBJECT = "object"
    PROCESS = "process"


class Essence(str, Enum):
    PHYSICAL = "physical"
    INFORMATIONAL = "informational"


class Affiliation(str, Enum):
    SYSTEMIC = "systemic"
    ENVIRONMENTAL = "environmental"


class LinkKind(str, Enum):
    AGGREGATION = "aggregation"
    EXHIBITION = "exhibition"
    IN_ZOOM = "in_zoom"
    CONSUMPTION = "consumption"
    RESULT = "result"
    EFFECT = "effect"
    INSTRUMENT = "instrument"
    AGENT = "agent"
    CONDITION = "condition"
    STATE_CHANGE = "state_change"


STRUCTURAL_KINDS = frozenset({LinkKind.AGGREGATION, LinkKind.EXHIBITION, LinkKind.IN_ZOOM})

# Procedural links whose source is the process and target the object.
PROCESS_TO_OBJECT = frozenset(
    {
        LinkKind.CONSUMPTION,
        LinkKind.RESULT,
        LinkKind.EFFECT,
        LinkKind.INSTRUMENT,
        LinkKind.STATE_CHANGE,
    }
)
# Procedural links whose source is the object and target the process.
OBJECT_TO_PROCESS = frozenset({LinkKind.AGENT, LinkKind.CONDITION})


class ModelError(Exception):
    """Base class for model construction errors."""


class DuplicateNameError(ModelError):
    pass


class IllegalLinkError(ModelError):
    pass


class UnresolvedReferenceError(ModelError):
    pass


class NoZoomChildrenError(ModelError):
    pass


@dataclass(frozen=True)
class Thing:
    id: str
    name: str
    kind: Kind
    essence: Essence = Essence.INFORMATIONAL
    affiliation: Affiliation = Affiliation.SYSTEMIC
    scope: str | None = None
    implicit: bool = False


@dataclass(frozen=True)
class State:
    id: str
    owner: str
    name: str
    initial: bool = False
    final: bool = False


@dataclass(frozen=True)
class Link:
    id: str
    kind: LinkKind
    source: str
    target: str
    source_state: str | None = None
    target_state: str | None = None
    from_state: str | None = None
    to_state: str | None = None


@dataclass(frozen=True)
class Violation:
    code: str
    subject: str
    message: str


@dataclass
class Model:
    """A named graph of things, states and links.

    Ids are assigned in declaration order (``t1``, ``s1``, ``l1`` ...), so the
    same construction sequence always yields the same ids.
    """

    name: str = "model"
    things: list[Thing] = field(default_factory=list)
    states: list[State] = field(default_factory=list)
    links: list[Link] = field(default_factory=list)

    def thing(self, thing_id: str) -> Thing:
        for t in self.things:
            if t.id == thing_id:
                return t
        raise UnresolvedReferenceError(f"unknown thing id {thing_id!r}")

    def state(self, state_id: str) -> State:
        for s in self.states:
            if s.id == state_id:
                return s
        raise UnresolvedReferenceError(f"unknown state id {state_id!r}")

    def find(self, name: str, scope: str | None = None) -> Thing | None:
        for t in self.things:
            if t.name == name and t.scope == scope:
                return t
        return None

    def states_of(self, owner: str) -> list[State]:
        return [s for s in self.states if s.owner == owner]

    def find_state(self, owner: str, name: str) -> State | None:
        for s in self.states:
            if s.owner == owner and s.name == name:
                return s
        return None

    def processes(self) -> list[Thing]:
        return [t for t in self.things if t.kind is Kind.PROCESS]

    def links_of(self, thing_id: str) -> list[Link]:
        return [l for l in self.links if thing_id in (l.source, l.target)]

    def replace_thing(self, thing: Thing) -> None:
        for i, t in enumerate(self.things):
            if t.id == thing.id:
                self.things[i] = thing
                return
        raise UnresolvedReferenceError(f"unknown thing id {thing.id!r}")

    def replace_state(self, state: State) -> None:
        for i, s in enumerate(self.states):
            if s.id == state.id:
                self.states[i] = state
                return
        raise UnresolvedReferenceError(f"unknown state id {state.id!r}")

    def display_name(self, thing_id: str) -> str:
        t = self.thing(thing_id)
        if t.scope is None:
            return t.name
        return f"{self.display_name(t.scope)}/{t.name}"

    def to_dict(self) -> dict:
        def clean(d: dict) -> dict:
            return {k: (v.value if isinstance(v, Enum) else v) for k, v in d.items()}

        return {
            "name": self.name,
            "things": [clean(asdict(t)) for t in self.things],
            "states": [clean(asdict(s)) for s in self.states],
            "links": [clean(asdict(l)) for l in self.links],
        }

    @classmethod
    def from_dict(cls, data: dict) -> Model:
        things = [
            Thing(
                id=t["id"],
                name=t["name"],
                kind=Kind(t["kind"]),
                essence=Essence(t.get("essence", "informational")),
                affiliation=Affiliation(t.get("affiliation", "systemic")),
                scope=t.get("scope"),
                implicit=bool(t.get("implicit", False)),
            )
            for t in data.get("things", [])
        ]
        states = [
            State(
                id=s["id"],
                owner=s["owner"],
                name=s["name"],
                initial=bool(s.get("initial", False)),
                final=bool(s.get("final", False)),
            )
            for s in data.get("states", [])
        ]
        links = [
            Link(
                id=l["id"],
                kind=LinkKind(l["kind"]),
                source=l["source"],
                target=l["target"],
                source_state=l.get("source_state"),
                target_state=l.get("target_state"),
                from_state=l.get("from_state"),
                to_state=l.get("to_state"),
            )
            for l in data.get("links", [])
        ]
        return cls(name=data.get("name", "model"), things=things, states=states, links=links)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(
            json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        ).hexdigest()


def _next_id(prefix: str, existing: list) -> str:
    return f"{prefix}{len(existing) + 1}"


def add_thing(
    model: Model,
    name: str,
    kind: Kind | str = Kind.OBJECT,
    essence: Essence | str = Essence.INFORMATIONAL,
    affiliation: Affiliation | str = Affiliation.SYSTEMIC,
    scope: str | None = None,
    implicit: bool = False,
) -> str:
    if not name or not name.strip():
        raise ModelError("thing name must be nonempty")
    if scope is not None:
        model.thing(scope)
    if model.find(name, scope) is not None:
        where = "top level" if scope is None else model.display_name(scope)
        raise DuplicateNameError(f"{name!r} already declared at {where}")
    thing = Thing(
        id=_next_id("t", model.things),
        name=name,
        kind=Kind(kind),
        essence=Essence(essence),
        affiliation=Affiliation(affiliation),
        scope=scope,
        implicit=implicit,
    )
    model.things.append(thing)
    return thing.id


def add_state(model: Model, owner: str, name: str, initial: bool = False, final: bool = False) -> str:
    t = model.thing(owner)
    if t.kind is not Kind.OBJECT:
        raise IllegalLinkError(f"states attach only to objects, {t.name!r} is a process")
    if model.find_state(owner, name) is not None:
        raise DuplicateNameError(f"state {name!r} already declared on {t.name!r}")
    state = State(id=_next_id("s", model.states), owner=owner, name=name, initial=initial, final=final)
    model.states.append(state)
    return state.id


def check_link(model: Model, link: Link) -> list[Violation]:
    """Legality check for a single link against the current model."""
    things = {t.id: t for t in model.things}
    states = {s.id: s for s in model.states}
    out: list[Violation] = []

    def v(code: str, msg: str) -> None:
        out.append(Violation(code, link.id, msg))

    src = things.get(link.source)
    dst = things.get(link.target)
    if src is None:
        v("UNRESOLVED_REF", f"source {link.source!r} is not a declared thing")
    if dst is None:
        v("UNRESOLVED_REF", f"target {link.target!r} is not a declared thing")
    if src is None or dst is None:
        return out

    kind = link.kind
    if kind in PROCESS_TO_OBJECT:
        if src.kind is not Kind.PROCESS or dst.kind is not Kind.OBJECT:
            v("ILLEGAL_ENDPOINT", f"{kind.value} must run from a process to an object")
    elif kind in OBJECT_TO_PROCESS:
        if src.kind is not Kind.OBJECT or dst.kind is not Kind.PROCESS:
            v("ILLEGAL_ENDPOINT", f"{kind.value} must run from an object to a process")

    for attr, holder in (("source_state", src), ("target_state", dst)):
        sid = getattr(link, attr)
        if sid is None:
            continue
        s = states.get(sid)
        if s is None:
            v("UNRESOLVED_STATE", f"{attr} {sid!r} is not a declared state")
        elif s.owner != holder.id:
            v("STATE_OWNER", f"{attr} {s.name!r} does not belong to {holder.name!r}")

    if kind is LinkKind.STATE_CHANGE:
        if link.from_state is None or link.to_state is None:
            v("STATE_CHANGE_INCOMPLETE", "state_change needs both from and to states")
        else:
            for attr in ("from_state", "to_state"):
                sid = getattr(link, attr)
                s = states.get(sid)
                if s is None:
                    v("UNRESOLVED_STATE", f"{attr} {sid!r} is not a declared state")
                elif s.owner != dst.id:
                    v("STATE_OWNER", f"{attr} {s.name!r} does not belong to {dst.name!r}")
            if link.from_state == link.to_state:
                v("STATE_CHANGE_IDENTITY", "state_change must move to a different state")
    elif link.from_state is not None or link.to_state is not None:
        v("STRAY_STATE_CHANGE", f"{kind.value} link carries from/to states")
    return out


def add_link(
    model: Model,
    kind: LinkKind | str,
    source: str,
    target: str,
    *,
    source_state: str | None = None,
    target_state: str | None = None,
    from_state: str | None = None,
    to_state: str | None = None,
) -> str:
    link = Link(
        id=_next_id("l", model.links),
        kind=LinkKind(kind),
        source=source,
        target=target,
        source_state=source_state,
        target_state=target_state,
        from_state=from_state,
        to_state=to_state,
    )
    problems = check_link(model, link)
    if problems:
        codes = {p.code for p in problems}
        msg = "; ".join(p.message for p in problems)
        if codes <= {"UNRESOLVED_REF", "UNRESOLVED_STATE", "STATE_OWNER"}:
            raise UnresolvedReferenceError(msg)
        raise IllegalLinkError(msg)
    model.links.append(link)
    return link.id


def validate_graph(model: Model) -> list[Violation]:
    """Every legality problem in the model, ordered by element declaration."""
    out: list[Violation] = []
    ids = {t.id for t in model.things}
    seen: set[tuple[str | None, str]] = set()
    for t in model.things:
        if t.scope is not None and t.scope not in ids:
            out.append(Violation("UNRESOLVED_SCOPE", t.id, f"scope {t.scope!r} of {t.name!r} is undeclared"))
        key = (t.scope, t.name)
        if key in seen:
            out.append(Violation("DUPLICATE_NAME", t.id, f"{t.name!r} declared twice in one scope"))
        seen.add(key)

    things = {t.id: t for t in model.things}
    state_keys: set[tuple[str, str]] = set()
    for s in model.states:
        owner = things.get(s.owner)
        if owner is None:
            out.append(Violation("UNRESOLVED_REF", s.id, f"state owner {s.owner!r} is undeclared"))
        elif owner.kind is not Kind.OBJECT:
            out.append(Violation("STATE_ON_PROCESS", s.id, f"state {s.name!r} attached to process {owner.name!r}"))
        if (s.owner, s.name) in state_keys:
            out.append(Violation("DUPLICATE_STATE", s.id, f"state {s.name!r} declared twice"))
        state_keys.add((s.owner, s.name))

    for link in model.links:
        out.extend(check_link(model, link))
    return out


def in_zoom(model: Model, thing_id: str) -> Model:
    """Sub-model revealed by zooming into ``thing_id``.

    Holds the zoom children, everything they exhibit (transitively), their
    states, and the links whose endpoints both fall inside that set.
    """
    root = model.thing(thing_id)
    children = [
        l.target for l in model.links if l.kind is LinkKind.IN_ZOOM and l.source == thing_id
    ]
    if not children:
        raise NoZoomChildrenError(f"{root.name!r} has no in-zoom children")
    members: set[str] = set()
    frontier = list(children)
    while frontier:
        tid = frontier.pop()
        if tid in members:
            continue
        members.add(tid)
        frontier.extend(
            l.target for l in model.links if l.kind is LinkKind.EXHIBITION and l.source == tid
        )
    return Model(
        name=f"{model.name}/{root.name}",
        things=[t for t in model.things if t.id in members],
        states=[s for s in model.states if s.owner in members],
        links=[l for l in model.links if l.source in members and l.target in members],
    )
