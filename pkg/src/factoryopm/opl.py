"""OPL text layer: parse the controlled-language sentences into a Model and
render a Model back to canonical sentences.

Sentence forms understood (one per line or several per line, '.'-terminated)::

    X is physical. / X is environmental. / X is environmental and physical.
    X can be A, B, or C.                    state set
    S is initial. / S is final.            state flag
    X consists of A, B, and C.
    X exhibits A and B.
    X zooms into A and B.
    P occurs if X is in existent.          (or "is in <state>")
    P requires A and B.
    P consumes [<state> ]A and B.
    P yields A. / P affects A.
    H handles P.
    P changes A from S1 to S2 and B from S3 to S4.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .core import (
    Affiliation,
    DuplicateNameError,
    Essence,
    Kind,
    Link,
    LinkKind,
    Model,
    ModelError,
    State,
    Thing,
    add_link,
    add_state,
    add_thing,
)

FORMS = (
    "essence_decl",
    "state_set",
    "state_flag",
    "consists_of",
    "exhibits",
    "zooms_into",
    "occurs_if",
    "requires",
    "consumes",
    "yields",
    "affects",
    "handles",
    "changes",
    "can_be",
)

PROCEDURAL_FORMS = frozenset({"occurs_if", "requires", "consumes", "yields", "affects", "changes"})
STRUCTURAL_FORMS = frozenset({"consists_of", "exhibits", "zooms_into"})

_FORM_LINK = {
    "consists_of": LinkKind.AGGREGATION,
    "exhibits": LinkKind.EXHIBITION,
    "zooms_into": LinkKind.IN_ZOOM,
    "requires": LinkKind.INSTRUMENT,
    "consumes": LinkKind.CONSUMPTION,
    "yields": LinkKind.RESULT,
    "affects": LinkKind.EFFECT,
}
_LINK_VERB = {
    LinkKind.AGGREGATION: "consists of",
    LinkKind.EXHIBITION: "exhibits",
    LinkKind.IN_ZOOM: "zooms into",
    LinkKind.INSTRUMENT: "requires",
    LinkKind.CONSUMPTION: "consumes",
    LinkKind.RESULT: "yields",
    LinkKind.EFFECT: "affects",
}

EXISTENT = "existent"

_PATTERNS: list[tuple[str, re.Pattern[str]]] = [
    ("essence_decl", re.compile(r"^(?P<s>.+?) is (?P<m>environmental and physical|physical|environmental)$")),
    ("state_flag", re.compile(r"^(?P<s>.+?) is (?P<m>initial|final)$")),
    ("can_be", re.compile(r"^(?P<s>.+?) can be (?P<o>.+)$")),
    ("consists_of", re.compile(r"^(?P<s>.+?) consists of (?P<o>.+)$")),
    ("exhibits", re.compile(r"^(?P<s>.+?) exhibits (?P<o>.+)$")),
    ("zooms_into", re.compile(r"^(?P<s>.+?) zooms into (?P<o>.+)$")),
    ("occurs_if", re.compile(r"^(?P<s>.+?) occurs if (?P<o>.+?) is in (?P<m>.+)$")),
    ("requires", re.compile(r"^(?P<s>.+?) requires (?P<o>.+)$")),
    ("consumes", re.compile(r"^(?P<s>.+?) consumes (?P<o>.+)$")),
    ("yields", re.compile(r"^(?P<s>.+?) yields (?P<o>.+)$")),
    ("affects", re.compile(r"^(?P<s>.+?) affects (?P<o>.+)$")),
    ("handles", re.compile(r"^(?P<s>.+?) handles (?P<o>.+)$")),
    ("changes", re.compile(r"^(?P<s>.+?) changes (?P<o>.+)$")),
]
_CHANGE = re.compile(r"^(?P<o>.+?) from (?P<a>.+?) to (?P<b>.+)$")


@dataclass(frozen=True)
class Operand:
    name: str
    state: str | None = None
    to_state: str | None = None


@dataclass(frozen=True)
class SentenceForm:
    form: str
    subject: str
    operands: tuple[Operand, ...]
    raw: str
    line: int = 0
    modifier: str | None = None


@dataclass(frozen=True, order=True)
class ParseDiagnostic:
    line: int
    severity: str
    code: str
    message: str


@dataclass
class _Raw:
    form: str
    subject: str
    body: str | None
    modifier: str | None
    raw: str
    line: int


# -- lexical helpers -------------------------------------------------------


def _mask(text: str) -> str:
    """Blank out parenthesised content so patterns only see top-level text."""
    out = []
    depth = 0
    for ch in text:
        if ch == "(":
            depth += 1
            out.append(ch)
        elif ch == ")":
            depth = max(depth - 1, 0)
            out.append(ch)
        else:
            out.append("\0" if depth else ch)
    return "".join(out)


def _split_top(text: str, sep: str) -> list[str]:
    masked = _mask(text)
    parts, start = [], 0
    idx = masked.find(sep)
    while idx != -1:
        parts.append(text[start:idx])
        start = idx + len(sep)
        idx = masked.find(sep, start)
    parts.append(text[start:])
    return parts


def split_sentences(line: str) -> tuple[list[str], str]:
    """Split a line into '.'-terminated sentences; returns (sentences, leftover)."""
    sentences: list[str] = []
    depth = 0
    start = 0
    for i, ch in enumerate(line):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth = max(depth - 1, 0)
        elif ch == "." and depth == 0 and (i + 1 == len(line) or line[i + 1].isspace()):
            sentence = " ".join(line[start:i].split())
            if sentence:
                sentences.append(sentence)
            start = i + 1
    return sentences, line[start:].strip()


def _match(sentence: str) -> tuple[str, re.Match[str]] | None:
    masked = _mask(sentence)
    best = None
    for form, pattern in _PATTERNS:
        m = pattern.match(masked)
        if m and (best is None or m.end("s") < best[1].end("s")):
            best = (form, m)
    return best


def _items(text: str, conj: str, known: set[str]) -> list[str]:
    """Split an operand list: 'A', 'A and B', 'A, B, and C' (conj may be 'or')."""
    parts = [p.strip() for p in _split_top(text, ",")]
    if len(parts) > 1:
        last = parts[-1]
        if last.startswith(conj + " "):
            parts[-1] = last[len(conj) + 1 :].strip()
        else:
            parts[-1:] = _pair(last, conj, known)
        return [p for p in parts if p]
    return _pair(text.strip(), conj, known)


def _pair(text: str, conj: str, known: set[str]) -> list[str]:
    if text in known:
        return [text]
    sep = f" {conj} "
    pieces = _split_top(text, sep)
    if len(pieces) == 1:
        return [text]
    splits = []
    for i in range(1, len(pieces)):
        left, right = sep.join(pieces[:i]), sep.join(pieces[i:])
        splits.append((left, right))
    for left, right in splits:
        if left in known and right in known:
            return [left, right]
    for left, right in splits:
        if left in known or right in known:
            return [left, right]
    return list(splits[0])


def _split_changes(text: str) -> list[tuple[str, str, str]] | None:
    parts = [p.strip() for p in _split_top(text, ",")]
    if len(parts) > 1:
        if parts[-1].startswith("and "):
            parts[-1] = parts[-1][4:]
        out = []
        for p in parts:
            m = _CHANGE.match(p)
            if not m:
                return None
            out.append((m["o"], m["a"], m["b"]))
        return out
    return _split_change_pair(text)


def _split_change_pair(text: str) -> list[tuple[str, str, str]] | None:
    pieces = _split_top(text, " and ")
    for i in range(1, len(pieces)):
        left = " and ".join(pieces[:i])
        m = _CHANGE.match(left)
        if not m:
            continue
        rest = _split_change_pair(" and ".join(pieces[i:]))
        if rest:
            return [(m["o"], m["a"], m["b"])] + rest
    m = _CHANGE.match(text)
    return [(m["o"], m["a"], m["b"])] if m else None


def _qualify(text: str, states_by_name: dict[str, list[str]], known: set[str]) -> Operand:
    """Detect a leading state qualifier ('at Screen Printer Baked Board')."""
    if text in known:
        return Operand(text)
    best: Operand | None = None
    for obj, states in states_by_name.items():
        if not text.endswith(" " + obj):
            continue
        prefix = text[: -len(obj) - 1]
        if prefix in states and (best is None or len(prefix) > len(best.state or "")):
            best = Operand(obj, prefix)
    return best or Operand(text)


# -- parsing -----------------------------------------------------------------


def _lex(text: str) -> tuple[list[_Raw], list[ParseDiagnostic]]:
    raws: list[_Raw] = []
    diags: list[ParseDiagnostic] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        sentences, leftover = split_sentences(stripped)
        if leftover:
            diags.append(ParseDiagnostic(lineno, "error", "MISSING_PERIOD", f"sentence not terminated: {leftover!r}"))
        for s in sentences:
            hit = _match(s)
            if hit is None:
                diags.append(ParseDiagnostic(lineno, "error", "UNPARSEABLE", f"unrecognised sentence: {s!r}"))
                continue
            form, m = hit
            groups = m.groupdict()
            subject = s[m.start("s") : m.end("s")].strip()
            body = s[m.start("o") : m.end("o")].strip() if groups.get("o") is not None else None
            modifier = s[m.start("m") : m.end("m")].strip() if groups.get("m") is not None else None
            raws.append(_Raw(form, subject, body, modifier, s, lineno))
    return raws, diags


def parse_sentences(text: str) -> tuple[list[SentenceForm], list[ParseDiagnostic]]:
    """Syntactic parse only: sentence forms with operands split and qualified."""
    raws, diags = _lex(text)

    known: set[str] = {r.subject for r in raws}
    states_by_name: dict[str, list[str]] = {}
    for r in raws:
        if r.body is None:
            continue
        # unambiguous comma lists of structural sentences name things verbatim
        if r.form in STRUCTURAL_FORMS and len(_split_top(r.body, ",")) > 1:
            known.update(_items(r.body, "and", set()))
    for r in raws:
        if r.form == "can_be" and r.body is not None:
            states_by_name.setdefault(r.subject, []).extend(_items(r.body, "or", set()))
    state_names = {s for states in states_by_name.values() for s in states}

    forms: list[SentenceForm] = []
    for r in raws:
        ops: list[Operand]
        if r.form in ("essence_decl", "state_flag"):
            ops = []
        elif r.form == "can_be":
            ops = [Operand(n) for n in _items(r.body or "", "or", state_names)]
        elif r.form == "occurs_if":
            state = None if r.modifier == EXISTENT else r.modifier
            ops = [Operand(r.body or "", state)]
        elif r.form == "changes":
            triples = _split_changes(r.body or "")
            if not triples:
                diags.append(ParseDiagnostic(r.line, "error", "UNPARSEABLE", f"bad changes clause: {r.raw!r}"))
                continue
            ops = [Operand(o, a, b) for o, a, b in triples]
        elif r.form in ("consumes", "yields", "affects", "requires"):
            ops = [_qualify(n, states_by_name, known) for n in _items(r.body or "", "and", known | state_names)]
        else:
            ops = [Operand(n) for n in _items(r.body or "", "and", known)]
        forms.append(SentenceForm(r.form, r.subject, tuple(ops), r.raw + ".", r.line, r.modifier))
    return forms, sorted(diags)


@dataclass
class _Builder:
    model: Model
    process_names: set[str]
    diags: list[ParseDiagnostic] = field(default_factory=list)
    recent_attr: dict[str, str] = field(default_factory=dict)
    recent_state: dict[str, str] = field(default_factory=dict)
    declared: set[str] = field(default_factory=set)
    first_ref: dict[str, int] = field(default_factory=dict)
    state_bound: set[str] = field(default_factory=set)

    def error(self, line: int, code: str, message: str) -> None:
        self.diags.append(ParseDiagnostic(line, "error", code, message))

    def _touch(self, tid: str, line: int) -> str:
        self.first_ref.setdefault(tid, line)
        return tid

    def top(self, name: str, line: int) -> str:
        t = self.model.find(name)
        if t is not None:
            return self._touch(t.id, line)
        kind = Kind.PROCESS if name in self.process_names else Kind.OBJECT
        return self._touch(add_thing(self.model, name, kind), line)

    def resolve(self, name: str, line: int) -> str:
        """Top-level thing first, then the most recently exhibited attribute."""
        t = self.model.find(name)
        if t is not None:
            return self._touch(t.id, line)
        if name in self.recent_attr:
            return self._touch(self.recent_attr[name], line)
        return self.top(name, line)

    def state_holder(self, name: str, line: int) -> str:
        """Most recently exhibited attribute first, then the top-level thing."""
        if name in self.recent_attr:
            return self._touch(self.recent_attr[name], line)
        return self.top(name, line)

    def attribute(self, exhibitor: str, name: str, line: int) -> str:
        t = self.model.find(name, exhibitor)
        tid = t.id if t is not None else add_thing(self.model, name, Kind.OBJECT, scope=exhibitor)
        self.recent_attr[name] = tid
        self.declared.add(tid)
        return self._touch(tid, line)

    def link(self, line: int, kind: LinkKind, src: str, dst: str, **states: str | None) -> None:
        try:
            add_link(self.model, kind, src, dst, **states)
        except ModelError as exc:
            self.error(line, "ILLEGAL_LINK", str(exc))

    def find_state(self, owner: str, name: str, line: int) -> str | None:
        s = self.model.find_state(owner, name)
        if s is None:
            self.error(line, "UNKNOWN_STATE", f"{name!r} is not a state of {self.model.thing(owner).name!r}")
            return None
        return s.id

    def apply(self, f: SentenceForm) -> SentenceForm:
        line = f.line
        if f.form == "essence_decl":
            tid = self.resolve(f.subject, line)
            self.declared.add(tid)
            t = self.model.thing(tid)
            essence = Essence.PHYSICAL if "physical" in (f.modifier or "") else t.essence
            affiliation = Affiliation.ENVIRONMENTAL if "environmental" in (f.modifier or "") else t.affiliation
            self.model.replace_thing(
                Thing(t.id, t.name, t.kind, essence, affiliation, t.scope, t.implicit)
            )
        elif f.form in ("can_be", "state_set"):
            tid = self.state_holder(f.subject, line)
            self.declared.add(tid)
            t = self.model.thing(tid)
            form = "state_set" if t.scope is not None else "can_be"
            if t.scope is not None and tid in self.state_bound:
                self.error(line, "STATE_REBIND", f"states of {self.model.display_name(tid)!r} already declared")
                return f
            self.state_bound.add(tid)
            for op in f.operands:
                try:
                    sid = add_state(self.model, tid, op.name)
                except ModelError as exc:
                    self.error(line, "BAD_STATE", str(exc))
                    continue
                self.recent_state[op.name] = sid
            return SentenceForm(form, f.subject, f.operands, f.raw, f.line, f.modifier)
        elif f.form == "state_flag":
            sid = self.recent_state.get(f.subject)
            if sid is None:
                self.error(line, "UNKNOWN_STATE", f"no declared state named {f.subject!r}")
                return f
            s = self.model.state(sid)
            if f.modifier == "initial":
                s = State(s.id, s.owner, s.name, True, s.final)
            else:
                s = State(s.id, s.owner, s.name, s.initial, True)
            self.model.replace_state(s)
        elif f.form == "exhibits":
            src = self.resolve(f.subject, line)
            self.declared.add(src)
            for op in f.operands:
                self.link(line, LinkKind.EXHIBITION, src, self.attribute(src, op.name, line))
        elif f.form in ("consists_of", "zooms_into"):
            src = self.resolve(f.subject, line)
            self.declared.add(src)
            for op in f.operands:
                dst = self.resolve(op.name, line)
                self.declared.add(dst)
                self.link(line, _FORM_LINK[f.form], src, dst)
        elif f.form == "occurs_if":
            dst = self.top(f.subject, line)
            self.declared.add(dst)
            op = f.operands[0]
            src = self.resolve(op.name, line)
            state = self.find_state(src, op.state, line) if op.state else None
            if op.state and state is None:
                return f
            self.link(line, LinkKind.CONDITION, src, dst, source_state=state)
        elif f.form == "handles":
            src = self.resolve(f.subject, line)
            self.declared.add(src)
            for op in f.operands:
                self.link(line, LinkKind.AGENT, src, self.top(op.name, line))
        elif f.form == "changes":
            src = self.top(f.subject, line)
            self.declared.add(src)
            for op in f.operands:
                dst = self.resolve(op.name, line)
                a = self.find_state(dst, op.state or "", line)
                b = self.find_state(dst, op.to_state or "", line)
                if a and b:
                    self.link(line, LinkKind.STATE_CHANGE, src, dst, from_state=a, to_state=b)
        else:
            src = self.top(f.subject, line)
            self.declared.add(src)
            for op in f.operands:
                dst = self.resolve(op.name, line)
                state = self.find_state(dst, op.state, line) if op.state else None
                if op.state and state is None:
                    continue
                self.link(line, _FORM_LINK[f.form], src, dst, target_state=state)
        return f

    def finish(self) -> None:
        for t in list(self.model.things):
            if t.id not in self.declared:
                self.model.replace_thing(
                    Thing(t.id, t.name, t.kind, t.essence, t.affiliation, t.scope, True)
                )
                self.diags.append(
                    ParseDiagnostic(
                        self.first_ref.get(t.id, 0),
                        "warning",
                        "IMPLICIT_DECL",
                        f"{t.name!r} is referenced but never declared; assumed informational",
                    )
                )


def parse_document(text: str, name: str = "model") -> tuple[Model, list[ParseDiagnostic]]:
    """Parse OPL text into a Model. Never raises on bad input."""
    try:
        forms, diags = parse_sentences(text)
    except Exception as exc:  # parsing is total by contract
        return Model(name), [ParseDiagnostic(0, "error", "INTERNAL", repr(exc))]
    process_names = {f.subject for f in forms if f.form in PROCEDURAL_FORMS}
    process_names |= {op.name for f in forms if f.form == "handles" for op in f.operands}
    b = _Builder(Model(name), process_names, list(diags))
    for f in forms:
        try:
            b.apply(f)
        except (ModelError, DuplicateNameError) as exc:
            b.error(f.line, "MODEL_ERROR", str(exc))
    b.finish()
    return b.model, sorted(b.diags, key=lambda d: (d.line, d.severity, d.code, d.message))


# -- rendering ---------------------------------------------------------------


def join_list(items: list[str], conj: str = "and") -> str:
    if len(items) == 1:
        return items[0]
    if len(items) == 2:
        return f"{items[0]} {conj} {items[1]}"
    return ", ".join(items[:-1]) + f", {conj} " + items[-1]


def _decl(t: Thing) -> str | None:
    phys = t.essence is Essence.PHYSICAL
    env = t.affiliation is Affiliation.ENVIRONMENTAL
    if phys and env:
        return f"{t.name} is environmental and physical."
    if phys:
        return f"{t.name} is physical."
    if env:
        return f"{t.name} is environmental."
    return None


class _Renderer:
    def __init__(self, model: Model):
        self.m = model
        self.order = {l.id: i for i, l in enumerate(model.links)}
        self.lines: list[str] = []

    def state_name(self, sid: str | None) -> str:
        return self.m.state(sid).name if sid else ""

    def states_block(self, t: Thing) -> None:
        states = self.m.states_of(t.id)
        if not states:
            return
        self.lines.append(f"{t.name} can be {join_list([s.name for s in states], 'or')}.")
        for s in states:
            if s.initial:
                self.lines.append(f"{s.name} is initial.")
            if s.final:
                self.lines.append(f"{s.name} is final.")

    def groups(self, kinds, key_end: str = "source") -> list[tuple[str, LinkKind, list[Link]]]:
        grouped: dict[tuple[str, LinkKind], list[Link]] = {}
        for l in self.m.links:
            if l.kind in kinds:
                grouped.setdefault((getattr(l, key_end), l.kind), []).append(l)
        kind_order = {k: i for i, k in enumerate(kinds)}
        items = [(subj, kind, links) for (subj, kind), links in grouped.items()]
        items.sort(
            key=lambda g: (self.m.thing(g[0]).name, kind_order[g[1]], self.order[g[2][0].id])
        )
        return items

    def structural(self, owner_filter) -> None:
        kinds = (LinkKind.AGGREGATION, LinkKind.IN_ZOOM, LinkKind.EXHIBITION)
        for subj, kind, links in self.groups(kinds):
            if not owner_filter(self.m.thing(subj)):
                continue
            self.structural_group(subj, kind, links)

    def structural_group(self, subj: str, kind: LinkKind, links: list[Link]) -> None:
        names = [self.m.thing(l.target).name for l in links]
        self.lines.append(f"{self.m.thing(subj).name} {_LINK_VERB[kind]} {join_list(names)}.")
        if kind is not LinkKind.EXHIBITION:
            return
        attrs: list[str] = []
        for l in links:
            t = self.m.thing(l.target)
            if t.scope == subj and t.id not in attrs:
                attrs.append(t.id)
        for aid in attrs:
            t = self.m.thing(aid)
            decl = _decl(t)
            if decl:
                self.lines.append(decl)
            self.states_block(t)
        for aid in attrs:
            kinds = (LinkKind.AGGREGATION, LinkKind.IN_ZOOM, LinkKind.EXHIBITION)
            for s, k, ls in self.groups(kinds):
                if s == aid:
                    self.structural_group(s, k, ls)

    def procedural(self) -> None:
        kinds = (
            LinkKind.CONDITION,
            LinkKind.INSTRUMENT,
            LinkKind.STATE_CHANGE,
            LinkKind.CONSUMPTION,
            LinkKind.RESULT,
            LinkKind.EFFECT,
        )
        entries: list[tuple[tuple, list[str]]] = []
        for subj, kind, links in self.groups(kinds):
            name = self.m.thing(subj).name
            key = (name, 0, self.order[links[0].id])
            if kind is LinkKind.CONDITION:
                continue
            if kind is LinkKind.STATE_CHANGE:
                parts = [
                    f"{self.m.thing(l.target).name} from {self.state_name(l.from_state)} to {self.state_name(l.to_state)}"
                    for l in links
                ]
                entries.append((key, [f"{name} changes {join_list(parts)}."]))
                continue
            ops = []
            for l in links:
                target = self.m.thing(l.target).name
                ops.append(f"{self.state_name(l.target_state)} {target}" if l.target_state else target)
            entries.append((key, [f"{name} {_LINK_VERB[kind]} {join_list(ops)}."]))
        for l in self.m.links:
            if l.kind is LinkKind.CONDITION:
                state = self.state_name(l.source_state) if l.source_state else EXISTENT
                name = self.m.thing(l.target).name
                entries.append(
                    ((name, 0, self.order[l.id]), [f"{name} occurs if {self.m.thing(l.source).name} is in {state}."])
                )
        for subj, _, links in self.groups((LinkKind.AGENT,)):
            name = self.m.thing(subj).name
            targets = [self.m.thing(l.target).name for l in links]
            entries.append(((name, 1, self.order[links[0].id]), [f"{name} handles {join_list(targets)}."]))
        entries.sort(key=lambda e: e[0])
        for _, sentences in entries:
            self.lines.extend(sentences)

    def render(self) -> str:
        top = sorted((t for t in self.m.things if t.scope is None), key=lambda t: (t.name, t.id))
        for t in top:
            decl = _decl(t)
            if decl:
                self.lines.append(decl)
        for t in top:
            if t.kind is Kind.OBJECT:
                self.states_block(t)
        self.structural(lambda t: t.scope is None)
        self.procedural()
        return "\n".join(self.lines) + ("\n" if self.lines else "")


def render_opl(model: Model) -> str:
    """Canonical OPL text: declarations, states, structural, procedural.

    Within each section sentences are ordered by subject name and then by
    link declaration order. Attribute declarations and state sets follow the
    exhibits sentence that introduces the attribute, since unqualified state
    sentences bind to the most recently exhibited attribute of that name.
    """
    return _Renderer(model).render()
