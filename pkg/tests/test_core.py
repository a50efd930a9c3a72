from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from factoryopm.core import (
    Affiliation,
    DuplicateNameError,
    Essence,
    IllegalLinkError,
    Kind,
    Link,
    LinkKind,
    Model,
    NoZoomChildrenError,
    UnresolvedReferenceError,
    add_link,
    add_state,
    add_thing,
    in_zoom,
    validate_graph,
)
from factoryopm.opl import parse_document
from oracles import legality_violations
from strategies import raw_models

from conftest import FIXTURES


def small_line() -> tuple[Model, dict[str, str]]:
    m = Model("line")
    ids = {
        "Loader": add_thing(m, "Loader", essence="physical"),
        "Electricity": add_thing(m, "Electricity", essence="physical"),
        "Loading": add_thing(m, "Loading", kind="process"),
        "Board": add_thing(m, "Board"),
    }
    return m, ids


def test_add_thing_defaults_and_ids():
    m = Model()
    a = add_thing(m, "Loader", Kind.OBJECT, Essence.PHYSICAL)
    b = add_thing(m, "Environment", essence="physical", affiliation="environmental")
    assert (a, b) == ("t1", "t2")
    assert m.thing(a).affiliation is Affiliation.SYSTEMIC
    assert m.thing(b).affiliation is Affiliation.ENVIRONMENTAL
    assert add_thing(m, "Note") and m.find("Note").essence is Essence.INFORMATIONAL


def test_duplicate_name_in_scope():
    m = Model()
    add_thing(m, "Loader")
    with pytest.raises(DuplicateNameError):
        add_thing(m, "Loader")


def test_same_name_in_different_scopes():
    m = Model()
    p = add_thing(m, "Loading", kind="process")
    q = add_thing(m, "Reflow", kind="process")
    e1 = add_thing(m, "Event", scope=p)
    e2 = add_thing(m, "Event", scope=q)
    assert e1 != e2
    assert m.display_name(e2) == "Reflow/Event"


def test_states_only_on_objects():
    m, ids = small_line()
    with pytest.raises(IllegalLinkError):
        add_state(m, ids["Loading"], "busy")
    add_state(m, ids["Board"], "at Stack")
    with pytest.raises(DuplicateNameError):
        add_state(m, ids["Board"], "at Stack")


def test_legal_procedural_links():
    m, ids = small_line()
    add_link(m, "consumption", ids["Loading"], ids["Electricity"])
    add_link(m, LinkKind.INSTRUMENT, ids["Loading"], ids["Loader"])
    assert validate_graph(m) == []


def test_reversed_consumption_is_illegal():
    m, ids = small_line()
    with pytest.raises(IllegalLinkError):
        add_link(m, "consumption", ids["Loader"], ids["Loading"])
    assert m.links == []


def test_unresolved_state_qualifier():
    m, ids = small_line()
    other = add_thing(m, "Tray")
    s = add_state(m, other, "full")
    with pytest.raises(UnresolvedReferenceError):
        add_link(m, "consumption", ids["Loading"], ids["Board"], target_state=s)
    with pytest.raises(UnresolvedReferenceError):
        add_link(m, "consumption", ids["Loading"], "t42")


def test_state_change_rules():
    m, ids = small_line()
    a = add_state(m, ids["Board"], "at Stack")
    b = add_state(m, ids["Board"], "at Printer")
    add_link(m, "state_change", ids["Loading"], ids["Board"], from_state=a, to_state=b)
    with pytest.raises(IllegalLinkError):
        add_link(m, "state_change", ids["Loading"], ids["Board"], from_state=a, to_state=a)
    with pytest.raises(IllegalLinkError):
        add_link(m, "state_change", ids["Loading"], ids["Board"], from_state=a)
    with pytest.raises(IllegalLinkError):
        add_link(m, "effect", ids["Loading"], ids["Board"], from_state=a, to_state=b)


def test_empty_model_is_valid():
    assert validate_graph(Model()) == []


def test_pcb_model_is_valid(pcb_model):
    assert validate_graph(pcb_model) == []


def test_mutant_state_change_to_foreign_state(pcb_model):
    change = next(l for l in pcb_model.links if l.kind is LinkKind.STATE_CHANGE)
    foreign = next(s for s in pcb_model.states if s.owner != change.target)
    pcb_model.links[pcb_model.links.index(change)] = Link(
        change.id, change.kind, change.source, change.target, from_state=change.from_state, to_state=foreign.id
    )
    violations = validate_graph(pcb_model)
    assert [v.code for v in violations] == ["STATE_OWNER"]
    assert violations[0].subject == change.id


def test_structural_links_accept_any_endpoints():
    m, ids = small_line()
    for kind in ("aggregation", "exhibition", "in_zoom"):
        add_link(m, kind, ids["Loading"], ids["Loader"])
        add_link(m, kind, ids["Loader"], ids["Loading"])
    assert validate_graph(m) == []


def _corpus(name: str) -> Model:
    model, _ = parse_document((FIXTURES / "corpus" / name).read_text(encoding="utf-8"))
    return model


def test_in_zoom_input_material():
    m = _corpus("input_material.opl")
    root = next(t for t in m.things if t.name.startswith("Input Material Objects"))
    view = in_zoom(m, root.id)
    top = {t.name for t in view.things if t.scope is None}
    assert top == {"Raw material", "Parts", "Sub-assemblies", "Assemblies", "Interface", "Consumables"}
    assert any(l.kind is LinkKind.EXHIBITION for l in view.links)


def test_in_zoom_equipment():
    m = _corpus("equipment.opl")
    view = in_zoom(m, m.find("Equipment").id)
    assert {t.name for t in view.things if t.scope is None} == {"Machine", "Hand Tool", "Material handling", "Computer system"}


def test_in_zoom_leaf():
    m, ids = small_line()
    with pytest.raises(NoZoomChildrenError):
        in_zoom(m, ids["Loader"])


def test_in_zoom_is_read_only():
    m = _corpus("equipment.opl")
    before = m.digest()
    in_zoom(m, m.find("Equipment").id)
    assert m.digest() == before


def test_json_round_trip(pcb_model):
    again = Model.from_dict(pcb_model.to_dict())
    assert again == pcb_model
    assert again.digest() == pcb_model.digest()


@settings(max_examples=300, deadline=None)
@given(raw_models())
def test_validate_graph_matches_exhaustive_checker(model):
    got = sorted((v.code, v.subject) for v in validate_graph(model))
    assert got == legality_violations(model.to_dict())


@settings(max_examples=200, deadline=None)
@given(st.data())
def test_links_accepted_by_add_link_validate_clean(data):
    m = Model()
    for i in range(data.draw(st.integers(1, 8))):
        add_thing(m, f"T{i}", kind=data.draw(st.sampled_from(list(Kind))))
    for t in m.things:
        if t.kind is Kind.OBJECT:
            for s in data.draw(st.lists(st.sampled_from(["a", "b", "c"]), unique=True, max_size=3)):
                add_state(m, t.id, s)
    ids = [t.id for t in m.things]
    states = [s.id for s in m.states] + [None]
    for _ in range(data.draw(st.integers(0, 15))):
        try:
            add_link(
                m,
                data.draw(st.sampled_from(list(LinkKind))),
                data.draw(st.sampled_from(ids)),
                data.draw(st.sampled_from(ids)),
                source_state=data.draw(st.sampled_from(states)),
                target_state=data.draw(st.sampled_from(states)),
                from_state=data.draw(st.sampled_from(states)),
                to_state=data.draw(st.sampled_from(states)),
            )
        except (IllegalLinkError, UnresolvedReferenceError):
            pass
    assert validate_graph(m) == []
