"""Object-process factory models, conformance grading, telemetry KPIs and life-cycle impacts."""

from .core import Affiliation, Essence, Kind, Link, LinkKind, Model, State, Thing, add_link, add_state, add_thing, validate_graph
from .opl import parse_document, render_opl

__all__ = [
    "Affiliation",
    "Essence",
    "Kind",
    "Link",
    "LinkKind",
    "Model",
    "State",
    "Thing",
    "add_link",
    "add_state",
    "add_thing",
    "parse_document",
    "render_opl",
    "validate_graph",
]
