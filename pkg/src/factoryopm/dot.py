"""Graphviz DOT export.

Objects are boxes, processes ellipses; physical things are filled, environmental
things dashed. Objects with states become clusters holding one rounded node per
state.
"""

from __future__ import annotations

from .core import Affiliation, Essence, Kind, LinkKind, Model

_EDGE_STYLE = {
    LinkKind.AGGREGATION: 'arrowhead=diamond, label="consists of"',
    LinkKind.EXHIBITION: 'arrowhead=odiamond, label="exhibits"',
    LinkKind.IN_ZOOM: 'style=dotted, label="zooms into"',
    LinkKind.CONSUMPTION: 'dir=back, label="consumes"',
    LinkKind.RESULT: 'label="yields"',
    LinkKind.EFFECT: 'dir=both, label="affects"',
    LinkKind.INSTRUMENT: 'arrowhead=odot, label="requires"',
    LinkKind.AGENT: 'arrowhead=dot, label="handles"',
    LinkKind.CONDITION: 'arrowhead=odot, label="c"',
    LinkKind.STATE_CHANGE: 'label="changes"',
}


def _q(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def export_dot(model: Model) -> str:
    lines = [f"digraph {_q(model.name)} {{", "  rankdir=LR;", "  node [fontname=Helvetica];"]
    owners = {s.owner for s in model.states}
    for t in model.things:
        attrs = ["shape=box" if t.kind is Kind.OBJECT else "shape=ellipse"]
        style = []
        if t.essence is Essence.PHYSICAL:
            style.append("filled")
            attrs.append('fillcolor="#d9d9d9"')
        if t.affiliation is Affiliation.ENVIRONMENTAL:
            style.append("dashed")
        if style:
            attrs.append(f'style="{",".join(style)}"')
        attrs.append(f"label={_q(t.name)}")
        node = f"  {_q(t.id)} [{', '.join(attrs)}];"
        if t.id not in owners:
            lines.append(node)
            continue
        lines.append(f"  subgraph {_q('cluster_' + t.id)} {{")
        lines.append(f"    label={_q(t.name)};")
        lines.append("  " + node)
        for s in model.states_of(t.id):
            peripheries = 2 if s.final else 1
            penwidth = 2 if s.initial else 1
            lines.append(
                f"    {_q(s.id)} [shape=box, style=rounded, label={_q(s.name)}, "
                f"peripheries={peripheries}, penwidth={penwidth}];"
            )
        lines.append("  }")
    for l in model.links:
        src, dst = l.source, l.target
        if l.kind is LinkKind.STATE_CHANGE:
            lines.append(f"  {_q(l.from_state or dst)} -> {_q(src)} [label=\"from\"];")
            lines.append(f"  {_q(src)} -> {_q(l.to_state or dst)} [label=\"to\"];")
            continue
        if l.source_state:
            src = l.source_state
        if l.target_state:
            dst = l.target_state
        lines.append(f"  {_q(src)} -> {_q(dst)} [{_EDGE_STYLE[l.kind]}];")
    lines.append("}")
    return "\n".join(lines) + "\n"
