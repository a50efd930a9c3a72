from __future__ import annotations

from dataclasses import replace

from factoryopm.core import LinkKind, Model


def without_links(model: Model, process: str, kind: LinkKind) -> Model:
    """Copy of ``model`` with every ``kind`` link touching ``process`` removed."""
    pid = model.find(process).id
    keep = [l for l in model.links if not (l.kind is kind and pid in (l.source, l.target))]
    assert len(keep) < len(model.links), f"{process} has no {kind.value} link"
    return replace(model, links=keep, things=list(model.things), states=list(model.states))


def opl_without(text: str, prefix: str) -> str:
    """OPL text with every line starting with ``prefix`` dropped."""
    return "".join(line for line in text.splitlines(keepends=True) if not line.startswith(prefix))
