"""Life-cycle inventories per functional unit and midpoint impact scores."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

INVENTORY_FU_HEADER = ["fu_name", "fu_amount", "fu_unit", "parts_per_fu"]
INVENTORY_HEADER = ["flow_name", "amount", "unit", "direction"]
MATRIX_HEADER = ["category", "category_unit", "flow_name", "factor"]
POLICIES = ("error", "warn-zero")


class LcaError(Exception):
    pass


class UnitMismatchError(LcaError):
    pass


class UncharacterizedFlowError(LcaError):
    def __init__(self, flows: list[str]):
        super().__init__("no characterization factors for: " + "; ".join(flows))
        self.flows = flows


class NoElectricityFlowError(LcaError):
    pass


@dataclass(frozen=True)
class Flow:
    name: str
    amount: float
    unit: str
    direction: str
    system: str = ""

    def __post_init__(self):
        if not self.name or not self.unit:
            raise LcaError("flow name and unit must be nonempty")
        if self.direction not in ("input", "output"):
            raise LcaError(f"flow {self.name!r}: direction must be input or output")


@dataclass(frozen=True)
class FunctionalUnit:
    name: str
    amount: float
    unit: str
    parts_per_fu: int | None = None

    def __post_init__(self):
        if not self.amount > 0:
            raise LcaError("functional unit amount must be positive")
        if self.parts_per_fu is not None and self.parts_per_fu <= 0:
            raise LcaError("parts_per_fu must be a positive integer")


@dataclass(frozen=True)
class Inventory:
    """Flows per functional unit.

    Repeated (name, direction) pairs are allowed and kept apart by their
    ordinal position; published inventories sometimes list a flow twice for
    different parts of the system.
    """

    functional_unit: FunctionalUnit
    flows: tuple[Flow, ...] = ()
    boundary: str = ""

    def keyed(self) -> list[tuple[tuple[str, str, int], Flow]]:
        seen: dict[tuple[str, str], int] = {}
        out = []
        for f in self.flows:
            k = (f.name, f.direction)
            seen[k] = seen.get(k, 0) + 1
            out.append(((f.name, f.direction, seen[k]), f))
        return out


@dataclass(frozen=True)
class CharacterizationMatrix:
    method: str
    entries: dict[tuple[str, str], float]
    category_units: dict[str, str]

    def __post_init__(self):
        for category, _ in self.entries:
            if category not in self.category_units:
                raise LcaError(f"category {category!r} has no unit")

    @property
    def categories(self) -> list[str]:
        return sorted(self.category_units)

    @property
    def flow_names(self) -> set[str]:
        return {flow for _, flow in self.entries}


@dataclass(frozen=True)
class ImpactScores:
    scores: dict[str, tuple[float, str]]
    uncharacterized: tuple[str, ...] = field(default=())

    def records(self) -> list[dict]:
        return [{"name": c, "value": v, "unit": u} for c, (v, u) in sorted(self.scores.items())]


def scale_inventory(
    flows: list[Flow] | tuple[Flow, ...],
    batch_output: float,
    batch_unit: str,
    functional_unit: FunctionalUnit,
    boundary: str = "",
) -> Inventory:
    """Scale measured batch flows to one functional unit."""
    if batch_unit != functional_unit.unit:
        raise UnitMismatchError(f"batch output in {batch_unit!r}, functional unit in {functional_unit.unit!r}")
    if not batch_output > 0:
        raise LcaError("batch output must be positive")
    k = functional_unit.amount / batch_output
    return Inventory(functional_unit, tuple(replace(f, amount=f.amount * k) for f in flows), boundary)


def assess(inventory: Inventory, matrix: CharacterizationMatrix, missing_flow: str = "error") -> ImpactScores:
    """Category score = sum over flows of factor(category, flow) * amount.

    Flows are matched to factors by exact name. Terms are accumulated in flow
    name order with an exactly rounded sum, so results do not depend on the
    order flows were listed in.
    """
    if missing_flow not in POLICIES:
        raise ValueError(f"missing_flow must be one of {POLICIES}")
    if not matrix.entries and not matrix.category_units:
        raise LcaError("characterization matrix is empty")
    known = matrix.flow_names
    missing = sorted({f.name for f in inventory.flows if f.name not in known})
    if missing and missing_flow == "error":
        raise UncharacterizedFlowError(missing)
    ordered = sorted(inventory.keyed(), key=lambda kf: kf[0])
    scores = {}
    for category in matrix.categories:
        terms = [
            matrix.entries[(category, f.name)] * f.amount
            for _, f in ordered
            if (category, f.name) in matrix.entries
        ]
        scores[category] = (math.fsum(terms), matrix.category_units[category])
    return ImpactScores(scores, tuple(missing))


@dataclass(frozen=True)
class CrossCheck:
    electricity_per_fu: float
    parts_per_fu: int
    per_part: float
    kpi_value: float
    deviation: float
    flows: tuple[str, ...]

    @property
    def deviation_pct(self) -> float:
        return 100.0 * self.deviation

    def to_dict(self) -> dict:
        return {
            "electricity_per_fu_kwh": self.electricity_per_fu,
            "parts_per_fu": self.parts_per_fu,
            "inventory_kwh_per_part": self.per_part,
            "kpi_kwh_per_part": self.kpi_value,
            "relative_deviation": self.deviation,
            "relative_deviation_pct": round(self.deviation_pct, 4),
            "flows": list(self.flows),
        }


def _is_electricity(f: Flow) -> bool:
    return f.direction == "input" and f.unit.lower() == "kwh" and f.name.lower().startswith("electricity")


def energy_cross_check(inventory: Inventory, kpi_value: float, parts_per_fu: int | None = None) -> CrossCheck:
    """Compare inventory electricity per part with the telemetry KPI.

    Foreground-tagged electricity flows are used when any exist, otherwise all
    electricity inputs. Deviation is relative to the KPI value.
    """
    parts = parts_per_fu if parts_per_fu is not None else inventory.functional_unit.parts_per_fu
    if not parts or parts <= 0:
        raise LcaError("parts_per_fu must be a positive integer for the cross-check")
    elec = [f for f in inventory.flows if _is_electricity(f)]
    if not elec:
        raise NoElectricityFlowError("inventory has no electricity input flow in kWh")
    foreground = [f for f in elec if f.system == "foreground"]
    used = foreground or elec
    per_fu = math.fsum(f.amount for f in used)
    per_part = per_fu / parts
    if kpi_value == 0:
        raise LcaError("KPI value must be nonzero")
    deviation = abs(per_part - kpi_value) / abs(kpi_value)
    return CrossCheck(per_fu, parts, per_part, kpi_value, deviation, tuple(f"{f.name} {f.amount} {f.unit}" for f in used))


# -- file formats -------------------------------------------------------------


def _rows(text: str) -> list[list[str]]:
    return [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]


def parse_inventory(text: str) -> Inventory:
    """Inventory CSV: a functional-unit block, then the flow table.

    The flow table may carry an extra ``system`` column (foreground or
    background).
    """
    rows = _rows(text)
    if len(rows) < 2 or [c.strip() for c in rows[0]] != INVENTORY_FU_HEADER:
        raise LcaError("inventory must start with header " + ",".join(INVENTORY_FU_HEADER))
    fu_name, fu_amount, fu_unit, parts = (c.strip() for c in rows[1])
    fu = FunctionalUnit(fu_name, float(fu_amount), fu_unit, int(parts) if parts else None)
    if len(rows) < 3:
        return Inventory(fu)
    header = [c.strip() for c in rows[2]]
    if header[:4] != INVENTORY_HEADER or header[4:] not in ([], ["system"]):
        raise LcaError("flow table header must be " + ",".join(INVENTORY_HEADER) + "[,system]")
    flows = []
    for n, row in enumerate(rows[3:], start=4):
        cells = [c.strip() for c in row]
        if len(cells) != len(header):
            raise LcaError(f"flow row {n}: expected {len(header)} fields")
        try:
            amount = float(cells[1])
        except ValueError:
            raise LcaError(f"flow row {n}: bad amount {cells[1]!r}") from None
        flows.append(Flow(cells[0], amount, cells[2], cells[3], cells[4] if len(cells) > 4 else ""))
    return Inventory(fu, tuple(flows))


def parse_matrix(text: str, method: str = "") -> CharacterizationMatrix:
    rows = _rows(text)
    if not rows or [c.strip() for c in rows[0]] != MATRIX_HEADER:
        raise LcaError("matrix header must be " + ",".join(MATRIX_HEADER))
    entries: dict[tuple[str, str], float] = {}
    units: dict[str, str] = {}
    for n, row in enumerate(rows[1:], start=2):
        if len(row) != 4:
            raise LcaError(f"matrix row {n}: expected 4 fields")
        category, unit, flow, factor = (c.strip() for c in row)
        if units.setdefault(category, unit) != unit:
            raise LcaError(f"matrix row {n}: category {category!r} has two units")
        if (category, flow) in entries:
            raise LcaError(f"matrix row {n}: duplicate factor for {category!r} / {flow!r}")
        try:
            entries[(category, flow)] = float(factor)
        except ValueError:
            raise LcaError(f"matrix row {n}: bad factor {factor!r}") from None
    return CharacterizationMatrix(method, entries, units)


def load_inventory(path: str | Path) -> Inventory:
    return parse_inventory(Path(path).read_text(encoding="utf-8"))


def load_matrix(path: str | Path) -> CharacterizationMatrix:
    p = Path(path)
    return parse_matrix(p.read_text(encoding="utf-8"), method=p.stem)
