"""Regenerate the synthetic PCB line shift fixture.

Fixture policy (not measured data):
  * one 14 h shift, 06:00-20:00 factory local time (UTC+05:30);
  * four metered machines, 121.260 kWh in total;
  * the reflow oven draws 90 % (109.134 kWh), the other 10 % is split
    equally between screen printer and the two pick & place machines;
  * the screen printer enters "Printing" 258 times.

Energies are distributed in whole Wh so every column total is exact.

    python fixtures/make_pcb_shift.py
"""

from __future__ import annotations

import csv
from datetime import datetime, timedelta, timezone
from pathlib import Path

OUT = Path(__file__).parent / "telemetry"
TZ = timezone(timedelta(hours=5, minutes=30))
SHIFT_START = datetime(2024, 3, 4, 6, 0, tzinfo=TZ)
SHIFT_SECONDS = 14 * 3600
PARTS = 258
ENERGY_WH = {
    "screen_printer": 4042,
    "pick_place_1": 4042,
    "pick_place_2": 4042,
    "reflow_oven": 109134,
}


def cycle_starts() -> list[int]:
    usable = SHIFT_SECONDS - 600
    return [60 + round(i * usable / PARTS) for i in range(PARTS)]


def spread(total_wh: int, n: int) -> list[int]:
    base, rem = divmod(total_wh, n)
    return [base + (1 if i < rem else 0) for i in range(n)]


def with_energy(machine: str, events: list[tuple[int, str]]) -> list[tuple[str, str, str, str]]:
    """First row is a zero-energy start marker; the rest share the machine total."""
    shares = [0] + spread(ENERGY_WH[machine], len(events) - 1)
    rows = []
    for (offset, event), wh in zip(events, shares):
        ts = (SHIFT_START + timedelta(seconds=offset)).isoformat()
        rows.append((ts, machine, event, f"{wh / 1000:.3f}"))
    return rows


def screen_printer() -> list[tuple[int, str]]:
    events = [(0, "Idle")]
    for i, t in enumerate(cycle_starts()):
        events.append((t, "Printing"))
        events.append((t + 90, "Idle"))
        if i % 43 == 42:
            events.append((t + 120, "Cleaning"))
    events.append((SHIFT_SECONDS, "Idle"))
    return events


def pick_place(lag: int) -> list[tuple[int, str]]:
    events = [(0, "Idle")]
    for t in cycle_starts():
        events.append((t + lag, "Placing"))
        events.append((t + lag + 60, "Idle"))
    events.append((SHIFT_SECONDS, "Idle"))
    return events


def reflow() -> list[tuple[int, str]]:
    events = [(0, "setup")]
    for t in range(300, SHIFT_SECONDS, 300):
        events.append((t, "setup" if t <= 600 else "maintain"))
    events.append((SHIFT_SECONDS, "off"))
    return events


def write(name: str, rows) -> None:
    with open(OUT / name, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "machine_id", "event", "energy_kwh"])
        w.writerows(rows)


def main() -> None:
    OUT.mkdir(exist_ok=True)
    write("screen_printer.csv", with_energy("screen_printer", screen_printer()))
    write("pick_place_1.csv", with_energy("pick_place_1", pick_place(100)))
    write("pick_place_2.csv", with_energy("pick_place_2", pick_place(170)))
    write("reflow_oven.csv", with_energy("reflow_oven", reflow()))
    end = (SHIFT_START + timedelta(seconds=SHIFT_SECONDS)).isoformat()
    with open(OUT / "manual_shift.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["period_start", "period_end", "flow_name", "amount", "unit", "direction", "source_note"])
        start = SHIFT_START.isoformat()
        w.writerow([start, end, "Sloder Paste", "0.774", "kg", "input", "supervisor log, weighed jars"])
        w.writerow([start, end, "PCB components", "258", "set", "input", "kitting sheet"])
        w.writerow([start, end, "used printed wiring boards", "1.047", "kg", "output", "scrap bin weighed at shift end"])


if __name__ == "__main__":
    main()
