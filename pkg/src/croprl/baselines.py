"""Non-learning comparison policies: Null (no inputs) and a calendar Expert.

The Expert applies fixed amounts a fixed number of days after planting.  The
shipped default schedule is a placeholder (fertilizer 56 kg/ha at 0 and 45
days after planting; 12 L/m^2 of water every 7 days from day 30 through
day 107) and can be replaced via a CSV schedule file with columns
``kind{fert|irr}, day, amount``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .simulator import TaskMode


class ScheduleOutOfBounds(ValueError):
    """A schedule amount exceeds the task's action bounds."""


@dataclass(frozen=True)
class ExpertSchedule:
    fert_events: tuple[tuple[int, float], ...] = ()
    irr_events: tuple[tuple[int, float], ...] = ()
    max_fert_kg: float = 200.0
    max_water_l: float = 50.0

    def __post_init__(self) -> None:
        for name, events, bound in (
            ("fert", self.fert_events, self.max_fert_kg),
            ("irr", self.irr_events, self.max_water_l),
        ):
            last = -1
            for day, amount in events:
                if day < 0:
                    raise ValueError(f"{name} event day {day} must be >= 0")
                if day <= last:
                    raise ValueError(f"{name} event days must be strictly increasing")
                last = day
                if not 0.0 <= amount <= bound:
                    raise ScheduleOutOfBounds(
                        f"{name} amount {amount} on day {day} outside [0, {bound}]"
                    )

    def fert_total(self) -> float:
        return sum(a for _, a in self.fert_events)

    def irr_total(self) -> float:
        return sum(a for _, a in self.irr_events)


def default_expert_schedule() -> ExpertSchedule:
    return ExpertSchedule(
        fert_events=((0, 56.0), (45, 56.0)),
        irr_events=tuple((day, 12.0) for day in range(30, 110, 7)),
    )


@dataclass(frozen=True)
class NullPolicy:
    """Zero fertilizer and zero water, every day."""

    mode: TaskMode

    def act(self, obs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        dim = 2 if TaskMode(self.mode) == TaskMode.MIXED else 1
        return np.zeros(dim, dtype=np.float64)


@dataclass(frozen=True)
class ExpertPolicy:
    """Schedule lookup keyed on observed days-after-planting (obs field 0)."""

    mode: TaskMode
    schedule: ExpertSchedule = field(default_factory=default_expert_schedule)

    def act(self, obs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        dap = int(round(float(obs[0])))
        fert = dict(self.schedule.fert_events).get(dap, 0.0) if dap >= 0 else 0.0
        water = dict(self.schedule.irr_events).get(dap, 0.0) if dap >= 0 else 0.0
        mode = TaskMode(self.mode)
        if mode == TaskMode.FERTILIZATION:
            return np.array([fert], dtype=np.float64)
        if mode == TaskMode.IRRIGATION:
            return np.array([water], dtype=np.float64)
        return np.array([fert, water], dtype=np.float64)


def save_schedule_csv(schedule: ExpertSchedule, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["kind", "day", "amount"])
        for day, amount in schedule.fert_events:
            writer.writerow(["fert", day, repr(float(amount))])
        for day, amount in schedule.irr_events:
            writer.writerow(["irr", day, repr(float(amount))])


def load_schedule_csv(path, max_fert_kg: float = 200.0, max_water_l: float = 50.0) -> ExpertSchedule:
    fert: list[tuple[int, float]] = []
    irr: list[tuple[int, float]] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            kind = row["kind"].strip().lower()
            event = (int(row["day"]), float(row["amount"]))
            if kind == "fert":
                fert.append(event)
            elif kind == "irr":
                irr.append(event)
            else:
                raise ValueError(f"unknown schedule kind {kind!r}")
    return ExpertSchedule(
        fert_events=tuple(sorted(fert)),
        irr_events=tuple(sorted(irr)),
        max_fert_kg=max_fert_kg,
        max_water_l=max_water_l,
    )
