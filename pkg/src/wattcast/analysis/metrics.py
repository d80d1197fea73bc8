from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import IncompleteSchedule, InputError
from ..model import FractionalSchedule, fmt
from ..power import PowerFunction, power_uncapped


@dataclass(frozen=True)
class Metrics:
    F: float
    E: float
    G: float
    flows: dict[int, float] = field(default_factory=dict)
    mode: str = "raw"

    def lines(self, prefix: str = "") -> list[str]:
        return [f"{prefix}F={fmt(self.F)}", f"{prefix}E={fmt(self.E)}", f"{prefix}G={fmt(self.G)}"]


def objective(schedule: FractionalSchedule, P: PowerFunction | None = None,
              mode: str = "raw") -> Metrics:
    """Flow time, energy and their sum for a completed schedule.

    In ``augmented`` mode every interval is charged P(speed / factor), the
    power of the nominal (unaugmented) speed; ``raw`` charges P(speed).
    """
    if mode not in ("raw", "augmented"):
        raise InputError(f"unknown accounting mode {mode!r}")
    P = P or schedule.power
    flows = {}
    for r in schedule.trace.requests:
        f = schedule.completions.get(r.rid)
        if f is None:
            raise IncompleteSchedule(f"request {r.rid} never completes")
        flows[r.rid] = f - r.arrival
    scale = schedule.factor if mode == "augmented" else 1.0
    E = 0.0
    for iv in schedule.intervals:
        if iv.speed > 0:
            E += power_uncapped(P, iv.speed / scale) * iv.duration
    F = sum(flows.values())
    return Metrics(F, E, F + E, flows, mode)
