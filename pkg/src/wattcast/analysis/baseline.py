"""Constant-speed comparison policies (FIFO and longest-wait-first)."""

from __future__ import annotations

from ..blaps import COMPLETION_SNAP, SimState, next_event
from ..errors import InputError
from ..model import FractionalSchedule, Interval, Trace
from ..power import PowerFunction
from .metrics import Metrics, objective

POLICIES = ("FIFO", "LWF")


def _pick_page(state: SimState, policy: str) -> str:
    if policy == "FIFO":
        return min(state.outstanding, key=lambda r: r.key).page
    waits: dict[str, float] = {}
    for r in state.outstanding:
        waits[r.page] = waits.get(r.page, 0.0) + (state.time - r.arrival)
    return min(waits, key=lambda p: (-waits[p], p))


def fixed_speed_baseline(trace: Trace, P: PowerFunction, speed: float,
                         policy: str = "FIFO") -> tuple[FractionalSchedule, Metrics]:
    """Serve one page at a time at constant ``speed``.

    The page choice is revisited at every arrival and completion: FIFO picks
    the page of the oldest outstanding request, LWF the page whose
    outstanding requests have waited longest in total (ties by page id).
    """
    if not speed > 0:
        raise InputError(f"baseline speed must be positive, got {speed}")
    policy = policy.upper()
    if policy not in POLICIES:
        raise InputError(f"unknown baseline policy {policy!r}")
    sigma = trace.sigma
    pending = list(trace.requests)
    nxt = 0
    state = SimState()
    intervals: list[Interval] = []
    completions: dict[int, float] = {}
    while True:
        while nxt < len(pending) and pending[nxt].arrival <= state.time:
            r = pending[nxt]
            nxt += 1
            state.outstanding.append(r)
            state.residual[r.rid] = sigma[r.page]
        if not state.outstanding:
            if nxt == len(pending):
                break
            t_next = pending[nxt].arrival
            intervals.append(Interval(state.time, t_next, 0.0, 0))
            state.time = t_next
            continue
        page = _pick_page(state, policy)
        rates = {page: speed}
        t_arr = pending[nxt].arrival if nxt < len(pending) else None
        ev = next_event(state, rates, t_arr)
        dt = ev.time - state.time
        n = len(state.outstanding)
        if dt > 0:
            intervals.append(Interval(state.time, ev.time, speed, n, ((page, speed),)))
            for r in state.outstanding:
                if r.page == page:
                    state.residual[r.rid] -= speed * dt
        state.time = ev.time
        if ev.kind != "completion":
            continue
        for r in [q for q in state.outstanding
                  if q.rid == ev.rid
                  or (q.page == page and state.residual[q.rid] <= COMPLETION_SNAP * sigma[q.page])]:
            state.outstanding.remove(r)
            del state.residual[r.rid]
            completions[r.rid] = state.time

    fs = FractionalSchedule(trace, P, tuple(intervals), completions, policy=policy.lower())
    return fs, objective(fs, P, "raw")
