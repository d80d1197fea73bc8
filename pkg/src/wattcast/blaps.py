"""Event-driven simulation of the latest-arrival broadcast policy with speed scaling.

At time t with n outstanding requests the transmitter runs at
(1 + 6*eps) * Q(n) and splits that speed equally over the beta*n
latest-arriving outstanding requests; when beta*n is not an integer the
next-latest request receives the fractional remainder. Rates only change
at arrivals and completions, so every completion time is closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple

from .errors import EmptyQueue, NoPendingEvents, PowerAboveCapRange, SpeedCapExceeded
from .model import Config, Event, FractionalSchedule, Interval, Request, Trace
from .power import PowerFunction, SpeedInverse

# residual below this fraction of sigma counts as complete
COMPLETION_SNAP = 1e-10
# completions this close (relative) to an arrival are treated as simultaneous
TIME_SNAP = 1e-12
INTEGRAL_SNAP = 1e-9


@dataclass
class SimState:
    time: float = 0.0
    outstanding: list[Request] = field(default_factory=list)
    residual: dict[int, float] = field(default_factory=dict)
    beta: float = 1.0

    @property
    def cut(self) -> int:
        """Index in ``outstanding`` of the first request that receives any rate."""
        n = len(self.outstanding)
        return n - math.ceil(_share(self.beta, n))


class NextEvent(NamedTuple):
    time: float
    kind: str
    rid: int


def _share(beta: float, n: int) -> float:
    share = beta * n
    near = round(share)
    if abs(share - near) <= INTEGRAL_SNAP:
        return float(near)
    return share


def _total_speed(n: int, cfg: Config, Q: SpeedInverse) -> float:
    try:
        return cfg.speed_factor * Q(n)
    except PowerAboveCapRange as exc:
        raise SpeedCapExceeded(f"{n} outstanding requests need power beyond the cap: {exc}") from None


def active_rates(state: SimState, cfg: Config, Q: SpeedInverse) -> dict[int, float]:
    """Per-request contribution x for every outstanding request with positive rate."""
    reqs = state.outstanding
    n = len(reqs)
    if n == 0:
        raise EmptyQueue("no outstanding requests")
    total = _total_speed(n, cfg, Q)
    share = _share(cfg.beta, n)
    unit = total / share
    full = math.floor(share)
    frac = share - full
    rates = {r.rid: unit for r in reqs[n - full:]}
    if frac > 0:
        rates[reqs[n - full - 1].rid] = frac * unit
    return rates


def page_rates(state: SimState, rates: Mapping[int, float]) -> dict[str, float]:
    out: dict[str, float] = {}
    for r in state.outstanding:
        x = rates.get(r.rid, 0.0)
        if x > 0:
            out[r.page] = out.get(r.page, 0.0) + x
    return out


def next_event(state: SimState, rates: Mapping[str, float],
               next_arrival: float | None) -> NextEvent:
    """Earliest of the next arrival and the next completion.

    ``rates`` maps page -> aggregate broadcast rate. A completion that lands
    on (or within 1e-12 relative of) the next arrival wins the tie and is
    reported at the arrival's exact time.
    """
    best: NextEvent | None = None
    for r in state.outstanding:
        rate = rates.get(r.page, 0.0)
        if rate <= 0:
            continue
        t = state.time + state.residual[r.rid] / rate
        if best is None or (t, r.rid) < (best.time, best.rid):
            best = NextEvent(t, "completion", r.rid)
    if next_arrival is not None:
        if best is None or next_arrival < best.time - TIME_SNAP * max(1.0, abs(next_arrival)):
            return NextEvent(next_arrival, "arrival", -1)
        if best.time > next_arrival:
            best = NextEvent(next_arrival, "completion", best.rid)
    if best is None:
        raise NoPendingEvents("nothing outstanding is being broadcast and no arrivals remain")
    return best


def simulate(trace: Trace, P: PowerFunction, cfg: Config) -> FractionalSchedule:
    Q = SpeedInverse(P, cfg.tol)
    sigma = trace.sigma
    pending = list(trace.requests)
    nxt = 0
    state = SimState(beta=cfg.beta)
    intervals: list[Interval] = []
    completions: dict[int, float] = {}
    events: list[Event] = []

    def speed_for(n: int) -> float:
        return _total_speed(n, cfg, Q) if n else 0.0

    while True:
        while nxt < len(pending) and pending[nxt].arrival <= state.time:
            r = pending[nxt]
            nxt += 1
            state.outstanding.append(r)
            state.residual[r.rid] = sigma[r.page]
            n = len(state.outstanding)
            events.append(Event(state.time, "arrival", r.rid, n, speed_for(n)))
        if not state.outstanding:
            if nxt == len(pending):
                break
            t_next = pending[nxt].arrival
            intervals.append(Interval(state.time, t_next, 0.0, 0))
            state.time = t_next
            continue

        n = len(state.outstanding)
        x = active_rates(state, cfg, Q)
        prates = page_rates(state, x)
        t_arr = pending[nxt].arrival if nxt < len(pending) else None
        ev = next_event(state, prates, t_arr)
        dt = ev.time - state.time
        if dt > 0:
            intervals.append(Interval(
                state.time, ev.time, speed_for(n), n,
                tuple(sorted(prates.items())),
                tuple(sorted(x.items())),
            ))
            for r in state.outstanding:
                state.residual[r.rid] -= prates.get(r.page, 0.0) * dt
        state.time = ev.time
        if ev.kind != "completion":
            continue

        done = [r for r in state.outstanding
                if r.rid == ev.rid
                or (prates.get(r.page, 0.0) > 0
                    and state.residual[r.rid] <= COMPLETION_SNAP * sigma[r.page])]
        for r in sorted(done, key=lambda q: q.rid):
            state.outstanding.remove(r)
            del state.residual[r.rid]
            completions[r.rid] = state.time
            m = len(state.outstanding)
            events.append(Event(state.time, "completion", r.rid, m, speed_for(m)))

    return FractionalSchedule(
        trace=trace,
        power=P,
        intervals=tuple(intervals),
        completions=completions,
        policy="blaps",
        eps=cfg.eps,
        beta=cfg.beta,
        factor=cfg.speed_factor,
        events=tuple(events),
    )


def conservation_errors(fs: FractionalSchedule) -> dict[int, float]:
    """Per request: broadcast volume of its page over [arrival, completion] minus sigma."""
    out = {}
    for r in fs.trace.requests:
        f = fs.completions.get(r.rid)
        if f is None:
            continue
        vol = sum(iv.rate(r.page) * (min(iv.end, f) - max(iv.start, r.arrival))
                  for iv in fs.intervals
                  if iv.end > r.arrival and iv.start < f)
        out[r.rid] = vol - fs.trace.sigma[r.page]
    return out


def suffix_property_holds(fs: FractionalSchedule) -> bool:
    """True if in every interval the requests with positive rate form a suffix
    of the (arrival, id) order of outstanding requests."""
    reqs = {r.rid: r for r in fs.trace.requests}
    for iv in fs.intervals:
        if not iv.contributions:
            continue
        live = sorted((r for r in fs.trace.requests
                       if r.arrival <= iv.start and fs.completions[r.rid] >= iv.end),
                      key=lambda q: q.key)
        active = {rid for rid, x in iv.contributions if x > 0}
        flags = [r.rid in active for r in live]
        first = flags.index(True)
        if not all(flags[first:]) or any(reqs[rid] not in live for rid in active):
            return False
    return True
