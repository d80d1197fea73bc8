"""Exact optimum over a discretized schedule space, for small instances.

Time is cut into slots of length ``delta_opt``; in each slot the
transmitter either idles or broadcasts one page at one speed from a fixed
grid for the whole slot. A request completes at the exact instant its
page volume since arrival reaches sigma, even mid-slot. The search runs
forward slot by slot over the complete state (volume received by every
request), merging identical states and keeping the cheapest prefix, which
is equivalent to enumerating every choice sequence. The result is a
feasible schedule, hence an upper bound on the continuous optimum.
"""

from __future__ import annotations

import math
from typing import Sequence

from ..errors import BudgetExceeded, HorizonTooShort, InputError
from ..model import FractionalSchedule, Interval, Trace
from ..power import PowerFunction, SpeedInverse, power_uncapped
from .metrics import Metrics, objective

DONE = -1.0
DEFAULT_DELTA_OPT = 0.5
DEFAULT_BUDGET = 10**8
_KEY_DIGITS = 9
BEAM_WIDTH = 64


def default_speed_grid(trace: Trace, P: PowerFunction) -> list[float]:
    n = len(trace.requests)
    top = math.ceil(SpeedInverse(P)(2 * n)) + 1 if n else 1
    return [float(s) for s in range(top + 1)]


def default_horizon(trace: Trace, delta_opt: float) -> float:
    """Last arrival plus one unit-speed pass over every requested page, on the slot grid."""
    if not trace.requests:
        return 0.0
    last = trace.requests[-1].arrival
    pages = {r.page for r in trace.requests}
    work = sum(trace.sigma[p] for p in pages)
    return delta_opt * (math.ceil((last + work) / delta_opt - 1e-9) + 1)


def _slot_step(state, t0, t1, page, speed, reqs, sigmas):
    """Advance one slot; returns (new_state, flow accrued in the slot)."""
    new = list(state)
    flow = 0.0
    for i, (pid, a) in enumerate(reqs):
        v = state[i]
        if v == DONE or a >= t1:
            continue
        start = a if a > t0 else t0
        span = t1 - start
        if pid == page and speed > 0:
            need = sigmas[i] - v
            if speed * span >= need - 1e-12:
                flow += need / speed
                new[i] = DONE
                continue
            new[i] = round(v + speed * span, _KEY_DIGITS)
        flow += span
    return tuple(new), flow


def brute_force_opt(trace: Trace, P: PowerFunction, horizon: float | None = None,
                    delta_opt: float = DEFAULT_DELTA_OPT,
                    speeds: Sequence[float] | None = None,
                    budget: int = DEFAULT_BUDGET) -> tuple[FractionalSchedule, Metrics]:
    if not delta_opt > 0:
        raise InputError("delta_opt must be positive")
    grid = sorted({float(s) for s in (speeds if speeds is not None else default_speed_grid(trace, P))})
    if any(s < 0 for s in grid):
        raise InputError("speed grid must be nonnegative")
    moving = [s for s in grid if s > 0]
    if not trace.requests:
        fs = FractionalSchedule(trace, P, (), {}, policy="oracle")
        return fs, objective(fs, P, "raw")
    if horizon is None:
        horizon = default_horizon(trace, delta_opt)
    n_slots = round(horizon / delta_opt)
    if abs(n_slots * delta_opt - horizon) > 1e-9 * max(1.0, horizon):
        raise InputError(f"horizon {horizon} is not a multiple of delta_opt {delta_opt}")
    if not moving or trace.requests[-1].arrival >= horizon:
        raise HorizonTooShort("no feasible schedule fits the horizon")

    reqs = [(r.page, r.arrival) for r in trace.requests]
    sigmas = [trace.sigma[r.page] for r in trace.requests]
    search = _Search(reqs, sigmas, P, moving, delta_opt, n_slots, budget)
    # a beam pass supplies an incumbent; the exact pass prunes against it
    incumbent = search.run(beam=BEAM_WIDTH)
    path = search.run(upper=incumbent[0] if incumbent else math.inf)
    if path is None:
        path = incumbent
    if path is None:
        raise HorizonTooShort(f"no schedule completes every request by {horizon}")
    fs = _replay(trace, P, path[1], delta_opt, reqs, sigmas)
    return fs, objective(fs, P, "raw")


class _Search:
    def __init__(self, reqs, sigmas, P, moving, delta_opt, n_slots, budget):
        self.reqs, self.sigmas = reqs, sigmas
        self.moving, self.delta, self.n_slots = moving, delta_opt, n_slots
        self.budget = budget
        self.work = 0
        self.energy = {s: power_uncapped(P, s) * delta_opt for s in moving}
        self.s_max = max(moving)
        # cheapest energy per unit volume on the grid
        self.e_per_volume = min(power_uncapped(P, s) / s for s in moving)

    def lower_bound(self, state) -> float:
        """Admissible cost-to-go: each unfinished request still needs its
        remaining volume at no more than the top grid speed, and each page
        must still broadcast its largest remaining requirement."""
        flow = 0.0
        need: dict[str, float] = {}
        for i, v in enumerate(state):
            if v == DONE:
                continue
            rem = self.sigmas[i] - v
            flow += rem / self.s_max
            page = self.reqs[i][0]
            if rem > need.get(page, 0.0):
                need[page] = rem
        return flow + self.e_per_volume * sum(need.values())

    def run(self, beam: int | None = None, upper: float = math.inf):
        reqs, sigmas = self.reqs, self.sigmas
        all_done = tuple([DONE] * len(reqs))
        slack = 1e-12 * max(1.0, upper) if math.isfinite(upper) else 0.0
        layer: dict[tuple, float] = {tuple([0.0] * len(reqs)): 0.0}
        parents: list[dict] = []
        best_cost, best_end = upper + slack, None
        for k in range(self.n_slots):
            t0, t1 = k * self.delta, (k + 1) * self.delta
            nxt: dict[tuple, float] = {}
            back: dict[tuple, tuple] = {}
            for state, cost in layer.items():
                live_pages = sorted({reqs[i][0] for i, v in enumerate(state)
                                     if v != DONE and reqs[i][1] < t1})
                choices: list[tuple[str, float] | None] = [None]
                choices += [(p, s) for p in live_pages for s in self.moving]
                self.work += len(choices)
                if self.work > self.budget:
                    raise BudgetExceeded(f"oracle search exceeded {self.budget} transitions")
                for choice in choices:
                    page, speed = choice if choice else (None, 0.0)
                    new, flow = _slot_step(state, t0, t1, page, speed, reqs, sigmas)
                    c = cost + flow + (self.energy[speed] if choice else 0.0)
                    if c + self.lower_bound(new) > best_cost:
                        continue
                    if c < nxt.get(new, math.inf):
                        nxt[new] = c
                        back[new] = (state, choice)
            parents.append(back)
            done_cost = nxt.pop(all_done, None)
            if done_cost is not None and done_cost <= best_cost \
                    and (best_end is None or done_cost < best_cost):
                best_cost, best_end = done_cost, k
            if beam is not None and len(nxt) > beam:
                ranked = sorted(nxt.items(), key=lambda kv: (kv[1] + self.lower_bound(kv[0]), kv[1]))
                nxt = dict(ranked[:beam])
            layer = nxt
            if not layer:
                break
        if best_end is None:
            return None
        path: list[tuple[str, float] | None] = []
        state = all_done
        for k in range(best_end, -1, -1):
            state, choice = parents[k][state]
            path.append(choice)
        path.reverse()
        return best_cost, path


def _replay(trace, P, path, delta_opt, reqs, sigmas) -> FractionalSchedule:
    state = tuple([0.0] * len(reqs))
    completions: dict[int, float] = {}
    intervals: list[Interval] = []
    for k, choice in enumerate(path):
        t0, t1 = k * delta_opt, (k + 1) * delta_opt
        page, speed = choice if choice else (None, 0.0)
        before = state
        state, _ = _slot_step(state, t0, t1, page, speed, reqs, sigmas)
        n_live = sum(1 for i, v in enumerate(before) if v != DONE and reqs[i][1] <= t0)
        for i, (v0, v1) in enumerate(zip(before, state)):
            if v0 != DONE and v1 == DONE:
                start = max(reqs[i][1], t0)
                completions[i] = start + (sigmas[i] - v0) / speed
        rates = ((page, speed),) if choice else ()
        intervals.append(Interval(t0, t1, speed, n_live, rates))
    return FractionalSchedule(trace, P, tuple(intervals), completions, policy="oracle")
