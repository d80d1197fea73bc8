"""Fractional-to-integral conversion of speed-scaled broadcast schedules.

A fractional schedule is first serialized into micro-slots that each carry
a single page. The online rounding pass then replays those slots: whenever
an unmarked request becomes fractionally satisfied it either tightens the
width of a pending transmission of its page or opens a new one, and the
transmitter always works on the pending transmission of minimum width.
Each transmission replays, piece by piece, the slots its sourcing request
used in the fractional schedule, at (1 + eps') times the slot speed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import InconsistentSlots, MismatchedTraces, TraceSyntaxError
from .model import (
    FractionalSchedule,
    IntegralSchedule,
    Piece,
    Slot,
    SlotSequence,
    Trace,
    TupleRecord,
    fmt,
)
from .power import PowerFunction, power_uncapped

VOLUME_TOL = 1e-9
CHECK_TOL = 1e-9


def default_delta(trace: Trace) -> float:
    if not trace.pages:
        return 0.1
    return min(0.1, min(s for _, s in trace.pages) / 4.0)


def serialize_slots(fs: FractionalSchedule, delta: float) -> SlotSequence:
    """Cut every interval into equal windows no longer than ``delta`` and
    give each served page a sub-slot proportional to its volume.

    Sub-slots run at the interval's total speed, so each page's volume and
    the energy drawn per window are both preserved.
    """
    if not delta > 0:
        raise ValueError("slot size must be positive")
    slots: list[Slot] = []
    for iv in fs.intervals:
        served = [(p, r) for p, r in sorted(iv.page_rates) if r > 0]
        if not served or iv.duration <= 0:
            continue
        total = sum(r for _, r in served)
        m = max(1, math.ceil(iv.duration / delta - 1e-9))
        width = iv.duration / m
        for w in range(m):
            t = iv.start + w * width
            for p, r in served:
                d = width * r / total
                slots.append(Slot(t, d, p, total, r * width))
                t += d
    return SlotSequence(tuple(slots), delta)


@dataclass
class _Tuple:
    tid: int
    page: str
    width: float
    source: int
    seq: int
    start: float = math.inf
    k: int = 1
    sent: float = 0.0
    plan: list[Slot] = field(default_factory=list)

    @property
    def started(self) -> bool:
        return self.start != math.inf


def slot_completions(slots: SlotSequence, trace: Trace) -> dict[int, float]:
    """Time each request is fractionally satisfied by the serialized slots."""
    by_page = _slots_by_page(slots, trace)
    out = {}
    for r in trace.requests:
        sigma = trace.sigma[r.page]
        got = 0.0
        for s in by_page.get(r.page, ()):
            if s.start < r.arrival - 1e-12:
                continue
            got += s.volume
            if got >= sigma - VOLUME_TOL * sigma:
                out[r.rid] = s.end
                break
    return out


def _slots_by_page(slots: SlotSequence, trace: Trace) -> dict[str, list[Slot]]:
    out: dict[str, list[Slot]] = {}
    last_end = -math.inf
    for s in slots:
        if s.page not in trace.sigma:
            raise InconsistentSlots(f"slot for unknown page {s.page!r}")
        if s.start < last_end - 1e-9:
            raise InconsistentSlots(f"slot at {s.start} overlaps the previous slot")
        last_end = s.end
        out.setdefault(s.page, []).append(s)
    return out


def _plan(slots: list[Slot], arrival: float, sigma: float) -> list[Slot]:
    plan, got = [], 0.0
    for s in slots:
        if s.start < arrival - 1e-12:
            continue
        plan.append(s)
        got += s.volume
        if got >= sigma - VOLUME_TOL * sigma:
            return plan
    raise InconsistentSlots(f"slots after t={arrival} carry only {got} of {sigma}")


def gen_rounding(slots: SlotSequence, trace: Trace, eps_prime: float) -> IntegralSchedule:
    if not 0 < eps_prime <= 1:
        raise ValueError(f"eps_prime must satisfy 0 < eps_prime <= 1, got {eps_prime}")
    sigma = trace.sigma
    by_page = _slots_by_page(slots, trace)
    done_at = slot_completions(slots, trace)
    events = sorted((f, rid) for rid, f in done_at.items())
    reqs = trace.requests

    queue: list[_Tuple] = []
    finished: list[_Tuple] = []
    pieces: list[Piece] = []
    marked: dict[int, float] = {}
    seq = 0
    t = 0.0
    ei = 0

    def on_completion(rid: int) -> None:
        nonlocal seq
        r = reqs[rid]
        if rid in marked:
            return
        width = done_at[rid] - r.arrival
        hosts = [q for q in queue if q.page == r.page and q.start >= r.arrival]
        if hosts:
            host = min(hosts, key=lambda q: (q.start, q.seq))
            # a started transmission keeps its width and source
            if not host.started and width < host.width:
                host.width = width
                host.source = rid
            return
        queue.append(_Tuple(seq, r.page, width, rid, seq))
        seq += 1

    while True:
        while ei < len(events) and events[ei][0] <= t:
            on_completion(events[ei][1])
            ei += 1
        if not queue:
            if ei == len(events):
                break
            t = max(t, events[ei][0])
            continue
        tau = min(queue, key=lambda q: (q.width, q.page, q.seq))
        page_sigma = sigma[tau.page]
        if not tau.started:
            tau.start = t
            tau.plan = _plan(by_page[tau.page], reqs[tau.source].arrival, page_sigma)
        slot = tau.plan[tau.k - 1]
        volume = min(slot.volume, page_sigma - tau.sent)
        speed = (1.0 + eps_prime) * slot.speed
        dur = volume / speed
        pieces.append(Piece(tau.page, tau.k, t, dur, speed, volume, tau.tid, tau.source))
        t += dur
        tau.sent += volume
        if tau.k == len(tau.plan):
            queue.remove(tau)
            finished.append(tau)
            for r in reqs:
                if r.page == tau.page and r.rid not in marked and r.arrival <= tau.start:
                    marked[r.rid] = t
        else:
            tau.k += 1

    records = tuple(sorted((TupleRecord(q.tid, q.page, q.source, q.width, q.start)
                            for q in finished + [q for q in queue if q.started]),
                           key=lambda rec: rec.tuple_id))
    return IntegralSchedule(trace, tuple(pieces), marked, eps_prime, records, slots.delta)


# --------------------------------------------------------------------------
# verification


@dataclass
class RoundingReport:
    eps_prime: float
    delta: float
    stretch: dict[int, float] = field(default_factory=dict)
    energy_integral: float = 0.0
    energy_fractional: float = 0.0
    violations: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    @property
    def max_stretch_slack(self) -> float:
        """Largest (actual - allowed) integral flow over all requests; <= 0 when the bound holds."""
        return max(self.stretch.values(), default=0.0)

    def lines(self) -> list[str]:
        return [
            f"eps_prime={fmt(self.eps_prime)}",
            f"delta={fmt(self.delta)}",
            f"stretch_max_slack={fmt(self.max_stretch_slack)}",
            f"energy_integral={fmt(self.energy_integral)}",
            f"energy_fractional={fmt(self.energy_fractional)}",
            f"violations={len(self.violations)}",
            f"pass={'true' if self.passed else 'false'}",
        ]

    def text(self) -> str:
        return "".join(f"{line}\n" for line in self.lines())


def integral_energy(ints: IntegralSchedule, P: PowerFunction) -> float:
    """Energy of the integral schedule charged at nominal (unaugmented) speeds."""
    scale = 1.0 + ints.eps_prime
    total = 0.0
    for pc in ints.pieces:
        nominal = pc.speed / scale
        total += power_uncapped(P, nominal) * (pc.volume / nominal)
    return total


def verify_rounding(fs: FractionalSchedule, ints: IntegralSchedule, P: PowerFunction,
                    eps_prime: float, delta: float) -> RoundingReport:
    """Check the stretch bound, energy dominance, piece sequencing, marking
    and the same-page tuple separation property; every failure is listed."""
    if fs.trace != ints.trace:
        raise MismatchedTraces("fractional and integral schedules come from different traces")
    trace = fs.trace
    rep = RoundingReport(eps_prime, delta)

    for r in trace.requests:
        f = fs.completions.get(r.rid)
        fi = ints.completions.get(r.rid)
        if f is None or fi is None:
            rep.violations.append(f"request {r.rid} never completes")
            continue
        allowed = (f - r.arrival) + (2.0 / eps_prime) * (f - r.arrival) + 5.0 * delta / eps_prime
        rep.stretch[r.rid] = (fi - r.arrival) - allowed
        if rep.stretch[r.rid] > CHECK_TOL:
            rep.violations.append(
                f"stretch: request {r.rid} integral flow {fi - r.arrival:.6g} > {allowed:.6g}")

    rep.energy_integral = integral_energy(ints, P)
    rep.energy_fractional = sum(power_uncapped(P, iv.speed) * iv.duration
                                for iv in fs.intervals if iv.speed > 0)
    if rep.energy_integral > rep.energy_fractional + CHECK_TOL:
        rep.violations.append(
            f"energy: integral {rep.energy_integral:.9g} > fractional {rep.energy_fractional:.9g}")

    ordered = sorted(ints.pieces, key=lambda pc: pc.start)
    for a, b in zip(ordered, ordered[1:]):
        if b.start < a.end - 1e-12 * max(1.0, a.end):
            rep.violations.append(f"overlap: pieces at {a.start:.6g} and {b.start:.6g}")

    groups: dict[int, list[Piece]] = {}
    for pc in ordered:
        groups.setdefault(pc.tuple_id, []).append(pc)
    finals: dict[int, tuple[str, float, float]] = {}
    for tid, group in groups.items():
        ks = [pc.k for pc in group]
        if ks != list(range(1, len(group) + 1)):
            rep.violations.append(f"sequence: tuple {tid} sends pieces in order {ks}")
            continue
        page = group[0].page
        vol = sum(pc.volume for pc in group)
        if abs(vol - trace.sigma[page]) <= VOLUME_TOL * trace.sigma[page]:
            finals[tid] = (page, group[0].start, group[-1].end)

    for r in trace.requests:
        fi = ints.completions.get(r.rid)
        if fi is None:
            continue
        if not any(page == r.page and b >= r.arrival and abs(end - fi) <= 1e-12 * max(1.0, fi)
                   for page, b, end in finals.values()):
            rep.violations.append(f"marking: request {r.rid} done at {fi:.6g} without a full "
                                  "transmission that started after it arrived")

    for i, lo in enumerate(ints.tuples):
        for hi in ints.tuples[i + 1:]:
            if lo.page != hi.page:
                continue
            early, late = sorted((trace.requests[lo.source], trace.requests[hi.source]),
                                 key=lambda q: q.key)
            f_early = fs.completions.get(early.rid, math.inf)
            if late.arrival < f_early - CHECK_TOL:
                rep.violations.append(
                    f"overlap lemma: page {lo.page} sources {early.rid},{late.rid}: "
                    f"a={late.arrival:.6g} < f={f_early:.6g}")
    return rep


# --------------------------------------------------------------------------
# dump format


def emit_integral(ints: IntegralSchedule) -> str:
    lines = [f"# wattcast integral eps_prime={fmt(ints.eps_prime)}"]
    for pc in ints.pieces:
        lines.append(f"piece page={pc.page} k={pc.k} start={fmt(pc.start)} dur={fmt(pc.duration)} "
                     f"speed={fmt(pc.speed)} tuple={pc.tuple_id} source={pc.source}")
    for rid in sorted(ints.completions):
        lines.append(f"done request={rid} t={fmt(ints.completions[rid])}")
    return "\n".join(lines) + "\n"


def parse_integral(text: str, trace: Trace, eps_prime: float) -> IntegralSchedule:
    pieces, done = [], {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tag, *fields = line.split()
        kv = dict(item.split("=", 1) for item in fields)
        try:
            if tag == "piece":
                start, dur, speed = float(kv["start"]), float(kv["dur"]), float(kv["speed"])
                pieces.append(Piece(kv["page"], int(kv["k"]), start, dur, speed, speed * dur,
                                    int(kv.get("tuple", 0)), int(kv.get("source", -1))))
            elif tag == "done":
                done[int(kv["request"])] = float(kv["t"])
            else:
                raise TraceSyntaxError(lineno, f"unknown record {tag!r}")
        except (KeyError, ValueError) as exc:
            raise TraceSyntaxError(lineno, f"malformed record: {exc}") from None
    return IntegralSchedule(trace, tuple(pieces), done, eps_prime)
