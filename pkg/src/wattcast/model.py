"""Problem instances, schedule containers, run configuration and text formats.

Trace grammar (line oriented, ``#`` starts a comment)::

    page <id> <sigma>
    request <page-id> <arrival>

Requests are sorted by arrival; equal arrivals keep declaration order.
Request ids are dense integers assigned in that sorted order, so the
(arrival, id) order is total and survives an emit/parse round trip.
"""

from __future__ import annotations

import math
import os
import random
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import (
    ConfigError,
    InputError,
    NegativeArrival,
    NonPositiveSize,
    TraceSyntaxError,
    UnknownPage,
    ZeroWeight,
)
from .power import PowerFunction, format_power, parse_power

TRACE_HEADER = "# wattcast trace"
SCHEDULE_HEADER = "# wattcast schedule"
DEFAULT_TOL = 1e-9
_PAGE_ID = re.compile(r"^[A-Za-z0-9_.:\-]+$")


def fmt(x: float) -> str:
    """Canonical 12-significant-digit float text."""
    return format(x, ".12g")


def quantize(x: float) -> float:
    return float(fmt(x))


@dataclass(frozen=True)
class Request:
    rid: int
    page: str
    index: int
    arrival: float

    @property
    def key(self) -> tuple[float, int]:
        return (self.arrival, self.rid)


@dataclass(frozen=True)
class Trace:
    pages: tuple[tuple[str, float], ...] = ()
    requests: tuple[Request, ...] = ()
    sigma: Mapping[str, float] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "sigma", dict(self.pages))

    @property
    def n_pages(self) -> int:
        return len(self.pages)

    def __len__(self) -> int:
        return len(self.requests)

    def by_page(self, page: str) -> list[Request]:
        return [r for r in self.requests if r.page == page]


def make_trace(pages: Mapping[str, float] | Iterable[tuple[str, float]],
               requests: Iterable[tuple[str, float]]) -> Trace:
    """Build a validated Trace from (page, sigma) and (page, arrival) pairs."""
    catalog: list[tuple[str, float]] = []
    seen = set()
    items = pages.items() if isinstance(pages, Mapping) else pages
    for pid, sigma in items:
        pid = str(pid)
        if not _PAGE_ID.match(pid):
            raise InputError(f"bad page id {pid!r}")
        if pid in seen:
            raise InputError(f"duplicate page {pid!r}")
        sigma = float(sigma)
        if not (sigma > 0 and math.isfinite(sigma)):
            raise NonPositiveSize(f"page {pid} has size {sigma}")
        seen.add(pid)
        catalog.append((pid, sigma))
    decl = []
    for pid, arrival in requests:
        pid = str(pid)
        if pid not in seen:
            raise UnknownPage(f"request for undeclared page {pid!r}")
        arrival = float(arrival)
        if not (arrival >= 0 and math.isfinite(arrival)):
            raise NegativeArrival(f"arrival {arrival} for page {pid}")
        decl.append((pid, arrival))
    order = sorted(range(len(decl)), key=lambda k: (decl[k][1], k))
    counts: dict[str, int] = {}
    reqs = []
    for rid, k in enumerate(order):
        pid, arrival = decl[k]
        counts[pid] = counts.get(pid, 0) + 1
        reqs.append(Request(rid, pid, counts[pid], arrival))
    return Trace(tuple(catalog), tuple(reqs))


def parse_trace(text: str) -> Trace:
    pages: list[tuple[str, float]] = []
    requests: list[tuple[str, float]] = []
    known = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3 or parts[0] not in ("page", "request"):
            raise TraceSyntaxError(lineno, f"expected 'page <id> <sigma>' or "
                                           f"'request <page> <arrival>', got {line!r}")
        try:
            value = float(parts[2])
        except ValueError:
            raise TraceSyntaxError(lineno, f"not a number: {parts[2]!r}") from None
        if parts[0] == "page":
            if value <= 0:
                raise NonPositiveSize(f"line {lineno}: page {parts[1]} has size {value}")
            pages.append((parts[1], value))
            known.add(parts[1])
        else:
            if parts[1] not in known:
                raise UnknownPage(f"line {lineno}: unknown page {parts[1]!r}")
            if value < 0:
                raise NegativeArrival(f"line {lineno}: arrival {value}")
            requests.append((parts[1], value))
    return make_trace(pages, requests)


def emit_trace(trace: Trace) -> str:
    lines = [TRACE_HEADER]
    lines += [f"page {pid} {fmt(sigma)}" for pid, sigma in trace.pages]
    lines += [f"request {r.page} {fmt(r.arrival)}" for r in trace.requests]
    return "\n".join(lines) + "\n"


def weighted_jobs_to_trace(jobs: Sequence[tuple[int, float, float]]) -> Trace:
    """Map (weight, size, arrival) jobs onto a broadcast instance.

    Job ``j`` becomes its own page ``job<j>`` carrying ``weight`` identical
    requests at the job's arrival, so flow time on the instance equals
    weighted flow time of the jobs.
    """
    pages, requests = [], []
    for j, (w, size, arrival) in enumerate(jobs):
        if int(w) != w or w < 0:
            raise InputError(f"job {j}: weight must be a positive integer, got {w}")
        if w == 0:
            raise ZeroWeight(f"job {j} has weight 0")
        pid = f"job{j}"
        pages.append((pid, size))
        requests += [(pid, arrival)] * int(w)
    return make_trace(pages, requests)


def gen_random_trace(seed: int, n_pages: int, n_requests: int,
                     sigma_max: float, horizon: float) -> Trace:
    """Seeded random instance; values are quantized to 12 significant digits
    so the canonical text form reproduces them exactly."""
    if n_pages <= 0 or n_requests < 0 or sigma_max <= 0 or horizon < 0:
        raise InputError("gen_random_trace needs positive counts and sizes")
    rng = random.Random(seed)
    pages = []
    for k in range(n_pages):
        sigma = quantize(sigma_max * (1.0 - rng.random()))
        pages.append((f"p{k}", sigma if sigma > 0 else sigma_max))
    requests = []
    for _ in range(n_requests):
        pid = pages[rng.randrange(n_pages)][0]
        requests.append((pid, quantize(horizon * rng.random())))
    return make_trace(pages, requests)


# --------------------------------------------------------------------------
# configuration


def default_tol() -> float:
    env = os.environ.get("WATTCAST_TOL")
    if env is None:
        return DEFAULT_TOL
    try:
        tol = float(env)
    except ValueError:
        raise ConfigError(f"WATTCAST_TOL={env!r} is not a number") from None
    if not tol > 0:
        raise ConfigError("WATTCAST_TOL must be positive")
    return tol


@dataclass(frozen=True)
class Config:
    eps: float = 1.0 / 6.0
    beta: float | None = None
    eps_prime: float = 1.0
    delta: float | None = None
    accounting: str = "augmented"
    tol: float = field(default_factory=default_tol)
    seed: int = 0

    def __post_init__(self):
        if self.beta is None:
            object.__setattr__(self, "beta", self.eps)
        if not 0 < self.eps <= 1.0 / 6.0 + 1e-15:
            raise ConfigError(f"eps must satisfy 0 < eps <= 1/6, got {self.eps}")
        if not 0 < self.beta <= 1:
            raise ConfigError(f"beta must satisfy 0 < beta <= 1, got {self.beta}")
        if not 0 < self.eps_prime <= 1:
            raise ConfigError(f"eps_prime must satisfy 0 < eps_prime <= 1, got {self.eps_prime}")
        if self.delta is not None and not self.delta > 0:
            raise ConfigError(f"delta must be positive, got {self.delta}")
        if self.accounting not in ("augmented", "raw"):
            raise ConfigError(f"accounting must be 'augmented' or 'raw', got {self.accounting!r}")
        if not self.tol > 0:
            raise ConfigError("tolerance must be positive")

    @property
    def speed_factor(self) -> float:
        return 1.0 + 6.0 * self.eps


# --------------------------------------------------------------------------
# schedules


@dataclass(frozen=True)
class Interval:
    start: float
    end: float
    speed: float
    outstanding: int
    page_rates: tuple[tuple[str, float], ...] = ()
    contributions: tuple[tuple[int, float], ...] = ()

    @property
    def duration(self) -> float:
        return self.end - self.start

    def rate(self, page: str) -> float:
        for pid, r in self.page_rates:
            if pid == page:
                return r
        return 0.0


@dataclass(frozen=True)
class Event:
    time: float
    kind: str
    rid: int
    outstanding: int
    speed: float

    def __str__(self) -> str:
        return (f"t={fmt(self.time)} kind={self.kind} request={self.rid} "
                f"|Na|={self.outstanding} speed={fmt(self.speed)}")


@dataclass(frozen=True)
class FractionalSchedule:
    """Piecewise-constant broadcast rates plus fractional completion times.

    ``factor`` is the speed augmentation the producing policy ran with
    (1 + 6*eps for the latest-arrival policy, 1 for reference schedules);
    the policy's charged ("nominal") speed is ``speed / factor``.
    """

    trace: Trace
    power: PowerFunction
    intervals: tuple[Interval, ...]
    completions: Mapping[int, float]
    policy: str = "blaps"
    eps: float | None = None
    beta: float | None = None
    factor: float = 1.0
    events: tuple[Event, ...] = ()

    @property
    def makespan(self) -> float:
        return self.intervals[-1].end if self.intervals else 0.0

    def event_log(self) -> str:
        return "".join(f"{e}\n" for e in self.events)


def emit_schedule(fs: FractionalSchedule) -> str:
    lines = [SCHEDULE_HEADER, f"policy\t{fs.policy}"]
    lines += [f"power\t{line}" for line in format_power(fs.power).splitlines()]
    for name in ("eps", "beta"):
        value = getattr(fs, name)
        if value is not None:
            lines.append(f"param\t{name}\t{value!r}")
    lines.append(f"param\tfactor\t{fs.factor!r}")
    lines += [f"trace\t{line}" for line in emit_trace(fs.trace).splitlines()[1:]]
    for iv in fs.intervals:
        rates = ",".join(f"{p}={fmt(r)}" for p, r in iv.page_rates) or "-"
        contrib = ",".join(f"{rid}={fmt(x)}" for rid, x in iv.contributions) or "-"
        lines.append("\t".join(["interval", fmt(iv.start), fmt(iv.end), fmt(iv.speed),
                                str(iv.outstanding), rates, contrib]))
    for rid in sorted(fs.completions):
        lines.append(f"done\t{rid}\t{fmt(fs.completions[rid])}")
    return "\n".join(lines) + "\n"


def parse_schedule(text: str) -> FractionalSchedule:
    policy, power_lines, trace_lines = "blaps", [], []
    params: dict[str, float] = {}
    intervals, completions = [], {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        if not raw.strip() or raw.startswith("#"):
            continue
        parts = raw.split("\t")
        tag = parts[0]
        try:
            if tag == "policy":
                policy = parts[1]
            elif tag == "power":
                power_lines.append(parts[1])
            elif tag == "param":
                params[parts[1]] = float(parts[2])
            elif tag == "trace":
                trace_lines.append(parts[1])
            elif tag == "interval":
                start, end, speed = (float(x) for x in parts[1:4])
                rates = tuple((p, float(r)) for p, r in _pairs(parts[5]))
                contrib = tuple((int(k), float(x)) for k, x in _pairs(parts[6]))
                intervals.append(Interval(start, end, speed, int(parts[4]), rates, contrib))
            elif tag == "done":
                completions[int(parts[1])] = float(parts[2])
            else:
                raise TraceSyntaxError(lineno, f"unknown schedule record {tag!r}")
        except (IndexError, ValueError) as exc:
            if isinstance(exc, InputError):
                raise
            raise TraceSyntaxError(lineno, f"malformed schedule record: {exc}") from None
    if not power_lines:
        raise InputError("schedule dump has no power curve")
    return FractionalSchedule(
        trace=parse_trace("\n".join(trace_lines)),
        power=parse_power("\n".join(power_lines)),
        intervals=tuple(intervals),
        completions=completions,
        policy=policy,
        eps=params.get("eps"),
        beta=params.get("beta"),
        factor=params.get("factor", 1.0),
    )


def _pairs(field_text: str) -> list[tuple[str, str]]:
    if field_text == "-":
        return []
    return [tuple(item.split("=", 1)) for item in field_text.split(",")]


@dataclass(frozen=True)
class Slot:
    start: float
    duration: float
    page: str
    speed: float
    volume: float

    @property
    def end(self) -> float:
        return self.start + self.duration


@dataclass(frozen=True)
class SlotSequence:
    slots: tuple[Slot, ...]
    delta: float

    def __len__(self) -> int:
        return len(self.slots)

    def __iter__(self):
        return iter(self.slots)


@dataclass(frozen=True)
class Piece:
    page: str
    k: int
    start: float
    duration: float
    speed: float
    volume: float
    tuple_id: int = 0
    source: int = -1

    @property
    def end(self) -> float:
        return self.start + self.duration


@dataclass(frozen=True)
class TupleRecord:
    """Frozen view of a broadcast tuple once its transmission has begun."""

    tuple_id: int
    page: str
    source: int
    width: float
    start: float


@dataclass(frozen=True)
class IntegralSchedule:
    trace: Trace
    pieces: tuple[Piece, ...]
    completions: Mapping[int, float]
    eps_prime: float
    tuples: tuple[TupleRecord, ...] = ()
    delta: float | None = None
