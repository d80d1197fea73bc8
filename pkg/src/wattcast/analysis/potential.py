"""Potential-function bookkeeping and the boundary/jump/running condition check.

The potential is evaluated post hoc from two completed runs on the same
trace: the algorithm's run supplies each request's future contribution
On(t, inf) and the reference run supplies the page volume Opt(a, t) it has
broadcast since the request arrived. For an outstanding request,

    z    = On(t, inf) * Opt(a, t) / sigma
    term = rank * z / Q(rank)
    Phi  = (1/eps) * sum(term)

Both integrals are piecewise linear in t, so Phi differences over an
interval of the merged event timeline are exact.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from ..blaps import conservation_errors
from ..errors import (
    BetaMismatch,
    IncompleteSchedule,
    InfeasibleReference,
    InputError,
    MismatchedTraces,
    NotOutstanding,
)
from ..model import FractionalSchedule, Request, fmt
from ..power import SpeedInverse, power_uncapped
from .metrics import objective

EXACT_TOL = 1e-9
RESIDUAL_TOL = 1e-7


class Cumulative:
    """Running integral of a piecewise-constant rate, evaluated anywhere."""

    def __init__(self, pieces: Iterable[tuple[float, float, float]]):
        self.times = [0.0]
        self.values = [0.0]
        self.rates = [0.0]
        for start, end, rate in pieces:
            if end <= start:
                continue
            if start > self.times[-1]:
                self.times.append(start)
                self.values.append(self.values[-1])
                self.rates.append(0.0)
            self.rates[-1] = rate
            self.times.append(end)
            self.values.append(self.values[-1] + rate * (end - start))
            self.rates.append(0.0)

    @property
    def total(self) -> float:
        return self.values[-1]

    def __call__(self, t: float) -> float:
        i = bisect.bisect_right(self.times, t) - 1
        if i < 0:
            return 0.0
        return self.values[i] + self.rates[i] * (t - self.times[i])


@dataclass(frozen=True)
class PotentialState:
    time: float
    ranks: dict[int, int]
    z: dict[int, float]
    terms: dict[int, float]
    phi: float


@dataclass
class ConditionReport:
    eps: float
    bound: float
    boundary: dict[str, float] = field(default_factory=dict)
    jumps: list[tuple[float, str, float]] = field(default_factory=list)
    intervals: list[dict] = field(default_factory=list)
    conservation: dict[int, float] = field(default_factory=dict)
    G_alg: float = 0.0
    G_ref: float = 0.0
    F_alg: float = 0.0
    E_alg: float = 0.0
    phi_min: float = 0.0
    violations: list[str] = field(default_factory=list)

    @property
    def ratio(self) -> float:
        if self.G_ref > 0:
            return self.G_alg / self.G_ref
        return 0.0 if self.G_alg == 0 else float("inf")

    @property
    def max_residual(self) -> float:
        return max((iv["residual"] for iv in self.intervals), default=0.0)

    @property
    def max_jump(self) -> float:
        return max((d for _, _, d in self.jumps), default=0.0)

    @property
    def passed(self) -> bool:
        return not self.violations

    def lines(self) -> list[str]:
        opt_power = [iv["lemma_residual"] for iv in self.intervals
                     if iv["case"] == "opt_power"]
        return [
            f"F={fmt(self.F_alg)}",
            f"E={fmt(self.E_alg)}",
            f"G={fmt(self.G_alg)}",
            f"G_ref={fmt(self.G_ref)}",
            f"bound={fmt(self.bound)}",
            f"ratio={fmt(self.ratio)}",
            f"boundary_max={fmt(max(map(abs, self.boundary.values()), default=0.0))}",
            f"jump_max={fmt(self.max_jump)}",
            f"phi_min={fmt(self.phi_min)}",
            f"running_max_residual={fmt(self.max_residual)}",
            f"opt_power_intervals={len(opt_power)}",
            f"opt_power_max_residual={fmt(max(opt_power, default=0.0))}",
            f"intervals={len(self.intervals)}",
            f"violations={len(self.violations)}",
            f"pass={'true' if self.passed else 'false'}",
        ]

    def text(self) -> str:
        return "".join(f"{line}\n" for line in self.lines())


def rank_of(request: Request, outstanding: Sequence[Request]) -> int:
    """Number of outstanding requests at or before ``request`` in (arrival, id) order."""
    if all(r.rid != request.rid for r in outstanding):
        raise NotOutstanding(f"request {request.rid} is not outstanding")
    return sum(1 for r in outstanding if r.key <= request.key)


class PotentialEvaluator:
    """Precomputed cumulative integrals for one (algorithm, reference) pair."""

    def __init__(self, alg: FractionalSchedule, ref: FractionalSchedule, eps: float):
        if alg.trace != ref.trace:
            raise MismatchedTraces("algorithm and reference runs use different traces")
        if alg.power != ref.power:
            raise InputError("algorithm and reference runs use different power curves")
        self.alg, self.ref, self.eps = alg, ref, eps
        self.trace = alg.trace
        self.Q = SpeedInverse(alg.power)
        for r in self.trace.requests:
            if r.rid not in alg.completions:
                raise IncompleteSchedule(f"algorithm never completes request {r.rid}")
        self.on = {r.rid: Cumulative((iv.start, iv.end, dict(iv.contributions).get(r.rid, 0.0))
                                     for iv in alg.intervals)
                   for r in self.trace.requests}
        self.opt = {pid: Cumulative((iv.start, iv.end, iv.rate(pid)) for iv in ref.intervals)
                    for pid, _ in self.trace.pages}
        self._check_reference()

    def _check_reference(self) -> None:
        for r in self.trace.requests:
            f = self.ref.completions.get(r.rid)
            if f is None:
                raise InfeasibleReference(f"reference never completes request {r.rid}")
            sigma = self.trace.sigma[r.page]
            got = self.opt_volume(r, f)
            if got < sigma - EXACT_TOL * max(1.0, sigma) or f < r.arrival:
                raise InfeasibleReference(
                    f"reference marks request {r.rid} done at {f} after only {got} of {sigma}")

    def on_future(self, r: Request, t: float) -> float:
        cum = self.on[r.rid]
        return max(0.0, cum.total - cum(t))

    def opt_volume(self, r: Request, t: float) -> float:
        cum = self.opt[r.page]
        return max(0.0, cum(t) - cum(r.arrival))

    def alg_live(self, t: float, left: bool = False) -> list[Request]:
        """Requests outstanding for the algorithm at t (or just before t)."""
        c = self.alg.completions
        if left:
            live = [r for r in self.trace.requests if r.arrival < t <= c[r.rid]]
        else:
            live = [r for r in self.trace.requests if r.arrival <= t < c[r.rid]]
        return sorted(live, key=lambda r: r.key)

    def ref_live(self, t: float) -> list[Request]:
        c = self.ref.completions
        return [r for r in self.trace.requests if r.arrival <= t < c[r.rid]]

    def state(self, t: float, live: Sequence[Request] | None = None) -> PotentialState:
        if live is None:
            live = self.alg_live(t)
        live = sorted(live, key=lambda r: r.key)
        ranks, zs, terms = {}, {}, {}
        for rank, r in enumerate(live, 1):
            sigma = self.trace.sigma[r.page]
            z = self.on_future(r, t) * self.opt_volume(r, t) / sigma
            ranks[r.rid], zs[r.rid] = rank, z
            terms[r.rid] = rank * z / self.Q(rank)
        return PotentialState(t, ranks, zs, terms, sum(terms.values()) / self.eps)

    def phi(self, t: float, live: Sequence[Request] | None = None) -> float:
        return self.state(t, live).phi


def potential(t: float, alg: FractionalSchedule, ref: FractionalSchedule,
              eps: float) -> PotentialState:
    return PotentialEvaluator(alg, ref, eps).state(t)


def _speed_at(fs: FractionalSchedule, starts: list[float], t: float) -> float:
    i = bisect.bisect_right(starts, t) - 1
    if i < 0:
        return 0.0
    iv = fs.intervals[i]
    return iv.speed if iv.start <= t < iv.end else 0.0


def verify_conditions(alg: FractionalSchedule, ref: FractionalSchedule,
                      eps: float) -> ConditionReport:
    """Check every potential-function condition of the algorithm run against ``ref``.

    Boundary, jump and running conditions are evaluated on the merged
    event timeline of both runs; the integrated bound compares the
    algorithm's augmented cost with the reference's raw cost. Any
    feasible reference works, not only an optimal one.
    """
    if alg.beta is None or alg.eps is None:
        raise BetaMismatch("algorithm run records no eps/beta")
    if abs(alg.beta - eps) > 1e-12 or abs(alg.eps - eps) > 1e-12:
        raise BetaMismatch(f"run used eps={alg.eps}, beta={alg.beta}; verifying eps={eps}")
    ev = PotentialEvaluator(alg, ref, eps)
    trace = ev.trace
    P = alg.power
    c = 2.0 / eps**2
    rep = ConditionReport(eps=eps, bound=c)

    for rid, err in conservation_errors(alg).items():
        if abs(err) > EXACT_TOL * max(1.0, trace.sigma[trace.requests[rid].page]):
            rep.conservation[rid] = err
            rep.violations.append(f"conservation: request {rid} off by {err:.3g}")

    ma = objective(alg, P, "augmented")
    mr = objective(ref, P, "raw")
    rep.G_alg, rep.F_alg, rep.E_alg, rep.G_ref = ma.G, ma.F, ma.E, mr.G
    if not trace.requests:
        return rep

    points = {0.0}
    for fs in (alg, ref):
        for iv in fs.intervals:
            points.update((iv.start, iv.end))
        points.update(fs.completions.values())
    points.update(r.arrival for r in trace.requests)
    timeline = sorted(points)

    first = trace.requests[0].arrival
    last = max(alg.completions.values())
    rep.boundary["before_arrivals"] = ev.phi(first, ev.alg_live(first, left=True))
    rep.boundary["after_completions"] = ev.phi(last)
    for name, value in rep.boundary.items():
        if abs(value) > EXACT_TOL:
            rep.violations.append(f"boundary {name}: phi={value:.3g}")

    alg_done: dict[float, list[int]] = {}
    ref_done: dict[float, list[int]] = {}
    arrivals: dict[float, list[int]] = {}
    for rid, f in alg.completions.items():
        alg_done.setdefault(f, []).append(rid)
    for rid, f in ref.completions.items():
        ref_done.setdefault(f, []).append(rid)
    for r in trace.requests:
        arrivals.setdefault(r.arrival, []).append(r.rid)

    phis = []
    for tau in timeline:
        live = ev.alg_live(tau, left=True)
        phi0 = ev.phi(tau, live)
        phis.append(phi0)
        if tau in alg_done:
            gone = set(alg_done[tau])
            live = [r for r in live if r.rid not in gone]
            phi1 = ev.phi(tau, live)
            rep.jumps.append((tau, "alg_completion", phi1 - phi0))
            phi0 = phi1
        if tau in ref_done:
            # the reference only enters through Opt(a, t), which is continuous
            phi1 = ev.phi(tau, live)
            rep.jumps.append((tau, "ref_completion", phi1 - phi0))
            phi0 = phi1
        if tau in arrivals:
            new = [trace.requests[rid] for rid in arrivals[tau]]
            live = live + new
            phi1 = ev.phi(tau, live)
            rep.jumps.append((tau, "arrival", phi1 - phi0))
            phi0 = phi1
        phis.append(phi0)
    for tau, kind, d in rep.jumps:
        if d > EXACT_TOL:
            rep.violations.append(f"jump at t={tau:.6g} ({kind}): dphi={d:.3g}")

    alg_starts = [iv.start for iv in alg.intervals]
    ref_starts = [iv.start for iv in ref.intervals]
    for t0, t1 in zip(timeline, timeline[1:]):
        dt = t1 - t0
        live = ev.alg_live(t0)
        n_alg = len(live)
        mid = 0.5 * (t0 + t1)
        s_alg = _speed_at(alg, alg_starts, mid)
        s_ref = _speed_at(ref, ref_starts, mid)
        n_ref = len(ev.ref_live(t0))
        dG_alg = (n_alg + power_uncapped(P, s_alg / alg.factor)) * dt
        dG_ref = (n_ref + power_uncapped(P, s_ref)) * dt
        phi_a, phi_b = ev.phi(t0, live), ev.phi(t1, live)
        phis.append(phi_b)
        dphi = phi_b - phi_a
        residual = dG_alg + dphi - c * dG_ref
        case = "opt_power" if n_alg and s_ref >= ev.Q(n_alg) else "opt_slow"
        rep.intervals.append({
            "start": t0, "end": t1, "n_alg": n_alg, "n_ref": n_ref,
            "dG_alg": dG_alg, "dG_ref": dG_ref, "dphi": dphi,
            "residual": residual, "case": case,
            "lemma_residual": dG_alg + dphi - (2.0 / eps) * dG_ref,
        })
        if residual > RESIDUAL_TOL:
            rep.violations.append(
                f"running condition on [{t0:.6g}, {t1:.6g}]: residual {residual:.3g}")

    rep.phi_min = min(phis)
    if rep.phi_min < -EXACT_TOL:
        rep.violations.append(f"negative potential {rep.phi_min:.3g}")
    if rep.G_alg > c * rep.G_ref * (1 + EXACT_TOL) + EXACT_TOL:
        rep.violations.append(f"integrated bound: G={rep.G_alg:.6g} > {c:.6g} * {rep.G_ref:.6g}")
    return rep
