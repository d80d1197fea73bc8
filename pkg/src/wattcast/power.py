"""Convex power curves P(speed) and their inverse Q(power).

Three curve kinds are supported: ``monomial`` (s**alpha), ``poly``
(c1*s + c2*s**2 + ...) and ``table`` (piecewise-linear through sampled
(speed, power) knots, continued past the last knot at the last slope).
Every curve can carry an optional speed cap.

Text grammar, one directive per line::

    monomial <alpha>
    poly <c1> <c2> ...
    table <s,p>;<s,p>;...
    cap <smax>
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

from .errors import (
    EmptyTable,
    InputError,
    NonZeroAtOrigin,
    NotConvex,
    NotIncreasing,
    PowerAboveCapRange,
    PowerSpecError,
    SpeedAboveCap,
)

KINDS = ("monomial", "poly", "table")
BISECT_REL_WIDTH = 1e-12
ROUND_TRIP_TOL = 1e-9
CONVEXITY_GRID = 256


@dataclass(frozen=True)
class PowerFunction:
    kind: str
    alpha: float = 0.0
    coeffs: tuple[float, ...] = ()
    table: tuple[tuple[float, float], ...] = ()
    max_speed: float | None = None

    def __call__(self, s: float) -> float:
        return power_at(self, s)

    @property
    def knots(self) -> tuple[float, ...]:
        return tuple(k[0] for k in self.table)

    def describe(self) -> str:
        return format_power(self).replace("\n", "; ")


@dataclass(frozen=True)
class SpeedInverse:
    """Q = P^-1 with a declared relative round-trip tolerance."""

    power: PowerFunction
    tol: float = ROUND_TRIP_TOL
    method: str = field(default="auto", compare=False)

    def __call__(self, y: float) -> float:
        return speed_at_power(self.power, y, method=self.method)


@dataclass
class ConcavityReport:
    checked: int = 0
    violations: list[tuple[float, float, str, float]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


# --------------------------------------------------------------------------
# construction and validation


def monomial(alpha: float, max_speed: float | None = None) -> PowerFunction:
    return validate_power(PowerFunction("monomial", alpha=float(alpha), max_speed=max_speed))


def polynomial(coeffs: Sequence[float], max_speed: float | None = None) -> PowerFunction:
    return validate_power(
        PowerFunction("poly", coeffs=tuple(float(c) for c in coeffs), max_speed=max_speed)
    )


def sampled_table(
    samples: Iterable[tuple[float, float]], max_speed: float | None = None
) -> PowerFunction:
    pts = tuple((float(s), float(p)) for s, p in samples)
    return validate_power(PowerFunction("table", table=pts, max_speed=max_speed))


def validate_power(spec: PowerFunction) -> PowerFunction:
    """Return ``spec`` unchanged if it is a usable power curve.

    Raises the exception named after the first violated condition:
    EmptyTable, NonZeroAtOrigin, NotIncreasing or NotConvex. Parametric
    checks run first; a sampled midpoint-convexity and monotonicity sweep
    over a 256-point grid (plus table knots) runs last for every kind.
    """
    if spec.kind not in KINDS:
        raise PowerSpecError(f"unknown power kind {spec.kind!r}")
    if spec.max_speed is not None and not spec.max_speed > 0:
        raise PowerSpecError("cap must be a positive speed")

    if spec.kind == "monomial":
        a = spec.alpha
        if not math.isfinite(a) or a <= 0:
            raise NotIncreasing(f"monomial exponent {a} does not give an increasing curve")
        if a <= 1:
            raise NotConvex(f"monomial exponent {a} is not > 1")
    elif spec.kind == "poly":
        c = spec.coeffs
        if not c or any(not math.isfinite(x) for x in c):
            raise PowerSpecError("poly needs finite coefficients")
        if any(x < 0 for x in c):
            raise NotIncreasing("poly coefficients must be nonnegative")
        if not any(x > 0 for x in c):
            raise NotIncreasing("poly with all-zero coefficients is constant")
        if not any(x > 0 for x in c[1:]):
            raise NotConvex("poly needs a positive coefficient of degree >= 2")
    else:
        t = spec.table
        if len(t) < 2:
            raise EmptyTable("table needs at least two samples")
        if t[0] != (0.0, 0.0):
            raise NonZeroAtOrigin(f"first table sample must be (0,0), got {t[0]}")
        for (s0, p0), (s1, p1) in zip(t, t[1:]):
            if not (s1 > s0 and p1 > p0):
                raise NotIncreasing(f"table samples not strictly increasing at speed {s1}")
        slopes = _slopes(t)
        for i in range(1, len(slopes)):
            if not slopes[i] > slopes[i - 1]:
                raise NotConvex(f"table slope decreases at knot speed {t[i][0]}")
        if len(slopes) < 2:
            raise NotConvex("a two-sample table is linear, not strictly convex")

    _sampled_check(spec)
    return spec


def _slopes(t: Sequence[tuple[float, float]]) -> list[float]:
    return [(p1 - p0) / (s1 - s0) for (s0, p0), (s1, p1) in zip(t, t[1:])]


def _sample_extent(spec: PowerFunction) -> float:
    if spec.max_speed is not None:
        return spec.max_speed
    if spec.kind == "table":
        return 2.0 * spec.table[-1][0]
    return 4.0


def _sampled_check(spec: PowerFunction) -> None:
    top = _sample_extent(spec)
    h = top / CONVEXITY_GRID
    grid = [i * h for i in range(CONVEXITY_GRID + 1)]
    vals = [_raw_power(spec, s) for s in grid]
    if vals[0] != 0.0:
        raise NonZeroAtOrigin(f"P(0) = {vals[0]}")
    for s, v0, v1 in zip(grid[1:], vals, vals[1:]):
        if not v1 > v0:
            raise NotIncreasing(f"P not strictly increasing near speed {s}")
    tests = [(grid[i], h, vals[i - 1], vals[i], vals[i + 1]) for i in range(1, CONVEXITY_GRID)]
    for s in spec.knots[1:-1]:
        if s - h > 0 and (spec.max_speed is None or s + h <= spec.max_speed):
            tests.append(
                (s, h, _raw_power(spec, s - h), _raw_power(spec, s), _raw_power(spec, s + h))
            )
    for m, hh, lo, mid, hi in tests:
        avg = 0.5 * (lo + hi)
        if mid > avg + 1e-12 * max(1.0, abs(avg)):
            raise NotConvex(f"midpoint test fails at speed {m} (h={hh})")


# --------------------------------------------------------------------------
# evaluation


def _raw_power(spec: PowerFunction, s: float) -> float:
    if spec.kind == "monomial":
        return s**spec.alpha
    if spec.kind == "poly":
        # Horner over c1*s + c2*s^2 + ...
        acc = 0.0
        for c in reversed(spec.coeffs):
            acc = acc * s + c
        return acc * s
    t = spec.table
    speeds = spec.knots
    i = bisect.bisect_right(speeds, s) - 1
    if i >= len(t) - 1:
        (s0, p0), (s1, p1) = t[-2], t[-1]
        return p1 + (s - s1) * (p1 - p0) / (s1 - s0)
    (s0, p0), (s1, p1) = t[i], t[i + 1]
    return p0 + (s - s0) * (p1 - p0) / (s1 - s0)


def power_at(P: PowerFunction, s: float) -> float:
    if s < 0:
        raise InputError(f"negative speed {s}")
    if P.max_speed is not None and s > P.max_speed * (1 + 1e-12):
        raise SpeedAboveCap(f"speed {s} above cap {P.max_speed}")
    return _raw_power(P, s)


def power_uncapped(P: PowerFunction, s: float) -> float:
    """P(s) ignoring the speed cap (augmented speeds may exceed it)."""
    if s < 0:
        raise InputError(f"negative speed {s}")
    return _raw_power(P, s)


def speed_at_power(P: PowerFunction, y: float, method: str = "auto") -> float:
    """Q(y): the largest speed whose power draw is y.

    Monomials use the closed form y**(1/alpha) unless ``method="bisect"``;
    everything else brackets the root by doubling and bisects to a
    relative bracket width of 1e-12.
    """
    if y < 0:
        raise InputError(f"negative power {y}")
    if y == 0:
        return 0.0
    return _inverse(P, float(y), method)


@lru_cache(maxsize=65536)
def _inverse(P: PowerFunction, y: float, method: str) -> float:
    cap = P.max_speed
    if cap is not None:
        top = _raw_power(P, cap)
        if y > top * (1 + 1e-12):
            raise PowerAboveCapRange(f"power {y} exceeds P(cap) = {top}")
    if P.kind == "monomial" and method != "bisect":
        s = y ** (1.0 / P.alpha)
        return s if cap is None else min(s, cap)
    return _bisect_inverse(P, y)


def _bisect_inverse(P: PowerFunction, y: float) -> float:
    lo, hi = 0.0, 1.0
    cap = P.max_speed
    while _raw_power(P, hi) < y:
        lo, hi = hi, hi * 2.0
        if cap is not None and hi >= cap:
            hi = cap
            break
    while hi - lo > BISECT_REL_WIDTH * hi:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if _raw_power(P, mid) < y:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def check_concavity_props(
    Q: SpeedInverse, samples: Iterable[tuple[float, float]]
) -> ConcavityReport:
    """Check (x-1)/x <= Q(x-1)/Q(x) and a*Q(x) <= Q(a*x) for each (x, a)."""
    report = ConcavityReport()
    for x, a in samples:
        if not (x > 1 and 0 < a <= 1):
            raise InputError(f"sample (x={x}, a={a}) outside x > 1, 0 < a <= 1")
        qx = Q(x)
        lhs, rhs = (x - 1) / x, Q(x - 1) / qx
        if lhs > rhs + Q.tol:
            report.violations.append((x, a, "ratio", lhs - rhs))
        lhs, rhs = a * qx, Q(a * x)
        if lhs > rhs + Q.tol * max(1.0, rhs):
            report.violations.append((x, a, "scaling", lhs - rhs))
        report.checked += 1
    return report


# --------------------------------------------------------------------------
# text format


def parse_power(text: str) -> PowerFunction:
    kind: PowerFunction | None = None
    cap: float | None = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, _, rest = line.partition(" ")
        rest = rest.strip()
        try:
            if head == "cap":
                cap = float(rest)
            elif head == "monomial":
                kind = PowerFunction("monomial", alpha=float(rest))
            elif head == "poly":
                kind = PowerFunction("poly", coeffs=tuple(float(c) for c in rest.split()))
            elif head == "table":
                pts = []
                for item in rest.split(";"):
                    if item.strip():
                        s, p = item.split(",")
                        pts.append((float(s), float(p)))
                kind = PowerFunction("table", table=tuple(pts))
            else:
                raise PowerSpecError(f"line {lineno}: unknown directive {head!r}")
        except ValueError as exc:
            if isinstance(exc, PowerSpecError):
                raise
            raise PowerSpecError(f"line {lineno}: {exc}") from None
    if kind is None:
        raise PowerSpecError("no power curve given")
    return validate_power(PowerFunction(kind.kind, kind.alpha, kind.coeffs, kind.table, cap))


def format_power(P: PowerFunction) -> str:
    if P.kind == "monomial":
        line = f"monomial {P.alpha!r}"
    elif P.kind == "poly":
        line = "poly " + " ".join(repr(c) for c in P.coeffs)
    else:
        line = "table " + ";".join(f"{s!r},{p!r}" for s, p in P.table)
    if P.max_speed is not None:
        line += f"\ncap {P.max_speed!r}"
    return line
