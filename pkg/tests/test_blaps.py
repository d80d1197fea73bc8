import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import euler_blaps
from wattcast.analysis import objective
from wattcast.blaps import (
    SimState,
    active_rates,
    conservation_errors,
    next_event,
    simulate,
    suffix_property_holds,
)
from wattcast.errors import EmptyQueue, NoPendingEvents, SpeedCapExceeded
from wattcast.model import Config, Request, emit_schedule, gen_random_trace, make_trace, parse_schedule
from wattcast.power import SpeedInverse, monomial, polynomial

P2 = monomial(2)
Q2 = SpeedInverse(P2)


def _state(n):
    reqs = [Request(k, "a", k + 1, float(k)) for k in range(n)]
    return SimState(time=float(n), outstanding=reqs, residual={r.rid: 1.0 for r in reqs}, beta=1 / 6)


class TestActiveRates:
    def test_single(self):
        assert active_rates(_state(1), Config(), Q2) == {0: pytest.approx(2.0)}

    def test_six_outstanding(self):
        rates = active_rates(_state(6), Config(), Q2)
        assert list(rates) == [5]
        assert rates[5] == pytest.approx(2 * math.sqrt(6), rel=1e-12)

    def test_two_outstanding_boundary(self):
        rates = active_rates(_state(2), Config(), Q2)
        assert rates == {1: pytest.approx(2 * math.sqrt(2), rel=1e-12)}

    @pytest.mark.parametrize("n", range(1, 30))
    def test_total_speed(self, n):
        rates = active_rates(_state(n), Config(), Q2)
        assert sum(rates.values()) == pytest.approx(2 * math.sqrt(n), rel=1e-9)
        st_ = _state(n)
        assert min(rates) == st_.outstanding[st_.cut].rid

    def test_larger_beta(self):
        rates = active_rates(_state(4), Config(beta=0.5), Q2)
        assert sorted(rates) == [2, 3]
        assert rates[2] == rates[3] == pytest.approx(2.0)

    def test_empty(self):
        with pytest.raises(EmptyQueue):
            active_rates(SimState(), Config(), Q2)


class TestNextEvent:
    def _one(self):
        r = Request(0, "a", 1, 0.0)
        return SimState(0.0, [r], {0: 1.0})

    def test_completion(self):
        assert next_event(self._one(), {"a": 2.0}, None)[:2] == (0.5, "completion")

    def test_arrival_first(self):
        assert next_event(self._one(), {"a": 2.0}, 0.3)[:2] == (0.3, "arrival")

    def test_tie_completion_wins(self):
        assert next_event(self._one(), {"a": 2.0}, 0.5)[:2] == (0.5, "completion")

    def test_nothing_pending(self):
        with pytest.raises(NoPendingEvents):
            next_event(self._one(), {}, None)


class TestSimulateFixtures:
    def test_single_request(self):
        fs = simulate(make_trace({"a": 1}, [("a", 0)]), P2, Config())
        assert fs.completions[0] == pytest.approx(0.5, abs=1e-12)
        m = objective(fs, mode="augmented")
        assert (m.F, m.E, m.G) == pytest.approx((0.5, 0.5, 1.0), abs=1e-12)
        assert fs.intervals[0].speed == pytest.approx(2.0)

    def test_two_simultaneous_same_page(self):
        fs = simulate(make_trace({"a": 1}, [("a", 0), ("a", 0)]), P2, Config())
        assert fs.completions == {0: pytest.approx(1 / (2 * math.sqrt(2)), abs=1e-12),
                                  1: pytest.approx(1 / (2 * math.sqrt(2)), abs=1e-12)}
        assert objective(fs, mode="augmented").G == pytest.approx(math.sqrt(2), abs=1e-12)

    def test_two_simultaneous_distinct_pages(self):
        fs = simulate(make_trace({"a": 1, "b": 1}, [("a", 0), ("b", 0)]), P2, Config())
        h = 1 / (2 * math.sqrt(2))
        assert fs.completions[1] == pytest.approx(h, abs=1e-12)
        assert fs.completions[0] == pytest.approx(h + 0.5, abs=1e-12)

    def test_empty(self):
        fs = simulate(make_trace({"a": 1}, []), P2, Config())
        assert fs.intervals == () and objective(fs).G == 0.0

    def test_idle_gap_recorded(self):
        fs = simulate(make_trace({"a": 1}, [("a", 1.0)]), P2, Config())
        assert fs.intervals[0].speed == 0.0 and fs.intervals[0].end == 1.0
        assert fs.completions[0] == pytest.approx(1.5)

    def test_event_log_format(self):
        fs = simulate(make_trace({"a": 1}, [("a", 0)]), P2, Config())
        assert fs.event_log() == ("t=0 kind=arrival request=0 |Na|=1 speed=2\n"
                                  "t=0.5 kind=completion request=0 |Na|=0 speed=0\n")

    def test_cap_exceeded(self):
        P = monomial(2, max_speed=1.2)
        with pytest.raises(SpeedCapExceeded):
            simulate(make_trace({"a": 1}, [("a", 0), ("a", 0)]), P, Config())


# (pages, requests) instances whose completion times were frozen after
# agreeing with a fixed-step (dt = 1e-5) simulation to within 2e-5
FROZEN = [
    ({"a": 1.0, "b": 0.5}, [("a", 0.0), ("b", 0.2), ("a", 0.3), ("b", 0.9)],
     [0.473205080757, 0.723205080757, 0.614626436994, 1.15]),
    ({"a": 1.0, "b": 0.5, "c": 2.0},
     [("c", 0.0), ("a", 0.1), ("b", 0.1), ("c", 0.4), ("a", 0.45), ("b", 1.2), ("a", 1.3)],
     [1.68652430914, 0.58993003826, 0.244337567297, 1.78652430914, 0.717027882341,
      1.5943375673, 1.55]),
]


class TestAgainstFixedStepOracle:
    @pytest.mark.parametrize("pages, reqs, frozen", FROZEN)
    def test_frozen(self, pages, reqs, frozen):
        fs = simulate(make_trace(pages, reqs), P2, Config())
        assert [fs.completions[k] for k in range(len(reqs))] == pytest.approx(frozen, abs=1e-9)

    @pytest.mark.parametrize("pages, reqs, frozen", FROZEN)
    def test_oracle_agrees(self, pages, reqs, frozen):
        ref = euler_blaps(list(pages.items()), reqs, dt=1e-5)
        assert ref == pytest.approx(frozen, abs=2e-5)


class TestInvariants:
    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 10**6), st.integers(1, 4), st.integers(1, 12))
    def test_conservation_and_suffix(self, seed, pages, n):
        tr = gen_random_trace(seed, pages, n, 2.0, 4.0)
        fs = simulate(tr, P2, Config())
        assert len(fs.completions) == n
        assert max(abs(e) for e in conservation_errors(fs).values()) <= 1e-9
        assert suffix_property_holds(fs)
        for iv in fs.intervals:
            if iv.outstanding:
                assert sum(x for _, x in iv.contributions) == pytest.approx(
                    2 * math.sqrt(iv.outstanding), rel=1e-9)
                for page, rate in iv.page_rates:
                    assert rate == pytest.approx(sum(
                        x for rid, x in iv.contributions if tr.requests[rid].page == page))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10**6))
    def test_intervals_partition(self, seed):
        fs = simulate(gen_random_trace(seed, 2, 8, 2.0, 4.0), P2, Config())
        assert fs.intervals[0].start == 0.0
        for a, b in zip(fs.intervals, fs.intervals[1:]):
            assert a.end == b.start

    def test_shared_broadcast_saves_volume(self):
        fs = simulate(make_trace({"a": 1}, [("a", 0.0), ("a", 0.1)]), P2, Config())
        sent = sum(iv.rate("a") * iv.duration for iv in fs.intervals)
        assert 1.0 <= sent + 1e-12 < 2.0

    def test_general_power(self):
        P = polynomial([0, 1, 0, 1])
        fs = simulate(gen_random_trace(3, 3, 8, 2.0, 4.0), P, Config(eps=0.1))
        assert max(abs(e) for e in conservation_errors(fs).values()) <= 1e-9


class TestDumps:
    def test_deterministic_dump(self):
        tr = gen_random_trace(11, 3, 8, 2.0, 4.0)
        assert emit_schedule(simulate(tr, P2, Config())) == emit_schedule(simulate(tr, P2, Config()))

    def test_round_trip(self):
        fs = simulate(gen_random_trace(11, 3, 8, 2.0, 4.0), P2, Config())
        back = parse_schedule(emit_schedule(fs))
        assert back.trace == fs.trace and back.power == fs.power
        assert (back.eps, back.beta, back.factor) == (fs.eps, fs.beta, fs.factor)
        assert len(back.intervals) == len(fs.intervals)
        for rid, f in fs.completions.items():
            assert back.completions[rid] == pytest.approx(f, rel=1e-11)
        assert emit_schedule(back) == emit_schedule(fs)
