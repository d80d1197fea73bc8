import dataclasses

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wattcast.blaps import simulate
from wattcast.errors import InconsistentSlots, MismatchedTraces
from wattcast.model import (
    Config,
    FractionalSchedule,
    Interval,
    Slot,
    SlotSequence,
    gen_random_trace,
    make_trace,
)
from wattcast.power import monomial
from wattcast.rounding import (
    default_delta,
    emit_integral,
    gen_rounding,
    parse_integral,
    serialize_slots,
    slot_completions,
    verify_rounding,
)

P2 = monomial(2)


def _single():
    tr = make_trace({"a": 1}, [("a", 0)])
    return tr, simulate(tr, P2, Config())


class TestSerialize:
    def test_one_page_two_slots(self):
        _, fs = _single()
        slots = serialize_slots(fs, 0.25)
        assert [(s.start, s.duration, s.page, s.speed, s.volume) for s in slots] == [
            (0.0, 0.25, "a", 2.0, 0.5), (0.25, 0.25, "a", 2.0, 0.5)]

    def test_two_pages_equal_rates(self):
        tr = make_trace({"b": 1, "a": 1}, [("a", 0), ("b", 0)])
        fs = FractionalSchedule(tr, P2, (Interval(0.0, 0.5, 2.0, 2, (("a", 1.0), ("b", 1.0))),),
                                {0: 0.5, 1: 0.5})
        slots = list(serialize_slots(fs, 1.0))
        assert [s.page for s in slots] == ["a", "b"]
        assert slots[0].duration == slots[1].duration == 0.25
        assert slots[1].start == 0.25
        assert sum(s.volume for s in slots) == pytest.approx(1.0)

    def test_empty(self):
        tr = make_trace({"a": 1}, [])
        assert len(serialize_slots(simulate(tr, P2, Config()), 0.1)) == 0

    def test_partial_window(self):
        _, fs = _single()
        slots = serialize_slots(fs, 0.2)
        assert len(slots) == 3
        assert all(s.duration <= 0.2 + 1e-15 for s in slots)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10**6), st.floats(0.01, 0.5))
    def test_volume_conserved(self, seed, delta):
        tr = gen_random_trace(seed, 3, 8, 2.0, 4.0)
        fs = simulate(tr, P2, Config())
        slots = serialize_slots(fs, delta)
        for pid, _ in tr.pages:
            want = sum(iv.rate(pid) * iv.duration for iv in fs.intervals)
            got = sum(s.volume for s in slots if s.page == pid)
            assert got == pytest.approx(want, rel=1e-12, abs=1e-12)
        for a, b in zip(slots.slots, slots.slots[1:]):
            assert b.start >= a.end - 1e-12

    def test_bad_delta(self):
        _, fs = _single()
        with pytest.raises(ValueError):
            serialize_slots(fs, 0)


class TestGenRounding:
    def test_single_request_hand_trace(self):
        tr, fs = _single()
        ints = gen_rounding(serialize_slots(fs, 0.25), tr, 1.0)
        assert [(p.k, p.start, p.duration, p.speed) for p in ints.pieces] == [
            (1, 0.5, 0.125, 4.0), (2, 0.625, 0.125, 4.0)]
        assert ints.completions == {0: 0.75}
        assert 0.75 <= 0.5 + 1.0 + 1.25

    def test_empty(self):
        tr = make_trace({"a": 1}, [])
        ints = gen_rounding(SlotSequence((), 0.1), tr, 1.0)
        assert ints.pieces == () and ints.completions == {}

    def test_later_request_gets_own_tuple(self):
        tr = make_trace({"a": 1}, [("a", 0.0), ("a", 2.0)])
        fs = simulate(tr, P2, Config())
        assert tr.requests[1].arrival > fs.completions[0]
        ints = gen_rounding(serialize_slots(fs, 0.1), tr, 1.0)
        assert len(ints.tuples) == 2
        first, second = sorted(ints.tuples, key=lambda t: t.start)
        assert tr.requests[second.source].arrival >= fs.completions[first.source]
        assert verify_rounding(fs, ints, P2, 1.0, 0.1).passed

    def test_marking_shares_a_transmission(self):
        tr = make_trace({"a": 1}, [("a", 0.0), ("a", 0.0)])
        fs = simulate(tr, P2, Config())
        ints = gen_rounding(serialize_slots(fs, 0.1), tr, 1.0)
        assert len(ints.tuples) == 1
        assert ints.completions[0] == ints.completions[1]

    def test_min_width_first(self):
        # the short page finishes fractionally later but with a narrower window
        tr = make_trace({"long": 2.0, "short": 0.1}, [("long", 0.0), ("short", 0.9)])
        fs = simulate(tr, P2, Config())
        ints = gen_rounding(serialize_slots(fs, 0.05), tr, 1.0)
        widths = {t.page: t.width for t in ints.tuples}
        assert widths["short"] < widths["long"]
        assert verify_rounding(fs, ints, P2, 1.0, 0.05).passed

    def test_unknown_page_slot(self):
        tr = make_trace({"a": 1}, [("a", 0)])
        with pytest.raises(InconsistentSlots):
            gen_rounding(SlotSequence((Slot(0.0, 1.0, "zz", 1.0, 1.0),), 1.0), tr, 1.0)

    def test_overlapping_slots(self):
        tr = make_trace({"a": 1}, [("a", 0)])
        slots = SlotSequence((Slot(0.0, 1.0, "a", 0.5, 0.5), Slot(0.5, 1.0, "a", 0.5, 0.5)), 1.0)
        with pytest.raises(InconsistentSlots):
            gen_rounding(slots, tr, 1.0)

    def test_bad_eps_prime(self):
        tr, fs = _single()
        with pytest.raises(ValueError):
            gen_rounding(serialize_slots(fs, 0.25), tr, 0.0)

    def test_default_delta(self):
        assert default_delta(make_trace({"a": 0.2, "b": 5}, [])) == pytest.approx(0.05)
        assert default_delta(make_trace({"a": 3}, [])) == 0.1

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10**6), st.floats(0.5, 3.5))
    def test_online_prefix(self, seed, cut):
        tr = gen_random_trace(seed, 3, 10, 2.0, 4.0)
        slots = serialize_slots(simulate(tr, P2, Config()), default_delta(tr))
        full = gen_rounding(slots, tr, 1.0)
        head = SlotSequence(tuple(s for s in slots if s.end <= cut), slots.delta)
        part = gen_rounding(head, tr, 1.0)
        assert [p for p in part.pieces if p.start <= cut] == [p for p in full.pieces if p.start <= cut]

    def test_slot_completions_match_fractional_order(self):
        tr = gen_random_trace(8, 3, 8, 2.0, 4.0)
        fs = simulate(tr, P2, Config())
        done = slot_completions(serialize_slots(fs, 0.05), tr)
        for rid, f in fs.completions.items():
            assert f - 1e-9 <= done[rid] <= f + 0.05 + 1e-9


class TestVerifyRounding:
    def test_single_request_passes(self):
        tr, fs = _single()
        ints = gen_rounding(serialize_slots(fs, 0.25), tr, 1.0)
        rep = verify_rounding(fs, ints, P2, 1.0, 0.25)
        assert rep.passed
        assert rep.energy_integral == pytest.approx(rep.energy_fractional)

    def test_reordered_piece_flagged(self):
        tr, fs = _single()
        ints = gen_rounding(serialize_slots(fs, 0.25), tr, 1.0)
        a, b = ints.pieces
        swapped = (dataclasses.replace(a, k=2), dataclasses.replace(b, k=1))
        bad = dataclasses.replace(ints, pieces=swapped)
        rep = verify_rounding(fs, bad, P2, 1.0, 0.25)
        assert any(v.startswith("sequence") for v in rep.violations)

    def test_overlapping_pieces_flagged(self):
        tr, fs = _single()
        ints = gen_rounding(serialize_slots(fs, 0.25), tr, 1.0)
        a, b = ints.pieces
        bad = dataclasses.replace(ints, pieces=(a, dataclasses.replace(b, start=a.start + 0.01)))
        assert any(v.startswith("overlap") for v in verify_rounding(fs, bad, P2, 1.0, 0.25).violations)

    def test_late_completion_flagged(self):
        tr, fs = _single()
        ints = gen_rounding(serialize_slots(fs, 0.25), tr, 1.0)
        bad = dataclasses.replace(ints, completions={0: 10.0})
        rep = verify_rounding(fs, bad, P2, 1.0, 0.25)
        assert any(v.startswith("stretch") for v in rep.violations)
        assert any(v.startswith("marking") for v in rep.violations)

    def test_mismatched_traces(self):
        tr, fs = _single()
        ints = gen_rounding(serialize_slots(fs, 0.25), tr, 1.0)
        other = make_trace({"a": 2}, [("a", 0)])
        with pytest.raises(MismatchedTraces):
            verify_rounding(simulate(other, P2, Config()), ints, P2, 1.0, 0.25)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10**6), st.sampled_from([0.25, 0.5, 1.0]), st.integers(1, 5),
           st.integers(1, 16))
    def test_random_instances(self, seed, eps_prime, pages, n):
        tr = gen_random_trace(seed, pages, n, 3.0, 6.0)
        fs = simulate(tr, P2, Config())
        delta = default_delta(tr)
        ints = gen_rounding(serialize_slots(fs, delta), tr, eps_prime)
        rep = verify_rounding(fs, ints, P2, eps_prime, delta)
        assert rep.passed, rep.violations
        assert set(ints.completions) == {r.rid for r in tr.requests}

    def test_report_lines(self):
        tr, fs = _single()
        ints = gen_rounding(serialize_slots(fs, 0.25), tr, 1.0)
        text = verify_rounding(fs, ints, P2, 1.0, 0.25).text()
        assert text.endswith("violations=0\npass=true\n")


class TestIntegralDump:
    def test_format(self):
        tr, fs = _single()
        text = emit_integral(gen_rounding(serialize_slots(fs, 0.25), tr, 1.0))
        assert "piece page=a k=1 start=0.5 dur=0.125 speed=4 tuple=0 source=0\n" in text
        assert text.endswith("done request=0 t=0.75\n")

    def test_round_trip(self):
        tr = gen_random_trace(4, 3, 8, 2.0, 4.0)
        fs = simulate(tr, P2, Config())
        ints = gen_rounding(serialize_slots(fs, 0.1), tr, 0.5)
        back = parse_integral(emit_integral(ints), tr, 0.5)
        assert emit_integral(back) == emit_integral(ints)
        assert [p.k for p in back.pieces] == [p.k for p in ints.pieces]
