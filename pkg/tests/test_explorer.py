"""Exploration: completeness vs a dedup-free enumerator, canonical digests,
replay, truncation, determinism."""

import random

from helpers import (
    enumerate_event_seqs,
    random_small_state,
    renamed_copy,
    states_isomorphic,
)
from revlab import Bounds, build_protocol, explore, initial_state, replay
from revlab.explorer import Trace, canonical_events, canonicalize
from revlab.knowledge import Knowledge, observe
from revlab.rewriting import Fact, make_state
from revlab.terms import fresh, pk, tup


class TestExplore:
    def test_zero_steps_yields_single_empty_trace(self):
        spec = build_protocol("plain")
        ts = explore(spec, initial_state(spec, 1), Bounds(max_steps=0))
        assert len(ts) == 1
        (trace,) = ts
        assert trace.steps == ()
        assert trace.truncated  # setup rules were ready to fire

    def test_honest_message_flow_appears(self):
        spec = build_protocol("plain")
        ts = explore(spec, initial_state(spec, 1), Bounds())
        wanted = [
            "Reported",
            "OsrReqMsgSentTo",
            "OsrReqMsgRecvBy",
            "OsrConfSentBy",
            "OsrConfAcceptedBy",
        ]
        def has_flow(trace):
            labels = [e.label for e in trace.events]
            pos = -1
            for w in wanted:
                if w not in labels[pos + 1 :]:
                    return False
                pos = labels.index(w, pos + 1)
            return True
        assert any(has_flow(t) for t in ts)

    def test_matches_dedup_free_enumerator(self):
        # small bounds keep the naive recursion tractable
        bounds = Bounds(max_steps=7)
        for protocol in ("plain", "rtoken"):
            spec = build_protocol(protocol, change_enabled=True)
            init = initial_state(spec, 1)
            ts = explore(spec, init, bounds)
            got = {canonical_events(t.events) for t in ts}
            expected = enumerate_event_seqs(spec, init, bounds)
            assert got == expected, f"{protocol}: trace sets diverge"

    def test_deterministic_reruns(self):
        spec = build_protocol("rtoken", change_enabled=True)
        bounds = Bounds(max_steps=8)
        a = explore(spec, initial_state(spec, 1), bounds)
        b = explore(spec, initial_state(spec, 1), bounds)
        assert [t.key() for t in a] == [t.key() for t in b]

    def test_dedup_only_removes_duplicates(self):
        from revlab.goals import run_all

        for protocol in ("plain", "rtoken"):
            spec = build_protocol(protocol, change_enabled=True)
            bounds = Bounds(max_steps=7)
            with_dedup = explore(spec, initial_state(spec, 1), bounds, dedup=True)
            without = explore(spec, initial_state(spec, 1), bounds, dedup=False)
            assert {canonical_events(t.events) for t in with_dedup} == {
                canonical_events(t.events) for t in without
            }
            assert len(with_dedup) <= len(without)
            # goal verdicts must not depend on deduplication
            a = run_all(spec, bounds, trace_set=with_dedup).verdicts
            b = run_all(spec, bounds, trace_set=without).verdicts
            assert {g: v.outcome for g, v in a.items()} == {
                g: v.outcome for g, v in b.items()
            }

    def test_truncation_is_flagged(self):
        spec = build_protocol("plain")
        ts = explore(spec, initial_state(spec, 1), Bounds(max_steps=2))
        assert all(t.truncated for t in ts)
        full = explore(spec, initial_state(spec, 1), Bounds())
        assert all(not t.truncated for t in full)

    def test_prefix_closure_via_replay(self):
        spec = build_protocol("plain")
        bounds = Bounds()
        init = initial_state(spec, 1)
        ts = explore(spec, init, bounds)
        trace = max(ts, key=lambda t: len(t.steps))
        for k in range(len(trace.steps) + 1):
            partial = Trace(
                steps=trace.steps[:k],
                terminal_state=trace.terminal_state,
                truncated=False,
            )
            replay(spec, init, partial, bounds)  # raises if not a valid execution

    def test_replay_reproduces_terminal_state(self):
        spec = build_protocol("otoken", change_enabled=True)
        bounds = Bounds()
        init = initial_state(spec, 1)
        ts = explore(spec, init, bounds)
        for trace in list(ts)[:10]:
            final = replay(spec, init, trace, bounds)
            assert canonicalize(final) == canonicalize(trace.terminal_state)


class TestBounds:
    def test_rejects_negative_values(self):
        import pytest

        with pytest.raises(ValueError):
            Bounds(max_steps=-1)

    def test_change_budget_limits_firings(self):
        spec = build_protocol("plain", change_enabled=True)
        ts = explore(spec, initial_state(spec, 1), Bounds(max_changes=2))
        max_changes = max(
            sum(1 for s in t.steps if s.rule_id == "CHANGE_PSEUDONYM") for t in ts
        )
        assert max_changes == 2

    def test_session_budget_limits_reports(self):
        spec = build_protocol("plain")
        ts = explore(spec, initial_state(spec, 1), Bounds(max_sessions=1))
        assert all(
            sum(1 for s in t.steps if s.rule_id == "REPORT") <= 1 for t in ts
        )


class TestCanonicalize:
    def test_fresh_renaming_invariance(self):
        a, b = fresh(500), fresh(501)
        s1 = make_state(
            linear=[Fact("F", (a,))],
            persistent=[Fact("P", (pk(b),), persistent=True)],
            knowledge=observe(Knowledge(), tup(a, pk(b))),
        )
        c, d = fresh(600), fresh(601)
        s2 = make_state(
            linear=[Fact("F", (d,))],
            persistent=[Fact("P", (pk(c),), persistent=True)],
            knowledge=observe(Knowledge(), tup(d, pk(c))),
        )
        assert canonicalize(s1) == canonicalize(s2)

    def test_multiplicity_differences_detected(self):
        a = fresh(502)
        one = make_state(linear=[Fact("F", (a,))])
        two = make_state(linear=[Fact("F", (a,)), Fact("F", (a,))])
        assert canonicalize(one) != canonicalize(two)

    def test_digest_equality_matches_isomorphism_oracle(self):
        rng = random.Random(42)
        agree = 0
        for _ in range(300):
            s1 = random_small_state(rng)
            if rng.random() < 0.5:
                s2 = renamed_copy(s1, rng)
            else:
                s2 = random_small_state(rng)
            same_digest = canonicalize(s1) == canonicalize(s2)
            iso = states_isomorphic(s1, s2)
            assert same_digest == iso
            agree += 1
        assert agree == 300
