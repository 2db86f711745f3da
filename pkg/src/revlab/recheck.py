"""Second-opinion evaluation of goal predicates over an event sequence.

Deliberately written apart from goals.py (different structure: label index,
explicit timepoint lists) so every emitted witness or counterexample gets an
independent confirmation before it is reported.
"""

from __future__ import annotations

from collections import defaultdict


def _index(events):
    by_label = defaultdict(list)
    for e in events:
        by_label[e.label].append(e)
    return by_label


def _vehicle_clean_weak(idx, vj, upto) -> bool:
    # prefixes are executions too: only compromises up to the anchor count
    for label in ("RevealLtk", "RevealSKPSi"):
        for e in idx[label]:
            if e.args[0] is vj and e.time <= upto:
                return False
    return True


def _vehicle_clean_strict(idx, vj, upto) -> bool:
    for label in ("RevealLtk", "RevealSKPSi", "VjSKPSiReveal", "VehicleCompromised"):
        for e in idx[label]:
            if e.args[0] is vj and e.time <= upto:
                return False
    return True


def holds(goal: str, events) -> bool:
    """Whether the goal's witness/violation pattern occurs in the events."""
    idx = _index(events)
    if goal == "g1":
        return _g1(events, idx)
    if goal == "g2":
        return _accept_without_receive(idx, weak_guard=True)
    if goal == "g3":
        return _g3(idx)
    if goal == "g4":
        return _g3(idx) or _accept_without_receive(idx, weak_guard=True)
    if goal == "g5":
        return _g5(idx)
    if goal == "g6":
        return _g6(idx)
    if goal == "g7":
        return _accept_without_receive(idx, weak_guard=False)
    raise ValueError(f"unknown goal {goal!r}")


def _g1(events, idx) -> bool:
    order = ["Reported", "OsrReqMsgSentTo", "OsrReqMsgRecvBy", "OsrConfSentBy", "OsrConfAcceptedBy"]
    for rep in idx["Reported"]:
        vj, t = rep.args
        cursor = list(events).index(rep)
        ok = True
        for label in order[1:]:
            nxt = None
            for pos in range(cursor + 1, len(events)):
                e = events[pos]
                if e.label != label:
                    continue
                if label in ("OsrReqMsgSentTo", "OsrConfAcceptedBy"):
                    agent_ok = e.args[1] is vj
                else:
                    agent_ok = e.args[0] is vj
                if agent_ok and e.args[2] is t:
                    nxt = pos
                    break
            if nxt is None:
                ok = False
                break
            cursor = nxt
        if ok:
            return True
    return False


def _accept_without_receive(idx, weak_guard: bool) -> bool:
    clean = _vehicle_clean_weak if weak_guard else _vehicle_clean_strict
    for acc in idx["OsrConfAcceptedBy"]:
        ra, vj, t = acc.args
        if not clean(idx, vj, acc.time):
            continue
        matched = [
            r
            for r in idx["OsrReqMsgRecvBy"]
            if r.args[0] is vj and r.args[1] is ra and r.args[2] is t and r.time < acc.time
        ]
        if not matched:
            return True
    return False


def _g3(idx) -> bool:
    for c in idx["Commit"]:
        a, b, m = c.args
        skip = False
        for x in (a, b):
            label = getattr(x, "label", "")
            if (
                label.startswith("V")
                and label[1:].isdigit()
                and not _vehicle_clean_weak(idx, x, c.time)
            ):
                skip = True
        if skip:
            continue
        earlier = [
            r
            for r in idx["Running"]
            if r.args[0] is a and r.args[1] is b and r.args[2] is m and r.time < c.time
        ]
        if not earlier:
            return True
    return False


def _g5(idx) -> bool:
    for rep in idx["Reported"]:
        vj, t1 = rep.args
        changes = [
            c
            for c in idx["ChangePseudonymForVehicle"]
            if c.args[0] is vj and c.args[1] is t1 and c.time > rep.time
        ]
        for chg in changes:
            confs = [
                s
                for s in idx["OsrConfSentBy"]
                if s.args[0] is vj
                and s.args[2] is t1
                and s.time > chg.time
                and _vehicle_clean_strict(idx, vj, s.time)
            ]
            if confs:
                return True
    return False


def _g6(idx) -> bool:
    for sent in idx["OsrConfSentBy"]:
        vj, ra, t = sent.args
        if not _vehicle_clean_strict(idx, vj, sent.time):
            continue
        earlier = [
            s
            for s in idx["OsrReqMsgSentTo"]
            if s.args[0] is ra and s.args[1] is vj and s.args[2] is t and s.time < sent.time
        ]
        if not earlier:
            return True
    return False
