"""Bounded exhaustive exploration of the labelled transition system.

Depth-first search with an explicit stack over immutable states.  Branches
reaching a state already seen (equal modulo a fresh-name bijection, with the
same event history) are explored once.  Every all-traces verdict downstream
is therefore a bounded-exhaustive statement, never a proof.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

from .protocols import ProtocolSpec
from .rewriting import Instance, Rule, SystemState, enabled_instances, fire
from .terms import App, Fresh, Name, Term, Var, sort_key, substitute


@dataclass(frozen=True)
class Bounds:
    """Search bounds replacing unbounded proof search."""

    max_steps: int = 14
    max_changes: int = 1  # CHANGE_PSEUDONYM firings per vehicle
    adversary_fresh_budget: int = 1
    synthesis_depth: int = 4
    max_sessions: int = 1  # REPORT firings

    def __post_init__(self):
        for f in (
            "max_steps",
            "max_changes",
            "adversary_fresh_budget",
            "synthesis_depth",
            "max_sessions",
        ):
            if getattr(self, f) < 0:
                raise ValueError(f"{f} must be >= 0")

    def as_dict(self) -> dict:
        return {
            "max_steps": self.max_steps,
            "max_changes": self.max_changes,
            "adversary_fresh_budget": self.adversary_fresh_budget,
            "synthesis_depth": self.synthesis_depth,
            "max_sessions": self.max_sessions,
        }


@dataclass(frozen=True)
class Step:
    """One fired rule instance inside a trace."""

    rule_id: str
    binding: tuple  # sorted (ident, Term) pairs
    inputs: tuple  # ground network-input terms
    input_synthesized: tuple  # per input: built by the adversary vs replayed
    input_derivations: tuple
    generated: tuple  # adversary gen_fresh names minted for this step
    events: tuple  # Event values, time == step index
    outputs: tuple = ()  # ground terms released to the network
    fresh_idents: tuple = ()  # binding idents the rule allocated fresh

    def key(self):
        return (
            self.rule_id,
            tuple((i, sort_key(t)) for i, t in self.binding),
            tuple(sort_key(t) for t in self.inputs),
        )


@dataclass(frozen=True)
class Trace:
    """Maximal (or bound-truncated) execution with its terminal state."""

    steps: tuple
    terminal_state: SystemState
    truncated: bool = False

    @property
    def events(self) -> tuple:
        return tuple(e for s in self.steps for e in s.events)

    def key(self):
        return (len(self.steps), tuple(s.key() for s in self.steps))


@dataclass(frozen=True)
class TraceSet:
    traces: tuple
    bounds: Bounds
    states_explored: int = 0
    dedup_hits: int = 0

    def __iter__(self):
        return iter(self.traces)

    def __len__(self):
        return len(self.traces)

    @property
    def truncated_count(self) -> int:
        return sum(1 for t in self.traces if t.truncated)


def explore(
    spec: ProtocolSpec,
    init: SystemState,
    bounds: Bounds,
    dedup: bool = True,
) -> TraceSet:
    """Enumerate all maximal traces within bounds, deterministically.

    Traces hitting max_steps with enabled rules remaining are truncated and
    flagged.  The result is sorted, so it is a pure function of the inputs.
    """
    init = SystemState(
        linear=init.linear,
        persistent=init.persistent,
        knowledge=init.knowledge.with_budget(bounds.adversary_fresh_budget),
        next_fresh=init.next_fresh,
        step=init.step,
    )
    rules = sorted(spec.rules, key=lambda r: r.id)
    traces: list[Trace] = []
    seen: set[str] = set()
    explored = 0
    dedup_hits = 0
    stack: list[tuple[SystemState, tuple]] = [(init, ())]
    while stack:
        state, steps = stack.pop()
        if dedup:
            digest = _dedup_key(state, steps)
            if digest in seen:
                dedup_hits += 1
                continue
            seen.add(digest)
        explored += 1
        if len(steps) < bounds.max_steps:
            children = _children(state, steps, rules, bounds)
            truncated = False
        else:
            children = []
            # at the step bound: flag the leaf when rules could still fire
            truncated = bool(_children(state, steps, rules, bounds))
        if not children:
            traces.append(
                Trace(steps=steps, terminal_state=state, truncated=truncated)
            )
            continue
        # reversed so the lexicographically least child is expanded first
        for child_state, step in reversed(children):
            stack.append((child_state, steps + (step,)))
    traces.sort(key=Trace.key)
    return TraceSet(
        traces=tuple(traces),
        bounds=bounds,
        states_explored=explored,
        dedup_hits=dedup_hits,
    )


def _children(state, steps, rules, bounds):
    out = []
    for rule in rules:
        for inst in enabled_instances(state, rule, bounds.synthesis_depth):
            if not _within_rule_bounds(rule, inst, steps, bounds):
                continue
            child, events = fire(state, rule, inst)
            subst = inst.subst
            step = Step(
                rule_id=rule.id,
                binding=inst.binding,
                inputs=inst.inputs,
                input_synthesized=inst.synthesized,
                input_derivations=inst.input_derivations,
                generated=inst.new_names,
                events=events,
                outputs=tuple(substitute(subst, t) for t in rule.network_out),
                fresh_idents=tuple(ident for ident, _ in inst.fresh_alloc),
            )
            out.append((child, step))
    return out


def _within_rule_bounds(rule: Rule, inst: Instance, steps, bounds: Bounds) -> bool:
    if rule.id == "REPORT":
        fired = sum(1 for s in steps if s.rule_id == "REPORT")
        return fired < bounds.max_sessions
    if rule.id == "CHANGE_PSEUDONYM":
        vehicle = dict(inst.binding).get("Vj")
        fired = sum(
            1
            for s in steps
            if s.rule_id == "CHANGE_PSEUDONYM" and dict(s.binding).get("Vj") is vehicle
        )
        return fired < bounds.max_changes
    return True


def replay(spec: ProtocolSpec, init: SystemState, trace: Trace, bounds: Bounds):
    """Re-fire a trace's steps from the initial state; returns the final state.

    Raises ValueError when any step is not reproducible, so a successful
    replay certifies the recorded steps are a valid execution.
    """
    state = SystemState(
        linear=init.linear,
        persistent=init.persistent,
        knowledge=init.knowledge.with_budget(bounds.adversary_fresh_budget),
        next_fresh=init.next_fresh,
        step=init.step,
    )
    for i, step in enumerate(trace.steps):
        rule = spec.rule(step.rule_id)
        wanted = step.key()
        found = None
        for inst in enabled_instances(state, rule, bounds.synthesis_depth):
            got = Step(
                rule_id=rule.id,
                binding=inst.binding,
                inputs=inst.inputs,
                input_synthesized=inst.synthesized,
                input_derivations=inst.input_derivations,
                generated=inst.new_names,
                events=(),
            )
            if got.key() == wanted:
                found = inst
                break
        if found is None:
            raise ValueError(f"step {i} ({step.rule_id}) is not enabled on replay")
        state, events = fire(state, rule, found)
        if tuple(e.key() for e in events) != tuple(e.key() for e in step.events):
            raise ValueError(f"step {i} ({step.rule_id}) emitted different events")
    return state


# ---------------------------------------------------------------------------
# Canonicalization: digests invariant under fresh-name bijections.


# Tied groups larger than this are assigned in raw id order; realistic
# states never produce such symmetry, and soundness (equal digest implies
# isomorphism) is unaffected either way.
_GROUP_LIMIT = 6


def canonicalize(state: SystemState, history: tuple = ()) -> str:
    """Canonical digest of a state (optionally with its event history).

    Fresh names are renamed so that two states equal modulo a fresh-name
    bijection yield the same digest; equal digests reconstruct the same
    state up to renaming.  History events are position-fixed, so their
    names canonicalize by first occurrence.  The leftover names are ordered
    by iterative signature refinement: at each round the pending name with
    the least occurrence signature is fixed next, and names whose signatures
    tie are ordered by exhaustively minimizing the loosely rendered digest.
    """
    ordered = [
        f"ev {e.label}({', '.join(_skel(a) for a in e.args)})@{e.time}"
        for e in history
    ]
    sections = [
        ("lin", [_fact_skel(f) for f in state.linear]),
        ("per", [_fact_skel(f) for f in state.persistent]),
        ("kn", [_skel(t) for t in state.knowledge.basis]),
        ("gen", [_skel(t) for t in state.knowledge.generated]),
    ]
    base: dict[int, int] = {}
    for skel in ordered:
        for fid in _marker_fids(skel):
            if fid not in base:
                base[fid] = len(base)
    leftover: list[int] = []
    for _, items in sections:
        for skel in items:
            for fid in _marker_fids(skel):
                if fid not in base and fid not in leftover:
                    leftover.append(fid)

    compiled_ordered = [_compile_skel(s) for s in ordered]
    compiled_sections = [
        (key, [_compile_skel(s) for s in items]) for key, items in sections
    ]
    tagged_items = [
        (key, c) for key, items in compiled_sections for c in items
    ]

    def full_render(renaming: dict, loose: bool = False) -> str:
        parts = [f"budget:{state.knowledge.budget}"]
        parts += [_assemble(c, renaming, loose) for c in compiled_ordered]
        for key, items in compiled_sections:
            rendered = sorted(_assemble(c, renaming, loose) for c in items)
            parts.append(key + "{" + ";".join(rendered) + "}")
        return "|".join(parts)

    renaming = dict(base)
    pending = list(leftover)
    while pending:
        sigs = {fid: _signature(fid, tagged_items, renaming) for fid in pending}
        least = min(sigs.values())
        group = [fid for fid in pending if sigs[fid] == least]
        if len(group) == 1 or len(group) > _GROUP_LIMIT:
            chosen = tuple(sorted(group))
        else:
            chosen = min(
                permutations(group),
                key=lambda perm: full_render(_extended(renaming, perm), loose=True),
            )
        for fid in chosen:
            renaming[fid] = len(renaming)
        pending = [f for f in pending if f not in renaming]
    return full_render(renaming)


def _extended(renaming: dict, perm) -> dict:
    trial = dict(renaming)
    for fid in perm:
        trial[fid] = len(trial)
    return trial


def _signature(fid: int, tagged_items, renaming: dict) -> tuple:
    """Occurrence signature of a pending name: the sorted contexts it sits in.

    Pure function of bijection-invariant data (section tags, literal
    structure, already-assigned canonical ids), so isomorphic states yield
    identical signatures for corresponding names.
    """
    rows = []
    for section, (parts, fids) in tagged_items:
        if fid not in fids:
            continue
        out = []
        for part, f in zip(parts, fids):
            out.append(part)
            if f == fid:
                out.append("~#")
            elif f in renaming:
                out.append(f"~c{renaming[f]}")
            else:
                out.append("~?")
        out.append(parts[-1])
        rows.append(section + ":" + "".join(out))
    return tuple(sorted(rows))


def _dedup_key(state: SystemState, steps) -> str:
    history = tuple(e for s in steps for e in s.events)
    return f"step:{state.step}|" + canonicalize(state, history)


def _skel(t: Term) -> str:
    # Rendering with fresh ids kept as markers for later renaming.
    if isinstance(t, Fresh):
        return f"\x00{t.fid}\x00"
    if isinstance(t, Name):
        return t.label
    if isinstance(t, Var):
        return f"?{t.ident}"
    assert isinstance(t, App)
    return "(" + t.sym + " " + " ".join(_skel(a) for a in t.args) + ")"


def _fact_skel(f) -> str:
    bang = "!" if f.persistent else ""
    return f"{bang}{f.name}({','.join(_skel(a) for a in f.args)})"


def _compile_skel(skel: str):
    """Split a marker skeleton into literal parts and the fid gaps between."""
    parts = []
    fids = []
    i = 0
    while True:
        j = skel.find("\x00", i)
        if j < 0:
            parts.append(skel[i:])
            return tuple(parts), tuple(fids)
        parts.append(skel[i:j])
        end = skel.index("\x00", j + 1)
        fids.append(int(skel[j + 1 : end]))
        i = end + 1


def _assemble(compiled, renaming: dict, loose: bool = False) -> str:
    parts, fids = compiled
    if not fids:
        return parts[0]
    out = []
    for part, fid in zip(parts, fids):
        out.append(part)
        got = renaming.get(fid)
        if got is not None:
            out.append(f"~c{got}")
        elif loose:
            out.append("~?")
        else:
            raise KeyError(f"unrenamed fresh id {fid}")
    out.append(parts[-1])
    return "".join(out)


def _marker_fids(skel: str):
    i = 0
    while True:
        i = skel.find("\x00", i)
        if i < 0:
            return
        j = skel.index("\x00", i + 1)
        yield int(skel[i + 1 : j])
        i = j + 1


def canonical_events(events) -> tuple:
    """Event sequence rendered with per-trace canonical fresh renaming."""
    renaming: dict[int, int] = {}

    def rn(t: Term) -> str:
        if isinstance(t, Fresh):
            if t.fid not in renaming:
                renaming[t.fid] = len(renaming)
            return f"~c{renaming[t.fid]}"
        if isinstance(t, Name):
            return t.label
        assert isinstance(t, App)
        return "(" + t.sym + " " + " ".join(rn(a) for a in t.args) + ")"

    return tuple(
        f"{e.label}({', '.join(rn(a) for a in e.args)})@{e.time}" for e in events
    )
