"""Dolev-Yao adversary knowledge: analysis closure and bounded synthesis.

Analysis (projection, signature payload extraction, decryption with an
available key) is closed eagerly whenever a term is observed; synthesis is
answered lazily and goal-directed by can_derive.  Public names are derivable
at depth 0: the adversary can always utter agent ids and protocol tags.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

from .terms import (
    CONSTRUCTORS,
    App,
    Fresh,
    Name,
    Term,
    Var,
    app,
    fresh,
    instantiate_partial,
    is_ground,
    match,
    normalize,
    render,
    sort_key,
    term_size,
)


@dataclass(frozen=True)
class Derivation:
    """How the adversary obtains a term: leaf lookup or constructor step."""

    term: Term
    via: str  # "known" | "public" | "generated" | "build:<sym>"
    children: tuple["Derivation", ...] = ()
    cost: int = 0

    def render(self) -> str:
        if not self.children:
            return f"{render(self.term)}[{self.via}]"
        inner = " ".join(c.render() for c in self.children)
        return f"({self.via} {inner})"


@dataclass(frozen=True)
class Knowledge:
    """Immutable adversary state: observed closure plus self-generated names.

    basis is closed under analysis and normalization.  generated names are
    also members of basis; budget caps how many more gen_fresh may mint.
    """

    basis: frozenset = frozenset()
    generated: tuple = ()
    budget: int = 0
    _memo: dict = field(default_factory=dict, compare=False, repr=False)

    def with_budget(self, budget: int) -> "Knowledge":
        return replace(self, budget=budget)


def observe(k: Knowledge, t: Term) -> Knowledge:
    """Extend knowledge with t and all analysis products, eagerly closed."""
    t = normalize(t)
    if t in k.basis:
        return k
    closed = set(k.basis)
    closed.add(t)
    _close(closed)
    return replace(k, basis=frozenset(closed), _memo={})


def _close(closed: set) -> None:
    # Iterate to fixpoint: newly learned keys may unlock stored ciphertexts.
    changed = True
    while changed:
        changed = False
        for t in list(closed):
            for part in _analysis_parts(t, closed):
                if part not in closed:
                    closed.add(part)
                    changed = True


def _analysis_parts(t: Term, closed: set) -> Iterable[Term]:
    if not isinstance(t, App):
        return ()
    if t.sym == "tuple":
        return t.args
    if t.sym == "sign":
        # Signatures are not message-hiding: the payload leaks, the key does not.
        return (t.args[0],)
    if t.sym in ("renc", "oenc"):
        if _constructible(t.args[1], closed):
            return (t.args[0],)
    return ()


def _constructible(t: Term, closed: set) -> bool:
    """Whether t is buildable from the closure without further analysis."""
    if t in closed or isinstance(t, Name):
        return True
    if isinstance(t, App) and t.sym in CONSTRUCTORS:
        return all(_constructible(a, closed) for a in t.args)
    return False


def can_derive(k: Knowledge, goal: Term, depth: int) -> Optional[Derivation]:
    """Derivation of goal using at most `depth` constructor applications.

    Goal-directed: decomposes the (normalized) goal structurally; basis
    members, public names and generated names cost nothing.  Returns the
    minimum-cost derivation tree, or None.
    """
    d = _derive(k, normalize(goal))
    if d is not None and d.cost <= depth:
        return d
    return None


def _derive(k: Knowledge, goal: Term) -> Optional[Derivation]:
    hit = k._memo.get(goal, False)
    if hit is not False:
        return hit
    out: Optional[Derivation] = None
    if goal in k.basis:
        via = "generated" if isinstance(goal, Fresh) and goal in k.generated else "known"
        out = Derivation(goal, via)
    elif isinstance(goal, Name):
        out = Derivation(goal, "public")
    elif isinstance(goal, App) and goal.sym in CONSTRUCTORS:
        children = []
        cost = 1
        for a in goal.args:
            sub = _derive(k, a)
            if sub is None:
                children = None
                break
            children.append(sub)
            cost += sub.cost
        if children is not None:
            out = Derivation(goal, f"build:{goal.sym}", tuple(children), cost)
    k._memo[goal] = out
    return out


def gen_fresh(k: Knowledge, fid: int) -> Optional[tuple[Knowledge, Fresh]]:
    """Mint an adversary-owned fresh name, or None when the budget is spent."""
    if k.budget <= 0:
        return None
    f = fresh(fid, origin="adversary")
    k2 = replace(
        k,
        basis=k.basis | {f},
        generated=k.generated + (f,),
        budget=k.budget - 1,
        _memo={},
    )
    return k2, f


def saturate_oracle(
    k: Knowledge,
    size_cap: int,
    extra_atoms: Iterable[Term] = (),
    max_tuple_arity: int = 3,
) -> frozenset:
    """All derivable terms with at most size_cap constructor applications.

    Naive forward saturation, used only as an independent test oracle for
    can_derive.  Alternates analysis (projection, payload extraction,
    decryption with an in-set key) and synthesis (every constructor over
    in-set arguments whose result stays within size_cap) until fixpoint.
    extra_atoms supplies the public-name alphabet the oracle may utter.
    """
    universe = set(k.basis) | set(k.generated) | {normalize(a) for a in extra_atoms}
    changed = True
    while changed:
        changed = False
        # analysis pass
        for t in list(universe):
            if not isinstance(t, App):
                continue
            parts: tuple = ()
            if t.sym == "tuple":
                parts = t.args
            elif t.sym == "sign":
                parts = (t.args[0],)
            elif t.sym in ("renc", "oenc") and t.args[1] in universe:
                parts = (t.args[0],)
            for p in parts:
                if p not in universe:
                    universe.add(p)
                    changed = True
        # synthesis pass, stratified by result size
        by_size: dict[int, list] = {}
        for t in universe:
            by_size.setdefault(term_size(t), []).append(t)
        for t in _all_constructions(by_size, size_cap, max_tuple_arity):
            if t not in universe:
                universe.add(t)
                changed = True
    return frozenset(t for t in universe if term_size(t) <= size_cap)


def _all_constructions(by_size: dict, cap: int, max_arity: int):
    sizes = sorted(by_size)
    shapes = [("pk", 1), ("sign", 2), ("renc", 2), ("oenc", 2), ("verify", 3)]
    shapes += [("tuple", n) for n in range(2, max_arity + 1)]
    for sym, arity in shapes:
        for combo in _size_combos(sizes, arity, cap - 1):
            pools = [by_size[s] for s in combo]
            for args in _product(pools):
                yield normalize(app(sym, args))


def _size_combos(sizes, arity, budget):
    if arity == 0:
        yield ()
        return
    for s in sizes:
        if s > budget:
            continue
        for rest in _size_combos(sizes, arity - 1, budget - s):
            yield (s,) + rest


def _product(pools):
    if not pools:
        yield ()
        return
    head, *tail = pools
    for h in head:
        for rest in _product(tail):
            yield (h,) + rest


@dataclass(frozen=True)
class SynthResult:
    """One way to feed a network-input pattern from adversary material."""

    subst: tuple  # sorted (ident, Term) pairs added or confirmed
    term: Term
    cost: int
    new_names: tuple  # gen_fresh allocations this instantiation requires
    derivation: str

    @property
    def synthesized(self) -> bool:
        return self.cost > 0 or bool(self.new_names)


def synthesize(
    k: Knowledge,
    pattern: Term,
    subst: dict,
    budget: int,
    fid_base: int,
) -> list[SynthResult]:
    """Pattern-directed instantiations of a network-input pattern.

    Enumerates every adversary-derivable ground term matching the pattern
    shape within `budget` constructor applications.  Unconstrained variable
    positions draw from observed and generated material plus at most one
    newly minted fresh name per position (fids from fid_base onward); freely
    constructed compounds are only built where the pattern demands them.
    Deterministic order: results sorted by structural term order.
    """
    from .terms import variables

    relevant = tuple(
        sorted((v, t) for v, t in subst.items() if v in variables(pattern))
    )
    memo_key = ("synth", pattern, relevant, budget, fid_base)
    hit = k._memo.get(memo_key)
    if hit is not None:
        return hit
    results: dict = {}
    for subst2, term, cost, new_names, deriv in _synth(
        k, pattern, dict(relevant), budget, fid_base, 0
    ):
        key = (tuple(sorted(subst2.items())), term, new_names)
        old = results.get(key)
        if old is None or cost < old[0]:
            results[key] = (cost, deriv)
    out = [
        SynthResult(subst=key[0], term=key[1], cost=cost, new_names=key[2], derivation=deriv)
        for key, (cost, deriv) in results.items()
    ]
    out.sort(
        key=lambda r: (
            sort_key(r.term),
            tuple((ident, sort_key(t)) for ident, t in r.subst),
        )
    )
    k._memo[memo_key] = out
    return out


_pattern_vars: dict = {}


def _vars_of(pattern: Term) -> frozenset:
    from .terms import variables

    got = _pattern_vars.get(pattern)
    if got is None:
        got = frozenset(variables(pattern))
        _pattern_vars[pattern] = got
    return got


def _synth(k: Knowledge, pattern: Term, subst: dict, budget: int, fid_base: int, n_new: int):
    # Memoized on the bindings the pattern can see; callers merge the delta.
    pvars = _vars_of(pattern)
    rel = {v: t for v, t in subst.items() if v in pvars}
    next_fid = fid_base + n_new
    key = ("pat", pattern, tuple(sorted(rel.items())), budget, next_fid)
    hit = k._memo.get(key)
    if hit is None:
        hit = list(_synth_raw(k, pattern, rel, budget, next_fid))
        k._memo[key] = hit
    for delta, term, cost, names, deriv in hit:
        merged = dict(subst)
        merged.update(delta)
        yield merged, term, cost, names, deriv


def _synth_raw(k: Knowledge, pattern: Term, subst: dict, budget: int, next_fid: int):
    p = instantiate_partial(subst, pattern)
    if is_ground(p):
        g = normalize(p)
        d = can_derive(k, g, budget)
        if d is not None:
            yield subst, g, d.cost, (), d.render()
        return
    if isinstance(p, Var):
        for cand in _var_candidates(k, next_fid):
            sub2 = dict(subst)
            sub2[p.ident] = cand.term
            yield sub2, cand.term, 0, cand.new_names, cand.derivation
        return
    # Structured pattern with open variables: replay a stored term that
    # matches, or build it constructor-by-constructor.
    assert isinstance(p, App)
    for stored in sorted(k.basis, key=sort_key):
        m = match(p, stored, subst)
        if m is not None:
            yield m, stored, 0, (), f"{render(stored)}[known]"
    if p.sym in CONSTRUCTORS and budget >= 1:
        for combo in _synth_args(k, p.args, subst, budget - 1, next_fid, 0):
            sub2, args, cost, new_names, derivs = combo
            g = normalize(app(p.sym, args))
            yield sub2, g, cost + 1, new_names, f"(build:{p.sym} {' '.join(derivs)})"


def _synth_args(k: Knowledge, patterns, subst, budget, fid_base, n_new):
    if not patterns:
        yield subst, (), 0, (), ()
        return
    head, tail = patterns[0], patterns[1:]
    for sub1, t1, c1, names1, d1 in _synth(k, head, subst, budget, fid_base, n_new):
        for sub2, rest, c2, names2, drest in _synth_args(
            k, tail, sub1, budget - c1, fid_base, n_new + len(names1)
        ):
            if c1 + c2 <= budget:
                yield sub2, (t1,) + rest, c1 + c2, names1 + names2, (d1,) + drest


def _var_candidates(k: Knowledge, next_fid: int):
    key = ("cands", next_fid)
    hit = k._memo.get(key)
    if hit is not None:
        return hit
    cands = []
    if k.budget > 0:
        f = fresh(next_fid, origin="adversary")
        cands.append(SynthResult((), f, 0, (f,), f"{render(f)}[gen-fresh]"))
    for g in k.generated:
        cands.append(SynthResult((), g, 0, (), f"{render(g)}[generated]"))
    for t in k.basis:
        if t not in k.generated:
            cands.append(SynthResult((), t, 0, (), f"{render(t)}[known]"))
    cands.sort(key=lambda c: sort_key(c.term))
    k._memo[key] = cands
    return cands
