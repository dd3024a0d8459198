"""Compositional subscription generation without expanding the composition.

Works on the individual component protocols only.  Concurrency is
over-approximated by pairing event types whose emitting roles are private to
different components; the causally-downstream role set is over-approximated
by `subscribers`, the roles subscribing to anything reachable from a state
within its component.  Four monotone rules (causal consistency, branching,
joining, interfacing) run to a fixpoint, then a final pass covers every
component cycle with an event type all reachable subscribers observe.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from ._graphs import cycle_edges
from .composition import require_composable
from .protocols import (
    ConcurrencyRelation,
    EventType,
    Role,
    State,
    Subscription,
    SwarmProtocol,
    branching_pairs,
)
from .wellformed import UpdatingTypeSet


@dataclass(frozen=True)
class Alg1Result:
    subscription: Subscription
    updating: UpdatingTypeSet
    conc: ConcurrencyRelation
    interfacing_roles: frozenset[Role]
    iterations: int
    cc_subscription: Subscription
    """Snapshot after the causal-consistency pass alone."""


def component_concurrency(protocols: Sequence[SwarmProtocol]) -> ConcurrencyRelation:
    """Pairs of event types emitted, in different components, by roles foreign
    to the respective other component."""
    role_sets = [p.roles() for p in protocols]
    typed = [
        [(t, p.emitters_of(t)) for t in sorted(p.event_types())] for p in protocols
    ]
    pairs = set()
    for i in range(len(protocols)):
        for j in range(i + 1, len(protocols)):
            left = [t for t, roles in typed[i] if not roles & role_sets[j]]
            right = [t for t, roles in typed[j] if not roles & role_sets[i]]
            for a in left:
                for b in right:
                    if a != b:
                        pairs.add(frozenset((a, b)))
    return ConcurrencyRelation(pairs)


def interfacing_roles(protocols: Sequence[SwarmProtocol]) -> frozenset[Role]:
    counts: dict[Role, int] = {}
    for proto in protocols:
        for role in proto.roles():
            counts[role] = counts.get(role, 0) + 1
    return frozenset(r for r, n in counts.items() if n >= 2)


def subscribers(
    state: State, protocol: SwarmProtocol, subscription: Subscription
) -> frozenset[Role]:
    """Roles subscribing to some event type reachable from `state` within the
    component; over-approximates the causally-downstream role set."""
    reachable = protocol.reachable_types(state)
    return frozenset(
        r for r in subscription.roles() if subscription.of(r) & reachable
    )


def generate_subscription(
    protocols: Sequence[SwarmProtocol],
    subscriptions: Sequence[Subscription] | None = None,
    rule_order: tuple[str, ...] = ("branching", "joining", "interfacing"),
) -> Alg1Result:
    """Compute a subscription for which the composition of the inputs is
    well-formed, in time polynomial in the total component size.

    `rule_order` permutes the monotone rules inside the fixpoint loop; the
    fixpoint itself is order-independent and the permutation exists so tests
    can assert that.
    """
    require_composable(protocols)
    sigma: dict[Role, set[EventType]] = {}
    for sub in subscriptions or []:
        for role, types in sub.items():
            sigma.setdefault(role, set()).update(types)

    ifr = interfacing_roles(protocols)
    conc = component_concurrency(protocols)
    reach_types = [
        {s: proto.reachable_types(s) for s in proto.states} for proto in protocols
    ]

    def add(role: Role, types: Iterable[EventType]) -> bool:
        bucket = sigma.setdefault(role, set())
        before = len(bucket)
        bucket.update(types)
        return len(bucket) != before

    # recomputed once per fixpoint round: a stale subscriber set only delays
    # an addition to the next round, the fixpoint itself is unaffected
    subs_cache: dict[tuple[int, State], list[Role]] = {}

    def subs_of(i: int, state: State) -> list[Role]:
        key = (i, state)
        if key not in subs_cache:
            reachable = reach_types[i][state]
            subs_cache[key] = [r for r, ts in sigma.items() if ts & reachable]
        return subs_cache[key]

    # causal consistency is independent of the subscription: one pass closes it
    for proto in protocols:
        for tr in proto.transitions:
            add(tr.role, [tr.event_type])
            for succ in proto.outgoing(tr.target):
                add(succ.role, [tr.event_type])
    cc_snapshot = Subscription(sigma)

    # branching within a component never involves concurrent types, and the
    # joining rule pairs an interfacing type with concurrent predecessors
    # from two components
    bps = [sorted(branching_pairs(proto, conc)) for proto in protocols]
    joins = _joining_patterns(protocols, conc)

    updating_tags: dict[EventType, set[str]] = {}
    for i, pairs in enumerate(bps):
        for t, _, _ in pairs:
            updating_tags.setdefault(t, set()).add("branching")
    for t, *_ in joins:
        updating_tags.setdefault(t, set()).add("joining")

    def apply_branching() -> bool:
        changed = False
        for i in range(len(protocols)):
            for t, t_other, state in bps[i]:
                for role in subs_of(i, state):
                    changed |= add(role, [t, t_other])
        return changed

    def apply_joining() -> bool:
        changed = False
        for t, tp, tpp, i, state in joins:
            for role in subs_of(i, state):
                changed |= add(role, [t, tp, tpp])
        return changed

    def apply_interfacing() -> bool:
        # later components first with fresh subscriber queries, so a chain of
        # interfacing dependencies propagates backwards in a single round
        changed = False
        for i in reversed(range(len(protocols))):
            proto = protocols[i]
            for tr in proto.transitions:
                if tr.role in ifr:
                    reachable = reach_types[i][tr.target]
                    for role in [r for r, ts in sigma.items() if ts & reachable]:
                        changed |= add(role, [tr.event_type])
        return changed

    rules = {
        "branching": apply_branching,
        "joining": apply_joining,
        "interfacing": apply_interfacing,
    }
    iterations = 0
    changed = True
    while changed:
        changed = False
        iterations += 1
        subs_cache.clear()
        for name in rule_order:
            changed |= rules[name]()

    # looping pass: cover every component cycle with an event type that all
    # reachable subscribers observe; pick the lexicographically smallest
    # uncovered cycle type, ties broken by source state
    for i, proto in enumerate(protocols):
        while True:
            subs_cache.clear()
            covered = {
                tr
                for tr in proto.transitions
                if all(tr.event_type in sigma.get(r, ()) for r in subs_of(i, tr.source))
            }
            residual = [tr for tr in proto.transitions if tr not in covered]
            cyclic = cycle_edges(residual)
            if not cyclic:
                break
            pick = min(cyclic, key=lambda tr: (tr.event_type, tr.source))
            for role in subs_of(i, pick.source):
                add(role, [pick.event_type])
        for tr in cycle_edges(list(proto.transitions)):
            if all(tr.event_type in sigma.get(r, ()) for r in subs_of(i, tr.source)):
                updating_tags.setdefault(tr.event_type, set()).add("looping")

    return Alg1Result(
        subscription=Subscription(sigma),
        updating=UpdatingTypeSet.from_tags(updating_tags),
        conc=conc,
        interfacing_roles=ifr,
        iterations=iterations,
        cc_subscription=cc_snapshot,
    )


def _joining_patterns(
    protocols: Sequence[SwarmProtocol], conc: ConcurrencyRelation
) -> list[tuple[EventType, EventType, EventType, int, State]]:
    """(t, t', t'', i, state): component i has state -t'-> -t->, another
    component has -t''-> -t->, with t', t'' concurrent and neither concurrent
    with t.  The state recorded is the one before t' in component i."""
    # group the non-concurrent immediate predecessors of each event type by
    # component; only event types occurring in several components can join
    preds: dict[EventType, list[tuple[int, EventType, State]]] = {}
    for i, gi in enumerate(protocols):
        for tr_p in gi.transitions:
            for tr_t in gi.outgoing(tr_p.target):
                if not conc.related(tr_p.event_type, tr_t.event_type):
                    preds.setdefault(tr_t.event_type, []).append(
                        (i, tr_p.event_type, tr_p.source)
                    )
    patterns = set()
    for t, entries in preds.items():
        for i, tp, state in entries:
            for j, tpp, _ in entries:
                if i != j and conc.related(tp, tpp):
                    patterns.add((t, tp, tpp, i, state))
    return sorted(patterns)
