"""Rule-based well-formedness checking, the second of the two verdict routes.

The derivation works state by state: a [Term] step checks, for every branch
of the state, that the emitter subscribes to its own event type, that direct
non-concurrent successors subscribe to it, and that branching-with / joining
obligations hold for all causally downstream roles; revisited states close
the derivation through a loop step that demands a subscription-covered
transition on every residual cycle.

Helper functions (`bw`, `jf`, `downstream_roles`) and the traversals here are
written independently of the direct checkers on purpose: the two routes must
agree, and a disagreement signals a bug in one of them.
"""

from __future__ import annotations

from collections import defaultdict, deque
from typing import Sequence

from .protocols import (
    ConcurrencyRelation,
    EventType,
    Role,
    State,
    Subscription,
    SwarmProtocol,
)


def overapprox_conc(components: Sequence[SwarmProtocol]) -> ConcurrencyRelation:
    """Pairs of event types private to two different components; a superset
    of the concurrent pairs of the components' composition."""
    type_sets = [p.event_types() for p in components]
    pairs = set()
    for i, ti in enumerate(type_sets):
        for j, tj in enumerate(type_sets):
            if i == j:
                continue
            for a in ti - tj:
                for b in tj - ti:
                    if a != b:
                        pairs.add(frozenset((a, b)))
    return ConcurrencyRelation(pairs)


def bw(
    protocol: SwarmProtocol, event_type: EventType, state: State, conc: ConcurrencyRelation
) -> frozenset[EventType]:
    """Event types branching with `event_type` at `state`."""
    target = protocol.successor(state, event_type)
    result = set()
    for tr in protocol.outgoing(state):
        if (
            tr.event_type != event_type
            and tr.target != target
            and not conc.related(event_type, tr.event_type)
        ):
            result.add(tr.event_type)
    return frozenset(result)


def jf(
    protocol: SwarmProtocol,
    event_type: EventType,
    state: State,
    conc: ConcurrencyRelation,
    incoming: dict[State, set[EventType]],
) -> frozenset[EventType]:
    """Event types for which `event_type` (fired at `state`) is joining:
    concurrent pairs entering `state`, neither member concurrent with it."""
    result = set()
    ins = incoming.get(state, set())
    for tp in ins:
        for tpp in ins:
            if (
                tp != tpp
                and conc.related(tp, tpp)
                and not conc.related(event_type, tp)
                and not conc.related(event_type, tpp)
            ):
                result.add(tp)
                result.add(tpp)
    return frozenset(result)


class _RolesTable:
    """Downstream-role lookup backed by a backward-propagating fixpoint over
    (state, last anchor) nodes."""

    def __init__(self, protocol: SwarmProtocol, conc: ConcurrencyRelation):
        self.protocol = protocol
        self.types = sorted(protocol.event_types())
        self.bit = {t: 1 << i for i, t in enumerate(self.types)}
        nodes = [(s, t) for s in sorted(protocol.states) for t in self.types]
        succs: dict[tuple, list[tuple]] = {}
        local: dict[tuple, int] = {}
        preds: dict[tuple, list[tuple]] = defaultdict(list)
        for node in nodes:
            s, last = node
            edges = []
            label = 0
            for tr in protocol.outgoing(s):
                edges.append((tr.target, last))
                if not conc.related(last, tr.event_type):
                    label |= self.bit[tr.event_type]
                    edges.append((tr.target, tr.event_type))
            succs[node] = edges
            local[node] = label
            for succ in edges:
                preds[succ].append(node)
        mask = dict(local)
        queue = deque(nodes)
        queued = set(nodes)
        while queue:
            node = queue.popleft()
            queued.discard(node)
            merged = local[node]
            for succ in succs[node]:
                merged |= mask[succ]
            if merged != mask[node]:
                mask[node] = merged
                for pred in preds[node]:
                    if pred not in queued:
                        queued.add(pred)
                        queue.append(pred)
        self._mask = mask

    def anchor_mask(self, state: State, event_type: EventType) -> int:
        succ = self.protocol.successor(state, event_type)
        return self.bit[event_type] | self._mask[(succ, event_type)]

    def downstream_roles(
        self, state: State, event_type: EventType, subscription: Subscription
    ) -> frozenset[Role]:
        anchors = self.anchor_mask(state, event_type)
        roles = set()
        for role, types in subscription.items():
            m = 0
            for t in types:
                if t in self.bit:
                    m |= self.bit[t]
            if m & anchors:
                roles.add(role)
        return frozenset(roles)


def check_dcc(
    protocol: SwarmProtocol, subscription: Subscription, conc: ConcurrencyRelation
) -> bool:
    """Determinate-and-causal-consistent verdict for the given concurrency
    over-approximation."""
    table = _RolesTable(protocol, conc)
    incoming: dict[State, set[EventType]] = defaultdict(set)
    for tr in protocol.transitions:
        incoming[tr.target].add(tr.event_type)

    visited: set[State] = set()
    worklist = [protocol.initial]
    while worklist:
        state = worklist.pop()
        if state in visited:
            continue
        visited.add(state)
        for tr in protocol.outgoing(state):
            if tr.event_type not in subscription.of(tr.role):
                return False
            for succ_tr in protocol.outgoing(tr.target):
                if not conc.related(tr.event_type, succ_tr.event_type):
                    if tr.event_type not in subscription.of(succ_tr.role):
                        return False
            branch_with = bw(protocol, tr.event_type, state, conc)
            if branch_with:
                required = branch_with | {tr.event_type}
                for role in table.downstream_roles(state, tr.event_type, subscription):
                    if not required <= subscription.of(role):
                        return False
            join_for = jf(protocol, tr.event_type, state, conc, incoming)
            if join_for:
                required = join_for | {tr.event_type}
                for role in table.downstream_roles(state, tr.event_type, subscription):
                    if not required <= subscription.of(role):
                        return False
            worklist.append(tr.target)

    return not _has_uncovered_cycle(protocol, subscription, conc, table)


def _has_uncovered_cycle(
    protocol: SwarmProtocol,
    subscription: Subscription,
    conc: ConcurrencyRelation,
    table: _RolesTable,
) -> bool:
    """Cycle detection restricted to transitions whose event type some
    downstream role misses."""

    def covered(state: State, event_type: EventType) -> bool:
        return all(
            event_type in subscription.of(role)
            for role in table.downstream_roles(state, event_type, subscription)
        )

    residual: dict[State, list[State]] = defaultdict(list)
    for tr in protocol.transitions:
        if not covered(tr.source, tr.event_type):
            residual[tr.source].append(tr.target)

    color: dict[State, int] = {}
    for root in sorted(residual):
        if color.get(root, 0) != 0:
            continue
        stack = [(root, iter(residual.get(root, ())))]
        color[root] = 1
        while stack:
            node, it = stack[-1]
            advanced = False
            for succ in it:
                if color.get(succ, 0) == 1:
                    return True
                if color.get(succ, 0) == 0:
                    color[succ] = 1
                    stack.append((succ, iter(residual.get(succ, ()))))
                    advanced = True
                    break
            if not advanced:
                color[node] = 2
                stack.pop()
    return False


def check_well_formed_rules(
    components: Sequence[SwarmProtocol],
    composition: SwarmProtocol,
    subscription: Subscription,
) -> bool:
    """Entry point mirroring the direct combined check: composability of the
    components, then DCC under the component concurrency over-approximation."""
    from .composition import check_composable

    if not check_composable(components).passed:
        return False
    return check_dcc(composition, subscription, overapprox_conc(components))
