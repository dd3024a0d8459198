"""Internal graph utilities: iterative SCCs, cycle extraction, and the
anchor-reachability index shared by the determinacy checks.

The anchor index works over the product graph whose nodes are
(protocol state, last anchor event type).  From a node, any transition may
be taken silently keeping the anchor, and a transition whose label is not
concurrent with the anchor may additionally be taken as the next anchor.
The set of anchor labels reachable from a node depends only on the graph
and the concurrency relation, so it is computed once (as bitmasks over the
event types) and reused across subscription changes.
"""

from __future__ import annotations

from typing import Callable, Hashable, Iterable, Sequence

from .protocols import (
    ConcurrencyRelation,
    EventType,
    Role,
    State,
    Subscription,
    SwarmProtocol,
    Transition,
)

Node = Hashable


def strongly_connected_components(
    nodes: Iterable[Node], successors: Callable[[Node], Iterable[Node]]
) -> list[list[Node]]:
    """Tarjan's algorithm, iterative; components in reverse topological order."""
    index: dict[Node, int] = {}
    lowlink: dict[Node, int] = {}
    on_stack: set[Node] = set()
    stack: list[Node] = []
    components: list[list[Node]] = []
    counter = 0

    for root in nodes:
        if root in index:
            continue
        work: list[tuple[Node, Iterable, Node | None]] = [(root, iter(successors(root)), None)]
        while work:
            node, it, _ = work[-1]
            if node not in index:
                index[node] = lowlink[node] = counter
                counter += 1
                stack.append(node)
                on_stack.add(node)
            advanced = False
            for succ in it:
                if succ not in index:
                    work[-1] = (node, it, None)
                    work.append((succ, iter(successors(succ)), node))
                    advanced = True
                    break
                if succ in on_stack:
                    lowlink[node] = min(lowlink[node], index[succ])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                lowlink[parent] = min(lowlink[parent], lowlink[node])
            if lowlink[node] == index[node]:
                component = []
                while True:
                    member = stack.pop()
                    on_stack.discard(member)
                    component.append(member)
                    if member == node:
                        break
                components.append(component)
    return components


def find_cycle(transitions: Sequence[Transition]) -> list[Transition] | None:
    """Some cycle in the given edge set, or None; iterative DFS."""
    out: dict[State, list[Transition]] = {}
    nodes: list[State] = []
    for tr in sorted(transitions):
        if tr.source not in out:
            out[tr.source] = []
            nodes.append(tr.source)
        if tr.target not in out:
            out[tr.target] = []
            nodes.append(tr.target)
        out[tr.source].append(tr)
    color: dict[State, int] = {}
    for root in nodes:
        if color.get(root, 0) != 0:
            continue
        path: list[Transition] = []
        stack: list[tuple[State, int]] = [(root, 0)]
        color[root] = 1
        while stack:
            state, i = stack[-1]
            if i < len(out[state]):
                stack[-1] = (state, i + 1)
                tr = out[state][i]
                if color.get(tr.target, 0) == 1:
                    cycle = path + [tr]
                    start = next(
                        k for k, e in enumerate(cycle) if e.source == tr.target
                    )
                    return cycle[start:]
                if color.get(tr.target, 0) == 0:
                    color[tr.target] = 1
                    path.append(tr)
                    stack.append((tr.target, 0))
            else:
                color[state] = 2
                stack.pop()
                if path:
                    path.pop()
    return None


def cycle_edges(transitions: Sequence[Transition]) -> list[Transition]:
    """Edges of the given set lying on some cycle (within nontrivial SCCs,
    plus self-loops)."""
    out: dict[State, list[State]] = {}
    nodes: set[State] = set()
    for tr in transitions:
        nodes.add(tr.source)
        nodes.add(tr.target)
        out.setdefault(tr.source, []).append(tr.target)
    comp_of: dict[State, int] = {}
    comps = strongly_connected_components(sorted(nodes), lambda n: out.get(n, ()))
    nontrivial = set()
    for k, comp in enumerate(comps):
        for n in comp:
            comp_of[n] = k
        if len(comp) > 1:
            nontrivial.add(k)
    result = []
    for tr in transitions:
        if tr.source == tr.target or (
            comp_of[tr.source] == comp_of[tr.target] and comp_of[tr.source] in nontrivial
        ):
            result.append(tr)
    return result


class AnchorIndex:
    """Anchor-label reachability for every (state, fired event type) pair.

    `anchors(s, t)` is the bitmask of event types reachable as downstream
    anchors after firing t at s (t itself included); `roles(s, t, sigma)`
    and `covered(s, t, sigma)` interpret the mask against a subscription.
    """

    def __init__(self, protocol: SwarmProtocol, conc: ConcurrencyRelation):
        self.protocol = protocol
        self.conc = conc
        self.types = sorted(protocol.event_types())
        self.bit = {t: 1 << i for i, t in enumerate(self.types)}
        self._mask = self._compute()

    def _compute(self) -> dict[tuple[State, EventType], int]:
        protocol, conc, bit = self.protocol, self.conc, self.bit
        nodes = [(s, t) for s in sorted(protocol.states) for t in self.types]
        succs: dict[tuple[State, EventType], list[tuple[State, EventType]]] = {}
        local: dict[tuple[State, EventType], int] = {}
        for node in nodes:
            s, last = node
            edges = []
            label = 0
            for tr in protocol.outgoing(s):
                edges.append((tr.target, last))
                if not conc.related(last, tr.event_type):
                    label |= bit[tr.event_type]
                    edges.append((tr.target, tr.event_type))
            succs[node] = edges
            local[node] = label
        mask: dict[tuple[State, EventType], int] = {}
        # components arrive in reverse topological order: successors first
        for comp in strongly_connected_components(nodes, lambda n: succs[n]):
            comp_set = set(comp)
            acc = 0
            for node in comp:
                acc |= local[node]
                for nxt in succs[node]:
                    if nxt not in comp_set:
                        acc |= mask[nxt]
            for node in comp:
                mask[node] = acc
        return mask

    def anchors(self, state: State, event_type: EventType) -> int:
        succ = self.protocol.successor(state, event_type)
        if succ is None:
            raise ValueError(f"state {state!r} does not fire {event_type!r}")
        return self.bit[event_type] | self._mask[(succ, event_type)]

    def sigma_masks(self, subscription: Subscription) -> dict[Role, int]:
        masks = {}
        for role, types in subscription.items():
            m = 0
            for t in types:
                if t in self.bit:
                    m |= self.bit[t]
            masks[role] = m
        return masks

    def roles(
        self, state: State, event_type: EventType, sigma_masks: dict[Role, int]
    ) -> frozenset[Role]:
        anchors = self.anchors(state, event_type)
        return frozenset(r for r, m in sigma_masks.items() if m & anchors)

    def covered(
        self,
        state: State,
        event_type: EventType,
        subscription: Subscription,
        sigma_masks: dict[Role, int],
    ) -> bool:
        anchors = self.anchors(state, event_type)
        for role, m in sigma_masks.items():
            if m & anchors and event_type not in subscription.of(role):
                return False
        return True
