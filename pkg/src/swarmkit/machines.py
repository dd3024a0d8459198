"""Machines: role automata projected from protocols, their composition, and
the adaptation that fits an existing machine into a composed swarm.

A machine accepts events from a log (deterministic acceptance transitions)
and may emit the event types in the current state's emitter set.  Machines
produced here are canonical: states merged up to identical observable
behaviour (greatest-fixpoint partition refinement over acceptance labels and
emitter sets) and renamed by breadth-first discovery order with edges sorted
by event type.  Canonical form makes machine equality plain isomorphism.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

from .protocols import (
    ConcurrencyRelation,
    EventType,
    ProtocolError,
    Role,
    State,
    Subscription,
    SwarmProtocol,
    concurrent_pairs,
)
from .subscriptions import Alg1Result, generate_subscription
from .wellformed import UpdatingTypeSet, updating_types


class MachineError(ValueError):
    """A machine description violates a structural invariant."""


class ProjectionAmbiguityError(MachineError):
    """Silently related protocol states disagree behaviourally, so the
    projection is not uniquely defined (the input was not well-formed)."""


@dataclass(frozen=True, order=True)
class MachineTransition:
    source: State
    event_type: EventType
    target: State

    def as_dict(self) -> dict:
        return {"source": self.source, "eventType": self.event_type, "target": self.target}


@dataclass(frozen=True)
class Machine:
    role: Role
    initial: State
    transitions: tuple[MachineTransition, ...]
    emitters: tuple[tuple[State, frozenset[EventType]], ...]
    updating: frozenset[EventType]
    conc: ConcurrencyRelation
    states: frozenset[State]
    _accepts: dict = field(init=False, repr=False, compare=False, hash=False)
    _emit: dict = field(init=False, repr=False, compare=False, hash=False)
    _out: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self) -> None:
        accepts: dict[tuple[State, EventType], State] = {}
        out: dict[State, list[MachineTransition]] = {s: [] for s in self.states}
        for tr in self.transitions:
            key = (tr.source, tr.event_type)
            if key in accepts:
                raise MachineError(
                    f"state {tr.source!r} accepts {tr.event_type!r} twice"
                )
            accepts[key] = tr.target
            out[tr.source].append(tr)
        for lst in out.values():
            lst.sort()
        emit = {s: frozenset() for s in self.states}
        emit.update(dict(self.emitters))
        object.__setattr__(self, "_accepts", accepts)
        object.__setattr__(self, "_emit", emit)
        object.__setattr__(self, "_out", out)

    @classmethod
    def build(
        cls,
        role: Role,
        initial: State,
        transitions: Iterable[tuple[State, EventType, State] | MachineTransition],
        emitters: Mapping[State, Iterable[EventType]] | None = None,
        updating: Iterable[EventType] = (),
        conc: ConcurrencyRelation | None = None,
    ) -> "Machine":
        trs = tuple(
            tr if isinstance(tr, MachineTransition) else MachineTransition(*tr)
            for tr in transitions
        )
        states = {initial}
        for tr in trs:
            states.add(tr.source)
            states.add(tr.target)
        emitter_items = tuple(
            sorted((s, frozenset(ts)) for s, ts in (emitters or {}).items() if ts)
        )
        for s, _ in emitter_items:
            states.add(s)
        machine = cls(
            role=role,
            initial=initial,
            transitions=tuple(sorted(set(trs))),
            emitters=emitter_items,
            updating=frozenset(updating),
            conc=conc or ConcurrencyRelation(),
            states=frozenset(states),
        )
        machine.validate()
        return machine

    def validate(self) -> None:
        if self.initial not in self.states:
            raise MachineError(f"initial state {self.initial!r} not among states")
        for tr in self.transitions:
            if tr.source not in self.states or tr.target not in self.states:
                raise MachineError(f"transition {tr} has a dangling endpoint")
        reachable = self.reachable()
        unreachable = self.states - reachable
        if unreachable:
            raise MachineError(f"unreachable machine states: {sorted(unreachable)}")

    def reachable(self) -> frozenset[State]:
        seen = {self.initial}
        queue = deque([self.initial])
        while queue:
            s = queue.popleft()
            for tr in self._out[s]:
                if tr.target not in seen:
                    seen.add(tr.target)
                    queue.append(tr.target)
        return frozenset(seen)

    def accepts(self, state: State, event_type: EventType) -> State | None:
        return self._accepts.get((state, event_type))

    def outgoing(self, state: State) -> Sequence[MachineTransition]:
        return self._out[state]

    def emitter_set(self, state: State) -> frozenset[EventType]:
        return self._emit[state]

    def event_types(self) -> frozenset[EventType]:
        types = {tr.event_type for tr in self.transitions}
        for _, ts in self.emitters:
            types |= ts
        return frozenset(types)

    def as_dict(self) -> dict:
        return {
            "role": self.role,
            "initial": self.initial,
            "accepts": [tr.as_dict() for tr in sorted(self.transitions)],
            "emitters": {s: sorted(ts) for s, ts in self.emitters},
            "updating": sorted(self.updating),
            "concurrent": self.conc.as_sorted_pairs(),
        }

    @classmethod
    def from_json(cls, raw: Mapping) -> "Machine":
        try:
            transitions = [
                (str(t["source"]), str(t["eventType"]), str(t["target"]))
                for t in raw.get("accepts", [])
            ]
            return cls.build(
                role=str(raw["role"]),
                initial=str(raw["initial"]),
                transitions=transitions,
                emitters={str(s): [str(t) for t in ts] for s, ts in raw.get("emitters", {}).items()},
                updating=[str(t) for t in raw.get("updating", [])],
                conc=ConcurrencyRelation(raw.get("concurrent", [])),
            )
        except (KeyError, TypeError) as exc:
            raise MachineError(f"malformed machine description: {exc}") from exc


# -- canonical form ----------------------------------------------------------


def _partition_refinement(
    states: Sequence[State],
    labels: Mapping[State, tuple],
    successor: Mapping[tuple[State, EventType], State],
    alphabet: Sequence[EventType],
) -> dict[State, int]:
    """Greatest fixpoint partition: states equivalent iff same label and
    equivalent successors per event type.

    `states` must be given in a deterministic order; block ids follow it."""
    block = {}
    ids: dict[tuple, int] = {}
    for s in states:
        block[s] = ids.setdefault(labels[s], len(ids))
    while True:
        new_ids: dict[tuple, int] = {}
        new_block = {}
        for s in states:
            signature = (
                block[s],
                tuple(
                    (t, block[successor[(s, t)]])
                    for t in alphabet
                    if (s, t) in successor
                ),
            )
            new_block[s] = new_ids.setdefault(signature, len(new_ids))
        if len(new_ids) == len(ids):
            return new_block
        block, ids = new_block, new_ids


def canonicalize(machine: Machine) -> Machine:
    """Merge behaviourally identical states and rename by BFS discovery order
    (edges explored in event-type order)."""
    states = sorted(machine.reachable())
    alphabet = sorted({tr.event_type for tr in machine.transitions})
    labels = {s: (machine.emitter_set(s),) for s in states}
    successor = {
        (tr.source, tr.event_type): tr.target
        for tr in machine.transitions
        if tr.source in set(states)
    }
    block = _partition_refinement(states, labels, successor, alphabet)

    rep: dict[int, State] = {}
    for s in states:
        rep.setdefault(block[s], s)
    name: dict[int, State] = {}
    order = deque([block[machine.initial]])
    name[block[machine.initial]] = "0"
    transitions = []
    emitters = {}
    while order:
        b = order.popleft()
        s = rep[b]
        emitters[name[b]] = machine.emitter_set(s)
        for tr in machine.outgoing(s):
            tb = block[tr.target]
            if tb not in name:
                name[tb] = str(len(name))
                order.append(tb)
            transitions.append((name[b], tr.event_type, name[tb]))
    return Machine.build(
        role=machine.role,
        initial="0",
        transitions=transitions,
        emitters=emitters,
        updating=machine.updating,
        conc=machine.conc,
    )


def machines_isomorphic(a: Machine, b: Machine) -> bool:
    """Equality of observable behaviour: canonical forms coincide (role,
    updating set, and concurrency metadata are not compared)."""
    ca, cb = canonicalize(a), canonicalize(b)
    return (
        ca.initial == cb.initial
        and ca.transitions == cb.transitions
        and ca.emitters == cb.emitters
    )


# -- projection --------------------------------------------------------------


def project(
    protocol: SwarmProtocol,
    role: Role,
    subscription: Subscription,
    updating: frozenset[EventType] | None = None,
    conc: ConcurrencyRelation | None = None,
) -> Machine:
    """Project a protocol onto a role: a subset construction treating event
    types outside the role's subscription as silent.

    Machine states are silent-closures of protocol state sets; an acceptance
    edge exists for a subscribed type fired by some closure member, and the
    emitter set collects the types the role emits at closure members.  The
    result is canonical, which realises the uniqueness of the projection for
    well-formed inputs; for inputs that are not well-formed, behaviourally
    distinct continuations of one subscribed type raise
    `ProjectionAmbiguityError`.
    """
    observed = subscription.of(role)

    def closure(states: Iterable[State]) -> frozenset[State]:
        seen = set(states)
        queue = deque(seen)
        while queue:
            s = queue.popleft()
            for tr in protocol.outgoing(s):
                if tr.event_type not in observed and tr.target not in seen:
                    seen.add(tr.target)
                    queue.append(tr.target)
        return frozenset(seen)

    def name(subset: frozenset[State]) -> State:
        return "{" + ",".join(sorted(subset)) + "}"

    initial = closure([protocol.initial])
    subsets = {initial}
    queue = deque([initial])
    transitions = []
    emitters: dict[State, set[EventType]] = {}
    continuations: list[tuple[frozenset[State], EventType, list[State]]] = []
    while queue:
        subset = queue.popleft()
        emitters[name(subset)] = {
            tr.event_type
            for s in subset
            for tr in protocol.outgoing(s)
            if tr.role == role
        }
        by_type: dict[EventType, list[State]] = {}
        for s in sorted(subset):
            for tr in protocol.outgoing(s):
                if tr.event_type in observed:
                    by_type.setdefault(tr.event_type, []).append(tr.target)
        for t, targets in sorted(by_type.items()):
            succ = closure(targets)
            transitions.append((name(subset), t, name(succ)))
            if len(set(targets)) > 1:
                continuations.append((subset, t, sorted(set(targets))))
            if succ not in subsets:
                subsets.add(succ)
                queue.append(succ)

    machine = Machine.build(
        role=role,
        initial=name(initial),
        transitions=transitions,
        emitters=emitters,
        updating=frozenset(),
        conc=ConcurrencyRelation(),
    )
    if continuations:
        _check_unambiguous(protocol, role, subscription, continuations)

    exact_conc = conc if conc is not None else concurrent_pairs(protocol)
    if updating is None:
        updating = updating_types(protocol, subscription, exact_conc).types
    return canonicalize(
        replace(machine, updating=frozenset(updating), conc=exact_conc)
    )


def _check_unambiguous(
    protocol: SwarmProtocol,
    role: Role,
    subscription: Subscription,
    continuations: list[tuple[frozenset[State], EventType, list[State]]],
) -> None:
    """All member continuations of a subscribed type must behave identically
    from the role's point of view.

    Builds one subset automaton seeded with the singleton closures of every
    continuation target and refines it once; targets in different classes
    witness the ambiguity."""
    observed = subscription.of(role)

    def closure(states: Iterable[State]) -> frozenset[State]:
        seen = set(states)
        queue = deque(seen)
        while queue:
            s = queue.popleft()
            for tr in protocol.outgoing(s):
                if tr.event_type not in observed and tr.target not in seen:
                    seen.add(tr.target)
                    queue.append(tr.target)
        return frozenset(seen)

    seeds = {s: closure([s]) for _, _, targets in continuations for s in targets}
    subsets = set(seeds.values())
    queue = deque(subsets)
    successor: dict[tuple[frozenset[State], EventType], frozenset[State]] = {}
    labels: dict[frozenset[State], tuple] = {}
    while queue:
        subset = queue.popleft()
        emitted = frozenset(
            tr.event_type for s in subset for tr in protocol.outgoing(s) if tr.role == role
        )
        labels[subset] = (emitted,)
        by_type: dict[EventType, set[State]] = {}
        for s in subset:
            for tr in protocol.outgoing(s):
                if tr.event_type in observed:
                    by_type.setdefault(tr.event_type, set()).add(tr.target)
        for t, targets in by_type.items():
            succ = closure(targets)
            successor[(subset, t)] = succ
            if succ not in subsets:
                subsets.add(succ)
                queue.append(succ)
    alphabet = sorted({t for _, t in successor})
    order = sorted(subsets, key=lambda fs: sorted(fs))
    block = _partition_refinement(order, labels, successor, alphabet)
    for _, t, targets in continuations:
        classes = {block[seeds[s]] for s in targets}
        if len(classes) > 1:
            raise ProjectionAmbiguityError(
                f"event type {t!r} from states {sorted(targets)} leads to "
                f"behaviourally distinct continuations for role {role!r}; "
                "the projection is not uniquely defined (the protocol is not "
                "well-formed for this subscription)"
            )


# -- machine composition and adaptation --------------------------------------


def compose_machines(a: Machine, b: Machine) -> Machine:
    """Synchronised product: event types occurring in both machines advance
    both (enabled only when both accept), private types advance their owner.

    The emitter set of a product state is the union of the operand emitter
    sets restricted to the types accepted at that state; the composed machine
    keeps the left operand's role and unions the updating and concurrency
    metadata."""
    shared = a.event_types() & b.event_types()

    def name(pair: tuple[State, State]) -> State:
        return pair[0] + "&" + pair[1]

    initial = (a.initial, b.initial)
    seen = {initial}
    queue = deque([initial])
    transitions = []
    emitters = {}
    while queue:
        pair = queue.popleft()
        sa, sb = pair
        moves: dict[EventType, tuple[State, State]] = {}
        for t in sorted({tr.event_type for tr in a.outgoing(sa)} | {tr.event_type for tr in b.outgoing(sb)}):
            ta, tb = a.accepts(sa, t), b.accepts(sb, t)
            if t in shared:
                if ta is not None and tb is not None:
                    moves[t] = (ta, tb)
            elif ta is not None:
                moves[t] = (ta, sb)
            elif tb is not None:
                moves[t] = (sa, tb)
        accepted = set(moves)
        emitters[name(pair)] = (a.emitter_set(sa) | b.emitter_set(sb)) & accepted
        for t, target in sorted(moves.items()):
            transitions.append((name(pair), t, name(target)))
            if target not in seen:
                seen.add(target)
                queue.append(target)
    return canonicalize(
        Machine.build(
            role=a.role,
            initial=name(initial),
            transitions=transitions,
            emitters=emitters,
            updating=a.updating | b.updating,
            conc=a.conc.union(b.conc),
        )
    )


def adapt_machine(
    machine: Machine,
    protocols: Sequence[SwarmProtocol],
    role: Role,
    index: int,
    subscription: Subscription,
    updating: frozenset[EventType],
    conc: ConcurrencyRelation,
) -> Machine:
    """Fit an existing machine for one component protocol into the composed
    swarm: compose it with its own component's projection under the composed
    subscription (adding the newly subscribed waits), then with every other
    component's projection (pruning paths the other protocols rule out).

    The updating set and concurrency relation are installed from the
    arguments so the generated over-approximations drive branch tracking."""
    if not 0 <= index < len(protocols):
        raise MachineError(f"component index {index} out of range")
    parts = []
    for i, proto in enumerate(protocols):
        projection = project(proto, role, subscription, updating=frozenset(), conc=conc)
        if i == index:
            projection = compose_machines(machine, projection)
        parts.append(projection)
    result = parts[0]
    for part in parts[1:]:
        result = compose_machines(result, part)
    return canonicalize(
        replace(result, role=role, updating=frozenset(updating), conc=conc)
    )


@dataclass(frozen=True)
class SwarmMember:
    machine: Machine
    role: Role
    origin: int

    def as_dict(self) -> dict:
        return {"machine": self.machine.as_dict(), "role": self.role, "origin": self.origin}


@dataclass(frozen=True)
class SwarmSpec:
    members: tuple[SwarmMember, ...]
    subscription: Subscription
    updating: UpdatingTypeSet

    def as_dict(self) -> dict:
        return {
            "members": [m.as_dict() for m in self.members],
            "subscription": self.subscription.as_dict(),
            "updating": self.updating.as_dict(),
        }


def compose_swarm(
    swarms: Sequence[Sequence[tuple[Machine, Role]]],
    protocols: Sequence[SwarmProtocol],
    subscriptions: Sequence[Subscription] | None = None,
) -> tuple[SwarmSpec, Alg1Result]:
    """Adapt every machine of the given per-protocol swarms into one swarm
    realising the composition, using the compositional subscription."""
    if len(swarms) != len(protocols):
        raise MachineError("need one machine group per protocol")
    alg1 = generate_subscription(protocols, subscriptions)
    members = []
    for k, group in enumerate(swarms):
        for machine, role in group:
            adapted = adapt_machine(
                machine,
                protocols,
                role,
                k,
                alg1.subscription,
                alg1.updating.types,
                alg1.conc,
            )
            members.append(SwarmMember(machine=adapted, role=role, origin=k))
    spec = SwarmSpec(
        members=tuple(members),
        subscription=alg1.subscription,
        updating=alg1.updating,
    )
    return spec, alg1
