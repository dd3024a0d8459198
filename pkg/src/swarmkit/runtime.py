"""Events, logs, branch-tracking log processing, and the swarm simulator.

Each event carries a pointer (`pue`) to the updating event that caused it;
machines replay their local log from the start and accept an event only when
they accept its type in the current state and its pointer names the last
updating event they have seen for that type.  Accepting an updating event
rewrites the pointer expectation for every event type on the same branch.

The swarm semantics interleaves two moves: a member emits an event appended
to its local log and inserted into the global log after everything the
member has seen, or a member receives some of the global events it misses,
merged in global order.  The global log is the simulator's stand-in for the
globally agreed total order of events.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, replace
from itertools import combinations
from typing import Callable, Iterable, Sequence

from .machines import Machine
from .protocols import (
    ConcurrencyRelation,
    EventType,
    State,
    Subscription,
    SwarmProtocol,
)

NULL = None  # pointer value before any updating event


class EmissionRefused(RuntimeError):
    """The member's machine cannot emit the requested event type now."""


class ScheduleError(ValueError):
    """A schedule step is not enabled in the current swarm state."""


@dataclass(frozen=True, order=True)
class Event:
    id: int
    type: EventType
    pue: int | None

    def as_dict(self) -> dict:
        return {"id": self.id, "type": self.type, "pue": self.pue}


Log = tuple[Event, ...]


def _branch_closure(
    edges_from: Callable[[State], Iterable[tuple[EventType, State]]],
    start: State,
    fired: EventType,
    updating: frozenset[EventType],
    conc: ConcurrencyRelation,
) -> frozenset[EventType]:
    """Event types on the branch opened by `fired`: chains of accepted types
    from `start`, not concurrent with `fired`, cut after the first updating
    type (inclusive); `fired` itself is always part of its branch."""
    result = {fired}
    seen = {start}
    queue = deque([start])
    while queue:
        state = queue.popleft()
        for event_type, target in edges_from(state):
            if conc.related(fired, event_type):
                continue
            result.add(event_type)
            if event_type in updating:
                continue
            if target not in seen:
                seen.add(target)
                queue.append(target)
    return frozenset(result)


def branch_set(machine: Machine, state: State, event_type: EventType) -> frozenset[EventType]:
    """Machine-level branch of an updating acceptance at `state`."""
    target = machine.accepts(state, event_type)
    if target is None:
        raise ValueError(f"machine does not accept {event_type!r} at {state!r}")
    return _branch_closure(
        lambda s: ((tr.event_type, tr.target) for tr in machine.outgoing(s)),
        target,
        event_type,
        machine.updating,
        machine.conc,
    )


def protocol_branch_set(
    protocol: SwarmProtocol,
    state: State,
    event_type: EventType,
    updating: frozenset[EventType],
    conc: ConcurrencyRelation,
) -> frozenset[EventType]:
    """Protocol-level analogue of the machine branch set."""
    target = protocol.successor(state, event_type)
    if target is None:
        raise ValueError(f"protocol does not fire {event_type!r} at {state!r}")
    return _branch_closure(
        lambda s: ((tr.event_type, tr.target) for tr in protocol.outgoing(s)),
        target,
        event_type,
        updating,
        conc,
    )


def process_log(
    machine: Machine, log: Sequence[Event], branch_tracking: bool = True
) -> tuple[State, dict[EventType, int | None]]:
    """Fold the log from the oldest event; skipped events leave no trace."""
    state, last_up, _ = _process(machine, log, branch_tracking)
    return state, last_up


def accepted_events(
    machine: Machine, log: Sequence[Event], branch_tracking: bool = True
) -> Log:
    return _process(machine, log, branch_tracking)[2]


def _process(
    machine: Machine, log: Sequence[Event], branch_tracking: bool
) -> tuple[State, dict[EventType, int | None], Log]:
    state = machine.initial
    last_up: dict[EventType, int | None] = {}
    accepted: list[Event] = []
    for event in log:
        target = machine.accepts(state, event.type)
        if target is None:
            continue
        if branch_tracking and event.pue != last_up.get(event.type, NULL):
            continue
        if branch_tracking and event.type in machine.updating:
            for t in branch_set(machine, state, event.type):
                last_up[t] = event.id
        accepted.append(event)
        state = target
    return state, last_up, tuple(accepted)


def emit(
    machine: Machine,
    log: Sequence[Event],
    event_type: EventType,
    event_id: int,
    branch_tracking: bool = True,
) -> Event:
    """New event of the given type, pointing at the last updating event the
    emitter has seen for it."""
    state, last_up = process_log(machine, log, branch_tracking)
    if event_type not in machine.emitter_set(state):
        raise EmissionRefused(
            f"machine for role {machine.role!r} cannot emit {event_type!r} "
            f"in state {state!r}"
        )
    pue = last_up.get(event_type, NULL) if branch_tracking else NULL
    return Event(id=event_id, type=event_type, pue=pue)


# -- swarm state -------------------------------------------------------------


@dataclass(frozen=True)
class MemberState:
    machine: Machine
    role: str
    log: Log

    def current_state(self, branch_tracking: bool = True) -> State:
        return process_log(self.machine, self.log, branch_tracking)[0]


@dataclass(frozen=True)
class SwarmState:
    members: tuple[MemberState, ...]
    global_log: Log
    next_id: int = 1

    def member_missing(self, index: int) -> Log:
        have = {e.id for e in self.members[index].log}
        return tuple(e for e in self.global_log if e.id not in have)

    def check_sublogs(self) -> None:
        """Every local log must be an order-preserving sublog of the global log."""
        order = {e.id: i for i, e in enumerate(self.global_log)}
        for i, member in enumerate(self.members):
            positions = [order.get(e.id) for e in member.log]
            if None in positions or positions != sorted(positions):
                raise AssertionError(f"member {i} log is not a sublog of the global log")

    def dedup_key(self) -> tuple:
        return (
            tuple((e.id, e.type, e.pue) for e in self.global_log),
            tuple(tuple(e.id for e in m.log) for m in self.members),
        )


def fresh_swarm(members: Iterable[tuple[Machine, str]]) -> SwarmState:
    return SwarmState(
        members=tuple(MemberState(machine=m, role=r, log=()) for m, r in members),
        global_log=(),
    )


def insert_positions(state: SwarmState, index: int) -> list[int]:
    """Valid global-log insertion points for an event emitted by `index`:
    anywhere after the last global event the member has already seen."""
    have = {e.id for e in state.members[index].log}
    last = -1
    for pos, event in enumerate(state.global_log):
        if event.id in have:
            last = pos
    return list(range(last + 1, len(state.global_log) + 1))


def apply_local(
    state: SwarmState,
    index: int,
    event_type: EventType,
    position: int,
    branch_tracking: bool = True,
) -> tuple[SwarmState, Event]:
    member = state.members[index]
    event = emit(member.machine, member.log, event_type, state.next_id, branch_tracking)
    if position not in insert_positions(state, index):
        raise ScheduleError(
            f"cannot insert at global position {position}: member {index} has "
            f"already seen later events"
        )
    new_global = state.global_log[:position] + (event,) + state.global_log[position:]
    members = list(state.members)
    members[index] = replace(member, log=member.log + (event,))
    new_state = SwarmState(
        members=tuple(members), global_log=new_global, next_id=state.next_id + 1
    )
    new_state.check_sublogs()
    return new_state, event


def apply_prop(state: SwarmState, index: int, delta_ids: Sequence[int]) -> SwarmState:
    if not delta_ids:
        raise ScheduleError("propagation delta must be nonempty")
    member = state.members[index]
    have = {e.id for e in member.log}
    missing = {e.id for e in state.global_log} - have
    delta = set(delta_ids)
    if not delta <= missing:
        raise ScheduleError(f"member {index} already has events {sorted(delta - missing)}")
    keep = have | delta
    merged = tuple(e for e in state.global_log if e.id in keep)
    members = list(state.members)
    members[index] = replace(member, log=merged)
    new_state = SwarmState(
        members=tuple(members), global_log=state.global_log, next_id=state.next_id
    )
    new_state.check_sublogs()
    return new_state


def local_choices(
    state: SwarmState, branch_tracking: bool = True
) -> list[tuple[int, EventType]]:
    choices = []
    for i, member in enumerate(state.members):
        current = member.current_state(branch_tracking)
        for t in sorted(member.machine.emitter_set(current)):
            choices.append((i, t))
    return choices


def prop_choices(state: SwarmState) -> list[int]:
    return [i for i in range(len(state.members)) if state.member_missing(i)]


# -- effective logs and fidelity ---------------------------------------------


def effective_log_protocol(
    log: Sequence[Event],
    protocol: SwarmProtocol,
    updating: frozenset[EventType],
    conc: ConcurrencyRelation,
    branch_tracking: bool = True,
) -> Log:
    """Events following a valid branch-tracked path through the protocol."""
    state = protocol.initial
    last_up: dict[EventType, int | None] = {}
    accepted = []
    for event in log:
        target = protocol.successor(state, event.type)
        if target is None:
            continue
        if branch_tracking:
            if event.pue != last_up.get(event.type, NULL):
                continue
            if event.type in updating:
                for t in protocol_branch_set(protocol, state, event.type, updating, conc):
                    last_up[t] = event.id
        accepted.append(event)
        state = target
    return tuple(accepted)


def effective_log_machine(
    log: Sequence[Event], machine: Machine, branch_tracking: bool = True
) -> Log:
    """The subsequence of the log the machine accepts."""
    return accepted_events(machine, log, branch_tracking)


@dataclass(frozen=True)
class MemberDiff:
    member: int
    role: str
    expected: tuple[int, ...]
    actual: tuple[int, ...]

    def as_dict(self) -> dict:
        return {
            "member": self.member,
            "role": self.role,
            "expected": list(self.expected),
            "actual": list(self.actual),
        }


@dataclass(frozen=True)
class FidelityVerdict:
    passed: bool
    diffs: tuple[MemberDiff, ...]

    def as_dict(self) -> dict:
        return {"passed": self.passed, "diffs": [d.as_dict() for d in self.diffs]}


def check_fidelity(
    state: SwarmState,
    protocol: SwarmProtocol,
    subscription: Subscription,
    updating: frozenset[EventType] | None = None,
    conc: ConcurrencyRelation | None = None,
    branch_tracking: bool = True,
) -> FidelityVerdict:
    """Does each member accept exactly its subscribed slice of the protocol's
    effective log?  Checked against the global log; holds at every reachable
    state for branch-tracking realisations of well-formed protocols."""
    if state.members:
        updating = updating if updating is not None else state.members[0].machine.updating
        conc = conc if conc is not None else state.members[0].machine.conc
    else:
        updating = updating or frozenset()
        conc = conc or ConcurrencyRelation()
    eff = effective_log_protocol(state.global_log, protocol, updating, conc, branch_tracking)
    diffs = []
    for i, member in enumerate(state.members):
        observed = subscription.of(member.role)
        expected = tuple(e.id for e in eff if e.type in observed)
        actual = tuple(
            e.id
            for e in effective_log_machine(state.global_log, member.machine, branch_tracking)
        )
        if expected != actual:
            diffs.append(MemberDiff(member=i, role=member.role, expected=expected, actual=actual))
    return FidelityVerdict(passed=not diffs, diffs=tuple(diffs))


# -- scheduling and traces -----------------------------------------------------


@dataclass(frozen=True)
class TraceStep:
    kind: str  # "local" | "prop"
    member: int
    event: Event | None = None
    position: int | None = None
    delivered: tuple[int, ...] = ()

    def as_dict(self) -> dict:
        if self.kind == "local":
            return {
                "kind": "local",
                "member": self.member,
                "event": self.event.as_dict() if self.event else None,
                "position": self.position,
            }
        return {"kind": "prop", "member": self.member, "delivered": list(self.delivered)}


@dataclass(frozen=True)
class SimulationResult:
    steps: tuple[TraceStep, ...]
    final: SwarmState
    fidelity_failures: tuple[int, ...] = ()
    """Indices of steps after which a mid-run fidelity check failed."""


def simulate(
    initial: SwarmState,
    steps: int,
    seed: int,
    branch_tracking: bool = True,
    check_each: Callable[[SwarmState], bool] | None = None,
) -> SimulationResult:
    """Seeded random run: uniform choice among enabled emissions and
    propagation targets, insertion position uniform over valid slots,
    propagation deltas biased toward prefixes of the missing events."""
    rng = random.Random(seed)
    state = initial
    trace: list[TraceStep] = []
    failures: list[int] = []
    for n in range(steps):
        locals_ = local_choices(state, branch_tracking)
        props = prop_choices(state)
        options: list[tuple] = [("local",) + c for c in locals_]
        options += [("prop", i) for i in props]
        if not options:
            break
        choice = rng.choice(options)
        if choice[0] == "local":
            _, member, event_type = choice
            position = rng.choice(insert_positions(state, member))
            state, event = apply_local(state, member, event_type, position, branch_tracking)
            trace.append(TraceStep("local", member, event=event, position=position))
        else:
            member = choice[1]
            missing = state.member_missing(member)
            if rng.random() < 0.8:
                k = 1
                while k < len(missing) and rng.random() < 0.5:
                    k += 1
                delta = [e.id for e in missing[:k]]
            else:
                delta = sorted(
                    e.id for e in rng.sample(list(missing), rng.randint(1, len(missing)))
                )
            state = apply_prop(state, member, delta)
            trace.append(TraceStep("prop", member, delivered=tuple(delta)))
        if check_each is not None and not check_each(state):
            failures.append(len(trace) - 1)
    return SimulationResult(tuple(trace), state, tuple(failures))


def replay(
    initial: SwarmState, steps: Sequence[TraceStep], branch_tracking: bool = True
) -> tuple[SwarmState, list[SwarmState]]:
    """Re-execute a recorded trace, returning the final and all intermediate
    states; emitted events must reproduce the recorded ones."""
    state = initial
    history = [state]
    for step in steps:
        if step.kind == "local":
            state, event = apply_local(
                state, step.member, step.event.type, step.position, branch_tracking
            )
            if branch_tracking and event != step.event:
                raise ScheduleError(
                    f"replay diverged: emitted {event}, trace recorded {step.event}"
                )
        else:
            state = apply_prop(state, step.member, step.delivered)
        history.append(state)
    return state, history


def propagate_all(state: SwarmState) -> SwarmState:
    for i in range(len(state.members)):
        missing = state.member_missing(i)
        if missing:
            state = apply_prop(state, i, [e.id for e in missing])
    return state


def explore_all(
    initial: SwarmState,
    max_steps: int,
    visit: Callable[[SwarmState], None],
    branch_tracking: bool = True,
) -> int:
    """Exhaustively enumerate every scheduler choice up to the step bound,
    visiting each distinct swarm state once; returns the number of states."""
    seen = {initial.dedup_key()}
    visit(initial)
    frontier = [initial]
    visited = 1
    for _ in range(max_steps):
        next_frontier = []
        for state in frontier:
            for successor in _all_successors(state, branch_tracking):
                key = successor.dedup_key()
                if key in seen:
                    continue
                seen.add(key)
                visit(successor)
                visited += 1
                next_frontier.append(successor)
        if not next_frontier:
            break
        frontier = next_frontier
    return visited


def _all_successors(state: SwarmState, branch_tracking: bool) -> Iterable[SwarmState]:
    for member, event_type in local_choices(state, branch_tracking):
        for position in insert_positions(state, member):
            yield apply_local(state, member, event_type, position, branch_tracking)[0]
    for member in prop_choices(state):
        missing = [e.id for e in state.member_missing(member)]
        for size in range(1, len(missing) + 1):
            for delta in combinations(missing, size):
                yield apply_prop(state, member, delta)
