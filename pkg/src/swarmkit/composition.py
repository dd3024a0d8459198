"""Protocol interfacing and the n-ary composition operator.

Composition is a synchronised product: actions of a role shared between
protocols advance every protocol containing that role simultaneously, while
actions of unshared roles interleave freely.  Only reachable product states
are materialised and their names are canonical tuple encodings such as
"0|2", so outputs are deterministic and diffable.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Sequence

from .protocols import (
    STATE_SEP,
    ConcurrencyRelation,
    EventType,
    ProtocolError,
    Role,
    State,
    SwarmProtocol,
    Transition,
    concurrent_pairs,
    confusion_free_violations,
)


class CompositionError(ProtocolError):
    """Inputs cannot be composed (interface violations are attached)."""

    def __init__(self, message: str, violations: Sequence[tuple] = ()):
        super().__init__(message)
        self.violations = tuple(violations)


@dataclass(frozen=True)
class InterfaceReport:
    """Shared roles and event types of two protocols, plus any violations.

    A violation (t, r, r') records an event type emitted by different roles
    in the two protocols; the protocols are interfacing iff there are none.
    """

    interfacing_roles: frozenset[Role]
    interfacing_event_types: frozenset[EventType]
    violations: tuple[tuple[EventType, Role, Role], ...]

    @property
    def is_interfacing(self) -> bool:
        return not self.violations

    def as_dict(self) -> dict:
        return {
            "interfacingRoles": sorted(self.interfacing_roles),
            "interfacingEventTypes": sorted(self.interfacing_event_types),
            "violations": [list(v) for v in sorted(self.violations)],
        }


def _interface_violations(
    g: SwarmProtocol, h: SwarmProtocol
) -> list[tuple[EventType, Role, Role]]:
    violations = []
    for t in sorted(g.event_types() & h.event_types()):
        for rg in sorted(g.emitters_of(t)):
            for rh in sorted(h.emitters_of(t)):
                if rg != rh:
                    violations.append((t, rg, rh))
    return violations


def interface(g: SwarmProtocol, h: SwarmProtocol) -> InterfaceReport:
    """Report how two protocols interface: common roles, and the event types
    those roles emit in either protocol."""
    common = g.roles() & h.roles()
    shared_types = {
        t
        for proto in (g, h)
        for t in proto.event_types()
        if proto.emitters_of(t) & common
    }
    return InterfaceReport(
        interfacing_roles=frozenset(common),
        interfacing_event_types=frozenset(shared_types),
        violations=tuple(_interface_violations(g, h)),
    )


def _product_state(parts: Sequence[State]) -> State:
    return STATE_SEP.join(parts)


def compose(
    protocols: Sequence[SwarmProtocol],
    roles: frozenset[Role] | set[Role] | None = None,
) -> SwarmProtocol:
    """Synchronised product of the given protocols over reachable state tuples.

    By default the synchronising roles are those occurring in at least two of
    the protocols, and each such role synchronises exactly the protocols
    containing it.  An explicit `roles` set overrides the default: each listed
    role must then advance in every operand simultaneously, which blocks its
    actions entirely when some operand never fires them.
    """
    if not protocols:
        raise CompositionError("need at least one protocol to compose")
    if roles is None:
        all_violations = []
        for i in range(len(protocols)):
            for j in range(i + 1, len(protocols)):
                rep = interface(protocols[i], protocols[j])
                for v in rep.violations:
                    all_violations.append((i, j) + v)
        if all_violations:
            raise CompositionError(
                "protocols do not interface: event types emitted by different roles",
                all_violations,
            )
        counts: dict[Role, int] = {}
        for proto in protocols:
            for r in proto.roles():
                counts[r] = counts.get(r, 0) + 1
        sync_roles = {r for r, n in counts.items() if n >= 2}
        groups = {
            r: tuple(i for i, p in enumerate(protocols) if r in p.roles())
            for r in sync_roles
        }
    else:
        sync_roles = set(roles)
        groups = {r: tuple(range(len(protocols))) for r in sync_roles}

    initial = tuple(p.initial for p in protocols)
    seen = {initial}
    queue = deque([initial])
    transitions: list[Transition] = []
    while queue:
        current = queue.popleft()
        moves: list[tuple[Role, EventType, tuple[State, ...]]] = []
        # synchronised moves: every protocol in the role's group fires jointly
        for role in sorted(sync_roles):
            group = groups[role]
            candidates: set[EventType] | None = None
            for i in group:
                fired = {
                    tr.event_type
                    for tr in protocols[i].outgoing(current[i])
                    if tr.role == role
                }
                candidates = fired if candidates is None else candidates & fired
                if not candidates:
                    break
            for t in sorted(candidates or ()):
                target = list(current)
                for i in group:
                    target[i] = protocols[i].successor(current[i], t)
                moves.append((role, t, tuple(target)))
        # free moves: the owning protocol advances alone
        for i, proto in enumerate(protocols):
            for tr in proto.outgoing(current[i]):
                if tr.role in sync_roles:
                    continue
                target = list(current)
                target[i] = tr.target
                moves.append((tr.role, tr.event_type, tuple(target)))
        for role, t, target in moves:
            transitions.append(
                Transition(_product_state(current), role, t, _product_state(target))
            )
            if target not in seen:
                seen.add(target)
                queue.append(target)
    return SwarmProtocol.build(_product_state(initial), transitions)


def canonical_protocol(protocol: SwarmProtocol) -> SwarmProtocol:
    """Rename states by BFS discovery order, edges explored sorted by
    (event type, role); deterministic protocols get a unique such form."""
    name = {protocol.initial: "0"}
    order = deque([protocol.initial])
    transitions = []
    while order:
        state = order.popleft()
        for tr in sorted(protocol.outgoing(state), key=lambda t: (t.event_type, t.role)):
            if tr.target not in name:
                name[tr.target] = str(len(name))
                order.append(tr.target)
            transitions.append((name[state], tr.role, tr.event_type, name[tr.target]))
    return SwarmProtocol.build("0", transitions)


def protocols_isomorphic(a: SwarmProtocol, b: SwarmProtocol) -> bool:
    """State-renaming equality of deterministic protocols."""
    ca, cb = canonical_protocol(a), canonical_protocol(b)
    return ca.initial == cb.initial and ca.transitions == cb.transitions


def compose_binary_fold(
    protocols: Sequence[SwarmProtocol],
    roles: frozenset[Role] | set[Role] | None = None,
) -> SwarmProtocol:
    """Left-associative binary composition; must agree with `compose` up to
    isomorphism.  Kept as the second route for the composition tests."""
    result = protocols[0]
    for proto in protocols[1:]:
        result = compose([result, proto], roles)
    return result


def dropped_component_transitions(
    protocols: Sequence[SwarmProtocol], composed: SwarmProtocol
) -> list[int]:
    """Per component, how many of its transitions never occur in the
    composition (a diagnostic for behaviour restrictions)."""
    present: list[set[tuple[State, EventType]]] = [set() for _ in protocols]
    for tr in composed.transitions:
        parts_src = tr.source.split(STATE_SEP)
        parts_dst = tr.target.split(STATE_SEP)
        for i, proto in enumerate(protocols):
            src, dst = parts_src[i], parts_dst[i]
            # the component took part iff its transition for this label exists
            # and its tuple slot moved along it
            if proto.successor(src, tr.event_type) == dst and any(
                t.role == tr.role for t in proto.outgoing(src) if t.event_type == tr.event_type
            ):
                if src != dst or parts_src == parts_dst:
                    present[i].add((src, tr.event_type))
    return [
        sum(1 for tr in proto.transitions if (tr.source, tr.event_type) not in present[i])
        for i, proto in enumerate(protocols)
    ]


@dataclass(frozen=True)
class ComposabilityReport:
    """Aggregated result of the composability requirements."""

    passed: bool
    failures: tuple[tuple[str, tuple, str], ...]

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "failures": [
                {"check": c, "witness": list(w), "message": m}
                for c, w, m in self.failures
            ],
        }


def check_composable(protocols: Sequence[SwarmProtocol]) -> ComposabilityReport:
    """Composable: pairwise interfacing, and each protocol sequential and
    confusion-free."""
    failures: list[tuple[str, tuple, str]] = []
    for i, proto in enumerate(protocols):
        conc = concurrent_pairs(proto)
        if len(conc):
            failures.append(
                (
                    "sequential",
                    (i,) + tuple(map(tuple, conc.as_sorted_pairs())),
                    f"protocol {i} has concurrent event types {conc.as_sorted_pairs()}",
                )
            )
        for check, witness, message in confusion_free_violations(proto):
            failures.append((check, (i,) + witness, f"protocol {i}: {message}"))
    for i in range(len(protocols)):
        for j in range(i + 1, len(protocols)):
            for t, rg, rh in _interface_violations(protocols[i], protocols[j]):
                failures.append(
                    (
                        "interface",
                        (i, j, t, rg, rh),
                        f"protocols {i} and {j}: event type {t!r} emitted by "
                        f"{rg!r} and {rh!r}",
                    )
                )
    return ComposabilityReport(passed=not failures, failures=tuple(failures))


def require_composable(protocols: Sequence[SwarmProtocol]) -> None:
    report = check_composable(protocols)
    if not report.passed:
        raise CompositionError(
            "protocols are not composable: "
            + "; ".join(m for _, _, m in report.failures),
            [w for _, w, _ in report.failures],
        )
