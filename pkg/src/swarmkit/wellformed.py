"""Well-formedness checks and the exact (expansion-based) subscription generator.

A protocol is well-formed for a subscription when it is confusion-free,
causal-consistent, and determinate.  Determinacy's looping clause ("every
cycle carries an event type all downstream roles subscribe to") is decided
by deleting every transition that already satisfies the subscription
condition and requiring the residual graph to be acyclic, which is the
polynomial equivalent of the per-cycle quantification.

The determinacy and causal-consistency verdict is re-derived by an
independent inference-rule checker (see `wfrules`); a disagreement between
the two routes raises `CheckerDisagreement`.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Iterable, Sequence

from . import wfrules
from ._graphs import AnchorIndex, cycle_edges, find_cycle
from .composition import compose, require_composable
from .protocols import (
    ConcurrencyRelation,
    EventType,
    Role,
    State,
    Subscription,
    SwarmProtocol,
    branching_pairs,
    concurrent_pairs,
    confusion_free_violations,
    cycle_transitions,
    joining_triples,
)

DEFAULT_EXPANSION_CAP = 10**6
EXPANSION_CAP_ENV = "SWARMKIT_EXPANSION_CAP"


class ExpansionCapError(RuntimeError):
    """The estimated product size exceeds the configured cap."""


class CheckerDisagreement(RuntimeError):
    """The direct checker and the rule-based checker disagree (a bug)."""


@dataclass(frozen=True)
class WfFailure:
    check: str
    witness: tuple
    message: str

    def as_dict(self) -> dict:
        return {"check": self.check, "witness": list(self.witness), "message": self.message}


@dataclass(frozen=True)
class WfReport:
    passed: bool
    failures: tuple[WfFailure, ...]

    @classmethod
    def from_failures(cls, failures: Iterable[WfFailure]) -> "WfReport":
        fs = tuple(failures)
        return cls(passed=not fs, failures=fs)

    def merge(self, other: "WfReport") -> "WfReport":
        return WfReport.from_failures(self.failures + other.failures)

    def as_dict(self) -> dict:
        return {"passed": self.passed, "failures": [f.as_dict() for f in self.failures]}


@dataclass(frozen=True)
class UpdatingTypeSet:
    """Event types whose acceptance rewrites branch tracking, tagged with
    their provenance among branching / joining / looping."""

    types: frozenset[EventType]
    provenance: tuple[tuple[EventType, tuple[str, ...]], ...]

    @classmethod
    def from_tags(cls, tags: dict[EventType, set[str]]) -> "UpdatingTypeSet":
        return cls(
            types=frozenset(tags),
            provenance=tuple((t, tuple(sorted(ps))) for t, ps in sorted(tags.items())),
        )

    def as_dict(self) -> dict:
        return {t: list(ps) for t, ps in self.provenance}


def check_confusion_free(
    protocol: SwarmProtocol, components: Sequence[SwarmProtocol] | None = None
) -> WfReport:
    return WfReport.from_failures(
        WfFailure(check, witness, message)
        for check, witness, message in confusion_free_violations(protocol, components)
    )


def check_causal_consistency(
    protocol: SwarmProtocol, subscription: Subscription, conc: ConcurrencyRelation
) -> WfReport:
    """Each role subscribes to what it emits and to the non-concurrent event
    types immediately preceding its emissions."""
    failures = []
    for tr in sorted(protocol.transitions):
        if tr.event_type not in subscription.of(tr.role):
            failures.append(
                WfFailure(
                    "causal-consistency-1",
                    (tr.role, tr.event_type),
                    f"role {tr.role!r} emits {tr.event_type!r} but does not subscribe to it",
                )
            )
    for pred in sorted(protocol.transitions):
        for succ in protocol.outgoing(pred.target):
            if conc.related(pred.event_type, succ.event_type):
                continue
            if pred.event_type not in subscription.of(succ.role):
                failures.append(
                    WfFailure(
                        "causal-consistency-2",
                        (succ.role, pred.event_type, succ.event_type),
                        f"role {succ.role!r} emits {succ.event_type!r} directly after "
                        f"{pred.event_type!r} but does not subscribe to it",
                    )
                )
    # several predecessors may share an event type; report each witness once
    unique = {f.witness: f for f in failures}
    return WfReport.from_failures(unique[w] for w in sorted(unique, key=repr))


def check_determinacy(
    protocol: SwarmProtocol,
    subscription: Subscription,
    conc: ConcurrencyRelation,
    index: AnchorIndex | None = None,
) -> tuple[WfReport, UpdatingTypeSet]:
    """Branching / joining / looping determinacy; also returns the updating
    event types (branching, joining, and looping in the subscription)."""
    index = index or AnchorIndex(protocol, conc)
    masks = index.sigma_masks(subscription)
    failures = []
    tags: dict[EventType, set[str]] = {}

    for t, t_other, state in sorted(branching_pairs(protocol, conc)):
        tags.setdefault(t, set()).add("branching")
        for role in sorted(index.roles(state, t, masks)):
            missing = {t, t_other} - subscription.of(role)
            if missing:
                failures.append(
                    WfFailure(
                        "determinacy-branching",
                        (t, t_other, state, role),
                        f"{t!r} branches with {t_other!r} at {state!r}; role {role!r} "
                        f"must subscribe to {sorted(missing)}",
                    )
                )
    for t, tp, tpp, state in sorted(joining_triples(protocol, conc)):
        tags.setdefault(t, set()).add("joining")
        for role in sorted(index.roles(state, t, masks)):
            missing = {t, tp, tpp} - subscription.of(role)
            if missing:
                failures.append(
                    WfFailure(
                        "determinacy-joining",
                        (t, tp, tpp, state, role),
                        f"{t!r} joins {tp!r} and {tpp!r} at {state!r}; role {role!r} "
                        f"must subscribe to {sorted(missing)}",
                    )
                )
    residual = [
        tr
        for tr in protocol.transitions
        if not index.covered(tr.source, tr.event_type, subscription, masks)
    ]
    cycle = find_cycle(residual)
    if cycle is not None:
        failures.append(
            WfFailure(
                "determinacy-looping",
                tuple((tr.source, tr.event_type) for tr in cycle),
                "cycle "
                + " -> ".join(f"{tr.source}:{tr.event_type}" for tr in cycle)
                + " has no event type subscribed to by all downstream roles",
            )
        )
    for tr in sorted(cycle_transitions(protocol)):
        if index.covered(tr.source, tr.event_type, subscription, masks):
            tags.setdefault(tr.event_type, set()).add("looping")
    unique = {f.witness: f for f in failures}
    report = WfReport.from_failures(unique[w] for w in sorted(unique, key=repr))
    return report, UpdatingTypeSet.from_tags(tags)


def updating_types(
    protocol: SwarmProtocol, subscription: Subscription, conc: ConcurrencyRelation
) -> UpdatingTypeSet:
    return check_determinacy(protocol, subscription, conc)[1]


def check_well_formed(
    protocol: SwarmProtocol,
    subscription: Subscription,
    components: Sequence[SwarmProtocol] | None = None,
) -> tuple[WfReport, UpdatingTypeSet]:
    """Conjunction of the three checks using the exact concurrency relation.

    The rule-based checker runs as a second implementation: with the
    component over-approximation of concurrency when components are given,
    with the exact relation otherwise.  When both routes use the same
    relation their verdicts must agree.
    """
    conc = concurrent_pairs(protocol)
    cf = check_confusion_free(protocol, components)
    cc = check_causal_consistency(protocol, subscription, conc)
    det, updating = check_determinacy(protocol, subscription, conc)
    report = cf.merge(cc).merge(det)

    rule_conc = wfrules.overapprox_conc(components) if components else conc
    rule_verdict = wfrules.check_dcc(protocol, subscription, rule_conc)
    if rule_conc == conc:
        direct_verdict = cc.passed and det.passed
        if rule_verdict != direct_verdict:
            raise CheckerDisagreement(
                f"direct checker says {direct_verdict}, rule checker says "
                f"{rule_verdict} for the same concurrency relation"
            )
    return report, updating


# -- exact subscription generation ------------------------------------------


@dataclass(frozen=True)
class ExactResult:
    subscription: Subscription
    updating: UpdatingTypeSet
    composition: SwarmProtocol
    iterations: int


def expansion_estimate(protocols: Sequence[SwarmProtocol]) -> int:
    return math.prod(len(p.states) for p in protocols)


def expansion_cap(explicit: int | None = None) -> int:
    if explicit is not None:
        return explicit
    env = os.environ.get(EXPANSION_CAP_ENV)
    return int(env) if env else DEFAULT_EXPANSION_CAP


def exact_subscription(
    protocols: Sequence[SwarmProtocol],
    subscriptions: Sequence[Subscription] | None = None,
    cap: int | None = None,
) -> ExactResult:
    """Expand the composition and close the well-formedness requirements to a
    fixpoint, then cover any remaining cycles.

    The closure only ever adds entries forced by causal consistency or by
    the branching/joining requirements, so the output contains the inputs
    and is well-formed; the loop cover picks the transition with the
    lexicographically smallest event type on an uncovered cycle (ties by
    source state), which makes results deterministic but is a heuristic,
    not a proven-minimal cover.
    """
    require_composable(protocols)
    estimate = expansion_estimate(protocols)
    limit = expansion_cap(cap)
    if estimate > limit:
        raise ExpansionCapError(f"estimated product size {estimate} exceeds cap {limit}")
    composition = compose(protocols)
    sigma: dict[Role, set[EventType]] = {}
    for sub in subscriptions or []:
        for role, types in sub.items():
            sigma.setdefault(role, set()).update(types)

    conc = concurrent_pairs(composition)
    index = AnchorIndex(composition, conc)
    bps = sorted(branching_pairs(composition, conc))
    jts = sorted(joining_triples(composition, conc))

    def add(role: Role, types: Iterable[EventType]) -> bool:
        bucket = sigma.setdefault(role, set())
        before = len(bucket)
        bucket.update(types)
        return len(bucket) != before

    iterations = 0

    def closure() -> None:
        nonlocal iterations
        # causal consistency does not depend on the subscription: one pass
        for tr in composition.transitions:
            add(tr.role, [tr.event_type])
            for succ in composition.outgoing(tr.target):
                if not conc.related(tr.event_type, succ.event_type):
                    add(succ.role, [tr.event_type])
        changed = True
        while changed:
            changed = False
            iterations += 1
            masks = index.sigma_masks(Subscription(sigma))
            for t, t_other, state in bps:
                for role in index.roles(state, t, masks):
                    changed |= add(role, [t, t_other])
            for t, tp, tpp, state in jts:
                for role in index.roles(state, t, masks):
                    changed |= add(role, [t, tp, tpp])

    closure()
    while True:
        sub = Subscription(sigma)
        masks = index.sigma_masks(sub)
        residual = [
            tr
            for tr in composition.transitions
            if not index.covered(tr.source, tr.event_type, sub, masks)
        ]
        cyclic = cycle_edges(residual)
        if not cyclic:
            break
        pick = min(cyclic, key=lambda tr: (tr.event_type, tr.source))
        for role in index.roles(pick.source, pick.event_type, masks):
            add(role, [pick.event_type])
        closure()

    result = Subscription(sigma)
    report, updating = check_well_formed(composition, result, components=list(protocols))
    if not report.passed:
        raise RuntimeError(
            "exact subscription generation produced a non-well-formed result: "
            + "; ".join(f.message for f in report.failures)
        )
    return ExactResult(result, updating, composition, iterations)
