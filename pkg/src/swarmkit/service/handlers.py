"""Shared request handlers: the FastAPI endpoints and the CLI subcommands
both delegate here, so the two surfaces cannot drift apart."""

from __future__ import annotations

from .. import bench as benchmod
from ..composition import CompositionError, compose, dropped_component_transitions
from ..machines import adapt_machine, project
from ..protocols import ProtocolError, Subscription
from ..runtime import (
    TraceStep,
    check_fidelity,
    fresh_swarm,
    replay,
    simulate,
)
from ..subscriptions import generate_subscription
from ..wellformed import (
    ExpansionCapError,
    check_well_formed,
    exact_subscription,
)
from . import models


class DomainError(Exception):
    """An operation is impossible for the given inputs (not a malformed
    request): interface violations, expansion cap, refused schedules."""

    def __init__(self, message: str, payload: dict | None = None, usage: bool = False):
        super().__init__(message)
        self.payload = payload or {}
        self.usage = usage


def handle_compose(request: models.ComposeRequest) -> models.ComposeResponse:
    protocols = [p.to_core() for p in request.protocols]
    roles = frozenset(request.roles) if request.roles is not None else None
    try:
        composed = compose(protocols, roles)
    except CompositionError as exc:
        raise DomainError(str(exc), {"violations": [list(v) for v in exc.violations]})
    return models.ComposeResponse(
        protocol=models.ProtocolModel.from_core(composed),
        droppedComponentTransitions=dropped_component_transitions(protocols, composed),
    )


def handle_check(request: models.CheckRequest) -> models.CheckResponse:
    protocol = request.protocol.to_core()
    subscription = request.subscription.to_core()
    components = (
        [c.to_core() for c in request.components] if request.components else None
    )
    report, updating = check_well_formed(protocol, subscription, components)
    return models.CheckResponse(
        report=models.ReportModel.model_validate(report.as_dict()),
        updating=updating.as_dict(),
    )


def handle_subscribe(request: models.SubscribeRequest) -> models.SubscribeResponse:
    protocols = [p.to_core() for p in request.protocols]
    subs = [s.to_core() for s in request.subscriptions or []]
    if subs and len(subs) != len(protocols):
        raise DomainError("need one subscription per protocol", usage=True)
    def frac(subscription) -> float:
        try:
            return benchmod.e_frac(subscription, protocols)
        except ValueError:  # no event types at all
            return 0.0

    try:
        if request.mode == "alg1":
            result = generate_subscription(protocols, subs)
            return models.SubscribeResponse(
                subscription=models.SubscriptionModel.from_core(result.subscription),
                updating=result.updating.as_dict(),
                stats=models.SubscribeStats(
                    eFrac=frac(result.subscription),
                    iterations=result.iterations,
                ),
                concurrent=result.conc.as_sorted_pairs(),
                interfacingRoles=sorted(result.interfacing_roles),
            )
        exact = exact_subscription(protocols, subs)
        return models.SubscribeResponse(
            subscription=models.SubscriptionModel.from_core(exact.subscription),
            updating=exact.updating.as_dict(),
            stats=models.SubscribeStats(
                eFrac=frac(exact.subscription),
                iterations=exact.iterations,
                compositionTransitions=len(exact.composition.transitions),
            ),
        )
    except ExpansionCapError as exc:
        raise DomainError(str(exc), usage=True)
    except CompositionError as exc:
        raise DomainError(str(exc), {"violations": [list(v) for v in exc.violations]})


def handle_project(request: models.ProjectRequest) -> models.ProjectResponse:
    machine = project(
        request.protocol.to_core(), request.role, request.subscription.to_core()
    )
    return models.ProjectResponse(machine=models.MachineModel.from_core(machine))


def handle_adapt(request: models.AdaptRequest) -> models.AdaptResponse:
    protocols = [p.to_core() for p in request.protocols]
    subs = [s.to_core() for s in request.subscriptions or []]
    if subs and len(subs) != len(protocols):
        raise DomainError("need one subscription per protocol", usage=True)
    try:
        alg1 = generate_subscription(protocols, subs)
    except CompositionError as exc:
        raise DomainError(str(exc), {"violations": [list(v) for v in exc.violations]})
    adapted = adapt_machine(
        request.machine.to_core(),
        protocols,
        request.role,
        request.index,
        alg1.subscription,
        alg1.updating.types,
        alg1.conc,
    )
    return models.AdaptResponse(
        machine=models.MachineModel.from_core(adapted),
        subscription=models.SubscriptionModel.from_core(alg1.subscription),
    )


def _build_swarm(spec: models.SwarmSpecModel):
    protocol = spec.protocol.to_core()
    subscription = spec.subscription.to_core()
    machines = {}
    for role in spec.members:
        if role not in machines:
            machines[role] = project(protocol, role, subscription)
    state = fresh_swarm((machines[r], r) for r in spec.members)
    return protocol, subscription, state


def handle_simulate(request: models.SimulateRequest) -> models.SimulateResponse:
    protocol, subscription, state = _build_swarm(request.swarm)
    result = simulate(
        state,
        steps=request.steps,
        seed=request.seed,
        branch_tracking=not request.legacy,
    )
    trace = models.TraceModel(
        swarm=request.swarm,
        seed=request.seed,
        legacy=request.legacy,
        steps=[models.TraceStepModel.model_validate(s.as_dict()) for s in result.steps],
    )
    branch_tracking = not request.legacy
    return models.SimulateResponse(
        trace=trace,
        globalLog=[models.EventModel.model_validate(e.as_dict()) for e in result.final.global_log],
        memberStates=[m.current_state(branch_tracking) for m in result.final.members],
    )


def handle_fidelity(request: models.FidelityRequest) -> models.FidelityResponse:
    spec = request.trace.swarm
    protocol = request.protocol.to_core() if request.protocol else spec.protocol.to_core()
    subscription = (
        request.subscription.to_core() if request.subscription else spec.subscription.to_core()
    )
    _, _, state = _build_swarm(spec)
    steps = [
        TraceStep(
            kind=s.kind,
            member=s.member,
            event=None if s.event is None else _event(s.event),
            position=s.position,
            delivered=tuple(s.delivered),
        )
        for s in request.trace.steps
    ]
    branch_tracking = not request.trace.legacy
    final, history = replay(state, steps, branch_tracking)
    checked = history if request.eachStep else [final]
    diffs: list[models.MemberDiffModel] = []
    passed = True
    for snapshot in checked:
        verdict = check_fidelity(
            snapshot, protocol, subscription, branch_tracking=branch_tracking
        )
        if not verdict.passed:
            passed = False
            diffs = [models.MemberDiffModel.model_validate(d.as_dict()) for d in verdict.diffs]
    return models.FidelityResponse(passed=passed, diffs=diffs, checkedStates=len(checked))


def _event(model: models.EventModel):
    from ..runtime import Event

    return Event(id=model.id, type=model.type, pue=model.pue)


def handle_bench(request: models.BenchRequest) -> models.BenchResponse:
    records = benchmod.run_benchmark(
        instances=request.n,
        seed=request.seed,
        protocols_per_instance=request.protocolsPerInstance,
        repetitions=request.repetitions,
        max_roles_per_protocol=request.maxRolesPerProtocol,
        max_types_per_role=request.maxTypesPerRole,
        branch_prob=request.branchProb,
        loop_prob=request.loopProb,
    )
    return models.BenchResponse(
        records=[
            models.BenchRecordModel(
                instance=r.instance,
                transitions=r.transitions,
                alg1Us=r.alg1_us,
                exactUs=r.exact_us,
                alg1Efrac=r.alg1_efrac,
                exactEfrac=r.exact_efrac,
                exactSkipped=r.exact_skipped,
            )
            for r in records
        ],
        csv=benchmod.records_to_csv(records),
    )
