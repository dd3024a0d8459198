"""swarmkit: compose, verify, project, and simulate swarm protocols."""

from .composition import (
    CompositionError,
    InterfaceReport,
    check_composable,
    compose,
    interface,
)
from .machines import (
    Machine,
    MachineError,
    ProjectionAmbiguityError,
    SwarmSpec,
    adapt_machine,
    canonicalize,
    compose_machines,
    compose_swarm,
    machines_isomorphic,
    project,
)
from .protocols import (
    ConcurrencyRelation,
    EventType,
    ProtocolError,
    Role,
    Subscription,
    SwarmProtocol,
    Transition,
    branching_pairs,
    concurrent_pairs,
    joining_triples,
    looping_types,
    roles_set,
    validate_protocol,
)
from .runtime import (
    EmissionRefused,
    Event,
    SwarmState,
    branch_set,
    check_fidelity,
    effective_log_machine,
    effective_log_protocol,
    emit,
    fresh_swarm,
    process_log,
    simulate,
)
from .subscriptions import Alg1Result, generate_subscription, subscribers
from .wellformed import (
    ExactResult,
    UpdatingTypeSet,
    WfReport,
    check_causal_consistency,
    check_confusion_free,
    check_determinacy,
    check_well_formed,
    exact_subscription,
)

__version__ = "0.1.0"

__all__ = [
    "Alg1Result",
    "CompositionError",
    "ConcurrencyRelation",
    "EmissionRefused",
    "Event",
    "EventType",
    "ExactResult",
    "InterfaceReport",
    "Machine",
    "MachineError",
    "ProjectionAmbiguityError",
    "ProtocolError",
    "Role",
    "Subscription",
    "SwarmProtocol",
    "SwarmSpec",
    "SwarmState",
    "Transition",
    "UpdatingTypeSet",
    "WfReport",
    "adapt_machine",
    "branch_set",
    "branching_pairs",
    "canonicalize",
    "check_causal_consistency",
    "check_composable",
    "check_confusion_free",
    "check_determinacy",
    "check_fidelity",
    "check_well_formed",
    "compose",
    "compose_machines",
    "compose_swarm",
    "concurrent_pairs",
    "effective_log_machine",
    "effective_log_protocol",
    "emit",
    "exact_subscription",
    "fresh_swarm",
    "generate_subscription",
    "interface",
    "joining_triples",
    "looping_types",
    "machines_isomorphic",
    "process_log",
    "project",
    "roles_set",
    "simulate",
    "subscribers",
    "validate_protocol",
]
