"""Request and response schemas for the HTTP service.

These models define the wire formats; the CLI builds the same requests and
renders the same responses, so both surfaces stay in lockstep.
"""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field, RootModel

from .. import jsonio
from ..machines import Machine
from ..protocols import Subscription, SwarmProtocol


class TransitionModel(BaseModel):
    source: str
    role: str
    eventType: str
    target: str


class ProtocolModel(BaseModel):
    initial: str
    transitions: list[TransitionModel] = Field(default_factory=list)

    def to_core(self) -> SwarmProtocol:
        return jsonio.protocol_from_json(self.model_dump())

    @classmethod
    def from_core(cls, protocol: SwarmProtocol) -> "ProtocolModel":
        return cls.model_validate(protocol.as_dict())


class SubscriptionModel(RootModel[dict[str, list[str]]]):
    def to_core(self) -> Subscription:
        return Subscription.from_json(self.root)

    @classmethod
    def from_core(cls, subscription: Subscription) -> "SubscriptionModel":
        return cls.model_validate(subscription.as_dict())


class MachineAcceptModel(BaseModel):
    source: str
    eventType: str
    target: str


class MachineModel(BaseModel):
    role: str
    initial: str
    accepts: list[MachineAcceptModel] = Field(default_factory=list)
    emitters: dict[str, list[str]] = Field(default_factory=dict)
    updating: list[str] = Field(default_factory=list)
    concurrent: list[list[str]] = Field(default_factory=list)

    def to_core(self) -> Machine:
        return jsonio.machine_from_json(self.model_dump())

    @classmethod
    def from_core(cls, machine: Machine) -> "MachineModel":
        return cls.model_validate(machine.as_dict())


class FailureModel(BaseModel):
    check: str
    witness: list
    message: str


class ReportModel(BaseModel):
    passed: bool
    failures: list[FailureModel] = Field(default_factory=list)


class ComposeRequest(BaseModel):
    protocols: list[ProtocolModel]
    roles: Optional[list[str]] = None


class ComposeResponse(BaseModel):
    protocol: ProtocolModel
    droppedComponentTransitions: list[int]


class CheckRequest(BaseModel):
    protocol: ProtocolModel
    subscription: SubscriptionModel
    components: Optional[list[ProtocolModel]] = None


class CheckResponse(BaseModel):
    report: ReportModel
    updating: dict[str, list[str]]


class SubscribeRequest(BaseModel):
    protocols: list[ProtocolModel]
    subscriptions: Optional[list[SubscriptionModel]] = None
    mode: Literal["alg1", "exact"] = "alg1"


class SubscribeStats(BaseModel):
    eFrac: float
    iterations: int
    compositionTransitions: Optional[int] = None


class SubscribeResponse(BaseModel):
    subscription: SubscriptionModel
    updating: dict[str, list[str]]
    stats: SubscribeStats
    concurrent: Optional[list[list[str]]] = None
    interfacingRoles: Optional[list[str]] = None


class ProjectRequest(BaseModel):
    protocol: ProtocolModel
    role: str
    subscription: SubscriptionModel


class ProjectResponse(BaseModel):
    machine: MachineModel


class AdaptRequest(BaseModel):
    machine: MachineModel
    protocols: list[ProtocolModel]
    role: str
    index: int
    subscriptions: Optional[list[SubscriptionModel]] = None


class AdaptResponse(BaseModel):
    machine: MachineModel
    subscription: SubscriptionModel


class SwarmSpecModel(BaseModel):
    protocol: ProtocolModel
    subscription: SubscriptionModel
    members: list[str]
    """Roles, one per member; machines are the role projections."""


class EventModel(BaseModel):
    id: int
    type: str
    pue: Optional[int] = None


class TraceStepModel(BaseModel):
    kind: Literal["local", "prop"]
    member: int
    event: Optional[EventModel] = None
    position: Optional[int] = None
    delivered: list[int] = Field(default_factory=list)


class SimulateRequest(BaseModel):
    swarm: SwarmSpecModel
    steps: int = 50
    seed: int = 0
    legacy: bool = False


class TraceModel(BaseModel):
    swarm: SwarmSpecModel
    seed: int
    legacy: bool
    steps: list[TraceStepModel]


class SimulateResponse(BaseModel):
    trace: TraceModel
    globalLog: list[EventModel]
    memberStates: list[str]


class FidelityRequest(BaseModel):
    trace: TraceModel
    protocol: Optional[ProtocolModel] = None
    subscription: Optional[SubscriptionModel] = None
    eachStep: bool = False


class MemberDiffModel(BaseModel):
    member: int
    role: str
    expected: list[int]
    actual: list[int]


class FidelityResponse(BaseModel):
    passed: bool
    diffs: list[MemberDiffModel]
    checkedStates: int


class BenchRequest(BaseModel):
    n: int = 10
    seed: int = 42
    protocolsPerInstance: int = 2
    repetitions: int = 3
    maxRolesPerProtocol: int = 9
    maxTypesPerRole: int = 9
    branchProb: float = 0.3
    loopProb: float = 0.3


class BenchRecordModel(BaseModel):
    instance: int
    transitions: Optional[int] = None
    alg1Us: float
    exactUs: Optional[float] = None
    alg1Efrac: float
    exactEfrac: Optional[float] = None
    exactSkipped: Optional[str] = None


class BenchResponse(BaseModel):
    records: list[BenchRecordModel]
    csv: str
