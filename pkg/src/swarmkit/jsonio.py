"""Stable JSON encoding for the wire formats.

All emitters sort keys and set-valued fields, so identical inputs always
produce byte-identical output.
"""

from __future__ import annotations

import json
from typing import Any, Mapping, Sequence

from .machines import Machine
from .protocols import Subscription, SwarmProtocol, validate_protocol
from .runtime import Event, SwarmState, TraceStep, fresh_swarm


def dumps(payload: Any) -> str:
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def protocol_from_json(raw: Mapping) -> SwarmProtocol:
    return validate_protocol(raw)


def subscription_from_json(raw: Mapping) -> Subscription:
    return Subscription.from_json(raw)


def machine_from_json(raw: Mapping) -> Machine:
    return Machine.from_json(raw)


def event_from_json(raw: Mapping) -> Event:
    return Event(id=int(raw["id"]), type=str(raw["type"]), pue=raw.get("pue"))


def trace_step_from_json(raw: Mapping) -> TraceStep:
    if raw["kind"] == "local":
        return TraceStep(
            kind="local",
            member=int(raw["member"]),
            event=event_from_json(raw["event"]),
            position=int(raw["position"]),
        )
    return TraceStep(
        kind="prop",
        member=int(raw["member"]),
        delivered=tuple(int(i) for i in raw["delivered"]),
    )


def swarm_members_from_spec(
    protocol: SwarmProtocol,
    subscription: Subscription,
    roles: Sequence[str],
    project_fn,
) -> SwarmState:
    machines = {}
    for role in roles:
        if role not in machines:
            machines[role] = project_fn(protocol, role, subscription)
    return fresh_swarm((machines[r], r) for r in roles)
