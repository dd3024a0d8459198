"""Random composable protocol generation and the subscription benchmark.

Generated instances follow a chain pattern: consecutive protocols share one
interfacing role whose event types occur in the same relative order in both,
with random local branches and loops of fresh, non-interfacing event types in
between.  Freshness of every local event type makes the outputs sequential
and confusion-free by construction.

The harness compares the compositional generator against the exact
(expansion-based) one: wall times, subscription sizes, and the average
subscribed fraction of event types per role.
"""

from __future__ import annotations

import csv
import io
import random
import statistics
import time
from dataclasses import dataclass
from typing import Sequence

from .composition import check_composable
from .protocols import Subscription, SwarmProtocol
from .subscriptions import generate_subscription
from .wellformed import (
    ExpansionCapError,
    exact_subscription,
    expansion_cap,
    expansion_estimate,
)


@dataclass(frozen=True)
class GenParams:
    n_protocols: int
    seed: int
    max_roles_per_protocol: int = 9
    max_types_per_role: int = 9
    branch_prob: float = 0.3
    loop_prob: float = 0.3

    def __post_init__(self) -> None:
        if self.n_protocols < 1 or self.max_roles_per_protocol < 1 or self.max_types_per_role < 1:
            raise ValueError("counts must be at least 1")
        for p in (self.branch_prob, self.loop_prob):
            if not 0.0 <= p <= 1.0:
                raise ValueError("probabilities must lie in [0, 1]")


@dataclass(frozen=True)
class BenchRecord:
    instance: int
    transitions: int | None
    alg1_us: float
    exact_us: float | None
    alg1_efrac: float
    exact_efrac: float | None
    exact_skipped: str | None = None

    def as_row(self) -> list:
        blank = lambda v: "" if v is None else v
        return [
            self.instance,
            blank(self.transitions),
            round(self.alg1_us, 3),
            blank(None if self.exact_us is None else round(self.exact_us, 3)),
            round(self.alg1_efrac, 6),
            blank(None if self.exact_efrac is None else round(self.exact_efrac, 6)),
        ]


CSV_COLUMNS = ["instance", "transitions", "alg1_us", "exact_us", "alg1_efrac", "exact_efrac"]


class _Builder:
    def __init__(self, rng: random.Random, params: GenParams, index: int):
        self.rng = rng
        self.params = params
        self.index = index
        self.transitions: list[tuple[str, str, str, str]] = []
        self.counter = 0
        n_local = rng.randint(1, min(3, params.max_roles_per_protocol))
        self.local_roles = [f"R{index}_{k}" for k in range(n_local)]
        self.budget = {r: params.max_types_per_role for r in self.local_roles}

    def fresh_node(self) -> str:
        self.counter += 1
        return f"s{self.counter}"

    def pick_role(self) -> str | None:
        open_roles = [r for r in self.local_roles if self.budget[r] > 0]
        if not open_roles:
            return None
        role = self.rng.choice(open_roles)
        self.budget[role] -= 1
        return role

    def fresh_type(self, serial: list[int]) -> str:
        serial[0] += 1
        return f"t{self.index}_{serial[0]}"

    def add(self, source: str, role: str, event_type: str, target: str) -> None:
        self.transitions.append((source, role, event_type, target))


def _local_pattern(builder: _Builder, cursor: str, serial: list[int]) -> str:
    """Grow an optional local structure from `cursor`; returns the new cursor."""
    rng = builder.rng
    if rng.random() < builder.params.loop_prob:
        role = builder.pick_role()
        back_role = builder.pick_role()
        if role and back_role:
            mid = builder.fresh_node()
            builder.add(cursor, role, builder.fresh_type(serial), mid)
            builder.add(mid, back_role, builder.fresh_type(serial), cursor)
    if rng.random() < builder.params.branch_prob:
        join = builder.fresh_node()
        reached = False
        for _ in range(2):
            length = rng.randint(1, 2)
            node = cursor
            completed = True
            for k in range(length):
                role = builder.pick_role()
                if role is None:
                    completed = False
                    break
                nxt = join if k == length - 1 else builder.fresh_node()
                builder.add(node, role, builder.fresh_type(serial), nxt)
                node = nxt
            reached |= completed
        if reached:
            cursor = join
    else:
        for _ in range(rng.randint(0, 2)):
            role = builder.pick_role()
            if role is None:
                break
            nxt = builder.fresh_node()
            builder.add(cursor, role, builder.fresh_type(serial), nxt)
            cursor = nxt
    return cursor


def generate_protocols(params: GenParams) -> list[SwarmProtocol]:
    """Deterministic per seed; always composable."""
    rng = random.Random(params.seed)
    n = params.n_protocols
    # boundary b sits between protocols b and b+1 and owns 1..2 event types
    boundary_types = [
        [f"x{b}_{k}" for k in range(rng.randint(1, 2))] for b in range(max(0, n - 1))
    ]
    protocols = []
    for i in range(n):
        builder = _Builder(rng, params, i)
        serial = [0]
        backbone: list[tuple[str, str]] = []
        if i > 0:
            backbone += [(f"I{i - 1}", t) for t in boundary_types[i - 1]]
        if i < n - 1:
            backbone += [(f"I{i}", t) for t in boundary_types[i]]
        cursor = "s0"
        for role, event_type in backbone:
            cursor = _local_pattern(builder, cursor, serial)
            nxt = builder.fresh_node()
            builder.add(cursor, role, event_type, nxt)
            cursor = nxt
        cursor = _local_pattern(builder, cursor, serial)
        if not builder.transitions:
            role = builder.pick_role() or f"R{i}_0"
            builder.add("s0", role, builder.fresh_type(serial), builder.fresh_node())
        protocols.append(SwarmProtocol.build("s0", builder.transitions))
    report = check_composable(protocols)
    if not report.passed:
        raise AssertionError(f"generator produced a non-composable set: {report.failures}")
    return protocols


def e_frac(subscription: Subscription, protocols: Sequence[SwarmProtocol]) -> float:
    """Average fraction of all event types a role subscribes to."""
    roles = sorted({r for p in protocols for r in p.roles()})
    all_types = {t for p in protocols for t in p.event_types()}
    if not all_types or not roles:
        raise ValueError("cannot compute a subscribed fraction without event types")
    return sum(len(subscription.of(r) & all_types) for r in roles) / (
        len(roles) * len(all_types)
    )


def _time_us(fn, repetitions: int) -> float:
    samples = []
    for _ in range(max(1, repetitions)):
        start = time.perf_counter()
        fn()
        samples.append((time.perf_counter() - start) * 1e6)
    return statistics.median(samples)


def bench_compare(
    protocols: Sequence[SwarmProtocol],
    subscriptions: Sequence[Subscription] | None = None,
    repetitions: int = 3,
    cap: int | None = None,
    instance: int = 0,
) -> BenchRecord:
    """Time both generators on one instance; the exact generator is skipped
    with a reason when the expansion estimate exceeds the cap."""
    alg1_result = generate_subscription(protocols, subscriptions)
    alg1_us = _time_us(lambda: generate_subscription(protocols, subscriptions), repetitions)
    alg1_frac = e_frac(alg1_result.subscription, protocols)
    limit = expansion_cap(cap)
    if expansion_estimate(protocols) > limit:
        return BenchRecord(
            instance=instance,
            transitions=None,
            alg1_us=alg1_us,
            exact_us=None,
            alg1_efrac=alg1_frac,
            exact_efrac=None,
            exact_skipped=f"expansion estimate exceeds cap {limit}",
        )
    try:
        exact_result = exact_subscription(protocols, subscriptions, cap=limit)
    except ExpansionCapError as exc:
        return BenchRecord(
            instance=instance,
            transitions=None,
            alg1_us=alg1_us,
            exact_us=None,
            alg1_efrac=alg1_frac,
            exact_efrac=None,
            exact_skipped=str(exc),
        )
    exact_us = _time_us(
        lambda: exact_subscription(protocols, subscriptions, cap=limit), repetitions
    )
    return BenchRecord(
        instance=instance,
        transitions=len(exact_result.composition.transitions),
        alg1_us=alg1_us,
        exact_us=exact_us,
        alg1_efrac=alg1_frac,
        exact_efrac=e_frac(exact_result.subscription, protocols),
    )


def run_benchmark(
    instances: int,
    seed: int,
    protocols_per_instance: int = 2,
    repetitions: int = 3,
    max_roles_per_protocol: int = 9,
    max_types_per_role: int = 9,
    branch_prob: float = 0.3,
    loop_prob: float = 0.3,
    cap: int | None = None,
    parallel: bool = False,
) -> list[BenchRecord]:
    tasks = [
        GenParams(
            n_protocols=protocols_per_instance,
            seed=seed + i,
            max_roles_per_protocol=max_roles_per_protocol,
            max_types_per_role=max_types_per_role,
            branch_prob=branch_prob,
            loop_prob=loop_prob,
        )
        for i in range(instances)
    ]
    if parallel:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor() as pool:
            return list(pool.map(_bench_task, enumerate(tasks), [repetitions] * len(tasks), [cap] * len(tasks)))
    return [_bench_task((i, p), repetitions, cap) for i, p in enumerate(tasks)]


def _bench_task(indexed: tuple[int, GenParams], repetitions: int, cap: int | None) -> BenchRecord:
    index, params = indexed
    protocols = generate_protocols(params)
    return bench_compare(protocols, repetitions=repetitions, cap=cap, instance=index)


def records_to_csv(records: Sequence[BenchRecord]) -> str:
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(CSV_COLUMNS)
    for record in records:
        writer.writerow(record.as_row())
    return out.getvalue()
