import random

import pytest

from swarmkit import (
    Machine,
    ProjectionAmbiguityError,
    Subscription,
    SwarmProtocol,
    adapt_machine,
    check_causal_consistency,
    compose,
    compose_machines,
    compose_swarm,
    concurrent_pairs,
    exact_subscription,
    generate_subscription,
    machines_isomorphic,
    project,
)
from swarmkit.machines import MachineError, canonicalize

from .oracles import random_confusion_free_protocol
from .scenario import (
    ADAPTED_FL_FINAL,
    ADAPTED_FL_INTERMEDIATE,
    COMPOSED_A_EXPECTED,
    COMPOSED_D_EXPECTED,
    COMPOSED_FL_EXPECTED,
    COMPOSED_T_EXPECTED,
    DOOR_EXPECTED,
    FACTORY,
    FORKLIFT_EXPECTED,
    SIGMA_COMPOSED,
    SIGMA_WAREHOUSE,
    TRANSPORT_EXPECTED,
    WAREHOUSE,
    ZERO,
)


class TestMachineType:
    def test_roundtrip_json(self):
        machine = project(WAREHOUSE, "D", SIGMA_WAREHOUSE)
        again = Machine.from_json(machine.as_dict())
        assert machines_isomorphic(machine, again)
        assert again.updating == machine.updating

    def test_nondeterministic_acceptance_rejected(self):
        with pytest.raises(MachineError):
            Machine.build("R", "0", [("0", "x", "1"), ("0", "x", "2")])

    def test_unreachable_state_rejected(self):
        with pytest.raises(MachineError):
            Machine.build("R", "0", [("1", "x", "2")], emitters={"1": ["x"]})


class TestProjection:
    def test_door_machine(self):
        door = project(WAREHOUSE, "D", SIGMA_WAREHOUSE)
        assert machines_isomorphic(door, DOOR_EXPECTED)
        assert len(door.states) == 3 and len(door.transitions) == 3
        assert dict(door.emitters)[door.initial] == frozenset({"closingTime"})
        assert door.updating == frozenset({"partReq", "closingTime"})

    def test_transport_machine(self):
        transport = project(WAREHOUSE, "T", SIGMA_WAREHOUSE)
        assert machines_isomorphic(transport, TRANSPORT_EXPECTED)
        assert len(transport.states) == 4 and len(transport.transitions) == 4

    def test_forklift_machine(self):
        forklift = project(WAREHOUSE, "FL", SIGMA_WAREHOUSE)
        assert machines_isomorphic(forklift, FORKLIFT_EXPECTED)
        # the serving state and the served state behave identically, so the
        # canonical machine has three states
        assert len(forklift.states) == 3 and len(forklift.transitions) == 3

    def test_composition_projections(self):
        composed = compose([WAREHOUSE, FACTORY])
        expected = {
            "T": (COMPOSED_T_EXPECTED, 6, 5),
            "D": (COMPOSED_D_EXPECTED, 5, 4),
            "FL": (COMPOSED_FL_EXPECTED, 5, 4),
            "A": (COMPOSED_A_EXPECTED, 7, 7),
        }
        for role, (machine, n_states, n_edges) in expected.items():
            projected = project(composed, role, SIGMA_COMPOSED)
            canonical = canonicalize(machine)
            assert machines_isomorphic(projected, canonical), role
            assert len(canonical.states) == n_states - 1  # two sinks merge
            assert len(projected.states) == len(canonical.states)
            assert len(projected.transitions) == n_edges

    def test_assembly_robot_emits_at_two_states(self):
        composed = compose([WAREHOUSE, FACTORY])
        robot = project(composed, "A", SIGMA_COMPOSED)
        emitting = [s for s, ts in robot.emitters if "car" in ts]
        assert len(emitting) == 2

    def test_empty_protocol(self):
        machine = project(ZERO, "R", Subscription())
        assert len(machine.states) == 1
        assert machine.transitions == ()
        assert machine.emitter_set(machine.initial) == frozenset()

    def test_emitted_types_are_accepted_under_causal_consistency(self):
        composed = compose([WAREHOUSE, FACTORY])
        sigma = generate_subscription([WAREHOUSE, FACTORY]).subscription
        assert check_causal_consistency(composed, sigma, concurrent_pairs(composed)).passed
        for role in ("T", "FL", "D", "A"):
            machine = project(composed, role, sigma)
            for state, types in machine.emitters:
                for t in types:
                    assert machine.accepts(state, t) is not None

    def test_ambiguous_projection_raises(self):
        proto = SwarmProtocol.build(
            "0",
            [
                ("0", "P", "a", "1"),
                ("0", "Q", "b", "2"),
                ("1", "P", "t", "3"),
                ("2", "Q", "t2", "4"),
                ("3", "P", "x", "5"),
                ("4", "Q", "y", "6"),
            ],
        )
        # R observes nothing before t/t2; both silent branches fire x or y
        # into different behaviours
        sigma = Subscription({"R": ["x"], "P": ["a", "t", "x"], "Q": ["b", "t2", "y"]})
        bad = SwarmProtocol.build(
            "0",
            [
                ("0", "P", "a", "1"),
                ("0", "Q", "b", "2"),
                ("1", "P", "t", "3"),
                ("2", "Q", "t", "4"),
                ("3", "P", "x", "5"),
                ("4", "Q", "y", "6"),
            ],
        )
        with pytest.raises(ProjectionAmbiguityError):
            project(bad, "R", Subscription({"R": ["t", "x"]}))
        # the unambiguous variant projects fine
        project(proto, "R", sigma)


class TestComposeMachines:
    def test_self_composition_is_identity(self):
        for role in ("T", "D", "FL"):
            machine = project(WAREHOUSE, role, SIGMA_WAREHOUSE)
            assert machines_isomorphic(compose_machines(machine, machine), machine)

    def test_disjoint_alphabet_with_empty_machine(self):
        machine = project(WAREHOUSE, "D", SIGMA_WAREHOUSE)
        idle = Machine.build("Z", "z", [])
        assert machines_isomorphic(compose_machines(machine, idle), machine)

    def test_projection_distributes_over_composition(self):
        door_f = project(FACTORY, "D", SIGMA_COMPOSED)
        door_w = project(WAREHOUSE, "D", SIGMA_COMPOSED)
        left = compose_machines(door_f, door_w)
        right = project(compose([FACTORY, WAREHOUSE]), "D", SIGMA_COMPOSED)
        assert machines_isomorphic(left, right)

    def test_emitter_set_formula(self):
        rng = random.Random(5)
        for _ in range(20):
            g = random_confusion_free_protocol(rng, max_states=4)
            sigma = exact_subscription([g]).subscription
            roles = sorted(g.roles())
            a = project(g, roles[0], sigma)
            b = project(g, roles[-1], sigma)
            product = compose_machines(a, b)
            for state, kappa in product.emitters:
                accepted = {tr.event_type for tr in product.outgoing(state)}
                assert kappa <= accepted
                union = frozenset()
                for _, ts in list(a.emitters) + list(b.emitters):
                    union |= ts
                assert kappa <= union

    def test_shared_types_synchronise(self):
        composed = compose([WAREHOUSE, FACTORY])
        sigma = generate_subscription([WAREHOUSE, FACTORY]).subscription
        a = project(WAREHOUSE, "T", sigma)
        b = project(FACTORY, "T", sigma)
        product = compose_machines(a, b)
        shared = a.event_types() & b.event_types()
        # replaying any acceptance path of the product, shared moves must be
        # legal in both operands
        for tr in product.transitions:
            assert tr.event_type in a.event_types() | b.event_types()
        assert machines_isomorphic(product, project(composed, "T", sigma))
        assert "partReq" in shared and "partOK" in shared


class TestAdaptation:
    def test_forklift_adaptation_golden(self):
        alg1 = generate_subscription([WAREHOUSE, FACTORY])
        forklift = project(WAREHOUSE, "FL", SIGMA_WAREHOUSE)
        intermediate = compose_machines(
            forklift, project(WAREHOUSE, "FL", alg1.subscription)
        )
        assert machines_isomorphic(intermediate, canonicalize(ADAPTED_FL_INTERMEDIATE))
        final = adapt_machine(
            forklift, [WAREHOUSE, FACTORY], "FL", 0,
            alg1.subscription, alg1.updating.types, alg1.conc,
        )
        assert machines_isomorphic(final, canonicalize(ADAPTED_FL_FINAL))
        assert len(final.states) == 5
        # the wait for the part confirmation exists, the loop back to a
        # second request does not
        canonical = canonicalize(final)
        served = canonical.accepts(
            canonical.accepts(canonical.accepts(canonical.initial, "partReq"), "pos"),
            "partOK",
        )
        assert served is not None
        assert canonical.accepts(served, "partReq") is None
        assert canonical.accepts(served, "closingTime") is not None

    def test_single_protocol_adaptation_is_identity(self):
        sigma = exact_subscription([WAREHOUSE]).subscription
        conc = concurrent_pairs(WAREHOUSE)
        for role in ("T", "D", "FL"):
            machine = project(WAREHOUSE, role, sigma)
            adapted = adapt_machine(
                machine, [WAREHOUSE], role, 0, sigma, machine.updating, conc
            )
            assert machines_isomorphic(adapted, machine)

    def test_adaptation_matches_direct_projection(self):
        alg1 = generate_subscription([WAREHOUSE, FACTORY])
        composed = compose([WAREHOUSE, FACTORY])
        sources = {"T": (WAREHOUSE, 0), "FL": (WAREHOUSE, 0), "D": (WAREHOUSE, 0), "A": (FACTORY, 1)}
        for role, (proto, k) in sources.items():
            original = project(proto, role, SIGMA_WAREHOUSE if k == 0 else SIGMA_COMPOSED)
            adapted = adapt_machine(
                original, [WAREHOUSE, FACTORY], role, k,
                alg1.subscription, alg1.updating.types, alg1.conc,
            )
            assert machines_isomorphic(adapted, project(composed, role, alg1.subscription))

    def test_index_out_of_range(self):
        machine = project(WAREHOUSE, "D", SIGMA_WAREHOUSE)
        with pytest.raises(MachineError):
            adapt_machine(
                machine, [WAREHOUSE], "D", 2, SIGMA_WAREHOUSE, frozenset(), concurrent_pairs(WAREHOUSE)
            )


class TestComposeSwarm:
    def test_warehouse_factory_swarm(self):
        sigma_w = exact_subscription([WAREHOUSE]).subscription
        sigma_f = exact_subscription([FACTORY]).subscription
        warehouse_swarm = [
            (project(WAREHOUSE, "T", sigma_w), "T"),
            (project(WAREHOUSE, "T", sigma_w), "T"),
            (project(WAREHOUSE, "FL", sigma_w), "FL"),
            (project(WAREHOUSE, "D", sigma_w), "D"),
        ]
        factory_swarm = [
            (project(FACTORY, "T", sigma_f), "T"),
            (project(FACTORY, "A", sigma_f), "A"),
        ]
        spec, alg1 = compose_swarm(
            [warehouse_swarm, factory_swarm], [WAREHOUSE, FACTORY], [sigma_w, sigma_f]
        )
        assert len(spec.members) == 6
        composed = compose([WAREHOUSE, FACTORY])
        for member in spec.members:
            direct = project(composed, member.role, alg1.subscription)
            assert machines_isomorphic(member.machine, direct), member.role
            assert member.machine.updating == alg1.updating.types
            assert member.machine.conc == alg1.conc
