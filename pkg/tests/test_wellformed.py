import random

import pytest

from swarmkit import (
    Subscription,
    SwarmProtocol,
    check_causal_consistency,
    check_confusion_free,
    check_determinacy,
    check_well_formed,
    compose,
    concurrent_pairs,
    exact_subscription,
    generate_subscription,
)
from swarmkit.wellformed import ExpansionCapError
from swarmkit import wfrules

from .oracles import (
    random_confusion_free_protocol,
    random_protocol,
    random_subscription,
    removing_any_entry_breaks,
)
from .scenario import (
    ALL_TYPES,
    FACTORY,
    SIGMA_COMPOSED,
    SIGMA_WAREHOUSE,
    WAREHOUSE,
    WAREHOUSE_TYPES,
)


def total_sigma(protocol):
    return Subscription.total(protocol.roles(), protocol.event_types())


class TestConfusionFree:
    def test_composition_with_components(self):
        composed = compose([WAREHOUSE, FACTORY])
        assert check_confusion_free(composed, [WAREHOUSE, FACTORY]).passed

    def test_type_emitted_by_two_roles_fails(self):
        proto = SwarmProtocol.build("0", [("0", "T", "x", "1"), ("1", "FL", "x", "2")])
        report = check_confusion_free(proto)
        assert any(f.check == "confusion-freeness-1" for f in report.failures)

    def test_type_fired_at_two_states_fails_single_component(self):
        proto = SwarmProtocol.build(
            "0", [("0", "T", "x", "1"), ("1", "T", "y", "2"), ("2", "T", "x", "3")]
        )
        report = check_confusion_free(proto)
        fails = [f for f in report.failures if f.check == "confusion-freeness-3"]
        assert fails and set(fails[0].witness[2:]) == {"0", "2"}


class TestCausalConsistency:
    def test_assembly_robot_needs_car_and_part_confirmation(self):
        conc = concurrent_pairs(FACTORY)
        report = check_causal_consistency(FACTORY, Subscription(), conc)
        witnesses = {(f.check, f.witness[:2]) for f in report.failures}
        assert ("causal-consistency-1", ("A", "car")) in witnesses
        assert ("causal-consistency-2", ("A", "partOK")) in witnesses

    def test_total_subscription_passes(self):
        for proto in (WAREHOUSE, FACTORY, compose([WAREHOUSE, FACTORY])):
            report = check_causal_consistency(
                proto, total_sigma(proto), concurrent_pairs(proto)
            )
            assert report.passed

    def test_composed_scenario_subscription_passes(self):
        composed = compose([WAREHOUSE, FACTORY])
        report = check_causal_consistency(
            composed, SIGMA_COMPOSED, concurrent_pairs(composed)
        )
        assert report.passed


class TestDeterminacy:
    def test_composed_with_generated_subscription(self):
        composed = compose([WAREHOUSE, FACTORY])
        sigma = generate_subscription([WAREHOUSE, FACTORY]).subscription
        report, updating = check_determinacy(composed, sigma, concurrent_pairs(composed))
        assert report.passed
        assert {"partReq", "closingTime"} <= updating.types

    def test_warehouse_updating_set(self):
        report, updating = check_determinacy(
            WAREHOUSE, SIGMA_WAREHOUSE, concurrent_pairs(WAREHOUSE)
        )
        assert report.passed
        assert updating.types == frozenset({"partReq", "closingTime"})
        assert dict(updating.provenance)["partReq"] == ("branching", "looping")

    def test_missing_branch_subscription_fails_both_checkers(self):
        sigma = SIGMA_WAREHOUSE.without_entry("T", "closingTime")
        conc = concurrent_pairs(WAREHOUSE)
        report, _ = check_determinacy(WAREHOUSE, sigma, conc)
        assert any(
            f.check == "determinacy-branching" and f.witness[3] == "T"
            for f in report.failures
        )
        assert wfrules.check_dcc(WAREHOUSE, sigma, conc) is False


class TestWellFormed:
    def test_warehouse_scenario_subscription(self):
        report, updating = check_well_formed(WAREHOUSE, SIGMA_WAREHOUSE)
        assert report.passed
        assert updating.types == frozenset({"partReq", "closingTime"})

    def test_total_subscription_on_random_confusion_free(self):
        for seed in range(40):
            proto = random_confusion_free_protocol(random.Random(seed))
            report, _ = check_well_formed(proto, total_sigma(proto))
            assert report.passed, report.failures

    def test_empty_subscription_fails_everywhere(self):
        report, _ = check_well_formed(WAREHOUSE, Subscription())
        missing = {
            f.witness for f in report.failures if f.check == "causal-consistency-1"
        }
        assert missing == {(tr.role, tr.event_type) for tr in WAREHOUSE.transitions}

    def test_rule_checker_agrees_on_random_inputs(self):
        for seed in range(60):
            rng = random.Random(seed)
            proto = random_protocol(rng)
            sigma = random_subscription(rng, proto)
            # raises CheckerDisagreement on any mismatch
            check_well_formed(proto, sigma)


class TestExactSubscription:
    def test_warehouse_minimal_golden(self):
        result = exact_subscription([WAREHOUSE])
        assert result.subscription.as_dict() == {
            "D": ["closingTime", "partOK", "partReq"],
            "FL": ["closingTime", "partReq", "pos"],
            "T": ["closingTime", "partOK", "partReq", "pos"],
        }
        for role in ("T", "FL", "D"):
            assert {"partReq", "closingTime"} <= result.subscription.of(role)
        assert removing_any_entry_breaks(WAREHOUSE, result.subscription)

    def test_contains_inputs_and_is_fixpoint_on_well_formed_input(self):
        start = exact_subscription([WAREHOUSE]).subscription
        again = exact_subscription([WAREHOUSE], [start])
        assert again.subscription == start

    def test_smaller_than_compositional_result(self):
        exact = exact_subscription([WAREHOUSE, FACTORY])
        alg1 = generate_subscription([WAREHOUSE, FACTORY])
        assert exact.subscription.issubset(alg1.subscription)
        assert exact.subscription.size() <= alg1.subscription.size()

    def test_self_verification_runs(self):
        result = exact_subscription([WAREHOUSE, FACTORY])
        report, _ = check_well_formed(
            result.composition, result.subscription, [WAREHOUSE, FACTORY]
        )
        assert report.passed

    def test_closure_iteration_bound(self):
        for seed in range(20):
            protos = [random_confusion_free_protocol(random.Random(seed))]
            result = exact_subscription(protos)
            bound = len(protos[0].roles()) * len(protos[0].event_types()) + 2
            assert result.iterations <= bound

    def test_expansion_cap(self):
        with pytest.raises(ExpansionCapError):
            exact_subscription([WAREHOUSE, FACTORY], cap=3)

    def test_cap_env_override(self, monkeypatch):
        monkeypatch.setenv("SWARMKIT_EXPANSION_CAP", "3")
        with pytest.raises(ExpansionCapError):
            exact_subscription([WAREHOUSE, FACTORY])


class TestRuleHelpers:
    def test_overapprox_conc_contains_exact(self):
        rng = random.Random(7)
        for _ in range(15):
            protos = [random_confusion_free_protocol(rng, max_states=4) for _ in range(2)]
            from swarmkit import check_composable

            if not check_composable(protos).passed:
                continue
            approx = wfrules.overapprox_conc(protos)
            exact = concurrent_pairs(compose(protos))
            assert approx.issuperset(exact)

    def test_component_conc_on_scenario(self):
        approx = wfrules.overapprox_conc([WAREHOUSE, FACTORY])
        assert approx.as_sorted_pairs() == [["car", "closingTime"], ["car", "pos"]]
