import ipaddress
import json

import pytest

from rovscope.rpki import Verdict
from rovscope.simnet import (
    FIXTURE_ORIGIN_A as T1,
    FIXTURE_ORIGIN_B as T2,
    FIXTURE_P1 as P1,
    FIXTURE_P2 as P2,
    ExperimentConfig,
    NonConvergence,
    ScenarioError,
    builtin_scenario,
    converge,
    generate_topology,
    load_scenario,
    run_experiment,
)
from rovscope.simnet.emit import emit_control_paths, emit_traceroutes, forwarding_hops
from rovscope.simnet.engine import candidates, forwarding_chain, is_valley_free
from rovscope.simnet.topology import GeneratorParams, Noise, RovPolicy, fig2_topology

from conftest import build_scenario


def test_fig2_without_enforcement_valid_route_for_p1():
    topo, exp = fig2_topology(RovPolicy.NONE)
    state = converge(topo, exp)
    entry = state.best(2, P1)
    assert entry.as_path == (2, T1)
    assert entry.verdict is Verdict.VALID


def test_fig2_without_enforcement_p2_is_hijacked_at_as1_and_as2():
    topo, exp = fig2_topology(RovPolicy.NONE)
    state = converge(topo, exp)
    for asn in (1, 2):
        assert state.best(asn, P2).origin == T1
        assert state.best(asn, P2).verdict is Verdict.INVALID


def test_fig2_strict_as2_protects_as1():
    topo, exp = fig2_topology(RovPolicy.STRICT)
    state = converge(topo, exp)
    assert state.best(1, P1).as_path == (1, 2, T1)
    assert state.best(1, P2).as_path == (1, 2, 3, T2)
    for prefix in (P1, P2):
        assert state.best(1, prefix).verdict is Verdict.VALID
        assert state.best(2, prefix).verdict is Verdict.VALID
    # AS3 does not filter and keeps its customer's invalid announcement
    assert state.best(3, P1).verdict is Verdict.INVALID


def test_fig2_configuration_b_swaps_the_outcome():
    topo, exp = fig2_topology(RovPolicy.STRICT)
    state = converge(topo, exp.with_configuration("B"))
    assert state.best(1, P1).as_path == (1, 2, 3, T2)
    assert state.best(1, P2).as_path == (1, 2, T1)


def test_fig2_control_path_at_collector():
    topo, exp = fig2_topology(RovPolicy.STRICT)
    paths = emit_control_paths(converge(topo, exp), [1])
    assert [p.hops for p in paths if p.prefix == P1] == [(1, 2, T1)]


def _random_states(seeds, **kw):
    for seed in seeds:
        params = GeneratorParams(n_ases=150, seed=seed, **kw)
        topo = generate_topology(params)
        exp = ExperimentConfig(params.origin_a, params.origin_b, P1, P2)
        for config in ("A", "B"):
            yield topo, converge(topo, exp.with_configuration(config))


def test_selected_routes_are_valley_free():
    for topo, state in _random_states(range(3)):
        for prefix in state.experiment.prefixes:
            for asn in state.ribs[prefix]:
                assert is_valley_free(topo, state, asn, prefix)


def test_strict_nodes_never_select_invalid_routes():
    for topo, state in _random_states(range(4), strict_fraction=0.4):
        for prefix, rib in state.ribs.items():
            for asn, entry in rib.items():
                if topo.nodes[asn].rov_policy is RovPolicy.STRICT:
                    assert entry.verdict is not Verdict.INVALID


def test_depreference_selects_invalid_only_without_alternative():
    for topo, state in _random_states(range(4), depreference_fraction=0.4, strict_fraction=0.0):
        origins = set(state.experiment.origins)
        for prefix, rib in state.ribs.items():
            for asn, entry in rib.items():
                if topo.nodes[asn].rov_policy is not RovPolicy.DEPREFERENCE or entry.verdict is not Verdict.INVALID:
                    continue
                cands = candidates(topo, asn, prefix, rib, state.vrps, origins)
                assert all(c.verdict is Verdict.INVALID for c in cands)


def test_selective_customer_accepts_invalid_only_from_customers():
    for topo, state in _random_states(range(4), selective_fraction=0.4, strict_fraction=0.0, depreference_fraction=0.0):
        for prefix, rib in state.ribs.items():
            for asn, entry in rib.items():
                if topo.nodes[asn].rov_policy is not RovPolicy.SELECTIVE_CUSTOMER:
                    continue
                if entry.verdict is Verdict.INVALID and entry.learned_from is not None:
                    session = topo.sessions[entry.learned_from]
                    assert session.role_of_neighbor(asn) == "customer"


def test_origin_in_customer_cone_of_selective_as_leaks_invalid_route():
    scen = build_scenario(
        [
            {"asn": 10, "policy": "selective-customer", "probe": True},
            {"asn": T1, "kind": "stub"},
            {"asn": T2, "kind": "stub"},
            {"asn": 20},
        ],
        [
            {"a": T1, "b": 10, "rel": "c2p"},
            {"a": 10, "b": 20, "rel": "c2p"},
            {"a": T2, "b": 20, "rel": "c2p"},
        ],
    )
    state = converge(scen.topology, scen.experiment)
    # the invalid p2 announcement from the customer T1 is kept
    assert state.best(10, P2).verdict is Verdict.INVALID
    assert state.best(10, P2).origin == T1


def test_non_convergence_is_reported():
    topo, exp = fig2_topology(RovPolicy.STRICT)
    with pytest.raises(NonConvergence) as err:
        converge(topo, exp, max_rounds=1)
    assert err.value.rounds == 1


def test_same_seed_same_artifacts():
    a = builtin_scenario("random", seed=3)
    b = builtin_scenario("random", seed=3)
    ra = run_experiment(a.topology, a.experiment, Noise(0.2, 0.1, 3))
    rb = run_experiment(b.topology, b.experiment, Noise(0.2, 0.1, 3))
    assert ra.traceroutes == rb.traceroutes
    assert ra.control_paths == rb.control_paths


def test_full_unresponsiveness_gives_only_timeouts():
    topo, exp = fig2_topology()
    records = emit_traceroutes(converge(topo, exp), noise=Noise(1.0, 0.0, 1))
    assert records
    assert all(ip == "*" for r in records for run in r["runs"] for ip in run)


def test_three_runs_per_target_per_probe():
    topo, exp = fig2_topology()
    records = emit_traceroutes(converge(topo, exp))
    assert len(records) == 2
    assert all(len(r["runs"]) == 3 for r in records)


def _ixp_scenario(kind, ixp_policy="strict"):
    return build_scenario(
        [
            {"asn": 1, "probe": True},
            {"asn": 2},
            {"asn": 900, "kind": "ixp", "policy": ixp_policy},
            {"asn": T1, "kind": "stub"},
            {"asn": T2, "kind": "stub"},
            {"asn": 5},
        ],
        [
            {"a": 1, "b": 2, "rel": "p2p", "ixp": 900, "ixp_kind": kind},
            {"a": T1, "b": 2, "rel": "c2p"},
            {"a": 2, "b": 5, "rel": "c2p"},
            {"a": 1, "b": 5, "rel": "c2p"},
            {"a": T2, "b": 5, "rel": "c2p"},
        ],
    )


def test_direct_ixp_session_shows_lan_hop_and_carries_invalid():
    scen = _ixp_scenario("direct")
    state = converge(scen.topology, scen.experiment)
    assert forwarding_hops(state, 1, P2) == [1, -900, 2, T1]
    assert state.best(1, P2).verdict is Verdict.INVALID
    lan = scen.topology.nodes[900].lan
    trace = emit_traceroutes(state, [1])[1]["runs"][0]
    assert any(lan.contains_address(int(ipaddress.IPv4Address(ip))) for ip in trace)


def test_strict_routeserver_filters_invalid_routes():
    scen = _ixp_scenario("routeserver")
    state = converge(scen.topology, scen.experiment)
    chain = [a for a, _ in forwarding_chain(state, 1, P2)]
    assert state.best(1, P2).verdict is Verdict.VALID
    assert chain == [1, 5, T2]
    assert forwarding_hops(state, 1, P1) == [1, -900, 2, T1]


def test_scenario_file_errors_carry_location(tmp_path):
    f = tmp_path / "bad.json"
    f.write_text('{"nodes": [\n  {"asn": 1,}\n]}')
    with pytest.raises(ScenarioError, match=r":2:"):
        load_scenario(f)


def test_scenario_rejects_unknown_session_endpoint(tmp_path):
    f = tmp_path / "s.json"
    f.write_text(json.dumps({"nodes": [{"asn": T1}, {"asn": T2}], "sessions": [{"a": T1, "b": 7}]}))
    with pytest.raises(ScenarioError, match="unknown AS 7"):
        load_scenario(f)


def test_unknown_builtin_scenario():
    with pytest.raises(ScenarioError):
        builtin_scenario("nope")
