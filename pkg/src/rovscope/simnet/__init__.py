"""Deterministic BGP/ROV propagation simulator used as measurement ground truth."""

from .emit import (
    ExperimentArtifacts,
    emit_control_paths,
    emit_traceroutes,
    forwarding_hops,
    probe_id,
    run_experiment,
    write_artifacts,
)
from .engine import ConvergedState, NonConvergence, RibEntry, converge, forwarding_chain, is_valley_free
from .topology import (
    FIXTURE_ORIGIN_A,
    FIXTURE_ORIGIN_B,
    FIXTURE_P1,
    FIXTURE_P2,
    AsKind,
    AsNode,
    ExperimentConfig,
    GeneratorParams,
    IxpSessionKind,
    Noise,
    PeeringSession,
    Relationship,
    RovPolicy,
    Scenario,
    ScenarioError,
    Topology,
    assign_addresses,
    builtin_scenario,
    fig2_topology,
    generate_topology,
    load_scenario,
    scenario_from_dict,
)

__all__ = [name for name in dir() if not name.startswith("_")]
