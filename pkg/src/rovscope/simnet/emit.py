"""Measurement artifacts from converged simulator state."""

from __future__ import annotations

import hashlib
import ipaddress
import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from ..ingest import TIMEOUT, MeasuredPath, Plane
from ..rpki import Prefix, Vrp, dump_vrps
from .engine import ConvergedState, converge, forwarding_chain
from .topology import AsKind, ExperimentConfig, Noise, RovPolicy, Topology

RUNS_PER_TRACE = 3


def emit_control_paths(state: ConvergedState, collectors: list[int] | None = None) -> list[MeasuredPath]:
    topo = state.topology
    collectors = topo.collectors() if collectors is None else collectors
    out = []
    for c in sorted(collectors):
        for prefix in state.experiment.prefixes:
            entry = state.best(c, prefix)
            if entry is None:
                continue
            out.append(
                MeasuredPath(
                    source_id=str(c),
                    plane=Plane.CONTROL,
                    prefix=prefix,
                    configuration=state.experiment.configuration,
                    hops=entry.as_path,
                    reached_origin=entry.origin,
                    verdict=entry.verdict,
                )
            )
    return out


def probe_id(asn: int) -> str:
    return f"probe-{asn}"


def _stable_seed(*parts) -> int:
    digest = hashlib.sha256("|".join(map(str, parts)).encode()).digest()
    return int.from_bytes(digest[:8], "big")


def forwarding_hops(state: ConvergedState, src: int, prefix: Prefix) -> list[int]:
    """Signed AS/IXP sequence a packet from *src* traverses (IXP ids negative)."""
    topo = state.topology
    hops: list[int] = []
    for asn, sidx in forwarding_chain(state, src, prefix) or [(src, None)]:
        hops.append(asn)
        if sidx is not None and topo.sessions[sidx].ixp_asn is not None:
            hops.append(-topo.sessions[sidx].ixp_asn)
    return hops


def clean_trace(state: ConvergedState, src: int, prefix: Prefix, seed: int) -> list[str]:
    """Router IPs along the forwarding chain before any noise is applied.

    Each AS shows one or two of its routers; an IXP crossing shows the
    receiving member's address on the peering LAN.
    """
    topo = state.topology
    rng = random.Random(_stable_seed(seed, src, prefix, state.experiment.configuration))
    chain = forwarding_chain(state, src, prefix) or [(src, None)]
    ips: list[str] = []
    for i, (asn, sidx) in enumerate(chain):
        routers = topo.nodes[asn].router_ips
        count = min(len(routers), rng.randint(1, 2))
        ips.extend(rng.sample(routers, count))
        if sidx is not None and topo.sessions[sidx].ixp_asn is not None:
            ixp = topo.nodes[topo.sessions[sidx].ixp_asn]
            nxt = chain[i + 1][0]
            ips.append(ixp.router_ips[nxt % len(ixp.router_ips)])
    return ips


def _noisy(ips: list[str], noise: Noise, rng: random.Random) -> list[str]:
    out = []
    for ip in ips:
        r = rng.random()
        if r < noise.unresponsive_prob:
            out.append(TIMEOUT)
        elif r < noise.unresponsive_prob + noise.internal_ip_prob:
            out.append(str(ipaddress.IPv4Address(0x0A000000 + rng.randrange(1, 2**24 - 1))))
        else:
            out.append(ip)
    return out


def emit_traceroutes(state: ConvergedState, probes: list[int] | None = None, noise: Noise | None = None) -> list[dict]:
    """Three-run traceroute records from every probe to both prefixes."""
    topo = state.topology
    probes = topo.probes() if probes is None else probes
    noise = noise or Noise()
    config = state.experiment.configuration
    records = []
    for p in sorted(probes):
        for prefix in state.experiment.prefixes:
            clean = clean_trace(state, p, prefix, noise.seed)
            rng = random.Random(_stable_seed("noise", noise.seed, p, prefix, config))
            runs = [_noisy(clean, noise, rng) for _ in range(RUNS_PER_TRACE)]
            records.append({"probe_id": probe_id(p), "configuration": config, "prefix": str(prefix), "runs": runs})
    return records


@dataclass
class ExperimentArtifacts:
    topology: Topology
    experiment: ExperimentConfig
    vrps_by_configuration: dict[str, list[Vrp]]
    states: dict[str, ConvergedState]
    control_paths: list[MeasuredPath] = field(default_factory=list)
    traceroutes: list[dict] = field(default_factory=list)
    ground_truth: dict[int, RovPolicy] = field(default_factory=dict)

    def write(self, out_dir: str | Path) -> list[Path]:
        return write_artifacts(self, out_dir)


def run_experiment(
    topology: Topology,
    experiment: ExperimentConfig,
    noise: Noise | None = None,
    vrps_by_configuration: dict[str, list[Vrp]] | None = None,
    max_rounds: int | None = None,
) -> ExperimentArtifacts:
    """Both ROA configurations over the same probes and collectors."""
    if vrps_by_configuration is None:
        vrps_by_configuration = {c: experiment.with_configuration(c).vrps() for c in ("A", "B")}
    arts = ExperimentArtifacts(topology, experiment, vrps_by_configuration, {})
    probes, collectors = topology.probes(), topology.collectors()
    for config in ("A", "B"):
        exp = experiment.with_configuration(config)
        state = converge(topology, exp, vrps_by_configuration[config], max_rounds)
        arts.states[config] = state
        arts.control_paths.extend(emit_control_paths(state, collectors))
        arts.traceroutes.extend(emit_traceroutes(state, probes, noise))
    arts.ground_truth = {a: n.rov_policy for a, n in sorted(topology.nodes.items()) if n.kind is not AsKind.IXP}
    return arts


def write_artifacts(arts: ExperimentArtifacts, out_dir: str | Path) -> list[Path]:
    """Write artifacts in the ingest wire formats plus ground truth."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    topo = arts.topology
    written = []

    def path(name):
        p = out / name
        written.append(p)
        return p

    with open(path("traceroutes.jsonl"), "w") as fh:
        for rec in arts.traceroutes:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    with open(path("control_dump.txt"), "w") as fh:
        for mp in arts.control_paths:
            fh.write(f"{mp.configuration},{mp.source_id},{mp.prefix},{' '.join(map(str, mp.hops))}\n")
    with open(path("ip2as.csv"), "w") as fh:
        for asn in sorted(topo.nodes):
            node = topo.nodes[asn]
            if node.kind is AsKind.IXP:
                continue
            for ip in sorted(node.router_ips, key=lambda x: int(ipaddress.IPv4Address(x))):
                fh.write(f"{ip}/32,{asn}\n")
    with open(path("ixp_lans.csv"), "w") as fh:
        for asn in sorted(topo.nodes):
            node = topo.nodes[asn]
            if node.kind is AsKind.IXP:
                fh.write(f"{node.lan},{asn},IXP-{asn}\n")
    path("target_equiv.csv").write_text("")
    for config, vrps in sorted(arts.vrps_by_configuration.items()):
        dump_vrps(vrps, path(f"roas_{config}.csv"))
    exp = arts.experiment
    path("experiment.json").write_text(
        json.dumps(
            {"origins": list(exp.origins), "prefixes": [str(p) for p in exp.prefixes]}, indent=2, sort_keys=True
        )
        + "\n"
    )
    with open(path("ground_truth.csv"), "w") as fh:
        fh.write("asn,policy\n")
        for asn, policy in sorted(arts.ground_truth.items()):
            fh.write(f"{asn},{policy.value}\n")
    with open(path("ground_truth_sessions.csv"), "w") as fh:
        fh.write("a,b,relationship,ixp,ixp_kind\n")
        for s in topo.sessions:
            fh.write(
                f"{s.a},{s.b},{s.relationship.value},{'' if s.ixp_asn is None else s.ixp_asn},"
                f"{'' if s.ixp_kind is None else s.ixp_kind.value}\n"
            )
    with open(path("as_rel.csv"), "w") as fh:
        for s in topo.sessions:
            if s.relationship.value == "c2p":
                fh.write(f"{s.b},{s.a}\n")
    return written
