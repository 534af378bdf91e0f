"""Synthetic AS topologies with per-AS ROV policies and IXP sessions."""

from __future__ import annotations

import enum
import ipaddress
import json
import random
from collections import defaultdict, deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from ..rpki import Prefix, Vrp

FIXTURE_ORIGIN_A = 212795
FIXTURE_ORIGIN_B = 208162
FIXTURE_P1 = Prefix.parse("45.155.129.0/24")
FIXTURE_P2 = Prefix.parse("45.155.131.0/24")

# address pools for synthetic router IPs and IXP peering LANs (/24 each)
AS_ADDRESS_POOL = int(ipaddress.IPv4Address("20.0.0.0"))
IXP_ADDRESS_POOL = int(ipaddress.IPv4Address("80.0.0.0"))


class ScenarioError(ValueError):
    pass


class AsKind(str, enum.Enum):
    TIER1 = "tier1"
    ISP = "isp"
    STUB = "stub"
    IXP = "ixp"


class RovPolicy(str, enum.Enum):
    NONE = "none"
    STRICT = "strict"
    DEPREFERENCE = "depreference"
    # accepts invalid routes on sessions where the sender is a customer
    SELECTIVE_CUSTOMER = "selective-customer"


class Relationship(str, enum.Enum):
    CUSTOMER_TO_PROVIDER = "c2p"
    PEER_TO_PEER = "p2p"


class IxpSessionKind(str, enum.Enum):
    ROUTESERVER = "routeserver"
    DIRECT = "direct"


@dataclass
class AsNode:
    asn: int
    kind: AsKind
    rov_policy: RovPolicy = RovPolicy.NONE
    router_ips: list[str] = field(default_factory=list)
    hosts_probe: bool = False
    hosts_collector: bool = False
    # peering LAN, IXP nodes only
    lan: Prefix | None = None


@dataclass(frozen=True)
class PeeringSession:
    """BGP session; for c2p, ``a`` is the customer and ``b`` the provider."""

    a: int
    b: int
    relationship: Relationship
    ixp_asn: int | None = None
    ixp_kind: IxpSessionKind | None = None

    def __post_init__(self):
        if self.a == self.b:
            raise ValueError(f"session endpoints must differ ({self.a})")
        if (self.ixp_asn is None) != (self.ixp_kind is None):
            raise ValueError("ixp_asn and ixp_kind must be given together")

    def other(self, asn: int) -> int:
        return self.b if asn == self.a else self.a

    def role_of_neighbor(self, asn: int) -> str:
        """What the far end of the session is to *asn*."""
        if self.relationship is Relationship.PEER_TO_PEER:
            return "peer"
        return "customer" if asn == self.b else "provider"

    @property
    def via_routeserver(self) -> bool:
        return self.ixp_kind is IxpSessionKind.ROUTESERVER


@dataclass(frozen=True)
class ExperimentConfig:
    origin_a: int
    origin_b: int
    prefix_p1: Prefix
    prefix_p2: Prefix
    configuration: str = "A"

    def __post_init__(self):
        if self.origin_a == self.origin_b:
            raise ValueError("the two origins must differ")
        if self.prefix_p1 == self.prefix_p2:
            raise ValueError("the two prefixes must differ")
        if self.configuration not in ("A", "B"):
            raise ValueError(f"configuration must be A or B, got {self.configuration!r}")

    @property
    def prefixes(self) -> tuple[Prefix, Prefix]:
        return (self.prefix_p1, self.prefix_p2)

    @property
    def origins(self) -> tuple[int, int]:
        return (self.origin_a, self.origin_b)

    def vrps(self) -> list[Vrp]:
        """Configuration A authorizes origin_a for p1 and origin_b for p2; B swaps."""
        first, second = self.origins if self.configuration == "A" else self.origins[::-1]
        return [Vrp.of(self.prefix_p1, first), Vrp.of(self.prefix_p2, second)]

    def with_configuration(self, configuration: str) -> "ExperimentConfig":
        return ExperimentConfig(self.origin_a, self.origin_b, self.prefix_p1, self.prefix_p2, configuration)


@dataclass
class Topology:
    nodes: dict[int, AsNode]
    sessions: list[PeeringSession]

    def __post_init__(self):
        self._index()

    def _index(self):
        self.sessions_of: dict[int, list[int]] = defaultdict(list)
        seen = set()
        for idx, s in enumerate(self.sessions):
            for end in (s.a, s.b):
                if end not in self.nodes:
                    raise ScenarioError(f"session {idx} references unknown AS {end}")
                if self.nodes[end].kind is AsKind.IXP:
                    raise ScenarioError(f"session {idx}: IXP {end} cannot be a session endpoint")
            if s.ixp_asn is not None:
                ixp = self.nodes.get(s.ixp_asn)
                if ixp is None or ixp.kind is not AsKind.IXP:
                    raise ScenarioError(f"session {idx}: {s.ixp_asn} is not an IXP node")
            key = (min(s.a, s.b), max(s.a, s.b), s.ixp_kind)
            if key in seen:
                raise ScenarioError(f"session {idx}: duplicate session {s.a}-{s.b} ({s.ixp_kind})")
            seen.add(key)
            self.sessions_of[s.a].append(idx)
            self.sessions_of[s.b].append(idx)
        owner: dict[str, int] = {}
        for node in self.nodes.values():
            if not node.router_ips:
                raise ScenarioError(f"AS{node.asn} has no router IPs")
            for ip in node.router_ips:
                if ip in owner:
                    raise ScenarioError(f"router IP {ip} shared by AS{owner[ip]} and AS{node.asn}")
                owner[ip] = node.asn

    def routing_nodes(self) -> list[int]:
        return sorted(a for a, n in self.nodes.items() if n.kind is not AsKind.IXP)

    def providers_of(self, asn: int) -> list[int]:
        out = []
        for idx in self.sessions_of[asn]:
            s = self.sessions[idx]
            if s.relationship is Relationship.CUSTOMER_TO_PROVIDER and s.a == asn:
                out.append(s.b)
        return sorted(out)

    def customers_of(self, asn: int) -> list[int]:
        out = []
        for idx in self.sessions_of[asn]:
            s = self.sessions[idx]
            if s.relationship is Relationship.CUSTOMER_TO_PROVIDER and s.b == asn:
                out.append(s.a)
        return sorted(out)

    def customer_cone(self, asn: int) -> set[int]:
        cone, todo = {asn}, [asn]
        while todo:
            for c in self.customers_of(todo.pop()):
                if c not in cone:
                    cone.add(c)
                    todo.append(c)
        return cone

    def components(self) -> list[set[int]]:
        adj = defaultdict(set)
        for s in self.sessions:
            adj[s.a].add(s.b)
            adj[s.b].add(s.a)
        left = set(self.routing_nodes())
        comps = []
        while left:
            start = min(left)
            comp, queue = {start}, deque([start])
            while queue:
                for nb in adj[queue.popleft()]:
                    if nb not in comp:
                        comp.add(nb)
                        queue.append(nb)
            comps.append(comp)
            left -= comp
        return comps

    def probes(self) -> list[int]:
        return sorted(a for a, n in self.nodes.items() if n.hosts_probe)

    def collectors(self) -> list[int]:
        return sorted(a for a, n in self.nodes.items() if n.hosts_collector)

    def policy_map(self) -> dict[int, RovPolicy]:
        return {a: self.nodes[a].rov_policy for a in sorted(self.nodes)}


def assign_addresses(nodes: Iterable[AsNode], routers_per_as: int = 4) -> None:
    """Give every node without router IPs its own /24 from the synthetic pools."""
    as_block = ixp_block = 0
    taken = set()
    for n in nodes:
        taken.update(n.router_ips)
    for n in sorted(nodes, key=lambda n: n.asn):
        if n.kind is AsKind.IXP:
            if n.lan is None:
                n.lan = Prefix(IXP_ADDRESS_POOL + 256 * ixp_block, 24)
                ixp_block += 1
            if not n.router_ips:
                n.router_ips = [str(ipaddress.IPv4Address(n.lan.address(i))) for i in range(1, 1 + 2 * routers_per_as)]
        elif not n.router_ips:
            while True:
                block = AS_ADDRESS_POOL + 256 * as_block
                as_block += 1
                ips = [str(ipaddress.IPv4Address(block + i)) for i in range(1, 1 + routers_per_as)]
                if not taken.intersection(ips):
                    break
            n.router_ips = ips


def fig2_topology(as2_policy: RovPolicy = RovPolicy.STRICT) -> tuple[Topology, ExperimentConfig]:
    """Five-AS example: AS1 - AS2 - {t1, AS3 - t2}, probe and collector in AS1."""
    t1, t2 = FIXTURE_ORIGIN_A, FIXTURE_ORIGIN_B
    nodes = [
        AsNode(1, AsKind.STUB, hosts_probe=True, hosts_collector=True),
        AsNode(2, AsKind.TIER1, as2_policy),
        AsNode(3, AsKind.ISP, hosts_collector=True),
        AsNode(t1, AsKind.STUB),
        AsNode(t2, AsKind.STUB),
    ]
    assign_addresses(nodes)
    c2p = Relationship.CUSTOMER_TO_PROVIDER
    sessions = [
        PeeringSession(1, 2, c2p),
        PeeringSession(t1, 2, c2p),
        PeeringSession(3, 2, c2p),
        PeeringSession(t2, 3, c2p),
    ]
    topo = Topology({n.asn: n for n in nodes}, sessions)
    return topo, ExperimentConfig(t1, t2, FIXTURE_P1, FIXTURE_P2, "A")


@dataclass
class GeneratorParams:
    n_ases: int = 500
    n_tier1: int = 8
    isp_fraction: float = 0.25
    max_providers: int = 3
    peer_edge_fraction: float = 0.3
    n_ixps: int = 4
    ixp_member_fraction: float = 0.15
    routeserver_fraction: float = 0.7
    ixp_policy: RovPolicy = RovPolicy.STRICT
    strict_fraction: float = 0.2
    depreference_fraction: float = 0.1
    selective_fraction: float = 0.0
    probe_fraction: float = 0.3
    collector_fraction: float = 0.05
    origin_a: int = FIXTURE_ORIGIN_A
    origin_b: int = FIXTURE_ORIGIN_B
    seed: int = 0

    @classmethod
    def from_dict(cls, data: dict) -> "GeneratorParams":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ScenarioError(f"unknown generator parameters: {sorted(unknown)}")
        params = cls(**data)
        params.ixp_policy = RovPolicy(params.ixp_policy)
        return params


def generate_topology(params: GeneratorParams) -> Topology:
    """Preferential-attachment provider hierarchy with peering and IXPs.

    ASNs 1..n_ases-2 are transit/stub ASes; the two origins are extra stubs
    so the total routing AS count is n_ases. IXPs get ASNs above the range.
    """
    rng = random.Random(params.seed)
    n_regular = params.n_ases - 2
    if n_regular < params.n_tier1 + 1:
        raise ScenarioError("n_ases too small for the requested tier-1 count")
    n_isp = max(1, int(round(params.isp_fraction * n_regular)))
    nodes: dict[int, AsNode] = {}
    sessions: list[PeeringSession] = []
    pairs: set[tuple[int, int]] = set()
    customers = defaultdict(int)
    c2p, p2p = Relationship.CUSTOMER_TO_PROVIDER, Relationship.PEER_TO_PEER

    def link(a, b, rel, ixp=None, kind=None):
        key = (min(a, b), max(a, b))
        if key in pairs:
            return False
        pairs.add(key)
        sessions.append(PeeringSession(a, b, rel, ixp, kind))
        if rel is c2p:
            customers[b] += 1
        return True

    transit: list[int] = []
    for asn in range(1, params.n_tier1 + 1):
        nodes[asn] = AsNode(asn, AsKind.TIER1)
        for other in transit:
            link(other, asn, p2p)
        transit.append(asn)

    def attach(asn):
        k = rng.randint(1, min(params.max_providers, len(transit)))
        weights = [customers[t] + 1 for t in transit]
        chosen = set()
        while len(chosen) < k:
            chosen.add(rng.choices(transit, weights)[0])
        for p in sorted(chosen):
            link(asn, p, c2p)

    for asn in range(params.n_tier1 + 1, params.n_tier1 + 1 + n_isp):
        nodes[asn] = AsNode(asn, AsKind.ISP)
        attach(asn)
        transit.append(asn)
    for asn in range(params.n_tier1 + 1 + n_isp, n_regular + 1):
        nodes[asn] = AsNode(asn, AsKind.STUB)
        attach(asn)
    for origin in (params.origin_a, params.origin_b):
        if origin in nodes:
            raise ScenarioError(f"origin ASN {origin} collides with a generated ASN")
        nodes[origin] = AsNode(origin, AsKind.STUB)
        attach(origin)

    isps = [a for a in transit if nodes[a].kind is AsKind.ISP]
    n_peer = int(params.peer_edge_fraction * params.n_ases)
    for _ in range(n_peer * 4):
        if n_peer <= 0 or len(isps) < 2:
            break
        a, b = rng.sample(isps, 2)
        if link(a, b, p2p):
            n_peer -= 1

    members_pool = sorted(a for a in nodes if nodes[a].kind is not AsKind.TIER1)
    first_ixp = max(n_regular, params.origin_a, params.origin_b) + 1
    for i in range(params.n_ixps):
        ixp_asn = first_ixp + i
        nodes[ixp_asn] = AsNode(ixp_asn, AsKind.IXP, params.ixp_policy)
        k = max(2, int(params.ixp_member_fraction * len(members_pool)))
        members = sorted(rng.sample(members_pool, min(k, len(members_pool))))
        for x in range(len(members)):
            for y in range(x + 1, len(members)):
                if rng.random() < 0.5:
                    continue
                kind = (
                    IxpSessionKind.ROUTESERVER
                    if rng.random() < params.routeserver_fraction
                    else IxpSessionKind.DIRECT
                )
                link(members[x], members[y], p2p, ixp_asn, kind)

    eligible = sorted(
        a for a, n in nodes.items() if n.kind is not AsKind.IXP and a not in (params.origin_a, params.origin_b)
    )
    shuffled = eligible[:]
    rng.shuffle(shuffled)
    n_strict = int(round(params.strict_fraction * len(eligible)))
    n_depref = int(round(params.depreference_fraction * len(eligible)))
    n_sel = int(round(params.selective_fraction * len(eligible)))
    for a in shuffled[:n_strict]:
        nodes[a].rov_policy = RovPolicy.STRICT
    for a in shuffled[n_strict : n_strict + n_depref]:
        nodes[a].rov_policy = RovPolicy.DEPREFERENCE
    for a in shuffled[n_strict + n_depref : n_strict + n_depref + n_sel]:
        nodes[a].rov_policy = RovPolicy.SELECTIVE_CUSTOMER
    for a in rng.sample(eligible, int(round(params.probe_fraction * len(eligible)))):
        nodes[a].hosts_probe = True
    for a in rng.sample(eligible, max(1, int(round(params.collector_fraction * len(eligible))))):
        nodes[a].hosts_collector = True

    assign_addresses(nodes.values())
    return Topology(nodes, sessions)


@dataclass
class Noise:
    unresponsive_prob: float = 0.0
    internal_ip_prob: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("unresponsive_prob", "internal_ip_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be within [0, 1], got {v}")


@dataclass
class Scenario:
    topology: Topology
    experiment: ExperimentConfig
    noise: Noise
    seed: int
    name: str = "scenario"


def _node_from_dict(d: dict, where: str) -> AsNode:
    try:
        node = AsNode(
            asn=int(d["asn"]),
            kind=AsKind(d.get("kind", "isp")),
            rov_policy=RovPolicy(d.get("policy", "none")),
            router_ips=list(d.get("router_ips", [])),
            hosts_probe=bool(d.get("probe", False)),
            hosts_collector=bool(d.get("collector", False)),
            lan=Prefix.parse(d["lan"]) if d.get("lan") else None,
        )
    except (KeyError, ValueError) as exc:
        raise ScenarioError(f"{where}: {exc}") from exc
    for ip in node.router_ips:
        try:
            ipaddress.IPv4Address(ip)
        except ValueError as exc:
            raise ScenarioError(f"{where}: {exc}") from exc
    return node


def _session_from_dict(d: dict, where: str) -> PeeringSession:
    try:
        ixp = d.get("ixp")
        return PeeringSession(
            a=int(d["a"]),
            b=int(d["b"]),
            relationship=Relationship(d.get("rel", "p2p")),
            ixp_asn=int(ixp) if ixp is not None else None,
            ixp_kind=IxpSessionKind(d["ixp_kind"]) if ixp is not None else None,
        )
    except (KeyError, ValueError) as exc:
        raise ScenarioError(f"{where}: {exc}") from exc


def scenario_from_dict(data: dict) -> Scenario:
    seed = int(data.get("seed", 0))
    try:
        noise = Noise(**{**{"seed": seed}, **data.get("noise", {})})
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"noise: {exc}") from exc
    if "generator" in data:
        params = GeneratorParams.from_dict({"seed": seed, **data["generator"]})
        topo = generate_topology(params)
        origins = (params.origin_a, params.origin_b)
    else:
        if "nodes" not in data or "sessions" not in data:
            raise ScenarioError("scenario needs either 'generator' or both 'nodes' and 'sessions'")
        nodes = [_node_from_dict(d, f"nodes[{i}]") for i, d in enumerate(data["nodes"])]
        by_asn = {}
        for i, n in enumerate(nodes):
            if n.asn in by_asn:
                raise ScenarioError(f"nodes[{i}]: duplicate ASN {n.asn}")
            by_asn[n.asn] = n
        assign_addresses(nodes)
        sessions = [_session_from_dict(d, f"sessions[{i}]") for i, d in enumerate(data["sessions"])]
        topo = Topology(by_asn, sessions)
        origins = tuple(data.get("origins", (FIXTURE_ORIGIN_A, FIXTURE_ORIGIN_B)))
    for name, value in (("probes", True), ("collectors", True)):
        for asn in data.get(name, []):
            if asn not in topo.nodes:
                raise ScenarioError(f"{name}: unknown AS {asn}")
            if name == "probes":
                topo.nodes[asn].hosts_probe = value
            else:
                topo.nodes[asn].hosts_collector = value
    prefixes = data.get("prefixes", [str(FIXTURE_P1), str(FIXTURE_P2)])
    try:
        experiment = ExperimentConfig(origins[0], origins[1], Prefix.parse(prefixes[0]), Prefix.parse(prefixes[1]))
    except (ValueError, IndexError) as exc:
        raise ScenarioError(f"origins/prefixes: {exc}") from exc
    for o in experiment.origins:
        if o not in topo.nodes:
            raise ScenarioError(f"origin AS {o} not in topology")
    return Scenario(topo, experiment, noise, seed, data.get("name", "scenario"))


def load_scenario(path: str | Path) -> Scenario:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    try:
        return scenario_from_dict(data)
    except ScenarioError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc


def builtin_scenario(name: str, seed: int = 0) -> Scenario:
    if name == "fig2":
        topo, exp = fig2_topology(RovPolicy.STRICT)
        return Scenario(topo, exp, Noise(seed=seed), seed, "fig2")
    if name == "fig2-none":
        topo, exp = fig2_topology(RovPolicy.NONE)
        return Scenario(topo, exp, Noise(seed=seed), seed, "fig2-none")
    if name == "random":
        params = GeneratorParams(seed=seed)
        topo = generate_topology(params)
        exp = ExperimentConfig(params.origin_a, params.origin_b, FIXTURE_P1, FIXTURE_P2)
        return Scenario(topo, exp, Noise(seed=seed), seed, "random")
    raise ScenarioError(f"unknown built-in scenario {name!r}")
