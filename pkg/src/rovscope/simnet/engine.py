"""Route propagation to a fixed point under Gao-Rexford export rules and ROV."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from ..rpki import Prefix, Verdict, Vrp, validate
from .topology import AsKind, ExperimentConfig, PeeringSession, RovPolicy, Topology

LOCAL_PREF = {"customer": 300, "peer": 200, "provider": 100}
# larger than the local-pref spread, so a depreferenced invalid route never
# beats a non-invalid one regardless of relationship
DEPREFERENCE_PENALTY = 300
ORIGIN_PREF = 1000


class NonConvergence(RuntimeError):
    def __init__(self, prefix: Prefix, rounds: int, oscillating: list[int]):
        self.prefix = prefix
        self.rounds = rounds
        self.oscillating = oscillating
        super().__init__(
            f"no fixed point for {prefix} after {rounds} rounds; "
            f"still changing: {oscillating[:10]}{'...' if len(oscillating) > 10 else ''}"
        )


@dataclass(frozen=True)
class RibEntry:
    prefix: Prefix
    as_path: tuple[int, ...]  # selecting AS first, origin last
    origin: int
    learned_from: int | None  # session index; None when self-originated
    verdict: Verdict
    local_pref: int

    @property
    def next_hop(self) -> int | None:
        return self.as_path[1] if len(self.as_path) > 1 else None


@dataclass
class ConvergedState:
    topology: Topology
    experiment: ExperimentConfig
    vrps: list[Vrp]
    ribs: dict[Prefix, dict[int, RibEntry]]
    rounds: dict[Prefix, int]

    def best(self, asn: int, prefix: Prefix) -> RibEntry | None:
        return self.ribs[prefix].get(asn)


def _exports(topo: Topology, sender: int, entry: RibEntry, session: PeeringSession) -> bool:
    if entry.learned_from is None:
        return True
    learned = topo.sessions[entry.learned_from]
    if learned.role_of_neighbor(sender) == "customer":
        return True
    # peer/provider routes go to customers only
    return session.role_of_neighbor(sender) == "customer"


def _import(
    topo: Topology, receiver: int, sender: int, sidx: int, entry: RibEntry, vrps: list[Vrp]
) -> RibEntry | None:
    if receiver in entry.as_path:
        return None
    session = topo.sessions[sidx]
    verdict = validate(entry.prefix, entry.origin, vrps)
    role = session.role_of_neighbor(receiver)
    pref = LOCAL_PREF[role]
    invalid = verdict is Verdict.INVALID
    if invalid and session.via_routeserver:
        rs_policy = topo.nodes[session.ixp_asn].rov_policy
        if rs_policy in (RovPolicy.STRICT, RovPolicy.SELECTIVE_CUSTOMER):
            return None
        if rs_policy is RovPolicy.DEPREFERENCE:
            pref -= DEPREFERENCE_PENALTY
    policy = topo.nodes[receiver].rov_policy
    if invalid:
        if policy is RovPolicy.STRICT:
            return None
        if policy is RovPolicy.SELECTIVE_CUSTOMER and role != "customer":
            return None
        if policy is RovPolicy.DEPREFERENCE:
            pref -= DEPREFERENCE_PENALTY
    return RibEntry(entry.prefix, (receiver,) + entry.as_path, entry.origin, sidx, verdict, pref)


def _rank(topo: Topology, receiver: int, entry: RibEntry):
    # smaller sorts first: higher local pref, shorter path, lower neighbor ASN, session index
    neighbor = entry.as_path[1] if len(entry.as_path) > 1 else receiver
    return (-entry.local_pref, len(entry.as_path), neighbor, -1 if entry.learned_from is None else entry.learned_from)


def candidates(
    topo: Topology, asn: int, prefix: Prefix, current: dict[int, RibEntry], vrps: list[Vrp], originators: set[int]
) -> list[RibEntry]:
    """All routes *asn* would accept for *prefix* given its neighbors' selections."""
    out = []
    if asn in originators:
        out.append(RibEntry(prefix, (asn,), asn, None, validate(prefix, asn, vrps), ORIGIN_PREF))
    for sidx in topo.sessions_of[asn]:
        session = topo.sessions[sidx]
        sender = session.other(asn)
        entry = current.get(sender)
        if entry is None or not _exports(topo, sender, entry, session):
            continue
        imported = _import(topo, asn, sender, sidx, entry, vrps)
        if imported is not None:
            out.append(imported)
    return out


def _select(topo, asn, prefix, current, vrps, originators) -> RibEntry | None:
    cands = candidates(topo, asn, prefix, current, vrps, originators)
    if not cands:
        return None
    return min(cands, key=lambda e: _rank(topo, asn, e))


def converge_prefix(
    topo: Topology,
    prefix: Prefix,
    originators: Iterable[int],
    vrps: list[Vrp],
    max_rounds: int | None = None,
) -> tuple[dict[int, RibEntry], int]:
    """Best-route iteration for a single prefix until nothing changes.

    Each round sweeps the nodes in ascending ASN order and updates
    selections in place, so later nodes already see earlier nodes' new
    choices. Fully synchronous rounds can flip-flop forever once
    depreferencing breaks the customer-first preference ordering.
    """
    originators = set(originators)
    nodes = topo.routing_nodes()
    cap = max_rounds if max_rounds is not None else 2 * len(nodes)
    current: dict[int, RibEntry] = {}
    for rounds in range(1, cap + 1):
        changed = []
        for asn in nodes:
            best = _select(topo, asn, prefix, current, vrps, originators)
            if best != current.get(asn):
                changed.append(asn)
                if best is None:
                    del current[asn]
                else:
                    current[asn] = best
        if not changed:
            return current, rounds
    raise NonConvergence(prefix, cap, changed)


def converge(
    topo: Topology, experiment: ExperimentConfig, vrps: list[Vrp] | None = None, max_rounds: int | None = None
) -> ConvergedState:
    """Converge both experiment prefixes; both origins announce both prefixes."""
    if vrps is None:
        vrps = experiment.vrps()
    for o in experiment.origins:
        if topo.nodes[o].kind is AsKind.IXP:
            raise ValueError(f"IXP {o} cannot originate routes")
    ribs, rounds = {}, {}
    for prefix in experiment.prefixes:
        ribs[prefix], rounds[prefix] = converge_prefix(topo, prefix, experiment.origins, vrps, max_rounds)
    return ConvergedState(topo, experiment, list(vrps), ribs, rounds)


def forwarding_chain(state: ConvergedState, src: int, prefix: Prefix) -> list[tuple[int, int | None]]:
    """Hop-by-hop walk from *src* following each AS's own selection.

    Returns ``(asn, session index used to reach the next AS)`` pairs; the
    final element has session ``None``. Empty if *src* has no route.
    """
    rib = state.ribs[prefix]
    chain = []
    asn = src
    seen = set()
    while True:
        entry = rib.get(asn)
        if entry is None:
            return chain + [(asn, None)] if chain else []
        if asn in seen:
            raise RuntimeError(f"forwarding loop at AS{asn} for {prefix}")
        seen.add(asn)
        if entry.learned_from is None:
            chain.append((asn, None))
            return chain
        chain.append((asn, entry.learned_from))
        asn = entry.as_path[1]


def is_valley_free(topo: Topology, state: ConvergedState, asn: int, prefix: Prefix) -> bool:
    """Check the export chain behind *asn*'s selection obeys Gao-Rexford."""
    chain = forwarding_chain(state, asn, prefix)
    if not chain:
        return True
    # roles seen walking from the origin towards asn: each step is what the
    # sender is to the receiver
    roles = []
    for (receiver, sidx), _ in zip(chain, chain[1:]):
        roles.append(topo.sessions[sidx].role_of_neighbor(receiver))
    roles.reverse()
    # origin side: customer steps (uphill), at most one peer, then provider steps
    phase = 0
    for role in roles:
        if role == "customer":
            if phase > 0:
                return False
        elif role == "peer":
            if phase > 0:
                return False
            phase = 1
        else:
            phase = 2
    return True
