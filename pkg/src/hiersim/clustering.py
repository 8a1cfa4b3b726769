"""Decentralized cluster formation by threshold sweeps.

Agents start (or resume) in a partition and repeatedly, in ascending-id
order, move to the cluster they are most similar to — if that similarity
strictly beats the threshold theta — else fall back to a singleton. A sweep
with zero membership changes terminates the loop; a round cap bounds it.

Similarity blends three [0,1]-scale terms: cosine alignment with the cluster
centroid, coverage of the centroid's weak coordinates (complementarity), and
mean member latency normalized by the topology diameter. An agent evaluating
its own cluster sees the cluster WITHOUT itself; a singleton's self-value is
defined as theta, so it keeps its singleton unless strictly beaten.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Agent, Cluster, MetaGraph, Weights, cosine
from .simnet import MessageLedger, Topology, pairwise_latency_sum

DEFAULT_MAX_ROUNDS = 25


@dataclass
class ClusteringState:
    """A complete partition of the agent population into clusters."""

    clusters: dict[int, Cluster]
    assignment: dict[int, int]
    round: int = 0

    def validate(self, agents: dict[int, Agent]) -> None:
        """Raise unless the partition invariants hold exactly."""
        seen: set[int] = set()
        for cid, cluster in self.clusters.items():
            if cluster.id != cid:
                raise ValueError("cluster table key must equal cluster id")
            if not cluster.members:
                raise ValueError("empty cluster present")
            if cluster.head not in cluster.members:
                raise ValueError("head must be a member")
            for aid in cluster.members:
                if self.assignment.get(aid) != cid:
                    raise ValueError("assignment table disagrees with membership")
                if aid in seen:
                    raise ValueError("agent in more than one cluster")
                seen.add(aid)
            centroid = np.mean([agents[a].expertise for a in cluster.members], axis=0)
            if not np.allclose(cluster.centroid, centroid, atol=1e-9):
                raise ValueError("stored centroid drifted from member mean")
        if seen != set(agents):
            raise ValueError("partition does not cover the agent population")


def _centroid(member_ids, agents: dict[int, Agent]) -> np.ndarray:
    return np.mean([agents[a].expertise for a in member_ids], axis=0)


def choose_head(member_ids, agents: dict[int, Agent]) -> int:
    """Pure head choice: largest expertise norm, ties to the lowest id."""
    best_norm = -1.0
    best_aid = -1
    for aid in sorted(member_ids):
        norm = float(np.linalg.norm(agents[aid].expertise))
        if norm > best_norm:
            best_norm = norm
            best_aid = aid
    if best_aid < 0:
        raise ValueError("cannot elect a head from an empty member list")
    return best_aid


def elect_head(
    cluster: Cluster,
    agents: dict[int, Agent],
    topology: Topology | None = None,
    ledger: MessageLedger | None = None,
) -> int:
    """Pick the member with the largest expertise norm (ties: lowest id).

    Stands in for a consensus round: when a ledger is supplied, each member
    proposes to every other member, costing m(m-1) election messages.
    """
    if not cluster.members:
        raise ValueError("cluster must be non-empty")
    if ledger is not None:
        m = len(cluster.members)
        if m >= 2:
            if topology is None:
                raise ValueError("topology required to charge election messages")
            pts = topology.position_array(cluster.members)
            ledger.record("election", m * (m - 1), pairwise_latency_sum(pts))
    return choose_head(cluster.members, agents)


def similarity(
    agent: Agent,
    cluster: Cluster,
    agents: dict[int, Agent],
    weights: Weights,
    topology: Topology,
) -> float:
    """Attraction of an agent to a cluster (may be negative).

    lambda1 * cosine(agent, centroid)
    + lambda2 * mean_k max(0, 1 - centroid_k) * expertise_k
    - lambda3 * (mean latency to members / topology diameter)

    Membership is handled per the sweep rule: own singleton returns theta,
    own multi-member cluster is evaluated with the agent excluded.
    """
    members = list(cluster.members)
    if agent.id in members:
        if len(members) == 1:
            return weights.theta
        members = [m for m in members if m != agent.id]
    return _similarity_to_members(agent, members, agents, weights, topology)


def _similarity_to_members(
    agent: Agent,
    member_ids,
    agents: dict[int, Agent],
    weights: Weights,
    topology: Topology,
) -> float:
    centroid = _centroid(member_ids, agents)
    e = agent.expertise
    task_sim = cosine(e, centroid)
    gaps = np.maximum(0.0, 1.0 - centroid)
    complement = float(np.dot(gaps, e)) / e.shape[0]
    diam = topology.diameter
    if diam > 0.0 and weights.lambda3 != 0.0:
        total = sum(topology.latency(agent.id, m) for m in member_ids)
        comm = (total / len(member_ids)) / diam
    else:
        comm = 0.0
    return weights.lambda1 * task_sim + weights.lambda2 * complement - weights.lambda3 * comm


def default_max_cluster_size(n_agents: int) -> int:
    """Size ceiling keeping clusters near sqrt-of-population scale."""
    return math.ceil(4.0 * math.sqrt(n_agents))


def _sweep_loop(
    membership: dict[int, list[int]],
    agents: dict[int, Agent],
    weights: Weights,
    topology: Topology,
    max_rounds: int,
    max_cluster_size: int,
) -> tuple[dict[int, list[int]], int]:
    """Run threshold sweeps until a zero-change sweep or the round cap.

    `membership` maps cluster id -> ordered member ids; mutated in place.
    Returns (membership, sweeps executed).
    """
    assignment = {aid: cid for cid, mids in membership.items() for aid in mids}
    next_cid = max(membership) + 1
    sweeps = 0
    for _ in range(max_rounds):
        sweeps += 1
        changed = False
        for aid in sorted(agents):
            agent = agents[aid]
            own_cid = assignment[aid]
            own_members = membership[own_cid]
            best_cid = None
            best_sim = -math.inf
            for cid in sorted(membership):
                mids = membership[cid]
                if cid == own_cid:
                    if len(mids) == 1:
                        sim = weights.theta
                    else:
                        others = [m for m in mids if m != aid]
                        sim = _similarity_to_members(agent, others, agents, weights, topology)
                else:
                    if len(mids) >= max_cluster_size:
                        continue  # full clusters accept no newcomers
                    sim = _similarity_to_members(agent, mids, agents, weights, topology)
                if sim > best_sim:
                    best_sim = sim
                    best_cid = cid
            if best_sim > weights.theta:
                target = best_cid
            elif len(own_members) == 1:
                target = own_cid  # singleton below threshold stays put
            else:
                # nothing attractive enough: split off into a fresh singleton
                target = next_cid
            if target == own_cid:
                continue
            changed = True
            own_members.remove(aid)
            if not own_members:
                del membership[own_cid]
            if target == next_cid:
                membership[next_cid] = [aid]
                next_cid += 1
            else:
                membership[target].append(aid)
            assignment[aid] = target
        if not changed:
            break
    return membership, sweeps


def _finalize(
    membership: dict[int, list[int]],
    agents: dict[int, Agent],
    sweeps: int,
    topology: Topology,
    ledger: MessageLedger | None,
) -> ClusteringState:
    clusters: dict[int, Cluster] = {}
    assignment: dict[int, int] = {}
    for cid in sorted(membership):
        members = sorted(membership[cid])
        head = choose_head(members, agents)
        clusters[cid] = Cluster(
            id=cid, members=members, head=head, centroid=_centroid(members, agents)
        )
        for aid in members:
            assignment[aid] = cid
        if ledger is not None and len(members) >= 2:
            # consensus confirmation of the head: all-pairs proposal messages
            pts = topology.position_array(members)
            ledger.record("election", len(members) * (len(members) - 1), pairwise_latency_sum(pts))
    return ClusteringState(clusters=clusters, assignment=assignment, round=sweeps)


def form_clusters(
    agents: dict[int, Agent],
    weights: Weights,
    topology: Topology,
    max_rounds: int = DEFAULT_MAX_ROUNDS,
    max_cluster_size: int | None = None,
    ledger: MessageLedger | None = None,
) -> ClusteringState:
    """Build a partition from scratch: every agent starts as a singleton
    cluster (cluster id = agent id), then threshold sweeps run to quiescence.
    """
    if not agents:
        raise ValueError("need at least one agent")
    if max_rounds < 1:
        raise ValueError("max_rounds must be at least 1")
    if not math.isfinite(weights.theta):
        raise ValueError("theta must be finite")
    cap = default_max_cluster_size(len(agents)) if max_cluster_size is None else max_cluster_size
    if cap < 1:
        raise ValueError("max_cluster_size must be at least 1")
    membership = {aid: [aid] for aid in sorted(agents)}
    membership, sweeps = _sweep_loop(membership, agents, weights, topology, max_rounds, cap)
    return _finalize(membership, agents, sweeps, topology, ledger)


def recluster(
    state: ClusteringState,
    agents: dict[int, Agent],
    weights: Weights,
    topology: Topology,
    max_rounds: int = DEFAULT_MAX_ROUNDS,
    max_cluster_size: int | None = None,
    ledger: MessageLedger | None = None,
) -> ClusteringState:
    """Same sweep loop as form_clusters but seeded from an existing partition.

    A partition the sweeps already consider stable comes back unchanged
    (one zero-change sweep); heads are re-elected either way since member
    expertise may have drifted since formation.
    """
    if not state.clusters:
        raise ValueError("state must contain at least one cluster")
    cap = default_max_cluster_size(len(agents)) if max_cluster_size is None else max_cluster_size
    membership = {cid: list(c.members) for cid, c in state.clusters.items()}
    membership, sweeps = _sweep_loop(membership, agents, weights, topology, max_rounds, cap)
    return _finalize(membership, agents, sweeps, topology, ledger)


def build_meta_graph(state: ClusteringState) -> MetaGraph:
    """Complete coordination graph over the current cluster ids."""
    nodes = sorted(state.clusters)
    edges = [(a, b) for i, a in enumerate(nodes) for b in nodes[i + 1 :]]
    return MetaGraph(nodes=nodes, edges=edges)
