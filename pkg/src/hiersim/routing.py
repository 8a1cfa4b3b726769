"""Task decomposition and routing.

The hierarchical router consults candidate cluster heads, picks the cluster
maximizing the weighted fitness score, and lets the winning head pick its
best member. Four baselines bracket it: flat all-pairs selection, a central
coordinator, uniform random assignment, and workload-descending greedy
matching. Every argmax breaks ties toward the lowest id, so all routers are
deterministic given their inputs.

Message accounting (directed sends through the ledger, category "routing"):

* hierarchical — per assigned subtask, 1 query + 1 reply per candidate head,
  1 query + 1 reply per winning-cluster member (the head polls itself too),
  and 1 assignment; a subtask with no candidates costs nothing.
* flat / greedy  — per subtask, query + reply with every agent, then 1 assignment.
* centralized — one status message per agent per call, then 1 assignment per subtask.
* random — 1 assignment per subtask.

Task origins and the central coordinator are external endpoints (latency 0).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .clustering import ClusteringState
from .core import (
    MATCH_MAX_MEMBER,
    Agent,
    Subtask,
    Task,
    Weights,
    capability_score,
    score,
)
from .simnet import MessageLedger, Topology

DEFAULT_CAPACITY = 5.0
DEFAULT_TAU_SUPPORT = 0.1

SubKey = tuple[int, int]  # (parent task id, subtask index)

ROUTERS = ("hierarchical", "flat", "centralized", "random", "greedy")


@dataclass
class Assignment:
    """Outcome of routing a batch of subtasks.

    Every routed subtask key appears either in `assigned` or in `unassigned`,
    never both. `clusters` records the winning cluster per assigned subtask
    (hierarchical router only); `latency` the delivery-hop latency.
    """

    assigned: dict[SubKey, int] = field(default_factory=dict)
    clusters: dict[SubKey, int] = field(default_factory=dict)
    unassigned: list[SubKey] = field(default_factory=list)
    latency: dict[SubKey, float] = field(default_factory=dict)

    def check_partition(self, keys) -> None:
        routed = set(self.assigned) | set(self.unassigned)
        if routed != set(keys) or len(self.unassigned) != len(set(self.unassigned)):
            raise ValueError("subtasks must split exactly between assigned and unassigned")
        if set(self.assigned) & set(self.unassigned):
            raise ValueError("a subtask cannot be both assigned and unassigned")


def decompose(
    task: Task,
    rng: np.random.Generator,
    n_min: int = 1,
    n_max: int = 4,
) -> list[Subtask]:
    """Split a task into subtasks with conserved total workload.

    The number of parts is uniform in [n_min, n_max]. Each part demands a
    random non-empty subset of the parent's required domains, rescaled so
    its largest coordinate is 1; difficulty is inherited; workloads are
    random positive shares summing exactly to the parent workload. A draw
    of one part is the degenerate case: the task passes through whole,
    requirement untouched.
    """
    if task.subtasks:
        raise ValueError("task already decomposed")
    if not 1 <= n_min <= n_max:
        raise ValueError("need 1 <= n_min <= n_max")
    n = int(rng.integers(n_min, n_max + 1))
    if n == 1:
        task.subtasks = [
            Subtask(
                parent_id=task.id,
                index=0,
                requirement=task.requirement.copy(),
                difficulty=task.difficulty,
                workload=task.workload,
            )
        ]
        return task.subtasks
    support = np.flatnonzero(task.requirement > 0.0)
    shares = rng.uniform(0.5, 1.5, size=n)
    shares = shares / shares.sum() * task.workload
    # exact conservation: the last part absorbs the rounding residue
    shares[-1] = task.workload - float(shares[:-1].sum())
    parts: list[Subtask] = []
    for i in range(n):
        k = int(rng.integers(1, len(support) + 1))
        picked = rng.choice(support, size=k, replace=False)
        req = np.zeros_like(task.requirement)
        req[np.sort(picked)] = task.requirement[np.sort(picked)]
        req = req / req.max()
        parts.append(
            Subtask(
                parent_id=task.id,
                index=i,
                requirement=req,
                difficulty=task.difficulty,
                workload=float(shares[i]),
            )
        )
    task.subtasks = parts
    return parts


def candidate_clusters(
    subtask: Subtask,
    state: ClusteringState,
    tau_support: float = DEFAULT_TAU_SUPPORT,
) -> set[int]:
    """Clusters whose centroid covers some required domain at >= tau_support."""
    out = set()
    for cid, cluster in state.clusters.items():
        overlap = (subtask.requirement > 0.0) & (cluster.centroid >= tau_support)
        if bool(overlap.any()):
            out.add(cid)
    return out


def _bump_load(agent: Agent, workload: float, capacity: float) -> None:
    agent.load = min(1.0, agent.load + workload / capacity)


def _check_agents(agents: dict[int, Agent]) -> list[int]:
    if not agents:
        raise ValueError("cannot route without agents")
    return sorted(agents)


def _best_agent(ids, agents: dict[int, Agent], subtask: Subtask) -> int:
    best_aid = -1
    best = -np.inf
    for aid in ids:
        c = capability_score(agents[aid], subtask)
        if c > best:
            best = c
            best_aid = aid
    return best_aid


def route_subtasks_hierarchical(
    subtasks: list[Subtask],
    state: ClusteringState,
    agents: dict[int, Agent],
    weights: Weights,
    topology: Topology,
    ledger: MessageLedger,
    capacity: float = DEFAULT_CAPACITY,
    tau_support: float = DEFAULT_TAU_SUPPORT,
    match_mode: str = MATCH_MAX_MEMBER,
) -> Assignment:
    """Two-stage selection: best candidate cluster by fitness score, then the
    best member inside it by capability. Loads update between subtasks, so a
    later subtask sees the load its siblings just created.
    """
    _check_agents(agents)
    result = Assignment()
    for st in subtasks:
        cands = candidate_clusters(st, state, tau_support)
        if not cands:
            result.unassigned.append(st.key)
            continue
        best_cid = -1
        best_score = -np.inf
        for cid in sorted(cands):
            s = score(state.clusters[cid], st, weights, agents, match_mode)
            if s > best_score:
                best_score = s
                best_cid = cid
        winner = state.clusters[best_cid]
        head = winner.head
        # origin consults each candidate head: query out, reply back (latency 0,
        # the origin is external)
        ledger.record("routing", 2 * len(cands), 0.0)
        # winning head polls every member (itself included) and hears back
        poll_lat = 2.0 * sum(topology.latency(head, m) for m in winner.members)
        ledger.record("routing", 2 * len(winner.members), poll_lat)
        aid = _best_agent(winner.members, agents, st)
        hop = topology.latency(head, aid)
        ledger.record("routing", 1, hop)
        result.assigned[st.key] = aid
        result.clusters[st.key] = best_cid
        result.latency[st.key] = hop
        _bump_load(agents[aid], st.workload, capacity)
    return result


def route_subtasks_flat(
    subtasks: list[Subtask],
    agents: dict[int, Agent],
    topology: Topology,
    ledger: MessageLedger,
    capacity: float = DEFAULT_CAPACITY,
) -> Assignment:
    """Broadcast to everyone per subtask; loads snapshot at entry, applied at
    the end, so sibling subtasks do not see each other's load."""
    ids = _check_agents(agents)
    result = Assignment()
    n = len(ids)
    picks: list[tuple[SubKey, int, float]] = []
    for st in subtasks:
        aid = _best_agent(ids, agents, st)
        ledger.record("routing", 2 * n + 1, 0.0)
        picks.append((st.key, aid, st.workload))
        result.assigned[st.key] = aid
        result.latency[st.key] = 0.0
    for _, aid, workload in picks:
        _bump_load(agents[aid], workload, capacity)
    return result


def route_subtasks_centralized(
    subtasks: list[Subtask],
    agents: dict[int, Agent],
    topology: Topology,
    ledger: MessageLedger,
    capacity: float = DEFAULT_CAPACITY,
) -> Assignment:
    """Same selection as the flat router; the coordinator already holds all
    statuses, so the cost is n status reports per call plus one assignment
    message per subtask."""
    ids = _check_agents(agents)
    ledger.record("routing", len(ids), 0.0)
    result = Assignment()
    picks: list[tuple[int, float]] = []
    for st in subtasks:
        aid = _best_agent(ids, agents, st)
        ledger.record("routing", 1, 0.0)
        picks.append((aid, st.workload))
        result.assigned[st.key] = aid
        result.latency[st.key] = 0.0
    for aid, workload in picks:
        _bump_load(agents[aid], workload, capacity)
    return result


def route_subtasks_random(
    subtasks: list[Subtask],
    agents: dict[int, Agent],
    ledger: MessageLedger,
    rng: np.random.Generator,
    capacity: float = DEFAULT_CAPACITY,
) -> Assignment:
    """Uniform pick per subtask from the seeded stream; one assignment message."""
    ids = _check_agents(agents)
    result = Assignment()
    for st in subtasks:
        aid = ids[int(rng.integers(0, len(ids)))]
        ledger.record("routing", 1, 0.0)
        result.assigned[st.key] = aid
        result.latency[st.key] = 0.0
        _bump_load(agents[aid], st.workload, capacity)
    return result


def route_subtasks_greedy(
    subtasks: list[Subtask],
    agents: dict[int, Agent],
    topology: Topology,
    ledger: MessageLedger,
    capacity: float = DEFAULT_CAPACITY,
) -> Assignment:
    """Heaviest subtask first, each taking the currently best agent; loads
    update between picks (unlike the flat router). Same message envelope as
    the flat router."""
    ids = _check_agents(agents)
    result = Assignment()
    n = len(ids)
    ordered = sorted(subtasks, key=lambda st: -st.workload)
    for st in ordered:
        aid = _best_agent(ids, agents, st)
        ledger.record("routing", 2 * n + 1, 0.0)
        result.assigned[st.key] = aid
        result.latency[st.key] = 0.0
        _bump_load(agents[aid], st.workload, capacity)
    return result


def _require_decomposed(task: Task) -> list[Subtask]:
    if not task.subtasks:
        raise ValueError("task must be decomposed before routing")
    return task.subtasks


def route_hierarchical(task, state, agents, weights, topology, ledger, **kw) -> Assignment:
    return route_subtasks_hierarchical(
        _require_decomposed(task), state, agents, weights, topology, ledger, **kw
    )


def route_flat(task, agents, topology, ledger, **kw) -> Assignment:
    return route_subtasks_flat(_require_decomposed(task), agents, topology, ledger, **kw)


def route_centralized(task, agents, topology, ledger, **kw) -> Assignment:
    return route_subtasks_centralized(_require_decomposed(task), agents, topology, ledger, **kw)


def route_random(task, agents, ledger, rng, **kw) -> Assignment:
    return route_subtasks_random(_require_decomposed(task), agents, ledger, rng, **kw)


def route_greedy(task, agents, topology, ledger, **kw) -> Assignment:
    return route_subtasks_greedy(_require_decomposed(task), agents, topology, ledger, **kw)
