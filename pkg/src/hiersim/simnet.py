"""Deterministic simulated network: geometric topology, a per-round message
ledger, head-relayed delivery, and the all-pairs knowledge-exchange rounds
whose counts drive the communication-scaling experiment.

A message is a unit-cost directed event. Latency is Euclidean distance in the
unit square and only feeds metrics and the clustering cost term; it never
reorders anything. Endpoints given as None model external parties (task
origins, a central coordinator) and contribute zero latency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

CATEGORIES = ("routing", "intra_cluster", "inter_cluster", "election", "knowledge")


@dataclass
class Topology:
    """Agent positions in [0,1]^2; latency(a, b) = Euclidean distance."""

    positions: dict[int, tuple[float, float]]
    _diameter: float | None = field(default=None, repr=False)

    def __post_init__(self):
        for aid, (x, y) in self.positions.items():
            if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
                raise ValueError(f"position of agent {aid} must lie in the unit square")

    def latency(self, a: int | None, b: int | None) -> float:
        if a is None or b is None:
            return 0.0
        xa, ya = self.positions[a]
        xb, yb = self.positions[b]
        return math.hypot(xa - xb, ya - yb)

    def position_array(self, ids) -> np.ndarray:
        return np.array([self.positions[i] for i in ids], dtype=np.float64)

    @property
    def diameter(self) -> float:
        """Max pairwise latency; cached after first computation."""
        if self._diameter is None:
            if len(self.positions) < 2:
                self._diameter = 0.0
            else:
                pts = self.position_array(sorted(self.positions))
                # pairwise distance matrix; fine for the n <= ~1024 scales used here
                d = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2))
                self._diameter = float(d.max())
        return self._diameter


def build_topology(n: int, rng: np.random.Generator) -> Topology:
    if n < 1:
        raise ValueError("need at least one agent")
    pts = rng.random((n, 2))
    return Topology({i: (float(pts[i, 0]), float(pts[i, 1])) for i in range(n)})


def pairwise_latency_sum(points: np.ndarray) -> float:
    """Sum of latencies over all ordered pairs (i, j), i != j."""
    m = points.shape[0]
    if m < 2:
        return 0.0
    d = np.sqrt(((points[:, None, :] - points[None, :, :]) ** 2).sum(axis=2))
    return float(d.sum())  # diagonal is zero; off-diagonal covers both directions


class MessageLedger:
    """Directed-message counters keyed by (round, category), plus latency sums.

    Counters only ever grow; `round` is advanced by the simulation loop.
    """

    def __init__(self):
        self.round = 0
        self._counts: dict[tuple[int, str], int] = {}
        self._latency: dict[tuple[int, str], float] = {}

    def set_round(self, r: int) -> None:
        if r < self.round:
            raise ValueError("round must not decrease")
        self.round = r

    def send(self, topology: Topology, src: int | None, dst: int | None, category: str) -> None:
        self.record(category, 1, topology.latency(src, dst))

    def record(self, category: str, count: int, latency_sum: float = 0.0) -> None:
        """Bulk entry point; equivalent to `count` sends totalling latency_sum."""
        if category not in CATEGORIES:
            raise KeyError(f"unknown message category: {category!r}")
        if count < 0 or latency_sum < 0.0:
            raise ValueError("counts and latencies are non-negative")
        key = (self.round, category)
        self._counts[key] = self._counts.get(key, 0) + count
        self._latency[key] = self._latency.get(key, 0.0) + latency_sum

    def count(self, category: str | None = None) -> int:
        if category is None:
            return sum(self._counts.values())
        return sum(v for (_, cat), v in self._counts.items() if cat == category)

    def latency_sum(self, category: str | None = None) -> float:
        if category is None:
            return sum(self._latency.values())
        return sum(v for (_, cat), v in self._latency.items() if cat == category)

    def totals_by_category(self) -> dict[str, int]:
        out = {cat: 0 for cat in CATEGORIES}
        for (_, cat), v in self._counts.items():
            out[cat] += v
        return out

    def latency_by_category(self) -> dict[str, float]:
        out = {cat: 0.0 for cat in CATEGORIES}
        for (_, cat), v in self._latency.items():
            out[cat] += v
        return out

    def rows(self) -> list[tuple[int, str, int, float]]:
        """Stable (round, category, count, latency_sum) rows for serialization."""
        return [
            (r, cat, self._counts[(r, cat)], self._latency[(r, cat)])
            for (r, cat) in sorted(self._counts)
        ]


def route_via_heads(
    ledger: MessageLedger,
    topology: Topology,
    state,
    src: int,
    dst: int,
) -> int:
    """Deliver one payload from src to dst through the cluster-head overlay.

    Same cluster: one direct intra-cluster send. Different clusters: up the
    src head, across heads, down to dst — hops where an endpoint already is
    the relevant head are skipped, so 1-3 sends total. Returns the hop count.
    """
    src_cid = state.assignment[src]
    dst_cid = state.assignment[dst]
    if src_cid == dst_cid:
        ledger.send(topology, src, dst, "intra_cluster")
        return 1
    src_head = state.clusters[src_cid].head
    dst_head = state.clusters[dst_cid].head
    hops = 0
    if src != src_head:
        ledger.send(topology, src, src_head, "intra_cluster")
        hops += 1
    ledger.send(topology, src_head, dst_head, "inter_cluster")
    hops += 1
    if dst != dst_head:
        ledger.send(topology, dst_head, dst, "intra_cluster")
        hops += 1
    return hops


def knowledge_round(
    ledger: MessageLedger,
    topology: Topology,
    state,
) -> tuple[int, int]:
    """Charge one hierarchical knowledge exchange: all ordered member pairs
    inside each cluster, then all ordered head pairs across clusters.

    Everything lands in the ledger's `knowledge` category (it is one logical
    exchange); the (intra, inter) split is returned for scaling metrics.
    The total is exactly sum_k m_k(m_k-1) + |C|(|C|-1).
    """
    intra = 0
    for cid in sorted(state.clusters):
        members = state.clusters[cid].members
        m = len(members)
        if m >= 2:
            pts = topology.position_array(members)
            ledger.record("knowledge", m * (m - 1), pairwise_latency_sum(pts))
            intra += m * (m - 1)
    heads = [state.clusters[cid].head for cid in sorted(state.clusters)]
    c = len(heads)
    inter = c * (c - 1)
    if c >= 2:
        pts = topology.position_array(heads)
        ledger.record("knowledge", inter, pairwise_latency_sum(pts))
    return intra, inter


def knowledge_round_flat(ledger: MessageLedger, topology: Topology, agent_ids) -> int:
    """Flat baseline envelope: every agent exchanges with every other agent."""
    ids = sorted(agent_ids)
    n = len(ids)
    total = n * (n - 1)
    if n >= 2:
        pts = topology.position_array(ids)
        ledger.record("knowledge", total, pairwise_latency_sum(pts))
    return total


def knowledge_round_centralized(ledger: MessageLedger, topology: Topology, agent_ids) -> int:
    """Centralized envelope: up to the coordinator and back down — 2n sends.

    The coordinator is an external party (no position), so latency is zero.
    """
    n = len(list(agent_ids))
    total = 2 * n
    if n:
        ledger.record("knowledge", total, 0.0)
    return total
