"""Domain types shared across the simulator, plus the scalar scoring functions
used by task routing and cluster formation.

All vectors are numpy float64 arrays of a fixed dimension D (one coordinate per
task domain). Every scoring function here is pure: no hidden state, identical
inputs give bit-identical outputs.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .privacy import PrivacyBudget

DEFAULT_DOMAINS = 8
DEFAULT_MEMORY_CAPACITY = 50

# expertise_match variants
MATCH_MAX_MEMBER = "max_member"
MATCH_CENTROID = "centroid"


def as_vector(values, name: str = "vector") -> np.ndarray:
    """Coerce to a 1-D float64 array, rejecting non-finite entries."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} must be finite")
    return v


def _check_unit_interval(v: np.ndarray, name: str) -> np.ndarray:
    if np.any(v < 0.0) or np.any(v > 1.0):
        raise ValueError(f"{name} coordinates must lie in [0, 1]")
    return v


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity; 0.0 when either vector has zero norm."""
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = math.sqrt(float(np.dot(a, a)))
    nb = math.sqrt(float(np.dot(b, b)))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b)) / (na * nb)


@dataclass
class CapabilityProfile:
    """Per-agent expertise over task domains plus abstract resource capacities."""

    expertise: np.ndarray
    cpu: float = 1.0
    memory: float = 1.0
    bandwidth: float = 1.0

    def __post_init__(self):
        self.expertise = _check_unit_interval(as_vector(self.expertise, "expertise"), "expertise")
        for name in ("cpu", "memory", "bandwidth"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0.0):
                raise ValueError(f"{name} must be finite and non-negative")

    @property
    def dimension(self) -> int:
        return self.expertise.shape[0]


@dataclass
class Agent:
    """A simulated worker: expertise profile, committed-load fraction, bounded
    task-history memory, privacy budget, and a position in the unit square."""

    id: int
    profile: CapabilityProfile
    load: float = 0.0
    neighbors: set[int] = field(default_factory=set)
    memory: deque = field(default_factory=lambda: deque(maxlen=DEFAULT_MEMORY_CAPACITY))
    budget: PrivacyBudget | None = None
    position: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not (isinstance(self.id, (int, np.integer)) and self.id >= 0):
            raise ValueError("agent id must be a non-negative integer")
        self.id = int(self.id)
        if not 0.0 <= self.load <= 1.0:
            raise ValueError("load must lie in [0, 1]")

    @property
    def expertise(self) -> np.ndarray:
        return self.profile.expertise

    def record_outcome(self, subtask_key: tuple[int, int], success: bool) -> None:
        # deque maxlen enforces the memory-capacity bound
        self.memory.append((subtask_key, success))


@dataclass
class Subtask:
    """One routable unit of work produced by decomposing a task."""

    parent_id: int
    index: int
    requirement: np.ndarray
    difficulty: float
    workload: float

    def __post_init__(self):
        self.requirement = _check_unit_interval(as_vector(self.requirement, "requirement"), "requirement")
        if not np.any(self.requirement > 0.0):
            raise ValueError("requirement must have at least one positive coordinate")
        if not 0.0 <= self.difficulty <= 1.0:
            raise ValueError("difficulty must lie in [0, 1]")
        if not (math.isfinite(self.workload) and self.workload > 0.0):
            raise ValueError("workload must be positive")

    @property
    def key(self) -> tuple[int, int]:
        return (self.parent_id, self.index)


@dataclass
class Task:
    """A unit of demand arriving at the system; routed after decomposition."""

    id: int
    requirement: np.ndarray
    difficulty: float
    workload: float
    subtasks: list[Subtask] = field(default_factory=list)

    def __post_init__(self):
        self.requirement = _check_unit_interval(as_vector(self.requirement, "requirement"), "requirement")
        if not np.any(self.requirement > 0.0):
            raise ValueError("requirement must have at least one positive coordinate")
        if not 0.0 <= self.difficulty <= 1.0:
            raise ValueError("difficulty must lie in [0, 1]")
        if not (math.isfinite(self.workload) and self.workload > 0.0):
            raise ValueError("workload must be positive")


@dataclass
class Cluster:
    """A self-organized agent group with an elected head and expertise centroid."""

    id: int
    members: list[int]
    head: int
    centroid: np.ndarray

    def __post_init__(self):
        if not self.members:
            raise ValueError("cluster must have at least one member")
        if self.head not in self.members:
            raise ValueError("head must be a member")
        self.centroid = as_vector(self.centroid, "centroid")

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass
class MetaGraph:
    """Complete coordination graph over cluster ids."""

    nodes: list[int]
    edges: list[tuple[int, int]]

    def __post_init__(self):
        n = len(self.nodes)
        if len(self.edges) != n * (n - 1) // 2:
            raise ValueError("meta-graph must be complete over its nodes")


@dataclass
class Weights:
    """Weighting parameters for cluster scoring (alpha, beta, gamma), join
    similarity (lambda1..3 plus threshold theta), and the capability-update
    learning rate eta."""

    alpha: float = 1.0
    beta: float = 0.5
    gamma: float = 0.5
    lambda1: float = 1.0
    lambda2: float = 0.5
    lambda3: float = 0.2
    theta: float = 0.45
    eta: float = 0.1

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "lambda1", "lambda2", "lambda3", "theta", "eta"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite")
        for name in ("alpha", "beta", "gamma", "lambda1", "lambda2", "lambda3"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be non-negative")
        if self.eta <= 0.0:
            raise ValueError("eta must be positive")


def expertise_match(
    cluster: Cluster,
    task: Subtask,
    agents: dict[int, Agent],
    mode: str = MATCH_MAX_MEMBER,
) -> float:
    """How well a cluster covers a subtask's requirement, in [0, 1].

    Default mode takes the best member cosine against the requirement (a
    cluster qualifies if some member can do the work); the centroid mode is
    an ablation alternative comparing the cluster mean instead.
    """
    if not cluster.members:
        raise ValueError("cluster must be non-empty")
    req = task.requirement
    if mode == MATCH_CENTROID:
        if cluster.centroid.shape != req.shape:
            raise ValueError("dimension mismatch between centroid and requirement")
        return cosine(cluster.centroid, req)
    if mode != MATCH_MAX_MEMBER:
        raise ValueError(f"unknown expertise_match mode: {mode!r}")
    best = 0.0
    for aid in cluster.members:
        e = agents[aid].expertise
        if e.shape != req.shape:
            raise ValueError("dimension mismatch between expertise and requirement")
        best = max(best, cosine(e, req))
    return best


def cluster_load(cluster: Cluster, agents: dict[int, Agent]) -> float:
    """Mean committed-load fraction over the cluster's members."""
    if not cluster.members:
        raise ValueError("cluster must be non-empty")
    return sum(agents[aid].load for aid in cluster.members) / len(cluster.members)


def resource_availability(cluster: Cluster, agents: dict[int, Agent]) -> float:
    """Mean idle fraction over members; complements cluster_load exactly."""
    return 1.0 - cluster_load(cluster, agents)


def score(
    cluster: Cluster,
    task: Subtask,
    weights: Weights,
    agents: dict[int, Agent],
    mode: str = MATCH_MAX_MEMBER,
) -> float:
    """Cluster fitness for a subtask: weighted expertise match plus resource
    availability minus load. May be negative."""
    return (
        weights.alpha * expertise_match(cluster, task, agents, mode)
        + weights.beta * resource_availability(cluster, agents)
        - weights.gamma * cluster_load(cluster, agents)
    )


def capability_score(agent: Agent, task: Subtask) -> float:
    """Agent-level fit: requirement-weighted expertise scaled by idle fraction."""
    e = agent.expertise
    if e.shape != task.requirement.shape:
        raise ValueError("dimension mismatch between expertise and requirement")
    return float(np.dot(e, task.requirement)) * (1.0 - agent.load)


def subtask_success(agent: Agent, task: Subtask) -> bool:
    """Deterministic success predicate: demand-weighted expertise per unit of
    L1 requirement must reach the task difficulty."""
    denom = float(np.sum(task.requirement))
    ratio = float(np.dot(agent.expertise, task.requirement)) / denom
    return ratio >= task.difficulty
