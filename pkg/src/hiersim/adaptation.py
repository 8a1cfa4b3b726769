"""Capability adaptation from task outcomes, and distillation of aggregated
cluster knowledge back into agent expertise.

The per-task loss is quadratic on the subtask's required domains only; one
update step descends its analytic gradient with learning rate eta, clamped
to the unit hypercube. Knowledge is the complementary signal: the gap
between what a task demanded and what the agent could do, shared (privately)
so cluster mates can close the same gap faster.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Agent, Subtask


@dataclass(frozen=True)
class AdaptationParams:
    eta: float = 0.1   # gradient step size
    mu: float = 0.1    # distillation rate for aggregated knowledge

    def __post_init__(self):
        if not (math.isfinite(self.eta) and self.eta > 0.0):
            raise ValueError("eta must be positive and finite")
        if not (math.isfinite(self.mu) and self.mu >= 0.0):
            raise ValueError("mu must be non-negative and finite")


def _support(requirement: np.ndarray) -> np.ndarray:
    return requirement > 0.0


def task_loss(agent: Agent, subtask: Subtask) -> float:
    """Squared expertise shortfall/overshoot summed over required domains."""
    e = agent.expertise
    r = subtask.requirement
    if e.shape != r.shape:
        raise ValueError("dimension mismatch between expertise and requirement")
    mask = _support(r)
    diff = e[mask] - r[mask]
    return float(np.dot(diff, diff))


def loss_gradient(agent: Agent, subtask: Subtask) -> np.ndarray:
    """Analytic gradient of task_loss in the agent's expertise.

    Coordinate k is 2(expertise_k - requirement_k) where the requirement is
    positive and exactly zero elsewhere.
    """
    e = agent.expertise
    r = subtask.requirement
    if e.shape != r.shape:
        raise ValueError("dimension mismatch between expertise and requirement")
    grad = np.zeros_like(e)
    mask = _support(r)
    grad[mask] = 2.0 * (e[mask] - r[mask])
    return grad


def update_capability(agent: Agent, subtask: Subtask, params: AdaptationParams) -> Agent:
    """One descent step on the task loss; expertise stays in [0,1]^D.

    Resource scalars are untouched — only proficiency adapts.
    """
    grad = loss_gradient(agent, subtask)
    updated = np.clip(agent.expertise - params.eta * grad, 0.0, 1.0)
    agent.profile.expertise = updated
    return agent


def apply_knowledge(agent: Agent, k_agg: np.ndarray, params: AdaptationParams) -> Agent:
    """Distill an aggregated knowledge vector into the agent's expertise."""
    k = np.asarray(k_agg, dtype=np.float64)
    if k.shape != agent.expertise.shape:
        raise ValueError("dimension mismatch between knowledge and expertise")
    agent.profile.expertise = np.clip(agent.expertise + params.mu * k, 0.0, 1.0)
    return agent


def produce_knowledge(agent: Agent, subtask: Subtask) -> np.ndarray:
    """What the agent learned worth sharing: the demand it could not meet.

    Equals (requirement - expertise) on the task's support and zero off it,
    evaluated BEFORE the corresponding capability update. A perfectly fitted
    agent shares the zero vector.
    """
    e = agent.expertise
    r = subtask.requirement
    if e.shape != r.shape:
        raise ValueError("dimension mismatch between expertise and requirement")
    k = np.zeros_like(e)
    mask = _support(r)
    k[mask] = r[mask] - e[mask]
    return k
