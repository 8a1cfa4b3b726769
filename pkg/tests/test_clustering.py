"""Threshold-sweep cluster formation: similarity terms, head election,
partition validity, termination, and reclustering."""

import math

import numpy as np
import pytest

from hiersim import (
    Agent,
    CapabilityProfile,
    Weights,
    build_meta_graph,
    choose_head,
    elect_head,
    form_clusters,
    recluster,
    similarity,
)
from hiersim.clustering import ClusteringState, default_max_cluster_size
from hiersim.core import Cluster
from hiersim.simnet import MessageLedger, Topology, build_topology

# The sweep dynamics is best-response without a potential function: a few
# percent of unconstrained random instances oscillate forever and only the
# round cap stops them (see test_round_cap_terminates_oscillators). This
# family is the first 100 seeds from 3000 whose instances settle on their
# own; the four oscillating seeds in that range are pinned separately.
FAMILY_BASE = 3000
FAMILY_LAST = 3103
OSCILLATING_SEEDS = (3010, 3035, 3060, 3064)
CONVERGENT_SEEDS = tuple(
    s for s in range(FAMILY_BASE, FAMILY_LAST + 1) if s not in OSCILLATING_SEEDS
)


def mk_agent(aid, expertise, pos=(0.0, 0.0)):
    return Agent(id=aid, profile=CapabilityProfile(expertise=np.asarray(expertise, dtype=float)), position=pos)


def random_instance(seed):
    """One seeded instance: n in [2,64] specialist agents over 8 domains,
    random unit-square topology, theta uniform in [0.2, 0.8]."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 65))
    d = 8
    topo = build_topology(n, rng)
    agents = {}
    for i in range(n):
        spec = rng.choice(d, size=2, replace=False)
        e = rng.beta(1.0, 5.0, size=d)
        e[spec] = rng.beta(5.0, 2.0, size=2)
        agents[i] = mk_agent(i, e, topo.positions[i])
    theta = float(rng.uniform(0.2, 0.8))
    return agents, Weights(theta=theta), topo


def partition_of(state):
    return sorted(tuple(c.members) for c in state.clusters.values())


# ---------------------------------------------------------------------------
# similarity


def test_similarity_zero_weights():
    agents = {0: mk_agent(0, [1.0, 0.0]), 1: mk_agent(1, [0.0, 1.0])}
    topo = Topology({0: (0.0, 0.0), 1: (0.5, 0.5)})
    c = Cluster(id=0, members=[1], head=1, centroid=agents[1].expertise)
    w = Weights(lambda1=0.0, lambda2=0.0, lambda3=0.0)
    assert similarity(agents[0], c, agents, w, topo) == 0.0


def test_similarity_cosine_term():
    agents = {0: mk_agent(0, [0.5, 0.5]), 1: mk_agent(1, [0.5, 0.5])}
    topo = Topology({0: (0.0, 0.0), 1: (0.5, 0.5)})
    c = Cluster(id=0, members=[1], head=1, centroid=agents[1].expertise)
    w = Weights(lambda1=1.0, lambda2=0.0, lambda3=0.0)
    assert abs(similarity(agents[0], c, agents, w, topo) - 1.0) < 1e-12


def test_similarity_complementarity_term():
    # gaps of centroid (0,1) are (1,0); dot with expertise (1,0) is 1; /D = 0.5
    agents = {0: mk_agent(0, [1.0, 0.0]), 1: mk_agent(1, [0.0, 1.0])}
    topo = Topology({0: (0.0, 0.0), 1: (0.5, 0.5)})
    c = Cluster(id=0, members=[1], head=1, centroid=agents[1].expertise)
    w = Weights(lambda1=0.0, lambda2=1.0, lambda3=0.0)
    assert abs(similarity(agents[0], c, agents, w, topo) - 0.5) < 1e-12


def test_similarity_own_singleton_is_theta():
    agents = {0: mk_agent(0, [1.0, 0.0]), 1: mk_agent(1, [0.0, 1.0])}
    topo = Topology({0: (0.0, 0.0), 1: (0.5, 0.5)})
    own = Cluster(id=0, members=[0], head=0, centroid=agents[0].expertise)
    w = Weights(theta=0.37)
    assert similarity(agents[0], own, agents, w, topo) == 0.37


def test_similarity_own_cluster_excludes_self():
    # evaluating membership in {0, 1} from agent 0's view must score the
    # cluster as if it were just {1}
    agents = {0: mk_agent(0, [1.0, 0.0]), 1: mk_agent(1, [0.0, 1.0])}
    topo = Topology({0: (0.0, 0.0), 1: (0.5, 0.5)})
    centroid = (agents[0].expertise + agents[1].expertise) / 2
    both = Cluster(id=0, members=[0, 1], head=0, centroid=centroid)
    solo = Cluster(id=1, members=[1], head=1, centroid=agents[1].expertise)
    w = Weights(lambda1=1.0, lambda2=0.5, lambda3=0.2)
    assert similarity(agents[0], both, agents, w, topo) == similarity(agents[0], solo, agents, w, topo)


# ---------------------------------------------------------------------------
# head election


def test_choose_head_examples():
    agents = {
        3: mk_agent(3, [0.9, 0.79]),   # norm ~1.198
        7: mk_agent(7, [0.9, 0.0]),    # norm 0.9
    }
    assert choose_head([3, 7], agents) == 3

    equal = {5: mk_agent(5, [0.6, 0.0]), 2: mk_agent(2, [0.0, 0.6])}
    assert choose_head([5, 2], equal) == 2  # tie -> lowest id

    solo = {4: mk_agent(4, [0.1, 0.1])}
    assert choose_head([4], solo) == 4


def test_elect_head_charges_consensus_messages():
    agents = {i: mk_agent(i, [0.5, 0.5], (0.2 * i, 0.0)) for i in range(3)}
    topo = Topology({i: (0.2 * i, 0.0) for i in range(3)})
    c = Cluster(id=0, members=[0, 1, 2], head=0, centroid=np.array([0.5, 0.5]))
    led = MessageLedger()
    head = elect_head(c, agents, topo, led)
    assert head == 0
    assert led.count("election") == 6  # m(m-1) with m=3
    # without a ledger the choice is the same and nothing is charged
    assert elect_head(c, agents) == 0


# ---------------------------------------------------------------------------
# formation


def test_single_agent_forms_singleton():
    agents = {0: mk_agent(0, [0.5, 0.5])}
    topo = Topology({0: (0.5, 0.5)})
    state = form_clusters(agents, Weights(), topo)
    state.validate(agents)
    assert len(state.clusters) == 1
    (cluster,) = state.clusters.values()
    assert cluster.members == [0] and cluster.head == 0


def test_unreachable_threshold_keeps_singletons():
    # with lambda3 = 0, similarity is at most lambda1 + lambda2
    rng = np.random.default_rng(2)
    topo = build_topology(6, rng)
    agents = {i: mk_agent(i, rng.random(4), topo.positions[i]) for i in range(6)}
    w = Weights(lambda1=1.0, lambda2=0.5, lambda3=0.0, theta=1.6)
    state = form_clusters(agents, w, topo)
    state.validate(agents)
    assert len(state.clusters) == 6
    assert all(len(c.members) == 1 for c in state.clusters.values())


def test_two_specialist_pairs_form_two_clusters():
    topo = Topology({i: (0.1 * i, 0.1 * i) for i in range(4)})
    agents = {
        0: mk_agent(0, [1.0, 0.0], topo.positions[0]),
        1: mk_agent(1, [1.0, 0.0], topo.positions[1]),
        2: mk_agent(2, [0.0, 1.0], topo.positions[2]),
        3: mk_agent(3, [0.0, 1.0], topo.positions[3]),
    }
    w = Weights(lambda1=1.0, lambda2=0.0, lambda3=0.0, theta=0.5)
    state = form_clusters(agents, w, topo)
    state.validate(agents)
    assert partition_of(state) == [(0, 1), (2, 3)]
    assert state.round == 2
    heads = sorted(c.head for c in state.clusters.values())
    assert heads == [0, 2]


def test_seeded_family_settles_within_twenty_sweeps():
    assert len(CONVERGENT_SEEDS) == 100
    worst = 0
    for seed in CONVERGENT_SEEDS:
        agents, weights, topo = random_instance(seed)
        state = form_clusters(agents, weights, topo)
        state.validate(agents)
        assert state.round <= 20, f"seed {seed} took {state.round} sweeps"
        worst = max(worst, state.round)
    assert worst <= 20


def test_round_cap_terminates_oscillators():
    """Instances with no settling point stop at the cap and still deliver a
    valid partition."""
    for seed in OSCILLATING_SEEDS[:2]:
        agents, weights, topo = random_instance(seed)
        state = form_clusters(agents, weights, topo)
        state.validate(agents)
        assert state.round == 25  # default cap reached
        state50 = form_clusters(agents, weights, topo, max_rounds=50)
        state50.validate(agents)
        assert state50.round == 50  # still oscillating; cap is the guarantee


def test_formation_is_deterministic():
    agents, weights, topo = random_instance(3021)
    a = form_clusters(agents, weights, topo)
    b = form_clusters(agents, weights, topo)
    assert partition_of(a) == partition_of(b)
    assert a.round == b.round
    assert {c.id: c.head for c in a.clusters.values()} == {c.id: c.head for c in b.clusters.values()}


def test_argmax_invariant_under_common_scaling():
    for seed in (3001, 3002, 3003):
        agents, weights, topo = random_instance(seed)
        base = form_clusters(agents, weights, topo)
        for s in (0.5, 3.0):
            scaled = Weights(
                lambda1=weights.lambda1 * s,
                lambda2=weights.lambda2 * s,
                lambda3=weights.lambda3 * s,
                theta=weights.theta * s,
            )
            assert partition_of(form_clusters(agents, scaled, topo)) == partition_of(base)


def test_cluster_size_cap():
    assert default_max_cluster_size(4) == 8
    assert default_max_cluster_size(64) == 32
    # three identical agents, cap 2: the third cannot join the full pair and
    # its own singleton never beats theta strictly
    topo = Topology({i: (0.1 * i, 0.0) for i in range(3)})
    agents = {i: mk_agent(i, [1.0, 0.0], topo.positions[i]) for i in range(3)}
    w = Weights(lambda1=1.0, lambda2=0.0, lambda3=0.0, theta=0.45)
    state = form_clusters(agents, w, topo, max_cluster_size=2)
    state.validate(agents)
    assert partition_of(state) == [(0, 1), (2,)]


def test_formation_charges_election_per_multimember_cluster():
    topo = Topology({i: (0.1 * i, 0.1 * i) for i in range(4)})
    agents = {
        0: mk_agent(0, [1.0, 0.0], topo.positions[0]),
        1: mk_agent(1, [1.0, 0.0], topo.positions[1]),
        2: mk_agent(2, [0.0, 1.0], topo.positions[2]),
        3: mk_agent(3, [0.0, 1.0], topo.positions[3]),
    }
    w = Weights(lambda1=1.0, lambda2=0.0, lambda3=0.0, theta=0.5)
    led = MessageLedger()
    form_clusters(agents, w, topo, ledger=led)
    assert led.count("election") == 4  # two clusters of 2, m(m-1) each
    assert led.count() == 4  # sweeps themselves are local decisions


def test_form_clusters_input_validation():
    topo = Topology({0: (0.0, 0.0)})
    agents = {0: mk_agent(0, [0.5])}
    with pytest.raises(ValueError):
        form_clusters({}, Weights(), topo)
    with pytest.raises(ValueError):
        form_clusters(agents, Weights(), topo, max_rounds=0)
    with pytest.raises(ValueError):
        form_clusters(agents, Weights(), topo, max_cluster_size=0)


# ---------------------------------------------------------------------------
# state validation


def test_state_validate_catches_corruption():
    agents, weights, topo = random_instance(3005)
    state = form_clusters(agents, weights, topo)
    state.validate(agents)

    # drifted centroid
    cid = next(iter(state.clusters))
    state.clusters[cid].centroid = state.clusters[cid].centroid + 0.5
    with pytest.raises(ValueError):
        state.validate(agents)

    # missing agent coverage
    state2 = form_clusters(agents, weights, topo)
    extra = dict(agents)
    extra[max(agents) + 1] = mk_agent(max(agents) + 1, [0.5] * 8)
    with pytest.raises(ValueError):
        state2.validate(extra)


# ---------------------------------------------------------------------------
# recluster and meta graph


def _sixteen_agent_instance():
    rng = np.random.default_rng(11)
    topo = build_topology(16, rng)
    agents = {}
    for i in range(16):
        spec = rng.choice(4, size=2, replace=False)  # first-half specialists
        e = rng.beta(1.0, 5.0, size=8)
        e[spec] = rng.beta(5.0, 2.0, size=2)
        agents[i] = mk_agent(i, e, topo.positions[i])
    return agents, topo


def test_recluster_fixed_point_on_stable_population():
    agents, topo = _sixteen_agent_instance()
    w = Weights()
    state = form_clusters(agents, w, topo)
    again = recluster(state, agents, w, topo)
    again.validate(agents)
    assert partition_of(again) == partition_of(state)
    assert again.round == 1  # a single zero-change sweep


def test_recluster_single_agent_unchanged():
    agents = {0: mk_agent(0, [0.5, 0.5])}
    topo = Topology({0: (0.5, 0.5)})
    state = form_clusters(agents, Weights(), topo)
    again = recluster(state, agents, Weights(), topo)
    assert partition_of(again) == [(0,)]


def test_recluster_reacts_to_expertise_shift():
    agents, topo = _sixteen_agent_instance()
    w = Weights()
    state = form_clusters(agents, w, topo)
    before = partition_of(state)
    # half the population swaps its strong and weak domain halves
    for i in range(8):
        e = agents[i].profile.expertise.copy()
        agents[i].profile.expertise = np.concatenate([e[4:], e[:4]])
    shifted = recluster(state, agents, w, topo)
    shifted.validate(agents)
    assert partition_of(shifted) != before


def test_meta_graph_complete_over_clusters():
    agents, weights, topo = random_instance(3007)
    state = form_clusters(agents, weights, topo)
    graph = build_meta_graph(state)
    k = len(state.clusters)
    assert len(graph.nodes) == k
    assert len(graph.edges) == k * (k - 1) // 2
