"""hiersim: deterministic simulator for hierarchical decentralized
multi-agent coordination with differentially private knowledge sharing.

The package splits into a library (core types, clustering, routing, privacy,
adaptation, simulated network) and a measurement harness with a CLI that
drives the communication-scaling, privacy-utility, and adaptation
experiments.
"""

__version__ = "0.1.0"

from .adaptation import (
    AdaptationParams,
    apply_knowledge,
    loss_gradient,
    produce_knowledge,
    task_loss,
    update_capability,
)
from .clustering import (
    ClusteringState,
    build_meta_graph,
    choose_head,
    elect_head,
    form_clusters,
    recluster,
    similarity,
)
from .core import (
    Agent,
    CapabilityProfile,
    Cluster,
    MetaGraph,
    Subtask,
    Task,
    Weights,
    capability_score,
    cluster_load,
    cosine,
    expertise_match,
    resource_availability,
    score,
    subtask_success,
)
from .harness import (
    PrivacyConfig,
    RunMetrics,
    ScenarioConfig,
    WeightsConfig,
    adaptation_experiment,
    config_from_dict,
    generate_scenario,
    privacy_sweep,
    run_episode,
    scaling_experiment,
    validate_config,
)
from .privacy import (
    AggregationField,
    PrivacyBudget,
    PrivacyParams,
    clip_to_sensitivity,
    decode_fixed,
    encode_fixed,
    noise_scale,
    privatize,
    secure_aggregate,
)
from .routing import (
    Assignment,
    candidate_clusters,
    decompose,
    route_centralized,
    route_flat,
    route_greedy,
    route_hierarchical,
    route_random,
    route_subtasks_centralized,
    route_subtasks_flat,
    route_subtasks_greedy,
    route_subtasks_hierarchical,
    route_subtasks_random,
)
from .simnet import MessageLedger, Topology, build_topology, knowledge_round, route_via_heads
