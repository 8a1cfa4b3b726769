"""Scenario generation, the simulation round loop, and the experiments.

A run proceeds in synchronous rounds. Each round: (1) newly released tasks are
decomposed and routed together with any retries; (2) every assigned subtask
burns one workload unit, and exhausted subtasks resolve — success predicate,
outcome memory, knowledge production, capability update, load release;
(3) on knowledge-period boundaries agents share privately: clip, charge the
budget (refusals sit the round out), add calibrated noise, aggregate under
pairwise masks per group, exchange aggregates across heads, and distill the
result into everyone's expertise; (4) on recluster-period boundaries the
partition re-forms from its current shape.

Experiments: a communication-scaling sweep over population sizes, a
privacy-utility sweep over epsilon, and a domain-shift adaptation study.
Sweeps may fan out over processes; results are keyed and sorted so the output
is byte-identical regardless of worker count.
"""

from __future__ import annotations

import math
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .adaptation import AdaptationParams, apply_knowledge, produce_knowledge, task_loss, update_capability
from .clustering import (
    ClusteringState,
    build_meta_graph,
    choose_head,
    form_clusters,
    recluster,
)
from .core import (
    MATCH_CENTROID,
    MATCH_MAX_MEMBER,
    Agent,
    CapabilityProfile,
    Cluster,
    Task,
    Weights,
    subtask_success,
)
from .privacy import (
    DEFAULT_PRIME,
    DEFAULT_SCALE,
    AggregationField,
    PrivacyBudget,
    PrivacyParams,
    clip_to_sensitivity,
    is_probable_prime,
    privatize,
    secure_aggregate,
)
from .routing import (
    ROUTERS,
    route_subtasks_centralized,
    route_subtasks_flat,
    route_subtasks_greedy,
    route_subtasks_hierarchical,
    route_subtasks_random,
    decompose,
)
from .simnet import (
    MessageLedger,
    Topology,
    build_topology,
    knowledge_round,
    knowledge_round_centralized,
    knowledge_round_flat,
)

SCALING_ROUTERS = ("hierarchical", "flat", "centralized")


class ConfigError(ValueError):
    """A configuration field failed validation; `.field` names the culprit."""

    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


@dataclass
class WeightsConfig:
    alpha: float = 1.0
    beta: float = 0.5
    gamma: float = 0.5
    lambda1: float = 1.0
    lambda2: float = 0.5
    lambda3: float = 0.2
    theta: float = 0.45
    eta: float = 0.1
    mu: float = 0.1


@dataclass
class PrivacyConfig:
    epsilon_per_event: float = 1.0
    delta_per_event: float = 1e-5
    epsilon_max: float = 10.0
    delta_max: float = 1e-3
    sensitivity: float = 1.0
    prime: int = DEFAULT_PRIME
    scale: int = DEFAULT_SCALE


@dataclass
class ScenarioConfig:
    """Everything a run needs; `seed` and `n_agents` have no defaults on
    purpose — reproducibility requires an explicit seed."""

    seed: int
    n_agents: int
    n_domains: int = 8
    rounds: int = 50
    router: str = "hierarchical"
    capacity: float = 5.0
    tau_support: float = 0.1
    max_cluster_size: int | None = None
    max_cluster_rounds: int = 25
    memory_capacity: int = 50
    tasks_per_round: int = 2
    task_domains_min: int = 1
    task_domains_max: int = 3
    difficulty_min: float = 0.2
    difficulty_max: float = 0.7
    workload_min: float = 1.0
    workload_max: float = 3.0
    decompose_min: int = 1
    decompose_max: int = 4
    retry_limit: int = 1
    knowledge_period: int = 5
    recluster_period: int = 20
    domain_shift_round: int | None = None
    match_mode: str = MATCH_MAX_MEMBER
    weights: WeightsConfig = field(default_factory=WeightsConfig)
    privacy: PrivacyConfig = field(default_factory=PrivacyConfig)

    def to_dict(self) -> dict:
        return asdict(self)


def config_from_dict(data: dict) -> ScenarioConfig:
    """Build a config from parsed JSON, rejecting unknown keys. Values are
    not validated here — validate_config gives field-level diagnostics."""
    if not isinstance(data, dict):
        raise ConfigError("config", "must be a JSON object")
    top_fields = {f.name for f in fields(ScenarioConfig)}
    for key in sorted(data):
        if key not in top_fields:
            raise ConfigError(key, "unknown configuration key")
    for name in ("seed", "n_agents"):
        if name not in data:
            raise ConfigError(name, "required (no default)")
    kwargs = dict(data)
    for name, cls in (("weights", WeightsConfig), ("privacy", PrivacyConfig)):
        if name in kwargs:
            sub = kwargs[name]
            if not isinstance(sub, dict):
                raise ConfigError(name, "must be a JSON object")
            known = {f.name for f in fields(cls)}
            for key in sorted(sub):
                if key not in known:
                    raise ConfigError(f"{name}.{key}", "unknown configuration key")
            kwargs[name] = cls(**sub)
    return ScenarioConfig(**kwargs)


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return (_is_int(v) or isinstance(v, float)) and not (isinstance(v, float) and math.isnan(v))


def validate_config(cfg: ScenarioConfig) -> None:
    """Raise ConfigError naming the first violated field."""

    def need(cond: bool, name: str, msg: str) -> None:
        if not cond:
            raise ConfigError(name, msg)

    need(_is_int(cfg.seed) and cfg.seed >= 0, "seed", "must be a non-negative integer")
    need(_is_int(cfg.n_agents) and cfg.n_agents >= 1, "n_agents", "must be a positive integer")
    need(_is_int(cfg.n_domains) and cfg.n_domains >= 1, "n_domains", "must be a positive integer")
    need(_is_int(cfg.rounds) and cfg.rounds >= 0, "rounds", "must be a non-negative integer")
    need(cfg.router in ROUTERS, "router", f"must be one of {', '.join(ROUTERS)}")
    need(_is_num(cfg.capacity) and math.isfinite(cfg.capacity) and cfg.capacity > 0,
         "capacity", "must be positive and finite")
    need(_is_num(cfg.tau_support) and 0.0 <= cfg.tau_support <= 1.0,
         "tau_support", "must lie in [0, 1]")
    need(cfg.max_cluster_size is None or (_is_int(cfg.max_cluster_size) and cfg.max_cluster_size >= 1),
         "max_cluster_size", "must be null or a positive integer")
    need(_is_int(cfg.max_cluster_rounds) and cfg.max_cluster_rounds >= 1,
         "max_cluster_rounds", "must be a positive integer")
    need(_is_int(cfg.memory_capacity) and cfg.memory_capacity >= 0,
         "memory_capacity", "must be a non-negative integer")
    need(_is_int(cfg.tasks_per_round) and cfg.tasks_per_round >= 0,
         "tasks_per_round", "must be a non-negative integer")
    need(_is_int(cfg.task_domains_min) and cfg.task_domains_min >= 1,
         "task_domains_min", "must be a positive integer")
    need(_is_int(cfg.task_domains_max) and cfg.task_domains_min <= cfg.task_domains_max <= cfg.n_domains,
         "task_domains_max", "must satisfy task_domains_min <= max <= n_domains")
    need(_is_num(cfg.difficulty_min) and 0.0 <= cfg.difficulty_min <= 1.0,
         "difficulty_min", "must lie in [0, 1]")
    need(_is_num(cfg.difficulty_max) and cfg.difficulty_min <= cfg.difficulty_max <= 1.0,
         "difficulty_max", "must satisfy difficulty_min <= max <= 1")
    need(_is_num(cfg.workload_min) and math.isfinite(cfg.workload_min) and cfg.workload_min > 0,
         "workload_min", "must be positive and finite")
    need(_is_num(cfg.workload_max) and math.isfinite(cfg.workload_max) and cfg.workload_min <= cfg.workload_max,
         "workload_max", "must be finite and >= workload_min")
    need(_is_int(cfg.decompose_min) and cfg.decompose_min >= 1,
         "decompose_min", "must be a positive integer")
    need(_is_int(cfg.decompose_max) and cfg.decompose_min <= cfg.decompose_max,
         "decompose_max", "must be >= decompose_min")
    need(_is_int(cfg.retry_limit) and cfg.retry_limit >= 0,
         "retry_limit", "must be a non-negative integer")
    need(_is_int(cfg.knowledge_period) and cfg.knowledge_period >= 0,
         "knowledge_period", "must be a non-negative integer (0 disables sharing)")
    need(_is_int(cfg.recluster_period) and cfg.recluster_period >= 0,
         "recluster_period", "must be a non-negative integer (0 disables reclustering)")
    if cfg.domain_shift_round is not None:
        need(_is_int(cfg.domain_shift_round) and cfg.domain_shift_round >= 1,
             "domain_shift_round", "must be null or a positive integer")
        need(cfg.n_domains >= 2, "domain_shift_round", "requires n_domains >= 2")
        need(cfg.task_domains_max <= cfg.n_domains // 2,
             "task_domains_max", "must be <= n_domains // 2 when a domain shift is configured")
    need(cfg.match_mode in (MATCH_MAX_MEMBER, MATCH_CENTROID),
         "match_mode", f"must be '{MATCH_MAX_MEMBER}' or '{MATCH_CENTROID}'")

    w = cfg.weights
    for name in ("alpha", "beta", "gamma", "lambda1", "lambda2", "lambda3"):
        v = getattr(w, name)
        need(_is_num(v) and math.isfinite(v) and v >= 0.0,
             f"weights.{name}", "must be non-negative and finite")
    need(_is_num(w.theta) and math.isfinite(w.theta), "weights.theta", "must be a finite number")
    need(_is_num(w.eta) and math.isfinite(w.eta) and w.eta > 0.0, "weights.eta", "must be positive and finite")
    need(_is_num(w.mu) and math.isfinite(w.mu) and w.mu >= 0.0, "weights.mu", "must be non-negative and finite")

    p = cfg.privacy
    need(_is_num(p.epsilon_per_event) and p.epsilon_per_event > 0.0,
         "privacy.epsilon_per_event", "must be positive (infinity allowed)")
    need(_is_num(p.delta_per_event) and 0.0 < p.delta_per_event < 1.0,
         "privacy.delta_per_event", "must lie in (0, 1)")
    need(_is_num(p.epsilon_max) and p.epsilon_max > 0.0,
         "privacy.epsilon_max", "must be positive (infinity allowed)")
    need(_is_num(p.delta_max) and p.delta_max > 0.0 and (math.isinf(p.delta_max) or p.delta_max < 1.0),
         "privacy.delta_max", "must lie in (0, 1) or be infinite")
    need(_is_num(p.sensitivity) and math.isfinite(p.sensitivity) and p.sensitivity > 0.0,
         "privacy.sensitivity", "must be positive and finite")
    need(_is_int(p.prime) and is_probable_prime(p.prime) and p.prime < 2**62,
         "privacy.prime", "must be a prime below 2**62")
    need(_is_int(p.scale) and p.scale > 0, "privacy.scale", "must be a positive integer")
    need(cfg.n_agents * p.sensitivity * p.scale < p.prime / 2,
         "privacy.prime", "too small: n_agents * sensitivity * scale must stay below prime/2")


@dataclass
class RoundRow:
    """One metrics.csv row."""

    round: int
    tasks_released: int
    subtasks_created: int
    completed: int
    succeeded: int
    failed: int
    abandoned: int
    completion_rate: float
    mean_task_loss: float
    cluster_count: int
    messages: int
    latency_sum: float


@dataclass
class RunMetrics:
    rounds: int
    subtasks_created: int
    succeeded: int
    failed: int
    abandoned: int
    completion_rate: float
    unassigned_rate: float
    total_messages: int
    messages_by_category: dict[str, int]
    latency_by_category: dict[str, float]
    mean_task_latency: float
    knowledge_intra: int
    knowledge_inter: int
    epsilon_spent: dict[int, float]
    delta_spent: dict[int, float]
    epsilon_spent_mean: float
    delta_spent_mean: float
    task_loss_trajectory: list[float]
    cluster_count_trajectory: list[int]
    per_round: list[RoundRow]
    final_cluster_count: int
    ledger_rows: list[tuple[int, str, int, float]]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["epsilon_spent"] = {str(k): v for k, v in self.epsilon_spent.items()}
        d["delta_spent"] = {str(k): v for k, v in self.delta_spent.items()}
        d["ledger_rows"] = [list(row) for row in self.ledger_rows]
        return d


def generate_scenario(config: ScenarioConfig):
    """Draw the agent population, topology, and full task schedule.

    Everything comes from one generator substream, so the scenario is a pure
    function of the seed. With a domain shift configured, agents specialize
    in (and pre-shift tasks demand) the first half of the domains; from the
    shift round on, tasks demand the second half only.
    """
    validate_config(config)
    rng = np.random.default_rng([config.seed, 0])
    topo = build_topology(config.n_agents, rng)
    d = config.n_domains
    if config.domain_shift_round is not None:
        pool_pre = np.arange(d // 2)
        pool_post = np.arange(d // 2, d)
    else:
        pool_pre = pool_post = np.arange(d)

    agents: dict[int, Agent] = {}
    for i in range(config.n_agents):
        n_spec = min(2, len(pool_pre))
        spec = np.sort(rng.choice(pool_pre, size=n_spec, replace=False))
        expertise = rng.beta(1.0, 5.0, size=d)
        expertise[spec] = rng.beta(5.0, 2.0, size=n_spec)
        agents[i] = Agent(
            id=i,
            profile=CapabilityProfile(expertise=expertise),
            memory=deque(maxlen=config.memory_capacity),
            budget=PrivacyBudget(config.privacy.epsilon_max, config.privacy.delta_max),
            position=topo.positions[i],
        )

    schedule: list[list[Task]] = []
    tid = 0
    for r in range(config.rounds):
        shifted = config.domain_shift_round is not None and r >= config.domain_shift_round
        pool = pool_post if shifted else pool_pre
        released: list[Task] = []
        for _ in range(config.tasks_per_round):
            width = int(rng.integers(config.task_domains_min, config.task_domains_max + 1))
            doms = np.sort(rng.choice(pool, size=width, replace=False))
            req = np.zeros(d)
            req[doms] = rng.uniform(0.5, 1.0, size=width)
            released.append(
                Task(
                    id=tid,
                    requirement=req,
                    difficulty=float(rng.uniform(config.difficulty_min, config.difficulty_max)),
                    workload=float(rng.uniform(config.workload_min, config.workload_max)),
                )
            )
            tid += 1
        schedule.append(released)
    return agents, topo, schedule


def _balanced_state(agents: dict[int, Agent]) -> ClusteringState:
    """Forced partition into consecutive-id clusters of size ceil(sqrt(n))."""
    ids = sorted(agents)
    size = math.ceil(math.sqrt(len(ids)))
    clusters: dict[int, Cluster] = {}
    assignment: dict[int, int] = {}
    for cid, start in enumerate(range(0, len(ids), size)):
        members = ids[start : start + size]
        centroid = np.mean([agents[a].expertise for a in members], axis=0)
        clusters[cid] = Cluster(
            id=cid, members=members, head=choose_head(members, agents), centroid=centroid
        )
        for aid in members:
            assignment[aid] = cid
    return ClusteringState(clusters=clusters, assignment=assignment, round=0)


def _assert_budgets(agents: dict[int, Agent]) -> None:
    for aid in agents:
        budget = agents[aid].budget
        if budget is not None and not budget.within_bounds():
            raise RuntimeError(f"privacy budget of agent {aid} exceeded its maximum")


def _dispatch_router(router, batch, state, agents, weights, topo, ledger, rng_router, config):
    if router == "hierarchical":
        return route_subtasks_hierarchical(
            batch, state, agents, weights, topo, ledger,
            capacity=config.capacity, tau_support=config.tau_support,
            match_mode=config.match_mode,
        )
    if router == "flat":
        return route_subtasks_flat(batch, agents, topo, ledger, capacity=config.capacity)
    if router == "centralized":
        return route_subtasks_centralized(batch, agents, topo, ledger, capacity=config.capacity)
    if router == "random":
        return route_subtasks_random(batch, agents, ledger, rng_router, capacity=config.capacity)
    if router == "greedy":
        return route_subtasks_greedy(batch, agents, topo, ledger, capacity=config.capacity)
    raise ConfigError("router", f"unknown router {router!r}")


def run_episode(config: ScenarioConfig) -> RunMetrics:
    """Execute one full scenario and return its metrics."""
    return _run_core(config, cluster_mode="formed")


def _run_core(config: ScenarioConfig, cluster_mode: str = "formed") -> RunMetrics:
    """Round loop shared by run_episode and the experiments.

    cluster_mode: "formed" runs cluster formation (and periodic reclustering);
    "balanced" installs the forced sqrt-size partition used by the scaling
    experiment (no election traffic, no reclustering); "none" runs without
    clusters (flat/centralized scaling arms).
    """
    agents, topo, schedule = generate_scenario(config)
    w = config.weights
    weights = Weights(
        alpha=w.alpha, beta=w.beta, gamma=w.gamma,
        lambda1=w.lambda1, lambda2=w.lambda2, lambda3=w.lambda3,
        theta=w.theta, eta=w.eta,
    )
    adapt = AdaptationParams(eta=w.eta, mu=w.mu)
    pcfg = config.privacy
    fld = AggregationField(
        prime=pcfg.prime, scale=pcfg.scale,
        max_participants=config.n_agents, max_magnitude=pcfg.sensitivity,
    )
    dp = PrivacyParams(pcfg.epsilon_per_event, pcfg.delta_per_event, pcfg.sensitivity)

    ledger = MessageLedger()
    rng_decompose = np.random.default_rng([config.seed, 1])
    rng_noise = np.random.default_rng([config.seed, 2])
    rng_router = np.random.default_rng([config.seed, 3])

    if cluster_mode == "formed":
        state = form_clusters(
            agents, weights, topo, config.max_cluster_rounds, config.max_cluster_size, ledger
        )
    elif cluster_mode == "balanced":
        state = _balanced_state(agents)
    elif cluster_mode == "none":
        state = None
    else:
        raise ValueError(f"unknown cluster_mode {cluster_mode!r}")
    if state is not None:
        build_meta_graph(state)  # validates completeness of the head overlay

    if config.router == "hierarchical" and state is None:
        raise ConfigError("router", "hierarchical routing requires clustering")

    active: dict[tuple[int, int], list] = {}   # key -> [agent id, subtask, remaining]
    attempts: dict[tuple[int, int], int] = {}
    retry_queue = []
    pending: dict[int, list[np.ndarray]] = {aid: [] for aid in agents}
    created = succeeded = failed = abandoned = 0
    know_intra = know_inter = 0
    assigned_count = 0
    assigned_latency = 0.0
    last_loss = 0.0
    loss_traj: list[float] = []
    cluster_traj: list[int] = []
    rows: list[RoundRow] = []
    prev_msgs = 0
    prev_lat = 0.0

    for r in range(config.rounds):
        ledger.set_round(r)
        r_succ = r_fail = r_aband = 0

        # (1) release, decompose, route retries + new work in one batch
        new_subtasks = []
        for task in schedule[r]:
            new_subtasks.extend(
                decompose(task, rng_decompose, config.decompose_min, config.decompose_max)
            )
        created += len(new_subtasks)
        batch = sorted(retry_queue, key=lambda st: st.key) + new_subtasks
        retry_queue = []
        for st in batch:
            attempts[st.key] = attempts.get(st.key, 0) + 1
        if batch:
            result = _dispatch_router(
                config.router, batch, state, agents, weights, topo, ledger, rng_router, config
            )
            result.check_partition([st.key for st in batch])
            by_key = {st.key: st for st in batch}
            for key in sorted(result.assigned):
                st = by_key[key]
                active[key] = [result.assigned[key], st, st.workload]
                assigned_count += 1
                assigned_latency += result.latency.get(key, 0.0)
            for key in sorted(result.unassigned):
                if attempts[key] <= config.retry_limit:
                    retry_queue.append(by_key[key])
                else:
                    abandoned += 1
                    r_aband += 1

        # (2) execute one workload unit everywhere; resolve exhausted subtasks
        if active:
            last_loss = float(
                np.mean([task_loss(agents[active[k][0]], active[k][1]) for k in sorted(active)])
            )
        loss_traj.append(last_loss)
        done = []
        for key in sorted(active):
            rec = active[key]
            rec[2] -= 1.0
            if rec[2] <= 1e-9:
                done.append(key)
        for key in done:
            aid, st, _ = active.pop(key)
            agent = agents[aid]
            ok = subtask_success(agent, st)
            agent.record_outcome(key, ok)
            if config.knowledge_period > 0:
                pending[aid].append(produce_knowledge(agent, st))
            update_capability(agent, st, adapt)
            agent.load = max(0.0, agent.load - st.workload / config.capacity)
            if ok:
                succeeded += 1
                r_succ += 1
            elif attempts[key] <= config.retry_limit:
                retry_queue.append(st)
            else:
                failed += 1
                r_fail += 1

        # (3) private knowledge exchange on period boundaries
        if config.knowledge_period > 0 and (r + 1) % config.knowledge_period == 0:
            intra, inter = _share_knowledge(
                config, r, state, agents, pending, dp, fld, adapt, rng_noise, topo, ledger
            )
            know_intra += intra
            know_inter += inter
            for aid in pending:
                pending[aid] = []

        # (4) periodic re-formation (pointless on the very last round)
        if (
            state is not None
            and cluster_mode == "formed"
            and config.recluster_period > 0
            and (r + 1) % config.recluster_period == 0
            and (r + 1) < config.rounds
        ):
            state = recluster(
                state, agents, weights, topo, config.max_cluster_rounds,
                config.max_cluster_size, ledger,
            )
            build_meta_graph(state)

        _assert_budgets(agents)
        cluster_traj.append(len(state.clusters) if state is not None else 0)
        total_msgs = ledger.count()
        total_lat = ledger.latency_sum()
        rate = succeeded / created if created else 1.0
        rows.append(
            RoundRow(
                round=r,
                tasks_released=len(schedule[r]),
                subtasks_created=len(new_subtasks),
                completed=len(done),
                succeeded=r_succ,
                failed=r_fail,
                abandoned=r_aband,
                completion_rate=rate,
                mean_task_loss=last_loss,
                cluster_count=len(state.clusters) if state is not None else 0,
                messages=total_msgs - prev_msgs,
                latency_sum=total_lat - prev_lat,
            )
        )
        prev_msgs = total_msgs
        prev_lat = total_lat

    eps_spent = {aid: agents[aid].budget.epsilon_spent for aid in sorted(agents)}
    dlt_spent = {aid: agents[aid].budget.delta_spent for aid in sorted(agents)}
    n = len(agents)
    return RunMetrics(
        rounds=config.rounds,
        subtasks_created=created,
        succeeded=succeeded,
        failed=failed,
        abandoned=abandoned,
        completion_rate=succeeded / created if created else 1.0,
        unassigned_rate=abandoned / created if created else 0.0,
        total_messages=ledger.count(),
        messages_by_category=ledger.totals_by_category(),
        latency_by_category=ledger.latency_by_category(),
        mean_task_latency=assigned_latency / assigned_count if assigned_count else 0.0,
        knowledge_intra=know_intra,
        knowledge_inter=know_inter,
        epsilon_spent=eps_spent,
        delta_spent=dlt_spent,
        epsilon_spent_mean=sum(eps_spent.values()) / n,
        delta_spent_mean=sum(dlt_spent.values()) / n,
        task_loss_trajectory=loss_traj,
        cluster_count_trajectory=cluster_traj,
        per_round=rows,
        final_cluster_count=len(state.clusters) if state is not None else 0,
        ledger_rows=ledger.rows(),
    )


def _share_knowledge(config, r, state, agents, pending, dp, fld, adapt, rng_noise, topo, ledger):
    """One sharing event: per-group clip → spend → privatize → masked
    aggregation, then cross-group exchange and distillation into everyone.

    Groups are the clusters when a partition exists (heads exchange the
    aggregates); the flat and centralized routers pool globally, with their
    respective message envelopes. An agent whose budget refuses the spend is
    left out of the aggregation algebra; the exchange pattern (and so the
    message cost) is unchanged. Returns the (intra, inter) message split.
    """
    if config.router in ("flat", "centralized") or state is None:
        groups = [(0, sorted(agents))]
    else:
        groups = [(cid + 1, state.clusters[cid].members) for cid in sorted(state.clusters)]

    d = config.n_domains
    track_budget = not math.isinf(dp.epsilon)
    aggregates = []
    for token, members in groups:
        contribs = {}
        for aid in sorted(members):
            vecs = pending[aid]
            raw = np.mean(vecs, axis=0) if vecs else np.zeros(d)
            clipped = clip_to_sensitivity(raw, dp.sensitivity)
            if track_budget and not agents[aid].budget.spend(dp.epsilon, dp.delta):
                continue  # out of budget: sits this round out
            contribs[aid] = privatize(clipped, dp, rng_noise)
        if contribs:
            uniform = {aid: 1.0 / len(contribs) for aid in contribs}
            mask_seed = (config.seed * 1_000_003 + r) * 1_000_003 + token
            aggregates.append(secure_aggregate(contribs, uniform, mask_seed, fld))

    if config.router == "flat":
        intra, inter = knowledge_round_flat(ledger, topo, sorted(agents)), 0
    elif config.router == "centralized":
        intra, inter = knowledge_round_centralized(ledger, topo, sorted(agents)), 0
    else:
        intra, inter = knowledge_round(ledger, topo, state)

    if aggregates:
        global_k = np.mean(aggregates, axis=0)
        for aid in sorted(agents):
            apply_knowledge(agents[aid], global_k, adapt)
    return intra, inter


# ---------------------------------------------------------------------------
# experiments


def _scaling_config(base: ScenarioConfig, n: int, router: str) -> ScenarioConfig:
    """Probe-load variant for message-growth measurement: one undecomposed
    task per round, knowledge exchanged every round, no reclustering or
    domain shift. The light routing load keeps knowledge traffic dominant,
    which is the quantity whose growth exponent is under test."""
    return replace(
        base,
        n_agents=n,
        router=router,
        rounds=50,
        tasks_per_round=1,
        decompose_min=1,
        decompose_max=1,
        knowledge_period=1,
        recluster_period=0,
        domain_shift_round=None,
    )


def _scaling_cell(args) -> dict:
    router, n, base = args
    cfg = _scaling_config(base, n, router)
    mode = "balanced" if router == "hierarchical" else "none"
    metrics = _run_core(cfg, cluster_mode=mode)
    return {
        "router": router,
        "n": n,
        "messages_total": metrics.total_messages,
        "messages_intra": metrics.knowledge_intra,
        "messages_inter": metrics.knowledge_inter,
    }


def fit_loglog_slope(ns, totals) -> tuple[float, float]:
    """Least-squares slope and r^2 of log(total) against log(n)."""
    x = np.log(np.asarray(ns, dtype=np.float64))
    y = np.log(np.asarray(totals, dtype=np.float64))
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(slope), r2


def scaling_experiment(
    sizes, base_config: ScenarioConfig, jobs: int = 1
) -> tuple[list[dict], dict[str, dict[str, float]]]:
    """Message growth over population size for the three communication
    topologies. The hierarchical arm runs on a forced balanced partition of
    ceil(sqrt(n))-sized clusters. Returns (rows, slopes) with rows sorted by
    (router, n) so output never depends on worker scheduling."""
    sizes = sorted(set(int(s) for s in sizes))
    if not sizes or sizes[0] < 2:
        raise ValueError("sizes must be integers >= 2")
    validate_config(base_config)
    cells = [(router, n, base_config) for router in SCALING_ROUTERS for n in sizes]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_scaling_cell, cells))
    else:
        rows = [_scaling_cell(c) for c in cells]
    rows.sort(key=lambda row: (SCALING_ROUTERS.index(row["router"]), row["n"]))
    slopes: dict[str, dict[str, float]] = {}
    for router in SCALING_ROUTERS:
        sub = [row for row in rows if row["router"] == router]
        slope, r2 = fit_loglog_slope([s["n"] for s in sub], [s["messages_total"] for s in sub])
        slopes[router] = {"slope": slope, "r2": r2}
    return rows, slopes


def _sweep_cell(args) -> dict:
    epsilon, config = args
    metrics = run_episode(config)
    return {
        "epsilon": epsilon,
        "delta": config.privacy.delta_per_event,
        "completion_rate": metrics.completion_rate,
        "mean_task_loss": metrics.task_loss_trajectory[-1] if metrics.task_loss_trajectory else 0.0,
        "epsilon_spent_mean": metrics.epsilon_spent_mean,
    }


def privacy_sweep(epsilons, config: ScenarioConfig, jobs: int = 1) -> list[dict]:
    """Paired-seed sweep over per-event epsilon.

    Budget maxima are lifted to infinity for every arm so the sharing
    pattern — who shares, when, and in which order — is identical across the
    grid; only the calibrated noise scale differs. Rows come back sorted by
    ascending epsilon (infinity last: the no-privacy control).
    """
    validate_config(config)
    eps_sorted = sorted(float(e) for e in epsilons)
    if not eps_sorted:
        raise ValueError("need at least one epsilon")
    cells = []
    for e in eps_sorted:
        if e <= 0.0:
            raise ConfigError("privacy.epsilon_per_event", "must be positive (infinity allowed)")
        pcfg = replace(
            config.privacy, epsilon_per_event=e, epsilon_max=math.inf, delta_max=math.inf
        )
        cells.append((e, replace(config, privacy=pcfg)))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_cell, cells))
    else:
        rows = [_sweep_cell(c) for c in cells]
    rows.sort(key=lambda row: row["epsilon"])
    return rows


def recovery_rounds(per_round: list[RoundRow], shift_round: int | None,
                    window: int = 5, slack: float = 0.05) -> int:
    """Rounds after a domain shift until the windowed success rate returns to
    within `slack` of the pre-shift average.

    The window only ever spans post-shift rounds (pre-shift successes must
    not mask the dip). Returns 0 with no shift configured, -1 if the rate
    never recovers within the run.
    """
    if shift_round is None:
        return 0
    pre = per_round[:shift_round]
    pre_term = sum(row.succeeded + row.failed + row.abandoned for row in pre)
    pre_rate = (sum(row.succeeded for row in pre) / pre_term) if pre_term else 1.0
    target = pre_rate - slack
    for t in range(shift_round, len(per_round)):
        lo = max(shift_round, t - window + 1)
        win = per_round[lo : t + 1]
        term = sum(row.succeeded + row.failed + row.abandoned for row in win)
        if term == 0:
            continue
        if sum(row.succeeded for row in win) / term >= target:
            return t - shift_round + 1
    return -1


def adaptation_experiment(config: ScenarioConfig, routers=None) -> dict:
    """Run the domain-shift scenario once per router and measure recovery."""
    validate_config(config)
    chosen = list(routers) if routers is not None else list(ROUTERS)
    for router in chosen:
        if router not in ROUTERS:
            raise ConfigError("router", f"unknown router {router!r}")
    results = {}
    for router in chosen:
        metrics = run_episode(replace(config, router=router))
        pre = metrics.per_round[: config.domain_shift_round or 0]
        pre_term = sum(row.succeeded + row.failed + row.abandoned for row in pre)
        results[router] = {
            "recovery_rounds": recovery_rounds(metrics.per_round, config.domain_shift_round),
            "pre_shift_rate": (sum(row.succeeded for row in pre) / pre_term) if pre_term else 1.0,
            "completion_rate": metrics.completion_rate,
        }
    return {"shift_round": config.domain_shift_round, "routers": results}
