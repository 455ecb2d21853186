"""
Method wiring: which policy, features, costs, deformation and shield each
method id uses, how it is trained, and the suite that trains, freezes and
evaluates every method of a run.
"""

import logging
import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, FrozenSet, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from ..handler.config import METHOD_IDS, RunConfig
from ..handler.deformation import DeformationSpec
from ..handler.graph_env import (
    DEFAULT_FIRING_WINDOW, STIMULUS_COUNT, Action, DiffusionGraph, EnvState, diffuse, env_step, generate_graph,
    injection_nodes, initial_state,
)
from ..handler.harm_memory import FieldParams, HarmFields, step_fields
from ..handler.policies import (
    Batch, Policy, TrainerState, TrainingConfig, action_distribution, dual_update,
    sample_action, scripted_policy, train_epoch,
)
from ..handler.rsd_protocol import EpisodeSeeds, RsdConfig, RsdEpisodeRecord, policy_inputs, run_rsd_episode
from ..handler.run_storage import RunStorage
from ..utility.errors import InvalidArgumentError, ProtocolError
from ..utility.streams import PURPOSE_SHIELD, PURPOSE_TRAIN, UniformStream, make_rng
from .csv import CSVExporter
from .metrics import (
    REPORT_COLUMNS, MetricsReport, aggregate, episode_metrics, ge_reference,
    odds_rag_correlation, significance_rows,
)

HELD_OUT_SEED_BASE = 1_000_000
SWEEP_COLUMNS = ("w_H", "eta", "rag", "auc_r", "sm_r", "replay_ret")
SIGNIFICANCE_COLUMNS = ("method", "reference", "rag_mean", "reference_rag_mean", "diff",
                        "ci_low", "ci_high", "t", "p_value", "significant")


@dataclass(frozen=True)
class MethodConfig:
    """
    How one method is trained and evaluated.

    Args:
        method_id (str): Method id, e.g. 'RAPO'.
        policy_kind (str): Policy kind to train.
        feature_mode (str): 'obs' or 'augmented'.
        cost_mode (str): 'none', 'instantaneous', 'delayed' or 'rapo'.
        deform_mode (str): Deformation mode in training, Exposure and Decay.
        replay_deformation (str): 'inherit' or 'off' at Replay.
        shield (str): 'none', 'fixed' or 'utility_matched'.
        retention (Optional[float]): Scar retention override.
        checkpoint_source (str): Method whose trained checkpoint this one evaluates.
    """
    method_id: str
    policy_kind: str = "softmax_linear"
    feature_mode: str = "obs"
    cost_mode: str = "none"
    deform_mode: str = "off"
    replay_deformation: str = "inherit"
    shield: str = "none"
    retention: Optional[float] = None
    checkpoint_source: str = ""

    @property
    def source(self) -> str:
        return self.checkpoint_source or self.method_id

    @property
    def trains(self) -> bool:
        return self.source == self.method_id


METHOD_REGISTRY: Dict[str, MethodConfig] = {
    "GE": MethodConfig("GE"),
    "SS": MethodConfig("SS", cost_mode="instantaneous"),
    "DR": MethodConfig("DR", cost_mode="delayed"),
    "Shield": MethodConfig("Shield", shield="fixed", checkpoint_source="GE"),
    "Shield-UM": MethodConfig("Shield-UM", shield="utility_matched", checkpoint_source="GE"),
    "PM-ST": MethodConfig("PM-ST", feature_mode="augmented", cost_mode="rapo"),
    "PM-WIN": MethodConfig("PM-WIN", policy_kind="window_history", cost_mode="delayed"),
    "RAPO": MethodConfig("RAPO", feature_mode="augmented", cost_mode="rapo", deform_mode="full"),
    "RAPO-off@rep": MethodConfig("RAPO-off@rep", feature_mode="augmented", cost_mode="rapo", deform_mode="full",
                                 replay_deformation="off", checkpoint_source="RAPO"),
    "RAPO-topk": MethodConfig("RAPO-topk", feature_mode="augmented", cost_mode="rapo", deform_mode="topk"),
    "RAPO-local": MethodConfig("RAPO-local", feature_mode="augmented", cost_mode="rapo", deform_mode="local"),
    "RAPO-slow": MethodConfig("RAPO-slow", feature_mode="augmented", cost_mode="rapo", deform_mode="full",
                              retention=0.99),
}

DEPENDENCIES = {
    "Shield": ("GE",),
    "Shield-UM": ("GE", "RAPO"),
    "RAPO-off@rep": ("RAPO",),
}


def method_config(method_id: str) -> MethodConfig:
    if method_id not in METHOD_REGISTRY:
        raise InvalidArgumentError(f"Unknown method id '{method_id}'.")
    return METHOD_REGISTRY[method_id]


def check_control_identity(control: MethodConfig, treated: MethodConfig) -> None:
    """PM-ST and RAPO may differ only in their deformation mode."""
    a = replace(control, method_id="", deform_mode="")
    b = replace(treated, method_id="", deform_mode="")
    if a != b:
        raise ProtocolError(f"{control.method_id} and {treated.method_id} differ beyond the deformation mode.")


def evaluation_order(methods: Sequence[str]) -> List[str]:
    """Requested methods plus what they depend on, GE first and dependencies before dependants."""
    needed = {"GE"} | set(methods)
    for method in methods:
        needed |= set(DEPENDENCIES.get(method, ()))
    ordered = [m for m in METHOD_IDS if m in needed and m not in ("Shield-UM", "RAPO-off@rep")]
    ordered += [m for m in ("RAPO-off@rep", "Shield-UM") if m in needed]
    return ordered


def local_regions(graph: DiffusionGraph) -> FrozenSet[int]:
    """V_sens and its one-hop neighbourhood in the undirected graph."""
    undirected = graph.to_networkx().to_undirected()
    regions = set(graph.sensitive_set)
    for node in graph.sensitive_set:
        regions.update(undirected.neighbors(node))
    return frozenset(int(r) for r in regions)


def method_deformation(method: MethodConfig, graph: DiffusionGraph, base: DeformationSpec) -> DeformationSpec:
    if method.deform_mode == "local":
        return base.with_mode("local", regions=local_regions(graph))
    return base.with_mode(method.deform_mode)


def method_field_params(method: MethodConfig, base: FieldParams) -> FieldParams:
    return base if method.retention is None else replace(base, retention=method.retention)


def _stable_id(text: str) -> int:
    return zlib.crc32(text.encode("utf-8"))


# ==================================================
#                     SHIELD
# --------------------------------------------------
# ==================================================

class ShieldDecision(NamedTuple):
    allowed: np.ndarray
    masses: np.ndarray
    transitions: int


def _rollout_sensitive_mass(state: EnvState, action: Action, graph: DiffusionGraph, n_mc: int, horizon: int,
                            rng: np.random.Generator) -> float:
    """
    Mean over ``n_mc`` nominal rollouts of the new sensitive mass sum_k |(A_k minus A_0) & V_sens|.

    The candidate action is repeated open-loop. Once every rollout is
    quiescent the remaining steps are added in closed form.
    """
    no_gate = DeformationSpec(mode="off")
    ones = np.ones(graph.region_count)
    start = state.active
    active = np.repeat(start[None, :], n_mc, axis=0)
    firing = np.repeat(state.firing[None, :], n_mc, axis=0)
    total = np.zeros(n_mc)
    for k in range(horizon):
        injecting = state.stimulus_on and state.phase_time + k < state.injection_window
        if not injecting and not firing.any():
            total += (horizon - k) * ((active & ~start) & graph.sensitive).sum(axis=1)
            break
        for i in range(n_mc):
            if injecting:
                injected = injection_nodes(action, state.seeds, graph, ones, no_gate, rng.random(2)) & ~active[i]
                active[i] |= injected
                firing[i, injected] = state.firing_window
        newly = np.zeros_like(active)
        edge_u = rng.random((n_mc, graph.edge_count))
        for i in range(n_mc):
            newly[i] = diffuse(active[i], firing[i] > 0, graph, graph.prob, edge_u[i])
        active |= newly
        firing = np.maximum(firing - 1, 0)
        firing[newly] = state.firing_window
        total += ((active & ~start) & graph.sensitive).sum(axis=1)
    return float(total.mean())


def shield_filter(state: EnvState, graph: DiffusionGraph, threshold: float, n_mc: int, horizon: int,
                  key: Tuple[int, ...]) -> ShieldDecision:
    """
    Block every action whose expected new sensitive mass over ``horizon`` steps exceeds ``threshold``.

    Each action is scored on ``n_mc`` nominal-kernel rollouts drawn from its
    own substream of ``key``. If every action is blocked, Conservative stays
    allowed. Always accounts n_mc * horizon * 3 simulated transitions.
    """
    if n_mc < 1:
        raise InvalidArgumentError(f"Shield needs at least one rollout, got {n_mc}.")
    masses = np.array([
        _rollout_sensitive_mass(state, action, graph, n_mc, horizon, make_rng(PURPOSE_SHIELD, *key, int(action)))
        for action in Action
    ])
    allowed = masses <= threshold
    if not allowed.any():
        allowed[Action.CONSERVATIVE] = True
    return ShieldDecision(allowed, masses, n_mc * horizon * len(Action))


class ShieldFilter:
    """Action filter handed to ``run_rsd_episode``."""

    def __init__(self, graph: DiffusionGraph, threshold: float, n_mc: int = 20, horizon: int = 100):
        self.graph = graph
        self.threshold = threshold
        self.n_mc = n_mc
        self.horizon = horizon

    def __call__(self, state: EnvState, fields: HarmFields, key: Tuple[int, ...]) -> Tuple[np.ndarray, int]:
        decision = shield_filter(state, self.graph, self.threshold, self.n_mc, self.horizon, key)
        return decision.allowed, decision.transitions


class ShieldTuning(NamedTuple):
    threshold: float
    achieved: float
    met: bool
    boundary: bool
    iterations: int


def tune_shield_um(target_replay_ret: float, evaluate: Callable[[float], float], bracket: Tuple[float, float],
                   tolerance: float = 0.05, iterations: int = 12) -> ShieldTuning:
    """
    Bisect the shield threshold until the held-out ReplayRet is within ``tolerance`` of the target.

    Args:
        target_replay_ret (float): RAPO's mean ReplayRet.
        evaluate (Callable[[float], float]): Mean held-out ReplayRet at a threshold.
        bracket (Tuple[float, float]): (blocks everything, blocks nothing) thresholds.
        tolerance (float): Accepted gap.
        iterations (int): Bisection budget.

    Returns:
        ShieldTuning: Best threshold found; ``boundary`` is set when the target
        lies outside what the bracket can reach.
    """
    low, high = bracket
    ret_high = evaluate(high)
    if abs(ret_high - target_replay_ret) <= tolerance:
        return ShieldTuning(high, ret_high, True, False, 0)
    if ret_high < target_replay_ret:
        logging.warning(f"Shield-UM: target {target_replay_ret:.4f} above the unshielded return {ret_high:.4f}; "
                        f"keeping threshold {high:.1f}.")
        return ShieldTuning(high, ret_high, False, True, 0)
    ret_low = evaluate(low)
    if abs(ret_low - target_replay_ret) <= tolerance:
        return ShieldTuning(low, ret_low, True, False, 0)
    if ret_low > target_replay_ret:
        logging.warning(f"Shield-UM: target {target_replay_ret:.4f} below the fully shielded return {ret_low:.4f}; "
                        f"keeping threshold {low:.1f}.")
        return ShieldTuning(low, ret_low, False, True, 0)
    best = min(((high, ret_high), (low, ret_low)), key=lambda pair: abs(pair[1] - target_replay_ret))
    for iteration in range(1, iterations + 1):
        mid = 0.5 * (low + high)
        ret_mid = evaluate(mid)
        if abs(ret_mid - target_replay_ret) < abs(best[1] - target_replay_ret):
            best = (mid, ret_mid)
        if abs(ret_mid - target_replay_ret) <= tolerance:
            return ShieldTuning(mid, ret_mid, True, False, iteration)
        if ret_mid < target_replay_ret:
            low = mid
        else:
            high = mid
    return ShieldTuning(best[0], best[1], False, False, iterations)


# ==================================================
#                     TRAINING
# --------------------------------------------------
# ==================================================

def collect_batch(policy: Policy, graph: DiffusionGraph, field_params: FieldParams, deform: DeformationSpec,
                  config: TrainingConfig, key: Tuple[int, ...], injection_window: int = 10,
                  k_seed: int = 3, firing_window: int = DEFAULT_FIRING_WINDOW) -> Batch:
    """
    Roll the current policy for ``config.batch_steps`` steps in episodes of ``config.episode_steps``.

    Every episode starts from zero fields with a stimulus drawn uniformly
    from 1..20, and the policy memory reset.
    """
    stream = UniformStream(make_rng(*key))
    rows: Dict[str, List[Any]] = {name: [] for name in
                                  ("features", "actions", "logp_old", "rewards", "harms", "g_sums", "scar_costs")}
    ends: List[bool] = []
    remaining = config.batch_steps
    while remaining > 0:
        length = min(config.episode_steps, remaining)
        z = int(stream.rng.integers(1, STIMULUS_COUNT + 1))
        state = initial_state(graph, z, delay=field_params.delay, phase_horizon=config.episode_steps,
                              injection_window=injection_window, k_seed=k_seed, firing_window=firing_window)
        fields = HarmFields.zeros(graph.region_count, field_params)
        policy.reset_memory()
        for _ in range(length):
            obs, summary = policy_inputs(policy, state, graph, fields, deform)
            features = policy.features(obs, summary)
            probs = action_distribution(policy, obs, summary)
            action, _ = sample_action(policy, obs, summary, stream, probs=probs)
            g_sum = float(fields.G.sum())
            outcome = env_step(state, action, graph, fields, deform, stream)
            fields, scar_cost = step_fields(fields, outcome.harm, outcome.causal_set)
            state = outcome.state
            rows["features"].append(features)
            rows["actions"].append(int(action))
            rows["logp_old"].append(float(np.log(probs[int(action)])))
            rows["rewards"].append(outcome.reward)
            rows["harms"].append(outcome.harm)
            rows["g_sums"].append(g_sum)
            rows["scar_costs"].append(scar_cost)
            ends.append(False)
        ends[-1] = True
        remaining -= length
    return Batch(
        features=np.asarray(rows["features"], dtype=np.float64),
        actions=np.asarray(rows["actions"], dtype=np.int64),
        logp_old=np.asarray(rows["logp_old"], dtype=np.float64),
        rewards=np.asarray(rows["rewards"], dtype=np.float64),
        harms=np.asarray(rows["harms"], dtype=np.float64),
        g_sums=np.asarray(rows["g_sums"], dtype=np.float64),
        scar_costs=np.asarray(rows["scar_costs"], dtype=np.float64),
        episode_ends=np.asarray(ends, dtype=bool),
    )


def train_method(method: MethodConfig, graph: DiffusionGraph, run_config: RunConfig,
                 enable_log: bool = False) -> TrainerState:
    """
    Train ``method`` on ``graph`` and freeze the policy.

    With ``training/scripted_fallback`` set, the policy is that scripted
    action and no update runs.
    """
    config = run_config.training_config()
    field_params = method_field_params(method, run_config.field_params())
    deform = method_deformation(method, graph, run_config.deformation_spec())
    if config.scripted_fallback:
        policy = scripted_policy(Action[config.scripted_fallback])
    else:
        policy = Policy(kind=method.policy_kind, feature_mode=method.feature_mode, window=config.window,
                        hidden_units=config.hidden_units, seed=graph.seed)
    trainer = TrainerState(policy, config, cost_mode=method.cost_mode, delay=field_params.delay,
                           enable_log=enable_log)
    if policy.kind != "scripted":
        updates = max(1, math.ceil(config.steps / config.batch_steps))
        for update in range(updates):
            key = (PURPOSE_TRAIN, run_config.master_seed, graph.seed, _stable_id(method.method_id), update)
            batch = collect_batch(policy, graph, field_params, deform, config, key,
                                  injection_window=run_config.get("graph/injection_window"),
                                  k_seed=run_config.get("graph/k_seed"),
                                  firing_window=run_config.get("graph/firing_window"))
            train_epoch(trainer, batch)
            dual_update(trainer, batch)
    policy.freeze()
    if enable_log:
        logging.info(f"Trained {method.method_id} on graph {graph.seed}: duals {trainer.duals()}")
    return trainer


def make_checkpoint(method: MethodConfig, graph: DiffusionGraph, trainer: TrainerState,
                    field_params: FieldParams) -> Dict[str, Any]:
    training_hash = trainer.config.config_hash()
    return {
        "method": method.source,
        "graph_seed": graph.seed,
        "policy": trainer.policy.to_json(training_hash),
        "fields": HarmFields.zeros(graph.region_count, field_params).to_json(),
        "duals": trainer.duals(),
        "updates": trainer.updates,
        "training_config_hash": training_hash,
    }


# ==================================================
#                   EVALUATION
# --------------------------------------------------
# ==================================================

def _episode_job(job: Dict[str, Any]) -> Dict[str, Any]:
    """Run one RSD episode from plain data; used by worker processes."""
    graph = DiffusionGraph.from_json(job["graph"])
    policy = Policy.from_json(job["policy"]).freeze()
    fields = HarmFields.from_json(job["fields"])
    deform = job["deform"]
    deform = DeformationSpec(**{**deform, "regions": frozenset(deform["regions"])})
    action_filter = None
    if job["shield"] is not None:
        action_filter = ShieldFilter(graph, **job["shield"])
    record = run_rsd_episode(RsdConfig(**job["rsd"]), policy, graph, fields, deform,
                             EpisodeSeeds(job["graph_seed"], job["episode_seed"]), action_filter=action_filter,
                             method=job["method"], config_hash=job["config_hash"])
    return record.to_json()


def run_episodes(jobs: List[Dict[str, Any]], workers: int = 1) -> List[Dict[str, Any]]:
    """Run episode jobs, in parallel when ``workers`` > 1; results come back in job order."""
    if workers <= 1 or len(jobs) <= 1:
        return [_episode_job(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_episode_job, jobs))


@dataclass
class MethodResult:
    method: str
    graph_seed: int
    records: List[RsdEpisodeRecord]
    reports: List[MetricsReport] = field(default_factory=list)
    shield_tuning: Optional[ShieldTuning] = None


class MethodSuite:
    """
    Trains, freezes and evaluates the methods of one run, writing everything
    through ``RunStorage``.

    Args:
        run_config (RunConfig): The validated config.
        storage (RunStorage): The run directory.
        workers (int): Parallel episode workers; results do not depend on it.
        enable_log (bool): Log lifecycle events.
    """

    def __init__(self, run_config: RunConfig, storage: RunStorage, workers: int = 1, enable_log: bool = False):
        self.run_config = run_config
        self.storage = storage
        self.workers = workers
        self.enable_log = enable_log
        self.csv_exporter = CSVExporter(storage.run_dir)
        self.graphs: Dict[int, DiffusionGraph] = {}
        self.results: Dict[Tuple[str, int], MethodResult] = {}
        self.references: Dict[int, float] = {}
        self.status: Dict[str, Dict[str, Any]] = {}

    def graph(self, graph_seed: int) -> DiffusionGraph:
        if graph_seed not in self.graphs:
            graph_cfg = self.run_config.data["graph"]
            self.graphs[graph_seed] = generate_graph(graph_cfg["nodes"], graph_cfg["branching"], seed=graph_seed,
                                                     sens_fraction=graph_cfg["sens_fraction"])
            if self.enable_log:
                logging.info(f"Graph {graph_seed} built: {self.graphs[graph_seed].edge_count} edges")
        return self.graphs[graph_seed]

    # ---------------- training ----------------

    def train(self, method_id: str, graph_seed: int) -> Dict[str, Any]:
        """Train (or reuse) the checkpoint ``method_id`` evaluates and store it under ``method_id``."""
        method = method_config(method_id)
        graph = self.graph(graph_seed)
        if method.trains:
            trainer = train_method(method, graph, self.run_config, enable_log=self.enable_log)
            field_params = method_field_params(method, self.run_config.field_params())
            checkpoint = make_checkpoint(method, graph, trainer, field_params)
        else:
            checkpoint = self.storage.load_checkpoint(method.source, graph_seed)
        self.storage.save_checkpoint(method_id, graph_seed, checkpoint)
        if not method.trains and self.storage.checkpoint_hash(method_id, graph_seed) != \
                self.storage.checkpoint_hash(method.source, graph_seed):
            raise ProtocolError(f"{method_id} checkpoint differs from its source {method.source}.")
        return checkpoint

    # ---------------- evaluation ----------------

    def _jobs(self, method: MethodConfig, graph_seed: int, checkpoint: Dict[str, Any], episode_seeds: Sequence[int],
              threshold: Optional[float] = None) -> List[Dict[str, Any]]:
        graph = self.graph(graph_seed)
        rsd = self.run_config.rsd_config()
        if method.replay_deformation == "off":
            rsd = replace(rsd, replay_deformation="off")
        deform = method_deformation(method, graph, self.run_config.deformation_spec())
        shield = None
        if method.shield != "none":
            shield_cfg = self.run_config.data["shield"]
            shield = {"threshold": shield_cfg["threshold"] if threshold is None else threshold,
                      "n_mc": shield_cfg["n_mc"], "horizon": shield_cfg["horizon"]}
        base = {
            "graph": graph.to_json(), "policy": checkpoint["policy"], "fields": checkpoint["fields"],
            "deform": deform.to_json(), "rsd": rsd.to_json(), "shield": shield, "method": method.method_id,
            "config_hash": self.run_config.config_hash, "graph_seed": graph_seed,
        }
        return [dict(base, episode_seed=seed) for seed in episode_seeds]

    def _reference(self, graph_seed: int) -> float:
        if graph_seed not in self.references:
            raise ProtocolError(f"Missing GE reference for graph seed {graph_seed}; evaluate GE first.")
        return self.references[graph_seed]

    def _gamma(self) -> float:
        return self.run_config.data["training"]["gamma"]

    def _metrics(self, record: RsdEpisodeRecord, graph: DiffusionGraph, reference: float) -> MetricsReport:
        return episode_metrics(record, graph, reference, self._gamma(), self.run_config.deformation_spec())

    def _held_out_return(self, method: MethodConfig, graph_seed: int, checkpoint: Dict[str, Any],
                         threshold: float) -> float:
        shield_cfg = self.run_config.data["shield"]
        seeds = [HELD_OUT_SEED_BASE + i for i in range(shield_cfg["um_episodes"])]
        records = [RsdEpisodeRecord.from_json(r)
                   for r in run_episodes(self._jobs(method, graph_seed, checkpoint, seeds, threshold), self.workers)]
        graph = self.graph(graph_seed)
        reference = self._reference(graph_seed)
        return float(np.mean([self._metrics(r, graph, reference).replay_ret for r in records]))

    def evaluate(self, method_id: str, graph_seed: int, checkpoint: Optional[Dict[str, Any]] = None) -> MethodResult:
        """Run the RSD episodes of one method on one graph and store records and metrics."""
        method = method_config(method_id)
        graph = self.graph(graph_seed)
        if checkpoint is None:
            checkpoint = self.storage.load_checkpoint(method_id, graph_seed)
        tuning = None
        threshold = None
        if method.shield == "utility_matched":
            target_result = self.results.get(("RAPO", graph_seed))
            if target_result is None:
                raise ProtocolError("Shield-UM needs a completed RAPO evaluation on the same graph.")
            target = float(np.mean([r.replay_ret for r in target_result.reports]))
            shield_cfg = self.run_config.data["shield"]
            upper = float(shield_cfg["horizon"] * graph.sensitive.sum() + 1)
            tuning = tune_shield_um(target, lambda th: self._held_out_return(method, graph_seed, checkpoint, th),
                                    (-1.0, upper), tolerance=shield_cfg["um_tolerance"],
                                    iterations=shield_cfg["um_iterations"])
            threshold = tuning.threshold
        jobs = self._jobs(method, graph_seed, checkpoint, self.run_config.episode_seeds(), threshold)
        records = [RsdEpisodeRecord.from_json(r) for r in run_episodes(jobs, self.workers)]
        for record in records:
            self.storage.save_record(method_id, graph_seed, record.episode_seed, record.to_json())
        if method_id == "GE":
            self.references[graph_seed] = ge_reference(records, self._gamma())
        reports = [self._metrics(r, graph, self._reference(graph_seed)) for r in records]
        result = MethodResult(method_id, graph_seed, records, reports, tuning)
        self.results[(method_id, graph_seed)] = result
        if self.enable_log:
            logging.info(f"{method_id} finished on graph {graph_seed}: {len(records)} episodes")
        return result

    def restore(self, method_id: str, graph_seed: int) -> MethodResult:
        """Rebuild a method's result on one graph from its stored records, without running episodes."""
        records = [RsdEpisodeRecord.from_json(r) for r in self.storage.iter_records(method_id)
                   if r["graph_seed"] == graph_seed]
        if not records:
            raise ProtocolError(f"No stored records for {method_id} on graph seed {graph_seed}.")
        if method_id == "GE":
            self.references[graph_seed] = ge_reference(records, self._gamma())
        graph = self.graph(graph_seed)
        reports = [self._metrics(r, graph, self._reference(graph_seed)) for r in records]
        result = MethodResult(method_id, graph_seed, records, reports)
        self.results[(method_id, graph_seed)] = result
        return result

    # ---------------- whole suite ----------------

    def run(self, methods: Optional[Sequence[str]] = None) -> List[Dict[str, Any]]:
        """
        Train, freeze and evaluate every method on every graph seed, then write
        report.csv, summary.csv and significance.csv.

        Returns:
            List[Dict[str, Any]]: The report rows.
        """
        methods = list(self.run_config.methods if methods is None else methods)
        if "PM-ST" in methods and "RAPO" in methods:
            check_control_identity(method_config("PM-ST"), method_config("RAPO"))
        order = evaluation_order(methods)
        for graph_seed in self.run_config.graph_seeds:
            for method_id in order:
                checkpoint = self.train(method_id, graph_seed)
                self.evaluate(method_id, graph_seed, checkpoint)
                status = self.status.setdefault(method_id, {"status": "done", "graphs": []})
                status["graphs"].append(graph_seed)
        return self.write_reports(methods)

    def report_rows(self, methods: Sequence[str]) -> List[Dict[str, Any]]:
        rows = []
        for method_id in methods:
            for graph_seed in self.run_config.graph_seeds:
                result = self.results[(method_id, graph_seed)]
                rows.append(aggregate(method_id, graph_seed, result.reports))
        return rows

    def summary_rows(self, methods: Sequence[str]) -> List[Dict[str, Any]]:
        rows = []
        for method_id in methods:
            reports = [r for gs in self.run_config.graph_seeds for r in self.results[(method_id, gs)].reports]
            rows.append(aggregate(method_id, "all", reports))
        return rows

    def write_reports(self, methods: Sequence[str]) -> List[Dict[str, Any]]:
        rows = self.report_rows(methods)
        self.csv_exporter.export(rows, "report.csv", REPORT_COLUMNS)
        self.csv_exporter.export(self.summary_rows(methods), "summary.csv", REPORT_COLUMNS)
        rags = {m: [r.rag for gs in self.run_config.graph_seeds for r in self.results[(m, gs)].reports]
                for m in methods}
        self.csv_exporter.export(significance_rows(rags), "significance.csv", SIGNIFICANCE_COLUMNS)
        return rows

    def correlation(self, rows: Sequence[Dict[str, Any]]) -> Tuple[float, float]:
        return odds_rag_correlation([r["odds_ratio_mean"] for r in rows], [r["rag_mean"] for r in rows])

    def shield_tunings(self) -> Dict[str, Any]:
        return {f"{m}/{gs}": result.shield_tuning._asdict()
                for (m, gs), result in sorted(self.results.items()) if result.shield_tuning is not None}


def run_method_suite(run_config: RunConfig, storage: RunStorage, methods: Optional[Sequence[str]] = None,
                     workers: int = 1, enable_log: bool = False) -> MethodSuite:
    """Convenience wrapper: build a ``MethodSuite``, run it, and return it."""
    suite = MethodSuite(run_config, storage, workers=workers, enable_log=enable_log)
    suite.run(methods)
    return suite


def sweep_grid(run_config: RunConfig) -> List[Tuple[float, float]]:
    sweep = run_config.data["sweep"]
    return sorted((float(w), float(e)) for w in sweep["w_H"] for e in sweep["eta"])


def run_sweep(run_config: RunConfig, storage: RunStorage, workers: int = 1,
              enable_log: bool = False) -> List[Dict[str, Any]]:
    """
    One RAPO train + RSD evaluation per (w_H, eta) grid point, pooled over
    the graph seeds, written to sweep.csv sorted by (w_H, eta).

    GE is evaluated once per graph under the base config to normalise ReplayRet.
    """
    base = MethodSuite(run_config, storage, workers=workers, enable_log=enable_log)
    for graph_seed in run_config.graph_seeds:
        base.evaluate("GE", graph_seed, base.train("GE", graph_seed))
    rows = []
    for w_H, eta in sweep_grid(run_config):
        point_config = run_config.with_overrides({"deformation/w_H": w_H, "fields/scar_rate": eta})
        point = MethodSuite(point_config, RunStorage(storage.path("sweep", f"w_H={w_H!r}_eta={eta!r}"), enable_log),
                            workers=workers, enable_log=enable_log)
        point.graphs = base.graphs
        point.references = base.references
        reports = []
        for graph_seed in run_config.graph_seeds:
            reports.extend(point.evaluate("RAPO", graph_seed, point.train("RAPO", graph_seed)).reports)
        pooled = aggregate("RAPO", "all", reports)
        rows.append({"w_H": w_H, "eta": eta, "rag": pooled["rag_mean"], "auc_r": pooled["auc_r_mean"],
                     "sm_r": pooled["sm_r_mean"], "replay_ret": pooled["replay_ret_mean"]})
        if enable_log:
            logging.info(f"Sweep point w_H={w_H} eta={eta}: RAG {pooled['rag_mean']:.4f}")
    CSVExporter(storage.run_dir).export(rows, "sweep.csv", SWEEP_COLUMNS)
    return rows
