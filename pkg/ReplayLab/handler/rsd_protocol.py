"""The three-phase Exposure -> Decay -> Replay episode. Only the agent side is reset between phases."""

import hashlib
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Tuple

import numpy as np

from ..utility.errors import InvalidArgumentError, ProtocolError
from ..utility.streams import PURPOSE_PHASE, phase_stream
from .deformation import DeformationSpec, conductance_vector
from .graph_env import (
    DEFAULT_FIRING_WINDOW, DiffusionGraph, EnvState, draws_per_step, env_step, frontier_conductance,
    initial_state, observe, reset_phase, set_stimulus, truncate_delay_buffer,
)
from .harm_memory import HarmFields, step_fields
from .policies import Policy, action_distribution, field_features, mask_distribution, sample_action

PHASES = ("exposure", "decay", "replay")
RNG_MODES = ("independent", "paired")
REPLAY_DEFORMATIONS = ("inherit", "off")
FIELD_RESETS = ("persist", "reset")

ActionFilter = Callable[[EnvState, HarmFields, Tuple[int, ...]], Tuple[np.ndarray, int]]


@dataclass(frozen=True)
class RsdConfig:
    """
    Horizons and switches of one RSD episode.

    Args:
        T_exp (int): Exposure steps.
        T_decay (int): Decay steps (stimulus off, nothing reset).
        T_rep (int): Replay steps.
        z (int): Stimulus id, the same in Exposure and Replay.
        rng_mode (str): 'independent' draws fresh randomness per phase; 'paired'
            replays the identical uniform block in Exposure and Replay.
        replay_deformation (str): 'inherit' or 'off' (the counterfactual).
        field_reset (str): 'persist', or 'reset' to restore the initial
            fields and delay buffer at Replay (ablation only).
        truncate_buffer (bool): Drop the delay buffer at each phase boundary.
        injection_window (int): Phase steps during which the stimulus injects.
        k_seed (int): Seeds per stimulus.
        firing_window (int): Steps each activated node keeps firing its out-edges.
        snapshot_every (int): Field snapshot period for the scar-evolution log.
    """
    T_exp: int = 500
    T_decay: int = 200
    T_rep: int = 500
    z: int = 1
    rng_mode: str = "independent"
    replay_deformation: str = "inherit"
    field_reset: str = "persist"
    truncate_buffer: bool = False
    injection_window: int = 10
    k_seed: int = 3
    firing_window: int = DEFAULT_FIRING_WINDOW
    snapshot_every: int = 10

    def __post_init__(self):
        for name in ("T_exp", "T_decay", "T_rep"):
            if getattr(self, name) < 1:
                raise InvalidArgumentError(f"Horizon {name} must be at least 1, got {getattr(self, name)}.")
        if self.rng_mode not in RNG_MODES:
            raise InvalidArgumentError(f"Unknown rng mode '{self.rng_mode}'.")
        if self.replay_deformation not in REPLAY_DEFORMATIONS:
            raise InvalidArgumentError(f"Unknown replay deformation '{self.replay_deformation}'.")
        if self.field_reset not in FIELD_RESETS:
            raise InvalidArgumentError(f"Unknown field reset '{self.field_reset}'.")
        if self.injection_window < 1 or self.firing_window < 1 or self.snapshot_every < 1:
            raise InvalidArgumentError("Injection window, firing window and snapshot period must be at least 1.")

    def horizon(self, phase: str) -> int:
        return {"exposure": self.T_exp, "decay": self.T_decay, "replay": self.T_rep}[phase]

    def to_json(self) -> Dict[str, Any]:
        return asdict(self)


class EpisodeSeeds(NamedTuple):
    graph_seed: int
    episode_seed: int


@dataclass
class PhaseSeries:
    """Per-step series of one phase. ``odds`` rows are (p, q, p0, q0, h_star, h_zero)."""
    reach: List[int] = field(default_factory=list)
    sens: List[int] = field(default_factory=list)
    rewards: List[float] = field(default_factory=list)
    harms: List[float] = field(default_factory=list)
    actions: List[int] = field(default_factory=list)
    action_probs: List[List[float]] = field(default_factory=list)
    odds: List[List[float]] = field(default_factory=list)
    final_active: List[int] = field(default_factory=list)
    trajectory_hash: str = ""

    def __len__(self) -> int:
        return len(self.reach)

    def to_json(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> "PhaseSeries":
        return cls(**data)


@dataclass
class RsdEpisodeRecord:
    """Everything one RSD episode produced; metrics are pure functions of it."""
    method: str
    graph_seed: int
    episode_seed: int
    z: int
    seeds: List[int]
    config_hash: str
    policy_hash: str
    rng_mode: str
    counterfactual: bool
    field_reset: str
    phases: Dict[str, PhaseSeries]
    field_snapshots: List[Dict[str, Any]] = field(default_factory=list)
    boundary_fields: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    shield_transitions: int = 0

    @property
    def exposure(self) -> PhaseSeries:
        return self.phases["exposure"]

    @property
    def decay(self) -> PhaseSeries:
        return self.phases["decay"]

    @property
    def replay(self) -> PhaseSeries:
        return self.phases["replay"]

    @property
    def total_steps(self) -> int:
        return sum(len(series) for series in self.phases.values())

    def to_json(self) -> Dict[str, Any]:
        data = asdict(self)
        data["phases"] = {name: series.to_json() for name, series in self.phases.items()}
        return data

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> "RsdEpisodeRecord":
        data = dict(data)
        data["phases"] = {name: PhaseSeries.from_json(series) for name, series in data["phases"].items()}
        return cls(**data)


def policy_inputs(policy: Policy, state: EnvState, graph: DiffusionGraph, fields: HarmFields,
                  deform: DeformationSpec) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """
    Observation and (for augmented policies) field summary at ``state``.

    The frontier conductance in the summary is the full-mode value whatever
    the deformation mode, so PM-ST sees the same features as RAPO.
    """
    obs = observe(state)
    if policy.feature_mode != "augmented":
        return obs, None
    psi = conductance_vector(fields, deform.with_mode("full"))
    return obs, field_features(fields, frontier_conductance(state, graph, psi))


class _PhaseRunner:
    """Steps one phase and fills its series."""

    def __init__(self, graph: DiffusionGraph, policy: Policy, snapshot_every: int,
                 action_filter: Optional[ActionFilter], seeds: EpisodeSeeds):
        self.graph = graph
        self.policy = policy
        self.snapshot_every = snapshot_every
        self.action_filter = action_filter
        self.seeds = seeds
        self.snapshots: List[Dict[str, Any]] = []
        self.shield_transitions = 0

    def run(self, phase: str, horizon: int, state: EnvState, fields: HarmFields, deform: DeformationSpec,
            stream) -> Tuple[EnvState, HarmFields, PhaseSeries]:
        graph = self.graph
        series = PhaseSeries()
        digest = hashlib.sha256()
        for t in range(horizon):
            obs, summary = policy_inputs(self.policy, state, graph, fields, deform)
            allowed = None
            if self.action_filter is not None:
                key = (self.seeds.graph_seed, self.seeds.episode_seed, PHASES.index(phase), t)
                allowed, transitions = self.action_filter(state, fields, key)
                self.shield_transitions += transitions
            probs = action_distribution(self.policy, obs, summary)
            if allowed is not None:
                probs = mask_distribution(probs, allowed)
            action, _ = sample_action(self.policy, obs, summary, stream, probs=probs)

            outcome = env_step(state, action, graph, fields, deform, stream)
            fields, _ = step_fields(fields, outcome.harm, outcome.causal_set)
            state = outcome.state

            series.reach.append(int(state.active.sum()))
            series.sens.append(int((state.active & graph.sensitive).sum()))
            series.rewards.append(outcome.reward)
            series.harms.append(outcome.harm)
            series.actions.append(int(action))
            series.action_probs.append(probs.tolist())
            series.odds.append(list(outcome.odds))
            digest.update(bytes([int(action)]))
            digest.update(np.packbits(state.active).tobytes())
            if state.time % self.snapshot_every == 0:
                self.snapshots.append(dict(fields.snapshot(state.time), phase=phase))
        series.final_active = np.flatnonzero(state.active).tolist()
        series.trajectory_hash = digest.hexdigest()
        return state, fields, series


def run_rsd_episode(config: RsdConfig, policy: Policy, graph: DiffusionGraph, fields: HarmFields,
                    deform: DeformationSpec, seeds: EpisodeSeeds, action_filter: Optional[ActionFilter] = None,
                    method: str = "", config_hash: str = "") -> RsdEpisodeRecord:
    """
    Run Exposure, Decay and Replay with a frozen policy.

    Args:
        config (RsdConfig): Horizons and switches.
        policy (Policy): Must be frozen.
        graph (DiffusionGraph): The environment graph.
        fields (HarmFields): Field state at the start of Exposure.
        deform (DeformationSpec): Deformation used in Exposure and Decay, and
            in Replay unless ``config.replay_deformation`` is 'off'.
        seeds (EpisodeSeeds): Graph and episode seed; every stream is keyed on them.
        action_filter (Optional[ActionFilter]): Returns the allowed-action mask
            and the simulated transitions it spent, per step.
        method (str): Method id stored in the record.
        config_hash (str): Run-config hash stored in the record.

    Returns:
        RsdEpisodeRecord: The three phase series plus field snapshots.

    Raises:
        ProtocolError: The policy is not frozen, or a paired stream runs dry.
    """
    if not policy.frozen:
        raise ProtocolError("RSD needs a frozen policy; call policy.freeze() first.")
    delay = fields.params.delay
    per_step = draws_per_step(graph) + 1
    paired = config.rng_mode == "paired"
    capacity = max(config.T_exp, config.T_rep) * per_step

    def stream_for(phase: str):
        # Paired mode keys Replay on the Exposure phase id, so both read the same block.
        phase_id = 0 if paired and phase == "replay" else PHASES.index(phase)
        key = (PURPOSE_PHASE, seeds.graph_seed, seeds.episode_seed, phase_id)
        return phase_stream(key, paired and phase != "decay", capacity)

    runner = _PhaseRunner(graph, policy, config.snapshot_every, action_filter, seeds)
    initial_fields = fields
    boundary = {"exposure_start": fields.snapshot(0)}

    state = initial_state(graph, config.z, delay=delay, phase_horizon=config.T_exp,
                          injection_window=config.injection_window, k_seed=config.k_seed,
                          firing_window=config.firing_window)
    policy.reset_memory()
    state, fields, exposure = runner.run("exposure", config.T_exp, state, fields, deform, stream_for("exposure"))
    boundary["decay_start"] = fields.snapshot(state.time)

    state = set_stimulus(state, False, config.T_decay)
    if config.truncate_buffer:
        state = truncate_delay_buffer(state)
    state, fields, decay = runner.run("decay", config.T_decay, state, fields, deform, stream_for("decay"))

    state = reset_phase(state, True, config.T_rep, truncate_buffer=config.truncate_buffer)
    if config.field_reset == "reset":
        fields = initial_fields
        state = truncate_delay_buffer(state)
    boundary["replay_start"] = fields.snapshot(state.time)
    policy.reset_memory()
    replay_deform = deform.with_mode("off") if config.replay_deformation == "off" else deform
    state, fields, replay = runner.run("replay", config.T_rep, state, fields, replay_deform, stream_for("replay"))
    boundary["replay_end"] = fields.snapshot(state.time)

    return RsdEpisodeRecord(
        method=method,
        graph_seed=int(seeds.graph_seed),
        episode_seed=int(seeds.episode_seed),
        z=config.z,
        seeds=list(state.seeds),
        config_hash=config_hash,
        policy_hash=policy.weights_hash(),
        rng_mode=config.rng_mode,
        counterfactual=config.replay_deformation == "off",
        field_reset=config.field_reset,
        phases={"exposure": exposure, "decay": decay, "replay": replay},
        field_snapshots=runner.snapshots,
        boundary_fields=boundary,
        shield_transitions=runner.shield_transitions,
    )
