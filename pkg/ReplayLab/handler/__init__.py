from .graph_env import (
    Action, ACTION_COST, DiffusionGraph, EnvState, StepOdds, StepOutcome, generate_graph,
    select_sensitive_subgraph, stimulus_seed_set, initial_state, reset_phase, set_stimulus,
    observe, env_step, harmful_entry_prob, diffuse, draws_per_step
)
from .harm_memory import FieldParams, HarmFields, attribute_harm, update_scar, scar_injection, step_fields
from .deformation import (
    DeformationSpec, conductance, conductance_vector, reweight_categorical, apply_mode,
    gate_edge_prob, edge_gates
)
from .policies import (
    Policy, TrainerState, TrainingConfig, Batch, scripted_policy, action_distribution,
    sample_action, mask_distribution, train_epoch, dual_update
)
from .rsd_protocol import RsdConfig, RsdEpisodeRecord, PhaseSeries, EpisodeSeeds, run_rsd_episode
from .config import RunConfig, METHOD_IDS, validate_config, default_config
from .run_storage import RunStorage
