from .ReplayLab import ReplayLab, setup_logging, RUNS_DIR
from .handler import (
    Action, DiffusionGraph, EnvState, generate_graph, env_step, FieldParams, HarmFields,
    DeformationSpec, reweight_categorical, apply_mode, Policy, TrainerState, TrainingConfig,
    RsdConfig, RsdEpisodeRecord, run_rsd_episode, RunConfig, RunStorage
)
from .modules import (
    CSVExporter, MethodSuite, run_method_suite, run_sweep, episode_metrics, aggregate,
    ToyMdp, check_no_go, check_odds_contraction, check_safe_mass, run_verification
)
from .utility import (
    ReplayLabError, InvalidArgumentError, ConfigError, ProtocolError, HypothesisViolationError
)
