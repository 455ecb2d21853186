from .csv import CSVExporter
from .metrics import (
    MetricsReport, episode_metrics, aggregate, replay_ratios, replay_return, action_shift_distance,
    odds_ratio_series, containment_radius, welch_test, odds_rag_correlation, reach_peak_ks
)
from .baselines import (
    MethodConfig, METHOD_REGISTRY, MethodSuite, method_config, evaluation_order, shield_filter,
    tune_shield_um, train_method, run_method_suite, run_sweep
)
from .verification import (
    ToyMdp, CheckReport, check_no_go, check_odds_contraction, check_safe_mass, check_compounding,
    run_verification
)
