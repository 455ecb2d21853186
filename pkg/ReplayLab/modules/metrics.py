"""Replay and mechanism metrics, pure functions of the stored episode records."""

import math
from dataclasses import asdict, dataclass
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from ..handler.deformation import DeformationSpec, clipped_odds_bound
from ..handler.graph_env import DiffusionGraph
from ..handler.rsd_protocol import RsdEpisodeRecord
from ..utility.errors import ProtocolError

EPS = 1e-8
SIGNIFICANCE_LEVEL = 0.01

REPORT_COLUMNS = (
    "method", "graph_seed", "episodes", "rag_mean", "rag_std", "auc_r_mean", "auc_r_std",
    "sm_r_mean", "sm_r_std", "sm_r_undefined", "replay_ret_mean", "asd_mean", "odds_ratio_mean",
    "odds_bound_violations", "reach_ks_stat", "reach_ks_p", "rc_exp_mean", "rc_rep_mean",
    "shield_transitions_per_step",
)


def replay_ratios(record: RsdEpisodeRecord) -> Tuple[float, float, float]:
    """
    RAG, AUC-R and SM-R of one episode.

    RAG = max_rep Reach / (max_exp Reach + eps), AUC-R the same with sums of
    Reach, SM-R with sums of sensitive mass. SM-R is NaN (undefined) when
    Exposure never touched V_sens.
    """
    exp, rep = record.exposure, record.replay
    rag = max(rep.reach) / (max(exp.reach) + EPS)
    auc_r = sum(rep.reach) / (sum(exp.reach) + EPS)
    sm_r = sum(rep.sens) / (sum(exp.sens) + EPS) if sum(exp.sens) > 0 else math.nan
    return float(rag), float(auc_r), float(sm_r)


def discounted_return(rewards: Sequence[float], gamma: float) -> float:
    rewards = np.asarray(rewards, dtype=np.float64)
    return float((gamma ** np.arange(rewards.size) * rewards).sum())


def replay_return(record: RsdEpisodeRecord, ge_reference: Optional[float], gamma: float = 0.95) -> float:
    """Discounted Replay-phase return over the GE reference of the same graph."""
    if ge_reference is None or not ge_reference > 0:
        raise ProtocolError(f"ReplayRet needs a positive GE reference, got {ge_reference!r}.")
    return discounted_return(record.replay.rewards, gamma) / ge_reference


def ge_reference(records: Iterable[RsdEpisodeRecord], gamma: float = 0.95) -> float:
    """Mean discounted Replay return of a set of GE records."""
    returns = [discounted_return(r.replay.rewards, gamma) for r in records]
    if not returns:
        raise ProtocolError("No GE records to build the ReplayRet reference from.")
    return float(np.mean(returns))


def action_shift_distance(record: RsdEpisodeRecord) -> float:
    """Mean total-variation distance between Exposure and Replay action distributions at matched phase steps."""
    exp = np.asarray(record.exposure.action_probs, dtype=np.float64)
    rep = np.asarray(record.replay.action_probs, dtype=np.float64)
    steps = min(len(exp), len(rep))
    if steps == 0:
        return 0.0
    return float((0.5 * np.abs(exp[:steps] - rep[:steps]).sum(axis=1)).mean())


class OddsSeries(NamedTuple):
    ratios: np.ndarray
    steps: np.ndarray
    skipped: int


def odds_ratio_series(record: RsdEpisodeRecord, phase: str = "replay") -> OddsSeries:
    """
    Harmful-entry odds under the gated kernel relative to the nominal one.

    ratio_t = (p_t / q_t) / (p0_t / q0_t); steps with p0 = 0 have undefined
    odds and are skipped and counted.
    """
    odds = np.asarray(record.phases[phase].odds, dtype=np.float64).reshape(-1, 6)
    p, q, p0, q0 = odds[:, 0], odds[:, 1], odds[:, 2], odds[:, 3]
    defined = p0 > 0
    steps = np.flatnonzero(defined)
    ratios = (p[defined] / q[defined]) / (p0[defined] / q0[defined])
    return OddsSeries(ratios, steps, int((~defined).sum()))


def odds_bound_violations(record: RsdEpisodeRecord, deform: DeformationSpec, phase: str = "replay",
                          rtol: float = 1e-9) -> int:
    """
    Steps whose odds ratio exceeds max(exp(-w_H (h* - h0)), psi_min) from the recorded scar gap.

    Should be 0 for every method: ungated kernels have ratio 1 and h* = 0.
    """
    series = odds_ratio_series(record, phase)
    odds = np.asarray(record.phases[phase].odds, dtype=np.float64).reshape(-1, 6)
    bounds = np.array([clipped_odds_bound(deform, h_star, h_zero) for h_star, h_zero in odds[series.steps, 4:]])
    return int((series.ratios > bounds * (1.0 + rtol)).sum())


def containment_radius(record: RsdEpisodeRecord, graph: DiffusionGraph, phase: str = "replay") -> int:
    """Largest hop distance from the stimulus seeds to any node activated in the phase; 0 when nothing spread."""
    active = record.phases[phase].final_active
    if not active:
        return 0
    hops = graph.hop_distance_from(record.seeds)
    return int(hops[active].max())


@dataclass
class MetricsReport:
    """Per-episode metrics."""
    graph_seed: int
    episode_seed: int
    rag: float
    auc_r: float
    sm_r: float
    replay_ret: float
    asd: float
    odds_ratio: float
    odds_skipped: int
    odds_violations: int
    rc_exp: int
    rc_rep: int
    reach_peak_exp: int
    reach_peak_rep: int
    shield_transitions_per_step: float

    def to_json(self):
        return asdict(self)


def episode_metrics(record: RsdEpisodeRecord, graph: DiffusionGraph, reference: Optional[float],
                    gamma: float = 0.95, deform: Optional[DeformationSpec] = None) -> MetricsReport:
    """Every per-episode metric; ``deform`` supplies w_H and psi_min for the odds bound (defaults otherwise)."""
    rag, auc_r, sm_r = replay_ratios(record)
    odds = odds_ratio_series(record, "replay")
    return MetricsReport(
        graph_seed=record.graph_seed,
        episode_seed=record.episode_seed,
        rag=rag,
        auc_r=auc_r,
        sm_r=sm_r,
        replay_ret=replay_return(record, reference, gamma),
        asd=action_shift_distance(record),
        odds_ratio=float(odds.ratios.mean()) if odds.ratios.size else math.nan,
        odds_skipped=odds.skipped,
        odds_violations=odds_bound_violations(record, deform or DeformationSpec()),
        rc_exp=containment_radius(record, graph, "exposure"),
        rc_rep=containment_radius(record, graph, "replay"),
        reach_peak_exp=max(record.exposure.reach),
        reach_peak_rep=max(record.replay.reach),
        shield_transitions_per_step=record.shield_transitions / record.total_steps,
    )


def _mean(values: Sequence[float]) -> float:
    values = np.asarray(values, dtype=np.float64)
    finite = values[np.isfinite(values)]
    return float(finite.mean()) if finite.size else math.nan


def _std(values: Sequence[float]) -> float:
    values = np.asarray(values, dtype=np.float64)
    finite = values[np.isfinite(values)]
    return float(finite.std(ddof=1)) if finite.size > 1 else 0.0


def aggregate(method: str, graph_seed, reports: Sequence[MetricsReport]) -> Dict[str, object]:
    """
    One report row: mean/std over the declared episodes, in seed order.

    ``graph_seed`` is an int for a per-graph row or the string 'all' for the
    pooled row. Undefined SM-R values are left out of its mean and counted.
    """
    reports = sorted(reports, key=lambda r: (r.graph_seed, r.episode_seed))
    column = lambda name: [getattr(r, name) for r in reports]
    ks_stat, ks_p = peak_ks(column("reach_peak_exp"), column("reach_peak_rep"))
    return {
        "method": method,
        "graph_seed": graph_seed,
        "episodes": len(reports),
        "rag_mean": _mean(column("rag")),
        "rag_std": _std(column("rag")),
        "auc_r_mean": _mean(column("auc_r")),
        "auc_r_std": _std(column("auc_r")),
        "sm_r_mean": _mean(column("sm_r")),
        "sm_r_std": _std(column("sm_r")),
        "sm_r_undefined": int(np.sum(~np.isfinite(np.asarray(column("sm_r"), dtype=np.float64)))),
        "replay_ret_mean": _mean(column("replay_ret")),
        "asd_mean": _mean(column("asd")),
        "odds_ratio_mean": _mean(column("odds_ratio")),
        "odds_bound_violations": int(sum(column("odds_violations"))),
        "reach_ks_stat": ks_stat,
        "reach_ks_p": ks_p,
        "rc_exp_mean": _mean(column("rc_exp")),
        "rc_rep_mean": _mean(column("rc_rep")),
        "shield_transitions_per_step": _mean(column("shield_transitions_per_step")),
    }


# ==================================================
#                   STATISTICS
# --------------------------------------------------
# ==================================================

class WelchResult(NamedTuple):
    t: float
    p_value: float
    diff: float
    ci_low: float
    ci_high: float


def welch_test(a: Sequence[float], b: Sequence[float], confidence: float = 0.95) -> WelchResult:
    """
    Welch's unequal-variance t-test of mean(a) against mean(b), with a
    confidence interval for mean(a) - mean(b) on the Welch-Satterthwaite degrees of freedom.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    diff = float(a.mean() - b.mean())
    if a.size < 2 or b.size < 2:
        return WelchResult(math.nan, math.nan, diff, math.nan, math.nan)
    va, vb = a.var(ddof=1) / a.size, b.var(ddof=1) / b.size
    se = math.sqrt(va + vb)
    if se == 0:
        return WelchResult(math.nan, math.nan, diff, diff, diff)
    t_stat, p_value = stats.ttest_ind(a, b, equal_var=False)
    dof = (va + vb) ** 2 / (va ** 2 / (a.size - 1) + vb ** 2 / (b.size - 1))
    half = float(stats.t.ppf(0.5 + confidence / 2, dof)) * se
    return WelchResult(float(t_stat), float(p_value), diff, diff - half, diff + half)


def significance_rows(rags: Dict[str, Sequence[float]], reference: str = "PM-ST") -> List[Dict[str, object]]:
    """Welch test of every method's per-episode RAG against the reference method's."""
    if reference not in rags:
        return []
    rows = []
    for method in sorted(rags):
        if method == reference:
            continue
        result = welch_test(rags[method], rags[reference])
        rows.append({
            "method": method,
            "reference": reference,
            "rag_mean": float(np.mean(rags[method])),
            "reference_rag_mean": float(np.mean(rags[reference])),
            "diff": result.diff,
            "ci_low": result.ci_low,
            "ci_high": result.ci_high,
            "t": result.t,
            "p_value": result.p_value,
            "significant": bool(result.p_value < SIGNIFICANCE_LEVEL) if math.isfinite(result.p_value) else False,
        })
    return rows


def odds_rag_correlation(odds: Sequence[float], rags: Sequence[float]) -> Tuple[float, float]:
    """Spearman correlation between per-run mean OddsRatio and RAG; NaN below 3 usable runs."""
    odds = np.asarray(odds, dtype=np.float64)
    rags = np.asarray(rags, dtype=np.float64)
    usable = np.isfinite(odds) & np.isfinite(rags)
    if usable.sum() < 3:
        return math.nan, math.nan
    rho, p_value = stats.spearmanr(odds[usable], rags[usable])
    return float(rho), float(p_value)


def peak_ks(exposure_peaks: Sequence[float], replay_peaks: Sequence[float]) -> Tuple[float, float]:
    """Two-sample KS statistic and p-value; NaN for an empty sample."""
    if not len(exposure_peaks) or not len(replay_peaks):
        return math.nan, math.nan
    result = stats.ks_2samp(exposure_peaks, replay_peaks)
    return float(result.statistic), float(result.pvalue)


def reach_peak_ks(records: Iterable[RsdEpisodeRecord]) -> Tuple[float, float]:
    """Two-sample KS test between Exposure and Replay Reach peaks."""
    records = list(records)
    return peak_ks([max(r.exposure.reach) for r in records], [max(r.replay.reach) for r in records])
