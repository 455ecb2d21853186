"""
Executable checks of the replay-suppression theory on small explicit instances.
Each checker also runs a constructed violation and only passes when it is caught.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy import stats

from ..handler.deformation import (
    DeformationSpec, conductance_vector, odds_contraction_bound, reweight_categorical, safe_mass_bound
)
from ..handler.graph_env import categorical_index
from ..handler.harm_memory import FieldParams, HarmFields
from ..utility.errors import HypothesisViolationError, InvalidArgumentError
from ..utility.streams import PURPOSE_VERIFY, UniformStream, make_rng, phase_stream
from ..utility.utils import hash_arrays

MAX_TOY_STATES = 64
ROW_TOL = 1e-12
SLACK = 1e-12
KS_ALPHA = 0.01
MAX_CHAIN = 5


@dataclass
class CheckReport:
    """Outcome of one verification check."""
    name: str
    trials: int
    violations: int
    passed: bool
    details: Dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> Dict[str, Any]:
        return {"name": self.name, "trials": self.trials, "violations": self.violations,
                "passed": self.passed, "details": dict(self.details)}

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: {self.violations} violations in {self.trials} trials"


# ==================================================
#                     TOY MDPs
# --------------------------------------------------
# ==================================================

def _check_rows(kernel: np.ndarray, name: str) -> None:
    if np.any(kernel < 0):
        raise InvalidArgumentError(f"{name} has negative entries.")
    worst = float(np.abs(kernel.sum(axis=-1) - 1.0).max())
    if worst > ROW_TOL:
        raise InvalidArgumentError(f"{name} rows must sum to 1 within {ROW_TOL}, worst deviation {worst!r}.")


@dataclass(frozen=True, eq=False)
class ToyMdp:
    """
    A small MDP with an explicit kernel P0(x'|x, a) of shape (S, A, S).

    The latent counter xi counts environment steps and never resets with the
    agent. ``xi_kernel`` is the law used once xi >= ``xi_threshold``; a toy with
    no ``xi_kernel`` (or one equal to ``kernel``) is stationary-observable.

    Args:
        kernel (np.ndarray): Transition tables, rows summing to 1.
        harmful (np.ndarray): Boolean mask of harmful states.
        region_map (np.ndarray): Region index of every state.
        start (int): Initial state of each phase.
        xi_kernel (Optional[np.ndarray]): Alternative law switched in by xi.
        xi_threshold (int): First xi at which ``xi_kernel`` applies.
    """
    kernel: np.ndarray
    harmful: np.ndarray
    region_map: np.ndarray
    start: int = 0
    xi_kernel: Optional[np.ndarray] = None
    xi_threshold: int = 0

    def __post_init__(self):
        kernel = np.asarray(self.kernel, dtype=np.float64)
        if kernel.ndim != 3 or kernel.shape[0] != kernel.shape[2]:
            raise InvalidArgumentError(f"Kernel must have shape (S, A, S), got {kernel.shape}.")
        if not 1 <= kernel.shape[0] <= MAX_TOY_STATES:
            raise InvalidArgumentError(f"Toy MDPs hold 1 to {MAX_TOY_STATES} states, got {kernel.shape[0]}.")
        _check_rows(kernel, "Kernel")
        if self.xi_kernel is not None:
            xi_kernel = np.asarray(self.xi_kernel, dtype=np.float64)
            if xi_kernel.shape != kernel.shape:
                raise InvalidArgumentError("The xi kernel must match the nominal kernel's shape.")
            _check_rows(xi_kernel, "Xi kernel")
            object.__setattr__(self, "xi_kernel", xi_kernel)
        if not 0 <= self.start < kernel.shape[0]:
            raise InvalidArgumentError(f"Start state {self.start} is outside the state set.")
        object.__setattr__(self, "kernel", kernel)
        object.__setattr__(self, "harmful", np.asarray(self.harmful, dtype=bool))
        object.__setattr__(self, "region_map", np.asarray(self.region_map, dtype=np.int64))

    @property
    def state_count(self) -> int:
        return self.kernel.shape[0]

    @property
    def action_count(self) -> int:
        return self.kernel.shape[1]

    @property
    def stationary(self) -> bool:
        return self.xi_kernel is None or bool(np.array_equal(self.xi_kernel, self.kernel))

    def law(self, state: int, action: int, xi: int) -> np.ndarray:
        if self.xi_kernel is not None and xi >= self.xi_threshold:
            return self.xi_kernel[state, action]
        return self.kernel[state, action]

    def with_xi_shift(self, state: int, action: int, target: int, amount: float = 0.2,
                      threshold: int = 0) -> "ToyMdp":
        """
        Counterexample toy: once xi >= threshold, P(target | state, action)
        rises by ``amount``, the other destinations giving it up in proportion.
        """
        row = self.kernel[state, action].copy()
        others = row.copy()
        others[target] = 0.0
        if others.sum() < amount:
            raise InvalidArgumentError(f"Only {others.sum():.3f} mass is available to shift, asked for {amount}.")
        shifted = row - amount * others / others.sum()
        shifted[target] += amount
        xi_kernel = self.kernel.copy()
        xi_kernel[state, action] = shifted
        return replace(self, xi_kernel=xi_kernel, xi_threshold=threshold)


def chain_toy(states: int = 3, forward: float = 0.7, back: float = 0.6) -> ToyMdp:
    """
    A line of states with two actions: 0 steps right with ``forward``
    probability, 1 steps left with ``back`` probability; otherwise stay. The
    last state is harmful.
    """
    kernel = np.zeros((states, 2, states))
    for x in range(states):
        right, left = min(x + 1, states - 1), max(x - 1, 0)
        kernel[x, 0, right] += forward
        kernel[x, 0, x] += 1.0 - forward
        kernel[x, 1, left] += back
        kernel[x, 1, x] += 1.0 - back
    harmful = np.zeros(states, dtype=bool)
    harmful[-1] = True
    return ToyMdp(kernel, harmful, np.arange(states))


def cycle_toy(states: int = 4) -> ToyMdp:
    """Deterministic toy: action a moves x to (x + a + 1) mod S."""
    kernel = np.zeros((states, 2, states))
    for x in range(states):
        for a in range(2):
            kernel[x, a, (x + a + 1) % states] = 1.0
    harmful = np.zeros(states, dtype=bool)
    harmful[-1] = True
    return ToyMdp(kernel, harmful, np.arange(states))


def gateway_chain_toy(entry_probs: Sequence[float]) -> ToyMdp:
    """
    Chain 0 -> 1 -> ... -> k with a safe absorbing sink.

    From state i < k the single action enters i + 1 with ``entry_probs[i]``
    and falls into the sink otherwise. States 1..k are harmful, and reaching k
    takes k consecutive harmful entries.
    """
    k = len(entry_probs)
    sink = k + 1
    kernel = np.zeros((k + 2, 1, k + 2))
    for i, p0 in enumerate(entry_probs):
        kernel[i, 0, i + 1] = p0
        kernel[i, 0, sink] = 1.0 - p0
    kernel[k, 0, k] = 1.0
    kernel[sink, 0, sink] = 1.0
    harmful = np.zeros(k + 2, dtype=bool)
    harmful[1:k + 1] = True
    return ToyMdp(kernel, harmful, np.arange(k + 2))


def uniform_policy(toy: ToyMdp) -> np.ndarray:
    return np.full((toy.state_count, toy.action_count), 1.0 / toy.action_count)


def scripted_table(toy: ToyMdp, action: int) -> np.ndarray:
    table = np.zeros((toy.state_count, toy.action_count))
    table[:, action] = 1.0
    return table


def deformed_kernel(toy: ToyMdp, fields: HarmFields, spec: DeformationSpec) -> ToyMdp:
    """The toy with every row reweighted by the destinations' conductance."""
    psi = conductance_vector(fields, spec)[toy.region_map]
    kernel = np.empty_like(toy.kernel)
    for x in range(toy.state_count):
        for a in range(toy.action_count):
            kernel[x, a] = reweight_categorical(toy.kernel[x, a], psi)
    return replace(toy, kernel=kernel, xi_kernel=None)


def reach_probability(toy: ToyMdp, policy: np.ndarray, steps: int, target: int) -> float:
    """P(state = target after ``steps`` steps from the start), from kernel powers."""
    markov = np.einsum("xa,xay->xy", policy, toy.kernel)
    return float(np.linalg.matrix_power(markov, steps)[toy.start, target])


# ==================================================
#                      NO-GO
# --------------------------------------------------
# ==================================================

def _check_policy(policy: np.ndarray, toy: ToyMdp) -> np.ndarray:
    policy = np.asarray(policy, dtype=np.float64)
    if policy.shape != (toy.state_count, toy.action_count):
        raise InvalidArgumentError(f"Policy table must have shape {(toy.state_count, toy.action_count)}, got {policy.shape}.")
    _check_rows(policy, "Policy table")
    return policy


def _rollout(toy: ToyMdp, policy: np.ndarray, state: int, steps: int, xi: int, stream: UniformStream):
    states = np.empty(steps + 1, dtype=np.int64)
    actions = np.empty(steps, dtype=np.int64)
    states[0] = state
    for t in range(steps):
        u = stream.take(2)
        action = categorical_index(policy[state], u[0])
        state = categorical_index(toy.law(state, action, xi), u[1])
        actions[t] = action
        states[t + 1] = state
        xi += 1
    return states, actions, xi


def harmful_visits(toy: ToyMdp, states: np.ndarray, actions: np.ndarray) -> float:
    """Default functional: number of harmful states visited after the start."""
    return float(toy.harmful[states[1:]].sum())


def check_no_go(toy: ToyMdp, policy: np.ndarray, episodes: int = 100, rng_mode: str = "paired",
                horizon: int = 20, decay: int = 5, seed: int = 0,
                functional: Optional[Callable[[ToyMdp, np.ndarray, np.ndarray], float]] = None,
                alpha: float = KS_ALPHA, enforce_hypothesis: bool = True) -> CheckReport:
    """
    Run Exposure, Decay and Replay on a toy MDP and compare the two rollouts.

    The agent restarts from ``toy.start`` in Replay; xi keeps counting. In
    paired mode Exposure and Replay read the same uniforms and every
    trajectory pair must match exactly; in independent mode the functional's
    samples must pass a two-sample Kolmogorov-Smirnov test at ``alpha``.

    Args:
        toy (ToyMdp): The environment.
        policy (np.ndarray): Frozen Markov policy as an (S, A) table.
        episodes (int): Number of episodes.
        rng_mode (str): 'paired' or 'independent'.
        horizon (int): Exposure and Replay length.
        decay (int): Decay length.
        seed (int): Seed of the episode streams.
        functional (Optional[Callable]): Trajectory statistic for the KS test.
        alpha (float): KS significance level.
        enforce_hypothesis (bool): Refuse non-stationary toys.

    Returns:
        CheckReport: ``violations`` counts mismatched pairs (paired) or is 1
        when the KS test rejects (independent).

    Raises:
        HypothesisViolationError: If the toy is not stationary-observable and
            ``enforce_hypothesis`` is set.
    """
    if rng_mode not in ("paired", "independent"):
        raise InvalidArgumentError(f"Unknown RNG mode '{rng_mode}'.")
    if episodes < 1:
        raise InvalidArgumentError(f"The no-go check needs at least one episode, got {episodes}.")
    if enforce_hypothesis and not toy.stationary:
        raise HypothesisViolationError("The toy's kernel depends on the latent counter xi; the no-go check needs a stationary-observable environment.")
    policy = _check_policy(policy, toy)
    functional = functional or harmful_visits
    paired = rng_mode == "paired"
    identical = 0
    exp_values, rep_values = [], []
    for episode in range(episodes):
        key = (PURPOSE_VERIFY, seed, episode)
        exposure_stream = phase_stream(key + (0,), paired, 2 * horizon)
        exp_states, exp_actions, xi = _rollout(toy, policy, toy.start, horizon, 0, exposure_stream)
        decay_stream = phase_stream(key + (1,), False, 2 * decay)
        last = int(exp_states[-1])
        _, _, xi = _rollout(toy, policy, last, decay, xi, decay_stream)
        replay_stream = phase_stream(key + (0 if paired else 2,), paired, 2 * horizon)
        rep_states, rep_actions, _ = _rollout(toy, policy, toy.start, horizon, xi, replay_stream)
        if hash_arrays((exp_states, exp_actions)) == hash_arrays((rep_states, rep_actions)):
            identical += 1
        exp_values.append(functional(toy, exp_states, exp_actions))
        rep_values.append(functional(toy, rep_states, rep_actions))

    details: Dict[str, Any] = {"rng_mode": rng_mode, "identical": identical, "stationary": toy.stationary,
                               "exposure_mean": float(np.mean(exp_values)), "replay_mean": float(np.mean(rep_values))}
    if paired:
        violations = episodes - identical
    else:
        result = stats.ks_2samp(exp_values, rep_values)
        details["ks_statistic"] = float(result.statistic)
        details["p_value"] = float(result.pvalue)
        violations = int(result.pvalue < alpha)
    return CheckReport(f"no_go[{rng_mode}]", episodes, violations, violations == 0, details)


def no_go_negative_control(toy: ToyMdp, policy: np.ndarray, episodes: int = 100, horizon: int = 20,
                           decay: int = 5, seed: int = 0, state: int = 0, action: int = 0,
                           target: int = 1) -> CheckReport:
    """
    Inject a xi-dependent kernel that only Replay sees and run the paired
    check with the hypothesis guard off; it passes when the check fails.
    """
    shifted = toy.with_xi_shift(state, action, target, 0.2, threshold=horizon + decay)
    inner = check_no_go(shifted, policy, episodes, "paired", horizon, decay, seed, enforce_hypothesis=False)
    detected = not inner.passed
    return CheckReport("no_go_negative_control", episodes, 0 if detected else 1, detected,
                       {"mismatched_pairs": inner.violations})


# ==================================================
#              ODDS CONTRACTION / SAFE MASS
# --------------------------------------------------
# ==================================================

def _fields(G: np.ndarray, H: np.ndarray) -> HarmFields:
    return HarmFields(np.asarray(G, dtype=np.float64), np.asarray(H, dtype=np.float64), FieldParams())


def _unclipped_spec(w_G: float, w_H: float) -> DeformationSpec:
    return DeformationSpec(w_G=w_G, w_H=w_H, psi_min=1e-300, mode="full")


def _harmful_mask(rng: np.random.Generator, n: int) -> np.ndarray:
    mask = np.zeros(n, dtype=bool)
    mask[rng.choice(n, size=int(rng.integers(1, n)), replace=False)] = True
    return mask


def _gapped_scar(rng: np.random.Generator, harmful: np.ndarray, h_zero: float, h_star: float) -> np.ndarray:
    """Harmful entries in [h*, h* + 1], safe ones in [0, h0], with both edges of the gap attained."""
    H = np.where(harmful, rng.uniform(h_star, h_star + 1.0, harmful.size), rng.uniform(0.0, h_zero, harmful.size))
    H[np.flatnonzero(harmful)[0]] = h_star
    H[np.flatnonzero(~harmful)[0]] = h_zero
    return H


def _nominal(rng: np.random.Generator, n: int) -> np.ndarray:
    # small concentrations give near-degenerate rows, large ones balanced rows
    concentration = rng.choice([0.2, 1.0, 5.0])
    return rng.dirichlet(np.full(n, concentration))


def _split(probs: np.ndarray, harmful: np.ndarray):
    return float(probs[harmful].sum()), float(probs[~harmful].sum())


def odds_trial(nominal: np.ndarray, harmful: np.ndarray, G: np.ndarray, H: np.ndarray,
               w_G: float, w_H: float):
    """(p/q, p0/q0) for one reweighted categorical."""
    psi = conductance_vector(_fields(G, H), _unclipped_spec(w_G, w_H))
    p, q = _split(reweight_categorical(nominal, psi), harmful)
    p0, q0 = _split(nominal, harmful)
    return p / q, p0 / q0


def check_odds_contraction(trials: int, rng: np.random.Generator, w_G: float = 1.0,
                           uniform_G: bool = True) -> CheckReport:
    """
    Randomized check of p/q <= exp(-w_H (h* - h0)) p0/q0.

    Each trial draws a nominal categorical over 3 to 20 destinations, a
    nonempty proper harmful set, a scar with gap h* - h0 in [0.1, 3] and a
    weight w_H in [0.25, 4]. With ``uniform_G`` off, G varies across
    destinations and the bound is widened by exp(w_G (max G - min G)).

    The report also covers the two-destination equality case and a
    reversed-gap control that has to violate the bound.
    """
    if trials < 1:
        raise InvalidArgumentError(f"trials must be >= 1, got {trials}.")
    violations, worst, drawn = 0, 0.0, 0
    while drawn < trials:
        n = int(rng.integers(3, 21))
        nominal = _nominal(rng, n)
        harmful = _harmful_mask(rng, n)
        p0, q0 = _split(nominal, harmful)
        if p0 <= 0 or q0 <= 0:
            continue
        drawn += 1
        h_zero = rng.uniform(0.0, 1.0)
        h_star = h_zero + rng.uniform(0.1, 3.0)
        w_H = rng.uniform(0.25, 4.0)
        H = _gapped_scar(rng, harmful, h_zero, h_star)
        G = np.full(n, rng.uniform(0.0, 1.0)) if uniform_G else rng.uniform(0.0, 1.0, n)
        ratio, nominal_odds = odds_trial(nominal, harmful, G, H, w_G, w_H)
        bound = odds_contraction_bound(w_H, h_star, h_zero) * math.exp(w_G * float(G.max() - G.min()))
        rhs = bound * nominal_odds
        if ratio > rhs + SLACK * max(1.0, rhs):
            violations += 1
        worst = max(worst, ratio / rhs)

    eq_ratio, eq_nominal = odds_trial(np.array([0.5, 0.5]), np.array([True, False]),
                                      np.zeros(2), np.array([1.0, 0.0]), 0.0, 2.0)
    equality_error = abs(eq_ratio - odds_contraction_bound(2.0, 1.0, 0.0) * eq_nominal)

    rev_ratio, rev_nominal = odds_trial(np.array([0.5, 0.5]), np.array([True, False]),
                                        np.zeros(2), np.array([0.0, 1.0]), 0.0, 2.0)
    control_detected = rev_ratio > odds_contraction_bound(2.0, 1.0, 0.0) * rev_nominal + SLACK

    clipped = DeformationSpec(w_G=0.0, w_H=2.0, psi_min=0.01)
    psi = conductance_vector(_fields(np.zeros(2), np.array([10.0, 0.0])), clipped)
    clipped_p, clipped_q = _split(reweight_categorical(np.array([0.5, 0.5]), psi), np.array([True, False]))

    passed = violations == 0 and equality_error <= SLACK and control_detected
    details = {
        "uniform_G": uniform_G,
        "worst_ratio_to_bound": worst,
        "equality_ratio": eq_ratio,
        "equality_error": equality_error,
        "control_detected": control_detected,
        "clipped_odds": clipped_p / clipped_q,
        "clipped_unclipped_bound": odds_contraction_bound(2.0, 10.0, 0.0),
    }
    name = "odds_contraction" if uniform_G else "odds_contraction[nonuniform_G]"
    return CheckReport(name, trials, violations, passed, details)


def check_safe_mass(trials: int, rng: np.random.Generator, w_G: float = 1.0) -> CheckReport:
    """
    Randomized check of the safe-mass floor.

    Each trial fixes a floor delta in [0.05, 0.99], a nominal safe mass
    q0 >= delta, a gapped scar and uniform G, and checks
    q >= delta e^{-w_H h0} / (delta e^{-w_H h0} + (1 - delta) e^{-w_H h*}).
    It also checks that widening the gap by 5 strictly raises a bound below 1.
    """
    if trials < 1:
        raise InvalidArgumentError(f"trials must be >= 1, got {trials}.")
    violations, monotone_failures, tightest = 0, 0, math.inf
    for _ in range(trials):
        n = int(rng.integers(3, 21))
        harmful = _harmful_mask(rng, n)
        delta = rng.uniform(0.05, 0.99)
        target_q0 = rng.uniform(delta, 1.0)
        nominal = np.zeros(n)
        nominal[~harmful] = target_q0 * rng.dirichlet(np.ones(int((~harmful).sum())))
        nominal[harmful] = (1.0 - target_q0) * rng.dirichlet(np.ones(int(harmful.sum())))
        nominal = nominal / nominal.sum()
        _, q0 = _split(nominal, harmful)
        delta = min(delta, q0)
        h_zero = rng.uniform(0.0, 1.0)
        h_star = h_zero + rng.uniform(0.1, 3.0)
        w_H = rng.uniform(0.25, 4.0)
        H = _gapped_scar(rng, harmful, h_zero, h_star)
        G = np.full(n, rng.uniform(0.0, 1.0))
        psi = conductance_vector(_fields(G, H), _unclipped_spec(w_G, w_H))
        _, q = _split(reweight_categorical(nominal, psi), harmful)
        bound = safe_mass_bound(delta, w_H, h_zero, h_star)
        if q < bound - SLACK:
            violations += 1
        tightest = min(tightest, q - bound)
        wider = safe_mass_bound(delta, w_H, h_zero, h_star + 5.0)
        if bound < 1.0 and not bound < wider <= 1.0:
            monotone_failures += 1

    # nominal safe mass 0.1 under a claimed floor of 0.9
    psi = conductance_vector(_fields(np.zeros(2), np.array([0.1, 0.0])), _unclipped_spec(0.0, 2.0))
    _, control_q = _split(reweight_categorical(np.array([0.9, 0.1]), psi), np.array([True, False]))
    control_detected = control_q < safe_mass_bound(0.9, 2.0, 0.0, 0.1) - SLACK

    passed = violations == 0 and monotone_failures == 0 and control_detected
    details = {
        "tightest_margin": tightest,
        "monotone_failures": monotone_failures,
        "control_detected": control_detected,
    }
    return CheckReport("safe_mass", trials, violations, passed, details)


# ==================================================
#                   COMPOUNDING
# --------------------------------------------------
# ==================================================

def chain_reach(entry_probs: Sequence[float], h_zero: float, h_star: float, w_H: float):
    """
    Exact nominal and deformed probabilities of reaching the end of a
    gateway chain, with scar h* on the chain and h0 on the sink.
    """
    toy = gateway_chain_toy(entry_probs)
    k = len(entry_probs)
    H = np.where(toy.harmful, h_star, h_zero)
    deformed = deformed_kernel(toy, _fields(np.zeros(toy.state_count), H), _unclipped_spec(0.0, w_H))
    policy = uniform_policy(toy)
    return reach_probability(toy, policy, k, k), reach_probability(deformed, policy, k, k)


def compounding_bound(entry_probs: Sequence[float], h_zero: float, h_star: float, w_H: float) -> float:
    """
    exp(-k w_H (h* - h0)) times the product of the nominal per-step odds.

    Bounds the deformed chain reach. The same factor times the nominal reach
    probability does not: one step with p0 = 1/2 already exceeds it.
    """
    p0 = np.asarray(entry_probs, dtype=np.float64)
    return odds_contraction_bound(w_H, h_star, h_zero) ** p0.size * float(np.prod(p0 / (1.0 - p0)))


def check_compounding(trials: int, rng: np.random.Generator, max_chain: int = MAX_CHAIN) -> CheckReport:
    """
    Per-step contraction compounds over a chain: for every length k <= max_chain,
    the deformed reach probability stays below exp(-k gap w_H) times the
    product of nominal odds. A reversed-gap chain is the control.
    """
    if trials < 1:
        raise InvalidArgumentError(f"trials must be >= 1, got {trials}.")
    violations, checked = 0, 0
    ratios: List[float] = []
    for k in range(1, max_chain + 1):
        for _ in range(trials):
            entry = rng.uniform(0.05, 0.95, k)
            h_zero = rng.uniform(0.0, 1.0)
            h_star = h_zero + rng.uniform(0.1, 3.0)
            w_H = rng.uniform(0.25, 4.0)
            nominal, deformed = chain_reach(entry, h_zero, h_star, w_H)
            bound = compounding_bound(entry, h_zero, h_star, w_H)
            if deformed > bound * (1.0 + SLACK):
                violations += 1
            ratios.append(deformed / nominal)
            checked += 1

    entry = np.full(3, 0.5)
    _, reversed_reach = chain_reach(entry, 1.0, 0.0, 2.0)
    control_detected = reversed_reach > compounding_bound(entry, 0.0, 1.0, 2.0) * (1.0 + SLACK)

    details = {
        "max_chain": max_chain,
        "mean_reach_ratio": float(np.mean(ratios)),
        "control_detected": control_detected,
    }
    return CheckReport("compounding", checked, violations, violations == 0 and control_detected, details)


# ==================================================
#                      SUITE
# --------------------------------------------------
# ==================================================

def run_verification(trials: int = 10_000, episodes: int = 100, seed: int = 0) -> List[CheckReport]:
    """
    The whole verification suite, deterministic in ``seed``.

    Args:
        trials (int): Randomized trials per bound check.
        episodes (int): Episodes per no-go check.
        seed (int): Seed of every stream used.

    Returns:
        List[CheckReport]: One report per check, in a fixed order.
    """
    chain = chain_toy()
    cycle = cycle_toy()
    reports = [
        check_no_go(chain, uniform_policy(chain), episodes, "paired", seed=seed),
        check_no_go(chain, uniform_policy(chain), episodes, "independent", seed=seed),
        check_no_go(cycle, scripted_table(cycle, 1), episodes, "independent", seed=seed),
        no_go_negative_control(chain, uniform_policy(chain), episodes, seed=seed),
        check_odds_contraction(trials, make_rng(PURPOSE_VERIFY, seed, 1)),
        check_odds_contraction(trials, make_rng(PURPOSE_VERIFY, seed, 2), uniform_G=False),
        check_safe_mass(trials, make_rng(PURPOSE_VERIFY, seed, 3)),
        check_compounding(max(1, trials // 100), make_rng(PURPOSE_VERIFY, seed, 4)),
    ]
    reports[2].name = "no_go[deterministic]"
    for report in reports:
        logging.info(report.summary())
    return reports
