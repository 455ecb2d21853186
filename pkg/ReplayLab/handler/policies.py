"""
Policies (scripted, softmax, window history) and the constrained policy-gradient trainer.
"""

import logging
from collections import deque
from dataclasses import asdict, dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np

from ..utility.errors import InvalidArgumentError, ProtocolError
from ..utility.streams import PURPOSE_POLICY, make_rng
from ..utility.utils import hash_arrays, hash_json
from .graph_env import OBS_DIM, Action, categorical_index

ACTION_COUNT = 3
FIELD_DIM = 5
KINDS = ("scripted", "softmax_linear", "window_history")
FEATURE_MODES = ("obs", "augmented")
COST_MODES = ("none", "instantaneous", "delayed", "rapo")
HIDDEN_INIT_SCALE = 0.1


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def field_features(fields, frontier_psi: float) -> np.ndarray:
    """Field summary fed to augmented policies: (log1p sum G, log1p sum H, max G, max H, mean frontier psi)."""
    return np.array([
        np.log1p(fields.G.sum()), np.log1p(fields.H.sum()),
        fields.G.max(), fields.H.max(), frontier_psi,
    ], dtype=np.float64)


class Policy:
    """
    Action distribution over {Aggressive, Moderate, Conservative}.

    Args:
        kind (str): 'scripted', 'softmax_linear' or 'window_history'.
        feature_mode (str): 'obs' (x only) or 'augmented' (x plus field summary).
        window (int): History length W for 'window_history'.
        hidden_units (int): 0 for a linear policy, otherwise one tanh layer of this width.
        scripted_action (Optional[Action]): The action a scripted policy always takes.
        seed (int): Seed for the hidden-layer initialisation.

    Weights start so that every learning policy is uniform.
    """

    def __init__(self, kind: str = "softmax_linear", feature_mode: str = "obs", window: int = 50,
                 hidden_units: int = 0, scripted_action: Optional[Action] = None, seed: int = 0):
        if kind not in KINDS:
            raise InvalidArgumentError(f"Unknown policy kind '{kind}'.")
        if feature_mode not in FEATURE_MODES:
            raise InvalidArgumentError(f"Unknown feature mode '{feature_mode}'.")
        if kind == "scripted" and scripted_action is None:
            raise InvalidArgumentError("A scripted policy needs its action.")
        if kind == "window_history" and window < 1:
            raise InvalidArgumentError(f"Window must be at least 1, got {window}.")
        self.kind = kind
        self.feature_mode = feature_mode
        self.window = window if kind == "window_history" else 1
        self.hidden_units = int(hidden_units) if kind != "scripted" else 0
        self.scripted_action = Action(scripted_action) if scripted_action is not None else None
        self.base_dim = OBS_DIM + (FIELD_DIM if feature_mode == "augmented" else 0)
        self.input_dim = self.base_dim * self.window
        self.frozen = False
        self.params = self._init_params(seed)
        self.reset_memory()

    def _init_params(self, seed: int) -> Dict[str, np.ndarray]:
        if self.kind == "scripted":
            return {}
        if self.hidden_units:
            rng = make_rng(PURPOSE_POLICY, seed)
            return {
                "W1": HIDDEN_INIT_SCALE * rng.standard_normal((self.hidden_units, self.input_dim)),
                "b1": np.zeros(self.hidden_units),
                "W2": np.zeros((ACTION_COUNT, self.hidden_units)),
                "b2": np.zeros(ACTION_COUNT),
            }
        return {"W": np.zeros((ACTION_COUNT, self.input_dim)), "b": np.zeros(ACTION_COUNT)}

    # ==================================================
    #                   MEMORY
    # --------------------------------------------------
    # ==================================================

    def reset_memory(self) -> None:
        """Restore the initial memory: W - 1 zero feature vectors (empty for Markov kinds)."""
        self.memory = deque([np.zeros(self.base_dim)] * (self.window - 1), maxlen=max(self.window - 1, 0))

    def memory_state(self) -> Tuple[Tuple[float, ...], ...]:
        return tuple(tuple(v.tolist()) for v in self.memory)

    def base_features(self, obs: np.ndarray, field_summary: Optional[np.ndarray] = None) -> np.ndarray:
        obs = np.asarray(obs, dtype=np.float64)
        if self.feature_mode == "augmented":
            if field_summary is None:
                raise InvalidArgumentError("Augmented policy called without a field summary.")
            return np.concatenate([obs, np.asarray(field_summary, dtype=np.float64)])
        return obs

    def features(self, obs: np.ndarray, field_summary: Optional[np.ndarray] = None) -> np.ndarray:
        """Policy input at the current step, without touching memory."""
        base = self.base_features(obs, field_summary)
        if self.window == 1:
            return base
        return np.concatenate(list(self.memory) + [base])

    # ==================================================
    #                 FORWARD / BACKWARD
    # --------------------------------------------------
    # ==================================================

    def forward(self, X: np.ndarray) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
        """Logits for a batch of feature rows, plus the cache ``backward`` needs."""
        X = np.atleast_2d(X)
        if self.hidden_units:
            hidden = np.tanh(X @ self.params["W1"].T + self.params["b1"])
            return hidden @ self.params["W2"].T + self.params["b2"], {"X": X, "hidden": hidden}
        return X @ self.params["W"].T + self.params["b"], {"X": X}

    def backward(self, cache: Dict[str, np.ndarray], dlogits: np.ndarray) -> Dict[str, np.ndarray]:
        X = cache["X"]
        if self.hidden_units:
            hidden = cache["hidden"]
            dpre = (dlogits @ self.params["W2"]) * (1.0 - hidden ** 2)
            return {
                "W1": dpre.T @ X, "b1": dpre.sum(axis=0),
                "W2": dlogits.T @ hidden, "b2": dlogits.sum(axis=0),
            }
        return {"W": dlogits.T @ X, "b": dlogits.sum(axis=0)}

    def probabilities(self, X: np.ndarray) -> np.ndarray:
        if self.kind == "scripted":
            probs = np.zeros((np.atleast_2d(X).shape[0], ACTION_COUNT))
            probs[:, int(self.scripted_action)] = 1.0
            return probs
        return softmax(self.forward(X)[0])

    def apply_gradient(self, grads: Dict[str, np.ndarray], lr: float) -> None:
        """Gradient ascent step."""
        if self.frozen:
            raise ProtocolError("Refusing to update the weights of a frozen policy.")
        for name, grad in grads.items():
            self.params[name] = self.params[name] + lr * grad

    def param_vector(self) -> np.ndarray:
        if not self.params:
            return np.zeros(0)
        return np.concatenate([self.params[k].ravel() for k in sorted(self.params)])

    def set_param_vector(self, vector: np.ndarray) -> None:
        if self.frozen:
            raise ProtocolError("Refusing to update the weights of a frozen policy.")
        offset = 0
        for name in sorted(self.params):
            size = self.params[name].size
            self.params[name] = vector[offset:offset + size].reshape(self.params[name].shape).copy()
            offset += size

    # ==================================================
    #                   FREEZING / I/O
    # --------------------------------------------------
    # ==================================================

    def freeze(self) -> "Policy":
        self.frozen = True
        return self

    def unfreeze(self) -> "Policy":
        self.frozen = False
        return self

    def weights_hash(self) -> str:
        return hash_arrays(self.params[k] for k in sorted(self.params))

    def to_json(self, training_config_hash: str = "") -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "feature_mode": self.feature_mode,
            "window": self.window,
            "hidden_units": self.hidden_units,
            "scripted_action": None if self.scripted_action is None else self.scripted_action.name,
            "weights": {k: v.tolist() for k, v in sorted(self.params.items())},
            "training_config_hash": training_config_hash,
        }

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> "Policy":
        scripted = data.get("scripted_action")
        policy = cls(kind=data["kind"], feature_mode=data["feature_mode"], window=data.get("window", 1),
                     hidden_units=data.get("hidden_units", 0),
                     scripted_action=Action[scripted] if scripted else None)
        for name, values in data.get("weights", {}).items():
            policy.params[name] = np.asarray(values, dtype=np.float64)
        return policy


def scripted_policy(action: Action) -> Policy:
    return Policy(kind="scripted", scripted_action=action)


def action_distribution(policy: Policy, obs: np.ndarray, field_summary: Optional[np.ndarray] = None) -> np.ndarray:
    """Probability vector over the three actions at the current step."""
    return policy.probabilities(policy.features(obs, field_summary))[0]


def mask_distribution(probs: np.ndarray, allowed: np.ndarray) -> np.ndarray:
    """Zero out blocked actions and renormalise; an all-blocked mask falls back to Conservative."""
    allowed = np.asarray(allowed, dtype=bool)
    if not allowed.any():
        allowed = np.zeros(ACTION_COUNT, dtype=bool)
        allowed[Action.CONSERVATIVE] = True
    masked = np.where(allowed, probs, 0.0)
    total = masked.sum()
    if total <= 0:
        return allowed / allowed.sum()
    return masked / total


def sample_action(policy: Policy, obs: np.ndarray, field_summary: Optional[np.ndarray], rng,
                  allowed: Optional[np.ndarray] = None, probs: Optional[np.ndarray] = None) -> Tuple[Action, Any]:
    """
    Draw an action and advance the policy memory.

    Exactly one uniform is taken from ``rng`` (anything with ``random()``),
    scripted policies included. Frozen policies still update their memory.
    ``allowed`` masks blocked actions out of the distribution first.
    ``probs`` is a distribution already computed (and masked) for this step;
    it is sampled as given.
    """
    if probs is None:
        probs = action_distribution(policy, obs, field_summary)
        if allowed is not None:
            probs = mask_distribution(probs, allowed)
    action = Action(categorical_index(probs, float(rng.random())))
    if policy.window > 1:
        policy.memory.append(policy.base_features(obs, field_summary))
    return action, policy.memory_state()


# ==================================================
#                    TRAINER
# --------------------------------------------------
# ==================================================

@dataclass
class TrainingConfig:
    steps: int = 200_000
    batch_steps: int = 2048
    episode_steps: int = 200
    gamma: float = 0.95
    gae_lambda: float = 0.95
    clip: float = 0.2
    epochs: int = 4
    policy_lr: float = 0.05
    dual_lr: float = 0.01
    max_grad_norm: float = 1.0
    hidden_units: int = 0
    window: int = 50
    entropy_coef: float = 0.01
    penalty_decay: float = 0.5
    penalty_min: float = 0.0
    trace_decay: float = 0.98
    budget_G: float = 0.0
    budget_H: float = 0.0
    value_ridge: float = 1e-6
    scripted_fallback: Optional[str] = None

    def config_hash(self) -> str:
        return hash_json(asdict(self))


@dataclass
class Batch:
    """
    Collected training steps, concatenated over episodes.

    ``episode_ends`` is True on the last step of each episode. ``g_sums`` is
    the trace mass sum_r G_t before the step, ``scar_costs`` the scar growth
    eta * sum_r max(0, G - tau) of the step.
    """
    features: np.ndarray
    actions: np.ndarray
    logp_old: np.ndarray
    rewards: np.ndarray
    harms: np.ndarray
    g_sums: np.ndarray
    scar_costs: np.ndarray
    episode_ends: np.ndarray

    def __len__(self) -> int:
        return int(self.actions.size)


def eligibility_costs(harms: np.ndarray, episode_ends: np.ndarray, decay: float, window: int) -> np.ndarray:
    """Spread each delayed harm back over the preceding ``window`` steps with weights decay^k."""
    out = np.zeros_like(harms, dtype=np.float64)
    kernel = decay ** np.arange(window + 1)
    start = 0
    for end in np.flatnonzero(episode_ends):
        segment = harms[start:end + 1]
        reversed_costs = np.convolve(segment[::-1], kernel)[:segment.size]
        out[start:end + 1] = reversed_costs[::-1]
        start = end + 1
    return out


def gae(signal: np.ndarray, values: np.ndarray, episode_ends: np.ndarray, gamma: float,
        lam: float) -> Tuple[np.ndarray, np.ndarray]:
    """Generalised advantage estimates and value targets; episodes end with value 0."""
    n = signal.size
    advantages = np.zeros(n)
    running = 0.0
    for t in range(n - 1, -1, -1):
        if episode_ends[t]:
            next_value, running = 0.0, 0.0
        else:
            next_value = values[t + 1]
        delta = signal[t] + gamma * next_value - values[t]
        running = delta + gamma * lam * running
        advantages[t] = running
    return advantages, advantages + values


def surrogate_objective(policy: Policy, X: np.ndarray, actions: np.ndarray, logp_old: np.ndarray,
                        advantages: np.ndarray, clip: float, entropy_coef: float) -> float:
    """Mean clipped surrogate plus entropy bonus."""
    probs = softmax(policy.forward(X)[0])
    logp = np.log(probs[np.arange(actions.size), actions])
    ratio = np.exp(logp - logp_old)
    surrogate = np.minimum(ratio * advantages, np.clip(ratio, 1.0 - clip, 1.0 + clip) * advantages)
    entropy = -(probs * np.log(probs)).sum(axis=1)
    return float(surrogate.mean() + entropy_coef * entropy.mean())


def surrogate_gradient(policy: Policy, X: np.ndarray, actions: np.ndarray, logp_old: np.ndarray,
                       advantages: np.ndarray, clip: float, entropy_coef: float) -> Dict[str, np.ndarray]:
    """Analytic gradient of ``surrogate_objective`` with respect to the policy parameters."""
    logits, cache = policy.forward(X)
    probs = softmax(logits)
    n = actions.size
    rows = np.arange(n)
    logp = np.log(probs[rows, actions])
    ratio = np.exp(logp - logp_old)
    unclipped = np.where(advantages >= 0, ratio <= 1.0 + clip, ratio >= 1.0 - clip)
    onehot = np.zeros_like(probs)
    onehot[rows, actions] = 1.0
    dlogits = (advantages * ratio * unclipped)[:, None] * (onehot - probs)
    log_probs = np.log(probs)
    entropy = -(probs * log_probs).sum(axis=1, keepdims=True)
    dlogits += entropy_coef * (-probs * (log_probs + entropy))
    return policy.backward(cache, dlogits / n)


class TrainerState:
    """
    Trainer for one policy under one cost wiring.

    Args:
        policy (Policy): The policy being trained.
        config (TrainingConfig): Hyperparameters.
        cost_mode (str): 'none' (reward only), 'instantaneous' (penalty on the
            delayed harm as it arrives), 'delayed' (penalty on the harm spread
            back over the delay window), or 'rapo' (trace and scar duals).
        enable_log (bool): Log one INFO line per update.
    """

    def __init__(self, policy: Policy, config: TrainingConfig, cost_mode: str = "none",
                 delay: int = 50, enable_log: bool = False):
        if cost_mode not in COST_MODES:
            raise InvalidArgumentError(f"Unknown cost mode '{cost_mode}'.")
        self.policy = policy
        self.config = config
        self.cost_mode = cost_mode
        self.delay = delay
        self.enable_log = enable_log
        self.value_weights = np.zeros(policy.input_dim + 1)
        self.lambda_G = 0.0
        self.lambda_H = 0.0
        self.penalty = config.penalty_min
        self.updates = 0

    @property
    def frozen(self) -> bool:
        return self.policy.frozen

    def values(self, X: np.ndarray) -> np.ndarray:
        return np.column_stack([X, np.ones(X.shape[0])]) @ self.value_weights

    def costs(self, batch: Batch) -> np.ndarray:
        """Per-step cost the penalty variable multiplies (penalty wirings only)."""
        if self.cost_mode == "delayed":
            return eligibility_costs(batch.harms, batch.episode_ends, self.config.trace_decay, self.delay)
        return batch.harms

    def step_signal(self, batch: Batch) -> np.ndarray:
        if self.cost_mode == "none":
            return batch.rewards.astype(np.float64)
        if self.cost_mode == "rapo":
            return batch.rewards - self.lambda_G * batch.g_sums - self.lambda_H * batch.scar_costs
        return batch.rewards - self.penalty * self.costs(batch)

    def duals(self) -> Dict[str, float]:
        return {"lambda_G": self.lambda_G, "lambda_H": self.lambda_H, "penalty": self.penalty}


def _check_batch(batch: Batch) -> None:
    if len(batch) == 0:
        raise InvalidArgumentError("Training batch is empty.")


def train_epoch(trainer: TrainerState, batch: Batch) -> TrainerState:
    """
    One clipped-surrogate update on ``batch``.

    The per-step signal depends on the cost wiring (reward minus the trace and scar duals for 'rapo');
    advantages are GAE against the value baseline, then normalised.
    """
    if trainer.frozen:
        raise ProtocolError("Cannot train a frozen policy.")
    _check_batch(batch)
    config = trainer.config
    X = batch.features
    signal = trainer.step_signal(batch)
    advantages, returns = gae(signal, trainer.values(X), batch.episode_ends, config.gamma, config.gae_lambda)
    advantages = (advantages - advantages.mean()) / (advantages.std() + 1e-8)
    if trainer.policy.kind != "scripted":
        for _ in range(config.epochs):
            grads = surrogate_gradient(trainer.policy, X, batch.actions, batch.logp_old, advantages,
                                       config.clip, config.entropy_coef)
            norm = np.sqrt(sum(float((g ** 2).sum()) for g in grads.values()))
            scale = min(1.0, config.max_grad_norm / norm) if norm > 0 else 1.0
            trainer.policy.apply_gradient({k: g * scale for k, g in grads.items()}, config.policy_lr)
    X1 = np.column_stack([X, np.ones(X.shape[0])])
    ridge = np.sqrt(config.value_ridge) * np.eye(X1.shape[1])
    trainer.value_weights = np.linalg.lstsq(
        np.vstack([X1, ridge]), np.concatenate([returns, np.zeros(X1.shape[1])]), rcond=None
    )[0]
    trainer.updates += 1
    if trainer.enable_log:
        logging.info(f"Update {trainer.updates}: mean signal {signal.mean():.5f}, duals {trainer.duals()}")
    return trainer


def dual_update(trainer: TrainerState, batch: Batch) -> TrainerState:
    """
    Projected ascent on the multipliers.

    'rapo': lambda_G += lr (mean sum G - budget_G), lambda_H += lr (mean scar
    growth - budget_H), both projected onto [0, inf). Penalty wirings:
    p += lr (mean cost - kappa (p - p_min)), projected onto [p_min, inf), so
    with zero harm p - p_min shrinks by beta = 1 - lr kappa each update.
    """
    _check_batch(batch)
    config = trainer.config
    lr = config.dual_lr
    if trainer.cost_mode == "rapo":
        trainer.lambda_G = max(0.0, trainer.lambda_G + lr * (float(batch.g_sums.mean()) - config.budget_G))
        trainer.lambda_H = max(0.0, trainer.lambda_H + lr * (float(batch.scar_costs.mean()) - config.budget_H))
    elif trainer.cost_mode in ("instantaneous", "delayed"):
        mean_cost = float(trainer.costs(batch).mean())
        drift = mean_cost - config.penalty_decay * (trainer.penalty - config.penalty_min)
        trainer.penalty = max(config.penalty_min, trainer.penalty + lr * drift)
    return trainer


def penalty_contraction(config: TrainingConfig) -> float:
    """beta with p_{t+1} - p_min = beta (p_t - p_min) under zero harm."""
    return 1.0 - config.dual_lr * config.penalty_decay
