"""
RL Core - Self-contained PPO for a vector observation and one discrete action head
Separate tanh MLPs for policy and value, trained with Adam on the clipped surrogate loss
"""

import json
import copy
import logging
from dataclasses import dataclass, field, asdict
from typing import Dict, List, Optional, Tuple

import numpy as np

from config.settings import PpoConfig
from utils import chunked

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "restquest-policy"
CHECKPOINT_VERSION = 1


class ShapeMismatch(ValueError):
    """Observation or mask does not fit the network"""


class NonFiniteLoss(RuntimeError):
    """An update produced NaN or Inf; the parameters were left untouched"""


class CheckpointMismatch(ValueError):
    """Checkpoint does not fit the requested network"""


def _orthogonal(shape: Tuple[int, int], gain: float, rng: np.random.Generator) -> np.ndarray:
    rows, cols = shape
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


@dataclass
class PolicyParams:
    """Weights of the policy network (pi_*) and the value network (vf_*)"""
    weights: Dict[str, np.ndarray]

    @classmethod
    def initialize(cls, n_inputs: int, n_actions: int, hidden: int,
                   rng: np.random.Generator) -> 'PolicyParams':
        """Orthogonal init: sqrt(2) on hidden layers, 0.01 on the policy head, 1 on the value head"""
        weights: Dict[str, np.ndarray] = {}
        for prefix, out_dim, head_gain in (("pi_", n_actions, 0.01), ("vf_", 1, 1.0)):
            weights[prefix + "w1"] = _orthogonal((n_inputs, hidden), np.sqrt(2.0), rng)
            weights[prefix + "b1"] = np.zeros(hidden)
            weights[prefix + "w2"] = _orthogonal((hidden, hidden), np.sqrt(2.0), rng)
            weights[prefix + "b2"] = np.zeros(hidden)
            weights[prefix + "w3"] = _orthogonal((hidden, out_dim), head_gain, rng)
            weights[prefix + "b3"] = np.zeros(out_dim)
        return cls(weights)

    @property
    def n_inputs(self) -> int:
        return self.weights["pi_w1"].shape[0]

    @property
    def n_actions(self) -> int:
        return self.weights["pi_w3"].shape[1]

    @property
    def hidden(self) -> int:
        return self.weights["pi_w1"].shape[1]

    def copy(self) -> 'PolicyParams':
        return PolicyParams({k: v.copy() for k, v in self.weights.items()})

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.weights.values())


def expected_shapes(n_inputs: int, n_actions: int, hidden: int) -> Dict[str, Tuple[int, ...]]:
    shapes: Dict[str, Tuple[int, ...]] = {}
    for prefix, out_dim in (("pi_", n_actions), ("vf_", 1)):
        shapes[prefix + "w1"] = (n_inputs, hidden)
        shapes[prefix + "b1"] = (hidden,)
        shapes[prefix + "w2"] = (hidden, hidden)
        shapes[prefix + "b2"] = (hidden,)
        shapes[prefix + "w3"] = (hidden, out_dim)
        shapes[prefix + "b3"] = (out_dim,)
    return shapes


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------

def _mlp(weights: Dict[str, np.ndarray], prefix: str, x: np.ndarray):
    h1 = np.tanh(x @ weights[prefix + "w1"] + weights[prefix + "b1"])
    h2 = np.tanh(h1 @ weights[prefix + "w2"] + weights[prefix + "b2"])
    out = h2 @ weights[prefix + "w3"] + weights[prefix + "b3"]
    return out, (x, h1, h2)


def _mlp_backward(weights: Dict[str, np.ndarray], prefix: str, cache, dout: np.ndarray,
                  grads: Dict[str, np.ndarray]):
    x, h1, h2 = cache
    grads[prefix + "w3"] = h2.T @ dout
    grads[prefix + "b3"] = dout.sum(axis=0)
    dz2 = (dout @ weights[prefix + "w3"].T) * (1.0 - h2 ** 2)
    grads[prefix + "w2"] = h1.T @ dz2
    grads[prefix + "b2"] = dz2.sum(axis=0)
    dz1 = (dz2 @ weights[prefix + "w2"].T) * (1.0 - h1 ** 2)
    grads[prefix + "w1"] = x.T @ dz1
    grads[prefix + "b1"] = dz1.sum(axis=0)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def policy_forward(params: PolicyParams, obs: np.ndarray,
                   mask: Optional[np.ndarray] = None) -> Tuple[np.ndarray, float]:
    """
    Action distribution and value estimate for one observation

    Args:
        params: Network weights
        obs: Observation vector of length n
        mask: Optional boolean vector, False entries get probability 0

    Returns:
        Tuple[np.ndarray, float]: (action probabilities, value estimate)

    Raises:
        ShapeMismatch: obs or mask length differs from the network input
    """
    obs = np.asarray(obs, dtype=np.float64)
    if obs.ndim != 1 or obs.shape[0] != params.n_inputs:
        raise ShapeMismatch(f"observation shape {obs.shape} does not match input dim {params.n_inputs}")
    logits, _ = _mlp(params.weights, "pi_", obs[None, :])
    logits = logits[0]
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (params.n_actions,):
            raise ShapeMismatch(f"mask shape {mask.shape} does not match {params.n_actions} actions")
        if not mask.any():
            raise ShapeMismatch("mask allows no action")
        logits = np.where(mask, logits, -np.inf)
    probs = np.exp(_log_softmax(logits))
    value, _ = _mlp(params.weights, "vf_", obs[None, :])
    return probs, float(value[0, 0])


def sample_action(probabilities: np.ndarray, rng: np.random.Generator) -> Tuple[int, float]:
    """Categorical draw; returns (action index, ln p(action))"""
    probabilities = np.asarray(probabilities, dtype=np.float64)
    action = int(rng.choice(len(probabilities), p=probabilities))
    return action, float(np.log(probabilities[action]))


# ---------------------------------------------------------------------------
# Rollouts
# ---------------------------------------------------------------------------

@dataclass
class RolloutBuffer:
    """One rollout of (obs, action, log-prob, reward, value, episode end) steps"""
    observations: List[np.ndarray] = field(default_factory=list)
    actions: List[int] = field(default_factory=list)
    log_probs: List[float] = field(default_factory=list)
    rewards: List[float] = field(default_factory=list)
    values: List[float] = field(default_factory=list)
    dones: List[bool] = field(default_factory=list)  # True: episode terminated after this step
    advantages: Optional[np.ndarray] = None
    returns: Optional[np.ndarray] = None

    def add(self, obs: np.ndarray, action: int, log_prob: float, reward: float, value: float,
            done: bool = False):
        self.observations.append(np.asarray(obs, dtype=np.float64))
        self.actions.append(int(action))
        self.log_probs.append(float(log_prob))
        self.rewards.append(float(reward))
        self.values.append(float(value))
        self.dones.append(bool(done))
        self.advantages = None
        self.returns = None

    def __len__(self) -> int:
        return len(self.actions)


def compute_gae(buffer: RolloutBuffer, gamma: float, gae_lambda: float,
                bootstrap_value: float) -> RolloutBuffer:
    """Generalized advantage estimation, resetting the recursion at episode ends"""
    size = len(buffer)
    rewards = np.asarray(buffer.rewards, dtype=np.float64)
    values = np.asarray(buffer.values, dtype=np.float64)
    dones = np.asarray(buffer.dones, dtype=np.float64)
    advantages = np.zeros(size)
    last_gae = 0.0
    for t in reversed(range(size)):
        next_value = bootstrap_value if t == size - 1 else values[t + 1]
        non_terminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * non_terminal - values[t]
        last_gae = delta + gamma * gae_lambda * non_terminal * last_gae
        advantages[t] = last_gae
    buffer.advantages = advantages
    buffer.returns = advantages + values
    return buffer


# ---------------------------------------------------------------------------
# Loss and optimization
# ---------------------------------------------------------------------------

def ppo_loss(params: PolicyParams, obs: np.ndarray, actions: np.ndarray, old_log_probs: np.ndarray,
             advantages: np.ndarray, returns: np.ndarray,
             config: PpoConfig) -> Tuple[float, Dict[str, np.ndarray], Dict[str, float]]:
    """
    Total PPO loss with its analytic gradient

    loss = -mean(min(r*A, clip(r)*A)) - entropy_coef*mean(H) + value_coef*mean((R - V)^2)

    Returns:
        Tuple: (loss, gradients keyed like params.weights, statistics)
    """
    w = params.weights
    batch = len(actions)
    logits, pi_cache = _mlp(w, "pi_", obs)
    log_probs_all = _log_softmax(logits)
    probs = np.exp(log_probs_all)
    log_probs = log_probs_all[np.arange(batch), actions]
    ratio = np.exp(log_probs - old_log_probs)
    surr1 = ratio * advantages
    surr2 = np.clip(ratio, 1.0 - config.clip_range, 1.0 + config.clip_range) * advantages
    policy_loss = -np.mean(np.minimum(surr1, surr2))
    entropy = -np.sum(probs * log_probs_all, axis=1)

    values_out, vf_cache = _mlp(w, "vf_", obs)
    values = values_out[:, 0]
    value_loss = np.mean((returns - values) ** 2)

    loss = policy_loss - config.entropy_coef * np.mean(entropy) + config.value_coef * value_loss

    # the clipped branch has zero slope wherever it is the minimum
    dlogp = np.where(surr1 <= surr2, -advantages * ratio, 0.0) / batch
    onehot = np.zeros_like(probs)
    onehot[np.arange(batch), actions] = 1.0
    dlogits = dlogp[:, None] * (onehot - probs)
    dlogits += (config.entropy_coef / batch) * probs * (log_probs_all + entropy[:, None])
    dvalues = config.value_coef * 2.0 * (values - returns) / batch

    grads: Dict[str, np.ndarray] = {}
    _mlp_backward(w, "pi_", pi_cache, dlogits, grads)
    _mlp_backward(w, "vf_", vf_cache, dvalues[:, None], grads)

    stats = {
        "policy_loss": float(policy_loss),
        "value_loss": float(value_loss),
        "entropy": float(np.mean(entropy)),
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > config.clip_range)),
        "approx_kl": float(np.mean(old_log_probs - log_probs)),
    }
    return float(loss), grads, stats


def clip_grad_norm(grads: Dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients jointly so their global L2 norm is at most max_norm"""
    total = float(np.sqrt(sum(float(np.sum(g ** 2)) for g in grads.values())))
    if total > max_norm:
        scale = max_norm / (total + 1e-6)
        for key in grads:
            grads[key] = grads[key] * scale
    return total


class AdamOptimizer:
    """Adam with bias correction"""

    def __init__(self, learning_rate: float, betas: Tuple[float, float] = (0.9, 0.999), eps: float = 1e-5):
        self.learning_rate = learning_rate
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}

    def step(self, weights: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]):
        self.t += 1
        correction1 = 1.0 - self.beta1 ** self.t
        correction2 = 1.0 - self.beta2 ** self.t
        for key, grad in grads.items():
            m = self.m.get(key, np.zeros_like(grad))
            v = self.v.get(key, np.zeros_like(grad))
            m = self.beta1 * m + (1.0 - self.beta1) * grad
            v = self.beta2 * v + (1.0 - self.beta2) * grad ** 2
            self.m[key], self.v[key] = m, v
            weights[key] -= self.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + self.eps)

    def copy(self) -> 'AdamOptimizer':
        return copy.deepcopy(self)


@dataclass
class UpdateResult:
    params: PolicyParams
    optimizer: AdamOptimizer
    policy_loss: float
    value_loss: float
    entropy: float
    clip_fraction: float
    approx_kl: float
    steps: int

    def stats(self) -> Dict[str, float]:
        return {
            "policy_loss": self.policy_loss,
            "value_loss": self.value_loss,
            "entropy": self.entropy,
            "clip_fraction": self.clip_fraction,
            "approx_kl": self.approx_kl,
            "steps": self.steps,
        }


def ppo_update(params: PolicyParams, buffer: RolloutBuffer, config: PpoConfig,
               optimizer: Optional[AdamOptimizer] = None,
               rng: Optional[np.random.Generator] = None) -> UpdateResult:
    """
    Run config.update_epochs passes of minibatch Adam steps over one rollout

    The input params and optimizer are never modified; the result carries updated copies.

    Raises:
        NonFiniteLoss: A loss, gradient or weight became NaN/Inf
    """
    if buffer.advantages is None or buffer.returns is None:
        raise ValueError("compute_gae must run before ppo_update")
    size = len(buffer)
    if size == 0:
        raise ValueError("empty rollout buffer")
    rng = rng if rng is not None else np.random.default_rng()

    obs = np.stack(buffer.observations)
    if obs.shape[1] != params.n_inputs:
        raise ShapeMismatch(f"rollout observations have dim {obs.shape[1]}, network expects {params.n_inputs}")
    actions = np.asarray(buffer.actions, dtype=np.int64)
    old_log_probs = np.asarray(buffer.log_probs, dtype=np.float64)
    returns = np.asarray(buffer.returns, dtype=np.float64)
    advantages = np.asarray(buffer.advantages, dtype=np.float64)
    advantages = (advantages - advantages.mean()) / (advantages.std() + 1e-8)

    new_params = params.copy()
    opt = optimizer.copy() if optimizer is not None else AdamOptimizer(
        config.learning_rate, tuple(config.adam_betas), config.adam_eps)

    history: List[Dict[str, float]] = []
    for _ in range(config.update_epochs):
        for batch in chunked(rng.permutation(size), config.minibatch_size):
            idx = np.asarray(batch)
            loss, grads, stats = ppo_loss(new_params, obs[idx], actions[idx], old_log_probs[idx],
                                          advantages[idx], returns[idx], config)
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise NonFiniteLoss(f"non-finite loss {loss} during PPO update")
            clip_grad_norm(grads, config.max_grad_norm)
            opt.step(new_params.weights, grads)
            if not new_params.is_finite():
                raise NonFiniteLoss("non-finite weights after Adam step")
            history.append(stats)

    def mean(key: str) -> float:
        return float(np.mean([h[key] for h in history]))

    return UpdateResult(
        params=new_params,
        optimizer=opt,
        policy_loss=mean("policy_loss"),
        value_loss=mean("value_loss"),
        entropy=mean("entropy"),
        clip_fraction=mean("clip_fraction"),
        approx_kl=mean("approx_kl"),
        steps=len(history),
    )


class PpoTrainer:
    """Owns the policy, its optimizer state and the update history"""

    def __init__(self, n_operations: int, config: PpoConfig, rng: np.random.Generator,
                 params: Optional[PolicyParams] = None):
        self.config = config
        self.rng = rng
        self.params = params if params is not None else PolicyParams.initialize(
            n_operations, n_operations, config.hidden_size, rng)
        self.optimizer = AdamOptimizer(config.learning_rate, tuple(config.adam_betas), config.adam_eps)
        self.history: List[Dict[str, float]] = []

    def evaluate(self, obs: np.ndarray, mask: Optional[np.ndarray] = None) -> Tuple[np.ndarray, float]:
        return policy_forward(self.params, obs, mask)

    def value(self, obs: np.ndarray) -> float:
        return policy_forward(self.params, obs)[1]

    def update(self, buffer: RolloutBuffer, bootstrap_value: float) -> Optional[Dict[str, float]]:
        """GAE plus one PPO update; a non-finite update is skipped and logged"""
        compute_gae(buffer, self.config.gamma, self.config.gae_lambda, bootstrap_value)
        try:
            result = ppo_update(self.params, buffer, self.config, self.optimizer, self.rng)
        except NonFiniteLoss as e:
            logger.warning(f"PPO update skipped: {str(e)}")
            return None
        self.params = result.params
        self.optimizer = result.optimizer
        stats = result.stats()
        self.history.append(stats)
        logger.info(
            f"PPO update {len(self.history)}: policy_loss={stats['policy_loss']:.4f} "
            f"value_loss={stats['value_loss']:.1f} entropy={stats['entropy']:.3f} "
            f"clip_fraction={stats['clip_fraction']:.3f}"
        )
        return stats


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path: str, params: PolicyParams, config: PpoConfig):
    """Write all weights plus a config header as versioned JSON"""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "n_inputs": params.n_inputs,
        "n_actions": params.n_actions,
        "hidden": params.hidden,
        "config": dict(asdict(config), adam_betas=list(config.adam_betas)),
        "weights": {
            key: {"shape": list(value.shape), "data": value.ravel().tolist()}
            for key, value in params.weights.items()
        },
    }
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(payload, f)
    logger.info(f"Policy checkpoint saved: {path}")


def _header_dim(payload: dict, key: str, path: str) -> int:
    value = payload.get(key)
    if not isinstance(value, int) or isinstance(value, bool) or value < 1:
        raise CheckpointMismatch(f"{path}: header field '{key}' must be a positive integer, got {value!r}")
    return value


def load_checkpoint(path: str, n_inputs: Optional[int] = None, hidden: Optional[int] = None) -> PolicyParams:
    """
    Read a checkpoint written by save_checkpoint

    The header dimensions must describe one action per input and every stored
    weight must have exactly the shape they imply.

    Raises:
        CheckpointMismatch: Wrong format/version, a malformed header or weight entry,
            or shapes that do not fit n_inputs/hidden
    """
    with open(path, 'r', encoding='utf-8') as f:
        payload = json.load(f)
    if not isinstance(payload, dict):
        raise CheckpointMismatch(f"{path}: checkpoint is not a JSON object")
    if payload.get("format") != CHECKPOINT_FORMAT or payload.get("version") != CHECKPOINT_VERSION:
        raise CheckpointMismatch(f"{path}: unsupported checkpoint format/version")

    n = _header_dim(payload, "n_inputs", path)
    n_actions = _header_dim(payload, "n_actions", path)
    h = _header_dim(payload, "hidden", path)
    if n_actions != n:
        raise CheckpointMismatch(f"{path}: checkpoint has {n} inputs but {n_actions} actions")
    if n_inputs is not None and n != n_inputs:
        raise CheckpointMismatch(f"{path}: checkpoint has {n} inputs, API has {n_inputs} operations")
    if hidden is not None and h != hidden:
        raise CheckpointMismatch(f"{path}: checkpoint hidden width {h}, configured {hidden}")

    stored = payload.get("weights")
    if not isinstance(stored, dict):
        raise CheckpointMismatch(f"{path}: no weight table")
    shapes = expected_shapes(n, n_actions, h)
    extra = sorted(set(stored) - set(shapes))
    if extra:
        raise CheckpointMismatch(f"{path}: unexpected weights {extra}")
    weights: Dict[str, np.ndarray] = {}
    for key, shape in shapes.items():
        entry = stored.get(key)
        if (not isinstance(entry, dict) or not isinstance(entry.get("shape"), list)
                or not isinstance(entry.get("data"), list)
                or tuple(entry["shape"]) != shape or len(entry["data"]) != int(np.prod(shape))):
            raise CheckpointMismatch(f"{path}: weight '{key}' missing or not of shape {shape}")
        try:
            weights[key] = np.asarray(entry["data"], dtype=np.float64).reshape(shape)
        except (TypeError, ValueError) as e:
            raise CheckpointMismatch(f"{path}: weight '{key}' is not numeric: {str(e)}") from e
    params = PolicyParams(weights)
    if not params.is_finite():
        raise CheckpointMismatch(f"{path}: non-finite weights")
    return params
