"""
State Explorer - Curiosity-driven choice of the next operation to test
Keeps per-operation success counters as the observation and trains a PPO policy on them
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Protocol, Tuple

import numpy as np

from config.settings import ExplorerConfig, PpoConfig
from .interaction import OutcomeClass
from .rl_core import PolicyParams, PpoTrainer, RolloutBuffer, policy_forward, sample_action

logger = logging.getLogger(__name__)

COUNTER_CAP = 20
REWARD_FIRST_SUCCESS = 1000.0
REWARD_REPEAT_SUCCESS = -100.0
REWARD_FAILURE = -1.0


class BudgetExhausted(RuntimeError):
    """No request budget left"""


@dataclass
class StateObservation:
    """Per-operation success counters, each saturating at the cap"""
    counters: np.ndarray
    cap: int = COUNTER_CAP

    @classmethod
    def zeros(cls, n_operations: int, cap: int = COUNTER_CAP) -> 'StateObservation':
        return cls(np.zeros(n_operations, dtype=np.int64), cap)

    def normalized(self) -> np.ndarray:
        return self.counters.astype(np.float64) / float(self.cap)

    def copy(self) -> 'StateObservation':
        return StateObservation(self.counters.copy(), self.cap)

    def __len__(self) -> int:
        return len(self.counters)


def compute_reward(prev_obs: StateObservation, op: int, outcome: OutcomeClass) -> float:
    """+1000 for a first success in the episode, -100 for a repeated one, -1 otherwise"""
    if outcome is OutcomeClass.SUCCESS:
        return REWARD_FIRST_SUCCESS if prev_obs.counters[op] == 0 else REWARD_REPEAT_SUCCESS
    return REWARD_FAILURE


def transition(obs: StateObservation, op: int, outcome: OutcomeClass) -> Tuple[StateObservation, bool]:
    """
    Next observation after testing an operation

    Returns:
        Tuple: (new observation, truncated) where truncated means a success arrived on a saturated counter
    """
    if outcome is not OutcomeClass.SUCCESS:
        return obs, False
    if obs.counters[op] >= obs.cap:
        return obs, True
    new_obs = obs.copy()
    new_obs.counters[op] += 1
    return new_obs, False


def select_operation(obs: StateObservation, params: PolicyParams, rng: np.random.Generator) -> int:
    """Sample an operation index from the policy"""
    probs, _ = policy_forward(params, obs.normalized())
    return sample_action(probs, rng)[0]


class ExplorationEnvironment(Protocol):
    """What the explorer needs from a testing session"""

    def budget_remaining(self) -> int:
        ...

    def execute_operation(self, index: int) -> OutcomeClass:
        """Build, send and score one request for the operation; may raise BudgetExhausted"""
        ...


@dataclass
class EpisodeResult:
    buffer: RolloutBuffer
    steps: int
    truncated: bool
    budget_exhausted: bool
    final_obs: StateObservation
    bootstrap_value: float
    total_reward: float = 0.0
    actions: List[int] = field(default_factory=list)


class StateExplorer:
    """Episode loop around the policy (or a uniform chooser in the ablation mode)"""

    def __init__(self, n_operations: int, config: ExplorerConfig, ppo_config: PpoConfig,
                 rng: np.random.Generator, params: Optional[PolicyParams] = None):
        if n_operations < 1:
            raise ValueError("Explorer needs at least one operation")
        self.n_operations = n_operations
        self.config = config
        self.ppo_config = ppo_config
        self.rng = rng
        self.ep_length = config.episode_factor * n_operations
        self.trainer: Optional[PpoTrainer] = None
        if config.mode == "ppo":
            self.trainer = PpoTrainer(n_operations, ppo_config, rng, params)
        elif config.mode != "uniform":
            raise ValueError(f"Unknown explorer mode: {config.mode}")
        self.episodes = 0

    @property
    def params(self) -> Optional[PolicyParams]:
        return self.trainer.params if self.trainer is not None else None

    @property
    def history(self) -> List[Dict[str, float]]:
        return self.trainer.history if self.trainer is not None else []

    def _choose(self, obs: StateObservation) -> Tuple[int, float, float]:
        if self.trainer is None:
            index = int(self.rng.integers(self.n_operations))
            return index, float(-np.log(self.n_operations)), 0.0
        probs, value = self.trainer.evaluate(obs.normalized())
        index, log_prob = sample_action(probs, self.rng)
        return index, log_prob, value

    def _bootstrap(self, obs: StateObservation) -> float:
        return self.trainer.value(obs.normalized()) if self.trainer is not None else 0.0

    def run_episode(self, env: ExplorationEnvironment) -> EpisodeResult:
        """
        Run up to ep_length steps starting from an all-zero observation

        Ends early on counter-cap truncation or when the budget runs out; the returned
        buffer is valid for an update in every case.
        """
        self.episodes += 1
        obs = StateObservation.zeros(self.n_operations, self.config.counter_cap)
        buffer = RolloutBuffer()
        rollout_length = self.ppo_config.rollout_length
        truncated = False
        exhausted = False
        steps = 0
        total_reward = 0.0
        actions: List[int] = []

        while steps < self.ep_length:
            if env.budget_remaining() <= 0:
                exhausted = True
                break
            index, log_prob, value = self._choose(obs)
            try:
                outcome = env.execute_operation(index)
            except BudgetExhausted:
                exhausted = True
                break

            reward = compute_reward(obs, index, outcome)
            buffer.add(obs.normalized(), index, log_prob, reward, value)
            obs, truncated = transition(obs, index, outcome)
            steps += 1
            total_reward += reward
            actions.append(index)

            if truncated:
                logger.info(f"Episode {self.episodes} truncated: operation {index} succeeded past the counter cap")
                break
            if rollout_length and len(buffer) >= rollout_length and steps < self.ep_length:
                self.update(buffer, self._bootstrap(obs))
                buffer = RolloutBuffer()

        logger.info(
            f"Episode {self.episodes} finished: {steps} steps, reward {total_reward:.0f}, "
            f"operations succeeded {int(np.count_nonzero(obs.counters))}/{self.n_operations}"
        )
        return EpisodeResult(
            buffer=buffer,
            steps=steps,
            truncated=truncated,
            budget_exhausted=exhausted,
            final_obs=obs,
            bootstrap_value=self._bootstrap(obs),
            total_reward=total_reward,
            actions=actions,
        )

    def update(self, buffer: RolloutBuffer, bootstrap_value: float) -> Optional[Dict[str, float]]:
        """One PPO update on a rollout; no-op for the uniform chooser or an empty rollout"""
        if self.trainer is None or len(buffer) == 0:
            return None
        return self.trainer.update(buffer, bootstrap_value)

    def finish_episode(self, result: EpisodeResult) -> Optional[Dict[str, float]]:
        return self.update(result.buffer, result.bootstrap_value)
