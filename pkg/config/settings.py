"""
Configuration Settings - Session configuration classes
"""

import os
import json
import logging
from dataclasses import dataclass, asdict, field, fields
from string import Template
from typing import Optional, Dict, Any, Tuple

import yaml

logger = logging.getLogger(__name__)

SIM_KINDS = ("ecomm", "chain", "flaky")
LLM_PROVIDERS = ("none", "file", "endpoint", "openai", "gemini")


class ConfigInvalid(ValueError):
    """Raised when a session configuration cannot be run"""


@dataclass
class TargetConfig:
    """API under test"""
    spec_path: Optional[str] = None     # OAS file (real mode)
    base_url: Optional[str] = None      # overrides servers[0].url when set
    sim: Optional[str] = None           # ecomm, chain, flaky
    chain_length: int = 4
    auth_headers: Dict[str, str] = field(default_factory=dict)
    timeout: float = 10.0               # seconds per request


@dataclass
class BudgetConfig:
    """Testing budget"""
    requests: int = 1500
    wall_clock_seconds: Optional[float] = None


@dataclass
class GeneratorConfig:
    """Input generator settings"""
    epsilon: float = 0.1                # random-decision rate of the bandit agents
    dictionary_capacity: int = 1000     # values kept per key


@dataclass
class PpoConfig:
    """PPO hyperparameters (Stable Baselines 3 defaults)"""
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_range: float = 0.2
    learning_rate: float = 3e-4
    rollout_length: Optional[int] = None  # None: one episode per rollout
    minibatch_size: int = 64
    update_epochs: int = 10
    entropy_coef: float = 0.0
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    hidden_size: int = 64
    adam_betas: Tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-5
    seed: Optional[int] = None          # None: derived from the session seed

    def validate(self):
        """Check hyperparameter ranges"""
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigInvalid(f"gamma must be in (0, 1]: {self.gamma}")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ConfigInvalid(f"gae_lambda must be in [0, 1]: {self.gae_lambda}")
        if self.clip_range <= 0:
            raise ConfigInvalid(f"clip_range must be positive: {self.clip_range}")
        if self.learning_rate <= 0:
            raise ConfigInvalid(f"learning_rate must be positive: {self.learning_rate}")
        if self.minibatch_size < 1 or self.update_epochs < 1 or self.hidden_size < 1:
            raise ConfigInvalid("minibatch_size, update_epochs and hidden_size must be >= 1")
        if self.rollout_length is not None and self.rollout_length % self.minibatch_size != 0:
            raise ConfigInvalid(
                f"rollout_length {self.rollout_length} not divisible by minibatch_size {self.minibatch_size}"
            )


@dataclass
class ExplorerConfig:
    """State explorer settings"""
    mode: str = "ppo"                   # ppo or uniform
    counter_cap: int = 20
    episode_factor: int = 20            # ep_length = episode_factor * num_operations


@dataclass
class IntensifierConfig:
    """Mutation-based intensification settings"""
    enabled: bool = True
    cap: int = 50                       # mutants per intensification


@dataclass
class LLMConfig:
    """LLM dictionary configuration"""
    provider: str = "none"              # none, file, endpoint, openai, gemini
    dictionary_path: Optional[str] = None
    endpoint_url: Optional[str] = None
    api_key: Optional[str] = None
    model: str = "gpt-4o-mini"          # For OpenAI
    temperature: float = 0.7
    min_values: int = 20
    timeout: float = 60.0


@dataclass
class SessionConfig:
    """Main session configuration with nested sections"""
    target: TargetConfig = field(default_factory=TargetConfig)
    budget: BudgetConfig = field(default_factory=BudgetConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    explorer: ExplorerConfig = field(default_factory=ExplorerConfig)
    intensifier: IntensifierConfig = field(default_factory=IntensifierConfig)
    llm: LLMConfig = field(default_factory=LLMConfig)
    seed: int = 0
    output_dir: str = "runs/latest"
    load_policy: Optional[str] = None

    def __post_init__(self):
        """Load environment variables after initialization"""
        self.load_from_env()

    @property
    def simulated(self) -> bool:
        return self.target.sim is not None

    # ---- Env loading ----
    def load_from_env(self):
        """Load credentials and header substitutions from environment variables"""
        if not self.llm.api_key:
            if self.llm.provider == "openai":
                self.llm.api_key = os.getenv("OPENAI_API_KEY") or os.getenv("LLM_API_KEY")
            elif self.llm.provider == "gemini":
                self.llm.api_key = os.getenv("GEMINI_API_KEY") or os.getenv("LLM_API_KEY")
            else:
                self.llm.api_key = os.getenv("LLM_API_KEY")

        token = os.getenv("RESTQUEST_AUTH_TOKEN")
        if token and not any(k.lower() == "authorization" for k in self.target.auth_headers):
            self.target.auth_headers["Authorization"] = f"Bearer {token}"

        # ${VAR} placeholders in header values
        self.target.auth_headers = {
            name: Template(str(value)).safe_substitute(os.environ)
            for name, value in self.target.auth_headers.items()
        }

    def validate(self):
        """Raise ConfigInvalid unless the configuration is runnable"""
        has_spec = bool(self.target.spec_path)
        has_sim = self.target.sim is not None
        if has_spec == has_sim:
            raise ConfigInvalid("choose exactly one target: --spec (with optional --base-url) or --sim")
        if has_sim and self.target.sim not in SIM_KINDS:
            raise ConfigInvalid(f"unknown sim '{self.target.sim}', expected one of {', '.join(SIM_KINDS)}")
        if has_sim and self.target.chain_length < 1:
            raise ConfigInvalid("chain_length must be >= 1")
        if self.budget.requests < 1:
            raise ConfigInvalid(f"request budget must be >= 1: {self.budget.requests}")
        if self.budget.wall_clock_seconds is not None and self.budget.wall_clock_seconds <= 0:
            raise ConfigInvalid("wall-clock budget must be positive")
        if not 0.0 <= self.generator.epsilon <= 1.0:
            raise ConfigInvalid(f"epsilon must be in [0, 1]: {self.generator.epsilon}")
        if self.generator.dictionary_capacity < 1:
            raise ConfigInvalid("dictionary_capacity must be >= 1")
        if self.explorer.mode not in ("ppo", "uniform"):
            raise ConfigInvalid(f"unknown explorer mode: {self.explorer.mode}")
        if self.explorer.counter_cap < 1 or self.explorer.episode_factor < 1:
            raise ConfigInvalid("counter_cap and episode_factor must be >= 1")
        if self.intensifier.cap < 0:
            raise ConfigInvalid("intensification cap must be >= 0")
        if self.llm.provider not in LLM_PROVIDERS:
            raise ConfigInvalid(f"unknown LLM provider: {self.llm.provider}")
        if self.llm.provider == "file" and not self.llm.dictionary_path:
            raise ConfigInvalid("LLM provider 'file' needs a dictionary path")
        if self.llm.provider == "endpoint" and not self.llm.endpoint_url:
            raise ConfigInvalid("LLM provider 'endpoint' needs an endpoint URL")
        if self.target.timeout <= 0:
            raise ConfigInvalid("timeout must be positive")
        self.ppo.validate()

    # ---- Serialization ----
    @classmethod
    def from_file(cls, file_path: str) -> 'SessionConfig':
        """Load configuration from a JSON or YAML file with nested sections"""
        try:
            with open(file_path, 'r', encoding='utf-8') as f:
                if file_path.endswith(('.yaml', '.yml')):
                    data: Dict[str, Any] = yaml.safe_load(f) or {}
                else:
                    data = json.load(f)
        except (OSError, ValueError, yaml.YAMLError) as e:
            raise ConfigInvalid(f"Failed to load config from {file_path}: {e}") from e

        if not isinstance(data, dict):
            raise ConfigInvalid(f"Config file {file_path} must contain a mapping")

        sections = {
            'target': TargetConfig,
            'budget': BudgetConfig,
            'generator': GeneratorConfig,
            'ppo': PpoConfig,
            'explorer': ExplorerConfig,
            'intensifier': IntensifierConfig,
            'llm': LLMConfig,
        }
        kwargs: Dict[str, Any] = {}
        try:
            for name, section_cls in sections.items():
                section = data.get(name, {}) or {}
                if 'adam_betas' in section:
                    section = dict(section, adam_betas=tuple(section['adam_betas']))
                kwargs[name] = section_cls(**section)
            top_level = {f.name for f in fields(cls)} - set(sections)
            unknown = set(data) - top_level - set(sections)
            if unknown:
                raise ConfigInvalid(f"Unknown config keys: {', '.join(sorted(unknown))}")
            for key in top_level:
                if key in data:
                    kwargs[key] = data[key]
        except TypeError as e:
            raise ConfigInvalid(f"Invalid config in {file_path}: {e}") from e

        return cls(**kwargs)

    def to_file(self, file_path: str):
        """Save configuration to JSON file (nested structure)"""
        with open(file_path, 'w', encoding='utf-8') as f:
            json.dump(self.to_dict(), f, indent=2, ensure_ascii=False)

    def to_dict(self) -> dict:
        """Convert to dictionary"""
        data = asdict(self)
        data['ppo']['adam_betas'] = list(self.ppo.adam_betas)
        return data
