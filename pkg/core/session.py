"""
Test Session - Main testing orchestrator
Coordinates the explorer, input generator, interaction handler, intensifier and metrics
"""

import os
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import requests

from config.settings import SessionConfig
from .explorer import BudgetExhausted, StateExplorer
from .input_generator import InputGenerator, ValueDictionaries
from .intensifier import Intensifier, Mutant
from .interaction import (
    Backend, ConcreteRequest, HttpBackend, Interaction, InteractionLog, OutcomeClass,
    build_request, execute, harvest,
)
from .llm_dictionary import prepare_llm_dictionary
from .metrics import MetricsRecorder, TimelineSample, build_summary, write_timeline_csv
from .oas_model import ApiModel, load_spec, parse_spec
from .rl_core import load_checkpoint, save_checkpoint
from .sim_apis import SimBackend, make_sim
from utils import ProgressTracker, ensure_dir, format_duration, spawn_rngs, write_json

logger = logging.getLogger(__name__)


class TargetUnreachable(RuntimeError):
    """The real API under test does not answer"""


@dataclass
class SessionReport:
    """Results of one session; summary totals equal a recomputation from the log"""
    summary: Dict[str, Any]
    timeline: List[TimelineSample]
    wall_timeline: List[TimelineSample]
    faults: List[Dict[str, Any]]
    training: List[Dict[str, float]]
    experience: List[Dict[str, Any]]
    interactions: List[Interaction]
    paths: Dict[str, str] = field(default_factory=dict)

    @property
    def log_path(self) -> Optional[str]:
        return self.paths.get('interactions')

    @property
    def coverage(self) -> float:
        return self.summary["coverage"]["fraction"]


class TestSession:
    """One seeded, budgeted testing session against a simulated or real API"""

    def __init__(self, config: SessionConfig, backend: Optional[Backend] = None):
        """
        Initialize test session

        Args:
            config: Session configuration (validated here)
            backend: Overrides the backend derived from the configuration
        """
        config.validate()
        self.config = config
        self.openapi_text: Optional[str] = None

        if config.simulated:
            sim = make_sim(config.target.sim, config.target.chain_length, config.seed)
            self.openapi_text = sim.openapi_yaml()
            self.api: ApiModel = parse_spec(self.openapi_text, "yaml")
            self.backend = backend or SimBackend(sim)
        else:
            self.api = load_spec(config.target.spec_path)
            self.backend = backend or HttpBackend(config.target.base_url or self.api.base_url,
                                                  config.target.timeout)

        explorer_rng, generator_rng, intensifier_rng = spawn_rngs(config.seed, 3)
        params = None
        if config.load_policy:
            params = load_checkpoint(config.load_policy, n_inputs=self.api.size, hidden=config.ppo.hidden_size)
            logger.info(f"Warm start from policy checkpoint: {config.load_policy}")

        self.explorer = StateExplorer(self.api.size, config.explorer, config.ppo, explorer_rng, params)
        self.dictionaries = ValueDictionaries(config.generator.dictionary_capacity)
        self.generator = InputGenerator(config.generator, generator_rng, dictionaries=self.dictionaries)
        self.intensifier = Intensifier(config.intensifier, self.api, intensifier_rng, config.target.auth_headers)
        self.recorder: Optional[MetricsRecorder] = None
        self.interactions: List[Interaction] = []
        self.sequence = 0
        self._log: Optional[InteractionLog] = None
        self._progress: Optional[ProgressTracker] = None

        logger.info(f"Test session ready: '{self.api.title}' with {self.api.size} operations")

    # ---- Environment interface used by the explorer ----
    def budget_remaining(self) -> int:
        wall_limit = self.config.budget.wall_clock_seconds
        if wall_limit is not None and self.recorder is not None and self.recorder.elapsed >= wall_limit:
            return 0
        return self.config.budget.requests - self.sequence

    def _send(self, request: ConcreteRequest, origin: str = "explorer",
              mutation: Optional[str] = None) -> Interaction:
        if self.budget_remaining() <= 0:
            raise BudgetExhausted(f"request budget of {self.config.budget.requests} used")
        self.sequence += 1
        interaction = execute(request, self.backend, self.sequence)
        interaction.origin = origin
        interaction.mutation = mutation
        self.interactions.append(interaction)
        self._log.append(interaction)
        if self.recorder.observe(interaction):
            logger.info(f"Operation {interaction.operation_id} covered at request {interaction.sequence}")
        self._progress.update()
        return interaction

    def _send_mutant(self, mutant: Mutant) -> Interaction:
        return self._send(mutant.request, mutant.origin, mutant.mutation.label)

    def execute_operation(self, index: int) -> OutcomeClass:
        """Generate inputs for an operation, send the request and learn from the outcome"""
        operation = self.api.operations[index]
        generated = self.generator.generate(operation)
        request = build_request(operation, generated.assignments, self.config.target.auth_headers,
                                generated.provenance)
        interaction = self._send(request)
        self.generator.reward(generated.trace, interaction.outcome)
        harvest(interaction, self.dictionaries)

        if interaction.outcome is OutcomeClass.SUCCESS and self.intensifier.should_trigger(operation):
            self.intensifier.intensify(interaction, operation, self.budget_remaining(),
                                       self._send_mutant, self.dictionaries)
        return interaction.outcome

    # ---- Main loop ----
    def _check_reachable(self):
        if self.backend.simulated or not isinstance(self.backend, HttpBackend):
            return
        try:
            self.backend.probe()
        except requests.RequestException as e:
            raise TargetUnreachable(f"Target {self.backend.base_url} is unreachable: {str(e)}") from e

    def run(self) -> SessionReport:
        """
        Repeat episodes until the budget runs out or every operation succeeded and one
        further episode has completed without counter-cap truncation

        Returns:
            SessionReport: Metrics, training history and artifact paths

        Raises:
            TargetUnreachable: Real target does not answer
        """
        self._check_reachable()
        output_dir = ensure_dir(self.config.output_dir)
        paths = {
            'interactions': os.path.join(output_dir, "interactions.jsonl"),
            'timeline': os.path.join(output_dir, "timeline.csv"),
            'wall_timeline': os.path.join(output_dir, "timeline_wall.csv"),
            'summary': os.path.join(output_dir, "summary.json"),
            'training': os.path.join(output_dir, "training.json"),
            'experience': os.path.join(output_dir, "experience.json"),
        }

        llm_path = os.path.join(output_dir, "llm_dictionary.json")
        llm_values = prepare_llm_dictionary(self.config.llm, self.api, llm_path)
        self.dictionaries.set_llm(llm_values)
        if llm_values and self.config.llm.provider not in ("none", "file"):
            paths['llm_dictionary'] = llm_path

        self.recorder = MetricsRecorder(self.api)
        self._progress = ProgressTracker(self.config.budget.requests)
        self._log = InteractionLog(paths['interactions'])

        logger.info("=== Testing Session ===")
        logger.info(f"Budget: {self.config.budget.requests} requests, seed {self.config.seed}, "
                    f"explorer {self.config.explorer.mode}")
        try:
            while self.budget_remaining() > 0:
                started_covered = self.recorder.fully_covered
                self.backend.reset()
                result = self.explorer.run_episode(self)
                self.explorer.finish_episode(result)
                if result.budget_exhausted:
                    break
                if started_covered and not result.truncated:
                    logger.info("All operations covered and a further full episode completed, stopping")
                    break
                if started_covered:
                    logger.debug(f"Episode {self.explorer.episodes} was truncated after coverage, continuing")
        except Exception as e:
            logger.error(f"Testing session failed: {str(e)}")
            raise
        finally:
            self._log.close()
            self.backend.close()

        self.recorder.tick()
        return self._write_artifacts(paths)

    def _write_artifacts(self, paths: Dict[str, str]) -> SessionReport:
        summary = build_summary(self.interactions, self.api)
        write_json(paths['summary'], summary)
        write_timeline_csv(paths['timeline'], self.recorder.samples)
        write_timeline_csv(paths['wall_timeline'], self.recorder.wall_samples)
        write_json(paths['training'], {
            "mode": self.config.explorer.mode,
            "episodes": self.explorer.episodes,
            "updates": self.explorer.history,
        })
        experience = self.generator.store.snapshot()
        write_json(paths['experience'], experience)

        if self.openapi_text is not None:
            paths['openapi'] = os.path.join(self.config.output_dir, "openapi.yaml")
            with open(paths['openapi'], 'w', encoding='utf-8') as f:
                f.write(self.openapi_text)
        if self.explorer.params is not None:
            paths['policy'] = os.path.join(self.config.output_dir, "policy.json")
            save_checkpoint(paths['policy'], self.explorer.params, self.config.ppo)

        logger.info("=== Session Complete ===")
        logger.info(f"Requests: {summary['total_requests']} in {format_duration(self.recorder.elapsed)}")
        logger.info(f"Operation coverage: {summary['coverage']['covered']}/{self.api.size} "
                    f"({summary['coverage']['fraction']:.0%})")
        logger.info(f"Unique faults: {summary['faults']['unique']}")
        for name, path in paths.items():
            logger.info(f"{name}: {path}")

        return SessionReport(
            summary=summary,
            timeline=list(self.recorder.samples),
            wall_timeline=list(self.recorder.wall_samples),
            faults=self.recorder.faults.to_list(),
            training=list(self.explorer.history),
            experience=experience,
            interactions=list(self.interactions),
            paths=paths,
        )


def run_session(config: SessionConfig, backend: Optional[Backend] = None) -> SessionReport:
    """Run one testing session and write its artifacts"""
    return TestSession(config, backend).run()
