"""
Core module initialization file
Contains all core REST API testing functionality
"""

from .oas_model import ApiModel, OperationSpec, ParameterSpec, Schema, load_spec, parse_spec
from .rl_core import PolicyParams, PpoTrainer, RolloutBuffer
from .explorer import BudgetExhausted, StateExplorer
from .input_generator import ExperienceStore, InputGenerator, ValueDictionaries, ValueSource
from .interaction import HttpBackend, Interaction, OutcomeClass, read_interactions
from .intensifier import Intensifier, OPERATORS
from .sim_apis import SimBackend, make_sim, start_sim_server
from .metrics import FaultRegistry, MetricsRecorder, build_summary
from .llm_dictionary import LLMDictionaryBuilder, load_llm_dictionary
from .session import SessionReport, TargetUnreachable, TestSession, run_session

__all__ = [
    'ApiModel',
    'OperationSpec',
    'ParameterSpec',
    'Schema',
    'load_spec',
    'parse_spec',
    'PolicyParams',
    'PpoTrainer',
    'RolloutBuffer',
    'BudgetExhausted',
    'StateExplorer',
    'ExperienceStore',
    'InputGenerator',
    'ValueDictionaries',
    'ValueSource',
    'HttpBackend',
    'Interaction',
    'OutcomeClass',
    'read_interactions',
    'Intensifier',
    'OPERATORS',
    'SimBackend',
    'make_sim',
    'start_sim_server',
    'FaultRegistry',
    'MetricsRecorder',
    'build_summary',
    'LLMDictionaryBuilder',
    'load_llm_dictionary',
    'SessionReport',
    'TargetUnreachable',
    'TestSession',
    'run_session'
]
