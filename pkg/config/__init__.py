"""
Configuration module initialization file
"""

from .settings import (
    ConfigInvalid,
    TargetConfig,
    BudgetConfig,
    GeneratorConfig,
    PpoConfig,
    ExplorerConfig,
    IntensifierConfig,
    LLMConfig,
    SessionConfig
)

__all__ = [
    'ConfigInvalid',
    'TargetConfig',
    'BudgetConfig',
    'GeneratorConfig',
    'PpoConfig',
    'ExplorerConfig',
    'IntensifierConfig',
    'LLMConfig',
    'SessionConfig'
]
