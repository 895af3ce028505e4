"""
Input Generator - Experience-driven parameter values
Per-parameter bandit agents decide presence, array length and value source by probability matching
"""

import copy
import math
import string
import uuid
import logging
import datetime
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Deque, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from config.settings import GeneratorConfig
from .oas_model import OperationSpec, ParameterSpec, Schema, normalize_name
from .interaction import OutcomeClass

logger = logging.getLogger(__name__)

PRESENCE = "presence"
ARRAY_LENGTH = "array_length"
SOURCE = "source"
INCLUDE = "include"
EXCLUDE = "exclude"

CLASS_C_DEFAULT_MAX = 5
STRING_DEFAULT_MAX = 10
_ALPHABET = np.array(list(string.ascii_letters + string.digits))

# (normalized parameter name, decision kind)
AgentKey = Tuple[str, str]


class NoFeasibleClass(ValueError):
    """Array constraints exclude every length class"""


class SourceNotApplicable(ValueError):
    """The value source cannot currently produce a value for the parameter"""


class ValueSource(str, Enum):
    RANDOM = "Random"
    DEFAULT = "Default"
    ENUM = "Enum"
    EXAMPLES = "Examples"
    RESPONSE_DICTIONARY = "ResponseDictionary"
    LAST_RESPONSE_DICTIONARY = "LastResponseDictionary"
    REQUEST_DICTIONARY = "RequestDictionary"
    LAST_REQUEST_DICTIONARY = "LastRequestDictionary"
    LLM_DICTIONARY = "LargeLanguageModelDictionary"


class ArrayLengthClass(str, Enum):
    EMPTY = "A"
    SINGLE = "B"
    MANY = "C"


class ExperienceStore:
    """Accumulated rewards per (agent key, option); tallies only grow"""

    def __init__(self):
        self._tallies: Dict[AgentKey, Dict[str, int]] = {}

    def tallies(self, key: AgentKey, options: Iterable[str]) -> Dict[str, int]:
        known = self._tallies.get(key, {})
        return {option: known.get(option, 0) for option in options}

    def get(self, key: AgentKey, option: str) -> int:
        return self._tallies.get(key, {}).get(option, 0)

    def reward(self, key: AgentKey, option: str, amount: int = 1):
        if amount < 0:
            raise ValueError("Rewards never decrease a tally")
        agent = self._tallies.setdefault(key, {})
        agent[option] = agent.get(option, 0) + amount

    def keys(self) -> List[AgentKey]:
        return sorted(self._tallies)

    def __len__(self) -> int:
        return len(self._tallies)

    def snapshot(self) -> List[Dict[str, Any]]:
        """JSON-friendly dump, sorted for stable output"""
        return [
            {"parameter": name, "decision": kind, "tallies": dict(sorted(self._tallies[(name, kind)].items()))}
            for name, kind in self.keys()
        ]


class ValueDictionaries:
    """Values harvested from successful interactions plus the LLM dictionary"""

    def __init__(self, capacity: int = 1000, llm: Optional[Mapping[str, Sequence[Any]]] = None):
        self.capacity = capacity
        self.response: Dict[str, Deque[Any]] = {}
        self.request: Dict[str, Deque[Any]] = {}
        self.llm: Dict[str, List[Any]] = {}
        if llm:
            self.set_llm(llm)

    def _append(self, store: Dict[str, Deque[Any]], name: str, value: Any):
        if name not in store:
            store[name] = deque(maxlen=self.capacity)
        store[name].append(value)

    def add_response(self, name: str, value: Any):
        self._append(self.response, name, value)

    def add_request(self, name: str, value: Any):
        self._append(self.request, name, value)

    def set_llm(self, values: Mapping[str, Sequence[Any]]):
        for name, entries in values.items():
            if entries:
                self.llm[normalize_name(name)] = list(entries)

    def response_values(self, name: str) -> List[Any]:
        return list(self.response.get(name, ()))

    def request_values(self, name: str) -> List[Any]:
        return list(self.request.get(name, ()))

    def llm_values(self, name: str) -> List[Any]:
        return self.llm.get(name, [])


@dataclass
class DecisionTrace:
    """Every (agent key, chosen option) used while building one request"""
    decisions: List[Tuple[AgentKey, str]] = field(default_factory=list)

    def record(self, key: AgentKey, option: str):
        self.decisions.append((key, option))

    def __len__(self) -> int:
        return len(self.decisions)

    def to_list(self) -> List[List[str]]:
        return [[name, kind, option] for (name, kind), option in self.decisions]


@dataclass
class GeneratedInput:
    assignments: Dict[str, Any]
    provenance: Dict[str, Dict[str, Any]]
    trace: DecisionTrace


# ---------------------------------------------------------------------------
# Bandit decisions
# ---------------------------------------------------------------------------

def probability_match(tallies: Mapping[str, float], epsilon: float, rng: np.random.Generator) -> str:
    """
    Pick an option with probability proportional to its accumulated reward

    With probability epsilon the choice is uniform; a zero total is also uniform.
    """
    options = list(tallies)
    if not options:
        raise ValueError("probability_match needs at least one option")
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must be in [0, 1], got {epsilon}")
    if len(options) == 1:
        return options[0]

    if rng.random() < epsilon:
        return options[int(rng.integers(len(options)))]

    weights = np.array([max(0.0, float(tallies[o])) for o in options])
    total = weights.sum()
    if total <= 0:
        return options[int(rng.integers(len(options)))]
    return options[int(rng.choice(len(options), p=weights / total))]


def _decide_presence(name: str, store: ExperienceStore, epsilon: float, rng: np.random.Generator,
                     trace: Optional[DecisionTrace]) -> bool:
    key = (name, PRESENCE)
    option = probability_match(store.tallies(key, (INCLUDE, EXCLUDE)), epsilon, rng)
    if trace is not None:
        trace.record(key, option)
    return option == INCLUDE


def decide_presence(param: ParameterSpec, store: ExperienceStore, epsilon: float,
                    rng: np.random.Generator, trace: Optional[DecisionTrace] = None) -> bool:
    """Include/exclude an optional parameter; required parameters are always included"""
    if param.required:
        return True
    return _decide_presence(param.normalized_name, store, epsilon, rng, trace)


def class_c_range(schema: Schema) -> Tuple[int, int]:
    low = max(2, schema.min_items or 0)
    cap = CLASS_C_DEFAULT_MAX if schema.max_items is None else min(schema.max_items, CLASS_C_DEFAULT_MAX)
    return low, max(low, cap)


def feasible_length_classes(schema: Schema) -> List[ArrayLengthClass]:
    low = schema.min_items or 0
    high = math.inf if schema.max_items is None else schema.max_items
    classes = []
    if low <= 0 <= high:
        classes.append(ArrayLengthClass.EMPTY)
    if low <= 1 <= high:
        classes.append(ArrayLengthClass.SINGLE)
    if class_c_range(schema)[0] <= high:
        classes.append(ArrayLengthClass.MANY)
    return classes


def _length_for(length_class: ArrayLengthClass, schema: Schema, rng: np.random.Generator) -> int:
    if length_class is ArrayLengthClass.EMPTY:
        return 0
    if length_class is ArrayLengthClass.SINGLE:
        return 1
    low, high = class_c_range(schema)
    return int(rng.integers(low, high + 1))


def decide_array_length(schema: Schema, store: ExperienceStore, epsilon: float, rng: np.random.Generator,
                        name: str = "", trace: Optional[DecisionTrace] = None) -> int:
    """
    Choose a length class (A empty, B single, C two or more) and draw a concrete length

    Raises:
        NoFeasibleClass: min_items/max_items exclude every class
    """
    if schema.kind != "array":
        raise ValueError(f"decide_array_length needs an array schema, got {schema.kind}")
    classes = feasible_length_classes(schema)
    if not classes:
        raise NoFeasibleClass(f"{name or 'array'}: no length class fits min_items={schema.min_items} max_items={schema.max_items}")
    key = (name, ARRAY_LENGTH)
    option = probability_match(store.tallies(key, [c.value for c in classes]), epsilon, rng)
    if trace is not None:
        trace.record(key, option)
    return _length_for(ArrayLengthClass(option), schema, rng)


def applicable_sources(name: str, schema: Schema, dictionaries: ValueDictionaries) -> List[ValueSource]:
    """Sources that can currently produce a value, in catalog order"""
    sources = [ValueSource.RANDOM]
    if schema.default_value is not None:
        sources.append(ValueSource.DEFAULT)
    if schema.enum_values:
        sources.append(ValueSource.ENUM)
    if schema.example_values:
        sources.append(ValueSource.EXAMPLES)
    if dictionaries.response_values(name):
        sources.extend([ValueSource.RESPONSE_DICTIONARY, ValueSource.LAST_RESPONSE_DICTIONARY])
    if dictionaries.request_values(name):
        sources.extend([ValueSource.REQUEST_DICTIONARY, ValueSource.LAST_REQUEST_DICTIONARY])
    if dictionaries.llm_values(name):
        sources.append(ValueSource.LLM_DICTIONARY)
    return sources


def _select_source(name: str, schema: Schema, store: ExperienceStore, dictionaries: ValueDictionaries,
                   epsilon: float, rng: np.random.Generator, trace: Optional[DecisionTrace]) -> ValueSource:
    key = (name, SOURCE)
    options = [s.value for s in applicable_sources(name, schema, dictionaries)]
    option = probability_match(store.tallies(key, options), epsilon, rng)
    if trace is not None:
        trace.record(key, option)
    return ValueSource(option)


def select_value_source(param: ParameterSpec, store: ExperienceStore, dictionaries: ValueDictionaries,
                        epsilon: float, rng: np.random.Generator,
                        trace: Optional[DecisionTrace] = None) -> ValueSource:
    """Probability matching restricted to the sources applicable to this parameter"""
    return _select_source(param.normalized_name, param.schema, store, dictionaries, epsilon, rng, trace)


def reward_decisions(trace: DecisionTrace, outcome: OutcomeClass, store: ExperienceStore) -> ExperienceStore:
    """+1 to every traced decision on a 2xx; any other outcome leaves the store alone"""
    if outcome is OutcomeClass.SUCCESS:
        for key, option in trace.decisions:
            store.reward(key, option)
    return store


# ---------------------------------------------------------------------------
# Value materialization
# ---------------------------------------------------------------------------

def _pick(values: Sequence[Any], rng: np.random.Generator) -> Any:
    return copy.deepcopy(values[int(rng.integers(len(values)))])


def _random_string(schema: Schema, rng: np.random.Generator) -> str:
    if schema.max_length == 0:
        return ""
    unconstrained = schema.min_length is None and schema.max_length is None
    if unconstrained and schema.format:
        formatted = _formatted_string(schema.format, rng)
        if formatted is not None:
            return formatted
    low = max(1, schema.min_length or 0)
    cap = STRING_DEFAULT_MAX if schema.max_length is None else min(schema.max_length, STRING_DEFAULT_MAX)
    high = max(low, cap)
    length = int(rng.integers(low, high + 1))
    return "".join(rng.choice(_ALPHABET, size=length))


def _formatted_string(fmt: str, rng: np.random.Generator) -> Optional[str]:
    if fmt in ("date-time", "date"):
        base = datetime.datetime(2000, 1, 1, tzinfo=datetime.timezone.utc)
        moment = base + datetime.timedelta(seconds=int(rng.integers(0, 30 * 365 * 86400)))
        if fmt == "date":
            return moment.date().isoformat()
        return moment.strftime("%Y-%m-%dT%H:%M:%SZ")
    if fmt == "uuid":
        return str(uuid.UUID(bytes=rng.bytes(16), version=4))
    if fmt == "email":
        local = "".join(rng.choice(_ALPHABET, size=8)).lower()
        return f"{local}@example.com"
    return None


def integer_range(schema: Schema) -> Tuple[int, int]:
    """Inclusive integer bounds used by the random generator"""
    high_bound = None if schema.maximum is None else math.floor(schema.maximum)
    if schema.minimum is not None:
        low = math.ceil(schema.minimum)
    elif high_bound is not None:
        low = min(0, high_bound)
    else:
        low = 0
    high = max(low, 100) if high_bound is None else high_bound
    return low, max(low, high)


def number_range(schema: Schema) -> Tuple[float, float]:
    if schema.minimum is not None:
        low = float(schema.minimum)
    elif schema.maximum is not None:
        low = min(0.0, float(schema.maximum))
    else:
        low = 0.0
    high = max(low, 100.0) if schema.maximum is None else float(schema.maximum)
    return low, max(low, high)


def random_value(schema: Schema, rng: np.random.Generator) -> Any:
    """Type-directed random draw that satisfies every constraint of the schema"""
    if schema.enum_values:
        return _pick(schema.enum_values, rng)
    if schema.kind == "string":
        return _random_string(schema, rng)
    if schema.kind == "integer":
        low, high = integer_range(schema)
        return int(rng.integers(low, high + 1))
    if schema.kind == "number":
        low, high = number_range(schema)
        return float(rng.uniform(low, high)) if high > low else low
    if schema.kind == "boolean":
        return bool(rng.integers(2))
    if schema.kind == "array":
        classes = feasible_length_classes(schema)
        if not classes:
            raise NoFeasibleClass(f"No length class fits min_items={schema.min_items} max_items={schema.max_items}")
        length = _length_for(classes[int(rng.integers(len(classes)))], schema, rng)
        item_schema = schema.items or Schema(kind="string")
        return [random_value(item_schema, rng) for _ in range(length)]
    if schema.kind == "object":
        value = {}
        for name, (prop_schema, required) in schema.properties.items():
            if required or rng.random() < 0.5:
                value[name] = random_value(prop_schema, rng)
        return value
    raise ValueError(f"Unknown schema kind: {schema.kind}")


def _value_from(name: str, schema: Schema, source: ValueSource, dictionaries: ValueDictionaries,
                rng: np.random.Generator) -> Any:
    if source not in applicable_sources(name, schema, dictionaries):
        raise SourceNotApplicable(f"{source.value} cannot produce a value for '{name}'")
    if source is ValueSource.RANDOM:
        return random_value(schema, rng)
    if source is ValueSource.DEFAULT:
        return copy.deepcopy(schema.default_value)
    if source is ValueSource.ENUM:
        return _pick(schema.enum_values, rng)
    if source is ValueSource.EXAMPLES:
        return _pick(schema.example_values, rng)
    if source is ValueSource.RESPONSE_DICTIONARY:
        return _pick(dictionaries.response_values(name), rng)
    if source is ValueSource.LAST_RESPONSE_DICTIONARY:
        return copy.deepcopy(dictionaries.response_values(name)[-1])
    if source is ValueSource.REQUEST_DICTIONARY:
        return _pick(dictionaries.request_values(name), rng)
    if source is ValueSource.LAST_REQUEST_DICTIONARY:
        return copy.deepcopy(dictionaries.request_values(name)[-1])
    return _pick(dictionaries.llm_values(name), rng)


def generate_value(param: ParameterSpec, source: ValueSource, dictionaries: ValueDictionaries,
                   rng: np.random.Generator) -> Tuple[Any, Dict[str, Any]]:
    """
    Materialize one value from the given source

    Returns:
        Tuple: (value, provenance record)

    Raises:
        SourceNotApplicable: The source cannot currently produce a value
    """
    value = _value_from(param.normalized_name, param.schema, source, dictionaries, rng)
    return value, {"source": source.value}


class InputGenerator:
    """Builds parameter assignments for an operation and learns from their outcomes"""

    def __init__(self, config: GeneratorConfig, rng: np.random.Generator,
                 store: Optional[ExperienceStore] = None,
                 dictionaries: Optional[ValueDictionaries] = None):
        self.config = config
        self.rng = rng
        self.store = store if store is not None else ExperienceStore()
        self.dictionaries = dictionaries if dictionaries is not None else ValueDictionaries(config.dictionary_capacity)

    @property
    def epsilon(self) -> float:
        return self.config.epsilon

    def generate(self, operation: OperationSpec) -> GeneratedInput:
        """Decide presence, length and source for every parameter of the operation"""
        assignments: Dict[str, Any] = {}
        provenance: Dict[str, Dict[str, Any]] = {}
        trace = DecisionTrace()

        for param in operation.parameters:
            local = DecisionTrace()
            if not decide_presence(param, self.store, self.epsilon, self.rng, local):
                trace.decisions.extend(local.decisions)
                continue
            value, record = self._materialize(param.normalized_name, param.schema, local)
            assignments[param.key] = value
            record["decisions"] = local.to_list()
            provenance[param.key] = record
            trace.decisions.extend(local.decisions)

        return GeneratedInput(assignments=assignments, provenance=provenance, trace=trace)

    def _materialize(self, name: str, schema: Schema, trace: DecisionTrace) -> Tuple[Any, Dict[str, Any]]:
        if schema.kind == "array":
            length = decide_array_length(schema, self.store, self.epsilon, self.rng, name=name, trace=trace)
            item_schema = schema.items or Schema(kind="string")
            items = [self._materialize(name, item_schema, trace)[0] for _ in range(length)]
            return items, {"source": "Structured", "length": length}

        if schema.kind == "object":
            value = {}
            for prop_name, (prop_schema, required) in schema.properties.items():
                prop_key = normalize_name(prop_name)
                if not required and not _decide_presence(prop_key, self.store, self.epsilon, self.rng, trace):
                    continue
                value[prop_name] = self._materialize(prop_key, prop_schema, trace)[0]
            return value, {"source": "Structured"}

        source = _select_source(name, schema, self.store, self.dictionaries, self.epsilon, self.rng, trace)
        return _value_from(name, schema, source, self.dictionaries, self.rng), {"source": source.value}

    def reward(self, trace: DecisionTrace, outcome: OutcomeClass):
        reward_decisions(trace, outcome, self.store)
