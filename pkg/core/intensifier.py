"""
Test Intensifier - Replay a first successful request under small mutations
Nominal mutants stay within the OAS constraints, error mutants break exactly one of them
"""

import copy
import math
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Dict, List, Mapping, Optional, Set

import numpy as np

from config.settings import IntensifierConfig
from .explorer import BudgetExhausted
from .input_generator import ValueDictionaries, random_value
from .interaction import ConcreteRequest, Interaction, build_request, harvest
from .oas_model import METHOD_ORDER, ApiModel, OperationSpec, ParameterSpec, Schema, validate_against_schema

logger = logging.getLogger(__name__)


class InapplicableMutation(ValueError):
    """The operator cannot be applied to the chosen target"""


class MutationKind(str, Enum):
    NOMINAL = "nominal"
    ERROR = "error"


@dataclass(frozen=True)
class MutationOperator:
    name: str
    kind: MutationKind


ADD_PARAMETER = MutationOperator("AddParameter", MutationKind.NOMINAL)
REMOVE_PARAMETER = MutationOperator("RemoveParameter", MutationKind.NOMINAL)
REFILL_VALUE = MutationOperator("RefillValue", MutationKind.NOMINAL)
NUMBER_BOUNDARIES = MutationOperator("NumberBoundaries", MutationKind.NOMINAL)
ADD_INVALID_PARAMETER = MutationOperator("AddInvalidParameter", MutationKind.ERROR)
NUMBER_OUT_OF_BOUNDARIES = MutationOperator("NumberOutOfBoundaries", MutationKind.ERROR)
CHANGE_HTTP_METHOD = MutationOperator("ChangeHttpMethod", MutationKind.ERROR)
MISSING_REQUIRED = MutationOperator("MissingRequired", MutationKind.ERROR)
WRONG_TYPE = MutationOperator("WrongType", MutationKind.ERROR)
CONSTRAINTS_VIOLATION = MutationOperator("ConstraintsViolation", MutationKind.ERROR)

OPERATORS = (
    ADD_PARAMETER, REMOVE_PARAMETER, REFILL_VALUE, NUMBER_BOUNDARIES,
    ADD_INVALID_PARAMETER, NUMBER_OUT_OF_BOUNDARIES, CHANGE_HTTP_METHOD,
    MISSING_REQUIRED, WRONG_TYPE, CONSTRAINTS_VIOLATION,
)


@dataclass(frozen=True)
class Mutation:
    operator: MutationOperator
    target: str     # parameter key, or the new method for ChangeHttpMethod

    @property
    def label(self) -> str:
        return f"{self.operator.name}({self.target})"


@dataclass
class Mutant:
    mutation: Mutation
    request: ConcreteRequest

    @property
    def origin(self) -> str:
        return f"{self.mutation.operator.kind.value}-mutant"


# ---------------------------------------------------------------------------
# Value helpers
# ---------------------------------------------------------------------------

def wrong_type_value(schema: Schema) -> Any:
    """Deterministic value of a different kind"""
    return 42 if schema.kind == "string" else "invalid"


def _integer_bounds(schema: Schema):
    low = None if schema.minimum is None else math.ceil(schema.minimum)
    high = None if schema.maximum is None else math.floor(schema.maximum)
    return low, high


def _unique(values: List[Any]) -> List[Any]:
    seen = []
    for value in values:
        if value not in seen:
            seen.append(value)
    return seen


def boundary_values(schema: Schema) -> List[Any]:
    """minimum, minimum+1, maximum-1, maximum, keeping only values that satisfy the schema"""
    if not schema.is_numeric or not schema.has_bounds:
        return []
    if schema.kind == "integer":
        low, high = _integer_bounds(schema)
    else:
        low, high = schema.minimum, schema.maximum
    candidates = []
    if low is not None:
        candidates += [low, low + 1]
    if high is not None:
        candidates += [high - 1, high]
    if schema.kind == "number":
        candidates = [float(v) for v in candidates]
    return [v for v in _unique(candidates) if validate_against_schema(v, schema).valid]


def out_of_bounds_values(schema: Schema) -> List[Any]:
    """minimum-1 and maximum+1, keeping only values that violate the schema"""
    if not schema.is_numeric or not schema.has_bounds:
        return []
    if schema.kind == "integer":
        low, high = _integer_bounds(schema)
    else:
        low, high = schema.minimum, schema.maximum
    candidates = []
    if low is not None:
        candidates.append(low - 1)
    if high is not None:
        candidates.append(high + 1)
    if schema.kind == "number":
        candidates = [float(v) for v in candidates]
    return [v for v in _unique(candidates) if not validate_against_schema(v, schema).valid]


def _not_in_enum(schema: Schema) -> Optional[Any]:
    values = schema.enum_values or ()
    if schema.kind == "string":
        candidate = "invalid"
        while candidate in values:
            candidate += "_"
        return candidate
    if schema.is_numeric:
        numbers = [v for v in values if not isinstance(v, bool)]
        bump = (max(numbers) if numbers else 0) + 1
        return float(bump) if schema.kind == "number" else int(bump)
    if schema.kind == "boolean":
        missing = [b for b in (True, False) if b not in values]
        return missing[0] if missing else None
    return None


def constraint_violations(schema: Schema, current: Any, rng: np.random.Generator) -> List[Any]:
    """Right-kind values that break one non-type constraint (range, length, items, enum, required property)"""
    candidates: List[Any] = []
    if schema.is_numeric:
        candidates.extend(out_of_bounds_values(schema))
    elif schema.kind == "string":
        if schema.min_length:
            candidates.append("a" * (schema.min_length - 1))
        if schema.max_length is not None:
            candidates.append("a" * (schema.max_length + 1))
    elif schema.kind == "array":
        item_schema = schema.items or Schema(kind="string")
        if schema.min_items:
            candidates.append([random_value(item_schema, rng) for _ in range(schema.min_items - 1)])
        if schema.max_items is not None:
            candidates.append([random_value(item_schema, rng) for _ in range(schema.max_items + 1)])
    elif schema.kind == "object":
        base = copy.deepcopy(current) if isinstance(current, dict) else random_value(schema, rng)
        for name, (_, required) in schema.properties.items():
            if required:
                broken = {k: v for k, v in base.items() if k != name}
                candidates.append(broken)
                break

    if schema.enum_values:
        outsider = _not_in_enum(schema)
        if outsider is not None:
            candidates.append(outsider)

    return [v for v in candidates if not validate_against_schema(v, schema).valid]


def _has_breakable_constraint(schema: Schema) -> bool:
    if schema.is_numeric and out_of_bounds_values(schema):
        return True
    if schema.kind == "string" and (schema.min_length or schema.max_length is not None):
        return True
    if schema.kind == "array" and (schema.min_items or schema.max_items is not None):
        return True
    if schema.kind == "object" and any(required for _, required in schema.properties.values()):
        return True
    return bool(schema.enum_values) and _not_in_enum(schema) is not None


# ---------------------------------------------------------------------------
# Planning and application
# ---------------------------------------------------------------------------

def applicable_mutations(request: ConcreteRequest, operation: OperationSpec) -> List[Mutation]:
    """Every (operator, target) pairing valid for a successful request of the operation"""
    present = set(request.parameters)
    mutations: List[Mutation] = []
    for param in operation.parameters:
        key = param.key
        if key not in present:
            if not param.required:
                mutations.append(Mutation(ADD_PARAMETER, key))
                mutations.append(Mutation(ADD_INVALID_PARAMETER, key))
            continue
        if not param.required:
            mutations.append(Mutation(REMOVE_PARAMETER, key))
        mutations.append(Mutation(REFILL_VALUE, key))
        if boundary_values(param.schema):
            mutations.append(Mutation(NUMBER_BOUNDARIES, key))
        if out_of_bounds_values(param.schema):
            mutations.append(Mutation(NUMBER_OUT_OF_BOUNDARIES, key))
        if param.required:
            mutations.append(Mutation(MISSING_REQUIRED, key))
        mutations.append(Mutation(WRONG_TYPE, key))
        if _has_breakable_constraint(param.schema):
            mutations.append(Mutation(CONSTRAINTS_VIOLATION, key))

    for method in METHOD_ORDER:
        if method != operation.method:
            mutations.append(Mutation(CHANGE_HTTP_METHOD, method))
    return mutations


def _choice(values: List[Any], rng: np.random.Generator) -> Any:
    return values[int(rng.integers(len(values)))]


def _mutated_value(param: ParameterSpec, mutation: Mutation, current: Any, rng: np.random.Generator) -> Any:
    operator = mutation.operator
    schema = param.schema
    if operator in (ADD_PARAMETER, REFILL_VALUE):
        return random_value(schema, rng)
    if operator in (ADD_INVALID_PARAMETER, WRONG_TYPE):
        return wrong_type_value(schema)
    if operator is NUMBER_BOUNDARIES:
        values = boundary_values(schema)
    elif operator is NUMBER_OUT_OF_BOUNDARIES:
        values = out_of_bounds_values(schema)
    else:
        values = constraint_violations(schema, current, rng)
    if not values:
        raise InapplicableMutation(f"{mutation.label}: no value available")
    return _choice(values, rng)


def apply_mutation(request: ConcreteRequest, operation: OperationSpec, mutation: Mutation,
                   rng: np.random.Generator, api: Optional[ApiModel] = None,
                   auth_headers: Optional[Mapping[str, str]] = None) -> Mutant:
    """
    Build one standalone mutant of a successful request

    Raises:
        InapplicableMutation: The pairing does not fit the request
    """
    operator = mutation.operator
    if operator is CHANGE_HTTP_METHOD:
        new_method = mutation.target.upper()
        if new_method == request.method:
            raise InapplicableMutation(f"{mutation.label}: method unchanged")
        attributed = api.find_operation(new_method, operation.path) if api is not None else None
        mutant = copy.deepcopy(request)
        mutant.method = new_method
        mutant.operation_id = attributed.operation_id if attributed is not None else None
        return Mutant(mutation, mutant)

    param = operation.parameter(mutation.target)
    if param is None:
        raise InapplicableMutation(f"{mutation.label}: unknown parameter")
    assignments: Dict[str, Any] = copy.deepcopy(request.parameters)
    provenance = copy.deepcopy(request.provenance)
    present = param.key in assignments

    if operator in (ADD_PARAMETER, ADD_INVALID_PARAMETER):
        if present or param.required:
            raise InapplicableMutation(f"{mutation.label}: needs an absent optional parameter")
    elif operator is REMOVE_PARAMETER:
        if not present or param.required:
            raise InapplicableMutation(f"{mutation.label}: needs a present optional parameter")
    elif operator is MISSING_REQUIRED:
        if not present or not param.required:
            raise InapplicableMutation(f"{mutation.label}: needs a present required parameter")
    elif not present:
        raise InapplicableMutation(f"{mutation.label}: parameter absent")

    if operator in (REMOVE_PARAMETER, MISSING_REQUIRED):
        del assignments[param.key]
        provenance.pop(param.key, None)
    else:
        assignments[param.key] = _mutated_value(param, mutation, assignments.get(param.key), rng)
        provenance[param.key] = {"source": "Mutation", "operator": operator.name}

    mutant = build_request(operation, assignments, auth_headers, provenance,
                           allow_missing_path=operator is MISSING_REQUIRED)
    return Mutant(mutation, mutant)


class Intensifier:
    """Mutation bursts on the first success of each operation"""

    def __init__(self, config: IntensifierConfig, api: ApiModel, rng: np.random.Generator,
                 auth_headers: Optional[Mapping[str, str]] = None):
        self.config = config
        self.api = api
        self.rng = rng
        self.auth_headers = dict(auth_headers or {})
        self.triggered: Set[str] = set()

    def should_trigger(self, operation: OperationSpec) -> bool:
        return self.config.enabled and operation.operation_id not in self.triggered

    def intensify(self, interaction: Interaction, operation: OperationSpec, budget: int,
                  send: Callable[[Mutant], Interaction],
                  dictionaries: Optional[ValueDictionaries] = None) -> List[Interaction]:
        """
        Execute up to min(budget, cap) mutants of a first successful request, in shuffled order

        Args:
            interaction: The successful interaction to mutate
            operation: Its operation
            budget: Requests still available
            send: Executes one mutant and records it; may raise BudgetExhausted
            dictionaries: Receives response values of successful mutants (request values only for nominal ones)

        Returns:
            List[Interaction]: Executed mutant interactions
        """
        if not self.should_trigger(operation):
            return []
        self.triggered.add(operation.operation_id)

        mutations = applicable_mutations(interaction.request, operation)
        order = self.rng.permutation(len(mutations))
        limit = min(budget, self.config.cap)
        logger.info(
            f"Intensifying {operation.operation_id}: {len(mutations)} applicable mutations, "
            f"executing up to {limit}"
        )

        executed: List[Interaction] = []
        for position in order:
            if len(executed) >= limit:
                break
            mutation = mutations[int(position)]
            try:
                mutant = apply_mutation(interaction.request, operation, mutation, self.rng,
                                        self.api, self.auth_headers)
            except InapplicableMutation as e:
                logger.debug(f"Skipped mutation: {str(e)}")
                continue
            try:
                result = send(mutant)
            except BudgetExhausted:
                logger.info(f"Budget exhausted during intensification of {operation.operation_id}")
                break
            executed.append(result)
            if dictionaries is not None:
                harvest(result, dictionaries, include_request=mutation.operator.kind is MutationKind.NOMINAL)
        return executed
