"""
Test intensifier tests
"""

import json
import unittest

import numpy as np

from config.settings import IntensifierConfig
from core.explorer import BudgetExhausted
from core.input_generator import ValueDictionaries, random_value
from core.intensifier import (
    ADD_INVALID_PARAMETER, ADD_PARAMETER, CHANGE_HTTP_METHOD, CONSTRAINTS_VIOLATION, MISSING_REQUIRED,
    NUMBER_BOUNDARIES, NUMBER_OUT_OF_BOUNDARIES, OPERATORS, REFILL_VALUE, REMOVE_PARAMETER, WRONG_TYPE,
    InapplicableMutation, Intensifier, Mutation, MutationKind, apply_mutation, applicable_mutations,
    boundary_values, constraint_violations, out_of_bounds_values, wrong_type_value,
)
from core.interaction import Interaction, classify_status, build_request
from core.oas_model import Schema, parse_spec, validate_request

CARTS = """
openapi: 3.0.3
info: {title: Carts}
paths:
  /carts/{cartId}/items:
    parameters:
      - {name: cartId, in: path, required: true, schema: {type: integer, minimum: 1}}
    get:
      operationId: listItems
      responses: {'200': {description: ok}}
    post:
      operationId: addItem
      parameters:
        - {name: productId, in: query, required: true, schema: {type: integer}}
        - {name: quantity, in: query, schema: {type: integer, minimum: 1, maximum: 100}}
        - {name: note, in: query, schema: {type: string, maxLength: 5}}
        - {name: gift, in: query, schema: {type: boolean}}
      responses: {'200': {description: ok}}
"""


def answer(mutant, sequence: int = 1, status: int = 200, body: str = '{"cartSize": 7}') -> Interaction:
    return Interaction(sequence=sequence, timestamp="", request=mutant.request, status=status,
                       outcome=classify_status(status), elapsed_ms=0.5, response_body=body,
                       origin=mutant.origin, mutation=mutant.mutation.label)


class TestValueHelpers(unittest.TestCase):
    """Test boundary and violation values"""

    def test_operator_catalog(self):
        """Test four nominal and six error operators exist"""
        kinds = [op.kind for op in OPERATORS]
        self.assertEqual(kinds.count(MutationKind.NOMINAL), 4)
        self.assertEqual(kinds.count(MutationKind.ERROR), 6)

    def test_integer_boundaries(self):
        """Test in-range boundary values"""
        self.assertEqual(boundary_values(Schema(kind="integer", minimum=1, maximum=100)), [1, 2, 99, 100])
        self.assertEqual(boundary_values(Schema(kind="integer", minimum=0.5, maximum=3.5)), [1, 2, 3])
        self.assertEqual(boundary_values(Schema(kind="integer", minimum=7, maximum=7)), [7])
        self.assertEqual(boundary_values(Schema(kind="integer")), [])

    def test_number_boundaries(self):
        """Test floats keep their kind"""
        self.assertEqual(boundary_values(Schema(kind="number", minimum=0, maximum=1)), [0.0, 1.0])

    def test_out_of_bounds(self):
        """Test one step outside each bound"""
        self.assertEqual(out_of_bounds_values(Schema(kind="integer", minimum=1, maximum=100)), [0, 101])
        self.assertEqual(out_of_bounds_values(Schema(kind="integer", minimum=1)), [0])
        self.assertEqual(out_of_bounds_values(Schema(kind="string", min_length=1)), [])

    def test_wrong_type(self):
        """Test wrong-type values differ in kind"""
        self.assertEqual(wrong_type_value(Schema(kind="string")), 42)
        self.assertEqual(wrong_type_value(Schema(kind="integer")), "invalid")
        self.assertEqual(wrong_type_value(Schema(kind="array")), "invalid")

    def test_constraint_violations(self):
        """Test every candidate breaks a constraint while keeping the kind"""
        rng = np.random.default_rng(0)
        self.assertEqual(constraint_violations(Schema(kind="string", min_length=2, max_length=3), "ab", rng),
                         ["a", "aaaa"])
        self.assertEqual(constraint_violations(Schema(kind="string", enum_values=("x", "y")), "x", rng),
                         ["invalid"])
        obj = Schema(kind="object", properties={"id": (Schema(kind="integer"), True),
                                                 "n": (Schema(kind="string"), False)})
        self.assertEqual(constraint_violations(obj, {"id": 1, "n": "x"}, rng), [{"n": "x"}])
        lists = constraint_violations(Schema(kind="array", items=Schema(kind="integer"), max_items=2), [1], rng)
        self.assertEqual([len(v) for v in lists], [3])


class TestMutations(unittest.TestCase):
    """Test mutation planning and application"""

    def setUp(self):
        self.api = parse_spec(CARTS, "yaml")
        self.operation = self.api.by_id("addItem")
        self.request = build_request(self.operation, {"path:cartId": 3, "query:productId": 5817,
                                                      "query:quantity": 2})
        self.rng = np.random.default_rng(1)

    def labels(self, mutations):
        return sorted(m.label for m in mutations)

    def test_applicable_mutations(self):
        """Test operator targets follow presence and requiredness"""
        labels = self.labels(applicable_mutations(self.request, self.operation))
        expected = sorted([
            "RefillValue(path:cartId)", "NumberBoundaries(path:cartId)", "NumberOutOfBoundaries(path:cartId)",
            "MissingRequired(path:cartId)", "WrongType(path:cartId)", "ConstraintsViolation(path:cartId)",
            "RefillValue(query:productId)", "MissingRequired(query:productId)", "WrongType(query:productId)",
            "RemoveParameter(query:quantity)", "RefillValue(query:quantity)", "NumberBoundaries(query:quantity)",
            "NumberOutOfBoundaries(query:quantity)", "WrongType(query:quantity)",
            "ConstraintsViolation(query:quantity)",
            "AddParameter(query:note)", "AddInvalidParameter(query:note)",
            "AddParameter(query:gift)", "AddInvalidParameter(query:gift)",
            "ChangeHttpMethod(GET)", "ChangeHttpMethod(PUT)", "ChangeHttpMethod(PATCH)",
            "ChangeHttpMethod(DELETE)",
        ])
        self.assertEqual(labels, expected)

    def test_nominal_mutants_stay_valid(self):
        """Test nominal mutants satisfy the operation's constraints"""
        for mutation in applicable_mutations(self.request, self.operation):
            if mutation.operator.kind is not MutationKind.NOMINAL:
                continue
            for _ in range(10):
                mutant = apply_mutation(self.request, self.operation, mutation, self.rng, self.api)
                self.assertEqual(validate_request(self.operation, mutant.request.parameters), [], mutation.label)
                self.assertEqual(mutant.origin, "nominal-mutant")

    def test_error_mutants_break_one_constraint(self):
        """Test every parameter error mutant violates the operation's constraints"""
        for mutation in applicable_mutations(self.request, self.operation):
            if mutation.operator.kind is not MutationKind.ERROR or mutation.operator is CHANGE_HTTP_METHOD:
                continue
            mutant = apply_mutation(self.request, self.operation, mutation, self.rng, self.api)
            violations = validate_request(self.operation, mutant.request.parameters)
            self.assertEqual(len(violations), 1, f"{mutation.label}: {violations}")
            self.assertEqual(mutant.origin, "error-mutant")
            self.assertEqual(mutant.request.provenance.get(mutation.target, {}).get("source", "Mutation"),
                             "Mutation")

    def test_original_request_untouched(self):
        """Test mutants are independent copies"""
        before = self.request.to_dict()
        for mutation in applicable_mutations(self.request, self.operation):
            apply_mutation(self.request, self.operation, mutation, self.rng, self.api)
        self.assertEqual(self.request.to_dict(), before)

    def test_change_method_attribution(self):
        """Test a method change is attributed to the matching operation, if any"""
        to_get = apply_mutation(self.request, self.operation, Mutation(CHANGE_HTTP_METHOD, "GET"),
                                self.rng, self.api)
        self.assertEqual(to_get.request.method, "GET")
        self.assertEqual(to_get.request.operation_id, "listItems")
        self.assertEqual(to_get.request.target, self.request.target)
        to_delete = apply_mutation(self.request, self.operation, Mutation(CHANGE_HTTP_METHOD, "DELETE"),
                                   self.rng, self.api)
        self.assertIsNone(to_delete.request.operation_id)
        with self.assertRaises(InapplicableMutation):
            apply_mutation(self.request, self.operation, Mutation(CHANGE_HTTP_METHOD, "POST"), self.rng, self.api)

    def test_missing_required_path_parameter(self):
        """Test dropping a path parameter leaves an empty segment"""
        mutant = apply_mutation(self.request, self.operation, Mutation(MISSING_REQUIRED, "path:cartId"),
                                self.rng, self.api)
        self.assertEqual(mutant.request.path, "/carts//items")
        self.assertNotIn("path:cartId", mutant.request.parameters)

    def test_inapplicable_pairings(self):
        """Test pairings that do not fit the request are refused"""
        cases = [
            Mutation(ADD_PARAMETER, "query:quantity"),
            Mutation(ADD_INVALID_PARAMETER, "query:productId"),
            Mutation(REMOVE_PARAMETER, "query:productId"),
            Mutation(MISSING_REQUIRED, "query:quantity"),
            Mutation(WRONG_TYPE, "query:note"),
            Mutation(REFILL_VALUE, "query:unknown"),
            Mutation(NUMBER_BOUNDARIES, "query:productId"),
            Mutation(NUMBER_OUT_OF_BOUNDARIES, "query:productId"),
            Mutation(CONSTRAINTS_VIOLATION, "query:productId"),
        ]
        for mutation in cases:
            with self.assertRaises(InapplicableMutation, msg=mutation.label):
                apply_mutation(self.request, self.operation, mutation, self.rng, self.api)


class TestIntensifier(unittest.TestCase):
    """Test mutation bursts"""

    def setUp(self):
        self.api = parse_spec(CARTS, "yaml")
        self.operation = self.api.by_id("addItem")
        request = build_request(self.operation, {"path:cartId": 3, "query:productId": 5817})
        self.success = Interaction(sequence=1, timestamp="", request=request, status=200,
                                   outcome=classify_status(200), elapsed_ms=1.0)
        self.sent = []

    def send(self, mutant):
        self.sent.append(mutant)
        return answer(mutant, sequence=len(self.sent) + 1)

    def intensifier(self, cap: int = 50, enabled: bool = True) -> Intensifier:
        return Intensifier(IntensifierConfig(enabled=enabled, cap=cap), self.api, np.random.default_rng(2))

    def test_runs_once_per_operation(self):
        """Test only the first success of an operation is intensified"""
        intensifier = self.intensifier()
        first = intensifier.intensify(self.success, self.operation, 1000, self.send)
        self.assertEqual(len(first), len(applicable_mutations(self.success.request, self.operation)))
        self.assertFalse(intensifier.should_trigger(self.operation))
        self.assertEqual(intensifier.intensify(self.success, self.operation, 1000, self.send), [])

    def test_cap_and_budget(self):
        """Test the burst is limited by both the cap and the remaining budget"""
        self.assertEqual(len(self.intensifier(cap=3).intensify(self.success, self.operation, 100, self.send)), 3)
        self.assertEqual(len(self.intensifier(cap=50).intensify(self.success, self.operation, 2, self.send)), 2)

    def test_disabled(self):
        """Test a disabled intensifier sends nothing"""
        self.assertEqual(self.intensifier(enabled=False).intensify(self.success, self.operation, 100, self.send), [])
        self.assertEqual(self.sent, [])

    def test_budget_exhausted_mid_burst(self):
        """Test BudgetExhausted from the sender ends the burst"""
        def limited_send(mutant):
            if self.sent:
                raise BudgetExhausted("no budget")
            return self.send(mutant)
        executed = self.intensifier().intensify(self.success, self.operation, 100, limited_send)
        self.assertEqual(len(executed), 1)

    def test_shuffled_order_is_seeded(self):
        """Test the same seed replays the same mutation order"""
        self.intensifier(cap=5).intensify(self.success, self.operation, 100, self.send)
        first = [m.mutation.label for m in self.sent]
        self.sent = []
        self.intensifier(cap=5).intensify(self.success, self.operation, 100, self.send)
        self.assertEqual([m.mutation.label for m in self.sent], first)

    def test_error_mutant_requests_not_harvested(self):
        """Test only nominal mutants contribute request values"""
        dictionaries = ValueDictionaries()
        self.intensifier(cap=100).intensify(self.success, self.operation, 1000, self.send, dictionaries)
        self.assertEqual(dictionaries.response_values("cartsize"), [7] * len(self.sent))
        self.assertNotIn("invalid", dictionaries.request_values("gift"))
        self.assertNotIn(42, dictionaries.request_values("note"))
        self.assertNotIn(0, dictionaries.request_values("cartid"))


def random_param_schema(rng: np.random.Generator) -> dict:
    kind = ["integer", "number", "string", "enum", "boolean", "array"][int(rng.integers(6))]
    if kind in ("integer", "number"):
        schema = {"type": kind}
        low = int(rng.integers(-50, 51))
        if rng.random() < 0.7:
            schema["minimum"] = low + 0.5 if kind == "number" and rng.random() < 0.5 else low
        if rng.random() < 0.7:
            schema["maximum"] = low + int(rng.integers(1, 60))
        return schema
    if kind == "string":
        schema = {"type": "string"}
        min_length = int(rng.integers(0, 4))
        if rng.random() < 0.5:
            schema["minLength"] = min_length
        if rng.random() < 0.5:
            schema["maxLength"] = min_length + int(rng.integers(0, 6))
        return schema
    if kind == "enum":
        return {"type": "string", "enum": ["red", "green", "blue"][:int(rng.integers(1, 4))]}
    if kind == "boolean":
        return {"type": "boolean"}
    min_items = int(rng.integers(0, 3))
    return {"type": "array", "items": {"type": "integer", "minimum": 0, "maximum": 9},
            "minItems": min_items, "maxItems": min_items + int(rng.integers(0, 4))}


def random_operation(rng: np.random.Generator):
    params = [{"name": f"p{i}", "in": "query", "required": bool(rng.random() < 0.5),
               "schema": random_param_schema(rng)} for i in range(int(rng.integers(1, 5)))]
    document = {
        "openapi": "3.0.3",
        "info": {"title": "Random"},
        "paths": {"/things": {"post": {"operationId": "makeThing", "parameters": params,
                                       "responses": {"200": {"description": "ok"}}}}},
    }
    api = parse_spec(json.dumps(document), "json")
    operation = api.operations[0]
    assignments = {p.key: random_value(p.schema, rng) for p in operation.parameters
                   if p.required or rng.random() < 0.5}
    return api, operation, build_request(operation, assignments)


class TestMutationProperties(unittest.TestCase):
    """Test mutant validity over random operations and base requests"""

    def test_random_schemas(self):
        """Test nominal mutants stay valid and error mutants break the contract"""
        rng = np.random.default_rng(2024)
        checked = 0
        for _ in range(1000):
            api, operation, request = random_operation(rng)
            self.assertEqual(validate_request(operation, request.parameters), [])
            for mutation in applicable_mutations(request, operation):
                try:
                    mutant = apply_mutation(request, operation, mutation, rng, api)
                except InapplicableMutation:
                    continue
                violations = validate_request(operation, mutant.request.parameters)
                if mutation.operator.kind is MutationKind.NOMINAL:
                    self.assertEqual(violations, [], mutation.label)
                elif mutation.operator is CHANGE_HTTP_METHOD:
                    self.assertNotEqual(mutant.request.method, request.method)
                else:
                    self.assertTrue(violations, mutation.label)
                checked += 1
        self.assertGreater(checked, 5000)


if __name__ == '__main__':
    unittest.main()
