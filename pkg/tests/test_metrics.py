"""
Metrics tests
"""

import json
import os
import tempfile
import unittest

import numpy as np

from core.interaction import ConcreteRequest, Interaction, classify_status
from core.metrics import (
    EMPTY_SIGNATURE, SUMMARY_SCHEMA_VERSION, FaultRegistry, MetricsRecorder, TimelineSample, auc,
    build_summary, fault_signature, operation_coverage, read_timeline_csv, replay_timeline,
    write_timeline_csv,
)
from core.oas_model import parse_spec
from core.sim_apis import SimFlaky5xx

API = parse_spec("""
openapi: 3.0.3
info: {title: Three}
paths:
  /a: {get: {operationId: opA, responses: {'200': {description: ok}}}}
  /b: {get: {operationId: opB, responses: {'200': {description: ok}}}}
  /c: {get: {operationId: opC, responses: {'200': {description: ok}}}}
""", "yaml")


def make(sequence: int, operation_id, status, body: str = "", origin: str = "explorer") -> Interaction:
    request = ConcreteRequest(method="GET", path="/x", operation_id=operation_id)
    return Interaction(sequence=sequence, timestamp=f"2024-01-01T00:00:{sequence % 60:02d}+00:00",
                       request=request, status=status, outcome=classify_status(status), elapsed_ms=1.0,
                       response_body=body, origin=origin)


class FakeClock:
    def __init__(self):
        self.now = 100.0

    def __call__(self) -> float:
        return self.now


class TestFaultSignature(unittest.TestCase):
    """Test 5xx signature normalization"""

    def test_digits_collapse(self):
        """Test messages differing only in numbers share a signature"""
        self.assertEqual(fault_signature(500, "NullPointerException at line 532"),
                         fault_signature(500, "NullPointerException at line 17"))

    def test_distinct_traces(self):
        """Test structurally different errors stay distinct"""
        first = "java.lang.NullPointerException\n\tat com.shop.Cart.add(Cart.java:41)"
        second = "java.lang.IllegalStateException: closed\n\tat com.shop.Order.pay(Order.java:77)"
        self.assertNotEqual(fault_signature(500, first), fault_signature(500, second))

    def test_empty_body(self):
        """Test an empty body has the placeholder signature"""
        self.assertEqual(fault_signature(500, ""), EMPTY_SIGNATURE)
        self.assertEqual(fault_signature(503, "   \n"), EMPTY_SIGNATURE)

    def test_volatile_parts_masked(self):
        """Test uuids, hex ids and quoted literals are masked"""
        a = fault_signature(500, "Request 3f2b8c1e-0d4a-4b6e-9c7f-1a2b3c4d5e6f failed for 'alice' in deadbeef99")
        b = fault_signature(500, "Request 00000000-1111-4222-8333-444444444444 failed for 'bob' in cafebabe01")
        self.assertEqual(a, b)
        self.assertEqual(a, "request # failed for $ in #")

    def test_json_bodies_flattened(self):
        """Test JSON error bodies become key=value lines"""
        signature = fault_signature(500, json.dumps({"error": "Boom", "detail": {"code": 12}}))
        self.assertEqual(signature, "error=boom code=#")

    def test_flaky_sim_has_one_fault(self):
        """Test every crashing input of the flaky sim yields the same signature"""
        sim = SimFlaky5xx(seed=3)
        registry = FaultRegistry()
        for i, value in enumerate(range(901, 1001, 7), start=1):
            response = sim.handle("GET", f"/compute?value={value}")
            registry.record(make(i, "compute", response.status, response.body))
        self.assertEqual(len(registry), 1)
        self.assertEqual(registry.to_list()[0]["occurrences"], 15)
        self.assertEqual(registry.to_list()[0]["first_request"], 1)

    def test_only_server_errors_recorded(self):
        """Test 4xx and transport errors are not faults"""
        registry = FaultRegistry()
        self.assertFalse(registry.record(make(1, "opA", 404, "nope")))
        self.assertFalse(registry.record(make(2, "opA", None)))
        self.assertTrue(registry.record(make(3, "opA", 500, "boom")))
        self.assertFalse(registry.record(make(4, "opB", 502, "boom")))
        self.assertIn("boom", registry)


class TestCoverage(unittest.TestCase):
    """Test operation coverage"""

    def test_matches_brute_force(self):
        """Test coverage on random logs against a direct scan"""
        rng = np.random.default_rng(0)
        ids = ["opA", "opB", "opC", None, "unknownOp"]
        statuses = [200, 201, 400, 404, 500, None]
        for _ in range(500):
            log = [make(i + 1, ids[rng.integers(len(ids))], statuses[rng.integers(len(statuses))])
                   for i in range(int(rng.integers(0, 12)))]
            expected = {op: any(x.operation_id == op and x.status is not None and 200 <= x.status < 300
                                for x in log)
                        for op in ("opA", "opB", "opC")}
            report = operation_coverage(log, API)
            self.assertEqual(report.flags, expected)
            self.assertAlmostEqual(report.fraction, sum(expected.values()) / 3)

    def test_unattributed_requests_ignored(self):
        """Test successes without a known operation do not count"""
        report = operation_coverage([make(1, None, 200), make(2, "other", 200)], API)
        self.assertEqual(report.covered, 0)


class TestAuc(unittest.TestCase):
    """Test the area under trend curves"""

    @staticmethod
    def riemann(samples, metric, horizon, dx=0.25):
        total = 0.0
        x = dx / 2
        while x < horizon:
            value = 0.0
            for s in samples:
                if s.requests <= x:
                    value = getattr(s, metric)
            total += value * dx
            x += dx
        return total

    def test_matches_riemann_oracle(self):
        """Test the exact step integral against a fine midpoint sum"""
        rng = np.random.default_rng(1)
        for _ in range(50):
            covered = 0
            samples = [TimelineSample(0.0, 0, 0, 0)]
            for n in range(1, int(rng.integers(1, 40))):
                covered += int(rng.random() < 0.2)
                samples.append(TimelineSample(float(n), n, covered, 0))
            horizon = samples[-1].requests + int(rng.integers(0, 5))
            self.assertAlmostEqual(auc(samples, "ops_covered", horizon),
                                   self.riemann(samples, "ops_covered", horizon), delta=1e-9)

    def test_known_values(self):
        """Test a small hand-computed curve"""
        samples = [TimelineSample(0.0, 0, 0, 0), TimelineSample(1.0, 1, 1, 0),
                   TimelineSample(2.0, 2, 1, 1), TimelineSample(3.0, 3, 3, 1)]
        self.assertEqual(auc(samples, "ops_covered", 3), 2.0)
        self.assertEqual(auc(samples, "ops_covered", 5), 8.0)
        self.assertEqual(auc(samples, "unique_faults", 2.5, abscissa="seconds"), 0.5)
        self.assertEqual(auc(samples, "ops_covered", 1.5), 0.5)

    def test_monotone_in_metric(self):
        """Test a pointwise larger curve never has a smaller area"""
        rng = np.random.default_rng(2)
        for _ in range(50):
            low = np.cumsum(rng.integers(0, 2, size=20))
            high = low + np.cumsum(rng.integers(0, 2, size=20))
            lower = [TimelineSample(float(i), i, int(v), 0) for i, v in enumerate(low)]
            upper = [TimelineSample(float(i), i, int(v), 0) for i, v in enumerate(high)]
            self.assertGreaterEqual(auc(upper, "ops_covered", 25), auc(lower, "ops_covered", 25))

    def test_invalid_arguments(self):
        """Test empty timelines and unknown abscissas"""
        with self.assertRaises(ValueError):
            auc([], "ops_covered", 1)
        with self.assertRaises(ValueError):
            auc([TimelineSample(0.0, 0, 0, 0)], "ops_covered", 1, abscissa="hours")


class TestRecorder(unittest.TestCase):
    """Test live metric recording"""

    def test_first_success_and_samples(self):
        """Test per-request samples and first-success reporting"""
        recorder = MetricsRecorder(API, clock=FakeClock())
        self.assertTrue(recorder.observe(make(1, "opA", 200)))
        self.assertFalse(recorder.observe(make(2, "opA", 200)))
        self.assertFalse(recorder.observe(make(3, "opB", 500, "boom")))
        self.assertEqual(recorder.samples[-1], TimelineSample(0.0, 3, 1, 1))
        self.assertEqual(len(recorder.samples), 4)
        self.assertEqual(recorder.covered, {"opA": 1})
        self.assertFalse(recorder.fully_covered)
        recorder.observe(make(4, "opB", 200))
        recorder.observe(make(5, "opC", 204))
        self.assertTrue(recorder.fully_covered)

    def test_wall_clock_series(self):
        """Test one wall sample per elapsed interval"""
        clock = FakeClock()
        recorder = MetricsRecorder(API, wall_interval=5.0, clock=clock)
        clock.now += 3.0
        recorder.observe(make(1, "opA", 200))
        clock.now += 9.0
        recorder.observe(make(2, "opB", 400))
        self.assertEqual([s.elapsed_s for s in recorder.wall_samples], [0.0, 5.0, 10.0])
        self.assertEqual(recorder.wall_samples[1], TimelineSample(5.0, 2, 1, 0))
        clock.now += 4.0
        recorder.tick()
        self.assertEqual(recorder.wall_samples[-1].elapsed_s, 15.0)

    def test_timeline_csv(self):
        """Test the CSV file keeps every sample"""
        samples = [TimelineSample(0.0, 0, 0, 0), TimelineSample(1.25, 1, 1, 0), TimelineSample(2.5, 2, 1, 1)]
        with tempfile.TemporaryDirectory() as tmpdir:
            path = os.path.join(tmpdir, "timeline.csv")
            write_timeline_csv(path, samples)
            with open(path, 'r', encoding='utf-8') as f:
                self.assertEqual(f.readline().strip(), "elapsed_s,requests,ops_covered,unique_faults")
            self.assertEqual(read_timeline_csv(path), samples)


class TestSummary(unittest.TestCase):
    """Test the log-derived summary"""

    def setUp(self):
        self.log = [
            make(1, "opA", 400),
            make(2, "opA", 200),
            make(3, "opB", 500, "crash 1", origin="error-mutant"),
            make(4, "opB", 500, "crash 2", origin="error-mutant"),
            make(5, None, None, origin="error-mutant"),
            make(6, "opB", 201, origin="nominal-mutant"),
        ]

    def test_summary_fields(self):
        """Test coverage, faults, outcomes and origins"""
        summary = build_summary(self.log, API)
        self.assertEqual(summary["schema_version"], SUMMARY_SCHEMA_VERSION)
        self.assertEqual(summary["api"], "Three")
        self.assertEqual(summary["operations"], 3)
        self.assertEqual(summary["total_requests"], 6)
        self.assertEqual(summary["coverage"]["covered"], 2)
        self.assertAlmostEqual(summary["coverage"]["fraction"], 2 / 3)
        self.assertEqual(summary["coverage"]["first_success"], {"opA": 2, "opB": 6, "opC": None})
        self.assertEqual(summary["faults"]["unique"], 1)
        self.assertEqual(summary["outcomes"], {"Success2xx": 2, "ClientError4xx": 1,
                                               "ServerError5xx": 2, "TransportError": 1})
        self.assertEqual(summary["origins"], {"error-mutant": 3, "explorer": 2, "nominal-mutant": 1})
        # covered ops: 0 until request 2, 1 until request 6
        self.assertEqual(summary["auc"]["coverage"], 4.0)
        self.assertEqual(summary["auc"]["faults"], 3.0)

    def test_replay_matches_recorder(self):
        """Test the replayed timeline equals the live one apart from time"""
        recorder = MetricsRecorder(API, clock=FakeClock())
        for interaction in self.log:
            recorder.observe(interaction)
        live = [(s.requests, s.ops_covered, s.unique_faults) for s in recorder.samples]
        replayed = [(s.requests, s.ops_covered, s.unique_faults) for s in replay_timeline(self.log, API)]
        self.assertEqual(live, replayed)

    def test_summary_is_json(self):
        """Test the summary serializes as JSON"""
        json.dumps(build_summary(self.log, API))

    def test_empty_log(self):
        """Test a session without requests"""
        summary = build_summary([], API)
        self.assertEqual(summary["coverage"]["fraction"], 0.0)
        self.assertEqual(summary["auc"], {"horizon": 0, "coverage": 0.0, "faults": 0.0})


if __name__ == '__main__':
    unittest.main()
