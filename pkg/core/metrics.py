"""
Metrics - Operation coverage, unique 5xx faults, trend timelines and AUC
Everything in the summary is recomputable from the interaction log alone
"""

import re
import csv
import json
import time
import logging
from dataclasses import dataclass
from datetime import datetime
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence

from .interaction import Interaction, OutcomeClass, flatten_leaves
from .oas_model import ApiModel

logger = logging.getLogger(__name__)

SUMMARY_SCHEMA_VERSION = 1
SIGNATURE_LIMIT = 512
EMPTY_SIGNATURE = "<empty-5xx>"
TIMELINE_COLUMNS = ("elapsed_s", "requests", "ops_covered", "unique_faults")

_UUID = re.compile(r"[0-9a-f]{8}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{12}")
_HEX = re.compile(r"[0-9a-f]{8,}")
_QUOTED = re.compile(r"\"[^\"]*\"|'[^']*'")
_DIGITS = re.compile(r"\d+")
_SPACE = re.compile(r"\s+")


# ---------------------------------------------------------------------------
# Coverage and faults
# ---------------------------------------------------------------------------

@dataclass
class CoverageReport:
    fraction: float
    flags: Dict[str, bool]

    @property
    def covered(self) -> int:
        return sum(self.flags.values())


def operation_coverage(log: Iterable[Interaction], api: ApiModel) -> CoverageReport:
    """An operation is covered once any interaction attributed to it returned 2xx"""
    flags = {op.operation_id: False for op in api.operations}
    for interaction in log:
        op_id = interaction.operation_id
        if interaction.outcome is OutcomeClass.SUCCESS and op_id in flags:
            flags[op_id] = True
    fraction = sum(flags.values()) / len(flags) if flags else 0.0
    return CoverageReport(fraction=fraction, flags=flags)


def _flatten_body(body: str) -> str:
    try:
        payload = json.loads(body)
    except ValueError:
        return body
    if isinstance(payload, (dict, list)):
        return "\n".join(f"{key}={value}" for key, value in flatten_leaves(payload))
    return str(payload)


def fault_signature(status: int, body: str) -> str:
    """Normalized error text: volatile ids, numbers and quoted literals are masked"""
    text = _flatten_body(body or "").lower()
    text = _UUID.sub("#", text)
    text = _HEX.sub("#", text)
    text = _QUOTED.sub("$", text)
    text = _DIGITS.sub("#", text)
    text = _SPACE.sub(" ", text).strip()[:SIGNATURE_LIMIT]
    return text or EMPTY_SIGNATURE


@dataclass
class FaultRecord:
    signature: str
    first_request: int
    operation_id: Optional[str]
    status: int
    occurrences: int = 1

    def to_dict(self) -> Dict[str, Any]:
        return {
            "signature": self.signature,
            "first_request": self.first_request,
            "operation_id": self.operation_id,
            "status": self.status,
            "occurrences": self.occurrences,
        }


class FaultRegistry:
    """Unique 5xx signatures with the request that first triggered each"""

    def __init__(self):
        self.faults: Dict[str, FaultRecord] = {}

    def record(self, interaction: Interaction) -> bool:
        """Register a 5xx interaction; True when its signature is new"""
        if interaction.outcome is not OutcomeClass.SERVER_ERROR:
            return False
        signature = fault_signature(interaction.status, interaction.response_body)
        existing = self.faults.get(signature)
        if existing is not None:
            existing.occurrences += 1
            return False
        self.faults[signature] = FaultRecord(signature, interaction.sequence,
                                             interaction.operation_id, interaction.status)
        logger.info(f"New unique fault #{len(self.faults)} from request {interaction.sequence}: {signature[:80]}")
        return True

    def __len__(self) -> int:
        return len(self.faults)

    def __contains__(self, signature: str) -> bool:
        return signature in self.faults

    def to_list(self) -> List[Dict[str, Any]]:
        return [record.to_dict() for record in self.faults.values()]


# ---------------------------------------------------------------------------
# Timeline and AUC
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TimelineSample:
    elapsed_s: float
    requests: int
    ops_covered: int
    unique_faults: int


class MetricsRecorder:
    """Live metrics: one sample per request plus a wall-clock series every wall_interval seconds"""

    def __init__(self, api: ApiModel, wall_interval: float = 5.0,
                 clock: Callable[[], float] = time.monotonic):
        self.api = api
        self.wall_interval = wall_interval
        self.clock = clock
        self.start = clock()
        self.requests = 0
        self.covered: Dict[str, int] = {}       # operation id -> first success sequence
        self.faults = FaultRegistry()
        self.samples: List[TimelineSample] = [TimelineSample(0.0, 0, 0, 0)]
        self.wall_samples: List[TimelineSample] = [TimelineSample(0.0, 0, 0, 0)]
        self._next_wall = wall_interval
        self._known = {op.operation_id for op in api.operations}

    @property
    def elapsed(self) -> float:
        return self.clock() - self.start

    def _current(self, elapsed: float) -> TimelineSample:
        return TimelineSample(elapsed, self.requests, len(self.covered), len(self.faults))

    def observe(self, interaction: Interaction) -> bool:
        """Account for one interaction; True when it is its operation's first success"""
        self.requests += 1
        first_success = False
        op_id = interaction.operation_id
        if interaction.outcome is OutcomeClass.SUCCESS and op_id in self._known and op_id not in self.covered:
            self.covered[op_id] = interaction.sequence
            first_success = True
        self.faults.record(interaction)

        elapsed = self.elapsed
        self.samples.append(self._current(elapsed))
        self.tick(elapsed)
        return first_success

    def tick(self, elapsed: Optional[float] = None):
        """Emit wall-clock samples for every interval boundary already passed"""
        elapsed = self.elapsed if elapsed is None else elapsed
        while elapsed >= self._next_wall:
            self.wall_samples.append(self._current(self._next_wall))
            self._next_wall += self.wall_interval

    @property
    def fully_covered(self) -> bool:
        return len(self.covered) == len(self._known)


def auc(samples: Sequence[TimelineSample], metric: str, horizon: float, abscissa: str = "requests") -> float:
    """
    Area under the step-interpolated metric over [0, horizon]

    Args:
        samples: Timeline, abscissa increasing
        metric: "ops_covered" or "unique_faults"
        horizon: Upper integration bound
        abscissa: "requests" or "seconds"

    Returns:
        float: Integral; the metric is 0 before the first sample
    """
    if not samples:
        raise ValueError("auc needs at least one sample")
    x_field = {"requests": "requests", "seconds": "elapsed_s"}.get(abscissa)
    if x_field is None:
        raise ValueError(f"Unknown abscissa: {abscissa}")
    xs = [float(getattr(s, x_field)) for s in samples]
    ys = [float(getattr(s, metric)) for s in samples]

    total = 0.0
    for i, (x, y) in enumerate(zip(xs, ys)):
        start = max(x, 0.0)
        end = min(xs[i + 1] if i + 1 < len(xs) else horizon, horizon)
        if end > start:
            total += y * (end - start)
    return total


def write_timeline_csv(path: str, samples: Iterable[TimelineSample]):
    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(TIMELINE_COLUMNS)
        for s in samples:
            writer.writerow([f"{s.elapsed_s:.3f}", s.requests, s.ops_covered, s.unique_faults])


def read_timeline_csv(path: str) -> List[TimelineSample]:
    with open(path, 'r', encoding='utf-8', newline='') as f:
        return [
            TimelineSample(float(row["elapsed_s"]), int(row["requests"]),
                           int(row["ops_covered"]), int(row["unique_faults"]))
            for row in csv.DictReader(f)
        ]


# ---------------------------------------------------------------------------
# Replay and summary
# ---------------------------------------------------------------------------

def _seconds_since(start: Optional[datetime], timestamp: str) -> float:
    if start is None or not timestamp:
        return 0.0
    try:
        return max(0.0, (datetime.fromisoformat(timestamp) - start).total_seconds())
    except ValueError:
        return 0.0


def replay_timeline(interactions: Sequence[Interaction], api: ApiModel) -> List[TimelineSample]:
    """Requests-indexed timeline recomputed from a log"""
    known = {op.operation_id for op in api.operations}
    covered = set()
    faults = FaultRegistry()
    start = None
    if interactions and interactions[0].timestamp:
        try:
            start = datetime.fromisoformat(interactions[0].timestamp)
        except ValueError:
            start = None

    samples = [TimelineSample(0.0, 0, 0, 0)]
    for count, interaction in enumerate(interactions, start=1):
        if interaction.outcome is OutcomeClass.SUCCESS and interaction.operation_id in known:
            covered.add(interaction.operation_id)
        faults.record(interaction)
        samples.append(TimelineSample(_seconds_since(start, interaction.timestamp), count, len(covered), len(faults)))
    return samples


def build_summary(interactions: Sequence[Interaction], api: ApiModel) -> Dict[str, Any]:
    """Session summary as a pure function of the log and the API model"""
    coverage = operation_coverage(interactions, api)
    faults = FaultRegistry()
    outcomes = {cls.value: 0 for cls in OutcomeClass}
    origins: Dict[str, int] = {}
    first_success: Dict[str, Optional[int]] = {op.operation_id: None for op in api.operations}

    for interaction in interactions:
        faults.record(interaction)
        outcomes[interaction.outcome.value] += 1
        origins[interaction.origin] = origins.get(interaction.origin, 0) + 1
        op_id = interaction.operation_id
        if (interaction.outcome is OutcomeClass.SUCCESS and op_id in first_success
                and first_success[op_id] is None):
            first_success[op_id] = interaction.sequence

    samples = replay_timeline(interactions, api)
    horizon = len(interactions)
    return {
        "schema_version": SUMMARY_SCHEMA_VERSION,
        "api": api.title,
        "operations": api.size,
        "total_requests": horizon,
        "coverage": {
            "fraction": coverage.fraction,
            "covered": coverage.covered,
            "operations": coverage.flags,
            "first_success": first_success,
        },
        "faults": {
            "unique": len(faults),
            "list": faults.to_list(),
        },
        "outcomes": outcomes,
        "origins": dict(sorted(origins.items())),
        "auc": {
            "horizon": horizon,
            "coverage": auc(samples, "ops_covered", horizon),
            "faults": auc(samples, "unique_faults", horizon),
        },
    }
