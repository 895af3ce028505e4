"""
Utility Functions - Common helpers for testing sessions
"""

import os
import json
import time
import logging
from typing import Any, Iterable, Iterator, List

import numpy as np

logger = logging.getLogger(__name__)


def format_duration(seconds: float) -> str:
    """
    Format duration in seconds to readable time string

    Args:
        seconds: Number of seconds

    Returns:
        str: Formatted time string
    """
    hours = int(seconds // 3600)
    minutes = int((seconds % 3600) // 60)
    secs = int(seconds % 60)

    if hours > 0:
        return f"{hours:02d}:{minutes:02d}:{secs:02d}"
    else:
        return f"{minutes:02d}:{secs:02d}"


def spawn_rngs(seed: int, count: int) -> List[np.random.Generator]:
    """Derive independent, reproducible generators from one session seed"""
    children = np.random.SeedSequence(seed).spawn(count)
    return [np.random.default_rng(child) for child in children]


def write_json(path: str, data: Any):
    """Write indented JSON, keeping insertion order"""
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(data, f, indent=2, ensure_ascii=False)
        f.write("\n")


def read_json(path: str) -> Any:
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)


def iter_jsonl(path: str) -> Iterator[dict]:
    """Yield one object per non-empty line"""
    with open(path, 'r', encoding='utf-8') as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except ValueError as e:
                raise ValueError(f"{path}:{line_no}: invalid JSON line: {e}") from e


def ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def to_jsonable(value: Any) -> Any:
    """Convert numpy scalars/arrays found in generated data to plain Python"""
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, dict):
        return {k: to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    return value


def chunked(items: Iterable[Any], size: int) -> Iterator[List[Any]]:
    batch: List[Any] = []
    for item in items:
        batch.append(item)
        if len(batch) == size:
            yield batch
            batch = []
    if batch:
        yield batch


class ProgressTracker:
    """Budget progress logging, one line per 10% step"""

    def __init__(self, total_steps: int):
        self.total_steps = max(1, total_steps)
        self.current_step = 0
        self.start_time = time.time()
        self._last_decile = 0

    def update(self, steps: int = 1):
        """Advance progress by the given number of steps"""
        self.current_step += steps
        decile = min(10, (self.current_step * 10) // self.total_steps)
        if decile > self._last_decile:
            self._last_decile = decile
            elapsed = time.time() - self.start_time
            progress = (self.current_step / self.total_steps) * 100
            logger.info(
                f"Progress: {progress:.0f}% ({self.current_step}/{self.total_steps} requests) "
                f"after {format_duration(elapsed)}"
            )

    @property
    def elapsed(self) -> float:
        return time.time() - self.start_time
