"""Stage timing counters"""

import time
from contextlib import contextmanager
from typing import Dict, Iterator, List

import structlog

logger = structlog.get_logger(__name__)

stage_counts: Dict[str, int] = {}
stage_latencies: Dict[str, List[float]] = {}


@contextmanager
def stage_timer(stage: str) -> Iterator[Dict[str, float]]:
    """Track call count and wall time of a pipeline stage.

    The yielded dict receives ``processing_time_ms`` when the block exits.
    """
    timing: Dict[str, float] = {}
    start_time = time.perf_counter()
    try:
        yield timing
    finally:
        duration = time.perf_counter() - start_time
        stage_counts[stage] = stage_counts.get(stage, 0) + 1
        stage_latencies.setdefault(stage, []).append(duration)
        timing["processing_time_ms"] = round(duration * 1000, 2)
        logger.debug("stage_finished", stage=stage, processing_time_ms=timing["processing_time_ms"])


def reset_metrics() -> None:
    stage_counts.clear()
    stage_latencies.clear()
