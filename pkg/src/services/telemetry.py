"""Run telemetry: timings, counters and loss summaries for pipeline runs."""
import time
from typing import Dict, Any, Optional, List
from datetime import datetime
import logging
from dataclasses import dataclass, field


@dataclass
class Sample:
    """A single recorded value."""
    name: str
    value: float
    unit: str
    step: Optional[int] = None
    timestamp: datetime = field(default_factory=datetime.now)


class RunTelemetry:
    """Collect values recorded during training, inference and evaluation."""

    def __init__(self, logger: logging.Logger):
        """
        Initialize telemetry.

        Args:
            logger: Logger instance
        """
        self.logger = logger
        self.samples: Dict[str, List[Sample]] = {}
        self.timers: Dict[str, float] = {}

    def record(self, name: str, value: float, unit: str = "", step: Optional[int] = None) -> None:
        """
        Record a value.

        Args:
            name: Series name (e.g. "total", "step")
            value: Value
            unit: Unit of measurement (e.g. "ms", "count", "bits")
            step: Optional optimisation step the value belongs to
        """
        self.samples.setdefault(name, []).append(Sample(name, float(value), unit, step))
        self.logger.debug(
            f"Recorded {name}={value}{unit}",
            extra={"metric": name, "value": value, "unit": unit, "step": step}
        )

    def start_timer(self, name: str) -> None:
        """Start a wall-clock timer."""
        self.timers[name] = time.perf_counter()

    def stop_timer(self, name: str, step: Optional[int] = None) -> float:
        """
        Stop a timer and record the duration in milliseconds.

        Returns:
            Duration in seconds
        """
        if name not in self.timers:
            self.logger.warning(f"Timer {name} was not started")
            return 0.0

        duration = time.perf_counter() - self.timers.pop(name)
        self.record(f"{name}_duration", duration * 1000, "ms", step)
        return duration

    def increment(self, name: str, value: int = 1) -> None:
        """Increment a counter."""
        self.record(name, value, "count")

    def values(self, name: str) -> List[float]:
        return [s.value for s in self.samples.get(name, [])]

    def get_metric_summary(self, name: str) -> Dict[str, Any]:
        """
        Summary statistics for a series.

        Returns:
            Dictionary with count, min, max, avg, total, first and last
        """
        values = self.values(name)
        if not values:
            return {"count": 0}
        return {
            "count": len(values),
            "min": min(values),
            "max": max(values),
            "avg": sum(values) / len(values),
            "total": sum(values),
            "first": values[0],
            "last": values[-1],
        }

    def get_all_summaries(self) -> Dict[str, Dict[str, Any]]:
        return {name: self.get_metric_summary(name) for name in self.samples}

    def log_summary(self) -> None:
        """Log a summary of every series."""
        self.logger.info("=== Run Summary ===")
        for name, summary in self.get_all_summaries().items():
            if summary["count"] == 0:
                continue
            unit = self.samples[name][0].unit
            if unit == "count":
                self.logger.info(f"{name}: total={summary['total']:.0f}")
            else:
                self.logger.info(
                    f"{name}: avg={summary['avg']:.4g}{unit}, "
                    f"min={summary['min']:.4g}{unit}, "
                    f"max={summary['max']:.4g}{unit}, "
                    f"count={summary['count']}"
                )

    def reset(self) -> None:
        """Clear everything recorded."""
        self.samples.clear()
        self.timers.clear()
