"""Sequential named-step pipeline for expansion runs.

Each step reads from and writes into a shared state dictionary. Steps run in
declaration order; progress is reported through an optional callback and a
failure stops the run with a :class:`PipelineStepError` naming the step.
"""

import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional

from src.core.errors import PipelineStepError

logger = logging.getLogger(__name__)

State = Dict[str, Any]
StepFunction = Callable[[State], None]


class StepStatus(str, Enum):
    """Status of a pipeline step."""

    PENDING = "pending"
    RUNNING = "running"
    COMPLETED = "completed"
    FAILED = "failed"


@dataclass
class StepProgress:
    """Progress information for a step."""

    step_name: str
    status: StepStatus
    error: Optional[Exception] = None
    start_time: Optional[float] = None
    end_time: Optional[float] = None
    step_number: Optional[int] = None
    total_steps: Optional[int] = None

    @property
    def duration(self) -> Optional[float]:
        if self.start_time is None or self.end_time is None:
            return None
        return self.end_time - self.start_time


@dataclass(frozen=True)
class PipelineStep:
    """A named unit of work operating on the shared state."""

    name: str
    func: StepFunction


@dataclass
class ExpansionPipeline:
    """Runs steps in order with status bookkeeping."""

    steps: List[PipelineStep]
    progress_callback: Optional[Callable[[StepProgress], None]] = None
    history: List[StepProgress] = field(default_factory=list)

    def __post_init__(self) -> None:
        names = [s.name for s in self.steps]
        if len(set(names)) != len(names):
            raise ValueError(f"Duplicate step names in pipeline: {names}")

    def _report(self, progress: StepProgress) -> None:
        logger.debug(f"Step '{progress.step_name}': {progress.status.value}")
        self.history.append(progress)
        if self.progress_callback:
            self.progress_callback(progress)

    def run(self, state: Optional[State] = None) -> State:
        """Execute every step and return the final state.

        Raises:
            PipelineStepError: If a step raises; the original error is kept
                as ``error`` and chained as the cause
        """
        state = {} if state is None else state
        total = len(self.steps)
        for number, step in enumerate(self.steps, start=1):
            start = time.time()
            self._report(
                StepProgress(
                    step_name=step.name,
                    status=StepStatus.RUNNING,
                    start_time=start,
                    step_number=number,
                    total_steps=total,
                )
            )
            try:
                step.func(state)
            except Exception as e:
                self._report(
                    StepProgress(
                        step_name=step.name,
                        status=StepStatus.FAILED,
                        error=e,
                        start_time=start,
                        end_time=time.time(),
                        step_number=number,
                        total_steps=total,
                    )
                )
                raise PipelineStepError(step.name, e) from e
            self._report(
                StepProgress(
                    step_name=step.name,
                    status=StepStatus.COMPLETED,
                    start_time=start,
                    end_time=time.time(),
                    step_number=number,
                    total_steps=total,
                )
            )
        self._log_summary()
        return state

    def _log_summary(self) -> None:
        finished = [p for p in self.history if p.status is StepStatus.COMPLETED]
        if not finished:
            return
        lines = [f"{'Step':<24} {'Duration'}"]
        for p in finished:
            lines.append(f"{p.step_name:<24} {p.duration or 0.0:.3f}s")
        logger.debug("Pipeline summary:\n" + "\n".join(lines))
