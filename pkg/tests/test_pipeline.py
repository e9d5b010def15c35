import pytest

from src.core.errors import ParameterError, PipelineStepError
from src.core.pipeline import ExpansionPipeline, PipelineStep, StepProgress, StepStatus


class TestExpansionPipeline:
    """Test cases for the sequential step pipeline."""

    def test_runs_steps_in_order(self):
        """Test that steps share state and run in declaration order."""
        # Arrange
        pipeline = ExpansionPipeline(
            steps=[
                PipelineStep("first", lambda s: s.setdefault("trace", []).append("first")),
                PipelineStep("second", lambda s: s["trace"].append("second")),
            ]
        )

        # Act
        state = pipeline.run({"seed": 1})

        # Assert
        assert state["trace"] == ["first", "second"]
        assert state["seed"] == 1

    def test_reports_progress(self, mocker):
        callback = mocker.Mock()
        pipeline = ExpansionPipeline(
            steps=[PipelineStep("only", lambda s: None)], progress_callback=callback
        )

        pipeline.run()

        statuses = [call.args[0].status for call in callback.call_args_list]
        assert statuses == [StepStatus.RUNNING, StepStatus.COMPLETED]
        progress: StepProgress = callback.call_args_list[-1].args[0]
        assert progress.step_number == progress.total_steps == 1
        assert progress.duration is not None and progress.duration >= 0.0

    def test_failure_names_the_step(self):
        """Test that the failing step is named and later steps do not run."""
        # Arrange
        ran = []

        def broken(state):
            raise ParameterError("c must be > 0")

        pipeline = ExpansionPipeline(
            steps=[PipelineStep("broken", broken), PipelineStep("after", lambda s: ran.append(1))]
        )

        # Act
        with pytest.raises(PipelineStepError) as excinfo:
            pipeline.run()

        # Assert
        error = excinfo.value
        assert error.step_name == "broken"
        assert error.is_contract_violation
        assert error.to_dict()["cause"]["error"] == "ParameterError"
        assert ran == []
        assert pipeline.history[-1].status is StepStatus.FAILED

    def test_wraps_foreign_errors(self):
        pipeline = ExpansionPipeline(steps=[PipelineStep("zero", lambda s: 1 / 0)])

        with pytest.raises(PipelineStepError) as excinfo:
            pipeline.run()

        assert not excinfo.value.is_contract_violation
        assert excinfo.value.to_dict()["cause"]["error"] == "ZeroDivisionError"

    def test_rejects_duplicate_names(self):
        with pytest.raises(ValueError, match="Duplicate"):
            ExpansionPipeline(steps=[PipelineStep("a", print), PipelineStep("a", print)])
