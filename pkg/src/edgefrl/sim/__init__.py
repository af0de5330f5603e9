from .devices import DeviceProfile, contention
from .pipeline import DEFAULT_SLO, Pipeline, PipelineSpec, StageDescriptor, pipeline_step, source_frames
from .stage import StageState, StepMetrics, apply_action, observe, stage_step
from .workload import Segment, WorkloadTrace, generate_arrivals

__all__ = [
    "DEFAULT_SLO", "DeviceProfile", "Pipeline", "PipelineSpec", "Segment", "StageDescriptor", "StageState",
    "StepMetrics", "WorkloadTrace", "apply_action", "contention", "generate_arrivals", "observe",
    "pipeline_step", "source_frames", "stage_step",
]
