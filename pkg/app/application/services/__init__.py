"""Application services module.

Dataset generation, training, evaluation and planning on top of the
infrastructure building blocks.
"""
from app.application.services.dataset_service import DatasetGenerationService, DatasetSummary, generate_dataset
from app.application.services.training_service import LossComponents, TrainingResult, TrainingService, total_loss
from app.application.services.evaluation_service import (
    AblationReport,
    EvaluationReport,
    EvaluationService,
    correlation_analysis,
)
from app.application.services.planning_service import (
    CemResult,
    PlanningService,
    PlanningSummary,
    cem_optimize,
    cem_plan,
    goal_cost,
    mpc_episode,
)

__all__ = [
    "DatasetGenerationService",
    "DatasetSummary",
    "generate_dataset",
    "LossComponents",
    "TrainingResult",
    "TrainingService",
    "total_loss",
    "AblationReport",
    "EvaluationReport",
    "EvaluationService",
    "correlation_analysis",
    "CemResult",
    "PlanningService",
    "PlanningSummary",
    "cem_optimize",
    "cem_plan",
    "goal_cost",
    "mpc_episode",
]
