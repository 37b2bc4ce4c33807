"""Neural networks of the two-stage world model."""
from app.infrastructure.models.layers import (
    ActionEmbedding,
    ActionEncoder,
    ConditionEncoder,
    CrossAttentionBlock,
    ResBlock,
    sinusoidal_embedding,
)
from app.infrastructure.models.normalization import FrameNormalizer
from app.infrastructure.models.unet import ConditionalUNet
from app.infrastructure.models.world_model import (
    ConditionPack,
    StepPrediction,
    WorldModel,
    reverse_flow,
    step_seed,
)
from app.infrastructure.models.rollout import WorldModelRollout

__all__ = [
    "ActionEmbedding",
    "ActionEncoder",
    "ConditionEncoder",
    "CrossAttentionBlock",
    "ResBlock",
    "sinusoidal_embedding",
    "FrameNormalizer",
    "ConditionalUNet",
    "ConditionPack",
    "StepPrediction",
    "WorldModel",
    "reverse_flow",
    "step_seed",
    "WorldModelRollout",
]
