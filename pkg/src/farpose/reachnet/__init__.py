"""Toy-scale multiview hand-pose network: features, model, fusion, loss, training."""

from .config import ABLATIONS, FeatureConfig, LossWeights, TrainConfig
from .features import (
    Batch, SceneArrays, body_inputs, hand_crop, hand_feature_stub, make_batch,
    person_height_px, prepare_scene, ray_sinusoids,
)
from .fusion import HandPrediction, mvu_fuse, step_predictions, world_joints, world_wrist
from .loss import COMPONENTS, frame_loss, rollout_loss
from .model import ReachNet, StepOutput, TokenState, autoregressive_rollout, forward_step
from .train import (
    TrainResult, build_model, evaluate, load_model, predict_scene, save_model, train_two_stage,
)

__all__ = [
    "ABLATIONS", "Batch", "COMPONENTS", "FeatureConfig", "HandPrediction", "LossWeights",
    "ReachNet", "SceneArrays", "StepOutput", "TokenState", "TrainConfig", "TrainResult",
    "autoregressive_rollout", "body_inputs", "build_model", "evaluate", "forward_step",
    "frame_loss", "hand_crop", "hand_feature_stub", "load_model", "make_batch", "mvu_fuse",
    "person_height_px", "predict_scene", "prepare_scene", "ray_sinusoids", "rollout_loss",
    "save_model", "step_predictions", "train_two_stage", "world_joints", "world_wrist",
]
