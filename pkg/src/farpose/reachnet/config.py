"""Network, loss and training configuration."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

from ..errors import ConfigError

ABLATIONS = ("no_multiview", "no_body", "no_autoregressive", "no_ray_embedding")


def _from_dict(cls, d, what):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"unknown {what} keys: {sorted(unknown)}")
    try:
        return cls(**d)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


@dataclass
class FeatureConfig:
    body_dim: int = 256
    hand_dim: int = 1024
    token_dim: int = 2304
    pose_layers: int = 6
    pose_heads: int = 8
    pose_hidden: int = 256
    main_layers: int = 6
    main_heads: int = 4
    main_hidden: int = 1024
    ffn_mult: int = 4
    ray_freqs: int = 4
    feature_seed: int = 1234

    def validate(self):
        if self.token_dim != self.body_dim + 2 * self.hand_dim:
            raise ConfigError("token_dim must equal body_dim + 2 * hand_dim")
        if self.pose_hidden != self.body_dim:
            raise ConfigError("pose encoder width must equal body_dim")
        if self.pose_hidden % self.pose_heads or self.main_hidden % self.main_heads:
            raise ConfigError("hidden sizes must be divisible by head counts")
        if min(self.body_dim, self.hand_dim, self.pose_layers, self.main_layers,
               self.ffn_mult, self.ray_freqs) < 1:
            raise ConfigError("dimensions and layer counts must be positive")
        return self

    @classmethod
    def full(cls):
        return cls().validate()

    @classmethod
    def desk(cls):
        """Every width divided by 8, two layers in each transformer."""
        return cls(body_dim=32, hand_dim=128, token_dim=288, pose_layers=2, pose_heads=8,
                   pose_hidden=32, main_layers=2, main_heads=4, main_hidden=128,
                   ffn_mult=2).validate()

    @classmethod
    def tiny(cls):
        """Reduced width for full-model gradient checks."""
        return cls(body_dim=8, hand_dim=6, token_dim=20, pose_layers=1, pose_heads=2,
                   pose_hidden=8, main_layers=1, main_heads=2, main_hidden=8, ffn_mult=1,
                   ray_freqs=2).validate()

    @classmethod
    def from_dict(cls, d):
        return _from_dict(cls, d, "feature config").validate()


@dataclass
class LossWeights:
    R: float = 1.0
    T: float = 1.0
    beta: float = 1.0
    theta: float = 1.0
    J: float = 1.0
    C: float = 0.1

    def validate(self):
        if min(dataclasses.astuple(self)) < 0:
            raise ConfigError("loss weights must be non-negative")
        return self


@dataclass
class TrainConfig:
    features: FeatureConfig = field(default_factory=FeatureConfig.desk)
    weights: LossWeights = field(default_factory=LossWeights)
    stage_views: tuple = (4, 2)
    stage_iters: tuple = (2000, 2000)
    temporal_batch: int = 4
    temporal_stride: int = 4
    batch_size: int = 8
    lr: float = 1e-3
    weight_decay: float = 1e-4
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    grad_clip: float = 5.0
    eval_views: tuple = (0, 1)
    val_every: int = 250
    seed: int = 0
    no_multiview: bool = False
    no_body: bool = False
    no_autoregressive: bool = False
    no_ray_embedding: bool = False

    def validate(self):
        self.features.validate()
        self.weights.validate()
        if len(self.stage_views) != len(self.stage_iters) or not self.stage_views:
            raise ConfigError("stage_views and stage_iters must be non-empty and equal length")
        if min(self.stage_views) < 1 or min(self.stage_iters) < 0:
            raise ConfigError("stage views must be >= 1 and iterations >= 0")
        if self.temporal_batch < 1 or self.temporal_stride < 1 or self.batch_size < 1:
            raise ConfigError("temporal batch, stride and batch size must be positive")
        if self.lr <= 0 or self.weight_decay < 0 or self.grad_clip < 0:
            raise ConfigError("invalid optimizer settings")
        if not self.eval_views:
            raise ConfigError("eval_views must list at least one camera")
        return self

    @property
    def ablations(self):
        return {k: getattr(self, k) for k in ABLATIONS}

    def views_for(self, n):
        """Views actually used when ``n`` are requested."""
        return 1 if self.no_multiview else n

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["stage_views"] = list(self.stage_views)
        d["stage_iters"] = list(self.stage_iters)
        d["betas"] = list(self.betas)
        d["eval_views"] = list(self.eval_views)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        feats = d.pop("features", None)
        weights = d.pop("weights", None)
        cfg = _from_dict(cls, d, "train config")
        if feats is not None:
            base = dataclasses.asdict(FeatureConfig.desk())
            base.update(feats)
            cfg.features = FeatureConfig.from_dict(base)
        if weights is not None:
            cfg.weights = _from_dict(LossWeights, weights, "loss weight")
        for name in ("stage_views", "stage_iters", "betas", "eval_views"):
            setattr(cfg, name, tuple(getattr(cfg, name)))
        return cfg.validate()

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]
