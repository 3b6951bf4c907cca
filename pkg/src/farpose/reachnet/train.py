"""Two-stage training, held-out evaluation and checkpoint I/O."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .. import evaluation, hand
from .. import tensornet as tn
from ..errors import ConfigError
from ..tensornet import checkpoint
from ..tensornet.optim import AdamW, clip_grad_norm
from .config import TrainConfig
from .features import make_batch, prepare_scene
from .fusion import step_predictions, world_joints, world_wrist
from .loss import COMPONENTS, rollout_loss
from .model import ReachNet, autoregressive_rollout

log = logging.getLogger(__name__)

LOG_COLUMNS = ("iter", "stage", "views", "total") + COMPONENTS + ("grad_norm", "val_pa_mpjpe_mm")


def build_model(cfg, seed=None):
    return ReachNet(cfg.features, seed=cfg.seed if seed is None else seed,
                    use_body=not cfg.no_body, use_rays=not cfg.no_ray_embedding)


def sample_items(rng, scenes, n_views, cfg):
    """Random (scene, frames, views) triples for one training batch."""
    span = (cfg.temporal_batch - 1) * cfg.temporal_stride
    items = []
    for _ in range(cfg.batch_size):
        s = int(rng.integers(len(scenes)))
        T, N = scenes[s].n_frames, scenes[s].n_cameras
        if T <= span:
            raise ConfigError(f"scene {s} has {T} frames, need more than {span}")
        if n_views > N:
            raise ConfigError(f"requested {n_views} views but scene {s} has {N} cameras")
        start = int(rng.integers(T - span))
        frames = start + cfg.temporal_stride * np.arange(cfg.temporal_batch)
        views = rng.permutation(N)[:n_views]
        items.append((s, frames, views))
    return items


def batch_loss(model, batch, cfg):
    outs = autoregressive_rollout(model, batch, autoregressive=not cfg.no_autoregressive)
    return rollout_loss(outs, batch, cfg.weights)


@dataclass
class TrainResult:
    model: ReachNet
    log: list = field(default_factory=list)
    initial_state: dict = field(default_factory=dict)

    def log_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        for row in self.log:
            w.writerow(["" if row.get(k) is None else _fmt(row[k]) for k in LOG_COLUMNS])
        return buf.getvalue()

    @property
    def initial_loss(self):
        return self.log[0]["total"]

    @property
    def final_loss(self):
        return self.log[-1]["total"]


def _fmt(x):
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def train_two_stage(scenes, cfg=None, val_scenes=None, callback=None):
    """Train on ``scenes`` with the staged view schedule of ``cfg``.

    ``scenes`` may be SceneRecordings or prepared SceneArrays. The optimizer
    state carries over between stages. Returns a TrainResult whose log holds
    one row per iteration.
    """
    cfg = (cfg or TrainConfig()).validate()
    if not scenes:
        raise ConfigError("need at least one training scene")
    arrays = [_prepared(s, cfg) for s in scenes]
    val = [_prepared(s, cfg) for s in (val_scenes or [])]
    model = build_model(cfg)
    params = model.parameters()
    opt = AdamW(params, lr=cfg.lr, weight_decay=cfg.weight_decay, betas=cfg.betas, eps=cfg.eps)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 11]))
    result = TrainResult(model, initial_state=model.state_dict())
    it = 0
    for stage, (views, iters) in enumerate(zip(cfg.stage_views, cfg.stage_iters)):
        n = cfg.views_for(views)
        for _ in range(iters):
            batch = make_batch(arrays, sample_items(rng, arrays, n, cfg))
            opt.zero_grad()
            total, comps = batch_loss(model, batch, cfg)
            total.backward()
            gnorm = clip_grad_norm(params, cfg.grad_clip)
            row = {"iter": it, "stage": stage + 1, "views": n, "total": float(total.data),
                   "grad_norm": gnorm, **comps}
            if not math.isfinite(row["total"]):
                raise FloatingPointError(f"non-finite loss at iteration {it}")
            if val and cfg.val_every and it % cfg.val_every == 0:
                row["val_pa_mpjpe_mm"] = evaluate(model, val, cfg)["pa_mpjpe_mm"]["mean"]
            opt.step()
            result.log.append(row)
            if callback is not None:
                callback(row)
            it += 1
    return result


def _prepared(s, cfg):
    return s if hasattr(s, "hand_feat") else prepare_scene(s, cfg.features)


def rollout_scene(model, arrays, cfg, views=None, stride=None):
    """Autoregressive pass over a whole scene (frames 0, stride, 2*stride, ...).

    Returns (frame indices, list of [left, right] HandPrediction per frame).
    """
    stride = cfg.temporal_stride if stride is None else stride
    if views is None:
        views = cfg.eval_views[:cfg.views_for(len(cfg.eval_views))]
    frames = np.arange(0, arrays.n_frames, stride)
    batch = make_batch([arrays], [(0, frames, np.asarray(views))])
    with tn.no_grad():
        outs = autoregressive_rollout(model, batch, autoregressive=not cfg.no_autoregressive)
    preds = [step_predictions(o, batch.cam_R)[0] for o in outs]
    return frames, preds, batch


def predict_scene(model, arrays, cfg, views=None):
    """World-frame joints per evaluated frame and hand, plus bookkeeping."""
    frames, preds, batch = rollout_scene(model, arrays, cfg, views)
    cam_R, cam_t = batch.cam_R[0], batch.cam_t[0]
    rows = []
    for f, pair in zip(frames, preds):
        for c, side in enumerate(hand.HANDEDNESS):
            p = pair[c]
            w = world_wrist(p.T, p.c, cam_R, cam_t)
            rows.append({"frame": int(f), "hand": side, "pred": p, "wrist": w,
                         "joints": world_joints(p, w, side)})
    return rows, batch


def evaluate(model, scenes, cfg, views=None):
    """PA-MPJPE, MPJPE and joint-angle summaries over held-out scenes."""
    pa, mp, ang = [], [], []
    for arrays in scenes:
        arrays = _prepared(arrays, cfg)
        rows, _ = predict_scene(model, arrays, cfg, views)
        for r in rows:
            c = hand.HANDEDNESS.index(r["hand"])
            gt = arrays.joints[r["frame"], c]
            pa.append(evaluation.pa_mpjpe(r["joints"], gt))
            mp.append(evaluation.mpjpe(r["joints"], gt))
            ang.append(evaluation.joint_angle_error(r["pred"].theta, arrays.theta[r["frame"], c]))
    return {"pa_mpjpe_mm": evaluation._summary(pa), "mpjpe_mm": evaluation._summary(mp),
            "joint_angle_deg": evaluation._summary(ang)}


def save_model(path, model, cfg, extra=None):
    meta = {"config": cfg.to_dict(), "config_digest": cfg.digest(), **(extra or {})}
    checkpoint.save(path, model.state_dict(), meta)


def load_model(path):
    """Rebuild the model and its TrainConfig from a checkpoint file."""
    state, meta = checkpoint.load(path)
    if "config" not in meta:
        raise ConfigError("checkpoint has no embedded training config")
    cfg = TrainConfig.from_dict(meta["config"])
    model = build_model(cfg)
    model.load_state_dict(state)
    return model, cfg
