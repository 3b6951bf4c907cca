"""Multiview encoder-decoder with per-hand camera and CLS queries.

Layout of the decoder queries for one sample: 2 * N camera queries (hand-major:
left hand views 0..N-1, then right hand) followed by the two CLS queries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import tensornet as tn
from ..errors import ShapeMismatch
from ..synth import N_BODY
from ..tensornet import nn
from .features import gauge_cancel, ray_sinusoids, visual_stub

CAM_OUT = 10  # 6D rotation, 2 image-plane offsets, log depth, confidence logit
CLS_OUT = 55  # beta (10) + theta (45)
DEPTH_PRIOR = np.log(5.0)
IDENTITY_6D = np.array([1.0, 0.0, 0.0, 0.0, 1.0, 0.0])


@dataclass
class TokenState:
    """Per-timestep network inputs for B samples with N views each.

    ``tokens`` are the e_n^t encoder inputs; ``rays`` are unit wrist rays in
    each view's camera frame; ``cam_R`` holds world-to-camera rotations, whose
    first entry is the gauge reference.
    """

    tokens: object  # Tensor (B, N, token_dim)
    rays: np.ndarray  # (B, N, 2, 3)
    xn: np.ndarray  # (B, N, 2, 2)
    cam_R: np.ndarray  # (B, N, 3, 3)
    queries: object = None  # Tensor (B, 2N + 2, hidden) or None for initial queries

    @property
    def n_views(self):
        return self.rays.shape[1]

    def canceled_rays(self):
        """Rays in the first camera's frame, (B, N, 2, 3)."""
        first = self.cam_R[:, :1, None]
        return gauge_cancel(self.rays, self.cam_R[:, :, None], first)


@dataclass
class StepOutput:
    rot6d: object  # Tensor (B, 2, N, 6)
    trans: object  # Tensor (B, 2, N, 3), camera frame, meters
    logit: object  # Tensor (B, 2, N)
    beta: object  # Tensor (B, 2, 10)
    theta: object  # Tensor (B, 2, 45)
    queries: object  # Tensor (B, 2N + 2, hidden), decoder outputs before the heads

    def confidence(self):
        return tn.tensor(1.0 / (1.0 + np.exp(-self.logit.data)))


class ReachNet(nn.Module):
    def __init__(self, cfg, seed=0, use_body=True, use_rays=True, max_views=8):
        cfg.validate()
        rng = np.random.default_rng(np.random.SeedSequence([seed, 7]))
        self.cfg = cfg
        self.use_body = use_body
        self.use_rays = use_rays
        h = cfg.main_hidden
        ray_dim = 6 * cfg.ray_freqs
        if use_body:
            self.pose_pos = nn.Linear(2, cfg.body_dim, rng)
            self.pose_index = nn.parameter(nn.uniform_init(rng, N_BODY, (N_BODY, cfg.body_dim)))
            self.pose_cls = nn.parameter(nn.uniform_init(rng, cfg.body_dim, (1, 1, cfg.body_dim)))
            self.pose_encoder = nn.Encoder(cfg.body_dim, cfg.pose_heads,
                                           cfg.ffn_mult * cfg.body_dim, cfg.pose_layers, rng)
        self.token_proj = nn.Linear(cfg.token_dim, h, rng)
        if use_rays:
            self.ray_enc = nn.Linear(2 * ray_dim, h, rng)
            self.ray_query = nn.Linear(ray_dim, h, rng)
        else:
            self.view_query = nn.parameter(nn.uniform_init(rng, h, (max_views, h)))
        self.hand_query = nn.parameter(nn.uniform_init(rng, h, (2, h)))
        self.cls_query = nn.parameter(nn.uniform_init(rng, h, (2, h)))
        self.encoder = nn.Encoder(h, cfg.main_heads, cfg.ffn_mult * h, cfg.main_layers, rng)
        self.decoder = nn.Decoder(h, cfg.main_heads, cfg.ffn_mult * h, cfg.main_layers, rng)
        self.cam_head = nn.MLP(h, h, CAM_OUT, rng)
        self.cls_head = nn.MLP(h, h, CLS_OUT, rng)
        self._stub = visual_stub(cfg)

    # -- features --------------------------------------------------------

    def body_features(self, body_rel, body_conf):
        """Pose-encoder CLS output for (M, 17, 2) positions and (M, 17) confidences."""
        M = body_rel.shape[0]
        if not self.use_body:
            return tn.tensor(np.zeros((M, self.cfg.body_dim)))
        conf = np.stack([body_conf, np.ones_like(body_conf)], -1)  # (M, 17, 2)
        visual = np.einsum("mjk,jkd->mjd", conf, self._stub)
        tok = self.pose_pos(tn.tensor(body_rel)) + visual + self.pose_index
        cls = self.pose_cls + np.zeros((M, 1, 1))
        out = self.pose_encoder(tn.concat([cls, tok], axis=1))
        return tn.reshape(out[:, 0:1], (M, self.cfg.body_dim))

    def tokens(self, hand_feat, body_rel, body_conf):
        """Encoder inputs e_n^t: (M, token_dim) from M view observations."""
        M = hand_feat.shape[0]
        body = self.body_features(body_rel, body_conf)
        return tn.concat([body, tn.tensor(hand_feat.reshape(M, -1))], axis=-1)

    # -- transformer -------------------------------------------------------

    def memory(self, state):
        """Encoder output (B, N, hidden) for a TokenState."""
        B, N = state.rays.shape[:2]
        x = self.token_proj(state.tokens)
        if self.use_rays:
            feats = ray_sinusoids(state.canceled_rays(), self.cfg.ray_freqs).reshape(B, N, -1)
            x = x + self.ray_enc(tn.tensor(feats))
        return self.encoder(x)

    def initial_queries(self, state):
        B, N = state.rays.shape[:2]
        h = self.cfg.main_hidden
        if self.use_rays:
            nu = np.swapaxes(state.canceled_rays(), 1, 2)  # (B, 2, N, 3)
            cam = self.ray_query(tn.tensor(ray_sinusoids(nu, self.cfg.ray_freqs)))
        else:
            if N > self.view_query.shape[0]:
                raise ShapeMismatch(f"at most {self.view_query.shape[0]} views without rays")
            cam = tn.reshape(self.view_query[0:N], (1, 1, N, h)) + np.zeros((B, 2, 1, 1))
        cam = cam + tn.reshape(self.hand_query, (1, 2, 1, h))
        cls = tn.reshape(self.cls_query, (1, 2, h)) + np.zeros((B, 1, 1))
        return tn.concat([tn.reshape(cam, (B, 2 * N, h)), cls], axis=1)

    def decode(self, state, memory):
        B, N = state.rays.shape[:2]
        if state.queries is None:
            q = self.initial_queries(state)
        else:
            q = state.queries
            if q.shape != (B, 2 * N + 2, self.cfg.main_hidden):
                raise ShapeMismatch(f"queries {q.shape} do not match {N} views")
        out = self.decoder(q, memory)
        cam = tn.reshape(self.cam_head(out[:, :2 * N]), (B, 2, N, CAM_OUT))
        cls = self.cls_head(out[:, 2 * N:])
        xn = np.swapaxes(state.xn, 1, 2)  # (B, 2, N, 2)
        z = tn.exp(cam[..., 8:9] + DEPTH_PRIOR)
        trans = tn.concat([z * (cam[..., 6:8] + xn), z], axis=-1)
        return StepOutput(rot6d=cam[..., 0:6] + IDENTITY_6D, trans=trans,
                          logit=tn.reshape(cam[..., 9:10], (B, 2, N)),
                          beta=cls[..., 0:10], theta=cls[..., 10:55], queries=out)


def forward_step(model, state):
    """One timestep: encoder over the view tokens, decoder, output heads."""
    return model.decode(state, model.memory(state))


def batch_tokens(model, batch):
    """Encoder inputs for every (sample, frame, view) in a Batch: (B, Tb, N, token)."""
    B, Tb, N = batch.shape
    tok = model.tokens(batch.hand_feat.reshape(B * Tb * N, -1),
                       batch.body_rel.reshape(B * Tb * N, N_BODY, 2),
                       batch.body_conf.reshape(B * Tb * N, N_BODY))
    return tn.reshape(tok, (B, Tb, N, model.cfg.token_dim))


def autoregressive_rollout(model, batch, autoregressive=True, queries=None):
    """Run the decoder frame by frame; later frames start from earlier outputs.

    With ``autoregressive`` off every frame uses the initial queries.
    Returns a list of StepOutput, one per frame.
    """
    B, Tb, N = batch.shape
    tokens = batch_tokens(model, batch)
    # one encoder pass over all frames at once; frames do not interact there
    flat = TokenState(tn.reshape(tokens, (B * Tb, N, model.cfg.token_dim)),
                      batch.rays.reshape(B * Tb, N, 2, 3), batch.xn.reshape(B * Tb, N, 2, 2),
                      np.repeat(batch.cam_R, Tb, axis=0))
    mem = tn.reshape(model.memory(flat), (B, Tb, N, model.cfg.main_hidden))
    outs = []
    q = queries
    for t in range(Tb):
        state = TokenState(tokens[:, t], batch.rays[:, t], batch.xn[:, t], batch.cam_R, q)
        out = model.decode(state, mem[:, t])
        outs.append(out)
        q = out.queries if autoregressive else None
    return outs
