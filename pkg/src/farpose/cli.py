"""Command-line entry point: simulate, annotate, train, eval, fuse, plot.

Exit codes: 0 success, 2 configuration or input error, 3 when every frame of a
numerical stage failed.
"""

from __future__ import annotations

import argparse
import contextlib
import glob
import json
import logging
import os
import shutil
import sys
import tempfile

import numpy as np

from . import __version__
from .errors import AllZeroConfidence, ConfigError, DegenerateInput, ShapeMismatch

log = logging.getLogger("farpose")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3
PROVENANCE = "config.json"


class InputError(Exception):
    """Bad paths or malformed input files; maps to exit code 2."""


class AllFramesFailed(Exception):
    """Every frame failed; maps to exit code 3."""


def default_seed():
    raw = os.environ.get("FARPOSE_SEED")
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError as exc:
        raise InputError(f"FARPOSE_SEED must be an integer, got {raw!r}") from exc


def read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise InputError(f"no such file: {path}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from exc


def dump_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


@contextlib.contextmanager
def output_dir(path):
    """Write into a temporary sibling directory and rename it into place.

    An existing target is replaced only when it holds a previous run's
    provenance file, so unrelated directories are never removed.
    """
    path = os.path.abspath(path)
    parent = os.path.dirname(path)
    os.makedirs(parent, exist_ok=True)
    if os.path.exists(path) and os.listdir(path) and not os.path.exists(os.path.join(path, PROVENANCE)):
        raise InputError(f"{path} exists and is not a farpose output directory")
    tmp = tempfile.mkdtemp(prefix=f".{os.path.basename(path)}-", dir=parent)
    try:
        yield tmp
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    if os.path.exists(path):
        shutil.rmtree(path)
    os.replace(tmp, path)


def echo_config(out, subcommand, args, **extra):
    args_d = {k: v for k, v in sorted(vars(args).items()) if k not in ("func",)}
    dump_json({"subcommand": subcommand, "args": args_d, "version": __version__, **extra},
              os.path.join(out, PROVENANCE))


def scene_path(p):
    if os.path.isdir(p):
        p = os.path.join(p, "scene.json")
    if not os.path.exists(p):
        raise InputError(f"no scene file at {p}")
    return p


def load_scene(p):
    from .synth import SceneRecording

    path = scene_path(p)
    obj = read_json(path)
    try:
        return SceneRecording.from_json_obj(obj)
    except (KeyError, TypeError) as exc:
        raise InputError(f"{path}: malformed scene ({exc})") from exc


def find_scenes(d):
    if os.path.isfile(d):
        return [d]
    if not os.path.isdir(d):
        raise InputError(f"no such scene directory: {d}")
    if os.path.exists(os.path.join(d, "scene.json")):
        return [os.path.join(d, "scene.json")]
    found = sorted(set(glob.glob(os.path.join(d, "*", "scene.json")))
                   | {p for p in glob.glob(os.path.join(d, "*.json"))
                      if os.path.basename(p) not in (PROVENANCE, "summary.json")})
    if not found:
        raise InputError(f"no scenes found under {d}")
    return found


# -- subcommands ---------------------------------------------------------------

def cmd_simulate(args):
    from .synth import SceneConfig, generate_scene

    raw = read_json(args.config) if args.config else {}
    cfg = SceneConfig.from_dict(raw)
    seed = args.seed if args.seed is not None else (None if "seed" in raw else default_seed())
    if seed is not None:
        cfg.seed = seed
    cfg.validate()
    rec = generate_scene(cfg)
    summary = {
        "schema": "farpose-scene/1",
        "frames": rec.n_frames,
        "cameras": rec.n_cameras,
        "markers": int(len(rec.markers)),
        "seed": cfg.seed,
        "hand_visible_fraction": float(rec.hand_visible.mean()),
        "time_scale": float(rec.gt["time_scale"]),
    }
    with output_dir(args.out) as out:
        rec.save(os.path.join(out, "scene.json"))
        dump_json(summary, os.path.join(out, "summary.json"))
        echo_config(out, "simulate", args, scene_config=cfg.to_dict())
    log.info("wrote %d frames from %d cameras to %s", rec.n_frames, rec.n_cameras, args.out)
    return EXIT_OK


def cmd_annotate(args):
    from .annot import AnnotConfig, annotate_scene

    rec = load_scene(args.scene)
    try:
        cfg = AnnotConfig(**read_json(args.config)) if args.config else AnnotConfig()
    except TypeError as exc:
        raise InputError(f"bad annotation config: {exc}") from exc
    result = annotate_scene(rec, cfg)
    with output_dir(args.out) as out:
        dump_json(result.to_json_obj(), os.path.join(out, "annotations.json"))
        dump_json(result.stats, os.path.join(out, "stats.json"))
        echo_config(out, "annotate", args, annot_config=vars(cfg))
    s = result.stats
    log.info("annotated %d hand-frames; marker frames skipped %s; MPJPE %s mm",
             s["hand_frames_annotated"], s["marker_frames_skipped"], s["mpjpe_mm"])
    if s["hand_frames_annotated"] == 0:
        raise AllFramesFailed("no hand-frame could be annotated")
    return EXIT_OK


def train_config_from_args(args):
    from .reachnet import TrainConfig

    raw = read_json(args.config) if args.config else {}
    cfg = TrainConfig.from_dict(raw)
    for flag in ("no_multiview", "no_body", "no_autoregressive", "no_ray_embedding"):
        if getattr(args, flag):
            setattr(cfg, flag, True)
    seed = args.seed if args.seed is not None else (None if "seed" in raw else default_seed())
    if seed is not None:
        cfg.seed = seed
    return cfg.validate()


def cmd_train(args):
    from . import plotting
    from .reachnet import save_model, train_two_stage
    from .synth import SceneRecording

    cfg = train_config_from_args(args)
    scenes = [SceneRecording.load(p) for p in find_scenes(args.scenes)]
    val = [SceneRecording.load(p) for p in find_scenes(args.val)] if args.val else None

    def progress(row):
        if row["iter"] % 100 == 0:
            log.info("iter %d stage %d loss %.4f", row["iter"], row["stage"], row["total"])

    result = train_two_stage(scenes, cfg, val_scenes=val, callback=progress)
    with output_dir(args.out) as out:
        save_model(os.path.join(out, "checkpoint.fpk"), result.model, cfg)
        with open(os.path.join(out, "metrics.csv"), "w") as fh:
            fh.write(result.log_csv())
        plotting.plot_report(os.path.join(out, "metrics.csv"), os.path.join(out, "loss_curve.svg"))
        dump_json({"config_digest": cfg.digest(), "iterations": len(result.log),
                   "initial_loss": result.initial_loss, "final_loss": result.final_loss,
                   "parameters": result.model.num_parameters()},
                  os.path.join(out, "summary.json"))
        echo_config(out, "train", args, train_config=cfg.to_dict(), config_digest=cfg.digest())
    return EXIT_OK


def eval_rows(args):
    """(report inputs, trajectory rows, used views) for the eval subcommand."""
    from . import hand
    from .reachnet import load_model, predict_scene, prepare_scene

    rec = load_scene(args.scene)
    views = [int(v) for v in args.views.split(",")] if args.views else None
    if views is not None and (min(views) < 0 or max(views) >= rec.n_cameras):
        raise InputError(f"views must lie in 0..{rec.n_cameras - 1}")
    gt_j, gt_th = rec.gt["joints"], rec.gt["theta"]
    items = []
    if args.oracle:
        used = views or list(range(rec.n_cameras))
        for f in range(rec.n_frames):
            for c, side in enumerate(hand.HANDEDNESS):
                items.append((f, side, gt_j[f, c], gt_th[f, c], rec.gt["wrist"][f, c]))
    else:
        if not args.checkpoint:
            raise InputError("eval needs --checkpoint unless --oracle is given")
        if not os.path.exists(args.checkpoint):
            raise InputError(f"no such checkpoint: {args.checkpoint}")
        model, cfg = load_model(args.checkpoint)
        arrays = prepare_scene(rec, cfg.features)
        rows, batch = predict_scene(model, arrays, cfg, views)
        used = [int(v) for v in batch.views[0]]
        for r in rows:
            items.append((r["frame"], r["hand"], r["joints"], r["pred"].theta, r["wrist"]))
    cams = [rec.cameras[v] for v in used]
    centers = np.array([c.center for c in cams])
    report_in = {"frames": [], "hands": [], "pred": [], "gt": [], "pth": [], "gth": [], "dist": []}
    traj = []
    for f, side, pj, pth, pw in items:
        c = hand.HANDEDNESS.index(side)
        gw = rec.gt["wrist"][f, c]
        report_in["frames"].append(f)
        report_in["hands"].append(side)
        report_in["pred"].append(pj)
        report_in["gt"].append(gt_j[f, c])
        report_in["pth"].append(pth)
        report_in["gth"].append(gt_th[f, c])
        report_in["dist"].append(float(np.min(np.linalg.norm(centers - gw, axis=1))))
        traj.append({"frame": f, "hand": side, **{f"pred_{a}": float(v) for a, v in zip("xyz", pw)},
                     **{f"gt_{a}": float(v) for a, v in zip("xyz", gw)}})
    return report_in, traj, used


def cmd_eval(args):
    from . import plotting
    from .evaluation import build_report

    r, traj, used = eval_rows(args)
    if not r["frames"]:
        raise AllFramesFailed("no frames evaluated")
    report = build_report(r["frames"], r["hands"], r["pred"], r["gt"], r["pth"], r["gth"], r["dist"])
    report.summary["views"] = used
    cols = ("frame", "hand", "pred_x", "pred_y", "pred_z", "gt_x", "gt_y", "gt_z")
    with output_dir(args.out) as out:
        with open(os.path.join(out, "report.csv"), "w") as fh:
            fh.write(report.to_csv())
        with open(os.path.join(out, "summary.json"), "w") as fh:
            fh.write(report.to_json() + "\n")
        with open(os.path.join(out, "trajectory.csv"), "w") as fh:
            fh.write(",".join(cols) + "\n")
            for row in traj:
                fh.write(",".join(str(row[k]) if k in ("frame", "hand") else repr(row[k])
                                  for k in cols) + "\n")
        plotting.plot_report(os.path.join(out, "report.csv"), os.path.join(out, "pa_mpjpe.svg"))
        plotting.plot_report(os.path.join(out, "trajectory.csv"), os.path.join(out, "trajectory.svg"))
        echo_config(out, "eval", args)
    s = report.summary
    log.info("PA-MPJPE %.2f mm over %d rows", s["pa_mpjpe_mm"]["mean"], s["rows"])
    return EXIT_OK


def parse_fuse_input(obj):
    views = obj["views"] if isinstance(obj, dict) else obj
    if not isinstance(views, list) or not views:
        raise InputError("fuse input must be a non-empty list of views")
    try:
        O = np.array([np.reshape(v["rotation"], (3, 3)) for v in views], dtype=float)
        RF = np.array([np.reshape(v.get("camera_rotation", np.eye(3)), (3, 3)) for v in views],
                      dtype=float)
        c = np.array([float(v["confidence"]) for v in views])
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed fuse input: {exc}") from exc
    return O, c, RF


def cmd_fuse(args):
    from .reachnet import mvu_fuse

    O, c, RF = parse_fuse_input(read_json(args.input))
    R = mvu_fuse(O, c, RF)
    text = json.dumps({"rotation": R.tolist()}, indent=2) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_plot(args):
    from . import plotting

    if not os.path.exists(args.report):
        raise InputError(f"no such report: {args.report}")
    rows = plotting.read_csv(args.report)
    if not rows:
        raise InputError(f"{args.report} has no rows")
    try:
        kind, n = plotting.plot_report(args.report, args.out)
    except (ValueError, KeyError) as exc:
        raise InputError(str(exc)) from exc
    log.info("plotted %d %s rows to %s", n, kind, args.out)
    return EXIT_OK


# -- parser --------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="farpose", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"farpose {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    p.add_argument("--threads", type=int, default=None, help="cap on numeric worker threads")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a synthetic scene")
    s.add_argument("--config", help="scene config JSON")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("annotate", help="run the chest-camera annotation pipeline")
    s.add_argument("--scene", required=True)
    s.add_argument("--config", help="annotation thresholds JSON")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_annotate)

    s = sub.add_parser("train", help="two-stage training")
    s.add_argument("--scenes", required=True)
    s.add_argument("--val", help="held-out scenes for periodic validation")
    s.add_argument("--config", help="training config JSON")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    for flag in ("multiview", "body", "autoregressive", "ray-embedding"):
        s.add_argument(f"--no-{flag}", action="store_true")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="evaluate a checkpoint on a scene")
    s.add_argument("--scene", required=True)
    s.add_argument("--checkpoint")
    s.add_argument("--out", required=True)
    s.add_argument("--views", help="comma-separated camera indices")
    s.add_argument("--oracle", action="store_true", help="score ground truth as the prediction")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("fuse", help="confidence-weighted orientation fusion")
    s.add_argument("--input", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_fuse)

    s = sub.add_parser("plot", help="SVG figure from a CSV report or training log")
    s.add_argument("--report", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_plot)
    return p


def _thread_limit(n):
    if n is None:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=max(1, n))


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with _thread_limit(args.threads):
            return args.func(args)
    except (InputError, ConfigError, ShapeMismatch, AllZeroConfidence, DegenerateInput) as exc:
        print(f"farpose: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except AllFramesFailed as exc:
        print(f"farpose: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
