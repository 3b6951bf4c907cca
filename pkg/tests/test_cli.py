import json

import numpy as np
import pytest

from farpose import cli, geom, plotting

TINY_FEATURES = {"body_dim": 8, "hand_dim": 6, "token_dim": 20, "pose_layers": 1, "pose_heads": 2,
                 "pose_hidden": 8, "main_layers": 1, "main_heads": 2, "main_hidden": 8,
                 "ffn_mult": 1, "ray_freqs": 2}


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "scene.json").write_text(json.dumps({"n_frames": 24}))
    (d / "train.json").write_text(json.dumps({"stage_iters": [2, 2], "val_every": 0, "batch_size": 2,
                                              "features": TINY_FEATURES}))
    assert cli.main(["simulate", "--config", str(d / "scene.json"), "--out", str(d / "scenes" / "a"),
                     "--seed", "4"]) == 0
    return d


def test_simulate_outputs_and_determinism(workdir, tmp_path):
    out = tmp_path / "again"
    assert cli.main(["simulate", "--config", str(workdir / "scene.json"), "--out", str(out), "--seed", "4"]) == 0
    assert (out / "scene.json").read_bytes() == (workdir / "scenes" / "a" / "scene.json").read_bytes()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["frames"] == 24 and summary["cameras"] == 4
    assert json.loads((out / "config.json").read_text())["subcommand"] == "simulate"


def test_seed_precedence(workdir, tmp_path, monkeypatch):
    monkeypatch.setenv("FARPOSE_SEED", "9")
    cli.main(["simulate", "--config", str(workdir / "scene.json"), "--out", str(tmp_path / "env")])
    assert json.loads((tmp_path / "env" / "summary.json").read_text())["seed"] == 9
    cli.main(["simulate", "--config", str(workdir / "scene.json"), "--out", str(tmp_path / "flag"),
              "--seed", "2"])
    assert json.loads((tmp_path / "flag" / "summary.json").read_text())["seed"] == 2


def test_missing_config_exits_2(tmp_path, capsys):
    assert cli.main(["simulate", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")]) == 2
    assert "no such file" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"n_cameras": 1}))
    assert cli.main(["simulate", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2


def test_refuses_to_replace_foreign_directory(workdir, tmp_path):
    foreign = tmp_path / "foreign"
    foreign.mkdir()
    (foreign / "keep.txt").write_text("x")
    assert cli.main(["simulate", "--config", str(workdir / "scene.json"), "--out", str(foreign)]) == 2
    assert (foreign / "keep.txt").exists()


def test_annotate(workdir, tmp_path):
    assert cli.main(["annotate", "--scene", str(workdir / "scenes" / "a"), "--out", str(tmp_path / "ann")]) == 0
    stats = json.loads((tmp_path / "ann" / "stats.json").read_text())
    ann = json.loads((tmp_path / "ann" / "annotations.json").read_text())
    assert stats["hand_frames_annotated"] == sum(len(f["hands"]) for f in ann["frames"])
    assert "mpjpe_mm" in stats


def test_annotate_all_frames_failing_exits_3(workdir, tmp_path):
    obj = json.loads((workdir / "scenes" / "a" / "scene.json").read_text())
    obj["chest_hand_visible"] = np.zeros_like(obj["chest_hand_visible"], dtype=bool).tolist()
    (tmp_path / "blind.json").write_text(json.dumps(obj))
    assert cli.main(["annotate", "--scene", str(tmp_path / "blind.json"), "--out", str(tmp_path / "x")]) == 3


def test_train_eval_plot(workdir, tmp_path):
    tr = tmp_path / "tr"
    assert cli.main(["train", "--scenes", str(workdir / "scenes"), "--config", str(workdir / "train.json"),
                     "--out", str(tr)]) == 0
    for f in ("checkpoint.fpk", "metrics.csv", "loss_curve.svg", "summary.json", "config.json"):
        assert (tr / f).exists(), f
    assert len((tr / "metrics.csv").read_text().splitlines()) == 5
    ev = tmp_path / "ev"
    assert cli.main(["eval", "--scene", str(workdir / "scenes" / "a"), "--checkpoint",
                     str(tr / "checkpoint.fpk"), "--out", str(ev)]) == 0
    rows = plotting.read_csv(str(ev / "report.csv"))
    assert len(rows) == 2 * 6  # 24 frames at stride 4, two hands
    assert plotting.count_series_points((ev / "trajectory.svg").read_text())["series-left-pred-xy"] == 6
    svg = tmp_path / "p.svg"
    assert cli.main(["plot", "--report", str(ev / "report.csv"), "--out", str(svg)]) == 0
    assert sum(plotting.count_series_points(svg.read_text()).values()) == len(rows)


def test_ablation_flags_change_config_hash(workdir, tmp_path):
    digests = set()
    for flags in ([], ["--no-body"], ["--no-multiview"], ["--no-autoregressive"], ["--no-ray-embedding"]):
        args = cli.build_parser().parse_args(["train", "--scenes", "x", "--out", "y",
                                              "--config", str(workdir / "train.json"), *flags])
        digests.add(cli.train_config_from_args(args).digest())
    assert len(digests) == 5


def test_eval_oracle_gives_zero_metrics(workdir, tmp_path):
    out = tmp_path / "oracle"
    assert cli.main(["eval", "--scene", str(workdir / "scenes" / "a"), "--oracle", "--out", str(out)]) == 0
    s = json.loads((out / "summary.json").read_text())
    assert s["mpjpe_mm"]["mean"] == 0.0
    assert s["pa_mpjpe_mm"]["mean"] < 1e-9
    assert s["joint_angle_deg"]["mean"] == 0.0


def test_eval_without_checkpoint_exits_2(workdir, tmp_path):
    assert cli.main(["eval", "--scene", str(workdir / "scenes" / "a"), "--out", str(tmp_path / "e")]) == 2


def test_fuse(tmp_path, capsys):
    rng = np.random.default_rng(0)
    O, R = geom.random_rotation(rng), geom.random_rotation(rng)
    inp = tmp_path / "views.json"
    inp.write_text(json.dumps([{"rotation": O.ravel().tolist(), "confidence": 0.8,
                                "camera_rotation": R.ravel().tolist()}]))
    assert cli.main(["fuse", "--input", str(inp)]) == 0
    out = np.array(json.loads(capsys.readouterr().out)["rotation"])
    np.testing.assert_allclose(out, R.T @ O, atol=1e-14)
    inp.write_text(json.dumps([{"rotation": O.ravel().tolist(), "confidence": 0.0}]))
    assert cli.main(["fuse", "--input", str(inp)]) == 2


def test_plot_empty_report_exits_2(tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text("frame,hand,pa_mpjpe_mm\n")
    assert cli.main(["plot", "--report", str(p), "--out", str(tmp_path / "x.svg")]) == 2
    assert cli.main(["plot", "--report", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "x.svg")]) == 2


def test_threads_flag(workdir, tmp_path):
    assert cli.main(["--threads", "1", "simulate", "--config", str(workdir / "scene.json"),
                     "--out", str(tmp_path / "t")]) == 0
