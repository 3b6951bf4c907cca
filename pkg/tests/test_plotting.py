import pytest

from farpose import plotting

LOSS = "iter,stage,views,total\n0,1,4,3.0\n1,1,4,2.0\n2,2,2,1.5\n"
METRICS = ("frame,hand,mpjpe_mm,pa_mpjpe_mm,joint_angle_deg,distance_m,bin\n"
           "0,left,10,5,3,2.0,Near\n0,right,11,6,3,2.0,Near\n4,left,9,4,2,2.5,Near\n")
TRAJ = ("frame,hand,pred_x,pred_y,pred_z,gt_x,gt_y,gt_z\n"
        "0,left,1,2,1,1,2,1\n4,left,1.1,2.1,1.0,1.1,2.0,1.1\n8,left,1.2,2.2,1.1,1.2,2.1,1.0\n")


@pytest.mark.parametrize("text,kind", [(LOSS, "loss"), (METRICS, "metrics"), (TRAJ, "trajectory")])
def test_kind_detection(text, kind):
    assert plotting.report_kind(plotting.read_csv(text)) == kind


def test_empty_report_rejected():
    with pytest.raises(ValueError):
        plotting.report_kind([])


def test_point_count_parses_back(tmp_path):
    out = tmp_path / "m.svg"
    kind, n = plotting.plot_report(METRICS, out)
    counts = plotting.count_series_points(out.read_text())
    assert kind == "metrics" and n == 3
    assert counts == {"series-left": 2, "series-right": 1}
    out = tmp_path / "l.svg"
    plotting.plot_report(LOSS, out)
    assert plotting.count_series_points(out.read_text()) == {"series-total": 3}
    out = tmp_path / "t.svg"
    plotting.plot_report(TRAJ, out)
    counts = plotting.count_series_points(out.read_text())
    assert set(counts.values()) == {3} and len(counts) == 4


def test_svg_bytes_are_deterministic(tmp_path):
    plotting.plot_report(TRAJ, tmp_path / "a.svg")
    plotting.plot_report(TRAJ, tmp_path / "b.svg")
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()
