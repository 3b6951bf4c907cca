import numpy as np
from hypothesis import given, settings
from hypothesis.extra.numpy import arrays
from hypothesis import strategies as st

from farpose import masks


@settings(max_examples=100, deadline=None)
@given(bitmap=arrays(bool, st.tuples(st.integers(1, 12), st.integers(1, 12))))
def test_rle_round_trip(bitmap):
    runs = masks.rle_encode(bitmap)
    np.testing.assert_array_equal(masks.rle_decode(runs, bitmap.shape), bitmap)
    assert sum(runs) == bitmap.size


def test_convex_hull_square_with_interior_point():
    pts = np.array([[0, 0], [2, 0], [2, 2], [0, 2], [1, 1]], dtype=float)
    hull = masks.convex_hull(pts)
    assert len(hull) == 4
    assert not any(np.allclose(h, [1, 1]) for h in hull)


def test_hull_mask_contains_points_and_excludes_far():
    pts = np.array([[10.0, 10.0], [30.0, 12.0], [20.0, 30.0]])
    box, bitmap = masks.hull_mask(pts, 100, 100, dilate=1.0)
    m = masks.Mask(box, bitmap)
    assert m.contains(pts).all()
    assert m.contains([20.0, 17.0]).all()
    assert not m.contains([[80.0, 80.0], [np.nan, 3.0]]).any()
    back = masks.Mask.from_dict(m.to_dict())
    np.testing.assert_array_equal(back.bitmap, m.bitmap)


def test_hull_mask_off_image_is_none():
    assert masks.hull_mask(np.array([[-50.0, -50.0], [-40.0, -45.0], [-45, -30.0]]), 64, 64) is None
