"""Binary hand-region masks: convex-hull rasterization and run-length encoding."""

import numpy as np


def convex_hull(points):
    """Counter-clockwise hull vertices of 2D points (monotone chain)."""
    pts = sorted(set(map(tuple, np.asarray(points, dtype=float))))
    if len(pts) <= 2:
        return np.array(pts)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def _segment_distance(px, py, a, b):
    d = b - a
    L = d @ d
    if L == 0:
        return np.hypot(px - a[0], py - a[1])
    s = np.clip(((px - a[0]) * d[0] + (py - a[1]) * d[1]) / L, 0.0, 1.0)
    return np.hypot(px - (a[0] + s * d[0]), py - (a[1] + s * d[1]))


def hull_mask(points, width, height, dilate=2.0):
    """Rasterize the convex hull of ``points`` grown by ``dilate`` pixels.

    Pixel (row r, col c) has its center at (u=c, v=r). Returns ``(box, bitmap)``
    where ``box = (r0, c0, h, w)`` locates the bitmap in the image, or ``None``
    when the hull misses the image.
    """
    hull = convex_hull(points)
    lo = np.floor(hull.min(0) - dilate - 1).astype(int)
    hi = np.ceil(hull.max(0) + dilate + 1).astype(int)
    c0, r0 = max(lo[0], 0), max(lo[1], 0)
    c1, r1 = min(hi[0], width - 1), min(hi[1], height - 1)
    if c1 < c0 or r1 < r0:
        return None
    cc, rr = np.meshgrid(np.arange(c0, c1 + 1, dtype=float), np.arange(r0, r1 + 1, dtype=float))
    n = len(hull)
    if n >= 3:
        inside = np.ones(cc.shape, dtype=bool)
        for i in range(n):
            a, b = hull[i], hull[(i + 1) % n]
            inside &= (b[0] - a[0]) * (rr - a[1]) - (b[1] - a[1]) * (cc - a[0]) >= 0
    else:
        inside = np.zeros(cc.shape, dtype=bool)
    near = np.zeros(cc.shape, dtype=bool)
    for i in range(n):
        near |= _segment_distance(cc, rr, hull[i], hull[(i + 1) % n]) <= dilate
    return (int(r0), int(c0), int(cc.shape[0]), int(cc.shape[1])), inside | near


def rle_encode(bitmap):
    """Row-major run lengths, starting with a (possibly empty) run of zeros."""
    flat = np.asarray(bitmap, dtype=bool).ravel()
    change = np.flatnonzero(np.diff(flat.astype(np.int8))) + 1
    bounds = np.concatenate([[0], change, [flat.size]])
    runs = np.diff(bounds).tolist()
    if flat.size and flat[0]:
        runs = [0] + runs
    return runs


def rle_decode(counts, shape):
    flat = np.zeros(int(np.prod(shape)), dtype=bool)
    pos, val = 0, False
    for n in counts:
        if val:
            flat[pos:pos + n] = True
        pos += n
        val = not val
    return flat.reshape(shape)


class Mask:
    """A bitmap placed at ``box = (r0, c0, h, w)`` inside a larger image."""

    def __init__(self, box, bitmap):
        self.box = tuple(int(x) for x in box)
        self.bitmap = np.asarray(bitmap, dtype=bool)

    def contains(self, uv):
        """Whether the pixels nearest to ``uv`` are set."""
        uv = np.atleast_2d(np.asarray(uv, dtype=float))
        finite = np.all(np.isfinite(uv), 1)
        uv = np.where(finite[:, None], uv, -1e6)
        c = np.floor(uv[:, 0] + 0.5).astype(int) - self.box[1]
        r = np.floor(uv[:, 1] + 0.5).astype(int) - self.box[0]
        ok = (r >= 0) & (r < self.box[2]) & (c >= 0) & (c < self.box[3]) & finite
        out = np.zeros(len(uv), dtype=bool)
        out[ok] = self.bitmap[r[ok], c[ok]]
        return out

    def to_dict(self):
        return {"box": list(self.box), "counts": rle_encode(self.bitmap)}

    @classmethod
    def from_dict(cls, d):
        box = d["box"]
        return cls(box, rle_decode(d["counts"], (box[2], box[3])))
