"""Triangulations of a polygonal approximation of the unit disk.

Point indices are 0-based in memory and 1-based in mesh files.  Boundary
points carry an arc parameter ``theta`` in [0, 2*pi); interior points carry
NaN.  ``perm`` lists interior points first and boundary points last, each
group in ascending index order.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DanglingIndex, MalformedMesh, NonPositiveArea

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class Mesh:
    points: np.ndarray      # (s_p, 2)
    triangles: np.ndarray   # (n_t, 3), counterclockwise
    edges: np.ndarray       # (s_e, 2), boundary segments, domain on the left
    theta: np.ndarray       # (s_p,), NaN off the boundary
    perm: np.ndarray = field(init=False)

    def __post_init__(self):
        boundary = ~np.isnan(self.theta)
        perm = np.concatenate([np.flatnonzero(~boundary), np.flatnonzero(boundary)])
        object.__setattr__(self, "perm", perm)
        for name in ("points", "triangles", "edges", "theta", "perm"):
            getattr(self, name).setflags(write=False)

    @property
    def n_points(self):
        return self.points.shape[0]

    @property
    def n_boundary(self):
        return int(np.count_nonzero(~np.isnan(self.theta)))

    @property
    def n_interior(self):
        return self.n_points - self.n_boundary

    @property
    def boundary_mask(self):
        return ~np.isnan(self.theta)

    def triangle_areas(self):
        return signed_areas(self.points, self.triangles)

    def area(self):
        return float(self.triangle_areas().sum())

    def polygon_area(self):
        """Shoelace area of the boundary polygon."""
        a = self.points[self.edges[:, 0]]
        b = self.points[self.edges[:, 1]]
        return float(0.5 * np.sum(a[:, 0] * b[:, 1] - b[:, 0] * a[:, 1]))

    def hmax(self):
        p = self.points[self.triangles]
        lengths = np.linalg.norm(p - np.roll(p, 1, axis=1), axis=2)
        return float(lengths.max())


def signed_areas(points, triangles):
    p0 = points[triangles[:, 0]]
    p1 = points[triangles[:, 1]]
    p2 = points[triangles[:, 2]]
    d1 = p1 - p0
    d2 = p2 - p0
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def boundary_edges(triangles):
    """Edges used by exactly one triangle, oriented as in that triangle."""
    tri = np.asarray(triangles)
    directed = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
    keys = np.sort(directed, axis=1)
    _, inverse, counts = np.unique(keys, axis=0, return_inverse=True,
                                   return_counts=True)
    inverse = inverse.ravel()
    once = counts[inverse] == 1
    # keep triangle order so the result is deterministic
    order = np.argsort(np.concatenate([np.arange(len(tri))] * 3), kind="stable")
    directed = directed[order]
    once = once[order]
    return directed[once]


def _chain(edges):
    """Order boundary edges head-to-tail starting from the smallest index."""
    nxt = {int(a): int(b) for a, b in edges}
    if len(nxt) != len(edges):
        return edges
    out = []
    remaining = set(nxt)
    while remaining:
        start = min(remaining)
        a = start
        while True:
            b = nxt[a]
            out.append((a, b))
            remaining.discard(a)
            a = b
            if a == start or a not in remaining:
                break
    return np.array(out, dtype=np.int64).reshape(-1, 2)


def _build(points, triangles, theta):
    edges = _chain(boundary_edges(triangles))
    return Mesh(points=np.ascontiguousarray(points, dtype=float),
                triangles=np.ascontiguousarray(triangles, dtype=np.int64),
                edges=edges,
                theta=np.asarray(theta, dtype=float))


def _zip_rings(inner, outer, inner_angles, outer_angles):
    """Triangulate the annulus between two closed rings of points."""
    n_in, n_out = len(inner), len(outer)
    tris = []
    i = j = 0
    while i < n_in or j < n_out:
        next_in = inner_angles[i + 1] if i < n_in else np.inf
        next_out = outer_angles[j + 1] if j < n_out else np.inf
        if next_out <= next_in + 1e-12:
            tris.append((inner[i % n_in], outer[j % n_out], outer[(j + 1) % n_out]))
            j += 1
        else:
            tris.append((inner[i % n_in], outer[j % n_out], inner[(i + 1) % n_in]))
            i += 1
    return tris


def generate_disk_mesh(rings):
    """Concentric-ring triangulation of the unit disk.

    Ring ``r`` sits at radius ``r/rings`` and carries ``6r`` equally spaced
    points; the outermost ring is the boundary.
    """
    rings = int(rings)
    if rings < 1:
        raise ValueError("rings must be >= 1")
    points = [(0.0, 0.0)]
    theta = [np.nan]
    ring_ids = [[0]]
    for r in range(1, rings + 1):
        n = 6 * r
        ang = TWO_PI * np.arange(n) / n
        rad = r / rings
        start = len(points)
        points.extend(zip(rad * np.cos(ang), rad * np.sin(ang)))
        theta.extend(ang if r == rings else [np.nan] * n)
        ring_ids.append(list(range(start, start + n)))
    tris = []
    first = ring_ids[1]
    for j in range(6):
        tris.append((0, first[j], first[(j + 1) % 6]))
    for r in range(2, rings + 1):
        inner, outer = ring_ids[r - 1], ring_ids[r]
        ai = TWO_PI * np.arange(len(inner) + 1) / len(inner)
        ao = TWO_PI * np.arange(len(outer) + 1) / len(outer)
        tris.extend(_zip_rings(inner, outer, ai, ao))
    tris = np.array(tris, dtype=np.int64)
    pts = np.array(points)
    flip = signed_areas(pts, tris) < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    return _build(pts, tris, theta)


def rings_for_hmax(hmax):
    """Smallest ring count whose longest edge does not exceed ``hmax``.

    The longest edges are the ring-to-ring diagonals, of length ``sqrt(3)/rings``.
    """
    return max(1, int(np.ceil(np.sqrt(3.0) / hmax - 1e-12)))


def _mid_theta(ta, tb):
    lo, hi = min(ta, tb), max(ta, tb)
    if hi - lo > np.pi:
        lo += TWO_PI
    return ((lo + hi) / 2.0) % TWO_PI


def refine(mesh, project=False):
    """Split every triangle into four through its edge midpoints.

    New boundary points stay on the polygon unless ``project`` is set, in
    which case they are pushed radially onto the unit circle.
    """
    points = [tuple(p) for p in mesh.points]
    theta = list(mesh.theta)
    midpoint = {}

    def mid(a, b):
        key = (a, b) if a < b else (b, a)
        idx = midpoint.get(key)
        if idx is None:
            idx = len(points)
            midpoint[key] = idx
            p = 0.5 * (mesh.points[a] + mesh.points[b])
            th = np.nan
            if not np.isnan(theta[a]) and not np.isnan(theta[b]) and key in bkeys:
                th = _mid_theta(theta[a], theta[b])
                if project:
                    p = p / np.linalg.norm(p)
            points.append(tuple(p))
            theta.append(th)
        return idx

    bkeys = {(min(a, b), max(a, b)) for a, b in mesh.edges}
    tris = []
    for a, b, c in mesh.triangles:
        a, b, c = int(a), int(b), int(c)
        ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
        tris.extend([(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)])
    return _build(np.array(points), np.array(tris, dtype=np.int64), theta)


def load_mesh(text):
    """Parse the plain-text mesh format.

    ``points N`` followed by N lines ``x y [theta]``, then ``triangles M``
    followed by M lines ``i j k`` (1-based).  ``#`` starts a comment.
    Clockwise triangles are reoriented.
    """
    lines = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].split()
        if body:
            lines.append((lineno, body))
    pos = 0

    def header(word):
        nonlocal pos
        if pos >= len(lines):
            raise MalformedMesh(lines[-1][0] if lines else 0, f"missing '{word}' header")
        lineno, body = lines[pos]
        if len(body) != 2 or body[0] != word:
            raise MalformedMesh(lineno, f"expected '{word} <count>'")
        try:
            count = int(body[1])
        except ValueError:
            raise MalformedMesh(lineno, f"bad count {body[1]!r}") from None
        if count < 0:
            raise MalformedMesh(lineno, "negative count")
        pos += 1
        return count

    n = header("points")
    pts = np.empty((n, 2))
    theta = np.full(n, np.nan)
    point_lines = []
    for i in range(n):
        if pos >= len(lines):
            raise MalformedMesh(lines[-1][0], f"expected {n} points, got {i}")
        lineno, body = lines[pos]
        if len(body) not in (2, 3):
            raise MalformedMesh(lineno, "point line needs 'x y [theta]'")
        try:
            vals = [float(v) for v in body]
        except ValueError:
            raise MalformedMesh(lineno, "non-numeric coordinate") from None
        pts[i] = vals[:2]
        if len(vals) == 3:
            theta[i] = vals[2] % TWO_PI
        point_lines.append(lineno)
        pos += 1
    m = header("triangles")
    tris = np.empty((m, 3), dtype=np.int64)
    for t in range(m):
        if pos >= len(lines):
            raise MalformedMesh(lines[-1][0], f"expected {m} triangles, got {t}")
        lineno, body = lines[pos]
        if len(body) != 3:
            raise MalformedMesh(lineno, "triangle line needs 'i j k'")
        try:
            idx = [int(v) for v in body]
        except ValueError:
            raise MalformedMesh(lineno, "non-integer index") from None
        for v in idx:
            if v < 1 or v > n:
                raise DanglingIndex(lineno, v)
        tris[t] = [v - 1 for v in idx]
        pos += 1
    if pos != len(lines):
        raise MalformedMesh(lines[pos][0], "trailing content")
    if m == 0:
        raise MalformedMesh(lines[-1][0], "no triangles")
    areas = signed_areas(pts, tris)
    scale = max(1.0, float(np.abs(pts).max())) ** 2
    for t in np.flatnonzero(np.abs(areas) <= 1e-14 * scale):
        raise NonPositiveArea(int(t))
    flip = areas < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    on_boundary = np.zeros(n, dtype=bool)
    on_boundary[boundary_edges(tris).ravel()] = True
    for i in np.flatnonzero(on_boundary != ~np.isnan(theta)):
        reason = "boundary point without theta" if on_boundary[i] else \
            "theta given for an interior point"
        raise MalformedMesh(point_lines[i], reason)
    return _build(pts, tris, theta)


def dump_mesh(mesh):
    """Inverse of :func:`load_mesh`."""
    out = [f"points {mesh.n_points}"]
    for (x, y), th in zip(mesh.points, mesh.theta):
        out.append(f"{x:.17g} {y:.17g}" + ("" if np.isnan(th) else f" {th:.17g}"))
    out.append(f"triangles {len(mesh.triangles)}")
    out.extend(" ".join(str(int(v) + 1) for v in t) for t in mesh.triangles)
    return "\n".join(out) + "\n"
