"""PQ-polygon algebra for flexibility regions.

Polygons live in the (dP, dQ) plane (MW / Mvar). Everything here is pure
and operates on immutable vertex arrays, so all functions are safe to call
from parallel workers without locking.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from shapely.geometry import Polygon as _ShapelyPolygon
from shapely import set_precision as _sh_set_precision
from shapely import union_all as _sh_union_all

SNAP_TOL = 1e-9
BOUNDARY_TOL = 1e-9


class GeometryError(ValueError):
    """Invalid polygon input or unsupported geometric configuration."""


def shoelace_area(vertices) -> float:
    """Signed area of a closed polygon (positive for CCW vertex order)."""
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _segments_intersect(p1, p2, p3, p4, eps) -> bool:
    """True if segment p1p2 intersects p3p4 (endpoints included)."""
    d1 = _cross(p3, p4, p1)
    d2 = _cross(p3, p4, p2)
    d3 = _cross(p1, p2, p3)
    d4 = _cross(p1, p2, p4)
    if ((d1 > eps and d2 < -eps) or (d1 < -eps and d2 > eps)) and \
       ((d3 > eps and d4 < -eps) or (d3 < -eps and d4 > eps)):
        return True

    def on_segment(a, b, c):
        return (min(a[0], b[0]) - eps <= c[0] <= max(a[0], b[0]) + eps and
                min(a[1], b[1]) - eps <= c[1] <= max(a[1], b[1]) + eps)

    if abs(d1) <= eps and on_segment(p3, p4, p1):
        return True
    if abs(d2) <= eps and on_segment(p3, p4, p2):
        return True
    if abs(d3) <= eps and on_segment(p1, p2, p3):
        return True
    if abs(d4) <= eps and on_segment(p1, p2, p4):
        return True
    return False


@dataclass(frozen=True)
class PqPolygon:
    """Simple (possibly non-convex) polygon of (dP, dQ) vertices, CCW order.

    The constructor normalizes orientation to counter-clockwise and
    validates simplicity. Vertex arrays are marked read-only.
    """

    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2:
            raise GeometryError(f"vertices must be (n, 2), got {v.shape}")
        if len(v) < 3:
            raise GeometryError(f"polygon needs >= 3 vertices, got {len(v)}")
        scale = max(1.0, float(np.abs(v).max()))
        dup = np.linalg.norm(np.diff(np.vstack([v, v[:1]]), axis=0), axis=1)
        if np.any(dup < 1e-12 * scale):
            raise GeometryError("repeated consecutive vertices")
        area = shoelace_area(v)
        if abs(area) < 1e-12 * scale * scale:
            raise GeometryError("degenerate (zero-area) polygon")
        if area < 0.0:
            v = v[::-1].copy()
        self._check_simple(v, scale)
        v = np.ascontiguousarray(v)
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @staticmethod
    def _check_simple(v, scale):
        n = len(v)
        eps = 1e-12 * scale
        for i in range(n):
            a1, a2 = v[i], v[(i + 1) % n]
            for j in range(i + 1, n):
                # skip adjacent edges (they share a vertex by construction)
                if j == i or (j + 1) % n == i or (i + 1) % n == j:
                    continue
                if _segments_intersect(a1, a2, v[j], v[(j + 1) % n], eps):
                    raise GeometryError(
                        f"polygon is self-intersecting (edges {i} and {j})")

    @property
    def area(self) -> float:
        return shoelace_area(self.vertices)

    def bounding_box(self):
        """(p_min, q_min, p_max, q_max)."""
        v = self.vertices
        return (float(v[:, 0].min()), float(v[:, 1].min()),
                float(v[:, 0].max()), float(v[:, 1].max()))

    def is_convex(self, eps_rel: float = 1e-12) -> bool:
        v = self.vertices
        n = len(v)
        scale = max(1.0, float(np.abs(v).max()))
        eps = eps_rel * scale * scale
        for i in range(n):
            if _cross(v[i], v[(i + 1) % n], v[(i + 2) % n]) < -eps:
                return False
        return True


@dataclass(frozen=True)
class Triangulation:
    """Triangle cover of a polygon with the cumulative-area pick vector.

    ``triangles`` has shape (t, 3, 2); ``cum_areas`` has a leading 0 and a
    trailing 1 so a uniform draw r selects triangle w with
    cum_areas[w-1] <= r <= cum_areas[w].
    """

    triangles: np.ndarray     # (t, 3, 2)
    abs_areas: np.ndarray     # (t,)
    cum_areas: np.ndarray     # (t + 1,)
    polygon: PqPolygon = field(repr=False)


def triangle_area_cross(tri) -> float:
    """Triangle area from the cross product of two edge vectors.

    0.5 * ((p1 - p3) x (q2 - q3) - (p2 - p3) x (q1 - q3)) for the vertex
    coordinates (p_i, q_i); sign follows vertex orientation.
    """
    (p1, q1), (p2, q2), (p3, q3) = tri
    return 0.5 * ((p1 - p3) * (q2 - q3) - (p2 - p3) * (q1 - q3))


def _ear_clip(vertices) -> list[tuple[int, int, int]]:
    """Triangulate a simple CCW polygon by ear clipping; returns index triples."""
    v = np.asarray(vertices, dtype=float)
    n = len(v)
    scale = max(1.0, float(np.abs(v).max()))
    eps = 1e-12 * scale * scale
    idx = list(range(n))
    tris = []
    while len(idx) > 3:
        clipped = False
        for k in range(len(idx)):
            ia = idx[k - 1]
            ib = idx[k]
            ic = idx[(k + 1) % len(idx)]
            cr = _cross(v[ia], v[ib], v[ic])
            if cr < -eps:
                continue  # reflex corner, not an ear
            if cr <= eps:
                # collinear corner: drop the middle vertex (zero-area ear)
                tris.append((ia, ib, ic))
                idx.pop(k)
                clipped = True
                break
            ok = True
            for m in idx:
                if m in (ia, ib, ic):
                    continue
                p = v[m]
                if (_cross(v[ia], v[ib], p) >= -eps and
                        _cross(v[ib], v[ic], p) >= -eps and
                        _cross(v[ic], v[ia], p) >= -eps):
                    ok = False
                    break
            if ok:
                tris.append((ia, ib, ic))
                idx.pop(k)
                clipped = True
                break
        if not clipped:
            raise GeometryError("ear clipping failed; polygon may be degenerate")
    tris.append(tuple(idx))
    return tris


def triangulate(poly: PqPolygon) -> Triangulation:
    """Cover the polygon interior with triangles and build the pick vector."""
    v = poly.vertices
    tri_idx = _ear_clip(v)
    tris = np.array([[v[a], v[b], v[c]] for a, b, c in tri_idx])
    areas = np.array([abs(triangle_area_cross(t)) for t in tris])
    total = areas.sum()
    ref = abs(poly.area)
    if not np.isclose(total, ref, rtol=1e-9, atol=1e-12 * max(1.0, ref)):
        raise GeometryError(
            f"triangulation area {total} does not match polygon area {ref}")
    cum = np.concatenate([[0.0], np.cumsum(areas) / total])
    cum[-1] = 1.0
    for a in (tris, areas, cum):
        a.setflags(write=False)
    return Triangulation(triangles=tris, abs_areas=areas, cum_areas=cum,
                         polygon=poly)


def sample_uniform(tri: Triangulation, rng):
    """Draw one point uniformly over the triangulated polygon area.

    A first uniform draw picks the triangle through the cumulative area
    vector; two further draws (sorted so r1 <= r2) place the point inside
    it via dp = r1*P1 + (r2 - r1)*P2 + (1 - r2)*P3.
    """
    r = rng.random()
    w = int(np.searchsorted(tri.cum_areas, r, side="left"))
    w = max(w, 1)
    while tri.abs_areas[w - 1] <= 0.0 and w < len(tri.abs_areas):
        w += 1
    r1, r2 = sorted((rng.random(), rng.random()))
    p1, p2, p3 = tri.triangles[w - 1]
    pt = r1 * p1 + (r2 - r1) * p2 + (1.0 - r2) * p3
    return float(pt[0]), float(pt[1])


def recenter(poly: PqPolygon, p_op: float, q_op: float) -> PqPolygon:
    """Shift vertices so the operating point (p_op, q_op) moves to (0, 0)."""
    if not contains(poly, (p_op, q_op)):
        raise GeometryError(
            f"operating point ({p_op}, {q_op}) lies outside the polygon")
    return PqPolygon(poly.vertices - np.array([p_op, q_op]))


def translate(poly: PqPolygon, dp: float, dq: float) -> PqPolygon:
    return PqPolygon(poly.vertices + np.array([dp, dq]))


def _strip_collinear(v, eps_rel=1e-12):
    """Drop vertices whose corner is collinear with its neighbours."""
    scale = max(1.0, float(np.abs(v).max()))
    eps = eps_rel * scale * scale
    out = []
    n = len(v)
    for i in range(n):
        if abs(_cross(v[i - 1], v[i], v[(i + 1) % n])) > eps:
            out.append(v[i])
    return np.array(out)


def _lowest_first(v):
    """Rotate vertex order so the bottom-most (then left-most) vertex leads."""
    k = int(np.lexsort((v[:, 0], v[:, 1]))[0])
    return np.roll(v, -k, axis=0)


def _as_point(obj):
    """Return (2,) array if obj is a bare point, else None."""
    if isinstance(obj, PqPolygon):
        return None
    a = np.asarray(obj, dtype=float)
    if a.shape == (2,):
        return a
    return None


def minkowski_convex(a: PqPolygon, b) -> PqPolygon:
    """Minkowski sum of two convex polygons by angular edge merging.

    ``b`` may be a bare (p, q) point, in which case the sum degenerates to
    a translation of ``a``.
    """
    pt = _as_point(b)
    if pt is not None:
        return translate(a, pt[0], pt[1])
    if not a.is_convex() or not b.is_convex():
        raise GeometryError("minkowski_convex requires convex operands")
    P = _lowest_first(_strip_collinear(a.vertices))
    Q = _lowest_first(_strip_collinear(b.vertices))
    n, m = len(P), len(Q)
    scale = max(1.0, float(np.abs(P).max()), float(np.abs(Q).max()))
    eps = 1e-12 * scale * scale
    out = []
    i = j = 0
    while i < n or j < m:
        out.append(P[i % n] + Q[j % m])
        ea = P[(i + 1) % n] - P[i % n]
        eb = Q[(j + 1) % m] - Q[j % m]
        cr = ea[0] * eb[1] - ea[1] * eb[0]
        if cr > eps:
            i += 1
        elif cr < -eps:
            j += 1
        else:
            i += 1
            j += 1
    return PqPolygon(_strip_collinear(np.array(out)))


def convex_decomposition(poly: PqPolygon) -> list[PqPolygon]:
    """Split a simple polygon into convex pieces with disjoint interiors.

    Ear-clip triangles are greedily merged back together while the merge
    stays convex, which keeps the piece count low for mildly non-convex
    shapes. A convex input comes back unchanged as a single piece.
    """
    if poly.is_convex():
        return [poly]
    v = poly.vertices
    pieces = [list(t) for t in _ear_clip(v)]
    scale = max(1.0, float(np.abs(v).max()))
    eps = 1e-12 * scale * scale

    def merged(p1, p2):
        # pieces share a directed edge (u, w) in p1 and (w, u) in p2
        n1, n2 = len(p1), len(p2)
        for i in range(n1):
            u, w = p1[i], p1[(i + 1) % n1]
            for j in range(n2):
                if p2[j] == w and p2[(j + 1) % n2] == u:
                    cand = (p1[: i + 1]
                            + [p2[(k + j + 2) % n2] for k in range(n2 - 2)]
                            + p1[i + 1:])
                    nc = len(cand)
                    for k in range(nc):
                        if _cross(v[cand[k - 1]], v[cand[k]], v[cand[(k + 1) % nc]]) < -eps:
                            return None
                    return cand
        return None

    changed = True
    while changed:
        changed = False
        for i in range(len(pieces)):
            for j in range(i + 1, len(pieces)):
                cand = merged(pieces[i], pieces[j])
                if cand is not None:
                    pieces[i] = cand
                    pieces.pop(j)
                    changed = True
                    break
            if changed:
                break
    out = []
    for p in pieces:
        pv = _strip_collinear(v[p])
        if len(pv) >= 3 and abs(shoelace_area(pv)) > eps:
            out.append(PqPolygon(pv))
    total = sum(p.area for p in out)
    if not np.isclose(total, abs(poly.area), rtol=1e-9):
        raise GeometryError("convex decomposition area mismatch")
    return out


def _union_to_polygon(pieces) -> PqPolygon:
    """Boolean union of convex pieces; rejects holes and disconnected results."""
    geoms = [_ShapelyPolygon(np.asarray(p.vertices)) for p in pieces]
    u = _sh_union_all(geoms)
    u = _sh_set_precision(u, SNAP_TOL)
    if u.geom_type == "MultiPolygon":
        raise GeometryError("Minkowski union is disconnected")
    if u.is_empty or u.geom_type != "Polygon":
        raise GeometryError(f"Minkowski union produced {u.geom_type}")
    if len(u.interiors) > 0:
        raise GeometryError("Minkowski union contains holes")
    coords = np.asarray(u.exterior.coords)[:-1]
    coords = _strip_collinear(coords, eps_rel=1e-10)
    return PqPolygon(coords)


def minkowski(a: PqPolygon, b) -> PqPolygon:
    """Minkowski sum of two simple polygons.

    Convex operands go straight through the edge merge. A non-convex
    operand is split into convex pieces; the pairwise sums are unioned
    back into a single polygon.
    """
    pt = _as_point(b)
    if pt is not None:
        return translate(a, pt[0], pt[1])
    if a.is_convex() and b.is_convex():
        return minkowski_convex(a, b)
    parts_a = convex_decomposition(a)
    parts_b = convex_decomposition(b)
    sums = [minkowski_convex(pa, pb) for pa in parts_a for pb in parts_b]
    return _union_to_polygon(sums)


def contains(poly: PqPolygon, point, tol: float = BOUNDARY_TOL) -> bool:
    """Jordan ray-casting membership test; boundary (within tol) is inside."""
    v = poly.vertices
    x, y = float(point[0]), float(point[1])
    if _boundary_distance(v, x, y) <= tol:
        return True
    n = len(v)
    inside = False
    for i in range(n):
        x1, y1 = v[i]
        x2, y2 = v[(i + 1) % n]
        if (y1 <= y < y2) or (y2 <= y < y1):
            xcross = x1 + (y - y1) / (y2 - y1) * (x2 - x1)
            if x < xcross:
                inside = not inside
    return inside


def _boundary_distance(v, x, y) -> float:
    a = v
    b = np.roll(v, -1, axis=0)
    ab = b - a
    ap = np.array([x, y]) - a
    denom = np.einsum("ij,ij->i", ab, ab)
    t = np.clip(np.einsum("ij,ij->i", ap, ab) / np.where(denom == 0, 1.0, denom),
                0.0, 1.0)
    foot = a + t[:, None] * ab
    d = np.hypot(foot[:, 0] - x, foot[:, 1] - y)
    return float(d.min())


def project(poly: PqPolygon, point):
    """Nearest boundary point for an exterior point; interior points pass through.

    Equidistant candidates resolve to the lowest edge index, so the result
    is deterministic.
    """
    p = np.asarray(point, dtype=float)
    if contains(poly, p):
        return p.copy()
    v = poly.vertices
    a = v
    b = np.roll(v, -1, axis=0)
    ab = b - a
    denom = np.einsum("ij,ij->i", ab, ab)
    t = np.clip(np.einsum("ij,ij->i", p - a, ab) / np.where(denom == 0, 1.0, denom),
                0.0, 1.0)
    feet = a + t[:, None] * ab
    d2 = np.einsum("ij,ij->i", feet - p, feet - p)
    return feet[int(np.argmin(d2))].copy()


def symmetric_difference_area(a: PqPolygon, b: PqPolygon) -> float:
    """Area of the symmetric difference of two polygons (comparison metric)."""
    ga = _ShapelyPolygon(np.asarray(a.vertices))
    gb = _ShapelyPolygon(np.asarray(b.vertices))
    return float(ga.symmetric_difference(gb).area)
