"""Two-region polygonal meshes with classified face sets.

A mesh covers a poroelastic region ("p") and/or a free-flow region ("f").
Faces are *element interfaces*: intersections of neighboring cell
boundaries.  Where the two regions meet with non-matching traces, the
common line is overlaid and every overlap interval becomes its own
interface face, so that each face always has a well-defined pair of
adjacent cells.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Voronoi

GEOM_TOL = 1e-10

BOUNDARY_TAGS = ("dirichlet_p", "neumann_p", "dirichlet_f", "neumann_f")
FACE_TAGS = ("interior_p", "interior_f", "interface") + BOUNDARY_TAGS


class MeshError(Exception):
    """Raised for invalid geometry, connectivity or mesh files."""


# ---------------------------------------------------------------------------
# polygon helpers
# ---------------------------------------------------------------------------

def polygon_area(pts):
    """Signed (shoelace) area of a closed polygon given as (n, 2) array."""
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)


def polygon_centroid(pts):
    """Area centroid of a simple polygon."""
    x, y = pts[:, 0], pts[:, 1]
    cr = x * np.roll(y, -1) - np.roll(x, -1) * y
    a = 0.5 * np.sum(cr)
    cx = np.sum((x + np.roll(x, -1)) * cr) / (6.0 * a)
    cy = np.sum((y + np.roll(y, -1)) * cr) / (6.0 * a)
    return np.array([cx, cy])


def polygon_diameter(pts):
    """Maximal pairwise vertex distance."""
    d = pts[:, None, :] - pts[None, :, :]
    return float(np.sqrt((d ** 2).sum(-1)).max())


def is_simple_polygon(pts):
    """Check that no two non-adjacent edges of the closed loop intersect."""
    n = len(pts)
    if n < 3:
        return False
    segs = [(pts[i], pts[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            if _segments_intersect(*segs[i], *segs[j]):
                return False
    return True


def _segments_intersect(a0, a1, b0, b1):
    def orient(p, q, r):
        return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])

    d1 = orient(b0, b1, a0)
    d2 = orient(b0, b1, a1)
    d3 = orient(a0, a1, b0)
    d4 = orient(a0, a1, b1)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0))


def overlay_intervals(breaks_a, breaks_b, tol=GEOM_TOL):
    """Overlay two 1D partitions given by sorted breakpoints.

    Both partitions must span the same interval (within ``tol``); the
    result is the sorted list of merged breakpoints.
    """
    a = np.asarray(breaks_a, float)
    b = np.asarray(breaks_b, float)
    if abs(a[0] - b[0]) > tol or abs(a[-1] - b[-1]) > tol:
        raise MeshError(
            f"interval endpoints disagree: [{a[0]}, {a[-1]}] vs [{b[0]}, {b[-1]}]")
    merged = np.sort(np.concatenate([a, b]))
    keep = np.concatenate([[True], np.diff(merged) > tol])
    return merged[keep]


# ---------------------------------------------------------------------------
# mesh data structures
# ---------------------------------------------------------------------------

@dataclass
class Face:
    """Oriented edge segment of the mesh skeleton.

    ``cells`` holds one id for boundary faces and two for interior or
    interface faces; the stored unit normal points from ``cells[0]`` to
    ``cells[1]`` (outward for boundary faces).  Interface faces store the
    p-cell first, so the normal is n_p.
    """

    a: np.ndarray
    b: np.ndarray
    cells: tuple
    tag: str
    verts: tuple | None = None
    normal: np.ndarray = field(default=None, repr=False)
    length: float = 0.0

    def __post_init__(self):
        d = self.b - self.a
        self.length = float(np.hypot(*d))
        if self.normal is None:
            self.normal = np.array([d[1], -d[0]]) / self.length

    @property
    def midpoint(self):
        return 0.5 * (self.a + self.b)

    @property
    def is_boundary(self):
        return len(self.cells) == 1


class PolyMesh:
    """Immutable polygonal mesh with per-face classification.

    Parameters
    ----------
    vertices : (nv, 2) array
    cells : list of int arrays, counter-clockwise vertex loops
    cell_region : length-nc sequence of "p" / "f"
    faces : list of Face
    """

    def __init__(self, vertices, cells, cell_region, faces):
        self.vertices = np.asarray(vertices, float)
        self.cells = [np.asarray(c, int) for c in cells]
        self.cell_region = np.asarray(cell_region, dtype="<U1")
        self.faces = faces
        n = len(self.cells)
        self.cell_area = np.empty(n)
        self.cell_centroid = np.empty((n, 2))
        self.cell_diameter = np.empty(n)
        for i, c in enumerate(self.cells):
            pts = self.vertices[c]
            self.cell_area[i] = polygon_area(pts)
            self.cell_centroid[i] = polygon_centroid(pts)
            self.cell_diameter[i] = polygon_diameter(pts)
        self.cell_faces = [[] for _ in range(n)]
        for k, f in enumerate(self.faces):
            for c in f.cells:
                self.cell_faces[c].append(k)
        self._validate()

    # -- queries ------------------------------------------------------

    @property
    def n_cells(self):
        return len(self.cells)

    def region_cells(self, region):
        return np.flatnonzero(self.cell_region == region)

    @property
    def p_cells(self):
        return self.region_cells("p")

    @property
    def f_cells(self):
        return self.region_cells("f")

    def faces_with_tag(self, *tags):
        return [k for k, f in enumerate(self.faces) if f.tag in tags]

    @property
    def interface_faces(self):
        return self.faces_with_tag("interface")

    def h_max(self, region=None):
        idx = slice(None) if region is None else self.region_cells(region)
        return float(self.cell_diameter[idx].max())

    def cell_points(self, i):
        return self.vertices[self.cells[i]]

    def region_area(self, region):
        return float(self.cell_area[self.region_cells(region)].sum())

    # -- validation ---------------------------------------------------

    def _validate(self):
        for i, c in enumerate(self.cells):
            if len(c) < 3:
                raise MeshError(f"cell {i}: fewer than 3 vertices")
            if c.min() < 0 or c.max() >= len(self.vertices):
                raise MeshError(f"cell {i}: vertex index out of range")
            pts = self.vertices[c]
            if self.cell_area[i] <= 0:
                raise MeshError(f"cell {i}: non-positive area (not ccw?)")
            if not is_simple_polygon(pts):
                raise MeshError(f"cell {i}: self-intersecting polygon")
            if self.cell_region[i] not in ("p", "f"):
                raise MeshError(f"cell {i}: unknown region {self.cell_region[i]!r}")
        self.check_star_shaped()
        for k, f in enumerate(self.faces):
            if f.tag not in FACE_TAGS:
                raise MeshError(f"face {k}: unknown tag {f.tag!r}")
            if f.tag == "interface":
                if len(f.cells) != 2:
                    raise MeshError(f"face {k}: interface face needs 2 cells")
                rp, rf = self.cell_region[f.cells[0]], self.cell_region[f.cells[1]]
                if (rp, rf) != ("p", "f"):
                    raise MeshError(f"face {k}: interface must go p -> f")
            elif f.tag.startswith("interior"):
                if len(f.cells) != 2:
                    raise MeshError(f"face {k}: interior face needs 2 cells")
                r = f.tag[-1]
                if not all(self.cell_region[c] == r for c in f.cells):
                    raise MeshError(f"face {k}: region mismatch for {f.tag}")
            else:
                if len(f.cells) != 1:
                    raise MeshError(f"face {k}: boundary face needs 1 cell")
                if self.cell_region[f.cells[0]] != f.tag[-1]:
                    raise MeshError(f"face {k}: region mismatch for {f.tag}")

    def check_star_shaped(self):
        """Every cell must be star-shaped w.r.t. its centroid.

        This is what the centroid-fan sub-tessellation used for quadrature
        requires; violations are hard errors.
        """
        for i, c in enumerate(self.cells):
            pts = self.vertices[c]
            ctr = self.cell_centroid[i]
            v0 = pts
            v1 = np.roll(pts, -1, axis=0)
            cross = (v0[:, 0] - ctr[0]) * (v1[:, 1] - ctr[1]) \
                - (v0[:, 1] - ctr[1]) * (v1[:, 0] - ctr[0])
            if np.any(cross <= GEOM_TOL * self.cell_area[i]):
                raise MeshError(f"cell {i}: not star-shaped w.r.t. centroid")

    def cell_perimeter(self, i):
        pts = self.vertices[self.cells[i]]
        return float(np.sum(np.hypot(*(np.roll(pts, -1, 0) - pts).T)))


# ---------------------------------------------------------------------------
# mesh construction from raw cells
# ---------------------------------------------------------------------------

def _default_tagger(region, midpoint, normal):
    return "dirichlet"


def build_mesh(vertices, cells, cell_region, boundary_tagger=None,
               edge_tags=None):
    """Classify faces of a raw cell soup and build a :class:`PolyMesh`.

    ``boundary_tagger(region, midpoint, normal)`` must return
    ``"dirichlet"`` or ``"neumann"`` for outer boundary edges.
    Alternatively ``edge_tags`` maps sorted vertex pairs to full tags
    (as stored in mesh files).  Edges shared by a p- and an f-cell, or
    single-sided edges that overlap an opposite-region edge collinearly,
    become interface faces via a 1D overlay.
    """
    vertices = np.asarray(vertices, float)
    cell_region = np.asarray(cell_region, dtype="<U1")
    if boundary_tagger is None:
        boundary_tagger = _default_tagger

    edge_map = {}
    for ci, loop in enumerate(cells):
        loop = np.asarray(loop, int)
        for k in range(len(loop)):
            v0, v1 = int(loop[k]), int(loop[(k + 1) % len(loop)])
            edge_map.setdefault((min(v0, v1), max(v0, v1)), []).append((ci, v0, v1))

    faces = []
    hanging = []  # single-sided edges, candidates for interface overlay
    for (vmin, vmax), owners in edge_map.items():
        if len(owners) > 2:
            raise MeshError(f"edge ({vmin},{vmax}) shared by {len(owners)} cells")
        if len(owners) == 2:
            (c0, a0, b0), (c1, _, _) = owners
            r0, r1 = cell_region[c0], cell_region[c1]
            if r0 == r1:
                faces.append(Face(vertices[a0], vertices[b0], (c0, c1),
                                  f"interior_{r0}", verts=(a0, b0)))
            else:
                cp, cf = (c0, c1) if r0 == "p" else (c1, c0)
                ap, bp = _directed_edge(cells[cp], vmin, vmax)
                faces.append(Face(vertices[ap], vertices[bp], (cp, cf),
                                  "interface", verts=(ap, bp)))
        else:
            hanging.append(owners[0])

    boundary, iface = _split_hanging(vertices, cells, cell_region, hanging,
                                     edge_tags)
    faces.extend(iface)

    untagged = []
    for ci, v0, v1 in boundary:
        a, b = vertices[v0], vertices[v1]
        region = cell_region[ci]
        f = Face(a, b, (ci,), "dirichlet_" + region, verts=(v0, v1))
        key = (min(v0, v1), max(v0, v1))
        if edge_tags is not None:
            tag = edge_tags.get(key)
            if tag is None:
                untagged.append((ci, key))
                continue
        else:
            kind = boundary_tagger(region, f.midpoint, f.normal)
            tag = f"{kind}_{region}"
        if tag not in BOUNDARY_TAGS or tag[-1] != region:
            raise MeshError(f"edge {key}: bad boundary tag {tag!r} for region {region}")
        f.tag = tag
        faces.append(f)
    if untagged:
        raise MeshError("untagged boundary edges: " +
                        ", ".join(f"cell {c} edge {e}" for c, e in untagged))

    return PolyMesh(vertices, cells, cell_region, faces)


def _directed_edge(loop, vmin, vmax):
    loop = np.asarray(loop, int)
    for k in range(len(loop)):
        v0, v1 = int(loop[k]), int(loop[(k + 1) % len(loop)])
        if {v0, v1} == {vmin, vmax}:
            return v0, v1
    raise MeshError("edge not found in cell loop")


def _split_hanging(vertices, cells, cell_region, hanging, edge_tags):
    """Separate single-sided edges into outer-boundary and interface sets.

    Interface candidates are p-side edges that overlap f-side edges on a
    common straight line; they are overlaid so every overlap interval
    becomes one interface face with exactly one p- and one f-cell.
    """
    p_edges = [(ci, v0, v1) for ci, v0, v1 in hanging if cell_region[ci] == "p"]
    f_edges = [(ci, v0, v1) for ci, v0, v1 in hanging if cell_region[ci] == "f"]
    if not p_edges or not f_edges:
        return hanging, []

    # pick candidate pairs by collinear overlap
    def seg(e):
        return vertices[e[1]], vertices[e[2]]

    used_p, used_f, pairs = set(), set(), []
    for i, pe in enumerate(p_edges):
        a0, a1 = seg(pe)
        for j, fe in enumerate(f_edges):
            b0, b1 = seg(fe)
            if _collinear_overlap(a0, a1, b0, b1):
                pairs.append((i, j))
                used_p.add(i)
                used_f.add(j)
    if not pairs:
        return hanging, []

    iface_p = [p_edges[i] for i in sorted(used_p)]
    iface_f = [f_edges[j] for j in sorted(used_f)]
    boundary = [e for k, e in enumerate(p_edges) if k not in used_p]
    boundary += [e for k, e in enumerate(f_edges) if k not in used_f]

    # common straight line: parametrize by arc length along direction d
    a0, a1 = seg(iface_p[0])
    d = (a1 - a0) / np.linalg.norm(a1 - a0)
    origin = a0

    def proj(x):
        return float(np.dot(x - origin, d))

    scale = max(abs(proj(vertices[e[k]])) for e in iface_p + iface_f for k in (1, 2))
    tol = max(scale, 1.0) * GEOM_TOL

    def line_dist(x):
        v = x - origin
        return abs(v[0] * d[1] - v[1] * d[0])

    for e in iface_p + iface_f:
        for k in (1, 2):
            if line_dist(vertices[e[k]]) > tol:
                raise MeshError(
                    f"interface traces are not collinear near cell {e[0]}")

    def intervals(edges):
        iv = []
        for ci, v0, v1 in edges:
            s0, s1 = proj(vertices[v0]), proj(vertices[v1])
            iv.append((min(s0, s1), max(s0, s1), ci))
        return sorted(iv)

    ivp, ivf = intervals(iface_p), intervals(iface_f)
    for name, iv in (("p", ivp), ("f", ivf)):
        for (s0, s1, _), (t0, t1, _) in zip(iv, iv[1:]):
            if t0 < s1 - tol:
                raise MeshError(f"{name}-side interface trace overlaps itself")
            if t0 > s1 + tol:
                raise MeshError(f"{name}-side interface trace has a gap")
    if abs(ivp[0][0] - ivf[0][0]) > tol or abs(ivp[-1][1] - ivf[-1][1]) > tol:
        raise MeshError("p-trace and f-trace of the interface do not span "
                        "the same segment")

    breaks = overlay_intervals(
        np.array([ivp[0][0]] + [s1 for _, s1, _ in ivp]),
        np.array([ivf[0][0]] + [s1 for _, s1, _ in ivf]), tol)

    # outward normal of the p side fixes n_p for every sub-segment
    pc, pv0, pv1 = iface_p[0]
    ap, bp = _directed_edge(cells[pc], min(pv0, pv1), max(pv0, pv1))
    ref = Face(vertices[ap], vertices[bp], (pc,), "dirichlet_p")
    n_p = ref.normal

    def owner(iv, s):
        for s0, s1, ci in iv:
            if s0 - tol <= s <= s1 + tol:
                return ci
        raise MeshError(f"interface point s={s} not covered")

    faces = []
    for s0, s1 in zip(breaks[:-1], breaks[1:]):
        sm = 0.5 * (s0 + s1)
        cp, cf = owner(ivp, sm), owner(ivf, sm)
        a = origin + s0 * d
        b = origin + s1 * d
        # orient segment so that (dy, -dx) reproduces n_p
        if np.dot(np.array([(b - a)[1], -(b - a)[0]]), n_p) < 0:
            a, b = b, a
        faces.append(Face(a, b, (cp, cf), "interface"))
    return boundary, faces


def _collinear_overlap(a0, a1, b0, b1, tol=GEOM_TOL):
    da = a1 - a0
    db = b1 - b0
    la, lb = np.linalg.norm(da), np.linalg.norm(db)
    scale = max(la, lb, 1.0)
    if abs(da[0] * db[1] - da[1] * db[0]) > tol * scale ** 2:
        return False
    for x in (b0, b1):
        v = x - a0
        if abs(v[0] * da[1] - v[1] * da[0]) / la > tol * scale:
            return False
    t0 = np.dot(b0 - a0, da) / la ** 2
    t1 = np.dot(b1 - a0, da) / la ** 2
    lo, hi = min(t0, t1), max(t0, t1)
    return min(hi, 1.0) - max(lo, 0.0) > tol / la


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def _norm_region_boxes(region_boxes):
    boxes = {r: tuple(map(float, b)) for r, b in region_boxes.items()}
    for r, (x0, y0, x1, y1) in boxes.items():
        if not (x1 > x0 and y1 > y0):
            raise MeshError(f"region {r!r}: empty box")
    if len(boxes) == 2:
        (x0p, y0p, x1p, y1p) = boxes["p"]
        (x0f, y0f, x1f, y1f) = boxes["f"]
        shared = (
            (abs(x1p - x0f) < GEOM_TOL and (y0p, y1p) == (y0f, y1f))
            or (abs(x1f - x0p) < GEOM_TOL and (y0p, y1p) == (y0f, y1f))
            or (abs(y1p - y0f) < GEOM_TOL and (x0p, x1p) == (x0f, x1f))
            or (abs(y1f - y0p) < GEOM_TOL and (x0p, x1p) == (x0f, x1f))
        )
        if not shared:
            raise MeshError("region boxes do not share an interface edge")
    return boxes


def _per_region(val, region):
    return val[region] if isinstance(val, dict) else val


def generate_cartesian(region_boxes, nx, ny, boundary_tagger=None):
    """Structured quadrilateral mesh, one grid per region box."""
    boxes = _norm_region_boxes(region_boxes)
    verts, cells, regions = [], [], []
    vid = {}

    def add_vertex(x, y):
        key = (round(x, 12), round(y, 12))
        if key not in vid:
            vid[key] = len(verts)
            verts.append((x, y))
        return vid[key]

    for region, (x0, y0, x1, y1) in boxes.items():
        mx, my = _per_region(nx, region), _per_region(ny, region)
        if mx < 1 or my < 1:
            raise MeshError(f"region {region!r}: need nx, ny >= 1")
        xs = np.linspace(x0, x1, mx + 1)
        ys = np.linspace(y0, y1, my + 1)
        for j in range(my):
            for i in range(mx):
                quad = [add_vertex(xs[i], ys[j]), add_vertex(xs[i + 1], ys[j]),
                        add_vertex(xs[i + 1], ys[j + 1]), add_vertex(xs[i], ys[j + 1])]
                cells.append(np.array(quad))
                regions.append(region)
    mesh = build_mesh(np.array(verts), cells, regions, boundary_tagger)
    _check_tiling(mesh, boxes)
    return mesh


def generate_triangulated(region_boxes, nx, ny, boundary_tagger=None):
    """Cartesian grid with every quad split into two triangles."""
    boxes = _norm_region_boxes(region_boxes)
    quad_mesh = generate_cartesian(region_boxes, nx, ny, boundary_tagger)
    verts = quad_mesh.vertices
    cells, regions = [], []
    for i, q in enumerate(quad_mesh.cells):
        cells.append(q[[0, 1, 2]])
        cells.append(q[[0, 2, 3]])
        regions.extend([quad_mesh.cell_region[i]] * 2)
    mesh = build_mesh(verts, cells, regions, boundary_tagger)
    _check_tiling(mesh, boxes)
    return mesh


def generate_voronoi(region_boxes, n_seeds, lloyd_iters=3, rng_seed=0,
                     boundary_tagger=None):
    """Lloyd-relaxed clipped Voronoi cells, generated per region box.

    Seeds are reflected across the four box edges, which makes the
    Voronoi cells of the original seeds coincide exactly with the
    clipped-to-box cells.  ``rng_seed`` fixes the seed cloud, so repeated
    calls produce identical meshes.
    """
    boxes = _norm_region_boxes(region_boxes)
    rng = np.random.default_rng(rng_seed)
    verts, cells, regions = [], [], []
    vid = {}

    def add_vertex(x, y):
        key = (round(x, 9), round(y, 9))
        if key not in vid:
            vid[key] = len(verts)
            verts.append((x, y))
        return vid[key]

    for region, box in boxes.items():
        n = _per_region(n_seeds, region)
        if n < 1:
            raise MeshError(f"region {region!r}: need at least 1 seed")
        polys = _voronoi_cells(box, n, lloyd_iters, rng)
        for poly in polys:
            cells.append(np.array([add_vertex(x, y) for x, y in poly]))
            regions.append(region)
    mesh = build_mesh(np.array(verts), cells, regions, boundary_tagger)
    _check_tiling(mesh, boxes)
    return mesh


def _voronoi_cells(box, n, lloyd_iters, rng):
    x0, y0, x1, y1 = box
    pts = np.column_stack([rng.uniform(x0, x1, n), rng.uniform(y0, y1, n)])
    for _ in range(lloyd_iters + 1):
        polys = _clipped_voronoi(box, pts)
        new_pts = np.array([polygon_centroid(p) for p in polys])
        if np.allclose(new_pts, pts, atol=1e-14):
            break
        pts = new_pts
    return _clipped_voronoi(box, pts)


def _clipped_voronoi(box, pts):
    x0, y0, x1, y1 = box
    n = len(pts)
    if n == 1:
        return [np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])]
    mirrors = [pts.copy() for _ in range(4)]
    mirrors[0][:, 0] = 2 * x0 - pts[:, 0]
    mirrors[1][:, 0] = 2 * x1 - pts[:, 0]
    mirrors[2][:, 1] = 2 * y0 - pts[:, 1]
    mirrors[3][:, 1] = 2 * y1 - pts[:, 1]
    allpts = np.vstack([pts] + mirrors)
    vor = Voronoi(allpts)
    polys = []
    for i in range(n):
        reg = vor.regions[vor.point_region[i]]
        if -1 in reg or len(reg) < 3:
            raise MeshError(f"voronoi cell {i} is unbounded")
        poly = vor.vertices[reg]
        if polygon_area(poly) < 0:
            poly = poly[::-1]
        poly = _snap_to_box(poly, box)
        poly = _dedupe_loop(poly)
        if len(poly) < 3 or polygon_area(poly) <= 0:
            raise MeshError(f"voronoi cell {i} degenerated")
        polys.append(poly)
    return polys


def _snap_to_box(poly, box, tol=1e-9):
    x0, y0, x1, y1 = box
    out = poly.copy()
    for k, v in ((0, x0), (0, x1), (1, y0), (1, y1)):
        hit = np.abs(out[:, k] - v) < tol
        out[hit, k] = v
    np.clip(out[:, 0], x0, x1, out=out[:, 0])
    np.clip(out[:, 1], y0, y1, out=out[:, 1])
    return out


def _dedupe_loop(poly, tol=1e-9):
    keep = []
    n = len(poly)
    for i in range(n):
        if np.linalg.norm(poly[i] - poly[(i - 1) % n]) > tol:
            keep.append(i)
    poly = poly[keep]
    # drop collinear triples so cell edges match neighbours exactly
    out = []
    n = len(poly)
    for i in range(n):
        p0, p1, p2 = poly[i - 1], poly[i], poly[(i + 1) % n]
        d0, d1 = p1 - p0, p2 - p1
        cr = d0[0] * d1[1] - d0[1] * d1[0]
        if abs(cr) > 1e-12 * max(1.0, np.linalg.norm(p2 - p0) ** 2):
            out.append(p1)
    return np.array(out) if len(out) >= 3 else poly


def _check_tiling(mesh, boxes, rtol=1e-12):
    for region, (x0, y0, x1, y1) in boxes.items():
        want = (x1 - x0) * (y1 - y0)
        got = mesh.region_area(region)
        if abs(got - want) > rtol * want * mesh.n_cells:
            raise MeshError(
                f"region {region!r}: cells cover area {got}, box has {want}")


# ---------------------------------------------------------------------------
# file format
# ---------------------------------------------------------------------------

def save_mesh(mesh, path):
    """Write the JSON mesh file; floats carry 17 significant digits."""
    def fmt(x):
        return format(float(x), ".17g")

    lines = ['{', '"vertices": [']
    lines.append(",\n".join(f"[{fmt(x)}, {fmt(y)}]" for x, y in mesh.vertices))
    lines.append('],')
    lines.append('"cells": [')
    lines.append(",\n".join(
        '{"verts": [%s], "region": "%s"}' % (", ".join(map(str, c)), r)
        for c, r in zip(mesh.cells, mesh.cell_region)))
    lines.append('],')
    tags = []
    for f in mesh.faces:
        if f.is_boundary and f.verts is not None:
            tags.append('{"edge": [%d, %d], "tag": "%s"}' % (*f.verts, f.tag))
    lines.append('"boundary_tags": [')
    lines.append(",\n".join(tags))
    lines.append(']}')
    with open(path, "w") as fh:
        fh.write("\n".join(lines))


def load_mesh(path):
    """Read a JSON mesh file and rebuild the classified mesh."""
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise MeshError(f"{path}: not valid JSON ({exc})") from exc
    for key in ("vertices", "cells", "boundary_tags"):
        if key not in data:
            raise MeshError(f"{path}: missing key {key!r}")
    vertices = np.asarray(data["vertices"], float)
    if vertices.ndim != 2 or vertices.shape[1] != 2:
        raise MeshError(f"{path}: vertices must be an array of [x, y]")
    cells, regions = [], []
    for i, entry in enumerate(data["cells"]):
        if "verts" not in entry:
            raise MeshError(f"cell {i}: missing 'verts'")
        if "region" not in entry or entry["region"] not in ("p", "f"):
            untagged = [j for j, e in enumerate(data["cells"])
                        if e.get("region") not in ("p", "f")]
            raise MeshError(f"cells without region tag: {untagged}")
        loop = np.asarray(entry["verts"], int)
        if loop.min() < 0 or loop.max() >= len(vertices):
            raise MeshError(f"cell {i}: vertex index out of range")
        cells.append(loop)
        regions.append(entry["region"])
    edge_tags = {}
    for entry in data["boundary_tags"]:
        v0, v1 = entry["edge"]
        tag = entry["tag"]
        if tag not in BOUNDARY_TAGS:
            raise MeshError(f"edge ({v0},{v1}): unknown tag {tag!r}")
        edge_tags[(min(v0, v1), max(v0, v1))] = tag
    return build_mesh(vertices, cells, regions, edge_tags=edge_tags)


def meshes_equal(m1, m2):
    if m1.n_cells != m2.n_cells or len(m1.vertices) != len(m2.vertices):
        return False
    if not np.array_equal(m1.vertices, m2.vertices):
        return False
    if not all(np.array_equal(a, b) for a, b in zip(m1.cells, m2.cells)):
        return False
    if not np.array_equal(m1.cell_region, m2.cell_region):
        return False
    t1 = sorted((f.tag, f.verts) for f in m1.faces if f.is_boundary)
    t2 = sorted((f.tag, f.verts) for f in m2.faces if f.is_boundary)
    return t1 == t2


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

@dataclass
class RegularityReport:
    cell_ratio: np.ndarray
    max_cell_ratio: float
    max_neighbor_ratio: float
    neighbor_ratios: list


def regularity_report(mesh):
    """Shape diagnostics for the polytopic-regularity assumption.

    Per cell: max over faces F of h_K |F| / (d |S_K^F|) with S_K^F the
    centroid-fan triangle over F (d = 2 here); per interior face the
    diameter ratio of the two neighbours.
    """
    nc = mesh.n_cells
    ratio = np.zeros(nc)
    for i in range(nc):
        pts = mesh.cell_points(i)
        ctr = mesh.cell_centroid[i]
        h = mesh.cell_diameter[i]
        v0, v1 = pts, np.roll(pts, -1, axis=0)
        flen = np.hypot(*(v1 - v0).T)
        tri_area = 0.5 * np.abs(
            (v0[:, 0] - ctr[0]) * (v1[:, 1] - ctr[1])
            - (v0[:, 1] - ctr[1]) * (v1[:, 0] - ctr[0]))
        ratio[i] = np.max(h * flen / (2.0 * tri_area))
    nbr = []
    for f in mesh.faces:
        if len(f.cells) == 2:
            h0, h1 = mesh.cell_diameter[list(f.cells)]
            nbr.append(max(h0 / h1, h1 / h0))
    return RegularityReport(ratio, float(ratio.max()),
                            float(max(nbr)) if nbr else 1.0, nbr)


# ---------------------------------------------------------------------------
# interface segmentation
# ---------------------------------------------------------------------------

@dataclass
class Segment:
    a: np.ndarray
    b: np.ndarray
    s0: float
    s1: float
    face: int
    p_face: int
    f_face: int
    p_cell: int
    f_cell: int


@dataclass
class InterfaceSegmentation:
    """Arc-ordered partition of the interface into quadrature segments.

    The mesh builder already overlays the p- and f-traces, so each
    interface face is itself one sub-segment; this view adds arc
    coordinates and the common normal/tangent frame.
    """

    segments: list
    normal: np.ndarray
    tangent: np.ndarray
    length: float

    def __len__(self):
        return len(self.segments)


def interface_tangent(n_p):
    """Tangent t_p: n_p rotated by -pi/2 (angle from t_p to n_p positive)."""
    return np.array([n_p[1], -n_p[0]])


def build_interface_segmentation(mesh):
    iface = mesh.interface_faces
    if not iface:
        raise MeshError("mesh has no interface faces")
    n_p = mesh.faces[iface[0]].normal
    for k in iface:
        if not np.allclose(mesh.faces[k].normal, n_p, atol=1e-9):
            raise MeshError("interface is not a straight segment")
    t_p = interface_tangent(n_p)
    d = mesh.faces[iface[0]].b - mesh.faces[iface[0]].a
    d = d / np.linalg.norm(d)
    origin = mesh.faces[iface[0]].a

    def proj(x):
        return float(np.dot(x - origin, d))

    entries = []
    for k in iface:
        f = mesh.faces[k]
        s0, s1 = proj(f.a), proj(f.b)
        if s0 > s1:
            s0, s1 = s1, s0
        entries.append((s0, s1, k))
    entries.sort()
    smin = entries[0][0]
    total = sum(s1 - s0 for s0, s1, _ in entries)
    tol = max(abs(entries[-1][1] - smin), 1.0) * 1e-12
    for (s0, s1, _), (t0, t1, _) in zip(entries, entries[1:]):
        if abs(t0 - s1) > max(tol, GEOM_TOL):
            raise MeshError("interface faces do not partition the interface")
    segments = []
    for s0, s1, k in entries:
        f = mesh.faces[k]
        cp, cf = f.cells
        segments.append(Segment(f.a.copy(), f.b.copy(), s0 - smin, s1 - smin,
                                k, k, k, cp, cf))
    return InterfaceSegmentation(segments, n_p.copy(), t_p, total)
