"""Ring-on-post cross-section, rim shaping and triangulation.

The computation window is the half-plane meridian section ``r >= 0`` of the
axisymmetric structure: a dielectric ring of rectangular section (optionally
with a circular-arc rim) sitting on a straight post that runs the full window
height, surrounded by vacuum and closed by a PEC wall.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np
import triangle

from .constants import C_LIGHT
from .materials import material_lookup


class CouplingImpossible(ValueError):
    pass


class InvalidGeometry(ValueError):
    pass


class MeshFailure(RuntimeError):
    pass


REGIONS = ("vacuum", "ring", "post")
VACUUM, RING, POST = 0, 1, 2
BOUNDARY_TAGS = ("outer-wall", "axis")


def rim_ratio(prism_index, resonator_index):
    """Meridian-to-equatorial radius ratio of a prism-coupled spheroidal rim."""
    if not resonator_index > 1.0:
        raise CouplingImpossible("resonator index must exceed 1")
    if not prism_index > resonator_index:
        raise CouplingImpossible(
            f"prism index {prism_index} does not exceed resonator index {resonator_index}"
        )
    return (prism_index**2 - resonator_index**2) / prism_index**2


@dataclass(frozen=True)
class RingGeometry:
    """Dimensions in metres. ``rho = inf`` is a cylindrical rim."""

    R: float
    R_in: float
    h: float
    rho: float = math.inf
    post_outer_radius: float = None
    ring_material: str = "lithium-niobate"
    post_material: str = "fused-silica"

    def __post_init__(self):
        if self.post_outer_radius is None:
            object.__setattr__(self, "post_outer_radius", self.R_in)
        self.validate()

    def validate(self):
        if not (0 < self.post_outer_radius <= self.R_in < self.R):
            raise InvalidGeometry(
                "need 0 < post_outer_radius <= R_in < R, got "
                f"{self.post_outer_radius}, {self.R_in}, {self.R}"
            )
        if not self.h > 0:
            raise InvalidGeometry("ring height must be positive")
        if not self.rho > 0:
            raise InvalidGeometry("rim curvature radius must be positive or inf")
        if math.isfinite(self.rho):
            r_face = self._rim_face_radius()
            if r_face <= self.R_in:
                raise InvalidGeometry("rim arc cuts through the inner radius")

    def _rim_face_radius(self):
        # radius where the rim meets the flat faces
        rho, half = self.rho, self.h / 2
        if rho >= half:
            return self.R - rho + math.sqrt(rho**2 - half**2)
        return self.R - rho

    @property
    def width(self):
        return self.R - self.R_in

    @property
    def thinnest_feature(self):
        return min(self.h, self.width)

    def cross_section_area(self):
        """Exact meridian area of the ring (rim arc included)."""
        area = self.width * self.h
        if not math.isfinite(self.rho):
            return area
        rho, half = self.rho, self.h / 2
        if rho >= half:
            # circular segment beyond the chord minus the corner rectangle
            theta = math.asin(half / rho)
            segment = rho**2 * theta - half * math.sqrt(rho**2 - half**2)
            cut = (self.R - self._rim_face_radius()) * self.h
            return area - cut + segment
        corner = (1 - math.pi / 4) * rho**2
        return area - 2 * corner

    def ring_volume(self):
        """Revolved ring volume (Pappus), exact for the polygon-free profile."""
        return 2 * math.pi * _ring_centroid_r(self) * self.cross_section_area()

    def with_rim(self, rho):
        return replace(self, rho=rho)


def _ring_centroid_r(geom):
    pts = _ring_outline(geom, 512)
    return _polygon_centroid(pts)[0]


def design_rim(geometry, prism, resonator_index=None):
    """Return ``geometry`` with the rim radius set for prism coupling.

    ``prism`` is a material record or name; the ring's extraordinary optical
    index is used unless ``resonator_index`` is given.
    """
    prism = material_lookup(prism)
    if resonator_index is None:
        resonator_index = material_lookup(geometry.ring_material).n_opt_e
    ratio = rim_ratio(prism.n_opt_e, resonator_index)
    return replace(geometry, rho=geometry.R * ratio)


def reference_geometry(**overrides):
    """Lithium niobate design ring: h = 292 um, R_in = 2.48 mm, R = 2.9 mm."""
    params = dict(R=2.9e-3, R_in=2.48e-3, h=292e-6, rho=568e-6)
    params.update(overrides)
    return RingGeometry(**params)


# -- profile ---------------------------------------------------------------


def _ring_outline_upper(geom, rim_segments):
    """Upper half (z >= 0) of the ring outline, from (R_in, 0) round to (R_in, h/2)."""
    half = geom.h / 2
    start = (geom.R_in, 0.0)
    top_in = (geom.R_in, half)
    if not math.isfinite(geom.rho):
        return np.array([start, (geom.R, 0.0), (geom.R, half), top_in])
    rho = geom.rho
    n = max(int(math.ceil(rim_segments / 2)), 4)
    if rho >= half:
        # arc centred on the equator, apex at r = R, clipped by the faces
        theta = np.linspace(0.0, math.asin(half / rho), n + 1)
        arc = np.column_stack([geom.R - rho + rho * np.cos(theta), rho * np.sin(theta)])
        arc[-1, 1] = half
    else:
        # quarter-round corner tangent to the top face and the apex line
        theta = np.linspace(0.0, math.pi / 2, n + 1)
        arc = np.column_stack(
            [geom.R - rho + rho * np.cos(theta), half - rho + rho * np.sin(theta)]
        )
        arc = np.vstack([[(geom.R, 0.0)], arc])
    return np.vstack([[start], arc, [top_in]])


def _ring_outline(geom, rim_segments):
    """Counter-clockwise closed ring polygon in the (r, z) plane."""
    upper = _ring_outline_upper(geom, rim_segments)
    lower = (upper[1:-1] * np.array([1.0, -1.0]))[::-1]
    pts = np.vstack([[(geom.R_in, -geom.h / 2)], lower, upper[1:]])
    return _drop_collinear(pts)


def _drop_collinear(pts, tol=1e-12):
    keep = []
    n = len(pts)
    for i in range(n):
        a, b, c = pts[i - 1], pts[i], pts[(i + 1) % n]
        cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0])
        if abs(cross) > tol * np.hypot(*(c - a)) ** 2:
            keep.append(i)
    return pts[keep] + 0.0


def window_extent(geom, margin):
    """(r_max, z_max) of the computation window for a given vacuum margin."""
    return geom.R + margin, geom.h / 2 + margin


def default_margin(target_frequency_hz, wavelengths=1.5):
    return wavelengths * C_LIGHT / target_frequency_hz


@dataclass(frozen=True)
class Profile:
    """Closed polylines of the three regions and the window bounds."""

    geometry: RingGeometry
    ring: np.ndarray
    post: np.ndarray
    window: np.ndarray
    margin: float
    rim_segments: int = 32

    @property
    def r_max(self):
        return float(self.window[:, 0].max())

    @property
    def z_max(self):
        return float(self.window[:, 1].max())

    def polylines(self):
        return {"ring": self.ring, "post": self.post, "window": self.window}

    def region_areas(self):
        ring = _polygon_area(self.ring)
        post = _polygon_area(self.post)
        window = _polygon_area(self.window)
        return {"ring": ring, "post": post, "vacuum": window - ring - post}

    def to_csv(self, path):
        lines = ["region,vertex,r_m,z_m"]
        for name, poly in self.polylines().items():
            closed = np.vstack([poly, poly[:1]])
            for i, (r, z) in enumerate(closed):
                lines.append(f"{name},{i},{r:.9e},{z:.9e}")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def cross_section_profile(geometry, rim_segments=32, margin=None, target_frequency_hz=100e9):
    """Polygonal region outlines for meshing.

    The vacuum margin defaults to 1.5 free-space wavelengths at
    ``target_frequency_hz``.
    """
    geometry.validate()
    if math.isfinite(geometry.rho) and rim_segments < 8:
        raise InvalidGeometry("rim_segments must be >= 8 for a curved rim")
    if margin is None:
        margin = default_margin(target_frequency_hz)
    r_max, z_max = window_extent(geometry, margin)
    ring = _ring_outline(geometry, rim_segments)
    rp = geometry.post_outer_radius
    post = np.array([(0.0, -z_max), (rp, -z_max), (rp, z_max), (0.0, z_max)])
    window = np.array([(0.0, -z_max), (r_max, -z_max), (r_max, z_max), (0.0, z_max)])
    return Profile(geometry, ring, post, window, margin, rim_segments)


def _polygon_area(pts):
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _polygon_centroid(pts):
    x, y = pts[:, 0], pts[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = cross.sum() / 2
    return np.array([((x + xn) * cross).sum() / (6 * a), ((y + yn) * cross).sum() / (6 * a)])


# -- mesh --------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Mesh:
    """Linear triangle mesh of the meridian window.

    ``region`` holds one of :data:`REGIONS` indices per triangle;
    ``boundary_edges`` lists node pairs on the window border with
    ``boundary_tag`` 0 (outer wall) or 1 (axis).
    """

    nodes: np.ndarray
    triangles: np.ndarray
    region: np.ndarray
    boundary_edges: np.ndarray
    boundary_tag: np.ndarray
    profile: Profile = None
    target_edge_length: float = None
    mirror_node: np.ndarray = None
    n_half_nodes: int = None
    n_half_triangles: int = None
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def symmetric(self):
        return self.mirror_node is not None

    def upper_half(self):
        """Sub-mesh of the triangles with z >= 0 (nodes keep their indices)."""
        if not self.symmetric:
            raise MeshFailure("mesh was not built mirror-symmetric")
        k = self.n_half_triangles
        tris = self.triangles[:k]
        edges, tags = _boundary_edges(self.nodes[: self.n_half_nodes], tris, self.nodes[:, 0].max())
        return Mesh(self.nodes[: self.n_half_nodes], tris, self.region[:k], edges, tags, self.profile, self.target_edge_length)

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def areas(self):
        if "areas" not in self._cache:
            p = self.nodes[self.triangles]
            d1 = p[:, 1] - p[:, 0]
            d2 = p[:, 2] - p[:, 0]
            self._cache["areas"] = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        return self._cache["areas"]

    def centroids(self):
        return self.nodes[self.triangles].mean(axis=1)

    def edge_lengths(self):
        p = self.nodes[self.triangles]
        return np.linalg.norm(p - np.roll(p, -1, axis=1), axis=2)

    def region_area(self, name):
        return float(self.areas()[self.region == REGIONS.index(name)].sum())

    def axis_nodes(self):
        return np.unique(self.boundary_edges[self.boundary_tag == 1])

    def wall_nodes(self):
        return np.unique(self.boundary_edges[self.boundary_tag == 0])

    def locate(self, r, z):
        """Index of the triangle containing (r, z) and its barycentric weights.

        Returns ``(-1, None)`` when the point lies outside the mesh.
        """
        finder = self._cache.get("finder")
        if finder is None:
            finder = _TriangleFinder(self)
            self._cache["finder"] = finder
        return finder(r, z)

    def to_vtk(self, path, point_data=None, cell_data=None, title="ring cross-section"):
        from .vtk import write_unstructured_grid

        cells = {"region": self.region.astype(int)}
        if cell_data:
            cells.update(cell_data)
        write_unstructured_grid(path, self.nodes, self.triangles, point_data or {}, cells, title)


class _TriangleFinder:
    def __init__(self, mesh):
        from scipy.spatial import cKDTree

        self.mesh = mesh
        self.tree = cKDTree(mesh.centroids())
        self.k = min(16, mesh.n_triangles)

    def __call__(self, r, z):
        mesh = self.mesh
        _, cand = self.tree.query([r, z], k=self.k)
        cand = np.atleast_1d(cand)
        for tri in cand:
            bary = _barycentric(mesh.nodes[mesh.triangles[tri]], r, z)
            if bary.min() >= -1e-10:
                return int(tri), bary
        # brute force fallback for slivers next to very large neighbours
        p = mesh.nodes[mesh.triangles]
        for tri in range(mesh.n_triangles):
            bary = _barycentric(p[tri], r, z)
            if bary.min() >= -1e-10:
                return tri, bary
        return -1, None


def _barycentric(p, r, z):
    t = np.array([[p[0, 0] - p[2, 0], p[1, 0] - p[2, 0]], [p[0, 1] - p[2, 1], p[1, 1] - p[2, 1]]])
    l1, l2 = np.linalg.solve(t, [r - p[2, 0], z - p[2, 1]])
    return np.array([l1, l2, 1.0 - l1 - l2])


class _PSLG:
    """Planar straight-line graph with vertex merging and collinear splitting."""

    def __init__(self, tol):
        self.tol = tol
        self.vertices = []
        self._index = {}
        self.lines = []  # (i, j, local edge length)

    def vertex(self, p):
        key = (round(p[0] / self.tol), round(p[1] / self.tol))
        if key not in self._index:
            self._index[key] = len(self.vertices)
            self.vertices.append((float(p[0]), float(p[1])))
        return self._index[key]

    def polyline(self, pts, edge, closed=True):
        ids = [self.vertex(p) for p in pts]
        n = len(ids) if closed else len(ids) - 1
        for k in range(n):
            a, b = ids[k], ids[(k + 1) % len(ids)]
            if a != b:
                self.lines.append((a, b, edge))

    def build(self):
        verts = np.array(self.vertices)
        pieces = {}
        for a, b, edge in self.lines:
            pa, pb = verts[a], verts[b]
            d = pb - pa
            length = np.hypot(*d)
            # split at every vertex lying on the segment interior
            rel = verts - pa
            t = rel @ d / length**2
            dist = np.abs(rel[:, 0] * d[1] - rel[:, 1] * d[0]) / length
            on = np.where((dist < self.tol) & (t > 1e-9) & (t < 1 - 1e-9))[0]
            chain = [a] + [int(i) for i in on[np.argsort(t[on])]] + [b]
            for u, v in zip(chain[:-1], chain[1:]):
                key = (min(u, v), max(u, v))
                pieces[key] = min(edge, pieces.get(key, math.inf))
        points = list(map(tuple, verts))
        segments = []
        for (u, v), edge in sorted(pieces.items()):
            pu, pv = np.array(points[u]), np.array(points[v])
            n = max(1, int(math.ceil(np.hypot(*(pv - pu)) / edge - 1e-9)))
            prev = u
            for k in range(1, n):
                points.append(tuple(pu + (pv - pu) * k / n))
                cur = len(points) - 1
                segments.append((prev, cur))
                prev = cur
            segments.append((prev, v))
        return np.array(points), np.array(segments)


def _equilateral_area(edge):
    return math.sqrt(3) / 4 * edge**2


def _triangulate(points, segments, regions, min_angle):
    try:
        out = triangle.triangulate(
            {"vertices": points, "segments": segments, "regions": np.array(regions)},
            f"pq{min_angle:g}aAQ",
        )
    except Exception as exc:  # triangle raises bare RuntimeError on bad input
        raise MeshFailure(f"triangulation failed: {exc}") from exc
    if "triangles" not in out or len(out["triangles"]) == 0:
        raise MeshFailure("triangulation produced no elements")
    attr = out["triangle_attributes"][:, 0].round().astype(int)
    return out["vertices"].copy(), out["triangles"].astype(np.int64), attr


def _signed_area2(nodes, tris):
    p = nodes[tris]
    return (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (p[:, 1, 1] - p[:, 0, 1]) * (
        p[:, 2, 0] - p[:, 0, 0]
    )


def _mirror(nodes, tris, region, tol):
    """Reflect an upper-half mesh through z = 0.

    Returns the full nodes, triangles, regions and the mirror map
    (node -> reflected node). The first ``len(tris)`` triangles are the
    upper half; triangle ``k + len(tris)`` is the reflection of ``k``.
    """
    nodes = nodes.copy()
    nodes[np.abs(nodes[:, 1]) < tol, 1] = 0.0
    on_plane = nodes[:, 1] == 0.0
    n = len(nodes)
    off = np.flatnonzero(~on_plane)
    mirror = np.arange(n)
    mirror[off] = n + np.arange(len(off))
    low = nodes[off] * np.array([1.0, -1.0])
    full_nodes = np.vstack([nodes, low])
    full_mirror = np.concatenate([mirror, off])
    low_tris = mirror[tris][:, [0, 2, 1]]
    return (
        full_nodes,
        np.vstack([tris, low_tris]),
        np.concatenate([region, region]),
        full_mirror,
    )


def generate_mesh(profile, target_edge_length, outer_edge_length=None, halo=None, min_angle=28.0):
    """Conforming, mirror-symmetric triangulation of a :class:`Profile`.

    The upper half ``z >= 0`` is triangulated and reflected, so every node
    has an exact mirror image. ``target_edge_length`` governs the ring and a
    vacuum halo of width ``halo`` around it (default: twice the ring
    height); elsewhere edges grow up to ``outer_edge_length`` (default four
    times the target).
    """
    geom = profile.geometry
    h = float(target_edge_length)
    if not h > 0:
        raise MeshFailure("target edge length must be positive")
    if h >= geom.thinnest_feature:
        raise MeshFailure(
            f"edge length {h:.3g} m is not smaller than the thinnest ring feature "
            f"{geom.thinnest_feature:.3g} m"
        )
    outer = 4 * h if outer_edge_length is None else float(outer_edge_length)
    if halo is None:
        halo = 2 * geom.h
    r_max, z_max = profile.r_max, profile.z_max
    rp = geom.post_outer_radius
    halo_r0 = max(rp, geom.R_in - halo)
    halo_r1 = min(r_max, geom.R + halo)
    halo_z = min(z_max, geom.h / 2 + halo)

    tol = 1e-9 * max(r_max, z_max)
    pslg = _PSLG(tol=tol)
    pslg.polyline([(0, 0), (r_max, 0), (r_max, z_max), (0, z_max)], outer)
    pslg.polyline([(0, 0), (rp, 0), (rp, z_max), (0, z_max)], outer)
    pslg.polyline([(halo_r0, 0), (halo_r1, 0), (halo_r1, halo_z), (halo_r0, halo_z)], h)
    upper_ring = _ring_outline_upper(geom, profile.rim_segments)
    pslg.polyline(upper_ring, h)
    # equator segment inside the ring keeps the mirror plane resolved
    points, segments = pslg.build()

    ring_pt = _polygon_centroid(upper_ring)
    fine_post = rp >= halo_r0 - 1e-12
    regions = [
        [ring_pt[0], ring_pt[1], RING, _equilateral_area(h)],
        [0.5 * rp, 0.5 * z_max, POST, _equilateral_area(h if fine_post else outer)],
        # halo attribute is offset by 10 and folded back into vacuum below
        [0.5 * (geom.R + halo_r1), 0.25 * geom.h, VACUUM + 10, _equilateral_area(1.2 * h)],
    ]
    if halo_z < z_max:
        regions.append([0.5 * (halo_r0 + halo_r1), 0.5 * (halo_z + z_max), VACUUM, _equilateral_area(outer)])
    elif halo_r1 < r_max:
        regions.append([0.5 * (halo_r1 + r_max), 0.5 * z_max, VACUUM, _equilateral_area(outer)])

    nodes, tris, attr = _triangulate(points, segments, regions, min_angle)
    region = np.where(attr >= 10, attr - 10, attr)
    signed = _signed_area2(nodes, tris)
    tris[signed < 0] = tris[signed < 0][:, [0, 2, 1]]
    nodes[np.abs(nodes[:, 0]) < tol, 0] = 0.0
    if (nodes[:, 0] < 0).any() or (nodes[:, 1] < -tol).any():
        raise MeshFailure("half mesh leaves the r >= 0, z >= 0 quadrant")
    if (np.abs(signed) <= 1e-16 * r_max * z_max).any():
        raise MeshFailure("degenerate triangles in mesh")

    half_nodes = len(nodes)
    nodes, tris, region, mirror = _mirror(nodes, tris, region, tol)
    edges, tags = _boundary_edges(nodes, tris, r_max)
    return Mesh(
        nodes,
        tris,
        region,
        edges,
        tags,
        profile,
        h,
        mirror_node=mirror,
        n_half_nodes=half_nodes,
        n_half_triangles=len(tris) // 2,
    )


def _boundary_edges(nodes, tris, r_max):
    e = np.vstack([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    e.sort(axis=1)
    uniq, counts = np.unique(e, axis=0, return_counts=True)
    border = uniq[counts == 1]
    on_axis = (np.abs(nodes[border[:, 0], 0]) < 1e-12 * r_max) & (
        np.abs(nodes[border[:, 1], 0]) < 1e-12 * r_max
    )
    return border, on_axis.astype(int)


def cavity_mesh(radius, height, edge_length, min_angle=28.0):
    """Vacuum-only, mirror-symmetric mesh of a closed cylinder ``r < radius, |z| < height/2``."""
    if not (radius > 0 and height > 0 and 0 < edge_length < min(radius, height)):
        raise MeshFailure("cavity dimensions and edge length must be positive, edge < size")
    half = height / 2
    tol = 1e-9 * max(radius, height)
    pslg = _PSLG(tol=tol)
    pslg.polyline([(0, 0), (radius, 0), (radius, half), (0, half)], edge_length)
    points, segments = pslg.build()
    area = _equilateral_area(edge_length)
    nodes, tris, _ = _triangulate(points, segments, [[radius / 2, half / 2, VACUUM, area]], min_angle)
    signed = _signed_area2(nodes, tris)
    tris[signed < 0] = tris[signed < 0][:, [0, 2, 1]]
    nodes[np.abs(nodes[:, 0]) < tol, 0] = 0.0
    region = np.full(len(tris), VACUUM)
    half_nodes = len(nodes)
    nodes, tris, region, mirror = _mirror(nodes, tris, region, tol)
    edges, tags = _boundary_edges(nodes, tris, radius)
    return Mesh(nodes, tris, region, edges, tags, None, edge_length, mirror, half_nodes, len(tris) // 2)


def refine(mesh):
    """Uniform red refinement: every triangle split into four, edges halved.

    Tags are inherited; boundary edges are split in two. Mirror symmetry
    is preserved by refining the upper half and reflecting it again.
    """
    if not mesh.symmetric:
        return _refine_plain(mesh)
    k = mesh.n_half_triangles
    half = Mesh(mesh.nodes[: mesh.n_half_nodes], mesh.triangles[:k], mesh.region[:k], np.zeros((0, 2), int), np.zeros(0, int))
    fine = _refine_plain(half)
    r_max = mesh.nodes[:, 0].max()
    nodes, tris, region, mirror = _mirror(fine.nodes, fine.triangles, fine.region, 1e-12 * r_max)
    edges, tags = _boundary_edges(nodes, tris, r_max)
    target = None if mesh.target_edge_length is None else mesh.target_edge_length / 2
    return Mesh(nodes, tris, region, edges, tags, mesh.profile, target, mirror, len(fine.nodes), len(tris) // 2)


def _refine_plain(mesh):
    tris = mesh.triangles
    e = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    e.sort(axis=1)
    uniq, inv = np.unique(e, axis=0, return_inverse=True)
    inv = inv.ravel().reshape(3, -1).T + mesh.n_nodes
    nodes = np.vstack([mesh.nodes, 0.5 * (mesh.nodes[uniq[:, 0]] + mesh.nodes[uniq[:, 1]])])
    a, b, c = tris.T
    ab, bc, ca = inv.T
    new = np.concatenate(
        [
            np.column_stack([a, ab, ca]),
            np.column_stack([ab, b, bc]),
            np.column_stack([ca, bc, c]),
            np.column_stack([ab, bc, ca]),
        ]
    )
    region = np.tile(mesh.region, 4)
    key = {tuple(p): k for k, p in enumerate(uniq)}
    edges, tags = [], []
    for (u, v), tag in zip(mesh.boundary_edges, mesh.boundary_tag):
        mid = key[(min(u, v), max(u, v))] + mesh.n_nodes
        edges += [(u, mid), (mid, v)]
        tags += [tag, tag]
    edges = np.sort(np.array(edges, dtype=np.int64).reshape(-1, 2), axis=1)
    target = None if mesh.target_edge_length is None else mesh.target_edge_length / 2
    return Mesh(nodes, new, region, edges, np.array(tags), mesh.profile, target)
