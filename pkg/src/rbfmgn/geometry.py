"""Scattered-node geometry: parametric domains, node sampling, Delaunay graphs.

Domains are closed loops given either by a polar boundary formula (amoeba,
butterfly) or by a polygon (unit square, L-shape, custom). Node sets keep all
interior nodes before all boundary nodes; downstream assembly relies on that
ordering.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigurationError,
    DegenerateGeometryError,
    DuplicateNodeError,
    SamplingCapacityError,
)

POLYLINE_SEGMENTS = 512
DUPLICATE_TOL = 1e-12
CIRCUMCIRCLE_RTOL = 1e-12

DOMAIN_KINDS = ("unit_square", "amoeba", "butterfly", "l_shape", "polygon")

_SQUARE_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
_LSHAPE_VERTICES = np.array(
    [[0.0, 0.0], [2.0, 0.0], [2.0, 1.0], [1.0, 2.0], [0.0, 2.0], [1.0, 1.0]]
)


@dataclass(frozen=True)
class DomainSpec:
    """A closed 2-D domain identified by kind plus optional parameters.

    Custom polygons pass their vertex loop (counterclockwise, not repeated at
    the end) through ``params["vertices"]``; the named kinds take no params.
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in DOMAIN_KINDS:
            raise ConfigurationError(f"unknown domain kind {self.kind!r}")
        if self.kind == "polygon":
            verts = np.asarray(self.params.get("vertices", ()), dtype=float)
            if verts.ndim != 2 or verts.shape[0] < 3 or verts.shape[1] != 2:
                raise ConfigurationError(
                    "polygon domain needs params['vertices'] of shape (k >= 3, 2)"
                )

    @property
    def is_polygonal(self) -> bool:
        return self.kind in ("unit_square", "l_shape", "polygon")


def _polygon_vertices(domain: DomainSpec) -> np.ndarray:
    if domain.kind == "unit_square":
        return _SQUARE_VERTICES
    if domain.kind == "l_shape":
        return _LSHAPE_VERTICES
    return np.asarray(domain.params["vertices"], dtype=float)


def boundary_point(domain: DomainSpec, theta) -> np.ndarray:
    """Boundary point(s) at parameter ``theta``.

    Curved kinds evaluate their polar formula at the angle directly; polygonal
    kinds read ``theta / (2*pi)`` as a normalized perimeter arc parameter
    starting at the first vertex. Accepts scalars or arrays; returns shape
    ``theta.shape + (2,)``.
    """
    theta = np.asarray(theta, dtype=float)
    if domain.kind == "amoeba":
        rho = (
            np.exp(np.sin(theta)) * np.sin(2.0 * theta) ** 2
            + np.exp(np.cos(theta)) * np.cos(2.0 * theta) ** 2
        ) / 2.0
        return np.stack(
            [rho * np.cos(theta) + 1.0, rho * np.sin(theta) + 1.0], axis=-1
        )
    if domain.kind == "butterfly":
        rho = 1.0 + np.cos(theta) * np.sin(4.0 * theta)
        return np.stack(
            [0.55 * rho * np.cos(theta), 0.75 * rho * np.sin(theta)], axis=-1
        )

    verts = _polygon_vertices(domain)
    closed = np.vstack([verts, verts[:1]])
    seg = np.diff(closed, axis=0)
    lengths = np.hypot(seg[:, 0], seg[:, 1])
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    perimeter = cum[-1]
    s = (np.mod(theta, 2.0 * np.pi) / (2.0 * np.pi)) * perimeter
    idx = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(lengths) - 1)
    frac = (s - cum[idx]) / lengths[idx]
    return closed[idx] + frac[..., None] * seg[idx]


def boundary_polyline(domain: DomainSpec) -> np.ndarray:
    """Closed-loop polyline for containment and area queries.

    Polygonal kinds use their exact vertices; curved kinds are sampled at
    ``POLYLINE_SEGMENTS`` equal parameter steps. The loop is not repeated.
    """
    if domain.is_polygonal:
        return _polygon_vertices(domain)
    theta = 2.0 * np.pi * np.arange(POLYLINE_SEGMENTS) / POLYLINE_SEGMENTS
    return boundary_point(domain, theta)


def domain_area(domain: DomainSpec) -> float:
    loop = boundary_polyline(domain)
    x, y = loop[:, 0], loop[:, 1]
    return float(abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))) / 2.0)


def point_in_domain(domain: DomainSpec, points) -> np.ndarray:
    """Winding-number containment test against the boundary polyline.

    Returns a boolean array over points; points on the loop itself are not
    guaranteed either way.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    loop = boundary_polyline(domain)
    a = loop
    b = np.roll(loop, -1, axis=0)

    px = pts[:, 0][:, None]
    py = pts[:, 1][:, None]
    ax, ay = a[:, 0][None, :], a[:, 1][None, :]
    bx, by = b[:, 0][None, :], b[:, 1][None, :]

    cross = (bx - ax) * (py - ay) - (px - ax) * (by - ay)
    up = (ay <= py) & (by > py) & (cross > 0.0)
    down = (ay > py) & (by <= py) & (cross < 0.0)
    wn = up.sum(axis=1).astype(int) - down.sum(axis=1).astype(int)
    return wn != 0


@dataclass
class NodeSet:
    """Scattered nodes with interior entries first, boundary entries last."""

    coords: np.ndarray
    is_boundary: np.ndarray

    def __post_init__(self) -> None:
        self.coords = np.asarray(self.coords, dtype=float)
        self.is_boundary = np.asarray(self.is_boundary, dtype=bool)
        if self.coords.ndim != 2 or self.coords.shape[1] != 2:
            raise ValueError("coords must have shape (n, 2)")
        if self.is_boundary.shape != (self.coords.shape[0],):
            raise ValueError("is_boundary must have shape (n,)")
        flags = self.is_boundary.astype(int)
        if np.any(np.diff(flags) < 0):
            raise ValueError("interior nodes must precede boundary nodes")

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def n_interior(self) -> int:
        return int((~self.is_boundary).sum())

    @property
    def n_boundary(self) -> int:
        return int(self.is_boundary.sum())


def sample_nodes(
    domain: DomainSpec, n_interior: int, n_boundary: int, seed: int
) -> NodeSet:
    """Draw a deterministic node set for a domain.

    Boundary nodes sit at equispaced arc parameters. Interior nodes come from
    uniform rejection sampling over the bounding box, keeping only points
    inside the domain and at least ``0.5 * sqrt(area / n_total)`` away from
    every previously placed node (boundary included).
    """
    if n_boundary < 3:
        raise ConfigurationError("need at least 3 boundary nodes")
    if n_interior < 1:
        raise ConfigurationError("need at least 1 interior node")

    theta = 2.0 * np.pi * np.arange(n_boundary) / n_boundary
    bnd = boundary_point(domain, theta)

    total = n_interior + n_boundary
    min_sep = 0.5 * np.sqrt(domain_area(domain) / total)

    loop = boundary_polyline(domain)
    lo = loop.min(axis=0)
    hi = loop.max(axis=0)

    rng = np.random.default_rng(seed)
    placed = list(bnd)
    interior: list[np.ndarray] = []
    attempts = 0
    max_attempts = 20000 + 4000 * n_interior
    batch = max(64, 4 * n_interior)
    while len(interior) < n_interior:
        if attempts >= max_attempts:
            raise SamplingCapacityError(
                f"placed {len(interior)} of {n_interior} interior nodes after "
                f"{attempts} draws; min separation {min_sep:.4g} may be too strict"
            )
        cand = lo + rng.random((batch, 2)) * (hi - lo)
        attempts += batch
        inside = point_in_domain(domain, cand)
        for p in cand[inside]:
            arr = np.asarray(placed)
            if np.min(np.hypot(arr[:, 0] - p[0], arr[:, 1] - p[1])) >= min_sep:
                placed.append(p)
                interior.append(p)
                if len(interior) == n_interior:
                    break

    coords = np.vstack([np.asarray(interior), bnd])
    flags = np.zeros(total, dtype=bool)
    flags[n_interior:] = True
    return NodeSet(coords, flags)


class _BowyerWatson:
    """Incremental Delaunay triangulation over a super-triangle scaffold."""

    def __init__(self, points: np.ndarray) -> None:
        lo = points.min(axis=0)
        hi = points.max(axis=0)
        center = (lo + hi) / 2.0
        # far enough that circumcircles of hull slivers stay clear of the
        # scaffold, close enough that squared radii keep full precision
        span = 1e4 * max(float(np.max(hi - lo)), 1.0)
        anchors = np.array(
            [
                [center[0] - span, center[1] - span],
                [center[0] + span, center[1] - span],
                [center[0], center[1] + span],
            ]
        )
        self.points = np.vstack([points, anchors])
        self.n_input = points.shape[0]
        first = (self.n_input, self.n_input + 1, self.n_input + 2)
        self.triangles: dict[tuple[int, int, int], tuple[np.ndarray, float]] = {}
        self._add(first)

    def _add(self, tri: tuple[int, int, int]) -> None:
        a, b, c = self.points[list(tri)]
        d = 2.0 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
        if abs(d) < 1e-300:
            # collinear sliver: give it an unbounded circumcircle so any later
            # insertion clears it out
            self.triangles[tri] = (np.array([0.0, 0.0]), np.inf)
            return
        b2 = ((b - a) ** 2).sum()
        c2 = ((c - a) ** 2).sum()
        ux = (c[1] - a[1]) * b2 - (b[1] - a[1]) * c2
        uy = (b[0] - a[0]) * c2 - (c[0] - a[0]) * b2
        cc = a + np.array([ux, uy]) / d
        r2 = ((a - cc) ** 2).sum()
        self.triangles[tri] = (cc, float(r2))

    def insert(self, idx: int) -> None:
        p = self.points[idx]
        bad = []
        for tri, (cc, r2) in self.triangles.items():
            if not np.isfinite(r2):
                bad.append(tri)
                continue
            d2 = (p[0] - cc[0]) ** 2 + (p[1] - cc[1]) ** 2
            if d2 <= r2 * (1.0 + CIRCUMCIRCLE_RTOL):
                bad.append(tri)
        edge_count: dict[tuple[int, int], tuple[int, int]] = {}
        for tri in bad:
            for e in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                key = (min(e), max(e))
                if key in edge_count:
                    del edge_count[key]
                else:
                    edge_count[key] = e
            del self.triangles[tri]
        for e in edge_count.values():
            self._add((e[0], e[1], idx))

    def run(self) -> np.ndarray:
        for idx in range(self.n_input):
            self.insert(idx)
        keep = [
            tri
            for tri in self.triangles
            if max(tri) < self.n_input and np.isfinite(self.triangles[tri][1])
        ]
        return np.array(sorted(keep), dtype=int).reshape(-1, 3)


def _orient_ccw(points: np.ndarray, tris: np.ndarray) -> np.ndarray:
    if tris.size == 0:
        return tris
    a = points[tris[:, 0]]
    b = points[tris[:, 1]]
    c = points[tris[:, 2]]
    area2 = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (
        c[:, 0] - a[:, 0]
    )
    flipped = tris.copy()
    swap = area2 < 0.0
    flipped[swap, 1], flipped[swap, 2] = tris[swap, 2], tris[swap, 1]
    # canonical rotation: smallest vertex index first, orientation preserved
    roll = np.argmin(flipped, axis=1)
    out = np.empty_like(flipped)
    for r in (0, 1, 2):
        rows = roll == r
        out[rows] = np.roll(flipped[rows], -r, axis=1)
    order = np.lexsort((out[:, 2], out[:, 1], out[:, 0]))
    return out[order]


def triangulate(nodes: NodeSet, domain: DomainSpec | None = None) -> np.ndarray:
    """Delaunay triangles over all nodes, clipped to the domain.

    Raises on coincident nodes (distance below ``DUPLICATE_TOL``) and when no
    triangle survives (collinear input). With a domain given, triangles whose
    centroid falls outside are dropped, which carves non-convex shapes out of
    the convex hull triangulation.
    """
    pts = nodes.coords
    n = pts.shape[0]
    if n < 3:
        raise DegenerateGeometryError("need at least 3 nodes to triangulate")
    for i in range(n):
        d = np.hypot(pts[i + 1 :, 0] - pts[i, 0], pts[i + 1 :, 1] - pts[i, 1])
        if d.size and float(d.min()) < DUPLICATE_TOL:
            j = i + 1 + int(np.argmin(d))
            raise DuplicateNodeError(f"nodes {i} and {j} coincide")

    tris = _BowyerWatson(pts).run()
    if tris.size == 0:
        raise DegenerateGeometryError("triangulation is empty; nodes look collinear")
    tris = _orient_ccw(pts, tris)
    if domain is not None:
        centroids = pts[tris].mean(axis=1)
        tris = tris[point_in_domain(domain, centroids)]
        if tris.size == 0:
            raise DegenerateGeometryError("no triangle centroid lies in the domain")
    return tris


@dataclass
class Graph:
    """Triangulated node set with directed edges for message passing."""

    coords: np.ndarray
    is_boundary: np.ndarray
    edges: np.ndarray
    triangles: np.ndarray

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def n_interior(self) -> int:
        return int((~self.is_boundary).sum())

    @property
    def n_boundary(self) -> int:
        return int(self.is_boundary.sum())


def build_graph(nodes: NodeSet, triangles: np.ndarray) -> Graph:
    """Graph with one directed edge pair per triangle side, rows sorted."""
    sides = np.vstack(
        [triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]]
    )
    und = np.unique(np.sort(sides, axis=1), axis=0)
    edges = np.vstack([und, und[:, ::-1]])
    order = np.lexsort((edges[:, 1], edges[:, 0]))
    return Graph(
        coords=nodes.coords.copy(),
        is_boundary=nodes.is_boundary.copy(),
        edges=edges[order],
        triangles=triangles.copy(),
    )


def graph_to_json(graph: Graph) -> str:
    payload = {
        "nodes": [[float(x), float(y)] for x, y in graph.coords],
        "boundary": [int(b) for b in graph.is_boundary],
        "edges": [[int(i), int(j)] for i, j in graph.edges],
        "triangles": [[int(a), int(b), int(c)] for a, b, c in graph.triangles],
    }
    return json.dumps(payload, separators=(",", ":"))


def graph_from_json(text: str) -> Graph:
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"graph JSON is unparseable: {exc}") from exc
    for key in ("nodes", "boundary", "edges", "triangles"):
        if key not in payload:
            raise ConfigurationError(f"graph JSON is missing key {key!r}")
    coords = np.asarray(payload["nodes"], dtype=float)
    flags = np.asarray(payload["boundary"], dtype=bool)
    edges = np.asarray(payload["edges"], dtype=int).reshape(-1, 2)
    tris = np.asarray(payload["triangles"], dtype=int).reshape(-1, 3)
    if coords.ndim != 2 or coords.shape[1] != 2:
        raise ConfigurationError("graph JSON nodes must be (n, 2)")
    if flags.shape[0] != coords.shape[0]:
        raise ConfigurationError("graph JSON boundary length mismatch")
    n = coords.shape[0]
    if edges.size and (edges.min() < 0 or edges.max() >= n):
        raise ConfigurationError("graph JSON edge index out of range")
    if tris.size and (tris.min() < 0 or tris.max() >= n):
        raise ConfigurationError("graph JSON triangle index out of range")
    return Graph(coords=coords, is_boundary=flags, edges=edges, triangles=tris)


def mesh_domain(
    domain: DomainSpec, n_interior: int, n_boundary: int, seed: int
) -> Graph:
    """Sample nodes, triangulate, and assemble the graph in one call."""
    nodes = sample_nodes(domain, n_interior, n_boundary, seed)
    tris = triangulate(nodes, domain)
    return build_graph(nodes, tris)
