"""Triangle meshes, surface sampling and point-to-mesh distance queries.

All coordinates are meters. Meshes are immutable after construction and an
:class:`DistanceQueryIndex` may be shared read-only between workers.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

logger = logging.getLogger(__name__)

MERGE_TOLERANCE = 1e-9
# twice the triangle area below which a face counts as degenerate
DEGENERATE_CROSS_NORM = 1e-18
GRAZE_TOLERANCE = 1e-10
MAX_RAY_RETRIES = 8
LEAF_SIZE = 8

_IGNORED_OBJ_RECORDS = {"vn", "vt", "vp", "o", "g", "s", "mtllib", "usemtl", "l"}


class MeshParseError(ValueError):
    """Raised when an OBJ file cannot be parsed. Carries the 1-based line."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = f"{path or '<obj>'}:{line}" if line is not None else (path or "<obj>")
        super().__init__(f"{where}: {message}")


class LabelSchemaError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    vertices: np.ndarray
    faces: np.ndarray
    face_part_labels: np.ndarray | None = None
    part_names: dict[int, str] = field(default_factory=dict)
    name: str = ""
    load_warnings: tuple[str, ...] = ()

    def __post_init__(self):
        vertices = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        faces = np.ascontiguousarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if faces.size and (faces.min() < 0 or faces.max() >= len(vertices)):
            raise ValueError("face index out of range")
        labels = self.face_part_labels
        if labels is not None:
            labels = np.ascontiguousarray(labels, dtype=np.int64).reshape(-1)
            if len(labels) != len(faces):
                raise LabelSchemaError(
                    f"{len(labels)} face labels for {len(faces)} faces")
            missing = sorted(set(labels.tolist()) - set(self.part_names))
            if missing:
                raise LabelSchemaError(f"labels without a part name: {missing}")
            labels.setflags(write=False)
        vertices.setflags(write=False)
        faces.setflags(write=False)
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "faces", faces)
        object.__setattr__(self, "face_part_labels", labels)
        object.__setattr__(self, "part_names", {int(k): str(v) for k, v in self.part_names.items()})

    @property
    def triangles(self) -> np.ndarray:
        return self.vertices[self.faces]

    @property
    def face_areas(self) -> np.ndarray:
        tri = self.triangles
        return 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)

    @property
    def is_watertight(self) -> bool:
        """Every undirected edge is shared by exactly two faces."""
        if len(self.faces) == 0:
            return False
        edges = np.sort(self.faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
        _, counts = np.unique(edges, axis=0, return_counts=True)
        return bool(np.all(counts == 2))

    def face_part(self, face: int) -> int:
        if self.face_part_labels is None:
            return 0
        return int(self.face_part_labels[face])

    def part_name(self, part_id: int) -> str:
        if not self.part_names:
            return "body"
        return self.part_names[part_id]

    @property
    def bounding_diameter(self) -> float:
        """Diagonal of the axis-aligned bounding box."""
        return float(np.linalg.norm(self.vertices.max(axis=0) - self.vertices.min(axis=0)))


def parse_obj(text: str, path: str | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Parse the ``v``/``f`` subset of Wavefront OBJ.

    Polygons with more than three corners are fan-triangulated. Texture and
    normal indices (``f 1/2/3``) are accepted and ignored.
    """
    vertices: list[tuple[float, float, float]] = []
    faces: list[tuple[int, int, int]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        tag = parts[0]
        if tag == "v":
            if len(parts) < 4:
                raise MeshParseError("vertex needs three coordinates", path, lineno)
            try:
                vertices.append((float(parts[1]), float(parts[2]), float(parts[3])))
            except ValueError:
                raise MeshParseError(f"bad vertex coordinate in {raw.strip()!r}", path, lineno) from None
        elif tag == "f":
            if len(parts) < 4:
                raise MeshParseError("face needs at least three vertices", path, lineno)
            idx = []
            for token in parts[1:]:
                head = token.split("/", 1)[0]
                try:
                    k = int(head)
                except ValueError:
                    raise MeshParseError(f"bad face index {token!r}", path, lineno) from None
                if k < 0:
                    k = len(vertices) + k + 1
                if k < 1 or k > len(vertices):
                    raise MeshParseError(f"face index {token} out of range", path, lineno)
                idx.append(k - 1)
            for j in range(1, len(idx) - 1):
                faces.append((idx[0], idx[j], idx[j + 1]))
        elif tag in _IGNORED_OBJ_RECORDS:
            continue
        else:
            raise MeshParseError(f"unsupported record {tag!r}", path, lineno)
    return (np.asarray(vertices, dtype=np.float64).reshape(-1, 3),
            np.asarray(faces, dtype=np.int64).reshape(-1, 3))


def _merge_vertices(vertices: np.ndarray, faces: np.ndarray, tol: float):
    if len(vertices) < 2:
        return vertices, faces, 0
    pairs = cKDTree(vertices).query_pairs(r=tol, output_type="ndarray")
    if len(pairs) == 0:
        return vertices, faces, 0
    parent = np.arange(len(vertices))

    def root(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in pairs:
        ri, rj = root(i), root(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    roots = np.array([root(i) for i in range(len(vertices))])
    keep = np.unique(roots)
    remap = np.full(len(vertices), -1, dtype=np.int64)
    remap[keep] = np.arange(len(keep))
    return vertices[keep], remap[roots][faces], len(vertices) - len(keep)


def clean_mesh(vertices, faces, labels=None):
    """Merge coincident vertices and drop degenerate faces.

    Returns ``(vertices, faces, labels, warnings)``.
    """
    vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    vertices, faces, merged = _merge_vertices(vertices, faces, MERGE_TOLERANCE)
    if merged:
        logger.debug("merged %d duplicate vertices", merged)
    tri = vertices[faces]
    cross = np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
    repeated = (faces[:, 0] == faces[:, 1]) | (faces[:, 1] == faces[:, 2]) | (faces[:, 0] == faces[:, 2])
    degenerate = repeated | (cross <= DEGENERATE_CROSS_NORM)
    warnings = tuple(f"dropped degenerate face {i}" for i in np.flatnonzero(degenerate))
    for w in warnings:
        logger.warning(w)
    keep = ~degenerate
    if labels is not None:
        labels = np.asarray(labels, dtype=np.int64)[keep]
    return vertices, faces[keep], labels, warnings


def load_part_labels(path) -> tuple[dict[int, str], np.ndarray]:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise LabelSchemaError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict) or "parts" not in doc or "face_labels" not in doc:
        raise LabelSchemaError(f"{path}: expected keys 'parts' and 'face_labels'")
    try:
        parts = {int(k): str(v) for k, v in doc["parts"].items()}
        labels = np.asarray([int(x) for x in doc["face_labels"]], dtype=np.int64)
    except (AttributeError, TypeError, ValueError) as exc:
        raise LabelSchemaError(f"{path}: {exc}") from None
    return parts, labels


def load_mesh(path, labels_path=None, name: str | None = None) -> TriangleMesh:
    """Load an OBJ mesh, optionally with a per-face part label file.

    ``face_labels`` index the triangles as read (after fan triangulation),
    before degenerate faces are dropped.
    """
    path = Path(path)
    text = path.read_bytes().decode("ascii", errors="strict")
    vertices, faces = parse_obj(text, str(path))
    labels = None
    parts: dict[int, str] = {}
    if labels_path is not None:
        parts, labels = load_part_labels(labels_path)
        if len(labels) != len(faces):
            raise LabelSchemaError(
                f"{labels_path}: {len(labels)} face labels but mesh has {len(faces)} faces")
        unknown = sorted(set(labels.tolist()) - set(parts))
        if unknown:
            raise LabelSchemaError(f"{labels_path}: labels without a part name: {unknown}")
    vertices, faces, labels, warnings = clean_mesh(vertices, faces, labels)
    return TriangleMesh(vertices, faces, labels, parts, name or path.stem, warnings)


def write_obj(mesh: TriangleMesh, path) -> None:
    lines = [f"v {x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


# -- primitives -------------------------------------------------------------

def box_mesh(extents=(1.0, 1.0, 1.0), center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Axis-aligned box with 8 vertices and 12 outward-facing triangles.

    Faces come in pairs per side, in the order -x, +x, -y, +y, -z, +z.
    """
    h = 0.5 * np.asarray(extents, dtype=np.float64)
    corners = np.array([[x, y, z] for x in (-1, 1) for y in (-1, 1) for z in (-1, 1)], dtype=np.float64)
    vertices = corners * h + np.asarray(center, dtype=np.float64)
    faces = np.array([
        [0, 1, 3], [0, 3, 2],   # -x
        [4, 6, 7], [4, 7, 5],   # +x
        [0, 4, 5], [0, 5, 1],   # -y
        [2, 3, 7], [2, 7, 6],   # +y
        [0, 2, 6], [0, 6, 4],   # -z
        [1, 5, 7], [1, 7, 3],   # +z
    ])
    return TriangleMesh(vertices, faces, name="box")


def icosphere(subdivisions: int = 2, radius: float = 1.0) -> TriangleMesh:
    t = (1.0 + 5 ** 0.5) / 2.0
    verts = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
             (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
             (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
             (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
             (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
             (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(v, dtype=np.float64) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    return TriangleMesh(np.array(verts) * radius, np.array(faces), name="icosphere")


def torus(major: float = 1.0, minor: float = 0.3, n_major: int = 32, n_minor: int = 16) -> TriangleMesh:
    u = np.arange(n_major) * (2 * np.pi / n_major)
    v = np.arange(n_minor) * (2 * np.pi / n_minor)
    uu, vv = np.meshgrid(u, v, indexing="ij")
    verts = np.stack([(major + minor * np.cos(vv)) * np.cos(uu),
                      (major + minor * np.cos(vv)) * np.sin(uu),
                      minor * np.sin(vv)], axis=-1).reshape(-1, 3)
    faces = []
    for i in range(n_major):
        for j in range(n_minor):
            a = i * n_minor + j
            b = ((i + 1) % n_major) * n_minor + j
            c = ((i + 1) % n_major) * n_minor + (j + 1) % n_minor
            d = i * n_minor + (j + 1) % n_minor
            faces += [(a, b, c), (a, c, d)]
    return TriangleMesh(verts, np.array(faces), name="torus")


# -- sampling ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SurfaceSampleSet:
    points: np.ndarray
    source_face: np.ndarray
    part_label: np.ndarray
    seed: int


def sample_surface(mesh: TriangleMesh, n: int, seed: int) -> SurfaceSampleSet:
    """Draw ``n`` points uniformly by area over the mesh surface."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if len(mesh.faces) == 0:
        raise ValueError("cannot sample an empty mesh")
    rng = np.random.default_rng(seed)
    areas = mesh.face_areas
    cdf = np.cumsum(areas)
    face = np.searchsorted(cdf, rng.random(n) * cdf[-1], side="right")
    face = np.minimum(face, len(areas) - 1)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    tri = mesh.triangles[face]
    points = ((1.0 - r1)[:, None] * tri[:, 0]
              + (r1 * (1.0 - r2))[:, None] * tri[:, 1]
              + (r1 * r2)[:, None] * tri[:, 2])
    if mesh.face_part_labels is None:
        labels = np.zeros(n, dtype=np.int64)
    else:
        labels = mesh.face_part_labels[face]
    return SurfaceSampleSet(points, face.astype(np.int64), labels, seed)


# -- distance kernels -------------------------------------------------------

def _dot(x, y):
    # explicit sum keeps results bitwise independent of array layout
    return x[..., 0] * y[..., 0] + x[..., 1] * y[..., 1] + x[..., 2] * y[..., 2]


def closest_point_on_triangles(p, a, b, c):
    """Closest point on triangle ``abc`` to ``p``; all arguments broadcast."""
    return _closest(p, a, b, c)[0]


def _closest(p, a, b, c):
    # returns the closest point and a mask of points whose projection is interior
    ab = b - a
    ac = c - a
    ap = p - a
    bp = p - b
    cp = p - c
    d1, d2 = _dot(ab, ap), _dot(ac, ap)
    d3, d4 = _dot(ab, bp), _dot(ac, bp)
    d5, d6 = _dot(ab, cp), _dot(ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    with np.errstate(divide="ignore", invalid="ignore"):
        denom = va + vb + vc
        v = vb / denom
        w = vc / denom
        result = a + ab * v[..., None] + ac * w[..., None]
        interior = np.ones(np.shape(va), dtype=bool)

        e_bc = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
        t_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        interior &= ~e_bc
        result = np.where(e_bc[..., None], b + (c - b) * t_bc[..., None], result)

        e_ac = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
        t_ac = d2 / (d2 - d6)
        interior &= ~e_ac
        result = np.where(e_ac[..., None], a + ac * t_ac[..., None], result)

        at_c = (d6 >= 0) & (d5 <= d6)
        interior &= ~at_c
        result = np.where(at_c[..., None], c, result)

        e_ab = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
        t_ab = d1 / (d1 - d3)
        interior &= ~e_ab
        result = np.where(e_ab[..., None], a + ab * t_ab[..., None], result)

        at_b = (d3 >= 0) & (d4 <= d3)
        interior &= ~at_b
        result = np.where(at_b[..., None], b, result)

        at_a = (d1 <= 0) & (d2 <= 0)
        interior &= ~at_a
        result = np.where(at_a[..., None], a, result)
    return result, interior


def point_triangle_distance(p, a, b, c):
    closest, interior = _closest(p, a, b, c)
    diff = p - closest
    dist = np.sqrt(_dot(diff, diff))
    # plane distance is exact for points lying in the triangle's plane
    n = np.cross(b - a, c - a)
    with np.errstate(divide="ignore", invalid="ignore"):
        plane = np.abs(_dot(p - a, n)) / np.sqrt(_dot(n, n))
    return np.where(interior, plane, dist)


class DistanceQueryIndex:
    """Bounding-volume hierarchy over a mesh's triangles.

    Queries are vectorised over batches of points: the tree is walked once
    per batch, carrying the subset of points whose current best distance
    does not rule the node out.
    """

    def __init__(self, mesh: TriangleMesh, leaf_size: int = LEAF_SIZE):
        if len(mesh.faces) == 0:
            raise ValueError("cannot index an empty mesh")
        self.mesh = mesh
        tri = mesh.triangles
        self._a = np.ascontiguousarray(tri[:, 0])
        self._b = np.ascontiguousarray(tri[:, 1])
        self._c = np.ascontiguousarray(tri[:, 2])
        self.watertight = mesh.is_watertight
        if not self.watertight:
            logger.warning("mesh %r is not watertight; signs are unreliable", mesh.name)
        self._vertex_tree = cKDTree(mesh.vertices)
        self._build(tri, leaf_size)

    @property
    def sign_reliable(self) -> bool:
        return self.watertight

    def _build(self, tri, leaf_size):
        lo_t = tri.min(axis=1)
        hi_t = tri.max(axis=1)
        centroids = tri.mean(axis=1)
        order: list[np.ndarray] = []
        lo, hi, left, right, start, count = [], [], [], [], [], []

        def new_node():
            for lst in (lo, hi):
                lst.append(None)
            for lst in (left, right, start, count):
                lst.append(-1)
            return len(lo) - 1

        root = new_node()
        work = [(root, np.arange(len(tri)))]
        offset = 0
        while work:
            node, ids = work.pop()
            lo[node] = lo_t[ids].min(axis=0)
            hi[node] = hi_t[ids].max(axis=0)
            if len(ids) <= leaf_size:
                ids = np.sort(ids)
                order.append(ids)
                start[node] = offset
                count[node] = len(ids)
                offset += len(ids)
                continue
            c = centroids[ids]
            axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
            ids = ids[np.argsort(c[:, axis], kind="stable")]
            half = len(ids) // 2
            l_node, r_node = new_node(), new_node()
            left[node], right[node] = l_node, r_node
            work.append((r_node, ids[half:]))
            work.append((l_node, ids[:half]))
        self._order = np.concatenate(order)
        self._lo = np.array(lo)
        self._hi = np.array(hi)
        self._left = np.array(left)
        self._right = np.array(right)
        self._start = np.array(start)
        self._count = np.array(count)

    @property
    def node_count(self) -> int:
        return len(self._lo)

    def _box_distance(self, node, pts):
        d = np.maximum(np.maximum(self._lo[node] - pts, 0.0), pts - self._hi[node])
        return np.sqrt(_dot(d, d))

    def query(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Unsigned distance and nearest face for each point.

        Ties between faces at equal distance resolve to the lowest face index.
        """
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        n = len(points)
        best = np.full(n, np.inf)
        best_face = np.full(n, -1, dtype=np.int64)
        if n == 0:
            return best, best_face
        vdist, _ = self._vertex_tree.query(points)
        bound = vdist * (1.0 + 1e-9) + 1e-12
        stack = [(0, np.arange(n))]
        while stack:
            node, ids = stack.pop()
            pts = points[ids]
            limit = np.minimum(bound[ids], best[ids])
            keep = self._box_distance(node, pts) <= limit * (1.0 + 1e-12)
            if not keep.all():
                ids = ids[keep]
                pts = pts[keep]
            if len(ids) == 0:
                continue
            if self._count[node] >= 0:
                faces = self._order[self._start[node]:self._start[node] + self._count[node]]
                d = point_triangle_distance(pts[:, None, :], self._a[faces][None],
                                            self._b[faces][None], self._c[faces][None])
                j = np.argmin(d, axis=1)
                dmin = d[np.arange(len(ids)), j]
                fmin = faces[j]
                cur, cur_f = best[ids], best_face[ids]
                better = (dmin < cur) | ((dmin == cur) & (fmin < cur_f))
                best[ids[better]] = dmin[better]
                best_face[ids[better]] = fmin[better]
                continue
            l_node, r_node = self._left[node], self._right[node]
            centre = pts.mean(axis=0)
            dl = self._box_distance(l_node, centre)
            dr = self._box_distance(r_node, centre)
            # push the farther child first so the nearer one tightens bounds
            if dl <= dr:
                stack += [(r_node, ids), (l_node, ids)]
            else:
                stack += [(l_node, ids), (r_node, ids)]
        return best, best_face

    def contains(self, points, seed: int = 0) -> np.ndarray:
        """Ray-parity containment; grazing rays are retried with new directions."""
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        inside = np.zeros(len(points), dtype=bool)
        pending = np.arange(len(points))
        rng = np.random.default_rng(seed)
        direction = np.array([0.5772156649, 0.3183098862, 0.7517915278])
        for attempt in range(MAX_RAY_RETRIES + 1):
            direction = direction / np.linalg.norm(direction)
            parity, grazed = self._ray_parity(points[pending], direction)
            inside[pending] = parity
            if not grazed.any():
                break
            if attempt == MAX_RAY_RETRIES:
                logger.warning("%d points still graze after %d retries", int(grazed.sum()), attempt)
                break
            pending = pending[grazed]
            direction = rng.normal(size=3)
        return inside

    def _ray_parity(self, points, direction, chunk_pairs: int = 2_000_000):
        a, e1, e2 = self._a, self._b - self._a, self._c - self._a
        pvec = np.cross(direction, e2)
        det = _dot(e1, pvec)
        normal = np.cross(e1, e2)
        scale = np.sqrt(_dot(e1, e1) * _dot(e2, e2))
        parallel = np.abs(det) <= 1e-12 * scale
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = np.where(parallel, 0.0, 1.0 / det)
        g = GRAZE_TOLERANCE
        parity = np.zeros(len(points), dtype=bool)
        grazed = np.zeros(len(points), dtype=bool)
        step = max(1, chunk_pairs // len(a))
        for s in range(0, len(points), step):
            p = points[s:s + step]
            tvec = p[:, None, :] - a[None]
            u = _dot(tvec, pvec[None]) * inv
            qvec = np.cross(tvec, e1[None])
            v = _dot(direction, qvec) * inv
            t = _dot(e2[None], qvec) * inv
            w = 1.0 - u - v
            ahead = (t > 0) & ~parallel
            hit = ahead & (u >= 0) & (v >= 0) & (w >= 0)
            near = ahead & (u > -g) & (v > -g) & (w > -g) & ((u < g) | (v < g) | (w < g))
            in_plane = parallel & (np.abs(_dot(tvec, normal[None])) <= 1e-12 * scale)
            parity[s:s + step] = (hit.sum(axis=1) % 2) == 1
            grazed[s:s + step] = near.any(axis=1) | in_plane.any(axis=1)
        return parity, grazed

    def signed_query(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Signed distance (negative inside) and nearest face per point.

        Points exactly on the surface get distance ``+0.0``.
        """
        dist, face = self.query(points)
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        off_surface = dist > 0
        inside = np.zeros(len(dist), dtype=bool)
        if off_surface.any():
            inside[off_surface] = self.contains(points[off_surface])
        return np.where(inside, -dist, dist), face


def build_index(mesh: TriangleMesh) -> DistanceQueryIndex:
    return DistanceQueryIndex(mesh)


def signed_distance(index: DistanceQueryIndex, point) -> float:
    d, _ = index.signed_query(np.asarray(point, dtype=np.float64).reshape(1, 3))
    return float(d[0])


def signed_distance_batch(index: DistanceQueryIndex, points) -> np.ndarray:
    return index.signed_query(points)[0]


def unsigned_distance_batch(index: DistanceQueryIndex, points) -> tuple[np.ndarray, np.ndarray]:
    return index.query(points)
