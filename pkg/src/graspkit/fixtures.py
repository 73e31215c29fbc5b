"""Small deterministic corpus: two labeled objects, two hands, twenty grasps.

Grasps are placed by sliding the hand along the surface normal until its
deepest point sits at a chosen penetration depth, so the annotate stage
has known outcomes (one grasp is pushed 3 cm in and must be dropped).
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .geometry import TriangleMesh, clean_mesh, write_obj
from .kinematics import GraspPose, HandModel, hand_point_cloud, load_bundled_hand, matrix_to_axis_angle

FIXTURE_HANDS = ("allegro", "panda")
GRASPS_PER_PAIR = 5
CONTACT_DEPTH = 0.004
DEEP_DEPTH = 0.03
DEEP_GRASP = "glass-panda-2"

# palm-facing direction in each hand's wrist frame
APPROACH_AXIS = {"allegro": (0.0, -1.0, 0.0), "panda": (0.0, 0.0, 1.0)}


def grid_box(extents, divisions, center=(0.0, 0.0, 0.0), name="box") -> TriangleMesh:
    """Watertight axis-aligned box whose sides are split into a quad grid."""
    h = 0.5 * np.asarray(extents, dtype=np.float64)
    c = np.asarray(center, dtype=np.float64)
    verts, faces = [], []
    for axis in range(3):
        u, v = [a for a in range(3) if a != axis]
        for sign in (-1.0, 1.0):
            nu, nv = divisions[u], divisions[v]
            base = len(verts)
            for i in range(nu + 1):
                for j in range(nv + 1):
                    p = np.empty(3)
                    p[axis] = sign * h[axis]
                    p[u] = -h[u] + 2 * h[u] * i / nu
                    p[v] = -h[v] + 2 * h[v] * j / nv
                    verts.append(p + c)
            for i in range(nu):
                for j in range(nv):
                    a = base + i * (nv + 1) + j
                    b, d, e = a + nv + 1, a + 1, a + nv + 2
                    # u x v points along +axis for axis 0 and 2, -axis for 1
                    outward = (sign > 0) == (axis != 1)
                    faces += [(a, b, e), (a, e, d)] if outward else [(a, e, b), (a, d, e)]
    v, f, _, _ = clean_mesh(np.array(verts), np.array(faces))
    return TriangleMesh(v, f, name=name)


def cylinder(radius: float, height: float, segments: int = 24, rings: int = 6,
             name="cylinder") -> TriangleMesh:
    """Closed cylinder along z, centered at the origin, with fan-triangulated caps."""
    ang = np.arange(segments) * (2 * np.pi / segments)
    zs = np.linspace(-height / 2, height / 2, rings + 1)
    verts = [(radius * np.cos(a), radius * np.sin(a), z) for z in zs for a in ang]
    faces = []
    for r in range(rings):
        for s in range(segments):
            a = r * segments + s
            b = r * segments + (s + 1) % segments
            faces += [(a, b, b + segments), (a, b + segments, a + segments)]
    bottom, top = len(verts), len(verts) + 1
    verts += [(0.0, 0.0, -height / 2), (0.0, 0.0, height / 2)]
    last = rings * segments
    for s in range(segments):
        faces.append((bottom, (s + 1) % segments, s))
        faces.append((top, last + s, last + (s + 1) % segments))
    return TriangleMesh(np.array(verts, dtype=np.float64), np.array(faces), name=name)


def hammer() -> TriangleMesh:
    """Box-shaped hammer along x; the far end is the head."""
    m = grid_box((0.30, 0.05, 0.05), (12, 2, 2), name="hammer")
    labels = np.where(m.triangles.mean(axis=1)[:, 0] > 0.08, 1, 0)
    return TriangleMesh(m.vertices, m.faces, labels, {0: "grip", 1: "head"}, "hammer")


def glass() -> TriangleMesh:
    """Closed cylinder; faces in the top 2 cm are the rim."""
    m = cylinder(0.045, 0.12, name="glass")
    labels = np.where(m.triangles.mean(axis=1)[:, 2] > 0.04, 1, 0)
    return TriangleMesh(m.vertices, m.faces, labels, {0: "body", 1: "rim"}, "glass")


FIXTURE_OBJECTS = {
    "hammer": (hammer, "hammer", "A hammer with a long straight grip and a blocky head."),
    "glass": (glass, "glass", "A drinking glass, a closed cylinder with a rim at the top."),
}


def face_normals(mesh: TriangleMesh) -> np.ndarray:
    t = mesh.triangles
    n = np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0])
    return n / np.linalg.norm(n, axis=1, keepdims=True)


def _align(src, dst) -> np.ndarray:
    """Rotation taking unit vector ``src`` onto unit vector ``dst``."""
    src, dst = np.asarray(src, float), np.asarray(dst, float)
    v = np.cross(src, dst)
    c = float(np.dot(src, dst))
    if np.linalg.norm(v) < 1e-12:
        if c > 0:
            return np.eye(3)
        perp = np.cross(src, [1.0, 0.0, 0.0])
        if np.linalg.norm(perp) < 1e-6:
            perp = np.cross(src, [0.0, 1.0, 0.0])
        perp /= np.linalg.norm(perp)
        return 2 * np.outer(perp, perp) - np.eye(3)
    vx = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])
    return np.eye(3) + vx + vx @ vx / (1 + c)


def _roll(axis, angle) -> np.ndarray:
    axis = np.asarray(axis, float)
    k = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * k @ k


def convex_depth(mesh: TriangleMesh, points) -> float:
    """Deepest interior depth of ``points`` in a convex mesh, via its face planes."""
    n = face_normals(mesh)
    offsets = np.einsum("ij,ij->i", n, mesh.triangles[:, 0])
    signed = np.asarray(points) @ n.T - offsets
    inside = signed.max(axis=1)
    return float(max(0.0, -inside.min()))


def place_grasp(hand: HandModel, mesh: TriangleMesh, point, normal, theta, roll: float,
                depth: float, tol: float = 1e-10) -> GraspPose:
    """Pose facing ``point`` along ``-normal`` whose deepest point is ``depth`` inside.

    ``mesh`` must be convex; the depth search uses the face planes directly.
    """
    normal = np.asarray(normal, float)
    R = _roll(normal, roll) @ _align(APPROACH_AXIS[hand.name], -normal)
    rotvec = matrix_to_axis_angle(R)
    local = hand_point_cloud(hand, GraspPose(hand.name, np.zeros(3), rotvec, theta))
    local = local - local.mean(axis=0)
    base = np.asarray(point, float)

    def pen(s):
        return convex_depth(mesh, local + base + normal * s)

    # every point is in front of the tangent plane, so outside the convex body
    hi = float(-(local @ normal).min()) + 1e-4
    lo = hi
    while pen(lo) <= depth:
        lo -= 0.002
        if lo < hi - 0.5:
            raise ValueError(f"cannot reach penetration {depth}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if pen(mid) > depth:
            lo = mid
        else:
            hi = mid
    # hi is the deepest offset still at or under the target depth
    T = base + normal * hi - (hand_point_cloud(hand, GraspPose(hand.name, np.zeros(3), rotvec, theta))
                              .mean(axis=0))
    return GraspPose(hand.name, T, rotvec, theta)


def fixture_grasps(seed: int = 7) -> list[dict]:
    rng = np.random.default_rng(seed)
    hands = {h: load_bundled_hand(h) for h in FIXTURE_HANDS}
    out = []
    for object_id, (make, _, _) in FIXTURE_OBJECTS.items():
        mesh = make()
        normals = face_normals(mesh)
        # side faces only, so the approach is never along the long axis
        long_axis = 2 if object_id == "glass" else 0
        side = np.flatnonzero(np.abs(normals[:, long_axis]) < 0.5)
        for hand_name, hand in hands.items():
            for k in range(GRASPS_PER_PAIR):
                gid = f"{object_id}-{hand_name}-{k}"
                face = int(rng.choice(side))
                point = mesh.triangles[face].mean(axis=0)
                frac = rng.uniform(0.1, 0.4, size=hand.dof)
                theta = hand.lower + frac * (hand.upper - hand.lower)
                if hand_name == "panda":
                    theta = np.full(1, 0.035)
                roll = float(rng.uniform(0, 2 * np.pi))
                depth = DEEP_DEPTH if gid == DEEP_GRASP else CONTACT_DEPTH
                pose = place_grasp(hand, mesh, point, normals[face], theta, roll, depth)
                out.append({"grasp_id": gid, "object_id": object_id, "hand": hand_name,
                            "T": pose.T.tolist(), "R": pose.R.tolist(), "theta": pose.theta.tolist(),
                            "generator": "fixture"})
    return out


def write_fixture(root, seed: int = 7, workers: int = 1) -> Path:
    """Write meshes, labels, metadata, grasps and a config under ``root``.

    Returns the config path.
    """
    root = Path(root)
    (root / "meshes").mkdir(parents=True, exist_ok=True)
    (root / "labels").mkdir(parents=True, exist_ok=True)
    meta = {}
    for object_id, (make, name, caption) in FIXTURE_OBJECTS.items():
        mesh = make()
        write_obj(mesh, root / "meshes" / f"{object_id}.obj")
        labels = {"parts": {str(k): v for k, v in mesh.part_names.items()},
                  "face_labels": mesh.face_part_labels.tolist()}
        (root / "labels" / f"{object_id}.json").write_text(json.dumps(labels) + "\n")
        meta[object_id] = {"name": name, "caption": caption}
    (root / "objects.json").write_text(json.dumps(meta, indent=1) + "\n")
    with open(root / "grasps.jsonl", "w", encoding="utf-8") as fh:
        for doc in fixture_grasps(seed):
            fh.write(json.dumps(doc) + "\n")
    config = {
        "output_dir": "out",
        "meshes_dir": "meshes",
        "labels_dir": "labels",
        "grasps": "grasps.jsonl",
        "objects": "objects.json",
        "hands": list(FIXTURE_HANDS),
        "bins": 384,
        "seed": 0,
        "workers": workers,
    }
    path = root / "config.json"
    path.write_text(json.dumps(config, indent=1) + "\n")
    return path
