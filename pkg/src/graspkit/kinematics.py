"""Declarative hand models and forward kinematics.

A hand is a tree of links connected by joints, rooted at the wrist link.
Links carry only sample points in their own frame. Joint angles ``theta``
list the independent (non-fixed, non-mimic) joints in spec order.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

JOINT_TYPES = ("revolute", "prismatic", "fixed")
CANONICAL_FINGERS = ("thumb", "index", "middle", "ring", "little")
BUNDLED_HANDS = ("allegro", "shadow", "barrett", "jaco", "panda")


class HandSpecError(ValueError):
    pass


class PoseError(ValueError):
    pass


def axis_angle_to_matrix(rotvec) -> np.ndarray:
    """Rodrigues' formula; a zero vector gives the identity."""
    r = np.asarray(rotvec, dtype=np.float64)
    angle = float(np.linalg.norm(r))
    if angle < 1e-15:
        return np.eye(3)
    k = r / angle
    K = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def matrix_to_axis_angle(R) -> np.ndarray:
    R = np.asarray(R, dtype=np.float64)
    cos = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    angle = np.arccos(cos)
    if angle < 1e-12:
        return np.zeros(3)
    if np.pi - angle < 1e-6:
        # near pi: axis from the symmetric part
        M = (R + np.eye(3)) / 2.0
        k = np.sqrt(np.clip(np.diag(M), 0.0, None))
        i = int(np.argmax(k))
        k = M[i] / k[i]
        return k / np.linalg.norm(k) * angle
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return w / (2.0 * np.sin(angle)) * angle


def rpy_to_matrix(rpy) -> np.ndarray:
    """Fixed-axis roll/pitch/yaw: ``Rz(yaw) @ Ry(pitch) @ Rx(roll)``."""
    r, p, y = rpy
    cr, sr, cp, sp, cy, sy = np.cos(r), np.sin(r), np.cos(p), np.sin(p), np.cos(y), np.sin(y)
    return np.array([
        [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
        [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
        [-sp, cp * sr, cp * cr],
    ])


def make_transform(R=None, t=None) -> np.ndarray:
    T = np.eye(4)
    if R is not None:
        T[:3, :3] = R
    if t is not None:
        T[:3, 3] = t
    return T


@dataclass(frozen=True)
class Joint:
    name: str
    parent_link: str
    child_link: str
    type: str
    axis: tuple[float, float, float]
    origin: np.ndarray  # 4x4
    limits: tuple[float, float] | None

    def motion(self, value: float) -> np.ndarray:
        if self.type == "fixed":
            return np.eye(4)
        axis = np.asarray(self.axis)
        if self.type == "revolute":
            return make_transform(R=axis_angle_to_matrix(axis * value))
        return make_transform(t=axis * value)


@dataclass(frozen=True)
class Link:
    name: str
    finger: str
    sample_points: np.ndarray


@dataclass(frozen=True)
class Mimic:
    joint: str
    source: str
    ratio: float


@dataclass(frozen=True, eq=False)
class HandModel:
    name: str
    dof: int
    joints: tuple[Joint, ...]
    links: tuple[Link, ...]
    mimic: tuple[Mimic, ...] = ()
    display_name: str = ""
    kind: str = "dexterous"
    root: str = field(init=False, default="")

    def __post_init__(self):
        _validate(self)

    @property
    def active_joints(self) -> tuple[Joint, ...]:
        mimicked = {m.joint for m in self.mimic}
        return tuple(j for j in self.joints if j.type != "fixed" and j.name not in mimicked)

    @property
    def lower(self) -> np.ndarray:
        return np.array([j.limits[0] for j in self.active_joints])

    @property
    def upper(self) -> np.ndarray:
        return np.array([j.limits[1] for j in self.active_joints])

    @property
    def fingers(self) -> dict[str, str]:
        return {link.name: link.finger for link in self.links}

    @property
    def point_count(self) -> int:
        return sum(len(link.sample_points) for link in self.links)

    @property
    def label(self) -> str:
        return self.display_name or self.name

    def joint_values(self, theta) -> dict[str, float]:
        """Values for every non-fixed joint, mimic joints included."""
        theta = np.asarray(theta, dtype=np.float64)
        values = {j.name: float(v) for j, v in zip(self.active_joints, theta)}
        for m in self.mimic:
            values[m.joint] = m.ratio * values[m.source]
        return values


def _validate(hand: HandModel) -> None:
    link_names = [link.name for link in hand.links]
    if len(set(link_names)) != len(link_names):
        raise HandSpecError(f"{hand.name}: duplicate link names")
    known = set(link_names)
    joint_names = [j.name for j in hand.joints]
    if len(set(joint_names)) != len(joint_names):
        raise HandSpecError(f"{hand.name}: duplicate joint names")
    parent_of: dict[str, str] = {}
    for j in hand.joints:
        if j.type not in JOINT_TYPES:
            raise HandSpecError(f"joint {j.name!r}: unknown type {j.type!r}")
        for ln in (j.parent_link, j.child_link):
            if ln not in known:
                raise HandSpecError(f"joint {j.name!r}: unknown link {ln!r}")
        if j.child_link in parent_of:
            raise HandSpecError(f"joint {j.name!r}: link {j.child_link!r} has two parent joints")
        parent_of[j.child_link] = j.name
        if j.type != "fixed":
            if abs(np.linalg.norm(j.axis) - 1.0) > 1e-9:
                raise HandSpecError(f"joint {j.name!r}: axis is not unit length")
            if j.limits is None or not j.limits[0] < j.limits[1]:
                raise HandSpecError(f"joint {j.name!r}: limits must satisfy lo < hi")
    # walk up from every link; a cycle never reaches a root
    joint_by_name = {j.name: j for j in hand.joints}
    for start in link_names:
        seen = set()
        cur = start
        while cur in parent_of:
            jn = parent_of[cur]
            if jn in seen:
                raise HandSpecError(f"joint {jn!r}: cyclic joint graph")
            seen.add(jn)
            cur = joint_by_name[jn].parent_link
    roots = [n for n in link_names if n not in parent_of]
    if len(roots) != 1:
        raise HandSpecError(f"{hand.name}: expected one root link, found {roots}")
    object.__setattr__(hand, "root", roots[0])
    for m in hand.mimic:
        if m.joint not in joint_by_name or m.source not in joint_by_name:
            raise HandSpecError(f"mimic entry {m.joint!r}: unknown joint")
        if joint_by_name[m.joint].type == "fixed":
            raise HandSpecError(f"mimic joint {m.joint!r} is fixed")
    mimicked = {m.joint for m in hand.mimic}
    for m in hand.mimic:
        if m.source in mimicked or joint_by_name[m.source].type == "fixed":
            raise HandSpecError(f"mimic joint {m.joint!r}: source {m.source!r} is not independent")
    if len(hand.active_joints) != hand.dof:
        raise HandSpecError(
            f"{hand.name}: dof {hand.dof} but {len(hand.active_joints)} independent joints")
    for link in hand.links:
        if not link.finger:
            raise HandSpecError(f"link {link.name!r}: missing finger name")


def _parse_origin(raw) -> np.ndarray:
    if raw is None:
        return np.eye(4)
    xyz = raw.get("xyz", [0.0, 0.0, 0.0])
    rpy = raw.get("rpy", [0.0, 0.0, 0.0])
    return make_transform(rpy_to_matrix(rpy), xyz)


def hand_from_dict(doc: dict) -> HandModel:
    try:
        joints = tuple(
            Joint(
                name=j["name"],
                parent_link=j["parent_link"],
                child_link=j["child_link"],
                type=j["type"],
                axis=tuple(float(x) for x in j.get("axis", (0.0, 0.0, 1.0))),
                origin=_parse_origin(j.get("origin")),
                limits=tuple(float(x) for x in j["limits"]) if j.get("limits") is not None else None,
            )
            for j in doc["joints"]
        )
        links = tuple(
            Link(
                name=ln["name"],
                finger=ln.get("finger") or "",
                sample_points=np.asarray(ln.get("sample_points", []), dtype=np.float64).reshape(-1, 3),
            )
            for ln in doc["links"]
        )
        mimic = tuple(Mimic(m["joint"], m["source"], float(m["ratio"])) for m in doc.get("mimic", []))
        return HandModel(
            name=doc["name"],
            dof=int(doc["dof"]),
            joints=joints,
            links=links,
            mimic=mimic,
            display_name=doc.get("display_name", ""),
            kind=doc.get("kind", "dexterous"),
        )
    except KeyError as exc:
        raise HandSpecError(f"hand spec missing field {exc}") from None


def load_hand_spec(path) -> HandModel:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise HandSpecError(f"{path}: invalid JSON ({exc})") from None
    return hand_from_dict(doc)


def bundled_hand_path(name: str):
    return resources.files("graspkit").joinpath("hands", f"{name}.json")


def load_bundled_hand(name: str) -> HandModel:
    if name not in BUNDLED_HANDS:
        raise HandSpecError(f"no bundled hand named {name!r}")
    return hand_from_dict(json.loads(bundled_hand_path(name).read_text()))


@dataclass(frozen=True, eq=False)
class GraspPose:
    hand: str
    T: np.ndarray
    R: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        for name, size in (("T", 3), ("R", 3)):
            arr = np.asarray(getattr(self, name), dtype=np.float64).reshape(-1)
            if arr.shape != (size,):
                raise PoseError(f"{name} must have {size} entries")
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=np.float64).reshape(-1))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.T, self.R, self.theta])

    @classmethod
    def from_vector(cls, hand: str, vec) -> "GraspPose":
        vec = np.asarray(vec, dtype=np.float64)
        return cls(hand, vec[:3], vec[3:6], vec[6:])


def check_pose(hand: HandModel, pose: GraspPose, slack: float = 0.0) -> None:
    """Raise :class:`PoseError` unless ``pose`` is valid for ``hand``."""
    if pose.hand != hand.name:
        raise PoseError(f"pose is for hand {pose.hand!r}, model is {hand.name!r}")
    if len(pose.theta) != hand.dof:
        raise PoseError(f"{hand.name} needs {hand.dof} joint values, got {len(pose.theta)}")
    if not np.all(np.isfinite(pose.as_vector())):
        raise PoseError("pose contains non-finite values")
    lo, hi = hand.lower - slack, hand.upper + slack
    bad = np.flatnonzero((pose.theta < lo) | (pose.theta > hi))
    if bad.size:
        j = hand.active_joints[bad[0]]
        raise PoseError(
            f"joint {j.name!r} value {pose.theta[bad[0]]:.6g} outside limits {list(j.limits)}")


def wrist_transform(pose: GraspPose) -> np.ndarray:
    return make_transform(axis_angle_to_matrix(pose.R), pose.T)


def forward_kinematics(hand: HandModel, pose: GraspPose, slack: float = 0.0,
                       base: np.ndarray | None = None) -> dict[str, np.ndarray]:
    """World transform of every link, keyed by link name.

    ``base`` replaces the wrist transform derived from ``pose`` when given.
    """
    check_pose(hand, pose, slack)
    values = hand.joint_values(pose.theta)
    world = {hand.root: wrist_transform(pose) if base is None else np.asarray(base)}
    children: dict[str, list[Joint]] = {}
    for j in hand.joints:
        children.setdefault(j.parent_link, []).append(j)
    stack = [hand.root]
    while stack:
        parent = stack.pop()
        for j in children.get(parent, ()):
            world[j.child_link] = world[parent] @ j.origin @ j.motion(values.get(j.name, 0.0))
            stack.append(j.child_link)
    return {link.name: world[link.name] for link in hand.links}


def link_points_world(hand: HandModel, pose: GraspPose, slack: float = 0.0) -> dict[str, np.ndarray]:
    transforms = forward_kinematics(hand, pose, slack)
    out = {}
    for link in hand.links:
        T = transforms[link.name]
        out[link.name] = link.sample_points @ T[:3, :3].T + T[:3, 3]
    return out


def hand_point_cloud(hand: HandModel, pose: GraspPose, slack: float = 0.0) -> np.ndarray:
    """All hand sample points stacked in link order."""
    pts = link_points_world(hand, pose, slack)
    if not pts:
        return np.zeros((0, 3))
    return np.concatenate(list(pts.values()), axis=0)
