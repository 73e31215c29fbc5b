"""Hand-object contact detection, contact summaries and grasp filtering."""
from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .geometry import DistanceQueryIndex, TriangleMesh
from .kinematics import CANONICAL_FINGERS

logger = logging.getLogger(__name__)

DEFAULT_EPSILON = 0.005
DEFAULT_PENETRATION_THRESHOLD = 0.02
SCHEMA_VERSION = 1

COUNT_WORDS = ("Zero", "One", "Two", "Three", "Four", "Five", "Six", "Seven", "Eight", "Nine", "Ten")


class NoContactError(ValueError):
    pass


@dataclass(frozen=True)
class LinkContact:
    link_name: str
    finger: str
    in_contact: bool
    contact_part: int | None
    min_distance: float


@dataclass(frozen=True)
class ContactRecord:
    grasp_id: str
    epsilon: float
    links: tuple[LinkContact, ...]
    warnings: tuple[str, ...] = ()

    @property
    def contacts(self) -> tuple[LinkContact, ...]:
        return tuple(c for c in self.links if c.in_contact)

    def finger_parts(self) -> dict[str, int]:
        """Part touched by each contacting finger.

        A finger with several contacting links takes the part of its closest
        link (first in link order on ties).
        """
        best: dict[str, LinkContact] = {}
        for c in self.contacts:
            if c.finger not in best or c.min_distance < best[c.finger].min_distance:
                best[c.finger] = c
        return {f: c.contact_part for f, c in best.items()}

    def pattern(self) -> tuple[tuple[str, int], ...]:
        return tuple(sorted(self.finger_parts().items()))

    def to_dict(self) -> dict:
        return {
            "grasp_id": self.grasp_id,
            "epsilon": self.epsilon,
            "links": [
                {
                    "link_name": c.link_name, "finger": c.finger, "in_contact": c.in_contact,
                    "contact_part": c.contact_part,
                    "min_distance": c.min_distance if np.isfinite(c.min_distance) else None,
                }
                for c in self.links
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ContactRecord":
        links = tuple(
            LinkContact(
                c["link_name"], c["finger"], bool(c["in_contact"]), c["contact_part"],
                float("inf") if c["min_distance"] is None else float(c["min_distance"]),
            )
            for c in doc["links"]
        )
        return cls(doc["grasp_id"], float(doc["epsilon"]), links)


def detect_contacts(hand_points: Mapping[str, np.ndarray], index: DistanceQueryIndex,
                    epsilon: float = DEFAULT_EPSILON, fingers: Mapping[str, str] | None = None,
                    grasp_id: str = "") -> ContactRecord:
    """Flag each link whose closest sample point lies within ``epsilon`` of the object.

    ``min_distance`` is the signed distance of the link's deepest point;
    its nearest face supplies the contacted part.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    fingers = fingers or {}
    names = list(hand_points)
    arrays = [np.asarray(hand_points[n], dtype=np.float64).reshape(-1, 3) for n in names]
    sizes = [len(a) for a in arrays]
    stacked = np.concatenate(arrays) if arrays else np.zeros((0, 3))
    sd, face = index.signed_query(stacked)
    mesh = index.mesh
    links, warnings = [], []
    offset = 0
    for name, size in zip(names, sizes):
        finger = fingers.get(name, "palm")
        if size == 0:
            msg = f"link {name!r} has no sample points"
            logger.debug(msg)
            warnings.append(msg)
            links.append(LinkContact(name, finger, False, None, float("inf")))
            continue
        seg = sd[offset:offset + size]
        k = int(np.argmin(seg))
        d = float(seg[k])
        hit = d < epsilon
        part = mesh.face_part(int(face[offset + k])) if hit else None
        links.append(LinkContact(name, finger, hit, part, d))
        offset += size
    return ContactRecord(grasp_id, float(epsilon), tuple(links), tuple(warnings))


def finger_sort_key(finger: str):
    if finger in CANONICAL_FINGERS:
        return (0, CANONICAL_FINGERS.index(finger), "")
    if finger == "palm":
        return (2, 0, "")
    return (1, 0, finger)


def count_word(n: int) -> str:
    return COUNT_WORDS[n] if 0 <= n < len(COUNT_WORDS) else str(n)


@dataclass(frozen=True)
class ContactSummary:
    mode: str
    object_name: str
    fingers: tuple[str, ...]
    parts: tuple[tuple[str, str], ...]
    text: str = field(default="")

    def __post_init__(self):
        if not self.text:
            object.__setattr__(self, "text", render_summary(self.mode, self.object_name, self.parts))

    @property
    def finger_count(self) -> int:
        return sum(1 for f in self.fingers if f != "palm")

    @property
    def part_names(self) -> tuple[str, ...]:
        seen = []
        for _, part in self.parts:
            if part not in seen:
                seen.append(part)
        return tuple(seen)

    @property
    def primary_part(self) -> str:
        """Part touched by the most participants; earliest finger wins ties."""
        counts: dict[str, int] = defaultdict(int)
        for _, part in self.parts:
            counts[part] += 1
        return max(self.part_names, key=lambda p: counts[p])

    @property
    def clause(self) -> str:
        return self.text[:-1] if self.text.endswith(".") else self.text

    def to_dict(self) -> dict:
        return {"mode": self.mode, "object": self.object_name, "fingers": list(self.fingers),
                "parts": [list(p) for p in self.parts], "text": self.text}

    @classmethod
    def from_dict(cls, doc: dict) -> "ContactSummary":
        return cls(doc["mode"], doc["object"], tuple(doc["fingers"]),
                   tuple((f, p) for f, p in doc["parts"]), doc["text"])


def _noun(finger: str) -> str:
    return finger if finger in ("thumb", "palm") else f"{finger} finger"


def _join(words: list[str]) -> str:
    if len(words) == 1:
        return words[0]
    if len(words) == 2:
        return f"{words[0]} and {words[1]}"
    return ", ".join(words[:-1]) + f", and {words[-1]}"


def _clause(fingers: list[str], object_name: str, part: str) -> str:
    target = f"the {object_name}'s {part}"
    digits = [f for f in fingers if f != "palm"]
    palm = len(digits) < len(fingers)
    if not digits:
        return f"the palm contacts {target}"
    if len(digits) == 1:
        subject = f"the {_noun(digits[0])}"
        if palm:
            return f"{subject} and the palm contact {target}"
        return f"{subject} contacts {target}"
    subject = _join(digits) + " fingers"
    if palm:
        subject += " and the palm"
    return f"{subject} contact {target}"


def render_summary(mode: str, object_name: str, parts) -> str:
    """Render the sentence for a summary; a pure function of its fields."""
    parts = list(parts)
    if mode == "general":
        part = parts[0][1]
        n = sum(1 for f, _ in parts if f != "palm")
        palm = any(f == "palm" for f, _ in parts)
        if n == 0:
            return f"The palm grasps the {part} of the {object_name}."
        noun = "finger" if n == 1 else "fingers"
        subject = f"{count_word(n)} {noun}"
        if palm:
            return f"{subject} and the palm grasp the {part} of the {object_name}."
        verb = "grasps" if n == 1 else "grasp"
        return f"{subject} {verb} the {part} of the {object_name}."
    if mode != "detailed":
        raise ValueError(f"unknown summary mode {mode!r}")
    groups: dict[str, list[str]] = {}
    for finger, part in parts:
        groups.setdefault(part, []).append(finger)
    clauses = [_clause(fs, object_name, p) for p, fs in groups.items()]
    text = "; ".join(clauses)
    return text[0].upper() + text[1:] + "."


def summarize_contacts(record: ContactRecord, object_name: str,
                       part_names: Mapping[int, str] | TriangleMesh) -> ContactSummary:
    if isinstance(part_names, TriangleMesh):
        mesh = part_names
        lookup = mesh.part_name
    else:
        table = dict(part_names)
        lookup = (lambda pid: table[pid]) if table else (lambda pid: "body")
    finger_parts = record.finger_parts()
    if not finger_parts:
        raise NoContactError("no-contact grasp")
    fingers = tuple(sorted(finger_parts, key=finger_sort_key))
    parts = tuple((f, lookup(finger_parts[f])) for f in fingers)
    mode = "general" if len({p for _, p in parts}) == 1 else "detailed"
    return ContactSummary(mode, object_name, fingers, parts)


def _stack(points) -> np.ndarray:
    if isinstance(points, Mapping):
        arrays = [np.asarray(v, dtype=np.float64).reshape(-1, 3) for v in points.values()]
        return np.concatenate(arrays) if arrays else np.zeros((0, 3))
    return np.asarray(points, dtype=np.float64).reshape(-1, 3)


def penetration_depth(points, index: DistanceQueryIndex) -> float:
    """Deepest interior penetration of any point, in meters (0 if none inside)."""
    pts = _stack(points)
    if len(pts) == 0:
        return 0.0
    sd, _ = index.signed_query(pts)
    return float(max(0.0, -sd.min()))


def filter_by_penetration(points, index: DistanceQueryIndex,
                          threshold: float = DEFAULT_PENETRATION_THRESHOLD) -> bool:
    """True to keep the grasp: penetration must not exceed ``threshold``."""
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    return penetration_depth(points, index) <= threshold


def select_grasps_per_pattern(records, per_pattern: int = 1, seed: int = 0) -> list[str]:
    """Keep up to ``per_pattern`` grasps for every distinct contact pattern.

    Records may be :class:`ContactRecord` objects or ``(grasp_id, pattern)``
    pairs. Selected ids are returned in input order.
    """
    if per_pattern < 1:
        raise ValueError("per_pattern must be >= 1")
    groups: dict[tuple, list[int]] = {}
    ids = []
    for i, rec in enumerate(records):
        if isinstance(rec, ContactRecord):
            gid, key = rec.grasp_id, rec.pattern()
        else:
            gid, key = rec[0], tuple(sorted(tuple(p) for p in rec[1]))
        ids.append(gid)
        groups.setdefault(key, []).append(i)
    rng = np.random.default_rng(seed)
    chosen: list[int] = []
    for key in sorted(groups, key=repr):
        members = groups[key]
        if len(members) <= per_pattern:
            chosen += members
        else:
            chosen += rng.choice(members, size=per_pattern, replace=False).tolist()
    return [ids[i] for i in sorted(chosen)]
