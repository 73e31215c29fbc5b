"""Grasp input records and loaded object assets shared by the pipeline stages."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

from .geometry import DistanceQueryIndex, TriangleMesh, build_index, load_mesh
from .kinematics import GraspPose, PoseError

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


class RecordError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GraspInputRecord:
    grasp_id: str
    object_id: str
    pose: GraspPose
    generator: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def hand(self) -> str:
        return self.pose.hand

    @classmethod
    def from_dict(cls, doc: dict) -> "GraspInputRecord":
        try:
            pose = GraspPose(doc["hand"], doc["T"], doc["R"], doc["theta"])
            gid = str(doc["grasp_id"])
            oid = str(doc["object_id"])
        except KeyError as exc:
            raise RecordError(f"grasp record missing field {exc}") from None
        except (TypeError, ValueError, PoseError) as exc:
            raise RecordError(f"bad grasp record: {exc}") from None
        known = {"grasp_id", "object_id", "hand", "T", "R", "theta", "generator", "schema_version"}
        extra = {k: v for k, v in doc.items() if k not in known}
        return cls(gid, oid, pose, str(doc.get("generator", "")), extra)

    def to_dict(self) -> dict:
        doc = {
            "grasp_id": self.grasp_id,
            "object_id": self.object_id,
            "hand": self.hand,
            "T": self.pose.T.tolist(),
            "R": self.pose.R.tolist(),
            "theta": self.pose.theta.tolist(),
            "generator": self.generator,
        }
        doc.update(self.extra)
        return doc


@dataclass(frozen=True, eq=False)
class ObjectAsset:
    object_id: str
    name: str
    mesh: TriangleMesh
    index: DistanceQueryIndex
    caption: str = ""

    @classmethod
    def load(cls, object_id: str, meshes_dir, labels_dir=None, metadata: dict | None = None):
        mesh_path = Path(meshes_dir) / f"{object_id}.obj"
        if not mesh_path.exists():
            raise FileNotFoundError(f"no mesh for object {object_id!r} at {mesh_path}")
        labels = None
        if labels_dir is not None:
            candidate = Path(labels_dir) / f"{object_id}.json"
            labels = candidate if candidate.exists() else None
        mesh = load_mesh(mesh_path, labels, name=object_id)
        meta = (metadata or {}).get(object_id, {})
        return cls(object_id, meta.get("name", object_id), mesh, build_index(mesh),
                   meta.get("caption", ""))


def read_jsonl(path) -> Iterator[tuple[int, dict | None, str]]:
    """Yield ``(line_number, parsed_or_None, raw)`` for non-blank lines."""
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                doc = json.loads(raw)
            except json.JSONDecodeError:
                doc = None
            yield lineno, doc if isinstance(doc, dict) else None, raw.rstrip("\n")


def dumps(doc: dict) -> str:
    return json.dumps(doc, ensure_ascii=False, separators=(", ", ": "))


def write_jsonl(path, docs) -> None:
    """Write atomically: a crash leaves either the old file or the new one."""
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(dumps(doc) + "\n")
    tmp.replace(path)


def write_text(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)
