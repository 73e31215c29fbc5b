"""Grasp evaluation: Chamfer distance, penetration depth and part accuracy.

Distances are computed in meters and reported in centimeters.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.spatial import cKDTree

from .contact import (DEFAULT_EPSILON, ContactSummary, NoContactError, detect_contacts,
                      penetration_depth, summarize_contacts)
from .geometry import DistanceQueryIndex
from .kinematics import HandModel, PoseError, hand_point_cloud, link_points_world
from .records import GraspInputRecord, ObjectAsset

M_TO_CM = 100.0
CD_FORMULA = "0.5 * (mean_a min_b |a-b| + mean_b min_a |a-b|), Euclidean, cm"


class MissingHandError(LookupError):
    pass


def chamfer_distance(A, B) -> float:
    """Symmetric mean nearest-neighbour distance between two point sets, in cm."""
    A = np.asarray(A, dtype=np.float64).reshape(-1, 3)
    B = np.asarray(B, dtype=np.float64).reshape(-1, 3)
    if len(A) == 0 or len(B) == 0:
        raise ValueError("chamfer distance needs two non-empty point sets")
    d_ab, _ = cKDTree(B).query(A)
    d_ba, _ = cKDTree(A).query(B)
    # summed in a fixed order so swapping A and B gives the identical float
    a, b = float(np.mean(d_ab)), float(np.mean(d_ba))
    lo, hi = min(a, b), max(a, b)
    return 0.5 * (lo + hi) * M_TO_CM


def max_penetration(hand_points, index: DistanceQueryIndex) -> float:
    """Deepest penetration of any hand point into the object, in cm."""
    return penetration_depth(hand_points, index) * M_TO_CM


def part_match(predicted: ContactSummary | None, instructed_part: str) -> bool:
    """True iff a strict majority of contacting fingers touch ``instructed_part``."""
    if predicted is None or not predicted.parts:
        return False
    hits = sum(1 for _, part in predicted.parts if part == instructed_part)
    return 2 * hits > len(predicted.parts)


@dataclass
class GraspRow:
    grasp_id: str
    hand: str
    object_id: str
    cd_cm: float
    pen_cm: float
    part_match: bool | None = None
    sign_reliable: bool = True

    def to_dict(self) -> dict:
        return {"grasp_id": self.grasp_id, "hand": self.hand, "object_id": self.object_id,
                "cd_cm": self.cd_cm, "pen_cm": self.pen_cm, "part_match": self.part_match,
                "suc": None, "sign_reliable": self.sign_reliable}


@dataclass
class EvalReport:
    rows: list[GraspRow]
    missing: list[str] = field(default_factory=list)
    unmatched: list[str] = field(default_factory=list)
    rejected: list[dict] = field(default_factory=list)

    def aggregates(self) -> dict[str, dict]:
        by_hand: dict[str, list[GraspRow]] = {}
        for r in self.rows:
            by_hand.setdefault(r.hand, []).append(r)
        out = {h: _aggregate(rs) for h, rs in sorted(by_hand.items())}
        out["all"] = _aggregate(self.rows)
        return out

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "cd_definition": CD_FORMULA,
            "pen_definition": "max over hand points of max(0, -signed distance), cm",
            "suc": "not computed",
            "rows": [r.to_dict() for r in self.rows],
            "aggregates": self.aggregates(),
            "counts": {"evaluated": len(self.rows), "missing": len(self.missing),
                       "unmatched": len(self.unmatched), "rejected": len(self.rejected)},
            "missing": self.missing,
            "unmatched": self.unmatched,
            "rejected": self.rejected,
        }

    def table(self) -> str:
        """Aligned text table with CD / Pen / Suc columns per hand."""
        header = f"{'Hand':<12} {'CD(cm)':>8} {'Pen(cm)':>8} {'Suc':>5} {'Acc':>6} {'n':>5}"
        lines = [f"# CD = {CD_FORMULA}", header, "-" * len(header)]
        for hand, agg in self.aggregates().items():
            name = "Avg" if hand == "all" else hand
            acc = "n/a" if agg["part_accuracy"] is None else f"{agg['part_accuracy']:.2f}"
            cd = "n/a" if agg["mean_cd_cm"] is None else f"{agg['mean_cd_cm']:.2f}"
            pen = "n/a" if agg["mean_pen_cm"] is None else f"{agg['mean_pen_cm']:.2f}"
            lines.append(f"{name:<12} {cd:>8} {pen:>8} {'n/a':>5} {acc:>6} {agg['count']:>5}")
        return "\n".join(lines) + "\n"


def _aggregate(rows: list[GraspRow]) -> dict:
    if not rows:
        return {"count": 0, "mean_cd_cm": None, "mean_pen_cm": None, "part_accuracy": None,
                "part_evaluated": 0}
    judged = [r.part_match for r in rows if r.part_match is not None]
    return {
        "count": len(rows),
        "mean_cd_cm": float(np.mean([r.cd_cm for r in rows])),
        "mean_pen_cm": float(np.mean([r.pen_cm for r in rows])),
        "part_accuracy": float(np.mean(judged)) if judged else None,
        "part_evaluated": len(judged),
    }


def score_grasp(pred: GraspInputRecord, ref: GraspInputRecord, obj: ObjectAsset,
                hand: HandModel, epsilon: float = DEFAULT_EPSILON,
                instructed_part: str | None = None) -> GraspRow:
    pred_links = link_points_world(hand, pred.pose)
    pred_pts = np.concatenate(list(pred_links.values()))
    ref_pts = hand_point_cloud(hand, ref.pose)
    match = None
    if instructed_part is not None:
        record = detect_contacts(pred_links, obj.index, epsilon, hand.fingers, pred.grasp_id)
        try:
            summary = summarize_contacts(record, obj.name, obj.mesh)
        except NoContactError:
            summary = None
        match = part_match(summary, instructed_part)
    return GraspRow(pred.grasp_id, hand.name, ref.object_id, chamfer_distance(pred_pts, ref_pts),
                    max_penetration(pred_pts, obj.index), match, obj.index.sign_reliable)


def evaluate_corpus(predictions: Mapping[str, GraspInputRecord],
                    references: Mapping[str, GraspInputRecord],
                    objects: Mapping[str, ObjectAsset], hands: Mapping[str, HandModel],
                    epsilon: float = DEFAULT_EPSILON) -> EvalReport:
    """Score predictions against references sharing the same grasp id.

    References without a prediction are listed as ``missing`` and
    predictions without a reference as ``unmatched``; neither enters the
    aggregates. A prediction carrying ``instructed_part`` in its extra
    fields is also scored for part accuracy.
    """
    for rec in list(predictions.values()) + list(references.values()):
        if rec.hand not in hands:
            raise MissingHandError(f"no hand spec for hand {rec.hand!r}")
    rows, invalid = [], []
    for gid, pred in predictions.items():
        ref = references.get(gid)
        if ref is None:
            continue
        if pred.hand != ref.hand:
            invalid.append({"grasp_id": gid, "reason": f"hand {pred.hand!r} != reference {ref.hand!r}"})
            continue
        try:
            rows.append(score_grasp(pred, ref, objects[ref.object_id], hands[pred.hand], epsilon,
                                    pred.extra.get("instructed_part")))
        except PoseError as exc:
            invalid.append({"grasp_id": gid, "reason": str(exc)})
    missing = [gid for gid in references if gid not in predictions]
    unmatched = [gid for gid in predictions if gid not in references]
    return EvalReport(rows, missing, unmatched, invalid)
