"""Batch stages: annotate, bounds, build, eval and stats.

Every stage reads and writes plain JSONL/JSON under ``output_dir``. Outputs
are ordered by input position and never depend on the worker count;
timestamps go only to the ``run.log`` sidecar.
"""
from __future__ import annotations

import hashlib
import json
import logging
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .codec import (BinSpec, StreamParseError, TokenVocabulary, check_spec_hash, compute_bounds,
                    detokenize, discretize, extract_stream)
from .config import PipelineConfig
from .contact import (ContactSummary, NoContactError, detect_contacts, penetration_depth,
                      select_grasps_per_pattern, summarize_contacts)
from .conversation import GraspItem, TemplateSet, build_sample, question_set
from .kinematics import (BUNDLED_HANDS, HandModel, PoseError, check_pose, link_points_world,
                         load_bundled_hand, load_hand_spec)
from .metrics import EvalReport, MissingHandError, evaluate_corpus
from .records import (SCHEMA_VERSION, GraspInputRecord, ObjectAsset, RecordError, dumps,
                      read_jsonl, write_jsonl, write_text)

logger = logging.getLogger(__name__)

ANNOTATIONS = "annotations.jsonl"
KEPT = "kept.jsonl"
DROPPED = "dropped.jsonl"
JOURNAL = "annotate.journal.jsonl"
BINS_DIR = "bins"
CONVERSATIONS = "conversations.jsonl"
RUN_LOG = "run.log"


def derive_seed(seed: int, *parts) -> int:
    digest = hashlib.sha256("|".join([str(seed), *map(str, parts)]).encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def load_hands(cfg: PipelineConfig) -> dict[str, HandModel]:
    hands = {}
    for src in cfg.hand_sources():
        hand = load_bundled_hand(src) if src in BUNDLED_HANDS else load_hand_spec(src)
        hands[hand.name] = hand
    return hands


def load_object_metadata(cfg: PipelineConfig) -> dict:
    if cfg.objects is None:
        return {}
    return json.loads(Path(cfg.objects).read_text())


class AssetCache:
    """Lazily loaded meshes and distance indices, one per object id."""

    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.metadata = load_object_metadata(cfg)
        self._objects: dict[str, ObjectAsset] = {}

    def get(self, object_id: str) -> ObjectAsset:
        if object_id not in self._objects:
            self._objects[object_id] = ObjectAsset.load(
                object_id, self.cfg.meshes_dir, self.cfg.labels_dir, self.metadata)
        return self._objects[object_id]


def _log_run(cfg: PipelineConfig, message: str) -> None:
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    with open(cfg.output_dir / RUN_LOG, "a", encoding="utf-8") as fh:
        fh.write(f"{time.strftime('%Y-%m-%dT%H:%M:%S')} {message}\n")


# -- annotate ---------------------------------------------------------------

_WORKER: dict = {}


def _init_worker(cfg: PipelineConfig) -> None:
    _WORKER["cfg"] = cfg
    _WORKER["hands"] = load_hands(cfg)
    _WORKER["assets"] = AssetCache(cfg)


def annotate_grasp(doc: dict, cfg: PipelineConfig, hands: dict[str, HandModel],
                   assets: AssetCache) -> dict:
    """FK, contact detection, penetration filter and summary for one grasp."""
    out = {
        "schema_version": SCHEMA_VERSION,
        "grasp_id": str(doc.get("grasp_id", "")),
        "object_id": doc.get("object_id"),
        "hand": doc.get("hand"),
        "status": "dropped",
        "reason": None,
        "detail": None,
        "epsilon": cfg.epsilon,
        "penetration_threshold": cfg.penetration_threshold,
        "penetration_m": None,
        "links": None,
        "summary": None,
        "record": doc,
    }
    try:
        rec = GraspInputRecord.from_dict(doc)
        hand = hands.get(rec.hand)
        if hand is None:
            raise MissingHandError(f"no hand spec for hand {rec.hand!r}")
        # limits are checked before any geometry is touched
        check_pose(hand, rec.pose, cfg.pose_slack)
        obj = assets.get(rec.object_id)
        points = link_points_world(hand, rec.pose, cfg.pose_slack)
        record = detect_contacts(points, obj.index, cfg.epsilon, hand.fingers, rec.grasp_id)
        depth = penetration_depth(points, obj.index)
    except (RecordError, PoseError, MissingHandError, FileNotFoundError, ValueError) as exc:
        out["reason"] = "error"
        out["detail"] = str(exc)
        return out
    out["penetration_m"] = depth
    out["links"] = record.to_dict()["links"]
    if depth > cfg.penetration_threshold:
        out["reason"] = "penetration"
        out["detail"] = f"penetration {depth:.6f} m exceeds {cfg.penetration_threshold} m"
        return out
    try:
        summary = summarize_contacts(record, obj.name, obj.mesh)
    except NoContactError:
        out["reason"] = "no-contact"
        return out
    out["summary"] = summary.to_dict()
    out["status"] = "kept"
    return out


def _annotate_task(doc: dict) -> dict:
    return annotate_grasp(doc, _WORKER["cfg"], _WORKER["hands"], _WORKER["assets"])


def parallel_map(fn, items: list, workers: int, initializer, initargs):
    """Ordered map; a single worker runs in-process."""
    if workers <= 1 or len(items) <= 1:
        initializer(*initargs)
        for item in items:
            yield fn(item)
        return
    chunk = max(1, len(items) // (workers * 4))
    with ProcessPoolExecutor(workers, initializer=initializer, initargs=initargs) as pool:
        yield from pool.map(fn, items, chunksize=chunk)


@dataclass
class AnnotateResult:
    total: int = 0
    kept: int = 0
    dropped: int = 0
    failed: int = 0
    recomputed: int = 0
    reasons: Counter = field(default_factory=Counter)
    exit_code: int = 0


def _read_inputs(path) -> list[dict]:
    docs = []
    seen = set()
    for lineno, doc, raw in read_jsonl(path):
        if doc is None:
            docs.append({"grasp_id": f"line:{lineno}", "_error": f"unparseable JSON on line {lineno}"})
            continue
        gid = str(doc.get("grasp_id", f"line:{lineno}"))
        if gid in seen:
            docs.append({"grasp_id": f"{gid}#line:{lineno}", "_error": f"duplicate grasp id {gid!r}"})
            continue
        seen.add(gid)
        docs.append(doc)
    return docs


def _load_previous(cfg: PipelineConfig) -> dict[str, dict]:
    prev: dict[str, dict] = {}
    for name in (ANNOTATIONS, JOURNAL):
        path = cfg.output_dir / name
        if not path.exists():
            continue
        for _, doc, _ in read_jsonl(path):
            # a torn final journal line parses as None and is recomputed
            if doc is not None and "grasp_id" in doc:
                prev[doc["grasp_id"]] = doc
    return prev


def cmd_annotate(cfg: PipelineConfig, fresh: bool = False) -> AnnotateResult:
    cfg.require("grasps", "meshes_dir")
    out_dir = cfg.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    docs = _read_inputs(cfg.grasps)
    if not docs:
        logger.warning("grasp file %s is empty", cfg.grasps)
    journal = out_dir / JOURNAL
    if fresh:
        for name in (ANNOTATIONS, KEPT, DROPPED, JOURNAL):
            (out_dir / name).unlink(missing_ok=True)
    prev = {} if fresh else _load_previous(cfg)

    def reusable(doc):
        old = prev.get(str(doc.get("grasp_id")))
        return (old is not None and old.get("record") == doc and old.get("epsilon") == cfg.epsilon
                and old.get("penetration_threshold") == cfg.penetration_threshold)

    results: dict[str, dict] = {}
    todo = []
    for doc in docs:
        if "_error" in doc:
            results[doc["grasp_id"]] = {
                "schema_version": SCHEMA_VERSION, "grasp_id": doc["grasp_id"], "object_id": None,
                "hand": None, "status": "dropped", "reason": "error", "detail": doc["_error"],
                "epsilon": cfg.epsilon, "penetration_threshold": cfg.penetration_threshold,
                "penetration_m": None, "links": None, "summary": None, "record": None}
        elif reusable(doc):
            results[str(doc["grasp_id"])] = prev[str(doc["grasp_id"])]
        else:
            todo.append(doc)

    # rewrite the journal so a torn tail line never precedes new entries
    write_jsonl(journal, [results[str(d["grasp_id"])] for d in docs
                          if str(d["grasp_id"]) in results and "_error" not in d])
    with open(journal, "a", encoding="utf-8") as jf:
        for res in parallel_map(_annotate_task, todo, cfg.workers, _init_worker, (cfg,)):
            results[res["grasp_id"]] = res
            jf.write(dumps(res) + "\n")
            jf.flush()

    ordered = [results[str(d["grasp_id"])] for d in docs]
    write_jsonl(out_dir / ANNOTATIONS, ordered)
    write_jsonl(out_dir / KEPT, [r["record"] for r in ordered if r["status"] == "kept"])
    write_jsonl(out_dir / DROPPED, [
        {"grasp_id": r["grasp_id"], "object_id": r["object_id"], "hand": r["hand"],
         "reason": r["reason"], "detail": r["detail"]}
        for r in ordered if r["status"] != "kept"])
    journal.unlink(missing_ok=True)

    res = AnnotateResult(total=len(ordered), recomputed=len(todo))
    for r in ordered:
        if r["status"] == "kept":
            res.kept += 1
        else:
            res.dropped += 1
            res.reasons[r["reason"]] += 1
            if r["reason"] == "error":
                res.failed += 1
                logger.warning("grasp %s failed: %s", r["grasp_id"], r["detail"])
    if res.total and res.failed / res.total > cfg.max_failure_ratio:
        res.exit_code = 1
    _log_run(cfg, f"annotate total={res.total} kept={res.kept} dropped={res.dropped} "
                  f"failed={res.failed} recomputed={res.recomputed}")
    return res


# -- bounds -----------------------------------------------------------------

def read_kept(cfg: PipelineConfig) -> list[GraspInputRecord]:
    path = cfg.output_dir / KEPT
    if not path.exists():
        raise FileNotFoundError(f"{path} not found; run 'annotate' first")
    return [GraspInputRecord.from_dict(doc) for _, doc, _ in read_jsonl(path) if doc is not None]


def cmd_bounds(cfg: PipelineConfig) -> dict[str, BinSpec]:
    kept = read_kept(cfg)
    by_hand: dict[str, list] = {}
    for rec in kept:
        by_hand.setdefault(rec.hand, []).append(rec.pose)
    for name in load_hands(cfg):
        if name not in by_hand:
            logger.warning("hand %s has no kept grasps; no bin spec written", name)
    bins_dir = cfg.output_dir / BINS_DIR
    bins_dir.mkdir(parents=True, exist_ok=True)
    specs = {}
    stats = {}
    for hand in sorted(by_hand):
        spec = compute_bounds(by_hand[hand], cfg.bins)
        write_text(bins_dir / f"{hand}.json", json.dumps(spec.to_dict(), indent=1) + "\n")
        specs[hand] = spec
        stats[hand] = {"count": spec.corpus_size, "N": spec.N,
                       "ranges": {d: [lo, hi] for d, lo, hi in zip(spec.dims, spec.L.tolist(), spec.U.tolist())}}
    write_text(cfg.output_dir / "bounds_stats.json", json.dumps(stats, indent=1) + "\n")
    _log_run(cfg, f"bounds hands={sorted(specs)} N={cfg.bins}")
    return specs


def load_specs(cfg: PipelineConfig) -> dict[str, BinSpec]:
    bins_dir = cfg.output_dir / BINS_DIR
    if not bins_dir.exists():
        return {}
    return {p.stem: BinSpec.load(p) for p in sorted(bins_dir.glob("*.json"))}


def vocabulary(hands) -> TokenVocabulary:
    return TokenVocabulary(tuple(sorted(hands)))


# -- build ------------------------------------------------------------------

def read_annotations(cfg: PipelineConfig) -> list[dict]:
    path = cfg.output_dir / ANNOTATIONS
    if not path.exists():
        raise FileNotFoundError(f"{path} not found; run 'annotate' first")
    return [doc for _, doc, _ in read_jsonl(path) if doc is not None]


def cmd_build(cfg: PipelineConfig) -> int:
    hands = load_hands(cfg)
    specs = load_specs(cfg)
    templates = TemplateSet.load(cfg.templates)
    vocab = vocabulary(hands)
    assets = AssetCache(cfg)
    kept = [a for a in read_annotations(cfg) if a["status"] == "kept"]

    groups: dict[tuple[str, str], list[dict]] = {}
    for ann in kept:
        groups.setdefault((ann["object_id"], ann["hand"]), []).append(ann)
    selected_ids = set()
    warned = set()
    for (object_id, hand), anns in sorted(groups.items()):
        if hand not in specs:
            if hand not in warned:
                logger.warning("no bin spec for hand %s; its grasps are skipped", hand)
                warned.add(hand)
            continue
        per = cfg.per_pattern.get(hands[hand].kind, 1) if hand in hands else 1
        patterns = [(a["grasp_id"], [(f, p) for f, p in a["summary"]["parts"]]) for a in anns]
        selected_ids.update(select_grasps_per_pattern(
            patterns, per, derive_seed(cfg.seed, "select", object_id, hand)))

    items: dict[str, GraspItem] = {}
    order: list[str] = []
    for ann in kept:
        if ann["grasp_id"] not in selected_ids:
            continue
        rec = GraspInputRecord.from_dict(ann["record"])
        spec = specs[rec.hand]
        obj = assets.get(rec.object_id)
        hand = hands.get(rec.hand)
        items[rec.grasp_id] = GraspItem(
            rec.grasp_id, rec.hand, hand.label if hand else rec.hand, obj.name,
            ContactSummary.from_dict(ann["summary"]), discretize(rec.pose, spec),
            obj.mesh.bounding_diameter, spec.N, spec.corpus_hash)
        order.append(rec.grasp_id)

    samples = []
    for gid in order:
        item = items[gid]
        levels = hand_levels(cfg, hands.get(item.hand))
        if "single_grasp" in cfg.kinds:
            if cfg.variants is None:
                for lv in levels:
                    sid = f"{gid}:single:{lv}"
                    samples.append(build_sample("single_grasp", [item], templates, vocab,
                                                derive_seed(cfg.seed, sid), level=lv, sample_id=sid))
            else:
                qs = question_set(item.object_name, item.hand_label, item.summary, templates,
                                  derive_seed(cfg.seed, gid, "variants"), tuple(cfg.variants),
                                  levels)
                for k, (lv, q) in enumerate(qs):
                    sid = f"{gid}:single:q{k}"
                    samples.append(build_sample("single_grasp", [item], templates, vocab,
                                                derive_seed(cfg.seed, sid), level=lv, sample_id=sid,
                                                questions=[q]))
        if "multi_mix" in cfg.kinds:
            caption = assets.get(_object_of(kept, gid)).caption
            if caption:
                sid = f"{gid}:mix"
                seed = derive_seed(cfg.seed, sid)
                lv = levels[seed % len(levels)]
                samples.append(build_sample("multi_mix", [item], templates, vocab, seed, level=lv,
                                            caption=caption, sample_id=sid))
            else:
                logger.debug("object of %s has no caption; multi_mix skipped", gid)
    if "multi_grasp" in cfg.kinds:
        by_object: dict[str, list[str]] = {}
        for gid in order:
            by_object.setdefault(_object_of(kept, gid), []).append(gid)
        for object_id in sorted(by_object):
            for first, second in _pair_grasps(by_object[object_id], items,
                                              derive_seed(cfg.seed, "pairs", object_id)):
                sid = f"{first}+{second}:multi"
                seed = derive_seed(cfg.seed, sid)
                levels = [lv for lv in hand_levels(cfg, hands.get(items[first].hand))
                          if lv in hand_levels(cfg, hands.get(items[second].hand))] or ["low"]
                lv = levels[seed % len(levels)]
                samples.append(build_sample("multi_grasp", [items[first], items[second]], templates,
                                            vocab, seed, level=lv, sample_id=sid))

    write_jsonl(cfg.output_dir / CONVERSATIONS, [s.to_dict() for s in samples])
    write_text(cfg.output_dir / "vocab.json", json.dumps(vocab.to_dict()) + "\n")
    _log_run(cfg, f"build selected={len(order)} samples={len(samples)}")
    return len(samples)


def hand_levels(cfg: PipelineConfig, hand: HandModel | None) -> list[str]:
    """Configured levels; grippers get no finger-level (high) questions."""
    if hand is not None and hand.kind == "gripper":
        return [lv for lv in cfg.levels if lv != "high"] or ["low"]
    return list(cfg.levels)


def _object_of(kept: list[dict], gid: str) -> str:
    for ann in kept:
        if ann["grasp_id"] == gid:
            return ann["object_id"]
    raise KeyError(gid)


def _pair_grasps(gids: list[str], items: dict[str, GraspItem], seed: int) -> list[tuple[str, str]]:
    """Pair grasps of one object, preferring partners from a different hand."""
    rng = np.random.default_rng(seed)
    pool = [gids[i] for i in rng.permutation(len(gids))]
    pairs = []
    while len(pool) >= 2:
        first = pool.pop(0)
        k = next((i for i, g in enumerate(pool) if items[g].hand != items[first].hand), 0)
        pairs.append((first, pool.pop(k)))
    return pairs


# -- eval -------------------------------------------------------------------

def read_predictions(path, cfg: PipelineConfig, references: dict[str, GraspInputRecord],
                     specs: dict[str, BinSpec], vocab: TokenVocabulary, force: bool = False):
    """Parse prediction lines in numeric or token-stream form.

    A ``stream`` value may be a full answer; text before the first hand
    token is ignored.
    """
    preds: dict[str, GraspInputRecord] = {}
    rejected = []
    for lineno, doc, raw in read_jsonl(path):
        if doc is None:
            rejected.append({"line": lineno, "reason": "unparseable JSON"})
            continue
        try:
            if "stream" in doc:
                gid = str(doc["grasp_id"])
                decoded = detokenize(extract_stream(doc["stream"]), vocab, specs, cfg.dediscretize_mode)
                check_spec_hash(specs[decoded.pose.hand], doc.get("spec_hash"), force)
                object_id = doc.get("object_id") or (references[gid].object_id if gid in references else "")
                extra = {k: v for k, v in doc.items()
                         if k not in ("grasp_id", "object_id", "stream", "spec_hash")}
                rec = GraspInputRecord(gid, object_id, decoded.pose, doc.get("generator", ""), extra)
            else:
                rec = GraspInputRecord.from_dict(doc)
        except (StreamParseError, RecordError, KeyError) as exc:
            rejected.append({"line": lineno, "grasp_id": doc.get("grasp_id"), "reason": str(exc)})
            continue
        preds[rec.grasp_id] = rec
    return preds, rejected


def cmd_eval(cfg: PipelineConfig, predictions_path, force: bool = False) -> EvalReport:
    references = {r.grasp_id: r for r in read_kept(cfg)}
    hands = load_hands(cfg)
    specs = load_specs(cfg)
    vocab = vocabulary(set(hands) | set(specs))
    preds, rejected = read_predictions(predictions_path, cfg, references, specs, vocab, force)
    assets = AssetCache(cfg)
    objects = {r.object_id: assets.get(r.object_id) for r in references.values()
               if r.grasp_id in preds}
    report = evaluate_corpus(preds, references, objects, hands, cfg.epsilon)
    report.rejected = rejected + report.rejected
    eval_dir = cfg.output_dir / "eval"
    eval_dir.mkdir(parents=True, exist_ok=True)
    write_text(eval_dir / "report.json", json.dumps(report.to_dict(), indent=1) + "\n")
    write_text(eval_dir / "table.txt", report.table())
    _log_run(cfg, f"eval predictions={predictions_path} rows={len(report.rows)}")
    return report


# -- stats ------------------------------------------------------------------

def cmd_stats(cfg: PipelineConfig) -> dict:
    ann_path = cfg.output_dir / ANNOTATIONS
    anns = [d for _, d, _ in read_jsonl(ann_path) if d is not None] if ann_path.exists() else []
    kept = [a for a in anns if a["status"] == "kept"]
    conv_path = cfg.output_dir / CONVERSATIONS
    convs = [d for _, d, _ in read_jsonl(conv_path) if d is not None] if conv_path.exists() else []
    per_hand: dict[str, dict] = {}
    for a in kept:
        h = per_hand.setdefault(a["hand"], {"objects": set(), "grasps": 0, "conversations": 0,
                                            "patterns": Counter()})
        h["objects"].add(a["object_id"])
        h["grasps"] += 1
        key = ", ".join(f"{f}:{p}" for f, p in sorted(a["summary"]["parts"]))
        h["patterns"][key] += 1
    for c in convs:
        for g in c["meta"]["grasps"]:
            if g["hand"] in per_hand:
                per_hand[g["hand"]]["conversations"] += 1
    stats = {
        "Hand": len(per_hand),
        "Object": len({a["object_id"] for a in kept}),
        "Grasp": len(kept),
        "Con.": len(convs),
        "dropped": Counter(a["reason"] for a in anns if a["status"] != "kept"),
        "per_hand": {
            h: {"Object": len(v["objects"]), "Grasp": v["grasps"], "Con.": v["conversations"],
                "patterns": dict(sorted(v["patterns"].items()))}
            for h, v in sorted(per_hand.items())
        },
    }
    stats["dropped"] = dict(sorted(stats["dropped"].items()))
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    write_text(cfg.output_dir / "stats.json", json.dumps(stats, indent=1) + "\n")
    write_text(cfg.output_dir / "stats.txt", stats_table(stats))
    return stats


def stats_table(stats: dict) -> str:
    cols = ("Hand", "Object", "Grasp", "Con.")
    lines = [f"{'Dataset':<12}" + "".join(f"{c:>8}" for c in cols)]
    lines.append(f"{'total':<12}" + "".join(f"{stats[c]:>8}" for c in cols))
    for hand, v in stats["per_hand"].items():
        lines.append(f"{hand:<12}{1:>8}" + "".join(f"{v[c]:>8}" for c in cols[1:]))
    for hand, v in stats["per_hand"].items():
        lines.append(f"\n{hand} contact patterns:")
        for key, n in v["patterns"].items():
            lines.append(f"  {n:>5}  {key}")
    return "\n".join(lines) + "\n"
