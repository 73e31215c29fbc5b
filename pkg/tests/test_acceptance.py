"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (the lines are printed even
without ``-s``) or ``python3 tests/test_acceptance.py``.
"""
import json
import shutil
import sys
import time
from fractions import Fraction

import numpy as np
import pytest

from graspkit.codec import (BinVector, StreamParseError, TokenVocabulary, compute_bounds,
                            dediscretize_batch, detokenize, discretize_batch, encode_tokens,
                            render_stream)
from graspkit.config import load_config
from graspkit.contact import ContactRecord, LinkContact, detect_contacts, summarize_contacts
from graspkit.conversation import TemplateSet, fill_template, question_set
from graspkit.fixtures import FIXTURE_OBJECTS, fixture_grasps, glass, hammer, write_fixture
from graspkit.geometry import (box_mesh, build_index, icosphere, signed_distance_batch, torus,
                               unsigned_distance_batch)
from graspkit.kinematics import (BUNDLED_HANDS, GraspPose, forward_kinematics, hand_from_dict,
                                 link_points_world, load_bundled_hand)
from graspkit.metrics import chamfer_distance, max_penetration
from graspkit.pipeline import cmd_annotate, cmd_bounds, cmd_build, cmd_eval, cmd_stats

from oracles import box_sdf, brute_chamfer_cm, brute_unsigned, convex_sdf, threshold_scan_contacts
from test_kinematics import chain_oracle, two_joint_spec


def run_criterion(capsys, number, title, budget, body):
    """Time ``body`` (which returns a list of failure messages) and report."""
    start = time.perf_counter()
    failures = body()
    elapsed = time.perf_counter() - start
    if elapsed >= budget:
        failures.append(f"runtime {elapsed:.2f} s exceeds {budget} s")
    status = "PASS" if not failures else "FAIL"
    with capsys.disabled():
        print(f"\n{status} criterion {number}: {title} ({elapsed:.2f} s, budget {budget} s)")
        for msg in failures[:5]:
            print(f"    {msg}")
    assert not failures, failures


@pytest.fixture(scope="module")
def fixture_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance")
    write_fixture(root)
    return root


def fresh_copy(src, dst):
    shutil.copytree(src, dst)
    return load_config(dst / "config.json")


def test_criterion_1_sdf_oracles(capsys):
    def body():
        out = []
        rng = np.random.default_rng(0)
        pts = rng.uniform(-1.5, 1.5, (10000, 3))
        err = np.abs(signed_distance_batch(build_index(box_mesh()), pts) - box_sdf(pts, [0.5] * 3)).max()
        if err > 1e-6:
            out.append(f"cube max error {err:.3e}")
        sphere = icosphere(3)
        pts = rng.uniform(-1.3, 1.3, (10000, 3))
        err = np.abs(signed_distance_batch(build_index(sphere), pts) - convex_sdf(pts, sphere.triangles)).max()
        if err > 1e-6:
            out.append(f"icosphere max error {err:.3e}")
        for mesh in (box_mesh(), icosphere(3), torus()):
            q = rng.uniform(-1.6, 1.6, (500, 3))
            d, _ = unsigned_distance_batch(build_index(mesh), q)
            ref, _ = brute_unsigned(q, mesh.triangles)
            err = np.abs(d - ref).max()
            if err > 1e-12:
                out.append(f"{mesh.name} BVH vs exhaustive {err:.3e}")
        return out

    run_criterion(capsys, 1, "SDF oracle equivalence", 10, body)


def test_criterion_2_contact_equivalence(capsys):
    grasps = fixture_grasps()
    meshes = {oid: make() for oid, (make, _, _) in FIXTURE_OBJECTS.items()}
    hands = {h: load_bundled_hand(h) for h in {g["hand"] for g in grasps}}

    def body():
        out = []
        indices = {oid: build_index(m) for oid, m in meshes.items()}
        checked = 0
        for g in grasps:
            mesh, hand = meshes[g["object_id"]], hands[g["hand"]]
            pts = link_points_world(hand, GraspPose(g["hand"], g["T"], g["R"], g["theta"]))
            rec = detect_contacts(pts, indices[g["object_id"]], 0.005, hand.fingers, g["grasp_id"])
            ref = threshold_scan_contacts(pts, mesh.triangles, mesh.face_part_labels,
                                          lambda p: convex_sdf(p, mesh.triangles) < 0, 0.005)
            for c in rec.links:
                checked += 1
                if (c.in_contact, c.contact_part) != ref[c.link_name]:
                    out.append(f"{g['grasp_id']}/{c.link_name}: {(c.in_contact, c.contact_part)} "
                               f"vs {ref[c.link_name]}")
        if len(grasps) != 20 or checked == 0:
            out.append(f"expected 20 grasps, got {len(grasps)}")
        return out

    run_criterion(capsys, 2, "contact detection vs threshold scan", 5, body)


def test_criterion_3_codec_bound(capsys):
    hands = {h: load_bundled_hand(h) for h in BUNDLED_HANDS}

    def exact_ok(x, b, L, U, N, half):
        span = Fraction(float(U)) - Fraction(float(L))
        rec = Fraction(float(L)) + (int(b) + (Fraction(1, 2) if half else 0)) * span / N
        bound = span / (2 * N) if half else span / N
        return abs(Fraction(float(x)) - rec) <= bound

    def body():
        out = []
        rng = np.random.default_rng(3)
        for name, hand in hands.items():
            corpus = [GraspPose(name, rng.uniform(-0.3, 0.3, 3), rng.uniform(-3, 3, 3),
                                rng.uniform(hand.lower, hand.upper)) for _ in range(50)]
            for N in (256, 384, 512):
                spec = compute_bounds(corpus, N)
                X = rng.uniform(spec.L, spec.U, (10000, spec.ndim))
                X[0], X[1] = spec.L, spec.U
                B, outside = discretize_batch(X, spec)
                if outside.any():
                    out.append(f"{name} N={N}: in-range values flagged as clamped")
                for mode, half, bound in (("center", True, spec.W / 2), ("paper", False, spec.W)):
                    err = np.abs(dediscretize_batch(B, spec, mode) - X)
                    # the float check screens; anything near the bound is settled exactly
                    # on the rational reconstruction, and the float one may add rounding only
                    slack = 4 * np.spacing(np.maximum(np.abs(spec.L), np.abs(spec.U)))
                    close = np.argwhere(err > bound * (1 - 1e-9))
                    bad = sum(not exact_ok(X[r, i], B[r, i], spec.L[i], spec.U[i], N, half)
                              for r, i in close)
                    bad += int(np.count_nonzero(err > bound + slack))
                    if bad:
                        out.append(f"{name} N={N} {mode}: {bad} violations")
        return out

    run_criterion(capsys, 3, "codec round-trip bound", 30, body)


def malformed_corpus(ndim):
    body = " ".join(["<bin:7>"] * ndim)
    return [
        ("", "missing header"),
        ("hello <hand:jaco>", "missing header"),
        ("<hand:robotiq> <scale:1> <grasp> </grasp>", "unknown hand"),
        ("<hand:jaco> <grasp> <bin:1> </grasp>", "missing scale"),
        ("<hand:jaco> <scale:1> <bin:1> </grasp>", "missing grasp open"),
        ("<hand:jaco> <scale:1> <grasp> <bin:1> <bin:2>", "unterminated grasp"),
        ("<hand:jaco> <scale:1> <grasp> <bin:1> then <bin:2> </grasp>", "interleaved text"),
        ("<hand:jaco> <scale:1> <grasp> <bin:512> </grasp>", "token out of range"),
        ("<hand:jaco> <scale:1> <grasp> " + " ".join(["<bin:400>"] * ndim) + " </grasp>",
         "token out of range"),
        ("<hand:jaco> <scale:5> <grasp> <bin:7> </grasp>", "arity mismatch"),
        ("<hand:jaco> <scale:5> <grasp> " + body + " <bin:7> </grasp>", "arity mismatch"),
    ]


def test_criterion_4_token_bijection(capsys):
    vocab = TokenVocabulary(BUNDLED_HANDS)
    hands = {h: load_bundled_hand(h) for h in BUNDLED_HANDS}
    rng = np.random.default_rng(4)
    corpora = {name: [GraspPose(name, rng.uniform(-0.3, 0.3, 3), rng.uniform(-3, 3, 3),
                                rng.uniform(hand.lower, hand.upper)) for _ in range(20)]
               for name, hand in hands.items()}
    specs = {name: compute_bounds(corpus, 512) for name, corpus in corpora.items()}

    def body():
        out = []
        for name, spec in specs.items():
            for _ in range(1000):
                bins = rng.integers(0, 512, spec.ndim).tolist()
                scale = int(rng.integers(0, 512))
                toks = encode_tokens(name, scale, bins, vocab)
                dec = detokenize(render_stream(toks), vocab, specs)
                if dec.bins != BinVector(name, bins) or dec.scale_bin != scale or dec.pose.hand != name:
                    out.append(f"{name}: round trip failed for {bins}")
                    break
                if vocab.decode_ids(vocab.encode_ids(toks)) != toks:
                    out.append(f"{name}: id round trip failed")
                    break
        # the malformed corpus is checked against N=384 specs so that bins
        # 384..511 are valid vocabulary tokens but out of range
        specs384 = {name: compute_bounds(corpora[name], 384) for name in specs}
        cases = malformed_corpus(specs384["jaco"].ndim)
        if len(cases) < 10:
            out.append("malformed corpus too small")
        for stream, kind in cases:
            try:
                detokenize(stream, vocab, specs384)
                out.append(f"accepted malformed stream {stream!r}")
            except StreamParseError as exc:
                if exc.kind != kind:
                    out.append(f"{stream!r}: {exc.kind!r} instead of {kind!r}")
        return out

    run_criterion(capsys, 4, "token bijection and malformed streams", 5, body)


def test_criterion_5_template_fidelity(capsys):
    templates = TemplateSet.load()
    glass_mesh, hammer_mesh = glass(), hammer()
    rim = next(k for k, v in glass_mesh.part_names.items() if v == "rim")
    body_part = next(k for k, v in glass_mesh.part_names.items() if v == "body")
    grip = next(k for k, v in hammer_mesh.part_names.items() if v == "grip")

    def body():
        out = []
        glass_rec = ContactRecord("g", 0.005, (LinkContact("th", "thumb", True, rim, -0.001),
                                               LinkContact("ix", "index", True, body_part, -0.001)))
        summary = summarize_contacts(glass_rec, "glass", glass_mesh)
        hand = load_bundled_hand("shadow").label
        clause = "The thumb contacts the glass's rim; the index finger contacts the glass's body"
        expected = {
            "low": "How do you grasp the glass using the Shadow Hand?",
            "mid": "How do you grasp the rim of the glass using the Shadow Hand?",
            "high": f"Demonstrate the ideal pose of the Shadow Hand to grasp the glass: {clause}.",
        }
        every = question_set("glass", hand, summary, templates, 0, size_range=(12, 12))
        for level, text in expected.items():
            if (level, text) not in every:
                out.append(f"{level} question missing: {text!r}")
            if fill_template(level, "glass", hand, summary, templates, 0, 0) != text:
                out.append(f"{level} template renders differently")
        hammer_rec = ContactRecord("h", 0.005, tuple(
            LinkContact(f"{f}_tip", f, True, grip, -0.001) for f in ("thumb", "index", "middle", "ring")))
        text = summarize_contacts(hammer_rec, "hammer", hammer_mesh).text
        if text != "Four fingers grasp the grip of the hammer.":
            out.append(f"hammer summary {text!r}")
        return out

    run_criterion(capsys, 5, "template fidelity", 1, body)


def test_criterion_6_metric_oracles(capsys, fixture_root, tmp_path):
    cfg = fresh_copy(fixture_root, tmp_path / "metrics")
    cmd_annotate(cfg)
    cmd_bounds(cfg)

    def body():
        out = []
        rng = np.random.default_rng(6)
        for _ in range(3):
            A, B = rng.normal(size=(512, 3)), rng.normal(size=(512, 3)) + 0.2
            err = abs(chamfer_distance(A, B) - brute_chamfer_cm(A, B))
            if err > 1e-10:
                out.append(f"chamfer error {err:.3e}")
        sphere = icosphere(2)
        idx = build_index(sphere)
        for _ in range(5):
            pts = rng.uniform(-1.2, 1.2, (512, 3))
            ref = max(0.0, -convex_sdf(pts, sphere.triangles).min()) * 100
            if abs(max_penetration(pts, idx) - ref) > 1e-9:
                out.append("max_penetration differs from per-point scan")
        report = cmd_eval(cfg, cfg.output_dir / "kept.jsonl")
        if len(report.rows) != 19 or any(r.cd_cm != 0.0 for r in report.rows):
            out.append(f"identity eval: {len(report.rows)} rows, CDs {[r.cd_cm for r in report.rows][:3]}")
        return out

    run_criterion(capsys, 6, "metric oracles", 10, body)


def test_criterion_7_pipeline_determinism(capsys, fixture_root, tmp_path):
    def outputs(out_dir):
        return {str(p.relative_to(out_dir)): p.read_bytes() for p in sorted(out_dir.rglob("*"))
                if p.is_file() and p.name != "run.log"}

    def run(cfg):
        res = cmd_annotate(cfg)
        cmd_bounds(cfg)
        cmd_build(cfg)
        cmd_stats(cfg)
        return res

    def body():
        out = []
        one = fresh_copy(fixture_root, tmp_path / "w1")
        res = run(one)
        if (res.kept, res.dropped, dict(res.reasons)) != (19, 1, {"penetration": 1}):
            out.append(f"kept {res.kept}, dropped {res.dropped} {dict(res.reasons)}")
        first = outputs(one.output_dir)
        run(load_config(tmp_path / "w1" / "config.json", workers=1))
        if outputs(one.output_dir) != first:
            out.append("rerun changed outputs")
        fresh = load_config(tmp_path / "w1" / "config.json")
        cmd_annotate(fresh, fresh=True)
        if outputs(one.output_dir) != first:
            out.append("fresh rerun changed outputs")
        shutil.copytree(fixture_root, tmp_path / "w4")
        run(load_config(tmp_path / "w4" / "config.json", workers=4))
        if outputs(tmp_path / "w4" / "out") != first:
            out.append("workers=4 outputs differ from workers=1")
        stats = json.loads(first["stats.json"])
        if stats["Grasp"] != 19:
            out.append(f"stats grasp count {stats['Grasp']}")
        return out

    run_criterion(capsys, 7, "pipeline determinism and pinned fixture", 20, body)


def test_criterion_8_fk_oracle(capsys):
    chain = hand_from_dict(two_joint_spec())
    hands = {h: load_bundled_hand(h) for h in BUNDLED_HANDS}

    def body():
        out = []
        rng = np.random.default_rng(8)
        worst = 0.0
        for _ in range(1000):
            T, R = rng.uniform(-1, 1, 3), rng.uniform(-2, 2, 3)
            a, b = rng.uniform(-3.2, 3.2, 2)
            tf = forward_kinematics(chain, GraspPose("chain", T, R, [a, b]))
            l1, l2 = chain_oracle(T, R, a, b)
            worst = max(worst, np.abs(tf["l1"] - l1).max(), np.abs(tf["l2"] - l2).max())
        if worst > 1e-10:
            out.append(f"chain FK error {worst:.3e}")
        for name, hand in hands.items():
            local = {link.name: link.sample_points for link in hand.links if len(link.sample_points) > 1}
            ref = {ln: np.linalg.norm(p[:, None] - p[None], axis=-1) for ln, p in local.items()}
            drift = 0.0
            for _ in range(100):
                pose = GraspPose(name, rng.uniform(-0.5, 0.5, 3), rng.uniform(-2, 2, 3),
                                 rng.uniform(hand.lower, hand.upper))
                pts = link_points_world(hand, pose)
                for ln, d0 in ref.items():
                    d1 = np.linalg.norm(pts[ln][:, None] - pts[ln][None], axis=-1)
                    drift = max(drift, np.abs(d1 - d0).max())
            if drift > 1e-9:
                out.append(f"{name} rigidity drift {drift:.3e}")
        return out

    run_criterion(capsys, 8, "FK oracle and rigidity", 10, body)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
