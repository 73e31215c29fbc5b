import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from graspkit.contact import (ContactRecord, ContactSummary, LinkContact, NoContactError,
                              count_word, detect_contacts, filter_by_penetration,
                              penetration_depth, render_summary, select_grasps_per_pattern,
                              summarize_contacts)
from graspkit.geometry import TriangleMesh, box_mesh, build_index

from oracles import box_sdf, threshold_scan_contacts


@pytest.fixture(scope="module")
def lidded_cube():
    # faces 0-9 are the sides and bottom ("body"), 10-11 the top ("lid")
    base = box_mesh()
    labels = np.array([0] * 10 + [1] * 2)
    mesh = TriangleMesh(base.vertices, base.faces, labels, {0: "body", 1: "lid"}, "box")
    return mesh, build_index(mesh)


def test_point_just_inside_contacts(lidded_cube):
    _, idx = lidded_cube
    rec = detect_contacts({"tip": np.array([[0.499, 0.0, 0.0]])}, idx, 0.005, {"tip": "index"})
    c = rec.links[0]
    assert c.in_contact and abs(c.min_distance + 0.001) < 1e-12
    assert rec.epsilon == 0.005


def test_far_links_not_in_contact(lidded_cube):
    _, idx = lidded_cube
    pts = {"a": np.array([[0.56, 0, 0], [0.6, 0.1, 0]]), "b": np.array([[0, 0, 0.6]])}
    rec = detect_contacts(pts, idx, 0.005)
    assert not any(c.in_contact for c in rec.links)
    assert all(c.contact_part is None for c in rec.links)


def test_empty_link_warns(lidded_cube):
    _, idx = lidded_cube
    rec = detect_contacts({"a": np.zeros((0, 3)), "b": np.array([[0.5, 0, 0]])}, idx, 0.005)
    assert rec.links[0].min_distance == float("inf") and not rec.links[0].in_contact
    assert len(rec.warnings) == 1
    assert rec.links[1].in_contact


def test_straddling_toy_hand_matches_scan(lidded_cube):
    mesh, idx = lidded_cube
    rng = np.random.default_rng(0)
    for _ in range(30):
        # two links near the top edge, one slightly above the lid, one beside the body
        lid = np.array([rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4), 0.5]) + rng.normal(0, 0.003, (8, 3))
        side = np.array([0.5, rng.uniform(-0.4, 0.4), rng.uniform(0.3, 0.48)]) + rng.normal(0, 0.003, (8, 3))
        pts = {"l_lid": lid, "l_side": side}
        rec = detect_contacts(pts, idx, 0.005)
        ref = threshold_scan_contacts(pts, mesh.triangles, mesh.face_part_labels,
                                      lambda p: box_sdf(p, [0.5] * 3) < 0, 0.005)
        for c in rec.links:
            assert (c.in_contact, c.contact_part) == ref[c.link_name]


@settings(max_examples=50, deadline=None)
@given(st.floats(0.001, 0.05), st.floats(0.0, 0.05))
def test_epsilon_monotone(eps, extra):
    idx = build_index(box_mesh())
    pts = {f"l{i}": np.random.default_rng(i).uniform(-0.56, 0.56, (5, 3)) for i in range(4)}
    small = detect_contacts(pts, idx, eps)
    big = detect_contacts(pts, idx, eps + extra)
    for a, b in zip(small.links, big.links):
        assert not a.in_contact or b.in_contact


def test_record_roundtrip():
    rec = ContactRecord("g", 0.005, (LinkContact("a", "index", True, 1, -0.001),
                                     LinkContact("b", "thumb", False, None, float("inf"))))
    again = ContactRecord.from_dict(rec.to_dict())
    assert again == ContactRecord("g", 0.005, rec.links)


def test_finger_takes_closest_link():
    rec = ContactRecord("g", 0.005, (LinkContact("a", "index", True, 0, 0.004),
                                     LinkContact("b", "index", True, 1, -0.002)))
    assert rec.finger_parts() == {"index": 1}


def record_from(parts):
    return ContactRecord("g", 0.005, tuple(
        LinkContact(f"{f}_link", f, True, p, -0.001) for f, p in parts))


def test_four_fingers_general():
    rec = record_from([("index", 0), ("middle", 0), ("thumb", 0), ("ring", 0)])
    s = summarize_contacts(rec, "hammer", {0: "grip", 1: "head"})
    assert s.mode == "general"
    assert s.text == "Four fingers grasp the grip of the hammer."


def test_detailed_two_parts():
    s = summarize_contacts(record_from([("thumb", 0), ("index", 1)]), "glass", {0: "rim", 1: "body"})
    assert s.mode == "detailed"
    assert s.text == "The thumb contacts the glass's rim; the index finger contacts the glass's body."
    assert ("thumb", "rim") in s.parts and ("index", "body") in s.parts


def test_one_finger_general():
    s = summarize_contacts(record_from([("middle", 0)]), "mug", {0: "handle"})
    assert s.text == "One finger grasps the handle of the mug."


def test_palm_not_counted():
    s = summarize_contacts(record_from([("palm", 0), ("index", 0), ("thumb", 0)]), "hammer", {0: "grip"})
    assert s.finger_count == 2
    assert s.text == "Two fingers and the palm grasp the grip of the hammer."


def test_no_contact_error():
    rec = ContactRecord("g", 0.005, (LinkContact("a", "index", False, None, 0.1),))
    with pytest.raises(NoContactError, match="no-contact grasp"):
        summarize_contacts(rec, "x", {})


def test_count_words():
    assert count_word(10) == "Ten" and count_word(11) == "11"
    parts = [(f"f{i}", "grip") for i in range(12)]
    assert render_summary("general", "rake", parts).startswith("12 fingers")


def test_summary_text_is_pure():
    s = summarize_contacts(record_from([("thumb", 0), ("index", 1), ("ring", 1)]), "cup",
                           {0: "rim", 1: "body"})
    assert render_summary(s.mode, s.object_name, s.parts) == s.text
    assert ContactSummary.from_dict(s.to_dict()) == s


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(["thumb", "index", "middle", "ring", "little", "palm"]),
                          st.integers(0, 2)), min_size=1, max_size=6))
def test_mode_law(pairs):
    rec = record_from(pairs)
    s = summarize_contacts(rec, "obj", {0: "a", 1: "b", 2: "c"})
    assert (s.mode == "general") == (len(set(rec.finger_parts().values())) == 1)


def test_penetration_filter_rules():
    idx = build_index(box_mesh())
    outside = np.array([[0.6, 0, 0], [0, 0.7, 0]])
    assert filter_by_penetration(outside, idx, 0.02)
    assert not filter_by_penetration(np.vstack([outside, [[0.47, 0, 0]]]), idx, 0.02)
    # top face at z = 0 so the depth of z = -0.02 is exactly 0.02
    shifted = build_index(box_mesh(center=(0.0, 0.0, -0.5)))
    at = np.array([[0.0, 0.0, -0.02]])
    assert penetration_depth(at, shifted) == 0.02
    assert filter_by_penetration(at, shifted, 0.02)
    assert not filter_by_penetration(at, shifted, 0.0199)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.001, 0.1), st.floats(0.0, 0.1))
def test_filter_monotone(th, extra):
    idx = build_index(box_mesh())
    pts = np.random.default_rng(3).uniform(-0.55, 0.55, (20, 3))
    if filter_by_penetration(pts, idx, th):
        assert filter_by_penetration(pts, idx, th + extra)


def test_select_same_pattern():
    recs = [(f"g{i}", [("index", 0)]) for i in range(5)]
    assert len(select_grasps_per_pattern(recs, 1, seed=0)) == 1


def test_select_distinct_patterns():
    recs = [("a", [("index", 0)]), ("b", [("index", 1)]), ("c", [("thumb", 0)]), ("d", [("index", 1)])]
    out = select_grasps_per_pattern(recs, 1, seed=3)
    assert len(out) == 3 and "a" in out and "c" in out
    assert out == select_grasps_per_pattern(recs, 1, seed=3)


def test_select_records_and_order():
    recs = [record_from([("index", i % 2)]) for i in range(6)]
    recs = [ContactRecord(f"g{i}", r.epsilon, r.links) for i, r in enumerate(recs)]
    out = select_grasps_per_pattern(recs, 2, seed=1)
    assert len(out) == 4
    assert out == sorted(out, key=lambda g: int(g[1:]))
