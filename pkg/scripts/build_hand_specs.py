#!/usr/bin/env python3
"""Regenerate the bundled hand specs in src/graspkit/hands/.

Link geometry is approximated by boxes; each hand gets 512 surface sample
points split across links by box surface area. Dimensions and joint limits
are rough values for the real hands, which is enough for annotation tests.
"""
import json
import math
from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parents[1] / "src" / "graspkit" / "hands"
TOTAL_POINTS = 512
X, Y, Z = (1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)
NX, NY, NZ = (-1.0, 0.0, 0.0), (0.0, -1.0, 0.0), (0.0, 0.0, -1.0)


class Builder:
    def __init__(self, name, display, kind):
        self.name, self.display, self.kind = name, display, kind
        self.links, self.joints, self.mimic, self.boxes = [], [], [], {}

    def link(self, name, finger, box=None):
        self.links.append({"name": name, "finger": finger})
        if box is not None:
            self.boxes[name] = np.asarray(box, dtype=float)

    def joint(self, name, parent, child, jtype, axis=Z, xyz=(0, 0, 0), rpy=(0, 0, 0), limits=None):
        self.joints.append({
            "name": name, "parent_link": parent, "child_link": child, "type": jtype,
            "axis": list(axis), "origin": {"xyz": list(xyz), "rpy": list(rpy)},
            "limits": list(limits) if limits else None,
        })

    def mimic_joint(self, joint, source, ratio):
        self.mimic.append({"joint": joint, "source": source, "ratio": ratio})

    def finish(self, seed):
        rng = np.random.default_rng(seed)
        names = list(self.boxes)
        areas = np.array([_box_area(self.boxes[n]) for n in names])
        share = areas / areas.sum() * TOTAL_POINTS
        counts = np.floor(share).astype(int)
        for i in np.argsort(-(share - counts), kind="stable")[: TOTAL_POINTS - counts.sum()]:
            counts[i] += 1
        for link in self.links:
            pts = []
            if link["name"] in self.boxes:
                pts = _sample_box(self.boxes[link["name"]], counts[names.index(link["name"])], rng)
            link["sample_points"] = np.round(pts, 6).tolist() if len(pts) else []
        mimicked = {m["joint"] for m in self.mimic}
        dof = sum(1 for j in self.joints if j["type"] != "fixed" and j["name"] not in mimicked)
        return {"name": self.name, "display_name": self.display, "kind": self.kind, "dof": dof,
                "joints": self.joints, "links": self.links, "mimic": self.mimic}


def _box_area(box):
    e = box[1] - box[0]
    return 2 * (e[0] * e[1] + e[1] * e[2] + e[0] * e[2])


def _sample_box(box, n, rng):
    lo, hi = box
    e = hi - lo
    face_areas = np.array([e[1] * e[2]] * 2 + [e[0] * e[2]] * 2 + [e[0] * e[1]] * 2)
    face = rng.choice(6, size=n, p=face_areas / face_areas.sum())
    pts = lo + rng.random((n, 3)) * e
    axis = face // 2
    side = face % 2
    pts[np.arange(n), axis] = np.where(side == 1, hi[axis], lo[axis])
    return pts


def seg(length, half=0.0098, start=0.0):
    return [(-half, -half, start), (half, half, start + length)]


def allegro():
    b = Builder("allegro", "Allegro Hand", "dexterous")
    b.link("palm", "palm", [(-0.0475, -0.012, 0.0), (0.0475, 0.012, 0.095)])
    for finger, x in (("index", 0.0435), ("middle", 0.0), ("ring", -0.0435)):
        p = finger[0] + "f"
        b.link(f"{p}_base", finger, seg(0.0164))
        b.link(f"{p}_proximal", finger, seg(0.054))
        b.link(f"{p}_medial", finger, seg(0.0384))
        b.link(f"{p}_distal", finger, seg(0.0445))
        b.joint(f"{p}_j0", "palm", f"{p}_base", "revolute", Y, (x, 0, 0.095), limits=(-0.47, 0.47))
        b.joint(f"{p}_j1", f"{p}_base", f"{p}_proximal", "revolute", X, (0, 0, 0.0164), limits=(-0.196, 1.61))
        b.joint(f"{p}_j2", f"{p}_proximal", f"{p}_medial", "revolute", X, (0, 0, 0.054), limits=(-0.174, 1.709))
        b.joint(f"{p}_j3", f"{p}_medial", f"{p}_distal", "revolute", X, (0, 0, 0.0384), limits=(-0.227, 1.618))
    b.link("th_base", "thumb", seg(0.0177))
    b.link("th_proximal", "thumb", seg(0.038))
    b.link("th_medial", "thumb", seg(0.0514))
    b.link("th_distal", "thumb", seg(0.0423))
    b.joint("th_j0", "palm", "th_base", "revolute", X, (0.03, -0.02, 0.02), (0, 1.1, 0), (0.263, 1.396))
    b.joint("th_j1", "th_base", "th_proximal", "revolute", Z, (0, 0, 0.0177), limits=(-0.105, 1.163))
    b.joint("th_j2", "th_proximal", "th_medial", "revolute", X, (0, 0, 0.038), limits=(-0.189, 1.644))
    b.joint("th_j3", "th_medial", "th_distal", "revolute", X, (0, 0, 0.0514), limits=(-0.162, 1.719))
    return b.finish(11)


def shadow():
    b = Builder("shadow", "Shadow Hand", "dexterous")
    b.link("palm", "palm", [(-0.044, -0.011, 0.0), (0.044, 0.011, 0.095)])
    for finger, prefix, x in (("index", "ff", 0.033), ("middle", "mf", 0.011), ("ring", "rf", -0.011)):
        parent = "palm"
        _shadow_finger(b, finger, prefix, parent, (x, 0, 0.095))
    b.link("lfmetacarpal", "little", [(-0.011, -0.01, 0.0), (0.011, 0.01, 0.06)])
    tilt = math.radians(35)
    b.joint("LFJ5", "palm", "lfmetacarpal", "revolute", (math.sin(tilt), 0.0, math.cos(tilt)),
            (-0.033, 0, 0.035), limits=(0.0, 0.785))
    _shadow_finger(b, "little", "lf", "lfmetacarpal", (0, 0, 0.06))
    b.link("thbase", "thumb")
    b.link("thproximal", "thumb", seg(0.038, 0.011))
    b.link("thhub", "thumb")
    b.link("thmiddle", "thumb", seg(0.032, 0.01))
    b.link("thdistal", "thumb", seg(0.0275, 0.0095))
    b.joint("THJ5", "palm", "thbase", "revolute", NZ, (0.034, -0.0085, 0.029), (0, 0.785, 0), (-1.047, 1.047))
    b.joint("THJ4", "thbase", "thproximal", "revolute", X, limits=(0.0, 1.222))
    b.joint("THJ3", "thproximal", "thhub", "revolute", X, (0, 0, 0.038), limits=(-0.209, 0.209))
    b.joint("THJ2", "thhub", "thmiddle", "revolute", Y, limits=(-0.698, 0.698))
    b.joint("THJ1", "thmiddle", "thdistal", "revolute", X, (0, 0, 0.032), limits=(-0.262, 1.571))
    return b.finish(12)


def _shadow_finger(b, finger, p, parent, xyz):
    up = p.upper()
    b.link(f"{p}knuckle", finger)
    b.link(f"{p}proximal", finger, seg(0.045, 0.01))
    b.link(f"{p}middle", finger, seg(0.025, 0.009))
    b.link(f"{p}distal", finger, seg(0.026, 0.0085))
    b.joint(f"{up}J4", parent, f"{p}knuckle", "revolute", NY, xyz, limits=(-0.349, 0.349))
    b.joint(f"{up}J3", f"{p}knuckle", f"{p}proximal", "revolute", X, limits=(-0.262, 1.571))
    b.joint(f"{up}J2", f"{p}proximal", f"{p}middle", "revolute", X, (0, 0, 0.045), limits=(0.0, 1.571))
    b.joint(f"{up}J1", f"{p}middle", f"{p}distal", "revolute", X, (0, 0, 0.025), limits=(0.0, 1.571))


def barrett():
    b = Builder("barrett", "Barrett Hand", "dexterous")
    b.link("palm", "palm", [(-0.045, -0.045, 0.0), (0.045, 0.045, 0.08)])
    fingers = (("f1", "index", (0.025, 0.025, 0.08), (0, 0, 0)),
               ("f2", "middle", (-0.025, 0.025, 0.08), (0, 0, 0)),
               ("f3", "thumb", (0.0, -0.025, 0.08), (0, 0, math.pi)))
    for p, finger, xyz, rpy in fingers:
        b.link(f"{p}_knuckle", finger)
        b.link(f"{p}_proximal", finger, seg(0.07, 0.011))
        b.link(f"{p}_distal", finger, seg(0.056, 0.01))
    b.joint("f1_spread", "palm", "f1_knuckle", "revolute", Z, fingers[0][2], limits=(0.0, math.pi))
    b.joint("f2_spread", "palm", "f2_knuckle", "revolute", NZ, fingers[1][2], limits=(0.0, math.pi))
    b.joint("f3_base", "palm", "f3_knuckle", "fixed", xyz=fingers[2][2], rpy=fingers[2][3])
    for p, *_ in fingers:
        b.joint(f"{p}_prox", f"{p}_knuckle", f"{p}_proximal", "revolute", X, limits=(0.0, 2.44))
    for p, *_ in fingers:
        b.joint(f"{p}_dist", f"{p}_proximal", f"{p}_distal", "revolute", X, (0, 0, 0.07),
                (0, 0, 0), (0.0, 0.84))
        b.mimic_joint(f"{p}_dist", f"{p}_prox", 0.3442)
    b.mimic_joint("f2_spread", "f1_spread", 1.0)
    return b.finish(13)


def jaco():
    b = Builder("jaco", "Jaco Hand", "dexterous")
    b.link("palm", "palm", [(-0.04, -0.03, 0.0), (0.04, 0.03, 0.09)])
    fingers = (("thumb", (0.0, -0.03, 0.09), (0, 0, math.pi)),
               ("index", (0.025, 0.03, 0.09), (0, 0, 0)),
               ("middle", (-0.025, 0.03, 0.09), (0, 0, 0)))
    for finger, xyz, rpy in fingers:
        b.link(f"{finger}_proximal", finger, seg(0.044, 0.01))
        b.link(f"{finger}_tip", finger, seg(0.04, 0.009))
        b.joint(f"{finger}_joint", "palm", f"{finger}_proximal", "revolute", X, xyz, rpy, (0.0, 1.51))
        b.joint(f"{finger}_tip_joint", f"{finger}_proximal", f"{finger}_tip", "fixed",
                xyz=(0, 0, 0.044), rpy=(0.3, 0, 0))
    return b.finish(14)


def panda():
    b = Builder("panda", "Panda Gripper", "gripper")
    b.link("hand", "palm", [(-0.02, -0.1, 0.0), (0.02, 0.1, 0.0584)])
    b.link("left_finger", "left", [(-0.01, 0.0, 0.0), (0.01, 0.02, 0.054)])
    b.link("right_finger", "right", [(-0.01, -0.02, 0.0), (0.01, 0.0, 0.054)])
    b.joint("finger_joint1", "hand", "left_finger", "prismatic", Y, (0, 0, 0.0584), limits=(0.0, 0.04))
    b.joint("finger_joint2", "hand", "right_finger", "prismatic", NY, (0, 0, 0.0584), limits=(0.0, 0.04))
    b.mimic_joint("finger_joint2", "finger_joint1", 1.0)
    return b.finish(15)


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for make in (allegro, shadow, barrett, jaco, panda):
        spec = make()
        (OUT / f"{spec['name']}.json").write_text(json.dumps(spec, indent=1) + "\n")
        print(spec["name"], "dof", spec["dof"], "points", sum(len(l["sample_points"]) for l in spec["links"]))


if __name__ == "__main__":
    main()
