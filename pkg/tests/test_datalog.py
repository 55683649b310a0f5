import json
import random

import numpy as np
import pytest

from vrgl import scene as sc
from vrgl.datalog import (
    CommandRecord,
    GraspContactEvent,
    HeatMap,
    LogError,
    OdometrySample,
    SessionLog,
    SessionRecorder,
    contacts_from_session,
    footprint_export,
    heatmap_accumulate,
    heatmap_average,
    replay,
)

MAP = "\n".join(["#" * 10] + ["#" + "." * 8 + "#"] * 8 + ["#" * 10])


def scene_doc():
    return json.dumps({
        "ascii": MAP.splitlines(),
        "entities": [
            {"id": "agent1", "kind": "agent", "pose": {"x": 3.0, "y": 5.0, "yaw": 0.0}},
            {"id": "mug", "kind": "object", "pose": {"x": 3.6, "y": 5.0}},
        ],
    })


def fresh_session(doc=None):
    doc = doc or scene_doc()
    return SessionLog("s1", "subjectA", sc.document_hash(doc)), doc


class TestRecord:
    def test_append_one(self):
        log, _ = fresh_session()
        log.record(OdometrySample(0, "agent1", sc.Pose(1, 2, 0.5)))
        assert len(log.records) == 1

    def test_tick_regression_rejected(self):
        log, _ = fresh_session()
        log.record(OdometrySample(5, "agent1", sc.Pose(0, 0)))
        with pytest.raises(LogError, match="regression"):
            log.record(OdometrySample(4, "agent1", sc.Pose(0, 0)))

    def test_jsonl_round_trip(self):
        log, _ = fresh_session()
        log.record(CommandRecord(1, "agent1", 1.0, -0.25))
        log.record(OdometrySample(1, "agent1", sc.Pose(0.1, 0.2, 0.3)))
        log.record(GraspContactEvent(2, "agent1", "mug", (1, 3, 4)))
        again = SessionLog.from_jsonl(log.to_jsonl())
        assert again.records == log.records
        assert again.session_id == "s1" and again.subject_id == "subjectA"


class TestFootprint:
    def test_filters_by_agent(self):
        log, _ = fresh_session()
        log.record(OdometrySample(0, "A", sc.Pose(0, 0)))
        log.record(OdometrySample(1, "B", sc.Pose(1, 1)))
        log.record(OdometrySample(2, "A", sc.Pose(2, 0)))
        csv = footprint_export(log, "A")
        lines = csv.strip().splitlines()
        assert lines[0] == "tick,x,y,yaw"
        assert len(lines) == 3
        assert all(",1.0," not in ln for ln in lines[1:])

    def test_empty_session_header_only(self):
        log, _ = fresh_session()
        assert footprint_export(log, "A") == "tick,x,y,yaw\n"

    def test_straight_run_monotone_x(self):
        log, doc = fresh_session()
        scene = sc.load_scene(doc)
        rec = SessionRecorder(log)
        rec.on_reset(scene)
        for _ in range(30):
            cmds = [sc.VelocityCommand("agent1", v=1.0)]
            nxt, events = sc.step(scene, cmds)
            rec.on_step(cmds, nxt, events, scene)
            scene = nxt
        rows = footprint_export(log, "agent1").strip().splitlines()[1:]
        xs = [float(r.split(",")[1]) for r in rows]
        assert xs == sorted(xs) and xs[-1] > xs[0]


class TestHeatmap:
    def test_all_zeros_without_events(self):
        hm = heatmap_accumulate([], "mug")
        assert hm.counts.sum() == 0

    def test_counts_conserved(self):
        events = [GraspContactEvent(t, "a", "mug", (0, 1, 2)) for t in range(5)]
        events += [GraspContactEvent(9, "a", "mug", (2, 7, 7))]
        hm = heatmap_accumulate(events, "mug")
        assert hm.counts[0, 1, 2] == 5
        assert hm.counts[2, 7, 7] == 1
        assert int(hm.counts.sum()) == len(events)

    def test_wrong_object_rejected(self):
        with pytest.raises(LogError, match="mixed"):
            heatmap_accumulate([GraspContactEvent(0, "a", "bowl", (0, 0, 0))], "mug")

    def test_patch_out_of_range_rejected(self):
        with pytest.raises(LogError, match="outside"):
            GraspContactEvent(0, "a", "mug", (4, 0, 0))

    def test_average_of_identical_maps_is_normalization(self):
        events = [GraspContactEvent(0, "a", "mug", (1, 1, 1))] * 3
        hm = heatmap_accumulate(events, "mug")
        avg = heatmap_average([hm, hm, hm])
        np.testing.assert_allclose(avg.normalized(), hm.normalized())

    def test_two_subject_average_hand_computed(self):
        # subject 1: 2 contacts on p; subject 2: 4 contacts on q -> 0.5 at both
        m1 = heatmap_accumulate([GraspContactEvent(t, "a", "mug", (0, 0, 0)) for t in range(2)], "mug")
        m2 = heatmap_accumulate([GraspContactEvent(t, "b", "mug", (3, 7, 0)) for t in range(4)], "mug")
        avg = heatmap_average([m1, m2])
        vals = avg.normalized()
        assert vals[0, 0, 0] == pytest.approx(0.5)
        assert vals[3, 7, 0] == pytest.approx(0.5)
        assert vals.sum() == pytest.approx(1.0)

    def test_average_requires_matching_dims(self):
        with pytest.raises(LogError, match="mismatch"):
            heatmap_average([HeatMap("mug"), HeatMap("bowl")])
        with pytest.raises(LogError, match="zero"):
            heatmap_average([])

    def test_export_schema(self):
        hm = heatmap_accumulate([GraspContactEvent(0, "a", "mug", (0, 0, 0))], "mug")
        d = hm.to_dict()
        assert d["object"] == "mug" and d["dims"] == [4, 8, 8]
        assert len(d["counts"]) == 4 * 8 * 8


def drive(doc, script, subject="subj"):
    """Simulate a command script while recording; returns (log, final scene)."""
    log = SessionLog("sess", subject, sc.document_hash(doc))
    scene = sc.load_scene(doc)
    rec = SessionRecorder(log)
    rec.on_reset(scene)
    for cmds, actions in script:
        nxt, events = sc.step(scene, cmds, actions)
        rec.on_step(cmds, nxt, events, scene)
        scene = nxt
    return log, scene


class TestReplay:
    def test_fresh_recording_replays_clean(self):
        doc = scene_doc()
        rng = random.Random(11)
        script = []
        for t in range(90):
            cmds = [sc.VelocityCommand("agent1", rng.uniform(-2, 2), rng.uniform(-3, 3))]
            actions = []
            if t == 20:
                actions = [sc.ActionRequest("agent1", "grasp", "mug")]
            if t == 60:
                actions = [sc.ActionRequest("agent1", "release", "mug")]
            script.append((cmds, actions))
        log, final = drive(doc, script)
        replayed, divergences = replay(log, doc)
        assert divergences == []
        assert replayed.entity("agent1").pose == final.entity("agent1").pose

    def test_tampered_odometry_detected(self):
        doc = scene_doc()
        script = [([sc.VelocityCommand("agent1", 1.0, 0.0)], []) for _ in range(20)]
        log, _ = drive(doc, script)
        odoms = [i for i, r in enumerate(log.records) if r["kind"] == "odom" and r["t"] > 0]
        log.records[odoms[4]]["x"] += 1e-9
        _, divergences = replay(log, doc)
        assert len(divergences) == 1
        assert divergences[0]["t"] == log.records[odoms[4]]["t"]

    def test_empty_session_empty_report(self):
        doc = scene_doc()
        log = SessionLog("s", "x", sc.document_hash(doc))
        _, divergences = replay(log, doc)
        assert divergences == []

    def test_scene_hash_mismatch(self):
        doc = scene_doc()
        log = SessionLog("s", "x", "deadbeef")
        with pytest.raises(LogError, match="hash"):
            replay(log, doc)

    def test_grasp_contact_recorded(self):
        doc = scene_doc()
        script = [([], [sc.ActionRequest("agent1", "grasp", "mug")])]
        log, _ = drive(doc, script)
        contacts = contacts_from_session(log, "mug")
        assert len(contacts) == 1
        face, u, v = contacts[0].patch
        assert face == 2  # approached from -x side in the mug's frame
        assert v == 4
