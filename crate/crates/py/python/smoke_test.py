"""Smoke test for the relicdig Python module.

Run after `pip install --no-build-isolation -e crates/py`:

    python crates/py/python/smoke_test.py
"""

import json

import relicdig


def main():
    assert relicdig.builtin_relics() == ["arhat", "gold_mask"]
    doc = relicdig.builtin_package("gold_mask")
    assert relicdig.validate(doc) == "gold_mask"

    broken = json.loads(doc)
    broken["triggers"] = broken["triggers"][:1]
    try:
        relicdig.validate(json.dumps(broken))
    except ValueError as e:
        assert "triggers" in str(e)
    else:
        raise AssertionError("a package with one trigger validated")

    s = relicdig.Session.builtin("gold_mask", seed=3)
    state = s.state
    assert (state["health"], state["max_health"]) == (40, 40)
    assert state["clock_remaining"] == 420.0
    assert s.status == "RUNNING"

    events = s.apply_stroke(1.0, [0.9, 0.9, 0.9])
    assert events[0]["event"]["type"] == "STROKE_APPLIED"
    assert events[0]["event"]["cells_changed"] > 0
    s.select_tool("shovel")
    s.apply_stroke(1.5, [0.9, 0.9, 0.7], [0.0, 1.0, 0.0, 0.0])
    try:
        s.apply_stroke(1.0, [0.0, 0.0, 0.0])
    except relicdig.DigError as e:
        assert str(e).startswith("NON_MONOTONE_TIME")
    else:
        raise AssertionError("stroke back in time was accepted")

    again = relicdig.Session.replay(doc, s.export_replay())
    assert again.event_log_jsonl() == s.event_log_jsonl()

    done = s.tick(420.0)
    assert done[-1]["event"]["type"] == "TIME_UP"
    assert s.report()["status"] == "TIME_UP"

    vertices, triangles = relicdig.mesh_artifact(doc)
    assert len(vertices) > 1000 and len(triangles) > 1000

    run = relicdig.run_bot(doc, "surface-follower", seed=1, max_strokes=100)
    assert run["metrics"]["strokes"] == 100
    assert run["report"]["status"] == "TIME_UP"
    print("relicdig smoke test passed")


if __name__ == "__main__":
    main()
