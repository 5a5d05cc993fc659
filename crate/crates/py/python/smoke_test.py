"""Smoke test for the mcrts extension module.

Build and install first:
    maturin build --release -m crates/py/Cargo.toml && pip install target/wheels/mcrts-*.whl
then run from the repository root:
    python crates/py/python/smoke_test.py
"""

import json
import pathlib
import sys

import mcrts

ROOT = pathlib.Path(__file__).resolve().parents[3]
REFERENCE = ROOT / "crates" / "core" / "scenarios" / "reference.json"

LINE = {
    "format": "mcrts-net/1",
    "nodes": [{"id": "A"}, {"id": "B"}, {"id": "C"}],
    "edges": [
        {"id": "ab", "from_node": "A", "to_node": "B", "length_m": 1000, "speed_limit_mps": 10},
        {"id": "bc", "from_node": "B", "to_node": "C", "length_m": 2000, "speed_limit_mps": 10},
        {"id": "ac", "from_node": "A", "to_node": "C", "length_m": 4000, "speed_limit_mps": 10},
    ],
}


def main() -> int:
    net = mcrts.RoadNetwork.from_json(json.dumps(LINE))
    assert net.node_ids() == ["A", "B", "C"], net.node_ids()
    state = mcrts.TrafficState.free_flow(net)

    assert mcrts.traversal_time(net, state, "ab", 0.0) == 100.0
    best = mcrts.fastest_route(net, state, "A", "C")
    assert best["edges"] == ["ab", "bc"] and best["eta_s"] == 300.0, best
    routes = mcrts.k_routes(net, state, "A", "C", 2)
    assert [r["edges"] for r in routes] == [["ab", "bc"], ["ac"]], routes

    halted = state.updated(net, json.dumps([{"edge": "bc", "halted": True}]), 10.0)
    assert mcrts.traversal_time(net, halted, "bc", 10.0) is None
    assert mcrts.fastest_route(net, halted, "A", "C", 10.0)["edges"] == ["ac"]

    assert mcrts.deadline_for("C3") == 480.0
    assert mcrts.deadline_for("C1") == 1200.0
    assert mcrts.deadline_for("C0") is None

    a = mcrts.run(str(REFERENCE), seed=1)
    b = mcrts.run(str(REFERENCE), seed=1)
    assert a.digest() == b.digest()
    assert mcrts.Trace.from_ndjson(a.to_ndjson()).digest() == a.digest()
    report = mcrts.compliance(a)
    life = next(c for c in report["classes"] if c["class"] == "C2+C3")
    baseline = mcrts.compliance(mcrts.run(str(REFERENCE), seed=1, variant="no_preemption"))
    base_life = next(c for c in baseline["classes"] if c["class"] == "C2+C3")
    assert life["targets"][0]["achieved"] > base_life["targets"][0]["achieved"]
    assert mcrts.mortality_delta(a) >= 0.0

    try:
        mcrts.run(str(REFERENCE), variant="fastest")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown variant accepted")

    print(
        f"ok: {len(a)} events, C2+C3 within 480s {life['targets'][0]['achieved']:.3f}"
        f" (no_preemption {base_life['targets'][0]['achieved']:.3f})"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
