import json
import random

import pytest

from fpscope import fixtures
from fpscope.depgraph import (
    Manifest,
    ManifestError,
    ResolutionError,
    ResolvedBundle,
    build_graph,
    load_manifests,
    resolve,
)
from fpscope.ir import SdkCoordinate as C

from generators import random_dag
from oracles import resolve_by_paths


def conflict_graph():
    return build_graph(Manifest.from_json(m) for m in fixtures.conflict_manifests())


def test_nearest_version_wins():
    bundle = resolve(conflict_graph(), C.parse("M:A:1"))
    assert bundle.resolved[("P", "C")] == "1"
    assert dict(bundle.depth_of) == {C.parse("M:A:1"): 0, C.parse("N:B:1"): 1, C.parse("P:C:1"): 1}
    assert C.parse("P:C:2") not in bundle.depth_of
    assert bundle.warnings == ()


def test_equal_depth_tie_picks_greatest_version():
    g = build_graph([
        Manifest(C.parse("m:m:1"), (C.parse("a:a:1"), C.parse("b:b:1"))),
        Manifest(C.parse("a:a:1"), (C.parse("x:x:1"),)),
        Manifest(C.parse("b:b:1"), (C.parse("x:x:3"),)),
    ])
    b = resolve(g, C.parse("m:m:1"))
    assert b.resolved[("x", "x")] == "3"
    assert b.depth_of[C.parse("x:x:3")] == 2
    assert C.parse("x:x:1") in g.external


def test_cycle_back_to_main_warns():
    g = build_graph([
        Manifest(C.parse("m:m:1"), (C.parse("a:a:1"),)),
        Manifest(C.parse("a:a:1"), (C.parse("m:m:1"),)),
    ])
    b = resolve(g, C.parse("m:m:1"))
    assert len(b.warnings) == 1 and "cycle" in b.warnings[0]
    assert set(b.depth_of) == {C.parse("m:m:1"), C.parse("a:a:1")}


def test_other_version_of_main_is_ignored():
    g = build_graph([
        Manifest(C.parse("m:m:1"), (C.parse("a:a:1"),)),
        Manifest(C.parse("a:a:1"), (C.parse("m:m:2"),)),
    ])
    b = resolve(g, C.parse("m:m:1"))
    assert b.resolved[("m", "m")] == "1"
    assert C.parse("m:m:2") not in b.depth_of


def test_unknown_main_raises():
    with pytest.raises(ResolutionError):
        resolve(conflict_graph(), C.parse("Z:Z:1"))


def test_manifest_validation():
    with pytest.raises(ManifestError):
        Manifest.from_json({"coordinate": "a:b:1", "dependencies": ["a:b:1"]})
    with pytest.raises(ManifestError):
        Manifest.from_json({"coordinate": "a:b:1", "dependencies": ["c:d:1", "c:d:1"]})
    with pytest.raises(ManifestError):
        Manifest.from_json({"coordinate": "not-a-coordinate"})
    with pytest.raises(ManifestError):
        build_graph([Manifest(C.parse("a:b:1")), Manifest(C.parse("a:b:1"))])


def test_load_manifests_and_json_round_trip(tmp_path):
    for m in fixtures.MANIFESTS:
        (tmp_path / (m["coordinate"].replace(":", "_") + ".json")).write_text(json.dumps(m))
    g = build_graph(load_manifests(tmp_path))
    b = resolve(g, C.parse("M:A:1"))
    again = ResolvedBundle.from_json(json.loads(json.dumps(b.to_json())))
    assert again.depth_of == b.depth_of and again.main == b.main
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(ManifestError, match="bad.json"):
        load_manifests(tmp_path)


def test_resolution_matches_path_enumeration_oracle():
    mismatches = 0
    for seed in range(500):
        manifests, main = random_dag(random.Random(seed))
        got = resolve(build_graph(manifests), main)
        if dict(got.depth_of) != resolve_by_paths(manifests, main):
            mismatches += 1
    assert mismatches == 0


def test_resolution_properties_on_random_graphs():
    for seed in range(200):
        manifests, main = random_dag(random.Random(1000 + seed))
        b = resolve(build_graph(manifests), main)
        keys = [c.key for c in b.depth_of]
        assert len(keys) == len(set(keys))  # one version per artifact
        assert b.coordinates[0] == main
        assert all(b.resolved[c.key] == c.version for c in b.depth_of)
