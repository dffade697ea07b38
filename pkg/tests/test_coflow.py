import json
from pathlib import Path

import pytest

from fpscope import fixtures
from fpscope.coflow import (
    CoFlowError,
    CoFlowFinding,
    CoFlowRule,
    FingerprintVerdict,
    SourceHit,
    classify,
    detect,
    load_verdicts,
    verdicts_to_json,
)
from fpscope.depgraph import ResolvedBundle
from fpscope.ir import SdkCoordinate
from fpscope.taint import Site, SourceScope, TaintConfig, analyze

from generators import signal_sdk

GOLDEN = Path(__file__).parent / "data" / "coflow_golden.json"
CFG = TaintConfig.from_json(fixtures.TAINT_CONFIG)
RULE = CoFlowRule.from_json(fixtures.FINGERPRINT_RULE)


def collector_bundle(scope=SourceScope.MAIN_ONLY):
    sdks = fixtures.coflow_sdks()
    main, dep = sdks["collector"], sdks["netlib"]
    bundle = ResolvedBundle(main.coordinate, {}, {main.coordinate: 0, dep.coordinate: 1})
    graph, findings = analyze(bundle, {main.coordinate: main, dep.coordinate: dep}, CFG, scope)
    return graph, findings


def coflow_json(findings):
    return json.dumps([f.to_json() for f in findings], indent=2, sort_keys=True) + "\n"


def test_crossover_fixture_yields_two_findings():
    graph, findings = collector_bundle()
    out = detect(graph, findings, RULE)
    assert len(out) == 2
    a, b = out
    assert a.sink_api == "java.io.OutputStream.write"
    assert a.labels == {"serial", "android_id", "carrier"}
    assert b.sink_api == "javax.crypto.Cipher.doFinal"
    assert b.labels == {"carrier"}
    # the dependency's own signals never appear under main-only scope
    for f in out:
        assert not f.labels & {"radio_version", "locale", "battery_level"}


def test_crossover_fixture_is_byte_stable():
    graph, findings = collector_bundle()
    text = coflow_json(detect(graph, findings, RULE))
    assert text == GOLDEN.read_text(encoding="utf-8")
    graph2, findings2 = collector_bundle()
    assert coflow_json(detect(graph2, findings2, RULE)) == text


def test_bundle_scope_adds_dependency_sources():
    graph, findings = collector_bundle(SourceScope.WHOLE_BUNDLE)
    out = {f.sink_api: f.labels for f in detect(graph, findings, RULE)}
    assert out["javax.crypto.Cipher.doFinal"] == {"carrier", "radio_version", "locale", "battery_level"}


def test_every_source_group_must_be_covered():
    graph, findings = collector_bundle()
    rule = CoFlowRule("pair", (frozenset({"serial"}), frozenset({"carrier"})), frozenset({"NETWORK", "ENCRYPTION"}))
    out = detect(graph, findings, rule)
    assert [f.sink_api for f in out] == ["java.io.OutputStream.write"]
    net_only = CoFlowRule("n", (frozenset({"carrier"}),), frozenset({"ENCRYPTION"}))
    assert [f.sink_api for f in detect(graph, findings, net_only)] == ["javax.crypto.Cipher.doFinal"]


def test_rule_validation_and_round_trip(tmp_path):
    with pytest.raises(CoFlowError):
        CoFlowRule("r", (), frozenset({"NETWORK"}))
    with pytest.raises(CoFlowError):
        CoFlowRule("r", (frozenset(),), frozenset({"NETWORK"}))
    with pytest.raises(CoFlowError):
        CoFlowRule.from_json({"name": "r", "sourceGroups": [["a"]], "sinkGroups": ["PRINTER"]})
    p = tmp_path / "rule.json"
    p.write_text(json.dumps(RULE.to_json()))
    assert CoFlowRule.load(p) == RULE


def test_threshold_boundary_19_vs_20():
    c19, f19 = signal_sdk(19)
    c20, f20 = signal_sdk(20)
    assert classify(c19, f19, 20).flagged is False
    assert classify(c20, f20, 20).flagged is True
    assert classify(c20, f20, 20).distinct_signals == 20


def test_threshold_monotonicity():
    for n in (1, 5, 19, 20, 25):
        coord, findings = signal_sdk(n)
        flags = [classify(coord, findings, t).flagged for t in range(1, 26)]
        assert flags == [n >= t for t in range(1, 26)]
        assert all(a or not b for a, b in zip(flags, flags[1:]))


def test_classify_rejects_bad_threshold():
    with pytest.raises(CoFlowError):
        classify(SdkCoordinate.parse("a:b:1"), [], 0)


def test_verdict_round_trip(tmp_path):
    graph, findings = collector_bundle()
    v = classify(SdkCoordinate.parse("com.fp:collector:1.0"), detect(graph, findings, RULE), 3)
    assert v.flagged and v.labels == {"serial", "android_id", "carrier"}
    p = tmp_path / "v.json"
    p.write_text(verdicts_to_json([v]))
    loaded = load_verdicts(p)
    assert loaded[v.sdk] == v
    assert verdicts_to_json(loaded.values()) == p.read_text()


def test_finding_json_round_trip():
    hit = SourceHit("x", Site("a.B.c", 1), "android.X.y")
    f = CoFlowFinding("r", Site("a.B.c", 4), "java.io.OutputStream.write", "NETWORK", frozenset({hit}))
    assert CoFlowFinding.from_json(json.loads(json.dumps(f.to_json()))) == f


def test_empty_findings_are_not_flagged():
    v = classify(SdkCoordinate.parse("a:b:1"), [], 1)
    assert isinstance(v, FingerprintVerdict) and not v.flagged and v.distinct_signals == 0
