import json
import random

import pytest

from fpscope import fixtures
from fpscope.depgraph import ResolvedBundle
from fpscope.ir import parse_ir
from fpscope.taint import (
    TOP,
    FieldNode,
    RegisterNode,
    SinkNode,
    SourceScope,
    TaintConfig,
    TaintError,
    analyze,
    findings_to_jsonl,
    flow_keys,
    push_context,
    reachable_labels,
)

from generators import RANDOM_TAINT_CONFIG, random_program
from oracles import max_call_depth, taint_oracle

CFG = TaintConfig.from_json(fixtures.TAINT_CONFIG)


def single(text):
    sdk = parse_ir(text)
    bundle = ResolvedBundle(sdk.coordinate, {sdk.coordinate.key: sdk.coordinate.version}, {sdk.coordinate: 0})
    return bundle, {sdk.coordinate: sdk}


def run(text, **kw):
    bundle, code = single(text)
    return analyze(bundle, code, kw.pop("config", CFG), **kw)


HEAD = 'sdk t:t:1\nclass t.T\nmethod t.T.main public sig="()->void" params=\n'


def test_direct_flow_has_two_node_path():
    g, f = run(HEAD + "  invoke_static r0 api:android.os.Build.getSerial\n"
               "  invoke_virtual api:java.io.OutputStream.write r0\n")
    assert len(f) == 1
    assert f[0].source_label == "serial" and f[0].sink_api == "java.io.OutputStream.write"
    assert [type(n) for n in f[0].path] == [RegisterNode, SinkNode]
    assert g.is_fixed_point()


def test_constant_redefinition_kills_taint():
    _g, f = run(HEAD + "  invoke_static r0 api:android.os.Build.getSerial\n"
                "  const r0\n"
                "  invoke_virtual api:java.io.OutputStream.write r0\n")
    assert f == []


def test_unknown_api_blocks_unless_conservative():
    body = (HEAD + "  invoke_static r0 api:android.os.Build.getSerial\n"
            "  invoke_virtual r1 api:com.vendor.Opaque.wrap r0\n"
            "  invoke_virtual api:java.io.OutputStream.write r1\n")
    assert run(body)[1] == []
    assert len(run(body, conservative_unknown=True)[1]) == 1


def test_propagator_forwards_taint():
    _g, f = run(HEAD + "  invoke_static r0 api:android.os.Build.getSerial\n"
                "  invoke_static r1 api:java.lang.String.valueOf r0\n"
                "  invoke_virtual api:java.io.OutputStream.write r1\n")
    assert len(f) == 1 and len(f[0].path) == 3


def test_field_and_array_flows():
    _g, f = run(HEAD + "  invoke_static r0 api:android.os.Build.getSerial\n"
                "  new_instance r1\n"
                "  store_instance r1 field:t.T.f r0\n"
                "  load_instance r2 r1 field:t.T.f\n"
                "  const r3\n"
                "  new_array r4 r3\n"
                "  store_array r4,r3,r2\n"
                "  load_array r5 r4,r3\n"
                "  invoke_virtual api:java.io.OutputStream.write r5\n")
    assert len(f) == 1
    assert FieldNode("t.T.f") in f[0].path


def test_context_sensitivity_separates_call_sites():
    text = ('sdk t:t:1\nclass t.T\n'
            'method t.T.main public sig="()->void" params=\n'
            '  invoke_static r0 api:android.os.Build.getSerial\n'
            '  const r1\n'
            '  invoke_static r2 callee:t.T.id r0\n'
            '  invoke_static r3 callee:t.T.id r1\n'
            '  invoke_virtual api:java.io.OutputStream.write r3\n'
            'method t.T.id nonpublic sig="(int)->int" params=r0\n'
            '  return r0\n')
    assert run(text, context_depth=1)[1] == []
    merged = run(text, context_depth=0)[1]
    assert len(merged) == 1  # context-insensitive analysis merges both calls


def test_main_only_scope_ignores_dependency_sources():
    sdks = fixtures.coflow_sdks()
    main, dep = sdks["collector"], sdks["netlib"]
    bundle = ResolvedBundle(main.coordinate, {}, {main.coordinate: 0, dep.coordinate: 1})
    code = {main.coordinate: main, dep.coordinate: dep}
    _g, only = analyze(bundle, code, CFG, SourceScope.MAIN_ONLY)
    _g, whole = analyze(bundle, code, CFG, SourceScope.WHOLE_BUNDLE)
    dep_labels = {"radio_version", "locale", "battery_level"}
    assert not {f.source_label for f in only} & dep_labels
    assert {f.source_label for f in whole} >= dep_labels
    assert flow_keys(only) < flow_keys(whole)


def test_unresolved_callee_is_diagnosed_and_propagates():
    g, f = run(HEAD + "  invoke_static r0 api:android.os.Build.getSerial\n"
               "  invoke_static r1 callee:elsewhere.X.y r0\n"
               "  invoke_virtual api:java.io.OutputStream.write r1\n")
    assert len(f) == 1
    assert any("elsewhere.X.y" in d for d in g.diagnostics)


def test_reachable_labels_and_unknown_node():
    g, _f = run(HEAD + "  invoke_static r0 api:android.os.Build.getSerial\n  return_void\n")
    assert reachable_labels(g, RegisterNode("t.T.main", "r0", 0, ())) == {"serial"}
    with pytest.raises(TaintError):
        reachable_labels(g, RegisterNode("t.T.main", "r9", 0, ()))


def test_push_context_limits():
    from fpscope.taint import Site

    s = Site("a.B.c", 3)
    assert push_context((), s, 1) == ("a.B.c@3",)
    assert push_context(("x@1",), s, 1) == TOP
    assert push_context(TOP, s, 2) == TOP
    assert push_context((), s, 0) == TOP


def test_config_validation(tmp_path):
    with pytest.raises(TaintError):
        TaintConfig.from_json({"sources": {"a.B.c": "x"}, "sinks": {"a.B.c": "NETWORK"}})
    with pytest.raises(TaintError):
        TaintConfig.from_json({"sinks": {"a.B.c": "PRINTER"}})
    p = tmp_path / "t.json"
    p.write_text(json.dumps(CFG.to_json()))
    assert TaintConfig.load(p) == CFG


def test_context_depth_range():
    bundle, code = single(HEAD + "  return_void\n")
    with pytest.raises(TaintError):
        analyze(bundle, code, CFG, context_depth=3)


def test_jsonl_is_deterministic():
    _g, f = run(HEAD + "  invoke_static r0 api:android.os.Build.getSerial\n"
                "  invoke_virtual api:java.io.OutputStream.write r0\n")
    out = findings_to_jsonl(f)
    assert out == findings_to_jsonl(run(HEAD + "  invoke_static r0 api:android.os.Build.getSerial\n"
                                        "  invoke_virtual api:java.io.OutputStream.write r0\n")[1])
    assert json.loads(out.splitlines()[0])["sourceLabel"] == "serial"


def _oracle_case(seed, scope, k):
    main, code, depth = random_program(random.Random(seed))
    bundle = ResolvedBundle(main, {c.key: c.version for c in depth}, depth)
    graph, findings = analyze(bundle, code, RANDOM_TAINT_CONFIG, scope, k)
    methods = {m.id: m for s in code.values() for _c, m in s.iter_methods()}
    main_methods = {m.id for _c, m in code[main].iter_methods()}
    entries = sorted(m.id for _c, m in code[main].iter_methods() if m.is_public)
    whole = scope is SourceScope.WHOLE_BUNDLE
    return graph, findings, methods, main_methods, entries, whole


@pytest.mark.parametrize("scope", list(SourceScope))
@pytest.mark.parametrize("k", [0, 1, 2])
def test_findings_equal_same_abstraction_oracle(scope, k):
    for seed in range(200):
        graph, findings, methods, mains, entries, whole = _oracle_case(seed, scope, k)
        flows, dist = taint_oracle(methods, mains, entries, RANDOM_TAINT_CONFIG, whole, k)
        assert flow_keys(findings) == flows, seed
        assert graph.is_fixed_point()
        for f in findings:
            # reported paths are shortest paths in the transfer graph
            assert len(f.path) - 1 == dist[(f.source_label, tuple(f.source_site), tuple(f.sink_site))]


@pytest.mark.parametrize("k", [0, 1, 2])
def test_exact_flows_are_covered(k):
    for seed in range(200):
        _g, findings, methods, mains, entries, whole = _oracle_case(seed, SourceScope.WHOLE_BUNDLE, k)
        exact, _ = taint_oracle(methods, mains, entries, RANDOM_TAINT_CONFIG, whole, None)
        got = flow_keys(findings)
        assert exact <= got, seed
        if max_call_depth(methods, entries) <= k:
            assert exact == got, seed


def test_paths_follow_graph_edges():
    for seed in range(50):
        graph, findings, *_ = _oracle_case(seed, SourceScope.WHOLE_BUNDLE, 1)
        edges = {(e.src, e.dst) for e in graph.edges}
        for f in findings:
            assert all((a, b) in edges for a, b in zip(f.path, f.path[1:]))
            assert isinstance(f.path[-1], SinkNode)
            assert tuple(f.path[-1])[:2] == tuple(f.sink_site)
