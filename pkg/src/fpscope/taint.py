"""Interprocedural taint analysis over a resolved SDK bundle.

Entry points are the public methods of the main SDK. Methods reachable from
them through corpus calls are analyzed once per calling context, where a
context is the chain of call sites from the entry point. Chains longer than
``context_depth`` collapse into a single shared context (``TOP``).

Within a method, registers are split into versions, one per definition, so
redefining a register with a constant drops whatever it carried before.
Fields are tracked by identifier only; every object's copy of a field shares
one node. Arrays are a single cell per array register version.

The analysis first builds the transfer graph for every reachable
(method, context) instance, then pushes source facts along it to a fixed
point. A flow is reported for each (source site, sink site, label) whose
fact reaches the sink call.
"""

from __future__ import annotations

import enum
import json
import logging
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Union

from .depgraph import ResolvedBundle
from .ir import InstructionKind, MethodIR, SdkCoordinate, SdkIR

log = logging.getLogger(__name__)

K = InstructionKind
TOP: tuple[str, ...] = ("*",)
Context = tuple[str, ...]


class TaintError(ValueError):
    pass


class SinkGroup(str, enum.Enum):
    NETWORK = "NETWORK"
    ENCRYPTION = "ENCRYPTION"


class SourceScope(str, enum.Enum):
    MAIN_ONLY = "main-only"
    WHOLE_BUNDLE = "bundle"


@dataclass(frozen=True)
class TaintConfig:
    sources: Mapping[str, str]
    sinks: Mapping[str, SinkGroup]
    propagators: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        try:
            sinks = {api: SinkGroup(g) for api, g in self.sinks.items()}
        except ValueError as exc:
            raise TaintError(f"bad sink group: {exc}") from None
        object.__setattr__(self, "sinks", sinks)
        object.__setattr__(self, "propagators", frozenset(self.propagators))
        overlap = set(self.sources) & set(self.sinks)
        if overlap:
            raise TaintError(f"APIs configured as both source and sink: {sorted(overlap)}")

    @classmethod
    def from_json(cls, payload: Mapping) -> "TaintConfig":
        try:
            sinks = {api: SinkGroup(group) for api, group in payload.get("sinks", {}).items()}
        except ValueError as exc:
            raise TaintError(f"bad sink group: {exc}") from None
        return cls(
            dict(payload.get("sources", {})),
            sinks,
            frozenset(payload.get("propagators", ())),
        )

    @classmethod
    def load(cls, path: Path | str) -> "TaintConfig":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_json(self) -> dict:
        return {
            "sources": dict(sorted(self.sources.items())),
            "sinks": {api: g.value for api, g in sorted(self.sinks.items())},
            "propagators": sorted(self.propagators),
        }


# ---------------------------------------------------------------------- nodes


class RegisterNode(NamedTuple):
    method: str
    register: str
    version: int  # defining instruction index; -1 for a parameter
    context: Context

    def sort_key(self):
        return (0, self.method, self.register, self.version, self.context)

    def to_json(self) -> dict:
        return {
            "kind": "register",
            "method": self.method,
            "register": self.register,
            "version": self.version,
            "context": list(self.context),
        }


class FieldNode(NamedTuple):
    field: str

    def sort_key(self):
        return (1, self.field)

    def to_json(self) -> dict:
        return {"kind": "field", "field": self.field}


class ReturnNode(NamedTuple):
    method: str
    context: Context

    def sort_key(self):
        return (2, self.method, self.context)

    def to_json(self) -> dict:
        return {"kind": "return", "method": self.method, "context": list(self.context)}


class SinkNode(NamedTuple):
    """Data consumed by one sink call (all of its arguments)."""

    method: str
    index: int
    context: Context

    def sort_key(self):
        return (3, self.method, self.index, self.context)

    def to_json(self) -> dict:
        return {"kind": "sink", "method": self.method, "index": self.index, "context": list(self.context)}


TaintNode = Union[RegisterNode, FieldNode, ReturnNode, SinkNode]


class Site(NamedTuple):
    method: str
    index: int

    def to_json(self) -> dict:
        return {"method": self.method, "index": self.index}

    def __str__(self) -> str:
        return f"{self.method}@{self.index}"


class SourceFact(NamedTuple):
    label: str
    site: Site
    api: str


class TaintEdge(NamedTuple):
    src: TaintNode
    dst: TaintNode
    site: Site


@dataclass(frozen=True)
class FlowFinding:
    source_label: str
    source_site: Site
    source_api: str
    sink_api: str
    sink_group: SinkGroup
    sink_site: Site
    path: tuple[TaintNode, ...]

    @property
    def key(self) -> tuple[Site, Site, str]:
        return (self.sink_site, self.source_site, self.source_label)

    def to_json(self) -> dict:
        return {
            "sourceLabel": self.source_label,
            "sourceApi": self.source_api,
            "sourceSite": self.source_site.to_json(),
            "sinkApi": self.sink_api,
            "sinkGroup": self.sink_group.value,
            "sinkSite": self.sink_site.to_json(),
            "path": [n.to_json() for n in self.path],
        }


@dataclass(frozen=True)
class SinkCall:
    site: Site
    api: str
    group: SinkGroup


@dataclass(frozen=True)
class TaintFlowGraph:
    nodes: frozenset
    edges: tuple[TaintEdge, ...]
    facts: Mapping[TaintNode, frozenset[SourceFact]]
    seeds: Mapping[SourceFact, tuple[TaintNode, ...]]
    sinks: Mapping[Site, SinkCall]
    instances: frozenset[tuple[str, Context]]
    diagnostics: tuple[str, ...] = ()
    successors: Mapping[TaintNode, tuple[tuple[TaintNode, Site], ...]] = field(
        default_factory=dict, repr=False, compare=False
    )

    @property
    def labels(self) -> dict[TaintNode, frozenset[str]]:
        return {n: frozenset(f.label for f in self.facts.get(n, ())) for n in self.nodes}

    def is_fixed_point(self) -> bool:
        """One more propagation round would change nothing."""
        empty: frozenset = frozenset()
        return all(self.facts.get(e.src, empty) <= self.facts.get(e.dst, empty) for e in self.edges)


def reachable_labels(graph: TaintFlowGraph, node: TaintNode) -> frozenset[str]:
    if node not in graph.nodes:
        raise TaintError(f"unknown taint node {node!r}")
    return frozenset(f.label for f in graph.facts.get(node, ()))


# ------------------------------------------------------------------- analysis


def push_context(ctx: Context, site: Site, depth: int) -> Context:
    if ctx == TOP or len(ctx) + 1 > depth:
        return TOP
    return ctx + (str(site),)


_COPY = frozenset({K.ASSIGN, K.CAST, K.MOVE_RESULT, K.UNARY_OP})
_UNION = frozenset({K.BINARY_OP, K.CMP})


class _Builder:
    def __init__(
        self,
        methods: Mapping[str, MethodIR],
        main_methods: frozenset[str],
        config: TaintConfig,
        scope: SourceScope,
        depth: int,
        conservative_unknown: bool,
    ):
        self.methods = methods
        self.main_methods = main_methods
        self.config = config
        self.scope = scope
        self.depth = depth
        self.conservative_unknown = conservative_unknown
        self.nodes: set = set()
        self.edges: list[TaintEdge] = []
        self.seeds: dict[SourceFact, list] = {}
        self.sinks: dict[Site, SinkCall] = {}
        self.diagnostics: list[str] = []
        self.instances: set[tuple[str, Context]] = set()
        self._queue: deque = deque()

    def node(self, n):
        self.nodes.add(n)
        return n

    def edge(self, src, dst, site: Site) -> None:
        self.edges.append(TaintEdge(self.node(src), self.node(dst), site))

    def visit(self, method_id: str, ctx: Context) -> None:
        if (method_id, ctx) not in self.instances:
            self.instances.add((method_id, ctx))
            self._queue.append((method_id, ctx))

    def run(self, entries: Iterable[str]) -> None:
        for m in entries:
            self.visit(m, ())
        while self._queue:
            self._instance(*self._queue.popleft())

    def _instance(self, mid: str, ctx: Context) -> None:
        method = self.methods[mid]
        version = {p: -1 for p in method.params}
        for p in method.params:
            self.node(RegisterNode(mid, p, -1, ctx))

        def reg(r: str) -> RegisterNode:
            return RegisterNode(mid, r, version[r], ctx)

        for idx, ins in enumerate(method.body):
            site = Site(mid, idx)
            srcs = [reg(r) for r in ins.srcs]
            dst = self.node(RegisterNode(mid, ins.dst, idx, ctx)) if ins.dst else None
            kind = ins.kind
            if kind in _COPY or kind in _UNION:
                for s in srcs:
                    self.edge(s, dst, site)
            elif kind in (K.LOAD_INSTANCE, K.LOAD_STATIC):
                self.edge(FieldNode(ins.field), dst, site)
            elif kind in (K.STORE_INSTANCE, K.STORE_STATIC):
                self.edge(srcs[-1], FieldNode(ins.field), site)
            elif kind is K.LOAD_ARRAY:
                self.edge(srcs[0], dst, site)
            elif kind is K.STORE_ARRAY:
                self.edge(srcs[-1], srcs[0], site)
            elif kind is K.RETURN:
                self.edge(srcs[0], ReturnNode(mid, ctx), site)
            elif kind.is_invoke:
                if ins.api is not None:
                    self._api_call(ins.api, site, srcs, dst, ctx)
                else:
                    self._corpus_call(ins.callee, site, srcs, dst, ctx)
            if ins.dst:
                version[ins.dst] = idx

    def _api_call(self, api: str, site: Site, srcs, dst, ctx: Context) -> None:
        cfg = self.config
        if api in cfg.sources:
            if dst is not None and (
                self.scope is SourceScope.WHOLE_BUNDLE or site.method in self.main_methods
            ):
                fact = SourceFact(cfg.sources[api], site, api)
                self.seeds.setdefault(fact, []).append(dst)
        if api in cfg.sinks:
            self.sinks[site] = SinkCall(site, api, cfg.sinks[api])
            sink = self.node(SinkNode(site.method, site.index, ctx))
            for s in srcs:
                self.edge(s, sink, site)
        known = api in cfg.sources or api in cfg.sinks
        if dst is not None and (
            api in cfg.propagators or (self.conservative_unknown and not known)
        ):
            for s in srcs:
                self.edge(s, dst, site)

    def _corpus_call(self, callee: str, site: Site, srcs, dst, ctx: Context) -> None:
        target = self.methods.get(callee)
        if target is None:
            msg = f"unresolvable callee {callee!r} at {site}; treated as opaque propagator"
            if msg not in self.diagnostics:
                self.diagnostics.append(msg)
                log.warning("%s", msg)
            if dst is not None:
                for s in srcs:
                    self.edge(s, dst, site)
            return
        cctx = push_context(ctx, site, self.depth)
        self.visit(callee, cctx)
        for s, p in zip(srcs, target.params):
            self.edge(s, RegisterNode(callee, p, -1, cctx), site)
        if dst is not None:
            self.edge(ReturnNode(callee, cctx), dst, site)


def _propagate(successors, seeds) -> dict:
    facts: dict = {}
    work = deque()
    for fact, nodes in seeds.items():
        for n in nodes:
            if fact not in facts.setdefault(n, set()):
                facts[n].add(fact)
                work.append((n, fact))
    while work:
        n, fact = work.popleft()
        for nxt, _site in successors.get(n, ()):
            bucket = facts.setdefault(nxt, set())
            if fact not in bucket:
                bucket.add(fact)
                work.append((nxt, fact))
    return {n: frozenset(fs) for n, fs in facts.items()}


def _shortest_paths(graph: TaintFlowGraph, fact: SourceFact) -> dict[Site, tuple]:
    """BFS over nodes carrying `fact`; first-reached path to each sink site."""
    start = sorted(set(graph.seeds[fact]), key=lambda n: n.sort_key())
    parent = {n: None for n in start}
    queue = deque(start)
    found: dict[Site, tuple] = {}
    while queue:
        n = queue.popleft()
        if isinstance(n, SinkNode):
            site = Site(n.method, n.index)
            if site not in found:
                path = []
                cur = n
                while cur is not None:
                    path.append(cur)
                    cur = parent[cur]
                found[site] = tuple(reversed(path))
        for nxt, _site in graph.successors.get(n, ()):
            if nxt not in parent and fact in graph.facts.get(nxt, ()):
                parent[nxt] = n
                queue.append(nxt)
    return found


def analyze(
    bundle: ResolvedBundle,
    code: Mapping[SdkCoordinate, SdkIR],
    config: TaintConfig,
    scope: SourceScope = SourceScope.MAIN_ONLY,
    context_depth: int = 1,
    conservative_unknown: bool = False,
) -> tuple[TaintFlowGraph, list[FlowFinding]]:
    """Run the analysis for one main SDK and its resolved dependencies."""
    if not 0 <= context_depth <= 2:
        raise TaintError("context depth must be between 0 and 2")
    scope = SourceScope(scope)
    methods: dict[str, MethodIR] = {}
    main_methods: set[str] = set()
    for coord in bundle.coordinates:
        if coord not in code:
            raise TaintError(f"no IR for bundle coordinate {coord}")
        for _cls, m in code[coord].iter_methods():
            if m.id in methods:
                raise TaintError(f"method id {m.id!r} defined twice in bundle")
            methods[m.id] = m
            if coord == bundle.main:
                main_methods.add(m.id)
    entries = sorted(
        m.id for _c, m in code[bundle.main].iter_methods() if m.is_public
    )
    builder = _Builder(methods, frozenset(main_methods), config, scope, context_depth, conservative_unknown)
    builder.run(entries)

    succ: dict = {}
    for e in builder.edges:
        succ.setdefault(e.src, set()).add((e.dst, e.site))
    successors = {
        n: tuple(sorted(out, key=lambda t: (t[0].sort_key(), t[1]))) for n, out in succ.items()
    }
    seeds = {f: tuple(sorted(set(ns), key=lambda n: n.sort_key())) for f, ns in builder.seeds.items()}
    facts = _propagate(successors, seeds)
    graph = TaintFlowGraph(
        nodes=frozenset(builder.nodes),
        edges=tuple(dict.fromkeys(builder.edges)),
        facts=facts,
        seeds=seeds,
        sinks=dict(builder.sinks),
        instances=frozenset(builder.instances),
        diagnostics=tuple(builder.diagnostics),
        successors=successors,
    )

    findings = []
    for fact in sorted(seeds):
        for site, path in _shortest_paths(graph, fact).items():
            sink = graph.sinks[site]
            findings.append(
                FlowFinding(fact.label, fact.site, fact.api, sink.api, sink.group, site, path)
            )
    findings.sort(key=lambda f: f.key)
    return graph, findings


def flow_keys(findings: Iterable[FlowFinding]) -> set[tuple]:
    """Comparable identity of findings: (label, source site, sink api, sink site)."""
    return {(f.source_label, tuple(f.source_site), f.sink_api, tuple(f.sink_site)) for f in findings}


def findings_to_jsonl(findings: Iterable[FlowFinding]) -> str:
    return "".join(json.dumps(f.to_json(), sort_keys=True) + "\n" for f in findings)
