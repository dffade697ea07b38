"""Crossover flows: several source groups converging on one sink call.

A rule fires at a sink when every one of its source groups has at least one
label reaching that sink. Unlike generic one-source-per-group reporting,
every reaching source is kept, because the fingerprinting verdict counts
distinct signals across all findings of an SDK.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

from .ir import SdkCoordinate
from .taint import FlowFinding, SinkGroup, Site, TaintFlowGraph

DEFAULT_THRESHOLD = 20


class CoFlowError(ValueError):
    pass


@dataclass(frozen=True)
class CoFlowRule:
    name: str
    source_groups: tuple[frozenset[str], ...]
    sink_groups: frozenset[SinkGroup]
    min_distinct_sources: int = DEFAULT_THRESHOLD

    def __post_init__(self) -> None:
        if not self.source_groups or any(not g for g in self.source_groups):
            raise CoFlowError(f"rule {self.name!r} has an empty source group")
        if not self.sink_groups:
            raise CoFlowError(f"rule {self.name!r} has no sink groups")
        if self.min_distinct_sources < 1:
            raise CoFlowError("minDistinctSources must be positive")

    @property
    def labels(self) -> frozenset[str]:
        return frozenset().union(*self.source_groups)

    @classmethod
    def fingerprinting(cls, labels: Iterable[str], threshold: int = DEFAULT_THRESHOLD) -> "CoFlowRule":
        """One group holding every fingerprinting label, both sink groups."""
        return cls(
            "fingerprinting",
            (frozenset(labels),),
            frozenset(SinkGroup),
            threshold,
        )

    @classmethod
    def from_json(cls, payload: Mapping) -> "CoFlowRule":
        try:
            return cls(
                str(payload["name"]),
                tuple(frozenset(g) for g in payload["sourceGroups"]),
                frozenset(SinkGroup(s) for s in payload["sinkGroups"]),
                int(payload.get("minDistinctSources", DEFAULT_THRESHOLD)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, CoFlowError):
                raise
            raise CoFlowError(f"malformed rule: {exc}") from None

    @classmethod
    def load(cls, path: Path | str) -> "CoFlowRule":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "sourceGroups": [sorted(g) for g in self.source_groups],
            "sinkGroups": sorted(g.value for g in self.sink_groups),
            "minDistinctSources": self.min_distinct_sources,
        }


class SourceHit(NamedTuple):
    label: str
    site: Site
    api: str

    def to_json(self) -> dict:
        return {"label": self.label, "site": self.site.to_json(), "api": self.api}


@dataclass(frozen=True)
class CoFlowFinding:
    rule: str
    sink_site: Site
    sink_api: str
    sink_group: SinkGroup
    sources: frozenset[SourceHit]

    def __post_init__(self) -> None:
        object.__setattr__(self, "sink_group", SinkGroup(self.sink_group))
        object.__setattr__(self, "sources", frozenset(self.sources))

    @property
    def labels(self) -> frozenset[str]:
        return frozenset(h.label for h in self.sources)

    def to_json(self) -> dict:
        return {
            "rule": self.rule,
            "sinkSite": self.sink_site.to_json(),
            "sinkApi": self.sink_api,
            "sinkGroup": self.sink_group.value,
            "sources": [h.to_json() for h in sorted(self.sources)],
        }

    @classmethod
    def from_json(cls, payload: Mapping) -> "CoFlowFinding":
        def site(d):
            return Site(d["method"], int(d["index"]))

        return cls(
            payload["rule"],
            site(payload["sinkSite"]),
            payload["sinkApi"],
            SinkGroup(payload["sinkGroup"]),
            frozenset(SourceHit(h["label"], site(h["site"]), h["api"]) for h in payload["sources"]),
        )


def detect(
    graph: TaintFlowGraph, findings: Sequence[FlowFinding], rule: CoFlowRule
) -> list[CoFlowFinding]:
    """One CoFlowFinding per sink site whose reaching labels cover every source group."""
    wanted = rule.labels
    by_sink: dict[Site, set[SourceHit]] = {}
    for f in findings:
        if f.sink_site not in graph.sinks:
            raise CoFlowError(f"finding sink {f.sink_site} is not in the taint graph")
        if f.sink_group not in rule.sink_groups or f.source_label not in wanted:
            continue
        by_sink.setdefault(f.sink_site, set()).add(SourceHit(f.source_label, f.source_site, f.source_api))
    out = []
    for site in sorted(by_sink):
        hits = by_sink[site]
        labels = {h.label for h in hits}
        if all(labels & group for group in rule.source_groups):
            sink = graph.sinks[site]
            out.append(CoFlowFinding(rule.name, site, sink.api, sink.group, frozenset(hits)))
    return out


@dataclass(frozen=True)
class FingerprintVerdict:
    sdk: SdkCoordinate
    flagged: bool
    distinct_signals: int
    threshold: int
    findings: tuple[CoFlowFinding, ...] = ()

    @property
    def labels(self) -> frozenset[str]:
        return frozenset().union(*(f.labels for f in self.findings))

    @property
    def apis(self) -> frozenset[str]:
        return frozenset(h.api for f in self.findings for h in f.sources)

    def to_json(self) -> dict:
        return {
            "sdk": str(self.sdk),
            "flagged": self.flagged,
            "distinctSignals": self.distinct_signals,
            "threshold": self.threshold,
            "findings": [f.to_json() for f in self.findings],
        }

    @classmethod
    def from_json(cls, payload: Mapping) -> "FingerprintVerdict":
        findings = tuple(CoFlowFinding.from_json(f) for f in payload.get("findings", ()))
        return classify(SdkCoordinate.parse(payload["sdk"]), findings, int(payload["threshold"]))


def classify(
    sdk: SdkCoordinate, findings: Sequence[CoFlowFinding], threshold: int = DEFAULT_THRESHOLD
) -> FingerprintVerdict:
    """Flag `sdk` when its findings carry at least `threshold` distinct source labels."""
    if threshold < 1:
        raise CoFlowError("threshold must be a positive integer")
    labels = set()
    for f in findings:
        labels |= f.labels
    return FingerprintVerdict(sdk, len(labels) >= threshold, len(labels), threshold, tuple(findings))


def verdicts_to_json(verdicts: Iterable[FingerprintVerdict]) -> str:
    payload = [v.to_json() for v in sorted(verdicts, key=lambda v: v.sdk)]
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def load_verdicts(path: Path | str) -> dict[SdkCoordinate, FingerprintVerdict]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    verdicts = [FingerprintVerdict.from_json(v) for v in payload]
    return {v.sdk: v for v in verdicts}
