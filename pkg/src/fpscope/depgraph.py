"""SDK dependency graphs built from manifests, and per-SDK version resolution.

Each SDK version may pull in other SDK versions. When two versions of the
same (group, artifact) are reachable from a main SDK only one is kept: the
one nearest to the main SDK (breadth-first depth). Equal depths keep the
lexicographically greatest version string.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .ir import SdkCoordinate

log = logging.getLogger(__name__)


class ManifestError(ValueError):
    pass


class ResolutionError(ValueError):
    pass


@dataclass(frozen=True)
class Manifest:
    coordinate: SdkCoordinate
    dependencies: tuple[SdkCoordinate, ...] = ()

    def __post_init__(self) -> None:
        if self.coordinate in self.dependencies:
            raise ManifestError(f"{self.coordinate} depends on itself")
        if len(set(self.dependencies)) != len(self.dependencies):
            raise ManifestError(f"{self.coordinate} lists a dependency twice")

    @classmethod
    def from_json(cls, payload: Mapping) -> "Manifest":
        try:
            coord = SdkCoordinate.parse(payload["coordinate"])
            deps = tuple(SdkCoordinate.parse(d) for d in payload.get("dependencies", []))
        except (KeyError, TypeError, ValueError) as exc:
            raise ManifestError(f"malformed manifest: {exc}") from None
        return cls(coord, deps)

    def to_json(self) -> dict:
        return {"coordinate": str(self.coordinate), "dependencies": [str(d) for d in self.dependencies]}


def load_manifests(directory: Path | str) -> list[Manifest]:
    manifests = []
    for path in sorted(Path(directory).glob("*.json")):
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ManifestError(f"{path}: {exc}") from None
        try:
            manifests.append(Manifest.from_json(payload))
        except ManifestError as exc:
            raise ManifestError(f"{path}: {exc}") from None
    return manifests


@dataclass(frozen=True)
class DependencyGraph:
    nodes: frozenset[SdkCoordinate]
    edges: frozenset[tuple[SdkCoordinate, SdkCoordinate]]
    external: frozenset[SdkCoordinate]
    successors: Mapping[SdkCoordinate, tuple[SdkCoordinate, ...]] = field(repr=False, compare=False)


def build_graph(manifests: Iterable[Manifest]) -> DependencyGraph:
    """One node per manifest plus one external node per referenced-but-missing coordinate."""
    succ: dict[SdkCoordinate, tuple[SdkCoordinate, ...]] = {}
    for m in manifests:
        if m.coordinate in succ:
            raise ManifestError(f"duplicate manifest for {m.coordinate}")
        succ[m.coordinate] = tuple(sorted(m.dependencies))
    referenced = {d for deps in succ.values() for d in deps}
    external = referenced - succ.keys()
    for coord in external:
        succ[coord] = ()
    edges = frozenset((a, b) for a, deps in succ.items() for b in deps)
    return DependencyGraph(frozenset(succ), edges, frozenset(external), succ)


@dataclass(frozen=True)
class ResolvedBundle:
    main: SdkCoordinate
    resolved: Mapping[tuple[str, str], str]
    depth_of: Mapping[SdkCoordinate, int]
    warnings: tuple[str, ...] = ()

    @property
    def coordinates(self) -> list[SdkCoordinate]:
        """Kept coordinates, ordered by (depth, coordinate)."""
        return sorted(self.depth_of, key=lambda c: (self.depth_of[c], c))

    def to_json(self) -> dict:
        return {
            "main": str(self.main),
            "resolved": {f"{g}:{a}": v for (g, a), v in sorted(self.resolved.items())},
            "depths": {str(c): self.depth_of[c] for c in self.coordinates},
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_json(cls, payload: Mapping) -> "ResolvedBundle":
        main = SdkCoordinate.parse(payload["main"])
        depth_of = {SdkCoordinate.parse(c): int(d) for c, d in payload["depths"].items()}
        resolved = {c.key: c.version for c in depth_of}
        if depth_of.get(main) != 0:
            raise ResolutionError("bundle main must have depth 0")
        return cls(main, resolved, depth_of, tuple(payload.get("warnings", ())))


def resolve(graph: DependencyGraph, main: SdkCoordinate) -> ResolvedBundle:
    """Level-by-level BFS from `main`, keeping the shallowest version of each artifact."""
    if main not in graph.nodes:
        raise ResolutionError(f"{main} is not in the dependency graph")
    chosen: dict[tuple[str, str], SdkCoordinate] = {main.key: main}
    depth_of = {main: 0}
    warnings: list[str] = []
    frontier = [main]
    depth = 0
    while frontier:
        depth += 1
        candidates: dict[tuple[str, str], set[SdkCoordinate]] = {}
        for node in frontier:
            for dep in graph.successors[node]:
                if dep == main and not warnings:
                    warnings.append(f"dependency cycle through {main}")
                if dep.key in chosen:
                    continue
                candidates.setdefault(dep.key, set()).add(dep)
        frontier = []
        for key in sorted(candidates):
            # ties at equal depth: greatest version string wins
            pick = max(candidates[key], key=lambda c: c.version)
            chosen[key] = pick
            depth_of[pick] = depth
            frontier.append(pick)
    for w in warnings:
        log.warning("%s", w)
    resolved = {key: coord.version for key, coord in chosen.items()}
    return ResolvedBundle(main, resolved, depth_of, tuple(warnings))
