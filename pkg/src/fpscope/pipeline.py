"""End-to-end run: ingest, resolve, taint, coflow, classify, match, stats.

Every report is written atomically (temp file, then rename) and is a pure
function of the inputs and the configuration, so two runs over the same
inputs produce byte-identical output directories. Wall-clock timings are
only recorded when asked for, since they would break that property.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Callable, Mapping, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import numpy as np

from . import __version__, _kernels
from .coflow import CoFlowError, CoFlowRule, FingerprintVerdict, classify, detect, verdicts_to_json
from .depgraph import ManifestError, ResolutionError, build_graph, load_manifests, resolve
from .ingest import (
    IngestError,
    filter_apps,
    filter_sdk_versions,
    load_apps,
    load_labels,
    load_ratings,
    load_signal_map,
    market_reach,
)
from .ir import IRError, SdkCoordinate, load_corpus, parse_ir
from .sdkmatch import MatchError, build_index, compute_weights, match, save_index
from .stats import (
    StatsError,
    UndefinedAlphaError,
    cooccurrence,
    export_onehot_embeddings,
    krippendorff_alpha,
    prevalence,
    sensitive_signal_shares,
)
from .taint import SourceScope, TaintConfig, TaintError, analyze

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_ANALYSIS = 4

INPUT_ERRORS = (IRError, ManifestError, IngestError, json.JSONDecodeError, UnicodeDecodeError)
ANALYSIS_ERRORS = (TaintError, CoFlowError, MatchError, StatsError, ResolutionError)


class ConfigError(ValueError):
    """Bad configuration value; names the key and, when known, the config-file line."""

    def __init__(self, key: str, message: str, source: Optional[str] = None, line: int = 0):
        self.key = key
        self.line = line
        where = f"{source}:{line}: " if source and line else (f"{source}: " if source else "")
        super().__init__(f"{where}{key}: {message}")


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException, exit_code: int):
        self.stage = stage
        self.cause = cause
        self.exit_code = exit_code
        super().__init__(f"stage {stage!r} failed: {cause}")


@dataclass
class PipelineConfig:
    corpus: Optional[Path] = None
    manifests: Optional[Path] = None
    apps: Optional[Path] = None
    app_code: Optional[Path] = None
    labels: Optional[Path] = None
    signal_map: Optional[Path] = None
    taint_config: Optional[Path] = None
    rule: Optional[Path] = None
    ratings: Optional[Path] = None
    eta: float = 0.2
    gamma: float = 0.55
    threshold: int = 20
    context_depth: int = 1
    min_audience: int = 10_000
    top_k: int = 1000
    scope: str = SourceScope.MAIN_ONLY.value
    format: str = "json"
    out: Optional[Path] = None
    jobs: int = 1
    source: Optional[str] = field(default=None, compare=False)
    lines: dict = field(default_factory=dict, compare=False, repr=False)

    REQUIRED = ("corpus", "manifests", "apps", "app_code", "labels", "signal_map", "taint_config")
    OPTIONAL_PATHS = ("rule", "ratings")

    def error(self, key: str, message: str) -> ConfigError:
        return ConfigError(key, message, self.source, self.lines.get(key, 0))

    def validate(self) -> "PipelineConfig":
        for key in self.REQUIRED:
            value = getattr(self, key)
            if value is None:
                raise self.error(key, "required setting is missing")
            if not Path(value).exists():
                raise self.error(key, f"path does not exist: {value}")
        for key in self.OPTIONAL_PATHS:
            value = getattr(self, key)
            if value is not None and not Path(value).exists():
                raise self.error(key, f"path does not exist: {value}")
        checks = [
            ("eta", 0.0 < self.eta <= 1.0, "must lie in (0, 1]"),
            ("gamma", 0.0 < self.gamma <= 1.0, "must lie in (0, 1]"),
            ("threshold", self.threshold >= 1, "must be a positive integer"),
            ("context_depth", 0 <= self.context_depth <= 2, "must be 0, 1 or 2"),
            ("min_audience", self.min_audience >= 0, "must be non-negative"),
            ("top_k", self.top_k >= 1, "must be a positive integer"),
            ("scope", self.scope in {s.value for s in SourceScope}, "must be main-only or bundle"),
            ("format", self.format in ("json", "csv"), "must be json or csv"),
            ("jobs", self.jobs >= 1, "must be a positive integer"),
        ]
        for key, ok, message in checks:
            if not ok:
                raise self.error(key, f"{message} (got {getattr(self, key)!r})")
        if self.out is None:
            raise self.error("out", "an output directory is required")
        return self

    def describe(self) -> dict:
        """Settings as recorded in the run manifest (no output directory)."""
        out = {}
        for f in fields(self):
            if f.name in ("out", "source", "lines", "jobs"):
                continue
            value = getattr(self, f.name)
            out[f.name] = value.as_posix() if isinstance(value, Path) else value
        return out


_PATH_KEYS = {"corpus", "manifests", "apps", "app_code", "labels", "signal_map", "taint_config", "rule", "ratings", "out"}
_TYPES: dict[str, Callable[[Any], Any]] = {
    "eta": float,
    "gamma": float,
    "threshold": int,
    "context_depth": int,
    "min_audience": int,
    "top_k": int,
    "jobs": int,
    "scope": str,
    "format": str,
}


def load_config(path: Optional[Path | str] = None, overrides: Optional[Mapping[str, Any]] = None) -> PipelineConfig:
    """Read a TOML config (paths relative to its directory) and apply overrides."""
    cfg = PipelineConfig()
    values: dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError("config", str(exc), str(path)) from None
        try:
            values = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError("config", str(exc), str(path)) from None
        cfg.source = str(path)
        for lineno, line in enumerate(text.splitlines(), start=1):
            m = re.match(r"\s*([A-Za-z_]+)\s*=", line)
            if m:
                cfg.lines[m.group(1)] = lineno
        base = path.parent
        for key in list(values):
            if key in _PATH_KEYS:
                values[key] = base / values[key]
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = Path(value) if key in _PATH_KEYS else value
            cfg.lines.pop(key, None)
    known = {f.name for f in fields(PipelineConfig)} - {"source", "lines"}
    for key, value in values.items():
        if key not in known:
            raise cfg.error(key, "unknown setting")
        if key in _TYPES:
            try:
                value = _TYPES[key](value)
            except (TypeError, ValueError):
                raise cfg.error(key, f"invalid value {value!r}") from None
        setattr(cfg, key, value)
    return cfg


# --------------------------------------------------------------------- output


def write_atomic(path: Path, data: bytes | str) -> None:
    if isinstance(data, str):
        data = data.encode("utf-8")
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _input_files(cfg: PipelineConfig) -> dict[str, str]:
    out = {}
    for key in PipelineConfig.REQUIRED + PipelineConfig.OPTIONAL_PATHS:
        p = getattr(cfg, key)
        if p is None:
            continue
        p = Path(p)
        files = sorted(q for q in p.rglob("*") if q.is_file()) if p.is_dir() else [p]
        for q in files:
            rel = q.relative_to(p).as_posix() if p.is_dir() else p.name
            out[f"{key}/{rel}" if p.is_dir() else key] = _sha256(q)
    return out


def _analyze_one(args):
    bundle, code, taint_cfg, scope, depth, rule, threshold = args
    graph, findings = analyze(bundle, code, taint_cfg, scope, depth)
    coflows = detect(graph, findings, rule)
    return findings, coflows, classify(bundle.main, coflows, threshold)


def load_ratings_table(path: Path) -> list[list[Optional[str]]]:
    return [row for _item, row in load_ratings(path)]


def run_pipeline(cfg: PipelineConfig, record_timings: bool = False) -> dict[str, Path]:
    """Run every stage in order; returns the written report paths keyed by name."""
    cfg.validate()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    written: dict[str, Path] = {}
    timings: dict[str, float] = {}

    def emit(name: str, data: bytes | str) -> None:
        path = out / name
        write_atomic(path, data)
        written[name] = path

    def stage(name: str, fn: Callable[[], Any]) -> Any:
        start = time.perf_counter()
        try:
            result = fn()
        except INPUT_ERRORS + (OSError,) as exc:
            raise StageError(name, exc, EXIT_INPUT) from exc
        except ANALYSIS_ERRORS as exc:
            raise StageError(name, exc, EXIT_ANALYSIS) from exc
        timings[name] = time.perf_counter() - start
        log.info("stage %s done in %.3fs", name, timings[name])
        return result

    fmt = cfg.format
    scope = SourceScope(cfg.scope)

    # ingest
    def do_ingest():
        apps_all = load_apps(cfg.apps)
        apps = filter_apps(apps_all, cfg.min_audience)
        corpus = load_corpus(Path(cfg.corpus).glob("*.ir"))
        kept = set(filter_sdk_versions(corpus))
        manifests = load_manifests(cfg.manifests)
        labels = load_labels(cfg.labels)
        signal_map = load_signal_map(cfg.signal_map)
        taint_cfg = TaintConfig.load(cfg.taint_config)
        if cfg.rule is not None:
            rule = CoFlowRule.load(cfg.rule)
        else:
            rule = CoFlowRule.fingerprinting(taint_cfg.sources.values(), cfg.threshold)
        app_code = {}
        for a in apps:
            p = Path(cfg.app_code) / f"{a.app_id}.ir"
            if p.exists():
                app_code[a.app_id] = parse_ir(p.read_text(encoding="utf-8"))
        ratings = load_ratings_table(Path(cfg.ratings)) if cfg.ratings else None
        summary = {
            "apps": {"total": len(apps_all), "kept": [a.app_id for a in apps]},
            "sdks": {
                "total": len(corpus),
                "kept": [str(c) for c in sorted(kept)],
                "excluded": [str(c) for c in sorted(set(corpus) - kept)],
            },
            "marketReach": market_reach(apps),
        }
        emit("ingest.json", dump_json(summary))
        return apps, corpus, kept, manifests, labels, signal_map, taint_cfg, rule, app_code, ratings

    apps, corpus, kept, manifests, labels, signal_map, taint_cfg, rule, app_code, ratings = stage(
        "ingest", do_ingest
    )

    def do_resolve():
        graph = build_graph(manifests)
        bundles = {}
        for coord in sorted(kept):
            if coord not in graph.nodes:
                raise ResolutionError(f"no manifest for corpus SDK {coord}")
            bundles[coord] = resolve(graph, coord)
        emit("bundles.json", dump_json([b.to_json() for b in bundles.values()]))
        return bundles

    bundles = stage("resolve", do_resolve)

    def do_analysis():
        jobs = []
        for coord, bundle in bundles.items():
            code = {c: corpus[c] for c in bundle.coordinates if c in corpus}
            jobs.append((bundle, code, taint_cfg, scope, cfg.context_depth, rule, cfg.threshold))
        if cfg.jobs > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
                results = list(pool.map(_analyze_one, jobs))
        else:
            results = [_analyze_one(j) for j in jobs]
        lines, coflow_out, verdicts = [], {}, {}
        for (bundle, *_), (findings, coflows, verdict) in zip(jobs, results):
            for f in findings:
                lines.append(json.dumps({"main": str(bundle.main), **f.to_json()}, sort_keys=True))
            coflow_out[str(bundle.main)] = [c.to_json() for c in coflows]
            verdicts[bundle.main] = verdict
        emit("findings.jsonl", "".join(line + "\n" for line in lines))
        emit("coflow.json", dump_json(coflow_out))
        emit("verdicts.json", verdicts_to_json(verdicts.values()))
        return verdicts

    verdicts: dict[SdkCoordinate, FingerprintVerdict] = stage("taint+coflow+classify", do_analysis)

    def do_match():
        sdks = [corpus[c] for c in sorted(kept)]
        weights = compute_weights(sdks)
        index = build_index(sdks, weights)
        tmp = out / ".index.bin.tmp"
        save_index(index, tmp)
        os.replace(tmp, out / "index.bin")
        written["index.bin"] = out / "index.bin"
        reports = [
            match(app_code[a], index, cfg.eta, cfg.gamma, app_id=a)
            for a in sorted(app_code)
        ]
        emit("matches.json", dump_json([r.to_json() for r in reports]))
        app_sdks = {r.app_id: set(r.accepted) for r in reports}
        emit("app_sdks.json", dump_json({a: sorted(str(c) for c in s) for a, s in sorted(app_sdks.items())}))
        return app_sdks

    app_sdks = stage("match", do_match)

    def do_stats():
        table = prevalence(apps, app_sdks, verdicts, labels)
        emit(f"prevalence.{fmt}", table.to_csv() if fmt == "csv" else dump_json(table.to_json()))
        co = cooccurrence(apps, app_sdks, verdicts, cfg.top_k)
        emit(f"cooccurrence.{fmt}", co.to_csv() if fmt == "csv" else dump_json(co.to_json()))
        shares = sensitive_signal_shares(verdicts, signal_map)
        emit(f"signals.{fmt}", _shares_csv(shares) if fmt == "csv" else dump_json(shares))
        if any(v.flagged for v in verdicts.values()):
            emit("embeddings.csv", export_onehot_embeddings(verdicts).to_csv())
        if ratings is not None:
            try:
                alpha: Optional[float] = krippendorff_alpha(ratings)
            except UndefinedAlphaError:
                alpha = None
            emit("alpha.json", dump_json({"alpha": alpha, "items": len(ratings)}))

    stage("stats", do_stats)

    manifest = {
        "fpscope": __version__,
        "kernelBackend": _kernels.BACKEND,
        "numpy": np.__version__,
        "config": cfg.describe(),
        "inputs": _input_files(cfg),
        "outputs": sorted(written),
        "stages": list(timings),
    }
    if record_timings:
        manifest["timings"] = timings
    emit("run_manifest.json", dump_json(manifest))
    return written


def _shares_csv(shares: Mapping[str, float]) -> str:
    return "class,share\n" + "".join(f"{k},{v!r}\n" for k, v in shares.items())
