"""`fpscope` command-line entry point."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__, fixtures
from .coflow import CoFlowFinding, CoFlowRule, classify, detect, load_verdicts, verdicts_to_json
from .depgraph import ResolvedBundle, build_graph, load_manifests, resolve
from .ingest import filter_apps, load_apps, load_labels, load_ratings, load_signal_map
from .ir import SdkCoordinate, load_corpus, parse_ir
from .pipeline import (
    ANALYSIS_ERRORS,
    EXIT_ANALYSIS,
    EXIT_CONFIG,
    EXIT_INPUT,
    EXIT_OK,
    INPUT_ERRORS,
    ConfigError,
    StageError,
    _shares_csv,
    dump_json,
    load_config,
    run_pipeline,
    write_atomic,
)
from .sdkmatch import DEFAULT_ETA, DEFAULT_GAMMA, build_index, compute_weights, load_index, match, save_index
from .stats import (
    DEFAULT_TOP_K,
    UndefinedAlphaError,
    cooccurrence,
    export_onehot_embeddings,
    krippendorff_alpha,
    prevalence,
    sensitive_signal_shares,
)
from .taint import SourceScope, TaintConfig, analyze, findings_to_jsonl

log = logging.getLogger("fpscope")


def _emit(text: str, out: Optional[Path]) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        write_atomic(Path(out), text)


def _bundle_and_code(args):
    bundle = ResolvedBundle.from_json(json.loads(Path(args.bundle).read_text(encoding="utf-8")))
    corpus = load_corpus(Path(args.corpus).glob("*.ir"))
    code = {c: corpus[c] for c in bundle.coordinates if c in corpus}
    return bundle, code


def _load_app_sdks(path: Path) -> dict[str, set[SdkCoordinate]]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return {app: {SdkCoordinate.parse(c) for c in coords} for app, coords in payload.items()}


def cmd_resolve(args) -> int:
    graph = build_graph(load_manifests(args.manifests))
    bundle = resolve(graph, SdkCoordinate.parse(args.main))
    _emit(dump_json(bundle.to_json()), args.out)
    return EXIT_OK


def cmd_taint(args) -> int:
    bundle, code = _bundle_and_code(args)
    cfg = TaintConfig.load(args.config)
    _graph, findings = analyze(bundle, code, cfg, SourceScope(args.scope), args.context_depth, args.conservative_unknown)
    _emit(findings_to_jsonl(findings), args.out)
    return EXIT_OK


def cmd_coflow(args) -> int:
    bundle, code = _bundle_and_code(args)
    cfg = TaintConfig.load(args.taint_config)
    rule = CoFlowRule.load(args.rule) if args.rule else CoFlowRule.fingerprinting(cfg.sources.values(), args.threshold)
    graph, findings = analyze(bundle, code, cfg, SourceScope(args.scope), args.context_depth)
    coflows = detect(graph, findings, rule)
    _emit(verdicts_to_json([classify(bundle.main, coflows, args.threshold)]), args.out)
    return EXIT_OK


def cmd_classify(args) -> int:
    payload = json.loads(Path(args.findings).read_text(encoding="utf-8"))
    if isinstance(payload, dict):  # a single verdict or a {main: [findings]} map
        payload = payload.get("findings", payload.get(args.sdk, []))
    findings = [CoFlowFinding.from_json(f) for f in payload]
    _emit(verdicts_to_json([classify(SdkCoordinate.parse(args.sdk), findings, args.threshold)]), args.out)
    return EXIT_OK


def cmd_index_build(args) -> int:
    sdks = list(load_corpus(Path(args.corpus).glob("*.ir")).values())
    index = build_index(sdks, compute_weights(sdks))
    tmp = Path(args.out).with_name(Path(args.out).name + ".tmp")
    save_index(index, tmp)
    tmp.replace(args.out)
    return EXIT_OK


def cmd_match(args) -> int:
    index = load_index(args.index)
    reports = []
    for path in args.app:
        app = parse_ir(Path(path).read_text(encoding="utf-8"))
        reports.append(match(app, index, args.eta, args.gamma, app_id=Path(path).stem).to_json())
    _emit(dump_json(reports), args.out)
    return EXIT_OK


def cmd_stats(args) -> int:
    fmt = args.format
    if args.stat == "alpha":
        rows = [r for _item, r in load_ratings(args.ratings)]
        try:
            alpha: Optional[float] = krippendorff_alpha(rows)
        except UndefinedAlphaError:
            alpha = None
        text = (
            f"alpha\n{'' if alpha is None else repr(alpha)}\n"
            if fmt == "csv"
            else dump_json({"alpha": alpha, "items": len(rows)})
        )
        _emit(text, args.out)
        return EXIT_OK
    verdicts = load_verdicts(args.verdicts)
    if args.stat == "signals":
        shares = sensitive_signal_shares(verdicts, load_signal_map(args.signal_map))
        _emit(_shares_csv(shares) if fmt == "csv" else dump_json(shares), args.out)
        return EXIT_OK
    if args.stat == "embed":
        emb = export_onehot_embeddings(verdicts)
        _emit(emb.to_csv() if fmt == "csv" else dump_json(emb.to_json()), args.out)
        return EXIT_OK
    apps = filter_apps(load_apps(args.apps), args.min_audience)
    app_sdks = _load_app_sdks(args.app_sdks)
    if args.stat == "prevalence":
        table = prevalence(apps, app_sdks, verdicts, load_labels(args.labels))
        _emit(table.to_csv() if fmt == "csv" else dump_json(table.to_json()), args.out)
    else:
        co = cooccurrence(apps, app_sdks, verdicts, args.top_k)
        _emit(co.to_csv() if fmt == "csv" else dump_json(co.to_json()), args.out)
    return EXIT_OK


_OVERRIDES = (
    "corpus", "manifests", "apps", "app_code", "labels", "signal_map", "taint_config", "rule", "ratings",
    "eta", "gamma", "threshold", "context_depth", "min_audience", "top_k", "scope", "format", "out", "jobs",
)


def cmd_run(args) -> int:
    overrides = {k: getattr(args, k) for k in _OVERRIDES}
    cfg = load_config(args.config, overrides)
    written = run_pipeline(cfg, record_timings=args.record_timings)
    log.info("wrote %d reports to %s", len(written), cfg.out)
    return EXIT_OK


def cmd_fixtures_emit(args) -> int:
    fixtures.emit(args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fpscope", description="Detect device fingerprinting in Android SDKs.")
    p.add_argument("--version", action="version", version=f"fpscope {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def out_arg(sp):
        sp.add_argument("--out", type=Path, help="output file (default: stdout)")

    def analysis_args(sp):
        sp.add_argument("--bundle", type=Path, required=True, help="resolved bundle JSON from `resolve`")
        sp.add_argument("--corpus", type=Path, required=True, help="directory of SDK .ir files")
        sp.add_argument("--scope", choices=[s.value for s in SourceScope], default=SourceScope.MAIN_ONLY.value)
        sp.add_argument("--context-depth", type=int, default=1, choices=(0, 1, 2))

    sp = sub.add_parser("resolve", help="resolve an SDK's dependency bundle")
    sp.add_argument("--manifests", type=Path, required=True)
    sp.add_argument("--main", required=True, help="g:a:v coordinate")
    out_arg(sp)
    sp.set_defaults(func=cmd_resolve)

    sp = sub.add_parser("taint", help="source-to-sink flows as JSON lines")
    analysis_args(sp)
    sp.add_argument("--config", type=Path, required=True, help="taint config JSON")
    sp.add_argument("--conservative-unknown", action="store_true", help="treat unknown APIs as propagators")
    out_arg(sp)
    sp.set_defaults(func=cmd_taint)

    sp = sub.add_parser("coflow", help="crossover flows and the fingerprinting verdict")
    analysis_args(sp)
    sp.add_argument("--taint-config", type=Path, required=True)
    sp.add_argument("--rule", type=Path, help="rule JSON (default: all source labels in one group)")
    sp.add_argument("--threshold", type=int, default=20)
    out_arg(sp)
    sp.set_defaults(func=cmd_coflow)

    sp = sub.add_parser("classify", help="apply the distinct-signal threshold to CoFlow findings")
    sp.add_argument("--findings", type=Path, required=True)
    sp.add_argument("--sdk", required=True)
    sp.add_argument("--threshold", type=int, default=20)
    out_arg(sp)
    sp.set_defaults(func=cmd_classify)

    sp = sub.add_parser("index", help="similarity index operations")
    isub = sp.add_subparsers(dest="index_command", required=True)
    ib = isub.add_parser("build", help="build an index from a corpus directory")
    ib.add_argument("--corpus", type=Path, required=True)
    ib.add_argument("--out", type=Path, required=True)
    ib.set_defaults(func=cmd_index_build)

    sp = sub.add_parser("match", help="detect indexed SDKs inside app IR files")
    sp.add_argument("--index", type=Path, required=True)
    sp.add_argument("--app", type=Path, required=True, nargs="+")
    sp.add_argument("--eta", type=float, default=DEFAULT_ETA)
    sp.add_argument("--gamma", type=float, default=DEFAULT_GAMMA)
    out_arg(sp)
    sp.set_defaults(func=cmd_match)

    sp = sub.add_parser("stats", help="corpus statistics")
    ssub = sp.add_subparsers(dest="stat", required=True)
    for name in ("prevalence", "cooccur", "signals", "alpha", "embed"):
        s = ssub.add_parser(name)
        s.add_argument("--format", choices=("json", "csv"), default="json")
        out_arg(s)
        if name in ("prevalence", "cooccur"):
            s.add_argument("--apps", type=Path, required=True)
            s.add_argument("--app-sdks", type=Path, required=True, help="JSON map appId -> [g:a:v]")
            s.add_argument("--min-audience", type=int, default=10_000)
        if name != "alpha":
            s.add_argument("--verdicts", type=Path, required=True)
        if name == "prevalence":
            s.add_argument("--labels", type=Path, required=True)
        if name == "cooccur":
            s.add_argument("--top-k", type=int, default=DEFAULT_TOP_K)
        if name == "signals":
            s.add_argument("--signal-map", type=Path, required=True)
        if name == "alpha":
            s.add_argument("--ratings", type=Path, required=True)
        s.set_defaults(func=cmd_stats)

    sp = sub.add_parser("run", help="full pipeline from a TOML config")
    sp.add_argument("--config", type=Path)
    for key in _OVERRIDES:
        flag = "--" + key.replace("_", "-")
        kind = {"eta": float, "gamma": float, "scope": str, "format": str}.get(key)
        if key in ("threshold", "context_depth", "min_audience", "top_k", "jobs"):
            kind = int
        sp.add_argument(flag, dest=key, type=kind or Path, default=None)
    sp.add_argument("--record-timings", action="store_true", help="store stage timings in the run manifest")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("fixtures", help="bundled demo data")
    fsub = sp.add_subparsers(dest="fixtures_command", required=True)
    fe = fsub.add_parser("emit", help="write the demo corpus and config")
    fe.add_argument("--out", type=Path, required=True)
    fe.set_defaults(func=cmd_fixtures_emit)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"fpscope: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(f"fpscope: {exc}", file=sys.stderr)
        return exc.exit_code
    except INPUT_ERRORS + (OSError,) as exc:
        print(f"fpscope: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ANALYSIS_ERRORS as exc:
        print(f"fpscope: analysis error: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS
    except ValueError as exc:  # bad coordinate or enum value on the command line
        print(f"fpscope: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
