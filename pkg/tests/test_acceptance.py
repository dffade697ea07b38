"""Acceptance suite: one PASS/FAIL line per criterion.

Each criterion bundles the checks that establish it, times them against its
budget, and records a summary line. The lines are printed as each test runs
(visible with ``-s``) and again in the terminal summary via ``conftest.py``.
Run ``python tests/test_acceptance.py`` to get only the summary lines.
"""

from __future__ import annotations

import random
import sys
import time
import traceback
from pathlib import Path
from typing import Callable, Optional

from fpscope.cli import main
from fpscope.sdkmatch import build_index, compute_weights, match
from fpscope.synth import SynthParams, planted_corpus, precision_recall
from fpscope.taint import SourceScope

import test_cli
import test_coflow
import test_depgraph
import test_sdkmatch
import test_stats
import test_taint
from generators import random_program

RESULTS: list[str] = []


def _criterion(name: str, checks: list[Callable[[], Optional[str]]], budget: Optional[float] = None) -> None:
    start = time.perf_counter()
    notes, error = [], None
    try:
        for check in checks:
            note = check()
            if note:
                notes.append(note)
    except Exception as exc:  # recorded, then re-raised as a failure below
        error = f"{type(exc).__name__}: {exc}".strip() or traceback.format_exc(limit=1)
    elapsed = time.perf_counter() - start
    over = budget is not None and elapsed >= budget
    ok = error is None and not over
    detail = f"{elapsed:.2f}s" + (f" of {budget:g}s" if budget is not None else "")
    if notes:
        detail += "; " + "; ".join(notes)
    if error:
        detail += f"; {error.splitlines()[0][:200]}"
    elif over:
        detail += "; over budget"
    line = f"{'PASS' if ok else 'FAIL'}  {name}  ({detail})"
    RESULTS.append(line)
    print(line)
    assert ok, line


# ---------------------------------------------------------------- checks


def _taint_oracle_k1() -> str:
    for seed in range(200):
        _main, code, _depth = random_program(random.Random(seed))
        methods = [m for s in code.values() for _c, m in s.iter_methods()]
        assert len(methods) <= 5 and sum(len(m.body) for m in methods) <= 30, seed
    for scope in SourceScope:
        test_taint.test_findings_equal_same_abstraction_oracle(scope, 1)
    test_taint.test_exact_flows_are_covered(1)
    return "200 programs x 2 scopes"


def _planted() -> str:
    pc = planted_corpus(SynthParams(), seed=0)
    assert len(pc.sdks) == 50 and len(pc.apps) == 30
    assert all(len(t) == 3 for t in pc.truth.values())
    index = build_index(list(pc.sdks), compute_weights(list(pc.sdks)))
    predicted = {a.coordinate.artifact: set(match(a, index, 0.2, 0.55).accepted) for a in pc.apps}
    precision, recall = precision_recall(predicted, pc.truth)
    note = f"precision {precision:.3f}, recall {recall:.3f}"
    assert precision >= 0.95 and recall >= 0.80, note
    return note


def _determinism(root: Path) -> Callable[[], str]:
    def check() -> str:
        assert main(["fixtures", "emit", "--out", str(root / "in")]) == 0
        cfg = str(root / "in" / "config.toml")
        assert main(["run", "--config", cfg, "--out", str(root / "a")]) == 0
        assert main(["run", "--config", cfg, "--out", str(root / "b")]) == 0
        assert test_cli._same_tree(root / "a", root / "b")
        return f"{sum(1 for _ in (root / 'a').iterdir())} reports identical"

    return check


# ---------------------------------------------------------------- criteria


def test_dependency_resolution():
    _criterion("dependency golden + 500-DAG path oracle", [
        test_depgraph.test_nearest_version_wins,
        test_depgraph.test_resolution_matches_path_enumeration_oracle,
    ], budget=5.0)


def test_coflow_golden():
    _criterion("coflow golden: 2 findings, byte-stable", [
        test_coflow.test_crossover_fixture_yields_two_findings,
        test_coflow.test_crossover_fixture_is_byte_stable,
    ])


def test_taint_oracle_equivalence():
    _criterion("taint fixed point equals call-expansion oracle (k=1)", [_taint_oracle_k1], budget=30.0)


def test_classification_boundary():
    _criterion("classification 19 vs 20 boundary + monotonicity", [
        test_coflow.test_threshold_boundary_19_vs_20,
        test_coflow.test_threshold_monotonicity,
    ])


def test_matcher_exactness():
    _criterion("inverted index equals brute-force cosine (20 corpora)", [
        test_sdkmatch.test_index_candidates_equal_brute_force,
    ])


def test_planted_recovery():
    _criterion("planted SDK recovery at eta=0.2, gamma=0.55", [_planted], budget=60.0)


def test_vector_algebra():
    _criterion("vector algebra + hash golden", [
        test_sdkmatch.test_hash_golden_file,
        test_sdkmatch.test_hash_published_vectors,
        test_sdkmatch.test_batch_hash_matches_reference,
        test_sdkmatch.test_additivity_method_class_sdk,
        test_sdkmatch.test_cosine_properties,
        test_sdkmatch.test_renaming_leaves_vectors_bit_identical,
        test_sdkmatch.test_obfuscated_fixture_vectors_match,
    ])


def test_krippendorff_alpha():
    _criterion("krippendorff alpha: perfect, 50-case oracle, chance level", [
        test_stats.test_alpha_perfect_agreement_is_one,
        test_stats.test_alpha_worked_example,
        test_stats.test_alpha_matches_pairwise_oracle,
        test_stats.test_alpha_chance_level_for_random_labels,
    ])


def test_stats_recount():
    _criterion("stats equal nested-loop recount (20 fixtures)", [
        test_stats.test_prevalence_matches_recount,
        test_stats.test_cooccurrence_matches_pair_enumeration,
        test_stats.test_signal_shares_match_recount,
        test_stats.test_embeddings_match_recount,
    ])


def test_pipeline_determinism(tmp_path):
    _criterion("pipeline run twice is byte-identical", [_determinism(tmp_path)])


if __name__ == "__main__":
    import logging
    import tempfile

    logging.disable(logging.WARNING)
    criteria = [v for k, v in list(globals().items()) if k.startswith("test_") and callable(v)]
    failed = 0
    for fn in criteria:
        try:
            if fn is test_pipeline_determinism:
                with tempfile.TemporaryDirectory() as d:
                    fn(Path(d))
            else:
                fn()
        except AssertionError:
            failed += 1
    print(f"{len(criteria) - failed}/{len(criteria)} criteria pass")
    sys.exit(1 if failed else 0)
