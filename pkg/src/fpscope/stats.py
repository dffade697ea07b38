"""Corpus statistics over fingerprinting verdicts and app-SDK matches."""

from __future__ import annotations

import csv
import io
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Hashable, Mapping, Optional, Sequence

import numpy as np

from . import _kernels
from .coflow import FingerprintVerdict
from .ingest import AppRecord, Label, SdkLabel, SignalClass
from .ir import SdkCoordinate

log = logging.getLogger(__name__)

DEFAULT_TOP_K = 1000


class StatsError(ValueError):
    pass


class UndefinedAlphaError(StatsError):
    """Expected disagreement is zero: only one value was ever used."""


def _flagged(verdicts: Mapping[SdkCoordinate, FingerprintVerdict]) -> set[SdkCoordinate]:
    return {c for c, v in verdicts.items() if v.flagged}


def _check_apps(apps: Sequence[AppRecord], app_sdks: Mapping[str, object]) -> None:
    known = {a.app_id for a in apps}
    missing = sorted(set(app_sdks) - known)
    if missing:
        raise StatsError(f"app-SDK map references unknown apps: {missing[:5]}")


# ----------------------------------------------------------------- prevalence


@dataclass(frozen=True)
class PrevalenceTable:
    app_counts: Mapping[str, int]
    any_label: Mapping[str, float]
    by_label: Mapping[str, Mapping[Label, float]]
    diagnostics: tuple[str, ...] = ()

    def to_json(self) -> dict:
        return {
            cat: {
                "apps": self.app_counts[cat],
                "any": self.any_label[cat],
                **{lab.value: self.by_label[cat][lab] for lab in Label},
            }
            for cat in sorted(self.app_counts)
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["category", "apps", "any"] + [lab.value for lab in Label])
        for cat in sorted(self.app_counts):
            w.writerow(
                [cat, self.app_counts[cat], repr(self.any_label[cat])]
                + [repr(self.by_label[cat][lab]) for lab in Label]
            )
        return buf.getvalue()


def prevalence(
    apps: Sequence[AppRecord],
    app_sdks: Mapping[str, set[SdkCoordinate]],
    verdicts: Mapping[SdkCoordinate, FingerprintVerdict],
    labels: Mapping[SdkCoordinate, SdkLabel],
) -> PrevalenceTable:
    """Share of each category's apps containing a flagged SDK, overall and per label."""
    _check_apps(apps, app_sdks)
    flagged = _flagged(verdicts)
    diagnostics = []
    total: dict[str, int] = defaultdict(int)
    any_hits: dict[str, int] = defaultdict(int)
    label_hits: dict[str, dict[Label, int]] = defaultdict(lambda: defaultdict(int))
    for app in apps:
        total[app.category] += 1
        hits = sorted(set(app_sdks.get(app.app_id, ())) & flagged)
        if not hits:
            continue
        any_hits[app.category] += 1
        app_labels = set()
        for sdk in hits:
            if sdk in labels:
                app_labels.add(labels[sdk].label)
            else:
                msg = f"flagged SDK {sdk} has no label; counted as {Label.UNCLEAR_UNFOUND.value}"
                if msg not in diagnostics:
                    diagnostics.append(msg)
                    log.warning("%s", msg)
                app_labels.add(Label.UNCLEAR_UNFOUND)
        for lab in app_labels:
            label_hits[app.category][lab] += 1
    cats = sorted(total)
    return PrevalenceTable(
        {c: total[c] for c in cats},
        {c: any_hits[c] / total[c] for c in cats},
        {c: {lab: label_hits[c][lab] / total[c] for lab in Label} for c in cats},
        tuple(diagnostics),
    )


# --------------------------------------------------------------- co-occurrence


@dataclass(frozen=True)
class CooccurrenceMatrix:
    categories: tuple[str, ...]
    values: np.ndarray  # NaN marks an undefined cell

    def cell(self, a: str, b: str) -> Optional[float]:
        v = self.values[self.categories.index(a), self.categories.index(b)]
        return None if math.isnan(v) else float(v)

    def to_json(self) -> dict:
        return {
            a: {b: self.cell(a, b) for b in self.categories} for a in self.categories
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["category", *self.categories])
        for i, a in enumerate(self.categories):
            w.writerow([a] + ["" if math.isnan(v) else repr(float(v)) for v in self.values[i]])
        return buf.getvalue()


def top_apps(apps: Sequence[AppRecord], k: int) -> dict[str, list[AppRecord]]:
    """Per category, the k largest apps by audience (ties by appId ascending)."""
    by_cat: dict[str, list[AppRecord]] = defaultdict(list)
    for a in apps:
        by_cat[a.category].append(a)
    return {
        c: sorted(lst, key=lambda a: (-a.audience_size, a.app_id))[:k] for c, lst in sorted(by_cat.items())
    }


def cooccurrence(
    apps: Sequence[AppRecord],
    app_sdks: Mapping[str, set[SdkCoordinate]],
    verdicts: Mapping[SdkCoordinate, FingerprintVerdict],
    top_k: int = DEFAULT_TOP_K,
) -> CooccurrenceMatrix:
    """Fraction of distinct-app pairs across two categories sharing a flagged SDK."""
    if top_k < 1:
        raise StatsError("top_k must be positive")
    _check_apps(apps, app_sdks)
    flagged = sorted(_flagged(verdicts))
    sdk_id = {c: i for i, c in enumerate(flagged)}
    groups = top_apps(apps, top_k)
    cats = tuple(groups)

    csr = {}
    for c, members in groups.items():
        rows = [sorted(sdk_id[s] for s in app_sdks.get(a.app_id, ()) if s in sdk_id) for a in members]
        ptr = np.zeros(len(rows) + 1, dtype=np.int64)
        np.cumsum([len(r) for r in rows], out=ptr[1:])
        items = np.array([i for r in rows for i in r], dtype=np.int64)
        csr[c] = (ptr, items)

    values = np.full((len(cats), len(cats)), np.nan)
    for i, a in enumerate(cats):
        for j in range(i, len(cats)):
            b = cats[j]
            na, nb = len(groups[a]), len(groups[b])
            pairs = na * (na - 1) if i == j else na * nb
            if pairs == 0:
                continue
            shared = _kernels.shared_pair_count(*csr[a], *csr[b], len(flagged), i == j)
            values[i, j] = values[j, i] = shared / pairs
    return CooccurrenceMatrix(cats, values)


# ------------------------------------------------------------ signal classes


LOCATION_UNION = "LOCATION"


def sensitive_signal_shares(
    verdicts: Mapping[SdkCoordinate, FingerprintVerdict],
    signal_map: Mapping[str, SignalClass],
) -> dict[str, float]:
    """Share of flagged SDKs exfiltrating at least one API of each sensitivity class."""
    flagged = [v for v in verdicts.values() if v.flagged]
    keys = [c.value for c in SignalClass] + [LOCATION_UNION]
    counts = dict.fromkeys(keys, 0)
    for v in flagged:
        classes = {signal_map[api].value for api in v.apis if api in signal_map}
        for c in classes:
            counts[c] += 1
        if classes & {SignalClass.LOCATION_COARSE.value, SignalClass.LOCATION_FINE.value}:
            counts[LOCATION_UNION] += 1
    n = len(flagged)
    return {k: (counts[k] / n if n else 0.0) for k in keys}


# ------------------------------------------------------------------- agreement


def krippendorff_alpha(ratings: Sequence[Sequence[Optional[Hashable]]]) -> float:
    """Nominal Krippendorff's alpha for an items x raters table (None = missing)."""
    if not ratings or min(len(r) for r in ratings) < 2:
        raise StatsError("need at least two raters")
    values = sorted({v for row in ratings for v in row if v is not None}, key=str)
    index = {v: i for i, v in enumerate(values)}
    counts = np.zeros((len(ratings), len(values)), dtype=np.int64)
    for u, row in enumerate(ratings):
        for v in row:
            if v is not None:
                counts[u, index[v]] += 1
    if not (counts.sum(axis=1) >= 2).any():
        raise StatsError("no item has two or more ratings")
    o = _kernels.coincidence(counts)
    n_c = o.sum(axis=1)
    n = n_c.sum()
    off = ~np.eye(len(values), dtype=bool)
    d_o = o[off].sum() / n
    d_e = np.outer(n_c, n_c)[off].sum() / (n * (n - 1.0))
    if d_e == 0.0:
        raise UndefinedAlphaError("alpha is undefined when only one value occurs")
    return float(1.0 - d_o / d_e)


# ------------------------------------------------------------------ embeddings


@dataclass(frozen=True)
class OneHotEmbedding:
    sdks: tuple[SdkCoordinate, ...]
    apis: tuple[str, ...]
    matrix: np.ndarray = field(repr=False)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["sdk", *self.apis])
        for sdk, row in zip(self.sdks, self.matrix):
            w.writerow([str(sdk), *row.tolist()])
        return buf.getvalue()

    def to_json(self) -> dict:
        return {"apis": list(self.apis), "rows": {str(s): r.tolist() for s, r in zip(self.sdks, self.matrix)}}


def export_onehot_embeddings(verdicts: Mapping[SdkCoordinate, FingerprintVerdict]) -> OneHotEmbedding:
    """Flagged SDKs x distinct exfiltrated source APIs, 1 where the SDK uses the API."""
    flagged = sorted(c for c, v in verdicts.items() if v.flagged)
    if not flagged:
        raise StatsError("no flagged SDKs to embed")
    apis = sorted(set().union(*(verdicts[c].apis for c in flagged)))
    col = {a: j for j, a in enumerate(apis)}
    matrix = np.zeros((len(flagged), len(apis)), dtype=np.uint8)
    for i, c in enumerate(flagged):
        for a in verdicts[c].apis:
            matrix[i, col[a]] = 1
    return OneHotEmbedding(tuple(flagged), tuple(apis), matrix)
