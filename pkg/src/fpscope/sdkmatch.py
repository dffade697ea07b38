"""Identify which indexed SDKs are embedded in app code.

Methods become sparse vectors over 64-bit hashed feature names:

* ``sig:<anonymized signature>`` with weight 1,
* ``api:<framework api>`` with the invocation count,
* ``str:<string constant>`` with weight 1,
* ``op:<instruction kind>`` with the kind's share of the method body.

Vectors are scaled per dimension by an inverse SDK-frequency weight and
summed into class vectors. Matching is two-stage: every app class collects
the SDK classes whose cosine similarity is at least ``eta``; an SDK is then
kept only if at least a ``gamma`` fraction of its classes were collected.
"""

from __future__ import annotations

import math
import struct
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from . import _kernels
from .hashing import fnv1a_64, h64_many
from .ir import ClassIR, MethodIR, SdkCoordinate, SdkIR

FeatureVector = dict[int, float]

DEFAULT_ETA = 0.2
DEFAULT_GAMMA = 0.55
# cosine values within this distance below eta still count as matches
SIMILARITY_EPS = 1e-12
INDEX_MAGIC = b"FPSIDX\x00\x00"
INDEX_VERSION = 1


class MatchError(ValueError):
    pass


# ------------------------------------------------------------------- features


def feature_names(m: MethodIR) -> dict[str, float]:
    """Unhashed features of one method."""
    feats: dict[str, float] = {"sig:" + m.anon_signature: 1.0}
    apis = Counter(ins.api for ins in m.body if ins.api is not None)
    for api, n in apis.items():
        feats["api:" + api] = float(n)
    for ins in m.body:
        if ins.literal is not None:
            feats["str:" + ins.literal] = 1.0
    if m.body:
        ops = Counter(ins.kind.name for ins in m.body)
        for op, n in ops.items():
            feats["op:" + op] = n / len(m.body)
    return feats


def extract_features(m: MethodIR) -> FeatureVector:
    names = feature_names(m)
    dims = h64_many(list(names))
    vec: FeatureVector = {}
    for d, w in zip(dims.tolist(), names.values()):
        vec[d] = vec.get(d, 0.0) + w
    return vec


def add_vectors(vectors: Iterable[Mapping[int, float]]) -> FeatureVector:
    out: FeatureVector = {}
    for v in vectors:
        for d, w in v.items():
            out[d] = out.get(d, 0.0) + w
    return {d: w for d, w in out.items() if w != 0.0}


def norm(v: Mapping[int, float]) -> float:
    return math.sqrt(math.fsum(w * w for w in v.values()))


def cosine(a: Mapping[int, float], b: Mapping[int, float]) -> float:
    na, nb = norm(a), norm(b)
    if na == 0.0 or nb == 0.0:
        raise MatchError("cosine of a zero-norm vector is undefined")
    if len(b) < len(a):
        a, b = b, a
    dot = math.fsum(w * b[d] for d, w in a.items() if d in b)
    return min(1.0, max(0.0, dot / (na * nb)))


# -------------------------------------------------------------------- weights


@dataclass(frozen=True)
class WeightTable:
    weights: Mapping[int, float]
    default: float = 1.0

    def __post_init__(self) -> None:
        if any(not w > 0.0 for w in self.weights.values()):
            raise MatchError("weights must be strictly positive")

    def get(self, dim: int) -> float:
        return self.weights.get(dim, self.default)

    def packed(self) -> bytes:
        items = sorted(self.weights.items())
        return b"".join(struct.pack("<Qd", d, w) for d, w in items)

    def fingerprint(self) -> int:
        return fnv1a_64(self.packed())


def _sdk_dims(sdk: SdkIR) -> set[int]:
    dims: set[int] = set()
    for _c, m in sdk.iter_methods():
        dims.update(extract_features(m))
    return dims


def document_frequencies(corpus: Sequence[SdkIR]) -> Counter:
    df: Counter = Counter()
    for sdk in corpus:
        df.update(_sdk_dims(sdk))
    return df


def compute_weights(corpus: Sequence[SdkIR]) -> WeightTable:
    """weight(d) = ln(1 + |corpus| / df(d)), df counted in distinct SDKs."""
    if not corpus:
        raise MatchError("cannot weight an empty corpus")
    n = len(corpus)
    df = document_frequencies(corpus)
    return WeightTable({d: math.log(1.0 + n / f) for d, f in df.items()})


def feature_frequency_histogram(corpus: Sequence[SdkIR], max_bucket: int = 10) -> dict[int, int]:
    if not corpus:
        raise MatchError("empty corpus")
    if max_bucket < 1:
        raise MatchError("max_bucket must be positive")
    hist = {f: 0 for f in range(1, max_bucket + 1)}
    for f in document_frequencies(corpus).values():
        hist[min(f, max_bucket)] += 1
    return hist


def weighted_vector(v: Mapping[int, float], w: WeightTable) -> FeatureVector:
    return {d: x * w.get(d) for d, x in v.items()}


def class_vector(c: ClassIR, w: WeightTable) -> FeatureVector:
    if not c.methods:
        raise MatchError(f"class {c.id!r} has no methods")
    return add_vectors(weighted_vector(extract_features(m), w) for m in c.methods)


def sdk_vector(sdk: SdkIR, w: WeightTable) -> FeatureVector:
    return add_vectors(class_vector(c, w) for c in sdk.classes if c.methods)


# ---------------------------------------------------------------------- index


@dataclass
class SdkIndex:
    """Exact cosine search over weighted SDK class vectors.

    Rows are classes; ``owner[row]`` indexes ``sdks``. Candidate retrieval
    walks the posting list of each query dimension, so only classes sharing
    a dimension with the query are ever scored.
    """

    weights: WeightTable
    sdks: list[SdkCoordinate]
    owner: np.ndarray
    class_ids: list[str]
    vectors: list[FeatureVector]
    fingerprint: int = 0
    norms: np.ndarray = field(init=False, repr=False)
    _uniq: np.ndarray = field(init=False, repr=False)
    _ptr: np.ndarray = field(init=False, repr=False)
    _cls: np.ndarray = field(init=False, repr=False)
    _w: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.fingerprint = self.fingerprint or self.weights.fingerprint()
        self.norms = np.array([norm(v) for v in self.vectors], dtype=np.float64)
        rows, dims, vals = [], [], []
        for row, vec in enumerate(self.vectors):
            for d, w in vec.items():
                rows.append(row)
                dims.append(d)
                vals.append(w)
        dims_a = np.array(dims, dtype=np.uint64)
        rows_a = np.array(rows, dtype=np.int64)
        vals_a = np.array(vals, dtype=np.float64)
        order = np.lexsort((rows_a, dims_a))
        dims_a, rows_a, vals_a = dims_a[order], rows_a[order], vals_a[order]
        self._uniq, starts = np.unique(dims_a, return_index=True)
        self._ptr = np.append(starts, len(dims_a)).astype(np.int64)
        self._cls = rows_a
        self._w = vals_a

    @property
    def class_counts(self) -> dict[SdkCoordinate, int]:
        counts = np.bincount(self.owner, minlength=len(self.sdks))
        return {s: int(n) for s, n in zip(self.sdks, counts)}

    def scores(self, vec: Mapping[int, float]) -> np.ndarray:
        """Cosine similarity of `vec` against every class row."""
        items = sorted(vec.items())
        q_dims = np.array([d for d, _ in items], dtype=np.uint64)
        q_w = np.array([w for _, w in items], dtype=np.float64)
        dots = _kernels.posting_scores(
            q_dims, q_w, self._uniq, self._ptr, self._cls, self._w, len(self.vectors)
        )
        qn = norm(vec)
        if qn == 0.0:
            raise MatchError("query vector has zero norm")
        return np.clip(dots / (qn * self.norms), 0.0, 1.0)

    def candidates(self, vec: Mapping[int, float], eta: float) -> list[int]:
        """Rows with cosine >= eta, ascending."""
        return np.flatnonzero(self.scores(vec) >= eta - SIMILARITY_EPS).tolist()

    def row_label(self, row: int) -> tuple[SdkCoordinate, str]:
        return self.sdks[self.owner[row]], self.class_ids[row]


def build_index(corpus: Sequence[SdkIR], w: WeightTable) -> SdkIndex:
    """Index every non-empty class of every SDK in `corpus`."""
    if not corpus:
        raise MatchError("cannot index an empty corpus")
    sdks = sorted(s.coordinate for s in corpus)
    if len(set(sdks)) != len(sdks):
        raise MatchError("duplicate SDK coordinate in corpus")
    by_coord = {s.coordinate: s for s in corpus}
    owner, class_ids, vectors = [], [], []
    for i, coord in enumerate(sdks):
        for c in by_coord[coord].classes:
            if not c.methods:
                continue
            owner.append(i)
            class_ids.append(c.id)
            vectors.append(class_vector(c, w))
    return SdkIndex(w, sdks, np.array(owner, dtype=np.int64), class_ids, vectors)


# ---------------------------------------------------------------------- match


@dataclass(frozen=True)
class SdkSupport:
    matched: int
    total: int
    support: float
    accepted: bool

    def to_json(self) -> dict:
        return {
            "matchedClassCount": self.matched,
            "totalClassCount": self.total,
            "support": self.support,
            "accepted": self.accepted,
        }


@dataclass(frozen=True)
class MatchReport:
    app_id: str
    sdks: Mapping[SdkCoordinate, SdkSupport]
    candidates: Mapping[str, frozenset[tuple[SdkCoordinate, str]]]

    @property
    def accepted(self) -> list[SdkCoordinate]:
        return sorted(c for c, s in self.sdks.items() if s.accepted)

    def to_json(self) -> dict:
        return {
            "app": self.app_id,
            "accepted": [str(c) for c in self.accepted],
            "sdks": {str(c): s.to_json() for c, s in sorted(self.sdks.items())},
            "candidates": {
                cid: [f"{c}#{k}" for c, k in sorted(cands)]
                for cid, cands in sorted(self.candidates.items())
            },
        }


def match(
    app: SdkIR,
    index: SdkIndex,
    eta: float = DEFAULT_ETA,
    gamma: float = DEFAULT_GAMMA,
    weights: Optional[WeightTable] = None,
    app_id: Optional[str] = None,
) -> MatchReport:
    """Candidate search per app class, then drop SDKs with support below gamma."""
    if not 0.0 < eta <= 1.0 or not 0.0 < gamma <= 1.0:
        raise MatchError("eta and gamma must lie in (0, 1]")
    if weights is not None and weights.fingerprint() != index.fingerprint:
        raise MatchError("weight table does not match the one the index was built with")
    w = index.weights
    cand_rows: dict[str, list[int]] = {}
    for c in app.classes:
        if c.methods:
            cand_rows[c.id] = index.candidates(class_vector(c, w), eta)
    hit = sorted({r for rows in cand_rows.values() for r in rows})
    matched = Counter(int(index.owner[r]) for r in hit)
    totals = index.class_counts
    report: dict[SdkCoordinate, SdkSupport] = {}
    rejected = set()
    for sdk_i, n in sorted(matched.items()):
        coord = index.sdks[sdk_i]
        support = n / totals[coord]
        ok = support >= gamma
        report[coord] = SdkSupport(n, totals[coord], support, ok)
        if not ok:
            rejected.add(sdk_i)
    filtered = {
        cid: frozenset(index.row_label(r) for r in rows if int(index.owner[r]) not in rejected)
        for cid, rows in cand_rows.items()
    }
    return MatchReport(app_id or str(app.coordinate), report, filtered)


# ---------------------------------------------------------------- persistence


def save_index(index: SdkIndex, path: Path | str) -> None:
    """Write the index: header, weight table, then per-SDK class records.

    All integers and floats are little-endian; strings are u32-length-prefixed
    UTF-8; every vector is a sorted run of (u64 dimension, f64 weight) pairs.
    """
    out = [INDEX_MAGIC, struct.pack("<IQ", INDEX_VERSION, index.fingerprint)]
    packed = index.weights.packed()
    out.append(struct.pack("<Q", len(index.weights.weights)))
    out.append(packed)

    def string(s: str) -> bytes:
        raw = s.encode("utf-8")
        return struct.pack("<I", len(raw)) + raw

    out.append(struct.pack("<I", len(index.sdks)))
    rows_by_sdk: dict[int, list[int]] = {}
    for row, owner in enumerate(index.owner.tolist()):
        rows_by_sdk.setdefault(owner, []).append(row)
    for i, coord in enumerate(index.sdks):
        rows = rows_by_sdk.get(i, [])
        out.append(string(str(coord)))
        out.append(struct.pack("<I", len(rows)))
        for row in rows:
            vec = sorted(index.vectors[row].items())
            out.append(string(index.class_ids[row]))
            out.append(struct.pack("<I", len(vec)))
            out.append(b"".join(struct.pack("<Qd", d, w) for d, w in vec))
    Path(path).write_bytes(b"".join(out))


def load_index(path: Path | str) -> SdkIndex:
    data = Path(path).read_bytes()
    pos = 0

    def take(fmt: str):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(data):
            raise MatchError(f"{path}: truncated index file")
        vals = struct.unpack_from(fmt, data, pos)
        pos += size
        return vals

    def string() -> str:
        nonlocal pos
        (n,) = take("<I")
        raw = data[pos : pos + n]
        pos += n
        return raw.decode("utf-8")

    if data[:8] != INDEX_MAGIC:
        raise MatchError(f"{path}: not an index file")
    pos = 8
    version, fingerprint = take("<IQ")
    if version != INDEX_VERSION:
        raise MatchError(f"{path}: unsupported index version {version}")
    (n_weights,) = take("<Q")
    weights = dict(take("<Qd") for _ in range(n_weights))
    table = WeightTable(weights)
    if table.fingerprint() != fingerprint:
        raise MatchError(f"{path}: weight table does not match stored fingerprint")
    (n_sdks,) = take("<I")
    sdks, owner, class_ids, vectors = [], [], [], []
    for i in range(n_sdks):
        sdks.append(SdkCoordinate.parse(string()))
        (n_classes,) = take("<I")
        for _ in range(n_classes):
            class_ids.append(string())
            (nnz,) = take("<I")
            vectors.append(dict(take("<Qd") for _ in range(nnz)))
            owner.append(i)
    if pos != len(data):
        raise MatchError(f"{path}: trailing bytes in index file")
    return SdkIndex(table, sdks, np.array(owner, dtype=np.int64), class_ids, vectors, fingerprint)
