"""Numeric inner loops with a numba path and a pure-numpy fallback.

The backend is chosen once at import time. Set ``FPSCOPE_DISABLE_JIT=1`` to
force the numpy path (numba missing has the same effect). Both
implementations are always importable through ``IMPLEMENTATIONS`` so tests
and ``benchmarks/bench_kernels.py`` can compare them directly.
"""

from __future__ import annotations

import os

import numpy as np

FNV_OFFSET = np.uint64(0xCBF29CE484222325)
FNV_PRIME = np.uint64(0x100000001B3)


# ----------------------------------------------------------------- numpy path


def _np_fnv1a_batch(data: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """FNV-1a 64 of each byte string data[offsets[i]:offsets[i+1]]."""
    n = len(offsets) - 1
    starts = offsets[:-1]
    lengths = offsets[1:] - starts
    h = np.full(n, FNV_OFFSET, dtype=np.uint64)
    if n == 0:
        return h
    with np.errstate(over="ignore"):
        for j in range(int(lengths.max(initial=0))):
            active = lengths > j
            byte = data[starts[active] + j].astype(np.uint64)
            h[active] = (h[active] ^ byte) * FNV_PRIME
    return h


def _np_posting_scores(q_dims, q_w, uniq_dims, post_ptr, post_class, post_w, n_classes):
    """Dot products of one sparse query against every indexed class."""
    if len(uniq_dims) == 0:
        return np.zeros(n_classes, dtype=np.float64)
    idx = np.minimum(np.searchsorted(uniq_dims, q_dims), len(uniq_dims) - 1)
    found = uniq_dims[idx] == q_dims
    idx = idx[found]
    qw = q_w[found]
    starts = post_ptr[idx]
    lens = post_ptr[idx + 1] - starts
    total = int(lens.sum())
    if total == 0:
        return np.zeros(n_classes, dtype=np.float64)
    # flat positions of every touched posting, in query order
    seg_start = np.repeat(starts - np.cumsum(lens) + lens, lens)
    flat = seg_start + np.arange(total)
    contrib = np.repeat(qw, lens) * post_w[flat]
    return np.bincount(post_class[flat], weights=contrib, minlength=n_classes)


def _np_shared_pair_count(a_ptr, a_items, b_ptr, b_items, n_items, same_group):
    """Number of (row a, row b) pairs whose item sets intersect; a != b when same_group."""
    na, nb = len(a_ptr) - 1, len(b_ptr) - 1
    if na == 0 or nb == 0:
        return 0
    xa = np.zeros((na, n_items), dtype=np.float64)
    xb = np.zeros((nb, n_items), dtype=np.float64)
    xa[np.repeat(np.arange(na), np.diff(a_ptr)), a_items] = 1.0
    xb[np.repeat(np.arange(nb), np.diff(b_ptr)), b_items] = 1.0
    shared = (xa @ xb.T) > 0
    count = int(shared.sum())
    if same_group:
        count -= int(np.trace(shared))
    return count


def _np_coincidence(counts: np.ndarray) -> np.ndarray:
    """Krippendorff coincidence matrix from a units x values count table."""
    counts = counts.astype(np.float64)
    m = counts.sum(axis=1)
    pairable = m >= 2
    counts = counts[pairable]
    w = 1.0 / (m[pairable] - 1.0)
    o = (counts * w[:, None]).T @ counts
    o -= np.diag((counts * w[:, None]).sum(axis=0))
    return o


NUMPY_IMPL = {
    "fnv1a_batch": _np_fnv1a_batch,
    "posting_scores": _np_posting_scores,
    "shared_pair_count": _np_shared_pair_count,
    "coincidence": _np_coincidence,
}


# ----------------------------------------------------------------- numba path


def _nb_fnv1a_batch(data, offsets):
    n = len(offsets) - 1
    out = np.empty(n, dtype=np.uint64)
    for i in range(n):
        h = np.uint64(0xCBF29CE484222325)
        for j in range(offsets[i], offsets[i + 1]):
            h = (h ^ np.uint64(data[j])) * np.uint64(0x100000001B3)
        out[i] = h
    return out


def _nb_posting_scores(q_dims, q_w, uniq_dims, post_ptr, post_class, post_w, n_classes):
    scores = np.zeros(n_classes, dtype=np.float64)
    nu = len(uniq_dims)
    for i in range(len(q_dims)):
        d = q_dims[i]
        lo, hi = 0, nu
        while lo < hi:
            mid = (lo + hi) // 2
            if uniq_dims[mid] < d:
                lo = mid + 1
            else:
                hi = mid
        if lo == nu or uniq_dims[lo] != d:
            continue
        qw = q_w[i]
        for p in range(post_ptr[lo], post_ptr[lo + 1]):
            scores[post_class[p]] += qw * post_w[p]
    return scores


def _nb_shared_pair_count(a_ptr, a_items, b_ptr, b_items, n_items, same_group):
    na, nb = len(a_ptr) - 1, len(b_ptr) - 1
    count = 0
    for i in range(na):
        for j in range(nb):
            if same_group and i == j:
                continue
            # merge-intersect two sorted item lists
            p, q = a_ptr[i], b_ptr[j]
            pe, qe = a_ptr[i + 1], b_ptr[j + 1]
            while p < pe and q < qe:
                if a_items[p] == b_items[q]:
                    count += 1
                    break
                if a_items[p] < b_items[q]:
                    p += 1
                else:
                    q += 1
    return count


def _nb_coincidence(counts):
    nu, nv = counts.shape
    o = np.zeros((nv, nv), dtype=np.float64)
    for u in range(nu):
        m = 0
        for c in range(nv):
            m += counts[u, c]
        if m < 2:
            continue
        w = 1.0 / (m - 1.0)
        for c in range(nv):
            nc = counts[u, c]
            if nc == 0:
                continue
            for k in range(nv):
                nk = counts[u, k]
                if c == k:
                    o[c, k] += (nc * (nc - 1)) * w
                elif nk:
                    o[c, k] += (nc * nk) * w
    return o


_NUMBA_PY = {
    "fnv1a_batch": _nb_fnv1a_batch,
    "posting_scores": _nb_posting_scores,
    "shared_pair_count": _nb_shared_pair_count,
    "coincidence": _nb_coincidence,
}

try:
    import numba

    NUMBA_IMPL = {name: numba.njit(cache=True)(fn) for name, fn in _NUMBA_PY.items()}
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    NUMBA_IMPL = {}
    HAVE_NUMBA = False

IMPLEMENTATIONS = {"numpy": NUMPY_IMPL}
if HAVE_NUMBA:
    IMPLEMENTATIONS["numba"] = NUMBA_IMPL

JIT_DISABLED = os.environ.get("FPSCOPE_DISABLE_JIT", "").strip().lower() in ("1", "true", "yes")
BACKEND = "numba" if HAVE_NUMBA and not JIT_DISABLED else "numpy"
_ACTIVE = IMPLEMENTATIONS[BACKEND]

fnv1a_batch = _ACTIVE["fnv1a_batch"]
posting_scores = _ACTIVE["posting_scores"]
shared_pair_count = _ACTIVE["shared_pair_count"]
coincidence = _ACTIVE["coincidence"]
