import os
import subprocess
import sys

import numpy as np
import pytest

from fpscope import _kernels

pytestmark = pytest.mark.skipif(not _kernels.HAVE_NUMBA, reason="numba not installed")
NP = _kernels.IMPLEMENTATIONS["numpy"]
NB = _kernels.IMPLEMENTATIONS.get("numba", {})


def _csr(rng, rows, n_items):
    sets = [np.sort(rng.choice(n_items, size=rng.integers(0, min(4, n_items) + 1), replace=False)) for _ in range(rows)]
    ptr = np.zeros(rows + 1, dtype=np.int64)
    np.cumsum([len(s) for s in sets], out=ptr[1:])
    items = np.concatenate(sets).astype(np.int64) if sets else np.zeros(0, dtype=np.int64)
    return ptr, items


def test_fnv_backends_agree():
    rng = np.random.default_rng(0)
    for _ in range(50):
        lengths = rng.integers(0, 30, size=rng.integers(0, 20))
        offsets = np.zeros(len(lengths) + 1, dtype=np.int64)
        np.cumsum(lengths, out=offsets[1:])
        data = rng.integers(0, 256, size=int(offsets[-1]), dtype=np.uint8)
        assert np.array_equal(NP["fnv1a_batch"](data, offsets), NB["fnv1a_batch"](data, offsets))


def test_posting_scores_backends_agree():
    rng = np.random.default_rng(1)
    for _ in range(50):
        n_classes = int(rng.integers(1, 40))
        dims = np.unique(rng.integers(0, 2**63, size=rng.integers(1, 60), dtype=np.uint64))
        rows, ds, ws = [], [], []
        for c in range(n_classes):
            for d in rng.choice(dims, size=rng.integers(1, min(8, len(dims)) + 1), replace=False):
                rows.append(c)
                ds.append(d)
                ws.append(rng.random())
        ds, rows, ws = np.array(ds, dtype=np.uint64), np.array(rows, dtype=np.int64), np.array(ws)
        order = np.lexsort((rows, ds))
        ds, rows, ws = ds[order], rows[order], ws[order]
        uniq, starts = np.unique(ds, return_index=True)
        ptr = np.append(starts, len(ds)).astype(np.int64)
        q = np.unique(np.concatenate([rng.choice(dims, size=5), rng.integers(0, 2**63, size=3, dtype=np.uint64)]))
        qw = rng.random(len(q))
        a = NP["posting_scores"](q, qw, uniq, ptr, rows, ws, n_classes)
        b = NB["posting_scores"](q, qw, uniq, ptr, rows, ws, n_classes)
        assert np.array_equal(a, b)


def test_shared_pair_count_backends_agree():
    rng = np.random.default_rng(2)
    for _ in range(100):
        n_items = int(rng.integers(1, 10))
        a = _csr(rng, int(rng.integers(0, 15)), n_items)
        same = bool(rng.integers(0, 2))
        b = a if same else _csr(rng, int(rng.integers(0, 15)), n_items)
        assert NP["shared_pair_count"](*a, *b, n_items, same) == NB["shared_pair_count"](*a, *b, n_items, same)


def test_coincidence_backends_agree():
    rng = np.random.default_rng(3)
    for _ in range(100):
        counts = rng.integers(0, 4, size=(rng.integers(1, 20), rng.integers(1, 6))).astype(np.int64)
        a, b = NP["coincidence"](counts), NB["coincidence"](counts)
        assert np.allclose(a, b, rtol=0, atol=1e-12)
        assert np.allclose(a, a.T, rtol=0, atol=1e-12)


@pytest.mark.parametrize("flag, backend", [("1", "numpy"), ("", "numba")])
def test_env_flag_selects_backend(flag, backend):
    env = dict(os.environ, FPSCOPE_DISABLE_JIT=flag)
    out = subprocess.run(
        [sys.executable, "-c", "from fpscope import _kernels; print(_kernels.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == backend
