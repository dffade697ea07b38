"""Compare the numba and numpy kernel backends on synthetic inputs.

Usage: python benchmarks/bench_kernels.py [--repeat N] [--scale S]

Each kernel is run once per backend to warm up (JIT compile), checked for
agreement, then timed with ``timeit``; the best of ``--repeat`` runs is shown.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from fpscope import _kernels


def _csr(rng, rows, n_items, max_len):
    lens = rng.integers(0, max_len + 1, size=rows)
    ptr = np.zeros(rows + 1, dtype=np.int64)
    np.cumsum(lens, out=ptr[1:])
    items = np.concatenate([np.sort(rng.choice(n_items, size=n, replace=False)) for n in lens]).astype(np.int64)
    return ptr, items


def make_inputs(scale: int, seed: int = 0) -> dict[str, tuple]:
    rng = np.random.default_rng(seed)

    lengths = rng.integers(8, 64, size=2000 * scale)
    offsets = np.zeros(len(lengths) + 1, dtype=np.int64)
    np.cumsum(lengths, out=offsets[1:])
    data = rng.integers(32, 127, size=int(offsets[-1]), dtype=np.uint8)

    n_classes, n_dims = 2000 * scale, 20000 * scale
    dims = np.unique(rng.integers(0, 2**63, size=n_dims, dtype=np.uint64))
    per_class = rng.integers(5, 40, size=n_classes)
    rows = np.repeat(np.arange(n_classes, dtype=np.int64), per_class)
    ds = rng.choice(dims, size=len(rows))
    ws = rng.random(len(rows))
    order = np.lexsort((rows, ds))
    ds, rows, ws = ds[order], rows[order], ws[order]
    uniq, starts = np.unique(ds, return_index=True)
    ptr = np.append(starts, len(ds)).astype(np.int64)
    q = np.unique(rng.choice(dims, size=200))
    qw = rng.random(len(q))

    n_items = 60
    a = _csr(rng, 300 * scale, n_items, 6)
    b = _csr(rng, 300 * scale, n_items, 6)

    counts = rng.integers(0, 3, size=(10000 * scale, 4)).astype(np.int64)

    return {
        "fnv1a_batch": (data, offsets),
        "posting_scores": (q, qw, uniq, ptr, rows, ws, n_classes),
        "shared_pair_count": (*a, *b, n_items, False),
        "coincidence": (counts,),
    }


def _agree(x, y) -> bool:
    if isinstance(x, np.ndarray):
        if x.dtype.kind == "f":
            return bool(np.allclose(x, y, rtol=0, atol=1e-9))
        return bool(np.array_equal(x, y))
    return x == y


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--scale", type=int, default=1)
    args = ap.parse_args(argv)

    if "numba" not in _kernels.IMPLEMENTATIONS:
        print("numba is not installed; only the numpy backend is available")
        return 1
    inputs = make_inputs(args.scale)
    np_impl, nb_impl = _kernels.IMPLEMENTATIONS["numpy"], _kernels.IMPLEMENTATIONS["numba"]
    print(f"{'kernel':<20}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}  agree")
    for name, call_args in inputs.items():
        agree = _agree(np_impl[name](*call_args), nb_impl[name](*call_args))
        t_np = min(timeit.repeat(lambda: np_impl[name](*call_args), number=1, repeat=args.repeat)) * 1e3
        t_nb = min(timeit.repeat(lambda: nb_impl[name](*call_args), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<20}{t_np:>12.3f}{t_nb:>12.3f}{t_np / t_nb:>9.1f}x  {agree}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
