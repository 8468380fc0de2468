"""Compiled versus pure-Python kernel timings.

Runs every hot kernel on both backends with identical inputs, checks the
results agree, and prints one timing row per kernel::

    python3 benchmarks/bench_kernels.py [--repeat 3] [--json out.json]
"""

from __future__ import annotations

import argparse
import json
import time

import numpy as np

from mevsindy import _kernels_py
from mevsindy.model import beam_model, table1_model

try:
    from mevsindy import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def _cases():
    rng = np.random.default_rng(0)
    cases = {}

    m = table1_model()
    args = m.compiled()
    cases["rk4_poly (table1, 20k steps)"] = (
        "rk4_poly", (np.zeros(2), 0.0, 0.01, 20000, 10, *args, 0.5, 1.999))
    b = beam_model()
    cases["rk4_poly (beam, 20k steps)"] = (
        "rk4_poly", (np.zeros(2 * b.dims), 0.0, 0.05, 20000, 10, *b.compiled(), 0.25, 0.551))

    g = rng.normal(size=200_000)
    cases["sliding_trapezoid (200k, h=157)"] = ("sliding_trapezoid", (g, 157))

    p = rng.random((800, 2))
    q = rng.random((1200, 2))
    cases["chamfer_directed (800 x 1200)"] = ("chamfer_directed", (p, q))

    n = 2 * 2000 + 1
    t = np.linspace(0.0, 2 * np.pi, n)
    a = np.zeros((n, 4, 4))
    a[:, 0, 2] = a[:, 1, 3] = 1.0
    a[:, 2, 0] = -4.0 - 0.3 * np.cos(t)
    a[:, 3, 1] = -9.0
    a[:, 2, 2] = a[:, 3, 3] = -0.01
    cases["rk4_linear_propagate (4x4, 2000 steps)"] = ("rk4_linear_propagate", (a, np.pi / 2000))
    return cases


def _time(fn, args, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def _result_array(out):
    if isinstance(out, tuple):
        out = out[0]
    return np.atleast_1d(np.asarray(out, dtype=float))


def run(repeat=3):
    rows = []
    for label, (name, args) in _cases().items():
        t_py, r_py = _time(getattr(_kernels_py, name), args, repeat)
        row = {"kernel": label, "python_s": t_py, "cython_s": None, "speedup": None,
               "max_abs_diff": None}
        if _ckernels is not None:
            t_c, r_c = _time(getattr(_ckernels, name), args, repeat)
            row.update(cython_s=t_c, speedup=t_py / t_c,
                       max_abs_diff=float(np.max(np.abs(_result_array(r_py) - _result_array(r_c)))))
        rows.append(row)
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", default=None, help="also write the rows to this file")
    args = ap.parse_args()
    rows = run(args.repeat)
    print(f"{'kernel':42s} {'python [s]':>11s} {'cython [s]':>11s} {'speedup':>9s} {'max |diff|':>11s}")
    for r in rows:
        if r["cython_s"] is None:
            print(f"{r['kernel']:42s} {r['python_s']:11.4f} {'n/a':>11s} {'n/a':>9s} {'n/a':>11s}")
        else:
            print(f"{r['kernel']:42s} {r['python_s']:11.4f} {r['cython_s']:11.4f} "
                  f"{r['speedup']:8.1f}x {r['max_abs_diff']:11.2e}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
