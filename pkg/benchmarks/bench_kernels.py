"""Compare the compiled and numpy kernel backends.

    python benchmarks/bench_kernels.py [--particles N] [--repeat R] [--json out.json]

Each kernel is timed on identical inputs with both backends; the outputs are
also compared so a speedup never hides a disagreement.
"""
from __future__ import annotations

import argparse
import json
import platform
import timeit

import numpy as np

from stochquant.kernels import available_backends
from stochquant.rng import Tag, stream_keys


def _fields_1d(m: int, rng):
    return rng.normal(size=m), rng.normal(size=m)


def cases(n: int, rng):
    m = 2000
    x0, h = -10.0, 20.0 / (m - 1)
    vb, w = _fields_1d(m, rng)
    q1 = rng.uniform(-5, 5, n)
    s1 = rng.choice([-1.0, 1.0], n)
    keys = stream_keys(1, np.arange(n), Tag.SIGN)
    mm = 200
    f2 = [np.ascontiguousarray(rng.normal(size=(mm, mm))) for _ in range(4)]
    q2 = np.ascontiguousarray(rng.uniform(-5, 5, (n, 2)))
    nt = 4000
    lo = rng.normal(size=nt - 1) + 1j * rng.normal(size=nt - 1)
    up = rng.normal(size=nt - 1) + 1j * rng.normal(size=nt - 1)
    di = 8 + rng.normal(size=nt) + 1j * rng.normal(size=nt)
    psi = rng.normal(size=nt) + 1j * rng.normal(size=nt)

    def uniforms(k):
        return lambda: k.uniforms(keys, 7)

    def step_1d(k):
        def run():
            q, s, a = q1.copy(), s1.copy(), np.ones(n, np.uint8)
            k.advance_1d(q, s, a, vb, w, x0, h, False, 1e-3, keys, 1, 0.5)
            return q
        return run

    def step_2d(k):
        def run():
            q, s, a = q2.copy(), s1.copy(), np.ones(n, np.uint8)
            k.advance_2d(q, s, a, *f2, -10.0, -10.0, 20 / (mm - 1), 20 / (mm - 1), False, 1e-3, keys, 1, 0.5)
            return q
        return run

    def cn_step(k):
        fac = k.tridiag_factor(lo, di, up)
        return lambda: k.cn_tridiag_step(fac, np.conj(lo), np.conj(di), np.conj(up), psi)

    return {
        f"uniforms (n={n})": uniforms,
        f"advance_1d (n={n})": step_1d,
        f"advance_2d (n={n})": step_2d,
        f"cn_tridiag_step (N={nt})": cn_step,
    }


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--particles", type=int, default=100_000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="also write results here")
    args = ap.parse_args(argv)

    backends = available_backends()
    if "cython" not in backends:
        print("compiled kernels are not built; only the numpy backend is available")
    rng = np.random.default_rng(0)
    rows = []
    for label, make in cases(args.particles, rng).items():
        timings, outputs = {}, {}
        for name, mod in backends.items():
            fn = make(mod)
            outputs[name] = np.asarray(fn())
            number = max(1, int(0.2 / max(timeit.timeit(fn, number=1), 1e-6)))
            timings[name] = min(timeit.repeat(fn, number=number, repeat=args.repeat)) / number
        agree = all(np.allclose(outputs["python"], o, rtol=1e-12, atol=1e-12) for o in outputs.values())
        speedup = timings["python"] / timings["cython"] if "cython" in timings else float("nan")
        rows.append({"kernel": label, **{f"{k}_ms": 1e3 * v for k, v in timings.items()},
                     "speedup": speedup, "outputs_agree": bool(agree)})

    print(f"{'kernel':32s} {'python ms':>10s} {'cython ms':>10s} {'speedup':>8s}  agree")
    for r in rows:
        print(f"{r['kernel']:32s} {r['python_ms']:10.3f} {r.get('cython_ms', float('nan')):10.3f} "
              f"{r['speedup']:8.2f}  {r['outputs_agree']}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"machine": platform.platform(), "python": platform.python_version(), "results": rows}, fh, indent=2)
    return 0 if all(r["outputs_agree"] for r in rows) else 1


if __name__ == "__main__":
    raise SystemExit(main())
