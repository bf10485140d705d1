"""Compare the compiled and pure-Python loss-propagation kernels.

    python3 benchmarks/bench_kernel.py --rows 2000 --repeat 3
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from ppaplan import _kernel_py
from ppaplan.generator import GeneratorSpec, generate_random
from ppaplan.topology import materialize

try:
    from ppaplan import _kernel as _compiled
except ImportError:
    _compiled = None


def best_time(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--rows", type=int, default=2000, help="failure scenarios per topology")
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    if _compiled is None:
        raise SystemExit("compiled kernel not built; run `pip install --no-build-isolation -e .` first")

    print(f"{'par':>7} {'tasks':>5} {'substreams':>10} {'python_s':>9} {'cython_s':>9} {'speedup':>8}")
    rng = np.random.default_rng(args.seed)
    for par in ((2, 4), (4, 8), (8, 16), (16, 32)):
        tg = materialize(generate_random(GeneratorSpec(par=par, join_fraction=0.5, seed=args.seed)))
        cg = tg.compiled
        masks = (rng.random((args.rows, cg.n)) < 0.5).astype(np.uint8)
        slow_val = cg.fidelity_many(masks, impl=_kernel_py)
        fast_val = cg.fidelity_many(masks, impl=_compiled)
        assert np.allclose(slow_val, fast_val, atol=1e-12, rtol=0)
        slow = best_time(lambda: cg.fidelity_many(masks, impl=_kernel_py), args.repeat)
        fast = best_time(lambda: cg.fidelity_many(masks, impl=_compiled), args.repeat)
        print(
            f"{par[0]:>3}-{par[1]:<3} {cg.n:>5} {len(tg.substreams):>10} "
            f"{slow:>9.4f} {fast:>9.4f} {slow / fast:>7.1f}x"
        )


if __name__ == "__main__":
    main()
