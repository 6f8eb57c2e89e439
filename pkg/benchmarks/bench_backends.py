"""Compare the compiled trial loop against the pure-Python one.

Both backends replay the same request stream, so besides timing the script
checks that they return identical counters.

    python benchmarks/bench_backends.py --requests 20000 --loads 400 700
"""

from __future__ import annotations

import argparse
import statistics
import time

from eonprofile import backend
from eonprofile.engine import Scenario, make_stream, prepare, run_trial, trial_seed
from eonprofile.partition import PAPER_EXTRA_BINS_360
from eonprofile.topology import deutsche_telekom


def timed(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return out, statistics.median(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--requests", type=int, default=20_000)
    ap.add_argument("--loads", type=float, nargs="+", default=[400.0, 700.0])
    ap.add_argument("--spr", nargs="+", default=["none", "dpm", "atm"])
    ap.add_argument("--repeat", type=int, default=3, help="timing repetitions (median reported)")
    args = ap.parse_args(argv)

    if "compiled" not in backend.AVAILABLE:
        raise SystemExit("compiled core not built; reinstall without EONPROFILE_NO_EXT")

    net = deutsche_telekom()
    print(f"{'scenario':<14}{'load':>6}{'python s':>11}{'compiled s':>12}{'speedup':>9}{'req/s compiled':>16}  same")
    for spr in args.spr:
        sc = Scenario(spr=spr, requests=args.requests, extra_bins=PAPER_EXTRA_BINS_360)
        prepare(sc, net)  # path table cached outside the timed region
        for load in args.loads:
            stream = make_stream(sc, net, load, trial_seed(1, 0))
            py, t_py = timed(lambda: run_trial(sc, load, None, net, backend="python", stream=stream), args.repeat)
            cc, t_cc = timed(lambda: run_trial(sc, load, None, net, backend="compiled", stream=stream), args.repeat)
            print(f"{sc.name:<14}{load:>6g}{t_py:>11.3f}{t_cc:>12.4f}{t_py / t_cc:>9.1f}"
                  f"{args.requests / t_cc:>16,.0f}  {'yes' if py == cc else 'NO'}")


if __name__ == "__main__":
    main()
