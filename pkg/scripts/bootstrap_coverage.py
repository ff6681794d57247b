"""Coverage of smoothed-bootstrap pf_max intervals over seeded datasets.

Slow: runs x replicates refits (100 x 200 takes a couple of minutes).
"""
import argparse
import time

import numpy as np

from pullfactor import BootstrapConfig, CavityGeometry, LorentzianParams, MeasurementSeries, ResonanceLine
from pullfactor import epsilon_threshold, fit_lorentzian, pf_max_lower_bound, predict, smoothed_bootstrap
from pullfactor.dispersion import SPEED_OF_LIGHT

GAMMA = 6e6
F_M = SPEED_OF_LIGHT / 795e-9


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--runs", type=int, default=100)
    ap.add_argument("--replicates", type=int, default=200)
    ap.add_argument("--ratio", type=float, default=0.5)
    ap.add_argument("--points", type=int, default=200)
    ap.add_argument("--confidence", type=float, default=0.90)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    cavity = CavityGeometry.from_total(0.80, 0.022, f_0=F_M)
    eth = epsilon_threshold(cavity, ResonanceLine(1.0, GAMMA, F_M))
    u = np.linspace(-10 * GAMMA, 10 * GAMMA, args.points)
    clean = predict(LorentzianParams(args.ratio * eth, GAMMA), cavity, u)
    pf_true = 1.0 / (1.0 - args.ratio) if args.ratio < 1 else np.inf

    covered = unbounded = 0
    t0 = time.perf_counter()
    for run in range(args.runs):
        y = clean + np.random.default_rng(10_000 + run).normal(0.0, 0.2e6, u.size)
        data = MeasurementSeries(u, y)
        base = fit_lorentzian(data, cavity)
        cfg = BootstrapConfig(replicates=args.replicates, confidence=args.confidence, seed=run, workers=args.workers)
        rep = smoothed_bootstrap(data, cavity, base, cfg)
        iv = rep.intervals["pf_max"]
        covered += iv.lower <= pf_true <= iv.upper
        unbounded += pf_max_lower_bound(rep).upper_unbounded
        if run % 10 == 9:
            print(f"  {run + 1:4d} runs, coverage so far {covered}/{run + 1}")
    print(f"coverage {covered}/{args.runs}, unbounded upper in {unbounded}, "
          f"{time.perf_counter() - t0:.0f} s")


if __name__ == "__main__":
    main()
