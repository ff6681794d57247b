"""Monte-Carlo check of the line fit on noisy synthetic scans."""
import argparse
import time

import numpy as np

from pullfactor import CavityGeometry, LorentzianParams, MeasurementSeries, ResonanceLine, epsilon_threshold
from pullfactor import fit_lorentzian, predict
from pullfactor.dispersion import SPEED_OF_LIGHT

GAMMA = 6e6
F_M = SPEED_OF_LIGHT / 795e-9


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--runs", type=int, default=100)
    ap.add_argument("--ratio", type=float, default=0.5)
    ap.add_argument("--sigma-hz", type=float, default=0.2e6)
    ap.add_argument("--points", type=int, default=200)
    args = ap.parse_args()

    cavity = CavityGeometry.from_total(0.80, 0.022, f_0=F_M)
    eth = epsilon_threshold(cavity, ResonanceLine(1.0, GAMMA, F_M))
    truth = LorentzianParams(args.ratio * eth, GAMMA)
    u = np.linspace(-10 * GAMMA, 10 * GAMMA, args.points)
    clean = predict(truth, cavity, u)
    pf_true = 1.0 / (1.0 - args.ratio)

    t0 = time.perf_counter()
    gammas, pfs = [], []
    for seed in range(args.runs):
        y = clean + np.random.default_rng(seed).normal(0.0, args.sigma_hz, u.size)
        rep = fit_lorentzian(MeasurementSeries(u, y), cavity)
        gammas.append(rep.params.gamma)
        pfs.append(rep.derived["pf_max"] if rep.derived["pf_max"] is not None else np.inf)
    gammas, pfs = np.array(gammas), np.array(pfs)
    print(f"{args.runs} fits in {time.perf_counter() - t0:.1f} s")
    print(f"gamma : median {np.median(gammas) / 1e6:.4f} MHz, within 5%: {np.sum(abs(gammas / GAMMA - 1) < 0.05)}")
    print(f"pf_max: median {np.median(pfs):.4f} (true {pf_true:.4f}), within 10%: {np.sum(abs(pfs / pf_true - 1) < 0.1)}")


if __name__ == "__main__":
    main()
