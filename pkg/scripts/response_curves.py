"""Sweep the empty-cavity detuning below, at and above threshold.

Writes one CSV per (strength, direction) into --outdir and prints the
jumps found.  gamma = 6 MHz, 80 cm ring with a 22 mm cell.
"""
import argparse
from pathlib import Path

from pullfactor import CavityGeometry, MediumModel, ResonanceEquation, ResonanceLine, epsilon_threshold, sweep
from pullfactor import io as pio
from pullfactor.dispersion import SPEED_OF_LIGHT

GAMMA = 6e6
F_M = SPEED_OF_LIGHT / 795e-9


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--outdir", default="curves")
    ap.add_argument("--points", type=int, default=10_000)
    ap.add_argument("--ratios", type=float, nargs="+", default=[0.5, 0.999, 2.0])
    args = ap.parse_args()

    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    cavity = CavityGeometry.from_total(0.80, 0.022)
    eth = epsilon_threshold(cavity, ResonanceLine(1.0, GAMMA, F_M))
    print(f"eps_th = {eth:.6e}")
    for ratio in args.ratios:
        eq = ResonanceEquation(cavity, MediumModel.single(ratio * eth, GAMMA, F_M))
        for direction in ("up", "down"):
            curve = sweep(eq, -12 * GAMMA, 12 * GAMMA, args.points, direction=direction, spacing="lasing")
            path = out / f"eps{ratio:g}_{direction}.csv"
            prov = pio.provenance("response_curves", {"epsilon_rel": ratio, "direction": direction,
                                                      "points": args.points, "spacing": "lasing"})
            pio.write_text(path, pio.curve_to_csv(curve, prov))
            jumps = ", ".join(f"{j.delta_f_e / GAMMA:+.3f}" for j in curve.jumps) or "none"
            print(f"eps/eps_th={ratio:<6g} {direction:>4}: max pf {curve.pf.max():9.4g}  jumps at [{jumps}] gamma")


if __name__ == "__main__":
    main()
