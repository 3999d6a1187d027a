#!/usr/bin/env python3
"""Locate the frozen unstable fixtures and print their regression constants.

This is the generating command for the reference constants in
hmflab.fixtures: it scans the documented shape grid with search_unstable,
reports every (equilibrium, kappa) pair sorted by kappa, and computes the
dispersion root of the winners.

    python3 scripts/find_unstable_fixture.py            # the frozen grids
    python3 scripts/find_unstable_fixture.py --wide     # a broader scan

Background for the grid design: instability needs the orbit-variance
weighted derivative moment to turn positive.  For nonincreasing profiles
the only positive-weight region is the thin energy band e/m0 > ~0.951 near
the separatrix, which the unit-width compact bump can reach only in deep
wells (m0 >~ 50).  The non-monotone ring profile instead places its rising
edge in the bulk where the weight is large and negative, which flips its
sign contribution, so moderate wells suffice and every profile structure
stays wide on simulation grids.
"""

import argparse
import time

import numpy as np

from hmflab import fixtures, spectral
from hmflab.equilibrium import Profile, RingParams, search_unstable


def shape_grid(wide: bool):
    shapes = [
        fixtures.reference_unstable_shape(),
        fixtures.stable_shape(),
        Profile("bump-compact", e_star=63.872),
    ]
    if wide:
        for rise in (0.1, 0.15, 0.2):
            for fall in (0.8, 0.85):
                shapes.append(Profile("ring-bump", e_star=0.96,
                                      ring_params=RingParams(rise, fall, 0.2, 0.01)))
        for frac in (0.95, 0.98, 0.998):
            shapes.append(Profile("bump-compact", e_star=frac * 64.0))
    return shapes


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--wide", action="store_true")
    parser.add_argument("--threads", type=int, default=None)
    args = parser.parse_args()

    m_grid = [1.0, 64.0] if not args.wide else [1.0, 4.0, 16.0, 64.0, 100.0]
    t0 = time.time()
    hits = search_unstable(shape_grid(args.wide), m_grid, threads=args.threads)
    print(f"scan of {len(shape_grid(args.wide)) * len(m_grid)} pairs "
          f"took {time.time() - t0:.1f}s; {len(hits)} solvable\n")
    for eq, kappa in hits:
        marker = "UNSTABLE" if kappa > 1.0 else "stable  "
        print(f"{marker} kappa={kappa:.6f}  m0={eq.m0:<6g} family={eq.profile.family:<12s} "
              f"e*={eq.profile.e_star:g}")

    unstable = [(eq, k) for eq, k in hits if k > 1.0]
    for eq, kappa in unstable[:2]:
        ev = spectral.DispersionEvaluator(eq)
        lam = spectral.find_growth_rate(eq, evaluator=ev)
        print(f"\n{eq.profile.family} at m0={eq.m0}: kappa={kappa!r}")
        print(f"   lambda_star={lam!r}  |G(lambda_star)|={abs(ev.G(lam)):.2e}")
        print(f"   amplitude={eq.profile.amplitude!r}")


if __name__ == "__main__":
    main()
