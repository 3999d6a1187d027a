"""Frozen reference scenarios and their regression constants.

Three named equilibria anchor the suite (all located with
scripts/find_unstable_fixture.py; the scenario JSON files under scenarios/
drive the same constructions through the command line):

* reference unstable (ring-bump family, m0 = 1): a non-monotone plateau
  profile whose rising edge sits where the orbit-variance weight alpha*g1
  is most negative and whose falling edge sits where that weight is weak,
  so the instability indicator clears 1 by a wide margin while every
  profile structure spans several cells of the standard 256 x 257
  simulation grid.  This fixture drives the dispersion, eigenmode, and
  evolution criteria.

* monotone unstable (bump-compact family, m0 = 64): the nonincreasing
  compact bump turns unstable only once the well is deep enough that its
  derivative mass concentrates in the narrow near-separatrix band where
  the orbit variance of cos exceeds threshold.  That band spans about 1.5
  velocity cells at n_v = 257 for any m0, so this fixture anchors the
  quadrature-side checks, not the evolution runs.

* stable (bump-compact, m0 = 1): kappa = 0.162; the no-root dispersion
  contract and the clean conservation instrument.

Regression constants below were produced at the default quadrature
resolution (256 x 256 nodes, 400 time samples per orbit); the regression
suite asserts them at 1e-6 relative and the acceptance suite re-derives
them at contract tolerances.
"""

from __future__ import annotations

from .equilibrium import (
    BUMP_COMPACT,
    RING_BUMP,
    Equilibrium,
    Profile,
    RingParams,
    solve_self_consistency,
)

# ring reference fixture (the simulation workhorse)
REFERENCE_M0 = 1.0
REFERENCE_E_STAR = 0.96
REFERENCE_RING = RingParams(rise=0.15, fall=0.85, width=0.2, floor=0.01)
REFERENCE_KAPPA = 1.9374505313170518
REFERENCE_LAMBDA_STAR = 1.2082073496934425

# monotone-family unstable fixture (quadrature-side anchor)
MONOTONE_M0 = 64.0
MONOTONE_E_STAR = 63.872       # 0.998 * m0: cutoff just below the well top
MONOTONE_KAPPA = 1.0418814761448745
MONOTONE_LAMBDA_STAR = 1.563815564635767

STABLE_M0 = 1.0
STABLE_E_STAR = 0.5
STABLE_KAPPA = 0.16205762508647736

# velocity box for the frozen ring simulation scenarios: the support edge is
# sqrt(2*(e_star+m0)) = 1.980, and 0.9*v_max = 3.6 leaves room for the energy
# excursions of the saturated instability and for the spline tails
SIM_V_MAX = 4.0


def reference_unstable_shape() -> Profile:
    return Profile(family=RING_BUMP, e_star=REFERENCE_E_STAR, amplitude=1.0,
                   alpha=2.0, ring_params=REFERENCE_RING)


def reference_unstable_equilibrium(n_theta: int = 512, n_v: int = 512) -> Equilibrium:
    # certification at 512^2 keeps the amplitude's quadrature error below the
    # 1e-6 grid-moment contract of the ring's mollifier edges
    return solve_self_consistency(reference_unstable_shape(),
                                  (REFERENCE_M0, REFERENCE_M0), n_theta, n_v)


def monotone_unstable_shape() -> Profile:
    return Profile(family=BUMP_COMPACT, e_star=MONOTONE_E_STAR, amplitude=1.0, alpha=2.0)


def monotone_unstable_equilibrium(n_theta: int = 512, n_v: int = 512) -> Equilibrium:
    return solve_self_consistency(monotone_unstable_shape(),
                                  (MONOTONE_M0, MONOTONE_M0), n_theta, n_v)


def stable_shape() -> Profile:
    return Profile(family=BUMP_COMPACT, e_star=STABLE_E_STAR, amplitude=1.0, alpha=2.0)


def stable_equilibrium(n_theta: int = 512, n_v: int = 512) -> Equilibrium:
    return solve_self_consistency(stable_shape(), (STABLE_M0, STABLE_M0), n_theta, n_v)
