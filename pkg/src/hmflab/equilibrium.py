"""Compactly supported energy profiles and self-consistent steady states.

A profile F(e) >= 0 vanishing above a cutoff e_star generates the phase-space
density F(v^2/2 - m0*cos(theta)); it is a steady state exactly when its
cosine moment gamma(m0, F) equals m0, which amplitude rescaling enforces for
any requested magnetization.  The module also evaluates the stability
indicator kappa (the orbit-average variance of cos(theta) weighted by -F'):
kappa < 1 marks stable states, kappa > 1 unstable ones.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from . import pendulum

BUMP_COMPACT = "bump-compact"
PSI_PLUS_BUMP = "psi-plus-bump"
RING_BUMP = "ring-bump"

RESIDUAL_TOL = 1e-10

# default tensor-quadrature resolution for the phase-space moments
N_THETA_QUAD = 256
N_V_QUAD = 256


@dataclass(frozen=True)
class PsiParams:
    """Cutoff and amplitude of the broad base component of a two-piece profile."""

    e_sharp: float
    scale: float


@dataclass(frozen=True)
class RingParams:
    """Smooth plateau between two mollifier edges riding on a small floor.

    The plateau rises over (rise, rise+width), falls over (fall-width, fall),
    and sits on floor > 0 everywhere below the cutoff, so the profile stays
    strictly positive on its support while being deliberately non-monotone.
    """

    rise: float
    fall: float
    width: float
    floor: float


@dataclass(frozen=True)
class Profile:
    """Energy profile F(e), positive below e_star and identically zero above.

    bump-compact:  F(e) = amplitude * exp(-1/(e_star - e)), which obeys
    |F'| = (e_star - e)^(-2) F, i.e. derivative-bound exponent alpha = 2.
    psi-plus-bump: the same bump with weight epsilon added on top of a broad
    base component of identical form cut off at psi_params.e_sharp < e_star.
    ring-bump:     the compact bump multiplied by (floor + plateau): a
    population concentrated away from the well bottom.  The two families
    above are nonincreasing; the ring family is not (that is its point), and
    near the cutoff all three share the same alpha = 2 derivative bound.
    """

    family: str
    e_star: float
    amplitude: float = 1.0
    alpha: float = 2.0
    psi_params: PsiParams | None = None
    epsilon: float | None = None
    ring_params: RingParams | None = None

    def __post_init__(self):
        if self.family not in (BUMP_COMPACT, PSI_PLUS_BUMP, RING_BUMP):
            raise ValueError(f"unknown profile family: {self.family!r}")
        if self.amplitude <= 0.0:
            raise ValueError("amplitude must be positive")
        if self.alpha < 1.0:
            raise ValueError("derivative-bound exponent must be >= 1")
        if self.family == PSI_PLUS_BUMP:
            if self.psi_params is None or self.epsilon is None:
                raise ValueError("psi-plus-bump needs psi_params and epsilon")
            if self.psi_params.e_sharp >= self.e_star:
                raise ValueError("base cutoff e_sharp must lie below e_star")
            if self.psi_params.scale < 0.0 or self.epsilon <= 0.0:
                raise ValueError("component weights must be positive")
        if self.family == RING_BUMP:
            ring = self.ring_params
            if ring is None:
                raise ValueError("ring-bump needs ring_params")
            if not ring.rise < ring.fall < self.e_star:
                raise ValueError("ring edges must satisfy rise < fall < e_star")
            if ring.width <= 0.0 or ring.floor <= 0.0:
                raise ValueError("ring width and floor must be positive")

    def rescaled(self, factor: float) -> "Profile":
        return Profile(
            family=self.family,
            e_star=self.e_star,
            amplitude=self.amplitude * factor,
            alpha=self.alpha,
            psi_params=self.psi_params,
            epsilon=self.epsilon,
            ring_params=self.ring_params,
        )


def smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1; the squared mollifier
    ratio in between keeps step(t) <= 2 t^alpha on [0, 1] for alpha <= 2."""
    t = np.asarray(t, dtype=float)
    out = np.zeros(t.shape)
    out[t >= 1.0] = 1.0
    mid = (t > 0.0) & (t < 1.0)
    tm = t[mid]
    a = np.exp(-1.0 / tm)
    b = np.exp(-1.0 / (1.0 - tm))
    out[mid] = (a / (a + b)) ** 2
    return out


def smooth_step_derivative(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros(t.shape)
    mid = (t > 0.0) & (t < 1.0)
    tm = t[mid]
    a = np.exp(-1.0 / tm)
    b = np.exp(-1.0 / (1.0 - tm))
    r = a / (a + b)
    r_prime = a * b * (tm**-2 + (1.0 - tm) ** -2) / (a + b) ** 2
    out[mid] = 2.0 * r * r_prime
    return out


def _bump(e, cutoff):
    e = np.asarray(e, dtype=float)
    u = cutoff - e
    with np.errstate(divide="ignore", over="ignore"):
        val = np.where(u > 0.0, np.exp(-1.0 / np.where(u > 0.0, u, 1.0)), 0.0)
    return val


def _bump_derivative(e, cutoff):
    e = np.asarray(e, dtype=float)
    u = cutoff - e
    safe = np.where(u > 0.0, u, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        val = np.where(u > 0.0, -np.exp(-1.0 / safe) / safe**2, 0.0)
    return val


def _ring_factor(profile: Profile, e):
    ring = profile.ring_params
    e = np.asarray(e, dtype=float)
    up = smooth_step((e - ring.rise) / ring.width)
    down = smooth_step((ring.fall - e) / ring.width)
    return ring.floor + up * down


def _ring_factor_derivative(profile: Profile, e):
    ring = profile.ring_params
    e = np.asarray(e, dtype=float)
    up = smooth_step((e - ring.rise) / ring.width)
    down = smooth_step((ring.fall - e) / ring.width)
    d_up = smooth_step_derivative((e - ring.rise) / ring.width) / ring.width
    d_down = -smooth_step_derivative((ring.fall - e) / ring.width) / ring.width
    return d_up * down + up * d_down


def profile_value(profile: Profile, e):
    """F(e); vectorized, exactly zero for e >= e_star."""
    if profile.family == BUMP_COMPACT:
        out = profile.amplitude * _bump(e, profile.e_star)
    elif profile.family == RING_BUMP:
        out = profile.amplitude * _bump(e, profile.e_star) * _ring_factor(profile, e)
    else:
        psi = profile.psi_params
        out = profile.amplitude * (
            psi.scale * _bump(e, psi.e_sharp) + profile.epsilon * _bump(e, profile.e_star)
        )
    return out if np.ndim(e) else float(out)


def profile_derivative(profile: Profile, e):
    """F'(e); vectorized, exactly zero for e >= e_star.

    Nonpositive for the two monotone families; the ring family changes sign
    across its plateau edges.
    """
    if profile.family == BUMP_COMPACT:
        out = profile.amplitude * _bump_derivative(e, profile.e_star)
    elif profile.family == RING_BUMP:
        out = profile.amplitude * (
            _bump_derivative(e, profile.e_star) * _ring_factor(profile, e)
            + _bump(e, profile.e_star) * _ring_factor_derivative(profile, e)
        )
    else:
        psi = profile.psi_params
        out = profile.amplitude * (
            psi.scale * _bump_derivative(e, psi.e_sharp)
            + profile.epsilon * _bump_derivative(e, profile.e_star)
        )
    return out if np.ndim(e) else float(out)


# ---------------------------------------------------------------------------
# Support-aware tensor quadrature for the phase-space moments.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SupportQuadrature:
    """Gauss-Legendre nodes covering {(theta, v) : e0(theta, v) < e_star}."""

    theta: np.ndarray      # (n_theta,)
    v: np.ndarray          # (n_theta, n_v)
    weight: np.ndarray     # (n_theta, n_v) combined weights
    energy: np.ndarray     # (n_theta, n_v) microscopic energies
    cos_theta: np.ndarray  # (n_theta,)


def support_quadrature(e_star: float, m0: float,
                       n_theta: int = N_THETA_QUAD, n_v: int = N_V_QUAD) -> SupportQuadrature:
    """Nodes over the support: theta restricted to the well when e_star < m0,
    the v-range per theta truncated at the energy cutoff."""
    x, wx = np.polynomial.legendre.leggauss(n_theta)
    if e_star < m0:
        t_star = math.acos(-e_star / m0)
        theta = t_star * x
        w_theta = t_star * wx
    else:
        theta = math.pi * x
        w_theta = math.pi * wx
    edge = np.sqrt(np.maximum(2.0 * (e_star + m0 * np.cos(theta)), 0.0))
    xv, wv = np.polynomial.legendre.leggauss(n_v)
    v = edge[:, None] * xv[None, :]
    weight = w_theta[:, None] * (edge[:, None] * wv[None, :])
    energy = 0.5 * v**2 - m0 * np.cos(theta)[:, None]
    return SupportQuadrature(theta=theta, v=v, weight=weight, energy=energy,
                             cos_theta=np.cos(theta))


def gamma(m: float, profile: Profile,
          n_theta: int = N_THETA_QUAD, n_v: int = N_V_QUAD) -> float:
    """Cosine moment of the density generated by F in the well of depth m."""
    if m <= 0.0:
        raise ValueError("magnetization must be positive")
    nodes = support_quadrature(profile.e_star, m, n_theta, n_v)
    vals = profile_value(profile, nodes.energy)
    return float(np.sum(nodes.weight * vals * nodes.cos_theta[:, None]))


@dataclass(frozen=True)
class Equilibrium:
    """Self-consistent pair (m0, profile) with its certification residual."""

    m0: float
    profile: Profile
    residual: float

    def __post_init__(self):
        if self.profile.e_star >= self.m0:
            raise ValueError("equilibrium requires the cutoff e_star below m0")
        if self.residual > RESIDUAL_TOL:
            raise ValueError(f"self-consistency residual {self.residual:.3e} exceeds {RESIDUAL_TOL:.0e}")

    @property
    def e_star(self) -> float:
        return self.profile.e_star

    @property
    def v_support(self) -> float:
        """Largest velocity on the support boundary, sqrt(2*(e_star+m0))."""
        return math.sqrt(2.0 * (self.e_star + self.m0))

    def f0(self, theta, v):
        """Steady-state density F(e0(theta, v)); vectorized."""
        e = 0.5 * np.asarray(v, dtype=float) ** 2 - self.m0 * np.cos(theta)
        return profile_value(self.profile, e)


def solve_self_consistency(shape: Profile, m_bracket: tuple[float, float],
                           n_theta: int = N_THETA_QUAD, n_v: int = N_V_QUAD) -> Equilibrium:
    """Fix m0 at the bracket midpoint and rescale the profile amplitude so
    that gamma(m0, F) = m0; the moment is linear in the amplitude, so the
    rescaling is exact up to roundoff and the residual certifies it."""
    lo, hi = m_bracket
    if lo <= 0.0 or hi <= 0.0:
        raise ValueError("bracket endpoints must be positive")
    m0 = 0.5 * (lo + hi)
    g0 = gamma(m0, shape, n_theta, n_v)
    if g0 <= 0.0:
        raise ValueError("shape cannot magnetize: cosine moment is not positive")
    scaled = shape.rescaled(m0 / g0)
    residual = abs(gamma(m0, scaled, n_theta, n_v) - m0)
    return Equilibrium(m0=m0, profile=scaled, residual=residual)


def kappa(eq: Equilibrium, n_theta: int = N_THETA_QUAD, n_v: int = N_V_QUAD) -> float:
    """Stability indicator: -int F'(e0) (cos(theta) - <cos>_orbit(e0))^2.

    Quadrature over the support with the orbit average evaluated per node;
    the compact support keeps every node strictly inside the librating zone,
    so the separatrix band is never touched.
    """
    nodes = support_quadrature(eq.e_star, eq.m0, n_theta, n_v)
    fprime = profile_derivative(eq.profile, nodes.energy)
    pi_cos = pendulum.cos_orbit_average_batch(nodes.energy.ravel(), eq.m0).reshape(nodes.energy.shape)
    dev = nodes.cos_theta[:, None] - pi_cos
    return float(np.sum(nodes.weight * (-fprime) * dev**2))


def kappa_projector_identity(eq: Equilibrium,
                             n_theta: int = N_THETA_QUAD, n_v: int = N_V_QUAD) -> float:
    """1 - kappa computed through the projector algebra
    1 + int F' cos^2 - int F' <cos>^2 (same nodes, different reduction)."""
    nodes = support_quadrature(eq.e_star, eq.m0, n_theta, n_v)
    fprime = profile_derivative(eq.profile, nodes.energy)
    pi_cos = pendulum.cos_orbit_average_batch(nodes.energy.ravel(), eq.m0).reshape(nodes.energy.shape)
    a = np.sum(nodes.weight * fprime * nodes.cos_theta[:, None] ** 2)
    b = np.sum(nodes.weight * fprime * pi_cos**2)
    return float(1.0 + a - b)


def search_unstable(shape_grid, m_grid, n_theta: int = N_THETA_QUAD,
                    n_v: int = N_V_QUAD, threads: int | None = None):
    """Solve every (shape, m) pair and report (Equilibrium, kappa), sorted by
    kappa descending.  Pairs that cannot magnetize or whose cutoff reaches
    the well top are skipped; stable entries are reported, not filtered."""
    combos = [(shape, m) for shape in shape_grid for m in m_grid]

    def solve_one(args):
        shape, m = args
        if shape.e_star >= m:
            return None
        try:
            eq = solve_self_consistency(shape, (m, m), n_theta, n_v)
        except ValueError:
            return None
        return eq, kappa(eq, n_theta, n_v)

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(solve_one, combos))
    else:
        results = [solve_one(c) for c in combos]
    found = [(i, r) for i, r in enumerate(results) if r is not None]
    found.sort(key=lambda item: (-item[1][1], item[0]))
    return [r for _, r in found]


# ---------------------------------------------------------------------------
# Shell integrals of the appendix construction (m = 1 normalization by
# default, exposed with explicit m).  alpha_e diverges logarithmically at
# the separatrix energy e = m and returns inf there.
# ---------------------------------------------------------------------------

def alpha_e(e: float, m: float = 1.0) -> float:
    """int over the shell of (e + m*cos(theta))^(-1/2) dtheta."""
    if e <= -m:
        raise ValueError("no orbit below the bottom of the potential well")
    if e == m:
        return math.inf
    if e < m:
        k2 = (m + e) / (2.0 * m)
        val, _ = quad(lambda u: 1.0 / math.sqrt(1.0 - k2 * math.sin(u) ** 2),
                      0.0, 0.5 * math.pi, epsabs=1e-14, epsrel=1e-13, limit=800)
        return 2.0 * math.sqrt(2.0 / m) * val
    k2 = 2.0 * m / (e + m)
    val, _ = quad(lambda u: 1.0 / math.sqrt(1.0 - k2 * math.sin(u) ** 2),
                  0.0, math.pi, epsabs=1e-14, epsrel=1e-13, limit=800)
    return 2.0 / math.sqrt(e + m) * val


def beta_e(e: float, m: float = 1.0) -> float:
    """int over the shell of (e + m*cos(theta))^(-1/2) sin^2(theta) dtheta.

    Converges for every e > -m including the separatrix energy, where the
    sin^2 factor cancels the root singularity up to a kink at theta = pi.
    """
    if e <= -m:
        raise ValueError("no orbit below the bottom of the potential well")
    if e == m:
        val, _ = quad(lambda th: math.sqrt(1.0 + math.cos(th)) * (1.0 - math.cos(th)),
                      0.0, math.pi, epsabs=1e-14, epsrel=1e-13, limit=400)
        return 2.0 * val / math.sqrt(m)
    if e < m:
        k2 = (m + e) / (2.0 * m)
        k = math.sqrt(k2)

        def integrand(u):
            s = k * math.sin(u)
            sin2 = 4.0 * s * s * (1.0 - s * s)
            return sin2 / math.sqrt(1.0 - k2 * math.sin(u) ** 2)

        val, _ = quad(integrand, 0.0, 0.5 * math.pi, epsabs=1e-14, epsrel=1e-13, limit=800)
        return 2.0 * math.sqrt(2.0 / m) * val
    k2 = 2.0 * m / (e + m)
    val, _ = quad(lambda u: math.sin(2.0 * u) ** 2 / math.sqrt(1.0 - k2 * math.sin(u) ** 2),
                  0.0, math.pi, epsabs=1e-14, epsrel=1e-13, limit=800)
    return 2.0 / math.sqrt(e + m) * val


def sqrt_energy_integral(e: float, m: float = 1.0) -> float:
    """int over the shell of (e + m*cos(theta))^(1/2) dtheta."""
    if e <= -m:
        raise ValueError("no orbit below the bottom of the potential well")
    if e == m:
        val, _ = quad(lambda th: math.sqrt(m * (1.0 + math.cos(th))),
                      0.0, math.pi, epsabs=1e-14, epsrel=1e-13, limit=400)
        return 2.0 * val
    if e < m:
        k2 = (m + e) / (2.0 * m)
        val, _ = quad(lambda u: math.cos(u) ** 2 / math.sqrt(1.0 - k2 * math.sin(u) ** 2),
                      0.0, 0.5 * math.pi, epsabs=1e-14, epsrel=1e-13, limit=800)
        return 4.0 * math.sqrt(2.0 * m) * k2 * val
    val, _ = quad(lambda th: math.sqrt(e + m * math.cos(th)),
                  0.0, math.pi, epsabs=1e-14, epsrel=1e-13, limit=400)
    return 2.0 * val


def g_m(e: float, m: float = 1.0) -> float:
    """Orbit-average variance combination <cos^2> - <cos>^2 - <sin^2> whose
    sign near the separatrix decides whether concentrated profiles can beat
    the stability threshold."""
    c1 = pendulum.orbit_average(math.cos, e, m)
    c2 = pendulum.orbit_average(lambda t: math.cos(t) ** 2, e, m)
    s2 = pendulum.orbit_average(lambda t: math.sin(t) ** 2, e, m)
    return c2 - c1 * c1 - s2


# ---------------------------------------------------------------------------
# JSON serialization
# ---------------------------------------------------------------------------

def profile_to_dict(profile: Profile) -> dict:
    doc = {
        "family": profile.family,
        "e_star": profile.e_star,
        "amplitude": profile.amplitude,
        "alpha": profile.alpha,
    }
    if profile.family == PSI_PLUS_BUMP:
        doc["psi_params"] = {"e_sharp": profile.psi_params.e_sharp,
                             "scale": profile.psi_params.scale}
        doc["epsilon"] = profile.epsilon
    if profile.family == RING_BUMP:
        ring = profile.ring_params
        doc["ring_params"] = {"rise": ring.rise, "fall": ring.fall,
                              "width": ring.width, "floor": ring.floor}
    return doc


def profile_from_dict(doc: dict) -> Profile:
    psi = doc.get("psi_params")
    ring = doc.get("ring_params")
    return Profile(
        family=doc["family"],
        e_star=float(doc["e_star"]),
        amplitude=float(doc.get("amplitude", 1.0)),
        alpha=float(doc.get("alpha", 2.0)),
        psi_params=PsiParams(float(psi["e_sharp"]), float(psi["scale"])) if psi else None,
        epsilon=float(doc["epsilon"]) if doc.get("epsilon") is not None else None,
        ring_params=RingParams(float(ring["rise"]), float(ring["fall"]),
                               float(ring["width"]), float(ring["floor"])) if ring else None,
    )


def equilibrium_to_dict(eq: Equilibrium) -> dict:
    doc = profile_to_dict(eq.profile)
    doc["m0"] = eq.m0
    doc["residual"] = eq.residual
    return doc


def equilibrium_from_dict(doc: dict) -> Equilibrium:
    return Equilibrium(m0=float(doc["m0"]), profile=profile_from_dict(doc),
                       residual=float(doc["residual"]))
