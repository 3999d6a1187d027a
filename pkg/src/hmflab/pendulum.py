"""Pendulum characteristics of the steady cosine potential.

The steady potential -m0*cos(theta) drives the characteristic flow
    dTheta/ds = V,   dV/ds = -m0*sin(Theta),
whose conserved microscopic energy e0 = v^2/2 - m0*cos(theta) classifies
every phase point as a fixed point, a librating (trapped) orbit, a rotating
(passing) orbit, or the separatrix between them.  This module integrates the
flow, computes orbit periods, and evaluates the weighted orbit average that
projects functions of the angle onto functions of the energy.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

# Relative half-width of the energy band around e0 = m0 treated as the
# separatrix: period and orbit averages diverge logarithmically there.
SEPARATRIX_RTOL = 1e-9

FIXED_POINT = "fixed-point"
LIBRATING = "librating"
ROTATING = "rotating"
SEPARATRIX = "separatrix"

TWO_PI = 2.0 * math.pi


def _reduce_angle(theta: float) -> float:
    theta = math.fmod(theta, TWO_PI)
    if theta < 0.0:
        theta += TWO_PI
    return theta


@dataclass(frozen=True)
class PhasePoint:
    """A point (theta, v) on the cylinder, theta stored in [0, 2*pi)."""

    theta: float
    v: float

    def __post_init__(self):
        object.__setattr__(self, "theta", _reduce_angle(float(self.theta)))
        object.__setattr__(self, "v", float(self.v))


@dataclass(frozen=True)
class Orbit:
    """Classification of a phase point by its microscopic energy.

    period is present for librating and rotating orbits only; theta_turn
    (the turning angle arccos(-e0/m0)) only for librating ones.
    """

    e0: float
    regime: str
    period: float | None = None
    theta_turn: float | None = None


# ---------------------------------------------------------------------------
# 8th-order explicit symplectic integrator (triple-jump composition of
# velocity-Verlet substeps; adjacent half-kicks merged).
# ---------------------------------------------------------------------------

def _composition_coefficients() -> np.ndarray:
    coeffs = [1.0]
    for k in (1, 2, 3):
        x1 = 1.0 / (2.0 - 2.0 ** (1.0 / (2 * k + 1)))
        x0 = 1.0 - 2.0 * x1
        coeffs = [c * x for x in (x1, x0, x1) for c in coeffs]
    return np.asarray(coeffs)


_DRIFTS = _composition_coefficients()
_KICKS = np.empty(_DRIFTS.size + 1)
_KICKS[0] = 0.5 * _DRIFTS[0]
_KICKS[1:-1] = 0.5 * (_DRIFTS[:-1] + _DRIFTS[1:])
_KICKS[-1] = 0.5 * _DRIFTS[-1]


def flow_step(theta, v, h, m0):
    """One composite step of size h; theta, v, h may be scalars or arrays."""
    v = v - _KICKS[0] * h * m0 * np.sin(theta)
    for i in range(_DRIFTS.size):
        theta = theta + _DRIFTS[i] * h * v
        v = v - _KICKS[i + 1] * h * m0 * np.sin(theta)
    return theta, v


_KICK_LIST = _KICKS.tolist()
_DRIFT_LIST = _DRIFTS.tolist()


def _flow_scalar(theta: float, v: float, s: float, m0: float, n_steps: int):
    # python-loop twin of flow(); numpy overhead dominates on scalars
    h = s / n_steps
    sin = math.sin
    kicks = _KICK_LIST
    drifts = _DRIFT_LIST
    for _ in range(n_steps):
        v -= kicks[0] * h * m0 * sin(theta)
        for i in range(27):
            theta += drifts[i] * h * v
            v -= kicks[i + 1] * h * m0 * sin(theta)
    return theta, v


def flow(theta, v, s, m0, n_steps):
    if np.isscalar(theta) or np.ndim(theta) == 0:
        return _flow_scalar(float(theta), float(v), float(s), m0, n_steps)
    h = s / n_steps
    for _ in range(n_steps):
        theta, v = flow_step(theta, v, h, m0)
    return theta, v


# ---------------------------------------------------------------------------
# Classification and flow advance
# ---------------------------------------------------------------------------

def microscopic_energy(p: PhasePoint, m0: float) -> float:
    """Energy v^2/2 - m0*cos(theta) conserved along the characteristic flow."""
    if m0 <= 0.0:
        raise ValueError("m0 must be positive")
    return 0.5 * p.v * p.v - m0 * math.cos(p.theta)


def classify_orbit(p: PhasePoint, m0: float) -> Orbit:
    """Assign a regime from the energy bands; fill period and turning angle.

    The band |e0 - m0| <= SEPARATRIX_RTOL*m0 is reported as separatrix with
    no period; callers doing quadrature must exclude it.
    """
    e0 = microscopic_energy(p, m0)
    tol = SEPARATRIX_RTOL * m0
    if e0 <= -m0 + tol:
        return Orbit(e0=e0, regime=FIXED_POINT)
    if abs(e0 - m0) <= tol:
        return Orbit(e0=e0, regime=SEPARATRIX)
    if e0 > m0:
        return Orbit(e0=e0, regime=ROTATING, period=period(e0, m0))
    return Orbit(
        e0=e0,
        regime=LIBRATING,
        period=period(e0, m0),
        theta_turn=math.acos(-e0 / m0),
    )


def advance(p: PhasePoint, m0: float, s: float) -> PhasePoint:
    """Flow the point by time s (negative s flows backward).

    Fixed step sized so one orbit period takes at least 200 steps; points
    without a finite period use the harmonic scale 2*pi/sqrt(m0).
    """
    if m0 <= 0.0:
        raise ValueError("m0 must be positive")
    if s == 0.0:
        return PhasePoint(p.theta, p.v)
    orbit = classify_orbit(p, m0)
    t_scale = orbit.period if orbit.period is not None else TWO_PI / math.sqrt(m0)
    n = max(1, math.ceil(abs(s) / (t_scale / 200.0)))
    theta, v = flow(p.theta, p.v, s, m0, n)
    return PhasePoint(theta, v)


# ---------------------------------------------------------------------------
# Periods
# ---------------------------------------------------------------------------
# Librating orbits: the half-angle substitution sin(theta/2) = k sin(u) with
# k^2 = (m0+e0)/(2 m0) maps the turning point to u = pi/2 and leaves the
# analytic integrand (1 - k^2 sin^2 u)^(-1/2), so T = (4/sqrt(m0)) * I(k^2).
# Rotating orbits: theta = 2u gives T = 4*I(kr^2)/sqrt(2(e0+m0)) with
# kr^2 = 2 m0/(e0+m0).  I(.) is evaluated by quadrature only.

_period_cache: dict[tuple[float, float], float] = {}
_period_lock = threading.Lock()


def _pendulum_integral(k2: float) -> float:
    val, _ = quad(
        lambda u: 1.0 / math.sqrt(1.0 - k2 * math.sin(u) ** 2),
        0.0,
        0.5 * math.pi,
        epsabs=1e-14,
        epsrel=1e-13,
        limit=500,
    )
    return val


def period(e0: float, m0: float) -> float:
    """Orbit period at energy e0; raises inside the separatrix band."""
    if m0 <= 0.0:
        raise ValueError("m0 must be positive")
    tol = SEPARATRIX_RTOL * m0
    if abs(e0 - m0) <= tol:
        raise ValueError("period diverges on the separatrix band")
    if e0 <= -m0:
        raise ValueError("no orbit below the bottom of the potential well")
    key = (m0, float(f"{e0:.12e}"))
    with _period_lock:
        hit = _period_cache.get(key)
    if hit is not None:
        return hit
    if e0 < m0:
        k2 = (m0 + e0) / (2.0 * m0)
        value = 4.0 / math.sqrt(m0) * _pendulum_integral(k2)
    else:
        k2 = 2.0 * m0 / (e0 + m0)
        value = 4.0 / math.sqrt(2.0 * (e0 + m0)) * _pendulum_integral(k2)
    with _period_lock:
        _period_cache[key] = value
    return value


def _gl_nodes(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    u = 0.25 * math.pi * (x + 1.0)
    return u, 0.25 * math.pi * w


def _gl_count(k2max: float) -> int:
    for bound, n in ((0.9, 96), (0.99, 192), (0.999, 384), (0.9999, 768)):
        if k2max <= bound:
            return n
    return 1536


def librating_moments(e0: np.ndarray, m0: float, orders=(0,)):
    """Moments int_0^{pi/2} sin(u)^{2j} (1-k^2 sin^2 u)^{-1/2} du, vectorized.

    Returns (k2, [M_j for j in orders]); requires -m0 < e0 < m0 elementwise.
    """
    e0 = np.asarray(e0, dtype=float)
    k2 = (m0 + e0) / (2.0 * m0)
    if k2.size and (k2.min() <= 0.0 or k2.max() >= 1.0):
        raise ValueError("librating moments need -m0 < e0 < m0")
    n = _gl_count(float(k2.max())) if k2.size else 96
    u, w = _gl_nodes(n)
    s2 = np.sin(u) ** 2
    out = []
    # chunk the (n_e, n_u) product to bound the workspace
    chunk = max(1, 8_000_000 // n)
    flat = k2.ravel()
    for j in orders:
        acc = np.empty_like(flat)
        for lo in range(0, flat.size, chunk):
            part = flat[lo : lo + chunk, None]
            wgt = 1.0 / np.sqrt(1.0 - part * s2[None, :])
            acc[lo : lo + chunk] = (wgt * s2[None, :] ** j) @ w
        out.append(acc.reshape(k2.shape))
    return k2, out


def period_batch(e0: np.ndarray, m0: float) -> np.ndarray:
    """Vectorized periods for energies strictly between the well bottom and
    the separatrix band or strictly above it."""
    e0 = np.asarray(e0, dtype=float)
    out = np.empty(e0.shape)
    tol = SEPARATRIX_RTOL * m0
    lib = e0 < m0 - tol
    rot = e0 > m0 + tol
    if np.any(~(lib | rot)):
        raise ValueError("period diverges on the separatrix band")
    if np.any(e0[lib] <= -m0):
        raise ValueError("no orbit below the bottom of the potential well")
    if np.any(lib):
        _, (m0_j,) = librating_moments(e0[lib], m0)
        out[lib] = 4.0 / math.sqrt(m0) * m0_j
    if np.any(rot):
        er = e0[rot]
        k2 = 2.0 * m0 / (er + m0)
        n = _gl_count(float(k2.max()))
        u, w = _gl_nodes(n)
        s2 = np.sin(u) ** 2
        integral = (1.0 / np.sqrt(1.0 - k2[:, None] * s2[None, :])) @ w
        out[rot] = 4.0 / np.sqrt(2.0 * (er + m0)) * integral
    return out


def cos_orbit_average_batch(e0: np.ndarray, m0: float) -> np.ndarray:
    """Orbit average of cos(theta) on librating energies, vectorized.

    Uses cos(2*arcsin(k sin u)) = 1 - 2 k^2 sin^2 u, so only the j=0,1
    weight moments are needed.
    """
    k2, (m0_j, m1_j) = librating_moments(e0, m0, orders=(0, 1))
    return 1.0 - 2.0 * k2 * m1_j / m0_j


def orbit_average(h, e0: float, m0: float) -> float:
    """Weighted average of h(theta) over the energy shell e0.

    Computes the ratio of int (e0+m0 cos)^(-1/2) h dtheta to the same
    integral of 1 over {theta : m0 cos(theta) > -e0}; fixes constants and
    kills odd integrands by symmetry of the shell.
    """
    if m0 <= 0.0:
        raise ValueError("m0 must be positive")
    tol = SEPARATRIX_RTOL * m0
    if abs(e0 - m0) <= tol:
        raise ValueError("orbit average diverges on the separatrix band")
    if e0 <= -m0:
        raise ValueError("no orbit below the bottom of the potential well")
    opts = dict(epsabs=1e-13, epsrel=1e-12, limit=500)
    if e0 < m0:
        k2 = (m0 + e0) / (2.0 * m0)
        k = math.sqrt(k2)

        def weight(u):
            return 1.0 / math.sqrt(1.0 - k2 * math.sin(u) ** 2)

        def mapped(u):
            th = 2.0 * math.asin(k * math.sin(u))
            return 0.5 * (h(th) + h(-th)) * weight(u)

        num, _ = quad(mapped, 0.0, 0.5 * math.pi, **opts)
        den, _ = quad(weight, 0.0, 0.5 * math.pi, **opts)
    else:
        k2 = 2.0 * m0 / (e0 + m0)

        def weight(u):
            return 1.0 / math.sqrt(1.0 - k2 * math.sin(u) ** 2)

        def mapped(u):
            return 0.5 * (h(2.0 * u) + h(-2.0 * u)) * weight(u)

        num, _ = quad(mapped, 0.0, math.pi, **opts)
        den, _ = quad(weight, 0.0, math.pi, **opts)
    return num / den
