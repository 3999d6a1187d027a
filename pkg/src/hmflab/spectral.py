"""Dispersion function, growth-rate root finding, and unstable eigenmodes.

For a steady state with indicator kappa > 1 the scalar dispersion function
G(lam) crosses zero at some lam* > 0; the crossing is the exponential rate
of a growing mode of the linearized dynamics.  G couples the profile
derivative to the memory integral

    g_lam(theta, v) = int_{-inf}^0 lam e^{lam s} cos(Theta(s, theta, v)) ds,

which the periodicity of the characteristics reduces to a single orbit
period:  g_lam = cos(theta) + lam/(1 - e^{-lam T}) *
int_0^T e^{-lam s} (cos(Theta(-s)) - cos(theta)) ds.  Subtracting the s = 0
value before discretizing keeps the composite-Simpson accumulation accurate
uniformly in lam; for lam T >> 1 the integration window shrinks to
min(T, tail/lam) where the kernel has decayed to e^{-tail}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import pendulum
from .equilibrium import (
    Equilibrium,
    profile_derivative,
    smooth_step,
    support_quadrature,
)
from .vlasov import PhaseSpaceGrid

DEFAULT_N_TIME = 400
TAIL_EXPONENT = 40.0
# largest lam*T/n_time for which the stored one-period samples keep the
# Simpson error of the exponential kernel below ~1e-4
STORED_PATH_LIMIT = 0.4


def _simpson_weights(n: int) -> np.ndarray:
    if n % 2:
        raise ValueError("Simpson accumulation needs an even step count")
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w / 3.0


def _trajectory_samples(theta, v, span, n_steps, m0):
    """cos(Theta(-s)) at s = j*span/n_steps, j = 0..n_steps; vectorized."""
    theta = np.array(theta, dtype=float, copy=True)
    v = np.array(v, dtype=float, copy=True)
    h = -np.asarray(span, dtype=float) / n_steps
    samples = np.empty((n_steps + 1,) + theta.shape)
    samples[0] = np.cos(theta)
    for j in range(n_steps):
        theta, v = pendulum.flow_step(theta, v, h, m0)
        samples[j + 1] = np.cos(theta)
    return samples


def _memory_integral_from_samples(samples, span, periods, lam, weights):
    """g_lam from kernel-weighted Simpson over stored cosine samples."""
    n = samples.shape[0] - 1
    c0 = samples[0]
    ratio = np.exp(-lam * span / n)
    acc = np.zeros_like(c0)
    p = np.ones_like(c0)
    for j in range(1, n + 1):
        p = p * ratio
        acc += weights[j] * p * (samples[j] - c0)
    acc *= span / n
    return c0 + lam / (-np.expm1(-lam * periods)) * acc


class DispersionEvaluator:
    """Evaluates G(lam) over one equilibrium with precomputed orbit data.

    The support quadrature nodes, profile-derivative couplings, orbit
    periods, and one full period of backward cosine samples per node are
    computed once; each G evaluation is then a kernel-weighted reduction.
    Wherever lam is too large for the stored per-period sampling, the
    trajectory is re-integrated on the shrunken window min(T, tail/lam).
    """

    def __init__(self, eq: Equilibrium, n_theta: int = 256, n_v: int = 256,
                 n_time: int = DEFAULT_N_TIME):
        self.eq = eq
        self.n_time = n_time
        nodes = support_quadrature(eq.e_star, eq.m0, n_theta, n_v)
        fprime = profile_derivative(eq.profile, nodes.energy)
        self.cos2_moment = float(np.sum(nodes.weight * fprime * nodes.cos_theta[:, None] ** 2))
        self._theta = np.broadcast_to(nodes.theta[:, None], nodes.energy.shape).ravel()
        self._v = nodes.v.ravel()
        self._wf = (nodes.weight * fprime).ravel()
        # reduction coefficients of the g-weighted integral
        self._couple = self._wf * np.cos(self._theta)
        self._periods = pendulum.period_batch(nodes.energy.ravel(), eq.m0)
        self._weights = _simpson_weights(n_time)
        self._samples = _trajectory_samples(self._theta, self._v, self._periods,
                                            n_time, eq.m0)
        self._cache: dict[float, float] = {}

    def g_values(self, lam: float) -> np.ndarray:
        if lam <= 0.0:
            raise ValueError("the memory integral needs lam > 0")
        t_max = float(self._periods.max())
        if lam * t_max / self.n_time <= STORED_PATH_LIMIT:
            return _memory_integral_from_samples(self._samples, self._periods,
                                                 self._periods, lam, self._weights)
        span = np.minimum(self._periods, TAIL_EXPONENT / lam)
        samples = _trajectory_samples(self._theta, self._v, span, self.n_time, self.eq.m0)
        return _memory_integral_from_samples(samples, span, self._periods, lam,
                                             self._weights)

    def G(self, lam: float) -> float:
        lam = float(lam)
        hit = self._cache.get(lam)
        if hit is not None:
            return hit
        g = self.g_values(lam)
        value = 1.0 + self.cos2_moment - float(np.dot(self._couple, g))
        self._cache[lam] = value
        return value

    def mode_normalization(self, g: np.ndarray) -> float:
        """cos moment of F'(e0)*(g - cos) on the evaluator nodes; equals
        1 - G(lam) up to roundoff, so it is 1 at a root."""
        return float(np.dot(self._couple, g - np.cos(self._theta)))

    def mode_sin_moment(self, g: np.ndarray) -> float:
        return float(np.dot(self._wf * np.sin(self._theta), g - np.cos(self._theta)))


@dataclass(frozen=True)
class DispersionSample:
    lam: float
    G: float

    def __post_init__(self):
        if self.lam <= 0.0:
            raise ValueError("dispersion samples need lam > 0")


def g_lambda(p: pendulum.PhasePoint, lam: float, eq: Equilibrium,
             n_time: int = DEFAULT_N_TIME) -> float:
    """Memory integral of the backward characteristic through one point."""
    if lam <= 0.0:
        raise ValueError("the memory integral needs lam > 0")
    orbit = pendulum.classify_orbit(p, eq.m0)
    if orbit.regime == pendulum.SEPARATRIX:
        raise ValueError("memory integral undefined on the separatrix band")
    if orbit.regime == pendulum.FIXED_POINT:
        return math.cos(p.theta)
    T = orbit.period
    theta = np.array([p.theta])
    v = np.array([p.v])
    weights = _simpson_weights(n_time)
    span = np.array([min(T, TAIL_EXPONENT / lam)])
    if lam * T / n_time <= STORED_PATH_LIMIT:
        span = np.array([T])
    samples = _trajectory_samples(theta, v, span, n_time, eq.m0)
    g = _memory_integral_from_samples(samples, span, np.array([T]), lam, weights)
    return float(g[0])


def dispersion_scan(evaluator: DispersionEvaluator, lambda_min: float,
                    lambda_max: float, samples: int) -> list[DispersionSample]:
    lams = np.geomspace(lambda_min, lambda_max, samples)
    return [DispersionSample(lam=float(l), G=evaluator.G(l)) for l in lams]


def bracket_root(evaluator: DispersionEvaluator, lambda_min: float,
                 lambda_max: float, samples: int):
    """First adjacent sample pair with G < 0 on the left, G > 0 on the right."""
    scan = dispersion_scan(evaluator, lambda_min, lambda_max, samples)
    for a, b in zip(scan[:-1], scan[1:]):
        if a.G < 0.0 < b.G:
            return a.lam, b.lam
    return None


def find_growth_rate(eq: Equilibrium, lambda_max: float | None = None,
                     evaluator: DispersionEvaluator | None = None,
                     lambda_min: float = 1e-3, samples: int = 64,
                     gtol: float = 1e-8) -> float | None:
    """Positive root of G on a logarithmic sample, refined by bisection to
    |G| <= gtol; None when no sign change is found (a valid, stable result).
    """
    if evaluator is None:
        evaluator = DispersionEvaluator(eq)
    if lambda_max is None:
        lambda_max = 10.0 * math.sqrt(eq.m0)
    bracket = bracket_root(evaluator, lambda_min, lambda_max, samples)
    if bracket is None:
        return None
    lo, hi = bracket
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        val = evaluator.G(mid)
        if abs(val) <= gtol:
            return mid
        if val < 0.0:
            lo = mid
        else:
            hi = mid
    raise RuntimeError("bisection failed to reach the root tolerance")


# ---------------------------------------------------------------------------
# Unstable eigenmode on a simulation grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Eigenmode:
    """Gridded unstable mode F'(e0)*(g_lam - cos) with its rate lam*.

    normalization is the cosine moment of the mode density computed with the
    spectral quadrature (it equals 1 - G(lam*)); l1_norm is the grid L1 norm
    used to scale perturbations.
    """

    lambda_star: float
    grid: PhaseSpaceGrid
    normalization: float
    sin_moment: float
    l1_norm: float


def eigenmode(eq: Equilibrium, lambda_star: float, grid_shape=(256, 257),
              v_max: float | None = None,
              evaluator: DispersionEvaluator | None = None,
              n_time: int = DEFAULT_N_TIME, root_tol: float = 1e-6) -> Eigenmode:
    """Sample the unstable eigenfunction on a phase-space grid.

    The mode is computed on the half-grid theta in [0, pi] and mirrored
    through (theta, v) -> (-theta, -v), which its construction makes exact.
    """
    if evaluator is None:
        evaluator = DispersionEvaluator(eq)
    g_nodes = evaluator.g_values(lambda_star)
    residual = evaluator.G(lambda_star)
    if abs(residual) > root_tol:
        raise ValueError(f"not a root: |G(lambda)| = {abs(residual):.3e} exceeds {root_tol:.0e}")
    n_theta, n_v = grid_shape
    if n_theta % 2:
        raise ValueError("eigenmode grids need an even angle count for the mirror fill")
    if v_max is None:
        v_max = 2.0 * eq.v_support
    shell = PhaseSpaceGrid.empty(n_theta, n_v, float(v_max))
    theta = shell.theta_nodes()
    v = shell.v_nodes()
    half = n_theta // 2
    th_half = theta[: half + 1]
    e0 = 0.5 * v[None, :] ** 2 - eq.m0 * np.cos(th_half)[:, None]
    tol = pendulum.SEPARATRIX_RTOL * eq.m0
    active = (e0 < eq.e_star) & (e0 > -eq.m0 + tol)
    values = np.zeros_like(e0)
    if np.any(active):
        th_a = np.broadcast_to(th_half[:, None], e0.shape)[active]
        v_a = np.broadcast_to(v[None, :], e0.shape)[active]
        periods = pendulum.period_batch(e0[active], eq.m0)
        weights = _simpson_weights(n_time)
        if lambda_star * float(periods.max()) / n_time <= STORED_PATH_LIMIT:
            span = periods
        else:
            span = np.minimum(periods, TAIL_EXPONENT / lambda_star)
        samples = _trajectory_samples(th_a, v_a, span, n_time, eq.m0)
        g = _memory_integral_from_samples(samples, span, periods, lambda_star, weights)
        fprime = profile_derivative(eq.profile, e0[active])
        values[active] = fprime * (g - np.cos(th_a))
    full = np.zeros((n_theta, n_v))
    full[: half + 1] = values
    # mirror through (theta, v) -> (2*pi - theta, -v); exact by construction
    full[half + 1:] = values[1:half][::-1, ::-1]
    grid = shell.replace_values(full)
    return Eigenmode(lambda_star=float(lambda_star), grid=grid,
                     normalization=evaluator.mode_normalization(g_nodes),
                     sin_moment=evaluator.mode_sin_moment(g_nodes),
                     l1_norm=grid.l1_norm())


# ---------------------------------------------------------------------------
# Smooth truncation and the perturbed initial data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PerturbationSpec:
    """Amplitude delta and the cutoff-layer width delta^(1/(2*alpha)).

    delta = 0 is the degenerate identity perturbation (kept for the trivial
    contract of build_perturbed_initial).
    """

    delta: float
    alpha: float

    def __post_init__(self):
        if self.delta < 0.0:
            raise ValueError("delta must be nonnegative")
        if self.alpha < 1.0:
            raise ValueError("alpha must be >= 1")

    @property
    def chi_width(self) -> float:
        return self.delta ** (1.0 / (2.0 * self.alpha))


def chi_delta(e, spec: PerturbationSpec, e_star: float):
    """Smooth truncation pinching the perturbation to zero at the support
    edge over the energy layer of width spec.chi_width below e_star."""
    e = np.asarray(e, dtype=float)
    out = smooth_step((e_star - e) / spec.chi_width)
    return out if out.ndim else float(out)


def build_perturbed_initial(eq: Equilibrium, mode: Eigenmode,
                            spec: PerturbationSpec,
                            base: PhaseSpaceGrid | None = None,
                            normalize: bool = True) -> PhaseSpaceGrid:
    """Nonnegative initial grid f0 + delta * g * chi_delta(e0).

    The mode is rescaled to unit grid L1 norm (normalize=True) so that delta
    is the L1 size of the injected perturbation.  base, when given, supplies
    the gridded f0 (e.g. an amplitude-calibrated equilibrium grid); it must
    share the mode's geometry.  Any negative node aborts with the offending
    location reported.
    """
    grid = mode.grid
    if base is not None:
        if (base.n_theta, base.n_v, base.v_max) != (grid.n_theta, grid.n_v, grid.v_max):
            raise ValueError("base grid geometry does not match the mode grid")
        f0 = base.values
    else:
        theta = grid.theta_nodes()
        v = grid.v_nodes()
        f0 = eq.f0(theta[:, None], v[None, :])
    theta = grid.theta_nodes()
    v = grid.v_nodes()
    if spec.delta == 0.0:
        perturbed = np.array(f0, copy=True)
    else:
        e0 = 0.5 * v[None, :] ** 2 - eq.m0 * np.cos(theta)[:, None]
        scale = spec.delta / (mode.l1_norm if normalize else 1.0)
        perturbed = f0 + scale * grid.values * chi_delta(e0, spec, eq.e_star)
    if perturbed.min() < 0.0:
        i, j = np.unravel_index(int(np.argmin(perturbed)), perturbed.shape)
        raise ValueError(
            "delta too large: negative node at "
            f"theta={theta[i]:.6f}, v={v[j]:.6f}, value={perturbed[i, j]:.3e}"
        )
    return PhaseSpaceGrid(n_theta=grid.n_theta, n_v=grid.n_v, v_max=grid.v_max,
                          values=perturbed)
