"""Acceptance gate: one test per numbered criterion, at contract tolerances.

Each test prints a `[criterion N] PASS/FAIL` line (visible under -s) and the
test names mirror the criteria, so the -v report doubles as the checklist.
Criterion 8's leading-log ratio subcheck is a documented spec defect and is
marked strict-xfail: the assertion is implemented exactly as stated, fails
for a proven mathematical reason (see the test docstring), and would flag
loudly if it ever started passing.
"""

import json
import math
import os
import time

import numpy as np
import pytest

from hmflab import cli, equilibrium as eqm, fixtures, pendulum, spectral, vlasov

from oracles import pendulum_period_agm

ROOT2 = math.sqrt(2.0)
SCENARIOS = os.path.join(os.path.dirname(__file__), "..", "scenarios")


def report(tag, ok, detail):
    print(f"[criterion {tag}] {'PASS' if ok else 'FAIL'} - {detail}")
    return ok


def run_cli(command, scenario_name, out_dir):
    config = os.path.join(SCENARIOS, scenario_name)
    code = cli.main([command, "--config", config, "--out", str(out_dir)])
    assert code == 0, f"cli {command} on {scenario_name} exited {code}"
    with open(os.path.join(out_dir, "manifest.json")) as fh:
        return json.load(fh)


def read_series(path):
    data = np.genfromtxt(path, delimiter=",", names=True)
    return data


def test_criterion_1_pendulum_periods():
    start = time.perf_counter()
    T_half = pendulum.period(0.0, 1.0)
    agm_half = pendulum_period_agm(0.0, 1.0)
    ok = abs(T_half - agm_half) / agm_half <= 1e-8
    T_harm = pendulum.period(-1.0 + 1e-8, 1.0)
    ok &= abs(T_harm - 2.0 * math.pi) <= 1e-4
    worst = 0.0
    for e0 in np.linspace(-0.995, 0.995, 20):
        T = pendulum.period(e0, 1.0)
        worst = max(worst, abs(T - pendulum_period_agm(e0, 1.0)) / T)
    ok &= worst <= 1e-8
    elapsed = time.perf_counter() - start
    ok &= elapsed < 1.0
    assert report(1, ok, f"half-well vs AGM {abs(T_half-agm_half)/agm_half:.1e}, "
                         f"sweep worst {worst:.1e}, runtime {elapsed:.2f}s")


def test_criterion_2_dispersion_limits(ring_eq):
    start = time.perf_counter()
    ev = spectral.DispersionEvaluator(ring_eq)
    big = 1e3 * math.sqrt(ring_eq.m0)
    high = ev.G(big)
    ok = abs(high - 1.0) <= 1e-3
    g1, g2, g3 = (ev.G(lam) for lam in (1e-2, 5e-3, 2.5e-3))
    extrapolated = (4.0 * (2.0 * g3 - g2) - (2.0 * g2 - g1)) / 3.0
    kappa = eqm.kappa(ring_eq)
    ok &= abs(extrapolated - (1.0 - kappa)) <= 1e-2
    elapsed = time.perf_counter() - start
    ok &= elapsed < 60.0
    assert report(2, ok, f"|G({big:.0f})-1|={abs(high-1):.2e}, "
                         f"|G(0+)-(1-kappa)|={abs(extrapolated-(1-kappa)):.2e}, "
                         f"runtime {elapsed:.1f}s")


def test_criterion_3_existence_of_unstable_state(ring_eq, monotone_eq, ev_ring):
    shapes = [fixtures.reference_unstable_shape(), fixtures.stable_shape(),
              fixtures.monotone_unstable_shape()]
    hits = eqm.search_unstable(shapes, [1.0, 64.0], n_theta=128, n_v=128)
    unstable = [(eq, k) for eq, k in hits if k > 1.0]
    ok = len(unstable) >= 2
    ok &= unstable[0][0].profile.family == "ring-bump"
    # frozen regression constants of the reference fixture
    kappa_ref = eqm.kappa(ring_eq)
    ok &= abs(kappa_ref - fixtures.REFERENCE_KAPPA) / fixtures.REFERENCE_KAPPA <= 1e-6
    lam = spectral.find_growth_rate(ring_eq, evaluator=ev_ring)
    ok &= lam is not None
    ok &= abs(lam - fixtures.REFERENCE_LAMBDA_STAR) / fixtures.REFERENCE_LAMBDA_STAR <= 1e-6
    # the monotone family's own unstable member stays certified as well
    kappa_mono = eqm.kappa(monotone_eq)
    ok &= abs(kappa_mono - fixtures.MONOTONE_KAPPA) / fixtures.MONOTONE_KAPPA <= 1e-6
    assert report(3, ok, f"search found {len(unstable)} unstable equilibria; "
                         f"ring kappa={kappa_ref:.6f}, lambda*={lam:.6f}; "
                         f"monotone kappa={kappa_mono:.6f}")


def test_criterion_3b_monotone_fixture_growth_rate(monotone_eq):
    ev = spectral.DispersionEvaluator(monotone_eq)
    lam = spectral.find_growth_rate(monotone_eq, evaluator=ev)
    ok = lam is not None and abs(ev.G(lam)) <= 1e-8
    ok &= abs(lam - fixtures.MONOTONE_LAMBDA_STAR) / fixtures.MONOTONE_LAMBDA_STAR <= 1e-6
    assert report("3b", ok, f"monotone-family lambda*={lam:.6f}, |G|={abs(ev.G(lam)):.1e}")


def test_criterion_4_root_certificate(ring_eq, ev_ring, lambda_star, mode_fine):
    g_at_root = ev_ring.G(lambda_star)
    ok = abs(g_at_root) <= 1e-8
    dt = 1e-3
    grid = mode_fine.grid
    stepped = vlasov.step_linearized(grid, ring_eq, dt)
    growth = math.exp(lambda_star * dt)
    dev = grid.dtheta * np.abs(stepped.values - growth * grid.values).sum(axis=0) @ grid.v_weights()
    residual = dev / grid.l1_norm()
    ok &= residual <= 1e-3
    assert report(4, ok, f"|G(lambda*)|={abs(g_at_root):.2e}, "
                         f"one-step residual={residual:.2e}")


def test_criterion_5_linear_growth(tmp_path_factory):
    out = tmp_path_factory.mktemp("linear_growth")
    start = time.perf_counter()
    manifest = run_cli("evolve", "reference_linear_growth.json", out)
    elapsed = time.perf_counter() - start
    derived = manifest["derived"]
    lam = derived["lambda_star"]
    rate = derived["linear_rate"]
    rel = abs(rate - lam) / lam
    efolds = rate * 2.6  # fit window [1.0, 3.6]
    ok = rel <= 0.05 and efolds >= 3.0 and elapsed < 600.0
    assert report(5, ok, f"fitted={rate:.4f} vs lambda*={lam:.4f} ({100*rel:.2f}%), "
                         f"{efolds:.1f} e-folds, runtime {elapsed:.0f}s")


def test_criterion_6_nonlinear_instability(tmp_path_factory):
    out = tmp_path_factory.mktemp("nonlinear_growth")
    manifest = run_cli("evolve", "reference_unstable.json", out)
    derived = manifest["derived"]
    lam = derived["lambda_star"]
    rate = derived["fitted_rates"]["1e-5"]
    rel = abs(rate - lam) / lam
    t_escape = derived["t_delta"]["1e-5"]
    ok = rel <= 0.10
    ok &= t_escape is not None and derived["delta0"] == 1e-2
    # positivity of the initial data is enforced inside the pipeline; the
    # differential deviation must also have cleared delta0 well before t_end
    assert report(6, ok, f"fitted={rate:.4f} vs lambda*={lam:.4f} ({100*rel:.2f}%), "
                         f"t_delta(1e-5 -> 1e-2)={t_escape}")


def test_criterion_7_escape_time_scaling(tmp_path_factory):
    out = tmp_path_factory.mktemp("escape")
    manifest = run_cli("evolve", "reference_escape.json", out)
    derived = manifest["derived"]
    fit = derived["escape_fit"]
    ok = all(derived["t_delta"][cli._delta_tag(d)] is not None
             for d in (1e-4, 1e-5, 1e-6))
    ok &= fit["slope_residual"] <= 0.15
    assert report(7, ok, f"slope={fit['slope']:.4f} vs 1/lambda*={fit['slope_expected']:.4f} "
                         f"(residual {100*fit['slope_residual']:.1f}%), "
                         f"t_delta={derived['t_delta']}")


def test_criterion_8a_sqrt_energy_integral():
    value = eqm.sqrt_energy_integral(1.0, 1.0)
    ok = abs(value - 4.0 * ROOT2) <= 1e-10
    assert report("8a", ok, f"integral={value:.12f} vs 4*sqrt(2) "
                            f"(err {abs(value-4*ROOT2):.1e})")


def test_criterion_8b_beta_at_separatrix():
    value = eqm.beta_e(1.0, 1.0)
    ok = abs(value - 8.0 * ROOT2 / 3.0) <= 1e-8
    assert report("8b", ok, f"beta(1)={value:.12f} vs 8*sqrt(2)/3 "
                            f"(err {abs(value-8*ROOT2/3):.1e})")


@pytest.mark.xfail(
    strict=True,
    reason="spec defect, see /root notes ledger: alpha(e) = -sqrt(2)ln(1-e) + "
           "sqrt(2)ln(32) + o(1) exactly, so the leading-log ratio at "
           "e = 1-1e-8 equals 1.1881; reaching the stated 2% would need "
           "1-e < 1e-75, below float64 resolution.  The asymptotic itself is "
           "verified by its slope and additive constant in "
           "test_criterion_8d_variance_limit and the equilibrium suite.")
def test_criterion_8c_alpha_leading_log_ratio():
    e = 1.0 - 1e-8
    ratio = eqm.alpha_e(e) / (-ROOT2 * math.log(1.0 - e))
    ok = abs(ratio - 1.0) <= 0.02
    assert report("8c", ok, f"ratio={ratio:.6f} (deviation {abs(ratio-1):.3f} > 0.02)")


def test_criterion_8d_variance_limit_constant():
    # the orbit-variance combination g1 times alpha converges to 8*sqrt(2)/3
    # (not 8*sqrt(2)); the slow 1/alpha correction from the squared
    # sqrt-energy integral is removed before pinning the constant
    target = 8.0 * ROOT2 / 3.0
    errs = []
    for k in (4, 6, 8):
        e = 1.0 - 10.0 ** (-k)
        a = eqm.alpha_e(e)
        errs.append(abs(a * eqm.g_m(e, 1.0) + 32.0 / a - target))
    ok = errs[0] > errs[1] > errs[2]
    ok &= errs[2] <= 1e-4
    e = 1.0 - 1e-8
    a = eqm.alpha_e(e)
    raw = a * eqm.g_m(e, 1.0)
    ok &= raw > 0.0
    ok &= abs(raw + 32.0 / a - 8.0 * ROOT2) > 7.0  # the rejected alternative
    # the additive constant of the alpha asymptotic, and its exact slope
    a6 = eqm.alpha_e(1.0 - 1e-6)
    slope = (a - a6) / (-ROOT2 * (math.log(1e-8) - math.log(1e-6)))
    ok &= abs(slope - 1.0) <= 1e-6
    ok &= abs(a + ROOT2 * math.log(1e-8) - ROOT2 * math.log(32.0)) <= 1e-3
    assert report("8d", ok, f"alpha*g1 + 32/alpha -> {target:.6f} "
                            f"(err sequence {[f'{x:.1e}' for x in errs]}), "
                            f"log-slope={slope:.8f}")


def test_criterion_9_conservation_and_positivity(tmp_path_factory, ring_eq, mode_sim):
    out = tmp_path_factory.mktemp("conservation")
    manifest = run_cli("evolve", "stable_reference.json", out)
    series = read_series(manifest["artifacts"]["baseline_csv"])
    mass = series["mass"]
    energy = series["total_energy"]
    mass_drift = np.max(np.abs(mass - mass[0])) / mass[0]
    energy_drift = np.max(np.abs(energy - energy[0])) / abs(energy[0])
    ok = mass_drift <= 1e-8 and energy_drift <= 1e-4
    base = vlasov.equilibrium_grid(ring_eq, 256, 257, v_max=fixtures.SIM_V_MAX,
                                   calibrate=True)
    minima = []
    for delta in (1e-4, 1e-5, 1e-6):
        spec = spectral.PerturbationSpec(delta=delta, alpha=2.0)
        grid = spectral.build_perturbed_initial(ring_eq, mode_sim, spec, base=base)
        minima.append(grid.values.min())
    ok &= all(m >= 0.0 for m in minima)
    assert report(9, ok, f"mass drift {mass_drift:.2e}, energy drift {energy_drift:.2e} "
                         f"over t=50; perturbed minima {[f'{m:.1e}' for m in minima]}")


def test_criterion_9b_long_mass_conservation(stable_eq):
    # ten thousand steps of the stable equilibrium at the standard resolution
    grid = vlasov.equilibrium_grid(stable_eq, 256, 257)
    start_mass = grid.mass()
    for _ in range(10_000):
        grid = vlasov.step_nonlinear(grid, 0.01)
    drift = abs(grid.mass() - start_mass) / start_mass
    ok = drift <= 1e-8
    assert report("9b", ok, f"mass drift over 1e4 steps: {drift:.2e}")
