"""Scenario-driven command line front end.

Subcommands: steady | kappa | dispersion | mode | evolve | verify-appendix,
each taking --config <scenario.json> and --out <dir>.  One JSON document
describes a scenario; artifacts are CSV files (single header row, floats at
17 significant digits), JSON summaries, binary grid snapshots, and a
manifest recording the scenario hash plus every derived constant.

Only the standard library is imported at module scope so that --threads (or
the HMFLAB_THREADS environment variable) can cap the numeric thread pools
before numpy is first loaded.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import os
import struct
import sys
import time
from dataclasses import dataclass, field

from . import __version__

THREAD_ENV_VAR = "HMFLAB_THREADS"
GRID_MAGIC = b"HMFG"
GRID_VERSION = 1
_HEADER = struct.Struct("<4sIQQd")


class ConfigError(Exception):
    """Scenario file failed to parse or validate."""


# ---------------------------------------------------------------------------
# Scenario configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadratureConfig:
    n_theta: int = 256
    n_v: int = 256
    n_time: int = 400


@dataclass(frozen=True)
class DispersionConfig:
    lambda_min: float = 1e-3
    lambda_max: float | None = None     # default 10*sqrt(m0)
    samples: int = 64


@dataclass(frozen=True)
class SimulationConfig:
    n_theta: int = 256
    n_v: int = 257
    v_max: float | None = None          # default 2*sqrt(2*(e_star+m0))
    dt: float = 0.01
    t_end: float = 10.0
    deltas: tuple = (1e-5,)
    snapshot_stride: int = 0
    delta0: float = 1e-2
    linearized: bool = False
    fit_window: tuple | None = None     # linearized-rate fit window


@dataclass(frozen=True)
class Scenario:
    name: str
    profile: dict
    m0: float
    quadrature: QuadratureConfig = QuadratureConfig()
    dispersion: DispersionConfig = DispersionConfig()
    simulation: SimulationConfig = SimulationConfig()
    output_dir: str | None = None
    raw: dict = field(default_factory=dict, compare=False)


def load_scenario(path: str) -> Scenario:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such file")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}")
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: scenario must be a JSON object")
    for key in ("name", "profile", "m0"):
        if key not in doc:
            raise ConfigError(f"{path}: missing required field {key!r}")
    if not (isinstance(doc["m0"], (int, float)) and doc["m0"] > 0):
        raise ConfigError(f"{path}: m0 must be a positive number")
    quad = doc.get("quadrature", {})
    for k, v in quad.items():
        if not (isinstance(v, int) and v > 0):
            raise ConfigError(f"{path}: quadrature.{k} must be a positive integer")
    disp = doc.get("dispersion", {})
    for k in ("lambda_min", "lambda_max", "samples"):
        if disp.get(k) is not None and disp[k] <= 0:
            raise ConfigError(f"{path}: dispersion.{k} must be positive")
    sim = doc.get("simulation", {})
    for k in ("n_theta", "n_v", "v_max", "dt", "t_end", "delta0"):
        if sim.get(k) is not None and sim[k] <= 0:
            raise ConfigError(f"{path}: simulation.{k} must be positive")
    deltas = sim.get("deltas", [1e-5])
    if not isinstance(deltas, list) or any(not isinstance(d, (int, float)) or d < 0 for d in deltas):
        raise ConfigError(f"{path}: simulation.deltas must be a list of nonnegative numbers")
    stride = sim.get("snapshot_stride", 0)
    if not isinstance(stride, int) or stride < 0:
        raise ConfigError(f"{path}: simulation.snapshot_stride must be a nonnegative integer")
    window = sim.get("fit_window")
    if window is not None and (len(window) != 2 or window[0] >= window[1]):
        raise ConfigError(f"{path}: simulation.fit_window must be [t_lo, t_hi] with t_lo < t_hi")
    return Scenario(
        name=str(doc["name"]),
        profile=doc["profile"],
        m0=float(doc["m0"]),
        quadrature=QuadratureConfig(**{k: int(v) for k, v in quad.items()}),
        dispersion=DispersionConfig(
            lambda_min=float(disp.get("lambda_min", 1e-3)),
            lambda_max=None if disp.get("lambda_max") is None else float(disp["lambda_max"]),
            samples=int(disp.get("samples", 64)),
        ),
        simulation=SimulationConfig(
            n_theta=int(sim.get("n_theta", 256)),
            n_v=int(sim.get("n_v", 257)),
            v_max=None if sim.get("v_max") is None else float(sim["v_max"]),
            dt=float(sim.get("dt", 0.01)),
            t_end=float(sim.get("t_end", 10.0)),
            deltas=tuple(float(d) for d in deltas),
            snapshot_stride=stride,
            delta0=float(sim.get("delta0", 1e-2)),
            linearized=bool(sim.get("linearized", False)),
            fit_window=None if window is None else (float(window[0]), float(window[1])),
        ),
        output_dir=doc.get("output_dir"),
        raw=doc,
    )


def scenario_hash(scenario: Scenario) -> str:
    canonical = json.dumps(scenario.raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


# ---------------------------------------------------------------------------
# Binary grid format: magic "HMFG", u32 version, u64 n_theta, u64 n_v,
# f64 v_max, then n_theta*n_v f64 values, theta-major, all little-endian.
# ---------------------------------------------------------------------------

def write_grid(grid, path):
    import numpy as np

    payload = np.ascontiguousarray(grid.values, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(GRID_MAGIC, GRID_VERSION, grid.n_theta, grid.n_v, grid.v_max))
        fh.write(payload.tobytes())


def read_grid(path):
    import numpy as np

    from .vlasov import PhaseSpaceGrid

    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise ValueError(f"{path}: truncated header")
        magic, version, n_theta, n_v, v_max = _HEADER.unpack(head)
        if magic != GRID_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}, expected {GRID_MAGIC!r}")
        if version != GRID_VERSION:
            raise ValueError(f"{path}: unsupported version {version}, expected {GRID_VERSION}")
        payload = fh.read()
    expected = n_theta * n_v * 8
    if len(payload) != expected:
        raise ValueError(f"{path}: truncated payload, expected {expected} bytes, got {len(payload)}")
    values = np.frombuffer(payload, dtype="<f8").reshape(n_theta, n_v).copy()
    return PhaseSpaceGrid(n_theta=int(n_theta), n_v=int(n_v), v_max=float(v_max), values=values)


# ---------------------------------------------------------------------------
# Artifact plumbing
# ---------------------------------------------------------------------------

def fmt(x) -> str:
    return f"{float(x):.17g}"


def write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(x) for x in row) + "\n")


def write_diagnostics_csv(path, series):
    from .vlasov import DIAGNOSTIC_COLUMNS

    rows = [[getattr(r, c) for c in DIAGNOSTIC_COLUMNS] for r in series.rows]
    write_csv(path, DIAGNOSTIC_COLUMNS, rows)


@dataclass
class RunManifest:
    scenario_hash: str
    tool_version: str
    command: str
    threads: int | None
    artifacts: dict
    derived: dict

    def write(self, path):
        for artifact in self.artifacts.values():
            if not os.path.exists(artifact):
                raise RuntimeError(f"manifest lists missing artifact: {artifact}")
        with open(path, "w") as fh:
            json.dump(dataclasses.asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _build_equilibrium(scenario: Scenario):
    from .equilibrium import profile_from_dict, solve_self_consistency

    shape = profile_from_dict(scenario.profile)
    # certification-grade quadrature: twice the scenario's nodes
    n = max(512, scenario.quadrature.n_theta)
    return solve_self_consistency(shape, (scenario.m0, scenario.m0), n, n)


def _sim_v_max(scenario, eq) -> float:
    if scenario.simulation.v_max is not None:
        return scenario.simulation.v_max
    return 2.0 * eq.v_support


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_steady(scenario, out_dir, threads):
    from .equilibrium import equilibrium_to_dict

    eq = _build_equilibrium(scenario)
    path = os.path.join(out_dir, "equilibrium.json")
    with open(path, "w") as fh:
        json.dump(equilibrium_to_dict(eq), fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"steady: m0={fmt(eq.m0)} residual={eq.residual:.3e}")
    return RunManifest(scenario_hash(scenario), __version__, "steady", threads,
                       {"equilibrium": path},
                       {"m0": eq.m0, "residual": eq.residual,
                        "amplitude": eq.profile.amplitude})


def cmd_kappa(scenario, out_dir, threads):
    from .equilibrium import kappa

    eq = _build_equilibrium(scenario)
    q = scenario.quadrature
    value = kappa(eq, q.n_theta, q.n_v)
    path = os.path.join(out_dir, "kappa.json")
    with open(path, "w") as fh:
        json.dump({"m0": eq.m0, "kappa": value}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"kappa: {fmt(value)} ({'unstable' if value > 1 else 'stable'} side)")
    return RunManifest(scenario_hash(scenario), __version__, "kappa", threads,
                       {"kappa": path},
                       {"m0": eq.m0, "kappa": value, "residual": eq.residual})


def _evaluator(scenario, eq):
    from .spectral import DispersionEvaluator

    q = scenario.quadrature
    return DispersionEvaluator(eq, q.n_theta, q.n_v, q.n_time)


def cmd_dispersion(scenario, out_dir, threads):
    from .spectral import dispersion_scan, find_growth_rate

    eq = _build_equilibrium(scenario)
    ev = _evaluator(scenario, eq)
    cfg = scenario.dispersion
    lambda_max = cfg.lambda_max or 10.0 * math.sqrt(eq.m0)
    scan = dispersion_scan(ev, cfg.lambda_min, lambda_max, cfg.samples)
    csv_path = os.path.join(out_dir, "dispersion.csv")
    write_csv(csv_path, ("lambda", "G"), [(s.lam, s.G) for s in scan])
    root = find_growth_rate(eq, lambda_max, evaluator=ev,
                            lambda_min=cfg.lambda_min, samples=cfg.samples)
    summary = {"m0": eq.m0, "lambda_min": cfg.lambda_min, "lambda_max": lambda_max,
               "samples": cfg.samples}
    if root is not None:
        summary["lambda_star"] = root
        summary["G_at_root"] = ev.G(root)
    json_path = os.path.join(out_dir, "dispersion.json")
    with open(json_path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"dispersion: lambda_star={'none' if root is None else fmt(root)}")
    derived = {"m0": eq.m0, "lambda_star": root}
    return RunManifest(scenario_hash(scenario), __version__, "dispersion", threads,
                       {"dispersion_csv": csv_path, "dispersion_json": json_path}, derived)


def _growth_rate_and_mode(scenario, eq, ev):
    from .spectral import eigenmode, find_growth_rate

    cfg = scenario.dispersion
    lambda_max = cfg.lambda_max or 10.0 * math.sqrt(eq.m0)
    root = find_growth_rate(eq, lambda_max, evaluator=ev,
                            lambda_min=cfg.lambda_min, samples=cfg.samples)
    if root is None:
        raise ValueError("no growth-rate root found; the scenario is on the stable side")
    sim = scenario.simulation
    mode = eigenmode(eq, root, grid_shape=(sim.n_theta, sim.n_v),
                     v_max=_sim_v_max(scenario, eq), evaluator=ev,
                     n_time=scenario.quadrature.n_time)
    return root, mode


def cmd_mode(scenario, out_dir, threads):
    eq = _build_equilibrium(scenario)
    ev = _evaluator(scenario, eq)
    root, mode = _growth_rate_and_mode(scenario, eq, ev)
    grid_path = os.path.join(out_dir, "mode.hmfg")
    write_grid(mode.grid, grid_path)
    json_path = os.path.join(out_dir, "mode.json")
    with open(json_path, "w") as fh:
        json.dump({"lambda_star": root, "normalization": mode.normalization,
                   "sin_moment": mode.sin_moment, "l1_norm": mode.l1_norm},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"mode: lambda_star={fmt(root)} normalization={mode.normalization:.9f}")
    return RunManifest(scenario_hash(scenario), __version__, "mode", threads,
                       {"mode_grid": grid_path, "mode_json": json_path},
                       {"m0": eq.m0, "lambda_star": root,
                        "normalization": mode.normalization})


def _delta_tag(delta: float) -> str:
    return f"{delta:.0e}".replace("e-0", "e-").replace("e+0", "e+")


def _auto_fit_window(t, dev, delta):
    import numpy as np

    lo, hi = 3.0 * delta, 0.1 * float(dev.max())
    mask = (dev >= lo) & (dev <= hi)
    if mask.sum() < 2:
        return None
    return float(t[mask][0]), float(t[mask][-1])


def cmd_evolve(scenario, out_dir, threads):
    import numpy as np

    from . import vlasov
    from .equilibrium import kappa as kappa_fn
    from .spectral import PerturbationSpec, build_perturbed_initial
    from .vlasov import (SimDiagnostics, diagnostics, equilibrium_grid,
                         negative_mass, step_linearized, step_nonlinear)

    sim = scenario.simulation
    if not sim.deltas:
        raise ConfigError("simulation.deltas must be nonempty for evolve")
    eq = _build_equilibrium(scenario)
    ev = _evaluator(scenario, eq)
    q = scenario.quadrature
    kappa_value = kappa_fn(eq, q.n_theta, q.n_v)
    try:
        root, mode = _growth_rate_and_mode(scenario, eq, ev)
    except ValueError:
        # stable side: no mode to inject, evolve the bare equilibrium
        root, mode = None, None
    v_max = _sim_v_max(scenario, eq)
    base0 = equilibrium_grid(eq, sim.n_theta, sim.n_v, v_max, calibrate=True)

    alpha = float(scenario.profile.get("alpha", 2.0))
    deltas = sim.deltas if mode is not None else ()
    states = [base0]
    for delta in deltas:
        spec = PerturbationSpec(delta=delta, alpha=alpha)
        states.append(build_perturbed_initial(eq, mode, spec, base=base0))
    lin_state = None
    if sim.linearized and mode is not None:
        lin_state = mode.grid.replace_values(mode.grid.values / mode.l1_norm)

    n_steps = int(round(sim.t_end / sim.dt))
    base_series = SimDiagnostics()
    delta_series = [SimDiagnostics() for _ in sim.deltas]
    diff_series = [SimDiagnostics() for _ in sim.deltas]
    lin_series = SimDiagnostics() if sim.linearized else None
    worst_negative = 0.0
    artifacts = {}

    def record(t):
        nonlocal worst_negative
        base = states[0]
        base_series.append(diagnostics(base, base0, t))
        worst_negative = max(worst_negative, negative_mass(base))
        for i, g in enumerate(states[1:]):
            delta_series[i].append(diagnostics(g, base0, t))
            diff = g.replace_values(g.values - base.values)
            diff_series[i].append(diagnostics(diff, None, t))
        if lin_series is not None:
            lin_series.append(diagnostics(lin_state, None, t))

    def snapshot(step):
        for label, g in zip(["base"] + [_delta_tag(d) for d in sim.deltas], states):
            path = os.path.join(out_dir, f"state_{label}_step{step:06d}.hmfg")
            write_grid(g, path)
            artifacts[f"snapshot_{label}_{step:06d}"] = path

    record(0.0)
    if sim.snapshot_stride:
        snapshot(0)
    for step in range(1, n_steps + 1):
        states = [step_nonlinear(g, sim.dt) for g in states]
        if lin_state is not None:
            lin_state = step_linearized(lin_state, eq, sim.dt)
        record(step * sim.dt)
        if sim.snapshot_stride and step % sim.snapshot_stride == 0:
            snapshot(step)

    path = os.path.join(out_dir, "baseline.csv")
    write_diagnostics_csv(path, base_series)
    artifacts["baseline_csv"] = path
    fitted_rates, t_deltas = {}, {}
    for i, delta in enumerate(sim.deltas):
        tag = _delta_tag(delta)
        path = os.path.join(out_dir, f"diagnostics_delta_{tag}.csv")
        write_diagnostics_csv(path, delta_series[i])
        artifacts[f"diagnostics_{tag}"] = path
        path = os.path.join(out_dir, f"differential_delta_{tag}.csv")
        write_diagnostics_csv(path, diff_series[i])
        artifacts[f"differential_{tag}"] = path
        t = diff_series[i].column("t")
        dev = diff_series[i].column("L1_dev")
        window = _auto_fit_window(t, dev, delta) if delta > 0 else None
        fitted_rates[tag] = (None if window is None
                             else vlasov.fit_growth_rate(diff_series[i], window))
        crossed = np.nonzero(dev >= sim.delta0)[0]
        t_deltas[tag] = float(t[crossed[0]]) if crossed.size else None

    derived = {
        "m0": eq.m0,
        "kappa": kappa_value,
        "lambda_star": root,
        "delta0": sim.delta0,
        "fitted_rates": fitted_rates,
        "t_delta": t_deltas,
        "max_negative_mass": worst_negative,
    }
    if sim.linearized:
        path = os.path.join(out_dir, "linear_growth.csv")
        write_diagnostics_csv(path, lin_series)
        artifacts["linear_growth_csv"] = path
        window = sim.fit_window or (1.0, sim.t_end)
        derived["linear_rate"] = vlasov.fit_growth_rate(lin_series, window)
    measured = [(math.log(1.0 / d), t_deltas[_delta_tag(d)])
                for d in sim.deltas if d > 0 and t_deltas[_delta_tag(d)] is not None]
    if len(measured) >= 2:
        xs = np.array([m[0] for m in measured])
        ys = np.array([m[1] for m in measured])
        slope, intercept = np.polyfit(xs, ys, 1)
        derived["escape_fit"] = {
            "intercept": float(intercept),
            "slope": float(slope),
            "slope_expected": 1.0 / root,
            "slope_residual": abs(float(slope) - 1.0 / root) * root,
        }
    print(f"evolve: lambda_star={fmt(root)} rates={ {k: (None if v is None else round(v, 6)) for k, v in fitted_rates.items()} }")
    return RunManifest(scenario_hash(scenario), __version__, "evolve", threads,
                       artifacts, derived)


def cmd_verify_appendix(scenario, out_dir, threads):
    from .equilibrium import alpha_e, beta_e, g_m, sqrt_energy_integral

    root2 = math.sqrt(2.0)
    e_near = 1.0 - 1e-8
    alpha_near = alpha_e(e_near)
    rows = []
    sq = sqrt_energy_integral(1.0, 1.0)
    rows.append(("sqrt_energy_integral_separatrix", sq, 4.0 * root2, abs(sq - 4.0 * root2)))
    beta1 = beta_e(1.0, 1.0)
    rows.append(("beta_separatrix", beta1, 8.0 * root2 / 3.0, abs(beta1 - 8.0 * root2 / 3.0)))
    ratio = alpha_near / (-root2 * math.log(1.0 - e_near))
    rows.append(("alpha_leading_log_ratio", ratio, 1.0, abs(ratio - 1.0)))
    const = alpha_near + root2 * math.log(1.0 - e_near)
    rows.append(("alpha_additive_constant", const, root2 * math.log(32.0),
                 abs(const - root2 * math.log(32.0))))
    corrected = alpha_near * g_m(e_near, 1.0) + 32.0 / alpha_near
    rows.append(("variance_limit_corrected", corrected, 8.0 * root2 / 3.0,
                 abs(corrected - 8.0 * root2 / 3.0)))
    path = os.path.join(out_dir, "appendix.csv")
    with open(path, "w") as fh:
        fh.write("quantity,computed,expected,abs_error\n")
        for name, computed, expected, err in rows:
            fh.write(f"{name},{fmt(computed)},{fmt(expected)},{fmt(err)}\n")
    for name, computed, expected, err in rows:
        print(f"{name}: computed={fmt(computed)} expected={fmt(expected)} |err|={err:.3e}")
    return RunManifest(scenario_hash(scenario), __version__, "verify-appendix", threads,
                       {"appendix_csv": path},
                       {name: computed for name, computed, _, _ in rows})


COMMANDS = {
    "steady": cmd_steady,
    "kappa": cmd_kappa,
    "dispersion": cmd_dispersion,
    "mode": cmd_mode,
    "evolve": cmd_evolve,
    "verify-appendix": cmd_verify_appendix,
}


def _apply_thread_cap(threads: int | None) -> int | None:
    if threads is None:
        env = os.environ.get(THREAD_ENV_VAR)
        threads = int(env) if env else None
    if threads is not None:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                    "NUMEXPR_NUM_THREADS"):
            os.environ[var] = str(threads)
    return threads


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="hmflab",
        description="steady states, dispersion roots, eigenmodes, and "
                    "phase-space verification runs of the cosine mean-field model")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="scenario JSON document")
    parser.add_argument("--out", default=None, help="output directory (default runs/<name>)")
    parser.add_argument("--threads", type=int, default=None,
                        help=f"cap numeric thread pools (also {THREAD_ENV_VAR})")
    args = parser.parse_args(argv)
    threads = _apply_thread_cap(args.threads)
    try:
        scenario = load_scenario(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out_dir = args.out or scenario.output_dir or os.path.join("runs", scenario.name)
    os.makedirs(out_dir, exist_ok=True)
    started = time.time()
    try:
        manifest = COMMANDS[args.command](scenario, out_dir, threads)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    manifest.derived["wall_seconds"] = time.time() - started
    manifest.write(os.path.join(out_dir, "manifest.json"))
    return 0


if __name__ == "__main__":
    sys.exit(main())
