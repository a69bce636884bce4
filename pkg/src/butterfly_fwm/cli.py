"""Command-line front end: ``butterfly-fwm <subcommand> --config <file>``.

Subcommands run one experiment each and write their artifacts to the
output directory.  A JSON summary is written for every run, including
failed ones.  Exit codes:

    0  success
    2  configuration error
    3  integrator failure
    4  steady-state solver did not converge
    5  I/O failure
    6  regime warning with --strict
    7  silver reduction refused (near-resonant link)
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import math
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, load_config, serialize_config, set_parameter
from .correlations import correlation_curve
from .dynamics import (
    ButterflyParams,
    IntegratorControl,
    SystemState,
    emission_rates,
    integrate,
    kappa,
    steady_residual,
    steady_state,
)
from .errors import ConfigError, IntegrationError, ReductionError, RegimeWarning, SteadyStateError
from .geometry import LINEAR_Z, SIGMA_MINUS, SIGMA_PLUS, build_mode_grid, ring_enhancement, write_grid_csv
from .io import write_csv, write_json, write_trajectory_csv
from .polarization import (
    angular_scan,
    bell_fidelity,
    entangled_fraction,
    opposite_polarization_probability,
    write_scan_csv,
)
from .schemes import SilverConfig, reduce_silver, validate_regime

log = logging.getLogger("butterfly_fwm")

__all__ = ["main", "run_command", "run_sweep", "build_model", "EXIT_CODES"]

SUBCOMMANDS = ("simulate", "steady", "g2", "polarization", "silver-reduce", "sweep")
EXIT_CODES = {
    "ok": 0,
    "config": 2,
    "integration": 3,
    "steady": 4,
    "io": 5,
    "regime": 6,
    "reduction": 7,
}
SWEEP_HEADER = ("param", "status", "pair_rate", "loss_rate", "kappa", "peak_g2", "cs_factor", "warnings")

_DIPOLES = {"sigma+": SIGMA_PLUS, "sigma-": SIGMA_MINUS, "z": LINEAR_Z, "pi": LINEAR_Z}


@dataclasses.dataclass
class Model:
    params: ButterflyParams
    grid: object
    reduction: object = None

    @property
    def rogue_detuning(self):
        return None if self.reduction is None else self.reduction.rogue_detuning_ghz


def _dipole(name: str):
    try:
        return _DIPOLES[name.lower()]
    except KeyError:
        raise ConfigError(f"unknown dipole {name!r}; use one of {sorted(_DIPOLES)}") from None


def build_model(cfg: RunConfig) -> Model:
    """Butterfly parameters and mode grid for a config (reducing silver first)."""
    g = cfg.grid
    try:
        grid = build_mode_grid(g.radius, g.wavelength, g.rings)
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from None
    if cfg.butterfly is not None:
        b = cfg.butterfly
        try:
            params = ButterflyParams(
                omega_d=b.omega_d,
                omega_c=b.omega_c,
                atom_number=b.atom_number,
                radius=g.radius,
                wavelength=g.wavelength,
                gamma2=b.gamma2,
                gamma4=b.gamma4,
                dipole2=_dipole(b.dipole2),
                dipole4=_dipole(b.dipole4),
            )
        except ValueError as exc:
            raise ConfigError(f"butterfly: {exc}") from None
        return Model(params, grid)
    s = cfg.silver
    try:
        silver = SilverConfig(
            drive_rabi=s.drive_rabi,
            drive_detuning=s.drive_detuning,
            coupling_rabi=s.coupling_rabi,
            coupling_detuning=s.coupling_detuning,
            gamma=s.gamma,
            atom_number=s.atom_number,
            radius=g.radius,
            wavelength=g.wavelength,
            b_loss=s.b_loss,
            allow_near_resonant=s.allow_near_resonant,
        )
    except ValueError as exc:
        raise ConfigError(f"silver: {exc}") from None
    red = reduce_silver(silver)
    return Model(red.params, grid, red)


def _control(cfg: RunConfig, backend=None) -> IntegratorControl:
    i = cfg.integration
    return IntegratorControl(
        rtol=i.rtol,
        atol=i.atol,
        max_step=i.max_step,
        samples=i.samples,
        fit_fraction=i.fit_fraction,
        threads=i.threads,
        backend=backend,
    )


def _param_echo(model: Model) -> dict:
    p = model.params
    out = {
        "omega_d": p.omega_d,
        "omega_c": p.omega_c,
        "atom_number": p.atom_number,
        "gamma2": p.gamma2,
        "gamma4": p.gamma4,
        "radius": p.radius,
        "wavelength": p.wavelength,
        "radius_over_wavelength": p.radius / p.wavelength,
        "dipole2": p.dipole2.label,
        "dipole4": p.dipole4.label,
        "rogue_rate": p.rogue_rate,
        "rate_unit_per_s": p.rate_unit_per_s,
        "rings": model.grid.ring_count,
    }
    if model.reduction is not None:
        out["silver_reduction"] = model.reduction.summary()
    return out


def _ring_table(state: SystemState, grid):
    closure = state.n4 * state.n1 / (state.n2 * (state.n3 + 1.0))
    rows = zip(grid.theta, grid.weights, state.n3, state.n4, closure)
    return [tuple(float(v) for v in r) for r in rows], closure


def _simulate(cfg, model, backend):
    traj = integrate(SystemState.ground(model.params.atom_number, model.grid.ring_count),
                     model.params, model.grid, cfg.integration.t_end, _control(cfg, backend))
    final = traj.state()
    try:
        kap = kappa(final, model.params, model.grid)
    except ValueError:
        kap = float("nan")
    return traj, kap


def _simulate_summary(traj, kap, model) -> dict:
    unit = model.params.rate_unit_per_s
    final = traj.state()
    n = model.params.atom_number
    return {
        "fit": {
            "pair_rate": traj.pair_rate,
            "loss_rate": traj.loss_rate,
            "pair_loss_ratio": traj.pair_rate / traj.loss_rate if traj.loss_rate else None,
            "window": [traj.fit_start, traj.t_end],
            "pair_residual_rms": traj.pair_fit_rms,
            "loss_residual_rms": traj.loss_fit_rms,
        },
        "rates_per_s": None if unit is None else {
            "pair_rate": traj.pair_rate * unit,
            "loss_rate": traj.loss_rate * unit,
        },
        "final": {
            "t": traj.t_end,
            "N1": final.n1,
            "N2": final.n2,
            "Nbar3": float(traj.nbar3[-1]),
            "Nbar4": float(traj.nbar4[-1]),
            "Npair": final.n_pair,
            "Nloss": final.n_loss,
            "cumulative_pair_loss_ratio": final.n_pair / final.n_loss if final.n_loss else None,
            "kappa": kap,
            "atom_number_drift": float(traj.total_atoms()[-1] / n - 1.0),
        },
        "integrator": traj.stats,
    }


def _steady(model):
    state = steady_state(model.params, model.grid)
    return state, steady_residual(state, model.params, model.grid)


def _g2_metrics(cfg, model, state, ring):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RegimeWarning)
        curve = correlation_curve(ring, state, model.params, model.grid,
                                  tau_max=cfg.g2.tau_max, samples=cfg.g2.samples)
    msgs = [str(w.message) for w in caught if issubclass(w.category, RegimeWarning)]
    return curve, msgs


class _Run:
    """Shared state of one subcommand invocation."""

    def __init__(self, cfg, command, out_dir, strict, ring, backend):
        self.cfg = cfg
        self.command = command
        self.out = Path(out_dir)
        self.strict = strict
        self.ring = ring
        self.backend = backend
        self.summary = {"command": command, "scheme": cfg.scheme, "status": "ok"}
        self.warnings: list[str] = []

    def path(self, name):
        return self.out / name


def _check_ring(ring, grid):
    if not 0 <= ring < grid.ring_count:
        raise ConfigError(f"ring {ring} outside 0..{grid.ring_count - 1}")


def _cmd_simulate(run: _Run, model: Model):
    traj, kap = _simulate(run.cfg, model, run.backend)
    write_trajectory_csv(run.path("trajectory.csv"), traj)
    write_grid_csv(run.path("grid.csv"), model.grid, model.params.dipole2, model.params.dipole4)
    run.summary.update(_simulate_summary(traj, kap, model))


def _cmd_steady(run: _Run, model: Model):
    state, residual = _steady(model)
    rows, closure = _ring_table(state, model.grid)
    write_csv(run.path("steady_rings.csv"), ("theta", "weight", "N3", "N4", "closure"), rows)
    r_s, r_i = emission_rates(state, model.params, model.grid)
    run.summary.update({
        "steady": {
            "N1": state.n1,
            "N2": state.n2,
            "rho21_imag": state.rho21.imag,
            "residual": residual,
            "signal_rate": r_s,
            "idler_rate": r_i,
            "idler_signal_ratio": r_i / r_s,
            "kappa": kappa(state, model.params, model.grid),
            "closure_min": float(np.min(closure)),
            "closure_max": float(np.max(closure)),
            "Nbar3": float(np.dot(model.grid.weights, state.n3) / model.grid.weights.sum()),
            "Nbar4": float(np.dot(model.grid.weights, state.n4) / model.grid.weights.sum()),
        }
    })


def _cmd_g2(run: _Run, model: Model):
    ring = run.cfg.g2.ring if run.ring is None else run.ring
    _check_ring(ring, model.grid)
    state, residual = _steady(model)
    curve, msgs = _g2_metrics(run.cfg, model, state, ring)
    run.warnings.extend(msgs)
    curve.write_csv(run.path("g2.csv"))
    info = curve.summary()
    info["g2_at_zero"] = float(curve.g2[0])
    info["idler_delay"] = 1.0 / (model.params.gamma4
                                 * float(ring_enhancement(model.grid, model.params.dipole4)[ring])
                                 * state.n1)
    info["steady_residual"] = residual
    info["N4"] = float(state.n4[ring])
    run.summary["g2"] = info


def _cmd_polarization(run: _Run, model: Model):
    pc = run.cfg.polarization
    thetas = np.linspace(0.0, math.pi, pc.points)
    write_scan_csv(run.path("polarization.csv"), angular_scan(thetas))
    tm = pc.theta_max
    run.summary["polarization"] = {
        "theta_max": tm,
        "opposite_probability": opposite_polarization_probability(tm),
        "bell_fidelity": bell_fidelity(tm),
        "opposite_probability_equator": opposite_polarization_probability(math.pi / 2),
        "entangled_fraction": entangled_fraction(tm, model.params.dipole2),
    }


def _cmd_silver_reduce(run: _Run, model: Model):
    if model.reduction is None:
        raise ConfigError("silver-reduce needs a 'silver' section")
    write_json(run.path("silver.json"), model.reduction.summary())
    run.summary["reduction"] = model.reduction.summary()


_COMMANDS = {
    "simulate": _cmd_simulate,
    "steady": _cmd_steady,
    "g2": _cmd_g2,
    "polarization": _cmd_polarization,
    "silver-reduce": _cmd_silver_reduce,
}


def _classify(exc) -> tuple[str, str]:
    if isinstance(exc, ConfigError):
        return "config", str(exc)
    if isinstance(exc, ReductionError):
        return "reduction", str(exc)
    if isinstance(exc, IntegrationError):
        return "integration", f"{exc} (t = {exc.time:g})"
    if isinstance(exc, SteadyStateError):
        return "steady", f"{exc} (residual {exc.residual:.3g})"
    if isinstance(exc, OSError):
        return "io", str(exc)
    raise exc


def run_command(config: RunConfig, subcommand: str, *, out_dir=None, strict: bool = False,
                ring: int | None = None, jobs: int = 1, backend: str | None = None) -> int:
    """Run one subcommand and write its artifacts; returns the exit status."""
    if subcommand not in SUBCOMMANDS:
        raise ValueError(f"unknown subcommand {subcommand!r}")
    if subcommand == "sweep":
        return run_sweep(config, out_dir=out_dir, strict=strict, jobs=jobs, backend=backend)
    out = Path(out_dir if out_dir is not None else config.output.directory)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        log.error("cannot create output directory %s: %s", out, exc)
        return EXIT_CODES["io"]
    run = _Run(config, subcommand, out, strict, ring, backend)
    code = EXIT_CODES["ok"]
    try:
        model = build_model(config)
        run.summary["parameters"] = _param_echo(model)
        if subcommand != "polarization":
            report = validate_regime(model.params, model.grid, model.rogue_detuning)
            run.summary["regime"] = report.summary()
            run.warnings.extend(report.warnings)
        _COMMANDS[subcommand](run, model)
    except Exception as exc:  # noqa: BLE001 - mapped to exit codes below
        kind, message = _classify(exc)
        run.summary["status"] = "error"
        run.summary["error"] = {"kind": kind, "message": message}
        log.error("%s: %s", subcommand, message)
        code = EXIT_CODES[kind]
    run.summary["warnings"] = run.warnings
    for msg in run.warnings:
        log.warning("regime: %s", msg)
    if code == 0 and strict and run.warnings:
        run.summary["status"] = "regime-warning"
        code = EXIT_CODES["regime"]
    run.summary["config"] = serialize_config(config)
    try:
        write_json(out / f"{subcommand}.json", run.summary)
    except OSError as exc:
        log.error("cannot write summary: %s", exc)
        return EXIT_CODES["io"]
    return code


def _sweep_point(cfg: RunConfig, value: float, strict: bool, backend):
    """Metrics of one sweep point; never raises for model failures."""
    nan = float("nan")
    row = {"param": float(value), "status": "ok", "pair_rate": nan, "loss_rate": nan,
           "kappa": nan, "peak_g2": nan, "cs_factor": nan, "warnings": "", "code": 0}
    msgs = []
    try:
        point = set_parameter(cfg, cfg.sweep.parameter, value)
        model = build_model(point)
        report = validate_regime(model.params, model.grid, model.rogue_detuning)
        msgs.extend(report.warnings)
        traj, kap = _simulate(point, model, backend)
        row.update(pair_rate=traj.pair_rate, loss_rate=traj.loss_rate, kappa=kap)
        state, _ = _steady(model)
        ring = point.g2.ring
        _check_ring(ring, model.grid)
        curve, g2_msgs = _g2_metrics(point, model, state, ring)
        msgs.extend(g2_msgs)
        row.update(peak_g2=curve.peak, cs_factor=curve.cs_factor)
    except (ValueError, ConfigError, ReductionError, IntegrationError, SteadyStateError) as exc:
        if isinstance(exc, ValueError) and not isinstance(exc, ConfigError):
            kind, message = "config", str(exc)
        else:
            kind, message = _classify(exc)
        row["status"] = f"error[{kind}]: {message}"
        row["code"] = EXIT_CODES[kind]
    row["warnings"] = "; ".join(msgs)
    if row["code"] == 0 and strict and msgs:
        row["status"] = "regime-warning"
        row["code"] = EXIT_CODES["regime"]
    return row


def run_sweep(config: RunConfig, *, out_dir=None, strict: bool = False, jobs: int = 1,
              backend: str | None = None) -> int:
    """Run every sweep point and write ``sweep.csv`` (rows sorted by value).

    Points are independent and may run on ``jobs`` threads; the table is
    written once all points finish.  Returns the exit status of the first
    failing row (in row order), or 0.
    """
    out = Path(out_dir if out_dir is not None else config.output.directory)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        log.error("cannot create output directory %s: %s", out, exc)
        return EXIT_CODES["io"]
    summary = {"command": "sweep", "scheme": config.scheme, "config": serialize_config(config)}
    if config.sweep is None:
        summary.update(status="error", error={"kind": "config", "message": "no sweep section"})
        write_json(out / "sweep.json", summary)
        return EXIT_CODES["config"]
    values = sorted(config.sweep.values)
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        rows = list(pool.map(lambda v: _sweep_point(config, v, strict, backend), values))
    table = [tuple(r[k] for k in SWEEP_HEADER) for r in rows]
    code = next((r["code"] for r in rows if r["code"]), 0)
    summary.update(
        status="ok" if code == 0 else "partial",
        parameter=config.sweep.parameter,
        rows=[{k: r[k] for k in SWEEP_HEADER} for r in rows],
    )
    try:
        write_csv(out / "sweep.csv", SWEEP_HEADER, table)
        write_json(out / "sweep.json", summary)
    except OSError as exc:
        log.error("cannot write sweep table: %s", exc)
        return EXIT_CODES["io"]
    return code


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="butterfly-fwm",
        description="Collective four-wave-mixing pair source: simulation and analysis.",
    )
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", required=True,
                    help="config file, or the name of a shipped preset (fig2, silver-paper)")
    ap.add_argument("--out", help="output directory (default: output.directory of the config)")
    ap.add_argument("--rings", type=int, help="override grid.rings")
    ap.add_argument("--threads", type=int, help="override integration.threads")
    ap.add_argument("--ring", type=int, help="ring index for g2 (default: g2.ring)")
    ap.add_argument("--jobs", type=int, default=1, help="concurrent sweep points")
    ap.add_argument("--backend", choices=("auto", "cython", "python"), default=None)
    ap.add_argument("--strict", action="store_true", help="exit 6 on any regime warning")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.rings is not None:
            cfg = set_parameter(cfg, "grid.rings", args.rings)
        if args.threads is not None:
            cfg = set_parameter(cfg, "integration.threads", args.threads)
    except (ConfigError, ValueError) as exc:
        print(f"butterfly-fwm: config error: {exc}", file=sys.stderr)
        return EXIT_CODES["config"]
    except OSError as exc:
        print(f"butterfly-fwm: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CODES["io"]
    backend = None if args.backend in (None, "auto") else args.backend
    return run_command(cfg, args.subcommand, out_dir=args.out, strict=args.strict,
                       ring=args.ring, jobs=args.jobs, backend=backend)


if __name__ == "__main__":
    sys.exit(main())
