"""Command line front end.

Every subcommand reads its keys from an optional INI-style file (``--config``,
section ``[run]`` or a section named after the subcommand) and from
``--set key=value`` overrides, validates them, runs, and writes its outputs
plus a ``manifest.json`` into ``--out``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 reported non-convergence of the center iteration.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__, dno, dynamics, linear, manifold, paradiff, spectral
from .errors import ConfigError, DomainError, JetError, NumericError
from .linear import DispersionParams
from .spectral import FourierGrid, RealField, Spectrum

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_NONCONVERGED = 0, 2, 3, 4
REQUIRED = object()


@dataclass(frozen=True)
class Key:
    name: str
    kind: Callable[[str], Any]
    default: Any
    help: str


def _int_list(text: str) -> list[int]:
    return [int(t) for t in str(text).replace(",", " ").split()]


_RHO = Key("rho", float, REQUIRED, "unperturbed radius in (0, 1)")

SCHEMAS: dict[str, list[Key]] = {
    "dispersion": [
        _RHO,
        Key("k_min", float, 0.0, "first wavenumber"),
        Key("k_max", float, 8.0, "last wavenumber"),
        Key("n_points", int, 81, "number of grid points"),
    ],
    "simulate": [
        _RHO,
        Key("n_modes", int, 64, "Fourier modes"),
        Key("n_y", int, 48, "radial nodes"),
        Key("dt", float, 0.05, "time step"),
        Key("t_end", float, 1.0, "final time, negative integrates backward"),
        Key("seed_mode", int, 1, "seeded frequency"),
        Key("amplitude", float, 1e-3, "seed amplitude"),
        Key("snapshot_stride", int, 10, "steps between snapshots"),
    ],
    "scan": [
        _RHO,
        Key("n_modes", int, 128, "Fourier modes"),
        Key("n_y", int, 96, "radial nodes"),
        Key("dt", float, 0.1, "time step"),
        Key("amplitude", float, 1e-6, "seed amplitude"),
        Key("modes", _int_list, None, "seeded frequencies; default all growing ones and the first dispersive one"),
    ],
    "dno-check": [
        _RHO,
        Key("n_modes", int, 64, "Fourier modes"),
    ],
    "paradiff-check": [
        _RHO,
        Key("n_modes", int, 64, "Fourier modes"),
        Key("seed", int, 0, "random seed of the identity checks"),
    ],
    "manifold": [
        _RHO,
        Key("n_modes", int, 32, "Fourier modes"),
        Key("n_y", int, 24, "radial nodes"),
        Key("base_norm", float, 1e-3, "L2 norm of the hyperbolic base point"),
        Key("direction", str, "stable", "stable or unstable"),
        Key("horizon", float, 12.0, "truncation time"),
        Key("quad_dt", float, 0.2, "sample spacing"),
        Key("weight_a", float, None, "decay weight, default mu / 2"),
        Key("damping", float, 0.5, "Picard damping"),
        Key("tol", float, 1e-8, "Picard tolerance"),
        Key("max_iter", int, 30, "Picard iteration cap"),
        Key("eps0", float, 1.0, "cutoff radius of the extended system"),
    ],
    "center": [
        _RHO,
        Key("n_modes", int, 32, "Fourier modes"),
        Key("n_y", int, 24, "radial nodes"),
        Key("base_norm", float, 1e-3, "L2 norm of the dispersive datum"),
        Key("modes", _int_list, None, "dispersive frequencies of the datum; default the two lowest"),
        Key("horizon", float, 5.0, "half-width of the time window"),
        Key("quad_dt", float, 0.1, "sample spacing"),
        Key("damping", float, 0.5, "Picard damping"),
        Key("tol", float, 1e-10, "tolerance on the correction"),
        Key("max_iter", int, 30, "Picard iteration cap"),
        Key("eps0", float, None, "cutoff radius, default the H^s0 norm of the datum"),
    ],
}


# -- configuration ---------------------------------------------------------------


def load_config(command: str, path: str | None, overrides: list[str]) -> dict:
    """Resolve every key of ``command`` from defaults, the file and the overrides."""
    schema = {k.name: k for k in SCHEMAS[command]}
    raw: dict[str, str] = {}
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        for section in parser.sections():
            if section not in ("run", command):
                raise ConfigError(f"unknown section [{section}]")
            raw.update(parser[section])
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        raw[key.strip()] = value.strip()
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"unknown key(s) for {command}: {', '.join(unknown)}")
    out = {}
    for name, key in schema.items():
        if name in raw:
            try:
                out[name] = key.kind(raw[name])
            except ValueError as exc:
                raise ConfigError(f"bad value for {name}: {raw[name]!r}") from exc
        elif key.default is REQUIRED:
            raise ConfigError(f"missing required key: {name}")
        else:
            out[name] = key.default
    _validate(command, out)
    return out


def _validate(command: str, cfg: dict):
    p = DispersionParams(cfg["rho"])
    if "n_modes" in cfg:
        FourierGrid(cfg["n_modes"])
    if cfg.get("n_y", 3) < 3:
        raise ConfigError("n_y must be at least 3")
    if command == "dispersion":
        if cfg["n_points"] < 1 or cfg["k_max"] < cfg["k_min"]:
            raise ConfigError("empty wavenumber grid")
    if command == "simulate":
        dynamics.IntegratorConfig(dt=cfg["dt"], t_end=cfg["t_end"],
                                  snapshot_stride=cfg["snapshot_stride"]).check_stability(p)
        if abs(cfg["seed_mode"]) > FourierGrid(cfg["n_modes"]).k_max:
            raise ConfigError("seed_mode outside the retained range")
    if command == "scan":
        dynamics.IntegratorConfig(dt=cfg["dt"], t_end=1.0).check_stability(p)
    if command == "manifold":
        if cfg["direction"] not in ("stable", "unstable"):
            raise ConfigError("direction must be stable or unstable")
        _manifold_config(cfg).check(p)
    if command == "center":
        _center_modes(cfg, p)
        manifold.ManifoldConfig(horizon=cfg["horizon"], quad_dt=cfg["quad_dt"],
                                picard_damping=cfg["damping"], tol=cfg["tol"],
                                max_iter=cfg["max_iter"])
    for key in ("eps0", "base_norm", "amplitude"):
        if cfg.get(key) is not None and not cfg[key] > 0:
            raise ConfigError(f"{key} must be positive")


def _manifold_config(cfg: dict) -> manifold.ManifoldConfig:
    return manifold.ManifoldConfig(horizon=cfg["horizon"], quad_dt=cfg["quad_dt"],
                                   weight=cfg["weight_a"], picard_damping=cfg["damping"],
                                   tol=cfg["tol"], max_iter=cfg["max_iter"])


def _center_modes(cfg: dict, p: DispersionParams) -> list[int]:
    grid = FourierGrid(cfg["n_modes"])
    modes = cfg["modes"]
    if modes is None:
        first = p.n_growing + 1
        modes = [first, first + 1]
    for m in modes:
        if m <= 0 or not linear.dispersive_mask(m, p) or m > grid.k_max:
            raise ConfigError(f"mode {m} is not a retained positive dispersive frequency")
    return list(modes)


# -- output helpers ----------------------------------------------------------------


def _fmt(x) -> str:
    return format(float(x), ".16e")


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else _fmt(v) for v in row])


def write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2, allow_nan=True)
        fh.write("\n")


def _jsonable(cfg: dict) -> dict:
    return {k: v for k, v in sorted(cfg.items())}


def _coeff_columns(grid: FourierGrid) -> tuple[list[int], list[str]]:
    xis = list(range(-grid.k_max, grid.k_max + 1))
    names = []
    for k in xis:
        names += [f"re_{k}", f"im_{k}"]
    return xis, names


def _coeff_row(grid: FourierGrid, c: np.ndarray, xis) -> list[float]:
    row = []
    for k in xis:
        v = c[grid.index(k)]
        row += [v.real, v.imag]
    return row


# -- subcommands -------------------------------------------------------------------


def run_dispersion(cfg: dict, out: Path, threads: int) -> tuple[int, dict]:
    p = DispersionParams(cfg["rho"])
    k = np.linspace(cfg["k_min"], cfg["k_max"], cfg["n_points"])
    lg, ld = linear.lambda_g(k, p), linear.lambda_d(k, p)
    write_csv(out / "dispersion.csv", ["k", "lambda_g", "lambda_d"],
              zip(np.atleast_1d(k), np.atleast_1d(lg), np.atleast_1d(ld)))
    return EXIT_OK, {"files": ["dispersion.csv"]}


def run_simulate(cfg: dict, out: Path, threads: int) -> tuple[int, dict]:
    p = DispersionParams(cfg["rho"])
    grid = FourierGrid(cfg["n_modes"])
    state0 = dynamics.seed_state(grid, p, cfg["seed_mode"], cfg["amplitude"])
    icfg = dynamics.IntegratorConfig(dt=cfg["dt"], t_end=cfg["t_end"],
                                     snapshot_stride=cfg["snapshot_stride"], n_y=cfg["n_y"])
    traj = dynamics.simulate(state0, icfg)
    with open(out / "trajectory.jsonl", "w", encoding="utf-8") as fh:
        for s in traj:
            rec = {"t": s.t, "eta": s.state.eta.values.tolist(), "psi": s.state.psi.values.tolist(),
                   "diagnostics": s.diagnostics}
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    write_csv(out / "diagnostics.csv", ["t", "delta_eta", "h_s_norm", "flux"],
              ([s.t, s.diagnostics["delta_eta"], s.diagnostics["h_s_norm"], s.diagnostics["flux"]]
               for s in traj))
    code = EXIT_NUMERIC if traj.status == "diverged" else EXIT_OK
    return code, {"status": traj.status, "files": ["diagnostics.csv", "trajectory.jsonl"]}


def _default_scan_modes(p: DispersionParams) -> list[int]:
    return list(range(1, p.n_growing + 2))


def run_scan(cfg: dict, out: Path, threads: int) -> tuple[int, dict]:
    p = DispersionParams(cfg["rho"])
    modes = cfg["modes"] or _default_scan_modes(p)
    rows = dynamics.growth_scan(p, modes, cfg["amplitude"], workers=threads,
                                n_modes=cfg["n_modes"], n_y=cfg["n_y"], dt=cfg["dt"])
    write_csv(out / "scan.csv", ["k", "omega_measured", "omega_rayleigh"],
              ([r.xi, r.omega_measured, r.omega_rayleigh] for r in rows))
    flagged = [r.xi for r in rows if r.flagged]
    return EXIT_OK, {"flagged_modes": flagged, "files": ["scan.csv"]}


def run_dno_check(cfg: dict, out: Path, threads: int) -> tuple[int, dict]:
    p = DispersionParams(cfg["rho"])
    n = cfg["n_modes"]
    rng = np.random.default_rng(0)
    big = FourierGrid(max(n, 128))
    psi = RealField(big, spectral.ifft(np.where(big.retained, spectral.fft(
        rng.standard_normal(big.n_modes)), 0.0)).real)
    flat = dno.flat_consistency(psi, p)
    grid = FourierGrid(n)
    x = grid.x
    quad, _ = dno.expansion_slope(RealField(grid, np.cos(x)), RealField(grid, np.sin(x)), p)
    small = FourierGrid(32)
    xs = small.x
    eta_s = RealField(small, 0.05 * np.cos(xs) + 0.02 * np.sin(3 * xs))
    psi_s = RealField(small, 0.1 * np.sin(xs) + 0.05 * np.cos(2 * xs))
    shape, _ = dno.shape_derivative_slope(eta_s, psi_s, RealField(small, np.cos(2 * xs)), p)
    eta = RealField(grid, 0.1 * np.cos(x) + 0.05 * np.sin(2 * x))
    psi_g = RealField(grid, 0.1 * np.sin(x) + 0.05 * np.cos(3 * x))
    flux = dno.boundary_flux(dno.dno(eta, psi_g, p), eta, p)
    report = {"flat_error": flat.extrapolated_error, "flat_order": flat.order,
              "quad_slope": quad, "shape_fd_slope": shape, "flux": flux}
    write_json(out / "dno_check.json", report)
    return EXIT_OK, {"files": ["dno_check.json"]}


def run_paradiff_check(cfg: dict, out: Path, threads: int) -> tuple[int, dict]:
    p = DispersionParams(cfg["rho"])
    report = paradiff.property_report(p, cfg["n_modes"], cfg["seed"])
    write_json(out / "paradiff_check.json", report)
    return EXIT_OK, {"files": ["paradiff_check.json"]}


def _extended(cfg: dict, eps0: float) -> paradiff.ExtendedSystem:
    p = DispersionParams(cfg["rho"])
    dmap = paradiff.DiagonalMap(FourierGrid(cfg["n_modes"]), p, n_y=cfg["n_y"])
    return paradiff.ExtendedSystem(dmap, eps0)


def _hyperbolic_base(grid: FourierGrid, norm: float, stable: bool) -> Spectrum:
    c = np.zeros(grid.n_modes, dtype=complex)
    v = norm / math.sqrt(2.0)
    c[grid.index(1)] = c[grid.index(-1)] = 1j * v if stable else v
    return Spectrum(grid, c)


def _trajectory_csv(path: Path, grid: FourierGrid, times, states) -> None:
    xis, names = _coeff_columns(grid)
    rows = ([t, float(np.linalg.norm(c))] + _coeff_row(grid, c, xis) for t, c in zip(times, states))
    write_csv(path, ["t", "l2_norm"] + names, rows)


def _coeff_json(c: np.ndarray) -> dict:
    return {"re": [float(v) for v in c.real], "im": [float(v) for v in c.imag]}


def run_manifold(cfg: dict, out: Path, threads: int) -> tuple[int, dict]:
    ext = _extended(cfg, cfg["eps0"])
    mcfg = _manifold_config(cfg)
    stable = cfg["direction"] == "stable"
    solve = manifold.solve_stable if stable else manifold.solve_unstable
    grid = ext.grid
    f = _hyperbolic_base(grid, cfg["base_norm"], stable)
    sol = solve(f, ext, mcfg)
    # tangency from undamped solves at three base sizes
    tcfg = manifold.ManifoldConfig(horizon=mcfg.horizon, quad_dt=mcfg.quad_dt, weight=mcfg.weight,
                                   picard_damping=1.0, tol=1e-5 * cfg["base_norm"] ** 2,
                                   max_iter=mcfg.max_iter)
    norms = [cfg["base_norm"] / 2**j for j in range(3)]
    dist = []
    for nb in norms:
        fb = _hyperbolic_base(grid, nb, stable)
        sb = solve(fb, ext, tcfg)
        dist.append(float(np.linalg.norm(sb.point.coeffs - fb.coeffs)))
    slope = float(np.polyfit(np.log(norms), np.log(dist), 1)[0]) if min(dist) > 0 else float("nan")
    report = {"manifold_point": _coeff_json(sol.point.coeffs), "residual": sol.residual,
              "decay_rate": sol.fitted_decay, "tangency_slope": slope,
              "iterations": sol.iterations, "tail_bound": sol.tail_bound,
              "weight_a": mcfg.resolved_weight(ext.params)}
    write_json(out / "manifold.json", report)
    _trajectory_csv(out / "trajectory.csv", grid, sol.times, sol.states)
    return EXIT_OK, {"files": ["manifold.json", "trajectory.csv"]}


def run_center(cfg: dict, out: Path, threads: int) -> tuple[int, dict]:
    p = DispersionParams(cfg["rho"])
    grid = FourierGrid(cfg["n_modes"])
    modes = _center_modes(cfg, p)
    c = np.zeros(grid.n_modes, dtype=complex)
    for j, m in enumerate(modes):
        z = 1.0 if j % 2 == 0 else 1j
        c[grid.index(m)] = z
        c[grid.index(-m)] = np.conj(z)
    c *= cfg["base_norm"] / np.linalg.norm(c)
    f = Spectrum(grid, c)
    eps0 = cfg["eps0"] or spectral.sobolev_norm(f, paradiff.S0_DEFAULT)
    ext = _extended(cfg, eps0)
    mcfg = manifold.ManifoldConfig(horizon=cfg["horizon"], quad_dt=cfg["quad_dt"],
                                   picard_damping=cfg["damping"], tol=cfg["tol"],
                                   max_iter=cfg["max_iter"])
    flow = manifold.ExtendedFlow(ext)
    seed = manifold.solve_center(f, ext, mcfg, horizon=cfg["horizon"], flow=flow)
    report = {"cone_ratio": seed.cone_ratio, "converged": seed.converged,
              "iterations": seed.iterations, "residual": seed.residual, "status": seed.status,
              "g": _coeff_json(seed.g.coeffs), "f": _coeff_json(f.coeffs), "eps0": eps0}
    write_json(out / "center.json", report)
    m = int(round(cfg["horizon"] / cfg["quad_dt"]))
    s = np.linspace(0.0, cfg["horizon"], m + 1)
    u0 = Spectrum(grid, f.coeffs + seed.g.coeffs)
    fwd = flow.run(u0, s)
    bwd = flow.run(u0, -s, fwd.fields[0])
    times = np.concatenate([bwd.times[:0:-1], fwd.times])
    states = np.vstack([bwd.states[:0:-1], fwd.states])
    _trajectory_csv(out / "trajectory.csv", grid, times, states)
    code = EXIT_OK if seed.converged else EXIT_NONCONVERGED
    return code, {"files": ["center.json", "trajectory.csv"], "converged": seed.converged}


RUNNERS = {
    "dispersion": run_dispersion,
    "simulate": run_simulate,
    "scan": run_scan,
    "dno-check": run_dno_check,
    "paradiff-check": run_paradiff_check,
    "manifold": run_manifold,
    "center": run_center,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="jetstab", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, schema in SCHEMAS.items():
        keys = ", ".join(k.name for k in schema)
        sp = sub.add_parser(name, help=f"keys: {keys}")
        sp.add_argument("--config", help="INI file with a [run] or [%s] section" % name)
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one key; repeatable")
        for k in schema:
            sp.add_argument("--" + k.name.replace("_", "-"), dest="key_" + k.name, default=None,
                            help=k.help)
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--threads", type=int, default=None,
                        help="worker threads, default $JETSTAB_THREADS or 1")
    return ap


def _threads(arg: int | None) -> int:
    if arg is not None:
        n = arg
    else:
        try:
            n = int(os.environ.get("JETSTAB_THREADS", "1"))
        except ValueError as exc:
            raise ConfigError("JETSTAB_THREADS must be an integer") from exc
    if n < 1:
        raise ConfigError("thread count must be positive")
    return n


def dispatch(argv: list[str] | None = None) -> int:
    """Parse ``argv``, run the subcommand and return the exit code."""
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    command = args.command
    overrides = list(args.set)
    for k in SCHEMAS[command]:
        v = getattr(args, "key_" + k.name)
        if v is not None:
            overrides.append(f"{k.name}={v}")
    try:
        cfg = load_config(command, args.config, overrides)
        threads = _threads(args.threads)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
    except (ConfigError, OSError) as exc:
        print(f"jetstab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        code, extra = RUNNERS[command](cfg, out, threads)
    except ConfigError as exc:
        print(f"jetstab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericError, DomainError, JetError, FloatingPointError) as exc:
        print(f"jetstab: numerical failure: {exc}", file=sys.stderr)
        write_json(out / "manifest.json", {"command": command, "config": _jsonable(cfg),
                                           "version": __version__, "exit_code": EXIT_NUMERIC,
                                           "error": str(exc)})
        return EXIT_NUMERIC
    manifest = {"command": command, "config": _jsonable(cfg), "version": __version__,
                "exit_code": code}
    manifest.update(extra)
    write_json(out / "manifest.json", manifest)
    return code


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
