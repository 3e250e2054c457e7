"""Command-line entry point.

Every study is reproducible from its configuration: built-in defaults are
overridden by a flat key=value config file (``--config``), which is in turn
overridden by explicit command-line flags.  All resolved values are written
to a manifest in the output directory next to the run's artifacts.

Exit codes: 0 success, 1 configuration/validation failure, 2 numerical
failure (solver non-convergence or tripped divergence guard).
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__
from .analysis import (growth_rate, export_system, mms_convergence,
                       operator_convergence, skewness_residual,
                       spectrum_report, spectrum_to_csv)
from .field import AdvectiveField, PsiParams
from .grid import GridSpec, build_dual_grid, quadrature_weights
from .kernels import SolverConvergenceError, backend
from .models import assemble_saws, assemble_wave
from .operators import P_TO_Q, Q_TO_P, WeightPair, parallel_gradient
from .timeint import EnergyDivergenceError, run_simulation


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


_DEFAULTS = {
    "n": 16, "nx": None, "ny": None, "nz": None,
    "lx": 30.0, "ly": 60.0, "lz": 2.0 * np.pi,
    "alpha": 0.5, "beta": 0.5,
    "zeta": 2500.0, "eta": 4.0 / 3.0,
    "dt": 1e-3, "t_end": 5.0, "integrator": "rk4", "trace_every": 10,
    "mms_dt": 1.25e-5, "mms_t_end": 0.002,
    "levels": "16,32,64", "mapping": "both",
    "trials": 100, "seed": 0, "mode": "bound", "system": "wave",
    "threads": 0, "out": None,
    "psi_amag": None, "psi_xmag": None, "psi_ymag1": None,
    "psi_ymag2": None, "psi_as": None,
}

_FLOAT_KEYS = {"lx", "ly", "lz", "alpha", "beta", "zeta", "eta", "dt",
               "t_end", "mms_dt", "mms_t_end", "psi_amag", "psi_xmag",
               "psi_ymag1", "psi_ymag2", "psi_as"}
_INT_KEYS = {"n", "nx", "ny", "nz", "trace_every", "trials", "seed",
             "threads"}


def _parse_config_file(path) -> dict:
    """Flat key = value file (TOML-compatible scalars)."""
    values = {}
    try:
        lines = open(path).read().splitlines()
    except OSError as exc:
        raise CliError(f"cannot read config file: {exc}")
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected key = value")
        key, _, val = line.partition("=")
        key = key.strip().replace("-", "_")
        val = val.strip().strip("\"'")
        if key not in _DEFAULTS:
            raise CliError(f"{path}:{lineno}: unknown config key {key!r}")
        if key in _INT_KEYS:
            values[key] = int(val)
        elif key in _FLOAT_KEYS:
            values[key] = float(val)
        else:
            values[key] = val
    return values


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--n", type=int, help="cubic grid size (p nodes)")
    p.add_argument("--nx", type=int)
    p.add_argument("--ny", type=int)
    p.add_argument("--nz", type=int)
    p.add_argument("--lx", type=float)
    p.add_argument("--ly", type=float)
    p.add_argument("--lz", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int,
                   help="worker threads for convergence levels (0 = cores)")
    p.add_argument("--out", "-o", help="output directory "
                   "(default: $MFD_OUTPUT_DIR or '.')")
    for name in ("amag", "xmag", "ymag1", "ymag2", "as"):
        p.add_argument(f"--psi-{name}", type=float, dest=f"psi_{name}")


def _build_parser() -> _Parser:
    parser = _Parser(prog="mfdpar", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("skewness-check",
                       help="divergence-theorem residual of the operator pair")
    _add_common(p)
    p.add_argument("--trials", type=int)

    p = sub.add_parser("operator-convergence",
                       help="spatial convergence of the transport operators")
    _add_common(p)
    p.add_argument("--levels", help="comma-separated grid sizes")
    p.add_argument("--mapping", choices=["q_to_p", "p_to_q", "both"])

    p = sub.add_parser("wave-sim", help="integrate the wave model")
    _add_common(p)
    p.add_argument("--dt", type=float)
    p.add_argument("--t-end", type=float, dest="t_end")
    p.add_argument("--integrator", choices=["rk4", "cn"])
    p.add_argument("--trace-every", type=int, dest="trace_every")

    p = sub.add_parser("saws-sim", help="integrate the SAW system")
    _add_common(p)
    p.add_argument("--zeta", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--t-end", type=float, dest="t_end")
    p.add_argument("--trace-every", type=int, dest="trace_every")

    p = sub.add_parser("mms-convergence",
                       help="manufactured-solution convergence of the SAW"
                            " system")
    _add_common(p)
    p.add_argument("--levels")
    p.add_argument("--zeta", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--dt", type=float, dest="mms_dt")
    p.add_argument("--t-end", type=float, dest="mms_t_end")

    p = sub.add_parser("spectrum", help="stability diagnostics")
    _add_common(p)
    p.add_argument("--system", choices=["wave", "saws"])
    p.add_argument("--mode", choices=["bound", "dense"])
    p.add_argument("--zeta", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--trials", type=int)

    p = sub.add_parser("export-system", help="write system blocks as "
                       "Matrix Market files")
    _add_common(p)
    p.add_argument("--system", choices=["wave", "saws"])
    p.add_argument("--zeta", type=float)
    p.add_argument("--eta", type=float)
    return parser


def _resolve(args: argparse.Namespace) -> dict:
    cfg = dict(_DEFAULTS)
    if getattr(args, "config", None):
        cfg.update(_parse_config_file(args.config))
    for key, val in vars(args).items():
        if key in ("command", "config") or val is None:
            continue
        cfg[key] = val
    if cfg["out"] is None:
        cfg["out"] = os.environ.get("MFD_OUTPUT_DIR", ".")
    if cfg["threads"] == 0:
        cfg["threads"] = os.cpu_count() or 1
    return cfg


def _grid_spec(cfg) -> GridSpec:
    nx = cfg["nx"] if cfg["nx"] is not None else cfg["n"]
    ny = cfg["ny"] if cfg["ny"] is not None else cfg["n"]
    nz = cfg["nz"] if cfg["nz"] is not None else cfg["n"]
    return GridSpec(lx=cfg["lx"], ly=cfg["ly"], lz=cfg["lz"],
                    npx=nx, npy=ny, npz=nz)


def _field(cfg) -> AdvectiveField:
    base = PsiParams.from_domain(cfg["lx"], cfg["ly"])
    params = PsiParams(
        a_mag=cfg["psi_amag"] if cfg["psi_amag"] is not None else base.a_mag,
        x_mag=cfg["psi_xmag"] if cfg["psi_xmag"] is not None else base.x_mag,
        y_mag1=(cfg["psi_ymag1"] if cfg["psi_ymag1"] is not None
                else base.y_mag1),
        y_mag2=(cfg["psi_ymag2"] if cfg["psi_ymag2"] is not None
                else base.y_mag2),
        a_s=cfg["psi_as"] if cfg["psi_as"] is not None else base.a_s)
    params.check_outside_domain(cfg["lx"], cfg["ly"])
    return AdvectiveField(params)


def _levels(cfg) -> list:
    try:
        levels = [int(tok) for tok in str(cfg["levels"]).split(",") if tok]
    except ValueError:
        raise CliError(f"bad levels value {cfg['levels']!r}")
    if len(levels) < 3:
        raise CliError("levels needs at least 3 comma-separated grid sizes")
    return levels


def _write_manifest(cfg, command: str) -> None:
    os.makedirs(cfg["out"], exist_ok=True)
    path = os.path.join(cfg["out"], "manifest.txt")
    with open(path, "w") as fh:
        fh.write(f"command: {command}\n")
        fh.write(f"mfdpar-version: {__version__}\n")
        fh.write(f"kernel-backend: {backend()}\n")
        for key in sorted(cfg):
            val = cfg[key]
            if val is None:
                continue
            fh.write(f"{key}: {val}\n")


def _weights(cfg) -> WeightPair:
    return WeightPair(cfg["alpha"], cfg["beta"])


def _cmd_skewness(cfg) -> int:
    grid = build_dual_grid(_grid_spec(cfg))
    field = _field(cfg)
    weights = _weights(cfg)
    c_pq = parallel_gradient(grid, field, Q_TO_P, weights)
    c_qp = parallel_gradient(grid, field, P_TO_Q, weights)
    w_p = quadrature_weights(grid, "p").diag[grid.interior_p_mask()]
    w_q = quadrature_weights(grid, "q").diag
    res = skewness_residual(c_pq, c_qp, w_p, w_q, trials=cfg["trials"],
                            seed=cfg["seed"])
    print(f"skewness residual = {res:.3e} "
          f"(alpha={weights.alpha:g}, beta={weights.beta:g}, "
          f"n={grid.np_shape})")
    return 0


def _cmd_operator_convergence(cfg) -> int:
    spec = _grid_spec(cfg)
    field = _field(cfg)
    weights = _weights(cfg)
    levels = _levels(cfg)
    mappings = ([Q_TO_P, P_TO_Q] if cfg["mapping"] == "both"
                else [cfg["mapping"]])
    summaries = []
    for mapping in mappings:
        table = operator_convergence(spec, field, mapping, weights, levels,
                                     threads=cfg["threads"])
        tag = "pq" if mapping == Q_TO_P else "qp"
        table.to_csv(os.path.join(cfg["out"], f"operator_convergence_"
                                              f"{tag}.csv"))
        summaries.append(f"slope[{mapping}]={table.slopes[0]:.3f}")
    print("operator convergence: " + "  ".join(summaries))
    return 0


def _cmd_sim(cfg, which: str) -> int:
    grid = build_dual_grid(_grid_spec(cfg))
    field = _field(cfg)
    weights = _weights(cfg)
    if which == "wave":
        system = assemble_wave(grid, field, weights)
        integrator = cfg["integrator"]
    else:
        system = assemble_saws(grid, field, zeta=cfg["zeta"], eta=cfg["eta"],
                               weights=weights)
        integrator = "rk4"
    meta = {"alpha": weights.alpha, "beta": weights.beta,
            "grid": grid.np_shape, "seed": cfg["seed"]}
    if which == "saws":
        meta.update(zeta=cfg["zeta"], eta=cfg["eta"])
    trace_path = os.path.join(cfg["out"], "energy.csv")
    try:
        trace, _ = run_simulation(system, integrator, cfg["dt"],
                                  cfg["t_end"],
                                  trace_every=cfg["trace_every"],
                                  metadata=meta)
    except EnergyDivergenceError as exc:
        exc.trace.to_csv(trace_path)
        print(f"energy divergence: {exc}")
        return 2
    trace.to_csv(trace_path)
    rate = growth_rate(trace)
    print(f"{which} run complete: t_end={cfg['t_end']:g}, "
          f"energy growth rate = {rate:+.4e} per time unit")
    return 0


def _cmd_mms(cfg) -> int:
    table = mms_convergence(_grid_spec(cfg), _field(cfg), zeta=cfg["zeta"],
                            eta=cfg["eta"], weights=_weights(cfg),
                            dt=cfg["mms_dt"], t_end=cfg["mms_t_end"],
                            resolutions=_levels(cfg),
                            threads=cfg["threads"])
    table.to_csv(os.path.join(cfg["out"], "mms_convergence.csv"))
    s_phi, s_v = table.slopes
    print(f"mms convergence: slope[phi]={s_phi:.3f} slope[v]={s_v:.3f}")
    return 0


def _cmd_spectrum(cfg) -> int:
    grid = build_dual_grid(_grid_spec(cfg))
    field = _field(cfg)
    weights = _weights(cfg)
    if cfg["system"] == "wave":
        system = assemble_wave(grid, field, weights)
    else:
        system = assemble_saws(grid, field, zeta=cfg["zeta"], eta=cfg["eta"],
                               weights=weights)
    report = spectrum_report(system, mode=cfg["mode"], seed=cfg["seed"],
                             trials=cfg["trials"])
    spectrum_to_csv(report, os.path.join(cfg["out"], "spectrum.csv"))
    print(f"spectrum[{cfg['system']}/{report.method}]: "
          f"max Re(lambda) = {report.max_real_part:+.3e}, "
          f"purely imaginary = {report.purely_imaginary}")
    return 0


def _cmd_export(cfg) -> int:
    grid = build_dual_grid(_grid_spec(cfg))
    field = _field(cfg)
    weights = _weights(cfg)
    if cfg["system"] == "wave":
        system = assemble_wave(grid, field, weights)
    else:
        system = assemble_saws(grid, field, zeta=cfg["zeta"], eta=cfg["eta"],
                               weights=weights)
    files = export_system(system, cfg["out"])
    print(f"exported {len(files)} files to {cfg['out']}")
    return 0


_COMMANDS = {
    "skewness-check": _cmd_skewness,
    "operator-convergence": _cmd_operator_convergence,
    "wave-sim": lambda cfg: _cmd_sim(cfg, "wave"),
    "saws-sim": lambda cfg: _cmd_sim(cfg, "saws"),
    "mms-convergence": _cmd_mms,
    "spectrum": _cmd_spectrum,
    "export-system": _cmd_export,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = _resolve(args)
        _write_manifest(cfg, args.command)
        return _COMMANDS[args.command](cfg)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SolverConvergenceError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
