"""Command line front end: ``qsmass {flow,foliate,solve,pipeline,verify}``.

Exit codes: 0 success, 1 verification failure, 2 mathematical-domain
failure (cone exit, assumption violation, barrier breach, ...), 64 bad
configuration.
"""

from __future__ import annotations

import argparse
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from .config import RunConfig
from .errors import AssumptionViolation, ConfigError, GridError, QSMassError
from .flow import run_flow, write_csv
from .foliation import composite_band, foliate_distance, foliate_from_flow, validate
from .grid import area, build_grid
from .mass import mass_function, monotonicity_report, summary, write_summary
from .oracles import schwarzschild_lapse
from .quasispherical import apriori_bounds, initial_lapse, solve
from .surface import ellipsoid, forms_from_radial, radial_perturbation, read_snapshot, sphere, write_snapshot

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_DOMAIN = 2
EXIT_CONFIG = 64


class StageError(Exception):
    def __init__(self, stage, error):
        super().__init__(f"{stage}: {error}")
        self.stage = stage
        self.error = error
        self.exit_code = getattr(error, "exit_code", EXIT_DOMAIN)


class _Stage:
    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, kind, err, tb):
        if err is None or isinstance(err, StageError):
            return False
        if isinstance(err, QSMassError):
            raise StageError(self.name, err) from err
        if isinstance(err, (ValueError, ArithmeticError)):
            # bad numbers while building the input are configuration problems
            if self.name == "surface":
                raise StageError(self.name, ConfigError(str(err))) from err
            wrapped = QSMassError(str(err))
            wrapped.exit_code = EXIT_DOMAIN
            raise StageError(self.name, wrapped) from err
        return False


# -- building blocks ----------------------------------------------------------------


def make_grid(cfg: RunConfig):
    g = cfg.grid
    try:
        return build_grid(g["mode"], g["ntheta"], g["nphi"], g["n"])
    except GridError as err:
        raise ConfigError(str(err)) from None


def make_surface(cfg: RunConfig):
    s = cfg.surface
    if s["kind"] == "snapshot":
        return read_snapshot(s["path"])
    grid = make_grid(cfg)
    if s["kind"] == "sphere":
        return sphere(grid, s["radius"], s["center"])
    if s["kind"] == "ellipsoid":
        return ellipsoid(grid, s["axes"], s["center"])
    return radial_perturbation(grid, s["radius"], s["amplitude"], s["mode"], s["azimuthal"], s["center"])


def _flow(cfg, surface, until_convex=None):
    # without flow.record_dt every accepted step becomes a leaf: flow bands change
    # fast early on and the lapse solver interpolates linearly between leaves
    f = cfg.flow
    if until_convex is None:
        until_convex = f["stop"] == "until_convex"
    return run_flow(surface, t_max=f["t_max"], until_convex=until_convex, dt_max=f["dt_max"],
                    dt_min=f["dt_min"], c_cfl=f["c_cfl"], record_dt=f["record_dt"],
                    tau_convex=f["tau_convex"])


def make_band(cfg: RunConfig, surface):
    """Build the band requested by ``foliation.source``; returns (record, trajectory or None)."""
    fol, f = cfg.foliation, cfg.flow
    source = fol["source"]
    if source == "auto":
        convex = forms_from_radial(surface).min_kappa > f["tau_convex"]
        source = "distance" if convex else "composite"
    if source == "distance":
        with _Stage("foliation"):
            return foliate_distance(surface, fol["t_max"], fol["dt"], tau_convex=f["tau_convex"]), None
    if source == "flow":
        with _Stage("flow"):
            traj = _flow(cfg, surface)
        with _Stage("foliation"):
            return foliate_from_flow(traj), traj
    with _Stage("composite"):
        return composite_band(surface, fol["t_max"], fol["dt"], flow_t_max=f["t_max"],
                              tau_convex=f["tau_convex"], dt_max=f["dt_max"], dt_min=f["dt_min"],
                              c_cfl=f["c_cfl"], record_dt=f["record_dt"])


def make_initial_lapse(cfg: RunConfig, record):
    lap = cfg.lapse
    grid = record.grid
    if lap["initial"] == "explicit":
        vals = np.array([float(x) for x in lap["path"].read_text().split()
                         if not x.startswith("#")])
        if vals.size != grid.size:
            raise ConfigError(f"lapse.path holds {vals.size} values for {grid.size} nodes")
        return vals
    if lap["initial"] == "schwarzschild":
        r0 = float(record.area_radii()[0])
        return np.full(grid.size, schwarzschild_lapse(lap["mass"], r0, grid.n)) * record.eta[0]
    kind, c = lap["h_target"]
    H_hat = record.H_eta[0]
    target = {
        "euclidean": lambda: H_hat,
        "scale": lambda: c * H_hat,
        "constant": lambda: np.full(grid.size, c),
        "perturb": lambda: H_hat / (1.0 + c * grid.cos_theta),
    }[kind]()
    return initial_lapse(record, target)


# -- commands ---------------------------------------------------------------------


def _out(cfg, args) -> Path:
    out = Path(args.out) if args.out else cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_flow(cfg: RunConfig, out: Path) -> dict:
    with _Stage("surface"):
        surface = make_surface(cfg)
    with _Stage("flow"):
        traj = _flow(cfg, surface)
    traj.write_csv(out / "trajectory.csv")
    write_snapshot(traj.final.surface, out / "final_surface.txt")
    if cfg.flow["snapshot_times"]:
        traj.write_snapshots(out / "snapshots", cfg.flow["snapshot_times"])
    info = {
        "t_final": traj.final.t,
        "reached_convexity": traj.reached_convexity,
        "t_convex": traj.t_convex,
        "final_roundness": traj.final.roundness,
        "final_radius_mean": traj.final.radius_mean,
    }
    write_summary(info, out / "flow_summary.json")
    return info


def cmd_foliate(cfg: RunConfig, out: Path):
    with _Stage("surface"):
        surface = make_surface(cfg)
    record, traj = make_band(cfg, surface)
    if traj is not None:
        traj.write_csv(out / "trajectory.csv")
    record.write_csv(out / "band.csv")
    rep = validate(record)
    info = {"leaves": len(record), "standing_assumption_pass": rep.passed,
            "max_gauss_residual": rep.max_gauss_residual, "message": rep.message}
    write_summary(info, out / "band_summary.json")
    if not rep.passed:
        raise StageError("validate", AssumptionViolation(rep.message))
    return record, traj


def cmd_solve(cfg: RunConfig, out: Path):
    record, traj = cmd_foliate(cfg, out)
    with _Stage("lapse"):
        u0 = make_initial_lapse(cfg, record)
        bounds = apriori_bounds(record, u0)
        sol = solve(record, u0, tol=cfg.lapse["tol"], bounds=bounds)
    sol.write_csv(out / "lapse.csv")
    return record, traj, sol


def cmd_pipeline(cfg: RunConfig, out: Path) -> dict:
    record, traj, sol = cmd_solve(cfg, out)
    with _Stage("mass"):
        series = mass_function(record, sol)
        rep = monotonicity_report(series)
    series.write_csv(out / "mass.csv")
    band = validate(record)
    m = series.m
    data = summary(
        series, rep,
        standing_assumption_pass=band.passed,
        bound_certificate_pass=sol.certificate_holds(),
        dissipation_sign_pass=bool(np.all(series.dissipation <= 0)),
        chain_pass=bool(series.brown_york_raw == m[0] and m[0] >= m[-1] - rep.tau_mono),
        max_gauss_residual=band.max_gauss_residual,
        leaves=len(record),
        t_convex=None if traj is None else traj.t_convex,
        initial_area=area(record.metric(0)),
        bounds={"C": sol.bounds.C, "beta": sol.bounds.beta, "gamma": sol.bounds.gamma},
    )
    write_summary(data, out / "summary.json")
    return data


def cmd_verify(out: Path | None, seed: int = 0) -> int:
    from .verify import run_suite

    results = run_suite(seed=seed)
    if out is not None:
        write_csv(out / "verify.csv", ("check", "value", "relation", "threshold", "status"),
                  (r.row() for r in results))
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_OK if not failed else EXIT_VERIFY


def build_parser():
    p = argparse.ArgumentParser(prog="qsmass", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("flow", "foliate", "solve", "pipeline", "verify"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=name != "verify", help="run configuration file")
        sp.add_argument("--out", help="output directory (overrides output.dir)")
        sp.add_argument("--threads", type=int, default=None, help="BLAS/OpenMP thread limit")
        sp.add_argument("--seed", type=int, default=0, help="seed for sampled checks")
    return p


def _limit_threads(n):
    if not n:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def _report_failure(err: StageError, out: Path | None):
    inner = err.error
    print(f"error [{err.stage}] {type(inner).__name__}: {inner}", file=sys.stderr)
    if out is not None:
        write_summary({"stage": err.stage, "category": type(inner).__name__,
                       "exit_code": err.exit_code, "message": str(inner)}, out / "error.json")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be positive", file=sys.stderr)
        return EXIT_CONFIG
    with _limit_threads(args.threads):
        if args.command == "verify":
            out = None
            if args.out:
                out = Path(args.out)
                out.mkdir(parents=True, exist_ok=True)
            return cmd_verify(out, args.seed)
        out = None
        try:
            cfg = RunConfig.load(args.config)
            out = _out(cfg, args)
            command = {"flow": cmd_flow, "foliate": cmd_foliate, "solve": cmd_solve,
                       "pipeline": cmd_pipeline}[args.command]
            command(cfg, out)
        except ConfigError as err:
            print(f"config error: {err}", file=sys.stderr)
            return EXIT_CONFIG
        except StageError as err:
            _report_failure(err, out)
            return err.exit_code
    print(f"{args.command}: ok, outputs in {out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
