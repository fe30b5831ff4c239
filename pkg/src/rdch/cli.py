"""Command line entry point ``rdch``.

Exit codes: 0 success, 1 configuration error, 2 solver error, 3 I/O error.
The environment variable ``RDCH_OUTPUT_DIR`` overrides ``output.directory``.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .diagnostics import convergence_study, smooth_profile, stability_scan
from .fem import BoundsError, FemSpace
from .io import SnapshotSink, write_convergence_csv, write_series_csv, write_snapshot, write_stability_csv
from .mesh import MeshError, build_interval_mesh, build_structured_triangle_mesh, compute_quality
from .physics import ParameterError, SingularityError
from .solvers import InvariantError, run, solve_phi0
from .sparse import SolverError

log = logging.getLogger("rdch")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 1, 2, 3
OUTPUT_ENV = "RDCH_OUTPUT_DIR"


class _StepFailure(Exception):
    def __init__(self, step: int, exc: Exception):
        super().__init__(f"step {step}: {exc}")
        self.step = step
        self.exc = exc


def build_space(cfg: RunConfig) -> FemSpace:
    m = cfg.mesh
    if m.dimension == 1:
        return FemSpace(build_interval_mesh(m.length, m.cells))
    return FemSpace(build_structured_triangle_mesh(m.length, m.cells))


def output_dir(cfg: RunConfig, override: str | None = None) -> Path:
    return Path(override or os.environ.get(OUTPUT_ENV) or cfg.output.directory)


def cmd_run(cfg: RunConfig, out: Path) -> int:
    space = build_space(cfg)
    sinks = []
    if cfg.output.snapshot_every:
        sinks.append(SnapshotSink(out, space, cfg.output.snapshot_every))
    last = {"step": 0}

    def track(state, record):
        last["step"] = state.step

    try:
        result = run(space, cfg.params, cfg.solver, sinks=[track, *sinks])
    except (SolverError, InvariantError, BoundsError, SingularityError) as exc:
        raise _StepFailure(last["step"] + 1, exc) from exc
    write_series_csv(out / "series.csv", result.records)
    final = result.state
    write_snapshot(out, space, final.step, final.n, final.phi)
    rec = result.records[-1]
    print(f"steps={final.step} t={final.t:.6g} energy={rec.energy:.10g} mass={rec.mass:.12g} "
          f"n_min={rec.n_min:.6g} n_max={rec.n_max:.6g}")
    print(f"wrote {out / 'series.csv'}")
    return EXIT_OK


def cmd_scan(cfg: RunConfig, out: Path) -> int:
    sc = cfg.scan
    space = build_space(cfg)
    grid = np.geomspace(sc.dt_min, sc.dt_max, sc.n_points) if sc.n_points > 1 else np.array([sc.dt_min])
    for sigma in sc.sigmas:
        params = replace(cfg.params, sigma=sigma)
        n_ref = smooth_profile(space, sc.reference_mean, sc.reference_amplitude)
        phi_ref = solve_phi0(space, params, n_ref)
        res = stability_scan(space, params, grid, n_ref, phi_ref)
        path = write_stability_csv(out, res)
        star = "none" if res.dt_star is None else f"{res.dt_star:.6g}"
        print(f"sigma={sigma:g} dt_star={star} max_rho={res.rho.max():.6g} -> {path}")
    return EXIT_OK


def cmd_study(cfg: RunConfig, out: Path) -> int:
    if cfg.mesh.dimension != 1:
        raise ConfigError("mesh.dimension: the refinement study runs on 1D meshes")
    if cfg.solver.initial_profile == "random":
        raise ConfigError("initial.profile: the refinement study needs cosine or constant")
    st = cfg.study
    solver = replace(cfg.solver, t_end=st.t_end)
    sizes = sorted(st.mesh_sizes)
    for a, b in zip(sizes, sizes[1:]):
        if b % a:
            raise ConfigError("study.mesh_sizes: sizes must be nested (each divides the next)")
    try:
        rows = convergence_study(cfg.params, solver, sizes, length=cfg.mesh.length, amplitude=st.amplitude)
    except (SolverError, InvariantError, BoundsError, SingularityError) as exc:
        raise _StepFailure(-1, exc) from exc
    path = write_convergence_csv(out, rows)
    for r in rows:
        print(f"h={r.h:.6g} dt={r.dt:.6g} diff_to_next={r.diff_to_next:.6g}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_validate_mesh(cfg: RunConfig, out: Path) -> int:
    space = build_space(cfg)
    q = compute_quality(space.mesh)
    print(f"h={q.h:.10g}")
    print(f"kappa_h={q.kappa_h:.10g}")
    print(f"G_h={q.G_h}")
    print(f"acute={str(q.is_acute).lower()}")
    print(f"quasi_uniformity_ratio={q.is_quasi_uniform_ratio:.10g}")
    return EXIT_OK if q.is_acute else EXIT_CONFIG


COMMANDS = {
    "run": cmd_run,
    "scan-stability": cmd_scan,
    "convergence-study": cmd_study,
    "validate-mesh": cmd_validate_mesh,
}


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rdch", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log at INFO level")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "run": "time-integrate and write series.csv plus snapshots",
        "scan-stability": "spectral radius of the linear scheme's amplification matrix over a dt grid",
        "convergence-study": "successive differences on nested 1D meshes",
        "validate-mesh": "print mesh quality measures; nonzero exit if the mesh is not acute",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("config", help="configuration file")
        p.add_argument("-o", "--output", help=f"output directory (overrides ${OUTPUT_ENV} and output.directory)")
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
    except (ConfigError, ParameterError, MeshError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        return COMMANDS[args.command](cfg, output_dir(cfg, args.output))
    except (ConfigError, ParameterError, MeshError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _StepFailure as exc:
        where = f" at step {exc.step}" if exc.step >= 0 else ""
        print(f"solver error{where}: {exc.exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (SolverError, InvariantError, BoundsError, SingularityError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
