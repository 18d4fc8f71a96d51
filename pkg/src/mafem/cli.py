"""Command-line entry point: ``mafem solve|study|adapt --config PATH``.

Exit codes: 0 success, 1 usage or configuration error, 2 solver failure.
"""
import argparse
import logging
import os
import sys

from .adapt import adaptive_loop, records_to_csv, solve_and_estimate, uniform_study
from .config import parse_config
from .errors import ConfigError, InvalidMeshError, MAFEMError
from .mesh import load_mesh, unit_square_mesh
from .newton import NewtonOptions
from .problems import builtin_problem
from .vtu import write_solution_vtu

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2

log = logging.getLogger("mafem")


def _newton(cfg):
    return NewtonOptions(cfg.tol_residual, cfg.max_iters, cfg.damping,
                         linear_rtol=cfg.linear_rtol, threads=cfg.threads)


def _mesh(cfg):
    if cfg.mesh_file:
        return load_mesh(cfg.mesh_file)
    return unit_square_mesh(cfg.mesh_n)


def _emit_csv(cfg, text):
    if cfg.csv:
        with open(cfg.csv, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _vtu_path(cfg, name):
    return os.path.join(cfg.vtu_dir, name)


def _check_paths(cfg):
    for path in (cfg.csv,):
        if path and not os.path.isdir(os.path.dirname(os.path.abspath(path))):
            raise ConfigError(f"output directory for {path!r} does not exist")
    if cfg.vtu_dir:
        os.makedirs(cfg.vtu_dir, exist_ok=True)


def cmd_solve(cfg):
    problem = builtin_problem(cfg.problem)
    res = solve_and_estimate(problem, _mesh(cfg), cfg.degree, 0, _newton(cfg),
                             cofactor_source=cfg.cofactor_source,
                             quadrature_bump=cfg.quadrature_bump)
    _emit_csv(cfg, records_to_csv([res.record]))
    if cfg.vtu_dir:
        write_solution_vtu(_vtu_path(cfg, "solution.vtu"), res.dofmap, res.state, res.report)
    return EXIT_OK


def cmd_study(cfg):
    problem = builtin_problem(cfg.problem)
    mesh = load_mesh(cfg.mesh_file) if cfg.mesh_file else None

    def dump(res):
        if cfg.vtu_dir:
            write_solution_vtu(_vtu_path(cfg, f"level_{res.record.level:02d}.vtu"),
                               res.dofmap, res.state, res.report)

    study = uniform_study(problem, cfg.degree, cfg.mesh_n, cfg.levels, mesh=mesh,
                          newton=_newton(cfg), cofactor_source=cfg.cofactor_source,
                          quadrature_bump=cfg.quadrature_bump, on_level=dump)
    comments = []
    if len(study.records) >= 2:
        comments.append("observed_order_sigma_l2=%.17g" % study.orders["sigma_l2"][-1])
        comments.append("observed_order_u_h1=%.17g" % study.orders["u_h1"][-1])
    _emit_csv(cfg, records_to_csv(study.records, comments))
    return EXIT_OK


def cmd_adapt(cfg):
    problem = builtin_problem(cfg.problem)

    def dump(res):
        if cfg.vtu_dir:
            write_solution_vtu(_vtu_path(cfg, f"level_{res.record.level:02d}.vtu"),
                               res.dofmap, res.state, res.report)

    out = adaptive_loop(problem, cfg.degree, cfg.theta, mesh=_mesh(cfg),
                        max_levels=cfg.max_levels, theta_tol=cfg.theta_tol,
                        max_cells=cfg.max_cells or None, newton=_newton(cfg),
                        cofactor_source=cfg.cofactor_source,
                        quadrature_bump=cfg.quadrature_bump, on_level=dump)
    _emit_csv(cfg, records_to_csv(out.records))
    if out.error is not None:
        raise out.error
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "study": cmd_study, "adapt": cmd_adapt}


def build_parser():
    p = argparse.ArgumentParser(prog="mafem", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="flat key = value config file")
    p.add_argument("--levels", type=int, help="override study.levels / adapt.max_levels")
    p.add_argument("--out", help="CSV output path (default: stdout)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with open(args.config) as fh:
            cfg = parse_config(fh.read())
        if args.levels is not None:
            if args.levels < 1:
                raise ConfigError("--levels must be >= 1")
            cfg.levels = cfg.max_levels = args.levels
        if args.out:
            cfg.csv = args.out
        _check_paths(cfg)
    except (OSError, ConfigError) as exc:
        print(f"mafem: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](cfg)
    except (InvalidMeshError, OSError) as exc:
        print(f"mafem: input error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MAFEMError as exc:
        print(f"mafem: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
