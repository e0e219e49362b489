"""Command-line front end: single solves, studies and the dense oracle.

Exit codes: 0 success, 1 configuration error, 2 a row did not converge.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import oracle, study
from .edgefem import MaterialParams, assemble, export_matrix_market
from .errors import ConfigurationError, NoConvergence, StudyRowError
from .hierarchy import build_hierarchy

EXIT_OK, EXIT_CONFIG, EXIT_NOCONV = 0, 1, 2

# flags taking several whitespace-separated values
MULTI = {"lengths", "coarse_resolution", "refinement_range", "scalability_n_list"}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="config file with 'key = value' lines; flags override it")
    p.add_argument("--format", choices=("csv", "table"), default="csv", help="output format (default csv)")
    for key, (_, help_text) in study.PARSERS.items():
        kwargs = {"nargs": "+"} if key in MULTI else {}
        p.add_argument("--" + key.replace("_", "-"), dest=key, metavar=key.upper(), help=help_text, **kwargs)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="maxwell-phjd",
        description="Principal Maxwell cavity eigenvalue by two-level preconditioned Helmholtz-Jacobi-Davidson.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="one solve at refinement r_max; prints the iteration history")
    _add_config_flags(p_solve)

    p_study = sub.add_parser("study", help="convergence or scalability study")
    kinds = p_study.add_subparsers(dest="study", required=True)
    _add_config_flags(kinds.add_parser("conv", help="one row per refinement in refinement_range"))
    _add_config_flags(kinds.add_parser("scale", help="fixed fine mesh, one row per scalability_n_list entry"))

    p_oracle = sub.add_parser("oracle", help="dense reference spectrum of the fine pencil at r_max")
    _add_config_flags(p_oracle)
    p_oracle.add_argument("--export-mm", type=Path, metavar="DIR", help="write K.mtx, M.mtx, G.mtx to DIR")
    p_oracle.add_argument("--count", type=int, default=6, help="eigenvalues to print above the kernel")
    return parser


def load_config(args: argparse.Namespace) -> study.StudyConfig:
    items = study.parse_items(args.config.read_text()) if args.config else {}
    for key in study.PARSERS:
        value = getattr(args, key, None)
        if value is not None:
            items[key] = " ".join(value) if isinstance(value, list) else value
    return study.config_from_items(items)


def _write(text: str, cfg: study.StudyConfig) -> None:
    if cfg.output_path:
        Path(cfg.output_path).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_solve(cfg: study.StudyConfig) -> int:
    r = cfg.refinement_range[1]
    report, n, h = study.solve_level(cfg, cfg.coarse_resolution, r)
    lines = [f"# {k} = {v}" for k, v in study.provenance(cfg, "solve")]
    lines.append(f"# N = {n}, h = {h:.15g}, dof = {report.dof}, lambda_coarse = {report.lambda_coarse:.15g}")
    lines.append("k,lambda,dlambda,resnorm,divergence")
    for e in report.history:
        lines.append(f"{e.k},{e.lam:.15g},{e.dlambda:.3e},{e.resnorm:.3e},{e.divergence:.3e}")
    lines.append(f"# converged = {report.converged}, iterations = {report.iterations}, lambda = {report.lam:.15g}")
    lines += [f"# warning: {w}" for w in report.warnings]
    _write("\n".join(lines) + "\n", cfg)
    return EXIT_OK if report.converged else EXIT_NOCONV


def cmd_oracle(cfg: study.StudyConfig, export_dir: Path | None, count: int) -> int:
    hier = build_hierarchy(cfg.spec(), cfg.coarse_resolution, cfg.refinement_range[1])
    ops = assemble(hier.fine, MaterialParams(cfg.eps_r, cfg.mu_r), cfg.threads)
    lines = [f"# {k} = {v}" for k, v in study.provenance(cfg, "oracle")]
    if export_dir is not None:
        for path in export_matrix_market(ops, export_dir):
            lines.append(f"# wrote {path}")
    ref = oracle.dense_reference(ops, cfg.zero_mode_threshold)
    lines.append(f"dof = {ops.n_dof}")
    lines.append(f"interior_nodes = {ops.n_interior_nodes}")
    lines.append(f"zero_mode_count = {ref.zero_mode_count}")
    lines.append(f"lambda1h = {ref.lambda1h:.15g}")
    above = ref.eigenvalues[ref.zero_mode_count:ref.zero_mode_count + count]
    lines.append("eigenvalues = " + " ".join(f"{v:.15g}" for v in above))
    _write("\n".join(lines) + "\n", cfg)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        if args.command == "solve":
            return cmd_solve(cfg)
        if args.command == "oracle":
            return cmd_oracle(cfg, args.export_mm, args.count)
        runner = study.run_convergence_study if args.study == "conv" else study.run_scalability_study
        report = runner(cfg)
        _write(study.emit(report, args.format), cfg)
        return EXIT_OK if report.converged else EXIT_NOCONV
    except (ConfigurationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StudyRowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOCONV if isinstance(exc.__cause__, NoConvergence) else EXIT_CONFIG
    except NoConvergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOCONV


if __name__ == "__main__":
    sys.exit(main())
