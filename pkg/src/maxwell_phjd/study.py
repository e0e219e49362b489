"""Study configuration, convergence/scalability runners and report output.

Config text is one ``key = value`` per line with ``#`` comments. Vector values
are whitespace- or comma-separated; a resolution may also be written ``8x4``.
``scalability_n_list`` is a list of coarse resolutions, e.g. ``2x2 4x4 8x8``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from importlib.metadata import PackageNotFoundError, version

from . import oracle, solver
from .edgefem import MaterialParams, assemble
from .errors import (ConfigTypeError, ConfigurationError, MissingRequired, NoConvergence,
                     SingularMatrix, StudyRowError, UnknownKey)
from .hierarchy import build_hierarchy, build_subdomain_cover
from .mesh import KINDS, DomainSpec

CSV_COLUMNS = ("h", "dof", "it", "dlambda", "resnorm", "lambda", "con_ord")
SCALE_COLUMNS = ("n",) + CSV_COLUMNS

# literature value for the L-shape; no closed form exists
LSHAPE_LAMBDA = 1.47562182
REQUIRED = ("domain", "coarse_resolution")


def analytic_lambda(spec: DomainSpec) -> float:
    """Smallest nonzero Maxwell eigenvalue of a rectangle or box cavity.

    2D: (pi / L_max)^2. 3D: at most one mode index may vanish, so the two
    longest sides carry index 1.
    """
    if spec.kind == "lshape2d":
        return LSHAPE_LAMBDA
    inv = sorted((math.pi / L) ** 2 for L in spec.lengths)
    return inv[0] if spec.dim == 2 else inv[0] + inv[1]


def _parse_float(key, text):
    try:
        return float(text)
    except ValueError:
        raise ConfigTypeError(key, "a real number", text) from None


def _parse_int(key, text):
    try:
        return int(text)
    except ValueError:
        raise ConfigTypeError(key, "an integer", text) from None


def _split(text):
    return text.replace(",", " ").split()


def _parse_resolution(key, text):
    try:
        return tuple(int(v) for v in text.lower().split("x"))
    except ValueError:
        raise ConfigTypeError(key, "a resolution like 8 or 8x4", text) from None


def _parse_ints(key, text):
    if "x" in text.lower():
        return _parse_resolution(key, text.replace(" ", ""))
    try:
        return tuple(int(v) for v in _split(text))
    except ValueError:
        raise ConfigTypeError(key, "a list of integers", text) from None


def _parse_floats(key, text):
    try:
        return tuple(float(v) for v in _split(text))
    except ValueError:
        raise ConfigTypeError(key, "a list of real numbers", text) from None


def _parse_pair(key, text):
    vals = _parse_ints(key, text)
    if len(vals) == 1:
        vals = vals * 2
    if len(vals) != 2:
        raise ConfigTypeError(key, "two integers r_min r_max", text)
    return vals


def _parse_optional(parse):
    def inner(key, text):
        return None if text.lower() in ("", "none") else parse(key, text)
    return inner


def _parse_res_list(key, text):
    return tuple(_parse_resolution(key, item) for item in _split(text))


def _parse_str(key, text):
    return text


PARSERS = {
    "domain": (_parse_str, "one of " + ", ".join(KINDS)),
    "lengths": (_parse_floats, "domain side lengths (default per domain)"),
    "coarse_resolution": (_parse_ints, "coarse cells per axis, e.g. 8 4 (L-shape: cells per unit edge)"),
    "refinement_range": (_parse_pair, "r_min r_max, fine = coarse * 2^r (default 2 2)"),
    "overlap_ratio": (_parse_float, "delta/H (default 0.25)"),
    "method": (_parse_str, "phjd or plain_jd (default phjd)"),
    "tol_resnorm": (_parse_optional(_parse_float), "residual b-norm tolerance (3D default 1e-5)"),
    "tol_dlambda": (_parse_optional(_parse_float), "eigenvalue-change tolerance (2D default 1e-8)"),
    "max_iterations": (_parse_int, "iterate cap (default 50)"),
    "helmholtz_rel_tol": (_parse_float, "CG tolerance of the Helmholtz projection (default 1e-12)"),
    "mass_solve_rel_tol": (_parse_float, "CG tolerance of the mass solve (default 1e-12)"),
    "zero_mode_threshold": (_parse_float, "coarse kernel threshold, relative (default 1e-8)"),
    "max_basis": (_parse_int, "search-space cap (default 30)"),
    "eps_r": (_parse_float, "relative permittivity (default 1)"),
    "mu_r": (_parse_float, "relative permeability (default 1)"),
    "reference_lambda": (_parse_optional(_parse_float), "reference value for errors (default per domain)"),
    "scalability_n_list": (_parse_res_list, "coarse resolutions for the scale study, e.g. 2x2 4x4"),
    "threads": (_parse_int, "worker threads (default 1)"),
    "output_path": (_parse_optional(_parse_str), "write the report here instead of stdout"),
}


@dataclass(frozen=True)
class StudyConfig:
    domain: str
    coarse_resolution: tuple[int, ...]
    lengths: tuple[float, ...] = ()
    refinement_range: tuple[int, int] = (2, 2)
    overlap_ratio: float = 0.25
    method: str = "phjd"
    tol_resnorm: float | None = None
    tol_dlambda: float | None = None
    max_iterations: int = 50
    helmholtz_rel_tol: float = 1e-12
    mass_solve_rel_tol: float = 1e-12
    zero_mode_threshold: float = 1e-8
    max_basis: int = 30
    eps_r: float = 1.0
    mu_r: float = 1.0
    reference_lambda: float | None = None
    scalability_n_list: tuple[tuple[int, ...], ...] = ()
    threads: int = 1
    output_path: str | None = None

    def __post_init__(self):
        r_min, r_max = self.refinement_range
        if not 1 <= r_min <= r_max:
            raise ConfigurationError(f"refinement_range needs 1 <= r_min <= r_max, got {self.refinement_range}")
        if self.threads < 1:
            raise ConfigurationError("threads must be >= 1")
        # build the pieces once so bad values fail at parse time
        self.spec()
        self.solver_config()
        MaterialParams(self.eps_r, self.mu_r)

    def spec(self) -> DomainSpec:
        return DomainSpec(self.domain, self.lengths)

    def solver_config(self) -> solver.SolverConfig:
        return solver.SolverConfig(
            method=self.method, tol_resnorm=self.tol_resnorm, tol_dlambda=self.tol_dlambda,
            max_iterations=self.max_iterations, overlap_ratio=self.overlap_ratio,
            helmholtz_rel_tol=self.helmholtz_rel_tol, mass_solve_rel_tol=self.mass_solve_rel_tol,
            zero_mode_threshold=self.zero_mode_threshold, max_basis=self.max_basis, threads=self.threads,
        )

    def reference(self) -> float:
        if self.reference_lambda is not None:
            return self.reference_lambda
        # material constants scale the spectrum by 1/(eps_r mu_r)
        return analytic_lambda(self.spec()) / (self.eps_r * self.mu_r)


def parse_items(text: str) -> dict[str, str]:
    """Raw ``key -> value text`` pairs; later lines win."""
    items = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got {raw!r}")
        if key not in PARSERS:
            raise UnknownKey(key, lineno)
        items[key] = value.strip()
    return items


def config_from_items(items: dict[str, str]) -> StudyConfig:
    for key in items:
        if key not in PARSERS:
            raise UnknownKey(key)
    missing = [k for k in REQUIRED if k not in items]
    if missing:
        raise MissingRequired(missing)
    values = {key: PARSERS[key][0](key, text) for key, text in items.items()}
    return StudyConfig(**values)


def parse_config(text: str) -> StudyConfig:
    return config_from_items(parse_items(text))


def format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return " ".join("x".join(str(v) for v in res) for res in value)
        return " ".join(format_value(v) for v in value)
    return str(value)


def provenance(cfg: StudyConfig, study: str) -> list[tuple[str, str]]:
    """Config echo for report headers; worker count is left out so output bytes do not depend on it."""
    try:
        pkg = version("artifact")
    except PackageNotFoundError:
        pkg = "unknown"
    meta = [("study", study), ("package", f"maxwell_phjd {pkg}")]
    for f in fields(cfg):
        if f.name in ("threads", "output_path"):
            continue
        meta.append((f.name, format_value(getattr(cfg, f.name))))
    meta.append(("reference_lambda_used", repr(cfg.reference())))
    return meta


@dataclass(frozen=True)
class StudyRow:
    h: float
    dof: int
    it: int
    dlambda: float
    resnorm: float
    lam: float
    con_ord: float | None = None
    n: int | None = None
    converged: bool = True
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class StudyReport:
    kind: str = "conv"
    rows: tuple[StudyRow, ...] = ()
    metadata: tuple[tuple[str, str], ...] = ()

    @property
    def converged(self) -> bool:
        return all(r.converged for r in self.rows)


def solve_level(cfg: StudyConfig, coarse_resolution, refinements: int) -> tuple[solver.SolveReport, int, float]:
    """One PHJD (or plain JD) solve; returns (report, N, h_label)."""
    spec = cfg.spec()
    mat = MaterialParams(cfg.eps_r, cfg.mu_r)
    hier = build_hierarchy(spec, coarse_resolution, refinements)
    cover = build_subdomain_cover(hier, cfg.overlap_ratio)
    ops_fine = assemble(hier.fine, mat, cfg.threads)
    ops_coarse = assemble(hier.coarse, mat, cfg.threads)
    scfg = cfg.solver_config()
    if cfg.method == "plain_jd":
        _, x1, lam_h = solver.initial_guess(hier, ops_fine, ops_coarse, scfg.resolved(spec.dim))
        report = solver.run_plain_jd(scfg, ops_fine, x0=x1, dim=spec.dim)
        report.lambda_coarse = lam_h
    else:
        report = solver.run(scfg, hier, cover, ops_fine, ops_coarse)
    return report, cover.N, hier.fine.h_max


def _row(report: solver.SolveReport, h: float, n: int | None = None) -> StudyRow:
    return StudyRow(
        h=h, dof=report.dof, it=report.iterations, dlambda=report.final_dlambda,
        resnorm=report.final_resnorm, lam=report.lam, n=n, converged=report.converged,
        warnings=tuple(report.warnings),
    )


def _guarded(label: str, fn, *args):
    try:
        return fn(*args)
    except (SingularMatrix, NoConvergence, ArithmeticError) as exc:
        raise StudyRowError(label, exc) from exc


def run_convergence_study(cfg: StudyConfig, progress=None) -> StudyReport:
    """One row per refinement level; con_ord from errors against the reference value."""
    r_min, r_max = cfg.refinement_range
    rows = []
    for r in range(r_min, r_max + 1):
        report, n, h = _guarded(f"row r={r}", solve_level, cfg, cfg.coarse_resolution, r)
        rows.append(_row(report, h))
        if progress is not None:
            progress(rows[-1])
    ref = cfg.reference()
    errors = [abs(row.lam - ref) for row in rows]
    if len(rows) > 1:
        orders = [None] + oracle.convergence_order(errors)
        rows = [replace(row, con_ord=o) for row, o in zip(rows, orders)]
    return StudyReport("conv", tuple(rows), tuple(provenance(cfg, "conv")))


def _axis_resolution(spec: DomainSpec, res) -> tuple[int, ...]:
    res = tuple(int(v) for v in res)
    if len(res) == 1:
        res = res * (1 if spec.kind == "lshape2d" else spec.dim)
    return res


def scalability_levels(cfg: StudyConfig) -> list[tuple[tuple[int, ...], int]]:
    """(coarse resolution, r) per scale row at the fine grid coarse_resolution * 2^r_max."""
    if not cfg.scalability_n_list:
        raise ConfigurationError("scale study needs scalability_n_list")
    spec = cfg.spec()
    fine = tuple(n * 2 ** cfg.refinement_range[1] for n in _axis_resolution(spec, cfg.coarse_resolution))
    levels = []
    for res in cfg.scalability_n_list:
        res = _axis_resolution(spec, res)
        if len(res) != len(fine):
            raise ConfigurationError(f"scale entry {res} does not match the domain dimension")
        ratios = {f // c if c > 0 and f % c == 0 else 0 for f, c in zip(fine, res)}
        r = math.log2(ratios.pop()) if len(ratios) == 1 and 0 not in ratios else -1
        if r < 1 or r != int(r):
            raise ConfigurationError(f"coarse resolution {res} is not fine grid {fine} / 2^r with r >= 1")
        levels.append((res, int(r)))
    return levels


def run_scalability_study(cfg: StudyConfig, progress=None) -> StudyReport:
    """Fixed fine mesh, coarse grid (hence N) varied; iterations are the metric."""
    rows = []
    for res, r in scalability_levels(cfg):
        label = f"row {'x'.join(map(str, res))}"
        report, n, h = _guarded(label, solve_level, cfg, res, r)
        rows.append(_row(report, h, n))
        if progress is not None:
            progress(rows[-1])
    return StudyReport("scale", tuple(rows), tuple(provenance(cfg, "scale")))


def _fmt_row(row: StudyRow, first: bool, with_n: bool) -> list[str]:
    def sci(v):
        return "nan" if v is None or math.isnan(v) else f"{v:.3e}"

    if row.con_ord is None:
        order = ""
    else:
        order = "nan" if math.isnan(row.con_ord) else f"{row.con_ord:.4f}"
    cells = [f"{row.h:.15g}", str(row.dof), str(row.it), sci(row.dlambda), sci(row.resnorm),
             f"{row.lam:.15g}", "" if first else order]
    return ([str(row.n)] if with_n else []) + cells


def emit(report: StudyReport, fmt: str = "csv") -> str:
    """CSV (or an aligned table) with the config echoed as ``#`` comment lines."""
    if fmt not in ("csv", "table"):
        raise ValueError(f"format must be csv or table, got {fmt!r}")
    with_n = report.kind == "scale"
    header = list(SCALE_COLUMNS if with_n else CSV_COLUMNS)
    body = [_fmt_row(row, i == 0, with_n) for i, row in enumerate(report.rows)]
    lines = [f"# {k} = {v}" for k, v in report.metadata]
    if fmt == "csv":
        lines += [",".join(header)] + [",".join(cells) for cells in body]
    else:
        widths = [max(len(c) for c in col) for col in zip(header, *body)]
        lines += ["  ".join(c.rjust(w) for c, w in zip(cells, widths)) for cells in [header] + body]
    for row in report.rows:
        tag = f"n={row.n}" if with_n else f"dof={row.dof}"
        if not row.converged:
            lines.append(f"# not converged: {tag}")
        lines += [f"# warning {tag}: {w}" for w in row.warnings]
    return "\n".join(lines) + "\n"


def parse_csv(text: str) -> list[dict]:
    """Rows of an emitted CSV as dicts of numbers; blank con_ord gives None."""
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    if not lines:
        return []
    header = lines[0].split(",")
    out = []
    for ln in lines[1:]:
        rec = {}
        for key, val in zip(header, ln.split(",")):
            if key in ("n", "dof", "it"):
                rec[key] = int(val)
            else:
                rec[key] = None if val == "" else float(val)
        out.append(rec)
    return out
