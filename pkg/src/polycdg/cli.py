"""Command-line interface and the convergence-study harness.

Subcommands:

* ``polycdg run``       -- convergence study over a level range; writes a CSV
                           table (and a markdown mirror) with per-level errors,
                           rates, dimensions, CG iterations, and timings.
* ``polycdg mesh-info`` -- generate a mesh, validate it, print a summary,
                           optionally write the mesh file.
* ``polycdg verify``    -- fast self-checks of every module; prints one
                           PASS/FAIL line per check.

Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 I/O error
(verify uses 1 for failed checks).

Configuration files are flat ``key = value`` text ('#' comments allowed);
command-line flags override file values.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import analysis, mesh as meshmod, quadbasis, system, weakgrad
from .analysis import ErrorReport
from .weakgrad import BcMode

FAMILIES = {"tri": meshmod.gen_triangular, "poly": meshmod.gen_polygonal}

CSV_HEADER = "level,l2_error,l2_rate,energy_error,energy_rate,dim,cg_iters,seconds"


class ConfigError(ValueError):
    pass


# Manufactured test problem: -lap u = f on the unit square, u = 0 on the
# boundary, with the separable sine solution.
def exact_solution(pts: np.ndarray) -> np.ndarray:
    return np.sin(np.pi * pts[:, 0]) * np.sin(np.pi * pts[:, 1])


def exact_gradient(pts: np.ndarray) -> np.ndarray:
    sx, cx = np.sin(np.pi * pts[:, 0]), np.cos(np.pi * pts[:, 0])
    sy, cy = np.sin(np.pi * pts[:, 1]), np.cos(np.pi * pts[:, 1])
    return np.pi * np.column_stack([cx * sy, sx * cy])


def source_term(pts: np.ndarray) -> np.ndarray:
    return 2.0 * np.pi**2 * exact_solution(pts)


@dataclass
class StudyConfig:
    family: str = "tri"
    k: int = 1
    bc: str = "strong"
    levels: list[int] = field(default_factory=lambda: [1, 2, 3, 4])
    j: int | None = None  # None = per-cell default (k+1 triangles, k+2 polygons)
    tol: float = 1e-12
    maxit: int | None = None
    threads: int = 1  # accepted for compatibility; execution is serial
    seed: int = 0
    out: str | None = None
    dump_matrix: str | None = None
    timing: bool = True

    def validated(self) -> "StudyConfig":
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r} (expected tri or poly)")
        if not 1 <= self.k <= 8:
            raise ConfigError(f"k must be in [1, 8], got {self.k}")
        try:
            BcMode(self.bc)
        except ValueError:
            raise ConfigError(f"unknown bc {self.bc!r} (expected strong or weak)") from None
        if not self.levels or any(l < 1 for l in self.levels):
            raise ConfigError(f"bad level list {self.levels}")
        if sorted(self.levels) != self.levels:
            raise ConfigError("levels must be increasing")
        if self.j is not None and self.j < 0:
            raise ConfigError(f"j must be >= 0, got {self.j}")
        if not 0 < self.tol < 1:
            raise ConfigError(f"tol must be in (0, 1), got {self.tol}")
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        return self


@dataclass
class SolverFailure:
    level: int
    message: str
    residual_history: list[float]


@dataclass
class ConvergenceReport:
    config: StudyConfig
    reports: list[ErrorReport]
    seconds: list[float]
    iterations: list[int]
    failure: SolverFailure | None = None


def run_convergence(config: StudyConfig) -> ConvergenceReport:
    """Solve the manufactured problem on each level and collect errors.

    Levels run sequentially coarse to fine; a solver failure records the
    residual history and skips the remaining levels.
    """
    config = config.validated()
    gen = FAMILIES[config.family]
    bc = BcMode(config.bc)
    reports: list[ErrorReport] = []
    seconds: list[float] = []
    iterations: list[int] = []
    failure = None

    for level in config.levels:
        t0 = time.perf_counter()
        msh = gen(level)
        ops = weakgrad.build_all_weak_grads(msh, config.k, bc, j=config.j)
        sys_ = system.assemble(msh, config.k, bc, source_term, ops=ops)
        if config.dump_matrix:
            path = config.dump_matrix
            if len(config.levels) > 1:
                path = f"{path}.L{level}"
            _dump_matrix(sys_.matrix, path)
        try:
            sol = system.solve(sys_, tol=config.tol, maxit=config.maxit)
        except system.SolverError as exc:
            failure = SolverFailure(level, str(exc), getattr(exc, "residual_history", []))
            break
        coeffs = sol.cell_coeffs(msh.n_cells)
        l2 = analysis.l2_error(coeffs, exact_solution, msh, config.k)
        energy = analysis.energy_error(coeffs, exact_gradient, msh, config.k, bc, ops=ops)
        # Components of ||u_h - Q_0 u||_{1,h}, recorded as diagnostics.
        diff = coeffs - np.array(
            [quadbasis.project_scalar(exact_solution, msh, c, config.k) for c in msh.cells]
        )
        h1g, h1j = analysis.h1h_components(diff, msh, config.k)
        reports.append(
            ErrorReport(level, sys_.n_dofs, l2, energy, h1g, h1j)
        )
        iterations.append(sol.iterations)
        seconds.append(time.perf_counter() - t0)

    analysis.rates(reports)
    return ConvergenceReport(config, reports, seconds, iterations, failure)


def _dump_matrix(matrix, path: str) -> None:
    coo = matrix.tocoo()
    with open(path, "w") as fh:
        for i, j, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{i} {j} {v:.17g}\n")


def _fmt(x: float | None) -> str:
    return "" if x is None else f"{x:.17g}"


def emit_table(report: ConvergenceReport, fmt: str, path: str, include_timing: bool = True) -> None:
    """Write the study table; fmt is 'csv' or 'md'.

    The CSV column set is fixed; with include_timing=False the seconds cells
    are left empty so reruns of the same config produce byte-identical files.
    """
    cfg = report.config
    if fmt == "csv":
        lines = ["# polycdg convergence report"]
        for key in ("family", "k", "bc", "levels", "j", "tol", "seed", "threads"):
            val = getattr(cfg, key)
            if key == "levels":
                val = f"{val[0]}..{val[-1]}" if len(val) > 1 else str(val[0])
            lines.append(f"# {key} = {val}")
        lines.append(CSV_HEADER)
        for i, r in enumerate(report.reports):
            sec = _fmt(report.seconds[i]) if include_timing else ""
            lines.append(
                f"{r.level},{_fmt(r.l2_error)},{_fmt(r.l2_rate)},{_fmt(r.energy_error)},"
                f"{_fmt(r.energy_rate)},{r.n_dofs},{report.iterations[i]},{sec}"
            )
    elif fmt == "md":
        lines = [
            f"Convergence of the sine problem: family={cfg.family} k={cfg.k} bc={cfg.bc}",
            "",
            "| level | ||u_h - Q_0 u|| | rate | energy error | rate | dim | cg_iters | seconds |",
            "|------:|----------------:|-----:|-------------:|-----:|----:|---------:|--------:|",
        ]
        for i, r in enumerate(report.reports):
            l2r = "" if r.l2_rate is None else f"{r.l2_rate:.2f}"
            enr = "" if r.energy_rate is None else f"{r.energy_rate:.2f}"
            sec = f"{report.seconds[i]:.3f}" if include_timing else ""
            lines.append(
                f"| {r.level} | {r.l2_error:.4e} | {l2r} | {r.energy_error:.4e} | {enr} "
                f"| {r.n_dofs} | {report.iterations[i]} | {sec} |"
            )
    else:
        raise ConfigError(f"unknown table format {fmt!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def parse_table(path: str) -> list[dict]:
    """Re-read a CSV written by emit_table (used by round-trip checks)."""
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or line.startswith("level,"):
                continue
            parts = line.split(",")
            rows.append(
                {
                    "level": int(parts[0]),
                    "l2_error": float(parts[1]),
                    "l2_rate": float(parts[2]) if parts[2] else None,
                    "energy_error": float(parts[3]),
                    "energy_rate": float(parts[4]) if parts[4] else None,
                    "dim": int(parts[5]),
                    "cg_iters": int(parts[6]),
                    "seconds": float(parts[7]) if parts[7] else None,
                }
            )
    return rows


def dump_solution(solution: system.Solution, msh: meshmod.Mesh, k: int, path: str) -> None:
    """Write 'cell_id x y u_h' sampled at each cell's volume quadrature points."""
    if msh.n_cells == 0:
        raise ValueError("cannot dump a solution on an empty mesh")
    coeffs = solution.cell_coeffs(msh.n_cells)
    with open(path, "w") as fh:
        fh.write("cell_id x y u_h\n")
        for cell in msh.cells:
            rule = quadbasis.polygon_rule(msh, cell, 2 * k + 2)
            vals = quadbasis.MonomialBasis.for_cell(msh, cell, k).eval(rule.points) @ coeffs[cell.id]
            for p, v in zip(rule.points, vals):
                fh.write(f"{cell.id} {p[0]:.17g} {p[1]:.17g} {v:.17g}\n")


# ----------------------------------------------------------------- config --

_CONFIG_TYPES = {
    "family": str,
    "k": int,
    "bc": str,
    "levels": str,
    "j": int,
    "tol": float,
    "maxit": int,
    "threads": int,
    "seed": int,
    "out": str,
    "dump_matrix": str,
    "timing": str,
}


def parse_levels(text: str) -> list[int]:
    text = text.strip()
    try:
        if ".." in text:
            a, b = text.split("..")
            lo, hi = int(a), int(b)
            if hi < lo:
                raise ValueError
            return list(range(lo, hi + 1))
        return [int(text)]
    except ValueError:
        raise ConfigError(f"bad level range {text!r} (expected A..B or a single level)") from None


def load_config(path: str) -> dict:
    """Parse a flat 'key = value' config file into a dict of typed values."""
    out: dict = {}
    try:
        with open(path) as fh:
            raw = fh.read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for no, line in enumerate(raw, 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{no}: expected 'key = value'")
        key, _, value = stripped.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _CONFIG_TYPES:
            raise ConfigError(f"{path}:{no}: unknown key {key!r}")
        try:
            if key == "levels":
                out[key] = parse_levels(value)
            elif key == "timing":
                out[key] = value.lower() in ("1", "true", "yes", "on")
            else:
                out[key] = _CONFIG_TYPES[key](value)
        except ConfigError:
            raise
        except ValueError:
            raise ConfigError(f"{path}:{no}: bad value for {key}: {value!r}") from None
    return out


def _build_config(args: argparse.Namespace) -> StudyConfig:
    values: dict = {}
    if args.config:
        values.update(load_config(args.config))
    # Flags win over file values.
    for key in ("family", "k", "bc", "j", "tol", "maxit", "threads", "seed", "out",
                "dump_matrix"):
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    if args.levels is not None:
        values["levels"] = parse_levels(args.levels)
    if args.no_timing:
        values["timing"] = False
    return StudyConfig(**values).validated()


# -------------------------------------------------------------- commands --

def _cmd_run(args: argparse.Namespace) -> int:
    config = _build_config(args)
    report = run_convergence(config)

    include_timing = config.timing
    if config.out:
        try:
            os.makedirs(config.out, exist_ok=True)
            emit_table(report, "csv", os.path.join(config.out, "report.csv"), include_timing)
            emit_table(report, "md", os.path.join(config.out, "report.md"), include_timing)
        except OSError as exc:
            print(f"error: cannot write output: {exc}", file=sys.stderr)
            return 4

    for i, r in enumerate(report.reports):
        l2r = "  --" if r.l2_rate is None else f"{r.l2_rate:5.2f}"
        enr = "  --" if r.energy_rate is None else f"{r.energy_rate:5.2f}"
        print(
            f"level {r.level}: ||u_h-Q_0u|| = {r.l2_error:.4e} ({l2r})   "
            f"|||u-u_h||| = {r.energy_error:.4e} ({enr})   dim {r.n_dofs}   "
            f"cg {report.iterations[i]}"
        )
    if report.failure:
        print(
            f"error: solver failed at level {report.failure.level}: {report.failure.message}",
            file=sys.stderr,
        )
        return 3
    return 0


def _cmd_mesh_info(args: argparse.Namespace) -> int:
    if args.family not in FAMILIES:
        print(f"error: unknown family {args.family!r}", file=sys.stderr)
        return 2
    try:
        msh = FAMILIES[args.family](args.level)
    except meshmod.MeshError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    violations = meshmod.validate(msh)
    shapes: dict[int, int] = {}
    for c in msh.cells:
        shapes[c.n_vertices] = shapes.get(c.n_vertices, 0) + 1
    print(f"family    {msh.family}")
    print(f"level     {msh.level}")
    print(f"vertices  {msh.n_vertices}")
    print(f"edges     {msh.n_edges} ({sum(1 for e in msh.edges if e.boundary)} boundary)")
    print(f"cells     {msh.n_cells} ({', '.join(f'{n}-gon: {c}' for n, c in sorted(shapes.items()))})")
    print(f"h_max     {msh.h_max():.17g}")
    print(f"area      {sum(c.area for c in msh.cells):.17g}")
    print(f"valid     {'yes' if not violations else 'NO: ' + '; '.join(violations[:3])}")
    if args.out:
        try:
            meshmod.write_mesh(msh, args.out)
        except OSError as exc:
            print(f"error: cannot write {args.out}: {exc}", file=sys.stderr)
            return 4
    return 0


def _verify_checks(seed: int):
    """Yield (name, callable) pairs; each callable raises on failure."""

    def meshes_ok():
        for gen, levels in ((meshmod.gen_triangular, (1, 2, 3)), (meshmod.gen_polygonal, (1, 2))):
            for level in levels:
                msh = gen(level)
                bad = meshmod.validate(msh)
                assert not bad, f"{msh.family} level {level}: {bad[:2]}"
        assert meshmod.gen_triangular(3).n_cells == 2 * 4**2
        assert meshmod.gen_polygonal(1).n_cells == 5

    def quadrature_ok():
        rule = quadbasis.triangle_rule(8)
        for a in range(4):
            for b in range(4 - a):
                exact = (
                    math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)
                )
                got = float(rule.weights @ (rule.points[:, 0] ** a * rule.points[:, 1] ** b))
                assert abs(got - exact) < 1e-14, (a, b, got, exact)
        msh = meshmod.gen_polygonal(1)
        area = sum(
            float(np.sum(quadbasis.polygon_rule(msh, c, 2).weights)) for c in msh.cells
        )
        assert abs(area - 1.0) < 1e-13, area

    def projection_ok():
        msh = meshmod.gen_triangular(2)
        cell = msh.cells[3]
        coeffs = quadbasis.project_scalar(lambda p: p[:, 0] ** 2, msh, cell, 2, order=6)
        again = quadbasis.project_scalar(
            lambda p: quadbasis.MonomialBasis.for_cell(msh, cell, 2).eval(p) @ coeffs,
            msh, cell, 2, order=6,
        )
        assert np.max(np.abs(coeffs - again)) < 1e-13

    def weak_gradient_ok():
        rng = np.random.default_rng(seed)
        for gen, level in ((meshmod.gen_triangular, 2), (meshmod.gen_polygonal, 1)):
            msh = gen(level)
            for bc in (BcMode.STRONG, BcMode.WEAK):
                coeffs = rng.standard_normal((msh.n_cells, quadbasis.dim_poly(2)))
                for cell in (msh.cells[0], msh.cells[-1]):
                    res = weakgrad.check_ibp_identity(cell, msh, 2, bc, coeffs)
                    assert res < 1e-11, (msh.family, bc, res)

    def system_ok():
        msh = meshmod.gen_triangular(2)
        for bc in (BcMode.STRONG, BcMode.WEAK):
            sys_ = system.assemble(msh, 1, bc, source_term)
            assert (sys_.matrix - sys_.matrix.T).nnz == 0
            sol = system.solve(sys_, tol=1e-12)
            assert sol.residual <= 1e-12
            if bc is BcMode.STRONG:
                sup = system.boundary_trace_sup(msh, 1, sol.cell_coeffs(msh.n_cells))
                assert sup < 1e-10 * max(1.0, float(np.max(np.abs(sol.values))))

    def probe_ok():
        for level in (2, 3):
            msh = meshmod.gen_triangular(level)
            probe = analysis.norm_equivalence_probe(msh, 1, BcMode.WEAK, 20, seed)
            # Ratios land around 2-3 for k=1 on triangles; the bounds only
            # catch a collapse (loss of the lower constant) or a blow-up.
            assert 1e-2 < probe.min_ratio <= probe.max_ratio < 10, probe

    return [
        ("mesh generation + validation", meshes_ok),
        ("quadrature exactness", quadrature_ok),
        ("projection idempotency", projection_ok),
        ("weak-gradient identity", weak_gradient_ok),
        ("assembly symmetry + solve + traces", system_ok),
        ("norm-equivalence probe", probe_ok),
    ]


def _cmd_verify(args: argparse.Namespace) -> int:
    failed = 0
    for name, check in _verify_checks(args.seed):
        try:
            check()
        except Exception as exc:  # noqa: BLE001 - report any failure uniformly
            failed += 1
            print(f"FAIL {name}: {exc}")
        else:
            print(f"PASS {name}")
    return 0 if failed == 0 else 1


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="polycdg",
        description="Stabilizer-free conforming DG solver for the Poisson problem",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="convergence study on the manufactured sine problem")
    p_run.add_argument("--config", help="flat key = value config file")
    p_run.add_argument("--family", choices=("tri", "poly"))
    p_run.add_argument("--k", type=int, help="polynomial degree of the trial space")
    p_run.add_argument("--bc", choices=("strong", "weak"))
    p_run.add_argument("--levels", help="level range A..B (or a single level)")
    p_run.add_argument("--j", type=int, help="weak-gradient degree override")
    p_run.add_argument("--tol", type=float, help="CG relative-residual tolerance")
    p_run.add_argument("--maxit", type=int, help="CG iteration cap")
    p_run.add_argument("--threads", type=int, help="accepted for compatibility (serial run)")
    p_run.add_argument("--seed", type=int, help="seed echoed into outputs")
    p_run.add_argument("--out", help="output directory for report.csv / report.md")
    p_run.add_argument("--dump-matrix", dest="dump_matrix", help="write matrix triplets to FILE")
    p_run.add_argument("--no-timing", action="store_true", help="blank the seconds column")
    p_run.set_defaults(func=_cmd_run)

    p_info = sub.add_parser("mesh-info", help="generate and describe a mesh")
    p_info.add_argument("--family", required=True)
    p_info.add_argument("--level", type=int, required=True)
    p_info.add_argument("--out", help="write the mesh file here")
    p_info.set_defaults(func=_cmd_mesh_info)

    p_verify = sub.add_parser("verify", help="run fast self-checks of every module")
    p_verify.add_argument("--seed", type=int, default=0)
    p_verify.set_defaults(func=_cmd_verify)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except system.SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
