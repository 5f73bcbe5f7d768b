"""``otgeo`` command line.

Subcommands: solve, exact, divergence, geometry, gaussian, barycenter,
boundary, sweep, validate.  Exit codes: 0 ok, 2 validation failure (bad
input or a failed check), 3 non-convergence, 4 I/O or parse error.
``OTGEO_THREADS`` caps how many sweep points are solved concurrently.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__
from .apps import (
    BarycenterDirection,
    BarycenterProblem,
    BoundaryOrientation,
    boundary_difference,
    boundary_on_segment,
    classifier_boundary_scan,
    lambda_barycenter,
)
from .divergence import (
    ReferenceRule,
    ScalingFactorRule,
    bregman_like_divergence,
    lambda_divergence,
)
from .errors import (
    DimensionMismatch,
    InvalidProbability,
    NonConvergence,
    NonPositiveVariance,
    OTGeoError,
    ParseError,
    SupportViolation,
)
from .gaussian import (
    Gaussian1D,
    gaussian_cuturi,
    gaussian_divergence_limit,
    gaussian_lambda_divergence,
    gaussian_plan,
)
from .geometry import (
    convexity_gap,
    dual_solve,
    fisher_info_theta,
    fit_proportionality,
    potentials_from_scaling,
    psi_hessian_fd,
    theta_factor,
)
from .io import (
    Instance,
    dumps_json,
    format_csv,
    load_instance,
    load_matrix,
    load_points,
    parse_pair,
    parse_vector,
    validate_distribution,
)
from .oracle import discrete_metric, exact_wasserstein
from .simplex import Tolerance, kl_divergence
from .sinkhorn import Gauge, cuturi_value, marginal_residual, sinkhorn_solve

EXIT_OK, EXIT_VALIDATION, EXIT_NONCONVERGENCE, EXIT_IO = 0, 2, 3, 4

QUANTITIES = ("C_lambda", "D_lambda", "KL", "C_W", "psi", "legendre_residual")


@dataclass(frozen=True)
class SweepSpec:
    """``count`` values of ``lam`` from ``lo`` to ``hi``, linearly or log-spaced."""

    lo: float
    hi: float
    count: int
    scale: str = "log"

    def __post_init__(self):
        if self.scale not in ("linear", "log"):
            raise ValueError(f"scale must be 'linear' or 'log', got {self.scale!r}")
        if not self.lo < self.hi:
            raise ValueError(f"sweep needs lo < hi, got {self.lo!r}:{self.hi!r}")
        if self.count < 2:
            raise ValueError(f"sweep needs at least 2 points, got {self.count}")
        if self.scale == "log" and self.lo <= 0:
            raise ValueError("a log sweep needs lo > 0")

    @classmethod
    def parse(cls, text: str) -> SweepSpec:
        """``"lo:hi:logN"`` (log-spaced) or ``"lo:hi:N"`` (linear)."""
        parts = text.split(":")
        if len(parts) != 3:
            raise ParseError(f"sweep must look like 'lo:hi:logN' or 'lo:hi:N', got {text!r}")
        lo, hi, n = parts
        scale = "log" if n.startswith("log") else "linear"
        try:
            return cls(float(lo), float(hi), int(n[3:] if scale == "log" else n), scale)
        except ValueError as exc:
            raise ParseError(f"bad sweep {text!r}: {exc}") from None

    def values(self) -> np.ndarray:
        if self.scale == "log":
            return np.geomspace(self.lo, self.hi, self.count)
        return np.linspace(self.lo, self.hi, self.count)


def thread_cap() -> int:
    raw = os.environ.get("OTGEO_THREADS")
    if raw is None or raw == "":
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise InvalidProbability(f"must be a positive integer, got {raw!r}", "OTGEO_THREADS") from None
    if n < 1:
        raise InvalidProbability(f"must be a positive integer, got {raw!r}", "OTGEO_THREADS")
    return n


def _nan_row(lam, quantities):
    return {"lambda": lam, **{k: math.nan for k in quantities}}


def run_sweep(inst: Instance, sweep: SweepSpec | Sequence[float], quantities=("C_lambda", "D_lambda", "KL"),
              tol: Tolerance | None = None,
              ref: ReferenceRule | str = ReferenceRule.SOURCE_P,
              scale: ScalingFactorRule | str = ScalingFactorRule.LAMBDA_OVER_ONE_PLUS_LAMBDA,
              threads: int | None = None) -> list[dict[str, Any]]:
    """One row per ``lam``, in ascending sweep order.

    ``KL`` and ``C_W`` do not depend on ``lam`` and are computed once.
    A point whose solve fails keeps its row, with ``NaN`` values and an
    ``error`` entry naming the failing ``lam``.
    """
    quantities = list(quantities)
    unknown = set(quantities) - set(QUANTITIES)
    if unknown:
        raise ValueError(f"unknown quantities {sorted(unknown)}; choose from {QUANTITIES}")
    lams = sweep.values() if isinstance(sweep, SweepSpec) else np.asarray(sweep, dtype=float)
    square = inst.M.shape[0] == inst.M.shape[1]
    const: dict[str, float] = {}
    if "KL" in quantities:
        try:
            const["KL"] = kl_divergence(inst.p, inst.q) if square else math.nan
        except SupportViolation:
            const["KL"] = math.inf
    if "C_W" in quantities:
        const["C_W"] = exact_wasserstein(inst.M, inst.p, inst.q).cost

    def point(lam: float) -> dict[str, Any]:
        row: dict[str, Any] = {"lambda": float(lam)}
        try:
            sol = dual_solve(inst.M, inst.p, inst.q, lam, tol)
            for k in quantities:
                if k == "C_lambda":
                    row[k] = sol.cuturi
                elif k == "psi":
                    row[k] = sol.potentials.psi
                elif k == "legendre_residual":
                    pot = sol.potentials
                    row[k] = abs(pot.psi + sol.cuturi - pot.alpha @ inst.p - pot.beta @ inst.q)
                elif k == "D_lambda":
                    row[k] = (lambda_divergence(inst.M, inst.p, inst.q, lam, ref, scale, tol)
                              if square else math.nan)
                else:
                    row[k] = const[k]
        except (OTGeoError, ValueError) as exc:
            row = _nan_row(float(lam), quantities)
            row["error"] = f"lambda={float(lam)!r}: {exc}"
        return row

    workers = max(1, min(threads or thread_cap(), len(lams)))
    if workers == 1:
        return [point(l) for l in lams]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(point, lams))          # map keeps submission order


def _check(name, value, threshold, passed=None, **extra):
    ok = bool(value <= threshold) if passed is None else bool(passed)
    return {"check": name, "value": value, "threshold": threshold, "passed": ok, **extra}


def _failed(name, threshold, exc):
    return {"check": name, "value": math.nan, "threshold": threshold, "passed": False, "error": str(exc)}


def check_marginals(inst: Instance, lam: float, tol: Tolerance) -> dict:
    try:
        plan, _ = sinkhorn_solve(inst.M, inst.p, inst.q, lam, tol)
        res = marginal_residual(plan.entries, inst.p, inst.q)
    except NonConvergence as exc:
        res = exc.residual
    return _check("marginal_residual", res, tol.marginal_tol)


def check_legendre(inst: Instance, lam: float, tol: Tolerance, threshold: float = 1e-8) -> dict:
    try:
        sol = dual_solve(inst.M, inst.p, inst.q, lam, tol)
    except (OTGeoError, ValueError) as exc:
        return _failed("legendre_residual", threshold, exc)
    pot = sol.potentials
    res = abs(pot.psi + sol.cuturi - pot.alpha @ inst.p - pot.beta @ inst.q)
    return _check("legendre_residual", res, threshold)


def check_fisher(inst: Instance, lam: float, tol: Tolerance, threshold: float = 1e-4) -> dict:
    try:
        sol = dual_solve(inst.M, inst.p, inst.q, lam, tol)
        H = psi_hessian_fd(inst.M, sol.potentials)
        F = fisher_info_theta(sol.plan)
        c, err = fit_proportionality(H, F)
        if err > threshold:
            H = psi_hessian_fd(inst.M, sol.potentials, richardson=True)
            c, err = fit_proportionality(H, F)
    except (OTGeoError, ValueError, np.linalg.LinAlgError) as exc:
        return _failed("fisher_fd_agreement", threshold, exc)
    return _check("fisher_fd_agreement", err, threshold, fitted_constant=c,
                  expected_constant=theta_factor(lam))


def check_theorem6(inst: Instance, lam: float, tol: Tolerance, threshold: float = 1e-6) -> dict:
    if inst.M.shape[0] != inst.M.shape[1]:
        return {"check": "divergence_route_agreement", "value": math.nan, "threshold": threshold,
                "passed": True, "skipped": "M is not square"}
    if np.any(inst.p <= 0) or np.any(inst.q <= 0):
        return {"check": "divergence_route_agreement", "value": math.nan, "threshold": threshold,
                "passed": True, "skipped": "p or q has zero entries"}
    try:
        kl_route = lambda_divergence(inst.M, inst.p, inst.q, lam, tol=tol)
        bregman = bregman_like_divergence(inst.M, inst.p, inst.q, lam, tol)
    except (OTGeoError, ValueError) as exc:
        return _failed("divergence_route_agreement", threshold, exc)
    return _check("divergence_route_agreement", abs(kl_route - bregman), threshold,
                  kl_route=kl_route, bregman_route=bregman)


def check_convexity(inst: Instance, lam: float, tol: Tolerance, seed: int = 0,
                    probes: int = 20, slack: float = 1e-9) -> dict:
    rng = np.random.default_rng(seed)
    s, r = inst.M.shape
    worst = math.inf
    try:
        for _ in range(probes):
            x2 = (rng.dirichlet(np.ones(s)), rng.dirichlet(np.ones(r)))
            worst = min(worst, convexity_gap(inst.M, (inst.p, inst.q), x2, rng.uniform(), lam, tol))
    except (OTGeoError, ValueError) as exc:
        return _failed("convexity_probe", slack, exc)
    return _check("convexity_probe", -worst, slack, min_gap=worst, probes=probes, seed=seed)


CHECKS: dict[str, Callable[..., dict]] = {
    "marginals": check_marginals,
    "legendre": check_legendre,
    "fisher": check_fisher,
    "theorem6": check_theorem6,
    "convexity": check_convexity,
}


def validate_all(inst: Instance, lam: float | None = None, tol: Tolerance | None = None,
                 seed: int = 0) -> dict[str, Any]:
    """Run every identity check on one instance; ``passed`` is False iff any check fails."""
    lam = inst.lam if lam is None else lam
    if lam is None or not lam > 0:
        raise InvalidProbability(f"validation needs lambda > 0, got {lam!r}", "lambda")
    tol = tol or Tolerance()
    checks = [fn(inst, lam, tol, seed=seed) if name == "convexity" else fn(inst, lam, tol)
              for name, fn in CHECKS.items()]
    return {"lambda": lam, "passed": all(c["passed"] for c in checks), "checks": checks,
            "metadata": {"seed": seed, "version": __version__}}


# ---------------------------------------------------------------------------
# argument handling


def _common() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global options")
    g.add_argument("--tol", type=float, default=argparse.SUPPRESS,
                   help="L1 marginal tolerance for Sinkhorn (default 1e-9)")
    g.add_argument("--max-iter", type=int, default=argparse.SUPPRESS,
                   help="Sinkhorn iteration cap (default 100000)")
    g.add_argument("--gauge", choices=[g.value for g in Gauge], default=argparse.SUPPRESS,
                   help="normalization of the scaling vectors (default sum-one)")
    g.add_argument("--renormalize", action="store_true", default=argparse.SUPPRESS,
                   help="rescale input distributions that do not sum to 1 (recorded as a warning)")
    g.add_argument("--out", default=argparse.SUPPRESS, help="output file (default stdout)")
    g.add_argument("--format", choices=["json", "csv"], default=argparse.SUPPRESS,
                   help="output format (default json)")
    return common


_DEFAULTS = {"tol": 1e-9, "max_iter": 100_000, "gauge": "sum-one", "renormalize": False,
             "out": None, "format": "json"}


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="otgeo", parents=[common],
                                     description="Entropy-relaxed optimal transport and lambda-divergences.")
    parser.add_argument("--version", action="version", version=f"otgeo {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_):
        return sub.add_parser(name, parents=[common], help=help_, description=help_)

    p = add("solve", "solve the entropy-relaxed transport problem")
    p.add_argument("--instance", required=True)
    p.add_argument("--lambda", dest="lam", type=float)

    p = add("exact", "exact (zero-entropy) Wasserstein solution")
    p.add_argument("--instance", required=True)

    p = add("divergence", "lambda-divergence, Cuturi function and KL, optionally over a lambda sweep")
    p.add_argument("--instance", required=True)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--lambda-sweep", dest="sweep")
    p.add_argument("--ref", choices=[r.value for r in ReferenceRule], default=ReferenceRule.SOURCE_P.value)
    p.add_argument("--scale", choices=[s.value for s in ScalingFactorRule],
                   default=ScalingFactorRule.LAMBDA_OVER_ONE_PLUS_LAMBDA.value)

    p = add("geometry", "Legendre, Fisher and convexity checks")
    p.add_argument("--instance", required=True)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--check", action="append", choices=["legendre", "fisher", "convexity"])
    p.add_argument("--seed", type=int, default=0)

    p = add("gaussian", "closed forms for two 1-D Gaussians")
    p.add_argument("--p", required=True, help="mean,variance")
    p.add_argument("--q", required=True, help="mean,variance")
    p.add_argument("--lambda", dest="lam", type=float, required=True)

    p = add("barycenter", "lambda-center of a set of distributions")
    p.add_argument("--points", required=True)
    p.add_argument("--cost", help="CSV cost matrix (or 'M' in the points file)")
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--direction", choices=[d.value for d in BarycenterDirection],
                   default=BarycenterDirection.POINTS_TO_CENTER.value)
    p.add_argument("--value-tol", type=float, default=1e-8)

    p = add("boundary", "points equidistant in divergence from two prototypes")
    p.add_argument("--p1", required=True)
    p.add_argument("--p2", required=True)
    p.add_argument("--cost", help="CSV cost matrix (default: discrete metric)")
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--grid", type=int, default=50)
    p.add_argument("--orientation", choices=[o.value for o in BoundaryOrientation],
                   default=BoundaryOrientation.PROTOTYPES_FIRST.value)

    p = add("sweep", "tabulate quantities over a range of lambda")
    p.add_argument("--instance", required=True)
    p.add_argument("--range", dest="sweep", required=True, help="lo:hi:logN or lo:hi:N")
    p.add_argument("--quantities", default="C_lambda,D_lambda,KL",
                   help=f"comma list from {','.join(QUANTITIES)}")

    p = add("validate", "run every identity check on an instance")
    p.add_argument("--instance", required=True)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--seed", type=int, default=0)
    return parser


def _tolerance(args) -> Tolerance:
    return Tolerance(marginal_tol=args.tol, max_iter=args.max_iter)


def _lambda(args, inst_lam) -> float:
    lam = args.lam if getattr(args, "lam", None) is not None else inst_lam
    if lam is None:
        raise InvalidProbability("no lambda given (use --lambda or a 'lambda' field)", "lambda")
    if not math.isfinite(lam) or lam < 0:
        raise InvalidProbability(f"must be finite and >= 0, got {lam!r}", "lambda")
    return float(lam)


def _emit(args, text: str):
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _table(args, rows: list[dict], columns: list[str], extra: dict | None = None):
    if args.format == "csv":
        cols = columns + (["error"] if any("error" in r for r in rows) else [])
        _emit(args, format_csv([[r.get(c) for c in cols] for r in rows], cols))
    else:
        _emit(args, dumps_json({**(extra or {}), "rows": rows}))


def _meta(args, inst: Instance | None = None, **more) -> dict:
    meta = {"version": __version__, "tol": args.tol, "max_iter": args.max_iter, **more}
    if inst is not None:
        if inst.metadata:
            meta["instance"] = inst.metadata
        if inst.warnings:
            meta["warnings"] = inst.warnings
    return meta


def cmd_solve(args) -> int:
    inst = load_instance(args.instance, args.renormalize)
    lam = _lambda(args, inst.lam)
    if lam == 0:
        return cmd_exact(args, inst)
    plan, scaling = sinkhorn_solve(inst.M, inst.p, inst.q, lam, _tolerance(args), args.gauge)
    P = plan.entries
    side: dict[str, Any] = {"lambda": lam, "gauge": args.gauge,
                            "a": scaling.a, "b": scaling.b, "c": scaling.c}
    try:
        pot = potentials_from_scaling(scaling)
        side.update(alpha=pot.alpha, beta=pot.beta, psi=pot.psi)
    except ValueError:
        side.update(alpha=None, beta=None, psi=None)
    side.update(C_lambda=cuturi_value(inst.M, P, lam), iterations=scaling.iterations,
                residual=scaling.residual, metadata=_meta(args, inst))
    if args.format == "csv":
        text = format_csv(P)
        if args.out:
            Path(args.out).write_text(text)
            Path(args.out).with_suffix(".json").write_text(dumps_json(side))
        else:
            sys.stdout.write(text)
    else:
        _emit(args, dumps_json({"plan": P, **side}))
    return EXIT_OK


def cmd_exact(args, inst: Instance | None = None) -> int:
    inst = inst or load_instance(args.instance, args.renormalize)
    sol = exact_wasserstein(inst.M, inst.p, inst.q)
    if args.format == "csv":
        _emit(args, format_csv(sol.plan.entries))
    else:
        _emit(args, dumps_json({"C_W": sol.cost, "unique": sol.unique, "plan": sol.plan.entries,
                                "u": sol.u, "v": sol.v, "metadata": _meta(args, inst)}))
    return EXIT_OK


def cmd_divergence(args) -> int:
    inst = load_instance(args.instance, args.renormalize)
    if args.sweep:
        lams: Any = SweepSpec.parse(args.sweep)
    else:
        lams = [_lambda(args, inst.lam)]
    cols = ["lambda", "C_lambda", "D_lambda", "KL"]
    rows = run_sweep(inst, lams, cols[1:], _tolerance(args), args.ref, args.scale)
    _table(args, rows, cols, {"ref": args.ref, "scale": args.scale, "metadata": _meta(args, inst)})
    return _sweep_status(rows)


def _sweep_status(rows) -> int:
    return EXIT_NONCONVERGENCE if any("error" in r for r in rows) else EXIT_OK


def _report(args, report: dict) -> int:
    if args.format == "csv":
        cols = ["check", "value", "threshold", "passed"]
        _emit(args, format_csv([[c.get(k) for k in cols] for c in report["checks"]], cols))
    else:
        _emit(args, dumps_json(report))
    return EXIT_OK if report["passed"] else EXIT_VALIDATION


def cmd_geometry(args) -> int:
    inst = load_instance(args.instance, args.renormalize)
    lam = _lambda(args, inst.lam)
    if lam == 0:
        raise InvalidProbability("geometry checks need lambda > 0", "lambda")
    tol = _tolerance(args)
    names = args.check or ["legendre", "fisher", "convexity"]
    checks = [CHECKS[n](inst, lam, tol, seed=args.seed) if n == "convexity" else CHECKS[n](inst, lam, tol)
              for n in dict.fromkeys(names)]
    return _report(args, {"lambda": lam, "passed": all(c["passed"] for c in checks), "checks": checks,
                          "metadata": _meta(args, inst, seed=args.seed)})


def cmd_gaussian(args) -> int:
    p = Gaussian1D(*parse_pair(args.p, "p"))
    q = Gaussian1D(*parse_pair(args.q, "q"))
    lam = args.lam
    if not lam > 0:
        raise InvalidProbability(f"must be > 0, got {lam!r}", "lambda")
    plan = gaussian_plan(p, q, lam)
    out = {
        "lambda": lam,
        "C_lambda": gaussian_cuturi(p, q, lam),
        "D_lambda": gaussian_lambda_divergence(p, q, lam),
        "D_lambda_unit": gaussian_lambda_divergence(p, q, lam, ScalingFactorRule.UNIT),
        "limit_infinity": gaussian_divergence_limit(p, q, "infinity"),
        "limit_zero": gaussian_divergence_limit(p, q, "zero"),
        "plan": {"mean": plan.mu_vec, "covariance": plan.Sigma,
                 "sigma_tilde2": plan.sigma_tilde2, "sigma_tilde_prime2": plan.sigma_tilde_prime2},
        "metadata": {"version": __version__},
    }
    if args.format == "csv":
        keys = ["lambda", "C_lambda", "D_lambda", "D_lambda_unit", "limit_infinity", "limit_zero"]
        _emit(args, format_csv([[out[k] for k in keys]], keys))
    else:
        _emit(args, dumps_json(out))
    return EXIT_OK


def cmd_barycenter(args) -> int:
    points, doc, warnings = load_points(args.points, args.renormalize)
    base = Path(args.points).parent
    if args.cost:
        M = load_matrix(Path(args.cost).name, Path(args.cost).parent)
    elif "M" in doc:
        M = load_matrix(doc["M"], base)
    else:
        raise ParseError("no cost matrix: pass --cost or put 'M' in the points file", args.points)
    lam = _lambda(args, doc.get("lambda"))
    if lam == 0:
        raise InvalidProbability("barycenters need lambda > 0", "lambda")
    prob = BarycenterProblem(tuple(points), M, lam, args.direction)
    tol = Tolerance(marginal_tol=min(args.tol, 1e-12), max_iter=args.max_iter, value_tol=args.value_tol)
    res = lambda_barycenter(prob, tol)
    out = {"lambda": lam, "direction": args.direction, "center": res.point.values,
           "objective": res.objective, "residual": res.residual, "iterations": res.iterations,
           "metadata": {"version": __version__, **({"warnings": warnings} if warnings else {})}}
    if args.format == "csv":
        _emit(args, format_csv([res.point.values]))
    else:
        _emit(args, dumps_json(out))
    return EXIT_OK


def cmd_boundary(args) -> int:
    warnings: list = []
    p1 = validate_distribution(parse_vector(args.p1, "p1"), "p1", args.renormalize, warnings)
    p2 = validate_distribution(parse_vector(args.p2, "p2"), "p2", args.renormalize, warnings)
    if p1.size != p2.size:
        raise DimensionMismatch(f"p1 has {p1.size} entries but p2 has {p2.size}")
    n = p1.size
    M = load_matrix(Path(args.cost).name, Path(args.cost).parent) if args.cost else discrete_metric(n)
    if M.shape != (n, n):
        raise DimensionMismatch(f"cost has shape {M.shape}, expected {(n, n)}")
    if not args.lam > 0:
        raise InvalidProbability(f"must be > 0, got {args.lam!r}", "lambda")
    tol = Tolerance(marginal_tol=min(args.tol, 1e-12), max_iter=args.max_iter)
    if n == 3:
        pts = classifier_boundary_scan(p1, p2, M, args.lam, args.grid, args.orientation, tol=tol)
    elif n == 2:
        eps = 1.0 / args.grid
        pts = boundary_on_segment(p1, p2, M, args.lam, [eps, 1 - eps], [1 - eps, eps],
                                  samples=args.grid, orientation=args.orientation, tol=tol)
    else:
        raise DimensionMismatch(f"the boundary command scans n = 2 or 3, got n = {n}")
    rows = [list(q) + [boundary_difference(p1, p2, M, args.lam, q, args.orientation, tol)] for q in pts]
    cols = [f"q{i + 1}" for i in range(n)] + ["delta_D"]
    if args.format == "csv":
        _emit(args, format_csv(rows, cols))
    else:
        _emit(args, dumps_json({"lambda": args.lam, "orientation": args.orientation,
                                "points": [dict(zip(cols, r)) for r in rows],
                                "metadata": {"version": __version__, "grid": args.grid}}))
    return EXIT_OK


def cmd_sweep(args) -> int:
    inst = load_instance(args.instance, args.renormalize)
    quantities = [s.strip() for s in args.quantities.split(",") if s.strip()]
    unknown = [s for s in quantities if s not in QUANTITIES]
    if unknown:
        raise InvalidProbability(f"unknown quantities {unknown}; choose from {list(QUANTITIES)}", "quantities")
    rows = run_sweep(inst, SweepSpec.parse(args.sweep), quantities, _tolerance(args))
    _table(args, rows, ["lambda"] + quantities, {"metadata": _meta(args, inst)})
    return _sweep_status(rows)


def cmd_validate(args) -> int:
    inst = load_instance(args.instance, args.renormalize)
    lam = _lambda(args, inst.lam)
    report = validate_all(inst, lam, _tolerance(args), args.seed)
    report["metadata"] = _meta(args, inst, seed=args.seed)
    return _report(args, report)


COMMANDS = {
    "solve": cmd_solve, "exact": cmd_exact, "divergence": cmd_divergence, "geometry": cmd_geometry,
    "gaussian": cmd_gaussian, "barycenter": cmd_barycenter, "boundary": cmd_boundary,
    "sweep": cmd_sweep, "validate": cmd_validate,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for key, value in _DEFAULTS.items():
        if not hasattr(args, key):
            setattr(args, key, value)
    try:
        return COMMANDS[args.command](args)
    except NonConvergence as exc:
        print(f"otgeo: non-convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except ParseError as exc:
        print(f"otgeo: parse error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"otgeo: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (InvalidProbability, DimensionMismatch, SupportViolation, NonPositiveVariance, ValueError) as exc:
        print(f"otgeo: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
