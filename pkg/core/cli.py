# core/cli.py
"""
Command-line driver.
  python app.py <subcommand> --config run.yaml [--out DIR] [--strict] [--h H] [--seed N]
Subcommands: verify-hypotheses | solve-serrin | solve-warped | identities |
             hk-deficit | cmc-deficit | sweep | run | compare
Exit codes: 0 ok, 1 compare found differences, 2 configuration/schema errors,
3 numerical failures, 4 strict-mode threshold violations.
ENV: WARPLAB_OUTPUT_ROOT, WARPLAB_LOG_LEVEL, WARPLAB_STRICT (see core/config.py).
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import pandas as pd

from .config import LOG_LEVEL, STRICT_DEFAULT, RunConfig, load_config, with_overrides
from .elliptic_solver import (SERRIN, ScalarField, make_source, neumann_trace, radial_oracle,
                              solve_serrin, solve_warped_torsion)
from .errors import FlowError, ResidualThresholdError, WarpLabError, exit_code_for
from .identity_lab import all_identities, convergence_study
from .level_sets import FieldSurrogate, coarea_band_estimate, level_set_flow
from .meridian_domain import BoundarySpec, MeridianDomain, boundary_geometry, build_domain
from .report_store import (CONVERGENCE_COLUMNS, HYPOTHESIS_COLUMNS, SWEEP_COLUMNS, compare_reports,
                           read_report, write_field, write_mesh, write_metadata, write_report,
                           write_table)
from .stability_lab import (chain_checks, cmc_deficit, evaluate_configuration, graphicality,
                            hk_deficit, ring_A_norm, serrin_deficit, slice_distance,
                            stability_sweep, traceless_energy)
from .warp_profiles import WarpingProfile, check_hypotheses, default_grid, make_profile

logger = logging.getLogger(__name__)

SUBCOMMANDS = ("verify-hypotheses", "solve-serrin", "solve-warped", "identities",
               "hk-deficit", "cmc-deficit", "sweep")


# ------------ helpers ------------
class _Checks:
    """Collects invariant violations; strict mode turns them into exit code 4."""

    def __init__(self, strict: bool):
        self.strict = strict
        self.violations: List[str] = []

    def expect(self, ok: bool, message: str) -> None:
        if not ok:
            logger.warning("check failed: %s", message)
            self.violations.append(message)

    def finish(self) -> None:
        if self.strict and self.violations:
            raise ResidualThresholdError("; ".join(self.violations))


def _profile(cfg: RunConfig) -> WarpingProfile:
    return make_profile(cfg.profile.kind, cfg.profile.params())


def _spec(cfg: RunConfig) -> BoundarySpec:
    d = cfg.domain
    return BoundarySpec(kind=d.boundary, r0=d.r0, coefficients=tuple(d.coefficients),
                        center=d.center, radius=d.radius)


def _domain(cfg: RunConfig, profile: WarpingProfile) -> MeridianDomain:
    return build_domain(profile, _spec(cfg), topology=cfg.domain.topology, beta2=cfg.experiment.beta2)


def _is_radial(domain: MeridianDomain) -> bool:
    spec = domain.spec
    if spec.kind == "ball":
        return spec.center == 0.0
    return not any(spec.coefficients)


def _radius(domain: MeridianDomain) -> float:
    return domain.spec.radius if domain.spec.kind == "ball" else domain.spec.r0


def _save_field(cfg: RunConfig, fld: ScalarField, out: Path, stem: str) -> None:
    if cfg.output.field_csv:
        write_field(fld, out / f"{stem}_field.csv")
    if cfg.output.mesh_dump:
        write_mesh(fld.mesh, out, stem=f"{stem}_mesh")


def _level_sets(cfg: RunConfig, fld: ScalarField, eps: float, checks: _Checks) -> Dict[str, Any]:
    exp = cfg.experiment
    sur = FieldSurrogate(fld)
    fam = level_set_flow(fld, levels=exp.flow_levels, eps=eps, beta=exp.beta, T_cap=exp.T_cap,
                         surrogate=sur)
    try:
        band = coarea_band_estimate(fld, T=fam.T, levels=exp.band_levels, surrogate=sur).to_dict()
    except FlowError as exc:
        logger.warning("band estimate skipped: %s", exc)
        band = {"skipped": str(exc)}
    checks.expect(fam.flow_defect <= cfg.tolerances.ode * 10, f"flow defect {fam.flow_defect:.3g}")
    checks.expect(bool(np.all(fam.hausdorff < 2 * fld.h)), "flowed and contoured level sets differ by >= 2h")
    if fld.kind != SERRIN:
        checks.expect(fam.min_r >= 0.5 * fld.domain.extent()[0], "flow left {r >= r0/2}")
    return {"flow": fam.to_dict(), "band": band}


# ------------ experiments ------------
def _verify_hypotheses(cfg: RunConfig, out: Path, checks: _Checks) -> Dict[str, Any]:
    profile = _profile(cfg)
    report = check_hypotheses(profile, default_grid(profile, cfg.profile.grid_points),
                              beta1=cfg.experiment.beta1)
    write_table(report.to_frame(), out / "hypotheses.csv", HYPOTHESIS_COLUMNS)
    rng = np.random.default_rng(cfg.seed)
    radii = np.sort(rng.uniform(0.05, 0.9, 8) * profile.r_bar)
    errors = {}
    for step in (2e-3, 1e-3):
        errors[step] = max(abs(profile.finite_difference(r, 3, step) - profile.eval(r, 3)) for r in radii)
    order = float(np.log(errors[2e-3] / errors[1e-3]) / np.log(2.0)) if errors[1e-3] > 0 else float("inf")
    checks.expect(errors[1e-3] < 1e-6, f"third-derivative finite-difference error {errors[1e-3]:.3g}")
    return {"profile": profile.to_dict(), "hypotheses": report.to_records(),
            "all_passed": report.all_passed, "holder_bound": report.holder_bound,
            "finite_difference": {"radii": radii, "error_h": errors[2e-3], "error_h2": errors[1e-3],
                                  "observed_order": order}}


def _solve_serrin(cfg: RunConfig, out: Path, checks: _Checks) -> Dict[str, Any]:
    profile = _profile(cfg)
    domain = _domain(cfg, profile)
    source = make_source(cfg.source.kind, cfg.source.coefficient)
    fld = solve_serrin(domain, source, cfg.solver.h, cfg.solver)
    _save_field(cfg, fld, out, "serrin")
    deficit = serrin_deficit(fld, source)
    surface = boundary_geometry(domain, resolution=cfg.domain.resolution)
    payload: Dict[str, Any] = {
        "h": fld.h, "newton_iterations": fld.newton_iterations, "linear_iterations": fld.linear_iterations,
        "residual_norm": fld.residual_norm, "deficit": deficit,
        "E_serrin": traceless_energy(fld, SERRIN), "ring_A_norm": ring_A_norm(surface),
        "graphicality": graphicality(surface).to_dict(), "slice": slice_distance(surface).to_dict(),
    }
    if _is_radial(domain):
        oracle = radial_oracle(SERRIN, profile, _radius(domain), source)
        err = float(np.max(np.abs(fld.values - oracle(fld.mesh.r))))
        payload["oracle"] = {"max_error": err, "f_nu": oracle.f_nu,
                             "f_nu_error": float(np.max(np.abs(neumann_trace(fld) - oracle.f_nu)))}
        checks.expect(deficit["eps"] < cfg.tolerances.quadrature * 10 + 10 * err,
                      f"Serrin deficit {deficit['eps']:.3g} on a ball")
    payload["level_sets"] = _level_sets(cfg, fld, deficit["eps"], checks)
    return payload


def _solve_warped(cfg: RunConfig, out: Path, checks: _Checks) -> Dict[str, Any]:
    profile = _profile(cfg)
    domain = _domain(cfg, profile)
    fld = solve_warped_torsion(domain, cfg.solver.h, cfg.solver, beta1=cfg.experiment.beta1)
    _save_field(cfg, fld, out, "warped")
    payload: Dict[str, Any] = {"h": fld.h, "c0": fld.c0, "linear_iterations": fld.linear_iterations,
                               "residual_norm": fld.residual_norm}
    if _is_radial(domain) and domain.is_homologous:
        oracle = radial_oracle("warped", profile, _radius(domain))
        payload["oracle"] = {"max_error": float(np.max(np.abs(fld.values - oracle(fld.mesh.r)))),
                             "f_nu": oracle.f_nu}
    try:
        hk, cmc = hk_deficit(fld.surface, domain), cmc_deficit(fld.surface, domain)
    except WarpLabError as exc:
        payload["chain"] = {"skipped": str(exc)}
        eps = 0.0
    else:
        chain_hk, chain_cmc, E, E_region = chain_checks(fld, fld.surface, hk, cmc)
        payload.update({"hk": hk, "cmc": cmc, "E_warped": E, "E_region": E_region,
                        "chain_hk": chain_hk, "chain_cmc": chain_cmc})
        checks.expect(chain_hk["holds"], "E_warped exceeds the HK bound")
        checks.expect(chain_cmc["holds"], "E_warped exceeds the CMC bound")
        eps = max(hk["hk_deficit"], 0.0)
    payload["level_sets"] = _level_sets(cfg, fld, eps, checks)
    return payload


def _solve_for(cfg: RunConfig, profile: WarpingProfile, h: float) -> ScalarField:
    domain = _domain(cfg, profile)
    if cfg.experiment.problem == SERRIN:
        return solve_serrin(domain, make_source(cfg.source.kind, cfg.source.coefficient), h, cfg.solver)
    return solve_warped_torsion(domain, h, cfg.solver, beta1=cfg.experiment.beta1)


def _identities(cfg: RunConfig, out: Path, checks: _Checks) -> Dict[str, Any]:
    profile = _profile(cfg)
    fld = _solve_for(cfg, profile, cfg.solver.h)
    residuals = all_identities(fld)
    for res in residuals:
        tol = cfg.tolerances.master_identity if res.identity == "serrin_master" else cfg.tolerances.identity
        checks.expect(res.within(tol), f"{res.identity} residual {res.rel_residual:.3g} > {tol}")
    payload: Dict[str, Any] = {"h": fld.h, "residuals": [res.to_dict() for res in residuals]}
    if cfg.experiment.h_levels:
        table = convergence_study(lambda h: _solve_for(cfg, profile, h), all_identities, cfg.experiment.h_levels)
        write_table(table, out / "convergence.csv", CONVERGENCE_COLUMNS)
        payload["convergence"] = table.to_dict(orient="records")
    return payload


def _deficit(problem: str) -> Callable:
    def run(cfg: RunConfig, out: Path, checks: _Checks) -> Dict[str, Any]:
        profile = _profile(cfg)
        report = evaluate_configuration(profile, _spec(cfg), problem, cfg.solver.h, solver=cfg.solver,
                                        resolution=cfg.domain.resolution, beta1=cfg.experiment.beta1,
                                        beta2=cfg.experiment.beta2, topology=cfg.domain.topology)
        if problem == "hk":
            checks.expect(report.hk["hk_deficit"] >= -cfg.tolerances.quadrature * report.scale,
                          f"HK deficit {report.hk['hk_deficit']:.3g} is negative")
        if report.chain_hk:
            checks.expect(report.chain_hk["holds"], "E_warped exceeds the HK bound")
        return report.to_dict()
    return run


def _sweep(cfg: RunConfig, out: Path, checks: _Checks) -> Dict[str, Any]:
    exp = cfg.experiment
    result = stability_sweep(_profile(cfg), _spec(cfg), exp.family, exp.amplitudes, exp.problem,
                             cfg.solver.h, source=(cfg.source.kind, cfg.source.coefficient),
                             solver=cfg.solver, workers=exp.workers, resolution=cfg.domain.resolution,
                             beta1=exp.beta1, beta2=exp.beta2)
    write_table(result.table, out / "sweep.csv", SWEEP_COLUMNS, footer=result.footer())
    for rep in result.reports:
        write_report(out, f"member_t{rep.t:.6g}", "deficit", rep.to_dict())
    for column, ok in result.monotone.items():
        checks.expect(ok, f"{column} is not strictly increasing in t")
    return {"problem": exp.problem, "amplitudes": list(exp.amplitudes), "exponent": result.exponent,
            "intercept": result.intercept, "monotone": result.monotone,
            "table": result.table.to_dict(orient="records")}


EXPERIMENTS: Dict[str, Callable] = {
    "verify-hypotheses": _verify_hypotheses,
    "solve-serrin": _solve_serrin,
    "solve-warped": _solve_warped,
    "identities": _identities,
    "hk-deficit": _deficit("hk"),
    "cmc-deficit": _deficit("cmc"),
    "sweep": _sweep,
}


# ---------------- Public API
def run(cfg: RunConfig, strict: bool = False) -> Path:
    """Run cfg.experiment.kind and write <kind>.json plus metadata.json; returns the report path."""
    kind = cfg.experiment.kind
    checks = _Checks(strict)
    out = cfg.output_dir()
    payload = EXPERIMENTS[kind](cfg, out, checks)
    payload["violations"] = list(checks.violations)
    path = write_report(out, kind, kind, payload)
    write_metadata(out, cfg.to_dict(), {"strict": strict})
    checks.finish()
    return path


def compare(path_a: str, path_b: str, tol: float) -> int:
    table = compare_reports(read_report(path_a), read_report(path_b), tol=tol)
    bad = table[~table["ok"]]
    with pd.option_context("display.max_rows", 50, "display.width", 120):
        print(bad.to_string(index=False) if len(bad) else f"{len(table)} fields agree within {tol:g}")
    return 0 if bad.empty else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="warplab", description="Stability lab for warped-product geometry")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--strict", action="store_true", default=STRICT_DEFAULT,
                       help="exit 4 when a residual or invariant exceeds its tolerance")
        p.add_argument("--h", type=float, default=None, help="mesh size override")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--log-level", default=LOG_LEVEL)

    for name in SUBCOMMANDS + ("run",):
        common(sub.add_parser(name))
    cmp = sub.add_parser("compare")
    cmp.add_argument("report_a")
    cmp.add_argument("report_b")
    cmp.add_argument("--tol", type=float, default=1e-8)
    cmp.add_argument("--log-level", default=LOG_LEVEL)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.INFO),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "compare":
            return compare(args.report_a, args.report_b, args.tol)
        cfg = load_config(args.config)
        experiment = None if args.command == "run" else args.command
        cfg = with_overrides(cfg, h=args.h, seed=args.seed, out=args.out, experiment=experiment)
        path = run(cfg, strict=args.strict)
        logger.info("report written to %s", path)
        return 0
    except WarpLabError as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
