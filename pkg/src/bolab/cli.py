"""Command-line entry point: ``bolab <subcommand> [flags]``.

Every subcommand writes ``<out>/<subcommand>.json`` (sorted keys, config hash
and tolerances embedded) plus CSV tables and field files, prints one line per
check, and exits 0 when all checks pass, 1 when one fails, 2 on usage errors.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import textconfig
from .acceptance import CRITERIA, DEFAULT_TOLERANCES, CriterionResult, run_criterion
from .evolution import EvolutionConfig, EvolutionError, evolve, stability_experiment
from .functionals import conserved_tower, trace_identity, write_tower_csv
from .operators import (AssemblyError, CalibrationError, InertiaMismatchError, assemble_L1, assemble_LN,
                        kernel_vector, spectrum, negative_eigenvalue_scaling, write_spectrum_csv)
from .solitons import SolitonParams, format_params, nsoliton_scattering, nsoliton_tau, tau_sign_report
from .spectral import Grid, default_grid, save_field_binary, save_field_text
from .variational import RankDeficientError, el_residual, hessian_D, multiplier_oracle, vieta_multipliers


COMMANDS = ("construct", "functionals", "variational", "spectrum", "inertia", "scaling", "evolve", "stability",
            "report-all")

TOLERANCES: dict[str, dict[str, float]] = {
    "construct": {"construct_agreement": 1e-10},
    "functionals": {"functionals_rel": 1e-3},
    "variational": {"variational_residual": 1e-5, "variational_multiplier": 1e-5},
    "spectrum": {},
    "inertia": {},
    "scaling": {"scaling_spread": 0.05, "scaling_golden": 1e-3},
    "evolve": {"evolve_oracle": 1e-3, "evolve_drift": 1e-8},
    "stability": {"stability_control": 1e-4},
    "report-all": dict(DEFAULT_TOLERANCES),
}

DEFAULT_SWEEP = ((1.0, 1.5), (1.0, 2.0), (1.0, 3.0), (1.0, 4.0))


class UsageError(ValueError):
    pass


def _grid_spec(value) -> tuple[float, int]:
    if isinstance(value, str):
        left, sep, right = value.partition(":")
        if not sep:
            raise ValueError(f"grid must look like L:n, got {value!r}")
        value = (float(left), int(right))
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ValueError(f"grid must be 'L:n' or [L, n], got {value!r}")
    L, n = float(value[0]), value[1]
    if isinstance(n, float) and n.is_integer():
        n = int(n)
    if not isinstance(n, int):
        raise ValueError(f"grid point count must be an integer, got {n!r}")
    Grid(L, n)  # validates
    return (L, n)


def _sweep(value) -> tuple[tuple[float, ...], ...]:
    if isinstance(value, str):
        value = [[float(x) for x in part.split(",")] for part in value.split(";") if part.strip()]
    rows = tuple(tuple(textconfig.float_list(row)) for row in value)
    if not rows:
        raise ValueError("sweep needs at least one speed tuple")
    return rows


def _criteria(value) -> tuple[int, ...]:
    if isinstance(value, str):
        value = [int(v) for v in value.split(",") if v.strip()]
    if isinstance(value, int):
        value = [value]
    out = tuple(sorted({int(v) for v in value}))
    bad = [v for v in out if v not in CRITERIA]
    if bad or not out:
        raise ValueError(f"criteria must be drawn from 1..{len(CRITERIA)}, got {list(value)!r}")
    return out


def _nonneg(value) -> float:
    v = textconfig.real(value)
    if v < 0:
        raise ValueError("must be non-negative")
    return v


def _positive(value) -> float:
    v = textconfig.real(value)
    if not v > 0:
        raise ValueError("must be positive")
    return v


def _seed(value) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < 0:
        raise ValueError(f"seed must be a non-negative integer, got {value!r}")
    return value


def _preset(value) -> str:
    if value != "paper":
        raise ValueError(f"unknown preset {value!r} (available: paper)")
    return value


CONFIG_SCHEMA = {
    "speeds": textconfig.float_list,
    "phases": textconfig.float_list,
    "t": textconfig.real,
    "grid": _grid_spec,
    "dt": _positive,
    "T": _positive,
    "delta": _nonneg,
    "K": _positive,
    "seed": _seed,
    "sweep": _sweep,
    "criteria": _criteria,
    "preset": _preset,
    "out": str,
}


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    speeds: tuple[float, ...] = (1.0,)
    phases: tuple[float, ...] | None = None
    t: float = 0.0
    grid: tuple[float, int] | None = None
    dt: float = 0.0025
    T: float = 10.0
    delta: float = 1e-3
    K: float = 10.0
    seed: int = 0
    sweep: tuple[tuple[float, ...], ...] = DEFAULT_SWEEP
    criteria: tuple[int, ...] = tuple(CRITERIA)
    preset: str = "paper"
    out: str = "bolab-out"
    tolerances: dict = field(default_factory=dict)

    def validate(self) -> "ExperimentConfig":
        if self.command not in COMMANDS:
            raise UsageError(f"unknown subcommand {self.command!r}")
        try:
            params = self.params()
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        if self.command == "evolve" and self.T < self.dt:
            raise UsageError("T must be at least dt")
        if self.command in ("spectrum", "inertia") and params.N > 3:
            raise UsageError("operator assembly is limited to N <= 3")
        if self.command == "variational" and params.N < 2:
            raise UsageError("the variational checks need at least two speeds")
        return self

    def params(self) -> SolitonParams:
        return SolitonParams(self.speeds, self.phases, self.t)

    def make_grid(self, fallback: Grid) -> Grid:
        return Grid(*self.grid) if self.grid is not None else fallback

    def to_dict(self) -> dict:
        """Everything that determines the results (the output directory does not)."""
        d = asdict(self)
        d.pop("out")
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value file mirroring the flags")
    common.add_argument("--speeds", type=lambda s: textconfig.float_list([float(v) for v in s.split(",")]))
    common.add_argument("--phases", type=lambda s: [float(v) for v in s.split(",")],
                        help="comma-separated; write --phases=-3,3 when the first is negative")
    common.add_argument("--t", type=float, help="time at which the N-soliton is evaluated")
    common.add_argument("--grid", type=_grid_spec, help="L:n, the period is 2L and n the number of points")
    common.add_argument("--dt", type=lambda s: _positive(float(s)))
    common.add_argument("--T", type=lambda s: _positive(float(s)))
    common.add_argument("--delta", type=lambda s: _nonneg(float(s)))
    common.add_argument("--K", type=lambda s: _positive(float(s)))
    common.add_argument("--seed", type=int)
    common.add_argument("--sweep", type=_sweep, help="speed tuples separated by ';', e.g. '1,2;1,3'")
    common.add_argument("--criteria", type=_criteria, help="comma-separated criterion numbers for report-all")
    common.add_argument("--preset", type=_preset)
    common.add_argument("--out")
    common.add_argument("--tol-overrides", dest="tol_overrides", help="key = value file of tolerances")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="bolab", description="Benjamin-Ono multi-soliton verification suite")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    values: dict = {}
    if args.config:
        values.update(textconfig.parse_file(args.config, CONFIG_SCHEMA))
    for key in CONFIG_SCHEMA:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    if "seed" in values:
        values["seed"] = _seed(values["seed"])
    if args.command != "report-all":
        values.pop("preset", None)
    tolerances = dict(TOLERANCES[args.command])
    if args.tol_overrides:
        schema = {k: _positive for k in tolerances}
        tolerances.update(textconfig.parse_file(args.tol_overrides, schema))
    for key in ("speeds", "phases"):
        if key in values:
            values[key] = tuple(values[key])
    return ExperimentConfig(command=args.command, tolerances=tolerances, **values).validate()


# ----------------------------------------------------------------------------
# Reports


class Report:
    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.out = Path(cfg.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.checks: list[dict] = []
        self.results: dict = {}
        self.files: list[str] = []

    def check(self, name: str, value, bound, passed: bool) -> None:
        self.checks.append({"name": name, "value": _plain(value), "bound": _plain(bound), "passed": bool(passed)})

    def at_most(self, name: str, value: float, bound: float) -> None:
        self.check(name, float(value), float(bound), float(value) <= bound)

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.out / name

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def write(self) -> Path:
        doc = {
            "command": self.cfg.command,
            "config": _plain(self.cfg.to_dict()),
            "config_hash": self.cfg.digest(),
            "tolerances": self.cfg.tolerances,
            "results": _plain(self.results),
            "checks": self.checks,
            "files": sorted(self.files),
            "passed": self.passed,
        }
        path = self.out / f"{self.cfg.command}.json"
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        return path

    def print_checks(self, stream=sys.stdout) -> None:
        for c in self.checks:
            status = "PASS" if c["passed"] else "FAIL"
            print(f"{status}  {c['name']}: {_short(c['value'])} (bound {_short(c['bound'])})", file=stream)


def _plain(v):
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.ndarray):
        return _plain(v.tolist())
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    if isinstance(v, float) and not np.isfinite(v):
        return repr(v)
    return v


def _short(v) -> str:
    if isinstance(v, float):
        return f"{v:.4g}"
    return json.dumps(v)


def _operator_grid(cfg: ExperimentConfig) -> Grid:
    # N=3 with c_3=3 is under-resolved at h=1/8
    return cfg.make_grid(Grid(128.0, 2048 if max(cfg.speeds) <= 2.0 and len(cfg.speeds) < 3 else 4096))


# ----------------------------------------------------------------------------
# Subcommands


def cmd_construct(cfg: ExperimentConfig, rep: Report) -> None:
    params = cfg.params()
    grid = cfg.make_grid(default_grid(params.speeds))
    U = nsoliton_tau(params, grid)
    sol = nsoliton_scattering(params, grid)
    diff = max(np.abs(U.values - sol.U.values).max(), np.abs(U.values - sol.U_linear.values).max())
    save_field_text(rep.path("field.txt"), U)
    save_field_binary(rep.path("field.bof"), U)
    rep.path("params.txt").write_text(format_params(params))
    rep.results.update({"grid": [grid.L, grid.n], "min": float(U.values.min()), "max": float(U.values.max()),
                        "mass": float(grid.h * U.values.sum()), "tau_vs_scattering": float(diff),
                        "sign_convention": tau_sign_report(params, grid)})
    rep.check("positivity: min U > 0", float(U.values.min()), 0.0, U.values.min() > 0)
    rep.at_most("tau vs scattering inf-norm", diff, cfg.tolerances["construct_agreement"])


def cmd_functionals(cfg: ExperimentConfig, rep: Report) -> None:
    params = cfg.params()
    grid = cfg.make_grid(default_grid(params.speeds))
    U = nsoliton_tau(params, grid)
    tower = conserved_tower(U, 8)
    write_tower_csv(rep.path("tower.csv"), tower)
    exact = [trace_identity(params, n) for n in range(1, 9)]
    rel = [abs(tower[n] - exact[n - 1]) / abs(exact[n - 1]) for n in range(1, 9)]
    rep.results.update({"grid": [grid.L, grid.n], "H": tower.values, "trace_identity": exact, "rel_error": rel,
                        "im_residues": tower.residues, "flagged_orders": list(tower.flagged)})
    rep.at_most("max rel error vs trace identity, n=1..5", max(rel[:5]), cfg.tolerances["functionals_rel"])


def cmd_variational(cfg: ExperimentConfig, rep: Report) -> None:
    params = cfg.params()
    grid = cfg.make_grid(Grid(128.0, 4096))
    mu = vieta_multipliers(params)
    residual = el_residual(params, grid)
    residual_functional = el_residual(params, grid, source="functional")
    try:
        oracle = multiplier_oracle(params, grid).as_array()
    except RankDeficientError as exc:
        rep.check("multiplier oracle", str(exc), "well-conditioned", False)
        oracle = None
    hd = hessian_D(params.speeds)
    rep.results.update({"grid": [grid.L, grid.n], "mu": mu.mu, "mu_oracle": oracle, "el_residual": residual,
                        "el_residual_functional": residual_functional, "D": hd.D,
                        "D_eigenvalues": hd.eigenvalues(), "BtA_over_pi": hd.BtA_normalized,
                        "p_of_D": hd.positive_count()})
    rep.at_most("el_residual", residual, cfg.tolerances["variational_residual"])
    if oracle is not None:
        rep.at_most("oracle vs Vieta multipliers", float(np.abs(oracle - mu.as_array()).max()),
                    cfg.tolerances["variational_multiplier"])
    rep.check("p(D) = ceil(N/2)", hd.positive_count(), (params.N + 1) // 2, hd.positive_count() == (params.N + 1) // 2)


def _operator(cfg: ExperimentConfig):
    params = cfg.params()
    grid = _operator_grid(cfg)
    M = assemble_L1(params.speeds[0], grid) if params.N == 1 else assemble_LN(params, grid)
    return params, grid, M


def _expected_inertia(N: int) -> tuple[int, int]:
    return ((N + 1) // 2, N)


def cmd_spectrum(cfg: ExperimentConfig, rep: Report) -> None:
    params, grid, M = _operator(cfg)
    report = spectrum(M)
    write_spectrum_csv(rep.path("spectrum.csv"), report.eigenvalues)
    k = kernel_vector(M)
    np.savetxt(rep.path("kernel.csv"), np.column_stack([grid.x, k]), delimiter=",", header="x,kernel_vector",
               comments="")
    low = report.eigenvalues[: 2 * params.N + 2]
    rep.results.update({"grid": [grid.L, grid.n], "label": M.label, "lowest_eigenvalues": low,
                        "inertia": report.inertia.to_dict(), "asymmetry": M.asymmetry})
    got = report.inertia.as_tuple()
    rep.check("inertia (negative, zero)", list(got), list(_expected_inertia(params.N)),
              got == _expected_inertia(params.N))


def cmd_inertia(cfg: ExperimentConfig, rep: Report) -> None:
    params, grid, M = _operator(cfg)
    inert = spectrum(M).inertia
    rep.results.update({"grid": [grid.L, grid.n], "label": M.label, "negative": inert.negative,
                        "zero": inert.zero, "zero_tol": inert.zero_tol, "gap": inert.gap})
    rep.check("inertia (negative, zero)", list(inert.as_tuple()), list(_expected_inertia(params.N)),
              inert.as_tuple() == _expected_inertia(params.N))


def cmd_scaling(cfg: ExperimentConfig, rep: Report) -> None:
    grid = cfg.make_grid(Grid(128.0, 4096))
    table = negative_eigenvalue_scaling((1.0,), cfg.sweep, grid=grid)
    with open(rep.path("scaling.csv"), "w") as fh:
        fh.write("speeds,k,nu,denominator,ratio,nu_isolated,ratio_isolated\n")
        for r in table.base + table.rows:
            fh.write(f"{' '.join(f'{c:g}' for c in r.speeds)},{r.k},{r.nu!r},{r.denominator!r},{r.ratio!r},"
                     f"{r.nu_isolated!r},{r.ratio_isolated!r}\n")
    rep.results.update({"grid": [grid.L, grid.n], **table.to_dict()})
    rep.at_most("ratio spread / mean", table.spread(1), cfg.tolerances["scaling_spread"])
    golden = (1.0 + 5**0.5) / 2.0
    rep.at_most("|N=1 ratio - golden ratio|", abs(table.base[0].ratio - golden), cfg.tolerances["scaling_golden"])


def cmd_evolve(cfg: ExperimentConfig, rep: Report) -> None:
    params = cfg.params()
    grid = cfg.make_grid(default_grid(params.speeds))
    U0 = nsoliton_tau(params, grid)
    trace = evolve(U0, EvolutionConfig(grid, cfg.dt, cfg.T, t0=params.t), reference=params)
    exact = nsoliton_tau(params.at(params.t + cfg.T), grid).values
    err = float(np.linalg.norm(trace.final.values - exact) / np.linalg.norm(exact))
    trace.write_csv(rep.path("trace.csv"))
    save_field_text(rep.path("final.txt"), trace.final)
    save_field_binary(rep.path("final.bof"), trace.final)
    rep.results.update({"grid": [grid.L, grid.n], "oracle_rel_l2": err,
                        "drift": {f"H{n}": trace.drift(n) for n in range(4)},
                        "distances": trace.distances, "fitted_phases": [f.y for f in trace.fits]})
    rep.at_most("rel L2 error vs tau oracle", err, cfg.tolerances["evolve_oracle"])
    for n in (1, 2):
        rep.at_most(f"H{n} drift", trace.drift(n), cfg.tolerances["evolve_drift"])


def cmd_stability(cfg: ExperimentConfig, rep: Report) -> None:
    params = cfg.params()
    grid = cfg.make_grid(default_grid(params.speeds, L=512.0 * max(1.0, 1.0 / min(params.speeds))))
    ecfg = EvolutionConfig(grid, cfg.dt, cfg.T, snapshot_every=min(1.0, cfg.T))
    report = stability_experiment(params.speeds, params.phases, cfg.delta, cfg.T, ecfg, K=cfg.K, seed=cfg.seed,
                                  control_tol=cfg.tolerances["stability_control"])
    report.trace.write_csv(rep.path("trace.csv"))
    rep.results.update({"grid": [grid.L, grid.n], **report.to_dict()})
    rep.at_most("sup orbital distance", report.sup_distance, report.threshold)


def cmd_report_all(cfg: ExperimentConfig, rep: Report) -> list[CriterionResult]:
    results = []
    for k in cfg.criteria:
        res = run_criterion(k, cfg.tolerances)
        print(res.line(), flush=True)
        results.append(res)
        rep.check(f"AC{k} {res.title}", [c.describe() for c in res.checks if not c.passed] or "ok", "all checks",
                  res.passed)
    rep.results["criteria"] = [r.to_dict() for r in results]
    with open(rep.path("summary.csv"), "w") as fh:
        fh.write("criterion,title,status\n")
        for r in results:
            fh.write(f"{r.number},{r.title},{'PASS' if r.passed else 'FAIL'}\n")
    return results


HANDLERS = {
    "construct": cmd_construct, "functionals": cmd_functionals, "variational": cmd_variational,
    "spectrum": cmd_spectrum, "inertia": cmd_inertia, "scaling": cmd_scaling, "evolve": cmd_evolve,
    "stability": cmd_stability, "report-all": cmd_report_all,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
    except (textconfig.ConfigError, UsageError, ValueError, OSError) as exc:
        print(f"bolab: error: {exc}", file=sys.stderr)
        return 2
    rep = Report(cfg)
    try:
        HANDLERS[cfg.command](cfg, rep)
    except (EvolutionError, AssemblyError, CalibrationError, InertiaMismatchError, np.linalg.LinAlgError) as exc:
        rep.check("completed", f"{type(exc).__name__}: {exc}", "no error", False)
    if cfg.command != "report-all":
        rep.print_checks()
    path = rep.write()
    print(f"{'PASS' if rep.passed else 'FAIL'}  report written to {path}")
    return 0 if rep.passed else 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
