"""Experiment runner: ``rumor analyze|simulate|sweep|xval --config FILE``."""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import coverage as cov
from .config import COVERAGE_MODELS, ConfigError, ExperimentConfig, canonical, load_config, parse_config
from .dist import INF, Geometric, LawError, PointMass, annealed_radius, parse_law
from .env import (env_fireworks_survival, env_line_criteria, env_reverse_W, gw_fireworks_class,
                  gw_reverse_class)
from .line import (DIES, INCONCLUSIVE, SURVIVES_AS, SurvivalReport, fireworks_survival,
                   fireworks_tail_class, reverse_final_law, reverse_survival_class, spreader_density)
from .series import SeriesError
from .sim import SimError, SimModel, estimate
from .tree import (TreeError, TreeSpec, cone_analysis, cone_regime, cone_survival_bounds, disk_bounds,
                   growth_dim, parse_tree, reverse_cone_class, spherical_survival_check)

ANALYZE_COLUMNS = ("model", "substrate", "params", "quantity", "value", "remainder", "status", "criterion")
SIM_COLUMNS = ("model", "substrate", "params", "horizon", "trials", "seed", "estimate", "ci_low",
               "ci_high", "bias_bound", "status")
XVAL_COLUMNS = SIM_COLUMNS + ("analytic_low", "analytic_high", "budget", "discrepancy", "verdict")

EXIT_OK, EXIT_ERROR, EXIT_XVAL = 0, 1, 2


@dataclass
class Report:
    command: str
    columns: tuple
    rows: list = field(default_factory=list)
    failed: bool = False

    @property
    def exit_code(self) -> int:
        return EXIT_XVAL if self.failed else EXIT_OK


def _params(cfg: ExperimentConfig) -> str:
    out = [f"{k}={v}" for k, v in sorted(cfg.laws.model_dump().items()) if v is not None]
    if cfg.coverage is not None:
        out += [f"{k}={v}" for k, v in sorted(cfg.coverage.model_dump().items()) if v is not None]
    return ";".join(out)


def _row(cfg: ExperimentConfig, quantity: str, value=None, remainder=None, status="ok", criterion=""):
    return {"model": cfg.model, "substrate": cfg.substrate, "params": _params(cfg), "quantity": quantity,
            "value": value, "remainder": remainder, "status": status, "criterion": criterion}


def _report_rows(cfg, quantity: str, rep: SurvivalReport) -> list[dict]:
    rows = [_row(cfg, quantity, rep.probability, rep.remainder_bound if rep.probability is not None else None,
                 rep.classification, rep.criterion_used)]
    for k, v in sorted(rep.details.items()):
        if isinstance(v, (int, float)) and not isinstance(v, bool):
            rows.append(_row(cfg, k, float(v), None, rep.classification, rep.criterion_used))
    return rows


# --------------------------------------------------------------------------
# analytic side


def _tree_d(tree: TreeSpec) -> Optional[int]:
    return tree.d if tree.kind in ("homog", "plus") else None


def _cone_rows(cfg, tree: TreeSpec, R, tol) -> list[dict]:
    d = _tree_d(tree)
    if d is None:
        return _report_rows(cfg, "survival", spherical_survival_check(tree, R))
    ca = cone_analysis(d, R, tol)
    reg = cone_regime(d, R)
    rows = [_row(cfg, "rho", ca.rho, tol, reg.classification, "smallest fixed point, rho map"),
            _row(cfg, "psi", ca.psi, tol, reg.classification, "smallest fixed point, psi map"),
            _row(cfg, "E(d^R)", ca.e_dR, None, reg.classification, reg.criterion_used)]
    if tree.kind == "homog":
        lo, hi = ca.surv_low, ca.surv_high
        tag = "full-tree survival bounds"
    else:
        lo, hi = cone_survival_bounds(d, R, "plus", tol)
        tag = "one-sided tree survival bounds"
    rows += [_row(cfg, "survival_low", lo, tol, reg.classification, tag),
             _row(cfg, "survival_high", hi, tol, reg.classification, tag)]
    if ca.size_low is not None and tree.kind == "homog":
        rows += [_row(cfg, "size_low", ca.size_low, None, reg.classification, "E|I| bounds, E(d^R) < 2-1/d"),
                 _row(cfg, "size_high", ca.size_high, None, reg.classification, "E|I| bounds, E(d^R) < 2-1/d")]
    return rows


def _max_children(tree: TreeSpec) -> Optional[int]:
    if tree.is_gw:
        return tree.offspring.support_max
    return max(tree.degrees)


def _disk_rows(cfg, tree: TreeSpec, R) -> list[dict]:
    kw = {}
    d = _tree_d(tree)
    if d is not None:
        kw["d"] = d
    else:
        k = _max_children(tree)
        if k is not None:
            kw["Delta"] = k + 1
        if not tree.is_gw:
            kw["dim"] = growth_dim(tree)
    rows = []
    p = R.p if isinstance(R, Geometric) else None
    for b in disk_bounds(**kw):
        status = "ok"
        if p is not None:
            status = DIES if p < b.lower else ("survives_pos_prob" if p > b.upper else INCONCLUSIVE)
        crit = b.source + (f" ({b.note})" if b.note else "")
        rows += [_row(cfg, "pc_lower", b.lower, None, status, crit),
                 _row(cfg, "pc_upper", b.upper, None, status, crit)]
    return rows


def _gw_reverse_rows(cfg, D, N, R, tol) -> list[dict]:
    rep, gw = gw_reverse_class(D, N, R, tol)
    rows = [_row(cfg, "survival", rep.probability, None, rep.classification, rep.criterion_used)]
    for k in ("mu_D", "phi1", "phi2", "M_c", "pi"):
        rows.append(_row(cfg, k, getattr(gw, k), None, rep.classification, rep.criterion_used))
    return rows


def analyze_rows(cfg: ExperimentConfig) -> list[dict]:
    m, tol = cfg.model, cfg.tolerance
    R = parse_law(cfg.laws.R) if cfg.laws.R else None
    N = parse_law(cfg.laws.N) if cfg.laws.N else None
    if m == "fireworks_line":
        rows = _report_rows(cfg, "P(V)", fireworks_survival(R, tol))
        try:
            rows += _report_rows(cfg, "tail_class", fireworks_tail_class(R))
        except LawError:
            pass
        try:
            dc = spreader_density(R, tol)
        except (LawError, SeriesError):
            dc = None
        if dc is not None and math.isfinite(dc.mu):
            rows += [_row(cfg, "mu", dc.mu, dc.remainder, criterion="spreader spacing mean"),
                     _row(cfg, "sigma2", dc.sigma2, None, criterion="spreader spacing variance"),
                     _row(cfg, "density", dc.density, None, criterion="spreader density 1/mu")]
        return rows
    if m == "reverse_line":
        rep = reverse_survival_class(R)
        rows = _report_rows(cfg, "P(S)", rep)
        if rep.classification == DIES:
            g = reverse_final_law(R, tol)
            rows.append(_row(cfg, "Z_geometric_p", g.p, g.remainder, DIES, "final spreaders ~ Geometric(p)"))
        return rows
    if m == "env_line":
        return (_report_rows(cfg, "class", env_line_criteria(N, R))
                + _report_rows(cfg, "P(V)", env_fireworks_survival(N, R, tol))
                + _report_rows(cfg, "reverse", env_reverse_W(N, R, tol)))
    if m in COVERAGE_MODELS:
        rep = _coverage_report(cfg)
        rows = [_row(cfg, "coverage", None, None, rep.classification, rep.criterion_used)]
        for k, v in sorted(rep.details.items()):
            if isinstance(v, (int, float)) and not isinstance(v, bool):
                rows.append(_row(cfg, k, float(v), None, rep.classification, rep.criterion_used))
        rows += [_row(cfg, "flag", None, None, rep.classification, f) for f in rep.flags]
        return rows

    tree = parse_tree(cfg.substrate)
    if m == "disk":
        return _disk_rows(cfg, tree, R)
    if m == "cone":
        if tree.is_gw:
            return _report_rows(cfg, "survival", gw_fireworks_class(tree.offspring, PointMass(1), R))
        return _cone_rows(cfg, tree, R, tol)
    if m == "env_cone":
        if tree.is_gw:
            return _report_rows(cfg, "survival", gw_fireworks_class(tree.offspring, N, R))
        return _cone_rows(cfg, tree, annealed_radius(N, R), tol)
    if m == "reverse_cone":
        if tree.is_gw:
            return _gw_reverse_rows(cfg, tree.offspring, PointMass(1), R, tol)
        d = _tree_d(tree)
        if d is None:
            raise TreeError("reverse cone analysis needs a homogeneous or Galton-Watson tree")
        return _report_rows(cfg, "survival", reverse_cone_class(d, R, tol))
    raise ConfigError([f"model: no analysis for {m}"])


def _coverage_report(cfg: ExperimentConfig) -> cov.CoverageReport:
    c = cfg.coverage
    if cfg.model == "markov_coverage":
        return cov.markov_coverage_criteria(_markov_cfg(cfg))
    return cov.boolean_criteria(cov.BooleanConfig(c.lam, cov.parse_power_tail(c.tail), c.d, float(cfg.horizon)))


def _markov_cfg(cfg: ExperimentConfig) -> cov.MarkovCoverageConfig:
    c = cfg.coverage
    return cov.MarkovCoverageConfig(c.p01, c.p10, parse_law(cfg.laws.R), cfg.horizon)


def reference_interval(cfg: ExperimentConfig) -> tuple[Optional[float], Optional[float], str]:
    """Analytic [low, high] for the survival probability, or (None, None) when only a class is known."""
    m, tol = cfg.model, cfg.tolerance
    R = parse_law(cfg.laws.R)
    N = parse_law(cfg.laws.N) if cfg.laws.N else None
    tree = parse_tree(cfg.substrate) if cfg.substrate != "line" else None
    if m == "fireworks_line":
        rep = fireworks_survival(R, tol)
    elif m == "env_line":
        rep = env_fireworks_survival(N, R, tol)
    elif m == "reverse_line":
        rep = reverse_survival_class(R)
    elif m in ("cone", "env_cone") and not tree.is_gw and _tree_d(tree) is not None:
        law = R if m == "cone" else annealed_radius(N, R)
        d = _tree_d(tree)
        lo, hi = cone_survival_bounds(d, law, "full" if tree.kind == "homog" else "plus", tol)
        return lo - tol, hi + tol, "cone survival bounds"
    elif m in ("cone", "env_cone") and tree.is_gw:
        rep = gw_fireworks_class(tree.offspring, N if m == "env_cone" else PointMass(1), R)
    elif m == "reverse_cone" and tree.is_gw:
        rep = gw_reverse_class(tree.offspring, PointMass(1), R, tol)[0]
    elif m == "reverse_cone" and _tree_d(tree) is not None:
        rep = reverse_cone_class(_tree_d(tree), R, tol)
    elif m == "disk" and isinstance(R, Geometric):
        rows = _disk_rows(cfg, tree, R)
        if any(r["status"] == DIES for r in rows):
            return 0.0, 0.0, "p below a critical-parameter lower bound"
        return None, None, "disk bounds"
    else:
        return None, None, "no analytic reference"
    if rep.probability is not None:
        lo = rep.bound_low if rep.bound_low is not None else rep.probability
        hi = rep.bound_high if rep.bound_high is not None else rep.probability
        return lo, hi, rep.criterion_used
    if rep.classification == DIES:
        return 0.0, 0.0, rep.criterion_used
    if rep.classification == SURVIVES_AS:
        return 1.0, 1.0, rep.criterion_used
    return None, None, rep.criterion_used


# --------------------------------------------------------------------------
# simulation side


def sim_model(cfg: ExperimentConfig) -> SimModel:
    R = parse_law(cfg.laws.R)
    N = parse_law(cfg.laws.N) if cfg.laws.N else None
    tree = parse_tree(cfg.substrate) if cfg.substrate != "line" else None
    return SimModel(cfg.model, R, cfg.horizon, N=N, tree=tree, eps_residual=cfg.eps_residual,
                    max_vertices=cfg.max_vertices)


def _sim_row(cfg: ExperimentConfig, workers: int) -> dict:
    if cfg.model in COVERAGE_MODELS:
        return _coverage_sim_row(cfg)
    e = estimate(sim_model(cfg), cfg.trials, cfg.master_seed, workers)
    status = "ok" if e.truncated == 0 else f"truncated:{e.truncated}"
    return {"model": cfg.model, "substrate": cfg.substrate, "params": _params(cfg), "horizon": cfg.horizon,
            "trials": cfg.trials, "seed": cfg.master_seed, "estimate": e.mean, "ci_low": e.ci_low,
            "ci_high": e.ci_high, "bias_bound": e.bias_bound, "status": status}


def _coverage_sim_row(cfg: ExperimentConfig) -> dict:
    """Mean covered fraction of the right half of the window, paired with the criteria class."""
    c = cfg.coverage
    if cfg.model == "markov_coverage":
        mc = _markov_cfg(cfg)
        run = lambda rng: cov.sim_markov_coverage(mc, rng)
    else:
        bc = cov.BooleanConfig(c.lam, cov.parse_power_tail(c.tail), c.d, float(cfg.horizon))
        run = lambda rng: cov.sim_boolean_1d(bc, rng)
    frac = np.array([run(np.random.default_rng([cfg.master_seed, i])).covered_fraction
                     for i in range(cfg.trials)])
    mean = float(frac.mean())
    half = 1.959963984540054 * float(frac.std(ddof=1)) / math.sqrt(frac.size) if frac.size > 1 else 0.0
    return {"model": cfg.model, "substrate": cfg.substrate, "params": _params(cfg), "horizon": cfg.horizon,
            "trials": cfg.trials, "seed": cfg.master_seed, "estimate": mean, "ci_low": mean - half,
            "ci_high": mean + half, "bias_bound": None, "status": _coverage_report(cfg).classification}


def _xval_row(cfg: ExperimentConfig, workers: int) -> tuple[dict, bool]:
    row = _sim_row(cfg, workers)
    lo, hi, crit = reference_interval(cfg)
    row.update(analytic_low=lo, analytic_high=hi, budget=None, discrepancy=None)
    if lo is None:
        row.update(verdict="inconclusive", status=f"{row['status']};{crit}")
        return row, True
    p, n = row["estimate"], cfg.trials
    sigma = math.sqrt(max(p * (1 - p), 1.0 / n) / n)
    bias = row["bias_bound"] or 0.0
    # survival to the horizon over-estimates survival by at most the bias bound
    gap = max(lo - p, p - (hi + bias), 0.0)
    budget = bias + 3 * sigma
    ok = gap <= 3 * sigma
    row.update(budget=budget, discrepancy=gap, verdict="pass" if ok else "fail",
               status=f"{row['status']};{crit}")
    return row, ok


# --------------------------------------------------------------------------
# driver


def run_experiment(cfg: ExperimentConfig, workers: int = 1) -> Report:
    if cfg.command == "analyze":
        return Report("analyze", ANALYZE_COLUMNS, analyze_rows(cfg))
    if cfg.command == "simulate":
        return Report("simulate", SIM_COLUMNS, [_sim_row(cfg, workers)])
    if cfg.command == "sweep":
        return Report("sweep", SIM_COLUMNS, [_sim_row(p, workers) for p in cfg.points()])
    rep = Report("xval", XVAL_COLUMNS)
    row, ok = _xval_row(cfg, workers)
    rep.rows.append(row)
    rep.failed = not ok
    return rep


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "inf" if v == INF else repr(v)
    return str(v)


def _json_value(v):
    if isinstance(v, float) and not math.isfinite(v):
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    if isinstance(v, np.generic):
        return _json_value(v.item())
    return v


def render(report: Report, cfg: ExperimentConfig, fmt: str) -> str:
    if fmt == "json":
        rows = [{k: _json_value(r.get(k)) for k in report.columns} for r in report.rows]
        doc = {"command": report.command, "config": json.loads(canonical(cfg)), "rows": rows,
               "verdict": "fail" if report.failed else "ok"}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(report.columns)
    for r in report.rows:
        w.writerow([_cell(r.get(k)) for k in report.columns])
    return buf.getvalue()


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rumor", description="Analytic and Monte Carlo experiments for rumor percolation.")
    p.add_argument("command", nargs="?", choices=("analyze", "simulate", "sweep", "xval"),
                   help="defaults to the config's command")
    p.add_argument("--config", required=True, help="JSON experiment config")
    p.add_argument("--workers", type=int, default=1, help="process count for trial blocks")
    p.add_argument("--out", help="write the report here instead of stdout")
    p.add_argument("--format", choices=("csv", "json"), help="overrides the config's format")
    p.add_argument("--seed", type=int, help="overrides master_seed (unsigned 64-bit)")
    p.add_argument("--canonical", action="store_true", help="print the canonical config and exit")
    return p


def _override(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    return parse_config(json.dumps({**cfg.model_dump(mode="json", by_alias=True, exclude_none=True), **kw}))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.command and args.command != cfg.command:
            if cfg.command == "sweep" or args.command == "sweep":
                raise ConfigError([f"command: config says {cfg.command!r}, command line says {args.command!r}"])
            cfg = _override(cfg, command=args.command)
        if args.seed is not None:
            if not 0 <= args.seed < 1 << 64:
                raise ConfigError(["--seed: must be an unsigned 64-bit integer"])
            cfg = _override(cfg, master_seed=args.seed)
        if args.workers < 1:
            raise ConfigError(["--workers: must be >= 1"])
        if args.canonical:
            text = canonical(cfg)
            report = None
        else:
            report = run_experiment(cfg, args.workers)
            text = render(report, cfg, args.format or cfg.format)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_ERROR
    except (LawError, TreeError, SimError, SeriesError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return report.exit_code if report is not None else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
