"""Command-line entry point: ``horizon-calc {verify,simulate,optimize,gallery}``.

Exit status: 0 on success, 1 when a verification fails, 2 on usage or
configuration errors.  Every run writes its CSV files plus ``manifest.json``
into ``--out``.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .calculus import identity_suite
from .config import ConfigError, RunConfig, parse_config
from .gallery import counterexample_gallery
from .grid_paths import ScenarioBatch
from .interval_sets import INF
from .market import (
    MarketConfig,
    build_market_processes,
    closed_form_strategy,
    grid_search_oracle,
    simulate_stock,
    w_grid,
    wealth_from_fractions,
)

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
SIM_CHUNK = 250


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return ""
    x = float(x)
    if math.isnan(x):
        return ""
    return "%.17g" % x


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in r])


def write_manifest(out: Path, args, cfg: RunConfig, sizes: dict, outputs: list[str]) -> None:
    manifest = {
        "subcommand": args.command,
        "engine_version": __version__,
        "config_digest": cfg.digest,
        "seed": args.seed if args.seed is not None else cfg.simulation.seed,
        "sizes": sizes,
        "outputs": outputs + ["manifest.json"],
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _seed(args, cfg: RunConfig) -> int:
    return cfg.simulation.seed if args.seed is None else args.seed


def _market(args, cfg: RunConfig) -> MarketConfig:
    if cfg.market is None:
        raise ConfigError(["this subcommand needs a [market] section (pass --config)"])
    m = cfg.market
    if args.periods is not None:
        if not 1 <= args.periods <= m.n_periods:
            raise ConfigError([f"--periods must be between 1 and {m.n_periods}"])
        m = replace(m, sigma=m.sigma[: args.periods], a=m.a[: args.periods])
    return replace(m, seed=_seed(args, cfg),
                   n_paths=args.paths if args.paths is not None else cfg.simulation.paths,
                   steps_per_unit=args.steps if args.steps is not None else cfg.simulation.steps_per_unit)


def run_verify(args, cfg: RunConfig, out: Path) -> int:
    v = cfg.verify
    n_steps = args.steps if args.steps is not None else v.n_steps
    n_paths = args.paths if args.paths is not None else v.n_paths
    suite = identity_suite(_seed(args, cfg), n_steps, n_paths, v.n_sets)
    gal = counterexample_gallery(_seed(args, cfg))
    rows = [(r.law, r.max_residual, r.tolerance, r.passed) for r in suite.results]
    rows += _gallery_rows(gal)
    write_csv(out / "verify.csv", ("law", "max_residual", "tolerance", "pass"), rows)
    write_manifest(out, args, cfg, {"n_steps": n_steps, "n_paths": n_paths, "n_sets": v.n_sets}, ["verify.csv"])
    failed = [r for r in rows if not r[3]]
    _print_table(rows)
    if failed:
        print(f"{len(failed)} law(s) failed:", file=sys.stderr)
        for r in failed:
            print(f"  {r[0]}: residual {fmt(r[1])} > tolerance {fmt(r[2])}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def _gallery_rows(gal) -> list[tuple]:
    s, c, f = gal.stieltjes, gal.compensator, gal.step
    rows = [("gallery_divergent_probe", s.probe_rel_error, 0.02, s.probe_rel_error <= 0.02),
            ("gallery_compensator_bracket", c.bracket_sup, 0.0, c.bracket_sup == 0.0 and c.process_sup > 0),
            ("gallery_compensator_not_inner", 0.0 if not c.inner else 1.0, 0.0, not c.inner and c.integral_rejected)]
    step_err = max(abs(a - b) for a, b in zip(f.values, f.expected))
    gap = max(abs(g) for g in f.mean_gap)
    rows.append(("gallery_step_compensator", max(step_err, gap), 0.0, step_err == 0.0 and gap == 0.0))
    return rows


def _print_table(rows) -> None:
    width = max(len(r[0]) for r in rows)
    for law, res, tol, ok in rows:
        print(f"{law:<{width}}  {fmt(res):>24}  <= {fmt(tol):<8} {'pass' if ok else 'FAIL'}")


def run_gallery(args, cfg: RunConfig, out: Path) -> int:
    gal = counterexample_gallery(_seed(args, cfg))
    s, c, f = gal.stieltjes, gal.compensator, gal.step
    rows = [("divergent_probe_value", s.probe_value, s.probe_target, s.probe_rel_error <= 0.02)]
    for n, v in sorted(s.end_values.items()):
        rows.append((f"divergent_end_value_n{n}", v, math.log(n), True))
    rows += [("compensator_bracket_sup", c.bracket_sup, 0.0, c.bracket_sup == 0.0),
             ("compensator_process_sup", c.process_sup, 0.0, c.process_sup > 0),
             ("compensator_inner_z", c.z_score, 4.0, not c.inner),
             ("compensator_integral_rejected", c.integral_rejected, True, c.integral_rejected)]
    for p, v, e in zip(f.probes, f.values, f.expected):
        rows.append((f"step_compensator_t{p:g}", v, e, v == e))
    write_csv(out / "gallery.csv", ("item", "value", "reference", "pass"), rows)
    write_manifest(out, args, cfg, {"stieltjes_n_steps": s.n_steps, "compensator_paths": c.n_paths}, ["gallery.csv"])
    for r in rows:
        print(f"{r[0]:<32} {fmt(r[1]):>24}  {'pass' if r[3] else 'FAIL'}")
    return EXIT_OK if gal.passed else EXIT_FAIL


def run_simulate(args, cfg: RunConfig, out: Path) -> int:
    m = _market(args, cfg)
    grid = m.grid()
    strat = closed_form_strategy(m)
    ends = m.period_ends(grid)
    frac = strat.fraction_columns(grid, ends)
    n_csv = min(cfg.simulation.csv_paths, m.n_paths)
    t = grid.nodes
    exited = 0
    log_growth = []
    with (out / "stock.csv").open("w", newline="", encoding="utf-8") as fs, \
            (out / "wealth.csv").open("w", newline="", encoding="utf-8") as fw:
        ws, ww = csv.writer(fs, lineterminator="\n"), csv.writer(fw, lineterminator="\n")
        ws.writerow(("path_id", "node", "time", "price", "in_set"))
        ww.writerow(("path_id", "node", "time", "wealth", "fraction"))
        for part in ScenarioBatch(m.n_paths, m.seed).chunks(SIM_CHUNK):
            proc = build_market_processes(m, part, grid)
            S = simulate_stock(m, proc)
            X = wealth_from_fractions(frac, S, m.x0).wealth
            last = S.domain.last_member
            exited += int((proc.exit.index.index != INF).sum())
            log_growth.append(np.log(X.filled()[np.arange(part.n_paths), last] / m.x0))
            for i in range(part.n_paths):
                pid = part.first_path + i
                if pid >= n_csv:
                    break
                sv, xv, mk = S.values[i], X.values[i], S.mask[i]
                for k in range(grid.n_nodes):
                    ws.writerow((fmt(pid), fmt(k), fmt(t[k]), fmt(sv[k]) if mk[k] else "", fmt(bool(mk[k]))))
                    ww.writerow((fmt(pid), fmt(k), fmt(t[k]), fmt(xv[k]) if mk[k] else "",
                                 fmt(frac[k]) if mk[k] else ""))
    starts = [0.0] + list(m.a[:-1])
    write_csv(out / "strategy.csv", ("period", "start", "end", "mu", "sigma", "fraction"),
              [(n + 1, starts[n], m.a[n], strat.mu[n], strat.sigma[n], strat.fractions[n])
               for n in range(m.n_periods)])
    g = np.concatenate(log_growth)
    write_csv(out / "summary.csv", ("statistic", "value"),
              [("paths", m.n_paths), ("exit_before_horizon_fraction", exited / m.n_paths),
               ("mean_log_wealth_growth", float(g.mean())),
               ("stderr_log_wealth_growth", float(g.std(ddof=1) / math.sqrt(g.size)) if g.size > 1 else 0.0)])
    write_manifest(out, args, cfg, {"n_paths": m.n_paths, "n_steps": grid.n_steps, "horizon": grid.horizon,
                                    "csv_paths": n_csv},
                   ["stock.csv", "wealth.csv", "strategy.csv", "summary.csv"])
    print(f"simulated {m.n_paths} paths on {grid.n_steps} steps; wrote {n_csv} paths to CSV")
    return EXIT_OK


def run_optimize(args, cfg: RunConfig, out: Path) -> int:
    m = _market(args, cfg)
    o = cfg.optimize
    ws = w_grid(o.w_min, o.w_max, o.w_step)
    rows = []
    for n in range(1, m.n_periods + 1):
        r = grid_search_oracle(m, n, ws)
        rows.append((n, r.closed_form, r.argmax, r.elu_closed_form, r.elu_argmax, r.stderr_argmax))
        print(f"period {n}: closed form {fmt(r.closed_form)}, oracle {fmt(r.argmax)}")
    write_csv(out / "optimize.csv",
              ("period", "closed_form_w", "oracle_w", "elu_at_closed_form", "elu_at_oracle", "stderr"), rows)
    write_manifest(out, args, cfg, {"n_paths": m.n_paths, "n_steps": m.grid().n_steps,
                                    "w_grid": [o.w_min, o.w_max, o.w_step]}, ["optimize.csv"])
    return EXIT_OK


COMMANDS = {"verify": run_verify, "simulate": run_simulate, "optimize": run_optimize, "gallery": run_gallery}


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be in [0, 2**64)")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML run configuration")
    common.add_argument("--seed", type=_u64, help="override the configured seed")
    common.add_argument("--paths", type=_positive, help="number of scenarios")
    common.add_argument("--steps", type=_positive,
                        help="grid steps (per unit time for market runs, total for verify)")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")
    common.add_argument("--periods", type=_positive, help="use only the first N market periods")
    p = argparse.ArgumentParser(prog="horizon-calc", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("verify", parents=[common], help="run the identity suite and the gallery")
    sub.add_parser("simulate", parents=[common], help="simulate stock and optimal wealth paths")
    sub.add_parser("optimize", parents=[common], help="compare closed-form and brute-force fractions")
    sub.add_parser("gallery", parents=[common], help="run the counterexample gallery")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config) if args.config is not None else RunConfig()
        args.out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](args, cfg, args.out)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
