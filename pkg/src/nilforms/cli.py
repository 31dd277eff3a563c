"""Command-line driver: verify, sweep and rumin commands.

Exit codes: 0 success, 1 invariant-suite failure, 2 config or validation
error, 3 I/O error.  Every command writes CSV tables plus a manifest.json
with per-file sha256 hashes into the output directory; unless disabled,
report figures are rendered alongside the delimited output.
"""
from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from . import checks as checks_mod
from .config import ConfigError, RunConfig, load_config
from .models import InvariantModel, ModeGrid
from .operators import OperatorCache
from .rumin import RuminComplex
from .spectral import fit_rates, limit_vs_rumin, operator_order_fit, \
    spectral_sequence_report, sweep
from . import report as report_mod


def _sector_models(cfg: RunConfig):
    """(sector label, model) pairs named in the config."""
    if cfg.model == "invariant":
        return [("inv", InvariantModel(cfg.m))]
    return [(f"n{n}", ModeGrid(cfg.m, n, cfg.N)) for n in cfg.n]


def _prepare_out(cfg: RunConfig, override: str | None) -> str:
    out = override or cfg.out_dir
    os.makedirs(out, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def cmd_verify(cfg: RunConfig, out_dir: str) -> int:
    t0 = time.perf_counter()
    n0 = cfg.n[0] if cfg.n else 0
    results = checks_mod.run_all(cfg.m, cfg.model, n0, cfg.N, seed=cfg.seed)
    rows = []
    failed = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{r.name}: {r.residual:.1e} {r.direction} {r.threshold:.1e} {status}")
        rows.append([r.name, float(r.residual), float(r.threshold), r.passed, r.note])
        failed += 0 if r.passed else 1
    path = os.path.join(out_dir, "verify.csv")
    report_mod.write_csv(path, ["check", "residual", "threshold", "passed", "note"], rows)
    files = [path]
    report_mod.write_manifest(out_dir, cfg, files,
                              {"verify": (time.perf_counter() - t0) * 1e3})
    if failed:
        print(f"{failed} invariant check(s) failed")
        return 1
    print(f"all {len(results)} invariant checks passed")
    return 0


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

def cmd_sweep(cfg: RunConfig, out_dir: str) -> int:
    t0 = time.perf_counter()
    schedule = cfg.schedule()
    eig_rows, track_rows, ss_rows = [], [], []
    warn = 0
    records, fits_by_degree, reports_by_degree = [], {}, {}
    timings = {}
    for sector, model in _sector_models(cfg):
        ts = time.perf_counter()
        rc = RuminComplex(model)
        cache = OperatorCache(model)
        for k in cfg.degrees():
            rec = sweep(model, k, schedule, cfg.K, seed=cfg.seed, cache=cache,
                        tracking_tol=cfg.tol_tracking)
            for t in rec.tracks:
                t.track_id = f"{sector}_{t.track_id}"
            fits = fit_rates(rec, cfg.tail_length, class_band=cfg.class_band)
            reports = limit_vs_rumin(rec, rc, fits, cfg.tail_length)
            ss = spectral_sequence_report(rec, rc, fits, cfg.tail_length)
            records.append(rec)
            fits_by_degree.setdefault(k, []).extend(fits)
            reports_by_degree.setdefault(k, []).extend(reports)

            for j, eps in enumerate(rec.schedule):
                conv = rec.converged[j]
                if not conv:
                    warn += 1
                by_rank = {}
                for t in rec.tracks:
                    r = t.rank_at(j)
                    if r is not None:
                        by_rank[r] = t.track_id
                for rank, pair in enumerate(rec.levels[j]):
                    eig_rows.append([
                        float(eps), k, by_rank.get(rank, f"{sector}_k{k}_unmatched"),
                        float(pair.value), float(pair.residual), bool(conv),
                    ])
            rep_by_id = {r.track_id: r for r in reports}
            for f in fits:
                rep = rep_by_id.get(f.track_id)
                track_rows.append([
                    f.track_id,
                    float(f.exponent) if f.exponent == f.exponent else float("nan"),
                    f.class_l,
                    float(f.residual) if f.residual == f.residual else float("nan"),
                    float(rep.final_angle_deg) if rep else float("nan"),
                    float(rep.beta_norm[-1]) if rep and rep.beta_norm else float("nan"),
                ])
            for row in ss:
                ss_rows.append([row.degree, row.level, row.scale_count,
                                row.direct_dim, row.match])
        timings[f"sweep_{sector}"] = (time.perf_counter() - ts) * 1e3

    files = []
    p = os.path.join(out_dir, "eigenvalues.csv")
    report_mod.write_csv(p, ["eps", "degree", "track_id", "lambda", "residual",
                             "converged"], eig_rows)
    files.append(p)
    p = os.path.join(out_dir, "tracks.csv")
    report_mod.write_csv(p, ["track_id", "fitted_exponent", "class_l",
                             "fit_residual", "final_rumin_angle",
                             "final_beta_norm"], track_rows)
    files.append(p)
    p = os.path.join(out_dir, "ss_report.csv")
    report_mod.write_csv(p, ["degree", "l", "scale_count", "direct_dim", "match"],
                         ss_rows)
    files.append(p)
    if cfg.plots:
        files += report_mod.render_sweep_figures(out_dir, records, fits_by_degree,
                                                 reports_by_degree)
    timings["total"] = (time.perf_counter() - t0) * 1e3
    report_mod.write_manifest(out_dir, cfg, files, timings)
    if warn:
        print(f"warning: {warn} eigensolve(s) did not converge")
    print(f"sweep complete: {len(eig_rows)} eigenvalue rows, "
          f"{len(track_rows)} tracks, outputs in {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# rumin
# ---------------------------------------------------------------------------

def cmd_rumin(cfg: RunConfig, out_dir: str) -> int:
    t0 = time.perf_counter()
    inv = InvariantModel(cfg.m)
    sectors = [("inv", inv)]
    if cfg.model == "mode":
        sectors += [(f"n{n}", ModeGrid(cfg.m, n, cfg.N)) for n in cfg.n]

    fiber_dims = {}
    rc_inv = RuminComplex(inv)
    for k in range(2 * cfg.m + 2):
        fiber_dims[k] = rc_inv.basis(k).dim_fiber
    dim_rows = [[k, fiber_dims[k]] for k in sorted(fiber_dims)]

    harm_rows = []
    for sector, model in sectors:
        rc = RuminComplex(model)
        for k in range(2 * cfg.m + 2):
            hs = rc.harmonic_space(k, tol=cfg.tol_nullspace
                                   if model.kind == "invariant" else None)
            harm_rows.append([sector, k, hs.dim, hs.dim_unfiltered])

    order_rows = []
    grid = next((mod for _, mod in sectors if mod.kind == "mode"), None)
    if grid is not None:
        rc = RuminComplex(grid)
        ladder = [t for t in (1, 2, 3, 4) if t <= grid.N // 4] or [1, 2]
        for k in range(2 * cfg.m + 1):
            if k == cfg.m:
                op = rc.d_R()
                name = "d_R"
            else:
                op = rc.d_xi(k)
                name = "d_xi"
            if op.mat.shape[0] == 0 or op.mat.nnz == 0:
                continue
            slope = operator_order_fit(op.mat, grid, rc.basis(k).dim_fiber,
                                       ladder, seed=cfg.seed)
            order_rows.append([name, k, float(slope)])

    files = []
    p = os.path.join(out_dir, "rumin_dims.csv")
    report_mod.write_csv(p, ["degree", "fiber_dim"], dim_rows)
    files.append(p)
    p = os.path.join(out_dir, "rumin_harmonic.csv")
    report_mod.write_csv(p, ["sector", "degree", "harmonic_dim",
                             "harmonic_dim_unfiltered"], harm_rows)
    files.append(p)
    p = os.path.join(out_dir, "rumin_orders.csv")
    report_mod.write_csv(p, ["operator", "degree_from", "fitted_order"], order_rows)
    files.append(p)
    if cfg.plots:
        files += report_mod.render_rumin_figure(
            out_dir, fiber_dims,
            [(s, k, d) for s, k, d, _ in harm_rows],
            [(n, k, v) for n, k, v in order_rows],
        )
    report_mod.write_manifest(out_dir, cfg, files,
                              {"rumin": (time.perf_counter() - t0) * 1e3})
    print(f"rumin structure written to {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nilforms",
        description="Adiabatic Hodge Laplacians and the Rumin complex on "
                    "Heisenberg nilmanifolds",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("verify", cmd_verify), ("sweep", cmd_sweep),
                     ("rumin", cmd_rumin)):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="key=value config file")
        p.add_argument("--out", default=None, help="output directory override")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--plots", dest="plots", action="store_true", default=None)
        p.add_argument("--no-plots", dest="plots", action="store_false")
        p.set_defaults(fn=fn)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.plots is not None:
            cfg.plots = args.plots
        cfg.validate()
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"cannot read config: {err}", file=sys.stderr)
        return 3
    try:
        out_dir = _prepare_out(cfg, args.out)
    except OSError as err:
        print(f"cannot create output directory: {err}", file=sys.stderr)
        return 3
    try:
        return args.fn(cfg, out_dir)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
