"""Command-line front end: ``run``, ``sweep``, ``diagnose`` and ``compare``.

Exit status is 0 on success, 2 for configuration errors, 3 for numerical
failures and 4 for I/O problems.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Optional, Sequence

from . import __version__
from .analysis import (
    emit_reports,
    extract_vk,
    predictions,
    profile_error,
    ratio_series,
    refining,
    slope_fit,
    write_csv,
)
from .config import RunConfig, emit_config, parse_config, with_changes
from .engine import latest_checkpoint, report_from_checkpoint, run_simulation
from .errors import BlowRefineError, ConfigurationError, InsufficientDataError, NumericalError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("blowrefine")

CONFIG_FILE = "config.txt"
CHECKPOINT_DIR = "checkpoints"
TABLE_KS = (10, 15, 20, 25, 30, 35, 40)


def load_config(path: Optional[str], **overrides) -> RunConfig:
    if path is None:
        return parse_config("", **overrides)
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    return parse_config(text, **overrides)


def _write_text(path: str, text: str):
    try:
        with open(path, "w") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def execute_run(cfg: RunConfig, out: str, resume: Optional[str] = None, quiet: bool = False) -> dict:
    """run_simulation plus emit_reports into ``out``; returns the summary."""
    os.makedirs(out, exist_ok=True)
    _write_text(os.path.join(out, CONFIG_FILE), emit_config(cfg))
    progress = None
    if not quiet:
        progress = lambda r: log.info("phase %d: N_k = %.6g, y+ = %.6g", r.k, r.steps, r.y_plus)
    report = run_simulation(cfg, checkpoint_dir=os.path.join(out, CHECKPOINT_DIR),
                            resume=resume, progress=progress)
    return emit_reports(report, out)


def cmd_run(args) -> int:
    cfg = load_config(args.config, output_dir=args.out)
    out = args.out or cfg.output_dir or "run"
    summary = execute_run(cfg, out, resume=args.resume)
    print(f"wrote {out}: M = {summary['M']:.17g}, N_limit = {summary['N_limit']:.17g}")
    return EXIT_OK


def sweep_dirname(hbar: float, a: float) -> str:
    return f"hbar_{hbar:g}_a_{a:g}"


def _sweep_entry(job):
    cfg, out = job
    execute_run(cfg, out, quiet=True)
    return out


def cmd_sweep(args) -> int:
    base = load_config(args.config)
    root = args.out or base.output_dir or "sweep"
    jobs = []
    for hbar in base.sweep_hbar:
        for a in base.sweep_a:
            cfg = with_changes(base, hbar=hbar, a=a, output_dir=None)
            jobs.append((cfg, os.path.join(root, sweep_dirname(hbar, a))))
    n = max(1, int(args.jobs or 1))
    if n == 1:
        done = [_sweep_entry(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n) as pool:
            done = list(pool.map(_sweep_entry, jobs))
    for d in done:
        print(f"wrote {d}")
    return EXIT_OK


def cmd_diagnose(args) -> int:
    from .similarity import DiagnosticsSeries, run_diagnostics

    run_dir = args.run_dir
    report = report_from_checkpoint(latest_checkpoint(os.path.join(run_dir, CHECKPOINT_DIR)))
    diag = run_diagnostics(report)
    write_csv(os.path.join(run_dir, "similarity.csv"), DiagnosticsSeries.CSV_COLUMNS, diag.rows())
    print(f"blow-up point b = {diag.frame.b:.17g}, T = {diag.frame.T:.17g} "
          f"(fit residual {diag.frame.residual:.3g})")
    print("Lyapunov functional: " + diag.lyapunov.summary())
    if diag.classification is not None:
        c = diag.classification
        print(f"behavior: {c.behavior} ({c.detail}); target s*c_2 = {c.target:.6g}")
    return EXIT_OK


def _run_dirs(path: str) -> list:
    if os.path.isdir(os.path.join(path, CHECKPOINT_DIR)):
        return [path]
    subs = sorted(os.path.join(path, d) for d in os.listdir(path)
                  if os.path.isdir(os.path.join(path, d, CHECKPOINT_DIR)))
    if not subs:
        raise OSError(f"no run directories under {path}")
    return subs


def compare_run(report, ratio_tol: float, profile_tol: float, slope_tol: float) -> dict:
    """Ratio, profile error and slope with pass flags for one run."""
    P = report.params
    pred = predictions(P, 2.0 * report.config.amplitude)
    ref = refining(report.records)
    ks, ratios = ratio_series(ref, pred)
    res = {"hbar": P.hbar, "a": P.a, "ratios": dict(zip(ks.tolist(), ratios.tolist()))}
    K = int(ks.max()) if ks.size else 0
    if K:
        res["ratio_ok"] = abs(ratios[-1] - 1.0) <= ratio_tol
        _, v = extract_vk(report.records, K, P)
        res["profile_error"] = profile_error(v, pred)
        res["profile_ok"] = res["profile_error"] <= profile_tol
    try:
        fit = slope_fit(ref, pred)
        res["slope_ratio"] = fit.ratio
        res["slope_ok"] = abs(fit.ratio - 1.0) <= slope_tol
    except InsufficientDataError:
        pass
    return res


def _mark(ok) -> str:
    return "" if ok is None else (" pass" if ok else " FAIL")


def cmd_compare(args) -> int:
    rows = [compare_run(report_from_checkpoint(latest_checkpoint(os.path.join(d, CHECKPOINT_DIR))),
                        args.ratio_tol, args.profile_tol, args.slope_tol)
            for d in _run_dirs(args.run_dir)]
    for hbar in sorted({r["hbar"] for r in rows}, reverse=True):
        group = sorted((r for r in rows if r["hbar"] == hbar), key=lambda r: r["a"])
        print(f"N_k/N_pre, hbar = {hbar:g}")
        print("   k " + "".join(f"{'a = %g' % r['a']:>14}" for r in group))
        ks = sorted({k for r in group for k in r["ratios"]} & set(TABLE_KS)) or \
            sorted({k for r in group for k in r["ratios"]})[-1:]
        for k in ks:
            print(f"{k:4d} " + "".join(f"{r['ratios'].get(k, float('nan')):14.4f}" for r in group))
        print("last" + "".join(f"{_mark(r.get('ratio_ok')):>14}" for r in group))
        print("profile error e")
        print("     " + "".join(f"{r.get('profile_error', float('nan')):14.3e}" for r in group))
        print("     " + "".join(f"{_mark(r.get('profile_ok')):>14}" for r in group))
        print("slope ratio gamma_hat/gamma (20 <= k <= 40)")
        print("     " + "".join(f"{r.get('slope_ratio', float('nan')):14.4f}" for r in group))
        print("     " + "".join(f"{_mark(r.get('slope_ok')):>14}" for r in group))
        print()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="blowrefine", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one simulation and write reports")
    p.add_argument("--config", metavar="PATH")
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--resume", metavar="CHECKPOINT")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run the hbar x a grid")
    p.add_argument("--config", metavar="PATH")
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--jobs", type=int, default=1, metavar="N")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("diagnose", help="similarity diagnostics for a stored run")
    p.add_argument("run_dir")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("compare", help="tables of ratios, profile errors and slopes")
    p.add_argument("run_dir")
    p.add_argument("--ratio-tol", type=float, default=0.10)
    p.add_argument("--profile-tol", type=float, default=6e-3)
    p.add_argument("--slope-tol", type=float, default=0.15)
    p.set_defaults(func=cmd_compare)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericalError, BlowRefineError, ValueError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
