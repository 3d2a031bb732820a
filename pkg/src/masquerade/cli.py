"""Command line front end.

Exit codes: 0 success, 2 usage error, 3 configuration or input error,
4 invalid bound parameters or a bound violation (``verify``).
"""
from __future__ import annotations

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Optional, Sequence, TypeVar

from .agents import Mode
from .analysis import BoundParams, InvalidParams, verify_run
from .config import ConfigError, ScenarioConfig
from .engine import EmptyTrace, MetricsSeries, run_phased, run_scenario
from .io import (
    FIELD_KINDS,
    SUMMARY_HEADER,
    MalformedRow,
    format_table,
    load_config,
    summarize,
    summary_row,
    write_metrics,
    write_table,
)
from .money import fmt

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_BOUNDS = 0, 2, 3, 4
NUMERIC_KINDS = {"int", "float", "Decimal", "Optional[int]", "Optional[Decimal]"}

T = TypeVar("T")


class UsageError(Exception):
    pass


def _parallel(fn: Callable[[int], T], n: int) -> list[T]:
    """Run fn(0..n-1) on worker threads; results come back in index order."""
    if n == 1:
        return [fn(0)]
    with ThreadPoolExecutor() as pool:
        return list(pool.map(fn, range(n)))


def _seeded(cfg: ScenarioConfig, i: int) -> ScenarioConfig:
    return cfg.with_(seed=cfg.seed ^ i)


def _out(args) -> Optional[Path]:
    if args.out is None:
        return None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit(out: Optional[Path], stem: str, header, rows) -> str:
    if out is None:
        return format_table(header, rows)
    return write_table(out / stem, header, rows)


def _write_epochs(series: MetricsSeries, path: Path) -> None:
    rows = [
        (ep.index, ep.start_round, ep.end_round, ep.user_tokens.size, ep.adversary_tokens.size,
         fmt(ep.w_u_total), fmt(ep.w_a_total), ep.mev_count, ep.frontrun_count, int(ep.terminal))
        for ep in series.epochs
    ]
    write_table(path, ("epoch", "start_round", "end_round", "user_tokens", "adversary_tokens",
                       "w_u_total", "w_a_total", "mev", "frontrun", "terminal"), rows)


def _load(args) -> ScenarioConfig:
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    return load_config(args.config, **overrides)


# --------------------------------------------------------------------------
# commands


def cmd_run(args) -> int:
    cfg = _load(args)
    out = _out(args)
    runs = _parallel(lambda i: run_scenario(_seeded(cfg, i)), args.seeds)
    if out is not None:
        for i, series in enumerate(runs):
            suffix = "" if args.seeds == 1 else f"_seed{i}"
            write_metrics(series, out / f"metrics{suffix}.csv")
            if series.epochs:
                _write_epochs(series, out / f"epochs{suffix}")
    text = _emit(out, "summary", SUMMARY_HEADER, [summary_row("run", [summarize(s) for s in runs])])
    print(text, end="")
    return EXIT_OK


def cmd_sweep(args) -> int:
    if not args.key or not args.values:
        raise UsageError("sweep needs --key and --values")
    if FIELD_KINDS.get(args.key) not in NUMERIC_KINDS:
        raise UsageError(f"--key must be a numeric config key, got {args.key!r}")
    cfg = _load(args)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    # parse every value before running anything so bad input fails fast
    from .io import coerce_value

    configs = [cfg.with_(**{args.key: coerce_value(args.key, v, FIELD_KINDS[args.key])}) for v in values]
    jobs = [(j, i) for j in range(len(configs)) for i in range(args.seeds)]
    runs = _parallel(lambda n: run_scenario(_seeded(configs[jobs[n][0]], jobs[n][1])), len(jobs))
    out = _out(args)
    rows = []
    for j, v in enumerate(values):
        group = [summarize(s) for (jj, _), s in zip(jobs, runs) if jj == j]
        rows.append([args.key, v, *summary_row(f"{args.key}={v}", group)[1:]])
        if out is not None:
            for (jj, i), s in zip(jobs, runs):
                if jj == j:
                    write_metrics(s, out / f"metrics_{args.key}={v}_seed{i}.csv")
    header = ("key", "value", *SUMMARY_HEADER[1:])
    print(_emit(out, "sweep", header, rows), end="")
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = _load(args)
    params = BoundParams.from_config(cfg)

    def one(i: int):
        c = _seeded(cfg, i)
        if c.mode is Mode.PHASED:
            series = run_phased(c, epochs=args.epochs)
        else:
            series = run_scenario(c)
        eps = [ep for ep in series.epochs if ep.index <= args.epochs]
        return verify_run(series, params, eps)

    try:
        reports = _parallel(one, args.seeds)
    except InvalidParams as exc:
        print("parameters outside the bound preconditions:", file=sys.stderr)
        for v in exc.violations:
            print(f"  {v}", file=sys.stderr)
        return EXIT_BOUNDS
    out = _out(args)
    rows = []
    for i, rep in enumerate(reports):
        for ch in rep.epochs:
            rows.append((
                i, ch.epoch, f"{float(ch.w_a):.6g}", f"{float(ch.adv_upper):.6g}",
                f"{float(ch.adv_lower):.6g}", f"{float(ch.w_u):.6g}", f"{float(ch.user_lower):.6g}",
                "" if ch.frontrun_fraction is None else f"{float(ch.frontrun_fraction):.6g}",
                "" if ch.fraction_bound is None else f"{float(ch.fraction_bound):.6g}",
                int(ch.balanced),
            ))
    header = ("seed_index", "epoch", "w_a", "adv_upper", "adv_lower", "w_u", "user_lower",
              "frontrun_fraction", "fraction_bound", "balanced")
    _emit(out, "bounds", header, rows)
    violations = [(i, v) for i, rep in enumerate(reports) for v in rep.violations]
    proof = [(i, v) for i, rep in enumerate(reports) for v in rep.proof_violations]
    checked = sum(len(rep.epochs) for rep in reports)
    print(f"checked {checked} epochs over {args.seeds} seeds: "
          f"{len(violations)} bound violations, {len(proof)} proof-invariant violations")
    for i, v in violations + proof:
        print(f"  seed {i}: {v}")
    return EXIT_BOUNDS if violations else EXIT_OK


def cmd_compare(args) -> int:
    cfg = _load(args)
    try:
        modes = [Mode(m.strip()) for m in args.modes.split(",")]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    jobs = [(m, i) for m in modes for i in range(args.seeds)]

    def one(n: int) -> MetricsSeries:
        mode, i = jobs[n]
        c = _seeded(cfg, i).with_(mode=mode)
        return run_phased(c, epochs=args.epochs) if mode is Mode.PHASED and args.epochs else run_scenario(c)

    runs = _parallel(one, len(jobs))
    out = _out(args)
    rows = [summary_row(m.value, [summarize(s) for (mm, _), s in zip(jobs, runs) if mm is m]) for m in modes]
    print(_emit(out, "compare", SUMMARY_HEADER, rows), end="")
    if Mode.MASQUERADE in modes and Mode.PHASED in modes:
        cont = runs[jobs.index((Mode.MASQUERADE, 0))]
        ph = runs[jobs.index((Mode.PHASED, 0))]
        n = min(len([e for e in cont.epochs if not e.terminal]), len([e for e in ph.epochs if not e.terminal]))
        erows = [
            (e, fmt(cont.epochs[e].w_u_total), fmt(ph.epochs[e].w_u_total),
             fmt(ph.epochs[e].w_u_total - cont.epochs[e].w_u_total))
            for e in range(n)
        ]
        print(_emit(out, "epoch_compare", ("epoch", "w_u_continuous", "w_u_phased", "difference"), erows), end="")
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="masquerade", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seeds=1):
        sp.add_argument("--config", required=True, help="key=value scenario file")
        sp.add_argument("--out", help="output directory (nothing is written without it)")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--seeds", type=int, default=seeds, help="scenarios per setting, seeded seed^i")

    common(sub.add_parser("run", help="run one scenario"))
    sp = sub.add_parser("sweep", help="one run per value of a config key")
    common(sp)
    sp.add_argument("--key")
    sp.add_argument("--values")
    sp = sub.add_parser("verify", help="check a run against the analytic bounds")
    common(sp)
    sp.add_argument("--epochs", type=int, default=30)
    sp = sub.add_parser("compare", help="side-by-side summaries across modes")
    common(sp)
    sp.add_argument("--modes", default="masquerade,status-quo,ideal")
    sp.add_argument("--epochs", type=int, default=None, help="epochs for phased mode")
    return p


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "verify": cmd_verify, "compare": cmd_compare}


def dispatch(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    if getattr(args, "seeds", 1) < 1 or getattr(args, "epochs", 0) is not None and getattr(args, "epochs", 0) < 0:
        print("error: --seeds must be >= 1 and --epochs >= 0", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, MalformedRow, EmptyTrace, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def main() -> None:
    sys.exit(dispatch())
