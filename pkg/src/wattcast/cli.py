"""Command-line driver: ``wattcast <subcommand> [flags]``.

Exit status is 0 when every check passes, 1 when a verification fails and
2 on usage or input errors. Reports are ``key=value`` lines on stdout;
diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path
from typing import Sequence

from .analysis import brute_force_opt, objective, verify_conditions
from .analysis.oracle import DEFAULT_DELTA_OPT
from .blaps import simulate
from .errors import WattcastError
from .model import (
    Config,
    emit_schedule,
    emit_trace,
    fmt,
    gen_random_trace,
    parse_schedule,
    parse_trace,
)
from .power import PowerFunction, parse_power
from .rounding import default_delta, emit_integral, gen_rounding, serialize_slots, verify_rounding

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
DEFAULT_POWER = "monomial 2"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _read(path: str) -> str:
    return Path(path).read_text()


def _power(spec: str) -> PowerFunction:
    """``--power`` takes a file path or the spec text itself (``;;`` separates lines)."""
    if os.path.isfile(spec):
        return parse_power(_read(spec))
    return parse_power(spec.replace(";;", "\n"))


def _speeds(text: str | None) -> list[float] | None:
    if text is None:
        return None
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad speed list {text!r}") from None


def _write(path: str | None, text: str, out) -> None:
    if path is None:
        out.write(text)
    else:
        Path(path).write_text(text)


def _emit(out, lines: Sequence[str]) -> None:
    out.write("".join(f"{line}\n" for line in lines))


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="wattcast", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-trace", help="write a seeded random trace")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--pages", type=int, default=3)
    g.add_argument("--requests", type=int, default=8)
    g.add_argument("--sigma-max", type=float, default=2.0)
    g.add_argument("--horizon", type=float, default=4.0)
    g.add_argument("--out")

    s = sub.add_parser("simulate", help="run the latest-arrival sharing policy")
    s.add_argument("--trace", required=True)
    s.add_argument("--power", default=DEFAULT_POWER)
    s.add_argument("--eps", type=float, default=1.0 / 6.0)
    s.add_argument("--beta", type=float)
    s.add_argument("--accounting", choices=("augmented", "raw"), default="augmented")
    s.add_argument("--out", help="schedule dump path (default: stdout, before the metrics)")
    s.add_argument("--events", help="write the event log here")

    r = sub.add_parser("round", help="convert a fractional schedule to an integral one")
    r.add_argument("--schedule", required=True)
    r.add_argument("--trace", required=True)
    r.add_argument("--eps-prime", type=float, default=1.0)
    r.add_argument("--delta", type=float)
    r.add_argument("--out", help="integral dump path (default: stdout, before the report)")

    o = sub.add_parser("oracle", help="exact optimum on a slot and speed grid")
    o.add_argument("--trace", required=True)
    o.add_argument("--power", default=DEFAULT_POWER)
    o.add_argument("--delta-opt", type=float, default=DEFAULT_DELTA_OPT)
    o.add_argument("--speeds", help="comma-separated speed grid")
    o.add_argument("--horizon", type=float)
    o.add_argument("--out", help="schedule dump path (default: stdout, before the metrics)")

    v = sub.add_parser("verify", help="check potential-function conditions against a reference")
    v.add_argument("--alg", required=True)
    v.add_argument("--ref", required=True)
    v.add_argument("--eps", type=float, default=1.0 / 6.0)

    c = sub.add_parser("compare", help="simulate, solve the oracle and verify in one go")
    c.add_argument("--trace", help="trace file; omit with --trials to use seeded traces")
    c.add_argument("--power", default=DEFAULT_POWER)
    c.add_argument("--eps", type=float, default=1.0 / 6.0)
    c.add_argument("--delta-opt", type=float, default=DEFAULT_DELTA_OPT)
    c.add_argument("--speeds")
    c.add_argument("--horizon", type=float)
    c.add_argument("--trials", type=int)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--pages", type=int, default=3)
    c.add_argument("--requests", type=int, default=8)
    c.add_argument("--sigma-max", type=float, default=2.0)
    c.add_argument("--trace-horizon", type=float, default=4.0)
    c.add_argument("--out-dir", help="write alg.sched, ref.sched and report.txt here")
    return p


def _cmd_gen_trace(args, out) -> int:
    tr = gen_random_trace(args.seed, args.pages, args.requests, args.sigma_max, args.horizon)
    _write(args.out, emit_trace(tr), out)
    return EXIT_OK


def _cmd_simulate(args, out) -> int:
    cfg = Config(eps=args.eps, beta=args.beta, accounting=args.accounting)
    tr = parse_trace(_read(args.trace))
    fs = simulate(tr, _power(args.power), cfg)
    _write(args.out, emit_schedule(fs), out)
    if args.events:
        Path(args.events).write_text(fs.event_log())
    _emit(out, objective(fs, mode=cfg.accounting).lines())
    return EXIT_OK


def _cmd_round(args, out) -> int:
    cfg = Config(eps_prime=args.eps_prime, delta=args.delta)
    fs = parse_schedule(_read(args.schedule))
    tr = parse_trace(_read(args.trace))
    if tr != fs.trace:
        print("wattcast: error: trace does not match the schedule's trace", file=sys.stderr)
        return EXIT_USAGE
    delta = cfg.delta if cfg.delta is not None else default_delta(tr)
    ints = gen_rounding(serialize_slots(fs, delta), tr, cfg.eps_prime)
    rep = verify_rounding(fs, ints, fs.power, cfg.eps_prime, delta)
    _write(args.out, emit_integral(ints), out)
    _emit(out, rep.lines())
    for v in rep.violations:
        print(v, file=sys.stderr)
    return EXIT_OK if rep.passed else EXIT_FAIL


def _cmd_oracle(args, out) -> int:
    tr = parse_trace(_read(args.trace))
    fs, m = brute_force_opt(tr, _power(args.power), args.horizon, args.delta_opt,
                            _speeds(args.speeds))
    _write(args.out, emit_schedule(fs), out)
    _emit(out, m.lines())
    return EXIT_OK


def _cmd_verify(args, out) -> int:
    alg = parse_schedule(_read(args.alg))
    ref = parse_schedule(_read(args.ref))
    rep = verify_conditions(alg, ref, args.eps)
    out.write(rep.text())
    for v in rep.violations:
        print(v, file=sys.stderr)
    return EXIT_OK if rep.passed else EXIT_FAIL


def _compare_one(tr, P, args):
    cfg = Config(eps=args.eps)
    alg = simulate(tr, P, cfg)
    ref, _ = brute_force_opt(tr, P, args.horizon, args.delta_opt, _speeds(args.speeds))
    return alg, ref, verify_conditions(alg, ref, cfg.eps)


def _cmd_compare(args, out) -> int:
    P = _power(args.power)
    if args.trials is None:
        if args.trace is None:
            raise _UsageError("compare needs --trace or --trials")
        alg, ref, rep = _compare_one(parse_trace(_read(args.trace)), P, args)
        if args.out_dir:
            d = Path(args.out_dir)
            d.mkdir(parents=True, exist_ok=True)
            (d / "alg.sched").write_text(emit_schedule(alg))
            (d / "ref.sched").write_text(emit_schedule(ref))
            (d / "report.txt").write_text(rep.text())
        out.write(rep.text())
        return EXIT_OK if rep.passed else EXIT_FAIL

    if args.trace is not None:
        raise _UsageError("--trials generates its own traces; drop --trace")
    if args.trials < 1:
        raise _UsageError("--trials must be positive")
    worst, failed = 0.0, 0
    for seed in range(args.seed, args.seed + args.trials):
        tr = gen_random_trace(seed, args.pages, args.requests, args.sigma_max,
                              args.trace_horizon)
        _, _, rep = _compare_one(tr, P, args)
        worst = max(worst, rep.ratio)
        failed += not rep.passed
        out.write(f"seed={seed} ratio={fmt(rep.ratio)} "
                  f"running_max_residual={fmt(rep.max_residual)} "
                  f"pass={'true' if rep.passed else 'false'}\n")
    _emit(out, [f"trials={args.trials}", f"max_ratio={fmt(worst)}", f"failed={failed}",
                f"pass={'true' if failed == 0 else 'false'}"])
    return EXIT_OK if failed == 0 else EXIT_FAIL


class _UsageError(Exception):
    pass


_COMMANDS = {
    "gen-trace": _cmd_gen_trace,
    "simulate": _cmd_simulate,
    "round": _cmd_round,
    "oracle": _cmd_oracle,
    "verify": _cmd_verify,
    "compare": _cmd_compare,
}


def run_cli(argv: Sequence[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args, out)
    except (WattcastError, ValueError, OSError, _UsageError, argparse.ArgumentTypeError) as exc:
        print(f"wattcast {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
