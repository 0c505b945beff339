"""Command-line entry point.

stdout carries key=value results, stderr carries diagnostics.  Exit codes:
0 success, 1 invalid input, 2 a verdict other than ``converged``.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import gains as gains_mod
from .config import load_config, resolve_data_file
from .errors import ContainmentError
from .graph_model import load_network, steady_state_map

EXIT_OK, EXIT_INVALID, EXIT_VERDICT = 0, 1, 2

log = logging.getLogger("containment")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


def _num(x) -> str:
    return repr(float(x))


def _out(key, value):
    print(f"{key}={value}")


def cmd_check_graph(args) -> int:
    from .spectra import gain_threshold, solve_lyapunov

    net, _ = load_network(resolve_data_file(args.network))
    part = net.partition
    _out("agents", net.n)
    _out("followers", " ".join(map(str, part.follower_ids)))
    _out("leaders", " ".join(map(str, part.leader_ids)))
    _out("a1", "true" if net.a1 else "false")
    if not net.a1:
        print("some follower is not reachable from any leader; no certificate exists", file=sys.stderr)
        return EXIT_OK
    cert = solve_lyapunov(part.L_FF)
    _out("lambda_max_p", _num(cert.lambda_max_P))
    _out("lambda_min_p", _num(cert.lambda_min_P))
    _out("residual", _num(cert.residual))
    _out(f"k_threshold_gamma_{args.gamma:g}", _num(gain_threshold(cert, args.gamma)))
    W = steady_state_map(part)
    for fid, row in zip(part.follower_ids, W):
        _out(f"w.{fid}", ",".join(_num(v) for v in row))
    return EXIT_OK


def cmd_classify_gain(args) -> int:
    params = {"c": args.c}
    if args.p is not None:
        params["p"] = args.p
    g = gains_mod.gain_from_params(args.family, **params)
    cls = gains_mod.classify(g)
    _out("gain", g.describe())
    _out("a2", cls.A2.value)
    _out("a3", cls.A3.value)
    _out("a4", cls.A4.value)
    for t in args.at:
        _out(f"a({t:g})", _num(g(t)))
    T = args.horizon
    _out(f"integral_0_{T:g}", _num(gains_mod.integral_to(g, T)))
    _out(f"square_integral_0_{T:g}", _num(gains_mod.square_integral_to(g, T)))
    return EXIT_OK


def _overrides(args) -> dict:
    return {"seed": args.seed, "replicates": getattr(args, "replicates", None),
            "output": args.output, "threads": getattr(args, "threads", None)}


def _output_dir(cfg, default: str) -> Path:
    out = Path(cfg.output or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args, argv) -> int:
    from .dynamics import simulate
    from .experiments import batch_hull_distances
    from .report import render_plots, write_error_series, write_provenance, write_trajectory

    cfg = load_config(args.config, _overrides(args))
    out = _output_dir(cfg, "run")
    rec = simulate(cfg)
    contain = batch_hull_distances(rec.x_F, rec.x_R).max(axis=-1)
    write_trajectory(rec, out / "trajectory.csv")
    write_error_series(rec, contain, out / "errors.csv")
    write_provenance(cfg, out, cfg.seed, " ".join(argv))
    render_plots(out)
    _out("output", out)
    _out("seed", cfg.seed)
    _out("aborted", "false" if np.isnan(rec.aborted_at) else f"true t={rec.aborted_at:g}")
    _out("containment_error_T", _num(contain[-1]))
    sq = rec.delta_sq()
    if sq is not None:
        _out("delta_sq_0", _num(sq[0]))
        _out("delta_sq_T", _num(sq[-1]))
    return EXIT_OK


def cmd_montecarlo(args, argv) -> int:
    from .experiments import Verdict, run_ensemble, verdicts_for
    from .report import emit_report

    cfg = load_config(args.config, _overrides(args))
    out = _output_dir(cfg, "montecarlo")
    stats = run_ensemble(cfg)
    verdicts = verdicts_for(stats)
    emit_report(stats, verdicts, out, " ".join(argv))
    _out("output", out)
    _out("seed", cfg.seed)
    _out("replicates", stats.replicates)
    _out("aborted", stats.aborted)
    for i, v in enumerate(verdicts):
        for line in v.lines(prefix=f"verdict{i}."):
            print(line)
        for note in v.notes:
            log.warning("%s: %s", v.theorem, note)
    ok = all(v.verdict == Verdict.CONVERGED for v in verdicts)
    return EXIT_OK if ok else EXIT_VERDICT


def cmd_report(args) -> int:
    from .report import render_plots

    d = Path(args.directory)
    if not d.is_dir():
        raise ContainmentError(f"{d}: not a directory")
    written = render_plots(d)
    if not written:
        raise ContainmentError(f"{d}: no summary.csv or trajectory.csv to render")
    for p in written:
        _out("wrote", p)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="containment", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")

    s = sub.add_parser("check-graph", help="solvability and Lyapunov certificate of a network file")
    s.add_argument("network")
    s.add_argument("--gamma", type=float, default=0.5, help="damping for the reported k threshold")

    s = sub.add_parser("classify-gain", help="assumption flags and sample values of a gain family")
    s.add_argument("--family", required=True)
    s.add_argument("--c", type=float, default=1.0)
    s.add_argument("--p", type=float, default=None)
    s.add_argument("--at", type=float, nargs="+", default=[0.0, 1.0, 10.0, 100.0])
    s.add_argument("--horizon", type=float, default=100.0)

    for name, help_text in (("simulate", "integrate a single sample path"),
                            ("montecarlo", "run an ensemble and report verdicts")):
        s = sub.add_parser(name, help=help_text)
        s.add_argument("config")
        s.add_argument("--seed", type=int)
        s.add_argument("--output", "-o")
        if name == "montecarlo":
            s.add_argument("--replicates", type=int)
            s.add_argument("--threads", type=int)

    s = sub.add_parser("report", help="re-render plots from the CSV files in an output directory")
    s.add_argument("directory")
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:      # --help / --version
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_INVALID
    logging.basicConfig(level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)],
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        if args.command == "check-graph":
            return cmd_check_graph(args)
        if args.command == "classify-gain":
            return cmd_classify_gain(args)
        if args.command == "simulate":
            return cmd_simulate(args, argv)
        if args.command == "montecarlo":
            return cmd_montecarlo(args, argv)
        return cmd_report(args)
    except (ContainmentError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
