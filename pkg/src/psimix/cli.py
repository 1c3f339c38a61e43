"""Command-line front end.

Every command writes CSV data files plus a JSON manifest recording the
exact inputs.  Data files depend only on the inputs and the seed; the
manifest's timestamp is the only field that changes between reruns.

Exit codes: 0 success, 2 bad input, 3 infeasible or over a size cap,
4 non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

from . import __version__
from .bounds import SWEEP_COLUMNS, convergence_sweep, sweep_rows, term_decomposition
from .codesim import RESULT_COLUMNS, error_curve, load_config
from .errors import ConfigError, NotConverged, PsimixError
from .mixing import (
    decomposition_rows,
    lambda_profile,
    psi_brute_force,
    psi_markov,
    verify_decomposition,
)
from .process import (
    DEFAULT_CAP,
    MarkovSource,
    binary_symmetric_chain,
    iid_source,
    load_chain,
    marginal_PT,
)
from .ratedist import DEFAULT_TOL, DistortionMeasure, rd_curve, rd_rows, rd_vector_source
from .simulate import (
    build_schedule,
    draw_flags,
    exact_simulated_law,
    generate_codebook,
    write_codebook,
)

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_CONVERGENCE = 0, 2, 3, 4


def load_source(text: str) -> MarkovSource:
    """A chain file, or ``bsc:P`` / ``iid:p0,p1,...`` shorthands."""
    if text.startswith("bsc:"):
        return binary_symmetric_chain(float(text[4:]))
    if text.startswith("iid:"):
        return iid_source([float(v) for v in text[4:].split(",")])
    return load_chain(text)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_manifest(args, outputs: list[Path], extra: dict | None = None) -> Path:
    params = {
        k: v for k, v in vars(args).items() if k not in ("func", "out_dir") and not callable(v)
    }
    manifest = {
        "subcommand": args.command,
        "config": getattr(args, "config", None) or getattr(args, "chain", None),
        "seed": args.seed,
        "out_dir": str(args.out_dir),
        "version": __version__,
        "parameters": params,
        "outputs": [p.name for p in outputs],
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    if extra:
        manifest.update(extra)
    path = args.out_dir / f"{args.command}_manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def cmd_psi(args) -> list[Path]:
    source = load_source(args.chain)
    profile = lambda_profile(source, args.tau_max)
    header = ["tau", "psi"]
    rows = [list(r) for r in profile.rows()]
    if args.brute:
        t, T = args.brute
        header.append("psi_brute")
        for row in rows:
            row.append(psi_brute_force(source, row[0], t, T))
    out = args.out_dir / "psi.csv"
    write_csv(out, header, rows)
    outputs = [out]
    if args.decomp:
        t, T = args.decomp
        dec_rows = []
        for tau in range(args.tau_max + 1):
            reps = verify_decomposition(source, t, tau, T, profile[tau], cap=args.cap)
            dec_rows += decomposition_rows(reps, source)
        out = args.out_dir / "decomposition.csv"
        write_csv(out, ["t", "tau", "T", "prefix", "max_identity_error"], dec_rows)
        outputs.append(out)
    return outputs


def cmd_simulate(args) -> list[Path]:
    source = load_source(args.chain)
    schedule = build_schedule(args.T, args.tau, args.k)
    lam = psi_markov(source, args.tau)
    flags = draw_flags(args.k, lam, args.seed)
    book = generate_codebook(source, schedule, flags, args.count, args.seed)
    out = args.out_dir / "sequence.txt"
    write_codebook(out, source, schedule, flags, args.seed, book)
    outputs = [out]
    if args.exact_check:
        n = schedule.n
        truth = marginal_PT(source, n, args.cap)
        averaged = exact_simulated_law(source, schedule, cap=args.cap)
        given = exact_simulated_law(source, schedule, flags, cap=args.cap)
        out = args.out_dir / "exact_check.csv"
        write_csv(
            out,
            ["T", "tau", "k", "n", "lambda", "tv_flag_averaged", "flags", "tv_given_flags"],
            [[args.T, args.tau, args.k, n, lam, averaged.tv(truth),
              "".join(map(str, flags.flags)), given.tv(truth)]],
        )
        print(f"total variation to the source law: {averaged.tv(truth):.3e}")
        outputs.append(out)
    return outputs


def cmd_rd(args) -> list[Path]:
    source = load_source(args.chain)
    d = DistortionMeasure.hamming(source.n_symbols)
    if args.curve:
        law = marginal_PT(source, args.T, args.cap)
        pts = rd_curve(law, d.block(args.T, args.cap), args.curve, args.tol)
        rows = [
            (args.T, p.D / args.T, p.R / args.T, p.slope, p.iterations) for p in pts
        ]
    else:
        if args.D is None:
            raise ConfigError("give --D or --curve")
        rows = rd_rows([rd_vector_source(source, args.T, D, d, args.tol, args.cap) for D in args.D])
    out = args.out_dir / "rd.csv"
    write_csv(out, ["T", "D_per_letter", "R_bits_per_letter", "slope", "iterations"], rows)
    return [out]


def _bound_table(args, name: str) -> list[Path]:
    source = load_source(args.chain)
    reports = []
    for D in args.D:
        if args.sweep or len(args.T) > 1 or len(args.tau) > 1 or len(args.beta) > 1:
            reports += convergence_sweep(source, D, args.T, args.tau, args.beta, tol=args.tol, cap=args.cap)
        else:
            reports.append(
                term_decomposition(source, D, args.T[0], args.tau[0], args.beta[0], tol=args.tol, cap=args.cap)
            )
    rows = []
    for r, row in zip(reports, sweep_rows(reports)):
        rows.append(list(row) + [r.proxy_T or "", "" if not r.feasible else r.gap])
    out = args.out_dir / name
    write_csv(out, list(SWEEP_COLUMNS) + ["proxy_T", "gap"], rows)
    return [out]


def cmd_bound(args) -> list[Path]:
    return _bound_table(args, "bound.csv")


def cmd_sweep(args) -> list[Path]:
    args.sweep = True
    return _bound_table(args, "sweep.csv")


def cmd_codesim(args) -> list[Path]:
    cfg = load_config(args.config)
    if args.seed_given:
        cfg = cfg.__class__(**{**cfg.__dict__, "seed": args.seed})
    args.seed = cfg.seed
    batches = error_curve(cfg, explicit_limit=args.explicit_limit)
    out = args.out_dir / "results.csv"
    write_csv(out, RESULT_COLUMNS, [b.row() for b in batches])
    for b in batches:
        lo, hi = b.ci
        print(f"k={b.k} n={b.n} error={b.error_rate:.4f} [{lo:.4f}, {hi:.4f}]")
    return [out]


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
    p.add_argument("--out-dir", type=Path, default=Path("."), help="directory for outputs")
    p.add_argument("--cap", type=int, default=DEFAULT_CAP, help="largest table to enumerate")
    p.add_argument("--tol", type=float, default=DEFAULT_TOL, help="rate tolerance in nats")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="psimix", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("psi", parents=[common], help="mixing coefficients of a chain")
    p.add_argument("chain")
    p.add_argument("--tau-max", type=int, default=3)
    p.add_argument("--brute", type=int, nargs=2, metavar=("t", "T"))
    p.add_argument("--decomp", type=int, nargs=2, metavar=("t", "T"))
    p.set_defaults(func=cmd_psi)

    p = sub.add_parser("simulate", parents=[common], help="slot-based source simulation")
    p.add_argument("chain")
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--tau", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--count", type=int, default=1, help="number of sequences")
    p.add_argument("--exact-check", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("rd", parents=[common], help="block rate-distortion function")
    p.add_argument("chain")
    p.add_argument("--T", type=int, default=1)
    p.add_argument("--D", type=float, nargs="+")
    p.add_argument("--curve", type=int, metavar="n")
    p.set_defaults(func=cmd_rd)

    for name, func, text in (
        ("bound", cmd_bound, "achievable-rate bound and its terms"),
        ("sweep", cmd_sweep, "convergence sweep of the bound over a grid"),
    ):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("chain")
        p.add_argument("--D", type=float, nargs="+", required=True)
        p.add_argument("--T", type=int, nargs="+", required=True)
        p.add_argument("--tau", type=int, nargs="+", required=True)
        p.add_argument("--beta", type=float, nargs="+", required=True)
        if name == "bound":
            p.add_argument("--sweep", action="store_true")
        p.set_defaults(func=func)

    p = sub.add_parser("codesim", parents=[common], help="random-coding Monte Carlo")
    p.add_argument("config")
    p.add_argument("--explicit-limit", type=int, default=1024)
    p.set_defaults(func=cmd_codesim)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK
    args.seed_given = args.seed is not None
    if args.seed is None:
        args.seed = 0
    try:
        args.out_dir.mkdir(parents=True, exist_ok=True)
        outputs = args.func(args)
        write_manifest(args, outputs)
    except NotConverged as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (ConfigError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except PsimixError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
