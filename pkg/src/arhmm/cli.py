"""Command-line interface: ``arhmm <command> ...``.

Exit status: 0 success, 1 usage error, 2 data or domain error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import io, study
from .decode import decoding_accuracy, pseudo_residuals, residual_summary, viterbi
from .errors import EstimationError, NumericError
from .fit import FitOptions, default_lambda_grid, fit, lambda_path, select_lambda, selected_degrees
from .geometry import downsample, steps_and_turns
from .likelihood import PenaltyConfig, PooledData
from .model import ModelSpec, Parameters
from .simulate import paper_scenario, simulate

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _nonneg_float(text):
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative number, got {text}")
    return v


def build_parser():
    p = _Parser(prog="arhmm", description="Autoregressive HMMs for step lengths and turning angles.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("prep", help="convert a location file to a step/turn series file")
    s.add_argument("input", help="CSV with columns id,x,y[,t_sec]")
    s.add_argument("--downsample", type=_positive_int, default=1, metavar="K", help="keep every K-th location (default 1)")
    s.add_argument("--zero-floor", type=_nonneg_float, default=0.0,
                   help="raise zero-length steps to this value; 0 makes them an error (default)")
    s.add_argument("--out", required=True, help="output series CSV (id,t,step,turn)")

    s = sub.add_parser("simulate", help="simulate one track from the two-state study scenario")
    s.add_argument("--degree", type=int, choices=range(4), required=True, help="AR degree 0-3")
    s.add_argument("--T", type=_positive_int, default=2000, help="series length (default 2000)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="output series CSV")
    s.add_argument("--truth", help="output true-state CSV (default: <out stem>_truth.csv)")
    s.add_argument("--id", default="sim", help="track id (default sim)")

    s = sub.add_parser("fit", help="fit a model by (penalised) maximum conditional likelihood")
    s.add_argument("input", help="series CSV")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--spec", help="model spec as a JSON file or inline JSON "
                                  '(e.g. \'{"n_states": 2, "p_step": [1, 1], "p_turn": [1, 1]}\')')
    g.add_argument("--degree", type=int, help="same AR degree for every state and variable")
    s.add_argument("--states", type=_positive_int, default=2, help="number of states with --degree (default 2)")
    m = s.add_mutually_exclusive_group()
    m.add_argument("--lambda", dest="lam", type=_nonneg_float, default=0.0, help="penalty weight (default 0)")
    m.add_argument("--path", action="store_true", help="search a lambda grid and refit at the selected degrees")
    s.add_argument("--grid", type=_nonneg_float, nargs="+", help="lambda grid for --path (default: 0 and 23 log-spaced values on [0.1, 100])")
    s.add_argument("--criterion", choices=("aic", "bic"), default="bic", help="selection criterion for --path (default bic)")
    s.add_argument("--epsilon", type=float, default=1e-6, help="smoothing constant of the penalty (default 1e-6)")
    s.add_argument("--starts", type=_positive_int, default=10, help="random starts (default 10)")
    s.add_argument("--max-iters", type=_positive_int, default=2000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="output JSON")

    for name, text in (("decode", "Viterbi state decoding"), ("residuals", "one-step-ahead pseudo-residuals")):
        s = sub.add_parser(name, help=text)
        s.add_argument("input", help="series CSV")
        s.add_argument("--fit", required=True, help="fit or parameter JSON")
        s.add_argument("--out", required=True,
                       help="output CSV" + (" (track_id,t,value)" if name == "decode" else "; writes <stem>_step and <stem>_turn files"))
        if name == "decode":
            s.add_argument("--truth", help="true-state CSV; prints the decoding accuracy")

    s = sub.add_parser("study", help="replicate the two-state simulation study")
    s.add_argument("--scenario", choices=("table1",), default="table1")
    s.add_argument("--replicates", type=_positive_int, default=25)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--T", type=_positive_int, default=2000, help="series length for accuracy (default 2000)")
    s.add_argument("--starts", type=_positive_int, default=5, help="random starts per accuracy fit (default 5)")
    s.add_argument("--stability-T", type=_positive_int, nargs="+", default=[100, 500])
    s.add_argument("--stability-starts", type=_positive_int, default=10, help="single-start runs per replicate (default 10)")
    s.add_argument("--consistency-T", type=_positive_int, nargs="+", default=[100, 500, 2000])
    s.add_argument("--parts", default="accuracy,stability,consistency",
                   help="comma-separated subset of accuracy,stability,consistency")
    s.add_argument("--jobs", type=_positive_int, default=1, help="worker processes (default 1)")
    return p


def _load_spec(args):
    if args.degree is not None:
        if args.degree < 0:
            raise UsageError("--degree must be non-negative")
        return ModelSpec.uniform(args.states, args.degree)
    text = args.spec.strip()
    d = json.loads(text) if text.startswith("{") else io.read_json(text)
    return ModelSpec.from_dict(d)


def load_params(path):
    """Parameters from a fit JSON, a path-search JSON (uses the refit) or a bare parameter JSON."""
    d = io.read_json(path)
    if "refit" in d:
        d = d["refit"]
    return Parameters.from_dict(d["params"] if "params" in d else d)


def cmd_prep(args):
    tracks = io.read_tracks(args.input)
    series = [steps_and_turns(downsample(t, args.downsample), args.zero_floor) for t in tracks]
    io.write_series(series, args.out)
    print(f"wrote {len(series)} series ({sum(len(s) for s in series)} observations) to {args.out}")


def cmd_simulate(args):
    series, states = simulate(paper_scenario(args.degree, T=args.T, seed=args.seed), track_id=args.id)
    out = Path(args.out)
    truth = Path(args.truth) if args.truth else out.with_name(f"{out.stem}_truth{out.suffix or '.csv'}")
    io.write_series([series], out)
    io.write_states([states], truth)
    print(f"wrote {out} and {truth}")


def _print_fit(label, res):
    print(f"{label}: loglik {res.loglik:.4f}  lambda {res.lam:g}  edf {res.edf}  "
          f"AIC {res.aic:.3f}  BIC {res.bic:.3f}  converged {res.converged}  "
          f"starts agreeing {res.n_starts_agreeing}")


def cmd_fit(args):
    spec = _load_spec(args)
    data = PooledData(io.read_series(args.input))
    opts = FitOptions(n_starts=args.starts, max_iters=args.max_iters, seed=args.seed)
    if not args.path:
        if args.grid:
            raise UsageError("--grid requires --path")
        res = fit(data, spec, PenaltyConfig(args.lam, args.epsilon), opts)
        io.write_json(res, args.out)
        _print_fit("fit", res)
        return
    grid = args.grid or default_lambda_grid()
    path = lambda_path(data, spec, grid, opts, epsilon=args.epsilon)
    chosen = select_lambda(path, args.criterion)
    degrees = selected_degrees(chosen.params)
    refit = fit(data, degrees, PenaltyConfig(0.0, args.epsilon), opts)
    io.write_json({
        "criterion": args.criterion,
        "path": path.to_dict(),
        "selected": chosen.to_dict(),
        "selected_degrees": degrees.to_dict(),
        "refit": refit.to_dict(),
    }, args.out)
    _print_fit("selected", chosen)
    print(f"selected degrees: step {list(degrees.p_step)} turn {list(degrees.p_turn)}")
    _print_fit("refit", refit)


def cmd_decode(args):
    params = load_params(args.fit)
    series = io.read_series(args.input)
    decoded = [viterbi(s, params) for s in series]
    io.write_states(decoded, args.out)
    print(f"wrote {args.out}")
    if args.truth:
        truth = {t.track_id: t for t in io.read_states(args.truth)}
        for d in decoded:
            if d.track_id not in truth:
                raise ValueError(f"truth file has no track {d.track_id!r}")
            t = truth[d.track_id]
            if t.states.max() > params.n_states:
                raise ValueError(f"truth for {d.track_id!r} uses {t.states.max()} states; the fit has {params.n_states}")
            print(f"{d.track_id}: accuracy {decoding_accuracy(d, t):.4f}")


def cmd_residuals(args):
    params = load_params(args.fit)
    res = [pseudo_residuals(s, params) for s in io.read_series(args.input)]
    step_path, turn_path = io.write_residuals(res, args.out)
    print(f"wrote {step_path} and {turn_path}")
    clamped = sum(r.n_clamped for r in res)
    for name, r_attr, u_attr in (("step", "r_step", "u_step"), ("turn", "r_turn", "u_turn")):
        summ = residual_summary(np.concatenate([getattr(r, r_attr) for r in res]),
                                np.concatenate([getattr(r, u_attr) for r in res]))
        print(f"{name}: " + "  ".join(f"{k} {v:.4g}" if isinstance(v, float) else f"{k} {v}" for k, v in summ.items()))
    if clamped:
        print(f"{clamped} CDF values clamped to [1e-12, 1 - 1e-12]")


def _write_rows(path, rows):
    keys = []
    for r in rows:
        keys.extend(k for k in r if k not in keys)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys)
        for r in rows:
            w.writerow(["" if r.get(k) is None else io.fmt(r[k]) if isinstance(r.get(k), float) else r.get(k, "")
                        for k in keys])


def _check_writable(out):
    out.mkdir(parents=True, exist_ok=True)
    with tempfile.NamedTemporaryFile(dir=out):
        pass


def cmd_study(args):
    parts = {p.strip() for p in args.parts.split(",") if p.strip()}
    unknown = parts - {"accuracy", "stability", "consistency"}
    if unknown or not parts:
        raise UsageError(f"unknown --parts entries: {', '.join(sorted(unknown)) or '(none)'}")
    out = Path(args.out)
    _check_writable(out)
    R, seed, D = args.replicates, args.seed, study.DEGREES

    if "accuracy" in parts:
        tasks = [(s, f, args.T, r, seed, args.starts) for s in D for f in D for r in range(R)]
        rows = study.run_tasks(study.accuracy_run, tasks, args.jobs)
        _write_rows(out / "accuracy.csv", rows)
        table = study.accuracy_table(rows)
        _write_rows(out / "accuracy_table.csv",
                    [{"sim_degree": s, **{f"fit_{f}": table[s][f] for f in D}} for s in D])
        print("mean decoding accuracy (rows: simulated degree, columns: fitted degree)")
        for s in D:
            print(f"  p={s}: " + "  ".join(f"{table[s][f]:.4f}" for f in D))

    if "stability" in parts:
        tasks = [(s, f, T, r, seed, args.stability_starts) for T in args.stability_T for s in D for f in D for r in range(R)]
        rows = [row for rs in study.run_tasks(study.stability_run, tasks, args.jobs) for row in rs]
        _write_rows(out / "stability.csv", rows)
        table = study.stability_table(rows)
        _write_rows(out / "stability_table.csv",
                    [{"T": T, "sim_degree": s, "fit_degree": f, "proportion": v} for (T, s, f), v in table.items()])
        for T in args.stability_T:
            print(f"proportion of runs reaching the truth-anchored optimum, T={T}")
            for s in D:
                print(f"  p={s}: " + "  ".join(f"{table[(T, s, f)]:.3f}" for f in D))

    if "consistency" in parts:
        tasks = [(d, d, T, r, seed, args.starts) for T in args.consistency_T for d in D for r in range(R)]
        rows = study.run_tasks(study.accuracy_run, tasks, args.jobs)
        _write_rows(out / "consistency.csv", rows)
        summ = study.consistency_summary(rows)
        _write_rows(out / "consistency_summary.csv", summ)
        print("step-mean estimates of state 2 (truth 40): median [IQR]")
        for r in summ:
            if r["parameter"] == "mu_step_2":
                print(f"  p={r['degree']} T={r['T']}: {r['median']:.3f} [{r['iqr']:.3f}]")
    print(f"results in {out}")


COMMANDS = {
    "prep": cmd_prep,
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "decode": cmd_decode,
    "residuals": cmd_residuals,
    "study": cmd_study,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except UsageError as e:
        print(f"arhmm {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericError, EstimationError, FloatingPointError) as e:
        print(f"arhmm {args.command}: numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as e:
        msg = f"{e.filename}: {e.strerror}" if isinstance(e, OSError) and e.filename else str(e)
        print(f"arhmm {args.command}: error: {msg}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
