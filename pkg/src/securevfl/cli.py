"""Command-line driver: gen-data, fit-sigmoid, train, verify, report.

Exit codes: 0 ok, 1 runtime failure, 2 configuration/input error,
3 depth budget exhausted, 4 verification failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from securevfl.approx import KernelSpec, cross_kernel, fit_sigmoid_poly, gram_matrix
from securevfl.dataset import GENERATORS, holdout_split, load_csv, save_csv, standardize, subsample, vertical_split
from securevfl.errors import BudgetExhaustedError, ConfigError, SimulatorError
from securevfl.ledger import min_budget
from securevfl.presets import family_of, preset
from securevfl.verification import depth_grid, random_split, table1_checks
from securevfl.tables import ResultsTable, table1_text, table2_text, tables_to_csv
from securevfl.training import (
    TrainConfig,
    TrainReport,
    cached_sigmoid,
    evaluate,
    plaintext_report,
    secure_train_klr,
    secure_train_lr,
)

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG, EXIT_BUDGET, EXIT_VERIFY = 0, 1, 2, 3, 4

KERNEL_ALIASES = {
    "linear": "linear",
    "poly": "polynomial",
    "polynomial": "polynomial",
    "rbf": "rbf_exact",
    "rbf-exact": "rbf_exact",
    "rbf-taylor2": "rbf_taylor2",
}


# --- gen-data ------------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    params = {"n": args.n, "noise": args.noise, "seed": args.seed}
    if args.generator == "circles":
        params["factor"] = args.factor
    data = GENERATORS[args.generator](**params)
    out = Path(args.out or f"{args.generator}.csv")
    save_csv(data, out)
    bal = data.class_balance()
    print(f"wrote {out}: N={data.n} D={data.d} labels -1:{bal[-1]} +1:{bal[1]}")
    return EXIT_OK


# --- fit-sigmoid ---------------------------------------------------------------------

def cmd_fit_sigmoid(args) -> int:
    if not 1 <= args.degree <= 7:
        raise ConfigError(f"degree must lie in 1..7, got {args.degree}")
    p = fit_sigmoid_poly(args.degree, tuple(args.interval), args.points)
    out = Path(args.out or f"sigmoid_deg{args.degree}.json")
    p.save(out)
    coeffs = ", ".join(f"{c:.6g}" for c in p.coefficients)
    print(f"wrote {out}: degree {p.degree} coefficients [{coeffs}]")
    print(f"max deviation on [{p.fit_interval[0]:g}, {p.fit_interval[1]:g}]: {p.max_deviation():.6g}")
    return EXIT_OK


# --- train -----------------------------------------------------------------------------

def _kernel_spec(args, family: str) -> KernelSpec | None:
    if args.model == "lr":
        return None
    kind = KERNEL_ALIASES.get(args.kernel or "")
    if kind is None:
        raise ConfigError(f"klr needs --kernel, one of {sorted(KERNEL_ALIASES)}")
    base = preset(family, "klr", kind).kernel
    if kind == "linear":
        return KernelSpec.linear()
    if kind == "polynomial":
        return KernelSpec.polynomial(args.c if args.c is not None else base.c,
                                     args.dpoly if args.dpoly is not None else base.d_poly)
    return KernelSpec.rbf(args.gamma if args.gamma is not None else base.gamma,
                          taylor=kind == "rbf_taylor2")


def build_run(args):
    if not args.dataset:
        raise ConfigError("train needs --dataset (flag or config key)")
    data = load_csv(args.dataset)
    if args.subsample:
        data = subsample(data, args.subsample, args.seed)
    family = family_of(data)
    spec = _kernel_spec(args, family)
    p = preset(family, args.model, spec.kind if spec else None, data.n)
    std = p.standardize if args.standardize is None else args.standardize
    if std:
        data = standardize(data)
    sigmoid = args.sigmoid or ("poly" if args.secure or args.sigmoid_degree else "exact")
    if args.secure and sigmoid == "exact":
        raise ConfigError("secure training cannot evaluate the exact sigmoid; use --sigmoid poly")
    if args.secure and args.holdout:
        raise ConfigError("--holdout applies to plaintext baselines; secure inference is not defined")
    if args.secure and spec and spec.kind == "rbf_exact":
        raise ConfigError("the exact RBF kernel has no secure protocol; use --kernel rbf-taylor2")
    cfg = TrainConfig(
        learning_rate=args.learning_rate if args.learning_rate is not None else p.learning_rate,
        iterations=args.iterations,
        sigmoid_degree=args.sigmoid_degree or 3,
        lambda_reg=args.lambda_reg,
        seed=args.seed,
    )
    return data, spec, cfg, sigmoid


def cmd_train(args) -> int:
    data, spec, cfg, sigmoid = build_run(args)
    out = Path(args.out or "report.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.secure:
        d_a = args.d_alice or max(1, data.d // 2)
        split = vertical_split(data, d_a)
        need = min_budget(args.model, cfg.sigmoid_degree, spec.kind if spec else None,
                          (spec.d_poly or 1) if spec else 1)
        budget = args.budget if args.budget is not None else need
        if args.model == "lr":
            report = secure_train_lr(split, cfg, budget)
            report.accuracy = evaluate(report.final_model, data)
        else:
            report = secure_train_klr(split, cfg, spec, budget)
            report.accuracy = evaluate(report.final_model, data, gram_matrix(spec, data.X))
        report.dataset = dict(data.meta)
        transcript_path = out.with_suffix(".transcript.jsonl")
        report.transcript.write_jsonl(transcript_path, record_payloads=args.record_payloads)
    else:
        sig = "exact" if sigmoid == "exact" else cached_sigmoid(cfg.sigmoid_degree)
        test = None
        if args.holdout:
            data, test = holdout_split(data, args.holdout, args.seed)
        report = plaintext_report(data, cfg, args.model, spec, sig)
        if test is not None:
            K = cross_kernel(spec, data.X, test.X) if spec else None
            report.holdout_accuracy = evaluate(report.final_model, test, K)
        transcript_path = None
    report.save(out)

    mode = "secure" if args.secure else "plaintext"
    label = args.model.upper() + (f" [{spec.label}]" if spec else "")
    sig_label = "exact" if sigmoid == "exact" else f"poly-{cfg.sigmoid_degree}"
    led = report.ledger
    print(f"{mode} {label} sigmoid={sig_label} lr={cfg.learning_rate:g} iterations={cfg.iterations}")
    print(f"accuracy: {report.accuracy:.4f}")
    if report.holdout_accuracy is not None:
        print(f"holdout accuracy: {report.holdout_accuracy:.4f} ({args.holdout:g} of rows)")
    if args.secure:
        print(f"max depth: {report.max_depth_reached} (budget {report.budget})")
        print(f"ledger: adds={led.adds} ct_ct_mults={led.ct_ct_mults} "
              f"ct_pt_mults={led.ct_pt_mults} rotations={led.rotations}")
        print(f"transcript: {transcript_path}")
    print(f"wall time: {report.wall_time:.3f} s (informational)")
    print(f"report: {out}")
    return EXIT_OK


# --- verify ------------------------------------------------------------------------------

def cmd_verify(args) -> int:
    t1 = table1_checks(tuple(args.dpoly))
    split = random_split(args.n, 1, 1, args.seed)
    t2 = depth_grid(split, tuple(args.degrees), tuple(args.dpoly), iterations=args.iterations)
    print("Per-entry operation counts")
    print(table1_text(t1))
    print()
    print("Multiplicative depth")
    print(table2_text(t2))
    ok = all(c.passed for c in t1) and all(c.passed for c in t2)
    if args.json:
        doc = {
            "schema_version": 1,
            "passed": ok,
            "table1": [c.to_dict() for c in t1],
            "table2": [c.to_dict() for c in t2],
        }
        Path(args.json).write_text(json.dumps(doc, indent=2) + "\n")
    print("\nverification " + ("passed" if ok else "FAILED"))
    return EXIT_OK if ok else EXIT_VERIFY


# --- report ------------------------------------------------------------------------------

def load_reports(directory: Path) -> list[TrainReport]:
    if not directory.is_dir():
        raise ConfigError(f"not a directory: {directory}")
    reports = []
    for path in sorted(directory.glob("*.json")):
        doc = json.loads(path.read_text())
        if isinstance(doc, dict) and "model" in doc and "grad_norms" in doc:
            reports.append(TrainReport.from_dict(doc))
    if not reports:
        raise ConfigError(f"no train reports found in {directory}")
    return reports


def cmd_report(args) -> int:
    tables: dict[str, ResultsTable] = {}
    for r in load_reports(Path(args.directory)):
        fam = r.dataset.get("generator", "default")
        tables.setdefault(fam, ResultsTable(fam)).add(r)
    ordered = [tables[k] for k in sorted(tables)]
    text = "\n\n".join(t.to_text() for t in ordered)
    print(text)
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "accuracy.txt").write_text("# schema_version=1\n" + text + "\n")
        (out / "accuracy.csv").write_text(tables_to_csv(ordered))
        print(f"\nwrote {out / 'accuracy.txt'} and {out / 'accuracy.csv'}")
    return EXIT_OK


# --- parser ------------------------------------------------------------------------------

def _bool_flag(p, name: str, help: str) -> None:
    p.add_argument(f"--{name}", dest=name.replace("-", "_"), action=argparse.BooleanOptionalAction,
                   default=None, help=help)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON object of option defaults; flags override it")
    parser = argparse.ArgumentParser(prog="securevfl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, **kw):
        return sub.add_parser(name, parents=[common], **kw)

    g = add("gen-data", help="write a synthetic dataset CSV")
    g.add_argument("generator", choices=sorted(GENERATORS))
    g.add_argument("--n", type=int, default=500)
    g.add_argument("--noise", type=float, default=0.05)
    g.add_argument("--factor", type=float, default=0.3, help="inner radius (circles)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen_data)

    f = add("fit-sigmoid", help="least-squares polynomial sigmoid")
    f.add_argument("--degree", type=int, default=3)
    f.add_argument("--interval", type=float, nargs=2, default=[-8.0, 8.0], metavar=("LO", "HI"))
    f.add_argument("--points", type=int, default=1024)
    f.add_argument("--out")
    f.set_defaults(func=cmd_fit_sigmoid)

    t = add("train", help="plaintext or secure training run")
    t.add_argument("--dataset", help="CSV with a label column")
    mode = t.add_mutually_exclusive_group()
    mode.add_argument("--secure", dest="secure", action="store_true", default=False)
    mode.add_argument("--plain", dest="secure", action="store_false")
    t.add_argument("--model", choices=["lr", "klr"], default="lr")
    t.add_argument("--kernel", choices=sorted(KERNEL_ALIASES))
    t.add_argument("--dpoly", type=int)
    t.add_argument("--c", type=float)
    t.add_argument("--gamma", type=float)
    t.add_argument("--sigmoid", choices=["exact", "poly"])
    t.add_argument("--sigmoid-degree", type=int)
    t.add_argument("--learning-rate", type=float)
    t.add_argument("--iterations", type=int, default=20)
    t.add_argument("--lambda-reg", type=float, default=0.0)
    t.add_argument("--budget", type=int, help="Eve's depth budget (default: depth-law minimum)")
    t.add_argument("--d-alice", type=int, help="columns held by Alice (default: half)")
    t.add_argument("--subsample", type=int)
    t.add_argument("--holdout", type=float, help="fraction of rows held out for testing (plaintext only)")
    t.add_argument("--seed", type=int, default=0)
    _bool_flag(t, "standardize", "standardize each party's columns (default: per dataset)")
    t.add_argument("--record-payloads", action="store_true")
    t.add_argument("--out", help="report JSON path")
    t.set_defaults(func=cmd_train)

    v = add("verify", help="check op counts and depths against the published tables")
    v.add_argument("--n", type=int, default=30)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--degrees", type=int, nargs="+", default=[1, 2, 3, 4, 5])
    v.add_argument("--dpoly", type=int, nargs="+", default=[1, 2, 3, 5])
    v.add_argument("--iterations", type=int, default=2)
    v.add_argument("--json")
    v.set_defaults(func=cmd_verify)

    r = add("report", help="render accuracy tables from a directory of reports")
    r.add_argument("directory")
    r.add_argument("--out-dir")
    r.set_defaults(func=cmd_report)
    return parser


def _subparser(parser: argparse.ArgumentParser, command: str) -> argparse.ArgumentParser:
    action = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    return action.choices[command]


def parse(argv: list[str] | None) -> argparse.Namespace:
    """Parse flags; keys of an optional --config JSON file become defaults."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.config:
        return args
    try:
        doc = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {args.config}: {e}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config file must hold a JSON object")
    doc = {k.replace("-", "_"): v for k, v in doc.items() if k != "schema_version"}
    sub = _subparser(parser, args.command)
    known = {a.dest for a in sub._actions} - {"help", "config"}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ConfigError(f"unknown config keys for {args.command}: {', '.join(unknown)}")
    sub.set_defaults(**doc)
    return parser.parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    try:
        args = parse(argv)
        return args.func(args)
    except BudgetExhaustedError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_BUDGET
    except (ConfigError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (SimulatorError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
