"""Command-line interface: ``eigenbound {bound,simulate,verify}``.

Exit codes: 0 success / verification passed, 1 verification failed,
2 usage error (bad flags or invalid parameters).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from importlib import resources

import numpy as np

from . import bounds, verify
from .divergences import PcaModel
from .linalg import Spectrum
from .risk import SimConfig, denoise_model, simulate_bayes_risk, simulate_denoise_risk, simulate_pca_risk

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def fmt(x) -> str:
    """17 significant digits, enough to round-trip any double."""
    return format(float(x), ".17g")


def load_schema() -> dict:
    return json.loads(resources.files("eigenbound").joinpath("schema/output.schema.json").read_text())


# ---------------------------------------------------------------------------
# Argument parsing helpers
# ---------------------------------------------------------------------------


def parse_ints(s: str) -> list[int]:
    try:
        return [int(t) for t in s.split(",") if t.strip()]
    except ValueError as exc:
        raise UsageError(f"expected comma-separated integers, got {s!r}") from exc


def parse_floats(s: str) -> list[float]:
    try:
        return [float(t) for t in s.split(",") if t.strip()]
    except ValueError as exc:
        raise UsageError(f"expected comma-separated numbers, got {s!r}") from exc


def parse_profile(s: str, truncation: int | None = None, d: int | None = None) -> Spectrum:
    """``spiked:p,d,hi,lo`` | ``poly:alpha`` | ``exp:alpha`` | ``explicit:l1,l2,...`` | ``l1,l2,...``."""
    kind, _, rest = s.partition(":")
    if not rest:
        kind, rest = "explicit", s
    if kind == "explicit":
        return Spectrum.explicit(parse_floats(rest))
    if kind == "spiked":
        vals = parse_floats(rest)
        if len(vals) != 4:
            raise UsageError("spiked profile needs p,d,hi,lo")
        return Spectrum.spiked(int(vals[0]), int(vals[1]), vals[2], vals[3])
    if kind in ("poly", "exp"):
        (alpha,) = parse_floats(rest) or [None]
        p = truncation or max(4 * (d or 1), 64)
        return Spectrum.poly(alpha, p) if kind == "poly" else Spectrum.exp(alpha, p)
    raise UsageError(f"unknown profile kind {kind!r}")


def resolve_I(args, p: int) -> tuple[int, ...]:
    if args.I:
        return tuple(parse_ints(args.I))
    if args.d:
        return tuple(range(1, args.d + 1))
    raise UsageError("give --I or --d")


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_bound(args) -> int:
    kind = args.profile.partition(":")[0]
    if kind in ("poly", "exp") and args.d and not args.I and args.h is None:
        report = bounds.decay_bounds(
            parse_floats(args.profile.partition(":")[2])[0], args.d, args.n, kind, args.single, args.p_max
        )
    else:
        spec = parse_profile(args.profile, args.p_max, args.d)
        I = resolve_I(args, spec.p)
        if args.h is not None:
            report = bounds.bayes_bound(spec, I, args.n, args.h)
        else:
            report = bounds.theorem_main_bound(spec, I, args.n, args.strategy)
            if spec.profile == "spiked":
                prm = spec.params
                report.extras["spiked_corollary"] = bounds.spiked_bound(
                    spec.p, prm["d"], prm["hi"], prm["lo"], args.n
                ).value
    doc = {"kind": "bound", **report.to_dict()}
    pair_rows = [(i, j, float(t)) for (i, j), t in sorted(report.per_pair_terms.items())]
    if args.format == "csv":
        _emit(_csv_text(["i", "j", "term"], pair_rows), args.out)
    else:
        _emit(_json_text(doc), args.out)
        if args.out:
            stem = args.out[:-5] if args.out.endswith(".json") else args.out
            _emit(_csv_text(["i", "j", "term"], pair_rows), stem + "_pairs.csv")
    return EXIT_OK


def cmd_simulate(args) -> int:
    spec = parse_profile(args.profile, args.p_max, args.d)
    I = resolve_I(args, spec.p)
    loss_rows = []
    if args.sigma is not None:
        header = ["sigma", "mean", "se"]
        rows = []
        for k, s in enumerate(parse_floats(args.sigma)):
            est = simulate_denoise_risk(SimConfig(denoise_model(spec, s), I, "identity", args.reps, args.seed + k))
            rows.append((s, est.mean, est.std_error))
            loss_rows += [(s, r, x) for r, x in enumerate(est.losses)]
    else:
        if args.n is None:
            raise UsageError("simulate needs --n (comma-separated grid) or --sigma")
        header = ["n", "mean", "se", "n_times_mean"]
        rows = []
        for k, n in enumerate(parse_ints(args.n)):
            if args.h is not None:
                cfg = SimConfig(PcaModel(spec, n), I, ("prior", args.h), 1, args.seed + k)
                est = simulate_bayes_risk(cfg)
            else:
                est = simulate_pca_risk(SimConfig(PcaModel(spec, n), I, "identity", args.reps, args.seed + k))
            rows.append((n, est.mean, est.std_error, n * est.mean))
            loss_rows += [(n, r, x) for r, x in enumerate(est.losses)]
    if args.format == "json":
        doc = {"kind": "simulate", "columns": header, "rows": [dict(zip(header, map(_num, r))) for r in rows]}
        _emit(_json_text(doc), args.out)
    else:
        _emit(_csv_text(header, rows), args.out)
    if args.losses:
        _emit(_csv_text([header[0], "replicate", "loss"], loss_rows), args.losses)
    return EXIT_OK


def _num(v):
    return int(v) if isinstance(v, (int, np.integer)) else float(v)


def cmd_verify(args) -> int:
    fn = verify.SUITES[args.suite]
    kw = {"seed": args.seed} if args.suite in ("fisher", "prior", "sandwich") else {}
    if args.suite == "sandwich" and args.reps:
        kw["replications"] = args.reps
    result = fn(**kw)
    doc = {"kind": "verify", **result.to_dict()}
    _emit(_json_text(doc), args.out)
    return EXIT_OK if result.passed else EXIT_FAIL


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="eigenbound", description="Eigenspace estimation lower bounds and simulations.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--profile", required=True, help="spiked:p,d,hi,lo | poly:a | exp:a | l1,l2,...")
        sp.add_argument("--I", help="comma-separated 1-based index set")
        sp.add_argument("--d", type=int, help="leading dimension (I = 1..d when --I is absent)")
        sp.add_argument("--h", type=float, help="exponential-trace prior strength")
        sp.add_argument("--p-max", dest="p_max", type=int, help="truncation for poly/exp profiles")
        sp.add_argument("--out", help="output path (stdout if absent)")

    b = sub.add_parser("bound", help="evaluate a lower bound")
    common(b)
    b.add_argument("--n", type=float, required=True, help="sample size")
    b.add_argument("--single", action="store_true", help="single projector {d} for decay profiles")
    b.add_argument("--strategy", choices=("heuristic", "exhaustive", "full"), default="heuristic")
    b.add_argument("--format", choices=("json", "csv"), default="json")
    b.set_defaults(func=cmd_bound)

    s = sub.add_parser("simulate", help="Monte Carlo plug-in risk over an n-grid")
    common(s)
    s.add_argument("--n", help="comma-separated sample sizes")
    s.add_argument("--sigma", help="comma-separated noise levels (denoising model)")
    s.add_argument("--reps", type=int, default=2000)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--losses", help="optional CSV of per-replicate losses")
    s.add_argument("--format", choices=("json", "csv"), default="csv")
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("verify", help="run a verification suite")
    v.add_argument("suite", choices=sorted(verify.SUITES))
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--reps", type=int)
    v.add_argument("--out")
    v.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (UsageError, ValueError, KeyError) as exc:
        print(f"eigenbound: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
