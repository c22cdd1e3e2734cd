"""Command line entry point: ``mvsk solve | gen | bench | check``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

import numpy as np

from .bench import (
    BenchmarkSpec,
    gen_conditioned_instance,
    gen_uniform_instance,
    run_benchmark,
    write_csv,
    write_summary,
)
from .exceptions import MVSKError
from .instance import PreferenceCoefficients, crra_coefficients, load_returns, save_returns
from .solver import preset, solve
from .verification import convexity_certificate, reduced_hessian_spectrum, regularity_constants


def _coeffs(args):
    if args.crra is not None:
        return crra_coefficients(args.crra)
    if args.coeffs is None:
        raise MVSKError("give --coeffs or --crra")
    parts = [p.strip() for p in args.coeffs.split(",")]
    try:
        values = [float(p) for p in parts]
    except ValueError:
        raise MVSKError(f"cannot parse coefficients {args.coeffs!r}") from None
    return PreferenceCoefficients.coerce(values)


def _emit(payload, out):
    text = json.dumps(payload, indent=2, default=float)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def cmd_solve(args):
    panel = load_returns(args.panel)
    coeffs = _coeffs(args)
    config = preset(args.config)
    config = replace(config, epsilon=args.tol)
    if args.exact_trace:
        config = replace(config, tangent=replace(config.tangent, exact_trace=True))
    report = solve(panel, coeffs, config=config)
    payload = report.to_dict()
    payload["coeffs"] = list(coeffs)
    payload["config"] = args.config
    _emit(payload, args.out)
    return 0


def cmd_gen(args):
    if args.family == "uniform":
        panel = gen_uniform_instance(args.n, args.t, args.seed)
    else:
        panel, _ = gen_conditioned_instance(args.n, args.t, args.kappa, args.gamma, args.seed)
    save_returns(panel, args.out)
    print(f"wrote {args.family} panel T={panel.T} n={panel.n} to {args.out}", file=sys.stderr)
    return 0


def cmd_bench(args):
    spec = BenchmarkSpec.from_json(args.spec)
    records, summary = run_benchmark(spec, configs=args.configs)
    write_csv(records, args.out)
    summary_path = args.summary or str(args.out).rsplit(".", 1)[0] + "_summary.json"
    write_summary(summary, summary_path)
    for cfg, med in summary["config_medians"].items():
        print(f"{cfg}: pooled median {med:.4f} s", file=sys.stderr)
    return 0


def cmd_check(args):
    panel = load_returns(args.panel)
    coeffs = _coeffs(args)
    ok, margin = convexity_certificate(coeffs)
    c1, c2, c3, c4 = coeffs
    payload = {
        "n": panel.n, "T": panel.T, "coeffs": [c1, c2, c3, c4],
        "convexity": {"certified": ok, "discriminant": 8 * c2 * c4 - 3 * c3 * c3,
                      "psi2_lower_bound": margin},
    }
    if args.spectrum:
        x = np.full(panel.n, 1.0 / panel.n)
        eig, kappa, neg = reduced_hessian_spectrum(panel, coeffs, x)
        payload["spectrum"] = {"point": "equal_weight", "min": float(eig[0]),
                               "max": float(eig[-1]), "kappa_plus": kappa,
                               "num_negative": neg}
    if args.constants:
        payload["constants"] = regularity_constants(panel, coeffs, args.tau).to_dict()
    _emit(payload, args.out)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="mvsk", description="Long-only MVSK portfolio solver")
    sub = p.add_subparsers(dest="command", required=True)

    def add_coeffs(sp):
        g = sp.add_mutually_exclusive_group(required=True)
        g.add_argument("--coeffs", help='moment weights "c1,c2,c3,c4"')
        g.add_argument("--crra", type=float, help="CRRA risk aversion gamma")

    s = sub.add_parser("solve", help="solve one panel")
    s.add_argument("--panel", required=True)
    add_coeffs(s)
    s.add_argument("--config", choices=("small", "large"), default="small")
    s.add_argument("--tol", type=float, default=1e-6)
    s.add_argument("--exact-trace", action="store_true",
                   help="exact log-determinant trace even in the large config")
    s.add_argument("--out")
    s.set_defaults(func=cmd_solve)

    g = sub.add_parser("gen", help="generate a synthetic panel")
    g.add_argument("--family", choices=("uniform", "conditioned"), required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--t", type=int, required=True)
    g.add_argument("--kappa", type=float, default=1.0)
    g.add_argument("--gamma", type=float, default=6.0)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    b = sub.add_parser("bench", help="run a benchmark sweep")
    b.add_argument("--spec", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--summary", help="JSON summary path (default: next to --out)")
    b.add_argument("--configs", nargs="+", default=["small", "large"])
    b.set_defaults(func=cmd_bench)

    c = sub.add_parser("check", help="certificates and diagnostics")
    c.add_argument("--panel", required=True)
    add_coeffs(c)
    c.add_argument("--spectrum", action="store_true")
    c.add_argument("--constants", action="store_true")
    c.add_argument("--tau", type=float, default=1e-8)
    c.add_argument("--out")
    c.set_defaults(func=cmd_check)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (MVSKError, OSError) as exc:
        print(f"mvsk {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
