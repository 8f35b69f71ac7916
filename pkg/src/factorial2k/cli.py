"""Command-line front end: analyze, simulate, verify.

Output is JSON-first; every run embeds its configuration, seed, and the
package version for reproducibility.  Exit codes: 0 ok, 1 validation
error, 2 numerical failure, 3 identity/verification failure.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .contrasts import true_effects
from .core import cell_summary, default_spec, ingest_csv, parse_subset_label, FactorSpec
from .errors import (
    Factorial2kError,
    IdentityViolationError,
    ParseError,
    RankDeficientError,
    TooManyAssignmentsError,
)
from .estimation import effect_estimates
from .regression import ModelSpec, saturated_fit, saturated_spec, unsaturated_fit, verify_omitted_relation
from .simulate import (
    DesignSizes,
    ENUMERATION_GUARD,
    PotentialOutcomeTable,
    exact_expectations,
    make_constant_effects_population,
    make_no_three_way_population,
    monte_carlo,
    observe,
    draw_assignment,
    replicate_rng,
)
from .verify import run_identity_suite, suite_passed
from .weighting import empirical_scheme, equal_scheme, product_scheme

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2
EXIT_IDENTITY = 3


def _parse_floats(text):
    return np.array([float(x) for x in text.split(",")])


def resolve_scheme(name, summary, K):
    """Scheme from a CLI descriptor: equal, empirical, or product:d1,...,dK."""
    if name == "equal":
        return equal_scheme(K)
    if name == "empirical":
        if summary is None:
            raise ParseError("empirical scheme needs observed data")
        return empirical_scheme(summary)
    if name.startswith("product:"):
        delta = _parse_floats(name.split(":", 1)[1])
        if delta.size != K:
            raise ParseError(f"product scheme needs {K} probabilities")
        return product_scheme(delta)
    raise ParseError(f"unknown scheme {name!r}")


def _emit(payload, out):
    text = json.dumps(payload, indent=2, sort_keys=True)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _run_config(args):
    return {
        "version": __version__,
        "command": args.command,
        "args": {k: v for k, v in vars(args).items() if k != "func"},
    }


def cmd_analyze(args):
    labels = args.factors.split(",") if args.factors else None
    if labels is None:
        raise ParseError("--factors is required for analyze")
    spec = FactorSpec(tuple(labels))
    data = ingest_csv(args.input, spec, outcome_col=args.outcome_col)
    summary = cell_summary(data, variances=True)
    scheme = resolve_scheme(args.scheme, summary, spec.K)

    if args.delta:
        delta = _parse_floats(args.delta)
        if delta.size != spec.K:
            raise ParseError(f"--delta needs {spec.K} values")
    else:
        # default: pair the shifts with the scheme's marginal one-probabilities
        delta = scheme.factor_one_probs()

    report = effect_estimates(data, scheme, alpha=args.alpha)
    payload = {
        "config": _run_config(args),
        "moment": report.to_dict(),
        "delta": delta.tolist(),
    }

    if args.model:
        terms = tuple(parse_subset_label(t, spec) for t in args.model.split(","))
        model = ModelSpec(delta, terms)
        if model.saturated:
            fit, verification = saturated_fit(data, delta)
            payload["regression"] = fit.to_dict(spec)
            payload["verification"] = {
                "identity": "saturated vs moment",
                "max_rel_err": max(
                    verification["coef_rel_err"], verification["cov_rel_err"] or 0.0
                ),
                "pass": True,
            }
        else:
            fit = unsaturated_fit(data, model)
            payload["regression"] = fit.to_dict(spec)
            rel = verify_omitted_relation(data, model)
            payload["verification"] = {
                "identity": "unsaturated = saturated + correction",
                "max_rel_err": rel["relation_rel_err"],
                "correction_magnitude": float(np.abs(rel["correction"]).max()),
                "pass": bool(rel["pass"]),
            }
    else:
        fit, verification = saturated_fit(data, delta)
        payload["regression"] = fit.to_dict(spec)
        payload["verification"] = {
            "identity": "saturated vs moment",
            "max_rel_err": max(
                verification["coef_rel_err"], verification["cov_rel_err"] or 0.0
            ),
            "pass": True,
        }

    _emit(payload, args.out)
    return EXIT_OK if payload["verification"]["pass"] else EXIT_IDENTITY


def _load_population(args, sizes):
    rng = replicate_rng(args.seed, 0)
    if args.population == "constant":
        u = rng.normal(0.0, 1.0, size=sizes.N)
        m = rng.normal(0.0, 2.0, size=sizes.Q)
        return make_constant_effects_population(sizes.N, u, m)
    if args.population == "no-three-way":
        K = int(round(np.log2(sizes.Q)))
        return make_no_three_way_population(sizes.N, K, args.seed)
    if args.population == "heterogeneous":
        K = int(round(np.log2(sizes.Q)))
        return PotentialOutcomeTable(rng.normal(0.0, 1.0, size=(sizes.N, sizes.Q)))
    if os.path.exists(args.population):
        return PotentialOutcomeTable.from_csv(args.population)
    raise ParseError(f"unknown population {args.population!r}")


def cmd_simulate(args):
    sizes = DesignSizes(np.array([int(s) for s in args.sizes.split(",")]))
    table = _load_population(args, sizes)
    if table.N != sizes.N:
        raise ParseError("population size and design sizes disagree")
    K = table.K
    fspec = default_spec(K)
    scheme = product_scheme(_parse_floats(args.delta)) if args.delta else equal_scheme(K)
    truth = true_effects(table, scheme)

    def estimator(data):
        rep = effect_estimates(data, scheme, alpha=args.alpha)
        return rep.estimate, rep.covariance

    count = sizes.assignment_count()
    payload = {"config": _run_config(args), "truth": truth.tolist()}
    if args.exact and count <= ENUMERATION_GUARD:
        mean, cov = exact_expectations(table, sizes, lambda d: estimator(d)[0], fspec)
        bias = float(np.abs(mean - truth).max())
        payload["report"] = {
            "mode": "exact",
            "assignments": count,
            "est_mean": mean.tolist(),
            "est_cov": cov.tolist(),
            "unbiasedness": {"max_abs_bias": bias, "pass": bias <= 1e-8},
        }
        _emit(payload, args.out)
        return EXIT_OK if payload["report"]["unbiasedness"]["pass"] else EXIT_IDENTITY
    if args.exact and not args.allow_mc:
        raise TooManyAssignmentsError(
            f"{count} assignments exceed the enumeration guard; pass --allow-mc"
        )
    if args.exact:
        print(
            f"warning: {count} assignments exceed the guard; falling back to Monte Carlo",
            file=sys.stderr,
        )
    report = monte_carlo(
        table,
        sizes,
        estimator,
        reps=args.reps,
        seed=args.seed,
        truth=truth,
        alpha=args.alpha,
        workers=args.workers,
    )
    payload["report"] = report.to_dict()
    _emit(payload, args.out)
    return EXIT_OK


def cmd_verify(args):
    delta = _parse_floats(args.delta) if args.delta else None
    records = run_identity_suite(
        K=args.K,
        seed=args.seed,
        balanced=args.balanced,
        delta=delta,
        perturb=args.perturb,
    )
    payload = {"config": _run_config(args), "identities": records}
    payload["pass"] = suite_passed(records)
    _emit(payload, args.out)
    return EXIT_OK if payload["pass"] else EXIT_IDENTITY


def build_parser():
    parser = argparse.ArgumentParser(
        prog="factorial2k",
        description="Design-based inference for 2^K factorial experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    default_seed = int(os.environ.get("FACTORIAL2K_SEED", "0"))

    pa = sub.add_parser("analyze", help="estimate effects from a CSV dataset")
    pa.add_argument("--input", required=True)
    pa.add_argument("--factors", help="comma-separated factor column labels")
    pa.add_argument("--outcome-col", default="Y")
    pa.add_argument("--scheme", default="equal")
    pa.add_argument("--delta", help="comma-separated shifts; default: scheme marginals")
    pa.add_argument("--model", help="comma-separated terms, e.g. A,B,A:B; default saturated")
    pa.add_argument("--alpha", type=float, default=0.05)
    pa.add_argument("--out")
    pa.set_defaults(func=cmd_analyze)

    ps = sub.add_parser("simulate", help="design-based simulation of an estimator")
    ps.add_argument("--population", required=True, help="constant | no-three-way | heterogeneous | CSV path")
    ps.add_argument("--sizes", required=True, help="comma-separated cell sizes")
    ps.add_argument("--delta", help="shifts defining the product-scheme estimand")
    ps.add_argument("--alpha", type=float, default=0.05)
    ps.add_argument("--reps", type=int, default=10000)
    ps.add_argument("--seed", type=int, default=default_seed)
    ps.add_argument("--workers", type=int, default=1)
    ps.add_argument("--exact", action="store_true", help="enumerate all assignments")
    ps.add_argument("--allow-mc", action="store_true", help="fall back to Monte Carlo when enumeration is infeasible")
    ps.add_argument("--out")
    ps.set_defaults(func=cmd_simulate)

    pv = sub.add_parser("verify", help="run the exact-identity suite on random data")
    pv.add_argument("--K", type=int, default=3)
    pv.add_argument("--seed", type=int, default=default_seed)
    pv.add_argument("--balanced", action="store_true")
    pv.add_argument("--delta")
    pv.add_argument("--perturb", type=float, default=0.0, help="test hook: inject an error")
    pv.add_argument("--out")
    pv.set_defaults(func=cmd_verify)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ValueError, TooManyAssignmentsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except IdentityViolationError as exc:
        print(f"identity failure: {exc}", file=sys.stderr)
        return EXIT_IDENTITY
    except (RankDeficientError, Factorial2kError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
