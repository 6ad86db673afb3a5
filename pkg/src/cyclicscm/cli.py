"""Command-line front end: ``cyclicscm <command> MODEL [options]``.

Exit codes: 0 success, 1 input error, 2 certification failure, 3 solver
divergence, 4 abduction failure, 5 tail-check failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time

import numpy as np

from . import concentration as conc
from .contraction import (LINEAR_OPERATOR_NORM, SAMPLED_ESTIMATE, certify,
                          estimate_kappa_sampled, kappa_after_intervention, norm_label,
                          parse_p, user_asserted)
from .errors import (DegenerateNoise, Diverged, MaxIterExceeded, NonLinearModel,
                     NotContractive, ScmError, SingularSystem, Uncertifiable)
from .interventions import (Intervention, apply_shift_scale, check_composition_bound,
                            compose)
from .model import load_model, save_model
from .solver import (DEFAULT_MAX_ITER, DEFAULT_TOL, abduct_noise_linear, picard_solve,
                     sample_observational, write_csv)
from .twin import (counterfactual_aap, counterfactual_map_linear, counterfactual_sample,
                   counterfactual_twin)

EXIT_OK, EXIT_INPUT, EXIT_CERT, EXIT_DIVERGED, EXIT_ABDUCTION, EXIT_TAIL = range(6)


class UsageError(Exception):
    pass


class CommandFailed(Exception):
    def __init__(self, code, message):
        self.code = code
        super().__init__(message)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


class _InterventionFlag(argparse.Action):
    """Collect --ss/--do flags in command-line order."""

    def __call__(self, parser, namespace, values, option_string=None):
        items = list(getattr(namespace, "interventions", None) or [])
        items.append((option_string.lstrip("-"), values))
        namespace.interventions = items


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _interventions(model, flags):
    """Turn ``[("ss", "I:0.8:1.0"), ("do", "C:2")]`` into interventions."""
    out = []
    for kind, text in flags or []:
        parts = text.split(":")
        try:
            if kind == "ss":
                name, a, b = parts
                triple = (model.index(name), float(a), float(b))
            else:
                name, value = parts
                triple = (model.index(name), 0.0, float(value))
        except KeyError as err:
            raise UsageError(str(err.args[0])) from None
        except ValueError:
            form = "NAME:a:b" if kind == "ss" else "NAME:value"
            raise UsageError(f"--{kind} expects {form}, got {text!r}") from None
        out.append(Intervention((triple,)))
    return out


def _composed(model, flags):
    ivs = _interventions(model, flags)
    return (compose(ivs) if ivs else Intervention.identity()), ivs


def _try_certify(model, p):
    try:
        return certify(model, p)
    except Uncertifiable:
        return None


def _named(model, values):
    return dict(zip(model.endogenous_names, np.asarray(values, dtype=float).tolist()))


def _verdict(cert):
    if cert is None:
        return "unknown"
    if cert.simple_guaranteed:
        return "yes"
    if cert.method == LINEAR_OPERATOR_NORM or (cert.method == SAMPLED_ESTIMATE
                                               and cert.kappa >= 1):
        return "no"
    return "unknown"


# ---------------------------------------------------------------------------
# commands; each returns (exit code, payload dict, human-readable lines)
# ---------------------------------------------------------------------------

def cmd_certify(model, args):
    p = parse_p(args.p)
    lines = []
    try:
        cert = certify(model, p)
    except Uncertifiable as err:
        lines.append(f"interval bound not applicable: {err}")
        cert = None
        if args.samples:
            est = estimate_kappa_sampled(model, p, args.samples, args.seed)
            payload = {"certificate": est.to_dict(), "simple": _verdict(est)}
            lines.append(f"sampled estimate kappa >= {est.kappa:.6g} (p={norm_label(p)}, "
                         f"{args.samples} pairs, not a certificate)")
            lines.append(f"simple: {_verdict(est)}")
            return EXIT_CERT, payload, lines
        lines.append("simple: unknown (rerun with --samples N for an empirical estimate)")
        return EXIT_CERT, {"certificate": None, "simple": "unknown"}, lines
    verdict = _verdict(cert)
    lines.append(f"kappa = {cert.kappa:.6g} (p={norm_label(p)}, {cert.method})")
    if cert.frobenius_bound is not None:
        lines.append(f"frobenius bound = {cert.frobenius_bound:.6g}")
    lines.append(f"simple: {verdict}")
    return (EXIT_OK if verdict == "yes" else EXIT_CERT,
            {"certificate": cert.to_dict(), "simple": verdict}, lines)


def cmd_solve(model, args):
    if args.zero_noise or args.noise is None:
        e = np.zeros(model.n_noise)
    else:
        e = np.array(_floats(args.noise))
        if e.size != model.n_noise:
            raise UsageError(f"--noise needs {model.n_noise} values, got {e.size}")
    p = parse_p(args.p)
    cert = _try_certify(model, p)
    kappa = cert if cert is not None and cert.simple_guaranteed else None
    report = picard_solve(model, e, p=p, tol=args.tol, max_iter=args.max_iter, kappa=kappa)
    payload = {"noise": e.tolist(), "solution": report.to_dict(),
               "named": _named(model, report.x_star)}
    lines = [f"{k} = {v:.10g}" for k, v in payload["named"].items()]
    lines.append(f"iterations: {report.iterations}, residual: {report.residual:.3g}")
    return EXIT_OK, payload, lines


def cmd_sample(model, args):
    if args.n < 0:
        raise UsageError("--n must be nonnegative")
    try:
        rows = sample_observational(model, args.n, args.seed,
                                    allow_uncertified=args.allow_uncertified)
    except NotContractive as err:
        raise CommandFailed(EXIT_CERT, str(err)) from err
    if args.out:
        write_csv(args.out, model.endogenous_names, rows)
    mean = rows.mean(axis=0) if len(rows) else np.full(model.n, math.nan)
    cov = np.cov(rows, rowvar=False).reshape(model.n, model.n) if len(rows) > 1 else None
    payload = {"n": args.n, "out": args.out, "mean": _named(model, mean),
               "covariance": None if cov is None else cov.tolist()}
    lines = [f"{args.n} samples" + (f" written to {args.out}" if args.out else "")]
    lines += [f"mean {k} = {v:.6g}" for k, v in payload["mean"].items()]
    if cov is not None:
        lines.append(f"covariance = {np.array2string(cov, precision=6)}")
    return EXIT_OK, payload, lines


def _intervention_payload(model, iv, ivs):
    report = check_composition_bound(ivs) if ivs else None
    composed = {model.endogenous_names[j]: {"a": a, "b": b} for j, a, b in iv.targets}
    lines = [f"{name}: a = {v['a']:.10g}, b = {v['b']:.10g}" for name, v in composed.items()]
    payload = {"composed": composed,
               "stagewise_scales_bounded": None if report is None else report.guarantee_holds}
    cert = _try_certify(model, 2)
    if cert is not None:
        after = kappa_after_intervention(cert, iv)
        payload["certificate_after"] = after.to_dict()
        payload["simple_guaranteed"] = after.simple_guaranteed
        tag = "kappa preserved" if after is cert else "kappa_max"
        lines.append(f"{tag}: {after.kappa:.6g}; simple guaranteed: "
                     f"{'yes' if after.simple_guaranteed else 'no'}")
    return payload, lines


def cmd_intervene(model, args):
    iv, ivs = _composed(model, args.interventions)
    new = apply_shift_scale(model, iv)
    payload, lines = _intervention_payload(model, iv, ivs)
    if args.out:
        save_model(new, args.out)
        lines.append(f"wrote {args.out}")
    payload["out"] = args.out
    return EXIT_OK, payload, lines


def cmd_compose(model, args):
    iv, ivs = _composed(model, args.interventions)
    payload, lines = _intervention_payload(model, iv, ivs)
    return EXIT_OK, payload, lines


def cmd_counterfactual(model, args):
    iv, _ = _composed(model, args.interventions)
    if args.samples:
        try:
            rows = counterfactual_sample(counterfactual_twin(model, iv), args.samples,
                                         args.seed)
        except NotContractive as err:
            raise CommandFailed(EXIT_CERT, str(err)) from err
        names = list(model.endogenous_names) + [f"{nm}'" for nm in model.endogenous_names]
        mean = rows.mean(axis=0)
        cov = np.cov(rows, rowvar=False)
        payload = {"mode": "sample", "n": args.samples, "names": names,
                   "mean": mean.tolist(), "covariance": cov.tolist()}
        lines = [f"mean {k} = {v:.6g}" for k, v in zip(names, mean)]
        lines.append(f"covariance =\n{np.array2string(cov, precision=6)}")
        return EXIT_OK, payload, lines
    if args.obs is None:
        raise UsageError("--obs is required unless --samples is given")
    x_obs = np.array(_floats(args.obs))
    if x_obs.size != model.n:
        raise UsageError(f"--obs needs {model.n} values, got {x_obs.size}")
    try:
        e = abduct_noise_linear(model, x_obs)
        cf = counterfactual_aap(model, iv, e=e)
        cmap = counterfactual_map_linear(model, iv)
    except NonLinearModel as err:
        raise CommandFailed(EXIT_ABDUCTION,
                            f"exact abduction needs affine mechanisms ({err})") from err
    except DegenerateNoise as err:
        raise CommandFailed(EXIT_ABDUCTION, str(err)) from err
    payload = {"mode": "exact", "observation": _named(model, x_obs),
               "noise": dict(zip(model.exogenous_names, e.tolist())),
               "counterfactual": {f"{k}'": v for k, v in _named(model, cf).items()},
               "response_map": cmap.to_dict()}
    lines = [f"abducted {k} = {v:.10g}" for k, v in payload["noise"].items()]
    lines += [f"{k} = {v:.10g}" for k, v in payload["counterfactual"].items()]
    for name, row, c in zip(cmap.names, cmap.matrix, cmap.offset):
        terms = " ".join(f"{coef:+.6f}*{nm}" for coef, nm in zip(row, model.endogenous_names))
        lines.append(f"{name} = {c:.6f} {terms}")
    return EXIT_OK, payload, lines


def cmd_tailcheck(model, args):
    p = parse_p(args.p)
    t_grid = _floats(args.t_grid)
    if not t_grid or any(not t > 0 for t in t_grid):
        raise UsageError("--t-grid values must be positive")
    if args.n < 2:
        raise UsageError("--n must be at least 2")
    iv, _ = _composed(model, args.interventions)
    try:
        h = conc.parse_functional(args.h, model)
    except (KeyError, ValueError) as err:
        raise UsageError(str(err)) from None
    if args.assert_kappa is not None:
        cert = user_asserted(args.assert_kappa, p)
    else:
        cert = _try_certify(model, p)
        if cert is None:
            raise CommandFailed(EXIT_CERT, "model cannot be certified; pass --assert-kappa")
    if iv.a_max() > 1:
        if not args.allow_kappa_max:
            raise CommandFailed(EXIT_CERT, "intervention scale exceeds 1; "
                                "pass --allow-kappa-max to use the inflated constant")
        cert = kappa_after_intervention(cert, iv)
    if not cert.simple_guaranteed:
        raise CommandFailed(EXIT_CERT, f"kappa = {cert.kappa:.6g} does not certify a contraction")
    twin = counterfactual_twin(model, iv)
    spec = conc.tail_spec_for_twin(twin, p, kappa=cert.kappa)
    samples = counterfactual_sample(twin, args.n, args.seed, certificate=cert)
    report = conc.empirical_tail_check(twin, h, spec, t_grid, args.n, args.seed,
                                       two_sided=args.two_sided, samples=samples)
    if args.csv:
        report.write_csv(args.csv)
    payload = {"certificate": cert.to_dict(), "tailcheck": report.to_dict(), "csv": args.csv}
    lines = [f"functional {report.functional}, kappa = {spec.kappa:.6g} ({cert.method}), "
             f"sigma2 = {spec.sigma2:.6g}, proxy = {spec.proxy():.6g}"]
    for r in report.rows:
        lines.append(f"t = {r.t:<6g} empirical = {r.empirical:.6f}  bound = {r.bound:.6f}  "
                     f"slack = {r.slack:.6f}  {'pass' if r.passed else 'FAIL'}")
    lines.append("tail check: " + ("pass" if report.passed else "FAIL"))
    return (EXIT_OK if report.passed else EXIT_TAIL), payload, lines


COMMANDS = {
    "certify": cmd_certify, "solve": cmd_solve, "sample": cmd_sample,
    "intervene": cmd_intervene, "counterfactual": cmd_counterfactual,
    "tailcheck": cmd_tailcheck, "compose": cmd_compose,
}


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("model", help="model file (JSON)")
    common.add_argument("--json", action="store_true", help="emit one JSON report on stdout")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--tol", type=float, default=DEFAULT_TOL)
    common.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER)

    ivflags = _Parser(add_help=False)
    ivflags.set_defaults(interventions=[])
    ivflags.add_argument("--ss", action=_InterventionFlag, metavar="NAME:a:b",
                         dest="interventions",
                         help="shift-scale intervention (repeatable, applied in order)")
    ivflags.add_argument("--do", action=_InterventionFlag, metavar="NAME:value",
                         dest="interventions", help="hard intervention (repeatable)")

    parser = _Parser(prog="cyclicscm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("certify", parents=[common], help="certify global contraction")
    c.add_argument("--p", default="2", choices=["1", "2", "inf"])
    c.add_argument("--samples", type=int, default=0)

    s = sub.add_parser("solve", parents=[common], help="solve x = f(x, e)")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--noise", help="comma-separated noise vector")
    g.add_argument("--zero-noise", action="store_true")
    s.add_argument("--p", default="2", choices=["1", "2", "inf"])

    sm = sub.add_parser("sample", parents=[common], help="observational samples to CSV")
    sm.add_argument("--n", type=int, default=1000)
    sm.add_argument("--out", help="CSV output path")
    sm.add_argument("--allow-uncertified", action="store_true")

    i = sub.add_parser("intervene", parents=[common, ivflags], help="write intervened model")
    i.add_argument("--out", help="output model path")

    sub.add_parser("compose", parents=[common, ivflags], help="compose interventions")

    cf = sub.add_parser("counterfactual", parents=[common, ivflags],
                        help="counterfactual query (exact or Monte Carlo)")
    cf.add_argument("--obs", help="comma-separated observation")
    cf.add_argument("--samples", type=int, default=0)

    t = sub.add_parser("tailcheck", parents=[common, ivflags],
                       help="empirical sub-Gaussian tail check")
    t.add_argument("--h", default="mean", help="proj:NAME, proj:NAME', diff:NAME or mean")
    t.add_argument("--t-grid", default="0.2,0.4,0.6,0.8")
    t.add_argument("--n", type=int, default=100_000)
    t.add_argument("--p", default="2", choices=["1", "2", "inf"])
    t.add_argument("--csv", help="write (t, empirical, bound) rows to this CSV")
    t.add_argument("--assert-kappa", type=float)
    t.add_argument("--allow-kappa-max", action="store_true")
    t.add_argument("--two-sided", action="store_true")
    return parser


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    start = time.perf_counter()
    report = {"command": None, "argv": argv, "model_digest": None, "seed": None}
    code, lines = EXIT_OK, []
    as_json = "--json" in argv
    try:
        args = build_parser().parse_args(argv)
        report.update(command=args.command, seed=args.seed)
        with open(args.model, "rb") as fh:
            report["model_digest"] = "sha256:" + hashlib.sha256(fh.read()).hexdigest()
        model = load_model(args.model)
        code, payload, lines = COMMANDS[args.command](model, args)
        report.update(payload)
    except UsageError as err:
        code, lines = EXIT_INPUT, [str(err)]
        report["error"] = str(err)
    except CommandFailed as err:
        code, lines = err.code, [str(err)]
        report["error"] = str(err)
    except (Diverged, MaxIterExceeded, SingularSystem) as err:
        code, lines = EXIT_DIVERGED, [f"solver failure: {err}"]
        report["error"] = str(err)
    except DegenerateNoise as err:
        code, lines = EXIT_ABDUCTION, [f"abduction failure: {err}"]
        report["error"] = str(err)
    except (OSError, ScmError, KeyError, ValueError) as err:
        code, lines = EXIT_INPUT, [f"error: {err}"]
        report["error"] = str(err)
    failed = "error" in report
    report["exit_code"] = code
    report["elapsed_seconds"] = round(time.perf_counter() - start, 6)
    if as_json:
        print(json.dumps(_jsonable(report)))
    else:
        for line in lines:
            print(line, file=sys.stderr if failed else sys.stdout)
    return code


if __name__ == "__main__":
    sys.exit(main())
