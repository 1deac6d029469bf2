"""Command-line front end.

Every command writes one JSON report (sorted keys) to stdout or ``--output``.
Exit codes: 0 success, 2 invalid input, 3 numerical failure.

Density models are given as a JSON file::

    {"g0": {"type": "linear-exp", "coef": [0, 0, 1]},
     "g1": {"type": "linear-exp", "coef": [0, 0, 2]}}

Supported types are ``gaussian`` (``mean``, ``cov`` or ``cov_csv``),
``linear-exp`` (``coef``) and ``vc`` (``A`` or ``A_csv``, ``lambda2``,
``sigma2``, optional ``mean``).  An optional ``g0_hat`` entry supplies the
sampling density for the geometric estimator.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .approx import bernstein_test_value, chi, concentration_tail, uniform_class_probabilities
from .densities import (DensityModel, GaussianSpec, VcCovarianceSpec, build_vc_covariance,
                        gaussian_model, linear_exp_model)
from .errors import GenpermError, InputError, NumericalError
from .exact import (RatioOrder, exact_significance, mp_test, scan_orbit)
from .linmodel import (LinearModelSpec, VcTestSpec, alt_model, np_counterexample_report,
                       null_model, v1_order, v2_order, vc_test)
from .significance import (DEFAULT_EPSILONS, direct_estimate, geometric_estimate,
                           indirect_estimate_classprob)

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3
SAMPLING_METHODS = ("direct", "indirect", "geometric")
TOP_K = 10


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(message)


# ---------------------------------------------------------------- input / output

def load_matrix(path) -> np.ndarray:
    """Read a numeric CSV into a 2-D array, rejecting ragged or non-numeric rows."""
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    if not rows:
        raise InputError(f"{path} is empty")
    width = len(rows[0])
    for i, r in enumerate(rows, 1):
        if len(r) != width:
            raise InputError(f"{path}: row {i} has {len(r)} columns, expected {width}")
    try:
        return np.array([[float(c) for c in r] for r in rows], dtype=float)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None


def load_vector(path) -> np.ndarray:
    M = load_matrix(path)
    if 1 not in M.shape:
        raise InputError(f"{path} must hold a single row or column, got shape {M.shape}")
    return M.ravel()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def dumps_report(report: dict) -> str:
    return json.dumps(_jsonable(report), sort_keys=True, indent=2) + "\n"


def emit_report(report: dict, path: Optional[str] = None) -> str:
    """Serialize with stable key order; write to `path` or stdout."""
    text = dumps_report(report)
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)
    return text


def _density(cfg: dict, base: Path) -> DensityModel:
    if not isinstance(cfg, dict) or "type" not in cfg:
        raise InputError("each density needs a 'type'")
    kind = cfg["type"]

    def mat(key):
        if key in cfg:
            return np.asarray(cfg[key], dtype=float)
        if f"{key}_csv" in cfg:
            return load_matrix(base / cfg[f"{key}_csv"])
        raise InputError(f"{kind} density needs '{key}' or '{key}_csv'")

    if kind == "linear-exp":
        return linear_exp_model(cfg["coef"])
    if kind == "gaussian":
        return gaussian_model(GaussianSpec(cfg["mean"], mat("cov")))
    if kind == "vc":
        spec = VcCovarianceSpec(mat("A"), float(cfg["lambda2"]), float(cfg.get("sigma2", 1.0)))
        cov = build_vc_covariance(spec)
        return gaussian_model(GaussianSpec(cfg.get("mean", np.zeros(cov.shape[0])), cov), name="vc")
    raise InputError(f"unknown density type {kind!r}")


def load_model(path):
    path = Path(path)
    try:
        cfg = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read model {path}: {exc}") from None
    if "g0" not in cfg or "g1" not in cfg:
        raise InputError("model config needs 'g0' and 'g1'")
    g0 = _density(cfg["g0"], path.parent)
    g1 = _density(cfg["g1"], path.parent)
    g0_hat = _density(cfg["g0_hat"], path.parent) if "g0_hat" in cfg else g0
    return g0, g1, g0_hat


def _observed(args) -> np.ndarray:
    if args.x_values is not None:
        try:
            return np.array([float(v) for v in args.x_values.split(",")])
        except ValueError as exc:
            raise InputError(f"bad --x-values: {exc}") from None
    if args.x is None:
        raise InputError("give the observed point with --x or --x-values")
    return load_vector(args.x)


def _floats(text: str) -> list:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise InputError(f"expected comma-separated numbers, got {text!r}") from None


# ---------------------------------------------------------------- summaries

def _scan_summary(scan) -> dict:
    order = np.argsort(-scan.class_weight, kind="stable")[:TOP_K]
    sig = exact_significance(scan)
    return {
        "D": scan.D,
        "r": scan.r,
        "n": scan.n,
        "class_weights": scan.class_weight,
        "class_sizes": scan.class_size,
        "class_log_ratio": scan.class_log_ratio,
        "top_k_weights": [{"class": int(i) + 1, "weight": float(scan.class_weight[i])} for i in order],
        "alpha_strict": sig.alpha_strict,
        "alpha_inclusive": sig.alpha_inclusive,
        "p_value": {"paper-definition": sig.alpha_strict, "tie-inclusive": sig.alpha_inclusive},
    }


def _decision(dec) -> dict:
    return {"phi": dec.phi, "d": dec.d, "vartheta": dec.vartheta, "class_phi": dec.class_phi}


def _estimate(est) -> dict:
    out = {"alpha_hat": est.alpha_hat, "s": est.s, "seed": est.seed, "method": est.method}
    if est.bounds is not None:
        out["bounds"] = est.bounds.as_dict()
    details = dict(est.details)
    if "region_masses" in details:
        details["region_masses"] = [{"perm": list(k), "freq": v}
                                    for k, v in sorted(details["region_masses"].items())]
    out["details"] = details
    return out


def _scan_warnings(scan) -> list:
    return list(scan.warnings)


# ---------------------------------------------------------------- commands

def cmd_scan(args):
    g0, g1, _ = load_model(args.model)
    scan = scan_orbit(_observed(args), RatioOrder.ratio(g0, g1), g0, args.exhaustive_limit)
    return _scan_summary(scan), _scan_warnings(scan)


def cmd_test(args):
    g0, g1, _ = load_model(args.model)
    scan = scan_orbit(_observed(args), RatioOrder.ratio(g0, g1), g0, args.exhaustive_limit)
    res = _scan_summary(scan)
    res.update(_decision(mp_test(scan, args.alpha)))
    return res, _scan_warnings(scan)


def cmd_pvalue(args):
    g0, g1, g0_hat = load_model(args.model)
    x = _observed(args)
    order = RatioOrder.ratio(g0, g1)
    eps = _floats(args.epsilon)
    warnings = []
    if args.method == "exact":
        scan = scan_orbit(x, order, g0, args.exhaustive_limit)
        return _scan_summary(scan), _scan_warnings(scan)
    if args.method == "direct":
        est = direct_estimate(x, order, g0, args.samples, args.seed, epsilon=eps,
                              limit=args.exhaustive_limit)
    elif args.method == "indirect":
        scan = scan_orbit(x, order, g0, args.exhaustive_limit)
        warnings += _scan_warnings(scan)
        est = indirect_estimate_classprob(scan, args.samples, args.seed, epsilon=eps)
    else:
        est = geometric_estimate(x, order, g0_hat, None, args.samples, args.seed, epsilon=eps)
    return _estimate(est), warnings + list(est.warnings)


def cmd_bernstein(args):
    g0, g1, _ = load_model(args.model)
    scan = scan_orbit(_observed(args), RatioOrder.ratio(g0, g1), g0, args.exhaustive_limit)
    p = uniform_class_probabilities(scan) if args.p is None else np.array(_floats(args.p))
    res = {
        "phi_hat": bernstein_test_value(scan, p, args.samples, args.alpha),
        "chi": chi(p, scan, args.alpha),
        "phi_exact": mp_test(scan, args.alpha).phi,
        "p": p,
        "s": args.samples,
    }
    if args.delta is not None:
        t = concentration_tail(scan, p, args.samples, args.delta)
        res["concentration"] = {
            "delta": args.delta, "exact_tail": t.exact_tail, "exact_tail_signed": t.exact_tail_signed,
            "bernstein_bound": t.bernstein_bound, "hoeffding_bound": t.hoeffding_bound,
            "sigma2": t.sigma2, "c": t.c, "norm_p": t.norm_p,
        }
    return res, _scan_warnings(scan)


def cmd_lm_test(args):
    y = load_vector(args.y)
    X = load_matrix(args.X)
    S0 = load_matrix(args.Sigma0)
    S1 = load_matrix(args.Sigma1) if args.Sigma1 else S0
    u = np.array(_floats(args.u)) if args.u else np.ones(X.shape[1]) / math.sqrt(X.shape[1])
    spec = LinearModelSpec(y, X, S0, S1, u, args.beta_norm)
    g0 = null_model(spec)
    if args.order == "v1":
        order = v1_order(spec)
    elif args.order == "v2":
        order = v2_order(spec)
    else:
        order = RatioOrder.ratio(g0, alt_model(spec))
    scan = scan_orbit(y, order, g0, args.exhaustive_limit)
    res = _scan_summary(scan)
    res.update(_decision(mp_test(scan, args.alpha)))
    warnings = _scan_warnings(scan)
    if args.order == "v1" and not np.allclose(S0, S1):
        warnings.append("v1 ordering ignores the covariance term because Sigma0 != Sigma1")
    return res, warnings


def cmd_vc_test(args):
    spec = VcTestSpec(load_vector(args.y), load_matrix(args.A), args.lambda2, args.sigma0_2,
                      args.direction)
    out = vc_test(spec, args.alpha, args.exhaustive_limit, args.sigma1_2)
    res = _scan_summary(out.scan)
    res.update(_decision(out.decision))
    if out.log_ratio is not None:
        res["log_ratio"] = out.log_ratio
    return res, _scan_warnings(out.scan)


def cmd_demo_np(args):
    rep = np_counterexample_report(args.delta, args.alpha, args.samples, args.seed)
    return dict(rep.__dict__), []


def _validate_checks():
    from .perm import all_permutations

    g0, g1 = linear_exp_model([0, 0, 1]), linear_exp_model([0, 0, 2])
    order = RatioOrder.ratio(g0, g1)
    e = math.e
    w_ref = np.array([e**3, e**2, e]) / (e**3 + e**2 + e)
    scan1 = scan_orbit(np.array([1.0, 2.0, 3.0]), order, g0)
    scan2 = scan_orbit(np.array([1.0, 3.0, 2.0]), order, g0)
    phi = mp_test(scan1, 0.05).phi
    vc = vc_test(VcTestSpec([1, 2, 3], np.diag([1.0, 2.0, 3.0]), 1.0), 0.05)
    full = direct_estimate(np.array([1.0, 3.0, 2.0]), order, g0, sample=all_permutations(3), rng=0)
    checks = {
        "toy_a_weights": float(np.max(np.abs(scan1.class_weight - w_ref))),
        "toy_a_phi": abs(phi - 0.05 / w_ref[0]),
        "toy_a_alpha_strict": abs(exact_significance(scan2).alpha_strict - w_ref[0]),
        "bernstein_s2": abs(bernstein_test_value(scan1, None, 2, 0.05) - 0.477814),
        "toy_d_alpha_strict": abs(vc.significance.alpha_strict - 0.745779),
        "direct_full_enumeration": abs(full.alpha_hat - exact_significance(scan2).alpha_strict),
    }
    return {k: {"error": v, "pass": bool(v <= 1e-5)} for k, v in checks.items()}


def cmd_validate(args):
    checks = _validate_checks()
    res = {"checks": checks, "all_pass": all(c["pass"] for c in checks.values())}
    return res, []


COMMANDS = {
    "scan": cmd_scan,
    "test": cmd_test,
    "pvalue": cmd_pvalue,
    "bernstein": cmd_bernstein,
    "lm-test": cmd_lm_test,
    "vc-test": cmd_vc_test,
    "demo-np": cmd_demo_np,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="genperm", description="Generalized permutation tests for non-exchangeable nulls.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, alpha=True):
        if alpha:
            sp.add_argument("--alpha", type=float, default=0.05)
        sp.add_argument("--exhaustive-limit", type=int, default=None)
        sp.add_argument("--threads", type=int, default=1, help="worker cap; results do not depend on it")
        sp.add_argument("--output", "-o", default=None, help="report path (default stdout)")

    def observed(sp):
        sp.add_argument("--model", required=True, help="JSON density config")
        sp.add_argument("--x", help="CSV holding the observed point")
        sp.add_argument("--x-values", help="observed point as comma-separated numbers")

    sp = sub.add_parser("scan", help="orbit class structure and exact p-values")
    observed(sp)
    common(sp, alpha=False)

    sp = sub.add_parser("test", help="most powerful generalized permutation test")
    observed(sp)
    common(sp)

    sp = sub.add_parser("pvalue", help="exact or Monte Carlo significance")
    observed(sp)
    common(sp, alpha=False)
    sp.add_argument("--method", choices=("exact",) + SAMPLING_METHODS, default="exact")
    sp.add_argument("--samples", type=int, default=1000)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--epsilon", default=",".join(str(e) for e in DEFAULT_EPSILONS))

    sp = sub.add_parser("bernstein", help="rejection probability of the sample test")
    observed(sp)
    common(sp)
    sp.add_argument("--samples", type=int, required=True, help="sample size s")
    sp.add_argument("--p", default=None, help="class probabilities (default uniform)")
    sp.add_argument("--delta", type=float, default=None, help="also report the concentration tail")

    sp = sub.add_parser("lm-test", help="linear-model test from CSV inputs")
    common(sp)
    sp.add_argument("--y", required=True)
    sp.add_argument("--X", required=True)
    sp.add_argument("--Sigma0", required=True)
    sp.add_argument("--Sigma1", default=None, help="defaults to Sigma0")
    sp.add_argument("--u", default=None, help="unit direction of beta")
    sp.add_argument("--beta-norm", type=float, default=None)
    sp.add_argument("--order", choices=("v1", "v2", "full"), default="v1")

    sp = sub.add_parser("vc-test", help="variance-component test")
    common(sp)
    sp.add_argument("--y", required=True)
    sp.add_argument("--A", required=True)
    sp.add_argument("--lambda2", type=float, required=True)
    sp.add_argument("--sigma0-2", type=float, default=1.0)
    sp.add_argument("--sigma1-2", type=float, default=None)
    sp.add_argument("--direction", choices=("greater", "less"), default="greater")

    sp = sub.add_parser("demo-np", help="power against Neyman-Pearson in the bivariate normal case")
    common(sp)
    sp.set_defaults(alpha=0.5)
    sp.add_argument("--delta", type=float, default=1.0)
    sp.add_argument("--samples", type=int, default=10000)
    sp.add_argument("--seed", type=int, default=None)

    sp = sub.add_parser("validate", help="built-in oracle checks")
    common(sp, alpha=False)
    return p


def _check_args(args):
    alpha = getattr(args, "alpha", None)
    if alpha is not None and not 0 <= alpha <= 1:
        raise InputError("alpha must lie in [0, 1]")
    sampling = args.command == "demo-np" or (args.command == "pvalue" and args.method in SAMPLING_METHODS)
    if sampling:
        if args.samples < 1:
            raise InputError("--samples must be at least 1")
        if args.seed is None:
            raise InputError("--seed is required for sampling commands")
    if args.command == "bernstein" and args.samples < 1:
        raise InputError("--samples must be at least 1")
    if args.threads < 1:
        raise InputError("--threads must be at least 1")


def _config_echo(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k != "output"}


def run(argv=None) -> tuple[dict, int]:
    """Parse `argv`, dispatch, and return ``(report, exit_code)``."""
    report = {"version": __version__}
    t0 = time.perf_counter()
    try:
        args = build_parser().parse_args(argv)
        report["config"] = _config_echo(args)
        _check_args(args)
        results, warnings = COMMANDS[args.command](args)
        report["results"] = results
        report["warnings"] = warnings
        code = EXIT_OK
        if args.command == "validate" and not results["all_pass"]:
            code = EXIT_NUMERIC
    except InputError as exc:
        report["error"] = {"kind": type(exc).__name__, "message": str(exc)}
        code = EXIT_INPUT
    except NumericalError as exc:
        report["error"] = {"kind": type(exc).__name__, "message": str(exc)}
        code = EXIT_NUMERIC
    except GenpermError as exc:
        report["error"] = {"kind": type(exc).__name__, "message": str(exc)}
        code = EXIT_NUMERIC
    report["timing"] = {"seconds": time.perf_counter() - t0}
    report["exit_code"] = code
    return report, code


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    report, code = run(argv)
    emit_report(report, _output_path(argv))
    if code != EXIT_OK and "error" in report:
        print(f"genperm: {report['error']['message']}", file=sys.stderr)
    return code


def _output_path(argv) -> Optional[str]:
    for i, a in enumerate(argv):
        if a in ("--output", "-o") and i + 1 < len(argv):
            return argv[i + 1]
        if a.startswith("--output="):
            return a.split("=", 1)[1]
    return None


if __name__ == "__main__":
    sys.exit(main())
