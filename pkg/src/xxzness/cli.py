"""chainctl: command-line driver for steady-state and counting-statistics experiments.

Every number written here comes from a library call; this module only parses
parameters, fans out independent points and writes tables.

Exit codes: 0 success, 2 invalid input, 3 numerical contract violated.
"""
import argparse
import configparser
import csv
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__, fcs, mpo, oracle, qlax
from .errors import ContractViolation, ValidationError, XXZError

CSV_VERSION = 1
EXPERIMENTS = ("profile", "current-scan", "decay-fit", "fcs-lambda", "fcs-cumulants",
               "pert-extract", "oracle-compare", "identity-suite")

DEFAULTS = {
    "delta": 1.0, "eps": 1.0, "n": "10", "mu": None, "rates": None, "h": 0.0,
    "cutoff": None, "chi_min": -np.pi, "chi_max": np.pi, "chi_points": 65,
    "chi": 0.7, "orders": 4, "eps_grid": "0.02,0.04,0.06,0.08,0.1,0.12",
    "seed": 0, "tol": 1e-8,
}


# ---------------------------------------------------------------- parsing

def parse_range(text):
    """'4..60', '4..60..2' (inclusive) or '3,5,8' -> list of ints."""
    text = str(text).strip()
    try:
        if ".." in text:
            parts = [int(p) for p in text.split("..")]
            if len(parts) not in (2, 3):
                raise ValueError
            step = parts[2] if len(parts) == 3 else 1
            if step <= 0:
                raise ValueError
            out = list(range(parts[0], parts[1] + 1, step))
        else:
            out = [int(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise ValidationError(f"bad integer range '{text}'") from None
    if not out:
        raise ValidationError(f"empty range '{text}'")
    return out


def parse_floats(text):
    try:
        out = [float(p) for p in str(text).split(",") if p.strip()]
    except ValueError:
        raise ValidationError(f"bad number list '{text}'") from None
    if not out:
        raise ValidationError("empty number list")
    return out


def read_config(path):
    """Flat 'key = value' file; optional [section] headers are ignored."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ValidationError(f"cannot read config: {exc}") from None
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string("[__top__]\n" + text)
    except configparser.Error as exc:
        raise ValidationError(f"bad config: {exc}") from None
    out = {}
    for sec in cp.sections():
        for k, v in cp.items(sec):
            out[k.replace("-", "_")] = v
    return out


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value parameter file")
    common.add_argument("--out", help="output directory (default: print table)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--jobs", type=int, default=None,
                        help="worker processes (default $CHAINCTL_JOBS or 1)")
    common.add_argument("--gnuplot", action="store_true", help="also write a gnuplot script")
    common.add_argument("--delta", type=float)
    common.add_argument("--eps", type=float)
    common.add_argument("--n", help="size, or range such as 4..60")
    common.add_argument("--mu", type=float)
    common.add_argument("--rates", help="a,b,c,d")
    common.add_argument("--h", type=float, help="staggered field")
    common.add_argument("--cutoff", type=int)
    common.add_argument("--chi", type=float)
    common.add_argument("--chi-min", type=float)
    common.add_argument("--chi-max", type=float)
    common.add_argument("--chi-points", type=int)
    common.add_argument("--orders", type=int)
    common.add_argument("--eps-grid")
    common.add_argument("--seed", type=int)
    common.add_argument("--tol", type=float)

    p = argparse.ArgumentParser(prog="chainctl", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"chainctl {__version__}")
    sub = p.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        sp_ = sub.add_parser(name, parents=[common])
        if name == "identity-suite":
            sp_.add_argument("--inject-wrong-s", action="store_true",
                             help="negative control: evaluate identities at a wrong spin")
    return p


def resolve(args):
    """Merge defaults < config file < command-line flags into one dict."""
    cfg = dict(DEFAULTS)
    if args.config:
        cfg.update(read_config(args.config))
    for k, v in vars(args).items():
        if v is not None and k not in ("config", "experiment"):
            cfg[k] = v
    cfg["experiment"] = args.experiment
    try:
        for k in ("delta", "eps", "h", "chi", "chi_min", "chi_max", "tol"):
            cfg[k] = float(cfg[k])
        for k in ("chi_points", "orders", "seed"):
            cfg[k] = int(cfg[k])
        if cfg["cutoff"] is not None:
            cfg["cutoff"] = int(cfg["cutoff"])
        if cfg["mu"] is not None:
            cfg["mu"] = float(cfg["mu"])
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"bad parameter: {exc}") from None
    cfg["n_list"] = parse_range(cfg["n"])
    if cfg.get("jobs") is None:
        cfg["jobs"] = int(os.environ.get("CHAINCTL_JOBS", "1") or 1)
    if cfg["jobs"] < 1:
        raise ValidationError("--jobs must be >= 1")
    return cfg


def driving(cfg):
    if cfg["rates"] is not None:
        r = parse_floats(cfg["rates"])
        if len(r) != 4:
            raise ValidationError("rates needs four values a,b,c,d")
        return fcs.DrivingRates(*r, eps=cfg["eps"], mu=cfg["mu"])
    return fcs.DrivingRates.symmetric(cfg["mu"] if cfg["mu"] is not None else 1.0, cfg["eps"])


def _single_n(cfg):
    if len(cfg["n_list"]) != 1:
        raise ValidationError("this experiment takes a single n")
    return cfg["n_list"][0]


def pmap(fn, items, jobs):
    if jobs == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------- experiments
# each returns (columns, rows, summary dict)

def exp_profile(cfg):
    n = _single_n(cfg)
    m = mpo.ness_model(cfg["delta"], cfg["eps"], n, cfg["cutoff"])
    j = np.arange(1, n + 1)
    prof = np.array([mpo.spin_profile(m, k) for k in j])
    ref = np.cos(np.pi * (j - 1) / (n - 1)) if n > 1 else np.ones(1)
    rows = [(int(a), b, c) for a, b, c in zip(j, prof, ref)]
    cur = mpo.current(m)
    summary = {"current": cur, "max_dev_cos": float(abs(prof - ref).max()),
               "J_eps_n2_over_pi2": cur * cfg["eps"] * n * n / np.pi ** 2}
    return ("j", "sz", "cos_reference"), rows, summary


def _current_point(args):
    delta, eps, n, cutoff = args
    m = mpo.ness_model(delta, eps, n, cutoff)
    return n, float(m.log_current())


def exp_current_scan(cfg):
    pts = pmap(_current_point, [(cfg["delta"], cfg["eps"], n, cfg["cutoff"])
                                for n in cfg["n_list"]], cfg["jobs"])
    rows = [(n, float(np.exp(lj)), lj) for n, lj in pts]
    summary = {}
    if len(rows) >= 2:
        ns = np.array([r[0] for r in rows], float)
        slope, icpt = np.polyfit(ns, [r[2] for r in rows], 1)
        summary["slope"] = float(slope)
        if cfg["delta"] > 1:
            summary["reference_slope"] = float(-np.arccosh(cfg["delta"]))
    return ("n", "current", "log_current"), rows, summary


def exp_decay_fit(cfg):
    slope, icpt, logs = mpo.decay_rate_easy_axis(cfg["delta"], cfg["eps"], cfg["n_list"])
    ref = float(-np.arccosh(cfg["delta"]))
    rows = [(n, lj, slope * n + icpt) for n, lj in zip(cfg["n_list"], logs)]
    summary = {"slope": slope, "intercept": icpt, "reference_slope": ref,
               "relative_error": abs(slope / ref - 1)}
    return ("n", "log_current", "fit"), rows, summary


def _chi_grid(cfg):
    if cfg["chi_points"] < 2 or cfg["chi_max"] <= cfg["chi_min"]:
        raise ValidationError("chi grid needs >= 2 points and chi_max > chi_min")
    return np.linspace(cfg["chi_min"], cfg["chi_max"], cfg["chi_points"])


def exp_fcs_lambda(cfg):
    rates = driving(cfg)
    model = fcs.fcs_model(_single_n(cfg), cfg["delta"], rates, h=cfg["h"])
    chis = _chi_grid(cfg)
    scan = fcs.lambda_scan(model, chis)
    l1 = fcs.lambda1_closed(chis, rates) * cfg["eps"]
    rows = [(c, v.real, v.imag, w.real, w.imag)
            for c, v, w in zip(chis, scan.lambda_values, l1)]
    summary = {"max_dev_eps_lambda1": float(abs(scan.lambda_values - l1).max())}
    return ("chi", "lambda_re", "lambda_im", "eps_lambda1_re", "eps_lambda1_im"), rows, summary


def exp_fcs_cumulants(cfg):
    rates = driving(cfg)
    if not 1 <= cfg["orders"] <= 6:
        raise ValidationError("orders must be in 1..6")
    model = fcs.fcs_model(_single_n(cfg), cfg["delta"], rates, h=cfg["h"])
    orders = list(range(1, cfg["orders"] + 1))
    vals, errs = fcs.cumulants_numeric(model, orders)
    rows = [(m, v, e) for m, v, e in zip(orders, vals, errs)]
    return ("order", "cumulant", "error_est"), rows, {
        "first_cumulant_closed": fcs.first_cumulant_closed(rates)}


def exp_pert_extract(cfg):
    rates = driving(cfg)
    n = _single_n(cfg)
    grid = parse_floats(cfg["eps_grid"])
    fit = fcs.perturbative_extraction(n, cfg["delta"], rates, cfg["chi"], grid, h=cfg["h"])
    rows = [(e, v.real, v.imag) for e, v in zip(fit.eps_grid, fit.lambdas)]
    summary = {
        "lambda1": [fit.lambda1.real, fit.lambda1.imag], "lambda1_err": fit.lambda1_err,
        "lambda3": [fit.lambda3.real, fit.lambda3.imag], "lambda3_err": fit.lambda3_err,
        "fit_residual": fit.residual,
    }
    l1 = fcs.lambda1_closed(cfg["chi"], rates)
    summary["lambda1_closed"] = [l1.real, l1.imag]
    if rates.mu is not None and cfg["h"] == 0 and n <= 8:
        l3 = fcs.lambda3(cfg["chi"], rates.mu, n, cfg["delta"])
        summary["lambda3_z"] = [l3.real, l3.imag]
        summary["f"] = fcs.f_from_lambda3(cfg["chi"], rates.mu, l3).real
    return ("eps", "lambda_re", "lambda_im"), rows, summary


def oracle_compare(delta, eps, n):
    """Max deviations between the MPO steady state and the dense Lindblad solution."""
    ctx = qlax.QContext.solved(delta, eps, n + 1)
    rho_m = mpo.dense_steady_state(n, ctx)
    rho_o = oracle.steady_state(oracle.build_liouvillean(oracle.maximal_model(n, delta, eps)))
    m = mpo.NessModel(ctx.replace(cutoff=mpo.default_cutoff(n)), n)
    prof = np.array([mpo.spin_profile(m, j) for j in range(1, n + 1)])
    cur = [oracle.current_oracle(rho_o, k) for k in range(1, n)]
    return {
        "rho": float(abs(rho_m - rho_o).max()),
        "profile": float(abs(prof - oracle.profile_oracle(rho_o)).max()),
        "current": float(max(abs(c - m.current()) for c in cur)),
    }


def exp_oracle_compare(cfg):
    rows = []
    for n in cfg["n_list"]:
        d = oracle_compare(cfg["delta"], cfg["eps"], n)
        rows.append((n, d["rho"], d["profile"], d["current"]))
    worst = max(max(r[1:]) for r in rows)
    if worst > cfg["tol"]:
        raise ContractViolation("liouville-oracle", "MPO vs dense steady state", worst, cfg["tol"])
    return ("n", "rho_dev", "profile_dev", "current_dev"), rows, {"max_deviation": worst}


def identity_checks(seed=0, wrong_s=False):
    """List of (name, params, residual, tol) over a fixed parameter grid."""
    rng = np.random.default_rng(seed)
    out = []
    deltas = [0.5, 1.0, 1.5, -0.3] + list(rng.uniform(-2, 2, 2))
    for delta in deltas:
        for eps in (1.0, 0.2):
            ctx = qlax.QContext.solved(delta, eps, 10)
            s_used = ctx.s * 1.3 + 0.2j if wrong_s else ctx.s
            probe = ctx.replace(s=s_used)
            p = {"delta": float(delta), "eps": eps}
            out.append(("algebra", p, qlax.algebra_residual(qlax.build_verma(probe), ctx.gamma),
                        1e-10))
            out.append(("sutherland", p, qlax.sutherland_residual(probe, relative=True), 1e-10))
            c = mpo.continuity_constant(probe)
            out.append(("continuity", p, mpo.sector_continuity_residual(ctx, const=c), 1e-9))
    for eps in (1.0, 0.2):
        ctx = qlax.QContext.solved(1.0, eps, 10)
        s_used = ctx.s * 1.3 + 0.2j if wrong_s else None
        p = {"delta": 1.0, "eps": eps}
        out.append(("vtalg", p, mpo.vt_algebra_residual(ctx, s_used), 1e-8))
        out.append(("boundary", p, max(mpo.boundary_residual(ctx)), 1e-9))
    for m in (3, 4, 5):
        for l in range(1, m):
            delta = float(np.cos(np.pi * l / m))
            n = 30
            a = mpo.NessModel(qlax.QContext.solved(delta, 1.0, m + 1), n)
            b = mpo.NessModel(qlax.QContext.solved(delta, 1.0, 2 * (m + 1)), n)
            res = max(abs(a.zcache[n] - b.zcache[n]), abs(a.current() / b.current() - 1),
                      abs(a.profiles() - b.profiles()).max())
            out.append(("truncation", {"gamma": f"pi*{l}/{m}", "n": n, "cutoff": m + 1},
                        float(res), 1e-10))
    return out


def exp_identity_suite(cfg):
    checks = identity_checks(cfg["seed"], cfg.get("inject_wrong_s", False))
    rows = [(name, json.dumps(p, sort_keys=True), res, tol, "pass" if res <= tol else "fail")
            for name, p, res, tol in checks]
    nfail = sum(r[4] == "fail" for r in rows)
    summary = {"checks": len(rows), "failed": nfail}
    return ("check", "params", "residual", "tol", "status"), rows, summary


RUNNERS = {
    "profile": exp_profile, "current-scan": exp_current_scan, "decay-fit": exp_decay_fit,
    "fcs-lambda": exp_fcs_lambda, "fcs-cumulants": exp_fcs_cumulants,
    "pert-extract": exp_pert_extract, "oracle-compare": exp_oracle_compare,
    "identity-suite": exp_identity_suite,
}


# ---------------------------------------------------------------- output

def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def header_line(cfg):
    keys = ("delta", "eps", "n", "mu", "rates", "h", "cutoff", "seed")
    params = " ".join(f"{k}={cfg[k]}" for k in keys if cfg.get(k) is not None)
    return f"# chainctl-csv v{CSV_VERSION} experiment={cfg['experiment']} {params}"


def render(cfg, cols, rows, summary):
    if cfg["format"] == "json":
        doc = {"version": CSV_VERSION, "experiment": cfg["experiment"],
               "columns": list(cols), "rows": [[_json(v) for v in r] for r in rows],
               "summary": summary}
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"
    buf = io.StringIO()
    buf.write(header_line(cfg) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    w.writerows([_fmt(v) for v in r] for r in rows)
    return buf.getvalue()


def _json(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def gnuplot_script(cfg, cols, fname):
    return (f"set datafile separator ','\nset key autotitle columnhead\n"
            f"set xlabel '{cols[0]}'\n"
            f"plot '{fname}' every ::1 using 1:2 with linespoints"
            + "".join(f", '' every ::1 using 1:{k} with lines" for k in range(3, len(cols) + 1)
                      if cfg["experiment"] not in ("identity-suite",))
            + "\n")


def run(argv=None, stdout=None, stderr=None):
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    try:
        cfg = resolve(args)
        cols, rows, summary = RUNNERS[cfg["experiment"]](cfg)
        text = render(cfg, cols, rows, summary)
        if cfg.get("out"):
            os.makedirs(cfg["out"], exist_ok=True)
            stem = cfg["experiment"].replace("-", "_")
            fname = os.path.join(cfg["out"], f"{stem}.{cfg['format']}")
            with open(fname, "w") as fh:
                fh.write(text)
            if cfg["gnuplot"] and cfg["format"] == "csv":
                with open(os.path.join(cfg["out"], f"{stem}.gp"), "w") as fh:
                    fh.write(gnuplot_script(cfg, cols, f"{stem}.csv"))
        else:
            stdout.write(text)
        for k, v in summary.items():
            stderr.write(f"{k:>24s}  {v}\n")
        if cfg["experiment"] == "identity-suite" and summary["failed"]:
            stderr.write("identity suite: failures present\n")
            return 3
        return 0
    except ValidationError as exc:
        stderr.write(f"chainctl: invalid input: {exc}\n")
        return 2
    except ContractViolation as exc:
        stderr.write(f"chainctl: contract violated: {exc}\n")
        return 3
    except XXZError as exc:
        stderr.write(f"chainctl: {exc}\n")
        return 3


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
