"""Batch experiment runner: named recipes over a JSON configuration.

Recipes and their artifacts (written into --out):

    spectrum   spectrum.csv     index,lambda,mode,multiplicity_group,is_kernel
    theta      theta.csv        t,theta,tail_bound
    zeta       zeta.json        the full report of one spectrum
    converge   zeta.json        torsion analysis of a metric family
               family.csv       p,zeta0,zeta_prime0,gap_to_limit
    diagnose   diagnostics.csv  n,ratio_norm,grad_norm,sum_sqrt_ratio
                                (plus log_gradient for dynamical metrics)
    dynamical  diagnostics.csv  n,sup_error,log_gradient
    bounds     bounds.json      list of {bound_name, lhs, rhs, slack, pass}

Exit codes: 0 success, 2 configuration or environment problem, 3 a numerical
assertion failed (non-Cauchy family, failed bound, rejected expansion).

Configuration is JSON; missing keys take the frozen defaults below, CLI flags
override file values, and --emit-config prints the resolved document without
running.  Floats in CSV bodies are formatted with 17 significant digits, so a
rerun with the same config and seed reproduces the bytes exactly.
"""
from __future__ import annotations

import argparse
import copy
import json
import os
import sys

import numpy as np

from . import assembly as asm
from . import eigen
from . import heat
from . import profiles
from . import zeta

DEFAULTS = {
    "metric": {"kind": "fubini_study", "m": 0, "params": {}},
    "base": {"kind": "fs", "p": 4},
    "grid": {"u_min": -12.0, "u_max": 12.0, "n": 2048},
    "kmax": None,
    "family": {"chi": "dyadic", "p_lo": 3, "p_hi": 6},
    "t_grid": {"lo": 0.1, "hi": 4.0, "count": 12, "spacing": "log"},
    "zeta": {"split_point": 1.0, "s_values": [1.5, 2.0, 3.0]},
    "bounds": {"v": None, "t_values": [0.25, 1.0, 4.0]},
    "out": ".",
    "seed": 0,
}

METRIC_KINDS = ("fubini_study", "canonical", "pnorm", "dynamical", "cusp")
BASE_KINDS = ("fs", "tx_pnorm")


# ----------------------------------------------------------------------------
# configuration


def canonical_json(config: dict) -> str:
    return json.dumps(config, sort_keys=True, indent=2) + "\n"


def _merge(defaults, override, errors, path=""):
    out = copy.deepcopy(defaults)
    for key, val in override.items():
        here = f"{path}/{key}"
        if key not in defaults:
            errors.append((here, "unknown key"))
        elif isinstance(defaults[key], dict) and key != "params":
            if isinstance(val, dict):
                out[key] = _merge(defaults[key], val, errors, here)
            else:
                errors.append((here, "expected an object"))
        else:
            out[key] = copy.deepcopy(val)
    return out


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def _is_num(x) -> bool:
    return (isinstance(x, (int, float)) and not isinstance(x, bool)
            and np.isfinite(x))


def _check_chi(chi, path, errors):
    if isinstance(chi, str):
        if chi not in ("dyadic", "linear"):
            errors.append((path, "chi must be 'dyadic', 'linear' or a list"))
        return
    if not isinstance(chi, list) or not all(_is_int(c) for c in chi):
        errors.append((path, "chi must be 'dyadic', 'linear' or a list of ints"))
        return
    if any(c <= 0 for c in chi):
        errors.append((path, "chi values must be positive"))
    if any(b < a for a, b in zip(chi[:-1], chi[1:])):
        errors.append((path, "chi must be non-decreasing"))


def validate(config: dict):
    """Merge over the defaults and check every field.

    Returns (normalized config, error list); errors are (path, message)
    pairs with JSON-pointer style paths.  The normalized document is
    canonical: validating it again returns it unchanged.
    """
    errors: list = []
    if not isinstance(config, dict):
        return None, [("", "configuration must be a JSON object")]
    cfg = _merge(DEFAULTS, config, errors)
    if errors:
        return None, errors

    met = cfg["metric"]
    if met["kind"] not in METRIC_KINDS:
        errors.append(("/metric/kind", f"unknown kind, expected one of {METRIC_KINDS}"))
    if not _is_int(met["m"]) or met["m"] < 0:
        errors.append(("/metric/m", "m must be a non-negative integer"))
    if not isinstance(met["params"], dict):
        errors.append(("/metric/params", "expected an object"))
    elif met["kind"] == "pnorm":
        p = met["params"].setdefault("p", 4)
        if not _is_int(p) or p < 1:
            errors.append(("/metric/params/p", "p must be a positive integer"))
        _check_chi(met["params"].setdefault("chi", "dyadic"),
                   "/metric/params/chi", errors)
    elif met["kind"] == "dynamical":
        coeffs = met["params"].setdefault("coeffs", [1.0, 0.0, 0.0])
        if (not isinstance(coeffs, list) or len(coeffs) < 3
                or not all(_is_num(c) for c in coeffs) or coeffs[0] != 1.0):
            errors.append(("/metric/params/coeffs",
                           "coeffs must be a monic polynomial of degree >= 2, "
                           "highest degree first"))
        iterates = met["params"].setdefault("iterates", 8)
        if not _is_int(iterates) or not 1 <= iterates <= 40:
            errors.append(("/metric/params/iterates", "iterates must be in 1..40"))
        if not _is_num(met["params"].setdefault("z_probe", 2.0)):
            errors.append(("/metric/params/z_probe", "z_probe must be a number"))
    elif met["kind"] == "cusp":
        expo = met["params"].setdefault("exponent", 0.5)
        if not _is_num(expo) or expo <= 0:
            errors.append(("/metric/params/exponent", "exponent must be positive"))

    base = cfg["base"]
    if base["kind"] not in BASE_KINDS:
        errors.append(("/base/kind", f"unknown kind, expected one of {BASE_KINDS}"))
    if not _is_int(base["p"]) or base["p"] < 1:
        errors.append(("/base/p", "p must be a positive integer"))

    grid = cfg["grid"]
    if not (_is_num(grid["u_min"]) and _is_num(grid["u_max"])
            and grid["u_min"] < grid["u_max"]):
        errors.append(("/grid", "need u_min < u_max"))
    if not _is_int(grid["n"]) or grid["n"] < 8:
        errors.append(("/grid/n", "n must be an integer >= 8"))
    if cfg["kmax"] is not None and (not _is_int(cfg["kmax"]) or cfg["kmax"] < 1):
        errors.append(("/kmax", "kmax must be a positive integer or null"))

    fam = cfg["family"]
    _check_chi(fam["chi"], "/family/chi", errors)
    if not (_is_int(fam["p_lo"]) and _is_int(fam["p_hi"])
            and 1 <= fam["p_lo"] < fam["p_hi"]):
        errors.append(("/family", "need integers 1 <= p_lo < p_hi"))
    elif isinstance(fam["chi"], list) and len(fam["chi"]) <= fam["p_hi"]:
        errors.append(("/family/chi", "chi list shorter than p_hi + 1"))

    tg = cfg["t_grid"]
    if not (_is_num(tg["lo"]) and _is_num(tg["hi"]) and 0 < tg["lo"] < tg["hi"]):
        errors.append(("/t_grid", "need 0 < lo < hi"))
    if not _is_int(tg["count"]) or tg["count"] < 1:
        errors.append(("/t_grid/count", "count must be a positive integer"))
    if tg["spacing"] not in ("log", "linear"):
        errors.append(("/t_grid/spacing", "spacing must be 'log' or 'linear'"))

    zc = cfg["zeta"]
    if not _is_num(zc["split_point"]) or zc["split_point"] <= 0:
        errors.append(("/zeta/split_point", "split_point must be positive"))
    if (not isinstance(zc["s_values"], list) or not zc["s_values"]
            or not all(_is_num(s) and s > 1.05 for s in zc["s_values"])):
        errors.append(("/zeta/s_values", "s_values must be numbers > 1.05"))

    bc = cfg["bounds"]
    if bc["v"] is not None and not _is_num(bc["v"]):
        errors.append(("/bounds/v", "v must be a number or null"))
    if (not isinstance(bc["t_values"], list)
            or not all(_is_num(t) and t > 0 for t in bc["t_values"])):
        errors.append(("/bounds/t_values", "t_values must be positive numbers"))

    if not isinstance(cfg["out"], str) or not cfg["out"]:
        errors.append(("/out", "out must be a non-empty path"))
    if not _is_int(cfg["seed"]) or cfg["seed"] < 0:
        errors.append(("/seed", "seed must be a non-negative integer"))
    return (None, errors) if errors else (cfg, [])


# ----------------------------------------------------------------------------
# builders


def _chi_callable(chi):
    if chi == "dyadic":
        return profiles.chi_dyadic
    if chi == "linear":
        return profiles.chi_linear
    values = list(chi)
    return lambda p: values[p]


def build_metric(cfg) -> profiles.MetricProfile:
    met = cfg["metric"]
    kind, m, params = met["kind"], met["m"], met["params"]
    if kind == "fubini_study":
        return profiles.make_fubini_study(m)
    if kind == "canonical":
        return profiles.make_canonical(m)
    if kind == "pnorm":
        return profiles.make_pnorm(m, _chi_callable(params["chi"]), params["p"])
    if kind == "cusp":
        return profiles.cusp_profile(params["exponent"], m=m)
    # dynamical: the n-fold pullback iterate seeded with FS on O(1)
    return profiles.make_dynamical(params["coeffs"], params["iterates"],
                                   profiles.make_fubini_study(1))


def build_base(cfg) -> profiles.BaseProfile:
    base = cfg["base"]
    if base["kind"] == "fs":
        return profiles.make_fs_base()
    return profiles.make_tx_pnorm_base(base["p"])


def build_family(cfg) -> tuple:
    fam, m = cfg["family"], cfg["metric"]["m"]
    chi = _chi_callable(fam["chi"])
    ps = list(range(fam["p_lo"], fam["p_hi"] + 1))
    members = [profiles.make_pnorm(m, chi, p) for p in ps]
    family = profiles.interpolate(members, limit=profiles.make_canonical(m))
    return family, ps


def _discretization(cfg) -> asm.Discretization:
    grid = cfg["grid"]
    return asm.Discretization(u_min=grid["u_min"], u_max=grid["u_max"],
                              n=grid["n"])


def _solve(cfg, profile=None):
    kw = {} if cfg["kmax"] is None else {"k_limit": cfg["kmax"]}
    return eigen.solve_spectrum(profile if profile is not None
                                else build_metric(cfg),
                                build_base(cfg), _discretization(cfg), **kw)


def _t_values(cfg) -> np.ndarray:
    tg = cfg["t_grid"]
    space = np.geomspace if tg["spacing"] == "log" else np.linspace
    return space(tg["lo"], tg["hi"], tg["count"])


# ----------------------------------------------------------------------------
# artifacts


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return format(float(x), ".17g")


def _csv(header: str, rows) -> str:
    lines = [header]
    lines.extend(",".join(_fmt(x) for x in row) for row in rows)
    return "\n".join(lines) + "\n"


def _json_doc(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, default=float) + "\n"


# ----------------------------------------------------------------------------
# recipes: each returns (exit code, {filename: content})


def _run_spectrum(cfg):
    spec = _solve(cfg)
    header = "index,lambda,mode,multiplicity_group,is_kernel"
    return 0, {"spectrum.csv": _csv(header, spec.rows())}


def _run_theta(cfg):
    series = heat.ThetaSeries.from_spectrum(_solve(cfg))
    rows = heat.theta_rows(series, _t_values(cfg))
    return 0, {"theta.csv": _csv("t,theta,tail_bound", rows)}


def _run_zeta(cfg):
    series = heat.ThetaSeries.from_spectrum(_solve(cfg))
    rep = zeta.zeta_report(series, s_values=tuple(cfg["zeta"]["s_values"]),
                           T=cfg["zeta"]["split_point"])
    return 0, {"zeta.json": _json_doc(json.loads(rep.to_json()))}


def _run_converge(cfg):
    family, ps = build_family(cfg)
    zcfg = cfg["zeta"]

    def report_of(profile):
        series = heat.ThetaSeries.from_spectrum(_solve(cfg, profile))
        return zeta.zeta_report(series, s_values=tuple(zcfg["s_values"]),
                                T=zcfg["split_point"])

    reports = [report_of(member) for member in family.members]
    direct = report_of(family.limit)
    res = zeta.torsion_limit(reports, p_values=ps, direct=direct)
    artifacts = {"zeta.json": _json_doc(res)}
    if not res["cauchy_ok"]:
        print("converge: zeta'(0) sequence is not Cauchy", file=sys.stderr)
        return 3, artifacts
    artifacts["family.csv"] = _csv("p,zeta0,zeta_prime0,gap_to_limit",
                                   zeta.family_rows(res))
    return 0, artifacts


def _run_diagnose(cfg):
    base = build_base(cfg)
    if cfg["metric"]["kind"] == "dynamical":
        params = cfg["metric"]["params"]
        seed = profiles.make_fubini_study(1)
        members = [profiles.make_dynamical(params["coeffs"], k, seed)
                   for k in range(1, params["iterates"] + 1)]
        family = profiles.interpolate(members)
        diag = profiles.diagnostics(family, base)
        rows = [(n, r, g, s,
                 abs(profiles.dynamical_log_gradient(params["coeffs"], n,
                                                     params["z_probe"])))
                for n, r, g, s in diag.rows()]
        header = "n,ratio_norm,grad_norm,sum_sqrt_ratio,log_gradient"
        return 0, {"diagnostics.csv": _csv(header, rows)}
    family, _ = build_family(cfg)
    diag = profiles.diagnostics(family, base)
    header = "n,ratio_norm,grad_norm,sum_sqrt_ratio"
    return 0, {"diagnostics.csv": _csv(header, diag.rows())}


def _run_dynamical(cfg):
    params = cfg["metric"]["params"]
    if cfg["metric"]["kind"] != "dynamical":
        params = dict(DEFAULTS["metric"]["params"],
                      coeffs=[1.0, 0.0, 0.0], iterates=20, z_probe=2.0)
    seed = profiles.make_fubini_study(1)
    target = profiles.make_canonical(1)
    # the node set the iterates are sampled on; between nodes the corner
    # forming at |z| = 1 is under the interpolant's resolution
    ugrid = profiles.default_ugrid()
    psi_target = target.psi(ugrid)
    rows = []
    for k in range(1, params["iterates"] + 1):
        member = profiles.make_dynamical(params["coeffs"], k, seed)
        sup_err = float(np.max(np.abs(member.psi(ugrid) - psi_target)))
        # a probe orbit that escapes has no finite gradient diagnostic
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                grad = abs(profiles.dynamical_log_gradient(
                    params["coeffs"], k, params["z_probe"]))
        except (OverflowError, FloatingPointError):
            grad = float("nan")
        if not np.isfinite(grad):
            grad = float("nan")
        rows.append((k, sup_err, grad))
    return 0, {"diagnostics.csv": _csv("n,sup_error,log_gradient", rows)}


def _run_bounds(cfg):
    family, _ = build_family(cfg)
    v = cfg["bounds"]["v"]
    if v is None:
        v = 1.5  # first midpoint: integer parameters are breakpoints
    entries = heat.variation_bounds(family, build_base(cfg), float(v),
                                    t_values=tuple(cfg["bounds"]["t_values"]),
                                    seed=cfg["seed"])
    code = 0 if all(e["pass"] for e in entries) else 3
    if code:
        print("bounds: a variation bound failed", file=sys.stderr)
    return code, {"bounds.json": _json_doc(entries)}


RECIPES = {
    "spectrum": _run_spectrum,
    "theta": _run_theta,
    "zeta": _run_zeta,
    "converge": _run_converge,
    "diagnose": _run_diagnose,
    "dynamical": _run_dynamical,
    "bounds": _run_bounds,
}


def run(config: dict, recipe: str) -> int:
    """Validate, execute one recipe and write its artifacts."""
    cfg, errors = validate(config)
    if errors:
        for path, msg in errors:
            print(f"config{path}: {msg}", file=sys.stderr)
        return 2
    try:
        code, artifacts = RECIPES[recipe](cfg)
    except ValueError as exc:
        print(f"{recipe}: {exc}", file=sys.stderr)
        return 3
    try:
        os.makedirs(cfg["out"], exist_ok=True)
        for name, content in artifacts.items():
            with open(os.path.join(cfg["out"], name), "w") as fh:
                fh.write(content)
    except OSError as exc:
        print(f"cannot write artifacts: {exc}", file=sys.stderr)
        return 2
    return code


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="radlap",
        description="spectral geometry experiments on line bundles over P^1")
    sub = parser.add_subparsers(dest="recipe", required=True,
                                metavar="|".join(RECIPES))
    for name in RECIPES:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--seed", type=int, help="RNG seed (overrides config)")
        p.add_argument("--grid", type=int, help="grid nodes (overrides config)")
        p.add_argument("--kmax", type=int, help="mode scan limit (overrides config)")
        p.add_argument("--emit-config", action="store_true",
                       help="print the resolved configuration and exit")
    args = parser.parse_args(argv)

    config: dict = {}
    if args.config is not None:
        try:
            with open(args.config) as fh:
                config = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            print(f"cannot read config: {exc}", file=sys.stderr)
            return 2
    if args.out is not None:
        config["out"] = args.out
    if args.seed is not None:
        config["seed"] = args.seed
    if args.grid is not None:
        config.setdefault("grid", {})
        if isinstance(config["grid"], dict):
            config["grid"]["n"] = args.grid
    if args.kmax is not None:
        config["kmax"] = args.kmax

    if args.emit_config:
        cfg, errors = validate(config)
        if errors:
            for path, msg in errors:
                print(f"config{path}: {msg}", file=sys.stderr)
            return 2
        sys.stdout.write(canonical_json(cfg))
        return 0
    return run(config, args.recipe)


if __name__ == "__main__":
    sys.exit(main())
