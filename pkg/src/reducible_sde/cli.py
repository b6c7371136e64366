"""Command-line front end: ``rsde fit | simulate | loglik | compare``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 fit did not
converge (the report is still written).
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import logging
import math
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .datasets import DataError, LongitudinalDataset, bundled_path, load_csv
from .estimator import as_param_specs
from .fitting import STRATEGIES, fit_sde
from .gaussml import beta_prior
from .hierarchy import BindingError, SdeModel, UnitEvaluationError
from .models import available_drifts
from .optimize import InfeasibleStartError
from .regression import PARAM_NAMES, fit_boxcox_regression
from .simulate import TrajectorySpec, simulate_trajectory
from .transforms import available_transforms

__all__ = ["main", "ConfigError", "load_config", "run_fit", "run_loglik", "compare_reports"]

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NOCONV = 0, 2, 3, 4
MODEL_KINDS = ("sde", "boxcox_regression")
BUNDLED = "bundled:"


class ConfigError(ValueError):
    """The model configuration is invalid."""


# -- configuration ----------------------------------------------------------

def bundled_config(name: str) -> Path:
    return Path(str(resources.files("reducible_sde") / "configs" / f"{name}.json"))


def _read_json(path) -> dict:
    path = str(path)
    if path.startswith(BUNDLED):
        path = bundled_config(path[len(BUNDLED):])
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such file") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None


def load_config(path, overrides: dict | None = None) -> dict:
    """Read a model config and apply command-line overrides.

    The returned dict is normalised (defaults filled in) so that it can be
    echoed into the report and re-run to give the same result.
    """
    cfg = _read_json(path)
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    cfg = copy.deepcopy(cfg)
    for key, value in (overrides or {}).items():
        if value is not None:
            cfg[key] = value
    cfg.setdefault("model", "sde")
    cfg.setdefault("strategy", "single")
    cfg.setdefault("tol", 1e-10)
    cfg.setdefault("max_iter", 500)
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    if cfg["model"] not in MODEL_KINDS:
        raise ConfigError(f"model must be one of {MODEL_KINDS}, got {cfg['model']!r}")
    data = cfg.get("data")
    if not isinstance(data, dict) or "path" not in data:
        raise ConfigError("config needs a 'data' object with a 'path'")
    if cfg["strategy"] not in STRATEGIES:
        raise ConfigError(f"strategy must be one of {STRATEGIES}")
    if not (isinstance(cfg["tol"], (int, float)) and cfg["tol"] > 0):
        raise ConfigError("tol must be a positive number")
    if not (isinstance(cfg["max_iter"], int) and cfg["max_iter"] > 0):
        raise ConfigError("max_iter must be a positive integer")
    if cfg["model"] == "sde":
        if cfg.get("drift", "linear") not in available_drifts():
            raise ConfigError(f"unknown drift {cfg.get('drift')!r}; available: {available_drifts()}")
        tf = cfg.get("transform")
        if tf is not None and tf not in available_transforms():
            raise ConfigError(f"unknown transform {tf!r}; available: {available_transforms()}")
        if not cfg.get("parameters"):
            raise ConfigError("an sde config needs a 'parameters' list")
        for p in cfg["parameters"]:
            if "name" not in p or "start" not in p:
                raise ConfigError(f"parameter entry needs 'name' and 'start': {p}")
            lo = p.get("lower", -math.inf)
            hi = p.get("upper", math.inf)
            lo = -math.inf if lo is None else lo
            hi = math.inf if hi is None else hi
            starts = np.ravel(p["start"])
            if np.any(starts < lo) or np.any(starts > hi):
                raise ConfigError(f"start of {p['name']!r} outside its bounds")
    else:
        start = cfg.get("start", None)
        if start is not None and len(start) != len(PARAM_NAMES):
            raise ConfigError(f"start must have {len(PARAM_NAMES)} values {PARAM_NAMES}")


def load_data(cfg: dict) -> LongitudinalDataset:
    d = cfg["data"]
    path = d["path"]
    if path.startswith(BUNDLED):
        path = bundled_path(path[len(BUNDLED):])
    if not Path(path).exists():
        raise DataError(f"{path}: no such data file")
    return load_csv(path, t=d.get("t", "t"), x=d.get("x", "x"), unit=d.get("unit"),
                    units=d.get("units"),
                    allow_duplicate_times=bool(d.get("allow_duplicate_times", False)))


def _prior(cfg: dict):
    spec = cfg.get("prior")
    if spec is None:
        return None
    if spec.get("type") != "beta":
        raise ConfigError("only 'beta' priors are supported")
    return beta_prior(spec.get("param", "eta"), float(spec["alpha"]), float(spec["beta"]),
                      float(spec.get("lower", 0.0)), float(spec.get("upper", 1.0)))


def build_model(cfg: dict, data: LongitudinalDataset) -> SdeModel:
    try:
        specs = as_param_specs(cfg["parameters"])
        return SdeModel.build(data, specs, cfg.get("drift", "linear"), cfg.get("transform"))
    except (BindingError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def _process_noise_only(model: SdeModel) -> bool:
    """True when eta and eta0 are fixed at 0: C is diagonal, no Cholesky sweep."""
    b = model.binding
    for name in ("eta", "eta0"):
        if name in b.names:
            spec = b.spec(name)
            if not spec.fixed or float(np.ravel(spec.start)[0]) != 0.0:
                return False
    return True


# -- fit ---------------------------------------------------------------------

def _data_info(data: LongitudinalDataset) -> dict:
    return {"source": data.source, "fingerprint": data.fingerprint,
            "n_obs": data.n_obs, "n_units": data.n_units}


def _float(v):
    v = float(v)
    return v if math.isfinite(v) else None


def run_fit(cfg: dict) -> dict:
    """Fit according to ``cfg`` and return the report as a dict."""
    data = load_data(cfg)
    report = {"tool": "reducible-sde", "version": __version__, "config": cfg,
              "data": _data_info(data)}
    if cfg["model"] == "boxcox_regression":
        t, x, _ = data.arrays()
        res = fit_boxcox_regression(t, x, cfg.get("start") or (2.9, -0.11, 1.0, 0.0),
                                    cfg["tol"], cfg["max_iter"])
        report.update({"parameters": res.named, "locals": {}, "sigma": _float(res.sigma),
                       "flags": []})
    else:
        model = build_model(cfg, data)
        res, model = fit_sde(model, cfg["strategy"], cfg["tol"], cfg["max_iter"], _prior(cfg))
        named = model.binding.named(res.theta)
        report.update({
            "parameters": {k: v for k, v in named.items() if not isinstance(v, dict)},
            "locals": {k: v for k, v in named.items() if isinstance(v, dict)},
            "sigma": _float(res.sigma),
            "sigma_p": _float(res.sigma_p),
            "sigma_m": _float(res.sigma_m),
            "sigma_0": _float(res.sigma_0),
            "flags": ["process-noise-only"] if _process_noise_only(model) else [],
        })
        if "stages" in res.extra:
            report["stages"] = res.extra["stages"]
    report.update({
        "rss": _float(res.rss),
        "log_likelihood": _float(res.log_likelihood),
        "df": res.df,
        "aic": _float(res.aic),
        "bic": _float(res.bic),
        "n_obs": data.n_obs,
        "iterations": res.iterations,
        "converged": res.converged,
        "message": res.message,
        "at_bound": res.bound_flags(),
    })
    return report


# -- loglik ------------------------------------------------------------------

def run_loglik(cfg: dict, theta: dict) -> dict:
    """Log-likelihood and sigma estimates at user-supplied parameter values."""
    if cfg["model"] != "sde":
        raise ConfigError("loglik is available for sde models only")
    data = load_data(cfg)
    model = build_model(cfg, data)
    b = model.binding
    free = {s.name for s in b.specs if not s.fixed}
    given = set(theta)
    if given != free:
        raise ConfigError(f"theta names {sorted(given)} do not match free parameters {sorted(free)}")
    values = {}
    for s in b.specs:
        if s.fixed:
            continue
        v = theta[s.name]
        if s.scope == "local":
            if not isinstance(v, dict) or set(map(str, v)) != set(b.unit_ids):
                raise ConfigError(f"{s.name!r} is local: give a value per unit {b.unit_ids}")
            values[s.name] = {str(k): float(x) for k, x in v.items()}
        else:
            values[s.name] = float(v)
    stats = model.final(b.flatten(values))
    return {"tool": "reducible-sde", "version": __version__, "config": cfg,
            "data": _data_info(data), "theta": theta, **stats.as_dict()}


# -- compare -----------------------------------------------------------------

def compare_reports(reports: list[dict], names: list[str]) -> list[dict]:
    rows = [{"name": n, "df": r["df"], "log_likelihood": r["log_likelihood"],
             "aic": r["aic"], "bic": r["bic"]} for n, r in zip(names, reports)]
    best_aic = min(r["aic"] for r in rows)
    best_bic = min(r["bic"] for r in rows)
    for r in rows:
        r["delta_aic"] = r["aic"] - best_aic
        r["delta_bic"] = r["bic"] - best_bic
    return sorted(rows, key=lambda r: r["aic"])


# -- output ------------------------------------------------------------------

def _emit(obj, out: str | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=False) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _summary(report: dict) -> str:
    lines = []
    for k, v in report.get("parameters", {}).items():
        lines.append(f"  {k:<10} {v:.6g}")
    for k, vals in report.get("locals", {}).items():
        lines.append(f"  {k}[*]      " + " ".join(f"{v:.5g}" for v in vals.values()))
    for k in ("sigma_p", "sigma_m", "sigma", "rss", "log_likelihood", "aic", "bic"):
        if report.get(k) is not None:
            lines.append(f"  {k:<10} {report[k]:.7g}")
    status = "converged" if report.get("converged") else "NOT converged"
    lines.append(f"  {status} after {report.get('iterations')} iterations ({report.get('message')})")
    if report.get("flags"):
        lines.append("  flags: " + ", ".join(report["flags"]))
    return "\n".join(lines)


def _cmd_fit(args) -> int:
    cfg = load_config(args.config, {"strategy": args.strategy, "tol": args.tol,
                                    "max_iter": args.max_iter})
    report = run_fit(cfg)
    _emit(report, args.out)
    print(_summary(report), file=sys.stderr)
    return EXIT_OK if report["converged"] else EXIT_NOCONV


def _cmd_loglik(args) -> int:
    cfg = load_config(args.config)
    theta = _read_json(args.theta)
    if not isinstance(theta, dict):
        raise ConfigError("theta file must be a JSON object of parameter values")
    _emit(run_loglik(cfg, theta), args.out)
    return EXIT_OK


def _cmd_simulate(args) -> int:
    raw = _read_json(args.spec)
    n_units = int(raw.pop("n_units", 1))
    if args.seed is not None:
        raw["seed"] = args.seed
    try:
        spec = TrajectorySpec(**raw)
        data = simulate_trajectory(spec, n_units)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad simulation spec: {exc}") from None
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["unit", "t", "x"])
    for u in data.units:
        for ti, xi in zip(u.t, u.x):
            w.writerow([u.unit_id, repr(float(ti)), repr(float(xi))])
    if args.out:
        Path(args.out).write_text(buf.getvalue(), encoding="utf-8")
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


def _cmd_compare(args) -> int:
    reports = [_read_json(p) for p in args.reports]
    for p, r in zip(args.reports, reports):
        if not all(k in r for k in ("df", "log_likelihood", "aic", "bic")):
            raise ConfigError(f"{p}: not a fit report")
    rows = compare_reports(reports, [Path(p).stem for p in args.reports])
    _emit(rows, args.out)
    print(f"  {'model':<24}{'df':>4}{'logLik':>12}{'AIC':>11}{'dAIC':>9}{'BIC':>11}{'dBIC':>9}",
          file=sys.stderr)
    for r in rows:
        print(f"  {r['name']:<24}{r['df']:>4}{r['log_likelihood']:>12.4f}{r['aic']:>11.4f}"
              f"{r['delta_aic']:>9.3f}{r['bic']:>11.4f}{r['delta_bic']:>9.3f}", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rsde", description="Fit reducible SDE models by least squares on the u-vector.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a model described by a JSON config")
    p.add_argument("config", help="config file, or bundled:<name>")
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.add_argument("--strategy", choices=STRATEGIES)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", type=int, dest="max_iter")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("simulate", help="simulate data from a JSON trajectory spec")
    p.add_argument("spec")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("loglik", help="log-likelihood at given parameter values")
    p.add_argument("config")
    p.add_argument("--theta", required=True, help="JSON file with parameter values")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_loglik)

    p = sub.add_parser("compare", help="AIC/BIC table from several fit reports")
    p.add_argument("reports", nargs="+")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, InfeasibleStartError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, UnitEvaluationError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
