"""Command-line entry point: ``reltransport {estimate,simulate,diagnose,compat}``.

Every command writes a JSON document that embeds the fully resolved run
configuration; passing that document back through ``--config`` re-runs the
same analysis. Values come from built-in defaults, then the config file, then
command-line flags (flags win).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from fractions import Fraction

from . import __version__
from .datamodel import ColumnSchema, load_dataset, load_trial_target, validate_dataset, write_dataset
from .diagnostics import StratumMeans, check_restriction, compat_check, positivity_report
from .errors import ConditionViolation, TransportError
from .estimators import ATE_FOR, Pipeline, bootstrap_ci, dumps, result_document
from .glm import ModelSpec, canonical_link
from .nuisance import import_external_model
from .simulate import generate, load_scenario, true_estimands

FAMILY_FOR_KIND = {"binary": "bernoulli", "count": "poisson", "continuous": "gaussian"}

DEFAULTS = {
    "common": {
        "data": None, "trial": None, "target": None,
        "s_col": "s", "a_col": "a", "y_col": "y", "x_cols": None, "w_cols": [],
        "outcome_kind": None, "family": None, "link": None,
        "ratio_method": "arm-specific", "ratio_link": None,
        "ratio_terms": None, "outcome_terms": None,
        "level": 0.95, "seed": 0, "threads": 1, "out": None,
    },
    "estimate": {
        "estimator": "phi", "estimand": "ratio", "m_terms": None, "b_terms": None,
        "g_model": None, "h_model": None, "m_model": None, "bootstrap": 500,
    },
    "diagnose": {"restriction": ["R1", "R2"], "threshold": 0.05, "bootstrap": 200},
    "simulate": {
        "scenario": None, "n1": None, "n0": None, "seed": 0, "out": None, "truth": None,
        "truth_method": "closed_form", "mc_draws": 1_000_000,
    },
    "compat": {"strata": None, "tol": 0.0, "out": None},
}

LIST_KEYS = {"x_cols", "w_cols", "ratio_terms", "outcome_terms", "m_terms", "b_terms", "restriction"}


class UsageError(TransportError):
    code = "USAGE"
    module = "cli"


def _csv_list(text):
    return [t.strip() for t in text.split(",") if t.strip()]


def _add_data_flags(p):
    p.add_argument("--data", help="single table holding trial and target rows (needs --s-col)")
    p.add_argument("--trial", help="trial table (alternative to --data)")
    p.add_argument("--target", help="target-population table (alternative to --data)")
    p.add_argument("--s-col", dest="s_col")
    p.add_argument("--a-col", dest="a_col")
    p.add_argument("--y-col", dest="y_col")
    p.add_argument("--x-cols", dest="x_cols", type=_csv_list, help="comma-separated X columns")
    p.add_argument("--w-cols", dest="w_cols", type=_csv_list, help="comma-separated W columns (target only)")
    p.add_argument("--outcome-kind", dest="outcome_kind", choices=["binary", "count", "continuous"])
    p.add_argument("--family", choices=["gaussian", "bernoulli", "poisson"],
                   help="outcome model family (default from --outcome-kind)")
    p.add_argument("--link", choices=["identity", "logit", "log"], help="outcome model link (default canonical)")
    p.add_argument("--ratio-method", dest="ratio_method", choices=["arm-specific", "log-link"])
    p.add_argument("--ratio-link", dest="ratio_link", choices=["identity", "logit", "log"])
    p.add_argument("--ratio-terms", dest="ratio_terms", type=_csv_list,
                   help="terms of the trial outcome model(s); products as a:b (default: X columns)")
    p.add_argument("--outcome-terms", dest="outcome_terms", type=_csv_list,
                   help="terms of the target outcome model g or h (default: X columns)")
    p.add_argument("--level", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--out", help="output path (default: standard output)")
    p.add_argument("--config", help="JSON config (or a previous result document)")


def build_parser():
    parser = argparse.ArgumentParser(prog="reltransport", argument_default=argparse.SUPPRESS,
                                     description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", argument_default=argparse.SUPPRESS,
                         help="mean ratio or ATE in the target population with a bootstrap interval")
    _add_data_flags(est)
    est.add_argument("--estimator", choices=["phi", "chi", "psi"])
    est.add_argument("--estimand", choices=["ratio", "ate"])
    est.add_argument("--m-terms", dest="m_terms", type=_csv_list, help="terms of m(X, W) (default: X and W)")
    est.add_argument("--b-terms", dest="b_terms", type=_csv_list, help="terms of the step-3 model (default: X)")
    est.add_argument("--g-model", dest="g_model", help="external model document used as g")
    est.add_argument("--h-model", dest="h_model", help="external model document used as h")
    est.add_argument("--m-model", dest="m_model", help="external model document used as m")
    est.add_argument("--bootstrap", type=int, help="bootstrap replicates B")

    diag = sub.add_parser("diagnose", argument_default=argparse.SUPPRESS,
                          help="R1/R2 discrepancy statistics and positivity summaries")
    _add_data_flags(diag)
    diag.add_argument("--restriction", type=_csv_list, help="R1, R2 or R1,R2")
    diag.add_argument("--threshold", type=float)
    diag.add_argument("--bootstrap", type=int)

    sim = sub.add_parser("simulate", argument_default=argparse.SUPPRESS,
                         help="draw a dataset from a scenario and write its true estimands")
    sim.add_argument("--scenario")
    sim.add_argument("--n1", type=int)
    sim.add_argument("--n0", type=int)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--out", help="CSV output for the generated dataset")
    sim.add_argument("--truth", help="JSON output for the true values")
    sim.add_argument("--truth-method", dest="truth_method", choices=["closed_form", "monte_carlo"])
    sim.add_argument("--mc-draws", dest="mc_draws", type=int)
    sim.add_argument("--config")

    comp = sub.add_parser("compat", argument_default=argparse.SUPPRESS,
                          help="ratio vs difference transportability bookkeeping for stratum means")
    comp.add_argument("--strata", help="CSV with columns e11,e10,e01,e00 or a JSON list of such objects")
    comp.add_argument("--tol", type=float)
    comp.add_argument("--out")
    comp.add_argument("--config")
    return parser


def resolve_config(args: argparse.Namespace) -> dict:
    """Merge defaults, the optional config file and explicit flags."""
    flags = vars(args).copy()
    command = flags.pop("command")
    config = {}
    if command in ("estimate", "diagnose"):
        config.update(DEFAULTS["common"])
    config.update(DEFAULTS[command])
    path = flags.pop("config", None)
    if path:
        with open(path, encoding="utf-8") as fh:
            loaded = json.load(fh)
        if "config" in loaded and isinstance(loaded["config"], dict):
            loaded = loaded["config"]
        unknown = set(loaded) - set(config) - {"command"}
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        config.update({k: v for k, v in loaded.items() if k != "command"})
    config.update(flags)
    for key in LIST_KEYS & set(config):
        if isinstance(config[key], str):
            config[key] = _csv_list(config[key])
    config["command"] = command
    return config


# --- shared helpers -----------------------------------------------------------

def _require(cfg, *keys):
    missing = [k for k in keys if cfg.get(k) in (None, [])]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


def _load(cfg):
    _require(cfg, "x_cols", "outcome_kind")
    schema = ColumnSchema(cfg["s_col"], cfg["a_col"], cfg["y_col"], tuple(cfg["x_cols"]), tuple(cfg["w_cols"] or ()))
    if cfg.get("data"):
        if cfg.get("trial") or cfg.get("target"):
            raise UsageError("use either --data or --trial/--target, not both")
        return load_dataset(cfg["data"], schema, cfg["outcome_kind"])
    if cfg.get("trial") and cfg.get("target"):
        return load_trial_target(cfg["trial"], cfg["target"], schema, cfg["outcome_kind"])
    raise UsageError("input data required: --data FILE, or --trial FILE with --target FILE")


def _resolve_models(cfg, ds):
    """Fill family/link/term defaults in ``cfg`` and return the model specs."""
    family = cfg["family"] or FAMILY_FOR_KIND[ds.outcome_kind]
    link = cfg["link"] or canonical_link(family)
    method = cfg["ratio_method"]
    ratio_link = cfg["ratio_link"] or ("log" if method == "log-link" else link)
    cfg.update(family=family, link=link, ratio_link=ratio_link)
    for key in ("ratio_terms", "outcome_terms"):
        if cfg.get(key) is None:
            cfg[key] = list(ds.x_names)
    ratio_spec = ModelSpec(family, ratio_link, tuple(cfg["ratio_terms"]))
    outcome_spec = ModelSpec(family, link, tuple(cfg["outcome_terms"]))
    return ratio_spec, outcome_spec


def _write(text, path):
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# --- commands -----------------------------------------------------------------

def run_estimate(cfg):
    ds = _load(cfg)
    estimator = cfg["estimator"]
    report = validate_dataset(ds, estimator)
    if report.errors:
        first = report.errors[0]
        raise ConditionViolation(first.message, first.code)
    ratio_spec, outcome_spec = _resolve_models(cfg, ds)
    m_spec = b_spec = None
    if estimator == "psi":
        if cfg.get("m_terms") is None:
            cfg["m_terms"] = list(ds.x_names + ds.w_names)
        if cfg.get("b_terms") is None:
            cfg["b_terms"] = list(ds.x_names)
        m_spec = ModelSpec(cfg["family"], cfg["link"], tuple(cfg["m_terms"]))
        b_spec = ModelSpec("gaussian", "identity", tuple(cfg["b_terms"]))
    external = {}
    for name in ("g", "h", "m"):
        path = cfg.get(f"{name}_model")
        if path:
            with open(path, encoding="utf-8") as fh:
                external[name] = import_external_model(fh.read())
    pipeline = Pipeline(
        estimator=estimator, ratio_spec=ratio_spec, outcome_spec=outcome_spec,
        estimand="ate" if cfg["estimand"] == "ate" else "mean_ratio",
        ratio_method="log_link_interaction" if cfg["ratio_method"] == "log-link" else "arm_specific",
        m_spec=m_spec, b_spec=b_spec, external=external,
    )
    estimate, interval = bootstrap_ci(ds, pipeline, cfg["bootstrap"], cfg["level"], cfg["seed"],
                                      cfg["threads"], keep_draws=False)
    doc = result_document(estimate, interval)
    doc["warnings"] = [w.message for w in report.warnings]
    doc["config"] = cfg
    _write(dumps(doc), cfg["out"])
    return doc


def run_diagnose(cfg):
    ds = _load(cfg)
    ratio_spec, outcome_spec = _resolve_models(cfg, ds)
    method = "log_link_interaction" if cfg["ratio_method"] == "log-link" else "arm_specific"
    diagnostics = {}
    for which in cfg["restriction"]:
        res = check_restriction(ds, which, ratio_spec, g_spec=outcome_spec, ratio_method=method,
                                B=cfg["bootstrap"], level=cfg["level"], seed=cfg["seed"], threads=cfg["threads"])
        diagnostics[which] = res.to_dict()
    diagnostics["positivity"] = positivity_report(ds, threshold=cfg["threshold"]).to_dict()
    doc = {"diagnostics": diagnostics, "n0": ds.n0, "n1": ds.n1, "config": cfg}
    _write(dumps(doc), cfg["out"])
    return doc


def run_simulate(cfg):
    _require(cfg, "scenario", "n1", "n0", "out")
    scenario = load_scenario(cfg["scenario"])
    ds = generate(scenario, cfg["n1"], cfg["n0"], cfg["seed"])
    write_dataset(ds, cfg["out"])
    if cfg["truth_method"] == "monte_carlo":
        truth = true_estimands(scenario, "monte_carlo", cfg["mc_draws"], cfg["seed"])
    else:
        truth = true_estimands(scenario)
    doc = {"truth": truth.to_document(), "dataset": cfg["out"], "n0": ds.n0, "n1": ds.n1, "config": cfg}
    text = dumps(doc)
    if cfg["truth"]:
        _write(text, cfg["truth"])
    else:
        sys.stdout.write(text)
    return doc


def _read_strata(path):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if text.lstrip().startswith("["):
        rows = json.loads(text)
    else:
        rows = list(csv.DictReader(text.splitlines()))

    def num(v):
        # decimal strings convert to exact fractions; JSON numbers stay floats
        return Fraction(v.strip()) if isinstance(v, str) else v

    try:
        return [StratumMeans(num(r["e11"]), num(r["e10"]), num(r["e01"]), num(r["e00"])) for r in rows]
    except (KeyError, ValueError) as exc:
        raise UsageError(f"strata file needs numeric e11,e10,e01,e00 fields: {exc}") from None


def run_compat(cfg):
    _require(cfg, "strata")
    report = compat_check(_read_strata(cfg["strata"]), cfg["tol"])
    doc = {"compat": report.to_dict(), "config": cfg}
    _write(dumps(doc), cfg["out"])
    return doc


COMMANDS = {"estimate": run_estimate, "diagnose": run_diagnose, "simulate": run_simulate, "compat": run_compat}


def execute(config: dict) -> tuple[int, dict]:
    """Run a resolved configuration; returns ``(exit_status, document)``.

    Failures produce status 1 and an error document naming the module and
    condition, which is also written to standard error.
    """
    try:
        doc = COMMANDS[config["command"]](config)
        return 0, doc
    except TransportError as exc:
        err = {"error": {"code": exc.code, "module": exc.module, "message": str(exc)}}
    except (OSError, ValueError) as exc:
        err = {"error": {"code": "INVALID_INPUT", "module": "cli", "message": str(exc)}}
    sys.stderr.write(dumps(err))
    return 1, err


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = resolve_config(args)
    except (TransportError, OSError, ValueError) as exc:
        sys.stderr.write(dumps({"error": {"code": "USAGE", "module": "cli", "message": str(exc)}}))
        return 2
    status, _ = execute(config)
    return status


if __name__ == "__main__":
    sys.exit(main())
