"""Command-line interface: analyze trial CSVs, run simulation grids, pivot results.

Three subcommands:

* ``analyze``  fits one working model to a trial CSV and writes a JSON report
  with per-arm summaries, the estimated ICC, and SE/CI/p for each requested
  variance estimator on both the link and effect scales.
* ``simulate`` expands a JSON grid config into scenarios and writes the
  long-format results table, one row per (scenario, model, estimator).
  Deterministic for a fixed seed at any thread count; interrupted runs can
  be resumed with ``--resume``.
* ``report``   groups an existing results table into plot-ready summaries.
  It never re-runs simulations.

Exit codes: 0 success; 1 invalid data, config, or usage; 2 the model did not
converge (the analyze report is still written, with diagnostics).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

from .data import Cluster, TrialDataset
from .errors import (
    CrtGeeError,
    DataError,
    DegenerateVarianceError,
    NonConvergenceError,
    SingularityError,
    UsageError,
)
from .families import ModelSpec, parse_family, parse_link
from .gee import fit_gee
from .inference import default_measure, wald_inference
from .sandwich import ALL_KINDS, DEFAULT_FG_BOUND, EstimatorKind, compute_estimates
from .simulate import (
    ALL_MODELS,
    ALPHA_LEVEL,
    RESULT_COLUMNS,
    TYPE1_BAND,
    FactorialGrid,
    result_rows,
    run_grid,
)
from .datagen import FixedSize, GammaSize

#: default thread count when neither --threads nor the config sets one
THREADS_ENV_VAR = "CRTGEE_THREADS"

TRIAL_CSV_HEADER = ("cluster_id", "arm", "outcome")

#: results columns holding numbers (parsed for grouping and averaging)
_NUMERIC_COLUMNS = {
    "scenario_id", "n_clusters", "cluster_size", "cv", "pi0", "icc",
    "n_rep", "n_conv", "conv_rate", "esd", "mean_se", "pct_bias", "type1",
}
_GROUPABLE_COLUMNS = (
    "scenario_id", "n_clusters", "cluster_size", "cv", "pi0", "icc",
    "family", "link", "estimator",
)


def read_trial_csv(path):
    """Parse an individual-level trial CSV into a TrialDataset.

    Errors carry the 1-based line number of the offending row.
    """
    order = []
    arms = {}
    outcomes = {}
    try:
        handle = open(path, newline="")
    except OSError as err:
        raise DataError(f"cannot read {path}: {err.strerror}") from err
    with handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: file is empty")
        if tuple(cell.strip() for cell in header) != TRIAL_CSV_HEADER:
            raise DataError(
                f"{path}: line 1: header must be exactly "
                f"'{','.join(TRIAL_CSV_HEADER)}', got '{','.join(header)}'"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 3:
                raise DataError(f"{path}: line {lineno}: expected 3 fields, got {len(row)}")
            cid, arm_s, out_s = (cell.strip() for cell in row)
            if not cid:
                raise DataError(f"{path}: line {lineno}: empty cluster_id")
            if arm_s not in ("0", "1"):
                raise DataError(f"{path}: line {lineno}: arm must be 0 or 1, got '{arm_s}'")
            if out_s not in ("0", "1"):
                raise DataError(f"{path}: line {lineno}: outcome must be 0 or 1, got '{out_s}'")
            arm = int(arm_s)
            if cid in arms and arms[cid] != arm:
                raise DataError(
                    f"{path}: line {lineno}: cluster '{cid}' appears in both arms"
                )
            if cid not in arms:
                arms[cid] = arm
                order.append(cid)
                outcomes[cid] = []
            outcomes[cid].append(int(out_s))
    if not order:
        raise DataError(f"{path}: no data rows")
    clusters = tuple(Cluster(id=cid, arm=arms[cid], outcomes=outcomes[cid]) for cid in order)
    return TrialDataset(clusters=clusters)


def _parse_kinds(text):
    kinds = []
    for token in text.split(","):
        token = token.strip().lower()
        if not token:
            continue
        try:
            kind = EstimatorKind(token)
        except ValueError:
            valid = ", ".join(k.value for k in EstimatorKind)
            raise UsageError(f"unknown estimator '{token}' (choose from: {valid})") from None
        if kind not in kinds:
            kinds.append(kind)
    if not kinds:
        raise UsageError("at least one estimator must be requested")
    return tuple(kinds)


def _normal_two_sided_p(z):
    return math.erfc(abs(z) / math.sqrt(2.0))


def cmd_analyze(args):
    data = read_trial_csv(args.data)
    spec = ModelSpec(parse_family(args.family), parse_link(args.link))
    kinds = _parse_kinds(args.corrections)
    if not 0.0 < args.level < 1.0:
        raise UsageError(f"--level must lie in (0, 1), got {args.level}")
    alpha_level = 1.0 - args.level

    arm_clusters = {0: 0, 1: 0}
    for c in data.clusters:
        arm_clusters[c.arm] += 1
    summary = data.arm_summary()
    report = {
        "command": "analyze",
        "data": {
            "path": args.data,
            "n_clusters": data.n_clusters,
            "n_obs": data.n_obs,
            "arms": {
                str(arm): {
                    "n_clusters": arm_clusters[arm],
                    "n_obs": summary[arm]["n_obs"],
                    "events": summary[arm]["events"],
                    "proportion": summary[arm]["proportion"],
                }
                for arm in (0, 1)
            },
        },
        "model": {
            "family": spec.family.value,
            "link": spec.link.value,
            "effect_measure": default_measure(spec.link).value,
        },
        "level": args.level,
    }

    try:
        fit = fit_gee(data, spec)
    except NonConvergenceError as err:
        report["fit"] = {
            "converged": False,
            "reason": err.reason,
            "iterations": err.iterations,
            "last_beta": err.last_beta,
        }
        report["estimates"] = {}
        _write_json(report, args.out)
        return 2

    report["fit"] = {
        "converged": True,
        "iterations": fit.iterations,
        "beta": [float(b) for b in fit.beta],
        "icc": fit.alpha_hat,
        "dispersion": fit.phi_hat,
        "icc_clamped": fit.alpha_clamped,
    }
    estimates = {}
    failures = {}
    for kind in kinds:
        try:
            est = compute_estimates(fit, (kind,), fg_bound=DEFAULT_FG_BOUND)[kind]
            inf = wald_inference(fit, est, alpha_level=alpha_level)
        except (SingularityError, DegenerateVarianceError, CrtGeeError) as err:
            failures[kind.value] = f"{type(err).__name__}: {err}"
            continue
        entry = {
            "se": inf.se,
            "df": inf.df,
            "t": inf.t_stat,
            "p": inf.p_value,
            "estimate_link": inf.estimate_link,
            "ci_link": list(inf.ci_link),
            "effect_measure": inf.effect_measure.value,
            "estimate_effect": inf.estimate_effect,
            "ci_effect": list(inf.ci_effect),
        }
        if args.z_test:
            entry["z_p"] = _normal_two_sided_p(inf.t_stat)
        estimates[kind.value] = entry
    report["estimates"] = estimates
    if failures:
        report["estimator_errors"] = failures
    _write_json(report, args.out)
    return 0


def _write_json(doc, out_path):
    text = json.dumps(doc, indent=2)
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def _config_list(doc, key, kind, convert):
    if key not in doc:
        raise UsageError(f"config key '{key}' is required")
    value = doc[key]
    if not isinstance(value, list) or not value:
        raise UsageError(f"config key '{key}' must be a nonempty list of {kind}")
    try:
        return tuple(convert(v) for v in value)
    except (TypeError, ValueError) as err:
        raise UsageError(f"config key '{key}': {err}") from None


def _as_number(v):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValueError(f"expected a number, got {v!r}")
    return float(v)


def _as_int(v):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ValueError(f"expected an integer, got {v!r}")
    return v


def _parse_size_entry(entry):
    if isinstance(entry, bool):
        raise UsageError(f"config key 'cluster_sizes': invalid entry {entry!r}")
    if isinstance(entry, (int, float)):
        return FixedSize(int(entry))
    if isinstance(entry, dict):
        kind = entry.get("type")
        if kind == "fixed":
            extra = set(entry) - {"type", "m"}
            if extra:
                raise UsageError(
                    f"config key 'cluster_sizes': unknown key '{sorted(extra)[0]}'"
                )
            if "m" not in entry:
                raise UsageError("config key 'cluster_sizes': fixed entry needs 'm'")
            return FixedSize(_as_int(entry["m"]))
        if kind == "gamma":
            extra = set(entry) - {"type", "mean", "cv"}
            if extra:
                raise UsageError(
                    f"config key 'cluster_sizes': unknown key '{sorted(extra)[0]}'"
                )
            if "mean" not in entry or "cv" not in entry:
                raise UsageError("config key 'cluster_sizes': gamma entry needs 'mean' and 'cv'")
            return GammaSize(_as_number(entry["mean"]), _as_number(entry["cv"]))
        raise UsageError(
            f"config key 'cluster_sizes': entry type must be 'fixed' or 'gamma', got {kind!r}"
        )
    raise UsageError(f"config key 'cluster_sizes': invalid entry {entry!r}")


def _parse_model_label(label):
    if not isinstance(label, str) or "-" not in label:
        raise UsageError(f"config key 'models': expected 'family-link' labels, got {label!r}")
    fam, _, link = label.partition("-")
    return ModelSpec(parse_family(fam), parse_link(link))


_ALLOWED_CONFIG_KEYS = {
    "seed", "replicates", "n_clusters", "cluster_sizes", "pi0", "icc",
    "models", "estimators", "fg_bound", "alpha_level", "output", "threads",
}


def parse_grid_config(doc):
    """Validate a config document and build the grid; rejects unknown keys."""
    if not isinstance(doc, dict):
        raise UsageError("config root must be an object")
    unknown = set(doc) - _ALLOWED_CONFIG_KEYS
    if unknown:
        raise UsageError(f"unknown config key '{sorted(unknown)[0]}'")
    if "output" not in doc or not isinstance(doc["output"], str) or not doc["output"]:
        raise UsageError("config key 'output' is required and must be a path string")

    n_clusters = _config_list(doc, "n_clusters", "integers", _as_int)
    sizes = _config_list(doc, "cluster_sizes", "size entries", _parse_size_entry)
    pi0 = _config_list(doc, "pi0", "numbers", _as_number)
    icc = _config_list(doc, "icc", "numbers", _as_number)

    models = ALL_MODELS
    if "models" in doc:
        models = _config_list(doc, "models", "model labels", _parse_model_label)
    estimators = ALL_KINDS
    if "estimators" in doc:
        labels = doc["estimators"]
        if not isinstance(labels, list) or not labels:
            raise UsageError("config key 'estimators' must be a nonempty list")
        estimators = _parse_kinds(",".join(str(v) for v in labels))

    replicates = doc.get("replicates", 1000)
    if isinstance(replicates, bool) or not isinstance(replicates, int) or replicates < 1:
        raise UsageError(f"config key 'replicates' must be a positive integer, got {replicates!r}")
    seed = doc.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise UsageError(f"config key 'seed' must be a nonnegative integer, got {seed!r}")
    fg_bound = doc.get("fg_bound", DEFAULT_FG_BOUND)
    if isinstance(fg_bound, bool) or not isinstance(fg_bound, (int, float)) \
            or not 0.0 < fg_bound <= 1.0:
        raise UsageError(f"config key 'fg_bound' must lie in (0, 1], got {fg_bound!r}")
    alpha_level = doc.get("alpha_level", ALPHA_LEVEL)
    if isinstance(alpha_level, bool) or not isinstance(alpha_level, (int, float)) \
            or not 0.0 < alpha_level < 1.0:
        raise UsageError(f"config key 'alpha_level' must lie in (0, 1), got {alpha_level!r}")
    threads = doc.get("threads")
    if threads is not None and (isinstance(threads, bool) or not isinstance(threads, int)
                                or threads < 1):
        raise UsageError(f"config key 'threads' must be a positive integer, got {threads!r}")

    try:
        grid = FactorialGrid(
            n_clusters=n_clusters,
            sizes=sizes,
            pi0=pi0,
            icc=icc,
            models=tuple(models),
            estimators=tuple(estimators),
            replicates=replicates,
            seed=seed,
            fg_bound=float(fg_bound),
            alpha_level=float(alpha_level),
        )
        grid.scenarios()  # force Scenario validation before any work starts
    except CrtGeeError as err:
        raise UsageError(f"invalid config: {err}") from None
    return grid, doc["output"], threads


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _resolve_threads(flag_value, config_value):
    if flag_value is not None:
        if flag_value < 1:
            raise UsageError(f"--threads must be a positive integer, got {flag_value}")
        return flag_value
    if config_value is not None:
        return config_value
    env = os.environ.get(THREADS_ENV_VAR)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise UsageError(f"{THREADS_ENV_VAR} must be an integer, got '{env}'") from None
        if n < 1:
            raise UsageError(f"{THREADS_ENV_VAR} must be positive, got {n}")
        return n
    return 1


def _load_resume_lines(path, rows_per_scenario):
    """Map scenario_id -> verbatim result lines for scenarios already complete."""
    if not os.path.exists(path):
        return {}
    by_scenario = {}
    with open(path, newline="") as fh:
        first = fh.readline()
        if first.rstrip("\n") != ",".join(RESULT_COLUMNS):
            raise DataError(f"{path}: existing file does not match the results schema")
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            fields = next(csv.reader([line]))
            if len(fields) != len(RESULT_COLUMNS):
                continue  # torn final write from an interrupted run
            try:
                sid = int(fields[0])
            except ValueError:
                raise DataError(f"{path}: bad scenario_id '{fields[0]}'") from None
            by_scenario.setdefault(sid, []).append(line)
    return {sid: lines for sid, lines in by_scenario.items()
            if len(lines) == rows_per_scenario}


def cmd_simulate(args):
    try:
        with open(args.config) as fh:
            doc = json.load(fh)
    except OSError as err:
        raise UsageError(f"cannot read config {args.config}: {err.strerror}") from err
    except json.JSONDecodeError as err:
        raise UsageError(f"config {args.config} is not valid JSON: {err}") from None
    grid, out_path, config_threads = parse_grid_config(doc)
    threads = _resolve_threads(args.threads, config_threads)

    rows_per_scenario = len(grid.models) * len(grid.estimators)
    cached = _load_resume_lines(out_path, rows_per_scenario) if args.resume else {}

    def progress(done, total, idx):
        sys.stderr.write(f"scenario {idx} done ({done}/{total} computed)\n")

    scenarios = grid.scenarios()
    skip = tuple(cached)
    results = run_grid(grid, threads=threads, progress=progress, skip=skip)
    with open(out_path, "w", newline="") as fh:
        fh.write(",".join(RESULT_COLUMNS) + "\n")
        for sc in scenarios:
            if sc.index in cached:
                for line in cached[sc.index]:
                    fh.write(line + "\n")
            else:
                for res in next(results):
                    for row in result_rows(res):
                        fh.write(",".join(_cell(row[c]) for c in RESULT_COLUMNS) + "\n")
            fh.flush()
    return 0


def _read_results(path):
    try:
        handle = open(path, newline="")
    except OSError as err:
        raise DataError(f"cannot read {path}: {err.strerror}") from err
    with handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or tuple(header) != RESULT_COLUMNS:
            raise DataError(f"{path}: results schema mismatch (expected columns "
                            f"{','.join(RESULT_COLUMNS)})")
        rows = []
        for lineno, fields in enumerate(reader, start=2):
            if not fields:
                continue
            if len(fields) != len(RESULT_COLUMNS):
                raise DataError(f"{path}: line {lineno}: expected "
                                f"{len(RESULT_COLUMNS)} fields, got {len(fields)}")
            row = {}
            for name, text in zip(RESULT_COLUMNS, fields):
                if name in _NUMERIC_COLUMNS:
                    if text == "":
                        row[name] = None
                    else:
                        try:
                            row[name] = float(text)
                        except ValueError:
                            raise DataError(
                                f"{path}: line {lineno}: column '{name}' is not numeric"
                            ) from None
                else:
                    row[name] = text
            rows.append(row)
    if not rows:
        raise DataError(f"{path}: no result rows")
    return rows


def cmd_report(args):
    rows = _read_results(args.results)
    by = tuple(t.strip() for t in args.by.split(",") if t.strip())
    if not by:
        raise UsageError("--by must name at least one grouping column")
    for col in by:
        if col not in _GROUPABLE_COLUMNS:
            raise UsageError(f"cannot group by '{col}' (choose from: "
                             f"{', '.join(_GROUPABLE_COLUMNS)})")

    groups = {}
    for row in rows:
        key = tuple(row[c] for c in by)
        groups.setdefault(key, []).append(row)

    def mean_of(items, col):
        vals = [r[col] for r in items if r[col] is not None]
        return sum(vals) / len(vals) if vals else None

    out_columns = list(by) + [
        "n_rows", "mean_conv_rate", "mean_esd", "mean_se",
        "mean_pct_bias", "mean_type1", "frac_acceptable",
    ]
    lines = [",".join(out_columns)]
    for key in sorted(groups, key=lambda k: tuple((v is None, v) for v in k)):
        items = groups[key]
        type1s = [r["type1"] for r in items if r["type1"] is not None]
        frac_ok = None
        if type1s:
            frac_ok = sum(
                1 for t in type1s if TYPE1_BAND[0] <= t <= TYPE1_BAND[1]
            ) / len(type1s)
        cells = [_cell(int(v) if isinstance(v, float) and v.is_integer() and c in
                       ("scenario_id", "n_clusters", "n_rep", "n_conv") else v)
                 for c, v in zip(by, key)]
        cells += [
            _cell(len(items)),
            _cell(mean_of(items, "conv_rate")),
            _cell(mean_of(items, "esd")),
            _cell(mean_of(items, "mean_se")),
            _cell(mean_of(items, "pct_bias")),
            _cell(mean_of(items, "type1")),
            _cell(frac_ok),
        ]
        lines.append(",".join(cells))
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="crtgee",
        description="GEE analysis of two-arm cluster randomized trials with "
                    "small-sample variance corrections.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_an = sub.add_parser("analyze", help="fit one model to a trial CSV")
    p_an.add_argument("--data", required=True, help="CSV with header cluster_id,arm,outcome")
    p_an.add_argument("--family", required=True,
                      help="working family: binomial, poisson, or gaussian")
    p_an.add_argument("--link", required=True, help="link: log, identity, or logit")
    p_an.add_argument("--corrections", default=",".join(k.value for k in ALL_KINDS),
                      help="comma-separated estimators (default: all)")
    p_an.add_argument("--level", type=float, default=0.95,
                      help="confidence level (default 0.95)")
    p_an.add_argument("--out", default=None, help="report path (default: stdout)")
    p_an.add_argument("--z-test", action="store_true", dest="z_test",
                      help="diagnostic only: also report normal-approximation p-values")
    p_an.set_defaults(func=cmd_analyze)

    p_sim = sub.add_parser("simulate", help="run a simulation grid from a JSON config")
    p_sim.add_argument("--config", required=True, help="JSON grid configuration")
    p_sim.add_argument("--threads", type=int, default=None,
                       help=f"worker processes (default: config, then ${THREADS_ENV_VAR}, then 1)")
    p_sim.add_argument("--resume", action="store_true",
                       help="reuse completed scenarios already in the output file")
    p_sim.set_defaults(func=cmd_simulate)

    p_rep = sub.add_parser("report", help="pivot a results file into grouped summaries")
    p_rep.add_argument("--results", required=True, help="results CSV from simulate")
    p_rep.add_argument("--by", default="estimator",
                       help="comma-separated grouping columns (default: estimator)")
    p_rep.add_argument("--out", default=None, help="summary path (default: stdout)")
    p_rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DataError, UsageError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except CrtGeeError as err:
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
