"""Command line front end for two-sample survival-quantile analysis.

Subcommands:

  test        run the quantile-equality test on a CSV dataset
  power       closed-form power over a (delta, n) grid for a scenario
  samplesize  minimum per-group n reaching target powers
  simulate    Monte Carlo rejection rate under a scenario

Every output embeds a run manifest: the resolved configuration, seeds, the
tuning values actually used, and the package version, so a result can be
reproduced from the output alone. JSON (--json) is the canonical machine
format; the default CSV (power, simulate) and table (test, samplesize)
views are derived from the same payload. Exit codes: 0 success, 2 invalid
input, 3 numerical failure (unreachable quantile, singular covariance, and
kin).

Datasets are CSV with header time,status,group: non-negative event or
censoring time, status 1 for an observed event and 0 for censoring, group
1 or 2. Extra columns are ignored with a warning on stderr.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .density import KdeConfig, LsConfig, select_sigma_ls
from .errors import DatasetFormatError, NumericalError, ValidationError
from .power import PowerSpec, min_sample_size, power_univariate
from .quantile_tests import bonferroni_followup, multivariate_test, univariate_test
from .scenarios import ScenarioConfig, parse_scenario_values, resolve_scenario, scenario_sigma2
from .simulate import DEFAULT_SIM_SIGMA_EPS, SimulationPlan, empirical_rejection
from .survival import SurvivalSample, TwoArmData

_THREADS_ENV = "SURVQUANT_THREADS"
_SIGMA_AUTO_GRID = np.linspace(0.1, 10.0, 199)  # 0.1 .. 10 in steps of 0.05
_BANDWIDTH_AUTO_GRID = np.arange(0.1, 1.0 + 1e-12, 0.02)
_REQUIRED_COLUMNS = ("time", "status", "group")


# ---------------------------------------------------------------------------
# serialization helpers

def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return None if math.isnan(value) else value
    if isinstance(value, (int, np.integer, bool, np.bool_)):
        return int(value) if not isinstance(value, bool) else value
    return value


def _canonical(payload) -> str:
    return json.dumps(_jsonable(payload), sort_keys=True, separators=(",", ":"))


def _cell(value) -> str:
    """Deterministic cell rendering for CSV output."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _pretty(value) -> str:
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.6g}"
    return _cell(value)


def _emit_csv(manifest: dict, header, rows) -> None:
    out = sys.stdout
    out.write("# manifest: " + _canonical(manifest) + "\n")
    out.write(",".join(header) + "\n")
    for row in rows:
        out.write(",".join(_cell(v) for v in row) + "\n")


def _emit_table(manifest: dict, header, rows) -> None:
    rendered = [[_pretty(v) for v in row] for row in rows]
    widths = [
        max(len(header[i]), *(len(r[i]) for r in rendered)) if rendered else len(header[i])
        for i in range(len(header))
    ]
    out = sys.stdout
    out.write("  ".join(h.ljust(widths[i]) for i, h in enumerate(header)).rstrip() + "\n")
    out.write("  ".join("-" * w for w in widths) + "\n")
    for r in rendered:
        out.write("  ".join(c.ljust(widths[i]) for i, c in enumerate(r)).rstrip() + "\n")
    out.write("\nmanifest: " + _canonical(manifest) + "\n")


def _emit_json(payload, destination: str) -> None:
    text = json.dumps(_jsonable(payload), sort_keys=True, indent=2) + "\n"
    if destination == "-":
        sys.stdout.write(text)
    else:
        Path(destination).write_text(text)


def _manifest(command: str, config: dict, seeds: dict, tuning: dict,
              dataset=None) -> dict:
    out = {
        "command": command,
        "config": config,
        "seeds": seeds,
        "tuning": tuning,
        "version": __version__,
    }
    if dataset is not None:
        out["dataset"] = dataset
    return out


# ---------------------------------------------------------------------------
# dataset ingestion

def read_dataset(path: str):
    """Parse a time,status,group CSV into TwoArmData.

    Returns (data, info) where info carries the sha256 of the file bytes and
    any ignored extra column names.
    """
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise ValidationError(f"cannot read dataset {path}: {exc}") from None
    digest = hashlib.sha256(raw).hexdigest()
    reader = csv.reader(io.StringIO(raw.decode("utf-8")))
    try:
        names = [cell.strip() for cell in next(reader)]
    except StopIteration:
        raise DatasetFormatError("dataset file is empty", line=1) from None
    for column in _REQUIRED_COLUMNS:
        if column not in names:
            raise DatasetFormatError(
                f"missing required column {column!r} (header must contain "
                "time,status,group)", line=1,
            )
    extra = [n for n in names if n not in _REQUIRED_COLUMNS]
    index = {column: names.index(column) for column in _REQUIRED_COLUMNS}
    times = {1: [], 2: []}
    events = {1: [], 2: []}
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue  # tolerate a trailing blank line
        if len(row) != len(names):
            raise DatasetFormatError(
                f"expected {len(names)} fields, found {len(row)}", line=lineno
            )
        try:
            time_value = float(row[index["time"]])
        except ValueError:
            raise DatasetFormatError(
                f"time is not a number: {row[index['time']]!r}", line=lineno
            ) from None
        if not math.isfinite(time_value) or time_value < 0:
            raise DatasetFormatError(
                f"time must be finite and non-negative, got {time_value!r}",
                line=lineno,
            )
        status = row[index["status"]].strip()
        if status not in ("0", "1"):
            raise DatasetFormatError(
                f"status must be 0 or 1, got {status!r}", line=lineno
            )
        group = row[index["group"]].strip()
        if group not in ("1", "2"):
            raise DatasetFormatError(
                f"group must be 1 or 2, got {group!r}", line=lineno
            )
        times[int(group)].append(time_value)
        events[int(group)].append(status == "1")
    for group in (1, 2):
        if not times[group]:
            raise ValidationError(f"two groups required: group {group} has no rows")
    data = TwoArmData(
        SurvivalSample(np.array(times[1]), np.array(events[1])),
        SurvivalSample(np.array(times[2]), np.array(events[2])),
    )
    return data, {"path": str(path), "sha256": digest, "ignored_columns": extra}


# ---------------------------------------------------------------------------
# scenario plumbing

def _read_scenario_values(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read scenario config {path}: {exc}") from None
    return parse_scenario_values(text)


def _merge_scenario(values: dict, p_values=None, delta=None) -> dict:
    merged = dict(values)
    if p_values is not None:
        merged.pop("p", None)
        merged.pop("p_list", None)
        if len(p_values) == 1:
            merged["p"] = p_values[0]
        else:
            merged["p_list"] = tuple(p_values)
    if delta is not None:
        merged.pop("delta", None)
        merged.pop("lambda_b", None)
        merged["delta"] = delta
    if "lambda_a" not in merged:
        raise ValidationError("scenario config is missing lambda_a")
    return merged


def _scenario_summary(config: ScenarioConfig, scenario) -> dict:
    """Resolved generative description for the manifest."""
    arm2 = scenario.arm2
    summary = {
        "lambda_a": config.lambda_a,
        "censoring_rate": scenario.censoring_rate,
        "mu1": scenario.mu1,
    }
    if hasattr(arm2, "t_cut"):
        summary["form"] = "delayed-effect"
        summary["t_cut"] = arm2.t_cut
        summary["lambda_b"] = arm2.rate_late
    else:
        summary["form"] = "proportional"
        summary["lambda_b"] = arm2.rate
    return summary


def _single_p(args, merged: dict) -> float:
    if args.p is not None:
        return args.p
    if merged.get("p") is not None:
        return merged["p"]
    raise ValidationError("a quantile probability is required (--p or config p=)")


# ---------------------------------------------------------------------------
# tuning resolution for cmd_test

def _resolve_test_tuning(args, data, probabilities):
    """Build the density tuning from flags, resolving 'auto' choices.

    Returns (tuning, manifest_tuning, notes). For LS the automatic sigma is
    the largest plateau-stable choice over arm x probability (symmetric in
    the arms, errs toward smoothing); the per-selection values are recorded.
    """
    if args.method == "ls":
        if args.bandwidth is not None:
            raise ValidationError("--bandwidth applies to --method kde only")
        spec = args.sigma_eps if args.sigma_eps is not None else "auto"
        if spec == "auto":
            chosen = []
            flags = set()
            for sample in (data.arm1, data.arm2):
                for p in probabilities:
                    selection = select_sigma_ls(
                        sample, p, _SIGMA_AUTO_GRID, seed=args.seed
                    )
                    chosen.append(selection.sigma_eps)
                    flags.update(selection.flags)
            sigma = max(chosen)
            manifest = {
                "method": "ls",
                "sigma_eps": sigma,
                "sigma_eps_mode": "auto",
                "sigma_eps_selections": chosen,
            }
            return LsConfig(sigma_eps=sigma, seed=args.seed), manifest, sorted(flags)
        try:
            sigma = float(spec)
        except ValueError:
            raise ValidationError(
                f"--sigma-eps must be a number or 'auto', got {spec!r}"
            ) from None
        manifest = {"method": "ls", "sigma_eps": sigma, "sigma_eps_mode": "fixed"}
        return LsConfig(sigma_eps=sigma, seed=args.seed), manifest, []
    # kde
    if args.sigma_eps is not None:
        raise ValidationError("--sigma-eps applies to --method ls only")
    spec = args.bandwidth if args.bandwidth is not None else "auto"
    if spec == "auto":
        tuning = KdeConfig("select-by-cv", _BANDWIDTH_AUTO_GRID)
        manifest = {"method": "kde", "bandwidth_mode": "auto"}
        return tuning, manifest, []
    try:
        bandwidth = float(spec)
    except ValueError:
        raise ValidationError(
            f"--bandwidth must be a number or 'auto', got {spec!r}"
        ) from None
    manifest = {"method": "kde", "bandwidth": bandwidth, "bandwidth_mode": "fixed"}
    return KdeConfig(bandwidth), manifest, []


# ---------------------------------------------------------------------------
# subcommand handlers

def cmd_test(args) -> int:
    data, dataset_info = read_dataset(args.data)
    if dataset_info["ignored_columns"]:
        print(
            "warning: ignoring extra column(s): "
            + ", ".join(dataset_info["ignored_columns"]),
            file=sys.stderr,
        )
    probabilities = args.p
    if len(set(probabilities)) != len(probabilities):
        raise ValidationError("--p entries must be distinct")
    tuning, manifest_tuning, notes = _resolve_test_tuning(args, data, probabilities)
    for note in notes:
        print(f"warning: sigma selection: {note}", file=sys.stderr)

    config = {
        "p": list(probabilities),
        "method": args.method,
        "alpha": args.alpha,
        "bonferroni": bool(args.bonferroni),
    }
    seeds = {"seed": args.seed} if args.method == "ls" else {}

    if len(probabilities) == 1:
        result = univariate_test(data, probabilities[0], args.method, tuning)
        if args.method == "kde":
            manifest_tuning["bandwidth_arm1"] = result.tuning1
            manifest_tuning["bandwidth_arm2"] = result.tuning2
        manifest = _manifest("test", config, seeds, manifest_tuning, dataset_info)
        payload = {"manifest": manifest, "results": [asdict(result)]}
        if args.json:
            _emit_json(payload, args.json)
        else:
            header = ["p", "delta_hat", "statistic", "p_value", "flags"]
            rows = [[
                result.p, result.delta_hat, result.statistic, result.p_value,
                ";".join(result.flags),
            ]]
            _emit_table(manifest, header, rows)
        return 0

    if args.bonferroni:
        followup = bonferroni_followup(
            data, probabilities, args.method, tuning, alpha=args.alpha
        )
    else:
        followup = []
    joint = multivariate_test(data, probabilities, args.method, tuning)
    if args.method == "kde":
        manifest_tuning["bandwidth_arm1"] = joint.tuning1
        manifest_tuning["bandwidth_arm2"] = joint.tuning2
    manifest = _manifest("test", config, seeds, manifest_tuning, dataset_info)
    payload = {
        "manifest": manifest,
        "results": [asdict(joint)],
        "bonferroni": [asdict(r) for r in followup],
    }
    if args.json:
        _emit_json(payload, args.json)
        return 0
    header = ["statistic", "dof", "p_value", "flags"]
    rows = [[joint.statistic, joint.dof, joint.p_value, ";".join(joint.flags)]]
    _emit_table(manifest, header, rows)
    if followup:
        sys.stdout.write("\nBonferroni follow-up:\n")
        header = ["p", "delta_hat", "statistic", "p_value", "adjusted_p", "reject"]
        rows = [
            [r.p, r.delta_hat, r.statistic, r.p_value, r.adjusted_p_value,
             r.reject_adjusted]
            for r in followup
        ]
        _emit_table(manifest, header, rows)
    return 0


def cmd_power(args) -> int:
    values = _read_scenario_values(args.scenario)
    merged = _merge_scenario(values, p_values=[args.p] if args.p is not None else None)
    p = _single_p(args, merged)
    rows = []
    scenario_manifest = None
    for delta in args.delta:
        config = ScenarioConfig(**_merge_scenario(merged, p_values=[p], delta=delta))
        scenario = resolve_scenario(config)
        if scenario_manifest is None:
            scenario_manifest = _scenario_summary(config, scenario)
            scenario_manifest.pop("lambda_b", None)  # varies with delta
        sigma2, _ = scenario_sigma2(scenario, p)
        for n in args.n:
            spec = PowerSpec(
                alpha=args.alpha, deltas=delta, sigma=math.sqrt(sigma2),
                per_group_n=n,
            )
            rows.append([p, delta, n, power_univariate(spec)])
    config_out = {
        "scenario": scenario_manifest,
        "p": p,
        "deltas": list(args.delta),
        "n_per_group": list(args.n),
        "alpha": args.alpha,
    }
    manifest = _manifest("power", config_out, {}, {"method": "closed-form"})
    header = ["p", "delta", "n_per_group", "power"]
    if args.json:
        payload = {
            "manifest": manifest,
            "results": [dict(zip(header, row)) for row in rows],
        }
        _emit_json(payload, args.json)
    else:
        _emit_csv(manifest, header, rows)
    return 0


def cmd_samplesize(args) -> int:
    values = _read_scenario_values(args.scenario)
    merged = _merge_scenario(
        values,
        p_values=[args.p] if args.p is not None else None,
        delta=args.delta,
    )
    p = _single_p(args, merged)
    config = ScenarioConfig(**_merge_scenario(merged, p_values=[p]))
    scenario = resolve_scenario(config)
    sigma2, _ = scenario_sigma2(scenario, p)
    delta = scenario.quantile_difference(p) if args.delta is None else args.delta
    rows = []
    for target in args.power:
        result = min_sample_size(
            target, delta, sigma=math.sqrt(sigma2), alpha=args.alpha
        )
        rows.append([
            target, result.per_group_n, result.total_n, result.achieved_power,
        ])
    config_out = {
        "scenario": _scenario_summary(config, scenario),
        "p": p,
        "delta": delta,
        "targets": list(args.power),
        "alpha": args.alpha,
    }
    manifest = _manifest("samplesize", config_out, {}, {"method": "closed-form"})
    header = ["target_power", "per_group_n", "total_n", "achieved_power"]
    if args.json:
        payload = {
            "manifest": manifest,
            "results": [dict(zip(header, row)) for row in rows],
        }
        _emit_json(payload, args.json)
    else:
        _emit_table(manifest, header, rows)
    return 0


def cmd_simulate(args) -> int:
    values = _read_scenario_values(args.scenario)
    merged = _merge_scenario(values, p_values=args.p, delta=args.delta)
    config = ScenarioConfig(**merged)
    scenario = resolve_scenario(config)
    probabilities = config.probabilities

    if args.seed is None:
        if os.environ.get("CI"):
            raise ValidationError("--seed is required when the CI env var is set")
        seed = 0
    else:
        seed = args.seed
    if args.threads is not None:
        threads = args.threads
    else:
        threads = int(os.environ.get(_THREADS_ENV, "1"))

    if args.method == "ls":
        if args.bandwidth is not None:
            raise ValidationError("--bandwidth applies to --method kde only")
        sigma = DEFAULT_SIM_SIGMA_EPS if args.sigma_eps is None else float(args.sigma_eps)
        tuning = LsConfig(sigma_eps=sigma)
        manifest_tuning = {"method": "ls", "sigma_eps": sigma}
    else:
        if args.sigma_eps is not None:
            raise ValidationError("--sigma-eps applies to --method ls only")
        if args.bandwidth is None or args.bandwidth == "auto":
            tuning = KdeConfig("select-by-cv", _BANDWIDTH_AUTO_GRID)
            manifest_tuning = {"method": "kde", "bandwidth_mode": "auto"}
        else:
            tuning = KdeConfig(float(args.bandwidth))
            manifest_tuning = {
                "method": "kde", "bandwidth": float(args.bandwidth),
                "bandwidth_mode": "fixed",
            }

    plan = SimulationPlan(
        scenario=scenario,
        n_per_group=args.n,
        probabilities=probabilities,
        replications=args.reps,
        alpha=args.alpha,
        density_method=args.method,
        tuning=tuning,
        master_seed=seed,
        threads=threads,
    )
    report = empirical_rejection(plan)

    deltas = [scenario.quantile_difference(p) for p in probabilities]
    config_out = {
        "scenario": _scenario_summary(config, scenario),
        "p": list(probabilities),
        "n_per_group": args.n,
        "replications": args.reps,
        "alpha": args.alpha,
    }
    manifest = _manifest(
        "simulate", config_out, {"master_seed": seed}, manifest_tuning
    )
    header = [
        "p", "delta", "empirical", "mc_se", "formula", "failures", "used",
        "replications", "flags",
    ]
    row = [
        ";".join(_cell(p) for p in probabilities),
        ";".join(_cell(d) for d in deltas),
        report.rate, report.mc_se, report.formula_power, report.n_failures,
        report.n_used, report.replications, ";".join(report.flags),
    ]
    if args.timing:
        header += ["rep_time_mean_s", "rep_time_sd_s"]
        row += [report.rep_time_mean_s, report.rep_time_sd_s]
    if args.json:
        entry = dict(zip(header, row))
        payload = {"manifest": manifest, "results": [entry]}
        _emit_json(payload, args.json)
    else:
        _emit_csv(manifest, header, [row])
    return 0


# ---------------------------------------------------------------------------
# parser

def _float_list(text: str):
    try:
        values = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("expected at least one number")
    return values


def _int_list(text: str):
    try:
        values = [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("expected at least one integer")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="survquant",
        description="Two-sample tests and design for survival quantiles under right censoring.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    test = sub.add_parser("test", help="test quantile equality on a dataset")
    test.add_argument("data", help="CSV file with header time,status,group")
    test.add_argument("--p", type=_float_list, required=True,
                      help="quantile probability, or comma list for the joint test")
    test.add_argument("--method", choices=("ls", "kde"), default="ls")
    test.add_argument("--alpha", type=float, default=0.05)
    test.add_argument("--sigma-eps", default=None,
                      help="LS perturbation scale, or 'auto' (default auto)")
    test.add_argument("--bandwidth", default=None,
                      help="KDE bandwidth, or 'auto' for CV selection (default auto)")
    test.add_argument("--bonferroni", action="store_true",
                      help="per-quantile follow-up with Bonferroni adjustment")
    test.add_argument("--seed", type=int, default=0,
                      help="seed for the LS perturbation draws (default 0)")
    test.add_argument("--json", metavar="PATH",
                      help="write canonical JSON to PATH ('-' for stdout)")
    test.set_defaults(handler=cmd_test)

    power = sub.add_parser("power", help="closed-form power over a (delta, n) grid")
    power.add_argument("--scenario", required=True, help="key=value scenario config file")
    power.add_argument("--p", type=float, default=None)
    power.add_argument("--delta", type=_float_list, required=True,
                       help="comma list of quantile differences")
    power.add_argument("--n", type=_int_list, required=True,
                       help="comma list of per-group sample sizes")
    power.add_argument("--alpha", type=float, default=0.05)
    power.add_argument("--json", metavar="PATH",
                       help="write canonical JSON instead of CSV")
    power.set_defaults(handler=cmd_power)

    size = sub.add_parser("samplesize", help="minimum per-group n for target powers")
    size.add_argument("--scenario", required=True)
    size.add_argument("--p", type=float, default=None)
    size.add_argument("--delta", type=float, default=None,
                      help="quantile difference (falls back to the scenario's)")
    size.add_argument("--power", type=_float_list, required=True,
                      help="comma list of target powers")
    size.add_argument("--alpha", type=float, default=0.05)
    size.add_argument("--json", metavar="PATH")
    size.set_defaults(handler=cmd_samplesize)

    sim = sub.add_parser("simulate", help="empirical rejection rate by Monte Carlo")
    sim.add_argument("--scenario", required=True)
    sim.add_argument("--n", type=int, required=True, help="per-group sample size")
    sim.add_argument("--reps", type=int, required=True, help="number of replicates")
    sim.add_argument("--p", type=_float_list, default=None,
                     help="quantile probability or comma list (joint test)")
    sim.add_argument("--delta", type=float, default=None,
                     help="override the scenario's quantile difference")
    sim.add_argument("--method", choices=("ls", "kde"), default="ls")
    sim.add_argument("--alpha", type=float, default=0.05)
    sim.add_argument("--sigma-eps", default=None,
                     help=f"LS perturbation scale (default {DEFAULT_SIM_SIGMA_EPS})")
    sim.add_argument("--bandwidth", default=None,
                     help="KDE bandwidth, or 'auto' for per-replicate CV")
    sim.add_argument("--seed", type=int, default=None,
                     help="master seed (default 0; required when CI is set)")
    sim.add_argument("--threads", type=int, default=None,
                     help=f"worker threads (default ${_THREADS_ENV} or 1)")
    sim.add_argument("--timing", action="store_true",
                     help="append per-replicate timing columns")
    sim.add_argument("--json", metavar="PATH")
    sim.set_defaults(handler=cmd_simulate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
