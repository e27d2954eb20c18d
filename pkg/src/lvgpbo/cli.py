"""Command-line front end: replicated campaigns, aggregation, exports.

Verbs:

* ``run``        execute a config file's campaign for N replicates
* ``aggregate``  recompute the convergence table from history files
* ``oracle``     exhaustive scan of a tabular problem
* ``latents``    re-export latent embeddings from a saved model file

A run writes, under the output directory: one history file per replicate
(``replicate_###.jsonl``), the fitted final model and its latent table per
replicate, an aggregate convergence table (per-evaluation median and median
absolute deviation of the incumbent across replicates), and ``summary.json``.
Replicate r's seed is a pure function of the root seed and r, so reruns are
bit-identical; replicates execute concurrently up to ``workers``.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import dataclasses
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .acquisition import AcquisitionConfig
from .benchmarks import (
    TabularObjective,
    branin_objective,
    branin_space,
    exhaustive_oracle,
    goldstein_price_objective,
    goldstein_price_space,
    load_tabular,
    noisy_wrapper,
    synthetic_tabular_path,
)
from .engine import Campaign, CampaignConfig, Objective, run, write_history
from .model import FitConfig, FittedModel, export_latents, write_latents_csv
from .space import DesignSpace

__all__ = [
    "RunConfig",
    "AggregationError",
    "run_experiment",
    "aggregate",
    "load_config",
    "main",
]

_FIT_KEYS = {f.name for f in dataclasses.fields(FitConfig)}
_ACQ_KEYS = {f.name for f in dataclasses.fields(AcquisitionConfig)} - {"candidates"}
_KNOWN_KEYS = {
    "problem",
    "n0",
    "iterations",
    "replicates",
    "noisy",
    "noise_sd",
    "pool_filter",
    "out",
    "workers",
    "fit",
    "acquisition",
}


class AggregationError(ValueError):
    """History files cannot be aggregated (mismatched lengths or missing data)."""


@dataclass(frozen=True)
class RunConfig:
    """One experiment: a problem, a campaign shape, and replicate count."""

    problem: str | dict
    seed: int
    n0: int = 10
    iterations: int = 30
    replicates: int = 1
    noisy: bool = False
    noise_sd: float = 0.0
    pool_filter: float | None = None
    out: str = "results"
    workers: int = 1
    fit: dict = field(default_factory=dict)
    acquisition: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.n0 < 1:
            raise ValueError("n0 must be >= 1")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        bad_fit = set(self.fit) - _FIT_KEYS
        bad_acq = set(self.acquisition) - _ACQ_KEYS
        if bad_fit or bad_acq:
            raise ValueError(f"unknown fit keys {bad_fit or '{}'} / acquisition keys {bad_acq or '{}'}")


def load_config(path, seed: int, overrides: dict | None = None) -> RunConfig:
    with open(path) as fh:
        raw = json.load(fh)
    unknown = set(raw) - _KNOWN_KEYS
    if unknown:
        raise ValueError(f"{path}: unknown config keys {sorted(unknown)}")
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return RunConfig(seed=seed, **raw)


@dataclass(frozen=True, eq=False)
class _Problem:
    name: str
    space: DesignSpace
    tabular: TabularObjective | None

    def objective(self) -> Objective:
        if self.tabular is not None:
            return self.tabular.objective()
        if self.name == "branin":
            return branin_objective()
        if self.name == "goldstein_price":
            return goldstein_price_objective()
        raise AssertionError(self.name)


def _build_problem(config: RunConfig) -> _Problem:
    problem = config.problem
    if problem == "branin":
        return _Problem("branin", branin_space(), None)
    if problem == "goldstein_price":
        return _Problem("goldstein_price", goldstein_price_space(), None)
    if problem == "synthetic":
        problem = {
            "file": str(synthetic_tabular_path()),
            "factors": ["cation", "halide_1", "halide_2", "halide_3", "solvent"],
            "response": "energy",
        }
    if isinstance(problem, dict):
        if "file" not in problem:
            raise ValueError("tabular problem needs a 'file' entry")
        tab = load_tabular(
            problem["file"],
            factors=problem.get("factors") or _peek_factor_columns(problem["file"], problem.get("response", "response")),
            response=problem.get("response", "response"),
            levels=problem.get("levels"),
        )
        return _Problem("tabular", tab.space, tab)
    raise ValueError(f"unknown problem {config.problem!r}")


def _peek_factor_columns(path, response: str) -> list[str]:
    with open(path, newline="") as fh:
        header = next(csv.reader(fh))
    return [c for c in header if c != response]


def _campaign_config(config: RunConfig, problem: _Problem, replicate: int) -> CampaignConfig:
    fit_kwargs = dict(config.fit)
    if config.noisy:
        fit_kwargs.setdefault("noisy", True)
    acq_kwargs = dict(config.acquisition)
    if config.noisy:
        acq_kwargs.setdefault("kind", "ei-plugin")
    pool = None
    if problem.tabular is not None:
        acq_kwargs["candidates"] = problem.tabular.candidates
        pool = problem.tabular.pool(config.pool_filter)
        if len(pool) < config.n0:
            raise ValueError(
                f"pool filter > {config.pool_filter} leaves {len(pool)} candidates, "
                f"need n0={config.n0}"
            )
    return CampaignConfig(
        n_initial=config.n0,
        max_iterations=config.iterations,
        seed=np.random.SeedSequence(entropy=config.seed, spawn_key=(2 * replicate,)),
        fit=FitConfig(**fit_kwargs),
        acquisition=AcquisitionConfig(**acq_kwargs),
        initial_pool=pool,
    )


def _save_model(model: FittedModel, path) -> None:
    payload = {
        "space": model.space.to_dict(),
        "mu": model.mu,
        "sigma2": model.sigma2,
        "nugget": model.params.kernel.nugget,
        "roughness": model.params.kernel.roughness.tolist(),
        "latents": [
            {"factor": spec.name, "levels": list(spec.levels), "z": z.tolist()}
            for spec, z in zip(model.space.qual, model.params.kernel.latents)
        ],
        "y_center": model.y_center,
        "y_scale": model.y_scale,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)


def latents_from_model_file(path) -> list[tuple[str, str, float, float]]:
    with open(path) as fh:
        payload = json.load(fh)
    rows = []
    for entry in payload["latents"]:
        for label, (z1, z2) in zip(entry["levels"], entry["z"]):
            rows.append((entry["factor"], label, float(z1), float(z2)))
    return rows


def _run_replicate(config: RunConfig, replicate: int) -> dict:
    problem = _build_problem(config)
    campaign = Campaign(problem.space, _campaign_config(config, problem, replicate))
    objective = problem.objective()
    if config.noise_sd > 0:
        noise_seed = np.random.SeedSequence(entropy=config.seed, spawn_key=(2 * replicate + 1,))
        objective = noisy_wrapper(objective, config.noise_sd, noise_seed)
    run(objective, campaign)

    out = Path(config.out)
    history_path = out / f"replicate_{replicate:03d}.jsonl"
    write_history(campaign, history_path)
    result = {
        "replicate": replicate,
        "history": history_path.name,
        "n_evals": len(campaign.history),
        "final_incumbent": campaign.incumbent,
        "error": None,
    }
    if len(campaign.dataset) > 0:
        model = campaign.final_model()
        _save_model(model, out / f"model_{replicate:03d}.json")
        if problem.space.n_qual:
            write_latents_csv(export_latents(model), out / f"latents_{replicate:03d}.csv")
    return result


def aggregate(named_histories: list[tuple[str, list[dict]]]) -> list[dict]:
    """Per-evaluation median and raw MAD of the incumbent across replicates.

    All histories must have the same length; the offending files are named
    otherwise.  MAD is median(|v - median(v)|), unscaled.
    """
    if not named_histories:
        raise AggregationError("no history files given")
    lengths = {name: len(recs) for name, recs in named_histories}
    if len(set(lengths.values())) != 1:
        raise AggregationError(f"histories have mismatched lengths: {lengths}")
    n_evals = next(iter(lengths.values()))
    rows = []
    for i in range(n_evals):
        values = []
        for name, recs in named_histories:
            inc = recs[i].get("incumbent")
            if inc is None:
                raise AggregationError(
                    f"{name}: no incumbent at eval {recs[i].get('eval', i + 1)} "
                    "(all evaluations failed so far)"
                )
            values.append(inc)
        med = float(np.median(values))
        mad = float(np.median(np.abs(np.asarray(values) - med)))
        rows.append(
            {
                "eval": named_histories[0][1][i]["eval"],
                "iteration": named_histories[0][1][i]["iteration"],
                "median_incumbent": med,
                "mad_incumbent": mad,
            }
        )
    return rows


def _write_convergence(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["eval", "iteration", "median_incumbent", "mad_incumbent"]
        )
        writer.writeheader()
        writer.writerows(rows)


def run_experiment(config: RunConfig) -> dict:
    """Execute all replicates, write the results bundle, return the summary."""
    problem = _build_problem(config)  # validates the problem before any compute
    _campaign_config(config, problem, 0)  # and the campaign settings
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)

    results: list[dict] = []
    if config.workers > 1 and config.replicates > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=config.workers) as pool:
            futures = {
                pool.submit(_run_replicate, config, r): r for r in range(config.replicates)
            }
            for fut in concurrent.futures.as_completed(futures):
                r = futures[fut]
                err = fut.exception()
                if err is not None:
                    results.append({"replicate": r, "error": f"{type(err).__name__}: {err}"})
                else:
                    results.append(fut.result())
    else:
        for r in range(config.replicates):
            try:
                results.append(_run_replicate(config, r))
            except Exception as err:  # noqa: BLE001 - replicate isolation
                results.append({"replicate": r, "error": f"{type(err).__name__}: {err}"})
    results.sort(key=lambda d: d["replicate"])
    completed = [d for d in results if d.get("error") is None]

    aggregation_error = None
    if completed:
        named = []
        for d in completed:
            path = out / d["history"]
            with open(path) as fh:
                named.append((d["history"], [json.loads(line) for line in fh]))
        try:
            _write_convergence(aggregate(named), out / "convergence.csv")
        except AggregationError as err:
            aggregation_error = str(err)

    summary = {
        "config": {**dataclasses.asdict(config)},
        "replicates": results,
        "completed": len(completed),
        "failed": config.replicates - len(completed),
        "final_incumbents": [d["final_incumbent"] for d in completed],
    }
    if aggregation_error is not None:
        summary["aggregation_error"] = aggregation_error
    finals = [d["final_incumbent"] for d in completed if d["final_incumbent"] is not None]
    if finals:
        finals = np.asarray(finals, dtype=float)
        med = float(np.median(finals))
        summary["median_final_incumbent"] = med
        summary["mad_final_incumbent"] = float(np.median(np.abs(finals - med)))
    if problem.tabular is not None:
        best_pt, best_val = exhaustive_oracle(problem.tabular)
        hits = sum(
            1
            for d in completed
            if d["final_incumbent"] is not None
            and abs(d["final_incumbent"] - best_val) <= 1e-9
        )
        summary["oracle_best"] = best_val
        summary["oracle_tuple"] = list(best_pt.t)
        summary["successes"] = hits
        summary["success_line"] = (
            f"exact optimum found in {hits} of {len(completed)} replicates"
        )
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    return summary


# -- argparse front end ------------------------------------------------------


def _cmd_run(args) -> int:
    overrides = {
        "out": args.out,
        "replicates": args.replicates,
        "iterations": args.iterations,
        "n0": args.n0,
        "workers": args.workers,
        "noise_sd": args.noise_sd,
    }
    if args.noisy:
        overrides["noisy"] = True
    try:
        config = load_config(args.config, seed=args.seed, overrides=overrides)
        summary = run_experiment(config)
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    med = summary.get("median_final_incumbent")
    print(f"completed {summary['completed']}/{len(summary['replicates'])} replicates")
    if med is not None:
        print(f"median final incumbent: {med:.6g} (MAD {summary['mad_final_incumbent']:.6g})")
    if "success_line" in summary:
        print(summary["success_line"])
    print(f"results in {config.out}/")
    return 0 if summary["failed"] == 0 else 1


def _cmd_aggregate(args) -> int:
    named = []
    try:
        for path in args.histories:
            with open(path) as fh:
                named.append((str(path), [json.loads(line) for line in fh if line.strip()]))
        rows = aggregate(named)
    except (AggregationError, OSError, json.JSONDecodeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    _write_convergence(rows, args.out)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def _cmd_oracle(args) -> int:
    try:
        if args.config:
            config = load_config(args.config, seed=0)
            problem = _build_problem(config)
            tab = problem.tabular
        else:
            tab = load_tabular(
                args.file, factors=args.factors.split(","), response=args.response
            )
        if tab is None:
            raise ValueError("oracle requires a tabular problem")
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    best_pt, best_val = exhaustive_oracle(tab)
    lo, hi = tab.response_range
    labels = [spec.levels[i - 1] for spec, i in zip(tab.space.qual, best_pt.t)]
    print(f"{tab.n_rows} rows, responses in [{lo:.6g}, {hi:.6g}]")
    print(f"best value {best_val:.6g} at " + ", ".join(
        f"{spec.name}={lab}" for spec, lab in zip(tab.space.qual, labels)
    ))
    return 0


def _cmd_latents(args) -> int:
    try:
        rows = latents_from_model_file(args.model)
    except (OSError, KeyError, json.JSONDecodeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    if args.out:
        write_latents_csv(rows, args.out)
        print(f"wrote {len(rows)} rows to {args.out}")
    else:
        for factor, level, z1, z2 in rows:
            print(f"{factor},{level},{z1!r},{z2!r}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lvgpbo",
        description="Bayesian optimization over mixed design spaces with a "
        "latent-variable GP surrogate",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a configured experiment")
    p_run.add_argument("--config", required=True, help="JSON config file")
    p_run.add_argument("--seed", required=True, type=int, help="root seed")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.add_argument("--replicates", type=int, default=None)
    p_run.add_argument("--iterations", type=int, default=None)
    p_run.add_argument("--n0", type=int, default=None)
    p_run.add_argument("--workers", type=int, default=None)
    p_run.add_argument("--noisy", action="store_true", default=False)
    p_run.add_argument("--noise-sd", dest="noise_sd", type=float, default=None)
    p_run.set_defaults(fn=_cmd_run)

    p_agg = sub.add_parser("aggregate", help="re-aggregate history files")
    p_agg.add_argument("histories", nargs="+", help="replicate .jsonl files")
    p_agg.add_argument("--out", required=True, help="output CSV path")
    p_agg.set_defaults(fn=_cmd_aggregate)

    p_oracle = sub.add_parser("oracle", help="exhaustive scan of a tabular problem")
    p_oracle.add_argument("--config", default=None, help="JSON config with a tabular problem")
    p_oracle.add_argument("--file", default=None, help="tabular CSV file")
    p_oracle.add_argument("--factors", default=None, help="comma-separated factor columns")
    p_oracle.add_argument("--response", default="response", help="response column name")
    p_oracle.set_defaults(fn=_cmd_oracle)

    p_lat = sub.add_parser("latents", help="re-export latents from a saved model")
    p_lat.add_argument("--model", required=True, help="model_###.json file")
    p_lat.add_argument("--out", default=None, help="output CSV (stdout if omitted)")
    p_lat.set_defaults(fn=_cmd_latents)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "oracle" and not args.config and not (args.file and args.factors):
        print("error: oracle needs --config or --file plus --factors", file=sys.stderr)
        return 2
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
