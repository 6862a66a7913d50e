"""Experiment harness: seeded repetitions with summaries written to disk.

An experiment is (scenario config, learner config, horizon, repetitions).
Run i uses seed base_seed + i, so a config reruns to byte-identical output
files. Runs execute serially by default; set FAIR_EXPERTS_THREADS to an
integer above 1 to fan repetitions out over a thread pool (results keep
their run order either way).
"""

from __future__ import annotations

import copy
import csv
import dataclasses
import json
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Mapping

import numpy as np

from .adversaries import make_scenario
from .learners import make_learner
from .metrics import METRICS, MetricReport, aggregate_reports, build_report
from .protocol import run
from .types import ConfigError, Trace

DEFAULT_BASE_SEED = 12345

RETAIN_MODES = ("summary", "full")
WORLD_MODES = ("realized", "two_pass")
TRACE_FORMATS = ("jsonl", "csv")

_CONFIG_FIELDS = (
    "scenario",
    "learner",
    "T",
    "epsilon",
    "alpha",
    "reps",
    "base_seed",
    "retain",
    "shifting_K",
    "world_mode",
    "out_dir",
    "formats",
    "keep_traces",
)


@dataclasses.dataclass
class ExperimentConfig:
    scenario: dict
    learner: dict
    T: int
    epsilon: float = 0.1
    alpha: float = 0.3
    reps: int = 1
    base_seed: int = DEFAULT_BASE_SEED
    retain: str = "summary"
    shifting_K: int | None = None
    world_mode: str = "realized"
    out_dir: str | None = None
    formats: tuple = TRACE_FORMATS
    keep_traces: bool = False

    def validate(self) -> None:
        if self.T < 0:
            raise ConfigError(f"T must be >= 0, got {self.T}")
        if self.reps < 1:
            raise ConfigError(f"reps must be >= 1, got {self.reps}")
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigError(f"epsilon must lie in (0, 1), got {self.epsilon!r}")
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in (0, 1], got {self.alpha!r}")
        if self.retain not in RETAIN_MODES:
            raise ConfigError(f"retain must be one of {RETAIN_MODES}, got {self.retain!r}")
        if self.world_mode not in WORLD_MODES:
            raise ConfigError(f"world_mode must be one of {WORLD_MODES}, got {self.world_mode!r}")
        if self.shifting_K is not None and self.shifting_K < 0:
            raise ConfigError(f"shifting_K must be >= 0, got {self.shifting_K}")
        bad = [f for f in self.formats if f not in TRACE_FORMATS]
        if bad:
            raise ConfigError(f"unknown trace formats {bad}, expected subset of {TRACE_FORMATS}")

    @classmethod
    def from_dict(cls, data: Mapping) -> "ExperimentConfig":
        extra = set(data) - set(_CONFIG_FIELDS)
        if extra:
            raise ConfigError(f"unknown experiment config keys: {sorted(extra)}")
        for key in ("scenario", "learner", "T"):
            if key not in data:
                raise ConfigError(f"experiment config needs {key!r}")
        kwargs = dict(data)
        kwargs["scenario"] = dict(kwargs["scenario"])
        kwargs["learner"] = dict(kwargs["learner"])
        if "formats" in kwargs:
            kwargs["formats"] = tuple(kwargs["formats"])
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["formats"] = list(self.formats)
        return out


def _resolved_learner_config(
    learner_cfg: Mapping, T: int, epsilon: float, alpha: float
) -> dict:
    """Echo the learner config with every tuning default filled in."""
    learner = make_learner(learner_cfg, T=T, epsilon=epsilon, alpha=alpha)
    out = {"kind": learner.kind, "eta": learner.eta}
    if hasattr(learner, "grid_m"):
        out["grid_m"] = learner.grid_m
    if hasattr(learner, "rho"):
        out["rho"] = learner.rho
    return out


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _dump_json(path: Path, payload) -> None:
    path.write_text(
        json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n"
    )


def _thread_count() -> int:
    raw = os.environ.get("FAIR_EXPERTS_THREADS", "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"FAIR_EXPERTS_THREADS must be an integer, got {raw!r}")
    return max(n, 1)


@dataclasses.dataclass
class ExperimentResult:
    config: dict
    reports: list
    aggregate: dict
    traces: list | None
    paths: dict


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _summary_rows(
    reports: list[MetricReport], aggregate: dict, with_shifting: bool
) -> tuple[list[str], list[list[str]]]:
    labels = list(reports[0].learner["eer"].keys())
    header = ["run", "seed", "world"]
    for metric in METRICS:
        header += [f"{metric}_{lab}" for lab in labels] + [f"{metric}_gap"]
    header += ["regret", "min_approx_regret"]
    if with_shifting:
        header += ["shifting_approx_regret", "comparator_switches"]
    rows = []
    for i, rep in enumerate(reports):
        row = [str(i), str(rep.seed), str(rep.scenario_info.get("world", ""))]
        for metric in METRICS:
            row += [_csv_cell(rep.learner[metric][lab]) for lab in labels]
            row.append(_csv_cell(rep.gaps[metric]["gap"]))
        row.append(_csv_cell(rep.regret))
        row.append(_csv_cell(rep.min_approx_regret))
        if with_shifting:
            if rep.shifting is None:
                row += ["", ""]
            else:
                row.append(_csv_cell(rep.shifting["approx_regret"]))
                row.append(str(rep.shifting["switches"]))
        rows.append(row)
    worlds = aggregate.get("worlds", {})
    world_cell = "|".join(f"{w}={worlds[w]}" for w in sorted(worlds))
    agg_row = ["mean", "", world_cell]
    for metric in METRICS:
        for lab in labels:
            agg_row.append(_csv_cell(aggregate["learner_metrics"][metric][lab]["mean"]))
        agg_row.append(_csv_cell(aggregate["gaps"][metric]["gap_of_mean_rates"]))
    agg_row.append(_csv_cell(aggregate["regret"]["mean"]))
    min_apx = aggregate.get("min_approx_regret")
    agg_row.append(_csv_cell(min_apx["mean"] if min_apx else None))
    if with_shifting:
        sh = aggregate.get("shifting_approx_regret")
        agg_row.append(_csv_cell(sh["mean"] if sh else None))
        agg_row.append("")
    rows.append(agg_row)
    return header, rows


def _majority_world(reports: list[MetricReport]) -> str:
    counts: dict[str, int] = {}
    for rep in reports:
        w = rep.scenario_info.get("world")
        if w is not None:
            counts[w] = counts.get(w, 0) + 1
    if not counts:
        raise ConfigError("two_pass world mode needs a scenario that reports a world")
    # ties go to the alphabetically first world, for determinism
    best = max(sorted(counts), key=lambda w: counts[w])
    return best


def run_experiment(config: ExperimentConfig | Mapping) -> ExperimentResult:
    """Run all repetitions, aggregate, and (optionally) write the out_dir
    layout: config.json, report.json, summary.csv, and per-run traces under
    runs/ when retain is "full"."""
    if not isinstance(config, ExperimentConfig):
        config = ExperimentConfig.from_dict(config)
    config.validate()
    scenario = make_scenario(config.scenario)
    resolved = {
        "scenario": scenario.config(),
        "learner": _resolved_learner_config(
            config.learner, config.T, config.epsilon, config.alpha
        ),
        "T": config.T,
        "epsilon": config.epsilon,
        "alpha": config.alpha,
        "reps": config.reps,
        "base_seed": config.base_seed,
        "retain": config.retain,
        "shifting_K": config.shifting_K,
        "world_mode": config.world_mode,
        "formats": list(config.formats),
    }

    def one_run(i: int, scn, retain: str) -> tuple[MetricReport, Trace]:
        learner = make_learner(
            config.learner, T=config.T, epsilon=config.epsilon, alpha=config.alpha
        )
        trace = run(learner, scn, config.T, config.base_seed + i, retain=retain)
        return build_report(trace, config.epsilon, config.shifting_K), trace

    threads = _thread_count()

    def sweep(scn, retain: str) -> list[tuple[MetricReport, Trace]]:
        indices = range(config.reps)
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                return list(pool.map(lambda i: one_run(i, scn, retain), indices))
        return [one_run(i, scn, retain) for i in indices]

    if config.world_mode == "two_pass":
        if scenario.kind not in ("t1", "t2"):
            raise ConfigError(
                f"two_pass world mode applies to t1/t2 scenarios, not {scenario.kind!r}"
            )
        pre = [rep for rep, _ in sweep(scenario, "summary")]
        world = _majority_world(pre)
        scenario = dataclasses.replace(scenario, forced_world=world)
        resolved["scenario"] = scenario.config()

    pairs = sweep(scenario, config.retain)
    reports = [rep for rep, _ in pairs]
    write_runs = config.out_dir is not None and config.retain == "full"
    traces = [tr for _, tr in pairs] if (config.keep_traces or write_runs) else None
    aggregate = aggregate_reports(reports)

    paths: dict = {}
    if config.out_dir is not None:
        out = Path(config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths["config"] = out / "config.json"
        _dump_json(paths["config"], resolved)
        paths["report"] = out / "report.json"
        _dump_json(
            paths["report"],
            {
                "config": resolved,
                "aggregate": aggregate,
                "runs": [rep.to_dict() for rep in reports],
            },
        )
        header, rows = _summary_rows(reports, aggregate, config.shifting_K is not None)
        paths["summary"] = out / "summary.csv"
        with open(paths["summary"], "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
        if write_runs:
            runs_dir = out / "runs"
            runs_dir.mkdir(exist_ok=True)
            paths["runs"] = []
            for i, tr in enumerate(traces):
                stem = runs_dir / f"run_{i:03d}"
                if "jsonl" in config.formats:
                    tr.to_jsonl(stem.with_suffix(".jsonl"))
                    paths["runs"].append(stem.with_suffix(".jsonl"))
                if "csv" in config.formats:
                    tr.to_csv(stem.with_suffix(".csv"))
                    paths["runs"].append(stem.with_suffix(".csv"))
    if not config.keep_traces:
        traces = None

    return ExperimentResult(
        config=resolved,
        reports=reports,
        aggregate=aggregate,
        traces=traces,
        paths=paths,
    )


# Named experiment presets. Horizons and repetition counts are sized so each
# preset demonstrates its effect comfortably above the noise floor while
# finishing in seconds.
PRESETS: dict[str, dict] = {
    "theorem1": {
        "scenario": {"kind": "t1", "epsilon": 0.01},
        "learner": {"kind": "single_mw", "eta": 0.01},
        "T": 200_000,
        "epsilon": 0.01,
        "reps": 20,
        "retain": "summary",
    },
    "theorem2": {
        "scenario": {"kind": "t2", "b": 0.25, "epsilon": 0.01},
        "learner": {"kind": "single_mw", "eta": 0.005},
        "T": 4_000_000,
        "epsilon": 0.01,
        "reps": 10,
        "retain": "summary",
    },
    "theorem3": {
        "scenario": {
            "kind": "t3_synthetic",
            "rates": (0.1, 0.3, 0.5, 0.7),
            "groups": 2,
            "schedule": "blocks",
            "kappa": 0.0,
        },
        "learner": {"kind": "per_group_mw", "eta": 0.05},
        "T": 50_000,
        "epsilon": 0.1,
        "alpha": 0.3,
        "reps": 20,
        "retain": "summary",
    },
    "theorem4": {
        "scenario": {"kind": "t4"},
        "learner": {"kind": "single_mw", "eta": 0.1},
        "T": 100_000,
        "reps": 1,
        "retain": "full",
    },
    "theorem5": {
        "scenario": {"kind": "t5"},
        "learner": {"kind": "per_group_fixed_share", "eta": 0.05, "switches": 2},
        "T": 100_000,
        "reps": 1,
        "retain": "full",
        "shifting_K": 2,
    },
}


def preset_names() -> tuple:
    return tuple(sorted(PRESETS))


def get_preset(name: str, **overrides) -> ExperimentConfig:
    """A fresh config for a named preset; keyword overrides replace fields."""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}, expected one of {preset_names()}")
    data = copy.deepcopy(PRESETS[name])
    data.update(overrides)
    return ExperimentConfig.from_dict(data)
