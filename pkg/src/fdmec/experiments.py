"""Monte-Carlo sweeps over channel draws, written as deterministic CSV files.

Every (sweep point, seed, scheme) triple is one independent solve. Draws
depend only on the seed, so schemes and sweep points see identical users.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baselines import BaselineKind, solve_scheme
from .bcd import STATUS_INFEASIBLE, SolveSettings
from .errors import ConfigurationError
from .units import ScenarioSpec, SystemConfig, config_from_dict, generate_scenario, scenario_from_dict

KINDS = ("pairing", "convergence", "sweep_T", "sweep_F")
SCHEMES = ("proposed",) + tuple(k.value for k in BaselineKind)
SWEEP_FIELD = {"sweep_T": "slot_duration_s", "sweep_F": "edge_capacity_cycles",
               "convergence": "edge_capacity_cycles", "pairing": "pairing_strategy"}
Z95 = 1.959963984540054

RESULT_COLUMNS = [
    ("experiment", "experiment kind"),
    ("sweep_param", "name of the swept field"),
    ("sweep_value", "value of the swept field at this row"),
    ("seed", "scenario RNG seed; rows with equal seed share the same users"),
    ("scheme", "proposed, oma_fd or noma_hd"),
    ("status", "converged or iteration-limit"),
    ("total_energy_j", "objective: BS broadcast + BS compute + user offload + local - harvested (J)"),
    ("outer_iterations", "alternating rounds over the q, t and d blocks"),
    ("bs_broadcast_j", "sum of q_i t_i (J)"),
    ("bs_compute_j", "edge computing energy (J)"),
    ("user_offload_j", "sum of uplink transmit energy (J)"),
    ("user_local_j", "sum of local computing energy (J)"),
    ("user_harvest_j", "sum of harvested energy (J)"),
    ("max_violation", "worst normalised constraint violation, negative when strictly feasible"),
]
INFEASIBLE_COLUMNS = [
    ("experiment", "experiment kind"),
    ("sweep_param", "name of the swept field"),
    ("sweep_value", "value of the swept field"),
    ("seed", "scenario RNG seed"),
    ("scheme", "scheme tag"),
    ("status", "always infeasible"),
    ("infeasible_family", "constraint family named by the certificate or feasibility search"),
    ("max_violation", "normalised violation reported with the certificate"),
]
SUMMARY_COLUMNS = [
    ("sweep_param", "name of the swept field"),
    ("sweep_value", "value of the swept field"),
    ("scheme", "scheme tag"),
    ("n_solved", "seeds with a feasible solution"),
    ("n_infeasible", "seeds reported infeasible (excluded from means)"),
    ("mean_energy_j", "mean total energy over solved seeds"),
    ("ci95_half_width_j", "1.96 * sample std / sqrt(n_solved)"),
    ("n_paired", "seeds solved by every scheme at this sweep value"),
    ("paired_mean_energy_j", "mean over the paired seeds"),
    ("paired_ci95_half_width_j", "normal-approximation half width over the paired seeds"),
]
TRACE_COLUMNS = [
    ("sweep_param", "name of the swept field"),
    ("sweep_value", "value of the swept field"),
    ("seed", "scenario RNG seed"),
    ("scheme", "scheme tag"),
    ("iteration", "0 is the feasible starting point"),
    ("objective_j", "total energy after this round (J)"),
    ("normalized", "objective divided by its value at iteration 0"),
]


def fmt(value) -> str:
    """Fixed 12-significant-digit rendering used for every float written."""
    if value is None or value == "":
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        return f"{v:.12g}"
    return str(value)


@dataclass
class ExperimentSpec:
    kind: str
    grid: list
    seeds: int = 50
    first_seed: int = 0
    scenario: ScenarioSpec = field(default_factory=ScenarioSpec)
    system: SystemConfig = field(default_factory=SystemConfig)
    schemes: tuple = ("proposed",)
    solver: dict = field(default_factory=dict)
    output_dir: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown experiment kind {self.kind!r}")
        if self.seeds < 1:
            raise ConfigurationError("seed count must be at least 1")
        if not self.grid:
            raise ConfigurationError("sweep grid must be nonempty")
        self.grid = list(self.grid)
        if self.kind != "pairing":
            values = [float(v) for v in self.grid]
            if any(b <= a for a, b in zip(values, values[1:])):
                raise ConfigurationError("sweep grid must be strictly increasing")
            self.grid = values
        else:
            bad = [v for v in self.grid if v not in ("SW", "SM", "SS")]
            if bad:
                raise ConfigurationError(f"unknown pairing strategies {bad}")
        self.schemes = tuple(self.schemes)
        bad = [s for s in self.schemes if s not in SCHEMES]
        if bad or not self.schemes:
            raise ConfigurationError(f"schemes must be drawn from {SCHEMES}")
        try:
            self.settings()
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"bad solver settings: {exc}") from exc

    @property
    def sweep_param(self) -> str:
        return SWEEP_FIELD[self.kind]

    def settings(self) -> SolveSettings:
        return SolveSettings(**self.solver)

    def point(self, value):
        """Scenario and config at one sweep value."""
        if self.kind == "pairing":
            return self.scenario.replace(pairing_strategy=value), self.system
        return self.scenario, self.system.replace(**{self.sweep_param: float(value)})

    @classmethod
    def from_dict(cls, doc: dict) -> ExperimentSpec:
        if not isinstance(doc, dict):
            raise ConfigurationError("experiment spec must be a JSON object")
        known = {"kind", "grid", "seeds", "first_seed", "scenario", "system", "schemes", "solver", "output_dir"}
        unknown = set(doc) - known
        if unknown:
            raise ConfigurationError(f"unknown experiment fields: {sorted(unknown)}")
        if "kind" not in doc or "grid" not in doc:
            raise ConfigurationError("experiment spec needs 'kind' and 'grid'")
        return cls(
            kind=doc["kind"], grid=doc["grid"], seeds=int(doc.get("seeds", 50)),
            first_seed=int(doc.get("first_seed", 0)),
            scenario=scenario_from_dict(doc.get("scenario")),
            system=config_from_dict(doc.get("system")),
            schemes=tuple(doc.get("schemes", ("proposed",))),
            solver=dict(doc.get("solver", {})),
            output_dir=doc.get("output_dir"),
        )

    @classmethod
    def load(cls, path) -> ExperimentSpec:
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read {path}: {exc}") from exc
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "grid": self.grid, "seeds": self.seeds, "first_seed": self.first_seed,
                "scenario": dataclasses.asdict(self.scenario), "system": dataclasses.asdict(self.system),
                "schemes": list(self.schemes), "solver": self.solver}


@dataclass(frozen=True)
class Task:
    point_index: int
    value: object
    seed: int
    scheme: str


@dataclass
class Outcome:
    task: Task
    status: str
    row: dict
    trace: list


def _run_task(args) -> Outcome:
    spec, task = args
    scenario, cfg = spec.point(task.value)
    users, partition = generate_scenario(scenario.replace(rng_seed=task.seed), cfg)
    report = solve_scheme(task.scheme, users, partition, cfg, spec.settings())
    row = report.summary_row()
    row["infeasible_family"] = report.infeasible_family or ""
    return Outcome(task, report.status, row, list(report.trace))


def tasks(spec: ExperimentSpec) -> list[Task]:
    out = []
    for p, value in enumerate(spec.grid):
        for seed in range(spec.first_seed, spec.first_seed + spec.seeds):
            for scheme in spec.schemes:
                out.append(Task(p, value, seed, scheme))
    return out


def run_tasks(spec: ExperimentSpec, workers=1, progress=None) -> list[Outcome]:
    todo = tasks(spec)
    jobs = [(spec, t) for t in todo]
    results = []
    if workers <= 1:
        for k, job in enumerate(jobs, 1):
            results.append(_run_task(job))
            if progress:
                progress(k, len(jobs))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for k, outcome in enumerate(pool.map(_run_task, jobs, chunksize=1), 1):
                results.append(outcome)
                if progress:
                    progress(k, len(jobs))
    return results


def _mean_ci(values):
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return math.nan, math.nan
    if values.size == 1:
        return float(values[0]), math.nan
    return float(values.mean()), Z95 * float(values.std(ddof=1)) / math.sqrt(values.size)


def summarize(spec: ExperimentSpec, outcomes: list[Outcome]) -> list[dict]:
    rows = []
    for p, value in enumerate(spec.grid):
        at = [o for o in outcomes if o.task.point_index == p]
        solved = {s: {o.task.seed: o.row["total_energy_j"] for o in at
                      if o.task.scheme == s and o.status != STATUS_INFEASIBLE} for s in spec.schemes}
        paired = set.intersection(*(set(v) for v in solved.values()))
        for s in spec.schemes:
            energies = [solved[s][k] for k in sorted(solved[s])]
            mean, half = _mean_ci(energies)
            pmean, phalf = _mean_ci([solved[s][k] for k in sorted(paired)])
            rows.append({
                "sweep_param": spec.sweep_param, "sweep_value": value, "scheme": s,
                "n_solved": len(energies), "n_infeasible": spec.seeds - len(energies),
                "mean_energy_j": mean, "ci95_half_width_j": half,
                "n_paired": len(paired), "paired_mean_energy_j": pmean,
                "paired_ci95_half_width_j": phalf,
            })
    return rows


def _write_csv(path: Path, columns, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([c for c, _ in columns])
    for r in rows:
        writer.writerow([fmt(r.get(c, "")) for c, _ in columns])
    path.write_text(buf.getvalue())


def write_outputs(spec: ExperimentSpec, outcomes: list[Outcome], out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    solved, failed, traces = [], [], []
    for o in outcomes:
        base = {"experiment": spec.kind, "sweep_param": spec.sweep_param,
                "sweep_value": o.task.value, "seed": o.task.seed, "scheme": o.task.scheme,
                "status": o.status}
        if o.status == STATUS_INFEASIBLE:
            failed.append({**base, "infeasible_family": o.row["infeasible_family"],
                           "max_violation": o.row["max_violation"]})
            continue
        solved.append({**base, **{k: v for k, v in o.row.items() if k not in ("scheme", "status")}})
        if spec.kind == "convergence":
            first = o.trace[0]
            for it, v in enumerate(o.trace):
                traces.append({"sweep_param": spec.sweep_param, "sweep_value": o.task.value,
                               "seed": o.task.seed, "scheme": o.task.scheme, "iteration": it,
                               "objective_j": v, "normalized": v / first if first else math.nan})
    summary = summarize(spec, outcomes)
    files = {"results.csv": RESULT_COLUMNS, "infeasible.csv": INFEASIBLE_COLUMNS,
             "summary.csv": SUMMARY_COLUMNS}
    _write_csv(out / "results.csv", RESULT_COLUMNS, solved)
    _write_csv(out / "infeasible.csv", INFEASIBLE_COLUMNS, failed)
    _write_csv(out / "summary.csv", SUMMARY_COLUMNS, summary)
    if spec.kind == "convergence":
        files["traces.csv"] = TRACE_COLUMNS
        _write_csv(out / "traces.csv", TRACE_COLUMNS, traces)
    schema = {name: {"columns": [{"name": c, "description": d} for c, d in cols],
                     "float_format": "12 significant digits"} for name, cols in files.items()}
    (out / "schema.json").write_text(json.dumps(schema, indent=2, sort_keys=True) + "\n")
    meta = {"spec": spec.to_dict(), "tasks": len(outcomes), "solved": len(solved),
            "infeasible": len(failed), "ci": "normal approximation, 95%"}
    (out / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return {"solved": solved, "infeasible": failed, "summary": summary, "traces": traces}


def run_experiment(spec: ExperimentSpec, out_dir=None, workers=1, progress=None) -> dict:
    out_dir = out_dir or spec.output_dir
    if out_dir is None:
        raise ConfigurationError("no output directory given")
    outcomes = run_tasks(spec, workers, progress)
    return write_outputs(spec, outcomes, out_dir)


def emit_convergence_trace(seed, edge_capacities, out_path, scenario=None, system=None,
                           scheme="proposed", solver=None) -> list[dict]:
    """Per-iteration objective for one draw at several edge capacities."""
    spec = ExperimentSpec("convergence", list(edge_capacities), seeds=1, first_seed=int(seed),
                          scenario=scenario or ScenarioSpec(), system=system or SystemConfig(),
                          schemes=(scheme,), solver=dict(solver or {}))
    rows = []
    for o in run_tasks(spec):
        if o.status == STATUS_INFEASIBLE:
            continue
        first = o.trace[0]
        for it, v in enumerate(o.trace):
            rows.append({"sweep_param": spec.sweep_param, "sweep_value": o.task.value, "seed": o.task.seed,
                         "scheme": scheme, "iteration": it, "objective_j": v, "normalized": v / first})
    _write_csv(Path(out_path), TRACE_COLUMNS, rows)
    return rows


def stderr_progress(done, total):
    if done == total or done % max(1, total // 20) == 0:
        print(f"[{done}/{total}]", file=sys.stderr, flush=True)
