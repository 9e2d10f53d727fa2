"""Configuration-driven experiment runner.

A single JSON config describes one experiment: task (projection or
whitening) x variant (iteration-free or exact inverse) x mode (online
sampling or offline averaged dynamics), plus problem preset, trial
count, seed, horizon and checkpoints. Each trial gets its own random
stream derived from (seed, trial index), so results do not depend on
execution order or worker count, and the run is reproducible bit for
bit (wall-clock fields aside) within one implementation.
"""

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import data, metrics, offline
from .data import (
    Constant,
    CovarianceSpec,
    FIXED_ROTATION_STREAM,
    InverseTime,
    PiecewiseConstant,
    PRESETS,
    RngStream,
)
from .errors import (
    ConfigParseError,
    ConfigValidationError,
    DegenerateDiagonalError,
    LinalgError,
    TrialDivergedError,
)
from .model import ModelState, Task, Variant, online_step

_SAMPLE_CHUNK = 1024

_KNOWN_KEYS = {
    "task", "variant", "mode", "preset", "n", "k", "lambda", "tau",
    "schedule", "spectrum", "m_init", "w_init_std", "t_max", "checkpoints",
    "trials", "seed", "fixed_rotation", "workers", "output_path",
}
_PRESET_FIXED_KEYS = {
    "n", "k", "lambda", "tau", "schedule", "spectrum", "m_init", "w_init_std",
}
_DEFAULT_T_MAX = {"online": 10000, "offline": 1000}


@dataclass
class ExperimentConfig:
    """Fully resolved experiment description (preset constants expanded)."""

    task: Task
    variant: Variant
    mode: str
    preset: str
    n: int
    k: int
    lam: np.ndarray
    tau: float
    schedule: object
    spectrum: np.ndarray
    m_init: float
    w_init_std: float
    t_max: int
    checkpoints: tuple
    trials: int
    seed: int
    fixed_rotation: bool = False
    workers: int = 1
    output_path: str = None

    def eval_points(self):
        return tuple(sorted(set(self.checkpoints) | {self.t_max}))

    def to_json_dict(self):
        return {
            "task": self.task.value,
            "variant": self.variant.value,
            "mode": self.mode,
            "preset": self.preset,
            "n": self.n,
            "k": self.k,
            "lambda": list(self.lam),
            "tau": self.tau,
            "schedule": _schedule_to_json(self.schedule),
            "spectrum": list(self.spectrum),
            "m_init": self.m_init,
            "w_init_std": self.w_init_std,
            "t_max": self.t_max,
            "checkpoints": list(self.checkpoints),
            "trials": self.trials,
            "seed": self.seed,
            "fixed_rotation": self.fixed_rotation,
            "workers": self.workers,
            "output_path": self.output_path,
        }


@dataclass
class TrialOutcome:
    trial: int
    status: str                  # "completed" or "diverged"
    rows: list                   # (t, e_pro) pairs, completed trials only
    diverged_at: int = None
    wall_clock_s: float = 0.0


@dataclass
class SummaryReport:
    """Experiment result: per-checkpoint rows, medians, per-trial status."""

    config: ExperimentConfig
    rows: list                   # (t, trial, e_pro), sorted
    medians: dict                # t -> median e_pro over completed trials
    trials: list                 # TrialOutcome, by trial index
    diverged: int

    def comparable(self):
        """Everything except wall-clock, for reproducibility comparisons."""
        return {
            "config": self.config.to_json_dict(),
            "rows": self.rows,
            "medians": sorted(self.medians.items()),
            "status": [(t.trial, t.status, t.diverged_at) for t in self.trials],
        }

    def to_json_dict(self):
        return {
            "config": self.config.to_json_dict(),
            "rows": [
                {"t": t, "trial": trial, "e_pro": e} for t, trial, e in self.rows
            ],
            "medians": [
                {"t": t, "e_pro": e} for t, e in sorted(self.medians.items())
            ],
            "trials": [
                {
                    "trial": t.trial,
                    "status": t.status,
                    "diverged_at": t.diverged_at,
                    "wall_clock_s": t.wall_clock_s,
                }
                for t in self.trials
            ],
            "diverged": self.diverged,
        }


def _schedule_to_json(schedule):
    if isinstance(schedule, Constant):
        return {"kind": "constant", "alpha": schedule.alpha}
    if isinstance(schedule, InverseTime):
        return {"kind": "inverse_time", "numerator": schedule.numerator,
                "offset": schedule.offset}
    if isinstance(schedule, PiecewiseConstant):
        pieces = [[None if math.isinf(t) else t, a] for t, a in schedule.pieces]
        return {"kind": "piecewise", "pieces": pieces}
    raise ConfigValidationError(f"unserializable schedule {schedule!r}")


def _schedule_from_json(obj):
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ConfigValidationError("schedule must be an object with a 'kind'")
    kind = obj["kind"]
    try:
        if kind == "constant":
            return Constant(float(obj["alpha"]))
        if kind == "inverse_time":
            return InverseTime(float(obj["numerator"]), float(obj["offset"]))
        if kind == "piecewise":
            pieces = tuple(
                (math.inf if t is None else float(t), float(a))
                for t, a in obj["pieces"])
            return PiecewiseConstant(pieces)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigValidationError(f"bad schedule: {exc}") from exc
    raise ConfigValidationError(f"unknown schedule kind '{kind}'")


def _require(condition, message):
    if not condition:
        raise ConfigValidationError(message)


def parse_config(text):
    """Parse and validate a JSON experiment config.

    Unknown keys are rejected by name; preset configs reject explicit
    overrides of preset-determined fields; custom configs must spell out
    the whole problem.
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigParseError(f"invalid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigParseError("config must be a JSON object")
    for key in raw:
        if key not in _KNOWN_KEYS:
            raise ConfigParseError(f"unknown key '{key}'")

    for req in ("task", "variant", "mode", "preset"):
        if req not in raw:
            raise ConfigValidationError(f"missing required key '{req}'")
    try:
        task = Task(raw["task"])
    except ValueError:
        raise ConfigValidationError(f"task must be one of psp|psw, got {raw['task']!r}")
    try:
        variant = Variant(raw["variant"])
    except ValueError:
        raise ConfigValidationError(
            f"variant must be iteration_free|exact, got {raw['variant']!r}")
    mode = raw["mode"]
    _require(mode in ("online", "offline"), f"mode must be online|offline, got {mode!r}")
    preset_name = raw["preset"]
    _require(preset_name in ("small", "large", "custom"),
             f"preset must be small|large|custom, got {preset_name!r}")

    if preset_name in PRESETS:
        clash = _PRESET_FIXED_KEYS & raw.keys()
        _require(not clash,
                 f"keys fixed by preset '{preset_name}': {sorted(clash)}")
        preset = PRESETS[preset_name]()
        n, k = preset.n, preset.k
        lam = preset.lam
        spectrum = preset.spectrum
        tau = preset.tau[task]
        m_init = preset.m_init[task]
        w_init_std = preset.w_init_std
        schedule = preset.schedule(task, mode)
    else:
        missing = {"n", "k", "lambda", "tau", "schedule", "spectrum"} - raw.keys()
        _require(not missing, f"custom preset requires keys: {sorted(missing)}")
        n = int(raw["n"])
        k = int(raw["k"])
        lam = np.asarray(raw["lambda"], dtype=float)
        spectrum = np.asarray(raw["spectrum"], dtype=float)
        tau = float(raw["tau"])
        schedule = _schedule_from_json(raw["schedule"])
        m_init = float(raw.get("m_init", 1.0))
        w_init_std = float(raw.get("w_init_std", 1.0 / math.sqrt(n)))
        _require(1 <= k < n, "require 1 <= k < n")
        _require(lam.shape == (k,), "lambda must have length k")
        _require((lam > 0).all() and (np.diff(lam) < 0).all(),
                 "lambda must be strictly decreasing and positive")
        _require(spectrum.shape == (n,), "spectrum must have length n")
        _require((spectrum > 0).all() and not (np.diff(spectrum) > 0).any(),
                 "spectrum must be positive and nonincreasing")
        _require(tau > 0, "tau must be positive")
        _require(m_init > 0, "m_init must be positive")
        _require(w_init_std > 0, "w_init_std must be positive")

    t_max = int(raw.get("t_max", _DEFAULT_T_MAX[mode]))
    _require(t_max >= 0, "t_max must be nonnegative")
    checkpoints = raw.get("checkpoints", [t_max] if t_max > 0 else [])
    checkpoints = tuple(int(t) for t in checkpoints)
    bad = [t for t in checkpoints if not 1 <= t <= t_max]
    _require(not bad, f"checkpoints outside [1, t_max]: {sorted(bad)}")
    trials = int(raw.get("trials", 1))
    _require(trials >= 1, "trials must be at least 1")
    seed = int(raw.get("seed", 0))
    workers = int(raw.get("workers", 1))
    _require(workers >= 1, "workers must be at least 1")
    fixed_rotation = bool(raw.get("fixed_rotation", False))
    output_path = raw.get("output_path")

    return ExperimentConfig(
        task=task, variant=variant, mode=mode, preset=preset_name,
        n=n, k=k, lam=lam, tau=tau, schedule=schedule, spectrum=spectrum,
        m_init=m_init, w_init_std=w_init_std, t_max=t_max,
        checkpoints=checkpoints, trials=trials, seed=seed,
        fixed_rotation=fixed_rotation, workers=workers,
        output_path=output_path,
    )


def load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def _initial_state(config, gen):
    w0 = gen.normal(0.0, config.w_init_std, size=(config.k, config.n))
    m0 = config.m_init * np.eye(config.k)
    return ModelState(m0, w0, config.lam, config.tau)


def _run_trial(config, trial_idx, rotation=None):
    """One independent trial; returns a TrialOutcome.

    The trial's stream provides, in order: the covariance rotation
    (unless a shared one is supplied), the W initialization, and the
    sample draws (online mode only).
    """
    start = time.perf_counter()
    rng = RngStream(config.seed, trial_idx)
    if rotation is None:
        rotation = data.haar_orthogonal(config.n, rng)
    spec = CovarianceSpec(config.n, rotation, config.spectrum)
    g = data.build_covariance(spec)
    truth = metrics.ground_truth(g, config.k)
    state = _initial_state(config, rng.generator)

    def error_of(st):
        u_hat = metrics.estimate_subspace(st, config.task, config.variant,
                                          truth.sigma_k)
        return metrics.procrustes_error(u_hat, truth.u_k)

    rows = []
    t = 0
    try:
        if config.mode == "offline":
            traj = offline.run_offline(
                state, g, config.schedule, config.t_max, config.checkpoints,
                task=config.task, variant=config.variant)
            rows = [(t, error_of(st)) for t, st in traj.checkpoints]
        else:
            points = set(config.eval_points())
            if config.t_max == 0:
                rows = [(0, error_of(state))]
            while t < config.t_max:
                block = data.sample_block(
                    spec, rng, min(_SAMPLE_CHUNK, config.t_max - t))
                for x in block:
                    t += 1
                    _, state = online_step(state, x, config.schedule.rate(t),
                                           config.task, config.variant)
                    if t in points:
                        rows.append((t, error_of(state)))
    except TrialDivergedError as exc:
        return TrialOutcome(trial_idx, "diverged", [], exc.iteration,
                            time.perf_counter() - start)
    except (DegenerateDiagonalError, LinalgError):
        # online path raises model errors directly
        return TrialOutcome(trial_idx, "diverged", [], t,
                            time.perf_counter() - start)
    return TrialOutcome(trial_idx, "completed", rows, None,
                        time.perf_counter() - start)


def _trial_worker(args):
    config, trial_idx, rotation = args
    return _run_trial(config, trial_idx, rotation)


def run_experiment(config, workers=None):
    """Run all trials of an experiment and assemble the summary report.

    Diverged trials are recorded and excluded from the medians; they are
    not fatal. Trials are independent: the report is a pure function of
    (config, seed) regardless of worker count.
    """
    workers = config.workers if workers is None else workers
    rotation = None
    if config.fixed_rotation:
        rotation = data.haar_orthogonal(
            config.n, RngStream(config.seed, FIXED_ROTATION_STREAM))

    jobs = [(config, i, rotation) for i in range(config.trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_trial_worker, jobs))
    else:
        outcomes = [_run_trial(config, i, rotation) for i in range(config.trials)]
    outcomes.sort(key=lambda o: o.trial)

    rows = []
    per_point = {}
    for out in outcomes:
        if out.status != "completed":
            continue
        for t, e in out.rows:
            rows.append((t, out.trial, e))
            per_point.setdefault(t, []).append(e)
    rows.sort(key=lambda r: (r[0], r[1]))
    medians = {t: float(np.median(es)) for t, es in per_point.items()}
    diverged = sum(1 for o in outcomes if o.status != "completed")
    return SummaryReport(config=config, rows=rows, medians=medians,
                         trials=outcomes, diverged=diverged)


def _fmt(value):
    return f"{value:.17g}"


def emit_report(report, fmt, path):
    """Write a report as CSV (plus a median summary file) or JSON."""
    if fmt == "json":
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(report.to_json_dict(), fh, indent=2)
            fh.write("\n")
        return
    if fmt != "csv":
        raise ValueError(f"unknown report format {fmt!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t,trial,e_pro\n")
        for t, trial, e in report.rows:
            fh.write(f"{t},{trial},{_fmt(e)}\n")
    summary_path = _summary_path(path)
    completed = len([o for o in report.trials if o.status == "completed"])
    with open(summary_path, "w", encoding="utf-8") as fh:
        fh.write("t,e_pro_median,completed_trials,diverged_trials\n")
        for t, e in sorted(report.medians.items()):
            fh.write(f"{t},{_fmt(e)},{completed},{report.diverged}\n")


def _summary_path(path):
    path = str(path)
    if path.endswith(".csv"):
        return path[:-4] + "_summary.csv"
    return path + "_summary.csv"


def config_from_json_dict(obj):
    """Rebuild an ExperimentConfig from its own JSON echo (no re-expansion)."""
    return ExperimentConfig(
        task=Task(obj["task"]), variant=Variant(obj["variant"]),
        mode=obj["mode"], preset=obj["preset"], n=int(obj["n"]),
        k=int(obj["k"]), lam=np.asarray(obj["lambda"], dtype=float),
        tau=float(obj["tau"]), schedule=_schedule_from_json(obj["schedule"]),
        spectrum=np.asarray(obj["spectrum"], dtype=float),
        m_init=float(obj["m_init"]), w_init_std=float(obj["w_init_std"]),
        t_max=int(obj["t_max"]), checkpoints=tuple(obj["checkpoints"]),
        trials=int(obj["trials"]), seed=int(obj["seed"]),
        fixed_rotation=bool(obj["fixed_rotation"]),
        workers=int(obj["workers"]), output_path=obj.get("output_path"),
    )


def report_from_json(path):
    """Load the JSON form of a report for CSV re-emission."""
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    config = config_from_json_dict(obj["config"])
    rows = [(r["t"], r["trial"], r["e_pro"]) for r in obj["rows"]]
    medians = {r["t"]: r["e_pro"] for r in obj["medians"]}
    trials = [
        TrialOutcome(r["trial"], r["status"], [], r.get("diverged_at"),
                     r.get("wall_clock_s", 0.0))
        for r in obj["trials"]
    ]
    return SummaryReport(config=config, rows=rows, medians=medians,
                         trials=trials, diverged=obj["diverged"])
