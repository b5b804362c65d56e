"""
Config-driven batch runs: every (instance spec, solver config) pair is solved,
compared with the LP optimum and written out as a trace CSV plus one entry of
summary.json. Wall times go to timings.json so the rest stays reproducible.
"""

import json
import logging
import math
import os
import signal
import threading
import time
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field, fields

import numpy as np

from .cmdp_solver import DualConfig, solve
from .cutting_plane import VaidyaParams
from .errors import CmdpError, InvalidParameterError
from .instances import InstanceSpec, generate_instance
from .oracles import grid_dual_min

logger = logging.getLogger('cmdpcut.bench')

BENCH_KEYS = {"instances", "configs", "workers", "oracle_check", "grid_resolution"}
CONFIG_KEYS = {"name", "tau", "delta", "mu", "b_lambda", "slater_xi", "t_outer", "mixing", "vaidya",
               "epsilon_target"}
SLOPE_TOLERANCE_FACTOR = 10.0


def _field_names(cls):
    return {f.name for f in fields(cls)}


def _reject_unknown(document, allowed, where):
    if not isinstance(document, dict):
        raise InvalidParameterError(f"{where} must be a JSON object")
    unknown = sorted(set(document) - set(allowed))
    if unknown:
        raise InvalidParameterError(f"unknown key(s) in {where}: {', '.join(unknown)}")


@dataclass(frozen=True)
class NamedConfig:
    name: str
    config: DualConfig


@dataclass(frozen=True)
class BenchConfig:
    instances: tuple = ()
    configs: tuple = ()
    workers: int = 1
    oracle_check: bool = True
    grid_resolution: float = None

    def __post_init__(self):
        if self.workers < 1:
            raise InvalidParameterError(f"workers must be >= 1, got {self.workers}")
        if self.grid_resolution is not None and not self.grid_resolution > 0:
            raise InvalidParameterError("grid_resolution must be positive")
        names = [named.name for named in self.configs]
        if len(set(names)) != len(names):
            raise InvalidParameterError("solver config names must be unique")

    @classmethod
    def from_dict(cls, document):
        _reject_unknown(document, BENCH_KEYS, "bench config")
        instances = []
        for index, entry in enumerate(document.get("instances", [])):
            _reject_unknown(entry, _field_names(InstanceSpec), f"instances[{index}]")
            instances.append(InstanceSpec(**entry))
        configs = []
        for index, entry in enumerate(document.get("configs", [])):
            _reject_unknown(entry, CONFIG_KEYS, f"configs[{index}]")
            entry = dict(entry)
            name = str(entry.pop("name", f"config{index}"))
            vaidya = entry.pop("vaidya", {})
            _reject_unknown(vaidya, _field_names(VaidyaParams), f"configs[{index}].vaidya")
            if entry.get("mixing") is not None:
                entry["mixing"] = tuple(entry["mixing"])
            configs.append(NamedConfig(name, DualConfig(vaidya=VaidyaParams(**vaidya), **entry)))
        return cls(tuple(instances), tuple(configs), int(document.get("workers", 1)),
                   bool(document.get("oracle_check", True)), document.get("grid_resolution"))

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as handle:
            try:
                document = json.load(handle)
            except json.JSONDecodeError as e:
                raise InvalidParameterError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}") from e
        return cls.from_dict(document)


def fit_dual_slope(series, d_ref, tolerance):
    """Least-squares slope of log(best_t - d_ref) over points with gap > 10 * tolerance."""
    points = [(t, best - d_ref) for t, best in series if best - d_ref > SLOPE_TOLERANCE_FACTOR * tolerance]
    if len(points) < 2 or len({t for t, _ in points}) < 2:
        return None
    ts = np.array([t for t, _ in points], dtype=float)
    gaps = np.log(np.array([gap for _, gap in points]))
    return float(np.polyfit(ts, gaps, 1)[0])


@dataclass
class PairOutcome:
    key: tuple
    entry: dict
    trace_csv: str = None
    wall_time: float = 0.0


@dataclass
class BenchOrchestrator:
    """Runs the pair grid on a thread pool; SIGINT stops new submissions."""
    config: BenchConfig
    output_dir: str
    running: bool = True
    outcomes: list = field(default_factory=list)

    def signal_handler(self, signum, frame):
        logger.info("shutdown signal received; finishing in-flight solves")
        self.running = False

    def _reference(self, cmdp, resolved):
        tolerance = 6.0 * resolved.tau * cmdp.gamma * resolved.delta
        if self.config.grid_resolution is not None and cmdp.m in (1, 2):
            _, value = grid_dual_min(cmdp, resolved.tau, resolved.b_lambda, self.config.grid_resolution,
                                     mu=resolved.mu, refine=True)
            return value, "grid", tolerance
        return None, "final-estimate", tolerance

    def solve_pair(self, spec, named):
        key = (spec.seed, spec.label, named.name)
        entry = {"instance": spec.label, "seed": spec.seed, "config": named.name}
        started = time.perf_counter()
        try:
            cmdp = generate_instance(spec)
            solution = solve(cmdp, named.config, oracle_check=self.config.oracle_check, label=spec.label)
            diagnostics = solution.diagnostics
            summary = solution.trace.get_summary()
            d_ref, source, tolerance = self._reference(cmdp, solution.config)
            if d_ref is None and summary["best_value_estimate"] is not None:
                d_ref = summary["best_value_estimate"] - tolerance
            entry.update(
                status="ok",
                iterations=summary["iterations"],
                oracle_calls=summary["subgradient_cuts"],
                separation_cuts=summary["separation_cuts"],
                drops=summary["drops"],
                npg_iterations=diagnostics.npg_iterations,
                final_gap=diagnostics.measured_gap,
                final_violation=diagnostics.measured_violation,
                lp_value=diagnostics.lp_value,
                lam=[float(x) for x in solution.lam],
                best_value_estimate=summary["best_value_estimate"],
                d_ref=d_ref,
                d_ref_source=source,
                slope=None if d_ref is None else fit_dual_slope(solution.trace.best_series(), d_ref, tolerance),
                stop_reason=None if solution.run is None else solution.run.stop_reason,
                resolved=solution.config.to_dict(),
                bounds=diagnostics.to_dict(),
            )
            return PairOutcome(key, entry, solution.trace.to_csv_text(), time.perf_counter() - started)
        except CmdpError as e:
            logger.error(f"{spec.label} / {named.name} failed: {type(e).__name__}: {e}")
            entry.update(status="error", error=f"{type(e).__name__}: {e}")
            return PairOutcome(key, entry, None, time.perf_counter() - started)

    def run(self):
        previous = {}
        if threading.current_thread() is threading.main_thread():
            for signum in (signal.SIGINT, signal.SIGTERM):
                previous[signum] = signal.signal(signum, self.signal_handler)
        try:
            self._run_pairs()
        finally:
            for signum, handler in previous.items():
                signal.signal(signum, handler)
        return self.write_reports()

    def _run_pairs(self):
        pairs = [(spec, named) for spec in self.config.instances for named in self.config.configs]
        logger.info(f"benchmark: {len(pairs)} pair(s) on {self.config.workers} worker(s)")

        in_flight = set()
        with ThreadPoolExecutor(max_workers=self.config.workers) as executor:
            for spec, named in pairs:
                if not self.running:
                    logger.warning("stopping submission after shutdown signal")
                    break
                in_flight.add(executor.submit(self.solve_pair, spec, named))
                if len(in_flight) >= self.config.workers:
                    done, in_flight = wait(in_flight, return_when=FIRST_COMPLETED)
                    self.outcomes.extend(future.result() for future in done)
            done, _ = wait(in_flight)
            self.outcomes.extend(future.result() for future in done)

    def write_reports(self):
        os.makedirs(self.output_dir, exist_ok=True)
        ordered = sorted(self.outcomes, key=lambda outcome: outcome.key)
        for outcome in ordered:
            if outcome.trace_csv is not None:
                name = f"{outcome.key[1]}__{outcome.key[2]}.csv"
                with open(os.path.join(self.output_dir, name), "w", encoding="utf-8", newline="") as handle:
                    handle.write(outcome.trace_csv)
        summary = {"pairs": [to_jsonable(outcome.entry) for outcome in ordered]}
        _write_json(os.path.join(self.output_dir, "summary.json"), summary)
        timings = {"wall_time_s": [{"instance": o.entry["instance"],
                                    "config": o.key[2],
                                    "seconds": o.wall_time} for o in ordered]}
        _write_json(os.path.join(self.output_dir, "timings.json"), timings)
        failures = sum(entry["status"] != "ok" for entry in summary["pairs"])
        logger.info(f"benchmark finished: {len(ordered)} pair(s), {failures} failure(s)")
        return summary


def to_jsonable(value):
    if isinstance(value, np.ndarray):
        value = value.tolist()
    if isinstance(value, dict):
        return {key: to_jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(item) for item in value]
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, np.integer):
        return int(value)
    return value


def _write_json(path, document):
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(document, handle, indent=2, sort_keys=True)
        handle.write("\n")


def run_benchmark(config, output_dir):
    """config: a BenchConfig, a dict, or a path to a JSON file. Returns the summary document."""
    if isinstance(config, str):
        config = BenchConfig.load(config)
    elif isinstance(config, dict):
        config = BenchConfig.from_dict(config)
    return BenchOrchestrator(config, output_dir).run()
