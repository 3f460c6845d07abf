"""Command line driver: single runs, batches, built-in cases, scenario generation.

Trace files are CSV. The first line is ``# `` followed by a JSON object with
the episode header (scenario id, seed, config hash, dt, k_max, horizon and
the initial state); then a header row and one record per step. Floats are
written with ``repr`` so they round-trip exactly.

Exit codes: 0 success, 1 episode or I/O error, 2 configuration error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

from . import env
from .config import (ConfigError, ScenarioConfig, case_scenario, dump_scenario, load_scenario,
                     parse_scenario)
from .env import Terminal, WorldState
from .metrics import BatchSummary, EpisodeMetrics, batch_summary, episode_metrics
from .sim import EpisodeError, SimulationTrace, StepRecord, run_case3_probe, run_episode

OUT_DIR_ENV = "CROSSGAME_OUT_DIR"
CASE3_SPEED = 1.2


def default_out_dir() -> Path:
    return Path(os.environ.get(OUT_DIR_ENV, "runs"))


# -- seeds ----------------------------------------------------------------------


def stable_hash(scenario_id: str, replication: int) -> int:
    """First 4 bytes (big endian) of sha256("<scenario_id>:<replication>")."""
    digest = hashlib.sha256(f"{scenario_id}:{replication}".encode()).digest()
    return int.from_bytes(digest[:4], "big")


def episode_seed(base_seed: int, scenario_id: str, replication: int) -> int:
    return (int(base_seed) & 0xFFFFFFFF) ^ stable_hash(scenario_id, replication)


# -- traces ---------------------------------------------------------------------


def trace_columns(k_max: int) -> list[str]:
    cols = ["step", "t", "av_x", "av_v", "av_a", "ped_y", "ped_v",
            "av_elambda_of_ped", "ped_elambda_of_av"]
    cols += [f"av_belief_l{k}" for k in range(k_max)]
    cols += [f"ped_belief_l{k}" for k in range(k_max)]
    cols += ["av_log_norm", "ped_log_norm", "utility_av", "utility_ped", "terminal"]
    return cols


def _fmt(x) -> str:
    return repr(float(x))


def format_trace(trace: SimulationTrace) -> str:
    s0 = trace.initial_state
    meta = {
        "scenario_id": trace.scenario_id, "seed": trace.seed, "config_hash": trace.config_hash,
        "dt": trace.dt, "k_max": trace.k_max, "horizon": trace.horizon,
        "initial_state": list(s0.as_tuple()),
        "initial_av_elambda": _json_float(trace.initial_av_lambda),
        "initial_ped_elambda": _json_float(trace.initial_ped_lambda),
    }
    buf = io.StringIO()
    buf.write("# " + json.dumps(meta, sort_keys=True) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(trace_columns(trace.k_max))
    for r in trace.steps:
        s = r.state
        row = [str(r.step), _fmt(s.t), _fmt(s.av.x), _fmt(s.av.v), _fmt(s.av.a), _fmt(s.ped.y),
               _fmt(s.ped.v), _fmt(r.av_lambda), _fmt(r.ped_lambda)]
        row += [_fmt(b) for b in r.av_level_belief]
        row += [_fmt(b) for b in r.ped_level_belief]
        row += [_fmt(r.av_log_norm), _fmt(r.ped_log_norm), _fmt(r.utility_av),
                _fmt(r.utility_ped), r.terminal.value]
        writer.writerow(row)
    return buf.getvalue()


def _json_float(x: float):
    return None if math.isnan(x) else x


def emit_trace(trace: SimulationTrace, path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(format_trace(trace))
    except OSError as exc:
        raise OSError(f"cannot write trace {path}: {exc}") from exc
    return path


def read_trace(path) -> SimulationTrace:
    text = Path(path).read_text()
    first, rest = text.split("\n", 1)
    if not first.startswith("# "):
        raise ValueError(f"{path}: missing metadata line")
    meta = json.loads(first[2:])
    k = int(meta["k_max"])
    rows = list(csv.reader(io.StringIO(rest)))
    header, body = rows[0], rows[1:]
    if header != trace_columns(k):
        raise ValueError(f"{path}: unexpected header")
    steps = []
    for row in body:
        vals = dict(zip(header, row))
        state = WorldState.from_tuple(tuple(float(vals[c]) for c in
                                            ("t", "av_x", "av_v", "av_a", "ped_y", "ped_v")))
        steps.append(StepRecord(
            step=int(vals["step"]), state=state,
            utility_av=float(vals["utility_av"]), utility_ped=float(vals["utility_ped"]),
            av_level_belief=tuple(float(vals[f"av_belief_l{i}"]) for i in range(k)),
            av_lambda=float(vals["av_elambda_of_ped"]), av_log_norm=float(vals["av_log_norm"]),
            ped_level_belief=tuple(float(vals[f"ped_belief_l{i}"]) for i in range(k)),
            ped_lambda=float(vals["ped_elambda_of_av"]),
            ped_log_norm=float(vals["ped_log_norm"]),
            terminal=Terminal(vals["terminal"])))

    def nan_if_none(x):
        return math.nan if x is None else float(x)

    return SimulationTrace(
        scenario_id=meta["scenario_id"], seed=int(meta["seed"]),
        config_hash=meta["config_hash"], dt=float(meta["dt"]), k_max=k,
        initial_state=WorldState.from_tuple(tuple(meta["initial_state"])),
        initial_av_lambda=nan_if_none(meta["initial_av_elambda"]),
        initial_ped_lambda=nan_if_none(meta["initial_ped_elambda"]),
        steps=tuple(steps), horizon=float(meta["horizon"]))


class ReplayMismatch(AssertionError):
    pass


def replay_trace(trace: SimulationTrace) -> None:
    """Re-apply the recorded actions through env.step; raise on the first mismatch."""
    state = trace.initial_state
    for r in trace.steps:
        state = env.step(state, r.state.av.a, r.state.ped.v, trace.dt)
        if state.as_tuple() != r.state.as_tuple():
            raise ReplayMismatch(f"step {r.step}: replayed {state.as_tuple()} "
                                 f"!= recorded {r.state.as_tuple()}")


# -- scenario files and overrides -------------------------------------------------


def _set_path(data: dict, dotted: str, raw: str) -> None:
    keys = dotted.split(".")
    node = data
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {dotted}: {key} is not a section")
    node[keys[-1]] = yaml.safe_load(raw)


def load_with_overrides(path, overrides: Sequence[str] = ()) -> ScenarioConfig:
    path = Path(path)
    cfg = load_scenario(path)  # report errors against the original file first
    return override_config(cfg, overrides, f"{path} with overrides")


def apply_overrides(data: dict, overrides: Sequence[str]) -> dict:
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected key=value")
        key, raw = item.split("=", 1)
        _set_path(data, key.strip(), raw)
    return data


def override_config(cfg: ScenarioConfig, overrides: Sequence[str],
                    source: str = "overrides") -> ScenarioConfig:
    if not overrides:
        return cfg
    data = yaml.safe_load(dump_scenario(cfg))
    apply_overrides(data, overrides)
    try:
        return parse_scenario(yaml.safe_dump(data, sort_keys=False), source)
    except ConfigError as exc:
        # line numbers refer to the regenerated document, so report the key only
        raise ConfigError(f"{source}: {re.sub(r' [(]line [^)]*[)]', '', str(exc))}") from None


# -- batch ------------------------------------------------------------------------


@dataclass(frozen=True)
class EpisodeJob:
    scenario: ScenarioConfig
    replication: int
    seed: int
    probe_speed: float | None = None  # scripted pedestrian speed for Case-3 style probes


@dataclass(frozen=True)
class EpisodeResult:
    job: EpisodeJob
    trace: SimulationTrace | None
    error: str | None


def run_job(job: EpisodeJob) -> EpisodeResult:
    try:
        if job.probe_speed is None:
            trace = run_episode(job.scenario, seed=job.seed)
        else:
            trace = run_case3_probe(job.scenario, crossing_speed=job.probe_speed, seed=job.seed)
    except EpisodeError as exc:
        return EpisodeResult(job, None, str(exc))
    return EpisodeResult(job, trace, None)


def trace_name(scenario_id: str, replication: int) -> str:
    return f"{scenario_id}_r{replication:03d}.csv"


@dataclass(frozen=True)
class BatchResult:
    summaries: tuple[BatchSummary, ...]
    overall: BatchSummary | None
    errors: tuple[str, ...]
    traces: tuple[Path, ...]

    @property
    def ok(self) -> bool:
        return not self.errors


def write_summary(summaries: Sequence[BatchSummary], path) -> Path:
    path = Path(path)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(BatchSummary.COLUMNS)
    for s in summaries:
        writer.writerow([s.scenario_id, s.episodes] + [_fmt(x) for x in s.row()[2:]])
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(buf.getvalue())
    except OSError as exc:
        raise OSError(f"cannot write summary {path}: {exc}") from exc
    return path


def run_jobs(jobs: Sequence[EpisodeJob], out_dir, workers: int = 1,
             summary_name: str = "summary.csv") -> BatchResult:
    """Run episodes, then write traces, replay-check them and write the summary.

    Results are collected in job order whatever the worker count, so all
    output files are identical for any ``workers``.
    """
    out_dir = Path(out_dir)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_job, jobs))
    else:
        results = [run_job(j) for j in jobs]
    errors, paths = [], []
    per_scenario: dict[str, list[EpisodeMetrics]] = {}
    order: list[str] = []
    for res in results:
        sid = res.job.scenario.scenario_id
        if sid not in per_scenario:
            per_scenario[sid] = []
            order.append(sid)
        if res.error is not None:
            errors.append(f"{sid} r{res.job.replication}: {res.error}")
            continue
        path = emit_trace(res.trace, out_dir / trace_name(sid, res.job.replication))
        paths.append(path)
        try:
            replay_trace(read_trace(path))
        except ReplayMismatch as exc:
            errors.append(f"{path}: replay mismatch: {exc}")
            continue
        per_scenario[sid].append(episode_metrics(res.trace, res.job.scenario.geometry))
    summaries = tuple(batch_summary(per_scenario[sid], sid) for sid in order
                      if per_scenario[sid])
    write_summary(summaries, out_dir / summary_name)
    everything = [m for sid in order for m in per_scenario[sid]]
    overall = batch_summary(everything, "all") if everything else None
    return BatchResult(summaries, overall, tuple(errors), tuple(paths))


def run_batch(scenarios: Sequence, replications: int, base_seed: int, out_dir,
              workers: int = 1, overrides: Sequence[str] = ()) -> BatchResult:
    """Run every scenario ``replications`` times with seed base_seed XOR stable_hash(id, r)."""
    if replications < 1:
        raise ValueError("replications must be >= 1")
    configs = []
    for item in scenarios:
        cfg = item if isinstance(item, ScenarioConfig) else load_with_overrides(item, overrides)
        if isinstance(item, ScenarioConfig):
            cfg = override_config(cfg, overrides)
        configs.append(cfg)
    ids = [c.scenario_id for c in configs]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"duplicate scenario ids in batch: {sorted(ids)}")
    jobs = [EpisodeJob(cfg, r, episode_seed(base_seed, cfg.scenario_id, r))
            for cfg in configs for r in range(replications)]
    return run_jobs(jobs, out_dir, workers)


# -- scenario generator -----------------------------------------------------------


GEN_START_SPEEDS = (0.0, 0.03, 0.1)


def generate_scenarios(n: int, seed: int) -> list[ScenarioConfig]:
    """Random initial conditions: gap U[20, 60] m, speed U[6, 12] m/s, pedestrian
    start speed drawn from {0, 0.03, 0.1}; everything else at defaults."""
    from .config import InitialConditions

    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        gap = float(np.round(rng.uniform(20.0, 60.0), 3))
        v_av = float(np.round(rng.uniform(6.0, 12.0), 3))
        v_ped = float(GEN_START_SPEEDS[int(rng.integers(len(GEN_START_SPEEDS)))])
        out.append(ScenarioConfig(InitialConditions(gap=gap, v_av=v_av, v_ped=v_ped),
                                  scenario_id=f"gen{i:03d}"))
    return out


def write_scenarios(configs: Sequence[ScenarioConfig], out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for cfg in configs:
        path = out_dir / f"{cfg.scenario_id}.yaml"
        path.write_text(dump_scenario(cfg))
        paths.append(path)
    return paths


# -- entry point ------------------------------------------------------------------


def _print_summary(summaries: Sequence[BatchSummary], overall: BatchSummary | None) -> None:
    rows = list(summaries) + ([overall] if overall is not None and len(summaries) > 1 else [])
    print(",".join(BatchSummary.COLUMNS))
    for s in rows:
        print(",".join([s.scenario_id, str(s.episodes)] + [f"{x:.4f}" for x in s.row()[2:]]))


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crossgame", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", type=Path, default=None,
                       help=f"output directory (default ${OUT_DIR_ENV} or ./runs)")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="set a scenario field, e.g. search.iterations=5000")

    p = sub.add_parser("run", help="one scenario file, one seed")
    p.add_argument("scenario", type=Path)
    common(p)

    p = sub.add_parser("batch", help="every *.yaml in a directory, replicated")
    p.add_argument("directory", type=Path)
    p.add_argument("--replications", type=int, default=10)
    p.add_argument("--workers", type=int, default=1)
    common(p)

    p = sub.add_parser("case", help="built-in Case 1/2/3 presets")
    p.add_argument("case", type=int, choices=(1, 2, 3))
    p.add_argument("--replications", type=int, default=1)
    p.add_argument("--workers", type=int, default=1)
    common(p)

    p = sub.add_parser("gen", help="write randomized scenario files")
    p.add_argument("--count", type=int, default=100)
    common(p)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    out = args.out or default_out_dir()
    try:
        if args.command == "gen":
            paths = write_scenarios(generate_scenarios(args.count, args.seed), out)
            print(f"wrote {len(paths)} scenarios to {out}")
            return 0
        if args.command == "run":
            cfg = load_with_overrides(args.scenario, args.override)
            result = run_jobs([EpisodeJob(cfg, 0, args.seed)], out)
        elif args.command == "batch":
            files = sorted(args.directory.glob("*.yaml"))
            if not files:
                raise ConfigError(f"{args.directory}: no *.yaml scenario files")
            result = run_batch(files, args.replications, args.seed, out, args.workers,
                               args.override)
        else:
            cfg = override_config(case_scenario(args.case), args.override)
            probe = CASE3_SPEED if args.case == 3 else None
            jobs = [EpisodeJob(cfg, r, episode_seed(args.seed, cfg.scenario_id, r), probe)
                    for r in range(args.replications)]
            result = run_jobs(jobs, out, args.workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 1
    _print_summary(result.summaries, result.overall)
    for err in result.errors:
        print(f"episode error: {err}", file=sys.stderr)
    return 0 if result.ok else 1


if __name__ == "__main__":
    sys.exit(main())
