"""Timing simulator for synchronous data-parallel training steps.

Each iteration, every worker accumulates M micro-batch gradients; the step
ends when the slowest worker finishes plus a serial communication latency.
With a compute threshold tau, a worker is preempted at min(tau, T_n) and
contributes only the micro-batches whose cumulative compute time stayed
strictly below tau. The simulator measures step times, completed work, and
the effective speedup of thresholding versus the no-drop baseline, plus a
Local-SGD timing variant with straggler injection.

Gradient numerics live in the sgd module; this module is timing only.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .latency import FleetSpec, WorkerLatencyModel
from .stats import RngStream

__all__ = [
    "SimConfig",
    "IterationRecord",
    "RunStats",
    "SimRun",
    "LocalSgdResult",
    "SweepPoint",
    "simulate_iteration",
    "run",
    "run_detailed",
    "run_from_trace",
    "scale_sweep",
    "local_sgd_run",
    "write_records_csv",
    "stats_to_json",
]

RECORDS_HEADER = ["iteration", "worker", "T_n", "stop_time", "completed"]


@dataclass(frozen=True)
class SimConfig:
    """Full description of a timing experiment.

    tau is the per-iteration compute budget in seconds; None disables
    dropping (baseline). stop_at_accumulation_boundary switches the
    preemption point from exactly tau to the end of the last micro-batch
    that finished under tau (the between-accumulations break); default is
    preemption at exactly tau, which matches the min(tau, T_n) stop time
    the analysis assumes.
    """

    fleet: FleetSpec
    m_per_step: int
    t_comm: float = 0.0
    tau: Optional[float] = None
    iterations: int = 1
    seed: int = 0
    stop_at_accumulation_boundary: bool = False

    def __post_init__(self):
        if self.m_per_step < 1:
            raise ValueError("m_per_step must be >= 1")
        if self.t_comm < 0.0:
            raise ValueError("t_comm must be >= 0")
        if self.tau is not None and not (self.tau > 0.0):
            raise ValueError("tau must be > 0 when present")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")


@dataclass(frozen=True)
class IterationRecord:
    """Per-worker outcome of one simulated iteration."""

    iter_index: int
    compute_times: np.ndarray  # T_n, full M micro-batch sums
    stop_times: np.ndarray  # preemption-aware busy time per worker
    completed: np.ndarray  # micro-batches counted per worker
    step_base: float  # max_n T_n + T_c
    step_drop: float  # max_n stop_n + T_c
    s_eff: float  # per-iteration effective speedup


@dataclass(frozen=True)
class RunStats:
    """Aggregate over all iterations of a run."""

    n_workers: int
    m_per_step: int
    iterations: int
    tau: Optional[float]
    mean_step_base: float
    mean_step_drop: float
    mean_completed: float  # per worker per iteration
    drop_rate: float  # 1 - mean_completed / M
    s_eff: float  # mean over iterations of per-iteration speedup
    throughput: float  # micro-batches per second under the threshold
    throughput_base: float  # micro-batches per second, no drops


@dataclass(frozen=True)
class SimRun:
    stats: RunStats
    records: tuple
    trace: np.ndarray  # (iterations, N, M) sampled latencies
    comm_times: np.ndarray  # (iterations,)


@dataclass(frozen=True)
class LocalSgdResult:
    local_sgd_speedup: float
    dropcompute_speedup: float
    sync_step_time: float  # mean fully-synchronous step time (reference)
    local_sgd_step_time: float
    dropcompute_step_time: float
    tau: float


@dataclass(frozen=True)
class SweepPoint:
    n_workers: int
    tau: Optional[float]
    throughput_base: float
    throughput_drop: float
    s_eff: float
    linear_ref: float
    mean_step_base: float
    mean_step_drop: float


def _draw_iteration_times(config: SimConfig, iter_index: int, root: RngStream) -> np.ndarray:
    """Sample the (N, M) micro-batch latency matrix for one iteration.

    Draws are addressed by iteration index (and worker index for mixed
    fleets) so results do not depend on evaluation order or thread count.
    """
    fleet, m = config.fleet, config.m_per_step
    if fleet.is_homogeneous:
        gen = root.derive(iter_index).generator()
        return fleet.workers[0].sample(gen, (fleet.n, m))
    out = np.empty((fleet.n, m))
    for n, model in enumerate(fleet.workers):
        out[n] = model.sample(root.derive(iter_index, n).generator(), m)
    return out


def _evaluate_times(times: np.ndarray, tau: Optional[float], t_comm: float,
                    stop_at_boundary: bool) -> tuple:
    """Core threshold semantics for one iteration's (N, M) latency matrix.

    Returns (compute_times, stop_times, completed, step_base, step_drop, s_eff).
    Micro-batch m counts iff its cumulative finish time is strictly below
    tau; equality drops the batch.
    """
    n, m = times.shape
    cum = np.cumsum(times, axis=1)
    compute_times = cum[:, -1]
    step_base = float(compute_times.max() + t_comm)
    if tau is None:
        completed = np.full(n, m)
        stop_times = compute_times.copy()
        return compute_times, stop_times, completed, step_base, step_base, 1.0
    completed = np.count_nonzero(cum < tau, axis=1)
    if stop_at_boundary:
        # Worker leaves at the last counted accumulation boundary.
        stop_times = np.where(completed > 0,
                              cum[np.arange(n), np.maximum(completed - 1, 0)], 0.0)
    else:
        stop_times = np.minimum(tau, compute_times)
    step_drop = float(stop_times.max() + t_comm)
    mean_completed = float(completed.mean())
    if step_drop <= 0.0 or mean_completed == 0.0:
        s_eff = 0.0
    else:
        s_eff = (step_base / step_drop) * (mean_completed / m)
    return compute_times, stop_times, completed, step_base, step_drop, s_eff


def simulate_iteration(config: SimConfig, iter_index: int,
                       rng: Optional[RngStream] = None) -> IterationRecord:
    """Simulate one synchronous iteration and return its record."""
    root = rng if rng is not None else RngStream(config.seed, 0)
    times = _draw_iteration_times(config, iter_index, root)
    ct, st, comp, sb, sd, s = _evaluate_times(
        times, config.tau, config.t_comm, config.stop_at_accumulation_boundary)
    return IterationRecord(iter_index, ct, st, comp, sb, sd, s)


def _aggregate(records_iter, n_workers: int, m: int, tau, iterations: int) -> RunStats:
    sum_base = sum_drop = sum_completed = sum_seff = 0.0
    for rec in records_iter:
        sum_base += rec.step_base
        sum_drop += rec.step_drop
        sum_completed += float(rec.completed.mean())
        sum_seff += rec.s_eff
    mean_base = sum_base / iterations
    mean_drop = sum_drop / iterations
    mean_completed = sum_completed / iterations
    return RunStats(
        n_workers=n_workers,
        m_per_step=m,
        iterations=iterations,
        tau=tau,
        mean_step_base=mean_base,
        mean_step_drop=mean_drop,
        mean_completed=mean_completed,
        drop_rate=1.0 - mean_completed / m,
        s_eff=sum_seff / iterations,
        throughput=n_workers * mean_completed / mean_drop,
        throughput_base=n_workers * m / mean_base,
    )


def run(config: SimConfig, rng: Optional[RngStream] = None) -> RunStats:
    """Run all iterations and aggregate; O(1) memory in the iteration count."""
    root = rng if rng is not None else RngStream(config.seed, 0)
    recs = (simulate_iteration(config, i, root) for i in range(config.iterations))
    return _aggregate(recs, config.fleet.n, config.m_per_step, config.tau,
                      config.iterations)


def run_detailed(config: SimConfig, rng: Optional[RngStream] = None) -> SimRun:
    """Like run, but keeps per-iteration records and the sampled latency trace.

    The trace is the (I, N, M) tensor the threshold selector consumes.
    Memory scales with I*N*M; use run() for large sweeps.
    """
    root = rng if rng is not None else RngStream(config.seed, 0)
    records = []
    trace = np.empty((config.iterations, config.fleet.n, config.m_per_step))
    for i in range(config.iterations):
        times = _draw_iteration_times(config, i, root)
        trace[i] = times
        ct, st, comp, sb, sd, s = _evaluate_times(
            times, config.tau, config.t_comm, config.stop_at_accumulation_boundary)
        records.append(IterationRecord(i, ct, st, comp, sb, sd, s))
    stats = _aggregate(records, config.fleet.n, config.m_per_step, config.tau,
                       config.iterations)
    comm = np.full(config.iterations, config.t_comm)
    return SimRun(stats, tuple(records), trace, comm)


def run_from_trace(trace: np.ndarray, comm_times, tau: Optional[float],
                   stop_at_accumulation_boundary: bool = False) -> SimRun:
    """Replay a recorded (I, N, M) latency trace under a threshold.

    The measured s_eff equals the threshold module's Algorithm evaluation of
    the same trace up to floating rounding; used as the cross-check oracle.
    """
    trace = np.asarray(trace, dtype=float)
    if trace.ndim != 3:
        raise ValueError("trace must be (iterations, workers, micro_batches)")
    iterations, n, m = trace.shape
    comm = np.broadcast_to(np.asarray(comm_times, dtype=float), (iterations,))
    records = []
    for i in range(iterations):
        ct, st, comp, sb, sd, s = _evaluate_times(
            trace[i], tau, float(comm[i]), stop_at_accumulation_boundary)
        records.append(IterationRecord(i, ct, st, comp, sb, sd, s))
    stats = _aggregate(records, n, m, tau, iterations)
    return SimRun(stats, tuple(records), trace, np.array(comm))


def _sweep_point_stats(template: SimConfig, n: int, tau_policy,
                       warmup_iterations: int, root: RngStream):
    """One sweep point: optional warmup threshold search, then the run."""
    model = template.fleet.workers[0]
    fleet = FleetSpec.homogeneous(n, model)
    # Distinct sub-streams for the warmup trace and the measured run; keyed
    # by N so points are independent of each other and of execution order.
    warm_rng = root.derive(n, 0)
    run_rng = root.derive(n, 1)
    tau = tau_policy
    if tau_policy == "auto":
        warm_cfg = SimConfig(fleet, template.m_per_step, template.t_comm,
                             None, warmup_iterations, template.seed,
                             template.stop_at_accumulation_boundary)
        warm = run_detailed(warm_cfg, rng=warm_rng)
        from .threshold import TraceTensor, select_threshold

        tau = select_threshold(TraceTensor(warm.trace, warm.comm_times)).tau_star
    cfg = SimConfig(fleet, template.m_per_step, template.t_comm, tau,
                    template.iterations, template.seed,
                    template.stop_at_accumulation_boundary)
    return tau, run(cfg, rng=run_rng)


def scale_sweep(template: SimConfig, n_list, tau_policy="auto",
                warmup_iterations: int = 100, max_workers: int = 1) -> list:
    """Repeat the experiment across fleet sizes.

    tau_policy: None runs the no-drop baseline only; a float fixes tau for
    every N; "auto" selects tau per N from a warmup trace with the
    decentralized threshold search. Per-N randomness is derived from the
    template seed and N, and results are assembled in n_list order, so the
    output is identical at any max_workers. The linear-scaling reference
    extrapolates the smallest fleet's baseline throughput.
    """
    n_list = list(n_list)
    if not n_list:
        raise ValueError("n_list must be nonempty")
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be strictly ascending")
    if not template.fleet.is_homogeneous:
        raise ValueError("scale_sweep requires a homogeneous fleet template")
    root = RngStream(template.seed, 0)

    if max_workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            futures = [pool.submit(_sweep_point_stats, template, n, tau_policy,
                                   warmup_iterations, root) for n in n_list]
            results = [f.result() for f in futures]
    else:
        results = [_sweep_point_stats(template, n, tau_policy,
                                      warmup_iterations, root) for n in n_list]

    base_rate = results[0][1].throughput_base / n_list[0]
    points = []
    for n, (tau, stats) in zip(n_list, results):
        points.append(SweepPoint(
            n_workers=n,
            tau=tau,
            throughput_base=stats.throughput_base,
            throughput_drop=stats.throughput,
            s_eff=stats.s_eff,
            linear_ref=base_rate * n,
            mean_step_base=stats.mean_step_base,
            mean_step_drop=stats.mean_step_drop,
        ))
    return points


def local_sgd_run(fleet: FleetSpec, sync_period: int, straggler_prob: float,
                  straggler_delay: float, mode: str = "uniform",
                  iterations: int = 2000, tau: Optional[float] = None,
                  seed: int = 0, server_size: int = 8) -> LocalSgdResult:
    """Timing comparison: fully synchronous vs Local-SGD vs Local-SGD + threshold.

    Workers take H = sync_period local steps between barriers. Each local
    step draws a compute time from the worker's model; a straggling step
    additionally waits straggler_delay seconds. Under "uniform" every worker
    straggles i.i.d. with straggler_prob; under "single_server" straggler
    events are confined to the first server_size workers, with the
    per-worker probability scaled to keep the fleet-level straggler rate
    equal. The threshold variant caps every local step at tau
    (default: fleet mean step time + straggler_delay / 10).

    All three variants share the same sampled times, so the threshold
    variant is never slower than plain Local-SGD on any path.
    """
    if sync_period < 1:
        raise ValueError("sync_period must be >= 1")
    if not (0.0 <= straggler_prob <= 1.0):
        raise ValueError("straggler_prob must be in [0, 1]")
    if straggler_delay < 0.0:
        raise ValueError("straggler_delay must be >= 0")
    if mode not in ("uniform", "single_server"):
        raise ValueError(f"unknown straggler mode {mode!r}")

    n = fleet.n
    steps = (iterations // sync_period) * sync_period
    if steps == 0:
        raise ValueError("iterations must cover at least one sync period")
    root = RngStream(seed, 0)

    times = np.empty((steps, n))
    if fleet.is_homogeneous:
        times[:] = fleet.workers[0].sample(root.derive(0).generator(), (steps, n))
    else:
        for w, model in enumerate(fleet.workers):
            times[:, w] = model.sample(root.derive(0, w).generator(), steps)

    u = root.derive(1).generator().random((steps, n))
    if mode == "uniform":
        straggle = u < straggler_prob
    else:
        group = min(server_size, n)
        p_group = min(straggler_prob * n / group, 1.0)
        straggle = np.zeros((steps, n), dtype=bool)
        straggle[:, :group] = u[:, :group] < p_group

    delayed = times + straggler_delay * straggle
    if tau is None:
        mean_step = float(np.mean([m.moments()[0] for m in fleet.workers]))
        tau = mean_step + straggler_delay / 10.0
    clipped = np.minimum(delayed, tau)

    # Fully synchronous reference: barrier after every step.
    sync_total = float(delayed.max(axis=1).sum())
    # Local-SGD: barrier after each block of H steps.
    rounds = delayed.reshape(-1, sync_period, n).sum(axis=1)
    local_total = float(rounds.max(axis=1).sum())
    drop_rounds = clipped.reshape(-1, sync_period, n).sum(axis=1)
    drop_total = float(drop_rounds.max(axis=1).sum())

    return LocalSgdResult(
        local_sgd_speedup=sync_total / local_total,
        dropcompute_speedup=sync_total / drop_total,
        sync_step_time=sync_total / steps,
        local_sgd_step_time=local_total / steps,
        dropcompute_step_time=drop_total / steps,
        tau=float(tau),
    )


def write_records_csv(path, records, comment: Optional[str] = None) -> None:
    """Per-iteration, per-worker records: iteration,worker,T_n,stop_time,completed."""
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh)
        writer.writerow(RECORDS_HEADER)
        for rec in records:
            for w in range(rec.compute_times.shape[0]):
                writer.writerow([rec.iter_index, w, repr(float(rec.compute_times[w])),
                                 repr(float(rec.stop_times[w])), int(rec.completed[w])])


def stats_to_json(stats: RunStats, **extra) -> str:
    doc = asdict(stats)
    doc.update(extra)
    return json.dumps(doc, indent=2, sort_keys=True)
