"""Threshold selector checks: hand-traced curves, a naive reference
evaluator, grid construction, replay equivalence against the simulator,
and the decentralized-consensus property."""

import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import dropsim as ds
from dropsim.threshold import write_curve_csv


def _naive_curve(latencies, comm_times, grid):
    """Reference evaluation: plain loops, no vectorization tricks."""
    iters, n, m = latencies.shape
    s_eff = []
    for tau in grid:
        per_iter = []
        for i in range(iters):
            t_i = max(latencies[i, w, :].sum() for w in range(n))
            completed = 0
            for w in range(n):
                cum = 0.0
                for j in range(m):
                    cum += latencies[i, w, j]
                    if cum < tau:
                        completed += 1
            m_tilde = completed / n
            tc = comm_times[i]
            per_iter.append(((t_i + tc) / (min(tau, t_i) + tc)) * (m_tilde / m))
        s_eff.append(float(np.mean(per_iter)))
    return np.asarray(s_eff)


def _random_trace(gen, iters, n, m, heavy=False):
    if heavy:
        lat = 0.05 + gen.lognormal(mean=-1.0, sigma=0.8, size=(iters, n, m))
    else:
        lat = 0.05 + gen.random((iters, n, m))
    comm = gen.random(iters) * 0.2
    return ds.TraceTensor(lat, comm)


class TestHandTraced:
    def test_single_iteration_two_point_grid(self):
        lat = np.full((1, 1, 2), 0.45)
        comm = np.array([0.1])
        res = ds.select_threshold(ds.TraceTensor(lat, comm), [0.5, 1.0])
        assert res.s_eff[0] == pytest.approx(5.0 / 6.0)
        assert res.s_eff[1] == pytest.approx(1.0)
        assert res.tau_star == 1.0

    def test_zero_variance_trace(self):
        lat = np.full((5, 4, 3), 0.2)
        res = ds.select_threshold(ds.TraceTensor(lat), [0.3, 0.45, 0.7])
        # Dropping on identical workers only discards compute.
        assert res.tau_star == 0.7
        assert res.s_eff_at_tau_star() == pytest.approx(1.0)

    def test_tie_breaks_to_largest_tau(self):
        lat = np.full((2, 2, 2), 0.2)
        res = ds.select_threshold(ds.TraceTensor(lat), [0.45, 0.6, 0.9])
        # All three thresholds admit both batches: identical speedup 1.
        assert np.allclose(res.s_eff, 1.0)
        assert res.tau_star == 0.9


class TestAgainstNaiveEvaluator:
    @pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
    def test_curve_matches(self, seed):
        gen = ds.RngStream(100 + seed).generator()
        trace = _random_trace(gen, iters=6, n=5, m=4, heavy=bool(seed % 2))
        grid = np.linspace(0.1, float(trace.latencies.sum(axis=2).max()) * 1.1, 40)
        res = ds.select_threshold(trace, grid)
        ref = _naive_curve(trace.latencies, trace.comm_times, grid)
        assert np.allclose(res.s_eff, ref, rtol=1e-12, atol=1e-12)
        assert res.tau_star == grid[int(np.argmax(ref))] or ref[int(np.argmax(ref))] == pytest.approx(max(ref))

    def test_argmax_agrees_exactly(self):
        gen = ds.RngStream(55).generator()
        trace = _random_trace(gen, iters=8, n=6, m=5)
        grid = np.linspace(0.2, 6.0, 200)
        res = ds.select_threshold(trace, grid)
        ref = _naive_curve(trace.latencies, trace.comm_times, grid)
        best = np.flatnonzero(ref == ref.max())[-1]  # ties to largest
        assert res.tau_star == grid[best]

    def test_slow_worker_fixture(self):
        # One of 8 workers runs 2x slower every iteration: the best budget
        # cuts the straggler and beats the no-drop baseline.
        gen = ds.RngStream(7).generator()
        iters, n, m = 40, 8, 12
        lat = 0.08 + 0.02 * gen.random((iters, n, m))
        lat[:, 0, :] *= 2.0
        trace = ds.TraceTensor(lat)
        res = ds.select_threshold(trace)
        slow_tn = lat[:, 0, :].sum(axis=1).mean()
        assert res.tau_star < slow_tn
        assert res.s_eff_at_tau_star() > 1.0


class TestDefaultGrid:
    def test_includes_anchor_above_max_step(self):
        gen = ds.RngStream(8).generator()
        trace = _random_trace(gen, 10, 4, 6)
        grid = ds.default_grid(trace)
        max_step = float(trace.latencies.sum(axis=2).max())
        assert grid.max() > max_step
        assert grid.size <= 257
        assert np.all(np.diff(grid) > 0)
        assert np.all(grid > 0)

    def test_anchor_gives_exact_unity(self):
        gen = ds.RngStream(9).generator()
        trace = _random_trace(gen, 12, 6, 5, heavy=True)
        res = ds.select_threshold(trace)
        assert res.s_eff[-1] == pytest.approx(1.0, abs=1e-12)

    def test_constant_trace_collapses(self):
        lat = np.full((4, 3, 5), 0.2)
        grid = ds.default_grid(ds.TraceTensor(lat))
        # Pooled cumulative times take only the M distinct values.
        assert grid.size <= 5 + 1
        for v in (0.2, 0.4, 0.6, 0.8, 1.0):
            assert np.any(np.abs(grid - v) < 1e-12)

    def test_default_grid_near_dense_grid_optimum(self):
        # Heavy-tail trace: the 256-quantile grid lands within 1% of a
        # 10^4-point uniform scan.
        model = ds.WorkerLatencyModel(1.0, ds.simulated_delay_noise(), noise_mode="additive_scaled_by_mean")
        fleet = ds.FleetSpec.homogeneous(16, model)
        sim = ds.run_detailed(ds.SimConfig(fleet, 12, t_comm=0.5, tau=None, iterations=400, seed=3))
        trace = ds.TraceTensor(sim.trace, sim.comm_times)
        res_default = ds.select_threshold(trace)
        steps = sim.trace.sum(axis=2)
        dense = np.linspace(float(steps.min()) * 0.5, float(steps.max()) * 1.05, 10_000)
        res_dense = ds.select_threshold(trace, dense)
        assert res_default.tau_star == pytest.approx(res_dense.tau_star, rel=0.01)
        assert res_default.s_eff_at_tau_star() == pytest.approx(res_dense.s_eff_at_tau_star(), rel=0.005)


class TestInvariants:
    def test_unity_above_max_step(self):
        gen = ds.RngStream(10).generator()
        trace = _random_trace(gen, 10, 4, 6)
        max_step = float(trace.latencies.sum(axis=2).max())
        taus = [np.nextafter(max_step, np.inf), max_step * 1.5, max_step * 10]
        res = ds.select_threshold(trace, taus)
        assert np.all(res.s_eff == pytest.approx(1.0, abs=1e-12))

    def test_drop_rate_nonincreasing(self):
        gen = ds.RngStream(11).generator()
        trace = _random_trace(gen, 15, 5, 8, heavy=True)
        res = ds.select_threshold(trace)
        assert np.all(np.diff(res.drop_rate) <= 1e-15)

    def test_speedup_at_optimum_at_least_one(self):
        gen = ds.RngStream(12).generator()
        for _ in range(50):
            trace = _random_trace(
                gen,
                int(gen.integers(1, 6)),
                int(gen.integers(1, 6)),
                int(gen.integers(1, 8)),
                heavy=bool(gen.integers(0, 2)),
            )
            res = ds.select_threshold(trace)
            assert res.s_eff_at_tau_star() >= 1.0 - 1e-12

    def test_replay_equivalence_with_simulator(self):
        fleet = ds.FleetSpec.homogeneous(6, ds.WorkerLatencyModel(0.5, ds.NormalNoise(0.0, 0.05)))
        sim = ds.run_detailed(ds.SimConfig(fleet, 8, t_comm=0.2, tau=None, iterations=50, seed=6))
        trace = ds.TraceTensor(sim.trace, sim.comm_times)
        for tau in (3.5, 3.9, 4.1, 4.6):
            curve = ds.select_threshold(trace, [tau])
            replay = ds.run_from_trace(sim.trace, sim.comm_times, tau)
            assert curve.s_eff[0] == pytest.approx(replay.stats.s_eff, abs=1e-12)
            assert curve.drop_rate[0] == pytest.approx(replay.stats.drop_rate, abs=1e-12)

    def test_selection_on_million_samples_under_five_seconds(self):
        gen = ds.RngStream(13).generator()
        lat = 0.05 + gen.random((350, 239, 12))  # ~1.0e6 samples
        trace = ds.TraceTensor(lat, gen.random(350) * 0.1)
        start = time.perf_counter()
        res = ds.select_threshold(trace)
        elapsed = time.perf_counter() - start
        assert elapsed < 5.0
        assert res.s_eff_at_tau_star() >= 1.0 - 1e-12


@given(
    st.integers(min_value=1, max_value=4),
    st.integers(min_value=1, max_value=5),
    st.integers(min_value=1, max_value=6),
    st.integers(min_value=0, max_value=2**31),
)
@settings(max_examples=80, derandomize=True, deadline=None)
def test_optimum_never_below_baseline(iters, n, m, seed):
    gen = ds.RngStream(seed, 200).generator()
    trace = _random_trace(gen, iters, n, m, heavy=bool(seed % 2))
    res = ds.select_threshold(trace)
    assert res.s_eff_at_tau_star() >= 1.0 - 1e-12
    assert res.tau_star in res.grid


class TestConsensus:
    def test_identical_copies_agree(self):
        gen = ds.RngStream(14).generator()
        trace = _random_trace(gen, 10, 8, 6)
        copies = [ds.TraceTensor(trace.latencies.copy(), trace.comm_times.copy()) for _ in range(8)]
        assert ds.consensus_check(copies) is True

    def test_perturbed_copy_detected(self):
        gen = ds.RngStream(15).generator()
        trace = _random_trace(gen, 10, 8, 6)
        lat = trace.latencies.copy()
        lat[3, 2, 1] += 1e-3
        copies = [trace, ds.TraceTensor(lat, trace.comm_times)]
        assert ds.consensus_check(copies) is False

    def test_worker_permutation_preserves_optimum(self):
        gen = ds.RngStream(16).generator()
        trace = _random_trace(gen, 10, 8, 6)
        perm = gen.permutation(8)
        permuted = ds.TraceTensor(trace.latencies[:, perm, :], trace.comm_times)
        a = ds.select_threshold(trace)
        b = ds.select_threshold(permuted)
        # Quantile grid and per-iteration means are symmetric in workers.
        assert a.tau_star == b.tau_star
        assert np.array_equal(a.s_eff, b.s_eff)


class TestValidationAndOutput:
    def test_trace_tensor_validation(self):
        with pytest.raises(ValueError):
            ds.TraceTensor(np.zeros((2, 2, 2)))
        with pytest.raises(ValueError):
            ds.TraceTensor(np.ones((2, 2)))
        with pytest.raises(ValueError):
            ds.TraceTensor(np.ones((2, 2, 2)), np.ones(3))

    def test_empty_grid_rejected(self):
        trace = ds.TraceTensor(np.full((1, 1, 1), 0.5))
        with pytest.raises(ValueError):
            ds.select_threshold(trace, [])
        with pytest.raises(ValueError):
            ds.select_threshold(trace, [-1.0, 0.0])

    def test_curve_csv(self, tmp_path):
        trace = ds.TraceTensor(np.full((2, 2, 2), 0.4))
        res = ds.select_threshold(trace, [0.5, 0.9])
        path = tmp_path / "curve.csv"
        write_curve_csv(path, res)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "tau,s_eff,drop_rate,step_speedup"
        assert len(lines) == 3
        assert float(lines[2].split(",")[0]) == 0.9
