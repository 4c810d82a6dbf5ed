"""Latency model checks: every parametric noise family against its analytic
moments at 10^6 draws, the bounded heavy-tail delay, trace round-trips."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dropsim import (
    BernoulliNoise,
    BoundedLogNormalNoise,
    EmpiricalNoise,
    ExponentialNoise,
    FleetSpec,
    GammaNoise,
    LogNormalNoise,
    NoNoise,
    NormalNoise,
    RngStream,
    WorkerLatencyModel,
    from_trace,
    micro_batch_time,
    read_comm_csv,
    read_trace_csv,
    sample_distribution,
    simulated_delay_noise,
    write_comm_csv,
    write_trace_csv,
)
from dropsim.latency import POSITIVE_FLOOR_FRACTION, moments

N_DRAWS = 1_000_000

# Matched-moment noise table: every family tuned to mean 0.225, variance 0.05
# (the bernoulli row's variance follows from p(1-p)*scale^2 = 0.0506).
FAMILIES = [
    NormalNoise(0.225, math.sqrt(0.05)),
    LogNormalNoise(-1.84, 0.83),
    BernoulliNoise(0.5, 0.45),
    ExponentialNoise(1.0 / 0.225),
    GammaNoise(0.225**2 / 0.05, 0.225 / 0.05),
]


def _draws(spec, n=N_DRAWS, seed=17):
    return sample_distribution(spec, RngStream(seed, 3), n)


class TestNoiseMoments:
    @pytest.mark.parametrize("spec", FAMILIES, ids=lambda s: type(s).__name__)
    def test_mc_matches_analytic_within_one_percent(self, spec):
        x = _draws(spec)
        assert np.mean(x) == pytest.approx(spec.mean(), rel=0.01, abs=1e-4)
        assert np.var(x) == pytest.approx(spec.variance(), rel=0.01)

    def test_lognormal_row_moments(self):
        # LogNormal(-1.84, 0.83) lands near (0.225, 0.05); the table rounds.
        spec = LogNormalNoise(-1.84, 0.83)
        assert spec.mean() == pytest.approx(0.225, abs=0.003)
        assert spec.variance() == pytest.approx(0.05, abs=0.002)

    def test_exponential_row_moments(self):
        spec = ExponentialNoise(4.47)
        assert spec.mean() == pytest.approx(0.2237, abs=5e-4)
        assert spec.variance() == pytest.approx(0.0500, abs=5e-4)

    def test_bernoulli_is_two_point(self):
        x = _draws(BernoulliNoise(0.5, 0.45), n=10_000)
        assert set(np.unique(x)) == {0.0, 0.45}
        assert BernoulliNoise(0.5, 0.45).mean() == pytest.approx(0.225)

    def test_gamma_shape_one_is_exponential(self):
        g = GammaNoise(1.0, 4.5)
        e = ExponentialNoise(4.5)
        assert g.mean() == pytest.approx(e.mean())
        assert g.variance() == pytest.approx(e.variance())
        for x in (0.0, 0.1, 0.5, 2.0):
            assert g.cdf(x) == pytest.approx(e.cdf(x), abs=1e-12)

    def test_nonoise_degenerate(self):
        assert NoNoise().mean() == 0.0
        assert NoNoise().variance() == 0.0
        assert np.all(_draws(NoNoise(), n=100) == 0.0)

    @pytest.mark.parametrize(
        "spec",
        [s for s in FAMILIES if not isinstance(s, BernoulliNoise)],
        ids=lambda s: type(s).__name__,
    )
    def test_cdf_matches_empirical(self, spec):
        # Continuous families only; a two-point law has no quantile inverse.
        x = _draws(spec, n=200_000)
        for q in (0.1, 0.3, 0.7, 0.9):
            point = float(np.quantile(x, q))
            assert spec.cdf(point) == pytest.approx(q, abs=0.01)

    def test_validation(self):
        with pytest.raises(ValueError):
            NormalNoise(0.0, -1.0)
        with pytest.raises(ValueError):
            ExponentialNoise(0.0)
        with pytest.raises(ValueError):
            GammaNoise(-1.0, 1.0)
        with pytest.raises(ValueError):
            BernoulliNoise(1.5, 1.0)
        with pytest.raises(ValueError):
            EmpiricalNoise(())


class TestBoundedDelay:
    def test_mean_near_half(self):
        # Scaled lognormal censored at 5.5: mean ~0.4959, so ~0.5 within 2%.
        spec = simulated_delay_noise()
        assert spec.mean() == pytest.approx(0.5, rel=0.02)
        assert spec.mean() == pytest.approx(0.4959, abs=5e-4)
        assert spec.variance() == pytest.approx(0.365, abs=5e-3)

    def test_mc_against_censored_quadrature(self):
        spec = simulated_delay_noise()
        x = _draws(spec)
        assert np.mean(x) == pytest.approx(spec.mean(), rel=0.01)
        assert np.var(x) == pytest.approx(spec.variance(), rel=0.01)

    def test_draws_respect_bound(self):
        spec = simulated_delay_noise()
        x = _draws(spec, n=200_000)
        assert np.max(x) <= 5.5
        assert np.min(x) >= 0.0
        # The censoring point carries positive mass.
        assert np.mean(x == 5.5) > 0.001

    def test_cdf_saturates_at_bound(self):
        spec = simulated_delay_noise()
        assert spec.cdf(5.5 - 1e-9) < 1.0
        assert spec.cdf(5.5) == 1.0
        assert spec.cdf(0.0) == 0.0


class TestWorkerLatencyModel:
    def test_noiseless_exact(self):
        model = WorkerLatencyModel(0.45, NoNoise())
        assert micro_batch_time(model, RngStream(0)) == 0.45
        assert model.moments() == (0.45, 0.0)

    def test_gamma_example_total_mean(self):
        # Gamma(shape 1, rate 4.5) on a 0.45 s base: total mean 0.675 +- 0.003.
        # The band holds for the model mean (0.45 + 1/4.5 = 0.6722); the MC
        # estimate is tied to the model mean at 4 standard errors.
        model = WorkerLatencyModel(0.45, GammaNoise(1.0, 4.5))
        mu, var = model.moments()
        assert abs(mu - 0.675) <= 0.003
        n = 400_000
        x = model.sample(RngStream(5).generator(), n)
        assert abs(np.mean(x) - mu) <= 4.0 * math.sqrt(var / n)

    def test_scaled_mode_multiplies_by_base(self):
        spec = simulated_delay_noise()
        model = WorkerLatencyModel(2.0, spec, noise_mode="additive_scaled_by_mean")
        mu, var = model.moments()
        assert mu == pytest.approx(2.0 * (1.0 + spec.mean()))
        assert var == pytest.approx(4.0 * spec.variance())
        x = model.sample(RngStream(6).generator(), 400_000)
        assert np.mean(x) == pytest.approx(mu, rel=0.02)
        assert np.max(x) <= 2.0 * 6.5

    def test_heavy_tail_mean_is_one_and_a_half_base(self):
        model = WorkerLatencyModel(1.0, simulated_delay_noise(), noise_mode="additive_scaled_by_mean")
        x = model.sample(RngStream(7).generator(), N_DRAWS)
        assert np.mean(x) == pytest.approx(1.5, rel=0.02)
        assert np.max(x) <= 6.5

    @pytest.mark.parametrize(
        "spec",
        FAMILIES + [simulated_delay_noise()],
        ids=lambda s: type(s).__name__,
    )
    def test_model_mc_matches_moments(self, spec):
        model = WorkerLatencyModel(0.45, spec)
        mu, var = model.moments()
        x = model.sample(RngStream(8).generator(), N_DRAWS)
        assert np.mean(x) == pytest.approx(mu, rel=0.01)
        if var > 0:
            assert np.var(x) == pytest.approx(var, rel=0.01)

    def test_positivity_floor(self):
        # A wildly negative noise cannot drive latency to zero or below.
        model = WorkerLatencyModel(1.0, NormalNoise(-5.0, 0.1))
        x = model.sample(RngStream(9).generator(), 10_000)
        assert np.min(x) >= POSITIVE_FLOOR_FRACTION * 1.0

    def test_validation(self):
        with pytest.raises(ValueError):
            WorkerLatencyModel(0.0, NoNoise())
        with pytest.raises(ValueError):
            WorkerLatencyModel(1.0, NoNoise(), noise_mode="bogus")


class TestFleetSpec:
    def test_homogeneous(self):
        model = WorkerLatencyModel(1.0, NoNoise())
        fleet = FleetSpec.homogeneous(4, model)
        assert fleet.n == 4
        assert fleet.is_homogeneous
        assert all(w == model for w in fleet.workers)

    def test_heterogeneous(self):
        fast = WorkerLatencyModel(1.0, NoNoise())
        slow = WorkerLatencyModel(2.0, NoNoise())
        fleet = FleetSpec((slow, fast, fast))
        assert fleet.n == 3
        assert not fleet.is_homogeneous

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            FleetSpec(())


class TestFromTrace:
    def test_constant_trace(self):
        model = from_trace([0.45, 0.45, 0.45])
        assert model.moments()[0] == pytest.approx(0.45)
        x = model.sample(RngStream(10).generator(), 1000)
        assert np.all(np.abs(x - 0.45) < 1e-12)

    def test_two_point_trace_mean(self):
        model = from_trace([0.4, 0.5])
        x = model.sample(RngStream(11).generator(), N_DRAWS)
        assert abs(np.mean(x) - 0.45) <= 0.001
        assert set(np.round(np.unique(x), 12)) == {0.4, 0.5}

    def test_bootstrap_matches_sample_moments(self):
        gen = RngStream(12).generator()
        samples = 0.3 + gen.gamma(2.0, 0.1, size=5000)
        model = from_trace(samples)
        mu, var = moments(model)
        assert mu == pytest.approx(float(np.mean(samples)), rel=1e-12)
        assert var == pytest.approx(float(np.var(samples)), rel=1e-9)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            from_trace([0.4, -0.1])
        with pytest.raises(ValueError):
            from_trace([])

    @given(st.lists(st.floats(min_value=0.01, max_value=10.0), min_size=2, max_size=50))
    @settings(max_examples=50, derandomize=True)
    def test_resampling_stays_in_range(self, samples):
        model = from_trace(samples)
        x = model.sample(RngStream(13).generator(), 256)
        assert np.min(x) >= min(samples) - 1e-9
        assert np.max(x) <= max(samples) + 1e-9


class TestTraceCsv:
    def test_round_trip(self, tmp_path):
        gen = RngStream(14).generator()
        tensor = 0.1 + gen.random((3, 4, 5))
        path = tmp_path / "trace.csv"
        write_trace_csv(path, tensor)
        back = read_trace_csv(path)
        assert back.shape == (3, 4, 5)
        assert np.array_equal(back, tensor)

    def test_round_trip_with_comment(self, tmp_path):
        tensor = np.full((1, 2, 2), 0.45)
        path = tmp_path / "trace.csv"
        write_trace_csv(path, tensor, comment="config_hash=abc")
        assert read_trace_csv(path).shape == (1, 2, 2)

    def test_rejects_nonpositive_entries(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text(
            "iteration,worker,micro_batch,latency_seconds\n0,0,0,0.5\n0,0,1,-0.1\n"
        )
        with pytest.raises(ValueError):
            read_trace_csv(path)

    def test_rejects_ragged_tensor(self, tmp_path):
        path = tmp_path / "ragged.csv"
        path.write_text(
            "iteration,worker,micro_batch,latency_seconds\n"
            "0,0,0,0.5\n0,0,1,0.5\n0,1,0,0.5\n"
        )
        with pytest.raises(ValueError):
            read_trace_csv(path)

    def test_rejects_bad_header(self, tmp_path):
        path = tmp_path / "hdr.csv"
        path.write_text("a,b,c,d\n0,0,0,0.5\n")
        with pytest.raises(ValueError):
            read_trace_csv(path)

    def test_comm_round_trip(self, tmp_path):
        path = tmp_path / "comm.csv"
        write_comm_csv(path, [0.5, 0.25, 0.125])
        assert np.array_equal(read_comm_csv(path), [0.5, 0.25, 0.125])

    def test_comm_rejects_negative(self, tmp_path):
        path = tmp_path / "comm.csv"
        path.write_text("iteration,T_c_seconds\n0,-0.5\n")
        with pytest.raises(ValueError):
            read_comm_csv(path)
