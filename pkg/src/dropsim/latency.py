"""Per-worker, per-micro-batch compute-time models.

A worker's micro-batch time is a deterministic base plus random noise. Noise
comes from one of several parametric families or from an empirical trace
(resampled with replacement). Parametric specs expose analytic moments and
CDFs; the bounded-lognormal spec used for the simulated-delay environment
integrates its censored moments numerically.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate, special

from .stats import RngStream, as_generator, phi_cdf

__all__ = [
    "NoiseSpec",
    "NoNoise",
    "NormalNoise",
    "LogNormalNoise",
    "BoundedLogNormalNoise",
    "BernoulliNoise",
    "ExponentialNoise",
    "GammaNoise",
    "EmpiricalNoise",
    "WorkerLatencyModel",
    "FleetSpec",
    "simulated_delay_noise",
    "sample_distribution",
    "micro_batch_time",
    "from_trace",
    "moments",
    "read_trace_csv",
    "write_trace_csv",
    "read_comm_csv",
    "write_comm_csv",
]

# Additive noise can drive a sampled time to zero or below; physical times
# are positive, so draws are floored at this fraction of the base mean.
POSITIVE_FLOOR_FRACTION = 1e-6


class NoiseSpec:
    """Base class for additive noise distributions (seconds or multipliers)."""

    def sample(self, rng, size=None):
        raise NotImplementedError

    def mean(self) -> float:
        raise NotImplementedError

    def variance(self) -> float:
        raise NotImplementedError

    def cdf(self, x: float) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class NoNoise(NoiseSpec):
    def sample(self, rng, size=None):
        return 0.0 if size is None else np.zeros(size)

    def mean(self):
        return 0.0

    def variance(self):
        return 0.0

    def cdf(self, x):
        return 1.0 if x >= 0.0 else 0.0


@dataclass(frozen=True)
class NormalNoise(NoiseSpec):
    loc: float
    std: float

    def __post_init__(self):
        if not (self.std > 0.0):
            raise ValueError("NormalNoise std must be > 0")

    def sample(self, rng, size=None):
        return as_generator(rng).normal(self.loc, self.std, size)

    def mean(self):
        return self.loc

    def variance(self):
        return self.std**2

    def cdf(self, x):
        return phi_cdf((x - self.loc) / self.std)


@dataclass(frozen=True)
class LogNormalNoise(NoiseSpec):
    """exp(N(log_mean, log_std^2))."""

    log_mean: float
    log_std: float

    def __post_init__(self):
        if not (self.log_std > 0.0):
            raise ValueError("LogNormalNoise log_std must be > 0")

    def sample(self, rng, size=None):
        return as_generator(rng).lognormal(self.log_mean, self.log_std, size)

    def mean(self):
        return math.exp(self.log_mean + 0.5 * self.log_std**2)

    def variance(self):
        s2 = self.log_std**2
        return (math.exp(s2) - 1.0) * math.exp(2.0 * self.log_mean + s2)

    def cdf(self, x):
        if x <= 0.0:
            return 0.0
        return phi_cdf((math.log(x) - self.log_mean) / self.log_std)


@dataclass(frozen=True)
class BoundedLogNormalNoise(NoiseSpec):
    """min(Z / scale_divisor, bound) with Z lognormal.

    The simulated-delay environment uses Z ~ LogNormal(4, 1) scaled by
    2*exp(4.5) and bounded at 5.5, giving a dimensionless multiplier with
    mean just below 0.5 and hard upper limit 5.5.
    """

    log_mean: float
    log_std: float
    scale_divisor: float
    bound: float

    def __post_init__(self):
        if not (self.log_std > 0.0 and self.scale_divisor > 0.0 and self.bound > 0.0):
            raise ValueError("BoundedLogNormalNoise parameters must be > 0")

    def sample(self, rng, size=None):
        z = as_generator(rng).lognormal(self.log_mean, self.log_std, size)
        return np.minimum(z / self.scale_divisor, self.bound)

    def _scaled_params(self):
        # X = Z / divisor is lognormal with shifted log-mean.
        return self.log_mean - math.log(self.scale_divisor), self.log_std

    def _density(self, x):
        mu, s = self._scaled_params()
        return math.exp(-((math.log(x) - mu) ** 2) / (2 * s * s)) / (x * s * _SQRT_2PI)

    def _censored_moment(self, k: int) -> float:
        mu, s = self._scaled_params()
        body, _ = integrate.quad(lambda x: x**k * self._density(x), 0.0, self.bound)
        tail = 1.0 - phi_cdf((math.log(self.bound) - mu) / s)
        return body + self.bound**k * tail

    def mean(self):
        return self._censored_moment(1)

    def variance(self):
        m1 = self._censored_moment(1)
        return self._censored_moment(2) - m1 * m1

    def cdf(self, x):
        if x <= 0.0:
            return 0.0
        if x >= self.bound:
            return 1.0
        mu, s = self._scaled_params()
        return phi_cdf((math.log(x) - mu) / s)


@dataclass(frozen=True)
class BernoulliNoise(NoiseSpec):
    """scale with probability p, else 0."""

    p: float
    scale: float

    def __post_init__(self):
        if not (0.0 <= self.p <= 1.0):
            raise ValueError("BernoulliNoise p must be in [0, 1]")
        if not (self.scale > 0.0):
            raise ValueError("BernoulliNoise scale must be > 0")

    def sample(self, rng, size=None):
        draws = as_generator(rng).random(size)
        out = np.where(draws < self.p, self.scale, 0.0)
        return float(out) if size is None else out

    def mean(self):
        return self.p * self.scale

    def variance(self):
        return self.p * (1.0 - self.p) * self.scale**2

    def cdf(self, x):
        if x < 0.0:
            return 0.0
        if x < self.scale:
            return 1.0 - self.p
        return 1.0


@dataclass(frozen=True)
class ExponentialNoise(NoiseSpec):
    rate: float

    def __post_init__(self):
        if not (self.rate > 0.0):
            raise ValueError("ExponentialNoise rate must be > 0")

    def sample(self, rng, size=None):
        return as_generator(rng).exponential(1.0 / self.rate, size)

    def mean(self):
        return 1.0 / self.rate

    def variance(self):
        return 1.0 / self.rate**2

    def cdf(self, x):
        return 0.0 if x <= 0.0 else 1.0 - math.exp(-self.rate * x)


@dataclass(frozen=True)
class GammaNoise(NoiseSpec):
    shape: float
    rate: float

    def __post_init__(self):
        if not (self.shape > 0.0 and self.rate > 0.0):
            raise ValueError("GammaNoise shape and rate must be > 0")

    def sample(self, rng, size=None):
        return as_generator(rng).gamma(self.shape, 1.0 / self.rate, size)

    def mean(self):
        return self.shape / self.rate

    def variance(self):
        return self.shape / self.rate**2

    def cdf(self, x):
        if x <= 0.0:
            return 0.0
        return float(special.gammainc(self.shape, self.rate * x))


@dataclass(frozen=True)
class EmpiricalNoise(NoiseSpec):
    """Uniform resampling with replacement from recorded values."""

    samples: tuple

    def __post_init__(self):
        if len(self.samples) == 0:
            raise ValueError("EmpiricalNoise needs at least one sample")
        arr = np.asarray(self.samples, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise ValueError("EmpiricalNoise samples must be finite")
        object.__setattr__(self, "samples", tuple(float(s) for s in arr))

    def _array(self):
        return np.asarray(self.samples)

    def sample(self, rng, size=None):
        arr = self._array()
        idx = as_generator(rng).integers(0, arr.size, size)
        out = arr[idx]
        return float(out) if size is None else out

    def mean(self):
        return float(self._array().mean())

    def variance(self):
        return float(self._array().var())

    def cdf(self, x):
        return float(np.count_nonzero(self._array() <= x) / len(self.samples))


_SQRT_2PI = math.sqrt(2.0 * math.pi)


def simulated_delay_noise() -> BoundedLogNormalNoise:
    """The simulated-delay environment's multiplier noise: min(Z/(2e^4.5), 5.5), Z ~ LogNormal(4, 1)."""
    return BoundedLogNormalNoise(4.0, 1.0, 2.0 * math.exp(4.5), 5.5)


def sample_distribution(spec: NoiseSpec, rng, size=None):
    """Draw from a noise spec. `rng` may be an RngStream address or a Generator."""
    return spec.sample(rng, size)


@dataclass(frozen=True)
class WorkerLatencyModel:
    """Micro-batch compute time: deterministic base plus noise.

    noise_mode "additive_absolute" samples t = base + eps; "additive_scaled_by_mean"
    samples t = base + base * eps (multiplier noise, the simulated-delay form).
    Draws are floored at a tiny positive fraction of the base so times stay
    strictly positive even for unbounded-below noise.
    """

    base_mean: float
    noise: NoiseSpec = field(default_factory=NoNoise)
    noise_mode: str = "additive_absolute"

    def __post_init__(self):
        if not (self.base_mean > 0.0):
            raise ValueError("base_mean must be > 0")
        if self.noise_mode not in ("additive_absolute", "additive_scaled_by_mean"):
            raise ValueError(f"unknown noise_mode {self.noise_mode!r}")

    def _noise_scale(self) -> float:
        return self.base_mean if self.noise_mode == "additive_scaled_by_mean" else 1.0

    def sample(self, rng, size=None):
        eps = self.noise.sample(rng, size)
        t = self.base_mean + self._noise_scale() * eps
        floor = POSITIVE_FLOOR_FRACTION * self.base_mean
        if size is None:
            return float(max(t, floor))
        return np.maximum(t, floor)

    def moments(self) -> tuple[float, float]:
        """Analytic (mean, variance) of the micro-batch time.

        The positivity floor is ignored here; for every supported parameter
        range its effect on the moments is far below the 1% contract.
        """
        s = self._noise_scale()
        return self.base_mean + s * self.noise.mean(), s * s * self.noise.variance()


@dataclass(frozen=True)
class FleetSpec:
    """N workers, each with a latency model. Homogeneous shorthand: one model."""

    workers: tuple

    @classmethod
    def homogeneous(cls, n: int, model: WorkerLatencyModel) -> "FleetSpec":
        if n < 1:
            raise ValueError("fleet needs at least one worker")
        return cls(workers=(model,) * n)

    def __post_init__(self):
        if len(self.workers) < 1:
            raise ValueError("fleet needs at least one worker")

    @property
    def n(self) -> int:
        return len(self.workers)

    @property
    def is_homogeneous(self) -> bool:
        return all(w is self.workers[0] or w == self.workers[0] for w in self.workers)


def micro_batch_time(model: WorkerLatencyModel, rng) -> float:
    """One micro-batch compute-time draw (seconds, strictly positive)."""
    return model.sample(rng)


def from_trace(samples, noise_mode: str = "additive_absolute") -> WorkerLatencyModel:
    """Latency model that bootstraps recorded micro-batch times.

    The recorded values are treated as total times: the model resamples them
    directly (base is folded out by centering noise on zero base offset).
    """
    arr = np.asarray(samples, dtype=float)
    if arr.size == 0:
        raise ValueError("trace must contain at least one sample")
    if not np.all(arr > 0.0):
        raise ValueError("trace samples must be positive")
    base = float(arr.mean())
    centered = tuple(float(x - base) for x in arr)
    return WorkerLatencyModel(base, EmpiricalNoise(centered), noise_mode)


def moments(model: WorkerLatencyModel) -> tuple[float, float]:
    """Mean and variance of a model's micro-batch time."""
    return model.moments()


# ---------------------------------------------------------------------------
# Trace file I/O. Format: CSV with header iteration,worker,micro_batch,latency_seconds.
# ---------------------------------------------------------------------------

TRACE_HEADER = ["iteration", "worker", "micro_batch", "latency_seconds"]
COMM_HEADER = ["iteration", "T_c_seconds"]


def read_trace_csv(path) -> np.ndarray:
    """Read a latency trace into a full (I, N, M) tensor.

    Rejects NaN and non-positive latencies and ragged tensors (every
    (iteration, worker) pair must carry the same number of micro-batches).
    """
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(row for row in fh if not row.startswith("#"))
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != TRACE_HEADER:
            raise ValueError(f"{path}: expected header {','.join(TRACE_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            i, n, m = int(row[0]), int(row[1]), int(row[2])
            lat = float(row[3])
            if math.isnan(lat) or lat <= 0.0:
                raise ValueError(f"{path}:{lineno}: latency must be positive, got {row[3]}")
            rows.append((i, n, m, lat))
    if not rows:
        raise ValueError(f"{path}: empty trace")
    its = sorted({r[0] for r in rows})
    wks = sorted({r[1] for r in rows})
    mbs = sorted({r[2] for r in rows})
    tensor = np.full((len(its), len(wks), len(mbs)), np.nan)
    i_ix = {v: k for k, v in enumerate(its)}
    n_ix = {v: k for k, v in enumerate(wks)}
    m_ix = {v: k for k, v in enumerate(mbs)}
    for i, n, m, lat in rows:
        tensor[i_ix[i], n_ix[n], m_ix[m]] = lat
    if np.isnan(tensor).any():
        raise ValueError(f"{path}: ragged trace, missing (iteration, worker, micro_batch) cells")
    return tensor


def write_trace_csv(path, tensor: np.ndarray, comment: str | None = None) -> None:
    tensor = np.asarray(tensor, dtype=float)
    if tensor.ndim != 3:
        raise ValueError("trace tensor must be (iterations, workers, micro_batches)")
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh)
        writer.writerow(TRACE_HEADER)
        ii, nn, mm = tensor.shape
        for i in range(ii):
            for n in range(nn):
                for m in range(mm):
                    writer.writerow([i, n, m, repr(float(tensor[i, n, m]))])


def read_comm_csv(path) -> np.ndarray:
    """Read per-iteration communication times (iteration, T_c_seconds)."""
    out = {}
    with open(path, newline="") as fh:
        reader = csv.reader(row for row in fh if not row.startswith("#"))
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != COMM_HEADER:
            raise ValueError(f"{path}: expected header {','.join(COMM_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            tc = float(row[1])
            if math.isnan(tc) or tc < 0.0:
                raise ValueError(f"{path}:{lineno}: T_c must be >= 0, got {row[1]}")
            out[int(row[0])] = tc
    if not out:
        raise ValueError(f"{path}: empty communication-time file")
    return np.asarray([out[k] for k in sorted(out)], dtype=float)


def write_comm_csv(path, comm_times, comment: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh)
        writer.writerow(COMM_HEADER)
        for i, tc in enumerate(np.asarray(comm_times, dtype=float)):
            writer.writerow([i, repr(float(tc))])
