"""Wall-clock latency measurement on the build host.

Single-threaded, batch = 1, one image at a time. Per width k: a fixed
number of warm-up inferences are discarded (they absorb JIT compilation
and cache effects), then `repetitions` passes over the sample each yield a
mean; the reported mean is the median of those pass means, which resists
scheduler noise on shared machines. p95 is over all individual timings.
"""

import time
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import InputError, MeasurementError, StateError
from .governor import OperatingPoint, PlatformProfile
from .model import GroupModel, forward

WARMUP_INFERENCES = 10


@dataclass(frozen=True)
class LatencyStats:
    config_k: int
    mean_ms: float
    p95_ms: float
    samples: int


def profile_host(model: GroupModel, sample: Dataset, repetitions: int,
                 warmup: int = WARMUP_INFERENCES) -> list[LatencyStats]:
    if repetitions < 3:
        raise InputError(f"repetitions must be >= 3, got {repetitions}")
    if model.trained_groups < 1:
        raise StateError("profiling requires a trained model")
    if len(sample) == 0:
        raise InputError("profiling requires a nonempty sample")
    stats = []
    for k in range(1, model.trained_groups + 1):
        for i in range(warmup):
            forward(model, sample.images[i % len(sample)], k)
        rep_means = []
        all_ms = []
        for _ in range(repetitions):
            times = np.empty(len(sample))
            for i in range(len(sample)):
                t0 = time.perf_counter()
                forward(model, sample.images[i], k)
                t1 = time.perf_counter()
                if t1 < t0:
                    raise MeasurementError("clock went backwards during measurement")
                times[i] = (t1 - t0) * 1e3
            rep_means.append(float(times.mean()))
            all_ms.append(times)
        stats.append(LatencyStats(
            config_k=k,
            mean_ms=float(np.median(rep_means)),
            p95_ms=float(np.percentile(np.concatenate(all_ms), 95)),
            samples=len(sample) * repetitions))
    return stats


def stats_to_profile(stats: list[LatencyStats], accuracy_by_k: dict[int, float],
                     name: str = "host") -> PlatformProfile:
    """Wrap measured stats as operating points: core "host", frequency 0,
    power unknown. Accuracies must be supplied (measured per k). The
    profile CSV's config_pct column encodes k as quarter-widths, so only
    models with up to four groups serialize."""
    points = []
    for s in stats:
        if s.config_k not in accuracy_by_k:
            raise InputError(f"no accuracy supplied for k={s.config_k}")
        points.append(OperatingPoint("host", "host", 0, s.config_k,
                                     s.mean_ms, float(accuracy_by_k[s.config_k])))
    return PlatformProfile(name, tuple(points))
