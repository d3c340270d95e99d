"""Operating-point modeling and budget-driven selection.

A platform is a declarative list of (core, frequency, model width) points
with measured latency, optional power, and per-width accuracy. The
governor is a pure selector over that list: actual frequency writes and
core pinning are out of scope. Three knobs gate which points are
reachable; a disabled knob pins its axis to a deterministic default
(mapping off -> one reference core, DVFS off -> each core's highest
frequency, width switching off -> the widest model per (core, frequency)).
Each disabled knob therefore shrinks the reachable set, which is what
makes dynamic ranges monotone in the knob set.
"""

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, InfeasibleError, InputError, ProfileError

PROFILE_HEADER = "platform,core,freq_hz,config_pct,latency_ms,power_mw,accuracy"
METRICS = ("time_ms", "power_mw", "energy_mj")


@dataclass(frozen=True)
class OperatingPoint:
    platform: str
    core: str
    freq_hz: int
    config_k: int
    latency_ms: float
    accuracy: float
    power_mw: float | None = None
    energy_mj: float | None = None

    def __post_init__(self):
        if self.freq_hz < 0:
            raise ConfigError(f"freq_hz must be >= 0, got {self.freq_hz}")
        if self.config_k < 1:
            raise ConfigError(f"config_k must be >= 1, got {self.config_k}")
        if not (math.isfinite(self.latency_ms) and self.latency_ms > 0):
            raise ConfigError(f"latency_ms must be finite and > 0, got {self.latency_ms}")
        if self.power_mw is not None and not (math.isfinite(self.power_mw) and self.power_mw > 0):
            raise ConfigError(f"power_mw must be finite and > 0, got {self.power_mw}")
        if not 0.0 <= self.accuracy <= 1.0:
            raise ConfigError(f"accuracy must be in [0,1], got {self.accuracy}")
        derived = None
        if self.power_mw is not None:
            derived = self.latency_ms * self.power_mw / 1000.0
        if self.energy_mj is None:
            object.__setattr__(self, "energy_mj", derived)
        elif derived is not None and not math.isclose(self.energy_mj, derived, rel_tol=1e-6):
            raise ConfigError(f"energy_mj {self.energy_mj} inconsistent with "
                              f"latency*power = {derived}")

    def metric(self, name: str) -> float | None:
        if name == "time_ms":
            return self.latency_ms
        if name == "power_mw":
            return self.power_mw
        if name == "energy_mj":
            return self.energy_mj
        raise ConfigError(f"unknown metric {name!r}; expected one of {METRICS}")


@dataclass(frozen=True)
class KnobSet:
    config: bool = True
    dvfs: bool = False
    mapping: bool = False


def parse_knobs(text: str) -> KnobSet:
    """Parse "config+dvfs+map" style knob lists."""
    kwargs = {"config": False, "dvfs": False, "mapping": False}
    for token in text.split("+"):
        token = token.strip().lower()
        if token in ("map", "mapping"):
            kwargs["mapping"] = True
        elif token in ("config", "dvfs"):
            kwargs[token] = True
        elif token in ("", "none"):
            pass
        else:
            raise ConfigError(f"unknown knob {token!r}; expected config, dvfs, map")
    return KnobSet(**kwargs)


@dataclass(frozen=True)
class PlatformProfile:
    name: str
    points: tuple[OperatingPoint, ...]
    dvfs_enabled: bool = field(init=False, compare=False)
    mapping_enabled: bool = field(init=False, compare=False)
    config_enabled: bool = field(init=False, compare=False)

    def __post_init__(self):
        if not self.points:
            raise ConfigError("profile must contain at least one point")
        seen = {}
        acc_by_k = {}
        for p in self.points:
            key = (p.core, p.freq_hz, p.config_k)
            if key in seen:
                raise ConfigError(f"duplicate operating point {key}")
            seen[key] = p
            if p.config_k in acc_by_k and acc_by_k[p.config_k] != p.accuracy:
                raise ConfigError(f"accuracy differs across points with k={p.config_k}")
            acc_by_k[p.config_k] = p.accuracy
        object.__setattr__(self, "mapping_enabled", len({p.core for p in self.points}) > 1)
        object.__setattr__(self, "dvfs_enabled",
                           any(len({p.freq_hz for p in self.points if p.core == c}) > 1
                               for c in {p.core for p in self.points}))
        object.__setattr__(self, "config_enabled", len(acc_by_k) > 1)


@dataclass(frozen=True)
class Budget:
    metric: str
    limit: float

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ConfigError(f"unknown budget metric {self.metric!r}; expected one of {METRICS}")
        if not (math.isfinite(self.limit) and self.limit > 0):
            raise ConfigError(f"budget limit must be finite and > 0, got {self.limit}")


# -------------------------------------------------------------- selection


def allowed_points(profile: PlatformProfile, knobs: KnobSet,
                   reference_core: str | None = None) -> list[OperatingPoint]:
    """Points reachable under the knob set, in profile order. With mapping
    disabled, execution is pinned to reference_core (default: the first
    point's core)."""
    pts = list(profile.points)
    if not knobs.mapping:
        core = reference_core if reference_core is not None else pts[0].core
        pts = [p for p in pts if p.core == core]
        if not pts:
            raise ConfigError(f"core {core!r} not present in profile {profile.name!r}")
    if not knobs.dvfs:
        fmax = {}
        for p in pts:
            fmax[p.core] = max(fmax.get(p.core, 0), p.freq_hz)
        pts = [p for p in pts if p.freq_hz == fmax[p.core]]
    if not knobs.config:
        kmax = {}
        for p in pts:
            key = (p.core, p.freq_hz)
            kmax[key] = max(kmax.get(key, 0), p.config_k)
        pts = [p for p in pts if p.config_k == kmax[(p.core, p.freq_hz)]]
    return pts


def select_point(profile: PlatformProfile, budget: Budget, knobs: KnobSet,
                 reference_core: str | None = None) -> OperatingPoint:
    """Highest-accuracy point within budget among the reachable points.
    Ties break to minimum energy (unknown energy loses), then minimum
    latency, then minimum frequency, then profile order."""
    allowed = allowed_points(profile, knobs, reference_core)
    vals = [(p, p.metric(budget.metric)) for p in allowed]
    known = [(p, v) for p, v in vals if v is not None]
    if not known:
        raise InputError(f"no point in profile {profile.name!r} carries {budget.metric}")
    feasible = [p for p, v in known if v <= budget.limit]
    if not feasible:
        raise InfeasibleError(
            f"no operating point satisfies {budget.metric} <= {budget.limit:g}",
            min_achievable=min(v for _, v in known))

    def key(p: OperatingPoint):
        energy = p.energy_mj if p.energy_mj is not None else math.inf
        return (-p.accuracy, energy, p.latency_ms, p.freq_hz)

    best = feasible[0]
    for p in feasible[1:]:
        if key(p) < key(best):
            best = p
    return best


def pareto_frontier(profile: PlatformProfile, metric: str) -> list[OperatingPoint]:
    """Points not dominated in (metric ascending, accuracy descending),
    sorted by metric. A point dominates another when it is no worse on
    both axes and strictly better on one. Points lacking the metric are
    ignored; exact (metric, accuracy) duplicates all survive."""
    scored = [(p.metric(metric), p) for p in profile.points if p.metric(metric) is not None]
    scored.sort(key=lambda t: (t[0], -t[1].accuracy))
    frontier: list[OperatingPoint] = []
    best_acc = -math.inf
    i = 0
    while i < len(scored):
        j = i
        while j < len(scored) and scored[j][0] == scored[i][0]:
            j += 1
        group_max = max(p.accuracy for _, p in scored[i:j])
        if group_max > best_acc:
            frontier.extend(p for _, p in scored[i:j] if p.accuracy == group_max)
            best_acc = group_max
        i = j
    return frontier


def dynamic_range(profile: PlatformProfile, metric: str, knobs: KnobSet,
                  reference_core: str | None = None) -> float:
    """max/min of the metric over the points reachable under the knobs."""
    vals = [p.metric(metric) for p in allowed_points(profile, knobs, reference_core)]
    vals = [v for v in vals if v is not None]
    if not vals:
        raise InputError(f"no point in profile {profile.name!r} carries {metric}")
    return max(vals) / min(vals)


# ---------------------------------------------------------------- file IO


def _parse_row(lineno: int, row: list[str], accuracy_by_k) -> OperatingPoint:
    if len(row) != 7:
        raise ProfileError(f"line {lineno}: expected 7 fields, got {len(row)}", "bad_row")
    platform, core, freq_s, pct_s, lat_s, pow_s, acc_s = (f.strip() for f in row)
    try:
        freq = int(freq_s)
        pct = int(pct_s)
        lat = float(lat_s)
        power = float(pow_s) if pow_s else None
        acc = float(acc_s) if acc_s else None
    except ValueError as e:
        raise ProfileError(f"line {lineno}: {e}", "bad_number") from e
    if pct not in (25, 50, 75, 100):
        raise ProfileError(f"line {lineno}: config_pct {pct} not in 25/50/75/100", "bad_config")
    k = pct // 25
    if not (math.isfinite(lat) and lat > 0):
        raise ProfileError(f"line {lineno}: latency_ms must be > 0, got {lat}", "bad_latency")
    if power is not None and not (math.isfinite(power) and power > 0):
        raise ProfileError(f"line {lineno}: power_mw must be > 0, got {power}", "bad_power")
    if acc is None:
        if accuracy_by_k is None or k not in accuracy_by_k:
            raise ProfileError(f"line {lineno}: accuracy missing and no fallback for k={k}",
                               "missing_accuracy")
        acc = float(accuracy_by_k[k])
    if not 0.0 <= acc <= 1.0:
        raise ProfileError(f"line {lineno}: accuracy must be in [0,1], got {acc}", "bad_accuracy")
    return OperatingPoint(platform, core, freq, k, lat, acc, power)


def load_profile(path, accuracy_by_k: dict[int, float] | None = None,
                 name: str | None = None) -> PlatformProfile:
    """Read a profile CSV. Rows with an empty accuracy field take their
    value from accuracy_by_k (e.g. a trained model's measured accuracy)."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ProfileError(f"{path}: empty file", "empty") from None
        if [h.strip() for h in header] != PROFILE_HEADER.split(","):
            raise ProfileError(f"{path}: bad header {','.join(header)!r}", "bad_header")
        points = []
        seen = {}
        acc_by_k = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            p = _parse_row(lineno, row, accuracy_by_k)
            key = (p.core, p.freq_hz, p.config_k)
            if key in seen:
                raise ProfileError(f"line {lineno}: duplicate point {key} "
                                   f"(first at line {seen[key]})", "duplicate_point")
            seen[key] = lineno
            if p.config_k in acc_by_k and acc_by_k[p.config_k][0] != p.accuracy:
                raise ProfileError(
                    f"line {lineno}: accuracy {p.accuracy} for k={p.config_k} differs from "
                    f"{acc_by_k[p.config_k][0]} at line {acc_by_k[p.config_k][1]}",
                    "inconsistent_accuracy")
            acc_by_k.setdefault(p.config_k, (p.accuracy, lineno))
            points.append(p)
    if not points:
        raise ProfileError(f"{path}: no data rows", "empty")
    return PlatformProfile(name or path.stem, tuple(points))


def save_profile(profile: PlatformProfile, path):
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(PROFILE_HEADER.split(","))
        for p in profile.points:
            writer.writerow([p.platform, p.core, p.freq_hz, p.config_k * 25,
                             repr(p.latency_ms),
                             "" if p.power_mw is None else repr(p.power_mw),
                             repr(p.accuracy)])
    return Path(path)
