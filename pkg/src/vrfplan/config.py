"""Model configuration: transport-rate profiles, rate-set selection,
hysteresis threshold policies, traffic specification, and JSON loading.

All types are immutable after construction and validated eagerly, so any
object that exists is safe to hand to the analytic or simulation layers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .errors import InvalidConfigError

#: Shared-link capacity (Mbit/s) used when a config file does not override it.
DEFAULT_LINK_CAPACITY_MBPS = 10000.0
#: Per-unit server count (simultaneous calls) used by default.
DEFAULT_SERVER_COUNT = 50
#: Per-call service completion rate used by default.
DEFAULT_SERVICE_RATE = 0.5
#: Matching tolerance when looking up a rate value inside a profile.
_RATE_MATCH_TOL = 1e-6


@dataclass(frozen=True)
class ProfileRow:
    """One transport-rate option: radio bandwidth mapped to line rate and
    the number of calls that rate can carry."""

    bandwidth_mhz: float
    fft_size: int
    prb_count: int
    rate_mbps: float
    max_users: int

    def validate(self) -> None:
        for name in ("bandwidth_mhz", "fft_size", "prb_count", "rate_mbps", "max_users"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or isinstance(value, bool) or value <= 0:
                raise InvalidConfigError(f"profile.{name}", f"must be a positive number, got {value!r}")
        # two resource blocks serve one call
        if self.max_users != self.prb_count // 2:
            raise InvalidConfigError(
                "profile.max_users",
                f"must equal prb_count // 2 = {self.prb_count // 2}, got {self.max_users}",
            )


@dataclass(frozen=True)
class CpriProfile:
    """Ordered ladder of transport-rate options, ascending in rate."""

    rows: tuple[ProfileRow, ...]

    def __post_init__(self) -> None:
        if not self.rows:
            raise InvalidConfigError("profile", "must contain at least one row")
        for row in self.rows:
            row.validate()
        for prev, cur in zip(self.rows, self.rows[1:]):
            if not (cur.rate_mbps > prev.rate_mbps and cur.max_users > prev.max_users):
                raise InvalidConfigError(
                    "profile",
                    "rows must be strictly increasing in rate_mbps and max_users "
                    f"(violated between {prev.rate_mbps} and {cur.rate_mbps})",
                )

    def row_for_rate(self, rate_mbps: float) -> ProfileRow | None:
        for row in self.rows:
            if math.isclose(row.rate_mbps, rate_mbps, rel_tol=0.0, abs_tol=_RATE_MATCH_TOL):
                return row
        return None


def default_profile() -> CpriProfile:
    """The standard six-row rate ladder for 1.25-20 MHz carriers."""
    return CpriProfile(
        rows=(
            ProfileRow(1.25, 128, 6, 76.8, 3),
            ProfileRow(2.5, 256, 12, 153.6, 6),
            ProfileRow(5.0, 512, 25, 307.2, 12),
            ProfileRow(10.0, 1024, 50, 614.4, 25),
            ProfileRow(15.0, 1536, 75, 921.6, 37),
            ProfileRow(20.0, 2048, 100, 1228.8, 50),
        )
    )


@dataclass(frozen=True)
class RateSet:
    """The rates a radio unit may switch among, ascending, with the user
    capacity of each rate. The top rate's capacity is the unit's total
    server count."""

    rates: tuple[float, ...]
    capacities: tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.rates or len(self.rates) != len(self.capacities):
            raise InvalidConfigError("rate_set", "rates and capacities must be non-empty and equal-length")
        if any(r <= 0 for r in self.rates) or any(c <= 0 for c in self.capacities):
            raise InvalidConfigError("rate_set", "rates and capacities must be positive")
        if list(self.rates) != sorted(self.rates) or len(set(self.rates)) != len(self.rates):
            raise InvalidConfigError("rate_set", "rates must be strictly ascending")
        if list(self.capacities) != sorted(set(self.capacities)):
            raise InvalidConfigError("rate_set", "capacities must be strictly ascending")

    @property
    def count(self) -> int:
        return len(self.rates)

    @property
    def server_count(self) -> int:
        return self.capacities[-1]


def select_rates(profile: CpriProfile, n_d: int) -> RateSet:
    """Pick the ``n_d`` rates a unit switches among: the profile's top rate
    and successive halvings of it.

    The selection walks down from the highest rate in factor-of-two steps
    (e.g. 1228.8, 614.4, 307.2, ...), skipping any profile rows that are
    not on that chain. The result is returned ascending.
    """
    if not isinstance(n_d, int) or isinstance(n_d, bool) or not 1 <= n_d <= len(profile.rows):
        raise InvalidConfigError("n_d", f"must be an integer in 1..{len(profile.rows)}, got {n_d!r}")
    selected: list[ProfileRow] = []
    target = profile.rows[-1].rate_mbps
    while len(selected) < n_d:
        row = profile.row_for_rate(target)
        if row is None:
            raise InvalidConfigError(
                "n_d",
                f"profile has no rate near {target:g} Mbit/s; only "
                f"{len(selected)} rates lie on the halving chain from the top rate",
            )
        selected.append(row)
        target /= 2.0
    selected.reverse()
    return RateSet(
        rates=tuple(row.rate_mbps for row in selected),
        capacities=tuple(row.max_users for row in selected),
    )


@dataclass(frozen=True)
class ThresholdPolicy:
    """Hysteresis thresholds between adjacent rates.

    ``forward[l]`` is the user count at which an arrival pushes the unit
    from rate l+1 to rate l+2 (1-based: F_1..F_{M-1}); ``reverse[l]`` is
    the count at which a departure pulls it back down (R_1..R_{M-1}).
    By convention R_0 = 0 and F_M equals the unit's server count.
    """

    forward: tuple[int, ...]
    reverse: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.forward) != len(self.reverse):
            raise InvalidConfigError("thresholds", "forward and reverse must have equal length")
        f, r = self.forward, self.reverse
        if any(not isinstance(x, int) or x < 1 for x in f + r):
            raise InvalidConfigError("thresholds", "all thresholds must be integers >= 1")
        if any(rl > fl for fl, rl in zip(f, r)):
            raise InvalidConfigError("thresholds", "reverse thresholds must not exceed forward thresholds")
        if any(b <= a for a, b in zip(f, f[1:])) or any(b <= a for a, b in zip(r, r[1:])):
            raise InvalidConfigError("thresholds", "forward and reverse must each be strictly increasing")
        if any(fl - rl < 1 for fl, rl in zip(f, r)):
            raise InvalidConfigError("thresholds", "each forward-reverse gap must be at least 1")


def default_thresholds(rate_set: RateSet, gap: int) -> ThresholdPolicy:
    """Standard policy: switch up at each rate's full capacity, switch down
    ``gap`` calls below that."""
    if not isinstance(gap, int) or isinstance(gap, bool) or gap < 1:
        raise InvalidConfigError("threshold_gap", f"must be an integer >= 1, got {gap!r}")
    steps = [b - a for a, b in zip(rate_set.capacities, rate_set.capacities[1:])]
    if steps and gap >= min(steps):
        raise InvalidConfigError(
            "threshold_gap",
            f"must be smaller than the minimum capacity step {min(steps)}, got {gap}",
        )
    forward = rate_set.capacities[:-1]
    reverse = tuple(f - gap for f in forward)
    if any(r < 1 for r in reverse) or any(b <= a for a, b in zip(reverse, reverse[1:])):
        raise InvalidConfigError(
            "threshold_gap",
            f"gap {gap} drives a reverse threshold below 1 or out of order for capacities {rate_set.capacities}",
        )
    return ThresholdPolicy(forward=forward, reverse=reverse)


@dataclass(frozen=True)
class TrafficSpec:
    """Per-unit call traffic: arrival intensity, service rate, and the
    dimensionless normalized load a = lambda / (servers * mu)."""

    lam: float
    mu: float
    a: float
    server_count: int

    def __post_init__(self) -> None:
        if self.lam <= 0 or self.mu <= 0:
            raise InvalidConfigError("traffic", "lambda and mu must be positive")
        if not isinstance(self.server_count, int) or self.server_count < 1:
            raise InvalidConfigError("server_count", f"must be an integer >= 1, got {self.server_count!r}")
        if not math.isclose(self.a, self.lam / (self.server_count * self.mu), rel_tol=1e-12):
            raise InvalidConfigError("a", "must equal lambda / (server_count * mu) exactly")
        if not 0.0 < self.a < 1.0:
            raise InvalidConfigError("a", f"normalized load must lie in (0, 1), got {self.a}")

    @property
    def rho(self) -> float:
        return self.lam / self.mu


def traffic_from_load(a: float, mu: float, server_count: int) -> TrafficSpec:
    """Build a TrafficSpec from normalized load: lambda = a * servers * mu."""
    if not (isinstance(a, (int, float)) and not isinstance(a, bool)) or not 0.0 < a < 1.0:
        raise InvalidConfigError("a", f"must be a number in (0, 1), got {a!r}")
    if not (isinstance(mu, (int, float)) and not isinstance(mu, bool)) or mu <= 0:
        raise InvalidConfigError("mu", f"must be a positive number, got {mu!r}")
    if not isinstance(server_count, int) or isinstance(server_count, bool) or server_count < 1:
        raise InvalidConfigError("server_count", f"must be an integer >= 1, got {server_count!r}")
    return TrafficSpec(lam=a * server_count * mu, mu=mu, a=a, server_count=server_count)


@dataclass(frozen=True)
class PlanningConfig:
    """A fully validated planning scenario, ready for analysis or simulation."""

    profile: CpriProfile
    n_d: int
    threshold_gap: int
    traffic: TrafficSpec
    cluster_size: int
    link_capacity_mbps: float = DEFAULT_LINK_CAPACITY_MBPS
    rate_set: RateSet = field(init=False)
    thresholds: ThresholdPolicy = field(init=False)

    def __post_init__(self) -> None:
        if not isinstance(self.cluster_size, int) or self.cluster_size < 1:
            raise InvalidConfigError("cluster_size", f"must be an integer >= 1, got {self.cluster_size!r}")
        if not self.link_capacity_mbps > 0:
            raise InvalidConfigError("fha_capacity_mbps", "must be positive")
        rate_set = select_rates(self.profile, self.n_d)
        if rate_set.server_count != self.traffic.server_count:
            raise InvalidConfigError(
                "server_count",
                f"must match the top selected rate's capacity "
                f"{rate_set.server_count}, got {self.traffic.server_count}",
            )
        if self.link_capacity_mbps <= rate_set.rates[0]:
            raise InvalidConfigError(
                "fha_capacity_mbps",
                f"must exceed the lowest selected rate {rate_set.rates[0]:g}",
            )
        object.__setattr__(self, "rate_set", rate_set)
        object.__setattr__(self, "thresholds", default_thresholds(rate_set, self.threshold_gap))


_SCHEMA_KEYS = {
    "profile", "n_d", "threshold_gap", "a", "mu",
    "server_count", "cluster_size", "fha_capacity_mbps",
}
_REQUIRED_KEYS = {"n_d", "a", "cluster_size"}
_ROW_KEYS = {"bandwidth_mhz", "fft_size", "prb_count", "rate_mbps", "max_users"}


def config_from_dict(raw: dict) -> PlanningConfig:
    """Validate a parsed JSON object against the configuration schema.

    Unknown keys are rejected rather than ignored so that typos fail fast.
    """
    if not isinstance(raw, dict):
        raise InvalidConfigError("<root>", f"configuration must be a JSON object, got {type(raw).__name__}")
    unknown = set(raw) - _SCHEMA_KEYS
    if unknown:
        raise InvalidConfigError(sorted(unknown)[0], "unknown configuration key")
    missing = _REQUIRED_KEYS - set(raw)
    if missing:
        raise InvalidConfigError(sorted(missing)[0], "required key is missing")

    if "profile" in raw:
        rows_raw = raw["profile"]
        if not isinstance(rows_raw, list) or not rows_raw:
            raise InvalidConfigError("profile", "must be a non-empty list of row objects")
        rows = []
        for i, row in enumerate(rows_raw):
            if not isinstance(row, dict) or set(row) != _ROW_KEYS:
                raise InvalidConfigError(
                    f"profile[{i}]", f"each row must be an object with keys {sorted(_ROW_KEYS)}"
                )
            try:
                rows.append(ProfileRow(
                    bandwidth_mhz=float(row["bandwidth_mhz"]),
                    fft_size=int(row["fft_size"]),
                    prb_count=int(row["prb_count"]),
                    rate_mbps=float(row["rate_mbps"]),
                    max_users=int(row["max_users"]),
                ))
            except (TypeError, ValueError) as exc:
                raise InvalidConfigError(f"profile[{i}]", f"non-numeric field: {exc}") from exc
        profile = CpriProfile(rows=tuple(rows))
    else:
        profile = default_profile()

    def _num(key: str, default: float | None = None) -> float:
        value = raw.get(key, default)
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise InvalidConfigError(key, f"must be a number, got {value!r}")
        return float(value)

    def _int(key: str, default: int | None = None) -> int:
        value = raw.get(key, default)
        if not isinstance(value, int) or isinstance(value, bool):
            raise InvalidConfigError(key, f"must be an integer, got {value!r}")
        return value

    n_d = _int("n_d")
    gap = _int("threshold_gap", 1)
    server_count = _int("server_count", DEFAULT_SERVER_COUNT)
    cluster_size = _int("cluster_size")
    a = _num("a")
    mu = _num("mu", DEFAULT_SERVICE_RATE)
    b_c = _num("fha_capacity_mbps", DEFAULT_LINK_CAPACITY_MBPS)

    traffic = traffic_from_load(a, mu, server_count)
    return PlanningConfig(
        profile=profile,
        n_d=n_d,
        threshold_gap=gap,
        traffic=traffic,
        cluster_size=cluster_size,
        link_capacity_mbps=b_c,
    )


def load_config(path: str) -> PlanningConfig:
    """Load and validate a JSON configuration file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise InvalidConfigError("<file>", f"cannot read {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidConfigError("<file>", f"invalid JSON in {path!r}: {exc}") from exc
    return config_from_dict(raw)
