"""Shared plumbing: error types, UTC time helpers, hashing, deterministic RNG."""

from __future__ import annotations

import hashlib
import json
import math
from datetime import datetime, timezone


class RoadRiskError(Exception):
    """Base error carrying a stable machine-readable code."""

    code = "ERROR"

    def __init__(self, message: str, code: str | None = None):
        super().__init__(message)
        if code is not None:
            self.code = code


class ConfigError(RoadRiskError):
    code = "CONFIG_INVALID"


class NoWeatherError(RoadRiskError):
    code = "NO_WEATHER"


SECONDS_PER_HOUR = 3600


def parse_rfc3339(text: str) -> datetime:
    """Parse an RFC 3339 timestamp; 'Z' and explicit offsets both accepted.

    Returns a timezone-aware datetime normalized to UTC.
    """
    t = text.strip()
    if t.endswith("Z") or t.endswith("z"):
        t = t[:-1] + "+00:00"
    dt = datetime.fromisoformat(t)
    if dt.tzinfo is None:
        raise ValueError(f"timestamp missing timezone: {text!r}")
    return dt.astimezone(timezone.utc)


def format_rfc3339(dt: datetime) -> str:
    dt = dt.astimezone(timezone.utc).replace(microsecond=0)
    return dt.strftime("%Y-%m-%dT%H:%M:%SZ")


def to_epoch_hour(dt: datetime) -> int:
    """Truncate to the containing UTC hour, returned as hours since the epoch."""
    return int(dt.timestamp()) // SECONDS_PER_HOUR


def from_epoch_hour(hour: int) -> datetime:
    return datetime.fromtimestamp(hour * SECONDS_PER_HOUR, tz=timezone.utc)


def format_epoch_hour(hour: int) -> str:
    return format_rfc3339(from_epoch_hour(hour))


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def dump_json(obj, path=None, indent=None) -> str:
    """Serialize with sorted keys so identical inputs give identical bytes."""
    text = json.dumps(obj, sort_keys=True, indent=indent, allow_nan=False)
    if path is not None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)
            f.write("\n")
    return text


def require_finite(name: str, value: float) -> float:
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")
    return value


# 64-bit LCG (Knuth MMIX constants). Used wherever a seeded choice must
# reproduce bit-for-bit across platforms and library versions: synthetic
# world generation, negative sampling, training shuffles.
_LCG_A = 6364136223846793005
_LCG_C = 1442695040888963407
_MASK64 = (1 << 64) - 1


class DetRng:
    """Deterministic integer-state RNG with fixed constants.

    Not cryptographic and not numpy-compatible on purpose: the stream is part
    of the artifact contract (same seed, same bytes, any platform).
    """

    def __init__(self, seed: int):
        self.state = (seed ^ 0x9E3779B97F4A7C15) & _MASK64
        for _ in range(4):
            self._next()

    def _next(self) -> int:
        self.state = (_LCG_A * self.state + _LCG_C) & _MASK64
        return self.state

    def uniform(self) -> float:
        """Uniform in [0, 1) with 53 random bits."""
        return (self._next() >> 11) / float(1 << 53)

    def uniform_in(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.uniform()

    def randint(self, n: int) -> int:
        """Uniform integer in [0, n) by rejection (no modulo bias)."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            v = self._next()
            if v < limit:
                return v % n

    def normal(self, mean: float = 0.0, std: float = 1.0) -> float:
        # Box-Muller; one value per call keeps the stream position simple.
        u1 = self.uniform()
        while u1 <= 0.0:
            u1 = self.uniform()
        u2 = self.uniform()
        z = math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)
        return mean + std * z

    def poisson(self, lam: float) -> int:
        """Knuth multiplication method; fine for the small rates used here."""
        if lam <= 0:
            return 0
        limit = math.exp(-lam)
        k = 0
        p = 1.0
        while True:
            p *= self.uniform()
            if p <= limit:
                return k
            k += 1

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]

    def sample_weighted(self, cumulative_weights) -> int:
        """Index draw from a cumulative weight array (last entry = total)."""
        total = cumulative_weights[-1]
        r = self.uniform() * total
        lo, hi = 0, len(cumulative_weights) - 1
        while lo < hi:
            mid = (lo + hi) // 2
            if cumulative_weights[mid] <= r:
                lo = mid + 1
            else:
                hi = mid
        return lo
