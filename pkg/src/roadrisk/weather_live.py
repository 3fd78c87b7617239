"""Live forecast acquisition: provider chain, climatology fallback, caching.

Providers are tried in priority order and must supply every requested hour
to win; partial payloads advance the chain. The first enabled provider tags
its hours "live-primary", any later one "live-secondary". When the whole
chain fails, values come from the nearest representative station's
climatology bucket for each hour's (month, hour-of-day), so a response
exists whenever station coverage does.
"""

from __future__ import annotations

import json
import math
import threading
from collections import OrderedDict
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone

import requests

from .cellgrid import GridSpec, cell_of
from .common import (NoWeatherError, format_rfc3339, from_epoch_hour,
                     parse_rfc3339, to_epoch_hour)
from .features import NEUTRAL_WEATHER
from .geo import GeoPoint, haversine_m

DEFAULT_TTL_S = 1800
DEFAULT_MAX_ENTRIES = 10000
WEATHER_VARS = ("temp_c", "dewpoint_c", "rel_humidity", "wind_ms", "precip_mm")


@dataclass(frozen=True)
class ForecastHour:
    valid_at: datetime
    temp_c: float
    dewpoint_c: float
    rel_humidity: float
    wind_ms: float
    precip_mm: float
    source: str

    def to_json(self) -> dict:
        return {"valid_at": format_rfc3339(self.valid_at),
                "temp_c": self.temp_c, "dewpoint_c": self.dewpoint_c,
                "rel_humidity": self.rel_humidity, "wind_ms": self.wind_ms,
                "precip_mm": self.precip_mm, "source": self.source}


@dataclass(frozen=True)
class ProviderConfig:
    name: str
    base_url: str
    timeout_ms: int = 2000
    enabled: bool = True
    priority: int = 0


@dataclass(frozen=True)
class FetchFailure:
    reason: str
    detail: str = ""


def default_http_get(url: str, timeout_s: float):
    """(status_code, body text); network trouble raises requests exceptions."""
    resp = requests.get(url, timeout=timeout_s)
    return resp.status_code, resp.text


def provider_fetch(p: ProviderConfig, q: GeoPoint, horizon_h: int,
                   http_get=default_http_get):
    """Hourly values keyed by epoch hour, or a typed FetchFailure.

    Every failure mode (timeout, transport, status, malformed payload)
    becomes a return value; nothing escapes to the chain.
    """
    url = f"{p.base_url}/forecast?lat={q.lat}&lon={q.lon}&hours={horizon_h}"
    try:
        status, body = http_get(url, p.timeout_ms / 1000.0)
    except requests.exceptions.Timeout:
        return FetchFailure("timeout", p.name)
    except requests.exceptions.RequestException as e:
        return FetchFailure("connection", str(e))
    if not 200 <= status < 300:
        return FetchFailure("http_status", str(status))
    try:
        doc = json.loads(body)
    except (ValueError, TypeError):
        return FetchFailure("schema", "body is not JSON")
    if not isinstance(doc, dict) or not isinstance(doc.get("hours"), list):
        return FetchFailure("schema", "missing hours list")
    out = {}
    for entry in doc["hours"]:
        if not isinstance(entry, dict):
            return FetchFailure("schema", "hour entry is not an object")
        try:
            at = parse_rfc3339(entry["valid_at"])
        except (KeyError, ValueError, TypeError):
            return FetchFailure("schema", "bad valid_at")
        values = {}
        for var in WEATHER_VARS:
            v = entry.get(var)
            if not isinstance(v, (int, float)) or isinstance(v, bool) \
                    or not math.isfinite(v):
                return FetchFailure("schema", f"bad {var}")
            values[var] = float(v)
        out[to_epoch_hour(at)] = values
    return out


def apply_env_overrides(providers, env) -> list:
    """RRM_PROVIDER_<NAME>_URL entries replace matching base URLs."""
    out = []
    for p in providers:
        key = f"RRM_PROVIDER_{p.name.upper().replace('-', '_')}_URL"
        url = env.get(key)
        if url:
            p = ProviderConfig(p.name, url, p.timeout_ms, p.enabled, p.priority)
        out.append(p)
    return out


class WeatherChain:
    """get_point_forecast with an LRU+TTL cache keyed by (cell, current hour).

    Thread safe; concurrent misses on one key share a single upstream fetch.
    """

    def __init__(self, providers, climatology, station_map, stations,
                 grid: GridSpec, clock=None, ttl_s: float = DEFAULT_TTL_S,
                 max_entries: int = DEFAULT_MAX_ENTRIES,
                 http_get=default_http_get):
        enabled = [p for p in providers if p.enabled]
        priorities = [p.priority for p in enabled]
        if len(set(priorities)) != len(priorities):
            raise ValueError("enabled providers must have unique priorities")
        if ttl_s <= 0:
            raise ValueError("ttl must be positive")
        self.providers = sorted(enabled, key=lambda p: p.priority)
        self.all_providers = list(providers)
        self.clim = climatology
        self.station_map = dict(station_map)
        self.stations = list(stations)
        self.grid = grid
        self.clock = clock or (lambda: datetime.now(timezone.utc))
        self.ttl_s = ttl_s
        self.max_entries = max_entries
        self.http_get = http_get
        self._cache = OrderedDict()
        self._lock = threading.Lock()
        self._inflight = {}
        self._health = {p.name: {"status": "disabled" if not p.enabled
                                 else "untried", "reason": None,
                                 "checked_at": None}
                        for p in providers}

    # ------------------------------------------------------------- plumbing

    def health(self) -> dict:
        with self._lock:
            return {name: dict(row) for name, row in self._health.items()}

    def _set_health(self, name: str, status: str, reason, now: datetime):
        with self._lock:
            self._health[name] = {"status": status, "reason": reason,
                                  "checked_at": format_rfc3339(now)}

    def _station_for(self, q: GeoPoint) -> str:
        cell = cell_of(q, self.grid)
        sid = self.station_map.get(cell)
        if sid is not None:
            return sid
        if not self.stations:
            raise NoWeatherError("no representative stations configured")
        return min(self.stations, key=lambda s: haversine_m(s.loc, q)).id

    def _source_tag(self, index: int) -> str:
        return "live-primary" if index == 0 else "live-secondary"

    # ----------------------------------------------------------- resolution

    def _from_climatology(self, q: GeoPoint, hours) -> list:
        sid = self._station_for(q)
        out = []
        for at in hours:
            bucket = self.clim.lookup(sid, at.month, at.hour)
            if bucket is None:
                raise NoWeatherError(
                    f"no climatology for station {sid} month {at.month} "
                    f"hour {at.hour}")
            values = {var: bucket.means.get(var, NEUTRAL_WEATHER[var])
                      for var in WEATHER_VARS}
            out.append(ForecastHour(valid_at=at, source="climatology", **values))
        return out

    def _fetch_uncached(self, q: GeoPoint, horizon_h: int, now: datetime) -> list:
        start = from_epoch_hour(to_epoch_hour(now)) + timedelta(hours=1)
        hours = [start + timedelta(hours=i) for i in range(horizon_h)]
        wanted = [to_epoch_hour(h) for h in hours]
        for index, p in enumerate(self.providers):
            result = provider_fetch(p, q, horizon_h, self.http_get)
            if isinstance(result, FetchFailure):
                self._set_health(p.name, "failed", result.reason, now)
                continue
            missing = [h for h in wanted if h not in result]
            if missing:
                self._set_health(p.name, "failed",
                                 f"partial:{len(missing)} hours", now)
                continue
            self._set_health(p.name, "ok", None, now)
            tag = self._source_tag(index)
            return [ForecastHour(valid_at=at, source=tag,
                                 **result[to_epoch_hour(at)]) for at in hours]
        return self._from_climatology(q, hours)

    def get_point_forecast(self, q: GeoPoint, horizon_h: int = 24) -> list:
        now = self.clock()
        key = (cell_of(q, self.grid), to_epoch_hour(now), horizon_h)
        cached = self._cache_get(key, now)
        if cached is not None:
            return cached
        with self._lock:
            key_lock = self._inflight.setdefault(key, threading.Lock())
        with key_lock:
            cached = self._cache_get(key, now)
            if cached is not None:
                return cached
            try:
                value = self._fetch_uncached(q, horizon_h, now)
            except Exception:
                with self._lock:
                    self._inflight.pop(key, None)
                raise
            with self._lock:
                self._cache[key] = (now, value)
                self._cache.move_to_end(key)
                while len(self._cache) > self.max_entries:
                    self._cache.popitem(last=False)
                self._inflight.pop(key, None)
            return list(value)

    def _cache_get(self, key, now: datetime):
        with self._lock:
            entry = self._cache.get(key)
            if entry is None:
                return None
            stored_at, value = entry
            if (now - stored_at).total_seconds() >= self.ttl_s:
                del self._cache[key]
                return None
            self._cache.move_to_end(key)
            return list(value)
