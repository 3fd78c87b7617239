"""Configuration: one JSON file covering pipeline and service settings.

Every subcommand accepts --config; omitted sections fall back to defaults
documented here. Unknown keys are rejected so typos fail loudly instead of
silently running with defaults.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

from .common import ConfigError
from .model import TrainConfig
from .weather_live import ProviderConfig

DEFAULT_MATCH_CUTOFF_M = 1000.0
DEFAULT_MAX_SEGMENT_LEN_M = 500.0
DEFAULT_NEGATIVE_RATIO = 5
DEFAULT_MAX_STATIONS = 149
DEFAULT_RING = 1
DEFAULT_PORT = 8080
DEFAULT_MAX_RESULTS = 5000
DEFAULT_REFRESH_INTERVAL_S = 3600


class Workspace:
    """Fixed output layout under one root directory."""

    def __init__(self, root: str):
        self.root = root
        self.data_dir = os.path.join(root, "data")
        self.work_dir = os.path.join(root, "work")
        self.models_dir = os.path.join(root, "models")
        self.overlay_dir = os.path.join(root, "overlay")
        self.forecast_dir = os.path.join(root, "forecast")
        self.reports_dir = os.path.join(root, "reports")
        self.tiles_dir = os.path.join(root, "tiles")
        self.static_dir = os.path.join(root, "static")

        self.roads_path = os.path.join(self.data_dir, "roads.ndjson")
        self.stations_path = os.path.join(self.data_dir, "stations.csv")
        self.weather_path = os.path.join(self.data_dir, "weather.csv")
        self.incidents_path = os.path.join(self.data_dir, "incidents.csv")

        self.clean_incidents_path = os.path.join(self.work_dir, "incidents.ndjson")
        self.clean_stations_path = os.path.join(self.work_dir, "stations.ndjson")
        self.clean_weather_path = os.path.join(self.work_dir, "weather.ndjson")
        self.clean_roads_path = os.path.join(self.work_dir, "roads.ndjson")
        self.ingest_counts_path = os.path.join(self.work_dir, "ingest_counts.json")

        self.context_path = os.path.join(self.work_dir, "context.json")
        self.baseline_train_path = os.path.join(self.work_dir, "baseline_train.csv")
        self.baseline_eval_path = os.path.join(self.work_dir, "baseline_eval.csv")
        self.segment_train_path = os.path.join(self.work_dir, "segment_train.csv")
        self.segment_eval_path = os.path.join(self.work_dir, "segment_eval.csv")
        self.segments_path = os.path.join(self.work_dir, "segments.json")
        self.matches_path = os.path.join(self.work_dir, "matched_events.ndjson")
        self.match_stats_path = os.path.join(self.work_dir, "match_stats.json")

        self.baseline_bundle_path = os.path.join(self.models_dir, "baseline.json")
        self.segment_bundle_path = os.path.join(self.models_dir, "segment.json")
        self.overlay_path = os.path.join(self.overlay_dir, "overlay.bin")
        self.forecast_path = os.path.join(self.forecast_dir, "forecast.json")
        self.bundle_path = os.path.join(root, "bundle.tar.gz")
        self.contact_log_path = os.path.join(root, "contact.log")

    def report_path(self, subcommand: str) -> str:
        return os.path.join(self.reports_dir, f"{subcommand}.json")


def _require(doc: dict, allowed: dict, where: str):
    for key in doc:
        if key not in allowed:
            raise ConfigError(f"unknown {where} key {key!r}")
    for key, kinds in allowed.items():
        if key in doc and kinds is not None and not isinstance(doc[key], kinds):
            raise ConfigError(f"{where} key {key!r} has wrong type")


@dataclass
class PipelineConfig:
    seed: int = 42
    years: tuple | None = None
    eval_year: int | None = None
    grid_resolution_deg: float = 0.2
    max_segment_len_m: float = DEFAULT_MAX_SEGMENT_LEN_M
    match_cutoff_m: float = DEFAULT_MATCH_CUTOFF_M
    negative_ratio: int = DEFAULT_NEGATIVE_RATIO
    ring: int = DEFAULT_RING
    max_stations: int = DEFAULT_MAX_STATIONS
    weather_mode: str = "observed"
    rep_month: int | None = None
    train: TrainConfig = field(default_factory=TrainConfig)

    @classmethod
    def from_doc(cls, doc: dict) -> "PipelineConfig":
        allowed = {
            "seed": int, "years": list, "eval_year": int,
            "grid_resolution_deg": (int, float),
            "max_segment_len_m": (int, float),
            "match_cutoff_m": (int, float), "negative_ratio": int,
            "ring": int, "max_stations": int, "weather_mode": str,
            "rep_month": int, "train": dict,
        }
        _require(doc, allowed, "pipeline")
        out = cls()
        for key in allowed:
            if key not in doc:
                continue
            if key == "train":
                train_doc = doc["train"]
                train_allowed = {"lr": (int, float), "epochs": int,
                                 "batch": int, "l2_lambda": (int, float),
                                 "seed": int}
                _require(train_doc, train_allowed, "train")
                out.train = TrainConfig(**train_doc)
            elif key == "years":
                years = doc["years"]
                if len(years) != 2 or years[0] > years[1]:
                    raise ConfigError(f"bad years range: {years}")
                out.years = (int(years[0]), int(years[1]))
            else:
                setattr(out, key, doc[key])
        if out.weather_mode not in ("observed", "climatology"):
            raise ConfigError(f"bad weather_mode: {out.weather_mode!r}")
        if out.negative_ratio < 1:
            raise ConfigError("negative_ratio must be >= 1")
        if out.rep_month is not None and not 1 <= out.rep_month <= 12:
            raise ConfigError(f"rep_month out of range: {out.rep_month}")
        return out


@dataclass
class ServiceConfig:
    port: int = DEFAULT_PORT
    min_road_zoom: int = 10
    refresh_interval_s: float = DEFAULT_REFRESH_INTERVAL_S
    max_results: int = DEFAULT_MAX_RESULTS
    admin_token: str | None = None
    smtp: dict | None = None
    providers: list = field(default_factory=list)

    @classmethod
    def from_doc(cls, doc: dict) -> "ServiceConfig":
        allowed = {
            "port": int, "min_road_zoom": int,
            "refresh_interval_s": (int, float), "max_results": int,
            "admin_token": str, "smtp": dict, "providers": list,
        }
        _require(doc, allowed, "service")
        out = cls()
        for key in allowed:
            if key in doc:
                setattr(out, key, doc[key])
        if out.smtp is not None:
            smtp_allowed = {"host": str, "port": int, "sender": str,
                            "recipient": str}
            _require(out.smtp, smtp_allowed, "smtp")
            for required in smtp_allowed:
                if required not in out.smtp:
                    raise ConfigError(f"smtp config missing {required!r}")
        providers = []
        for i, p in enumerate(out.providers):
            p_allowed = {"name": str, "base_url": str, "timeout_ms": int,
                         "enabled": bool, "priority": int}
            _require(p, p_allowed, "provider")
            if "name" not in p or "base_url" not in p:
                raise ConfigError(f"provider {i} needs name and base_url")
            providers.append(ProviderConfig(**p))
        out.providers = providers
        if not 1 <= out.port <= 65535:
            raise ConfigError(f"port out of range: {out.port}")
        if out.refresh_interval_s <= 0:
            raise ConfigError("refresh_interval_s must be positive")
        return out


@dataclass
class Config:
    pipeline: PipelineConfig
    service: ServiceConfig
    world: dict | None = None

    @classmethod
    def from_doc(cls, doc: dict) -> "Config":
        if not isinstance(doc, dict):
            raise ConfigError("config root must be an object")
        service_doc = doc.pop("service", {})
        world_doc = doc.pop("world", None)
        if not isinstance(service_doc, dict):
            raise ConfigError("service section must be an object")
        if world_doc is not None and not isinstance(world_doc, dict):
            raise ConfigError("world section must be an object")
        return cls(pipeline=PipelineConfig.from_doc(doc),
                   service=ServiceConfig.from_doc(service_doc),
                   world=world_doc)


def load_config(path: str | None) -> Config:
    if path is None:
        return Config(PipelineConfig(), ServiceConfig())
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}") from e
    return Config.from_doc(doc)
