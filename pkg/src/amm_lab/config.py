"""
Run configuration.

Defaults live in the packaged ``default_config.json``; a user file is merged
over them key by key. Unknown keys and ill-typed values are rejected so a
typo cannot silently fall back to a default.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

from amm_lab.analytics import AnalyticsConfig, CIMethod
from amm_lab.errors import AmmLabError, ConfigError
from amm_lab.il_metrics import Normalization
from amm_lab.ingest.filters import DatasetFilter
from amm_lab.ledger import FeeAttribution
from amm_lab.sim import GridParams, PathSpec, Strategy

CONFIG_VERSION = 1


def default_config_text() -> str:
    return resources.files("amm_lab").joinpath("data/default_config.json").read_text()


def _merge(base: dict, override: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        path = f"{where}.{key}" if where else key
        if key not in base:
            raise ConfigError(f"unknown config key {path!r}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = _merge(base[key], value, path)
        else:
            out[key] = value
    return out


@dataclass(frozen=True)
class Config:
    raw: dict
    filter: DatasetFilter
    analytics: AnalyticsConfig
    normalization: Normalization
    fee_attribution: FeeAttribution
    bin_width: float
    sim_path: PathSpec
    sim_params: GridParams
    strategies: tuple[Strategy, ...]
    n_paths: int
    pool_type: str

    @property
    def digest(self) -> str:
        text = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def _pair(value: Any, name: str) -> tuple[float, float] | None:
    if value is None:
        return None
    if not (isinstance(value, list) and len(value) == 2):
        raise ConfigError(f"{name} must be a [lo, hi] pair or null")
    return float(value[0]), float(value[1])


def _strategies(items: Any) -> tuple[Strategy, ...]:
    if not isinstance(items, list) or not items:
        raise ConfigError("simulate.strategies must be a non-empty list")
    out = []
    for i, item in enumerate(items):
        if not isinstance(item, dict) or set(item) != {"name", "duration_days", "range_size"}:
            raise ConfigError(f"simulate.strategies[{i}] needs exactly name, duration_days, range_size")
        out.append(Strategy(str(item["name"]), float(item["duration_days"]), float(item["range_size"])))
    names = [s.name for s in out]
    if len(set(names)) != len(names):
        raise ConfigError("strategy names must be unique")
    return tuple(out)


def build_config(raw: dict) -> Config:
    if raw.get("config_version") != CONFIG_VERSION:
        raise ConfigError(f"unsupported config_version {raw.get('config_version')!r}")
    try:
        f, a, s = raw["filter"], raw["analysis"], raw["simulate"]
        allow = f["pool_allowlist"]
        dataset_filter = DatasetFilter(
            min_tvl_usd=float(f["min_tvl_usd"]),
            block_lo=int(f["block_lo"]),
            block_hi=int(f["block_hi"]),
            closed_only=bool(f["closed_only"]),
            pool_allowlist=None if allow is None else frozenset(allow),
        )
        analytics = AnalyticsConfig(
            stable_tokens=frozenset(a["stable_tokens"]),
            size_edges=tuple(a["size_edges_usd"]),
            range_edges=tuple(a["range_edges"]),
            percentiles=_pair(a["percentiles"], "percentiles"),
            duration_thresholds=_pair(a["duration_thresholds_days"], "duration_thresholds_days"),
            range_thresholds=_pair(a["range_thresholds"], "range_thresholds"),
            ci_method=CIMethod(a["ci_method"]),
        )
        bin_width = float(a["histogram_bin_width"])
        if not bin_width > 0:
            raise ConfigError("histogram_bin_width must be positive")
        n_paths = int(s["n_paths"])
        if n_paths < 1:
            raise ConfigError("simulate.n_paths must be at least 1")
        path = PathSpec(**{k: type(getattr(PathSpec, k))(v) for k, v in s["path"].items()})
        if path.n_steps < 1 or path.dt_seconds < 1 or path.sigma < 0 or not path.p0 > 0:
            raise ConfigError("simulate.path needs p0 > 0, sigma >= 0, n_steps >= 1, dt_seconds >= 1")
        params = GridParams(
            deposit_usd=float(s["deposit_usd"]),
            fee_ppm=int(s["fee_ppm"]),
            pool_liquidity_other=float(s["pool_liquidity_other"]),
            compound=bool(s["compound"]),
        )
        if not params.deposit_usd > 0 or params.pool_liquidity_other < 0 or not 0 <= params.fee_ppm < 1_000_000:
            raise ConfigError("simulate needs deposit_usd > 0, pool_liquidity_other >= 0, fee_ppm in [0, 1e6)")
        strategies = _strategies(s["strategies"])
        span = path.n_steps * path.dt_seconds / 86400
        for st in strategies:
            if st.duration_days > span:
                raise ConfigError(f"strategy {st.name!r} lasts {st.duration_days} days, longer than the {span}-day paths")
            if st.duration_days * 86400 < path.dt_seconds:
                raise ConfigError(f"strategy {st.name!r} is shorter than one path step")
        return Config(
            raw=raw,
            filter=dataset_filter,
            analytics=analytics,
            normalization=Normalization(a["normalization"]),
            fee_attribution=FeeAttribution(a["fee_attribution"]),
            bin_width=bin_width,
            sim_path=path,
            sim_params=params,
            strategies=strategies,
            n_paths=n_paths,
            pool_type=str(s["pool_type"]),
        )
    except ConfigError:
        raise
    except (AmmLabError, ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from None


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> Config:
    raw = json.loads(default_config_text())
    if path is not None:
        try:
            user = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"no such config file: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc.msg} (line {exc.lineno})") from None
        if not isinstance(user, dict):
            raise ConfigError(f"{path}: top level must be an object")
        raw = _merge(raw, user)
    if overrides:
        raw = _merge(raw, overrides)
    return build_config(raw)
