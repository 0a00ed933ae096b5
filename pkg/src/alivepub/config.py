"""Configuration file loading.

Keys (YAML)::

    store: ./alive-store          # record store directory
    mirror: ./alive-mirror        # optional mirror directory
    bind: 127.0.0.1:8080
    token: change-me              # shared token for mutating endpoints
    doc_tokens: {my-paper: tok}   # per citing document, for acknowledgements
    refresh: {mode: nightly, nightly_at: "03:00", ttl_hours: 24}
    promotion: {min_interval_days: 90}
    link_check: true              # check reference URLs when rendering
    providers:
      - {name: crossref-proxy, kinds: [retraction], base_url: http://..., timeout_ms: 3000}

Lookup order: explicit path, then ``$ALIVE_CONFIG``, then ``./alive.yaml``.
``$ALIVE_STORE`` and ``$ALIVE_BIND`` override the file.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from datetime import time
from pathlib import Path
from typing import Mapping, Optional

import yaml

from .ledger import PromotionPolicy
from .registry import RefreshPolicy

DEFAULT_PATH = Path("alive.yaml")


@dataclass
class Config:
    store: Path = Path("alive-store")
    mirror: Optional[Path] = None
    bind: str = "127.0.0.1:8080"
    token: Optional[str] = None
    doc_tokens: dict[str, str] = field(default_factory=dict)
    refresh: RefreshPolicy = RefreshPolicy()
    promotion: PromotionPolicy = PromotionPolicy()
    providers: list[dict] = field(default_factory=list)
    link_check: bool = True

    @property
    def host(self) -> str:
        return self.bind.rsplit(":", 1)[0]

    @property
    def port(self) -> int:
        return int(self.bind.rsplit(":", 1)[1])


def _parse_time(text) -> time:
    if isinstance(text, int):
        # YAML 1.1 reads 03:00 as sexagesimal minutes
        return time(text // 60, text % 60)
    hh, mm = str(text).split(":")
    return time(int(hh), int(mm))


def config_from_mapping(data: Mapping, base: Path = Path(".")) -> Config:
    cfg = Config()
    if "store" in data:
        cfg.store = base / data["store"]
    if data.get("mirror"):
        cfg.mirror = base / data["mirror"]
    cfg.bind = str(data.get("bind", cfg.bind))
    cfg.token = data.get("token")
    cfg.doc_tokens = dict(data.get("doc_tokens") or {})
    if "refresh" in data:
        r = data["refresh"]
        cfg.refresh = RefreshPolicy(
            mode=r.get("mode", "on_the_fly"),
            nightly_at=_parse_time(r.get("nightly_at", "03:00")),
            ttl_hours=int(r.get("ttl_hours", 24)),
        )
    if "promotion" in data:
        cfg.promotion = PromotionPolicy(int(data["promotion"].get("min_interval_days", 90)))
    cfg.providers = list(data.get("providers") or [])
    cfg.link_check = bool(data.get("link_check", True))
    return cfg


def load_config(path: Optional[os.PathLike | str] = None, env: Mapping[str, str] = os.environ) -> Config:
    chosen = Path(path) if path else (Path(env["ALIVE_CONFIG"]) if env.get("ALIVE_CONFIG") else None)
    if chosen is None and DEFAULT_PATH.exists():
        chosen = DEFAULT_PATH
    if chosen is not None:
        with open(chosen, encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
        cfg = config_from_mapping(data, chosen.parent)
    else:
        cfg = Config()
    if env.get("ALIVE_STORE"):
        cfg.store = Path(env["ALIVE_STORE"])
    if env.get("ALIVE_BIND"):
        cfg.bind = env["ALIVE_BIND"]
    return cfg
