"""Application configuration: endpoints, data sources, budgets.

Loaded from one YAML (or JSON) file; base URLs and API keys can be
overridden per role through AGRIPLOT_<ROLE>_BASE_URL / _API_KEY
environment variables.
"""

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional

import yaml

from .gateway import ModelEndpoint, ROLES
from .registry import RegistryConfig


@dataclass
class WmsConfig:
    endpoint: Optional[str] = None
    layer: str = "orthophoto"
    image_format: str = "image/jpeg"
    buffer_frac: float = 0.15
    target_px: int = 768


@dataclass
class StacConfig:
    endpoint: Optional[str] = None
    collection: str = "sentinel-2-l2a"
    max_cloud_pct: float = 60.0
    window_days: int = 30


@dataclass
class RagConfig:
    chunk_size: int = 1000
    overlap: int = 200
    top_k: int = 4
    use_reranker: bool = True
    index_dir: Optional[str] = None


@dataclass
class AppConfig:
    registry: RegistryConfig = field(default_factory=RegistryConfig)
    wms: WmsConfig = field(default_factory=WmsConfig)
    stac: StacConfig = field(default_factory=StacConfig)
    rag: RagConfig = field(default_factory=RagConfig)
    endpoints: Dict[str, ModelEndpoint] = field(default_factory=dict)
    scenes_dir: Optional[str] = None  # local ASCII-grid scene store
    data_dir: str = "./data"
    context_budget: int = 24000
    history_window: int = 6  # turns of history sent to the final model
    excluded_scl_classes: tuple = (3, 8, 9, 10)


def _endpoint_from_dict(role: str, data: dict) -> ModelEndpoint:
    base_url = os.getenv(f"AGRIPLOT_{role.upper()}_BASE_URL", data.get("base_url", ""))
    api_key = os.getenv(f"AGRIPLOT_{role.upper()}_API_KEY", data.get("api_key", ""))
    return ModelEndpoint(
        role=role,
        base_url=base_url,
        model_name=data.get("model_name", ""),
        api_key=api_key,
        timeout_s=float(data.get("timeout_s", 60.0)),
        max_retries=int(data.get("max_retries", 2)),
    )


def load_config(path: str) -> AppConfig:
    raw = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> AppConfig:
    cfg = AppConfig()
    reg = raw.get("registry", {})
    cfg.registry = RegistryConfig(
        fixture_path=reg.get("fixture_path"),
        url_template=reg.get("url_template"),
        field_map=reg.get("field_map", {k: k for k in ("area_ha", "perimeter_m", "slope_pct", "altitude_m", "land_use")}),
        geometry_field=reg.get("geometry_field", "geometry"),
        timeout_s=float(reg.get("timeout_s", 10.0)),
    )
    wms = raw.get("wms", {})
    cfg.wms = WmsConfig(
        endpoint=wms.get("endpoint"),
        layer=wms.get("layer", "orthophoto"),
        image_format=wms.get("image_format", "image/jpeg"),
        buffer_frac=float(wms.get("buffer_frac", 0.15)),
        target_px=int(wms.get("target_px", 768)),
    )
    stac = raw.get("stac", {})
    cfg.stac = StacConfig(
        endpoint=stac.get("endpoint"),
        collection=stac.get("collection", "sentinel-2-l2a"),
        max_cloud_pct=float(stac.get("max_cloud_pct", 60.0)),
        window_days=int(stac.get("window_days", 30)),
    )
    rag = raw.get("rag", {})
    cfg.rag = RagConfig(
        chunk_size=int(rag.get("chunk_size", 1000)),
        overlap=int(rag.get("overlap", 200)),
        top_k=int(rag.get("top_k", 4)),
        use_reranker=bool(rag.get("use_reranker", True)),
        index_dir=rag.get("index_dir"),
    )
    for role, data in raw.get("endpoints", {}).items():
        if role not in ROLES:
            raise ValueError(f"unknown endpoint role {role!r} in config")
        cfg.endpoints[role] = _endpoint_from_dict(role, data or {})
    cfg.scenes_dir = raw.get("scenes_dir")
    cfg.data_dir = raw.get("data_dir", "./data")
    cfg.context_budget = int(raw.get("context_budget", 24000))
    cfg.history_window = int(raw.get("history_window", 6))
    cfg.excluded_scl_classes = tuple(raw.get("excluded_scl_classes", (3, 8, 9, 10)))
    return cfg
