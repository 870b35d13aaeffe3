"""Scene acquisition: local ASCII-grid store or STAC-discovered assets."""

from datetime import date, timedelta
from pathlib import Path
from typing import List, Optional, Tuple

import httpx

from .config import AppConfig
from .errors import EndpointUnreachable
from .raster import BandGrid, SceneStack, load_ascii_grid
from .stac import stac_search

BAND_NAMES = ("red", "nir", "green", "blue", "scl")


def load_local_scenes(scenes_dir: str, window: Tuple[date, date]) -> List[SceneStack]:
    """Scenes laid out as <dir>/<YYYY-MM-DD>/<band>.asc."""
    start, end = window
    stacks: List[SceneStack] = []
    root = Path(scenes_dir)
    if not root.is_dir():
        return stacks
    for sub in sorted(root.iterdir()):
        if not sub.is_dir():
            continue
        try:
            ts = date.fromisoformat(sub.name)
        except ValueError:
            continue
        if not (start <= ts <= end):
            continue
        bands = {}
        for name in BAND_NAMES:
            path = sub / f"{name}.asc"
            if path.exists():
                bands[name] = load_ascii_grid(path.read_text(encoding="ascii"))
        if "red" in bands and "nir" in bands:
            stacks.append(SceneStack(timestamp=ts, bands=bands))
    return stacks


def fetch_stac_scenes(
    config: AppConfig,
    bbox: Tuple[float, float, float, float],
    window: Tuple[date, date],
    client: Optional[httpx.Client] = None,
) -> List[SceneStack]:
    """Discover scenes via STAC and fetch ASCII-grid band assets over HTTP."""
    refs = stac_search(
        config.stac.endpoint,
        bbox=bbox,
        window=window,
        collection=config.stac.collection,
        max_cloud_pct=config.stac.max_cloud_pct,
        client=client,
    )
    stacks: List[SceneStack] = []
    for ref in refs:
        bands = {}
        for name in BAND_NAMES:
            href = ref.assets.get(name)
            if not href:
                continue
            try:
                if client is None:
                    resp = httpx.get(href, timeout=60.0)
                else:
                    resp = client.get(href, timeout=60.0)
            except httpx.HTTPError as exc:
                raise EndpointUnreachable(f"asset fetch failed: {exc}") from exc
            if resp.status_code != 200:
                raise EndpointUnreachable(f"asset {href} returned HTTP {resp.status_code}")
            bands[name] = load_ascii_grid(resp.text)
        if "red" in bands and "nir" in bands:
            stacks.append(SceneStack(timestamp=ref.timestamp.date(), bands=bands))
    return stacks


def default_window(window_days: int, today: Optional[date] = None) -> Tuple[date, date]:
    end = today or date.today()
    return (end - timedelta(days=window_days), end)
