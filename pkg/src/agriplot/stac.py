"""STAC item-search client for Sentinel-2 scene discovery."""

from dataclasses import dataclass
from datetime import date, datetime
from typing import Dict, List, Optional, Tuple

import httpx

from .errors import EndpointUnreachable, InvalidStacResponse


@dataclass
class SceneRef:
    item_id: str
    timestamp: datetime
    assets: Dict[str, str]  # band/asset name -> href
    cloud_cover_pct: Optional[float] = None


def stac_search(
    endpoint: str,
    bbox: Tuple[float, float, float, float],
    window: Tuple[date, date],
    collection: str = "sentinel-2-l2a",
    max_cloud_pct: float = 100.0,
    limit: int = 50,
    client: Optional[httpx.Client] = None,
) -> List[SceneRef]:
    """POST an item-search and return scene references, newest first."""
    start, end = window
    body = {
        "bbox": list(bbox),
        "datetime": f"{start.isoformat()}T00:00:00Z/{end.isoformat()}T23:59:59Z",
        "collections": [collection],
        "limit": limit,
        "query": {"eo:cloud_cover": {"lte": max_cloud_pct}},
    }
    url = endpoint.rstrip("/") + "/search"
    try:
        if client is None:
            resp = httpx.post(url, json=body, timeout=30.0)
        else:
            resp = client.post(url, json=body, timeout=30.0)
    except httpx.HTTPError as exc:
        raise EndpointUnreachable(f"STAC search failed: {exc}") from exc
    if resp.status_code != 200:
        raise EndpointUnreachable(f"STAC endpoint returned HTTP {resp.status_code}")
    try:
        data = resp.json()
        features = data["features"]
    except (ValueError, KeyError, TypeError) as exc:
        raise InvalidStacResponse(f"malformed STAC response: {exc}") from exc

    scenes: List[SceneRef] = []
    for feat in features:
        try:
            props = feat.get("properties", {})
            ts = datetime.fromisoformat(props["datetime"].replace("Z", "+00:00"))
            assets = {name: a["href"] for name, a in feat.get("assets", {}).items()}
            scenes.append(
                SceneRef(
                    item_id=feat["id"],
                    timestamp=ts,
                    assets=assets,
                    cloud_cover_pct=props.get("eo:cloud_cover"),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidStacResponse(f"malformed STAC item: {exc}") from exc
    scenes.sort(key=lambda s: s.timestamp, reverse=True)
    return scenes
