"""Orthophoto retrieval over OGC WMS and multimodal terrain description."""

import base64
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Optional, Tuple

import httpx

from .errors import (
    DegenerateGeometry,
    EmptyModelResponse,
    UnexpectedContentType,
    WmsError,
    WmsUnreachable,
)
from .gateway import ChatMessage, Gateway
from .prompts import load_prompt
from .registry import PlotAttributes, PlotGeometry

MIN_PX = 64
MAX_PX = 4096

DEFAULT_BUFFER_FRAC = 0.15
DEFAULT_TARGET_PX = 768


@dataclass
class OrthophotoRequest:
    bbox: Tuple[float, float, float, float]  # EPSG:4326 minx, miny, maxx, maxy
    width_px: int
    height_px: int
    layer: str
    format: str = "image/jpeg"

    def __post_init__(self):
        x0, y0, x1, y1 = self.bbox
        if not (x1 > x0 and y1 > y0):
            raise DegenerateGeometry("bbox must have positive width and height")
        for px in (self.width_px, self.height_px):
            if not (MIN_PX <= px <= MAX_PX):
                raise DegenerateGeometry(f"pixel dimension {px} outside [{MIN_PX}, {MAX_PX}]")


@dataclass
class OrthophotoImage:
    data: bytes
    mime: str
    bbox: Tuple[float, float, float, float]


@dataclass
class TerrainDescription:
    text: str
    model_id: str
    generated_at: datetime


def build_wms_request(
    geom: PlotGeometry,
    buffer_frac: float = DEFAULT_BUFFER_FRAC,
    target_px: int = DEFAULT_TARGET_PX,
    layer: str = "orthophoto",
    image_format: str = "image/jpeg",
) -> OrthophotoRequest:
    """Expand the parcel bbox by buffer_frac per side, preserve aspect ratio."""
    x0, y0, x1, y1 = geom.bbox()
    w, h = x1 - x0, y1 - y0
    if w <= 0 or h <= 0:
        raise DegenerateGeometry("parcel bbox has zero area")
    bbox = (x0 - w * buffer_frac, y0 - h * buffer_frac, x1 + w * buffer_frac, y1 + h * buffer_frac)
    bw, bh = bbox[2] - bbox[0], bbox[3] - bbox[1]
    if bw >= bh:
        width = target_px
        height = max(MIN_PX, round(target_px * bh / bw))
    else:
        height = target_px
        width = max(MIN_PX, round(target_px * bw / bh))
    return OrthophotoRequest(bbox=bbox, width_px=width, height_px=height, layer=layer, format=image_format)


def fetch_orthophoto(
    req: OrthophotoRequest,
    endpoint: str,
    client: Optional[httpx.Client] = None,
    timeout_s: float = 30.0,
) -> OrthophotoImage:
    """Issue a WMS 1.3.0 GetMap and validate the returned image bytes."""
    params = {
        "SERVICE": "WMS",
        "VERSION": "1.3.0",
        "REQUEST": "GetMap",
        "CRS": "EPSG:4326",
        # WMS 1.3.0 + EPSG:4326 axis order is lat,lon
        "BBOX": f"{req.bbox[1]},{req.bbox[0]},{req.bbox[3]},{req.bbox[2]}",
        "WIDTH": str(req.width_px),
        "HEIGHT": str(req.height_px),
        "LAYERS": req.layer,
        "FORMAT": req.format,
        "STYLES": "",
    }
    try:
        if client is None:
            resp = httpx.get(endpoint, params=params, timeout=timeout_s)
        else:
            resp = client.get(endpoint, params=params, timeout=timeout_s)
    except httpx.HTTPError as exc:
        raise WmsUnreachable(f"WMS request failed: {exc}") from exc
    ctype = resp.headers.get("content-type", "").split(";")[0].strip().lower()
    if "xml" in ctype or resp.status_code != 200:
        raise WmsError(f"WMS service exception (HTTP {resp.status_code}): {resp.text[:500]}")
    if ctype not in ("image/jpeg", "image/png"):
        raise UnexpectedContentType(f"unexpected content type {ctype!r}")
    if not resp.content:
        raise WmsError("WMS returned empty body")
    return OrthophotoImage(data=resp.content, mime=ctype, bbox=req.bbox)


def encode_base64(img: OrthophotoImage) -> str:
    """Data-URI base64 encoding for embedding in markdown responses."""
    b64 = base64.b64encode(img.data).decode("ascii")
    return f"data:{img.mime};base64,{b64}"


def describe_terrain(img: OrthophotoImage, attrs: PlotAttributes, gateway: Gateway) -> TerrainDescription:
    """One multimodal chat call: orthophoto + attribute summary -> narrative."""
    from .aggregate import attrs_to_text

    prompt = load_prompt("terrain_describe").format(attributes=attrs_to_text(attrs))
    messages = [
        ChatMessage(role="user", content=prompt, image_data_uri=encode_base64(img)),
    ]
    text = gateway.chat_complete("multimodal", messages)
    if not text.strip():
        raise EmptyModelResponse("multimodal model returned empty description")
    return TerrainDescription(
        text=text,
        model_id=gateway.endpoint("multimodal").model_name,
        generated_at=datetime.now(timezone.utc),
    )
