"""Plot identifiers and parcel lookup against a remote or fixture registry.

Plot IDs are colon-joined lists of registry field codes (province,
municipality, district, ... parcel). They are treated as opaque ordered
codes: individual positions are never interpreted.
"""

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import httpx

from .errors import (
    MalformedPlotId,
    PlotNotFound,
    RegistryResponseInvalid,
    RegistryUnreachable,
)

MIN_COMPONENTS = 5
MAX_COMPONENTS = 7

_ID_RE = re.compile(r"^\d+(?::\d+){4,6}$")


@dataclass(frozen=True)
class PlotId:
    components: Tuple[int, ...]

    def __post_init__(self):
        n = len(self.components)
        if not (MIN_COMPONENTS <= n <= MAX_COMPONENTS):
            raise MalformedPlotId(
                f"plot ID must have {MIN_COMPONENTS}-{MAX_COMPONENTS} components, got {n}"
            )
        if any(c < 0 for c in self.components):
            raise MalformedPlotId("plot ID components must be non-negative")

    def __str__(self) -> str:
        return format_plot_id(self)


def parse_plot_id(text: str) -> PlotId:
    """Parse a colon-separated plot ID such as "0:0:107:161:1"."""
    stripped = text.strip()
    if not _ID_RE.match(stripped):
        raise MalformedPlotId(f"not a valid plot ID: {text!r}")
    return PlotId(tuple(int(tok) for tok in stripped.split(":")))


def format_plot_id(plot_id: PlotId) -> str:
    """Canonical colon-joined decimal form, no padding."""
    return ":".join(str(c) for c in plot_id.components)


@dataclass(frozen=True)
class PlotAttributes:
    area_ha: float
    perimeter_m: float
    slope_pct: float
    altitude_m: float
    land_use: str

    def __post_init__(self):
        if self.area_ha <= 0 or self.perimeter_m <= 0:
            raise RegistryResponseInvalid("area and perimeter must be positive")
        if not (0 <= self.slope_pct < 1000):
            raise RegistryResponseInvalid(f"slope_pct out of range: {self.slope_pct}")


Ring = List[Tuple[float, float]]


@dataclass(frozen=True)
class PlotGeometry:
    """Polygon in EPSG:4326 lon/lat; first ring exterior, rest holes."""

    rings: Tuple[Tuple[Tuple[float, float], ...], ...]

    def __post_init__(self):
        if not self.rings:
            raise RegistryResponseInvalid("geometry has no rings")
        for ring in self.rings:
            if len(ring) < 4:
                raise RegistryResponseInvalid("ring must have at least 4 points")
            if ring[0] != ring[-1]:
                raise RegistryResponseInvalid("ring must be closed (first == last)")

    @property
    def exterior(self) -> Tuple[Tuple[float, float], ...]:
        return self.rings[0]

    @property
    def holes(self) -> Tuple[Tuple[Tuple[float, float], ...], ...]:
        return self.rings[1:]

    def bbox(self) -> Tuple[float, float, float, float]:
        xs = [p[0] for p in self.exterior]
        ys = [p[1] for p in self.exterior]
        return (min(xs), min(ys), max(xs), max(ys))


def _segments_intersect(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return 0 if v == 0 else (1 if v > 0 else -1)

    o1 = orient(p1, p2, q1)
    o2 = orient(p1, p2, q2)
    o3 = orient(q1, q2, p1)
    o4 = orient(q1, q2, p2)
    return o1 != o2 and o3 != o4


def check_ring_simple(ring: Sequence[Tuple[float, float]]) -> bool:
    """Pairwise segment check that the ring does not self-intersect.

    Adjacent segments share an endpoint and are skipped. O(n^2); fixture
    parcels are small.
    """
    segs = [(ring[i], ring[i + 1]) for i in range(len(ring) - 1)]
    n = len(segs)
    for i in range(n):
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue  # first and last share the closing point
            if _segments_intersect(*segs[i], *segs[j]):
                return False
    return True


@dataclass(frozen=True)
class PlotRecord:
    id: PlotId
    attributes: PlotAttributes
    geometry: PlotGeometry
    source: str  # "remote" | "fixture"

    def __post_init__(self):
        x0, y0, x1, y1 = self.geometry.bbox()
        if not (x1 > x0 and y1 > y0):
            raise RegistryResponseInvalid("geometry bounding box is degenerate")

    def to_dict(self) -> dict:
        return {
            "plot_id": format_plot_id(self.id),
            "attributes": {
                "area_ha": self.attributes.area_ha,
                "perimeter_m": self.attributes.perimeter_m,
                "slope_pct": self.attributes.slope_pct,
                "altitude_m": self.attributes.altitude_m,
                "land_use": self.attributes.land_use,
            },
            "geometry": {
                "type": "Polygon",
                "coordinates": [[list(p) for p in ring] for ring in self.geometry.rings],
            },
            "source": self.source,
        }


_ATTR_KEYS = ("area_ha", "perimeter_m", "slope_pct", "altitude_m", "land_use")


@dataclass
class RegistryConfig:
    """Where plot records come from.

    fixture_path: GeoJSON FeatureCollection keyed by property "plot_id".
    url_template: remote HTTP GET template with {c0}..{c6} placeholders.
    field_map: response JSON key for each attribute (defaults to the
    fixture property names).
    """

    fixture_path: Optional[str] = None
    url_template: Optional[str] = None
    field_map: Dict[str, str] = field(
        default_factory=lambda: {k: k for k in _ATTR_KEYS}
    )
    geometry_field: str = "geometry"
    timeout_s: float = 10.0


def _geometry_from_geojson(geom: dict) -> PlotGeometry:
    if not isinstance(geom, dict) or geom.get("type") != "Polygon":
        raise RegistryResponseInvalid("expected GeoJSON Polygon geometry")
    try:
        rings = tuple(
            tuple((float(x), float(y)) for x, y in ring)
            for ring in geom["coordinates"]
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise RegistryResponseInvalid(f"bad polygon coordinates: {exc}") from exc
    return PlotGeometry(rings)


def _attributes_from_mapping(props: dict, field_map: Dict[str, str]) -> PlotAttributes:
    values = {}
    for attr in _ATTR_KEYS:
        key = field_map.get(attr, attr)
        if key not in props:
            raise RegistryResponseInvalid(f"registry response missing field {key!r}")
        values[attr] = props[key]
    try:
        return PlotAttributes(
            area_ha=float(values["area_ha"]),
            perimeter_m=float(values["perimeter_m"]),
            slope_pct=float(values["slope_pct"]),
            altitude_m=float(values["altitude_m"]),
            land_use=str(values["land_use"]),
        )
    except (TypeError, ValueError) as exc:
        raise RegistryResponseInvalid(f"bad attribute value: {exc}") from exc


class FixtureRegistry:
    """Immutable lookup over a local GeoJSON FeatureCollection."""

    def __init__(self, features_by_id: Dict[str, dict]):
        self._features = features_by_id

    @classmethod
    def load(cls, path: str) -> "FixtureRegistry":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if data.get("type") != "FeatureCollection":
            raise RegistryResponseInvalid("fixture must be a GeoJSON FeatureCollection")
        by_id: Dict[str, dict] = {}
        for feat in data.get("features", []):
            pid = feat.get("properties", {}).get("plot_id")
            if pid is None:
                raise RegistryResponseInvalid("fixture feature missing plot_id property")
            by_id[str(pid)] = feat
        return cls(by_id)

    def ids(self) -> List[str]:
        return sorted(self._features)

    def fetch(self, plot_id: PlotId) -> PlotRecord:
        key = format_plot_id(plot_id)
        feat = self._features.get(key)
        if feat is None:
            raise PlotNotFound(f"plot {key} not in fixture registry")
        attrs = _attributes_from_mapping(feat.get("properties", {}), {k: k for k in _ATTR_KEYS})
        geom = _geometry_from_geojson(feat.get("geometry"))
        if not check_ring_simple(geom.exterior):
            raise RegistryResponseInvalid(f"fixture plot {key} exterior ring self-intersects")
        return PlotRecord(id=plot_id, attributes=attrs, geometry=geom, source="fixture")


def fetch_plot(
    plot_id: PlotId,
    config: RegistryConfig,
    fixture: Optional[FixtureRegistry] = None,
    client: Optional[httpx.Client] = None,
) -> PlotRecord:
    """Resolve a plot ID to a full record.

    Fixture mode wins when a fixture registry is available; otherwise the
    remote URL template is expanded with the ID components and queried.
    """
    if fixture is not None:
        return fixture.fetch(plot_id)
    if config.fixture_path:
        return FixtureRegistry.load(config.fixture_path).fetch(plot_id)
    if not config.url_template:
        raise RegistryUnreachable("no fixture path or remote URL template configured")

    subst = {f"c{i}": str(c) for i, c in enumerate(plot_id.components)}
    for i in range(len(plot_id.components), MAX_COMPONENTS):
        subst[f"c{i}"] = ""
    url = config.url_template.format(**subst)
    try:
        if client is None:
            resp = httpx.get(url, timeout=config.timeout_s)
        else:
            resp = client.get(url, timeout=config.timeout_s)
    except httpx.HTTPError as exc:
        raise RegistryUnreachable(f"registry request failed: {exc}") from exc
    if resp.status_code == 404:
        raise PlotNotFound(f"plot {format_plot_id(plot_id)} not found in remote registry")
    if resp.status_code != 200:
        raise RegistryUnreachable(f"registry returned HTTP {resp.status_code}")
    try:
        body = resp.json()
    except ValueError as exc:
        raise RegistryResponseInvalid("registry response is not JSON") from exc
    if not isinstance(body, dict):
        raise RegistryResponseInvalid("registry response is not a JSON object")

    attrs = _attributes_from_mapping(body.get("properties", body), config.field_map)
    geom_obj = body.get(config.geometry_field)
    geom = _geometry_from_geojson(geom_obj)
    return PlotRecord(id=plot_id, attributes=attrs, geometry=geom, source="remote")
