"""Band grids, vegetation/water indices, masking, compositing and zonal stats.

Grids are stored row-major with row 0 at the top, matching the ESRI ASCII
grid file layout. All spatial operations work on pixel centers.
"""

import math
import warnings
from dataclasses import dataclass, field
from datetime import date
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    EmptyInput,
    GeoreferenceMismatch,
    GridParseError,
    MissingBand,
    NoValidPixels,
)
from .numfmt import round_half_up
from .registry import PlotGeometry

DENOM_EPS = 1e-9

# Sentinel-2 SCL classes excluded by default: cloud shadow (3), cloud
# medium/high probability (8, 9), thin cirrus (10).
DEFAULT_EXCLUDED_SCL = frozenset({3, 8, 9, 10})


class IndexKind(str, Enum):
    NDVI = "NDVI"
    EVI = "EVI"
    NDWI = "NDWI"


REQUIRED_BANDS: Dict[IndexKind, Tuple[str, ...]] = {
    IndexKind.NDVI: ("nir", "red"),
    IndexKind.EVI: ("nir", "red", "blue"),
    IndexKind.NDWI: ("green", "nir"),
}


@dataclass(eq=False)
class BandGrid:
    ncols: int
    nrows: int
    origin_x: float  # lower-left corner, CRS units
    origin_y: float
    cellsize: float
    nodata: float
    values: np.ndarray  # shape (nrows, ncols), row 0 = top

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(self.nrows, self.ncols)
        if self.cellsize <= 0:
            raise GridParseError("cellsize must be positive")

    def valid_mask(self) -> np.ndarray:
        return self.values != self.nodata

    def same_georef(self, other: "BandGrid") -> bool:
        return (
            self.ncols == other.ncols
            and self.nrows == other.nrows
            and math.isclose(self.origin_x, other.origin_x)
            and math.isclose(self.origin_y, other.origin_y)
            and math.isclose(self.cellsize, other.cellsize)
        )

    def pixel_center(self, row: int, col: int) -> Tuple[float, float]:
        """Center of the pixel at file position (row, col); row 0 is the top."""
        x = self.origin_x + (col + 0.5) * self.cellsize
        y = self.origin_y + (self.nrows - row - 0.5) * self.cellsize
        return x, y

    def extent(self) -> Tuple[float, float, float, float]:
        return (
            self.origin_x,
            self.origin_y,
            self.origin_x + self.ncols * self.cellsize,
            self.origin_y + self.nrows * self.cellsize,
        )


@dataclass(eq=False)
class SceneStack:
    timestamp: date
    bands: Dict[str, BandGrid]

    def __post_init__(self):
        grids = list(self.bands.values())
        if not grids:
            raise EmptyInput("scene has no bands")
        ref = grids[0]
        for g in grids[1:]:
            if not g.same_georef(ref):
                raise GeoreferenceMismatch("bands in a scene must share a georeference")

    def band(self, name: str) -> BandGrid:
        try:
            return self.bands[name]
        except KeyError:
            raise MissingBand(f"band {name!r} not present in scene") from None


@dataclass(eq=False)
class PixelMask:
    ncols: int
    nrows: int
    bits: np.ndarray  # bool, shape (nrows, ncols); True = included
    disjoint: bool = False  # polygon extent did not touch the grid

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=bool).reshape(self.nrows, self.ncols)


@dataclass
class IndexStats:
    kind: IndexKind
    max: float
    mean: float
    min: float
    std_dev: float
    pixel_count: int
    window: Tuple[date, date]

    def to_dict(self) -> dict:
        """Serialized with the display key scheme {KIND}_max etc."""
        k = self.kind.value
        return {
            f"{k}_max": round_half_up(self.max, 4),
            f"{k}_mean": round_half_up(self.mean, 4),
            f"{k}_min": round_half_up(self.min, 4),
            f"{k}_stdDev": round_half_up(self.std_dev, 4),
        }


_HEADER_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value")


def load_ascii_grid(data) -> BandGrid:
    """Parse an ESRI ASCII grid (header keys case-insensitive)."""
    if isinstance(data, bytes):
        data = data.decode("ascii")
    tokens = data.split()
    header: Dict[str, float] = {}
    pos = 0
    while pos + 1 < len(tokens) and tokens[pos].lower() in _HEADER_KEYS:
        key = tokens[pos].lower()
        try:
            header[key] = float(tokens[pos + 1])
        except ValueError as exc:
            raise GridParseError(f"non-numeric header value for {key}: {tokens[pos + 1]!r}") from exc
        pos += 2
    for key in ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize"):
        if key not in header:
            raise GridParseError(f"missing header key {key!r}")
    ncols = int(header["ncols"])
    nrows = int(header["nrows"])
    nodata = header.get("nodata_value", -9999.0)
    body = tokens[pos:]
    if len(body) != ncols * nrows:
        raise GridParseError(
            f"expected {ncols * nrows} cell values, found {len(body)}"
        )
    try:
        values = np.array([float(t) for t in body], dtype=float)
    except ValueError as exc:
        raise GridParseError(f"non-numeric cell value: {exc}") from exc
    return BandGrid(
        ncols=ncols,
        nrows=nrows,
        origin_x=header["xllcorner"],
        origin_y=header["yllcorner"],
        cellsize=header["cellsize"],
        nodata=nodata,
        values=values,
    )


def dump_ascii_grid(grid: BandGrid) -> str:
    """Canonical ESRI ASCII form; load(dump(g)) reproduces g."""
    lines = [
        f"ncols {grid.ncols}",
        f"nrows {grid.nrows}",
        f"xllcorner {grid.origin_x!r}",
        f"yllcorner {grid.origin_y!r}",
        f"cellsize {grid.cellsize!r}",
        f"NODATA_value {grid.nodata!r}",
    ]
    for row in grid.values:
        lines.append(" ".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def compute_index(stack: SceneStack, kind: IndexKind) -> BandGrid:
    """Per-pixel spectral index over a scene.

    NDVI = (NIR - Red) / (NIR + Red)
    EVI  = 2.5 (NIR - Red) / (NIR + 6 Red - 7.5 Blue + 1)
    NDWI = (Green - NIR) / (Green + NIR)

    Pixels with any nodata input or |denominator| < 1e-9 become nodata.
    """
    for name in REQUIRED_BANDS[kind]:
        if name not in stack.bands:
            raise MissingBand(f"index {kind.value} requires band {name!r}")

    ref = stack.band(REQUIRED_BANDS[kind][0])
    out_nodata = -9999.0

    if kind is IndexKind.NDVI:
        nir, red = stack.band("nir"), stack.band("red")
        valid = nir.valid_mask() & red.valid_mask()
        num = nir.values - red.values
        den = nir.values + red.values
    elif kind is IndexKind.EVI:
        nir, red, blue = stack.band("nir"), stack.band("red"), stack.band("blue")
        valid = nir.valid_mask() & red.valid_mask() & blue.valid_mask()
        num = 2.5 * (nir.values - red.values)
        den = nir.values + 6.0 * red.values - 7.5 * blue.values + 1.0
    else:  # NDWI
        green, nir = stack.band("green"), stack.band("nir")
        valid = green.valid_mask() & nir.valid_mask()
        num = green.values - nir.values
        den = green.values + nir.values

    valid &= np.abs(den) >= DENOM_EPS
    out = np.full(ref.values.shape, out_nodata, dtype=float)
    np.divide(num, den, out=out, where=valid)
    return BandGrid(
        ncols=ref.ncols,
        nrows=ref.nrows,
        origin_x=ref.origin_x,
        origin_y=ref.origin_y,
        cellsize=ref.cellsize,
        nodata=out_nodata,
        values=out,
    )


def scl_cloud_mask(scl: BandGrid, excluded_classes=DEFAULT_EXCLUDED_SCL) -> PixelMask:
    """Mask keeping pixels whose SCL class is not excluded and not nodata."""
    excluded = set(excluded_classes)
    bits = scl.valid_mask() & ~np.isin(scl.values, list(excluded))
    return PixelMask(ncols=scl.ncols, nrows=scl.nrows, bits=bits)


def temporal_composite(
    stacks: Sequence[SceneStack],
    kind: IndexKind,
    masks: Optional[Sequence[Optional[PixelMask]]] = None,
) -> BandGrid:
    """Per-pixel median of the index across scenes.

    A pixel contributes only where unmasked and non-nodata; with no valid
    observation it stays nodata. Even observation counts take the mean of
    the two central values.
    """
    if not stacks:
        raise EmptyInput("temporal_composite needs at least one scene")
    if masks is not None and len(masks) != len(stacks):
        raise EmptyInput("masks must align one-to-one with stacks")

    index_grids = [compute_index(s, kind) for s in stacks]
    ref = index_grids[0]
    for g in index_grids[1:]:
        if not g.same_georef(ref):
            raise GeoreferenceMismatch("all scenes must share a georeference")

    layers = np.stack([g.values for g in index_grids])
    valid = np.stack([g.valid_mask() for g in index_grids])
    if masks is not None:
        for i, m in enumerate(masks):
            if m is None:
                continue
            if (m.nrows, m.ncols) != (ref.nrows, ref.ncols):
                raise GeoreferenceMismatch("mask dimensions do not match grid")
            valid[i] &= m.bits

    out_nodata = -9999.0
    stacked = np.where(valid, layers, np.nan)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # all-NaN pixel columns
        med = np.nanmedian(stacked, axis=0)
    out = np.where(np.isnan(med), out_nodata, med)
    return BandGrid(
        ncols=ref.ncols,
        nrows=ref.nrows,
        origin_x=ref.origin_x,
        origin_y=ref.origin_y,
        cellsize=ref.cellsize,
        nodata=out_nodata,
        values=out,
    )


def _on_segment(px: float, py: float, ax: float, ay: float, bx: float, by: float) -> bool:
    cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
    if cross != 0.0:
        return False
    return min(ax, bx) <= px <= max(ax, bx) and min(ay, by) <= py <= max(ay, by)


def point_in_rings(x: float, y: float, rings) -> bool:
    """Even-odd containment over all rings; points on any edge count inside."""
    crossings = 0
    for ring in rings:
        n = len(ring)
        for i in range(n - 1):
            ax, ay = ring[i]
            bx, by = ring[i + 1]
            if _on_segment(x, y, ax, ay, bx, by):
                return True
            if (ay > y) != (by > y):
                x_at = ax + (y - ay) * (bx - ax) / (by - ay)
                if x < x_at:
                    crossings += 1
    return crossings % 2 == 1


def rasterize_polygon_mask(geom: PlotGeometry, georef: BandGrid) -> PixelMask:
    """Pixel-center rasterization of the parcel polygon.

    Even-odd rule with holes; a center exactly on an edge is inside. A
    polygon bbox disjoint from the grid extent yields an all-false mask
    with the disjoint flag set.
    """
    gx0, gy0, gx1, gy1 = georef.extent()
    px0, py0, px1, py1 = geom.bbox()
    if px1 < gx0 or px0 > gx1 or py1 < gy0 or py0 > gy1:
        bits = np.zeros((georef.nrows, georef.ncols), dtype=bool)
        return PixelMask(ncols=georef.ncols, nrows=georef.nrows, bits=bits, disjoint=True)

    bits = np.zeros((georef.nrows, georef.ncols), dtype=bool)
    for row in range(georef.nrows):
        for col in range(georef.ncols):
            x, y = georef.pixel_center(row, col)
            if px0 <= x <= px1 and py0 <= y <= py1:
                bits[row, col] = point_in_rings(x, y, geom.rings)
    return PixelMask(ncols=georef.ncols, nrows=georef.nrows, bits=bits)


def zonal_stats(
    index: BandGrid,
    mask: PixelMask,
    kind: IndexKind,
    window: Tuple[date, date],
) -> IndexStats:
    """Max/mean/min/population-stdDev over unmasked, non-nodata pixels."""
    if (mask.nrows, mask.ncols) != (index.nrows, index.ncols):
        raise GeoreferenceMismatch("mask dimensions do not match grid")
    selected = index.values[mask.bits & index.valid_mask()]
    if selected.size == 0:
        raise NoValidPixels("no valid pixels inside the zone")
    return IndexStats(
        kind=kind,
        max=float(selected.max()),
        mean=float(selected.mean()),
        min=float(selected.min()),
        std_dev=float(selected.std(ddof=0)),
        pixel_count=int(selected.size),
        window=window,
    )
