import json

import httpx
import pytest
from hypothesis import given, strategies as st

from agriplot.errors import (
    MalformedPlotId,
    PlotNotFound,
    RegistryResponseInvalid,
    RegistryUnreachable,
)
from agriplot.registry import (
    FixtureRegistry,
    PlotAttributes,
    PlotGeometry,
    PlotId,
    PlotRecord,
    RegistryConfig,
    fetch_plot,
    format_plot_id,
    parse_plot_id,
)

from conftest import DATA_DIR


class TestParseFormat:
    def test_reference_example(self):
        assert parse_plot_id("0:0:107:161:1").components == (0, 0, 107, 161, 1)

    def test_large_component(self):
        assert parse_plot_id("0:0:105:9000:1").components == (0, 0, 105, 9000, 1)

    def test_arity_below_minimum(self):
        with pytest.raises(MalformedPlotId):
            parse_plot_id("0:0:107")

    @pytest.mark.parametrize("bad", ["", "1:2:3:4:5:6:7:8", "a:b:c:d:e", "0:0:107:161:-1", "0:0:107::1"])
    def test_rejects_malformed(self, bad):
        with pytest.raises(MalformedPlotId):
            parse_plot_id(bad)

    def test_surrounding_whitespace_is_trimmed(self):
        assert format_plot_id(parse_plot_id(" 0:0:107:161:1\n")) == "0:0:107:161:1"

    def test_format(self):
        assert format_plot_id(PlotId((0, 0, 107, 55, 1))) == "0:0:107:55:1"
        assert format_plot_id(PlotId((0, 0, 104, 223, 1))) == "0:0:104:223:1"

    def test_format_arity_error(self):
        with pytest.raises(MalformedPlotId):
            PlotId((7,))

    @given(st.lists(st.integers(min_value=0, max_value=99999), min_size=5, max_size=7))
    def test_round_trip(self, components):
        s = ":".join(str(c) for c in components)
        assert format_plot_id(parse_plot_id(s)) == s

    def test_shared_test_vectors(self):
        vectors = json.loads((DATA_DIR / "plot_id_vectors.json").read_text())
        for s in vectors["valid"]:
            assert format_plot_id(parse_plot_id(s)) == s
        for s in vectors["invalid"]:
            with pytest.raises(MalformedPlotId):
                parse_plot_id(s)


class TestTypes:
    def test_attributes_reject_nonpositive_area(self):
        with pytest.raises(RegistryResponseInvalid):
            PlotAttributes(area_ha=0, perimeter_m=10, slope_pct=1, altitude_m=0, land_use="X")

    def test_attributes_reject_slope_out_of_range(self):
        with pytest.raises(RegistryResponseInvalid):
            PlotAttributes(area_ha=1, perimeter_m=10, slope_pct=1000, altitude_m=0, land_use="X")

    def test_geometry_requires_closed_ring(self):
        with pytest.raises(RegistryResponseInvalid):
            PlotGeometry((((0, 0), (1, 0), (1, 1), (0, 1)),))

    def test_geometry_bbox(self):
        geom = PlotGeometry((((0, 0), (2, 0), (2, 1), (0, 1), (0, 0)),))
        assert geom.bbox() == (0, 0, 2, 1)


@pytest.fixture(scope="module")
def registry():
    return FixtureRegistry.load(str(DATA_DIR / "plots.geojson"))


class TestFixtureRegistry:
    def test_fetch_known_plot(self, registry):
        rec = registry.fetch(parse_plot_id("0:0:107:55:1"))
        assert rec.attributes.area_ha == 0.763
        assert rec.attributes.perimeter_m == 375.35
        assert rec.attributes.slope_pct == 21.6
        assert rec.attributes.altitude_m == 94
        assert rec.attributes.land_use == "PASTIZAL"
        assert rec.source == "fixture"

    def test_fetch_absent_plot(self, registry):
        with pytest.raises(PlotNotFound):
            registry.fetch(parse_plot_id("9:9:9:9:9"))

    def test_fetch_deterministic(self, registry):
        a = registry.fetch(parse_plot_id("0:0:107:161:1"))
        b = registry.fetch(parse_plot_id("0:0:107:161:1"))
        assert a == b

    def test_all_fixture_records_pass_invariants(self, registry):
        for sid in registry.ids():
            rec = registry.fetch(parse_plot_id(sid))
            assert rec.attributes.area_ha > 0
            assert rec.attributes.perimeter_m > 0
            x0, y0, x1, y1 = rec.geometry.bbox()
            assert x1 > x0 and y1 > y0
            for ring in rec.geometry.rings:
                assert len(ring) >= 4
                assert ring[0] == ring[-1]

    def test_square_parcel_bbox_nondegenerate(self):
        square = {
            "type": "FeatureCollection",
            "features": [{
                "type": "Feature",
                "properties": {"plot_id": "1:1:1:1:1", "area_ha": 1.2, "perimeter_m": 440,
                               "slope_pct": 0, "altitude_m": 10, "land_use": "PASTIZAL"},
                "geometry": {"type": "Polygon", "coordinates": [[[0, 0], [0.001, 0], [0.001, 0.001], [0, 0.001], [0, 0]]]},
            }],
        }
        reg = FixtureRegistry({f["properties"]["plot_id"]: f for f in square["features"]})
        rec = reg.fetch(parse_plot_id("1:1:1:1:1"))
        x0, y0, x1, y1 = rec.geometry.bbox()
        assert x1 - x0 > 0 and y1 - y0 > 0


class TestRemoteRegistry:
    def _remote_config(self):
        return RegistryConfig(url_template="http://registry.test/parcels/{c0}/{c1}/{c2}/{c3}/{c4}")

    def test_remote_fetch(self):
        def handle(request):
            assert request.url.path == "/parcels/0/0/107/55/1"
            return httpx.Response(200, json={
                "properties": {"area_ha": 0.763, "perimeter_m": 375.35, "slope_pct": 21.6,
                               "altitude_m": 94, "land_use": "PASTIZAL"},
                "geometry": {"type": "Polygon",
                             "coordinates": [[[0, 0], [0.001, 0], [0.001, 0.001], [0, 0.001], [0, 0]]]},
            })

        client = httpx.Client(transport=httpx.MockTransport(handle))
        rec = fetch_plot(parse_plot_id("0:0:107:55:1"), self._remote_config(), client=client)
        assert rec.source == "remote"
        assert rec.attributes.land_use == "PASTIZAL"

    def test_remote_404_is_not_found(self):
        client = httpx.Client(transport=httpx.MockTransport(lambda r: httpx.Response(404)))
        with pytest.raises(PlotNotFound):
            fetch_plot(parse_plot_id("0:0:107:55:1"), self._remote_config(), client=client)

    def test_remote_schema_mismatch(self):
        client = httpx.Client(transport=httpx.MockTransport(lambda r: httpx.Response(200, json={"nope": 1})))
        with pytest.raises(RegistryResponseInvalid):
            fetch_plot(parse_plot_id("0:0:107:55:1"), self._remote_config(), client=client)

    def test_remote_unreachable(self):
        def handle(request):
            raise httpx.ConnectError("refused")

        client = httpx.Client(transport=httpx.MockTransport(handle))
        with pytest.raises(RegistryUnreachable):
            fetch_plot(parse_plot_id("0:0:107:55:1"), self._remote_config(), client=client)
