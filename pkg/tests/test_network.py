import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qnum.network import (
    DomainError,
    LinkSpec,
    PhysicalLinkParams,
    RouteSpec,
    ValidationError,
    build_network,
    derive_rate_constant,
    link_capacity,
    load_scenario,
    parse_scenario,
    scenario_to_dict,
)

from conftest import SCENARIO_DIR


@pytest.mark.parametrize(
    "length, expected",
    [(0.0, 150.0), (50.0, 15.0), (30.6, 36.65146)],
)
def test_derive_rate_constant(length, expected):
    d = derive_rate_constant(PhysicalLinkParams(length, 0.1, 1e-3))
    assert d == pytest.approx(expected, rel=1e-6)


@pytest.mark.parametrize("kappa, period", [(0.0, 1e-3), (1.0, 1e-3), (0.1, 0.0), (0.1, -1.0)])
def test_physical_params_validated(kappa, period):
    with pytest.raises(ValidationError):
        PhysicalLinkParams(10.0, kappa, period)


@given(
    st.floats(0, 200), st.floats(0.01, 100),
    st.floats(0.01, 0.98), st.floats(0.001, 0.01),
)
def test_rate_constant_monotone(length, extra, kappa, dk):
    base = derive_rate_constant(PhysicalLinkParams(length, kappa, 1e-3))
    longer = derive_rate_constant(PhysicalLinkParams(length + extra, kappa, 1e-3))
    better = derive_rate_constant(PhysicalLinkParams(length, kappa + dk, 1e-3))
    assert longer < base < better


def test_link_capacity():
    assert link_capacity(150, 1) == 0
    assert link_capacity(150, 0) == 150
    assert link_capacity(89.84, 0.5) == pytest.approx(44.92)
    with pytest.raises(DomainError):
        link_capacity(10, 1.2)


def test_single_link_incidence():
    net = build_network([LinkSpec("a", 1.0)], [RouteSpec("r", ("a",))])
    assert net.incidence.tolist() == [[1]]


def test_disjoint_routes_identity():
    net = build_network(
        [LinkSpec("a", 1.0), LinkSpec("b", 2.0)],
        [RouteSpec("r", ("a",)), RouteSpec("s", ("b",))],
    )
    np.testing.assert_array_equal(net.incidence, np.eye(2))


def test_surfnet_route1_column(surfnet):
    col = surfnet.incidence[:, 0]
    rows = {surfnet.links[j].id for j in np.flatnonzero(col)}
    assert rows == {"1", "2", "3", "4", "5", "10", "11"}
    assert surfnet.n_links == 18 and surfnet.n_routes == 4


def test_column_sums_match_route_lengths(surfnet):
    sums = surfnet.incidence.sum(axis=0)
    assert sums.tolist() == [len(r.link_ids) for r in surfnet.routes]
    assert np.all(surfnet.incidence.sum(axis=1) >= 1)


def test_unused_links_dropped():
    scen = load_scenario(SCENARIO_DIR / "physical_links.json")
    assert scen.network.link_ids == ["short", "long"]
    assert scen.network.d[1] == pytest.approx(15.0)


def test_dangling_reference_names_id():
    with pytest.raises(ValidationError, match="ghost") as err:
        build_network([LinkSpec("a", 1.0)], [RouteSpec("r", ("a", "ghost"))])
    assert "r->ghost" in err.value.offending


def test_duplicate_ids_rejected():
    with pytest.raises(ValidationError, match="duplicate link"):
        build_network([LinkSpec("a", 1.0), LinkSpec("a", 2.0)], [RouteSpec("r", ("a",))])
    with pytest.raises(ValidationError, match="duplicate route"):
        build_network([LinkSpec("a", 1.0)], [RouteSpec("r", ("a",)), RouteSpec("r", ("a",))])


def test_route_validation():
    with pytest.raises(ValidationError):
        RouteSpec("r", ())
    with pytest.raises(ValidationError, match="more than once"):
        RouteSpec("r", ("a", "b", "a"))


def test_d_must_agree_with_physics():
    raw = {"links": [{"id": "a", "d": 89.84, "length_km": 30.6, "kappa": 0.1, "attempt_period_s": 1e-3}],
           "routes": [{"id": "r", "measure": "sk", "links": ["a"]}]}
    with pytest.raises(ValidationError, match="disagrees"):
        parse_scenario(raw)
    raw["links"][0]["d"] = derive_rate_constant(PhysicalLinkParams(30.6, 0.1, 1e-3)) * (1 + 1e-8)
    assert parse_scenario(raw).network.d[0] == pytest.approx(36.65146, rel=1e-6)


def test_unknown_fields_strict_and_lenient():
    raw = {"links": [{"id": "a", "d": 1.0, "colour": "red"}],
           "routes": [{"id": "r", "links": ["a"]}], "extra": 1}
    lenient = parse_scenario(raw)
    assert set(lenient.unknown_fields) == {"<root>.extra", "links[0].colour"}
    with pytest.raises(ValidationError, match="unknown fields"):
        parse_scenario(raw, strict=True)


def test_bad_json_reports_line(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "links": [\n  oops\n]}')
    with pytest.raises(ValidationError, match=r"bad.json:3:"):
        load_scenario(path)


def test_round_trip_is_deterministic(surfnet, tmp_path):
    path = tmp_path / "copy.json"
    path.write_text(json.dumps(scenario_to_dict(surfnet)))
    again = load_scenario(path).network
    np.testing.assert_array_equal(again.incidence, surfnet.incidence)
    np.testing.assert_array_equal(again.d, surfnet.d)
    assert again.route_ids == surfnet.route_ids
