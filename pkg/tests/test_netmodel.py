"""Network structure: edge normalization, role classification, market caps."""

import pytest

import districtdyn as dd
from districtdyn.errors import NetworkStructureError, ValidationError
from districtdyn.netmodel import (
    EdgeKind,
    FirmNode,
    Flags,
    MarketSpec,
    ModelParams,
    Network,
    Role,
    SupplyEdge,
    classify_roles,
    compute_market_caps,
    normalize_edges,
    validate_network,
)


def P(u0=1.0, beta=0.1, rho=0.5, epsilon=0.1, d=0.05):
    return ModelParams(u0=u0, beta=beta, rho=rho, epsilon=epsilon, d=d)


class TestNormalizeEdges:
    def test_goods_edge_unchanged(self):
        e = SupplyEdge("A", "B", EdgeKind.GOODS)
        assert normalize_edges([e]) == [e]

    def test_service_edge_reversed(self):
        e = SupplyEdge("food-processor", "landfill", EdgeKind.SERVICE)
        out = normalize_edges([e])
        assert out == [SupplyEdge("landfill", "food-processor", EdgeKind.SERVICE)]

    def test_mixed_list_reverses_only_services(self):
        edges = [
            SupplyEdge("A", "B", EdgeKind.GOODS),
            SupplyEdge("B", "C", EdgeKind.SERVICE),
            SupplyEdge("C", "A", EdgeKind.GOODS),
        ]
        out = normalize_edges(edges)
        assert out[0] == edges[0]
        assert out[1] == SupplyEdge("C", "B", EdgeKind.SERVICE)
        assert out[2] == edges[2]

    def test_unknown_node_rejected(self):
        with pytest.raises(NetworkStructureError, match="X->B"):
            normalize_edges([SupplyEdge("X", "B")], node_ids={"A", "B"})

    def test_involution_on_goods_only(self):
        edges = [SupplyEdge("A", "B"), SupplyEdge("B", "C")]
        assert normalize_edges(normalize_edges(edges)) == edges


def chain_network(declared_a=None, declared_b=None):
    nodes = (
        FirmNode(id="A", role=declared_a, params=P()),
        FirmNode(id="B", role=declared_b, params=P(),
                 markets=("m",) if declared_b in (None, Role.END_CONSUMER, Role.HUB) else ()),
    )
    return Network(nodes=nodes, edges=(SupplyEdge("A", "B"),),
                   markets=(MarketSpec("m", cap=10.0),))


class TestClassifyRoles:
    def test_two_node_chain(self):
        net = classify_roles(chain_network())
        assert net.node("A").role is Role.PRIMARY_SUPPLIER
        assert net.node("B").role is Role.END_CONSUMER

    def test_declared_hub_accepted(self):
        net = classify_roles(chain_network(declared_a=Role.HUB))
        assert net.node("A").role is Role.HUB

    def test_declared_intermediary_without_suppliers_rejected(self):
        with pytest.raises(ValidationError, match="A"):
            classify_roles(chain_network(declared_a=Role.INTERMEDIARY))

    def test_idempotent_and_deterministic(self):
        net1 = classify_roles(chain_network())
        net2 = classify_roles(net1)
        assert net1 == net2

    def test_humber_landfill_is_primary_supplier(self):
        net = dd.load_network(dd.humber_path())
        assert net.node("landfill-nonhaz").role is Role.PRIMARY_SUPPLIER

    def test_humber_refinery_declared_hub_accepted(self):
        net = dd.load_network(dd.humber_path())
        assert net.node("refinery").role is Role.HUB

    def test_isolated_node_with_zero_beta_may_be_end_consumer(self):
        nodes = (FirmNode(id="solo", role=Role.END_CONSUMER, markets=("m",),
                          params=P(beta=0.0)),)
        net = Network(nodes=nodes, edges=(), markets=(MarketSpec("m", cap=10.0),))
        assert classify_roles(net).node("solo").role is Role.END_CONSUMER


class TestStructure:
    def test_duplicate_ids_rejected(self):
        with pytest.raises(NetworkStructureError, match="duplicate"):
            Network(nodes=(FirmNode(id="A", params=P()), FirmNode(id="A", params=P())),
                    edges=(), markets=())

    def test_self_edge_rejected(self):
        with pytest.raises(NetworkStructureError, match="self-edge"):
            Network(nodes=(FirmNode(id="A", params=P()),),
                    edges=(SupplyEdge("A", "A"),), markets=())

    def test_supplier_customer_sets(self):
        net = classify_roles(chain_network())
        assert net.suppliers("B") == ["A"]
        assert net.customers("A") == ["B"]
        assert net.suppliers("A") == []


class TestMarketCaps:
    def test_single_seller_auto_cap(self):
        nodes = (FirmNode(id="A", role=Role.END_CONSUMER, markets=("m",),
                          params=P(u0=10.0, beta=0.0)),)
        net = Network(nodes=nodes, edges=(), markets=(MarketSpec("m", cap=None),))
        assert compute_market_caps(net)["m"] == pytest.approx(10.0)

    def test_explicit_cap_passthrough(self):
        nodes = (FirmNode(id="A", role=Role.END_CONSUMER, markets=("m",),
                          params=P(u0=10.0, beta=0.0)),)
        net = Network(nodes=nodes, edges=(), markets=(MarketSpec("m", cap=3.5),))
        assert compute_market_caps(net)["m"] == 3.5

    def test_auto_market_without_members_rejected(self):
        net = Network(nodes=(FirmNode(id="A", role=Role.HUB, markets=("m",),
                                      params=P()),),
                      edges=(), markets=(MarketSpec("m", cap=None), MarketSpec("x", cap=None)))
        with pytest.raises(ValidationError, match="x"):
            compute_market_caps(net)

    def test_rescaling_splits_multi_market_sellers(self):
        nodes = (
            FirmNode(id="A", role=Role.HUB, markets=("m1", "m2"), params=P(u0=8.0)),
            FirmNode(id="B", role=Role.END_CONSUMER, markets=("m1",), params=P(u0=3.0, beta=0.0)),
        )
        net = Network(nodes=nodes, edges=(),
                      markets=(MarketSpec("m1", cap=None), MarketSpec("m2", cap=None)))
        caps = compute_market_caps(net)
        assert caps["m1"] == pytest.approx(8.0 / 2 + 3.0, rel=1e-9)
        assert caps["m2"] == pytest.approx(4.0, rel=1e-9)


@pytest.fixture(scope="module")
def humber_calibrated():
    net = dd.load_network(dd.humber_path())
    net, _ = dd.calibrate_network(net)
    return net


class TestHumberDataset:
    def test_validates_clean(self, humber_calibrated):
        assert validate_network(humber_calibrated) == []

    def test_market_caps_match_published_values(self, humber_calibrated):
        caps = compute_market_caps(humber_calibrated)
        assert caps["chemicals"] == pytest.approx(6573.33, abs=0.01)
        assert caps["fuel"] == pytest.approx(4870.58, abs=0.01)
        assert caps["electricity"] == pytest.approx(2308.54, abs=0.01)
        assert caps["food"] == pytest.approx(24.99, abs=0.01)

    def test_total_external_market(self, humber_calibrated):
        total = sum(n.params.u0 for n in humber_calibrated.nodes
                    if n.role.sells_externally)
        assert total == pytest.approx(13777.42, abs=0.01)

    def test_auto_caps_equal_rescaled_u0_sums(self, humber_calibrated):
        caps = compute_market_caps(humber_calibrated)
        for m in humber_calibrated.markets:
            expected = sum(
                humber_calibrated.node(nid).params.u0 / len(humber_calibrated.node(nid).markets)
                for nid in humber_calibrated.market_members(m.id)
            )
            assert caps[m.id] == pytest.approx(expected, rel=1e-9)
