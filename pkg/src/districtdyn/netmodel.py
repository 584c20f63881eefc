"""District network model: firms, supply edges, external markets.

The network is loaded from a single JSON document (keys ``nodes``, ``edges``,
``markets``).  Edges are given in the direction of material flow; service
edges (waste disposal and the like, where money moves with the material) are
reversed at load time so that, internally, every edge points in the
direction of the goods-or-service flow with money flowing opposite.
All monetary values are millions of 2013 GBP.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from districtdyn.errors import (
    InputFormatError,
    NetworkStructureError,
    ValidationError,
)


class Role(enum.Enum):
    PRIMARY_SUPPLIER = "primary_supplier"
    INTERMEDIARY = "intermediary"
    END_CONSUMER = "end_consumer"
    HUB = "hub"

    @property
    def buys_externally(self) -> bool:
        return self in (Role.PRIMARY_SUPPLIER, Role.HUB)

    @property
    def sells_externally(self) -> bool:
        return self in (Role.END_CONSUMER, Role.HUB)


class EdgeKind(enum.Enum):
    GOODS = "goods"
    SERVICE = "service"


@dataclass(frozen=True)
class ModelParams:
    """Per-firm dynamical parameters.

    ``beta``/``rho`` are the post-adjustment values: any in-district halving
    has already been applied by calibration, the dynamics never re-apply it.
    """

    u0: float
    beta: float
    rho: float
    epsilon: float
    d: float

    def __post_init__(self):
        if not (self.u0 >= 0):
            raise ValidationError(f"u0 must be >= 0, got {self.u0}")
        if not (self.beta >= 0):
            raise ValidationError(f"beta must be >= 0, got {self.beta}")
        if not (self.rho > 0):
            raise ValidationError(f"rho must be > 0, got {self.rho}")
        if not (self.d >= 0):
            raise ValidationError(f"d must be >= 0, got {self.d}")


@dataclass(frozen=True)
class FinancialRecord:
    """Raw yearly financials used by the calibration pipeline.

    ``material`` may be negative when the firm is paid to take material
    (e.g. landfill).
    """

    revenue: float
    material: float
    overheads: float
    production: float

    def __post_init__(self):
        for name in ("revenue", "material", "overheads", "production"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ValidationError(f"{name} must be finite, got {v!r}")
        if self.revenue < 0 or self.overheads < 0 or self.production < 0:
            raise ValidationError("revenue, overheads and production must be >= 0")
        if self.revenue + abs(self.material) <= 0:
            raise ValidationError("firm has zero value of goods and services")


@dataclass(frozen=True)
class Flags:
    buys_in_district: bool = False
    sells_in_district: bool = False


@dataclass(frozen=True)
class SupplyEdge:
    """Directed flow of goods or a service from ``src`` to ``dst``."""

    src: str
    dst: str
    kind: EdgeKind = EdgeKind.GOODS


@dataclass(frozen=True)
class MarketSpec:
    """External commodity market; ``cap`` is None for auto-computed caps."""

    id: str
    cap: float | None = None

    def __post_init__(self):
        if self.cap is not None and not (self.cap > 0):
            raise ValidationError(f"market {self.id}: explicit cap must be > 0")


@dataclass(frozen=True)
class FirmNode:
    id: str
    name: str = ""
    role: Role | None = None
    markets: tuple[str, ...] = ()
    flags: Flags = field(default_factory=Flags)
    params: ModelParams | None = None
    financials: FinancialRecord | None = None


@dataclass(frozen=True)
class Network:
    """Immutable district network; safe to share across concurrent runs.

    ``nodes`` keeps declaration order, which fixes the column order of all
    trajectory output.
    """

    nodes: tuple[FirmNode, ...]
    edges: tuple[SupplyEdge, ...]
    markets: tuple[MarketSpec, ...]

    def __post_init__(self):
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise NetworkStructureError(f"duplicate node ids: {dupes}")
        known = set(ids)
        for e in self.edges:
            if e.src not in known or e.dst not in known:
                raise NetworkStructureError(
                    f"edge {e.src}->{e.dst} references unknown node id"
                )
            if e.src == e.dst:
                raise NetworkStructureError(f"self-edge on node {e.src}")
        mids = [m.id for m in self.markets]
        if len(set(mids)) != len(mids):
            raise NetworkStructureError("duplicate market ids")

    @property
    def node_ids(self) -> list[str]:
        return [n.id for n in self.nodes]

    def index_of(self, node_id: str) -> int:
        return self.node_ids.index(node_id)

    def node(self, node_id: str) -> FirmNode:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def suppliers(self, node_id: str) -> list[str]:
        """S_i: sellers of goods or services to ``node_id`` (declaration order)."""
        incoming = {e.src for e in self.edges if e.dst == node_id}
        return [i for i in self.node_ids if i in incoming]

    def customers(self, node_id: str) -> list[str]:
        """C_i: buyers of ``node_id``'s output (declaration order)."""
        outgoing = {e.dst for e in self.edges if e.src == node_id}
        return [i for i in self.node_ids if i in outgoing]

    def market_members(self, market_id: str) -> list[str]:
        return [n.id for n in self.nodes if market_id in n.markets]


def normalize_edges(raw_edges: list[SupplyEdge], node_ids: set[str] | None = None) -> list[SupplyEdge]:
    """Reverse every service edge so money always flows opposite to flow.

    In the input a service edge is written in the material-flow direction
    (waste producer -> disposer); after normalization the disposer is the
    seller of the disposal service.  Goods edges are unchanged, order is
    preserved.
    """
    out = []
    for e in raw_edges:
        if node_ids is not None and (e.src not in node_ids or e.dst not in node_ids):
            raise NetworkStructureError(
                f"edge {e.src}->{e.dst} references unknown node id"
            )
        if e.kind is EdgeKind.SERVICE:
            out.append(SupplyEdge(src=e.dst, dst=e.src, kind=EdgeKind.SERVICE))
        else:
            out.append(e)
    return out


def _allowed_roles(has_suppliers: bool, has_customers: bool, node: FirmNode) -> set[Role]:
    if has_suppliers and has_customers:
        return {Role.PRIMARY_SUPPLIER, Role.INTERMEDIARY, Role.END_CONSUMER, Role.HUB}
    if not has_suppliers and has_customers:
        # No in-district suppliers: the firm must source externally.
        return {Role.PRIMARY_SUPPLIER, Role.HUB}
    if has_suppliers and not has_customers:
        # No in-district customers: the firm must sell externally.
        return {Role.END_CONSUMER, Role.HUB}
    # Fully isolated node: touches the external boundary on both sides,
    # except that a firm with beta == 0 buys nothing at all and may be a
    # plain end consumer.
    allowed = {Role.HUB}
    if node.params is not None and node.params.beta == 0:
        allowed.add(Role.END_CONSUMER)
    return allowed


def classify_roles(network: Network) -> Network:
    """Assign roles from edge structure, validating any declared roles.

    A node with no incoming edges is a primary supplier (no outgoing: an end
    consumer) unless declared a hub.  Declared roles that contradict the
    structure raise ValidationError.  Deterministic and idempotent.
    """
    new_nodes = []
    problems = []
    for n in network.nodes:
        has_s = bool(network.suppliers(n.id))
        has_c = bool(network.customers(n.id))
        allowed = _allowed_roles(has_s, has_c, n)
        if n.role is not None:
            if n.role not in allowed:
                problems.append(
                    f"node {n.id}: declared role {n.role.value} contradicts edge "
                    f"structure (suppliers={'yes' if has_s else 'no'}, "
                    f"customers={'yes' if has_c else 'no'})"
                )
                continue
            new_nodes.append(n)
        else:
            if not has_s and has_c:
                role = Role.PRIMARY_SUPPLIER
            elif has_s and not has_c:
                role = Role.END_CONSUMER
            elif has_s and has_c:
                role = Role.INTERMEDIARY
            else:
                role = Role.HUB
            new_nodes.append(replace(n, role=role))
    if problems:
        raise ValidationError("; ".join(problems))
    return replace(network, nodes=tuple(new_nodes))


def compute_market_caps(network: Network) -> dict[str, float]:
    """Resolve market caps M_k.

    Auto caps are the sum of the members' initial rescaled utilities
    u0_i / n_i, where n_i is the number of markets node i sells to.
    Explicit caps pass through unchanged.
    """
    caps: dict[str, float] = {}
    for m in network.markets:
        if m.cap is not None:
            caps[m.id] = m.cap
            continue
        members = network.market_members(m.id)
        if not members:
            raise ValidationError(f"auto market {m.id} has no member nodes")
        total = 0.0
        for nid in members:
            node = network.node(nid)
            if node.params is None:
                raise ValidationError(
                    f"auto market {m.id}: node {nid} has no params (calibrate first)"
                )
            total += node.params.u0 / len(node.markets)
        caps[m.id] = total
    return caps


def validate_network(network: Network) -> list[str]:
    """Full semantic validation; returns a list of violations (empty = valid).

    Structural errors (unknown ids, self-edges) are raised at construction;
    this checks role/market consistency on a role-assigned network.
    """
    issues = []
    market_ids = {m.id for m in network.markets}
    for n in network.nodes:
        if n.role is None:
            issues.append(f"node {n.id}: role not assigned")
            continue
        if n.role.sells_externally and not n.markets:
            issues.append(f"node {n.id}: role {n.role.value} requires market membership")
        if n.markets and not n.role.sells_externally:
            issues.append(
                f"node {n.id}: role {n.role.value} must not belong to external markets"
            )
        for mid in n.markets:
            if mid not in market_ids:
                issues.append(f"node {n.id}: unknown market {mid}")
        if n.params is None and n.financials is None:
            issues.append(f"node {n.id}: needs params or financials")
    for m in network.markets:
        if m.cap is None and not network.market_members(m.id):
            issues.append(f"auto market {m.id} has no member nodes")
    return issues


def consistency_warnings(network: Network) -> list[str]:
    """Warn where the stored district flags disagree with the edge list.

    The flags are calibration data and win over structure; this is
    informational only.
    """
    warnings = []
    for n in network.nodes:
        has_s = bool(network.suppliers(n.id))
        has_c = bool(network.customers(n.id))
        if n.flags.buys_in_district != has_s:
            warnings.append(
                f"node {n.id}: buys_in_district={n.flags.buys_in_district} but node "
                f"has {'some' if has_s else 'no'} in-district suppliers"
            )
        if n.flags.sells_in_district != has_c:
            warnings.append(
                f"node {n.id}: sells_in_district={n.flags.sells_in_district} but node "
                f"has {'some' if has_c else 'no'} in-district customers"
            )
    return warnings


# --- JSON (de)serialization ------------------------------------------------

def _parse_node(obj: dict) -> FirmNode:
    if "id" not in obj:
        raise InputFormatError("node missing 'id'")
    has_params = "params" in obj
    has_fin = "financials" in obj
    if has_params == has_fin:
        raise InputFormatError(
            f"node {obj['id']}: exactly one of params/financials required"
        )
    role = None
    if obj.get("role") is not None:
        try:
            role = Role(obj["role"])
        except ValueError:
            raise InputFormatError(f"node {obj['id']}: unknown role {obj['role']!r}")
    params = None
    if has_params:
        p = obj["params"]
        try:
            params = ModelParams(
                u0=float(p["u0"]), beta=float(p["beta"]), rho=float(p["rho"]),
                epsilon=float(p["epsilon"]), d=float(p["d"]),
            )
        except KeyError as k:
            raise InputFormatError(f"node {obj['id']}: params missing {k}")
    financials = None
    if has_fin:
        f = obj["financials"]
        try:
            financials = FinancialRecord(
                revenue=float(f["revenue"]), material=float(f["material"]),
                overheads=float(f["overheads"]), production=float(f["production"]),
            )
        except KeyError as k:
            raise InputFormatError(f"node {obj['id']}: financials missing {k}")
    fl = obj.get("flags", {})
    return FirmNode(
        id=str(obj["id"]),
        name=str(obj.get("name", obj["id"])),
        role=role,
        markets=tuple(obj.get("markets", [])),
        flags=Flags(
            buys_in_district=bool(fl.get("buys_in_district", False)),
            sells_in_district=bool(fl.get("sells_in_district", False)),
        ),
        params=params,
        financials=financials,
    )


def network_from_dict(doc: dict, classify: bool = True) -> Network:
    """Build a Network from the JSON document structure.

    Service edges are reversed and (by default) roles are assigned/validated.
    """
    try:
        raw_nodes = doc["nodes"]
        raw_edges = doc.get("edges", [])
        raw_markets = doc.get("markets", [])
    except (TypeError, KeyError):
        raise InputFormatError("network document must contain 'nodes'")
    nodes = tuple(_parse_node(o) for o in raw_nodes)
    ids = {n.id for n in nodes}
    edges = []
    for o in raw_edges:
        try:
            kind = EdgeKind(o.get("kind", "goods"))
        except ValueError:
            raise InputFormatError(f"unknown edge kind {o.get('kind')!r}")
        edges.append(SupplyEdge(src=str(o["from"]), dst=str(o["to"]), kind=kind))
    edges = normalize_edges(edges, ids)
    markets = []
    for o in raw_markets:
        cap = o.get("cap", "auto")
        markets.append(MarketSpec(id=str(o["id"]), cap=None if cap == "auto" else float(cap)))
    net = Network(nodes=nodes, edges=tuple(edges), markets=tuple(markets))
    if classify:
        net = classify_roles(net)
    return net


def network_to_dict(network: Network) -> dict:
    """Serialize back to the file schema (edges in raw, pre-reversal form)."""
    nodes = []
    for n in network.nodes:
        obj: dict = {"id": n.id, "name": n.name}
        if n.role is not None:
            obj["role"] = n.role.value
        if n.markets:
            obj["markets"] = list(n.markets)
        obj["flags"] = {
            "buys_in_district": n.flags.buys_in_district,
            "sells_in_district": n.flags.sells_in_district,
        }
        if n.params is not None:
            p = n.params
            obj["params"] = {"u0": p.u0, "beta": p.beta, "rho": p.rho,
                             "epsilon": p.epsilon, "d": p.d}
        if n.financials is not None:
            f = n.financials
            obj["financials"] = {"revenue": f.revenue, "material": f.material,
                                 "overheads": f.overheads, "production": f.production}
        nodes.append(obj)
    edges = []
    for e in network.edges:
        if e.kind is EdgeKind.SERVICE:
            # stored normalized (provider -> customer); file form is material flow
            edges.append({"from": e.dst, "to": e.src, "kind": "service"})
        else:
            edges.append({"from": e.src, "to": e.dst, "kind": "goods"})
    markets = [{"id": m.id, "cap": "auto" if m.cap is None else m.cap}
               for m in network.markets]
    return {"nodes": nodes, "edges": edges, "markets": markets}


def load_network(path: str | Path, classify: bool = True) -> Network:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as e:
        raise InputFormatError(f"{path}: invalid JSON at line {e.lineno} column {e.colno}")
    except OSError as e:
        raise InputFormatError(f"{path}: {e}")
    return network_from_dict(doc, classify=classify)


def humber_path() -> Path:
    """Path of the shipped Humber-region reference dataset."""
    return Path(__file__).parent / "data" / "humber.json"
