"""Test helpers: brute-force reference evaluator and random network factory.

The brute-force evaluator is an independent, naive-loop transcription of the
trade/penalty/boundary formulas.  It must stay structurally different from
the vectorized implementation it checks.
"""

from __future__ import annotations

import numpy as np

from districtdyn.netmodel import (
    FirmNode,
    Flags,
    MarketSpec,
    ModelParams,
    Network,
    Role,
    SupplyEdge,
)


class BruteForce:
    """Naive nested-loop evaluation of the model equations."""

    def __init__(self, network: Network, caps: dict[str, float]):
        self.net = network
        self.ids = network.node_ids
        self.idx = {nid: k for k, nid in enumerate(self.ids)}
        self.S = {nid: network.suppliers(nid) for nid in self.ids}
        self.C = {nid: network.customers(nid) for nid in self.ids}
        self.caps = caps

    def _p(self, nid):
        return self.net.node(nid).params

    def demand(self, buyer: str, seller: str, u) -> float:
        total = sum(u[self.idx[m]] for m in self.S[buyer])
        need = self._p(buyer).beta * u[self.idx[buyer]]
        if total <= 0 or need <= 0:
            return 0.0
        return (need / total) * u[self.idx[seller]]

    def trade(self, seller: str, buyer: str, u) -> float:
        d = self.demand(buyer, seller, u)
        if d == 0.0:
            return 0.0
        total_demand = sum(self.demand(l, seller, u) for l in self.C[seller])
        cap = self._p(seller).rho * u[self.idx[seller]]
        if total_demand < cap:
            return d
        if total_demand <= 0:
            return 0.0
        return (cap / total_demand) * d

    def penalty(self, nid: str, u) -> float:
        role = self.net.node(nid).role
        if role in (Role.PRIMARY_SUPPLIER, Role.HUB):
            return 1.0
        need = self._p(nid).beta * u[self.idx[nid]]
        if need == 0.0:
            return 1.0
        got = sum(self.trade(j, nid, u) for j in self.S[nid])
        return min(1.0, max(0.0, got / need))

    def external_sales(self, u) -> tuple[dict[str, float], dict[str, float]]:
        per_node = {nid: 0.0 for nid in self.ids}
        per_market = {}
        for m in self.net.markets:
            members = self.net.market_members(m.id)
            cap = self.caps[m.id]
            ut = {nid: u[self.idx[nid]] / len(self.net.node(nid).markets)
                  for nid in members}
            offered = sum(self._p(nid).rho * ut[nid] for nid in members)
            mass = sum(ut.values())
            total = 0.0
            for nid in members:
                if cap > offered:
                    c = self._p(nid).rho * ut[nid]
                elif mass > 0:
                    c = cap * ut[nid] / mass
                else:
                    c = 0.0
                per_node[nid] += c
                total += c
            per_market[m.id] = total
        return per_node, per_market

    def boundary(self, nid: str, u, ext: dict[str, float]) -> float:
        node = self.net.node(nid)
        p = node.params
        lam = 0.0
        if node.role in (Role.PRIMARY_SUPPLIER, Role.HUB):
            lam -= p.beta * u[self.idx[nid]]
        if node.role in (Role.END_CONSUMER, Role.HUB):
            lam += (1.0 + p.epsilon) * ext[nid]
        return lam

    def rhs(self, u) -> np.ndarray:
        ext, _ = self.external_sales(u)
        du = np.zeros(len(self.ids))
        for nid in self.ids:
            k = self.idx[nid]
            if u[k] == 0.0:
                continue
            p = self._p(nid)
            pen = self.penalty(nid, u)
            sales = sum(self.trade(nid, j, u) for j in self.C[nid])
            cost = sum(self.trade(j, nid, u) for j in self.S[nid])
            du[k] = ((1.0 + p.epsilon) * sales * pen - cost
                     + self.boundary(nid, u, ext) * pen - p.d * u[k])
        return du


def rk4_fixed(f, u0: np.ndarray, t_end: float, dt: float) -> np.ndarray:
    """Classical fixed-step RK4 with non-negativity projection per step."""
    u = u0.astype(float).copy()
    n_steps = int(round(t_end / dt))
    for _ in range(n_steps):
        k1 = f(u)
        k2 = f(np.maximum(u + 0.5 * dt * k1, 0.0))
        k3 = f(np.maximum(u + 0.5 * dt * k2, 0.0))
        k4 = f(np.maximum(u + dt * k3, 0.0))
        u = np.maximum(u + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4), 0.0)
    return u


def disjoint_union(nets: list[Network]) -> Network:
    """Combine independent networks into one, with namespaced ids.

    Components share no edges or markets, so any componentwise integrator
    (fixed-step RK4 included) evolves the union exactly as it would evolve
    each piece separately.  Useful for batching oracle runs.
    """
    from dataclasses import replace

    nodes, edges, markets = [], [], []
    for k, net in enumerate(nets):
        tag = f"net{k}:"
        for nd in net.nodes:
            nodes.append(replace(nd, id=tag + nd.id,
                                 markets=tuple(tag + m for m in nd.markets)))
        for e in net.edges:
            edges.append(replace(e, src=tag + e.src, dst=tag + e.dst))
        for m in net.markets:
            markets.append(MarketSpec(id=tag + m.id, cap=m.cap))
    return Network(nodes=tuple(nodes), edges=tuple(edges), markets=tuple(markets))


MARKET_POOL = ["m-alpha", "m-beta", "m-gamma"]


def random_network(rng: np.random.Generator, max_nodes: int = 8,
                   zero_utility_prob: float = 0.15) -> tuple[Network, np.ndarray]:
    """Random small network with consistent declared roles, plus a state."""
    n = int(rng.integers(2, max_nodes + 1))
    ids = [f"n{k}" for k in range(n)]
    edges = []
    for i in range(n):
        for j in range(n):
            if i != j and rng.random() < 0.35:
                edges.append(SupplyEdge(src=ids[i], dst=ids[j]))
    has_s = {nid: any(e.dst == nid for e in edges) for nid in ids}
    has_c = {nid: any(e.src == nid for e in edges) for nid in ids}

    nodes = []
    used_markets = set()
    for nid in ids:
        beta = 0.0 if rng.random() < 0.25 else float(rng.uniform(0.01, 0.6))
        if has_s[nid] and has_c[nid]:
            role = Role(rng.choice([r.value for r in Role]))
        elif has_c[nid]:
            role = Role.PRIMARY_SUPPLIER if rng.random() < 0.6 else Role.HUB
        elif has_s[nid]:
            role = Role.END_CONSUMER if rng.random() < 0.6 else Role.HUB
        else:
            role = Role.HUB
        markets = ()
        if role in (Role.END_CONSUMER, Role.HUB):
            k = int(rng.integers(1, len(MARKET_POOL) + 1))
            markets = tuple(sorted(rng.choice(MARKET_POOL, size=k, replace=False)))
            used_markets.update(markets)
        params = ModelParams(
            u0=float(rng.uniform(0.05, 10.0)),
            beta=beta,
            rho=float(rng.uniform(0.05, 1.0)),
            epsilon=float(rng.uniform(0.0, 1.0)),
            d=float(rng.uniform(0.0, 0.3)),
        )
        nodes.append(FirmNode(id=nid, name=nid, role=role, markets=markets,
                              flags=Flags(has_s[nid], has_c[nid]), params=params))
    markets = tuple(MarketSpec(id=m, cap=float(rng.uniform(0.5, 20.0)))
                    for m in sorted(used_markets))
    net = Network(nodes=tuple(nodes), edges=tuple(edges), markets=markets)
    u = rng.uniform(0.0, 10.0, size=n)
    u[rng.random(n) < zero_utility_prob] = 0.0
    return net, u
