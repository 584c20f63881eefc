"""Right-hand side of the coupled firm-wealth ODE system.

For a utility vector u the instantaneous change of firm i is

    du_i/dt = (1+eps_i) * sales_i * P_i  -  supply_cost_i  +  L_i * P_i  -  d_i * u_i

where sales/supply costs come from the proportional-share trade rule,
P_i is the supply-shortfall penalty and L_i the external boundary term
(external purchases of primary suppliers, bounded external market sales
of end consumers).

One reading note on the trade rule: the unconstrained branch applies when
the total demand placed on the *seller* j is within the seller's capacity
rho_j * u_j.  Ties take the constrained branch; both branches coincide in
value at the tie, so only the branch label differs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from districtdyn.errors import IntegrationError, ValidationError
from districtdyn.netmodel import Network, Role, compute_market_caps


@dataclass(frozen=True)
class FlowBreakdown:
    """Per-node and per-market flow components of one rhs evaluation.

    The derivative reassembles exactly as
    (1+eps)*sales*penalty - supply_cost + boundary*penalty - overhead.
    """

    sales: np.ndarray          # sum over customers of trade(i -> j)
    supply_cost: np.ndarray    # sum over suppliers of trade(j -> i)
    penalty: np.ndarray        # P_i in [0, 1]
    boundary: np.ndarray       # Lambda_i
    overhead: np.ndarray       # d_i * u_i
    external_sales: np.ndarray     # per-node G~(u_i)
    market_totals: dict[str, float]


class Dynamics:
    """Compiled evaluator for one validated, calibrated network.

    Immutable after construction; rhs() is a pure function of the state and
    may be called concurrently on distinct states.
    """

    def __init__(self, network: Network):
        self.network = network
        n = len(network.nodes)
        self.n = n
        self.node_ids = network.node_ids
        for node in network.nodes:
            if node.params is None:
                raise ValidationError(f"node {node.id}: no params (calibrate first)")
            if node.role is None:
                raise ValidationError(f"node {node.id}: no role (classify first)")
        self.u0 = np.array([nd.params.u0 for nd in network.nodes])
        self.beta = np.array([nd.params.beta for nd in network.nodes])
        self.rho = np.array([nd.params.rho for nd in network.nodes])
        self.eps = np.array([nd.params.epsilon for nd in network.nodes])
        self.d = np.array([nd.params.d for nd in network.nodes])
        self.roles = [nd.role for nd in network.nodes]
        self.buys_ext = np.array([r.buys_externally for r in self.roles])
        self.sells_ext = np.array([r.sells_externally for r in self.roles])
        # adjacency[j, i] = 1 iff j supplies i
        self.adj = np.zeros((n, n))
        idx = {nid: k for k, nid in enumerate(self.node_ids)}
        for e in network.edges:
            self.adj[idx[e.src], idx[e.dst]] = 1.0
        # external market bookkeeping
        self.caps = compute_market_caps(network)
        self.market_ids = [m.id for m in network.markets]
        self.members: dict[str, np.ndarray] = {
            mid: np.array([idx[nid] for nid in network.market_members(mid)], dtype=int)
            for mid in self.market_ids
        }
        n_markets = np.array([len(nd.markets) for nd in network.nodes])
        self.inv_n_markets = np.where(n_markets > 0, 1.0 / np.maximum(n_markets, 1), 0.0)

    # -- elementary pieces, exposed for direct inspection and testing -------

    def demand_share(self, u: np.ndarray) -> np.ndarray:
        """w_i = beta_i u_i / sum_{m in S_i} u_m; demand(i, j) = w_i * u_j."""
        supplier_mass = self.adj.T @ u
        need = self.beta * u
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where((supplier_mass > 0) & (need > 0), need / supplier_mass, 0.0)
        return w

    def demand(self, buyer: int, seller: int, u: np.ndarray) -> float:
        """Demand buyer places on one of its suppliers."""
        return float(self.demand_share(u)[buyer] * u[seller])

    def seller_scale(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-seller total demand D_j and the capacity rationing factor.

        scale_j = 1 on the unconstrained branch (D_j < rho_j u_j), else
        rho_j u_j / D_j.
        """
        w = self.demand_share(u)
        total_demand = u * (self.adj @ w)
        capacity = self.rho * u
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = np.where(
                total_demand < capacity,
                1.0,
                np.where(total_demand > 0, capacity / np.maximum(total_demand, 1e-300), 0.0),
            )
        return total_demand, scale

    def trade(self, seller: int, buyer: int, u: np.ndarray) -> float:
        """G(u_seller, u_buyer): value actually delivered."""
        _, scale = self.seller_scale(u)
        return self.demand(buyer, seller, u) * scale[seller]

    def penalty(self, u: np.ndarray) -> np.ndarray:
        """Fraction of required supply procured; 1 for external buyers."""
        w = self.demand_share(u)
        _, scale = self.seller_scale(u)
        procured = w * (self.adj.T @ (u * scale))
        need = self.beta * u
        with np.errstate(divide="ignore", invalid="ignore"):
            p = np.where(need > 0, procured / np.where(need > 0, need, 1.0), 1.0)
        p = np.clip(p, 0.0, 1.0)
        return np.where(self.buys_ext, 1.0, p)

    def external_sales(self, u: np.ndarray) -> tuple[np.ndarray, dict[str, float]]:
        """G~(u_i) per node plus total sales per market.

        Each member spreads itself evenly over its markets (u~ = u/n); an
        oversubscribed market splits its cap by rescaled-utility share.
        """
        u_tilde = u * self.inv_n_markets
        g = np.zeros(self.n)
        totals: dict[str, float] = {}
        for mid in self.market_ids:
            mem = self.members[mid]
            if len(mem) == 0:
                totals[mid] = 0.0
                continue
            cap = self.caps[mid]
            offered = self.rho[mem] * u_tilde[mem]
            mass = float(np.sum(u_tilde[mem]))
            if cap > float(np.sum(offered)):
                contrib = offered
            elif mass > 0:
                contrib = cap * u_tilde[mem] / mass
            else:
                contrib = np.zeros(len(mem))
            g[mem] += contrib
            totals[mid] = float(np.sum(contrib))
        return g, totals

    def boundary(self, u: np.ndarray, ext: np.ndarray) -> np.ndarray:
        """Lambda_i: external purchases and external-market sales."""
        lam = np.zeros(self.n)
        lam -= np.where(self.buys_ext, self.beta * u, 0.0)
        lam += np.where(self.sells_ext, (1.0 + self.eps) * ext, 0.0)
        return lam

    # -- full evaluation -----------------------------------------------------

    def flows(self, u: np.ndarray) -> FlowBreakdown:
        u = np.asarray(u, dtype=float)
        w = self.demand_share(u)
        total_demand, scale = self.seller_scale(u)
        sales = scale * total_demand                      # = min(D_j, rho_j u_j)
        supply_cost = w * (self.adj.T @ (u * scale))
        need = self.beta * u
        with np.errstate(divide="ignore", invalid="ignore"):
            p = np.where(need > 0, supply_cost / np.where(need > 0, need, 1.0), 1.0)
        p = np.clip(p, 0.0, 1.0)
        p = np.where(self.buys_ext, 1.0, p)
        ext, totals = self.external_sales(u)
        lam = self.boundary(u, ext)
        return FlowBreakdown(
            sales=sales,
            supply_cost=supply_cost,
            penalty=p,
            boundary=lam,
            overhead=self.d * u,
            external_sales=ext,
            market_totals=totals,
        )

    def deriv(self, u: np.ndarray) -> np.ndarray:
        """du/dt without the flow breakdown.

        Same arithmetic as rhs(), restructured for the integrator hot loop:
        the shared subexpressions are computed once and no per-call dict or
        dataclass is built.
        """
        u = np.asarray(u, dtype=float)
        supplier_mass = self.adj.T @ u
        need = self.beta * u
        has_supply = (supplier_mass > 0) & (need > 0)
        w = np.where(has_supply, need / np.where(has_supply, supplier_mass, 1.0), 0.0)
        total_demand = u * (self.adj @ w)
        capacity = self.rho * u
        busy = total_demand > 0
        scale = np.where(
            total_demand < capacity,
            1.0,
            np.where(busy, capacity / np.where(busy, total_demand, 1.0), 0.0),
        )
        sales = scale * total_demand
        supply_cost = w * (self.adj.T @ (u * scale))
        needs = need > 0
        p = np.where(needs, supply_cost / np.where(needs, need, 1.0), 1.0)
        p = np.clip(p, 0.0, 1.0)
        p = np.where(self.buys_ext, 1.0, p)

        u_tilde = u * self.inv_n_markets
        g = np.zeros(self.n)
        for mid in self.market_ids:
            mem = self.members[mid]
            if len(mem) == 0:
                continue
            offered = self.rho[mem] * u_tilde[mem]
            mass = float(np.sum(u_tilde[mem]))
            if self.caps[mid] > float(np.sum(offered)):
                g[mem] += offered
            elif mass > 0:
                g[mem] += self.caps[mid] * u_tilde[mem] / mass
        lam = np.where(self.sells_ext, (1.0 + self.eps) * g, 0.0)
        lam -= np.where(self.buys_ext, need, 0.0)

        du = (1.0 + self.eps) * sales * p - supply_cost + lam * p - self.d * u
        du = np.where(u == 0.0, 0.0, du)
        if not np.all(np.isfinite(du)):
            bad = [self.node_ids[k] for k in np.flatnonzero(~np.isfinite(du))]
            raise IntegrationError(f"non-finite derivative for node(s) {bad}")
        return du

    def rhs(self, u: np.ndarray) -> tuple[np.ndarray, FlowBreakdown]:
        """Derivative du/dt and the flow breakdown it was assembled from."""
        u = np.asarray(u, dtype=float)
        fb = self.flows(u)
        du = (
            (1.0 + self.eps) * fb.sales * fb.penalty
            - fb.supply_cost
            + fb.boundary * fb.penalty
            - fb.overhead
        )
        # every term vanishes at u_i = 0; pin it against float dust
        du = np.where(u == 0.0, 0.0, du)
        if not np.all(np.isfinite(du)):
            bad = [self.node_ids[k] for k in np.flatnonzero(~np.isfinite(du))]
            raise IntegrationError(f"non-finite derivative for node(s) {bad}")
        return du, fb

    def __call__(self, u: np.ndarray) -> np.ndarray:
        return self.rhs(u)[0]
